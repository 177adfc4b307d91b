//! Distillation procedures: vanilla KD, deep mutual learning, data-partitioning
//! KD, and class-weighted multi-teacher consolidation.

mod dml;
mod dpkd;
pub mod method;
mod multi;
mod objective;
mod vanilla;

pub use dml::{distill_dml, DmlOutcome};
pub use dpkd::{distill_dpkd, dpkd_masks, dpkd_supervised_for, DpkdOutcome, MaskPair};
pub use method::{DmlKd, DpKd, KdMethod, KdRegistry, PairDistillation, PairTask, TunedKd, VanillaKd};
pub use multi::{adaptive_teacher_weights, distill_multi_teacher, TeacherWeights};
pub use objective::{KdObjective, SoftTarget};
pub use vanilla::{distill_vanilla, DistillConfig, DistillOutcome};
