use super::vanilla::{check_transfer, DistillConfig};
use crate::data::TransferSet;
use crate::error::Result;
use crate::nn::{cross_entropy_grad, epoch_order, kl_grad, softmax_t, LossGrad, Model, Optimizer};
use ndarray::Axis;

/// Both peers after mutual learning. `first` is the designated result.
#[derive(Clone, Debug)]
pub struct DmlOutcome {
    pub first: Model,
    pub second: Model,
    /// `(loss_first, loss_second)` per lockstep step.
    pub loss_trace: Vec<(f64, f64)>,
    pub warnings: Vec<String>,
}

fn peer_step(
    model: &mut Model,
    opt: &mut Optimizer,
    partner: &Model,
    ts: &TransferSet,
    rows: &[usize],
) -> Result<f64> {
    let batch = ts.features.select(Axis(0), rows);
    let partner_probs = softmax_t(&partner.forward_logits(batch.view())?, 1.0)?;
    let cache = model.forward_cached(batch.view())?;
    let kl = kl_grad(&cache.logits, &partner_probs, 1.0)?;
    let lg: LossGrad = match &ts.labels {
        Some(labels) => {
            let y: Vec<usize> = rows.iter().map(|&r| labels[r]).collect();
            cross_entropy_grad(&cache.logits, &y)?.add_scaled(&kl, 1.0)
        }
        None => kl,
    };
    let grads = model.backward(&cache, &lg.dlogits)?;
    opt.step(model, &grads);
    Ok(lg.loss)
}

/// Deep mutual learning between two peers.
///
/// Each peer minimizes `CE(p_self, y) + KL(p_partner || p_self)` at unit
/// temperature. Steps alternate: the first peer updates on its batch against
/// the second peer's current predictions, then the second peer updates on
/// its batch against the first peer's refreshed predictions. Batches of the
/// two transfer sets are paired in lockstep; the shorter one wraps around.
pub fn distill_dml(
    s1: &Model,
    s2: &Model,
    ts1: &TransferSet,
    ts2: &TransferSet,
    cfg: &DistillConfig,
    seed: u64,
) -> Result<DmlOutcome> {
    cfg.check()?;
    check_transfer(ts1)?;
    check_transfer(ts2)?;
    let mut warnings = Vec::new();
    for (name, ts) in [("first", ts1), ("second", ts2)] {
        if !ts.is_labeled() {
            let msg = format!(
                "mutual learning on an unlabeled {name} transfer set ({}): CE term dropped",
                ts.origin
            );
            log::debug!("{msg}");
            warnings.push(msg);
        }
    }
    let mut a = s1.clone();
    let mut b = s2.clone();
    let mut opt_a = cfg.optimizer.optimizer_for(&a);
    let mut opt_b = cfg.optimizer.optimizer_for(&b);
    let bs = cfg.optimizer.batch_size.max(1);
    let mut loss_trace = Vec::new();
    for epoch in 0..cfg.epochs {
        let order_a = epoch_order(ts1.len(), seed, 2 * epoch);
        let order_b = epoch_order(ts2.len(), seed, 2 * epoch + 1);
        let batches_a: Vec<&[usize]> = order_a.chunks(bs).collect();
        let batches_b: Vec<&[usize]> = order_b.chunks(bs).collect();
        let steps = batches_a.len().max(batches_b.len());
        for i in 0..steps {
            let la = peer_step(&mut a, &mut opt_a, &b, ts1, batches_a[i % batches_a.len()])?;
            let lb = peer_step(&mut b, &mut opt_b, &a, ts2, batches_b[i % batches_b.len()])?;
            loss_trace.push((la, lb));
        }
    }
    Ok(DmlOutcome {
        first: a,
        second: b,
        loss_trace,
        warnings,
    })
}
