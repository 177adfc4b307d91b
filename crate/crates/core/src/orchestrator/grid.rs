use serde::{Deserialize, Serialize};

use crate::error::{KdError, Result};

/// Candidate temperatures and KD weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub temperatures: Vec<f64>,
    pub alphas: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::reference()
    }
}

impl GridSpec {
    /// 11 temperatures x 5 weights.
    pub fn reference() -> Self {
        Self {
            temperatures: vec![0.1, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0, 7.0],
            alphas: vec![0.1, 0.25, 0.5, 0.75, 0.9],
        }
    }

    pub fn singleton(temperature: f64, alpha: f64) -> Self {
        Self {
            temperatures: vec![temperature],
            alphas: vec![alpha],
        }
    }

    pub fn cells(&self) -> usize {
        self.temperatures.len() * self.alphas.len()
    }

    pub fn contains(&self, temperature: f64, alpha: f64) -> bool {
        self.temperatures.contains(&temperature) && self.alphas.contains(&alpha)
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.temperatures.is_empty() || self.alphas.is_empty() {
            errs.push("grid must have at least one temperature and one alpha".into());
        }
        if let Some(t) = self.temperatures.iter().find(|&&t| !(t > 0.0) || !t.is_finite()) {
            errs.push(format!("grid temperature {t} must be > 0"));
        }
        if let Some(a) = self.alphas.iter().find(|&&a| !(0.0..=1.0).contains(&a)) {
            errs.push(format!("grid alpha {a} must be in [0, 1]"));
        }
        errs
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridMode {
    /// Every (T, alpha) cell.
    #[default]
    Full,
    /// Alpha first at the temperature nearest 1, then T at the best alpha.
    Sequential,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub temperature: f64,
    pub alpha: f64,
    pub gain: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridOutcome {
    pub best_temperature: f64,
    pub best_alpha: f64,
    pub best_gain: f64,
    /// Evaluated cells in scan order.
    pub surface: Vec<GridCell>,
}

/// Best cell of a surface: highest gain, ties to smaller T then smaller alpha.
pub fn best_cell(surface: &[GridCell]) -> Option<GridCell> {
    let mut best: Option<GridCell> = None;
    for &c in surface {
        let better = match best {
            None => true,
            Some(b) => {
                c.gain > b.gain
                    || (c.gain == b.gain
                        && (c.temperature < b.temperature
                            || (c.temperature == b.temperature && c.alpha < b.alpha)))
            }
        };
        if better {
            best = Some(c);
        }
    }
    best
}

/// Search the grid with `evaluate(T, alpha) -> gain`.
pub fn grid_search_tuned(
    grid: &GridSpec,
    mode: GridMode,
    evaluate: &mut dyn FnMut(f64, f64) -> Result<f64>,
) -> Result<GridOutcome> {
    if let Some(e) = grid.validate().into_iter().next() {
        return Err(KdError::Config(e));
    }
    let mut surface = Vec::new();
    let mut run = |t: f64, a: f64, surface: &mut Vec<GridCell>| -> Result<()> {
        if !surface.iter().any(|c: &GridCell| c.temperature == t && c.alpha == a) {
            let gain = evaluate(t, a)?;
            surface.push(GridCell {
                temperature: t,
                alpha: a,
                gain,
            });
        }
        Ok(())
    };
    match mode {
        GridMode::Full => {
            for &t in &grid.temperatures {
                for &a in &grid.alphas {
                    run(t, a, &mut surface)?;
                }
            }
        }
        GridMode::Sequential => {
            let anchor = grid
                .temperatures
                .iter()
                .copied()
                .min_by(|x, y| (x - 1.0).abs().partial_cmp(&(y - 1.0).abs()).unwrap())
                .expect("non-empty");
            for &a in &grid.alphas {
                run(anchor, a, &mut surface)?;
            }
            let alpha = best_cell(&surface).expect("non-empty").alpha;
            for &t in &grid.temperatures {
                run(t, alpha, &mut surface)?;
            }
        }
    }
    let best = best_cell(&surface).expect("non-empty");
    Ok(GridOutcome {
        best_temperature: best.temperature,
        best_alpha: best.alpha,
        best_gain: best.gain,
        surface,
    })
}
