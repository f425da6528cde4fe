use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One evaluated hyperparameter setting. `reg` is C, λ or θ depending on
/// the stage; `k` is absent where the dimension is not tuned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub k: Option<usize>,
    pub reg: f64,
    pub f1: f64,
}

/// Highest dev F1; ties go to the smaller `k`, then the smaller `reg`.
pub fn model_select<I: IntoIterator<Item = GridPoint>>(points: I) -> Result<GridPoint> {
    points
        .into_iter()
        .reduce(|best, p| {
            let better = p
                .f1
                .total_cmp(&best.f1)
                .then_with(|| best.k.cmp(&p.k))
                .then_with(|| best.reg.total_cmp(&p.reg))
                .is_gt();
            if better {
                p
            } else {
                best
            }
        })
        .ok_or(Error::EmptyInput("no grid point was evaluated"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gp(k: usize, reg: f64, f1: f64) -> GridPoint {
        GridPoint { k: Some(k), reg, f1 }
    }

    #[test]
    fn single_point() {
        assert_eq!(model_select([gp(20, 0.1, 0.5)]).unwrap(), gp(20, 0.1, 0.5));
    }

    #[test]
    fn ties() {
        let pts = [gp(30, 0.1, 0.8), gp(10, 1.0, 0.8), gp(10, 0.01, 0.8), gp(20, 0.01, 0.7)];
        assert_eq!(model_select(pts).unwrap(), gp(10, 0.01, 0.8));
        assert_eq!(model_select(pts.into_iter().rev()).unwrap(), gp(10, 0.01, 0.8));
    }

    #[test]
    fn empty() {
        assert!(model_select(Vec::new()).is_err());
    }
}
