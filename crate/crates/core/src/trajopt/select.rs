use serde::{Deserialize, Serialize};

use super::types::Trajectory;
use crate::homotopy::HomotopySignature;

/// How the homotopy similarity factor is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityForm {
    /// `(1−α) + α·(fraction of groups whose side changed)`.
    #[default]
    Agreement,
    /// `(1−α) + α·Σ(val_prev − val)/l`, as printed.
    Literal,
}

/// Factor `f` multiplying the travel time of a candidate.
///
/// `previous` is the last selected signature aligned to the current groups; unmatched groups are `None`.
pub fn similarity_factor(
    sig: &HomotopySignature,
    previous: Option<&[Option<i8>]>,
    alpha: f64,
    form: SimilarityForm,
) -> f64 {
    let Some(prev) = previous else {
        return 1.0;
    };
    let l = sig.values.len();
    if l == 0 {
        return 1.0 - alpha;
    }
    let term = match form {
        SimilarityForm::Agreement => {
            let flips = sig
                .values
                .iter()
                .zip(prev)
                .filter(|(v, p)| matches!(p, Some(p) if p != *v))
                .count();
            flips as f64 / l as f64
        }
        SimilarityForm::Literal => {
            sig.values
                .iter()
                .zip(prev)
                .map(|(v, p)| p.map_or(0.0, |p| f64::from(p - v)))
                .sum::<f64>()
                / l as f64
        }
    };
    (1.0 - alpha) + alpha * term
}

/// Index of the candidate minimizing `f·g`; the first wins ties.
pub fn select(candidates: &[Trajectory], previous: Option<&[Option<i8>]>, alpha: f64, form: SimilarityForm) -> usize {
    assert!(!candidates.is_empty(), "select needs at least one candidate");
    debug_assert!((0.0..1.0).contains(&alpha));
    let mut best = 0;
    let mut best_score = f64::INFINITY;
    for (i, c) in candidates.iter().enumerate() {
        let score = similarity_factor(&c.signature, previous, alpha, form) * c.cost;
        if score < best_score {
            best = i;
            best_score = score;
        }
    }
    best
}
