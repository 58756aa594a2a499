//! Pareto fronts of proxy metrics: archive, hypervolume, and the two search
//! strategies (uniform random sampling and sensitivity-binned DIRECT).

pub mod archive;
pub mod direct;
pub mod hypervolume;
pub mod search;

use thiserror::Error;

pub use archive::{non_dominated, ArchiveEntry, ParetoArchive, DEFAULT_CAPACITY};
pub use direct::{maximize, DirectError, DirectOptions, DirectResult};
pub use hypervolume::{hypervolume_2d, hypervolume_xy};
pub use search::{
    binned_search, cube_to_weights, default_bins, max_single_metric_sensitivity, random_search, sample_weights, BinOutcome,
    BinSpec, FrontEntry, ParetoResult, DEFAULT_BIN_EDGES, PENALTY,
};

use crate::proxy::{ObjectivePoint, ProxyError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParetoError {
    #[error("objective points come from different objective kinds")]
    KindMismatch,
    #[error("point {point:?} does not dominate the reference {reference:?}")]
    PointBelowReference { point: [f64; 2], reference: [f64; 2] },
    #[error("invalid bins: {0}")]
    InvalidBins(String),
    #[error("invalid search settings: {0}")]
    InvalidSettings(String),
    #[error("evaluating sample {index}: {source}")]
    Evaluation { index: u64, source: ProxyError },
    #[error(transparent)]
    Proxy(#[from] ProxyError),
    #[error(transparent)]
    Direct(#[from] DirectError),
}

/// Whether `p` is at least as good as `q` on both axes and strictly better on
/// one.
pub fn dominates(p: &ObjectivePoint, q: &ObjectivePoint) -> Result<bool, ParetoError> {
    if p.kind != q.kind {
        return Err(ParetoError::KindMismatch);
    }
    Ok(p.sensitivity >= q.sensitivity
        && p.directionality >= q.directionality
        && (p.sensitivity > q.sensitivity || p.directionality > q.directionality))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::proxy::ObjectiveKind;
    use proptest::prelude::*;

    fn pt(s: f64, d: f64) -> ObjectivePoint {
        ObjectivePoint::new(s, d, ObjectiveKind::BS_CORR)
    }

    #[test]
    fn dominance_examples() {
        assert!(dominates(&pt(0.5, 0.8), &pt(0.4, 0.8)).unwrap());
        assert!(!dominates(&pt(0.5, 0.8), &pt(0.5, 0.8)).unwrap());
        assert!(!dominates(&pt(0.6, 0.3), &pt(0.4, 0.8)).unwrap());
        assert!(!dominates(&pt(0.4, 0.8), &pt(0.6, 0.3)).unwrap());
        let other = ObjectivePoint::new(0.1, 0.1, ObjectiveKind::AS_NEGMSE);
        assert_eq!(dominates(&pt(0.5, 0.5), &other), Err(ParetoError::KindMismatch));
    }

    proptest! {
        #[test]
        fn dominance_is_a_strict_order(a in (0u8..5, 0u8..5), b in (0u8..5, 0u8..5), c in (0u8..5, 0u8..5)) {
            let [p, q, r] = [a, b, c].map(|(s, d)| pt(s as f64, d as f64));
            prop_assert!(!dominates(&p, &p).unwrap());
            prop_assert!(!(dominates(&p, &q).unwrap() && dominates(&q, &p).unwrap()));
            if dominates(&p, &q).unwrap() && dominates(&q, &r).unwrap() {
                prop_assert!(dominates(&p, &r).unwrap());
            }
        }
    }
}
