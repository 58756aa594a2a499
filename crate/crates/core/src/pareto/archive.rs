use serde::{Deserialize, Serialize};

use super::{dominates, ParetoError};
use crate::proxy::{ObjectiveKind, ObjectivePoint, WeightVector};

/// Default bound on archive size.
pub const DEFAULT_CAPACITY: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub weights: WeightVector,
    pub point: ObjectivePoint,
}

/// Mutually non-dominated entries, kept sorted by ascending sensitivity
/// (so directionality is strictly descending).
///
/// A candidate equal to an archived point is discarded: the first one in wins.
/// When the archive grows past its capacity, the interior entry with the
/// smallest exclusive hypervolume contribution is evicted; the two extreme
/// entries are never evicted.
#[derive(Debug, Clone, PartialEq)]
pub struct ParetoArchive {
    kind: Option<ObjectiveKind>,
    entries: Vec<ArchiveEntry>,
    evaluations: u64,
    capacity: usize,
}

impl Default for ParetoArchive {
    fn default() -> Self {
        Self::with_capacity(DEFAULT_CAPACITY)
    }
}

impl ParetoArchive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(capacity: usize) -> Self {
        assert!(capacity >= 2, "archive capacity must be at least 2");
        Self {
            kind: None,
            entries: Vec::new(),
            evaluations: 0,
            capacity,
        }
    }

    pub fn entries(&self) -> &[ArchiveEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of candidates offered via [`insert`](Self::insert).
    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }

    pub fn kind(&self) -> Option<ObjectiveKind> {
        self.kind
    }

    pub fn points(&self) -> Vec<ObjectivePoint> {
        self.entries.iter().map(|e| e.point).collect()
    }

    pub fn into_entries(self) -> Vec<ArchiveEntry> {
        self.entries
    }

    /// Offers a candidate. Returns whether it was kept.
    pub fn insert(&mut self, weights: &WeightVector, point: ObjectivePoint) -> Result<bool, ParetoError> {
        if let Some(kind) = self.kind {
            if kind != point.kind {
                return Err(ParetoError::KindMismatch);
            }
        }
        self.kind = Some(point.kind);
        self.evaluations += 1;

        let pos = self
            .entries
            .partition_point(|e| e.point.sensitivity < point.sensitivity);
        // Entries from `pos` on have sensitivity ≥ the candidate's; the first
        // of them has the largest directionality.
        if let Some(e) = self.entries.get(pos) {
            if e.point.directionality >= point.directionality {
                return Ok(false);
            }
        }
        self.entries.retain(|e| !dominates(&point, &e.point).unwrap_or(false));
        let pos = self
            .entries
            .partition_point(|e| e.point.sensitivity < point.sensitivity);
        self.entries.insert(
            pos,
            ArchiveEntry {
                weights: weights.normalized(),
                point,
            },
        );
        if self.entries.len() > self.capacity {
            self.evict_one();
        }
        Ok(true)
    }

    /// Merges another archive's entries (in its order).
    pub fn merge(&mut self, other: &ParetoArchive) -> Result<(), ParetoError> {
        for e in &other.entries {
            self.insert(&e.weights, e.point)?;
        }
        self.evaluations += other.evaluations - other.entries.len() as u64;
        Ok(())
    }

    fn evict_one(&mut self) {
        let n = self.entries.len();
        let mut best = (f64::INFINITY, 1);
        for i in 1..n - 1 {
            let p = &self.entries[i].point;
            let left = &self.entries[i - 1].point;
            let right = &self.entries[i + 1].point;
            let contribution = (p.sensitivity - left.sensitivity) * (p.directionality - right.directionality);
            if contribution < best.0 {
                best = (contribution, i);
            }
        }
        self.entries.remove(best.1);
    }
}

/// Brute-force O(S²) non-dominated filter. Equal points keep the first
/// occurrence. Output sorted by ascending sensitivity.
pub fn non_dominated(points: &[ObjectivePoint]) -> Vec<usize> {
    let mut keep: Vec<usize> = (0..points.len())
        .filter(|&i| {
            !points.iter().enumerate().any(|(k, q)| {
                dominates(q, &points[i]).unwrap_or(false)
                    || (k < i
                        && q.sensitivity == points[i].sensitivity
                        && q.directionality == points[i].directionality)
            })
        })
        .collect();
    keep.sort_by(|&a, &b| points[a].sensitivity.total_cmp(&points[b].sensitivity));
    keep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pareto::hypervolume_2d;
    use proptest::prelude::*;

    fn pt(s: f64, d: f64) -> ObjectivePoint {
        ObjectivePoint::new(s, d, ObjectiveKind::BS_CORR)
    }

    fn w() -> WeightVector {
        WeightVector::new(vec![1.0]).unwrap()
    }

    fn archive_of(points: &[(f64, f64)]) -> ParetoArchive {
        let mut a = ParetoArchive::new();
        for &(s, d) in points {
            a.insert(&w(), pt(s, d)).unwrap();
        }
        a
    }

    fn coords(a: &ParetoArchive) -> Vec<(f64, f64)> {
        a.points().iter().map(|p| (p.sensitivity, p.directionality)).collect()
    }

    #[test]
    fn insert_examples() {
        let mut a = archive_of(&[(0.4, 0.6), (0.6, 0.4)]);
        assert!(a.insert(&w(), pt(0.5, 0.5)).unwrap());
        assert_eq!(coords(&a), vec![(0.4, 0.6), (0.5, 0.5), (0.6, 0.4)]);

        let mut b = archive_of(&[(0.4, 0.6), (0.6, 0.4)]);
        assert!(b.insert(&w(), pt(0.7, 0.7)).unwrap());
        assert_eq!(coords(&b), vec![(0.7, 0.7)]);

        let mut c = archive_of(&[(0.4, 0.6), (0.6, 0.4)]);
        assert!(!c.insert(&w(), pt(0.3, 0.3)).unwrap());
        assert_eq!(coords(&c), vec![(0.4, 0.6), (0.6, 0.4)]);
        assert_eq!(c.evaluations(), 3);
    }

    #[test]
    fn duplicates_keep_first() {
        let mut a = ParetoArchive::new();
        let w1 = WeightVector::new(vec![1.0, 0.0]).unwrap();
        let w2 = WeightVector::new(vec![0.0, 1.0]).unwrap();
        assert!(a.insert(&w1, pt(0.5, 0.5)).unwrap());
        assert!(!a.insert(&w2, pt(0.5, 0.5)).unwrap());
        assert_eq!(a.entries()[0].weights, w1);
    }

    #[test]
    fn same_sensitivity_higher_directionality_replaces() {
        let a = archive_of(&[(0.5, 0.5), (0.5, 0.6)]);
        assert_eq!(coords(&a), vec![(0.5, 0.6)]);
        let a = archive_of(&[(0.5, 0.6), (0.5, 0.5)]);
        assert_eq!(coords(&a), vec![(0.5, 0.6)]);
    }

    #[test]
    fn kind_mismatch() {
        let mut a = archive_of(&[(0.5, 0.5)]);
        let other = ObjectivePoint::new(0.9, 0.9, ObjectiveKind::AS_NEGMSE);
        assert_eq!(a.insert(&w(), other), Err(ParetoError::KindMismatch));
    }

    #[test]
    fn weights_stored_normalized() {
        let mut a = ParetoArchive::new();
        a.insert(&WeightVector::new(vec![2.0, 6.0]).unwrap(), pt(0.1, 0.1)).unwrap();
        assert_eq!(a.entries()[0].weights.as_slice(), &[0.25, 0.75]);
    }

    #[test]
    fn eviction_drops_smallest_contribution() {
        let mut a = ParetoArchive::with_capacity(3);
        for &(s, d) in &[(0.1, 0.9), (0.5, 0.5), (0.9, 0.1), (0.52, 0.47)] {
            a.insert(&w(), pt(s, d)).unwrap();
        }
        // (0.52, 0.47) contributes 0.02·0.37, (0.5, 0.5) contributes 0.4·0.03
        assert_eq!(coords(&a), vec![(0.1, 0.9), (0.5, 0.5), (0.9, 0.1)]);
    }

    proptest! {
        #[test]
        fn matches_brute_force(raw in prop::collection::vec((0u8..20, 0u8..20), 1..120)) {
            // coarse grid so ties and duplicates are common
            let pts: Vec<ObjectivePoint> = raw.iter().map(|&(a, b)| pt(a as f64 / 20.0, b as f64 / 20.0)).collect();
            let mut arch = ParetoArchive::new();
            for p in &pts {
                arch.insert(&w(), *p).unwrap();
            }
            let expect: Vec<ObjectivePoint> = non_dominated(&pts).into_iter().map(|i| pts[i]).collect();
            prop_assert_eq!(arch.points(), expect);
            let sorted = arch.points();
            for pair in sorted.windows(2) {
                prop_assert!(pair[0].sensitivity < pair[1].sensitivity);
                prop_assert!(pair[0].directionality > pair[1].directionality);
            }
        }

        #[test]
        fn merge_is_order_insensitive(raw in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 2..60), split in 1usize..59) {
            let split = split.min(raw.len() - 1);
            let a = archive_of(&raw[..split]);
            let b = archive_of(&raw[split..]);
            let mut ab = a.clone();
            ab.merge(&b).unwrap();
            let mut ba = b.clone();
            ba.merge(&a).unwrap();
            prop_assert_eq!(coords(&ab), coords(&ba));
            prop_assert_eq!(coords(&ab), coords(&archive_of(&raw)));
            prop_assert_eq!(ab.evaluations(), raw.len() as u64);
        }

        #[test]
        fn hypervolume_never_drops(raw in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..60)) {
            let mut a = ParetoArchive::new();
            let mut last = 0.0;
            for &(s, d) in &raw {
                a.insert(&w(), pt(s, d)).unwrap();
                let hv = hypervolume_2d(&a.points(), [0.0, 0.0]).unwrap();
                prop_assert!(hv >= last - 1e-15);
                last = hv;
            }
        }
    }
}
