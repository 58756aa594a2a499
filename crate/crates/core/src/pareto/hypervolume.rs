use super::ParetoError;
use crate::proxy::ObjectivePoint;

/// Area dominated by `points` and bounded below by `reference`.
///
/// Every point must dominate-or-equal the reference coordinatewise.
/// Dominated points are allowed and add nothing.
pub fn hypervolume_2d(points: &[ObjectivePoint], reference: [f64; 2]) -> Result<f64, ParetoError> {
    let raw: Vec<[f64; 2]> = points.iter().map(|p| [p.sensitivity, p.directionality]).collect();
    hypervolume_xy(&raw, reference)
}

pub fn hypervolume_xy(points: &[[f64; 2]], reference: [f64; 2]) -> Result<f64, ParetoError> {
    for p in points {
        if !(p[0] >= reference[0] && p[1] >= reference[1]) {
            return Err(ParetoError::PointBelowReference {
                point: *p,
                reference,
            });
        }
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| b[0].total_cmp(&a[0]).then(b[1].total_cmp(&a[1])));
    let mut area = 0.0;
    let mut top = reference[1];
    for p in sorted {
        if p[1] > top {
            area += (p[0] - reference[0]) * (p[1] - top);
            top = p[1];
        }
    }
    Ok(area)
}
