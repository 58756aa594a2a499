//! DIRECT global optimization over the unit hypercube.
//!
//! The locally-biased variant measures a rectangle by half its longest side,
//! so all rectangles of one trisection depth share a size class and only the
//! best of each class is a candidate. Evaluation is serial and the order of
//! divisions is fixed, so a run is a pure function of its inputs.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DirectError {
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("budget {budget} is below the {need} evaluations of the first division")]
    BudgetTooSmall { budget: usize, need: usize },
    #[error("objective returned a non-finite value at {x:?}")]
    NonFinite { x: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectOptions {
    /// Maximum number of objective evaluations.
    pub budget: usize,
    pub locally_biased: bool,
    /// Required relative improvement over the incumbent for a rectangle to be
    /// selected.
    pub epsilon: f64,
}

impl DirectOptions {
    pub fn new(budget: usize) -> Self {
        Self {
            budget,
            locally_biased: true,
            epsilon: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

// Deeper rectangles have centers closer than f64 resolution.
const MAX_LEVEL: u32 = 32;

struct Rect {
    center: Vec<f64>,
    levels: Vec<u32>,
    value: f64,
    size: f64,
}

fn rect_size(levels: &[u32], locally_biased: bool) -> f64 {
    if locally_biased {
        let min = *levels.iter().min().unwrap();
        0.5 * 3f64.powi(-(min as i32))
    } else {
        let mut sorted = levels.to_vec();
        sorted.sort_unstable();
        0.5 * sorted.iter().map(|&l| 9f64.powi(-(l as i32))).sum::<f64>().sqrt()
    }
}

struct Minimizer<F> {
    f: F,
    evaluations: usize,
    best: (f64, Vec<f64>),
}

impl<F: FnMut(&[f64]) -> f64> Minimizer<F> {
    fn eval(&mut self, x: &[f64]) -> Result<f64, DirectError> {
        let v = (self.f)(x);
        self.evaluations += 1;
        if !v.is_finite() {
            return Err(DirectError::NonFinite { x: x.to_vec() });
        }
        let h = -v;
        if h < self.best.0 {
            self.best = (h, x.to_vec());
        }
        Ok(h)
    }
}

/// Maximizes `f` over `[0, 1]^dim` with at most `opts.budget` evaluations.
pub fn maximize<F>(dim: usize, opts: DirectOptions, f: F) -> Result<DirectResult, DirectError>
where
    F: FnMut(&[f64]) -> f64,
{
    if dim == 0 {
        return Err(DirectError::ZeroDimension);
    }
    let need = 2 * dim + 1;
    if opts.budget < need {
        return Err(DirectError::BudgetTooSmall {
            budget: opts.budget,
            need,
        });
    }
    let mut run = Minimizer {
        f,
        evaluations: 0,
        best: (f64::INFINITY, Vec::new()),
    };
    let center = vec![0.5; dim];
    let levels = vec![0u32; dim];
    let value = run.eval(&center)?;
    let mut rects = vec![Rect {
        size: rect_size(&levels, opts.locally_biased),
        center,
        levels,
        value,
    }];

    'outer: loop {
        let selected = select(&rects, opts);
        if selected.is_empty() {
            break;
        }
        for idx in selected {
            let min_level = *rects[idx].levels.iter().min().unwrap();
            let long: Vec<usize> = (0..dim).filter(|&k| rects[idx].levels[k] == min_level).collect();
            if run.evaluations + 2 * long.len() > opts.budget {
                break 'outer;
            }
            let delta = 3f64.powi(-(min_level as i32 + 1));
            let mut probes = Vec::with_capacity(long.len());
            for &k in &long {
                let mut up = rects[idx].center.clone();
                up[k] += delta;
                let mut down = rects[idx].center.clone();
                down[k] -= delta;
                let fu = run.eval(&up)?;
                let fd = run.eval(&down)?;
                probes.push((fu.min(fd), k, (up, fu), (down, fd)));
            }
            probes.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for (_, k, (up, fu), (down, fd)) in probes {
                rects[idx].levels[k] += 1;
                let levels = rects[idx].levels.clone();
                let size = rect_size(&levels, opts.locally_biased);
                rects.push(Rect {
                    center: up,
                    levels: levels.clone(),
                    value: fu,
                    size,
                });
                rects.push(Rect {
                    center: down,
                    levels,
                    value: fd,
                    size,
                });
            }
            rects[idx].size = rect_size(&rects[idx].levels, opts.locally_biased);
        }
    }

    Ok(DirectResult {
        x: run.best.1,
        value: -run.best.0,
        evaluations: run.evaluations,
    })
}

/// Indices of potentially optimal rectangles, smallest size class first.
fn select(rects: &[Rect], opts: DirectOptions) -> Vec<usize> {
    // size bits -> (size, best value, indices at that value)
    let mut classes: BTreeMap<u64, (f64, f64, Vec<usize>)> = BTreeMap::new();
    let mut fmin = f64::INFINITY;
    for (i, r) in rects.iter().enumerate() {
        if r.levels.iter().min().copied().unwrap_or(0) >= MAX_LEVEL {
            continue;
        }
        fmin = fmin.min(r.value);
        let slot = classes.entry(r.size.to_bits()).or_insert((r.size, f64::INFINITY, Vec::new()));
        if r.value < slot.1 {
            slot.1 = r.value;
            slot.2.clear();
            slot.2.push(i);
        } else if r.value == slot.1 && !opts.locally_biased {
            slot.2.push(i);
        }
    }
    let classes: Vec<(f64, f64, Vec<usize>)> = classes.into_values().collect();
    let target = fmin - opts.epsilon * fmin.abs();
    let mut out = Vec::new();
    for (p, (d, fv, idx)) in classes.iter().enumerate() {
        let k_low = classes[..p]
            .iter()
            .map(|(dq, fq, _)| (fv - fq) / (d - dq))
            .fold(f64::NEG_INFINITY, f64::max);
        let k_high = classes[p + 1..]
            .iter()
            .map(|(dq, fq, _)| (fq - fv) / (dq - d))
            .fold(f64::INFINITY, f64::min);
        if k_high <= 0.0 || k_low > k_high {
            continue;
        }
        if k_high.is_finite() && fv - k_high * d > target {
            continue;
        }
        out.extend(idx.iter().copied());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_quadratic() {
        let r = maximize(1, DirectOptions::new(200), |x| -(x[0] - 0.3).powi(2)).unwrap();
        assert!((r.x[0] - 0.3).abs() < 0.005, "{:?}", r.x);
        assert!(r.evaluations <= 200);
    }

    #[test]
    fn two_dimensional_quadratic() {
        let r = maximize(2, DirectOptions::new(500), |x| {
            -((x[0] - 0.25).powi(2) + (x[1] - 0.75).powi(2))
        })
        .unwrap();
        assert!((r.x[0] - 0.25).abs() < 0.01 && (r.x[1] - 0.75).abs() < 0.01, "{:?}", r.x);
        assert!(r.evaluations <= 500);
    }

    #[test]
    fn constant_objective() {
        let r = maximize(3, DirectOptions::new(100), |_| 1.5).unwrap();
        assert_eq!(r.value, 1.5);
        assert!(r.x.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn original_variant_also_converges() {
        let opts = DirectOptions {
            locally_biased: false,
            ..DirectOptions::new(500)
        };
        let r = maximize(2, opts, |x| -((x[0] - 0.7).powi(2) + (x[1] - 0.2).powi(2))).unwrap();
        assert!((r.x[0] - 0.7).abs() < 0.02 && (r.x[1] - 0.2).abs() < 0.02, "{:?}", r.x);
    }

    #[test]
    fn finds_global_of_multimodal() {
        // local peak at 0.2 (height 0.5), global at 0.8 (height 1)
        let f = |x: &[f64]| {
            0.5 * (-((x[0] - 0.2) / 0.05).powi(2)).exp() + (-((x[0] - 0.8) / 0.05).powi(2)).exp()
        };
        let r = maximize(1, DirectOptions::new(300), f).unwrap();
        assert!((r.x[0] - 0.8).abs() < 0.01, "{:?}", r.x);
    }

    #[test]
    fn deterministic() {
        let f = |x: &[f64]| (x[0] * 7.0).sin() * (x[1] * 3.0).cos() - x[2];
        let a = maximize(3, DirectOptions::new(400), f).unwrap();
        let b = maximize(3, DirectOptions::new(400), f).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn budget_respected_and_checked() {
        let mut calls = 0;
        let r = maximize(4, DirectOptions::new(57), |x| {
            calls += 1;
            x.iter().sum()
        })
        .unwrap();
        assert!(r.evaluations <= 57);
        assert_eq!(calls, r.evaluations);
        assert_eq!(
            maximize(3, DirectOptions::new(6), |_| 0.0),
            Err(DirectError::BudgetTooSmall { budget: 6, need: 7 })
        );
    }

    #[test]
    fn non_finite_rejected() {
        let r = maximize(1, DirectOptions::new(50), |x| if x[0] < 0.4 { f64::NAN } else { 0.0 });
        assert!(matches!(r, Err(DirectError::NonFinite { .. })));
    }
}
