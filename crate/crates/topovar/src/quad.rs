//! Grid quadrature: composite trapezoidal weights on bounded axes, the full
//!-period rectangle rule on periodic ones, and a deterministic pairwise sum
//! so results are bit-reproducible regardless of threading.

use crate::field::ScalarField;
use crate::grid::Grid;

/// Node-predicate masks for restricting integrals to sub-regions.
#[derive(Debug, Clone, PartialEq)]
pub enum Mask {
    /// Axis-aligned box. `upper_open[i]` makes the box half-open at the top
    /// of axis `i`, so boxes stacked along that axis partition nodes exactly.
    Box { lo: Vec<f64>, hi: Vec<f64>, upper_open: Vec<bool> },
    /// Euclidean coordinate ball.
    Ball { center: Vec<f64>, radius: f64 },
}

impl Mask {
    pub fn closed_box(lo: Vec<f64>, hi: Vec<f64>) -> Mask {
        let n = lo.len();
        Mask::Box { lo, hi, upper_open: vec![false; n] }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Mask::Box { lo, hi, upper_open } => {
                let eps = 1e-12;
                x.iter().enumerate().all(|(i, &xi)| {
                    let above = xi >= lo[i] - eps * (1.0 + lo[i].abs());
                    let below = if upper_open[i] {
                        xi < hi[i] - eps * (1.0 + hi[i].abs())
                    } else {
                        xi <= hi[i] + eps * (1.0 + hi[i].abs())
                    };
                    above && below
                })
            }
            Mask::Ball { center, radius } => {
                let r2: f64 = x
                    .iter()
                    .zip(center)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                r2 <= radius * radius * (1.0 + 1e-12)
            }
        }
    }
}

/// Deterministic pairwise summation (fixed recursive splitting order).
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 16 {
        let mut s = 0.0;
        for &x in v {
            s += x;
        }
        return s;
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// Quadrature weight of a node: the product over axes of the spacing, halved
/// at the two ends of every non-periodic axis.
pub fn node_weight(grid: &Grid, flat: usize) -> f64 {
    let mut w = 1.0;
    for axis in 0..grid.dim() {
        let h = grid.spacing()[axis];
        if grid.periodic()[axis] {
            w *= h;
        } else {
            let pos = grid.axis_pos(flat, axis);
            let edge = pos == 0 || pos == grid.counts()[axis] - 1;
            w *= if edge { 0.5 * h } else { h };
        }
    }
    w
}

/// Integral of a density over the chart (or over `mask`), together with a
/// flag reporting whether the mask selected no nodes at all.
pub fn integrate_flagged(f: &ScalarField, mask: Option<&Mask>) -> (f64, bool) {
    let grid = f.grid();
    let mut terms = Vec::with_capacity(grid.len());
    let mut x = vec![0.0; grid.dim()];
    let mut selected = 0usize;
    for (flat, &v) in f.values().iter().enumerate() {
        if let Some(m) = mask {
            grid.coord(flat, &mut x);
            if !m.contains(&x) {
                continue;
            }
        }
        selected += 1;
        terms.push(node_weight(grid, flat) * v);
    }
    (pairwise_sum(&terms), selected == 0)
}

/// Integral of a density; an empty mask yields 0.
pub fn integrate(f: &ScalarField, mask: Option<&Mask>) -> f64 {
    integrate_flagged(f, mask).0
}
