//! Tensor-product cubic Lagrange interpolation of grid data at arbitrary
//! chart points. Exact on per-axis cubic polynomials, O(h^4) on smooth data.

use crate::error::{Error, Result};
use crate::field::{MetricField, ScalarField, TensorField};
use crate::grid::Grid;

/// Reusable interpolation workspace bound to one grid. `stencil` resolves a
/// chart point into up to 4^dim (node, weight) pairs; `apply` contracts them
/// against any lane living on the same grid.
pub struct Sampler<'a> {
    grid: &'a Grid,
    nodes: Vec<usize>,
    weights: Vec<f64>,
    axis_idx: Vec<[usize; 4]>,
    axis_w: Vec<[f64; 4]>,
}

impl<'a> Sampler<'a> {
    pub fn new(grid: &'a Grid) -> Sampler<'a> {
        let n = grid.dim();
        let cap = 4usize.pow(n as u32);
        Sampler {
            grid,
            nodes: Vec::with_capacity(cap),
            weights: Vec::with_capacity(cap),
            axis_idx: vec![[0; 4]; n],
            axis_w: vec![[0.0; 4]; n],
        }
    }

    /// Resolves the interpolation stencil at `x`. Points on non-periodic axes
    /// must lie inside the axis bounds (up to a small relative slack).
    pub fn stencil(&mut self, x: &[f64]) -> Result<()> {
        let g = self.grid;
        let n = g.dim();
        if x.len() != n {
            return Err(Error::Domain(format!(
                "point has {} coordinates, chart has {n}",
                x.len()
            )));
        }
        for axis in 0..n {
            let (a, b) = g.bounds()[axis];
            let h = g.spacing()[axis];
            let count = g.counts()[axis];
            let mut s = (x[axis] - a) / h;
            if g.periodic()[axis] {
                let ibase = s.floor();
                let t = s - ibase;
                let ib = ibase as i64;
                let c = count as i64;
                let mut idx = [0usize; 4];
                for (k, slot) in idx.iter_mut().enumerate() {
                    *slot = (ib + k as i64 - 1).rem_euclid(c) as usize;
                }
                self.axis_idx[axis] = idx;
                self.axis_w[axis] = lagrange_weights(t);
            } else {
                let top = (count - 1) as f64;
                let slack = 1e-9 * (1.0 + top);
                if s < -slack || s > top + slack {
                    return Err(Error::Domain(format!(
                        "coordinate {} = {} outside axis range [{a}, {b}]",
                        axis, x[axis]
                    )));
                }
                s = s.clamp(0.0, top);
                // keep the 4-node window inside the axis; t then ranges over
                // [-1, 2] near the edges, where the cubic is still exact
                let ibase = (s.floor() as i64).clamp(1, count as i64 - 3);
                let t = s - ibase as f64;
                let mut idx = [0usize; 4];
                for (k, slot) in idx.iter_mut().enumerate() {
                    *slot = (ibase - 1) as usize + k;
                }
                self.axis_idx[axis] = idx;
                self.axis_w[axis] = lagrange_weights(t);
            }
        }
        self.nodes.clear();
        self.weights.clear();
        let strides = g.strides();
        let mut counter = vec![0usize; n];
        loop {
            let mut flat = 0usize;
            let mut w = 1.0f64;
            for axis in 0..n {
                flat += self.axis_idx[axis][counter[axis]] * strides[axis];
                w *= self.axis_w[axis][counter[axis]];
            }
            self.nodes.push(flat);
            self.weights.push(w);
            let mut axis = n;
            loop {
                if axis == 0 {
                    return Ok(());
                }
                axis -= 1;
                counter[axis] += 1;
                if counter[axis] < 4 {
                    break;
                }
                counter[axis] = 0;
            }
        }
    }

    /// Contracts the current stencil against one component lane.
    pub fn apply(&self, lane: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (&i, &w) in self.nodes.iter().zip(&self.weights) {
            acc += w * lane[i];
        }
        acc
    }
}

/// Cubic Lagrange weights through offsets {-1, 0, 1, 2} evaluated at `t`.
fn lagrange_weights(t: f64) -> [f64; 4] {
    [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ]
}

pub fn sample_scalar(f: &ScalarField, x: &[f64]) -> Result<f64> {
    let mut s = Sampler::new(f.grid());
    s.stencil(x)?;
    Ok(s.apply(f.values()))
}

/// Samples every component of a tensor field at one point.
pub fn sample_tensor(t: &TensorField, x: &[f64], out: &mut [f64]) -> Result<()> {
    let mut s = Sampler::new(t.grid());
    s.stencil(x)?;
    for l in 0..t.lanes() {
        out[l] = s.apply(t.lane(l));
    }
    Ok(())
}

/// Samples a metric at one point into a full dim x dim matrix buffer.
pub fn sample_metric(m: &MetricField, x: &[f64], out: &mut [f64]) -> Result<()> {
    let n = m.dim();
    let mut s = Sampler::new(m.grid());
    s.stencil(x)?;
    for i in 0..n {
        for j in i..n {
            let v = s.apply(m.lane(crate::field::sym_index(n, i, j)));
            out[i * n + j] = v;
            out[j * n + i] = v;
        }
    }
    Ok(())
}
