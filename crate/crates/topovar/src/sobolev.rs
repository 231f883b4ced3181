//! Sobolev-type W^{k,p} norms of tensor fields against a fixed auxiliary
//! Riemannian metric.
//!
//! The auxiliary metric enters only algebraically (pointwise index raising
//! and its volume element); derivative stacks use coordinate partials, which
//! is exact for the Euclidean auxiliary metric used throughout.

use crate::error::{Error, Result};
use crate::fd;
use crate::field::{MetricField, ScalarField, TensorField};
use crate::quad::{self, Mask};
use crate::smallmat;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PNorm {
    Finite(f64),
    Infinity,
}

/// W^{k,p} norm { sum_{j<=k} \int |D^j T|^p dv }^{1/p} (max over j and nodes
/// for p = infinity). Supported orders: k in {0, 1, 2}.
pub fn sobolev_norm(
    t: &TensorField,
    k: usize,
    p: PNorm,
    mask: Option<&Mask>,
    aux: &MetricField,
) -> Result<f64> {
    if k > 2 {
        return Err(Error::Domain(format!("derivative count k must be <= 2, got {k}")));
    }
    if let PNorm::Finite(q) = p {
        if !(q >= 1.0) {
            return Err(Error::Domain(format!("exponent p must be >= 1, got {q}")));
        }
    }
    if aux.signature().0 != 0 {
        return Err(Error::Signature {
            node: 0,
            expected_neg: 0,
            expected_pos: aux.dim(),
            found_neg: aux.signature().0,
            found_pos: aux.signature().1,
        });
    }
    if aux.grid() != t.grid() {
        return Err(Error::Config(
            "auxiliary metric lives on a different grid".to_string(),
        ));
    }

    let grid = t.grid().clone();
    let n = grid.dim();
    let len = grid.len();

    // Derivative stacks: level j appends j covariant (derivative) slots.
    let mut stacks: Vec<TensorField> = vec![t.clone()];
    if k >= 1 {
        stacks.push(derivative_stack(&stacks[0])?);
    }
    if k >= 2 {
        stacks.push(second_stack(&stacks[0], &stacks[1])?);
    }

    // Pointwise squared norms per level.
    let mut level_sq: Vec<ScalarField> = Vec::new();
    for (j, s) in stacks.iter().enumerate() {
        level_sq.push(pointwise_norm_sq(s, aux, j)?);
    }

    let sqrt_det_aux = {
        let mut mat = [0.0f64; smallmat::MAXN * smallmat::MAXN];
        let mut v = vec![0.0; len];
        for (flat, out) in v.iter_mut().enumerate() {
            aux.matrix_at(flat, &mut mat);
            *out = smallmat::det(&mat, n).sqrt();
        }
        v
    };

    match p {
        PNorm::Finite(q) => {
            let mut total = 0.0;
            for lv in &level_sq {
                let dens = ScalarField::new(
                    grid.clone(),
                    lv.values()
                        .iter()
                        .zip(&sqrt_det_aux)
                        .map(|(&s2, &sd)| s2.max(0.0).powf(q / 2.0) * sd)
                        .collect(),
                )?;
                total += quad::integrate(&dens, mask);
            }
            Ok(total.powf(1.0 / q))
        }
        PNorm::Infinity => {
            let mut worst = 0.0f64;
            let mut x = vec![0.0; n];
            for lv in &level_sq {
                for (flat, &s2) in lv.values().iter().enumerate() {
                    if let Some(m) = mask {
                        grid.coord(flat, &mut x);
                        if !m.contains(&x) {
                            continue;
                        }
                    }
                    worst = worst.max(s2.max(0.0).sqrt());
                }
            }
            Ok(worst)
        }
    }
}

pub fn sobolev_norm_scalar(
    f: &ScalarField,
    k: usize,
    p: PNorm,
    mask: Option<&Mask>,
    aux: &MetricField,
) -> Result<f64> {
    let t = TensorField::new(f.grid().clone(), 0, 0, f.values().to_vec())?;
    sobolev_norm(&t, k, p, mask, aux)
}

/// Euclidean auxiliary metric on a grid.
pub fn euclidean_aux(grid: &crate::grid::Grid) -> MetricField {
    let n = grid.dim();
    MetricField::from_matrix_fn(grid.clone(), (0, n), 1e-12, |_, m| {
        for i in 0..n {
            for j in 0..n {
                m[i * n + j] = if i == j { 1.0 } else { 0.0 };
            }
        }
    })
    .expect("identity metric is valid")
}

/// First-derivative stack: one extra covariant slot, fastest-varying.
fn derivative_stack(t: &TensorField) -> Result<TensorField> {
    let grid = t.grid().clone();
    let n = grid.dim();
    let (con, cov) = t.valence();
    let mut out = TensorField::zeros(grid.clone(), con, cov + 1);
    for l in 0..t.lanes() {
        for axis in 0..n {
            let mut dst = vec![0.0; grid.len()];
            fd::derive_lane(&grid, t.lane(l), axis, 1, fd::Scheme::Order2, &mut dst)?;
            out.lane_mut(l * n + axis).copy_from_slice(&dst);
        }
    }
    Ok(out)
}

/// Second-derivative stack; repeated axes use the one-axis second-order
/// stencil, distinct axes compose first derivatives.
fn second_stack(t: &TensorField, first: &TensorField) -> Result<TensorField> {
    let grid = t.grid().clone();
    let n = grid.dim();
    let (con, cov) = t.valence();
    let mut out = TensorField::zeros(grid.clone(), con, cov + 2);
    for l in 0..t.lanes() {
        for a in 0..n {
            for b in 0..n {
                let mut dst = vec![0.0; grid.len()];
                if a == b {
                    fd::derive_lane(&grid, t.lane(l), a, 2, fd::Scheme::Order2, &mut dst)?;
                } else {
                    // derivative slot b was appended first; differentiate it along a
                    fd::derive_lane(&grid, first.lane(l * n + b), a, 1, fd::Scheme::Order2, &mut dst)?;
                }
                out.lane_mut((l * n + b) * n + a).copy_from_slice(&dst);
            }
        }
    }
    Ok(out)
}

/// Pointwise |T|^2 against the auxiliary metric: every contravariant slot is
/// contracted with aux, every covariant slot with aux^{-1}.
fn pointwise_norm_sq(t: &TensorField, aux: &MetricField, _level: usize) -> Result<ScalarField> {
    let grid = t.grid().clone();
    let n = grid.dim();
    let (con, cov) = t.valence();
    let slots = con + cov;
    let lanes = t.lanes();
    let len = grid.len();

    // Fast path: Euclidean auxiliary metric means a plain sum of squares.
    if aux_is_identity(aux) {
        let mut v = vec![0.0; len];
        for l in 0..lanes {
            let lane = t.lane(l);
            for (o, &x) in v.iter_mut().zip(lane) {
                *o += x * x;
            }
        }
        return ScalarField::new(grid, v);
    }

    let mut mat = [0.0f64; smallmat::MAXN * smallmat::MAXN];
    let mut inv = [0.0f64; smallmat::MAXN * smallmat::MAXN];
    let mut v = vec![0.0; len];
    let mut idx_i = vec![0usize; slots.max(1)];
    let mut idx_j = vec![0usize; slots.max(1)];
    for (flat, out) in v.iter_mut().enumerate() {
        aux.matrix_at(flat, &mut mat);
        smallmat::det_inverse(&mat, n, &mut inv);
        let mut acc = 0.0;
        for li in 0..lanes {
            decode_lane(li, n, slots, &mut idx_i);
            for lj in 0..lanes {
                decode_lane(lj, n, slots, &mut idx_j);
                let mut w = 1.0;
                for s in 0..slots {
                    let a = idx_i[s];
                    let b = idx_j[s];
                    w *= if s < con { mat[a * n + b] } else { inv[a * n + b] };
                }
                if w != 0.0 {
                    acc += w * t.lane(li)[flat] * t.lane(lj)[flat];
                }
            }
        }
        *out = acc;
    }
    ScalarField::new(grid, v)
}

fn decode_lane(lane: usize, n: usize, slots: usize, out: &mut [usize]) {
    let mut rem = lane;
    for s in (0..slots).rev() {
        out[s] = rem % n;
        rem /= n;
    }
}

fn aux_is_identity(aux: &MetricField) -> bool {
    let n = aux.dim();
    for i in 0..n {
        for j in i..n {
            let expect = if i == j { 1.0 } else { 0.0 };
            let lane = aux.lane(crate::field::sym_index(n, i, j));
            if lane.iter().any(|&v| v != expect) {
                return false;
            }
        }
    }
    true
}
