//! Finite-difference partial derivatives on uniform grids.
//!
//! Interior nodes use central stencils of the selected interior order (2 by
//! default, optionally 4); nodes at non-periodic chart boundaries fall back to
//! second-order one-sided stencils. Periodic axes wrap around, so every node
//! counts as interior there. Mixed second derivatives are compositions of
//! first derivatives along the two axes.

use crate::error::{Error, Result};
use crate::field::{ScalarField, TensorField};
use crate::grid::Grid;

/// Interior stencil order. Boundary closures stay second order either way.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    #[default]
    Order2,
    Order4,
}

#[derive(Debug, Clone, Copy)]
pub struct Stencil {
    pub offsets: [isize; 5],
    pub coeffs: [f64; 5],
    pub len: usize,
}

impl Stencil {
    fn new(pairs: &[(isize, f64)], scale: f64) -> Stencil {
        let mut offsets = [0isize; 5];
        let mut coeffs = [0.0f64; 5];
        for (k, &(o, c)) in pairs.iter().enumerate() {
            offsets[k] = o;
            coeffs[k] = c * scale;
        }
        Stencil { offsets, coeffs, len: pairs.len() }
    }
}

/// Per-axis stencil table: one stencil per boundary class.
/// Classes: 0 = first node, 1 = second node, 2 = interior,
/// 3 = second-to-last, 4 = last node.
#[derive(Debug, Clone)]
pub struct AxisStencils {
    count: usize,
    periodic: bool,
    classes: [Stencil; 5],
}

impl AxisStencils {
    pub fn new(grid: &Grid, axis: usize, order: usize, scheme: Scheme) -> Result<AxisStencils> {
        if order != 1 && order != 2 {
            return Err(Error::Domain(format!(
                "derivative order must be 1 or 2, got {order}"
            )));
        }
        let h = grid.spacing()[axis];
        let s1 = 1.0 / h;
        let s2 = 1.0 / (h * h);
        let interior = match (order, scheme) {
            (1, Scheme::Order2) => Stencil::new(&[(-1, -0.5), (1, 0.5)], s1),
            (1, Scheme::Order4) => Stencil::new(
                &[(-2, 1.0 / 12.0), (-1, -8.0 / 12.0), (1, 8.0 / 12.0), (2, -1.0 / 12.0)],
                s1,
            ),
            (2, Scheme::Order2) => Stencil::new(&[(-1, 1.0), (0, -2.0), (1, 1.0)], s2),
            (2, Scheme::Order4) => Stencil::new(
                &[
                    (-2, -1.0 / 12.0),
                    (-1, 16.0 / 12.0),
                    (0, -30.0 / 12.0),
                    (1, 16.0 / 12.0),
                    (2, -1.0 / 12.0),
                ],
                s2,
            ),
            _ => unreachable!(),
        };
        // Second-order closures at bounded-chart edges.
        let (first, last) = match order {
            1 => (
                Stencil::new(&[(0, -1.5), (1, 2.0), (2, -0.5)], s1),
                Stencil::new(&[(0, 1.5), (-1, -2.0), (-2, 0.5)], s1),
            ),
            _ => (
                Stencil::new(&[(0, 2.0), (1, -5.0), (2, 4.0), (3, -1.0)], s2),
                Stencil::new(&[(0, 2.0), (-1, -5.0), (-2, 4.0), (-3, -1.0)], s2),
            ),
        };
        // One node in from the edge: a central order-2 stencil always fits.
        let near = match order {
            1 => Stencil::new(&[(-1, -0.5), (1, 0.5)], s1),
            _ => Stencil::new(&[(-1, 1.0), (0, -2.0), (1, 1.0)], s2),
        };
        let near_classes = match scheme {
            Scheme::Order2 => [interior, interior],
            Scheme::Order4 => [near, near],
        };
        Ok(AxisStencils {
            count: grid.counts()[axis],
            periodic: grid.periodic()[axis],
            classes: [first, near_classes[0], interior, near_classes[1], last],
        })
    }

    #[inline]
    pub fn at(&self, pos: usize) -> &Stencil {
        if self.periodic {
            return &self.classes[2];
        }
        if pos == 0 {
            &self.classes[0]
        } else if pos == 1 {
            &self.classes[1]
        } else if pos == self.count - 1 {
            &self.classes[4]
        } else if pos == self.count - 2 {
            &self.classes[3]
        } else {
            &self.classes[2]
        }
    }

    #[inline]
    pub fn periodic(&self) -> bool {
        self.periodic
    }

    #[inline]
    pub fn count(&self) -> usize {
        self.count
    }
}

/// Flat-index offset for a step of `off` from position `pos` along an axis,
/// wrapping on periodic axes. The caller guarantees in-range offsets on
/// bounded axes (stencil classes do exactly that).
#[inline]
pub fn wrapped_delta(pos: usize, off: isize, count: usize, periodic: bool, stride: usize) -> isize {
    let mut target = pos as isize + off;
    if periodic {
        target = target.rem_euclid(count as isize);
    }
    debug_assert!(target >= 0 && target < count as isize);
    (target - pos as isize) * stride as isize
}

/// Applies a single-axis derivative to one component lane.
pub fn derive_lane(
    grid: &Grid,
    src: &[f64],
    axis: usize,
    order: usize,
    scheme: Scheme,
    dst: &mut [f64],
) -> Result<()> {
    let table = AxisStencils::new(grid, axis, order, scheme)?;
    let stride = grid.strides()[axis];
    let count = grid.counts()[axis];
    let periodic = grid.periodic()[axis];
    for (flat, out) in dst.iter_mut().enumerate() {
        let pos = (flat / stride) % count;
        let st = table.at(pos);
        let mut acc = 0.0;
        for k in 0..st.len {
            let d = wrapped_delta(pos, st.offsets[k], count, periodic, stride);
            acc += st.coeffs[k] * src[(flat as isize + d) as usize];
        }
        *out = acc;
    }
    Ok(())
}

/// d^order f / dx_axis^order of a scalar field.
pub fn partial_derivative(f: &ScalarField, axis: usize, order: usize) -> Result<ScalarField> {
    partial_derivative_scheme(f, axis, order, Scheme::Order2)
}

pub fn partial_derivative_scheme(
    f: &ScalarField,
    axis: usize,
    order: usize,
    scheme: Scheme,
) -> Result<ScalarField> {
    check_axis(f.grid(), axis)?;
    let mut out = ScalarField::zeros(f.grid().clone());
    derive_lane(f.grid(), f.values(), axis, order, scheme, out.values_mut())?;
    Ok(out)
}

/// Mixed second derivative d^2 f / (dx_a dx_b). Distinct axes compose first
/// derivatives; a repeated axis delegates to the one-axis second derivative.
pub fn partial_mixed(f: &ScalarField, a: usize, b: usize) -> Result<ScalarField> {
    check_axis(f.grid(), a)?;
    check_axis(f.grid(), b)?;
    if a == b {
        return partial_derivative(f, a, 2);
    }
    let first = partial_derivative(f, b, 1)?;
    partial_derivative(&first, a, 1)
}

/// Componentwise derivative of a tensor field (coordinate partials; the
/// valence is unchanged and no connection terms are added).
pub fn partial_derivative_tensor(
    t: &TensorField,
    axis: usize,
    order: usize,
) -> Result<TensorField> {
    check_axis(t.grid(), axis)?;
    let (con, cov) = t.valence();
    let mut out = TensorField::zeros(t.grid().clone(), con, cov);
    for l in 0..t.lanes() {
        let mut dst = vec![0.0; t.grid().len()];
        derive_lane(t.grid(), t.lane(l), axis, order, Scheme::Order2, &mut dst)?;
        out.lane_mut(l).copy_from_slice(&dst);
    }
    Ok(out)
}

fn check_axis(grid: &Grid, axis: usize) -> Result<()> {
    if axis >= grid.dim() {
        return Err(Error::Domain(format!(
            "axis {axis} out of range for dimension {}",
            grid.dim()
        )));
    }
    Ok(())
}
