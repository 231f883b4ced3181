//! Uniform rectangular grids over box-shaped coordinate charts.
//!
//! Axes are independently periodic or bounded. A non-periodic axis with `N`
//! nodes spans `[a, b]` inclusive with spacing `(b - a)/(N - 1)`; a periodic
//! axis covers `[a, b)` with spacing `(b - a)/N` and no duplicated endpoint.

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 6;
pub const MIN_COUNT: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    bounds: Vec<(f64, f64)>,
    counts: Vec<usize>,
    periodic: Vec<bool>,
    spacing: Vec<f64>,
    strides: Vec<usize>,
    len: usize,
}

impl Grid {
    pub fn new(bounds: &[(f64, f64)], counts: &[usize], periodic: &[bool]) -> Result<Grid> {
        let n = bounds.len();
        if n < 2 || n > MAX_DIM {
            return Err(Error::Config(format!(
                "grid dimension must be between 2 and {MAX_DIM}, got {n}"
            )));
        }
        if counts.len() != n || periodic.len() != n {
            return Err(Error::Config(format!(
                "bounds/counts/periodic lengths disagree: {} / {} / {}",
                n,
                counts.len(),
                periodic.len()
            )));
        }
        for (axis, &c) in counts.iter().enumerate() {
            if c < MIN_COUNT {
                return Err(Error::StencilWidth { axis, count: c, min: MIN_COUNT });
            }
        }
        let mut spacing = Vec::with_capacity(n);
        for (axis, &(a, b)) in bounds.iter().enumerate() {
            if !(b - a).is_finite() || b - a <= 0.0 {
                return Err(Error::Config(format!(
                    "axis {axis} has degenerate bounds [{a}, {b}]"
                )));
            }
            let denom = if periodic[axis] { counts[axis] } else { counts[axis] - 1 };
            spacing.push((b - a) / denom as f64);
        }
        let mut strides = vec![0usize; n];
        let mut acc = 1usize;
        for axis in (0..n).rev() {
            strides[axis] = acc;
            acc = acc.checked_mul(counts[axis]).ok_or_else(|| {
                Error::Config("grid node count overflows usize".to_string())
            })?;
        }
        Ok(Grid {
            bounds: bounds.to_vec(),
            counts: counts.to_vec(),
            periodic: periodic.to_vec(),
            spacing,
            strides,
            len: acc,
        })
    }

    /// Convenience constructor: same bounds, count, and periodicity per axis.
    pub fn uniform(dim: usize, lo: f64, hi: f64, count: usize, periodic: bool) -> Result<Grid> {
        Grid::new(
            &vec![(lo, hi); dim],
            &vec![count; dim],
            &vec![periodic; dim],
        )
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn periodic(&self) -> &[bool] {
        &self.periodic
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    /// Coordinate of node `j` along `axis`; exact function of the grid data.
    pub fn axis_coord(&self, axis: usize, j: usize) -> f64 {
        self.bounds[axis].0 + self.spacing[axis] * j as f64
    }

    /// Position of `flat` along `axis`.
    pub fn axis_pos(&self, flat: usize, axis: usize) -> usize {
        (flat / self.strides[axis]) % self.counts[axis]
    }

    pub fn multi_index(&self, flat: usize, out: &mut [usize]) {
        let mut rem = flat;
        for axis in 0..self.dim() {
            out[axis] = rem / self.strides[axis];
            rem %= self.strides[axis];
        }
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi
            .iter()
            .zip(&self.strides)
            .map(|(&m, &s)| m * s)
            .sum()
    }

    pub fn coord(&self, flat: usize, out: &mut [f64]) {
        let mut rem = flat;
        for axis in 0..self.dim() {
            let j = rem / self.strides[axis];
            rem %= self.strides[axis];
            out[axis] = self.axis_coord(axis, j);
        }
    }

    pub fn coord_vec(&self, flat: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.coord(flat, &mut out);
        out
    }

    /// Flat index of the neighbor `offset` steps along `axis`, wrapping on
    /// periodic axes. Returns `None` when the step leaves a bounded axis.
    pub fn neighbor(&self, flat: usize, axis: usize, offset: isize) -> Option<usize> {
        let pos = self.axis_pos(flat, axis) as isize;
        let count = self.counts[axis] as isize;
        let mut target = pos + offset;
        if self.periodic[axis] {
            target = target.rem_euclid(count);
        } else if target < 0 || target >= count {
            return None;
        }
        Some((flat as isize + (target - pos) * self.strides[axis] as isize) as usize)
    }

    /// Total coordinate volume of the chart box.
    pub fn volume(&self) -> f64 {
        self.bounds.iter().map(|&(a, b)| b - a).product()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_depends_on_periodicity() {
        let g = Grid::new(&[(0.0, 1.0), (0.0, 2.0)], &[5, 8], &[false, true]).unwrap();
        assert_eq!(g.spacing()[0], 0.25);
        assert_eq!(g.spacing()[1], 0.25);
        assert_eq!(g.axis_coord(0, 4), 1.0);
        // periodic axis never repeats the endpoint
        assert_eq!(g.axis_coord(1, 7), 1.75);
        assert_eq!(g.len(), 40);
    }

    #[test]
    fn rejects_too_few_nodes() {
        let err = Grid::new(&[(0.0, 1.0), (0.0, 1.0)], &[4, 8], &[false, false]).unwrap_err();
        match err {
            Error::StencilWidth { axis, count, min } => {
                assert_eq!((axis, count, min), (0, 4, 5));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rejects_degenerate_bounds_and_bad_dims() {
        assert!(Grid::new(&[(0.0, 0.0), (0.0, 1.0)], &[5, 5], &[false, false]).is_err());
        assert!(Grid::new(&[(0.0, 1.0)], &[5], &[false]).is_err());
        assert!(Grid::uniform(7, 0.0, 1.0, 5, false).is_err());
    }

    #[test]
    fn index_round_trip() {
        let g = Grid::new(&[(0.0, 1.0), (0.0, 1.0), (0.0, 1.0)], &[5, 6, 7], &[false; 3]).unwrap();
        let mut m = [0usize; 3];
        for flat in [0usize, 1, 41, 5 * 6 * 7 - 1] {
            g.multi_index(flat, &mut m);
            assert_eq!(g.flat_index(&m), flat);
            for axis in 0..3 {
                assert_eq!(g.axis_pos(flat, axis), m[axis]);
            }
        }
    }

    #[test]
    fn neighbor_wraps_only_on_periodic_axes() {
        let g = Grid::new(&[(0.0, 1.0), (0.0, 1.0)], &[5, 5], &[true, false]).unwrap();
        let corner = 0usize;
        assert_eq!(g.neighbor(corner, 0, -1), Some(4 * g.strides()[0]));
        assert_eq!(g.neighbor(corner, 1, -1), None);
        assert_eq!(g.neighbor(corner, 1, 2), Some(2));
    }
}
