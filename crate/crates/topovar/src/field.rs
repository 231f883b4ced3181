//! Scalar, tensor, and metric fields sampled on a grid.
//!
//! Tensor components are stored lane-major: component lane `l` occupies
//! `comps[l*len .. (l+1)*len]`, one value per node. Lanes enumerate the index
//! tuple row-major (contravariant slots first, then covariant). Metrics store
//! only the packed upper triangle, so pointwise symmetry holds exactly by
//! construction.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::smallmat;

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<ScalarField> {
        if values.len() != grid.len() {
            return Err(Error::Config(format!(
                "scalar field length {} does not match grid size {}",
                values.len(),
                grid.len()
            )));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn zeros(grid: Grid) -> ScalarField {
        let len = grid.len();
        ScalarField { grid, values: vec![0.0; len] }
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(&[f64]) -> f64) -> ScalarField {
        let mut values = vec![0.0; grid.len()];
        let mut x = vec![0.0; grid.dim()];
        for (flat, v) in values.iter_mut().enumerate() {
            grid.coord(flat, &mut x);
            *v = f(&x);
        }
        ScalarField { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Number of components for a tensor of the given valence in `dim` dimensions.
pub fn lane_count(dim: usize, con: usize, cov: usize) -> usize {
    dim.pow((con + cov) as u32)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorField {
    grid: Grid,
    con: usize,
    cov: usize,
    comps: Vec<f64>,
}

impl TensorField {
    pub fn new(grid: Grid, con: usize, cov: usize, comps: Vec<f64>) -> Result<TensorField> {
        let lanes = lane_count(grid.dim(), con, cov);
        if comps.len() != lanes * grid.len() {
            return Err(Error::Config(format!(
                "tensor field has {} values, expected {} lanes x {} nodes",
                comps.len(),
                lanes,
                grid.len()
            )));
        }
        Ok(TensorField { grid, con, cov, comps })
    }

    pub fn zeros(grid: Grid, con: usize, cov: usize) -> TensorField {
        let lanes = lane_count(grid.dim(), con, cov);
        let len = grid.len();
        TensorField { grid, con, cov, comps: vec![0.0; lanes * len] }
    }

    /// Builds a (0,2) tensor from a pointwise matrix function (row-major
    /// `dim*dim` output per node).
    pub fn from_matrix_fn(grid: Grid, mut f: impl FnMut(&[f64], &mut [f64])) -> TensorField {
        let n = grid.dim();
        let len = grid.len();
        let mut comps = vec![0.0; n * n * len];
        let mut x = vec![0.0; n];
        let mut m = vec![0.0; n * n];
        for flat in 0..len {
            grid.coord(flat, &mut x);
            f(&x, &mut m);
            for lane in 0..n * n {
                comps[lane * len + flat] = m[lane];
            }
        }
        TensorField { grid, con: 0, cov: 2, comps }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn valence(&self) -> (usize, usize) {
        (self.con, self.cov)
    }

    pub fn lanes(&self) -> usize {
        lane_count(self.grid.dim(), self.con, self.cov)
    }

    pub fn lane(&self, l: usize) -> &[f64] {
        let len = self.grid.len();
        &self.comps[l * len..(l + 1) * len]
    }

    pub fn lane_mut(&mut self, l: usize) -> &mut [f64] {
        let len = self.grid.len();
        &mut self.comps[l * len..(l + 1) * len]
    }

    pub fn comps(&self) -> &[f64] {
        &self.comps
    }

    /// Lane index of a (0,2) tensor component.
    pub fn lane_index2(&self, i: usize, j: usize) -> usize {
        i * self.grid.dim() + j
    }

    pub fn value2(&self, flat: usize, i: usize, j: usize) -> f64 {
        self.lane(self.lane_index2(i, j))[flat]
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Checks bitwise symmetry of a (0,2) tensor.
    pub fn is_symmetric2(&self) -> bool {
        if (self.con, self.cov) != (0, 2) {
            return false;
        }
        let n = self.grid.dim();
        for i in 0..n {
            for j in i + 1..n {
                if self.lane(i * n + j) != self.lane(j * n + i) {
                    return false;
                }
            }
        }
        true
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.comps {
            *v *= s;
        }
    }
}

/// Packed index of the symmetric pair (i, j) with i <= j in dimension n.
#[inline]
pub fn sym_index(n: usize, i: usize, j: usize) -> usize {
    let (a, b) = if i <= j { (i, j) } else { (j, i) };
    a * n - a * (a + 1) / 2 + b
}

pub fn sym_lane_count(n: usize) -> usize {
    n * (n + 1) / 2
}

/// A pseudo-Riemannian metric sampled on a grid.
///
/// `signature` counts (negative, positive) eigenvalues, constant across the
/// grid; `det_floor` is the smallest admissible |det|.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricField {
    grid: Grid,
    comps: Vec<f64>, // packed symmetric lanes, lane-major
    signature: (usize, usize),
    det_floor: f64,
}

pub const DEFAULT_DET_FLOOR: f64 = 1e-10;

impl MetricField {
    /// Validates determinant floor and eigenvalue signature at every node.
    pub fn new(
        grid: Grid,
        comps: Vec<f64>,
        signature: (usize, usize),
        det_floor: f64,
    ) -> Result<MetricField> {
        let n = grid.dim();
        let lanes = sym_lane_count(n);
        if comps.len() != lanes * grid.len() {
            return Err(Error::Config(format!(
                "metric field has {} values, expected {} lanes x {} nodes",
                comps.len(),
                lanes,
                grid.len()
            )));
        }
        if signature.0 + signature.1 != n {
            return Err(Error::Config(format!(
                "signature ({},{}) does not sum to dimension {}",
                signature.0, signature.1, n
            )));
        }
        if !(det_floor > 0.0) {
            return Err(Error::Config("det_floor must be positive".to_string()));
        }
        let m = MetricField { grid, comps, signature, det_floor };
        m.validate()?;
        Ok(m)
    }

    /// Builds the metric from a pointwise matrix function (row-major output;
    /// only the upper triangle is read).
    pub fn from_matrix_fn(
        grid: Grid,
        signature: (usize, usize),
        det_floor: f64,
        mut f: impl FnMut(&[f64], &mut [f64]),
    ) -> Result<MetricField> {
        let n = grid.dim();
        let len = grid.len();
        let lanes = sym_lane_count(n);
        let mut comps = vec![0.0; lanes * len];
        let mut x = vec![0.0; n];
        let mut m = vec![0.0; n * n];
        for flat in 0..len {
            grid.coord(flat, &mut x);
            f(&x, &mut m);
            for i in 0..n {
                for j in i..n {
                    comps[sym_index(n, i, j) * len + flat] = m[i * n + j];
                }
            }
        }
        MetricField::new(grid, comps, signature, det_floor)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.grid.dim();
        let mut mat = [0.0f64; smallmat::MAXN * smallmat::MAXN];
        for flat in 0..self.grid.len() {
            self.matrix_at(flat, &mut mat);
            let d = smallmat::det(&mat, n);
            if d.abs() < self.det_floor {
                return Err(Error::Degenerate { node: flat, det: d, floor: self.det_floor });
            }
            let (neg, pos) = smallmat::inertia(&mat, n);
            if (neg, pos) != self.signature {
                return Err(Error::Signature {
                    node: flat,
                    expected_neg: self.signature.0,
                    expected_pos: self.signature.1,
                    found_neg: neg,
                    found_pos: pos,
                });
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn signature(&self) -> (usize, usize) {
        self.signature
    }

    pub fn det_floor(&self) -> f64 {
        self.det_floor
    }

    pub fn packed(&self) -> &[f64] {
        &self.comps
    }

    pub fn packed_mut(&mut self) -> &mut [f64] {
        &mut self.comps
    }

    pub fn lane(&self, l: usize) -> &[f64] {
        let len = self.grid.len();
        &self.comps[l * len..(l + 1) * len]
    }

    pub fn value(&self, flat: usize, i: usize, j: usize) -> f64 {
        let len = self.grid.len();
        self.comps[sym_index(self.grid.dim(), i, j) * len + flat]
    }

    /// Writes the full row-major matrix at a node.
    pub fn matrix_at(&self, flat: usize, out: &mut [f64]) {
        let n = self.grid.dim();
        let len = self.grid.len();
        for i in 0..n {
            for j in i..n {
                let v = self.comps[sym_index(n, i, j) * len + flat];
                out[i * n + j] = v;
                out[j * n + i] = v;
            }
        }
    }

    /// Full (0,2) tensor view of the metric.
    pub fn to_tensor(&self) -> TensorField {
        let n = self.grid.dim();
        let mut t = TensorField::zeros(self.grid.clone(), 0, 2);
        for i in 0..n {
            for j in 0..n {
                let src = self.lane(sym_index(n, i, j)).to_vec();
                t.lane_mut(i * n + j).copy_from_slice(&src);
            }
        }
        t
    }

    /// Interprets a symmetric (0,2) tensor as a metric. Symmetry must be
    /// exact (bitwise).
    pub fn from_tensor(
        t: &TensorField,
        signature: (usize, usize),
        det_floor: f64,
    ) -> Result<MetricField> {
        if t.valence() != (0, 2) {
            return Err(Error::Config(format!(
                "expected a (0,2) tensor, got {:?}",
                t.valence()
            )));
        }
        if !t.is_symmetric2() {
            return Err(Error::Config(
                "tensor is not symmetric; cannot interpret as a metric".to_string(),
            ));
        }
        let grid = t.grid().clone();
        let n = grid.dim();
        let len = grid.len();
        let mut comps = vec![0.0; sym_lane_count(n) * len];
        for i in 0..n {
            for j in i..n {
                comps[sym_index(n, i, j) * len..][..len].copy_from_slice(t.lane(i * n + j));
            }
        }
        MetricField::new(grid, comps, signature, det_floor)
    }

    /// The metric scaled by a positive constant; signature is unchanged.
    pub fn scaled(&self, factor: f64) -> Result<MetricField> {
        if !(factor > 0.0) {
            return Err(Error::Domain(format!(
                "metric scale factor must be positive, got {factor}"
            )));
        }
        let comps = self.comps.iter().map(|v| v * factor).collect();
        let floor = self.det_floor * factor.powi(self.grid.dim() as i32) * 0.5;
        MetricField::new(self.grid.clone(), comps, self.signature, floor)
    }

    /// g + s*h for a symmetric perturbation h; revalidates the result.
    pub fn add_scaled(
        &self,
        h: &TensorField,
        s: f64,
        det_floor: Option<f64>,
    ) -> Result<MetricField> {
        if h.grid() != &self.grid {
            return Err(Error::Config("perturbation lives on a different grid".to_string()));
        }
        if h.valence() != (0, 2) || !h.is_symmetric2() {
            return Err(Error::Config(
                "perturbation must be a symmetric (0,2) tensor".to_string(),
            ));
        }
        let n = self.grid.dim();
        let len = self.grid.len();
        let mut comps = self.comps.clone();
        for i in 0..n {
            for j in i..n {
                let dst = &mut comps[sym_index(n, i, j) * len..][..len];
                let src = h.lane(i * n + j);
                for (d, v) in dst.iter_mut().zip(src) {
                    *d += s * v;
                }
            }
        }
        MetricField::new(
            self.grid.clone(),
            comps,
            self.signature,
            det_floor.unwrap_or(self.det_floor),
        )
    }
}
