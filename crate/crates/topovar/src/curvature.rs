//! Curvature tensors, the curvature Lagrangian, action integrals, the
//! Einstein tensor, and the derivative of the action along metric
//! perturbations.
//!
//! Two independent scalar-curvature routes are provided:
//!
//! - the *direct* route evaluates, node by node, the expanded local
//!   expression of R in terms of g, its finite-difference partials, and the
//!   pointwise inverse (derivatives of the inverse are expanded through
//!   d(g^{-1}) = -g^{-1} (dg) g^{-1}, second derivatives of g enter through
//!   the stencils directly);
//! - the *Christoffel* route materializes the connection coefficients as a
//!   field, differentiates that field, and contracts Riemann down to the
//!   scalar.
//!
//! They agree at second order in the spacing and both satisfy the exact
//! discrete scaling identity R[c g] = R[g]/c, because every derivative is a
//! fixed linear stencil and the remaining algebra is homogeneous in g.

use crate::error::{Error, Result};
use crate::fd::{self, AxisStencils, Scheme};
use crate::field::{sym_index, MetricField, ScalarField, TensorField};
use crate::grid::Grid;
use crate::quad::{self, Mask};
use crate::smallmat::{self, MAXN};

const MAXS: usize = MAXN * (MAXN + 1) / 2;
const MAXM: usize = MAXN * MAXN;
const MAXR: usize = MAXN * MAXN * MAXN * MAXN;

/// Per-axis first- and second-derivative stencil tables for node-local
/// gathers (no intermediate derivative fields are materialized).
pub struct DiffTables {
    d1: Vec<AxisStencils>,
    d2: Vec<AxisStencils>,
    strides: Vec<usize>,
    counts: Vec<usize>,
    periodic: Vec<bool>,
}

impl DiffTables {
    pub fn new(grid: &Grid, scheme: Scheme) -> Result<DiffTables> {
        let n = grid.dim();
        let mut d1 = Vec::with_capacity(n);
        let mut d2 = Vec::with_capacity(n);
        for axis in 0..n {
            d1.push(AxisStencils::new(grid, axis, 1, scheme)?);
            d2.push(AxisStencils::new(grid, axis, 2, scheme)?);
        }
        Ok(DiffTables {
            d1,
            d2,
            strides: grid.strides().to_vec(),
            counts: grid.counts().to_vec(),
            periodic: grid.periodic().to_vec(),
        })
    }

    #[inline]
    fn gather(&self, table: &AxisStencils, v: &[f64], flat: usize, axis: usize) -> f64 {
        let stride = self.strides[axis];
        let count = self.counts[axis];
        let pos = (flat / stride) % count;
        let st = table.at(pos);
        let mut acc = 0.0;
        for k in 0..st.len {
            let d = fd::wrapped_delta(pos, st.offsets[k], count, self.periodic[axis], stride);
            acc += st.coeffs[k] * v[(flat as isize + d) as usize];
        }
        acc
    }

    /// First derivative of a lane along one axis at one node.
    #[inline]
    pub fn d1(&self, v: &[f64], flat: usize, axis: usize) -> f64 {
        self.gather(&self.d1[axis], v, flat, axis)
    }

    /// Same-axis second derivative at one node.
    #[inline]
    pub fn d2(&self, v: &[f64], flat: usize, axis: usize) -> f64 {
        self.gather(&self.d2[axis], v, flat, axis)
    }

    /// Mixed second derivative (composition of the two first-derivative
    /// stencils; identical to differentiating the materialized field).
    #[inline]
    pub fn d1d1(&self, v: &[f64], flat: usize, a: usize, b: usize) -> f64 {
        let stride = self.strides[a];
        let count = self.counts[a];
        let pos = (flat / stride) % count;
        let st = self.d1[a].at(pos);
        let mut acc = 0.0;
        for k in 0..st.len {
            let d = fd::wrapped_delta(pos, st.offsets[k], count, self.periodic[a], stride);
            acc += st.coeffs[k] * self.d1(v, (flat as isize + d) as usize, b);
        }
        acc
    }

    /// Second derivative dispatcher for an axis pair.
    #[inline]
    pub fn dd(&self, v: &[f64], flat: usize, a: usize, b: usize) -> f64 {
        if a == b {
            self.d2(v, flat, a)
        } else {
            self.d1d1(v, flat, a, b)
        }
    }
}

/// Node-local geometry scratch: metric, inverse, derivative gathers, and the
/// Levi-Civita data built from them. Reused across nodes.
struct NodeGeometry {
    n: usize,
    g: [f64; MAXM],
    p: [f64; MAXM],
    det: f64,
    sqrt_det: f64,
    /// d[l] = full matrix of first partials along axis l
    d: [[f64; MAXM]; MAXN],
    /// s[sym_index(l,m)] = full matrix of second partials along (l,m)
    s: [[f64; MAXM]; MAXS],
    /// c[a] = C_{a,mn} = (d_m g_{an} + d_n g_{am} - d_a g_{mn}) / 2
    c: [[f64; MAXM]; MAXN],
    /// gam[l] = Christoffel Gamma^l_{mn}
    gam: [[f64; MAXM]; MAXN],
    /// q[r] = expanded derivative of the inverse along r: -P d_r P
    q: [[f64; MAXM]; MAXN],
    /// t[r][l] = expanded derivative of Gamma^l along axis r
    t: [[[f64; MAXM]; MAXN]; MAXN],
    /// big_s[r][a] = S_{r;a,mn} = (s_{rm,an} + s_{rn,am} - s_{ra,mn}) / 2
    big_s: [[[f64; MAXM]; MAXN]; MAXN],
    ric: [f64; MAXM],
    scalar: f64,
    /// trace-of-Gamma vector: gamma_l = sum_r Gamma^r_{rl}
    gtrace: [f64; MAXN],
    scratch: [f64; MAXM],
    /// four-index scratch for the Riemann contractions
    r4a: [f64; MAXR],
    r4b: [f64; MAXR],
    r4c: [f64; MAXR],
}

impl NodeGeometry {
    fn new(n: usize) -> Box<NodeGeometry> {
        // field-by-field init would blow the stack; zeroed heap allocation
        let mut b: Box<NodeGeometry> = unsafe {
            let layout = std::alloc::Layout::new::<NodeGeometry>();
            let ptr = std::alloc::alloc_zeroed(layout) as *mut NodeGeometry;
            Box::from_raw(ptr)
        };
        b.n = n;
        b
    }

    /// Stages 1-2: metric, inverse, derivative gathers.
    fn load(&mut self, m: &MetricField, tables: &DiffTables, flat: usize) {
        let n = self.n;
        m.matrix_at(flat, &mut self.g);
        self.det = smallmat::det_inverse(&self.g, n, &mut self.p);
        self.sqrt_det = self.det.abs().sqrt();
        for i in 0..n {
            for j in i..n {
                let lane = m.lane(sym_index(n, i, j));
                for l in 0..n {
                    let v = tables.d1(lane, flat, l);
                    self.d[l][i * n + j] = v;
                    self.d[l][j * n + i] = v;
                }
                for l in 0..n {
                    for mm in l..n {
                        let v = tables.dd(lane, flat, l, mm);
                        let pi = sym_index(n, l, mm);
                        self.s[pi][i * n + j] = v;
                        self.s[pi][j * n + i] = v;
                    }
                }
            }
        }
    }

    /// Stages 3-8: connection data, expanded derivatives, Ricci, scalar.
    fn levi_civita(&mut self) {
        let n = self.n;
        // C_{a,mn}
        for a in 0..n {
            for mu in 0..n {
                for nu in 0..n {
                    self.c[a][mu * n + nu] = 0.5
                        * (self.d[mu][a * n + nu] + self.d[nu][a * n + mu]
                            - self.d[a][mu * n + nu]);
                }
            }
        }
        // Gamma^l_{mn} = P^{la} C_{a,mn}
        for l in 0..n {
            for mu in 0..n {
                for nu in mu..n {
                    let mut acc = 0.0;
                    for a in 0..n {
                        acc += self.p[l * n + a] * self.c[a][mu * n + nu];
                    }
                    self.gam[l][mu * n + nu] = acc;
                    self.gam[l][nu * n + mu] = acc;
                }
            }
        }
        // Q_r = -P d_r P
        for r in 0..n {
            mat_mul(&self.p, &self.d[r], &mut self.scratch, n);
            let mut out = [0.0; MAXM];
            mat_mul(&self.scratch, &self.p, &mut out, n);
            for e in out.iter_mut().take(n * n) {
                *e = -*e;
            }
            self.q[r] = out;
        }
        // S_{r;a,mn}
        for r in 0..n {
            for a in 0..n {
                for mu in 0..n {
                    for nu in 0..n {
                        self.big_s[r][a][mu * n + nu] = 0.5
                            * (self.s[sym_index(n, r, mu)][a * n + nu]
                                + self.s[sym_index(n, r, nu)][a * n + mu]
                                - self.s[sym_index(n, r, a)][mu * n + nu]);
                    }
                }
            }
        }
        // T_r^l_{mn} = Q_r^{la} C_{a,mn} + P^{la} S_{r;a,mn}
        for r in 0..n {
            for l in 0..n {
                for mu in 0..n {
                    for nu in mu..n {
                        let mut acc = 0.0;
                        for a in 0..n {
                            acc += self.q[r][l * n + a] * self.c[a][mu * n + nu]
                                + self.p[l * n + a] * self.big_s[r][a][mu * n + nu];
                        }
                        self.t[r][l][mu * n + nu] = acc;
                        self.t[r][l][nu * n + mu] = acc;
                    }
                }
            }
        }
        // gamma_l = Gamma^r_{rl}
        for l in 0..n {
            let mut acc = 0.0;
            for r in 0..n {
                acc += self.gam[r][r * n + l];
            }
            self.gtrace[l] = acc;
        }
        // Ric_{mn} = T_r^r_{mn} - T_n^r_{rm} + gamma_l Gamma^l_{mn}
        //            - Gamma^r_{nl} Gamma^l_{rm}, then symmetrized
        for mu in 0..n {
            for nu in 0..n {
                let mut acc = 0.0;
                for r in 0..n {
                    acc += self.t[r][r][mu * n + nu] - self.t[nu][r][r * n + mu];
                }
                for l in 0..n {
                    acc += self.gtrace[l] * self.gam[l][mu * n + nu];
                    for r in 0..n {
                        acc -= self.gam[r][nu * n + l] * self.gam[l][r * n + mu];
                    }
                }
                self.ric[mu * n + nu] = acc;
            }
        }
        for mu in 0..n {
            for nu in (mu + 1)..n {
                let sym = 0.5 * (self.ric[mu * n + nu] + self.ric[nu * n + mu]);
                self.ric[mu * n + nu] = sym;
                self.ric[nu * n + mu] = sym;
            }
        }
        let mut r = 0.0;
        for mu in 0..n {
            for nu in 0..n {
                r += self.p[mu * n + nu] * self.ric[mu * n + nu];
            }
        }
        self.scalar = r;
    }

    /// Full contractions (R^2, Ric:Ric, Riem:Riem) with indices raised by
    /// the metric; requires `levi_civita` to have run. The Riemann tensor is
    /// assembled locally from the connection and its expanded derivative,
    /// never materialized as a field.
    fn quadratic_invariants(&mut self) -> (f64, f64, f64) {
        let n = self.n;
        // Ric^{mn} = P Ric P, contracted against Ric_{mn}.
        mat_mul(&self.p, &self.ric, &mut self.scratch, n);
        let mut up = [0.0; MAXM];
        mat_mul(&self.scratch, &self.p, &mut up, n);
        let mut ric2 = 0.0;
        for e in 0..n * n {
            ric2 += self.ric[e] * up[e];
        }
        // Mixed Riemann M^r_{smn} = d_m Gamma^r_{ns} - d_n Gamma^r_{ms}
        //                           + G^r_{ml} G^l_{ns} - G^r_{nl} G^l_{ms}.
        for r in 0..n {
            for s in 0..n {
                for m in 0..n {
                    for nu in 0..n {
                        let mut acc =
                            self.t[m][r][nu * n + s] - self.t[nu][r][m * n + s];
                        for l in 0..n {
                            acc += self.gam[r][m * n + l] * self.gam[l][nu * n + s]
                                - self.gam[r][nu * n + l] * self.gam[l][m * n + s];
                        }
                        self.r4a[((r * n + s) * n + m) * n + nu] = acc;
                    }
                }
            }
        }
        // Lower the first index: L_{rsmn} = g_{ra} M^a_{smn}.
        contract_first(&self.g, &self.r4a, &mut self.r4b, n);
        // Raise all four indices of L one at a time, cycling the index to
        // the first slot so one kernel serves every step; four cycles
        // restore the original order.
        let mut riem2 = 0.0;
        {
            let (a, b, c) = (&mut self.r4a, &self.r4b, &mut self.r4c);
            contract_first_cycled(&self.p, b, a, n);
            contract_first_cycled(&self.p, a, c, n);
            contract_first_cycled(&self.p, c, a, n);
            contract_first_cycled(&self.p, a, c, n);
            for e in 0..n * n * n * n {
                riem2 += b[e] * c[e];
            }
        }
        (self.scalar * self.scalar, ric2, riem2)
    }
}

/// out[r s m n] = sum_a mat[r a] * src[a s m n].
fn contract_first(mat: &[f64], src: &[f64], out: &mut [f64], n: usize) {
    let block = n * n * n;
    for r in 0..n {
        for rest in 0..block {
            let mut acc = 0.0;
            for a in 0..n {
                acc += mat[r * n + a] * src[a * block + rest];
            }
            out[r * block + rest] = acc;
        }
    }
}

/// out[s m n r'] = sum_r mat[r' r] * src[r s m n]: contracts the first index
/// and rotates it to the back, so four applications raise all four indices
/// and restore the original order.
fn contract_first_cycled(mat: &[f64], src: &[f64], out: &mut [f64], n: usize) {
    let block = n * n * n;
    for rest in 0..block {
        for rp in 0..n {
            let mut acc = 0.0;
            for r in 0..n {
                acc += mat[rp * n + r] * src[r * block + rest];
            }
            out[rest * n + rp] = acc;
        }
    }
}

/// Pointwise quadratic curvature data at one node.
pub struct PointInvariants {
    pub scalar: f64,
    pub scalar_squared: f64,
    pub ricci_squared: f64,
    pub riemann_squared: f64,
    pub sqrt_det: f64,
}

/// Streams the full quadratic contractions node by node without holding any
/// four-index field in memory.
pub fn for_each_quadratic_invariant(
    g: &MetricField,
    mut sink: impl FnMut(usize, &PointInvariants),
) -> Result<()> {
    let tables = DiffTables::new(g.grid(), Scheme::Order2)?;
    let mut geo = NodeGeometry::new(g.dim());
    for flat in 0..g.grid().len() {
        geo.load(g, &tables, flat);
        geo.levi_civita();
        let (r2, ric2, riem2) = geo.quadratic_invariants();
        sink(
            flat,
            &PointInvariants {
                scalar: geo.scalar,
                scalar_squared: r2,
                ricci_squared: ric2,
                riemann_squared: riem2,
                sqrt_det: geo.sqrt_det,
            },
        );
    }
    Ok(())
}

#[inline]
fn mat_mul(a: &[f64], b: &[f64], out: &mut [f64], n: usize) {
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += a[i * n + k] * b[k * n + j];
            }
            out[i * n + j] = acc;
        }
    }
}

/// Scalar curvature by the direct route, optionally with fourth-order
/// interior stencils.
pub fn scalar_direct_field_scheme(g: &MetricField, scheme: Scheme) -> Result<ScalarField> {
    let tables = DiffTables::new(g.grid(), scheme)?;
    let mut geo = NodeGeometry::new(g.dim());
    let mut out = vec![0.0; g.grid().len()];
    for (flat, o) in out.iter_mut().enumerate() {
        geo.load(g, &tables, flat);
        geo.levi_civita();
        *o = geo.scalar;
    }
    ScalarField::new(g.grid().clone(), out)
}

pub fn scalar_direct_field(g: &MetricField) -> Result<ScalarField> {
    scalar_direct_field_scheme(g, Scheme::Order2)
}

/// Scalar curvature by the Christoffel route: the connection is materialized
/// as a field, differentiated by the same stencils, and contracted.
pub fn scalar_christoffel_field(g: &MetricField) -> Result<ScalarField> {
    let (gamma, _) = christoffel_field(g)?;
    let tables = DiffTables::new(g.grid(), Scheme::Order2)?;
    let n = g.dim();
    let len = g.grid().len();
    let mut geo = NodeGeometry::new(n);
    let mut out = vec![0.0; len];
    for (flat, o) in out.iter_mut().enumerate() {
        g.matrix_at(flat, &mut geo.g);
        smallmat::det_inverse(&geo.g, n, &mut geo.p);
        let mut r = 0.0;
        for mu in 0..n {
            for nu in 0..n {
                let mut ric = 0.0;
                for rho in 0..n {
                    ric += tables.d1(gamma.lane((rho * n + mu) * n + nu), flat, rho);
                    ric -= tables.d1(gamma.lane((rho * n + rho) * n + mu), flat, nu);
                    for lam in 0..n {
                        ric += gamma.value_at(flat, rho, rho, lam)
                            * gamma.value_at(flat, lam, mu, nu)
                            - gamma.value_at(flat, rho, nu, lam)
                                * gamma.value_at(flat, lam, rho, mu);
                    }
                }
                r += geo.p[mu * n + nu] * ric;
            }
        }
        *o = r;
    }
    ScalarField::new(g.grid().clone(), out)
}

/// A (1,2)-valent view with a convenience accessor.
pub struct Gamma {
    field: TensorField,
    n: usize,
    len: usize,
}

impl Gamma {
    pub fn lane(&self, l: usize) -> &[f64] {
        self.field.lane(l)
    }

    #[inline]
    pub fn value_at(&self, flat: usize, up: usize, lo1: usize, lo2: usize) -> f64 {
        self.field.comps()[((up * self.n + lo1) * self.n + lo2) * self.len + flat]
    }

    pub fn into_tensor(self) -> TensorField {
        self.field
    }
}

/// Christoffel symbols of the Levi-Civita connection as a (1,2) tensor field.
fn christoffel_field(g: &MetricField) -> Result<(Gamma, ScalarField)> {
    let n = g.dim();
    let grid = g.grid().clone();
    let len = grid.len();
    let tables = DiffTables::new(&grid, Scheme::Order2)?;
    let mut geo = NodeGeometry::new(n);
    let mut field = TensorField::zeros(grid.clone(), 1, 2);
    let mut scalar_direct = vec![0.0; len];
    for flat in 0..len {
        geo.load(g, &tables, flat);
        geo.levi_civita();
        scalar_direct[flat] = geo.scalar;
        for l in 0..n {
            for mu in 0..n {
                for nu in 0..n {
                    field.lane_mut((l * n + mu) * n + nu)[flat] = geo.gam[l][mu * n + nu];
                }
            }
        }
    }
    Ok((
        Gamma { field, n, len },
        ScalarField::new(grid, scalar_direct)?,
    ))
}

/// The full curvature package of one metric.
pub struct CurvatureBundle {
    /// Gamma^l_{mn}, exactly symmetric in (m, n)
    pub gamma: TensorField,
    /// R^r_{smn} from finite differences of gamma plus the quadratic terms
    pub riemann: TensorField,
    /// Ricci by contraction of riemann
    pub ricci: TensorField,
    /// scalar = g^{mn} ricci_{mn}, the Christoffel-route scalar
    pub scalar: ScalarField,
    /// the direct-route scalar (expanded local expression)
    pub scalar_direct: ScalarField,
}

/// Memory guard: the materialized Riemann tensor has dim^4 lanes.
const BUNDLE_BYTES_LIMIT: usize = 1_500_000_000;

pub fn curvature_tensors(g: &MetricField) -> Result<CurvatureBundle> {
    let n = g.dim();
    let len = g.grid().len();
    let bytes = n * n * n * n * len * 8;
    if bytes > BUNDLE_BYTES_LIMIT {
        return Err(Error::Config(format!(
            "chart needs {bytes} bytes for the full Riemann tensor; use the streaming scalar routes instead"
        )));
    }
    let (gamma, scalar_direct) = christoffel_field(g)?;
    let tables = DiffTables::new(g.grid(), Scheme::Order2)?;
    let mut riemann = TensorField::zeros(g.grid().clone(), 1, 3);
    for rho in 0..n {
        for sig in 0..n {
            for mu in 0..n {
                for nu in 0..n {
                    let lane_out = ((rho * n + sig) * n + mu) * n + nu;
                    let mut vals = vec![0.0; len];
                    for (flat, v) in vals.iter_mut().enumerate() {
                        let mut acc = tables.d1(gamma.lane((rho * n + nu) * n + sig), flat, mu)
                            - tables.d1(gamma.lane((rho * n + mu) * n + sig), flat, nu);
                        for lam in 0..n {
                            acc += gamma.value_at(flat, rho, mu, lam)
                                * gamma.value_at(flat, lam, nu, sig)
                                - gamma.value_at(flat, rho, nu, lam)
                                    * gamma.value_at(flat, lam, mu, sig);
                        }
                        *v = acc;
                    }
                    riemann.lane_mut(lane_out).copy_from_slice(&vals);
                }
            }
        }
    }
    let mut ricci = TensorField::zeros(g.grid().clone(), 0, 2);
    for sig in 0..n {
        for nu in 0..n {
            let mut vals = vec![0.0; len];
            for rho in 0..n {
                let lane = riemann.lane(((rho * n + sig) * n + rho) * n + nu);
                for (v, &r) in vals.iter_mut().zip(lane) {
                    *v += r;
                }
            }
            ricci.lane_mut(sig * n + nu).copy_from_slice(&vals);
        }
    }
    let mut scalar = vec![0.0; len];
    let mut gm = [0.0; MAXM];
    let mut pm = [0.0; MAXM];
    for (flat, s) in scalar.iter_mut().enumerate() {
        g.matrix_at(flat, &mut gm);
        smallmat::det_inverse(&gm, n, &mut pm);
        let mut acc = 0.0;
        for mu in 0..n {
            for nu in 0..n {
                acc += pm[mu * n + nu] * ricci.lane(mu * n + nu)[flat];
            }
        }
        *s = acc;
    }
    Ok(CurvatureBundle {
        gamma: gamma.into_tensor(),
        riemann,
        ricci,
        scalar: ScalarField::new(g.grid().clone(), scalar)?,
        scalar_direct,
    })
}

/// R |det g|^{1/2} nodewise (direct scalar route).
pub fn lagrangian_density(g: &MetricField) -> Result<ScalarField> {
    lagrangian_density_where_scheme(g, Scheme::Order2, |_| true)
}

/// R |det g|^{1/2} nodewise with an explicit difference scheme.
pub fn lagrangian_density_scheme(g: &MetricField, scheme: Scheme) -> Result<ScalarField> {
    lagrangian_density_where_scheme(g, scheme, |_| true)
}

/// Same, but skipping nodes failing the predicate (their density is set to
/// zero). Useful when a later quadrature only looks at a sub-region.
pub fn lagrangian_density_where(
    g: &MetricField,
    keep: impl FnMut(&[f64]) -> bool,
) -> Result<ScalarField> {
    lagrangian_density_where_scheme(g, Scheme::Order2, keep)
}

/// Predicate-gated density with an explicit difference scheme.
pub fn lagrangian_density_where_scheme(
    g: &MetricField,
    scheme: Scheme,
    mut keep: impl FnMut(&[f64]) -> bool,
) -> Result<ScalarField> {
    let tables = DiffTables::new(g.grid(), scheme)?;
    let mut geo = NodeGeometry::new(g.dim());
    let grid = g.grid().clone();
    let mut out = vec![0.0; grid.len()];
    let mut x = vec![0.0; grid.dim()];
    for (flat, o) in out.iter_mut().enumerate() {
        grid.coord(flat, &mut x);
        if !keep(&x) {
            continue;
        }
        geo.load(g, &tables, flat);
        geo.levi_civita();
        *o = geo.scalar * geo.sqrt_det;
    }
    ScalarField::new(grid, out)
}

/// The curvature action: integral of the Lagrangian density over the chart
/// or over `mask`.
pub fn action(g: &MetricField, mask: Option<&Mask>) -> Result<f64> {
    let dens = lagrangian_density(g)?;
    Ok(quad::integrate(&dens, mask))
}

/// Einstein tensor G_{mn} = Ric_{mn} - R g_{mn} / 2 (direct route).
pub fn einstein_tensor(g: &MetricField) -> Result<TensorField> {
    let n = g.dim();
    let tables = DiffTables::new(g.grid(), Scheme::Order2)?;
    let mut geo = NodeGeometry::new(n);
    let mut out = TensorField::zeros(g.grid().clone(), 0, 2);
    for flat in 0..g.grid().len() {
        geo.load(g, &tables, flat);
        geo.levi_civita();
        for mu in 0..n {
            for nu in 0..n {
                out.lane_mut(mu * n + nu)[flat] =
                    geo.ric[mu * n + nu] - 0.5 * geo.scalar * geo.g[mu * n + nu];
            }
        }
    }
    Ok(out)
}

/// Direct-route Ricci tensor as a field.
pub fn ricci_direct_field(g: &MetricField) -> Result<TensorField> {
    let n = g.dim();
    let tables = DiffTables::new(g.grid(), Scheme::Order2)?;
    let mut geo = NodeGeometry::new(n);
    let mut out = TensorField::zeros(g.grid().clone(), 0, 2);
    for flat in 0..g.grid().len() {
        geo.load(g, &tables, flat);
        geo.levi_civita();
        for mu in 0..n {
            for nu in 0..n {
                out.lane_mut(mu * n + nu)[flat] = geo.ric[mu * n + nu];
            }
        }
    }
    Ok(out)
}

/// Node-local linearization scratch for the directional derivative.
struct NodeVariation {
    /// chi = h at the node
    chi: [f64; MAXM],
    /// phi[l] = first partials of h along axis l
    phi: [[f64; MAXM]; MAXN],
    /// psi[sym pair] = second partials of h
    psi: [[f64; MAXM]; MAXS],
    dp: [f64; MAXM],
    dc: [[f64; MAXM]; MAXN],
    dgam: [[f64; MAXM]; MAXN],
    dq: [[f64; MAXM]; MAXN],
    dt: [[[f64; MAXM]; MAXN]; MAXN],
    dbig_s: [[[f64; MAXM]; MAXN]; MAXN],
    dric: [f64; MAXM],
    scratch: [f64; MAXM],
    scratch2: [f64; MAXM],
}

impl NodeVariation {
    fn new() -> Box<NodeVariation> {
        unsafe {
            let layout = std::alloc::Layout::new::<NodeVariation>();
            let ptr = std::alloc::alloc_zeroed(layout) as *mut NodeVariation;
            Box::from_raw(ptr)
        }
    }

    fn load(&mut self, h: &TensorField, tables: &DiffTables, flat: usize) {
        let n = h.grid().dim();
        for i in 0..n {
            for j in i..n {
                let lane = h.lane(i * n + j);
                let v = lane[flat];
                self.chi[i * n + j] = v;
                self.chi[j * n + i] = v;
                for l in 0..n {
                    let d = tables.d1(lane, flat, l);
                    self.phi[l][i * n + j] = d;
                    self.phi[l][j * n + i] = d;
                }
                for l in 0..n {
                    for m in l..n {
                        let d = tables.dd(lane, flat, l, m);
                        let pi = sym_index(n, l, m);
                        self.psi[pi][i * n + j] = d;
                        self.psi[pi][j * n + i] = d;
                    }
                }
            }
        }
    }

    /// Directional derivative of R |det|^{1/2} at one node, mirroring the
    /// forward kernel term by term.
    fn delta_density(&mut self, geo: &NodeGeometry) -> f64 {
        let n = geo.n;
        // dP = -P chi P
        mat_mul(&geo.p, &self.chi, &mut self.scratch, n);
        mat_mul(&self.scratch, &geo.p, &mut self.scratch2, n);
        for i in 0..n * n {
            self.dp[i] = -self.scratch2[i];
        }
        // dC
        for a in 0..n {
            for mu in 0..n {
                for nu in 0..n {
                    self.dc[a][mu * n + nu] = 0.5
                        * (self.phi[mu][a * n + nu] + self.phi[nu][a * n + mu]
                            - self.phi[a][mu * n + nu]);
                }
            }
        }
        // dGamma^l_{mn} = dP^{la} C_{a,mn} + P^{la} dC_{a,mn}
        for l in 0..n {
            for mu in 0..n {
                for nu in mu..n {
                    let mut acc = 0.0;
                    for a in 0..n {
                        acc += self.dp[l * n + a] * geo.c[a][mu * n + nu]
                            + geo.p[l * n + a] * self.dc[a][mu * n + nu];
                    }
                    self.dgam[l][mu * n + nu] = acc;
                    self.dgam[l][nu * n + mu] = acc;
                }
            }
        }
        // dQ_r = -(dP d_r P + P phi_r P + P d_r dP)
        for r in 0..n {
            mat_mul(&self.dp, &geo.d[r], &mut self.scratch, n);
            mat_mul(&self.scratch, &geo.p, &mut self.scratch2, n);
            for i in 0..n * n {
                self.dq[r][i] = -self.scratch2[i];
            }
            mat_mul(&geo.p, &self.phi[r], &mut self.scratch, n);
            mat_mul(&self.scratch, &geo.p, &mut self.scratch2, n);
            for i in 0..n * n {
                self.dq[r][i] -= self.scratch2[i];
            }
            mat_mul(&geo.p, &geo.d[r], &mut self.scratch, n);
            mat_mul(&self.scratch, &self.dp, &mut self.scratch2, n);
            for i in 0..n * n {
                self.dq[r][i] -= self.scratch2[i];
            }
        }
        // dS_{r;a,mn}
        for r in 0..n {
            for a in 0..n {
                for mu in 0..n {
                    for nu in 0..n {
                        self.dbig_s[r][a][mu * n + nu] = 0.5
                            * (self.psi[sym_index(n, r, mu)][a * n + nu]
                                + self.psi[sym_index(n, r, nu)][a * n + mu]
                                - self.psi[sym_index(n, r, a)][mu * n + nu]);
                    }
                }
            }
        }
        // dT
        for r in 0..n {
            for l in 0..n {
                for mu in 0..n {
                    for nu in mu..n {
                        let mut acc = 0.0;
                        for a in 0..n {
                            acc += self.dq[r][l * n + a] * geo.c[a][mu * n + nu]
                                + geo.q[r][l * n + a] * self.dc[a][mu * n + nu]
                                + self.dp[l * n + a] * geo.big_s[r][a][mu * n + nu]
                                + geo.p[l * n + a] * self.dbig_s[r][a][mu * n + nu];
                        }
                        self.dt[r][l][mu * n + nu] = acc;
                        self.dt[r][l][nu * n + mu] = acc;
                    }
                }
            }
        }
        // dgamma trace
        let mut dgtrace = [0.0; MAXN];
        for l in 0..n {
            let mut acc = 0.0;
            for r in 0..n {
                acc += self.dgam[r][r * n + l];
            }
            dgtrace[l] = acc;
        }
        // dRic, symmetrized like the forward kernel
        for mu in 0..n {
            for nu in 0..n {
                let mut acc = 0.0;
                for r in 0..n {
                    acc += self.dt[r][r][mu * n + nu] - self.dt[nu][r][r * n + mu];
                }
                for l in 0..n {
                    acc += dgtrace[l] * geo.gam[l][mu * n + nu]
                        + geo.gtrace[l] * self.dgam[l][mu * n + nu];
                    for r in 0..n {
                        acc -= self.dgam[r][nu * n + l] * geo.gam[l][r * n + mu]
                            + geo.gam[r][nu * n + l] * self.dgam[l][r * n + mu];
                    }
                }
                self.dric[mu * n + nu] = acc;
            }
        }
        for mu in 0..n {
            for nu in (mu + 1)..n {
                let sym = 0.5 * (self.dric[mu * n + nu] + self.dric[nu * n + mu]);
                self.dric[mu * n + nu] = sym;
                self.dric[nu * n + mu] = sym;
            }
        }
        // dR = dP : Ric + P : dRic
        let mut dr = 0.0;
        for mu in 0..n {
            for nu in 0..n {
                dr += self.dp[mu * n + nu] * geo.ric[mu * n + nu]
                    + geo.p[mu * n + nu] * self.dric[mu * n + nu];
            }
        }
        // d(|det|^{1/2}) = |det|^{1/2} tr(P chi) / 2
        let mut trace = 0.0;
        for mu in 0..n {
            for nu in 0..n {
                trace += geo.p[mu * n + nu] * self.chi[mu * n + nu];
            }
        }
        dr * geo.sqrt_det + geo.scalar * 0.5 * geo.sqrt_det * trace
    }
}

/// Margin (in nodes) that a compactly supported perturbation must keep from
/// non-periodic chart boundaries and from the mask boundary.
pub const SUPPORT_MARGIN: usize = 2;

fn check_support(grid: &Grid, h: &TensorField, mask: Option<&Mask>) -> Result<()> {
    let n = grid.dim();
    let lanes = h.lanes();
    let mut x = vec![0.0; n];
    let mut y = vec![0.0; n];
    for flat in 0..grid.len() {
        let nonzero = (0..lanes).any(|l| h.lane(l)[flat] != 0.0);
        if !nonzero {
            continue;
        }
        for axis in 0..n {
            if grid.periodic()[axis] {
                continue;
            }
            let pos = grid.axis_pos(flat, axis);
            let count = grid.counts()[axis];
            if pos < SUPPORT_MARGIN || pos + SUPPORT_MARGIN >= count {
                return Err(Error::Support(format!(
                    "perturbation is nonzero within {SUPPORT_MARGIN} nodes of the boundary of axis {axis}"
                )));
            }
        }
        if let Some(m) = mask {
            grid.coord(flat, &mut x);
            if !m.contains(&x) {
                return Err(Error::Support(
                    "perturbation is nonzero outside the integration region".to_string(),
                ));
            }
            for axis in 0..n {
                let hh = grid.spacing()[axis];
                for dir in [-1.0, 1.0] {
                    y.copy_from_slice(&x);
                    y[axis] += dir * SUPPORT_MARGIN as f64 * hh;
                    if !grid.periodic()[axis] && !m.contains(&y) {
                        return Err(Error::Support(
                            "perturbation support touches the integration region boundary"
                                .to_string(),
                        ));
                    }
                }
            }
        }
    }
    Ok(())
}

/// Derivative of the action along a compactly supported symmetric
/// perturbation: d/de S[g + e h] at e = 0, evaluated exactly at the discrete
/// level (the linearization of every stencil and every algebraic factor).
///
/// In the continuum this equals the Einstein-tensor pairing
/// -int G^{mn} h_{mn} |det g|^{1/2}; the discrete value converges to it at
/// second order. The exact linearization is returned (rather than the
/// pairing with [`einstein_tensor`]) so that the defining limit property
/// against difference quotients of [`action`] holds at machine precision.
pub fn geometric_functional_derivative(
    g: &MetricField,
    h: &TensorField,
    mask: Option<&Mask>,
) -> Result<f64> {
    if h.grid() != g.grid() {
        return Err(Error::Config("perturbation lives on a different grid".to_string()));
    }
    if h.valence() != (0, 2) {
        return Err(Error::Config(format!(
            "perturbation must be a (0,2) tensor, got {:?}",
            h.valence()
        )));
    }
    if !h.is_symmetric2() {
        return Err(Error::Inconsistent(
            "perturbation must be exactly symmetric".to_string(),
        ));
    }
    check_support(g.grid(), h, mask)?;
    let grid = g.grid().clone();
    let tables = DiffTables::new(&grid, Scheme::Order2)?;
    let mut geo = NodeGeometry::new(g.dim());
    let mut var = NodeVariation::new();
    let mut x = vec![0.0; grid.dim()];
    let mut terms = Vec::with_capacity(grid.len());
    for flat in 0..grid.len() {
        if let Some(m) = mask {
            grid.coord(flat, &mut x);
            if !m.contains(&x) {
                continue;
            }
        }
        geo.load(g, &tables, flat);
        geo.levi_civita();
        var.load(h, &tables, flat);
        let dmu = var.delta_density(&geo);
        terms.push(quad::node_weight(&grid, flat) * dmu);
    }
    Ok(quad::pairwise_sum(&terms))
}

/// The continuum-formula pairing -int G_{mn} h^{mn} |det|^{1/2} over the
/// mask, with indices raised by g. Agrees with
/// [`geometric_functional_derivative`] at second order in the spacing.
pub fn einstein_pairing(
    g: &MetricField,
    h: &TensorField,
    mask: Option<&Mask>,
) -> Result<f64> {
    let n = g.dim();
    let gt = einstein_tensor(g)?;
    let len = g.grid().len();
    let mut vals = vec![0.0; len];
    let mut gm = [0.0; MAXM];
    let mut pm = [0.0; MAXM];
    for (flat, v) in vals.iter_mut().enumerate() {
        g.matrix_at(flat, &mut gm);
        let det = smallmat::det_inverse(&gm, n, &mut pm);
        let mut acc = 0.0;
        for mu in 0..n {
            for nu in 0..n {
                // h^{mn} = P^{ma} P^{nb} h_{ab}
                let mut hup = 0.0;
                for a in 0..n {
                    for b in 0..n {
                        hup += pm[mu * n + a] * pm[nu * n + b] * h.lane(a * n + b)[flat];
                    }
                }
                acc += gt.lane(mu * n + nu)[flat] * hup;
            }
        }
        *v = -acc * det.abs().sqrt();
    }
    let f = ScalarField::new(g.grid().clone(), vals)?;
    Ok(quad::integrate(&f, mask))
}

/// The ratio ||R[g + t h] - R[g]||_{L^1(mask)} / ||t h||_{W^{2,p}} used for
/// the empirical continuity bound of the curvature map.
pub fn continuity_ratio(
    g: &MetricField,
    h: &TensorField,
    t: f64,
    p: f64,
    mask: Option<&Mask>,
) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("step must be positive, got {t}")));
    }
    let moved = g.add_scaled(h, t, None)?;
    let r0 = scalar_direct_field(g)?;
    let r1 = scalar_direct_field(&moved)?;
    let diff = ScalarField::new(
        g.grid().clone(),
        r1.values()
            .iter()
            .zip(r0.values())
            .map(|(a, b)| (a - b).abs())
            .collect(),
    )?;
    let num = quad::integrate(&diff, mask);
    let mut th = h.clone();
    th.scale(t);
    let aux = crate::sobolev::euclidean_aux(g.grid());
    let den = crate::sobolev::sobolev_norm(&th, 2, crate::sobolev::PNorm::Finite(p), mask, &aux)?;
    if den == 0.0 {
        return Err(Error::Domain("zero perturbation has no continuity ratio".to_string()));
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use approx::assert_relative_eq;

    fn flat_metric(n: usize, count: usize) -> MetricField {
        let g = Grid::uniform(n, -1.0, 1.0, count, false).unwrap();
        let mut base = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                base[i * n + j] = if i == j { 1.0 + 0.5 * i as f64 } else { 0.0 };
            }
        }
        // constant but non-trivial cross terms
        base[1] = 0.2;
        base[n] = 0.2;
        MetricField::from_matrix_fn(g, (0, n), 1e-12, |_, m| m.copy_from_slice(&base)).unwrap()
    }

    /// Smooth SPD metric on a periodic chart: conformal factor plus a gentle
    /// off-diagonal wave, safely positive definite.
    fn wavy_torus_metric(n: usize, count: usize, amp: f64) -> MetricField {
        let tau = std::f64::consts::TAU;
        let g = Grid::uniform(n, 0.0, tau, count, true).unwrap();
        MetricField::from_matrix_fn(g, (0, n), 1e-12, move |x, m| {
            let w = 1.0 + amp * (x[0].sin() * x[1 % n].cos());
            for i in 0..n {
                for j in 0..n {
                    m[i * n + j] = if i == j { w } else { 0.0 };
                }
            }
            let off = 0.5 * amp * ((x[0] + x[1 % n]).cos());
            m[1] += off;
            m[n] += off;
        })
        .unwrap()
    }

    /// Round metric of the unit 2-sphere in the stereographic chart.
    fn sphere2_chart(count: usize, half_width: f64) -> MetricField {
        let g = Grid::uniform(2, -half_width, half_width, count, false).unwrap();
        MetricField::from_matrix_fn(g, (0, 2), 1e-12, |x, m| {
            let r2 = x[0] * x[0] + x[1] * x[1];
            let f = 4.0 / ((1.0 + r2) * (1.0 + r2));
            m.copy_from_slice(&[f, 0.0, 0.0, f]);
        })
        .unwrap()
    }

    fn sphere3_chart(count: usize, half_width: f64) -> MetricField {
        let g = Grid::uniform(3, -half_width, half_width, count, false).unwrap();
        MetricField::from_matrix_fn(g, (0, 3), 1e-12, |x, m| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            let f = 4.0 / ((1.0 + r2) * (1.0 + r2));
            for i in 0..3 {
                for j in 0..3 {
                    m[i * 3 + j] = if i == j { f } else { 0.0 };
                }
            }
        })
        .unwrap()
    }

    #[test]
    fn flat_metric_has_zero_curvature() {
        let m = flat_metric(3, 9);
        let b = curvature_tensors(&m).unwrap();
        assert!(b.gamma.max_abs() < 1e-13);
        assert!(b.riemann.max_abs() < 1e-13);
        assert!(b.ricci.max_abs() < 1e-13);
        assert!(b.scalar.max_abs() < 1e-13);
        assert!(b.scalar_direct.max_abs() < 1e-13);
        assert!(einstein_tensor(&m).unwrap().max_abs() < 1e-13);
        assert!(action(&m, None).unwrap().abs() < 1e-13);
    }

    #[test]
    fn lorentzian_flat_metric_has_zero_curvature() {
        let g = Grid::uniform(3, -1.0, 1.0, 9, false).unwrap();
        let m = MetricField::from_matrix_fn(g, (1, 2), 1e-12, |_, out| {
            out.copy_from_slice(&[-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        })
        .unwrap();
        let r = scalar_direct_field(&m).unwrap();
        assert!(r.max_abs() < 1e-13);
    }

    #[test]
    fn scaling_identities_hold_to_rounding() {
        let n = 3;
        let m = wavy_torus_metric(n, 12, 0.3);
        let eps = 0.37;
        let scaled = m.scaled(eps).unwrap();
        let r = scalar_direct_field(&m).unwrap();
        let r_scaled = scalar_direct_field(&scaled).unwrap();
        for (a, b) in r_scaled.values().iter().zip(r.values()) {
            assert_relative_eq!(*a, b / eps, max_relative = 1e-12, epsilon = 1e-13);
        }
        let l = lagrangian_density(&m).unwrap();
        let l_scaled = lagrangian_density(&scaled).unwrap();
        let factor = eps.powf((n as f64 - 2.0) / 2.0);
        for (a, b) in l_scaled.values().iter().zip(l.values()) {
            assert_relative_eq!(*a, factor * b, max_relative = 1e-12, epsilon = 1e-13);
        }
    }

    #[test]
    fn scaling_holds_for_christoffel_route_too() {
        let m = wavy_torus_metric(3, 10, 0.25);
        let eps = 2.0;
        let scaled = m.scaled(eps).unwrap();
        let r = scalar_christoffel_field(&m).unwrap();
        let r_scaled = scalar_christoffel_field(&scaled).unwrap();
        for (a, b) in r_scaled.values().iter().zip(r.values()) {
            assert_relative_eq!(*a, b / eps, max_relative = 1e-12, epsilon = 1e-13);
        }
    }

    #[test]
    fn sphere_chart_scalar_curvature_is_two() {
        let m = sphere2_chart(41, 0.8);
        let r = scalar_direct_field(&m).unwrap();
        let g = m.grid();
        let mut worst = 0.0f64;
        for flat in 0..g.len() {
            let i = g.axis_pos(flat, 0);
            let j = g.axis_pos(flat, 1);
            if i < 3 || j < 3 || i + 3 >= 41 || j + 3 >= 41 {
                continue;
            }
            worst = worst.max((r.values()[flat] - 2.0).abs());
        }
        assert!(worst < 8e-3, "interior error {worst}");
    }

    #[test]
    fn scalar_routes_agree_at_second_order() {
        let mut sups = Vec::new();
        for count in [21usize, 41] {
            let m = sphere2_chart(count, 0.8);
            let a = scalar_direct_field(&m).unwrap();
            let b = scalar_christoffel_field(&m).unwrap();
            let g = m.grid();
            let mut sup = 0.0f64;
            for flat in 0..g.len() {
                let i = g.axis_pos(flat, 0);
                let j = g.axis_pos(flat, 1);
                if i < 3 || j < 3 || i + 3 >= count || j + 3 >= count {
                    continue;
                }
                sup = sup.max((a.values()[flat] - b.values()[flat]).abs());
            }
            sups.push(sup);
        }
        let order = (sups[0] / sups[1]).log2();
        assert!(order > 1.7, "route gap order {order}, sups {sups:?}");
    }

    #[test]
    fn riemann_symmetries_shrink_at_second_order() {
        let mut residuals = Vec::new();
        for count in [13usize, 25] {
            let m = sphere3_chart(count, 0.6);
            let b = curvature_tensors(&m).unwrap();
            let g = m.grid().clone();
            let n = 3;
            let len = g.len();
            // lowered Riemann
            let mut worst = 0.0f64;
            let mut gm = [0.0; MAXM];
            let mut x = vec![0.0; n];
            for flat in 0..len {
                // compare sup norms over the same physical box at both
                // resolutions
                g.coord(flat, &mut x);
                if x.iter().any(|v| v.abs() > 0.31) {
                    continue;
                }
                m.matrix_at(flat, &mut gm);
                let mut low = [[[[0.0f64; 3]; 3]; 3]; 3];
                for r in 0..n {
                    for s in 0..n {
                        for mu in 0..n {
                            for nu in 0..n {
                                let mut acc = 0.0;
                                for e in 0..n {
                                    acc += gm[r * n + e]
                                        * b.riemann.lane(((e * n + s) * n + mu) * n + nu)[flat];
                                }
                                low[r][s][mu][nu] = acc;
                            }
                        }
                    }
                }
                for r in 0..n {
                    for s in 0..n {
                        for mu in 0..n {
                            for nu in 0..n {
                                let v = low[r][s][mu][nu];
                                worst = worst.max((v + low[s][r][mu][nu]).abs());
                                worst = worst.max((v + low[r][s][nu][mu]).abs());
                                worst = worst.max((v - low[mu][nu][r][s]).abs());
                                let bianchi =
                                    v + low[r][mu][nu][s] + low[r][nu][s][mu];
                                worst = worst.max(bianchi.abs());
                            }
                        }
                    }
                }
            }
            residuals.push(worst);
        }
        let order = (residuals[0] / residuals[1]).log2();
        assert!(order > 1.6, "symmetry residual order {order}, residuals {residuals:?}");
    }

    #[test]
    fn unit_three_sphere_einstein_tensor_is_minus_metric() {
        let count = 17;
        let m = sphere3_chart(count, 0.5);
        let gt = einstein_tensor(&m).unwrap();
        let g = m.grid();
        let mut worst = 0.0f64;
        for flat in 0..g.len() {
            let interior = (0..3).all(|a| {
                let p = g.axis_pos(flat, a);
                p >= 4 && p + 4 < count
            });
            if !interior {
                continue;
            }
            for i in 0..3 {
                for j in 0..3 {
                    let want = -m.value(flat, i, j);
                    worst = worst.max((gt.lane(i * 3 + j)[flat] - want).abs());
                }
            }
        }
        assert!(worst < 0.05, "max |G + g| = {worst}");
    }

    #[test]
    fn two_dimensional_einstein_tensor_vanishes() {
        let g = Grid::uniform(2, -0.7, 0.7, 41, false).unwrap();
        let m = MetricField::from_matrix_fn(g, (0, 2), 1e-12, |x, out| {
            let w = 1.0 + 0.3 * (x[0] * x[0] - 0.5 * x[1] * x[1] + 0.2 * x[0] * x[1]);
            out.copy_from_slice(&[w, 0.0, 0.0, w]);
        })
        .unwrap();
        let gt = einstein_tensor(&m).unwrap();
        let grid = m.grid();
        let mut worst = 0.0f64;
        for flat in 0..grid.len() {
            let interior = (0..2).all(|a| {
                let p = grid.axis_pos(flat, a);
                p >= 3 && p + 3 < 41
            });
            if !interior {
                continue;
            }
            for l in 0..4 {
                worst = worst.max(gt.lane(l)[flat].abs());
            }
        }
        assert!(worst < 5e-3, "2d Einstein tensor max {worst}");
    }

    #[test]
    fn directional_derivative_matches_difference_quotient() {
        let n = 3;
        let m = wavy_torus_metric(n, 14, 0.2);
        let grid = m.grid().clone();
        // conformal-ish direction sharing harmonics with the background, so
        // the derivative itself is O(1) rather than accidental-zero
        let mut h = m.to_tensor();
        for l in 0..n * n {
            let lane = h.lane_mut(l);
            let mut x = vec![0.0; n];
            for flat in 0..grid.len() {
                grid.coord(flat, &mut x);
                lane[flat] *= 0.3 + 0.2 * x[0].sin() * x[1].cos();
            }
        }
        let analytic = geometric_functional_derivative(&m, &h, None).unwrap();
        assert!(analytic.abs() > 1e-2, "test direction degenerate: {analytic}");
        let eps = 1e-5;
        let plus = action(&m.add_scaled(&h, eps, None).unwrap(), None).unwrap();
        let minus = action(&m.add_scaled(&h, -eps, None).unwrap(), None).unwrap();
        let quotient = (plus - minus) / (2.0 * eps);
        assert_relative_eq!(analytic, quotient, max_relative = 1e-7);
    }

    #[test]
    fn einstein_pairing_approximates_the_derivative() {
        let n = 3;
        let mut gaps = Vec::new();
        for count in [12usize, 24] {
            let m = wavy_torus_metric(n, count, 0.2);
            let grid = m.grid().clone();
            let mut h = m.to_tensor();
            for l in 0..n * n {
                let lane = h.lane_mut(l);
                let mut x = vec![0.0; n];
                for flat in 0..grid.len() {
                    grid.coord(flat, &mut x);
                    lane[flat] *= 0.3 + 0.2 * x[0].sin() * x[1].cos();
                }
            }
            let exact = geometric_functional_derivative(&m, &h, None).unwrap();
            let paired = einstein_pairing(&m, &h, None).unwrap();
            gaps.push((exact - paired).abs());
        }
        let order = (gaps[0] / gaps[1]).log2();
        assert!(
            order > 1.6,
            "pairing gap should shrink at second order, got {order} from {gaps:?}"
        );
    }

    #[test]
    fn support_violations_are_reported() {
        let g = Grid::uniform(2, -1.0, 1.0, 11, false).unwrap();
        let m = MetricField::from_matrix_fn(g.clone(), (0, 2), 1e-12, |_, out| {
            out.copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        })
        .unwrap();
        // nonzero at the chart boundary
        let h_bad = TensorField::from_matrix_fn(g.clone(), |_, out| {
            out.copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        });
        let err = geometric_functional_derivative(&m, &h_bad, None).unwrap_err();
        assert!(matches!(err, Error::Support(_)), "got {err:?}");
        // asymmetric perturbation
        let h_asym = TensorField::from_matrix_fn(g, |x, out| {
            let b = ((1.0 - x[0] * x[0]) * (1.0 - x[1] * x[1])).powi(4);
            out.copy_from_slice(&[0.0, b, 2.0 * b, 0.0]);
        });
        let err = geometric_functional_derivative(&m, &h_asym, None).unwrap_err();
        assert!(matches!(err, Error::Inconsistent(_)), "got {err:?}");
    }

    #[test]
    fn continuity_ratio_stays_bounded_as_the_step_shrinks() {
        let m = wavy_torus_metric(3, 10, 0.2);
        let h = TensorField::from_matrix_fn(m.grid().clone(), |x, out| {
            let b = x[0].sin() * x[1].sin() * x[2].sin();
            out.fill(0.0);
            out[0] = b;
            out[4] = b;
            out[8] = b;
        });
        let reference = continuity_ratio(&m, &h, 1e-3, 2.0, None).unwrap();
        for t in [1e-1, 1e-2, 1e-4, 1e-5] {
            let ratio = continuity_ratio(&m, &h, t, 2.0, None).unwrap();
            assert!(
                ratio <= 2.0 * reference,
                "ratio {ratio} at t={t} exceeds twice the reference {reference}"
            );
        }
    }

    /// Center-node error of the streamed contractions against the round
    /// 3-sphere closed forms, at one grid resolution.
    fn sphere3_invariant_errors(count: usize) -> [f64; 3] {
        let m = sphere3_chart(count, 0.6);
        let center = m.grid().len() / 2;
        let mut got = [0.0; 3];
        for_each_quadratic_invariant(&m, |flat, inv| {
            if flat == center {
                got = [inv.scalar_squared, inv.ricci_squared, inv.riemann_squared];
            }
        })
        .unwrap();
        // unit 3-sphere: R = 6, Ric:Ric = 12, Riem:Riem = 12
        let exact = [36.0, 12.0, 12.0];
        let mut err = [0.0; 3];
        for k in 0..3 {
            err[k] = (got[k] - exact[k]).abs() / exact[k];
        }
        err
    }

    #[test]
    fn streamed_invariants_recover_the_round_sphere_values() {
        let coarse = sphere3_invariant_errors(11);
        let fine = sphere3_invariant_errors(21);
        for k in 0..3 {
            assert!(
                fine[k] < 5e-2,
                "invariant {k} off by {} at the finer grid (coarse {})",
                fine[k],
                coarse[k]
            );
            assert!(
                fine[k] < 0.35 * coarse[k],
                "invariant {k} should improve at second order: {} -> {}",
                coarse[k],
                fine[k]
            );
        }
    }

    #[test]
    fn streamed_invariants_match_the_flat_and_constant_cases() {
        let m = flat_metric(3, 9);
        for_each_quadratic_invariant(&m, |_, inv| {
            assert!(inv.scalar_squared.abs() < 1e-25);
            assert!(inv.ricci_squared.abs() < 1e-25);
            assert!(inv.riemann_squared.abs() < 1e-25);
            assert!(inv.sqrt_det > 0.0);
        })
        .unwrap();
    }
}
