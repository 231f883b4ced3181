//! Collapsing circle-fibration families over a flat torus base: the circle
//! length shrinks like `eps` while the base metric oscillates along the
//! circle with a fixed trace-free amplitude. Every metric component and all
//! its coordinate derivatives stay bounded uniformly in `eps`, yet the
//! curvature action diverges as a simple pole `c/eps` with `c < 0`: the
//! action is not continuous along uniformly smooth degenerations.
//!
//! Two independent routes evaluate the action. The direct route runs the
//! curvature kernel on the full product grid. The split route slices the
//! product along the circle: each slice is flat (the base metric is constant
//! in the base coordinates), so the action reduces to the extrinsic-
//! curvature quadratics `-K:K + (tr K)^2` integrated with the lapse; the
//! divergence term of the slicing identity integrates to zero on the closed
//! product and is omitted.

use crate::asymptotics::{fit_laurent, geometric_schedule, FitModel, SweepResult};
use crate::curvature::{action, lagrangian_density_scheme};
use crate::error::{Error, Result};
use crate::fd::{partial_derivative, Scheme};
use crate::field::{sym_lane_count, MetricField, ScalarField};
use crate::grid::Grid;
use crate::quad::{self, pairwise_sum};
use crate::smallmat;

const TAU: f64 = std::f64::consts::TAU;

/// A family of product metrics on a circle times a flat torus:
/// `g_eps = eps^2 dt (x) dt + (gamma_ab + delta sin(t) theta_ab) dx^a dx^b`.
///
/// `gamma` is a constant positive definite base metric, `theta` a constant
/// nonzero symmetric tensor that is trace-free against `gamma`, and the
/// amplitude `delta` keeps the oscillating base metric positive definite for
/// every circle position.
#[derive(Debug, Clone)]
pub struct CollapsingFamily {
    base_dim: usize,
    gamma: Vec<f64>,
    theta: Vec<f64>,
    delta: f64,
    t_count: usize,
    base_count: usize,
}

/// Absolute tolerance for the trace-free requirement on `theta`.
pub const TRACE_TOL: f64 = 1e-14;

fn check_symmetric(name: &str, a: &[f64], n: usize) -> Result<()> {
    let scale = a.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    for i in 0..n {
        for j in 0..i {
            if (a[i * n + j] - a[j * n + i]).abs() > 1e-14 * scale {
                return Err(Error::Config(format!(
                    "{name} must be symmetric; entries ({i},{j}) and ({j},{i}) disagree"
                )));
            }
        }
    }
    Ok(())
}

impl CollapsingFamily {
    pub fn new(
        base_dim: usize,
        gamma: Vec<f64>,
        theta: Vec<f64>,
        delta: f64,
        t_count: usize,
        base_count: usize,
    ) -> Result<CollapsingFamily> {
        let n = base_dim;
        if n < 2 {
            return Err(Error::Config(format!(
                "the base torus must have dimension at least 2, got {n}"
            )));
        }
        if n + 1 > crate::smallmat::MAXN {
            return Err(Error::Config(format!(
                "product dimension {} exceeds the kernel bound {}",
                n + 1,
                crate::smallmat::MAXN
            )));
        }
        if gamma.len() != n * n || theta.len() != n * n {
            return Err(Error::Config(format!(
                "base tensors need {} entries for dimension {n}, got {} and {}",
                n * n,
                gamma.len(),
                theta.len()
            )));
        }
        check_symmetric("the base metric", &gamma, n)?;
        check_symmetric("the oscillation tensor", &theta, n)?;
        let mut eig = vec![0.0; n];
        smallmat::sym_eigenvalues(&gamma, n, &mut eig);
        if !eig.iter().all(|&e| e > 0.0) {
            return Err(Error::Config(
                "the base metric must be positive definite".to_string(),
            ));
        }
        if theta.iter().all(|v| v.abs() == 0.0) {
            return Err(Error::Config(
                "the oscillation tensor must not vanish identically".to_string(),
            ));
        }
        let mut inv = vec![0.0; n * n];
        smallmat::det_inverse(&gamma, n, &mut inv);
        let mut trace = 0.0;
        for a in 0..n {
            for b in 0..n {
                trace += inv[a * n + b] * theta[a * n + b];
            }
        }
        let scale = inv
            .iter()
            .zip(&theta)
            .fold(1.0f64, |m, (p, q)| m.max((p * q).abs()));
        if trace.abs() > TRACE_TOL * scale * (n * n) as f64 {
            return Err(Error::Config(format!(
                "the oscillation tensor must be trace-free against the base metric, got trace {trace}"
            )));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::Amplitude(format!(
                "the oscillation amplitude must be positive and finite, got {delta}"
            )));
        }
        // The smallest eigenvalue of gamma + c theta is concave in c, so
        // positivity at the extremes c = +-delta covers every circle
        // position.
        for sign in [1.0, -1.0] {
            let worst: Vec<f64> = gamma
                .iter()
                .zip(&theta)
                .map(|(g, t)| g + sign * delta * t)
                .collect();
            smallmat::sym_eigenvalues(&worst, n, &mut eig);
            if !eig.iter().all(|&e| e > 1e-12) {
                return Err(Error::Amplitude(format!(
                    "amplitude {delta} degenerates the base metric at the oscillation extreme"
                )));
            }
        }
        if t_count < 16 {
            return Err(Error::Config(format!(
                "the circle axis needs at least 16 nodes, got {t_count}"
            )));
        }
        if base_count < 4 {
            return Err(Error::Config(format!(
                "base axes need at least 4 nodes, got {base_count}"
            )));
        }
        Ok(CollapsingFamily { base_dim, gamma, theta, delta, t_count, base_count })
    }

    /// The sharpest configuration: flat 2-torus base, diagonal trace-free
    /// oscillation, amplitude 0.1, 128 circle nodes, 32 nodes per base axis.
    pub fn default_family() -> CollapsingFamily {
        CollapsingFamily::new(
            2,
            vec![1.0, 0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0, -1.0],
            0.1,
            128,
            32,
        )
        .expect("the default family parameters are valid")
    }

    pub fn base_dim(&self) -> usize {
        self.base_dim
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// The oscillating base metric `gamma + delta sin(t) theta` at circle
    /// position `t`.
    pub fn base_metric_at(&self, t: f64, out: &mut [f64]) {
        let s = self.delta * t.sin();
        for (o, (g, th)) in out.iter_mut().zip(self.gamma.iter().zip(&self.theta)) {
            *o = g + s * th;
        }
    }

    /// Fully periodic product grid: circle axis `[0, 2 pi)` first, then the
    /// base torus axes.
    pub fn product_grid(&self) -> Result<Grid> {
        let dim = self.base_dim + 1;
        let bounds = vec![(0.0, TAU); dim];
        let mut counts = vec![self.base_count; dim];
        counts[0] = self.t_count;
        let periodic = vec![true; dim];
        Grid::new(&bounds, &counts, &periodic)
    }
}

/// Default collapse schedule `0.2 * 2^-k` for `k = 0..=12`.
pub fn default_blowup_schedule() -> Vec<f64> {
    geometric_schedule(0.2, 0.5, 13).expect("static schedule parameters are valid")
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::Domain(format!(
            "collapse parameter must lie in (0, 1], got {eps}"
        )));
    }
    Ok(())
}

/// The product metric of the family at collapse parameter `eps`: block
/// diagonal with `eps^2` on the circle direction and the oscillating base
/// metric on the base block.
pub fn collapsing_metric(fam: &CollapsingFamily, eps: f64) -> Result<MetricField> {
    check_eps(eps)?;
    let n = fam.base_dim;
    let grid = fam.product_grid()?;
    // det g = eps^2 det(gamma + delta sin t theta) exactly; floor it by the
    // worst circle node.
    let mut worst = f64::INFINITY;
    let mut block = vec![0.0; n * n];
    for j in 0..fam.t_count {
        fam.base_metric_at(grid.axis_coord(0, j), &mut block);
        worst = worst.min(smallmat::det(&block, n));
    }
    if !(worst > 0.0) {
        return Err(Error::Amplitude(format!(
            "the oscillating base metric degenerates on the grid (worst determinant {worst})"
        )));
    }
    let dim = n + 1;
    MetricField::from_matrix_fn(grid, (0, dim), 0.25 * eps * eps * worst, |x, m| {
        m.fill(0.0);
        m[0] = eps * eps;
        let s = fam.delta * x[0].sin();
        for a in 0..n {
            for b in 0..n {
                m[(a + 1) * dim + (b + 1)] =
                    fam.gamma[a * n + b] + s * fam.theta[a * n + b];
            }
        }
    })
}

/// Extrinsic curvature of the circle slice at position `t`, in closed form:
/// `K_ab = -(1/(2 eps)) d/dt (base metric) = -(delta cos t / (2 eps)) theta_ab`.
pub fn extrinsic_curvature(fam: &CollapsingFamily, eps: f64, t: f64) -> Result<Vec<f64>> {
    check_eps(eps)?;
    let f = -fam.delta * t.cos() / (2.0 * eps);
    Ok(fam.theta.iter().map(|v| f * v).collect())
}

/// Action of the collapsing metric through the slicing identity: the slices
/// are flat, so the integrand is `(-K:K + (tr K)^2)` times the lapse `eps`
/// and the slice volume factor, integrated over the product. Indices of `K`
/// are raised by the oscillating base metric. The result is exactly
/// proportional to `1/eps`: the integrand carries `eps^-2` through `K` and a
/// single `eps` through the volume.
pub fn adm_action(fam: &CollapsingFamily, eps: f64) -> Result<f64> {
    check_eps(eps)?;
    let n = fam.base_dim;
    let h_t = TAU / fam.t_count as f64;
    // The base block is constant over the base torus, so the base quadrature
    // contributes the coordinate volume exactly.
    let base_volume = TAU.powi(n as i32);
    let mut block = vec![0.0; n * n];
    let mut inv = vec![0.0; n * n];
    let mut mixed = vec![0.0; n * n];
    let mut slices = Vec::with_capacity(fam.t_count);
    for j in 0..fam.t_count {
        let t = j as f64 * h_t;
        fam.base_metric_at(t, &mut block);
        let det = smallmat::det_inverse(&block, n, &mut inv);
        let k = extrinsic_curvature(fam, eps, t)?;
        // mixed = (base inverse) K, so K:K = tr(mixed^2), tr K = tr(mixed)
        for a in 0..n {
            for b in 0..n {
                let mut acc = 0.0;
                for c in 0..n {
                    acc += inv[a * n + c] * k[c * n + b];
                }
                mixed[a * n + b] = acc;
            }
        }
        let mut trace = 0.0;
        let mut sq = 0.0;
        for a in 0..n {
            trace += mixed[a * n + a];
            for b in 0..n {
                sq += mixed[a * n + b] * mixed[b * n + a];
            }
        }
        slices.push((-sq + trace * trace) * eps * det.sqrt() * h_t * base_volume);
    }
    Ok(pairwise_sum(&slices))
}

/// The pole coefficient of the sliced action: `adm_action(fam, eps)` equals
/// this value divided by `eps` for every `eps`, exactly.
pub fn adm_pole_coefficient(fam: &CollapsingFamily) -> Result<f64> {
    adm_action(fam, 1.0)
}

/// Action of the collapsing metric by the direct route: the curvature
/// kernel on the full product grid, with second-order stencils.
pub fn direct_action(fam: &CollapsingFamily, eps: f64) -> Result<f64> {
    action(&collapsing_metric(fam, eps)?, None)
}

/// Direct-route action with an explicit difference scheme. The product grid
/// is fully periodic, so the fourth-order interior stencils apply at every
/// node.
pub fn direct_action_scheme(fam: &CollapsingFamily, eps: f64, scheme: Scheme) -> Result<f64> {
    let g = collapsing_metric(fam, eps)?;
    let dens = lagrangian_density_scheme(&g, scheme)?;
    Ok(quad::integrate(&dens, None))
}

/// Residual above which a blow-up fit is flagged inconclusive.
pub const BLOWUP_RESIDUAL_TOL: f64 = 1e-8;

/// Direct-route action sweep over a collapse schedule with its Laurent fit
/// and the sliced-route cross-check.
#[derive(Debug, Clone)]
pub struct BlowupFit {
    /// Schedule, direct-route actions, and the fitted Laurent model.
    pub sweep: SweepResult,
    /// Fitted pole coefficient.
    pub pole: f64,
    /// Fitted linear coefficient.
    pub linear: f64,
    /// Pole coefficient by the sliced route.
    pub adm_pole: f64,
    /// True when the Laurent residual exceeds the tolerance: the sweep does
    /// not actually follow a simple pole plus linear term.
    pub inconclusive: bool,
}

/// Sweeps the direct action over the schedule (default when empty) and fits
/// `c_minus / eps + c_plus * eps`. The sweep uses the fourth-order interior
/// stencils, which the fully periodic product grid supports at every node;
/// the fitted pole then reflects the continuum value rather than the
/// truncation error of the coarser scheme.
pub fn blowup_sweep_and_fit(fam: &CollapsingFamily, schedule: &[f64]) -> Result<BlowupFit> {
    let owned;
    let schedule = if schedule.is_empty() {
        owned = default_blowup_schedule();
        &owned
    } else {
        schedule
    };
    let mut values = Vec::with_capacity(schedule.len());
    for &eps in schedule {
        values.push(direct_action_scheme(fam, eps, Scheme::Order4)?);
    }
    let sweep = fit_laurent(schedule, &values)?;
    let (pole, linear) = match sweep.model {
        FitModel::Laurent { c_minus, c_plus } => (c_minus, c_plus),
        ref other => {
            return Err(Error::Fit(format!(
                "expected a Laurent model from the fit, got {other:?}"
            )))
        }
    };
    let inconclusive = sweep.residual > BLOWUP_RESIDUAL_TOL;
    Ok(BlowupFit {
        adm_pole: adm_pole_coefficient(fam)?,
        sweep,
        pole,
        linear,
        inconclusive,
    })
}

/// Largest absolute repeated circle-direction derivative of any metric
/// component, for each order `0..=max_order`. Derivatives along base axes
/// vanish identically (the components are constant there), so these maxima
/// bound every coordinate derivative of the given total order. Only the
/// circle block depends on `eps`, and it is constant, so each bound is
/// independent of `eps`.
pub fn derivative_bounds(
    fam: &CollapsingFamily,
    eps: f64,
    max_order: usize,
) -> Result<Vec<f64>> {
    let g = collapsing_metric(fam, eps)?;
    let dim = g.dim();
    let mut bounds = vec![0.0f64; max_order + 1];
    for l in 0..sym_lane_count(dim) {
        let mut field = ScalarField::new(g.grid().clone(), g.lane(l).to_vec())?;
        bounds[0] = bounds[0].max(field.max_abs());
        for bound in bounds.iter_mut().skip(1) {
            field = partial_derivative(&field, 0, 1)?;
            *bound = bound.max(field.max_abs());
        }
    }
    Ok(bounds)
}
