//! Ball-excision deformations on a chart: pull the base metric back to a
//! unit-ball chart around a point, replace the excised ball by a cap metric
//! glued through a cutoff blend, and follow the action difference as the
//! excision radius shrinks.
//!
//! The auxiliary reference metric is Euclidean in the chart, so normal
//! coordinates around the excision point are plain translations and the
//! pullback map is `x_ball -> p + sqrt(eps) * x_ball` exactly. Caps are
//! authored directly in unit-ball coordinates; their genuine topology enters
//! only through the `cap_euler` metadata, while every quantitative result
//! depends on the cap only through chart integrals of its curvature density.
//!
//! The four-term difference decomposition:
//!   I0 = -integral of the base density over the excised ball,
//!   I1 =  integral of the assembled-metric density over the outer annulus
//!         of the unit ball, where the assembled metric is the pullback
//!         exactly,
//!   I2 =  integral of the assembled-metric density over the transition
//!         shell,
//!   I3 =  integral of the assembled-metric density over the inner ball,
//!         where the assembled metric is the scaled cap exactly.
//! I0 is an integral of the base density in base coordinates (the pullback
//! route reduces to it by an exact change of variables), evaluated by shell
//! quadrature of one precomputed density field. I1, I2, and I3 split one
//! quadrature of one per-epsilon density field by radial range. Splitting
//! against several fields instead (the raw cap inside the inner collar, the
//! raw pullback outside the outer one) would leave O(h) seams: difference
//! stencils near a collar read metric values from both sides, so the
//! assembled field's density differs from either ingredient's within a
//! stencil reach of the collar, and those boundary layers must be counted
//! by exactly one term.

use crate::asymptotics::{
    fit_power_law, geometric_schedule, one_sided_limit, FitModel, LimitEstimate, SweepResult,
};
use crate::ball::ShellRule;
use crate::curvature::lagrangian_density_where_scheme;
use crate::disconnected::Classification;
use crate::error::{Error, Result};
use crate::fd::Scheme;
use crate::field::{sym_index, sym_lane_count, MetricField, ScalarField};
use crate::grid::Grid;
use crate::interp::{sample_metric, Sampler};
use crate::quad::Mask;
use crate::smallmat::det;

/// Half-width of the default ball chart box; leaves margin around the unit
/// ball so shell quadrature up to radius one stays away from the box edge.
pub const BALL_HALF_WIDTH: f64 = 1.25;

/// Bounded box chart containing the unit ball, centered at the origin.
pub fn ball_chart(dim: usize, count: usize) -> Result<Grid> {
    Grid::uniform(dim, -BALL_HALF_WIDTH, BALL_HALF_WIDTH, count, false)
}

/// Radial quintic cutoff: 1 inside `inner`, 0 outside `outer`, a monotone
/// fifth-degree polynomial in between with two continuous derivatives at
/// both ends.
pub fn quintic_cutoff(grid: &Grid, inner: f64, outer: f64) -> Result<ScalarField> {
    if !(0.0 < inner && inner < outer && outer < 1.0) {
        return Err(Error::Config(format!(
            "collar radii must satisfy 0 < inner < outer < 1, got ({inner}, {outer})"
        )));
    }
    Ok(ScalarField::from_fn(grid.clone(), |x| {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r <= inner {
            1.0
        } else if r >= outer {
            0.0
        } else {
            let t = (r - inner) / (outer - inner);
            1.0 - t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
        }
    }))
}

/// All the data describing one excision-and-cap deformation at one point.
#[derive(Debug, Clone)]
pub struct SurgeryTemplate {
    point: Vec<f64>,
    collar_inner: f64,
    collar_outer: f64,
    cap: MetricField,
    cutoff: ScalarField,
    cap_euler: i64,
    epsilon_max: f64,
}

impl SurgeryTemplate {
    pub fn new(
        point: Vec<f64>,
        collar_inner: f64,
        collar_outer: f64,
        cap: MetricField,
        cutoff: ScalarField,
        cap_euler: i64,
        epsilon_max: f64,
    ) -> Result<SurgeryTemplate> {
        if !(0.0 < collar_inner && collar_inner < collar_outer && collar_outer < 1.0) {
            return Err(Error::Config(format!(
                "collar radii must satisfy 0 < inner < outer < 1, got ({collar_inner}, {collar_outer})"
            )));
        }
        if point.len() != cap.dim() {
            return Err(Error::Config(format!(
                "point has {} coordinates, cap chart has dimension {}",
                point.len(),
                cap.dim()
            )));
        }
        if cutoff.grid() != cap.grid() {
            return Err(Error::Config(
                "cutoff and cap must live on the same ball chart".to_string(),
            ));
        }
        if cap.grid().periodic().iter().any(|&p| p) {
            return Err(Error::Geometry("the ball chart must be bounded".to_string()));
        }
        for &(lo, hi) in cap.grid().bounds() {
            if lo > -1.0 || hi < 1.0 {
                return Err(Error::Geometry(format!(
                    "the ball chart box [{lo}, {hi}] does not contain the unit ball"
                )));
            }
        }
        if !(epsilon_max > 0.0) {
            return Err(Error::Config(format!(
                "epsilon_max must be positive, got {epsilon_max}"
            )));
        }
        let grid = cap.grid();
        let mut x = vec![0.0; grid.dim()];
        for (flat, &f) in cutoff.values().iter().enumerate() {
            if !(-1e-12..=1.0 + 1e-12).contains(&f) {
                return Err(Error::Config(format!(
                    "cutoff value {f} at node {flat} leaves [0, 1]"
                )));
            }
            grid.coord(flat, &mut x);
            let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if r <= collar_inner && (f - 1.0).abs() > 1e-12 {
                return Err(Error::Config(format!(
                    "cutoff must equal 1 inside the inner collar; found {f} at radius {r:.6}"
                )));
            }
            if r >= collar_outer && f.abs() > 1e-12 {
                return Err(Error::Config(format!(
                    "cutoff must vanish outside the outer collar; found {f} at radius {r:.6}"
                )));
            }
        }
        // Monotone in radius between the collars: checked along the axis
        // directions and the main diagonals.
        let n = grid.dim();
        let mut sampler = Sampler::new(grid);
        let mut dirs: Vec<Vec<f64>> = Vec::new();
        for a in 0..n {
            let mut d = vec![0.0; n];
            d[a] = 1.0;
            dirs.push(d.clone());
            d[a] = -1.0;
            dirs.push(d);
        }
        dirs.push(vec![1.0 / (n as f64).sqrt(); n]);
        dirs.push(vec![-1.0 / (n as f64).sqrt(); n]);
        for dir in &dirs {
            let mut prev = f64::INFINITY;
            for k in 0..=32 {
                let r = collar_inner + (collar_outer - collar_inner) * k as f64 / 32.0;
                let xp: Vec<f64> = dir.iter().map(|d| d * r).collect();
                sampler.stencil(&xp)?;
                let f = sampler.apply(cutoff.values());
                if f > prev + 1e-10 {
                    return Err(Error::Config(format!(
                        "cutoff is not radially monotone near radius {r:.4}"
                    )));
                }
                prev = f;
            }
        }
        Ok(SurgeryTemplate {
            point,
            collar_inner,
            collar_outer,
            cap,
            cutoff,
            cap_euler,
            epsilon_max,
        })
    }

    pub fn point(&self) -> &[f64] {
        &self.point
    }

    pub fn collars(&self) -> (f64, f64) {
        (self.collar_inner, self.collar_outer)
    }

    pub fn cap(&self) -> &MetricField {
        &self.cap
    }

    pub fn cutoff(&self) -> &ScalarField {
        &self.cutoff
    }

    pub fn cap_euler(&self) -> i64 {
        self.cap_euler
    }

    pub fn epsilon_max(&self) -> f64 {
        self.epsilon_max
    }
}

/// Largest deformation parameter for which the excision ball spans at least
/// 16 base-grid nodes across its diameter, after checking that the mapped
/// ball chart fits inside the base chart with a two-node margin.
pub fn default_epsilon_max(base: &Grid, point: &[f64], ball_half_width: f64) -> Result<f64> {
    let h = base.spacing().iter().cloned().fold(0.0f64, f64::max);
    let eps = 64.0 * h * h;
    let sq = eps.sqrt();
    for a in 0..base.dim() {
        if base.periodic()[a] {
            continue;
        }
        let (lo, hi) = base.bounds()[a];
        let m = 2.0 * base.spacing()[a];
        if point[a] - sq * ball_half_width < lo + m || point[a] + sq * ball_half_width > hi - m {
            return Err(Error::Geometry(format!(
                "a well-resolved excision ball (radius {sq:.4}) does not fit around the point on axis {a}; refine the base grid or move the point"
            )));
        }
    }
    Ok(eps)
}

/// Default shrinking schedule: 20 geometric halvings from `epsilon_max`.
pub fn default_surgery_schedule(epsilon_max: f64) -> Result<Vec<f64>> {
    geometric_schedule(epsilon_max, 0.5, 20)
}

/// Pullback of the base metric to the ball chart at scale `eps`:
/// `eps * g(p + sqrt(eps) x)` componentwise, with the base metric evaluated
/// by cubic interpolation.
pub fn normal_ball_pullback(
    g: &MetricField,
    point: &[f64],
    eps: f64,
    ball: &Grid,
) -> Result<MetricField> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!(
            "pullback scale must be positive, got {eps}"
        )));
    }
    check_ball_fits(g.grid(), point, eps.sqrt(), ball)?;
    let shape = ball_shape(g, point, eps.sqrt(), ball, |_| true)?;
    shape.scaled(eps)
}

/// Unscaled pullback shape `g(p + sq x)`; `needed` gates which nodes are
/// interpolated (the rest are filled with the constant value at `p`, which
/// callers must never read).
fn ball_shape(
    g: &MetricField,
    point: &[f64],
    sq: f64,
    ball: &Grid,
    mut needed: impl FnMut(f64) -> bool,
) -> Result<MetricField> {
    let n = g.dim();
    if ball.dim() != n {
        return Err(Error::Config(format!(
            "ball chart dimension {} does not match the base dimension {n}",
            ball.dim()
        )));
    }
    let mut at_p = vec![0.0; n * n];
    sample_metric(g, point, &mut at_p)?;
    let floor = 1e-3 * det(&at_p, n).abs();
    let len = ball.len();
    let lanes = sym_lane_count(n);
    let mut comps = vec![0.0; lanes * len];
    let mut sampler = Sampler::new(g.grid());
    let mut xbar = vec![0.0; n];
    let mut mapped = vec![0.0; n];
    for flat in 0..len {
        ball.coord(flat, &mut xbar);
        let r = xbar.iter().map(|v| v * v).sum::<f64>().sqrt();
        if needed(r) {
            for (m, (&p, &xb)) in mapped.iter_mut().zip(point.iter().zip(&xbar)) {
                *m = p + sq * xb;
            }
            sampler.stencil(&mapped)?;
            for i in 0..n {
                for j in i..n {
                    comps[sym_index(n, i, j) * len + flat] =
                        sampler.apply(g.lane(sym_index(n, i, j)));
                }
            }
        } else {
            for i in 0..n {
                for j in i..n {
                    comps[sym_index(n, i, j) * len + flat] = at_p[i * n + j];
                }
            }
        }
    }
    MetricField::new(ball.clone(), comps, g.signature(), floor.max(1e-300))
}

fn check_ball_fits(base: &Grid, point: &[f64], sq: f64, ball: &Grid) -> Result<()> {
    if point.len() != base.dim() {
        return Err(Error::Config(format!(
            "point has {} coordinates, base chart has dimension {}",
            point.len(),
            base.dim()
        )));
    }
    for a in 0..base.dim() {
        if base.periodic()[a] {
            continue;
        }
        let (blo, bhi) = ball.bounds()[a];
        let (lo, hi) = base.bounds()[a];
        let m = 2.0 * base.spacing()[a];
        if point[a] + sq * blo < lo + m || point[a] + sq * bhi > hi - m {
            return Err(Error::Geometry(format!(
                "the mapped ball chart leaves the base chart on axis {a} (scale sqrt = {sq:.5})"
            )));
        }
    }
    Ok(())
}

/// Three-branch cap assembly at scale `eps`: `f * (eps * cap) + (1 - f) *
/// pulled` pointwise. Inside the inner collar (f = 1) this is the scaled cap
/// exactly; outside the outer collar (f = 0) it is the pullback exactly.
/// Degenerate or signature-changing blends are rejected node by node.
pub fn assemble_cap_metric(
    tpl: &SurgeryTemplate,
    pulled: &MetricField,
    eps: f64,
) -> Result<MetricField> {
    if pulled.grid() != tpl.cap.grid() {
        return Err(Error::Config(
            "pullback must live on the template's ball chart".to_string(),
        ));
    }
    if !(eps > 0.0 && eps <= tpl.epsilon_max * (1.0 + 1e-12)) {
        return Err(Error::Domain(format!(
            "scale {eps} leaves the admissible range (0, {}]",
            tpl.epsilon_max
        )));
    }
    let n = pulled.dim();
    let grid = pulled.grid().clone();
    let len = grid.len();
    let lanes = sym_lane_count(n);
    let mut comps = vec![0.0; lanes * len];
    let f = tpl.cutoff.values();
    for l in 0..lanes {
        let cap = tpl.cap.lane(l);
        let pul = pulled.lane(l);
        let dst = &mut comps[l * len..][..len];
        for k in 0..len {
            dst[k] = f[k] * eps * cap[k] + (1.0 - f[k]) * pul[k];
        }
    }
    let floor = 0.25 * (tpl.cap.det_floor() * eps.powi(n as i32)).min(pulled.det_floor());
    MetricField::new(grid, comps, pulled.signature(), floor)
}

/// One evaluated action difference: the four decomposition terms at one
/// scale. The total is their sum, formed on demand so it is exact by
/// construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConnectedDifference {
    pub epsilon: f64,
    pub i0: f64,
    pub i1: f64,
    pub i2: f64,
    pub i3: f64,
}

impl ConnectedDifference {
    pub fn total(&self) -> f64 {
        self.i0 + self.i1 + self.i2 + self.i3
    }
}

/// Precomputed state for evaluating action differences at many scales: the
/// base density around the excision point and the shell quadrature rules.
pub struct SurgeryRun<'a> {
    base: &'a MetricField,
    tpl: &'a SurgeryTemplate,
    scheme: Scheme,
    base_density: ScalarField,
    base_shell: ShellRule,
    ball_shell: ShellRule,
    g_at_p: Vec<f64>,
    origin: Vec<f64>,
}

impl<'a> SurgeryRun<'a> {
    pub fn new(
        base: &'a MetricField,
        mask: Option<&Mask>,
        tpl: &'a SurgeryTemplate,
        scheme: Scheme,
    ) -> Result<SurgeryRun<'a>> {
        let n = base.dim();
        if tpl.cap.dim() != n {
            return Err(Error::Config(format!(
                "template dimension {} does not match the base dimension {n}",
                tpl.cap.dim()
            )));
        }
        let sq_max = tpl.epsilon_max.sqrt();
        check_ball_fits(base.grid(), &tpl.point, sq_max, tpl.cap.grid())?;
        if let Some(mask) = mask {
            check_ball_in_mask(base.grid(), mask, &tpl.point, sq_max)?;
        }
        let mut g_at_p = vec![0.0; n * n];
        sample_metric(base, &tpl.point, &mut g_at_p)?;

        // Base density is only ever read inside the largest excision ball;
        // gate the expensive kernel to that neighborhood.
        let h_base = base.grid().spacing().iter().cloned().fold(0.0f64, f64::max);
        let reach = sq_max + 3.0 * h_base * (n as f64).sqrt();
        let point = tpl.point.clone();
        let bounds = base.grid().bounds().to_vec();
        let periodic = base.grid().periodic().to_vec();
        let base_density = lagrangian_density_where_scheme(base, scheme, |x| {
            let mut d2 = 0.0;
            for a in 0..x.len() {
                let mut d = (x[a] - point[a]).abs();
                if periodic[a] {
                    let period = bounds[a].1 - bounds[a].0;
                    d = d.min(period - d);
                }
                d2 += d * d;
            }
            d2 <= reach * reach
        })?;

        Ok(SurgeryRun {
            base,
            tpl,
            scheme,
            base_density,
            base_shell: ShellRule::standard(n)?,
            ball_shell: ShellRule::standard(n)?,
            g_at_p,
            origin: vec![0.0; n],
        })
    }

    /// Interpolated base metric value at the excision point (row-major).
    pub fn base_at_point(&self) -> &[f64] {
        &self.g_at_p
    }

    /// The four-term action difference at one scale.
    pub fn difference(&self, eps: f64) -> Result<ConnectedDifference> {
        let tpl = self.tpl;
        if !(eps > 0.0 && eps <= tpl.epsilon_max * (1.0 + 1e-12)) {
            return Err(Error::Domain(format!(
                "scale {eps} leaves the admissible range (0, {}]",
                tpl.epsilon_max
            )));
        }
        let n = self.base.dim();
        let sq = eps.sqrt();
        let power = (n as f64 - 2.0) / 2.0;
        let factor = eps.powf(power);

        let i0 = -self
            .base_shell
            .integrate(&self.base_density, &tpl.point, 0.0, sq)?;

        // Density of the assembled metric at unit scale: blend the cap into
        // the pullback shape, then difference it over the unit ball plus the
        // reading margins of the shell rule. The shape is interpolated only
        // where the cutoff leaves its inner plateau and within reach of the
        // kept density nodes; the constant fill beyond that boundary sits
        // outside every stencil that feeds the quadrature.
        let ball_grid = tpl.cap.grid();
        let h_ball = ball_grid.spacing().iter().cloned().fold(0.0f64, f64::max);
        let rt_n = (n as f64).sqrt();
        let m_d = 2.0 * h_ball * rt_n + 0.01 * h_ball;
        let m_metric = m_d + 4.0 * h_ball;
        let f = tpl.cutoff.values();
        let grid_len = ball_grid.len();
        let shape = {
            let interp_lim = 1.0 + m_metric;
            let mut node = 0usize;
            let f_ref = f;
            ball_shape(self.base, &tpl.point, sq, ball_grid, move |r| {
                let want = f_ref[node] < 1.0 - 1e-14 && r <= interp_lim;
                node += 1;
                debug_assert!(node <= grid_len);
                want
            })?
        };
        let lanes = sym_lane_count(n);
        let mut comps = vec![0.0; lanes * ball_grid.len()];
        for l in 0..lanes {
            let cap = tpl.cap.lane(l);
            let shp = shape.lane(l);
            let dst = &mut comps[l * ball_grid.len()..][..ball_grid.len()];
            for k in 0..ball_grid.len() {
                dst[k] = f[k] * cap[k] + (1.0 - f[k]) * shp[k];
            }
        }
        let floor = 0.25 * tpl.cap.det_floor().min(shape.det_floor());
        let blend = MetricField::new(ball_grid.clone(), comps, self.base.signature(), floor)?;
        let band_hi = 1.0 + m_d;
        let blend_density = lagrangian_density_where_scheme(&blend, self.scheme, |x| {
            x.iter().map(|v| v * v).sum::<f64>().sqrt() <= band_hi
        })?;
        let i3 = factor
            * self
                .ball_shell
                .integrate(&blend_density, &self.origin, 0.0, tpl.collar_inner)?;
        let i2 = factor
            * self.ball_shell.integrate(
                &blend_density,
                &self.origin,
                tpl.collar_inner,
                tpl.collar_outer,
            )?;
        let i1 = factor
            * self
                .ball_shell
                .integrate(&blend_density, &self.origin, tpl.collar_outer, 1.0)?;
        Ok(ConnectedDifference { epsilon: eps, i0, i1, i2, i3 })
    }

    /// Differences along a shrinking schedule, in schedule order.
    pub fn sweep(&self, schedule: &[f64]) -> Result<Vec<ConnectedDifference>> {
        schedule.iter().map(|&e| self.difference(e)).collect()
    }
}

fn check_ball_in_mask(base: &Grid, mask: &Mask, point: &[f64], sq: f64) -> Result<()> {
    let n = base.dim();
    let h = base.spacing().iter().cloned().fold(0.0f64, f64::max);
    let reach = sq + 2.0 * h;
    // Corners and face centers of the bounding cube of the margined ball.
    let mut probe = vec![0.0; n];
    for corner in 0..(1usize << n) {
        for a in 0..n {
            let s = if corner >> a & 1 == 1 { 1.0 } else { -1.0 };
            probe[a] = point[a] + s * reach;
        }
        if !mask.contains(&probe) {
            return Err(Error::Support(format!(
                "the excision ball (radius {sq:.5} plus margin) leaves the variation domain near {probe:?}"
            )));
        }
    }
    Ok(())
}

/// Convenience wrapper: one action difference without reusing state.
pub fn connected_action_difference(
    base: &MetricField,
    mask: Option<&Mask>,
    tpl: &SurgeryTemplate,
    eps: f64,
    scheme: Scheme,
) -> Result<ConnectedDifference> {
    SurgeryRun::new(base, mask, tpl, scheme)?.difference(eps)
}

fn blended_with_constant(tpl: &SurgeryTemplate, g_at_p: &[f64]) -> Result<MetricField> {
    let ball_grid = tpl.cap.grid();
    let n = ball_grid.dim();
    let len = ball_grid.len();
    let lanes = sym_lane_count(n);
    let f = tpl.cutoff.values();
    let mut comps = vec![0.0; lanes * len];
    for i in 0..n {
        for j in i..n {
            let l = sym_index(n, i, j);
            let cap = tpl.cap.lane(l);
            let c = g_at_p[i * n + j];
            let dst = &mut comps[l * len..][..len];
            for k in 0..len {
                dst[k] = f[k] * cap[k] + (1.0 - f[k]) * c;
            }
        }
    }
    let floor = 0.25 * tpl.cap.det_floor().min(1e-3 * det(g_at_p, n).abs());
    MetricField::new(ball_grid.clone(), comps, tpl.cap.signature(), floor.max(1e-300))
}

/// The limiting transition constant: the density of `f*cap + (1-f)*g_at_p`
/// integrated over the unit ball, split at the collars exactly like the
/// sweep terms. In the limit the blend carries the constant metric outside
/// the outer collar, so the annulus piece measures only the discrete
/// boundary layer of the collar; counting it keeps this value bitwise
/// consistent with the sweep quotients when the base is constant around the
/// point. This is the value the scaled action difference converges to.
pub fn kappa(tpl: &SurgeryTemplate, g_at_p: &[f64], scheme: Scheme) -> Result<f64> {
    let n = tpl.cap.dim();
    if g_at_p.len() != n * n {
        return Err(Error::Config(format!(
            "constant metric value has {} entries, expected {}",
            g_at_p.len(),
            n * n
        )));
    }
    let ball_grid = tpl.cap.grid();
    let h = ball_grid.spacing().iter().cloned().fold(0.0f64, f64::max);
    let m_d = 2.0 * h * (n as f64).sqrt() + 0.01 * h;
    let shell = ShellRule::standard(n)?;
    let origin = vec![0.0; n];
    let blended = blended_with_constant(tpl, g_at_p)?;
    let band_hi = 1.0 + m_d;
    let blended_density = lagrangian_density_where_scheme(&blended, scheme, |x| {
        x.iter().map(|v| v * v).sum::<f64>().sqrt() <= band_hi
    })?;
    let inner = shell.integrate(&blended_density, &origin, 0.0, tpl.collar_inner)?;
    let transition =
        shell.integrate(&blended_density, &origin, tpl.collar_inner, tpl.collar_outer)?;
    let annulus = shell.integrate(&blended_density, &origin, tpl.collar_outer, 1.0)?;
    Ok(inner + transition + annulus)
}

/// `kappa` with the constant metric value sampled from the base at the
/// template point.
pub fn kappa_at(tpl: &SurgeryTemplate, base: &MetricField, scheme: Scheme) -> Result<f64> {
    let n = base.dim();
    let mut g_at_p = vec![0.0; n * n];
    sample_metric(base, &tpl.point, &mut g_at_p)?;
    kappa(tpl, &g_at_p, scheme)
}

/// Action of the unit-scale assembled cap over the whole unit ball. This is
/// the same integral as `kappa`: the assembled metric at unit scale with a
/// constant base value is `f*cap + (1-f)*g_at_p` everywhere in the ball.
pub fn cap_action(tpl: &SurgeryTemplate, g_at_p: &[f64], scheme: Scheme) -> Result<f64> {
    kappa(tpl, g_at_p, scheme)
}

/// Derivative classification for an excision deformation, with the sweep
/// and limit diagnostics that produced it.
#[derive(Debug, Clone)]
pub struct ConnectedDerivative {
    pub classification: Classification,
    /// Limit classification of the quotients (difference over epsilon) on
    /// the smallest schedule points.
    pub estimate: LimitEstimate,
    /// Power-law fit of the differences over the full schedule, when the
    /// data admits one; purely diagnostic.
    pub difference_fit: Option<SweepResult>,
    pub differences: Vec<ConnectedDifference>,
    pub quotients: Vec<f64>,
}

/// Number of smallest schedule points used for the limit classification;
/// the leading term dominates there.
pub const LIMIT_TAIL: usize = 8;

/// Classifies the one-sided derivative of the action under the excision
/// deformation: the quotient difference/epsilon either diverges (no
/// derivative), converges to a nonzero value, or dies out.
pub fn topological_derivative_connected(
    base: &MetricField,
    mask: Option<&Mask>,
    tpl: &SurgeryTemplate,
    schedule: &[f64],
    scheme: Scheme,
) -> Result<ConnectedDerivative> {
    let owned;
    let schedule = if schedule.is_empty() {
        owned = default_surgery_schedule(tpl.epsilon_max)?;
        &owned
    } else {
        schedule
    };
    let run = SurgeryRun::new(base, mask, tpl, scheme)?;
    let differences = run.sweep(schedule)?;
    let totals: Vec<f64> = differences.iter().map(|d| d.total()).collect();
    let quotients: Vec<f64> = totals
        .iter()
        .zip(schedule)
        .map(|(t, e)| t / e)
        .collect();
    let difference_fit = fit_power_law(schedule, &totals).ok();
    let tail = schedule.len().saturating_sub(LIMIT_TAIL);
    let estimate = one_sided_limit(&schedule[tail..], &quotients[tail..])?;
    let scale = quotients.iter().fold(0.0f64, |m, q| m.max(q.abs()));
    let classification = match estimate.model {
        FitModel::Divergent { .. } => Classification::Undefined,
        FitModel::Limit { value } if value.abs() > 1e-8 * scale.max(1.0) => {
            Classification::Value(value)
        }
        _ => Classification::Zero,
    };
    Ok(ConnectedDerivative {
        classification,
        estimate,
        difference_fit,
        differences,
        quotients,
    })
}
