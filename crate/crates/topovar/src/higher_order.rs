//! Quadratic-curvature and Einstein-Gauss-Bonnet actions: full curvature
//! contractions, action totals, and the behavior of both under attaching a
//! shrinking closed component.
//!
//! Where the curvature action has critical dimension four, the quadratic
//! invariants scale like `eps^-2` instead of `eps^-1`, which shifts the
//! critical dimension to six. In dimension four the Gauss-Bonnet combination
//! integrates to a topological constant, so adding it to the action produces
//! a jump proportional to the Euler characteristic of the attached
//! component.

use crate::asymptotics::{
    fit_power_law, one_sided_limit, zero_floor, FitModel, LimitEstimate, SweepResult,
};
use crate::catalog::SphereOracle;
use crate::curvature::for_each_quadratic_invariant;
use crate::disconnected::{default_schedule, Classification};
use crate::error::{Error, Result};
use crate::field::{MetricField, ScalarField};
use crate::quad::{self, Mask};

/// Coefficients of the extended action
/// `integral of (-2 Lambda + R + alpha R^2 + beta |Ric|^2 + gamma |Riem|^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticCoefficients {
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl QuadraticCoefficients {
    pub fn new(lambda: f64, alpha: f64, beta: f64, gamma: f64) -> Result<QuadraticCoefficients> {
        for (name, v) in [
            ("lambda", lambda),
            ("alpha", alpha),
            ("beta", beta),
            ("gamma", gamma),
        ] {
            if !v.is_finite() {
                return Err(Error::Config(format!("coefficient {name} must be finite, got {v}")));
            }
        }
        Ok(QuadraticCoefficients { lambda, alpha, beta, gamma })
    }

    /// True when at least one of the three quadratic couplings is nonzero;
    /// the dimension-six classification is only meaningful in that case.
    pub fn has_quadratic_part(&self) -> bool {
        self.alpha != 0.0 || self.beta != 0.0 || self.gamma != 0.0
    }
}

/// Nodewise full contractions (R^2, Ric:Ric, Riem:Riem) with all indices
/// raised by the metric itself.
pub fn quadratic_invariants(
    g: &MetricField,
) -> Result<(ScalarField, ScalarField, ScalarField)> {
    let len = g.grid().len();
    let mut r2 = vec![0.0; len];
    let mut ric2 = vec![0.0; len];
    let mut riem2 = vec![0.0; len];
    for_each_quadratic_invariant(g, |flat, inv| {
        r2[flat] = inv.scalar_squared;
        ric2[flat] = inv.ricci_squared;
        riem2[flat] = inv.riemann_squared;
    })?;
    Ok((
        ScalarField::new(g.grid().clone(), r2)?,
        ScalarField::new(g.grid().clone(), ric2)?,
        ScalarField::new(g.grid().clone(), riem2)?,
    ))
}

/// Nodewise Gauss-Bonnet combination `R^2 - 4 Ric:Ric + Riem:Riem`, without
/// the volume factor.
pub fn gauss_bonnet_density(g: &MetricField) -> Result<ScalarField> {
    let len = g.grid().len();
    let mut out = vec![0.0; len];
    for_each_quadratic_invariant(g, |flat, inv| {
        out[flat] = inv.scalar_squared - 4.0 * inv.ricci_squared + inv.riemann_squared;
    })?;
    ScalarField::new(g.grid().clone(), out)
}

/// Extended action total over the chart or over `mask`:
/// `integral of (-2 Lambda + R + alpha R^2 + beta |Ric|^2 + gamma |Riem|^2)
/// |det g|^{1/2}`.
pub fn quadratic_action(
    g: &MetricField,
    mask: Option<&Mask>,
    coeffs: &QuadraticCoefficients,
) -> Result<f64> {
    let len = g.grid().len();
    let mut dens = vec![0.0; len];
    let c = *coeffs;
    for_each_quadratic_invariant(g, |flat, inv| {
        dens[flat] = (-2.0 * c.lambda
            + inv.scalar
            + c.alpha * inv.scalar_squared
            + c.beta * inv.ricci_squared
            + c.gamma * inv.riemann_squared)
            * inv.sqrt_det;
    })?;
    let field = ScalarField::new(g.grid().clone(), dens)?;
    Ok(quad::integrate(&field, mask))
}

/// Integral of the Gauss-Bonnet density times the volume factor over the
/// chart or over `mask`. In dimension four this total is invariant under
/// constant rescalings of the metric, exactly so even at finite resolution.
pub fn gauss_bonnet_action(g: &MetricField, mask: Option<&Mask>) -> Result<f64> {
    let len = g.grid().len();
    let mut dens = vec![0.0; len];
    for_each_quadratic_invariant(g, |flat, inv| {
        dens[flat] = (inv.scalar_squared - 4.0 * inv.ricci_squared + inv.riemann_squared)
            * inv.sqrt_det;
    })?;
    let field = ScalarField::new(g.grid().clone(), dens)?;
    Ok(quad::integrate(&field, mask))
}

/// Integrated curvature data of one closed component: everything the scaled
/// attachment formulas need.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentTotals {
    pub dim: usize,
    /// Riemannian volume.
    pub volume: f64,
    /// Integral of R.
    pub einstein_hilbert: f64,
    /// Integral of R^2.
    pub r_squared: f64,
    /// Integral of Ric:Ric.
    pub ricci_squared: f64,
    /// Integral of Riem:Riem.
    pub riemann_squared: f64,
}

impl ComponentTotals {
    pub fn new(
        dim: usize,
        volume: f64,
        einstein_hilbert: f64,
        r_squared: f64,
        ricci_squared: f64,
        riemann_squared: f64,
    ) -> Result<ComponentTotals> {
        if dim < 2 {
            return Err(Error::Config(format!(
                "component dimension must be at least 2, got {dim}"
            )));
        }
        if !(volume > 0.0 && volume.is_finite()) {
            return Err(Error::Config(format!(
                "component volume must be positive and finite, got {volume}"
            )));
        }
        for (name, v) in [
            ("einstein_hilbert", einstein_hilbert),
            ("r_squared", r_squared),
            ("ricci_squared", ricci_squared),
            ("riemann_squared", riemann_squared),
        ] {
            if !v.is_finite() {
                return Err(Error::Config(format!("component total {name} must be finite, got {v}")));
            }
        }
        Ok(ComponentTotals {
            dim,
            volume,
            einstein_hilbert,
            r_squared,
            ricci_squared,
            riemann_squared,
        })
    }

    /// Totals of a round sphere from its closed forms; every integrand is
    /// constant, so each total is the pointwise value times the volume.
    pub fn from_sphere(oracle: &SphereOracle) -> ComponentTotals {
        ComponentTotals {
            dim: oracle.dim,
            volume: oracle.volume,
            einstein_hilbert: oracle.total_action,
            r_squared: oracle.scalar_curvature * oracle.scalar_curvature * oracle.volume,
            ricci_squared: oracle.ricci_squared * oracle.volume,
            riemann_squared: oracle.riemann_squared * oracle.volume,
        }
    }

    /// Totals of a component realized as a metric on a fully periodic grid,
    /// by quadrature.
    pub fn from_periodic_metric(g: &MetricField) -> Result<ComponentTotals> {
        if !g.grid().periodic().iter().all(|&p| p) {
            return Err(Error::Geometry(
                "a closed grid component needs a fully periodic grid".to_string(),
            ));
        }
        let len = g.grid().len();
        let mut vol = vec![0.0; len];
        let mut eh = vec![0.0; len];
        let mut r2 = vec![0.0; len];
        let mut ric2 = vec![0.0; len];
        let mut riem2 = vec![0.0; len];
        for_each_quadratic_invariant(g, |flat, inv| {
            vol[flat] = inv.sqrt_det;
            eh[flat] = inv.scalar * inv.sqrt_det;
            r2[flat] = inv.scalar_squared * inv.sqrt_det;
            ric2[flat] = inv.ricci_squared * inv.sqrt_det;
            riem2[flat] = inv.riemann_squared * inv.sqrt_det;
        })?;
        let total = |v: Vec<f64>| -> Result<f64> {
            Ok(quad::integrate(&ScalarField::new(g.grid().clone(), v)?, None))
        };
        ComponentTotals::new(
            g.dim(),
            total(vol)?,
            total(eh)?,
            total(r2)?,
            total(ric2)?,
            total(riem2)?,
        )
    }

    /// The quadratic part of the action total:
    /// `alpha * int R^2 + beta * int Ric:Ric + gamma * int Riem:Riem`.
    pub fn quadratic_total(&self, coeffs: &QuadraticCoefficients) -> f64 {
        coeffs.alpha * self.r_squared
            + coeffs.beta * self.ricci_squared
            + coeffs.gamma * self.riemann_squared
    }

    /// Integral of the Gauss-Bonnet combination.
    pub fn gauss_bonnet_total(&self) -> f64 {
        self.r_squared - 4.0 * self.ricci_squared + self.riemann_squared
    }
}

/// Action difference from attaching the component scaled by `eps` to any
/// base, for the extended action. The base cancels, and the component
/// contributes
/// `eps^{(n-4)/2} * (-2 eps^2 Lambda V + eps * A_R + A_2)`
/// where `A_R` is its curvature total and `A_2` its quadratic total: each
/// quadratic invariant loses two powers of `eps` against the volume factor's
/// `eps^{n/2}` where the curvature loses only one.
pub fn quadratic_disconnected_difference(
    coeffs: &QuadraticCoefficients,
    totals: &ComponentTotals,
    eps: f64,
) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!(
            "component scale must be positive (shrinking through zero reverses the signature), got {eps}"
        )));
    }
    let n = totals.dim as f64;
    let a_r = totals.einstein_hilbert;
    let a_2 = totals.quadratic_total(coeffs);
    Ok(eps.powf((n - 4.0) / 2.0)
        * (-2.0 * eps * eps * coeffs.lambda * totals.volume + eps * a_r + a_2))
}

/// Differences over a shrinking schedule, fitted to a power law. The fit is
/// clean only when a single term dominates everywhere; pass the tail of a
/// schedule to read off the leading exponent.
pub fn quadratic_difference_sweep(
    coeffs: &QuadraticCoefficients,
    totals: &ComponentTotals,
    schedule: &[f64],
) -> Result<SweepResult> {
    let mut diffs = Vec::with_capacity(schedule.len());
    for &eps in schedule {
        diffs.push(quadratic_disconnected_difference(coeffs, totals, eps)?);
    }
    fit_power_law(schedule, &diffs)
}

/// Schedule points used for limit extraction: the smallest entries, where
/// subleading terms are negligible.
const LIMIT_TAIL: usize = 8;

fn tail<'a>(schedule: &'a [f64], values: &'a [f64]) -> (&'a [f64], &'a [f64]) {
    let k = schedule.len().saturating_sub(LIMIT_TAIL);
    (&schedule[k..], &values[k..])
}

/// One-sided limit of the extended-action difference itself as the
/// component shrinks. In dimension four with a nonzero quadratic total the
/// limit is that total instead of zero: the action jumps.
pub fn quadratic_continuity_limit(
    coeffs: &QuadraticCoefficients,
    totals: &ComponentTotals,
    schedule: &[f64],
) -> Result<LimitEstimate> {
    let owned;
    let schedule = if schedule.is_empty() {
        owned = default_schedule();
        &owned
    } else {
        schedule
    };
    let mut diffs = Vec::with_capacity(schedule.len());
    for &eps in schedule {
        diffs.push(quadratic_disconnected_difference(coeffs, totals, eps)?);
    }
    let (se, sv) = tail(schedule, &diffs);
    one_sided_limit(se, sv)
}

/// Classification of the one-sided derivative together with the
/// corroborating numeric limit of the difference quotients.
#[derive(Debug, Clone)]
pub struct QuadraticDerivative {
    pub classification: Classification,
    pub estimate: LimitEstimate,
}

/// Classifies the one-sided derivative of the extended action under
/// attaching the scaled component, and corroborates the algebraic
/// classification with difference quotients over the schedule (default
/// schedule when empty).
///
/// The quotient is
/// `-2 Lambda V eps^{n/2-1} + A_R eps^{(n-4)/2} + A_2 eps^{(n-6)/2}`,
/// so with a nonzero quadratic total the derivative does not exist below
/// dimension six, equals the quadratic total in dimension six, and vanishes
/// above.
pub fn quadratic_topological_derivative(
    coeffs: &QuadraticCoefficients,
    totals: &ComponentTotals,
    schedule: &[f64],
) -> Result<QuadraticDerivative> {
    if !coeffs.has_quadratic_part() {
        return Err(Error::Config(
            "all three quadratic couplings vanish; use the plain curvature classification instead"
                .to_string(),
        ));
    }
    let owned;
    let schedule = if schedule.is_empty() {
        owned = default_schedule();
        &owned
    } else {
        schedule
    };
    let n = totals.dim as f64;
    let terms = [
        (-2.0 * coeffs.lambda * totals.volume, n / 2.0 - 1.0),
        (totals.einstein_hilbert, (n - 4.0) / 2.0),
        (totals.quadratic_total(coeffs), (n - 6.0) / 2.0),
    ];
    let floor = zero_floor(&[terms[0].0, terms[1].0, terms[2].0]);
    let leading = terms
        .iter()
        .filter(|(c, _)| c.abs() > floor)
        .map(|&(_, e)| e)
        .fold(f64::INFINITY, f64::min);
    let classification = if leading == f64::INFINITY || leading > 0.0 {
        Classification::Zero
    } else if leading < 0.0 {
        Classification::Undefined
    } else {
        let value = terms
            .iter()
            .filter(|(c, e)| c.abs() > floor && *e == 0.0)
            .map(|(c, _)| c)
            .sum();
        Classification::Value(value)
    };

    let mut quotients = Vec::with_capacity(schedule.len());
    for &eps in schedule {
        quotients.push(quadratic_disconnected_difference(coeffs, totals, eps)? / eps);
    }
    let (se, sv) = tail(schedule, &quotients);
    let estimate = one_sided_limit(se, sv)?;
    let scale = quotients.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let corroborated = match (&classification, &estimate.model) {
        (Classification::Undefined, FitModel::Divergent { .. }) => true,
        (Classification::Value(v), FitModel::Limit { value }) => {
            (value - v).abs() <= 1e-6 * v.abs().max(1.0)
        }
        (Classification::Zero, FitModel::Limit { value }) => {
            value.abs() <= 1e-8 * scale.max(1.0)
        }
        _ => false,
    };
    if !corroborated {
        return Err(Error::Inconsistent(format!(
            "dimension-{} classification {:?} is not corroborated by the quotient limit {:?}",
            totals.dim, classification, estimate.model
        )));
    }
    Ok(QuadraticDerivative { classification, estimate })
}

/// Factor relating the Gauss-Bonnet total of a closed four-manifold to its
/// Euler characteristic: `GB_total = 32 pi^2 chi`.
pub const GAUSS_BONNET_FACTOR: f64 = 32.0 * std::f64::consts::PI * std::f64::consts::PI;

/// Action difference from attaching the component scaled by `eps` when the
/// action is curvature plus `alpha` times the Gauss-Bonnet term, in
/// dimension four: `eps * A_R + alpha * GB_total`. The Gauss-Bonnet part is
/// scale invariant in dimension four, so it survives undiminished.
pub fn egb_disconnected_difference(
    alpha: f64,
    totals: &ComponentTotals,
    eps: f64,
) -> Result<f64> {
    if totals.dim != 4 {
        return Err(Error::Config(format!(
            "the Gauss-Bonnet attachment law is four-dimensional, got a dimension-{} component",
            totals.dim
        )));
    }
    if !(eps > 0.0) {
        return Err(Error::Domain(format!(
            "component scale must be positive, got {eps}"
        )));
    }
    Ok(eps * totals.einstein_hilbert + alpha * totals.gauss_bonnet_total())
}

/// Limit report for the Gauss-Bonnet attachment.
#[derive(Debug, Clone)]
pub struct EgbLimit {
    /// The one-sided limit `alpha * GB_total` of the action difference.
    pub limit: f64,
    /// The component's Gauss-Bonnet total.
    pub gauss_bonnet_total: f64,
    /// Numeric corroboration over the schedule tail.
    pub estimate: LimitEstimate,
}

/// One-sided limit of the Gauss-Bonnet-extended action difference as the
/// four-dimensional component shrinks: `alpha * GB_total`, nonzero exactly
/// when `alpha` and the component's Euler characteristic are both nonzero.
///
/// Cross-checks `GB_total = 32 pi^2 chi` against the supplied Euler
/// characteristic within `tol`; a violation means broken component metadata
/// or a broken contraction kernel and is reported as an inconsistency.
pub fn egb_disconnected_limit(
    alpha: f64,
    totals: &ComponentTotals,
    euler_characteristic: f64,
    tol: f64,
    schedule: &[f64],
) -> Result<EgbLimit> {
    let gb = totals.gauss_bonnet_total();
    let expected = GAUSS_BONNET_FACTOR * euler_characteristic;
    if (gb - expected).abs() > tol {
        return Err(Error::Inconsistent(format!(
            "Gauss-Bonnet total {gb} is not 32 pi^2 times the Euler characteristic {euler_characteristic} (expected {expected}, tolerance {tol})"
        )));
    }
    let owned;
    let schedule = if schedule.is_empty() {
        owned = default_schedule();
        &owned
    } else {
        schedule
    };
    let mut diffs = Vec::with_capacity(schedule.len());
    for &eps in schedule {
        diffs.push(egb_disconnected_difference(alpha, totals, eps)?);
    }
    let (se, sv) = tail(schedule, &diffs);
    let estimate = one_sided_limit(se, sv)?;
    let limit = alpha * gb;
    let observed = match estimate.model {
        FitModel::Limit { value } => value,
        ref other => {
            return Err(Error::Inconsistent(format!(
                "the Gauss-Bonnet attachment difference should have a finite limit, fit gave {other:?}"
            )))
        }
    };
    let scale = diffs.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if (observed - limit).abs() > 1e-8 * scale {
        return Err(Error::Inconsistent(format!(
            "limit {observed} from the sweep disagrees with alpha * GB_total = {limit}"
        )));
    }
    Ok(EgbLimit { limit, gauss_bonnet_total: gb, estimate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{flat, flat_torus, perturbed_flat, sphere_oracle, sphere_stereographic};
    use crate::curvature::curvature_tensors;
    use crate::grid::Grid;
    use crate::smallmat;

    const PI: f64 = std::f64::consts::PI;

    fn plain(alpha: f64, beta: f64, gamma: f64) -> QuadraticCoefficients {
        QuadraticCoefficients::new(0.0, alpha, beta, gamma).unwrap()
    }

    #[test]
    fn flat_charts_have_vanishing_invariants_and_cosmological_action() {
        let grid = Grid::uniform(3, -1.0, 1.0, 9, false).unwrap();
        let g = flat(&grid, 0).unwrap();
        let (r2, ric2, riem2) = quadratic_invariants(&g).unwrap();
        assert!(r2.max_abs() < 1e-25);
        assert!(ric2.max_abs() < 1e-25);
        assert!(riem2.max_abs() < 1e-25);
        assert!(gauss_bonnet_density(&g).unwrap().max_abs() < 1e-25);

        let zero = quadratic_action(&g, None, &plain(1.0, 2.0, 3.0)).unwrap();
        assert!(zero.abs() < 1e-13);

        let coeffs = QuadraticCoefficients::new(0.7, 1.0, 1.0, 1.0).unwrap();
        let a = quadratic_action(&g, None, &coeffs).unwrap();
        // volume of the [-1,1]^3 chart is 8
        assert!((a + 2.0 * 0.7 * 8.0).abs() < 1e-12, "action {a}");
    }

    /// Center-node error of the invariants and the Gauss-Bonnet density on
    /// the unit 4-sphere chart against the constant-curvature values.
    fn sphere4_errors(count: usize) -> [f64; 4] {
        let grid = Grid::uniform(4, -0.6, 0.6, count, false).unwrap();
        let g = sphere_stereographic(&grid, 1.0).unwrap();
        let center = grid.len() / 2;
        let (r2, ric2, riem2) = quadratic_invariants(&g).unwrap();
        let gb = gauss_bonnet_density(&g).unwrap();
        let got = [
            r2.values()[center],
            ric2.values()[center],
            riem2.values()[center],
            gb.values()[center],
        ];
        let exact = [144.0, 36.0, 24.0, 24.0];
        let mut err = [0.0; 4];
        for k in 0..4 {
            err[k] = (got[k] - exact[k]).abs() / exact[k];
        }
        err
    }

    #[test]
    fn four_sphere_invariants_match_the_constant_curvature_values() {
        let coarse = sphere4_errors(9);
        let fine = sphere4_errors(17);
        for k in 0..4 {
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
    fn sphere_totals_follow_the_closed_forms() {
        let totals = ComponentTotals::from_sphere(&sphere_oracle(4, 1.0).unwrap());
        // vol(S^4) = 8 pi^2 / 3, R = 12
        let a2 = totals.quadratic_total(&plain(1.0, 0.0, 0.0));
        assert!((a2 - 384.0 * PI * PI).abs() < 1e-9, "R^2 total {a2}");
        let gb = totals.gauss_bonnet_total();
        assert!((gb - 64.0 * PI * PI).abs() < 1e-9, "GB total {gb}");
        assert!((gb - GAUSS_BONNET_FACTOR * 2.0).abs() < 1e-9);
        assert!((totals.einstein_hilbert - 32.0 * PI * PI).abs() < 1e-9);
    }

    #[test]
    fn invariants_scale_with_the_inverse_square_of_the_metric_factor() {
        let grid = Grid::uniform(3, 0.0, 2.0 * PI, 9, true).unwrap();
        let g = perturbed_flat(&grid, 0, 0.2, 2, 11).unwrap();
        let (r2, ric2, riem2) = quadratic_invariants(&g).unwrap();
        for eps in [0.5, 0.09] {
            let scaled = g.scaled(eps).unwrap();
            let (s2, sic2, siem2) = quadratic_invariants(&scaled).unwrap();
            for (a, b) in [(&r2, &s2), (&ric2, &sic2), (&riem2, &siem2)] {
                for (va, vb) in a.values().iter().zip(b.values()) {
                    let expect = va / (eps * eps);
                    assert!(
                        (vb - expect).abs() <= 1e-12 * expect.abs().max(1e-12),
                        "scaled invariant {vb} vs {expect} at eps {eps}"
                    );
                }
            }
        }
    }

    #[test]
    fn four_dimensional_gauss_bonnet_total_is_scale_invariant() {
        let grid = Grid::uniform(4, 0.0, 2.0 * PI, 7, true).unwrap();
        let g = perturbed_flat(&grid, 0, 0.15, 2, 3).unwrap();
        let base = gauss_bonnet_action(&g, None).unwrap();
        assert!(base.abs() > 1e-8, "perturbed total {base} is degenerate");
        for eps in [0.5, 0.01] {
            let scaled = gauss_bonnet_action(&g.scaled(eps).unwrap(), None).unwrap();
            assert!(
                (scaled - base).abs() <= 1e-12 * base.abs(),
                "total {scaled} at eps {eps} vs {base}"
            );
        }
    }

    #[test]
    fn gauss_bonnet_total_of_a_perturbed_torus_vanishes_under_refinement() {
        // The four-dimensional Gauss-Bonnet total of a closed manifold is
        // purely topological; on a torus it is zero, so the quadrature total
        // is pure discretization error and must shrink at second order.
        let totals: Vec<f64> = [12usize, 24]
            .iter()
            .map(|&count| {
                let grid = Grid::uniform(4, 0.0, 2.0 * PI, count, true).unwrap();
                let g = perturbed_flat(&grid, 0, 0.1, 2, 3).unwrap();
                gauss_bonnet_action(&g, None).unwrap().abs()
            })
            .collect();
        assert!(
            totals[1] < 0.35 * totals[0],
            "totals {totals:?} do not shrink at second order"
        );
    }

    #[test]
    fn streamed_contractions_agree_with_the_materialized_tensor_route() {
        // Independent route: materialize the Christoffel-based tensors,
        // lower and raise indices per node, and contract. The two routes
        // differ only in how the connection derivative is discretized, so
        // the gap shrinks at second order.
        fn gap(count: usize) -> f64 {
            let grid = Grid::uniform(3, 0.0, 2.0 * PI, count, true).unwrap();
            let g = perturbed_flat(&grid, 0, 0.2, 2, 11).unwrap();
            let n = 3usize;
            let bundle = curvature_tensors(&g).unwrap();
            let (_, _, riem2) = quadratic_invariants(&g).unwrap();
            let mut worst = 0.0f64;
            for flat in 0..grid.len() {
                let mut gm = [0.0; 9];
                let mut pm = [0.0; 9];
                g.matrix_at(flat, &mut gm);
                smallmat::det_inverse(&gm, n, &mut pm);
                // lower the first index, then contract against the fully
                // raised version
                let mut low = [0.0f64; 81];
                let mut high = [0.0f64; 81];
                for r in 0..n {
                    for s in 0..n {
                        for m in 0..n {
                            for q in 0..n {
                                let mut lo = 0.0;
                                for a in 0..n {
                                    let lane = ((a * n + s) * n + m) * n + q;
                                    lo += gm[r * n + a] * bundle.riemann.lane(lane)[flat];
                                }
                                low[((r * n + s) * n + m) * n + q] = lo;
                            }
                        }
                    }
                }
                for r in 0..n {
                    for s in 0..n {
                        for m in 0..n {
                            for q in 0..n {
                                let mut hi = 0.0;
                                for a in 0..n {
                                    for b in 0..n {
                                        for c in 0..n {
                                            for d in 0..n {
                                                hi += pm[r * n + a]
                                                    * pm[s * n + b]
                                                    * pm[m * n + c]
                                                    * pm[q * n + d]
                                                    * low[((a * n + b) * n + c) * n + d];
                                            }
                                        }
                                    }
                                }
                                high[((r * n + s) * n + m) * n + q] = hi;
                            }
                        }
                    }
                }
                let mut total = 0.0;
                for e in 0..81 {
                    total += low[e] * high[e];
                }
                worst = worst.max((total - riem2.values()[flat]).abs());
            }
            worst
        }
        let coarse = gap(12);
        let fine = gap(24);
        assert!(
            fine < 0.35 * coarse,
            "route gap should shrink at second order: {coarse} -> {fine}"
        );
    }

    #[test]
    fn difference_reduces_to_the_curvature_law_without_quadratic_totals() {
        let totals = ComponentTotals::from_sphere(&sphere_oracle(5, 1.0).unwrap());
        let coeffs = plain(0.0, 0.0, 0.0);
        for eps in [0.3, 0.07, 1e-3] {
            let d = quadratic_disconnected_difference(&coeffs, &totals, eps).unwrap();
            let expect = eps.powf(1.5) * totals.einstein_hilbert;
            assert!(
                (d - expect).abs() <= 1e-13 * expect.abs(),
                "difference {d} vs {expect} at eps {eps}"
            );
        }
    }

    #[test]
    fn laurent_coefficients_are_recovered_from_the_differences() {
        let totals = ComponentTotals::from_sphere(&sphere_oracle(4, 1.0).unwrap());
        let coeffs = QuadraticCoefficients::new(0.3, 1.0, 0.5, 0.25).unwrap();
        let schedule = crate::asymptotics::geometric_schedule(0.5, 0.5, 12).unwrap();
        let n = totals.dim as f64;
        // Least-squares fit of difference * eps^{-(n-4)/2} against the basis
        // {eps^2, eps, 1}, with the columns rescaled to unit maximum and
        // orthogonalized (the raw normal equations span eight decades and
        // lose half the mantissa); the coefficients must be exactly the
        // cosmological, curvature, and quadratic totals.
        let e0 = schedule[0];
        let m = schedule.len();
        let mut cols = vec![vec![0.0f64; m]; 3];
        let mut d = vec![0.0f64; m];
        for (k, &eps) in schedule.iter().enumerate() {
            let u = eps / e0;
            cols[0][k] = u * u;
            cols[1][k] = u;
            cols[2][k] = 1.0;
            d[k] = quadratic_disconnected_difference(&coeffs, &totals, eps).unwrap()
                * eps.powf(-(n - 4.0) / 2.0);
        }
        // modified Gram-Schmidt QR, then back substitution
        let mut r = [0.0f64; 9];
        for j in 0..3 {
            for i in 0..j {
                let mut dot = 0.0;
                for k in 0..m {
                    dot += cols[i][k] * cols[j][k];
                }
                r[i * 3 + j] = dot;
                for k in 0..m {
                    cols[j][k] -= dot * cols[i][k];
                }
            }
            let norm = cols[j].iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(norm > 1e-12, "basis column {j} collapsed");
            r[j * 3 + j] = norm;
            for v in cols[j].iter_mut() {
                *v /= norm;
            }
        }
        let mut y = [0.0f64; 3];
        for (i, yi) in y.iter_mut().enumerate() {
            for k in 0..m {
                *yi += cols[i][k] * d[k];
            }
        }
        let mut sol = [0.0f64; 3];
        for i in (0..3).rev() {
            let mut v = y[i];
            for j in i + 1..3 {
                v -= r[i * 3 + j] * sol[j];
            }
            sol[i] = v / r[i * 3 + i];
        }
        sol[0] /= e0 * e0;
        sol[1] /= e0;
        let expect = [
            -2.0 * coeffs.lambda * totals.volume,
            totals.einstein_hilbert,
            totals.quadratic_total(&coeffs),
        ];
        for k in 0..3 {
            assert!(
                (sol[k] - expect[k]).abs() <= 1e-10 * expect[k].abs().max(1.0),
                "coefficient {k}: {} vs {}",
                sol[k],
                expect[k]
            );
        }
    }

    #[test]
    fn critical_exponent_shifts_from_the_curvature_to_the_quadratic_law() {
        let totals = ComponentTotals::from_sphere(&sphere_oracle(5, 1.0).unwrap());
        let schedule = default_schedule();
        let tail = &schedule[schedule.len() - 8..];
        // quadratic coupling on: leading exponent (n-4)/2
        let quad_fit = quadratic_difference_sweep(&plain(1.0, 0.0, 0.0), &totals, tail).unwrap();
        match quad_fit.model {
            FitModel::PowerLaw { exponent, .. } => {
                assert!((exponent - 0.5).abs() < 1e-6, "quadratic exponent {exponent}")
            }
            ref other => panic!("expected a power law, got {other:?}"),
        }
        // quadratic coupling off: the curvature exponent (n-2)/2
        let eh_fit = quadratic_difference_sweep(&plain(0.0, 0.0, 0.0), &totals, tail).unwrap();
        match eh_fit.model {
            FitModel::PowerLaw { exponent, .. } => {
                assert!((exponent - 1.5).abs() < 1e-9, "curvature exponent {exponent}")
            }
            ref other => panic!("expected a power law, got {other:?}"),
        }
    }

    #[test]
    fn classification_moves_the_critical_dimension_to_six() {
        let coeffs = plain(1.0, 0.0, 0.0);

        let five = ComponentTotals::from_sphere(&sphere_oracle(5, 1.0).unwrap());
        let d5 = quadratic_topological_derivative(&coeffs, &five, &[]).unwrap();
        assert_eq!(d5.classification, Classification::Undefined);

        let six = ComponentTotals::from_sphere(&sphere_oracle(6, 1.0).unwrap());
        let d6 = quadratic_topological_derivative(&coeffs, &six, &[]).unwrap();
        match d6.classification {
            Classification::Value(v) => {
                let expect = 960.0 * PI * PI * PI;
                assert!((v - expect).abs() <= 1e-6 * expect, "value {v} vs {expect}");
            }
            ref other => panic!("expected a finite value, got {other:?}"),
        }

        // no dimension-seven sphere closed form in the catalog; a synthetic
        // component with nonzero totals exercises the same algebra
        let seven = ComponentTotals::new(7, 2.0, 5.0, 25.0, 11.0, 7.0).unwrap();
        let d7 = quadratic_topological_derivative(&coeffs, &seven, &[]).unwrap();
        assert_eq!(d7.classification, Classification::Zero);
    }

    #[test]
    fn four_dimensional_differences_jump_by_the_quadratic_total() {
        let totals = ComponentTotals::from_sphere(&sphere_oracle(4, 1.0).unwrap());
        let est = quadratic_continuity_limit(&plain(1.0, 0.0, 0.0), &totals, &[]).unwrap();
        match est.model {
            FitModel::Limit { value } => {
                let expect = 384.0 * PI * PI;
                assert!((value - expect).abs() <= 1e-6 * expect, "jump {value}");
                assert!(value.abs() > 1e-6, "jump was not detected");
            }
            ref other => panic!("expected a finite jump, got {other:?}"),
        }
    }

    #[test]
    fn gauss_bonnet_attachment_jumps_by_the_euler_term() {
        let totals = ComponentTotals::from_sphere(&sphere_oracle(4, 1.0).unwrap());
        let alpha = 2.5;
        let report = egb_disconnected_limit(alpha, &totals, 2.0, 1e-9, &[]).unwrap();
        let expect = alpha * 64.0 * PI * PI;
        assert!((report.limit - expect).abs() <= 1e-9 * expect);
        assert!(!report.estimate.inconclusive);

        // wrong Euler characteristic metadata is caught
        let err = egb_disconnected_limit(alpha, &totals, 0.0, 1e-9, &[]).unwrap_err();
        assert!(matches!(err, Error::Inconsistent(_)), "got {err:?}");

        // alpha = 0 reduces to the continuous curvature behavior
        let report = egb_disconnected_limit(0.0, &totals, 2.0, 1e-9, &[]).unwrap();
        assert_eq!(report.limit, 0.0);
    }

    #[test]
    fn flat_torus_gauss_bonnet_attachment_is_continuous() {
        let grid = Grid::uniform(4, 0.0, 2.0 * PI, 5, true).unwrap();
        let torus = flat_torus(&grid).unwrap();
        let totals = ComponentTotals::from_periodic_metric(&torus).unwrap();
        assert!(totals.gauss_bonnet_total().abs() < 1e-12);
        let report = egb_disconnected_limit(1.5, &totals, 0.0, 1e-9, &[]).unwrap();
        assert!(report.limit.abs() < 1e-12);
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let totals = ComponentTotals::from_sphere(&sphere_oracle(4, 1.0).unwrap());
        assert!(matches!(
            quadratic_disconnected_difference(&plain(1.0, 0.0, 0.0), &totals, 0.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            quadratic_topological_derivative(&plain(0.0, 0.0, 0.0), &totals, &[]),
            Err(Error::Config(_))
        ));
        assert!(QuadraticCoefficients::new(f64::NAN, 0.0, 0.0, 1.0).is_err());
        assert!(ComponentTotals::new(1, 1.0, 0.0, 0.0, 0.0, 0.0).is_err());
        assert!(ComponentTotals::new(4, -1.0, 0.0, 0.0, 0.0, 0.0).is_err());
        let five = ComponentTotals::from_sphere(&sphere_oracle(5, 1.0).unwrap());
        assert!(matches!(
            egb_disconnected_difference(1.0, &five, 0.1),
            Err(Error::Config(_))
        ));
    }
}
