//! Deformations that attach a scaled disjoint closed component to a base
//! chart: action differences, one-sided difference quotients, and the
//! resulting derivative classification by dimension.
//!
//! The base chart cancels exactly in every difference computed here (the
//! deformed action is the base action plus the scaled component action), so
//! a configuration carries only the component data. Attaching a component
//! scaled by `eps` multiplies its action total by `eps^((n-2)/2)`: the
//! curvature density contracts two inverse metrics against two derivatives
//! of the metric and carries a volume factor, so each of the n metric
//! directions contributes `sqrt(eps)` and the curvature removes one full
//! power of `eps`.

use crate::asymptotics::{
    fit_power_law, geometric_schedule, one_sided_limit, zero_floor, FitModel, LimitEstimate,
    SweepResult,
};
use crate::curvature::action;
use crate::error::{Error, Result};
use crate::field::MetricField;

/// Component data for a disjoint deformation: the dimension of the closed
/// component and its total curvature action.
#[derive(Debug, Clone)]
pub struct DisconnectedConfig {
    dim: usize,
    component_action: f64,
    /// Kept when the component came from a periodic grid so the scaled
    /// action can also be evaluated by direct quadrature.
    component_metric: Option<MetricField>,
}

impl DisconnectedConfig {
    /// Component described by a closed-form action total.
    pub fn from_oracle(dim: usize, component_action: f64) -> Result<DisconnectedConfig> {
        if dim < 2 {
            return Err(Error::Config(format!(
                "component dimension must be at least 2, got {dim}"
            )));
        }
        if !component_action.is_finite() {
            return Err(Error::Config(
                "component action total must be finite".to_string(),
            ));
        }
        Ok(DisconnectedConfig { dim, component_action, component_metric: None })
    }

    /// Component realized as a metric on a fully periodic grid; its action
    /// total is computed by quadrature over the full torus.
    pub fn from_periodic_metric(metric: &MetricField) -> Result<DisconnectedConfig> {
        if !metric.grid().periodic().iter().all(|&p| p) {
            return Err(Error::Geometry(
                "a closed grid component needs a fully periodic grid".to_string(),
            ));
        }
        let total = action(metric, None)?;
        Ok(DisconnectedConfig {
            dim: metric.dim(),
            component_action: total,
            component_metric: Some(metric.clone()),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Total curvature action of the unscaled component.
    pub fn component_action(&self) -> f64 {
        self.component_action
    }

    fn scaling_exponent(&self) -> f64 {
        (self.dim as f64 - 2.0) / 2.0
    }
}

/// Default shrinking schedule: 24 geometric halvings starting at 0.1.
pub fn default_schedule() -> Vec<f64> {
    geometric_schedule(0.1, 0.5, 24).expect("static schedule parameters are valid")
}

/// Action difference produced by attaching the component scaled by `eps`:
/// `eps^((n-2)/2)` times the component action total.
///
/// Grid-backed components are evaluated by direct quadrature of the scaled
/// metric instead, which must agree with the closed form to rounding.
pub fn disconnected_action_difference(cfg: &DisconnectedConfig, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!(
            "component scale must be positive (shrinking through zero reverses the signature), got {eps}"
        )));
    }
    match &cfg.component_metric {
        Some(g) => action(&g.scaled(eps)?, None),
        None => Ok(eps.powf(cfg.scaling_exponent()) * cfg.component_action),
    }
}

/// Difference quotients `(S(eps) - S(0)) / eps` over a shrinking schedule,
/// fitted to a power law. The exact quotient is
/// `eps^((n-4)/2) * component_action`.
pub fn disconnected_quotient_sweep(
    cfg: &DisconnectedConfig,
    schedule: &[f64],
) -> Result<SweepResult> {
    let mut quotients = Vec::with_capacity(schedule.len());
    for &eps in schedule {
        quotients.push(disconnected_action_difference(cfg, eps)? / eps);
    }
    fit_power_law(schedule, &quotients)
}

/// One-sided limit of the action difference itself. Components of dimension
/// two with nonzero action produce a jump: the difference tends to the
/// component action instead of zero, and the returned limit reports it.
pub fn continuity_limit(cfg: &DisconnectedConfig, schedule: &[f64]) -> Result<LimitEstimate> {
    let mut diffs = Vec::with_capacity(schedule.len());
    for &eps in schedule {
        diffs.push(disconnected_action_difference(cfg, eps)?);
    }
    one_sided_limit(schedule, &diffs)
}

/// Derivative classification for a disjoint deformation.
#[derive(Debug, Clone, PartialEq)]
pub enum Classification {
    /// The difference quotients diverge; no one-sided derivative exists.
    Undefined,
    /// Finite nonzero one-sided derivative (the component action itself).
    Value(f64),
    /// The one-sided derivative exists and vanishes.
    Zero,
}

/// Classification together with the corroborating quotient sweep.
#[derive(Debug, Clone)]
pub struct DisconnectedDerivative {
    pub classification: Classification,
    pub sweep: SweepResult,
}

/// Tolerance on the fitted exponent when corroborating a classification.
pub const EXPONENT_TOL: f64 = 1e-6;

/// Classifies the one-sided derivative of the action under a disjoint
/// deformation and corroborates the algebraic classification with a numeric
/// quotient sweep over the given schedule (default schedule when empty).
///
/// A nonzero component action gives: no derivative below dimension four,
/// the component action itself in dimension four, and zero above. A zero
/// component action gives zero in every dimension.
pub fn topological_derivative_disconnected(
    cfg: &DisconnectedConfig,
    schedule: &[f64],
) -> Result<DisconnectedDerivative> {
    let owned;
    let schedule = if schedule.is_empty() {
        owned = default_schedule();
        &owned
    } else {
        schedule
    };
    let a = cfg.component_action;
    let vanishing = a.abs() < zero_floor(&[a]);
    let classification = if vanishing {
        Classification::Zero
    } else if cfg.dim < 4 {
        Classification::Undefined
    } else if cfg.dim == 4 {
        Classification::Value(a)
    } else {
        Classification::Zero
    };

    let sweep = disconnected_quotient_sweep(cfg, schedule)?;
    let theory = (cfg.dim as f64 - 4.0) / 2.0;
    let corroborated = match (&classification, &sweep.model) {
        (Classification::Zero, FitModel::Zero) => true,
        (Classification::Undefined, FitModel::PowerLaw { exponent, .. }) => {
            *exponent < 0.0 && (exponent - theory).abs() < EXPONENT_TOL
        }
        (Classification::Value(v), FitModel::PowerLaw { coefficient, exponent }) => {
            exponent.abs() < EXPONENT_TOL
                && (coefficient - v).abs() <= 1e-8 * v.abs().max(1.0)
        }
        (Classification::Zero, FitModel::PowerLaw { exponent, .. }) => {
            *exponent > 0.0 && (exponent - theory).abs() < EXPONENT_TOL
        }
        _ => false,
    };
    if !corroborated {
        return Err(Error::Inconsistent(format!(
            "dimension-{} classification {:?} is not corroborated by the sweep model {:?}",
            cfg.dim, classification, sweep.model
        )));
    }
    Ok(DisconnectedDerivative { classification, sweep })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{flat_torus, perturbed_flat, sphere_oracle};
    use crate::grid::Grid;

    const PI: f64 = std::f64::consts::PI;

    fn sphere_cfg(dim: usize) -> DisconnectedConfig {
        let oracle = sphere_oracle(dim, 1.0).unwrap();
        DisconnectedConfig::from_oracle(dim, oracle.total_action).unwrap()
    }

    #[test]
    fn unit_scale_reproduces_the_component_action() {
        let cfg = sphere_cfg(4);
        let d = disconnected_action_difference(&cfg, 1.0).unwrap();
        assert!((d - 32.0 * PI * PI).abs() < 1e-12);

        let small = disconnected_action_difference(&cfg, 0.01).unwrap();
        assert!((small - 0.32 * PI * PI).abs() < 1e-12);
        assert!((small - 3.158).abs() < 2e-3);
    }

    #[test]
    fn zero_action_components_contribute_nothing() {
        let grid = Grid::uniform(2, 0.0, 1.0, 8, true).unwrap();
        let torus = flat_torus(&grid).unwrap();
        let cfg = DisconnectedConfig::from_periodic_metric(&torus).unwrap();
        for &eps in &[1.0, 0.1, 1e-3] {
            let d = disconnected_action_difference(&cfg, eps).unwrap();
            assert!(d.abs() < 1e-13, "difference {d} at eps {eps}");
        }
        let derivative = topological_derivative_disconnected(&cfg, &[]).unwrap();
        assert_eq!(derivative.classification, Classification::Zero);
        assert_eq!(derivative.sweep.model, FitModel::Zero);
    }

    #[test]
    fn nonpositive_scales_are_rejected() {
        let cfg = sphere_cfg(4);
        assert!(matches!(
            disconnected_action_difference(&cfg, 0.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            disconnected_action_difference(&cfg, -0.5),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn grid_quadrature_agrees_with_the_scaling_route() {
        let grid = Grid::uniform(3, 0.0, 2.0 * PI, 9, true).unwrap();
        let g = perturbed_flat(&grid, 0, 0.25, 2, 5).unwrap();
        let cfg = DisconnectedConfig::from_periodic_metric(&g).unwrap();
        let a = cfg.component_action();
        assert!(a.abs() > 1e-6, "perturbed torus action {a} is degenerate");
        for &eps in &geometric_schedule(0.1, 0.5, 8).unwrap() {
            let direct = disconnected_action_difference(&cfg, eps).unwrap();
            let scaled = eps.sqrt() * a;
            assert!(
                (direct - scaled).abs() <= 1e-12 * scaled.abs(),
                "direct {direct} vs scaled {scaled} at eps {eps}"
            );
        }
    }

    #[test]
    fn quotients_follow_an_exactly_geometric_sequence() {
        for dim in [3usize, 4, 5] {
            let cfg = sphere_cfg(dim);
            let schedule = default_schedule();
            let sweep = disconnected_quotient_sweep(&cfg, &schedule).unwrap();
            let theory = (dim as f64 - 4.0) / 2.0;
            for k in 0..schedule.len() - 1 {
                let ratio = sweep.values[k + 1] / sweep.values[k];
                let expect = (schedule[k + 1] / schedule[k]).powf(theory);
                assert!(
                    (ratio - expect).abs() <= 1e-10 * expect.abs(),
                    "dim {dim}: quotient ratio {ratio} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn three_sphere_component_leaves_the_action_nondifferentiable() {
        let cfg = sphere_cfg(3);
        let derivative = topological_derivative_disconnected(&cfg, &[]).unwrap();
        assert_eq!(derivative.classification, Classification::Undefined);
        match derivative.sweep.model {
            FitModel::PowerLaw { coefficient, exponent } => {
                assert!((exponent + 0.5).abs() < 1e-9, "exponent {exponent}");
                assert!((coefficient - 12.0 * PI * PI).abs() < 1e-9 * 12.0 * PI * PI);
            }
            ref other => panic!("expected a power law, got {other:?}"),
        }
    }

    #[test]
    fn four_sphere_component_gives_its_action_as_the_derivative() {
        let cfg = sphere_cfg(4);
        let derivative = topological_derivative_disconnected(&cfg, &[]).unwrap();
        match derivative.classification {
            Classification::Value(v) => {
                assert!((v - 32.0 * PI * PI).abs() < 1e-6, "value {v}");
            }
            ref other => panic!("expected a finite value, got {other:?}"),
        }
    }

    #[test]
    fn five_sphere_component_has_a_vanishing_derivative() {
        let cfg = sphere_cfg(5);
        let derivative = topological_derivative_disconnected(&cfg, &[]).unwrap();
        assert_eq!(derivative.classification, Classification::Zero);
        match derivative.sweep.model {
            FitModel::PowerLaw { exponent, .. } => {
                assert!((exponent - 0.5).abs() < 1e-9, "exponent {exponent}");
            }
            ref other => panic!("expected a power law, got {other:?}"),
        }
    }

    #[test]
    fn differences_vanish_above_dimension_two_but_jump_at_two() {
        let schedule = default_schedule();
        for dim in [3usize, 4, 5] {
            let cfg = sphere_cfg(dim);
            let est = continuity_limit(&cfg, &schedule).unwrap();
            assert_eq!(est.model, FitModel::Limit { value: 0.0 }, "dim {dim}");
        }
        // A unit two-sphere carries action total 8*pi; shrinking it changes
        // nothing, so the difference jumps instead of vanishing.
        let cfg = sphere_cfg(2);
        let est = continuity_limit(&cfg, &schedule).unwrap();
        match est.model {
            FitModel::Limit { value } => {
                assert!((value - 8.0 * PI).abs() < 1e-10, "jump {value}");
                assert!(value.abs() > 1e-6, "jump was not detected");
            }
            other => panic!("expected a finite jump, got {other:?}"),
        }
    }

    #[test]
    fn invalid_configurations_are_rejected() {
        assert!(DisconnectedConfig::from_oracle(1, 1.0).is_err());
        assert!(DisconnectedConfig::from_oracle(4, f64::INFINITY).is_err());
        let bounded = Grid::uniform(2, 0.0, 1.0, 8, false).unwrap();
        let g = crate::catalog::flat(&bounded, 0).unwrap();
        assert!(matches!(
            DisconnectedConfig::from_periodic_metric(&g),
            Err(Error::Geometry(_))
        ));
    }
}
