//! Executes a resolved scenario and writes its artifacts: a CSV of the
//! primary sweep quantities, a versioned JSON summary with the fits,
//! classifications, and built-in assertion outcomes, and a TOML echo of the
//! fully resolved configuration.
//!
//! Exit status: 0 when every built-in assertion passes, 1 when an assertion
//! fails or a module reports an error (the error is serialized into the
//! summary), 2 when the environment itself fails (unwritable output
//! directory). Identical scenario and tool version give bit-identical
//! artifacts: every pipeline is sequential, every reduction has a fixed
//! order, and no timestamps or paths enter the outputs. On a module error
//! the echo and summary are still written; the CSV is only written when the
//! computation completes.

use std::fs;
use std::path::Path;

use serde_json::{json, Value as Json};

use topovar::asymptotics::{geometric_schedule, FitModel, LimitEstimate, SweepResult};
use topovar::blowup::{adm_action, blowup_sweep_and_fit, default_blowup_schedule, CollapsingFamily};
use topovar::catalog::{bump_perturbation, sphere_oracle};
use topovar::curvature::{
    action, einstein_pairing, geometric_functional_derivative, scalar_christoffel_field,
    scalar_direct_field,
};
use topovar::disconnected::{
    continuity_limit, default_schedule, disconnected_action_difference,
    topological_derivative_disconnected, Classification, DisconnectedConfig,
};
use topovar::error::Error;
use topovar::higher_order::{
    egb_disconnected_difference, egb_disconnected_limit, quadratic_disconnected_difference,
    quadratic_topological_derivative, ComponentTotals, QuadraticCoefficients,
    GAUSS_BONNET_FACTOR,
};
use topovar::io::read_tensor_path;
use topovar::quad::Mask;
use topovar::surgery::{
    ball_chart, default_epsilon_max, default_surgery_schedule, kappa_at, quintic_cutoff,
    topological_derivative_connected, SurgeryTemplate, BALL_HALF_WIDTH,
};
use topovar::{Grid, MetricField};

use crate::scenario::{
    echo_toml, ComponentInput, ExpectSpec, GridSpec, MetricSource, MetricSpec, Payload,
    ResolvedScenario, RuntimeEcho, ScheduleSpec,
};

/// Version stamp of the summary layout; bump when fields change meaning.
pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

struct Assertion {
    name: &'static str,
    passed: bool,
    detail: String,
}

impl Assertion {
    fn check(name: &'static str, passed: bool, detail: String) -> Assertion {
        Assertion { name, passed, detail }
    }
}

struct Outcome {
    csv: String,
    assertions: Vec<Assertion>,
    results: Json,
}

type PipelineResult = Result<Outcome, Error>;

/// A CSV float cell: scientific notation with 17 significant digits, enough
/// to round-trip any f64 exactly.
fn csv_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn model_json(m: &FitModel) -> Json {
    match m {
        FitModel::Zero => json!({ "model": "zero" }),
        FitModel::PowerLaw { coefficient, exponent } => json!({
            "model": "power_law",
            "coefficient": coefficient,
            "exponent": exponent,
        }),
        FitModel::Laurent { c_minus, c_plus } => json!({
            "model": "laurent",
            "pole": c_minus,
            "linear": c_plus,
        }),
        FitModel::Limit { value } => json!({ "model": "limit", "value": value }),
        FitModel::Divergent { exponent } => json!({
            "model": "divergent",
            "exponent": exponent,
        }),
    }
}

fn sweep_json(s: &SweepResult) -> Json {
    json!({ "fit": model_json(&s.model), "residual": s.residual })
}

fn estimate_json(e: &LimitEstimate) -> Json {
    json!({
        "fit": model_json(&e.model),
        "residual": e.residual,
        "inconclusive": e.inconclusive,
    })
}

fn classification_json(c: &Classification) -> Json {
    match c {
        Classification::Undefined => json!({ "kind": "Undefined" }),
        Classification::Value(v) => json!({ "kind": "Value", "value": v }),
        Classification::Zero => json!({ "kind": "Zero" }),
    }
}

fn classification_name(c: &Classification) -> &'static str {
    match c {
        Classification::Undefined => "Undefined",
        Classification::Value(_) => "Value",
        Classification::Zero => "Zero",
    }
}

fn build_grid(gs: &GridSpec) -> Result<Grid, Error> {
    let bounds: Vec<(f64, f64)> = gs.lo.iter().zip(&gs.hi).map(|(&a, &b)| (a, b)).collect();
    Grid::new(&bounds, &gs.count, &gs.periodic)
}

fn build_metric(ms: &MetricSpec) -> Result<MetricField, Error> {
    match &ms.source {
        MetricSource::Family { family, .. } => {
            let gs = ms.grid.as_ref().ok_or_else(|| {
                Error::Config("family metric resolved without a grid".to_string())
            })?;
            family.build(&build_grid(gs)?)
        }
        MetricSource::File { path, signature_negative, det_floor } => {
            let t = read_tensor_path(path)?;
            let dim = t.grid().dim();
            if *signature_negative > dim {
                return Err(Error::Config(format!(
                    "signature_negative {signature_negative} exceeds the file metric dimension {dim}"
                )));
            }
            MetricField::from_tensor(&t, (*signature_negative, dim - *signature_negative), *det_floor)
        }
    }
}

fn build_mask(mask: &Option<crate::scenario::MaskSpec>) -> Option<Mask> {
    mask.as_ref()
        .map(|m| Mask::closed_box(m.lo.clone(), m.hi.clone()))
}

fn resolve_schedule(
    spec: &Option<ScheduleSpec>,
    default: impl FnOnce() -> Result<Vec<f64>, Error>,
) -> Result<Vec<f64>, Error> {
    match spec {
        Some(s) => geometric_schedule(s.first, s.ratio, s.count),
        None => default(),
    }
}

/// Asserts the classification and, when requested, the derivative value
/// against the [expect] block.
fn expect_assertions(
    expect: &Option<ExpectSpec>,
    actual: &Classification,
    assertions: &mut Vec<Assertion>,
) {
    let Some(e) = expect else { return };
    if let Some(expected) = e.classification {
        let got = classification_name(actual);
        assertions.push(Assertion::check(
            "classification_matches",
            got == expected.name(),
            format!("expected {}, got {}", expected.name(), got),
        ));
    }
    if let Some(expected) = e.value {
        let (passed, detail) = match actual {
            Classification::Value(v) => {
                let gap = (v - expected).abs() / expected.abs().max(1.0);
                (
                    gap <= e.value_tolerance,
                    format!(
                        "expected {expected}, got {v} (relative gap {gap:e}, tolerance {:e})",
                        e.value_tolerance
                    ),
                )
            }
            other => (
                false,
                format!(
                    "expected the value {expected}, but the derivative is {}",
                    classification_name(other)
                ),
            ),
        };
        assertions.push(Assertion::check("value_matches", passed, detail));
    }
}

fn curvature_check(
    metric: &MetricSpec,
    mask: &Option<crate::scenario::MaskSpec>,
    tol: &crate::scenario::CurvatureTolerances,
) -> PipelineResult {
    let g = build_metric(metric)?;
    let mask = build_mask(mask);
    let direct = scalar_direct_field(&g)?;
    let christoffel = scalar_christoffel_field(&g)?;
    let reference: Option<Vec<f64>> = match &metric.source {
        MetricSource::Family { family, .. } => {
            let grid = g.grid();
            let mut x = vec![0.0; grid.dim()];
            let mut vals = Vec::with_capacity(grid.len());
            let mut available = true;
            for flat in 0..grid.len() {
                grid.coord(flat, &mut x);
                match family.scalar_curvature_at(&x) {
                    Some(r) => vals.push(r),
                    None => {
                        available = false;
                        break;
                    }
                }
            }
            available.then_some(vals)
        }
        MetricSource::File { .. } => None,
    };

    let grid = g.grid();
    let n = grid.dim();
    let mut csv = String::new();
    for a in 0..n {
        csv.push_str(&format!("x{a},"));
    }
    csv.push_str("scalar_direct,scalar_christoffel");
    if reference.is_some() {
        csv.push_str(",reference");
    }
    csv.push('\n');
    let mut x = vec![0.0; n];
    for flat in 0..grid.len() {
        grid.coord(flat, &mut x);
        for &xi in &x {
            csv.push_str(&csv_f64(xi));
            csv.push(',');
        }
        csv.push_str(&csv_f64(direct.values()[flat]));
        csv.push(',');
        csv.push_str(&csv_f64(christoffel.values()[flat]));
        if let Some(r) = &reference {
            csv.push(',');
            csv.push_str(&csv_f64(r[flat]));
        }
        csv.push('\n');
    }

    let scale = direct
        .values()
        .iter()
        .fold(1.0f64, |m, v| m.max(v.abs()));
    let route_gap = direct
        .values()
        .iter()
        .zip(christoffel.values())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        / scale;
    let reference_gap = reference.as_ref().map(|r| {
        let rscale = r.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        direct
            .values()
            .iter()
            .zip(r)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
            / rscale
    });

    let mut assertions = vec![Assertion::check(
        "routes_agree",
        route_gap <= tol.route_gap,
        format!(
            "largest relative gap between the two scalar-curvature routes is {route_gap:e} (tolerance {:e})",
            tol.route_gap
        ),
    )];
    if let Some(gap) = reference_gap {
        assertions.push(Assertion::check(
            "matches_reference",
            gap <= tol.reference_error,
            format!(
                "largest relative error against the closed form is {gap:e} (tolerance {:e})",
                tol.reference_error
            ),
        ));
    }

    Ok(Outcome {
        csv,
        assertions,
        results: json!({
            "nodes": grid.len(),
            "route_gap": route_gap,
            "reference_gap": reference_gap,
        }),
    })
}

fn geometric_derivative(
    metric: &MetricSpec,
    mask: &Option<crate::scenario::MaskSpec>,
    variation: &crate::scenario::VariationSpec,
    tol: &crate::scenario::DerivativeTolerances,
) -> PipelineResult {
    let g = build_metric(metric)?;
    let mask = build_mask(mask);
    let h = bump_perturbation(
        g.grid(),
        &variation.center,
        variation.radius,
        variation.amplitude,
        &variation.pattern,
    )?;
    let exact = geometric_functional_derivative(&g, &h, mask.as_ref())?;
    let pairing = einstein_pairing(&g, &h, mask.as_ref())?;

    let mut csv = String::from("step,central_difference,exact,relative_gap\n");
    let mut best_gap = f64::INFINITY;
    for &t in &variation.steps {
        let plus = action(&g.add_scaled(&h, t, None)?, mask.as_ref())?;
        let minus = action(&g.add_scaled(&h, -t, None)?, mask.as_ref())?;
        let central = (plus - minus) / (2.0 * t);
        let gap = rel_gap(central, exact);
        best_gap = best_gap.min(gap);
        csv.push_str(&format!(
            "{},{},{},{}\n",
            csv_f64(t),
            csv_f64(central),
            csv_f64(exact),
            csv_f64(gap)
        ));
    }
    let pairing_gap = rel_gap(pairing, exact);

    let assertions = vec![
        Assertion::check(
            "central_difference_matches",
            best_gap <= tol.derivative_gap,
            format!(
                "best relative gap between the central difference and the exact derivative is {best_gap:e} (tolerance {:e})",
                tol.derivative_gap
            ),
        ),
        Assertion::check(
            "pairing_agrees",
            pairing_gap <= tol.pairing_gap,
            format!(
                "relative gap between the Einstein-tensor pairing and the exact derivative is {pairing_gap:e} (tolerance {:e})",
                tol.pairing_gap
            ),
        ),
    ];

    Ok(Outcome {
        csv,
        assertions,
        results: json!({
            "exact": exact,
            "pairing": pairing,
            "best_central_difference_gap": best_gap,
            "pairing_gap": pairing_gap,
        }),
    })
}

/// Builds the disconnected-deformation input from the component description.
fn disconnected_config(component: &ComponentInput) -> Result<DisconnectedConfig, Error> {
    match component {
        ComponentInput::SphereOracle { dim, radius } => {
            let oracle = sphere_oracle(*dim, *radius)?;
            DisconnectedConfig::from_oracle(*dim, oracle.total_action)
        }
        ComponentInput::PeriodicMetric { metric } => {
            let g = build_metric(metric)?;
            DisconnectedConfig::from_periodic_metric(&g)
        }
        ComponentInput::ExplicitAction { dim, action } => {
            DisconnectedConfig::from_oracle(*dim, *action)
        }
        ComponentInput::ExplicitTotals { .. } => Err(Error::Config(
            "explicit invariant totals describe a quadratic component, not a curvature-only one"
                .to_string(),
        )),
    }
}

fn component_totals(component: &ComponentInput) -> Result<ComponentTotals, Error> {
    match component {
        ComponentInput::SphereOracle { dim, radius } => {
            Ok(ComponentTotals::from_sphere(&sphere_oracle(*dim, *radius)?))
        }
        ComponentInput::PeriodicMetric { metric } => {
            ComponentTotals::from_periodic_metric(&build_metric(metric)?)
        }
        ComponentInput::ExplicitTotals {
            dim,
            volume,
            einstein_hilbert,
            r_squared,
            ricci_squared,
            riemann_squared,
        } => ComponentTotals::new(
            *dim,
            *volume,
            *einstein_hilbert,
            *r_squared,
            *ricci_squared,
            *riemann_squared,
        ),
        ComponentInput::ExplicitAction { .. } => Err(Error::Config(
            "a bare action total cannot feed the quadratic invariants; give the full totals"
                .to_string(),
        )),
    }
}

fn disconnected_sweep(
    component: &ComponentInput,
    schedule: &Option<ScheduleSpec>,
    expect: &Option<ExpectSpec>,
    rt: &mut RuntimeEcho,
) -> PipelineResult {
    let cfg = disconnected_config(component)?;
    let schedule = resolve_schedule(schedule, || Ok(default_schedule()))?;
    rt.epsilons = Some(schedule.clone());

    let derivative = topological_derivative_disconnected(&cfg, &schedule)?;
    let continuity = continuity_limit(&cfg, &schedule)?;

    let mut csv = String::from("epsilon,difference,quotient\n");
    for (i, &eps) in schedule.iter().enumerate() {
        let diff = disconnected_action_difference(&cfg, eps)?;
        csv.push_str(&format!(
            "{},{},{}\n",
            csv_f64(eps),
            csv_f64(diff),
            csv_f64(derivative.sweep.values[i])
        ));
    }

    let mut assertions = Vec::new();
    expect_assertions(expect, &derivative.classification, &mut assertions);

    Ok(Outcome {
        csv,
        assertions,
        results: json!({
            "dim": cfg.dim(),
            "component_action": cfg.component_action(),
            "classification": classification_json(&derivative.classification),
            "quotient_sweep": sweep_json(&derivative.sweep),
            "continuity": estimate_json(&continuity),
        }),
    })
}

fn connected_sweep(
    metric: &MetricSpec,
    mask: &Option<crate::scenario::MaskSpec>,
    surgery: &crate::scenario::SurgerySpec,
    schedule: &Option<ScheduleSpec>,
    expect: &Option<ExpectSpec>,
    tol: &crate::scenario::ConnectedTolerances,
    rt: &mut RuntimeEcho,
) -> PipelineResult {
    let base = build_metric(metric)?;
    let mask = build_mask(mask);
    let dim = base.dim();

    let ball = ball_chart(dim, surgery.cap_count)?;
    let cap = surgery.cap.build(&ball)?;
    let cutoff = quintic_cutoff(&ball, surgery.collar_inner, surgery.collar_outer)?;
    let epsilon_max = match surgery.epsilon_max {
        Some(e) => e,
        None => default_epsilon_max(base.grid(), &surgery.point, BALL_HALF_WIDTH)?,
    };
    rt.epsilon_max = Some(epsilon_max);
    let tpl = SurgeryTemplate::new(
        surgery.point.clone(),
        surgery.collar_inner,
        surgery.collar_outer,
        cap,
        cutoff,
        surgery.cap_euler,
        epsilon_max,
    )?;
    let schedule = resolve_schedule(schedule, || default_surgery_schedule(epsilon_max))?;
    rt.epsilons = Some(schedule.clone());

    let derivative =
        topological_derivative_connected(&base, mask.as_ref(), &tpl, &schedule, surgery.scheme)?;
    let kappa = kappa_at(&tpl, &base, surgery.scheme)?;

    let mut csv = String::from("epsilon,i0,i1,i2,i3,total\n");
    for d in &derivative.differences {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            csv_f64(d.epsilon),
            csv_f64(d.i0),
            csv_f64(d.i1),
            csv_f64(d.i2),
            csv_f64(d.i3),
            csv_f64(d.total())
        ));
    }

    let mut assertions = Vec::new();
    expect_assertions(expect, &derivative.classification, &mut assertions);
    // In dimension four the nonzero limit must be the blend functional of
    // the template at the excision point.
    if dim == 4 {
        if let Classification::Value(v) = derivative.classification {
            let gap = (v - kappa).abs() / kappa.abs().max(1.0);
            assertions.push(Assertion::check(
                "limit_matches_kappa",
                gap <= tol.kappa_gap,
                format!(
                    "limit {v} vs blend functional {kappa} (relative gap {gap:e}, tolerance {:e})",
                    tol.kappa_gap
                ),
            ));
        }
    }

    Ok(Outcome {
        csv,
        assertions,
        results: json!({
            "dim": dim,
            "epsilon_max": epsilon_max,
            "classification": classification_json(&derivative.classification),
            "quotient_limit": estimate_json(&derivative.estimate),
            "difference_fit": derivative.difference_fit.as_ref().map(sweep_json),
            "kappa": kappa,
        }),
    })
}

fn quadratic_sweep(
    component: &ComponentInput,
    coefficients: &crate::scenario::CoeffSpec,
    schedule: &Option<ScheduleSpec>,
    expect: &Option<ExpectSpec>,
    rt: &mut RuntimeEcho,
) -> PipelineResult {
    let totals = component_totals(component)?;
    let coeffs = QuadraticCoefficients::new(
        coefficients.lambda,
        coefficients.alpha,
        coefficients.beta,
        coefficients.gamma,
    )?;
    let schedule = resolve_schedule(schedule, || Ok(default_schedule()))?;
    rt.epsilons = Some(schedule.clone());

    let derivative = quadratic_topological_derivative(&coeffs, &totals, &schedule)?;

    let mut csv = String::from("epsilon,difference,quotient\n");
    for &eps in &schedule {
        let diff = quadratic_disconnected_difference(&coeffs, &totals, eps)?;
        csv.push_str(&format!(
            "{},{},{}\n",
            csv_f64(eps),
            csv_f64(diff),
            csv_f64(diff / eps)
        ));
    }

    let mut assertions = Vec::new();
    expect_assertions(expect, &derivative.classification, &mut assertions);

    Ok(Outcome {
        csv,
        assertions,
        results: json!({
            "dim": totals.dim,
            "volume": totals.volume,
            "einstein_hilbert": totals.einstein_hilbert,
            "quadratic_total": totals.quadratic_total(&coeffs),
            "classification": classification_json(&derivative.classification),
            "quotient_limit": estimate_json(&derivative.estimate),
        }),
    })
}

fn egb_limit(
    component: &ComponentInput,
    egb: &crate::scenario::EgbSpec,
    schedule: &Option<ScheduleSpec>,
    expect: &Option<ExpectSpec>,
    rt: &mut RuntimeEcho,
) -> PipelineResult {
    let totals = component_totals(component)?;
    let schedule = resolve_schedule(schedule, || Ok(default_schedule()))?;
    rt.epsilons = Some(schedule.clone());

    // The module takes an absolute tolerance on the Gauss-Bonnet
    // cross-check; convert the scenario's relative one.
    let abs_tol = egb.gb_tolerance * (GAUSS_BONNET_FACTOR * egb.euler).abs().max(1.0);
    let limit = egb_disconnected_limit(egb.alpha, &totals, egb.euler, abs_tol, &schedule)?;

    let mut csv = String::from("epsilon,difference\n");
    for &eps in &schedule {
        let diff = egb_disconnected_difference(egb.alpha, &totals, eps)?;
        csv.push_str(&format!("{},{}\n", csv_f64(eps), csv_f64(diff)));
    }

    let mut assertions = Vec::new();
    if let Some(e) = expect {
        if let Some(expected) = e.value {
            let gap = (limit.limit - expected).abs() / expected.abs().max(1.0);
            assertions.push(Assertion::check(
                "value_matches",
                gap <= e.value_tolerance,
                format!(
                    "expected limit {expected}, got {} (relative gap {gap:e}, tolerance {:e})",
                    limit.limit, e.value_tolerance
                ),
            ));
        }
    }

    Ok(Outcome {
        csv,
        assertions,
        results: json!({
            "alpha": egb.alpha,
            "euler": egb.euler,
            "limit": limit.limit,
            "gauss_bonnet_total": limit.gauss_bonnet_total,
            "quotient_limit": estimate_json(&limit.estimate),
        }),
    })
}

fn blowup(
    family: &crate::scenario::BlowupSpec,
    schedule: &Option<ScheduleSpec>,
    tol: &crate::scenario::BlowupTolerances,
    rt: &mut RuntimeEcho,
) -> PipelineResult {
    let fam = CollapsingFamily::new(
        family.base_dim,
        family.gamma.clone(),
        family.theta.clone(),
        family.delta,
        family.t_count,
        family.base_count,
    )?;
    let schedule = resolve_schedule(schedule, || Ok(default_blowup_schedule()))?;
    rt.epsilons = Some(schedule.clone());

    let fit = blowup_sweep_and_fit(&fam, &schedule)?;

    let mut csv = String::from("epsilon,action_direct,action_sliced\n");
    for (i, &eps) in schedule.iter().enumerate() {
        csv.push_str(&format!(
            "{},{},{}\n",
            csv_f64(eps),
            csv_f64(fit.sweep.values[i]),
            csv_f64(adm_action(&fam, eps)?)
        ));
    }

    let adm_gap = (fit.pole - fit.adm_pole).abs() / fit.adm_pole.abs().max(1.0);
    let assertions = vec![
        Assertion::check(
            "fit_conclusive",
            !fit.inconclusive,
            format!(
                "Laurent residual {:e} against the conclusiveness threshold",
                fit.sweep.residual
            ),
        ),
        Assertion::check(
            "pole_negative",
            fit.pole < 0.0,
            format!("fitted pole coefficient is {}", fit.pole),
        ),
        Assertion::check(
            "linear_vanishes",
            fit.linear.abs() <= tol.linear_bound,
            format!(
                "fitted linear coefficient is {} (bound {:e})",
                fit.linear, tol.linear_bound
            ),
        ),
        Assertion::check(
            "pole_matches_sliced_route",
            adm_gap <= tol.pole_gap,
            format!(
                "direct-route pole {} vs sliced-route pole {} (relative gap {adm_gap:e}, tolerance {:e})",
                fit.pole, fit.adm_pole, tol.pole_gap
            ),
        ),
    ];

    Ok(Outcome {
        csv,
        assertions,
        results: json!({
            "pole": fit.pole,
            "linear": fit.linear,
            "sliced_pole": fit.adm_pole,
            "residual": fit.sweep.residual,
            "inconclusive": fit.inconclusive,
        }),
    })
}

fn dispatch(sc: &ResolvedScenario, rt: &mut RuntimeEcho) -> PipelineResult {
    match &sc.payload {
        Payload::CurvatureCheck { metric, tol } => curvature_check(metric, tol),
        Payload::GeometricDerivative { metric, mask, variation, tol } => {
            geometric_derivative(metric, mask, variation, tol)
        }
        Payload::DisconnectedSweep { component, schedule, expect } => {
            disconnected_sweep(component, schedule, expect, rt)
        }
        Payload::ConnectedSweep { metric, mask, surgery, schedule, expect, tol } => {
            connected_sweep(metric, mask, surgery, schedule, expect, tol, rt)
        }
        Payload::QuadraticSweep { component, coefficients, schedule, expect } => {
            quadratic_sweep(component, coefficients, schedule, expect, rt)
        }
        Payload::EgbLimit { component, egb, schedule, expect } => {
            egb_limit(component, egb, schedule, expect, rt)
        }
        Payload::Blowup { family, schedule, tol } => blowup(family, schedule, tol, rt),
    }
}

fn tolerances_json(sc: &ResolvedScenario) -> Json {
    match &sc.payload {
        Payload::CurvatureCheck { tol, .. } => json!({
            "route_gap": tol.route_gap,
            "reference_error": tol.reference_error,
        }),
        Payload::GeometricDerivative { tol, .. } => json!({
            "derivative_gap": tol.derivative_gap,
            "pairing_gap": tol.pairing_gap,
        }),
        Payload::DisconnectedSweep { expect, .. }
        | Payload::QuadraticSweep { expect, .. }
        | Payload::EgbLimit { expect, .. } => json!({
            "value_tolerance": expect.as_ref().map(|e| e.value_tolerance),
        }),
        Payload::ConnectedSweep { expect, tol, .. } => json!({
            "kappa_gap": tol.kappa_gap,
            "value_tolerance": expect.as_ref().map(|e| e.value_tolerance),
        }),
        Payload::Blowup { tol, .. } => json!({
            "linear_bound": tol.linear_bound,
            "pole_gap": tol.pole_gap,
        }),
    }
}

/// Runs the scenario and writes its artifacts into `out_dir`. Returns the
/// process exit code.
pub fn run(sc: &ResolvedScenario, out_dir: &Path) -> i32 {
    if let Err(e) = fs::create_dir_all(out_dir) {
        eprintln!("error: cannot create output directory {}: {e}", out_dir.display());
        return 2;
    }

    let mut rt = RuntimeEcho::default();
    let outcome = dispatch(sc, &mut rt);

    let echo = echo_toml(sc, &rt);
    if let Err(e) = fs::write(out_dir.join(&sc.output.echo), echo) {
        eprintln!("error: cannot write {}: {e}", sc.output.echo);
        return 2;
    }

    let (assertions, results, error) = match &outcome {
        Ok(o) => {
            if let Err(e) = fs::write(out_dir.join(&sc.output.csv), &o.csv) {
                eprintln!("error: cannot write {}: {e}", sc.output.csv);
                return 2;
            }
            (&o.assertions[..], o.results.clone(), None)
        }
        Err(e) => (&[][..], Json::Null, Some(e.to_string())),
    };

    let all_passed = assertions.iter().all(|a| a.passed);
    let status = if error.is_some() {
        "error"
    } else if all_passed {
        "pass"
    } else {
        "fail"
    };

    let summary = json!({
        "schema_version": SUMMARY_SCHEMA_VERSION,
        "tool": "topovar-cli",
        "tool_version": env!("CARGO_PKG_VERSION"),
        "kind": sc.kind.name(),
        "status": status,
        "error": error,
        "assertions": assertions.iter().map(|a| json!({
            "name": a.name,
            "passed": a.passed,
            "detail": a.detail,
        })).collect::<Vec<_>>(),
        "tolerances": tolerances_json(sc),
        "results": results,
    });
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    if let Err(e) = fs::write(out_dir.join(&sc.output.summary), text) {
        eprintln!("error: cannot write {}: {e}", sc.output.summary);
        return 2;
    }

    for a in assertions {
        println!("{} {}: {}", if a.passed { "pass" } else { "FAIL" }, a.name, a.detail);
    }
    match &error {
        Some(e) => {
            println!("error: {e}");
            1
        }
        None if all_passed => {
            println!("pass ({} assertion(s))", assertions.len());
            0
        }
        None => {
            println!("FAIL");
            1
        }
    }
}
