//! Scenario files: a declarative TOML description of one experiment.
//!
//! A scenario names an experiment kind, a metric (by catalog family or by
//! tensor-field file), and the kind-specific knobs. Parsing validates the
//! whole document and reports every problem at once: unknown keys and
//! misspelled names come back with the nearest valid spelling, range
//! violations with the documented range. Omitted keys fall back to defaults,
//! and every applied default is recorded so the echo artifact shows the
//! fully resolved configuration.
//!
//! The documented schema, per kind:
//!
//! ```text
//! kind = "curvature-check"        # required, one of KIND_NAMES
//!
//! [metric]                        # curvature-check, geometric-derivative,
//!                                 # connected-sweep; also names the shrinking
//!                                 # component for the attachment sweeps
//! family = "flat"                 # or: file = "metric.txt"
//! dim = 3                         # required with family, 2..=6
//! radius = 1.0                    # sphere_stereographic   (default 1.0)
//! amplitude = 0.1                 # conformal_quadratic    (default 0.1)
//!                                 # perturbed_flat         (default 0.2, range [0, 0.9])
//! center = [0.0, 0.0, 0.0]        # conformal_quadratic    (default origin)
//! negative_directions = 0         # flat, perturbed_flat   (default 0)
//! waves = 3                       # perturbed_flat         (default 3, range 1..=16)
//! seed = 0                        # perturbed_flat         (default 0)
//! signature_negative = 0          # file metrics           (default 0)
//! det_floor = 1e-9                # file metrics           (default 1e-9)
//!
//! [grid]                         # required with family metrics (files carry
//!                                # their own grid; sphere components use
//!                                # closed forms and take no grid)
//! lo = -1.0                      # scalar or per-axis array (default -1.0)
//! hi = 1.0                       # (default 1.0)
//! count = 17                     # nodes per axis, >= 5 (default 17)
//! periodic = false               # (default false; true for flat_torus)
//!
//! [mask]                         # optional axis-aligned box restricting the
//! lo = [-0.5, -0.5, -0.5]        # integration domain (geometric-derivative,
//! hi = [0.5, 0.5, 0.5]           # connected-sweep) or the assertion norms
//!                                # (curvature-check; the CSV stays full)
//!
//! [schedule]                     # optional shrinking schedule
//! first = 0.1                    # > 0
//! ratio = 0.5                    # in (0, 1)
//! count = 24                     # >= 4
//!
//! [variation]                    # geometric-derivative
//! center = [0.0, 0.0, 0.0]       # bump center (default origin)
//! radius = 0.25                  # support radius > 0 (default 0.25)
//! amplitude = 0.05               # nonzero (default 0.05)
//! pattern = "identity"           # or a dim*dim row-major array
//! steps = [1e-2, 1e-3, 1e-4]     # central-difference steps, each > 0
//!
//! [surgery]                      # connected-sweep
//! point = [0.0, 0.0, 0.0]        # excision point (default origin)
//! collar_inner = 0.5             # 0 < inner < outer < 1 (defaults 0.5, 0.8)
//! collar_outer = 0.8
//! cap_family = "flat"            # "flat" or "conformal_quadratic"
//! cap_negative_directions = 0    # flat caps (default 0)
//! cap_amplitude = 0.1            # conformal caps (default 0.1)
//! cap_count = 21                 # ball-chart nodes per axis, >= 9 (default 21)
//! cap_euler = 1                  # Euler characteristic bookkeeping (default 1)
//! epsilon_max = 0.25             # > 0 (default: derived from the grid)
//! scheme = "order2"              # or "order4"
//!
//! [coefficients]                 # quadratic-sweep (defaults 0, 1, 0, 0)
//! lambda = 0.0
//! alpha = 1.0
//! beta = 0.0
//! gamma = 0.0
//!
//! [component]                    # explicit component data, instead of [metric]
//! dim = 4
//! action = 315.83                # disconnected-sweep form
//! volume = 26.32                 # quadratic-sweep / egb-limit form, together
//! einstein_hilbert = 315.83      # with r_squared, ricci_squared,
//! r_squared = 3790.0             # riemann_squared
//! ricci_squared = 947.5
//! riemann_squared = 631.7
//!
//! [egb]                          # egb-limit
//! alpha = 1.0                    # Gauss-Bonnet coupling (default 1.0)
//! euler = 2.0                    # default 2 for spheres, 0 for tori
//! gb_tolerance = 1e-6            # relative cross-check tolerance (default 1e-6)
//!
//! [family]                       # blowup collapsing family
//! base_dim = 2                   # 2..=5 (default 2)
//! gamma = [1.0, 0.0, 0.0, 1.0]   # base metric (default identity)
//! theta = [1.0, 0.0, 0.0, -1.0]  # trace-free oscillation (default for dim 2)
//! delta = 0.1                    # in (0, 1) (default 0.1)
//! t_count = 128                  # >= 16 (default 128)
//! base_count = 32                # >= 4 (default 32)
//!
//! [tolerances]                   # per-kind assertion tolerances
//! route_gap = 0.05               # curvature-check (default 0.05)
//! reference_error = 0.05         # curvature-check (default 0.05)
//! derivative_gap = 1e-4          # geometric-derivative (default 1e-4)
//! pairing_gap = 0.05             # geometric-derivative (default 0.05)
//! kappa_gap = 1e-3               # connected-sweep (default 1e-3)
//! linear_bound = 1e-6            # blowup (default 1e-6)
//! pole_gap = 1e-3                # blowup (default 1e-3)
//!
//! [expect]                       # optional sweep expectations
//! classification = "Value"       # "Undefined" | "Value" | "Zero"
//! value = 315.83                 # expected derivative, with classification "Value"
//! value_tolerance = 1e-6         # relative (default 1e-6)
//!
//! [output]                       # artifact names inside the --out directory
//! csv = "data.csv"
//! summary = "summary.json"
//! echo = "echo.toml"
//! ```

use std::fmt::Write as _;
use std::path::Path;

use toml::value::{Table, Value};
use topovar::catalog::{Family, FAMILY_NAMES};
use topovar::fd::Scheme;

pub const KIND_NAMES: [&str; 7] = [
    "curvature-check",
    "geometric-derivative",
    "disconnected-sweep",
    "connected-sweep",
    "quadratic-sweep",
    "egb-limit",
    "blowup",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    CurvatureCheck,
    GeometricDerivative,
    DisconnectedSweep,
    ConnectedSweep,
    QuadraticSweep,
    EgbLimit,
    Blowup,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::CurvatureCheck => "curvature-check",
            Kind::GeometricDerivative => "geometric-derivative",
            Kind::DisconnectedSweep => "disconnected-sweep",
            Kind::ConnectedSweep => "connected-sweep",
            Kind::QuadraticSweep => "quadratic-sweep",
            Kind::EgbLimit => "egb-limit",
            Kind::Blowup => "blowup",
        }
    }

    fn from_name(name: &str) -> Option<Kind> {
        match name {
            "curvature-check" => Some(Kind::CurvatureCheck),
            "geometric-derivative" => Some(Kind::GeometricDerivative),
            "disconnected-sweep" => Some(Kind::DisconnectedSweep),
            "connected-sweep" => Some(Kind::ConnectedSweep),
            "quadratic-sweep" => Some(Kind::QuadraticSweep),
            "egb-limit" => Some(Kind::EgbLimit),
            "blowup" => Some(Kind::Blowup),
            _ => None,
        }
    }

    fn sections(self) -> &'static [&'static str] {
        match self {
            Kind::CurvatureCheck => &["metric", "grid", "mask", "tolerances", "output"],
            Kind::GeometricDerivative => {
                &["metric", "grid", "mask", "variation", "tolerances", "output"]
            }
            Kind::DisconnectedSweep => {
                &["metric", "grid", "component", "schedule", "expect", "output"]
            }
            Kind::ConnectedSweep => &[
                "metric", "grid", "mask", "surgery", "schedule", "expect", "tolerances", "output",
            ],
            Kind::QuadraticSweep => &[
                "metric", "grid", "component", "coefficients", "schedule", "expect", "output",
            ],
            Kind::EgbLimit => {
                &["metric", "grid", "component", "egb", "schedule", "expect", "output"]
            }
            Kind::Blowup => &["family", "schedule", "tolerances", "output"],
        }
    }
}

const ALL_SECTIONS: [&str; 13] = [
    "metric",
    "grid",
    "mask",
    "schedule",
    "variation",
    "surgery",
    "coefficients",
    "component",
    "egb",
    "family",
    "tolerances",
    "expect",
    "output",
];

#[derive(Debug, Clone)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub count: Vec<usize>,
    pub periodic: Vec<bool>,
}

#[derive(Debug, Clone)]
pub enum MetricSource {
    Family { name: String, dim: usize, family: Family },
    File { path: String, signature_negative: usize, det_floor: f64 },
}

#[derive(Debug, Clone)]
pub struct MetricSpec {
    pub source: MetricSource,
    pub grid: Option<GridSpec>,
}

#[derive(Debug, Clone)]
pub struct MaskSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ScheduleSpec {
    pub first: f64,
    pub ratio: f64,
    pub count: usize,
}

#[derive(Debug, Clone)]
pub struct VariationSpec {
    pub center: Vec<f64>,
    pub radius: f64,
    pub amplitude: f64,
    pub pattern: Vec<f64>,
    pub steps: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SurgerySpec {
    pub point: Vec<f64>,
    pub collar_inner: f64,
    pub collar_outer: f64,
    pub cap_name: String,
    pub cap: Family,
    pub cap_count: usize,
    pub cap_euler: i64,
    pub epsilon_max: Option<f64>,
    pub scheme_name: String,
    pub scheme: Scheme,
}

#[derive(Debug, Clone)]
pub struct CoeffSpec {
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone)]
pub enum ComponentInput {
    /// Round sphere addressed by closed forms; no grid involved.
    SphereOracle { dim: usize, radius: f64 },
    /// Closed component realized on a fully periodic grid.
    PeriodicMetric { metric: MetricSpec },
    /// Explicit action total (disconnected-sweep form).
    ExplicitAction { dim: usize, action: f64 },
    /// Explicit invariant totals (quadratic-sweep / egb-limit form).
    ExplicitTotals {
        dim: usize,
        volume: f64,
        einstein_hilbert: f64,
        r_squared: f64,
        ricci_squared: f64,
        riemann_squared: f64,
    },
}

#[derive(Debug, Clone)]
pub struct EgbSpec {
    pub alpha: f64,
    pub euler: f64,
    pub gb_tolerance: f64,
}

#[derive(Debug, Clone)]
pub struct BlowupSpec {
    pub base_dim: usize,
    pub gamma: Vec<f64>,
    pub theta: Vec<f64>,
    pub delta: f64,
    pub t_count: usize,
    pub base_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpectedClass {
    Undefined,
    Value,
    Zero,
}

impl ExpectedClass {
    pub fn name(self) -> &'static str {
        match self {
            ExpectedClass::Undefined => "Undefined",
            ExpectedClass::Value => "Value",
            ExpectedClass::Zero => "Zero",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExpectSpec {
    pub classification: Option<ExpectedClass>,
    pub value: Option<f64>,
    pub value_tolerance: f64,
}

#[derive(Debug, Clone)]
pub struct CurvatureTolerances {
    pub route_gap: f64,
    pub reference_error: f64,
}

#[derive(Debug, Clone)]
pub struct DerivativeTolerances {
    pub derivative_gap: f64,
    pub pairing_gap: f64,
}

#[derive(Debug, Clone)]
pub struct ConnectedTolerances {
    pub kappa_gap: f64,
}

#[derive(Debug, Clone)]
pub struct BlowupTolerances {
    pub linear_bound: f64,
    pub pole_gap: f64,
}

#[derive(Debug, Clone)]
pub struct OutputSpec {
    pub csv: String,
    pub summary: String,
    pub echo: String,
}

#[derive(Debug, Clone)]
pub enum Payload {
    CurvatureCheck {
        metric: MetricSpec,
        mask: Option<MaskSpec>,
        tol: CurvatureTolerances,
    },
    GeometricDerivative {
        metric: MetricSpec,
        mask: Option<MaskSpec>,
        variation: VariationSpec,
        tol: DerivativeTolerances,
    },
    DisconnectedSweep {
        component: ComponentInput,
        schedule: Option<ScheduleSpec>,
        expect: Option<ExpectSpec>,
    },
    ConnectedSweep {
        metric: MetricSpec,
        mask: Option<MaskSpec>,
        surgery: SurgerySpec,
        schedule: Option<ScheduleSpec>,
        expect: Option<ExpectSpec>,
        tol: ConnectedTolerances,
    },
    QuadraticSweep {
        component: ComponentInput,
        coefficients: CoeffSpec,
        schedule: Option<ScheduleSpec>,
        expect: Option<ExpectSpec>,
    },
    EgbLimit {
        component: ComponentInput,
        egb: EgbSpec,
        schedule: Option<ScheduleSpec>,
        expect: Option<ExpectSpec>,
    },
    Blowup {
        family: BlowupSpec,
        schedule: Option<ScheduleSpec>,
        tol: BlowupTolerances,
    },
}

#[derive(Debug, Clone)]
pub struct ResolvedScenario {
    pub kind: Kind,
    pub payload: Payload,
    pub output: OutputSpec,
    /// Every default applied during parsing, as (key path, rendered value).
    pub applied_defaults: Vec<(String, String)>,
}

/// Nearest candidate by Jaro-Winkler similarity, when it is close enough to
/// be a plausible typo. Shared prefixes weigh heavily, so truncated names
/// like "sphre" still find "sphere_stereographic".
fn nearest(input: &str, candidates: &[&'static str]) -> Option<&'static str> {
    let mut best: Option<(&'static str, f64)> = None;
    for &c in candidates {
        let s = strsim::jaro_winkler(input, c);
        if best.map_or(true, |(_, bs)| s > bs) {
            best = Some((c, s));
        }
    }
    best.filter(|&(_, s)| s >= 0.7).map(|(c, _)| c)
}

fn suggestion(input: &str, candidates: &[&'static str]) -> String {
    match nearest(input, candidates) {
        Some(c) => format!("did you mean `{c}`?"),
        None => format!("valid names: {}", candidates.join(", ")),
    }
}

/// Validation context: accumulates every error and every applied default.
#[derive(Default)]
struct Cx {
    errors: Vec<String>,
    defaults: Vec<(String, String)>,
}

impl Cx {
    fn err(&mut self, msg: String) {
        self.errors.push(msg);
    }

    fn applied(&mut self, key: &str, value: String) {
        self.defaults.push((key.to_string(), value));
    }
}

/// Renders an f64 as a TOML float token (Display, with a forced decimal
/// point so integral values stay floats).
pub fn toml_float(v: f64) -> String {
    let s = format!("{v}");
    if s.contains(['.', 'e', 'E']) || !v.is_finite() {
        s
    } else {
        format!("{s}.0")
    }
}

fn toml_float_array(vs: &[f64]) -> String {
    let items: Vec<String> = vs.iter().map(|&v| toml_float(v)).collect();
    format!("[{}]", items.join(", "))
}

fn toml_usize_array(vs: &[usize]) -> String {
    let items: Vec<String> = vs.iter().map(|v| v.to_string()).collect();
    format!("[{}]", items.join(", "))
}

fn toml_bool_array(vs: &[bool]) -> String {
    let items: Vec<String> = vs.iter().map(|v| v.to_string()).collect();
    format!("[{}]", items.join(", "))
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::String(_) => "a string",
        Value::Integer(_) => "an integer",
        Value::Float(_) => "a float",
        Value::Boolean(_) => "a boolean",
        Value::Datetime(_) => "a datetime",
        Value::Array(_) => "an array",
        Value::Table(_) => "a table",
    }
}

fn check_keys(cx: &mut Cx, table: &Table, section: &str, allowed: &[&'static str]) {
    for key in table.keys() {
        if !allowed.contains(&key.as_str()) {
            let hint = suggestion(key, allowed);
            let place = if section.is_empty() {
                "at the top level".to_string()
            } else {
                format!("in [{section}]")
            };
            cx.err(format!("unknown key `{key}` {place}; {hint}"));
        }
    }
}

fn path_of(section: &str, key: &str) -> String {
    if section.is_empty() {
        key.to_string()
    } else {
        format!("{section}.{key}")
    }
}

fn as_f64(cx: &mut Cx, section: &str, key: &str, v: &Value) -> Option<f64> {
    match v {
        Value::Float(f) => Some(*f),
        Value::Integer(i) => Some(*i as f64),
        other => {
            cx.err(format!(
                "`{}` must be a number, got {}",
                path_of(section, key),
                type_name(other)
            ));
            None
        }
    }
}

fn as_usize(cx: &mut Cx, section: &str, key: &str, v: &Value) -> Option<usize> {
    match v {
        Value::Integer(i) if *i >= 0 => Some(*i as usize),
        other => {
            cx.err(format!(
                "`{}` must be a non-negative integer, got {}",
                path_of(section, key),
                type_name(other)
            ));
            None
        }
    }
}

fn as_i64(cx: &mut Cx, section: &str, key: &str, v: &Value) -> Option<i64> {
    match v {
        Value::Integer(i) => Some(*i),
        other => {
            cx.err(format!(
                "`{}` must be an integer, got {}",
                path_of(section, key),
                type_name(other)
            ));
            None
        }
    }
}

fn as_str<'a>(cx: &mut Cx, section: &str, key: &str, v: &'a Value) -> Option<&'a str> {
    match v {
        Value::String(s) => Some(s.as_str()),
        other => {
            cx.err(format!(
                "`{}` must be a string, got {}",
                path_of(section, key),
                type_name(other)
            ));
            None
        }
    }
}

fn as_f64_array(cx: &mut Cx, section: &str, key: &str, v: &Value) -> Option<Vec<f64>> {
    match v {
        Value::Array(items) => {
            let mut out = Vec::with_capacity(items.len());
            for item in items {
                out.push(as_f64(cx, section, key, item)?);
            }
            Some(out)
        }
        other => {
            cx.err(format!(
                "`{}` must be an array of numbers, got {}",
                path_of(section, key),
                type_name(other)
            ));
            None
        }
    }
}

/// Fixed-length numeric array with a documented length.
fn fixed_f64_array(
    cx: &mut Cx,
    section: &str,
    key: &str,
    v: &Value,
    len: usize,
    what: &str,
) -> Option<Vec<f64>> {
    let arr = as_f64_array(cx, section, key, v)?;
    if arr.len() != len {
        cx.err(format!(
            "`{}` must have {len} entries ({what}), got {}",
            path_of(section, key),
            arr.len()
        ));
        return None;
    }
    Some(arr)
}

fn def_f64(cx: &mut Cx, t: &Table, section: &str, key: &str, default: f64) -> f64 {
    match t.get(key) {
        Some(v) => as_f64(cx, section, key, v).unwrap_or(default),
        None => {
            cx.applied(&path_of(section, key), toml_float(default));
            default
        }
    }
}

fn def_usize(cx: &mut Cx, t: &Table, section: &str, key: &str, default: usize) -> usize {
    match t.get(key) {
        Some(v) => as_usize(cx, section, key, v).unwrap_or(default),
        None => {
            cx.applied(&path_of(section, key), default.to_string());
            default
        }
    }
}

fn def_str(cx: &mut Cx, t: &Table, section: &str, key: &str, default: &str) -> String {
    match t.get(key) {
        Some(v) => as_str(cx, section, key, v)
            .map(str::to_string)
            .unwrap_or_else(|| default.to_string()),
        None => {
            cx.applied(&path_of(section, key), format!("{default:?}"));
            default.to_string()
        }
    }
}

fn req_f64(cx: &mut Cx, t: &Table, section: &str, key: &str) -> Option<f64> {
    match t.get(key) {
        Some(v) => as_f64(cx, section, key, v),
        None => {
            cx.err(format!("missing required key `{}`", path_of(section, key)));
            None
        }
    }
}

fn req_usize(cx: &mut Cx, t: &Table, section: &str, key: &str) -> Option<usize> {
    match t.get(key) {
        Some(v) => as_usize(cx, section, key, v),
        None => {
            cx.err(format!("missing required key `{}`", path_of(section, key)));
            None
        }
    }
}

/// Positive-number range check with the documented range in the message.
fn positive(cx: &mut Cx, section: &str, key: &str, v: f64) -> Option<f64> {
    if v > 0.0 && v.is_finite() {
        Some(v)
    } else {
        cx.err(format!(
            "`{}` must be a positive finite number, got {v}",
            path_of(section, key)
        ));
        None
    }
}

fn finite(cx: &mut Cx, section: &str, key: &str, v: f64) -> Option<f64> {
    if v.is_finite() {
        Some(v)
    } else {
        cx.err(format!("`{}` must be finite, got {v}", path_of(section, key)));
        None
    }
}

/// Scalar-or-array key broadcast to `dim` entries.
fn broadcast_f64(
    cx: &mut Cx,
    t: &Table,
    section: &str,
    key: &str,
    dim: usize,
    default: f64,
) -> Vec<f64> {
    match t.get(key) {
        None => {
            cx.applied(&path_of(section, key), toml_float(default));
            vec![default; dim]
        }
        Some(Value::Array(_)) => {
            let v = t.get(key).unwrap();
            fixed_f64_array(cx, section, key, v, dim, "one per axis")
                .unwrap_or_else(|| vec![default; dim])
        }
        Some(v) => as_f64(cx, section, key, v)
            .map(|x| vec![x; dim])
            .unwrap_or_else(|| vec![default; dim]),
    }
}

fn broadcast_usize(
    cx: &mut Cx,
    t: &Table,
    section: &str,
    key: &str,
    dim: usize,
    default: usize,
) -> Vec<usize> {
    match t.get(key) {
        None => {
            cx.applied(&path_of(section, key), default.to_string());
            vec![default; dim]
        }
        Some(Value::Array(items)) => {
            if items.len() != dim {
                cx.err(format!(
                    "`{}` must have {dim} entries (one per axis), got {}",
                    path_of(section, key),
                    items.len()
                ));
                return vec![default; dim];
            }
            items
                .iter()
                .map(|v| as_usize(cx, section, key, v).unwrap_or(default))
                .collect()
        }
        Some(v) => as_usize(cx, section, key, v)
            .map(|x| vec![x; dim])
            .unwrap_or_else(|| vec![default; dim]),
    }
}

fn broadcast_bool(
    cx: &mut Cx,
    t: &Table,
    section: &str,
    key: &str,
    dim: usize,
    default: bool,
) -> Vec<bool> {
    let read_bool = |cx: &mut Cx, v: &Value| -> Option<bool> {
        match v {
            Value::Boolean(b) => Some(*b),
            other => {
                cx.err(format!(
                    "`{}` must be a boolean, got {}",
                    path_of(section, key),
                    type_name(other)
                ));
                None
            }
        }
    };
    match t.get(key) {
        None => {
            cx.applied(&path_of(section, key), default.to_string());
            vec![default; dim]
        }
        Some(Value::Array(items)) => {
            if items.len() != dim {
                cx.err(format!(
                    "`{}` must have {dim} entries (one per axis), got {}",
                    path_of(section, key),
                    items.len()
                ));
                return vec![default; dim];
            }
            items
                .iter()
                .map(|v| read_bool(cx, v).unwrap_or(default))
                .collect()
        }
        Some(v) => read_bool(cx, v)
            .map(|x| vec![x; dim])
            .unwrap_or_else(|| vec![default; dim]),
    }
}

fn section<'a>(cx: &mut Cx, root: &'a Table, name: &str) -> Option<&'a Table> {
    match root.get(name) {
        None => None,
        Some(Value::Table(t)) => Some(t),
        Some(other) => {
            cx.err(format!("`{name}` must be a table, got {}", type_name(other)));
            None
        }
    }
}

const METRIC_KEYS: [&str; 11] = [
    "family",
    "file",
    "dim",
    "radius",
    "amplitude",
    "center",
    "negative_directions",
    "waves",
    "seed",
    "signature_negative",
    "det_floor",
];

/// Which [metric] parameter keys each family understands.
fn family_keys(name: &str) -> &'static [&'static str] {
    match name {
        "flat" => &["negative_directions"],
        "flat_torus" => &[],
        "sphere_stereographic" => &["radius"],
        "conformal_quadratic" => &["amplitude", "center"],
        "perturbed_flat" => &["negative_directions", "amplitude", "waves", "seed"],
        _ => &[],
    }
}

/// Parses [metric] into a family plus its fully resolved parameters.
fn parse_family(cx: &mut Cx, m: &Table, name: &str, dim: usize) -> Option<Family> {
    let allowed = family_keys(name);
    for key in ["radius", "amplitude", "center", "negative_directions", "waves", "seed"] {
        if m.contains_key(key) && !allowed.contains(&key) {
            let its_keys = if allowed.is_empty() {
                "none".to_string()
            } else {
                allowed.join(", ")
            };
            cx.err(format!(
                "key `metric.{key}` does not apply to family `{name}` (its keys: {its_keys})"
            ));
        }
    }
    match name {
        "flat" | "flat_torus" => {
            let neg = if name == "flat" {
                let v = def_usize(cx, m, "metric", "negative_directions", 0);
                if v > dim {
                    cx.err(format!(
                        "`metric.negative_directions` must lie in 0..={dim}, got {v}"
                    ));
                    return None;
                }
                v
            } else {
                0
            };
            if name == "flat_torus" {
                Some(Family::FlatTorus)
            } else {
                Some(Family::Flat { negative_directions: neg })
            }
        }
        "sphere_stereographic" => {
            let radius = def_f64(cx, m, "metric", "radius", 1.0);
            positive(cx, "metric", "radius", radius)?;
            Some(Family::SphereStereographic { radius })
        }
        "conformal_quadratic" => {
            let amplitude = def_f64(cx, m, "metric", "amplitude", 0.1);
            finite(cx, "metric", "amplitude", amplitude)?;
            let center = match m.get("center") {
                Some(v) => fixed_f64_array(cx, "metric", "center", v, dim, "one per axis")?,
                None => {
                    let c = vec![0.0; dim];
                    cx.applied("metric.center", toml_float_array(&c));
                    c
                }
            };
            Some(Family::ConformalQuadratic { amplitude, center })
        }
        "perturbed_flat" => {
            let neg = def_usize(cx, m, "metric", "negative_directions", 0);
            if neg > dim {
                cx.err(format!(
                    "`metric.negative_directions` must lie in 0..={dim}, got {neg}"
                ));
                return None;
            }
            let amplitude = def_f64(cx, m, "metric", "amplitude", 0.2);
            if !(0.0..=0.9).contains(&amplitude) {
                cx.err(format!(
                    "`metric.amplitude` must lie in [0, 0.9] for perturbed_flat, got {amplitude}"
                ));
                return None;
            }
            let waves = def_usize(cx, m, "metric", "waves", 3);
            if !(1..=16).contains(&waves) {
                cx.err(format!("`metric.waves` must lie in 1..=16, got {waves}"));
                return None;
            }
            let seed = match m.get("seed") {
                Some(v) => {
                    let s = as_i64(cx, "metric", "seed", v)?;
                    if s < 0 {
                        cx.err(format!("`metric.seed` must be non-negative, got {s}"));
                        return None;
                    }
                    s as u64
                }
                None => {
                    cx.applied("metric.seed", "0".to_string());
                    0
                }
            };
            Some(Family::PerturbedFlat {
                negative_directions: neg,
                amplitude,
                waves,
                seed,
            })
        }
        other => {
            cx.err(format!(
                "unknown metric family `{other}`; {}",
                suggestion(other, &FAMILY_NAMES)
            ));
            None
        }
    }
}

fn parse_grid(cx: &mut Cx, root: &Table, dim: usize, periodic_default: bool) -> Option<GridSpec> {
    let g = match section(cx, root, "grid") {
        Some(g) => g,
        None => {
            // A fully defaulted grid: record the defaults and build it.
            cx.applied("grid.lo", toml_float(-1.0));
            cx.applied("grid.hi", toml_float(1.0));
            cx.applied("grid.count", "17".to_string());
            cx.applied("grid.periodic", periodic_default.to_string());
            return Some(GridSpec {
                lo: vec![-1.0; dim],
                hi: vec![1.0; dim],
                count: vec![17; dim],
                periodic: vec![periodic_default; dim],
            });
        }
    };
    check_keys(cx, g, "grid", &["lo", "hi", "count", "periodic"]);
    let lo = broadcast_f64(cx, g, "grid", "lo", dim, -1.0);
    let hi = broadcast_f64(cx, g, "grid", "hi", dim, 1.0);
    let count = broadcast_usize(cx, g, "grid", "count", dim, 17);
    let periodic = broadcast_bool(cx, g, "grid", "periodic", dim, periodic_default);
    let mut ok = true;
    for a in 0..dim {
        if !(lo[a] < hi[a]) || !lo[a].is_finite() || !hi[a].is_finite() {
            cx.err(format!(
                "`grid.lo` must be strictly below `grid.hi` on axis {a}, got [{}, {}]",
                lo[a], hi[a]
            ));
            ok = false;
        }
        if count[a] < 5 {
            cx.err(format!(
                "`grid.count` must be at least 5 per axis for the stencils, got {} on axis {a}",
                count[a]
            ));
            ok = false;
        }
    }
    ok.then_some(GridSpec { lo, hi, count, periodic })
}

/// Parses [metric] (+ [grid]) for kinds that evaluate fields on a chart.
fn parse_base_metric(cx: &mut Cx, root: &Table) -> Option<MetricSpec> {
    let m = match section(cx, root, "metric") {
        Some(m) => m,
        None => {
            cx.err("missing [metric] section".to_string());
            return None;
        }
    };
    check_keys(cx, m, "metric", &METRIC_KEYS);
    match (m.get("family"), m.get("file")) {
        (Some(_), Some(_)) => {
            cx.err("`metric.family` and `metric.file` are mutually exclusive".to_string());
            None
        }
        (None, None) => {
            cx.err("[metric] needs either `family` or `file`".to_string());
            None
        }
        (Some(fam), None) => {
            let name = as_str(cx, "metric", "family", fam)?;
            let known = FAMILY_NAMES.contains(&name);
            if !known {
                cx.err(format!(
                    "unknown metric family `{name}`; {}",
                    suggestion(name, &FAMILY_NAMES)
                ));
            }
            for key in ["signature_negative", "det_floor"] {
                if m.contains_key(key) {
                    cx.err(format!("key `metric.{key}` only applies to file metrics"));
                }
            }
            let dim = req_usize(cx, m, "metric", "dim").filter(|&d| {
                if (2..=6).contains(&d) {
                    true
                } else {
                    cx.err(format!("`metric.dim` must lie in 2..=6, got {d}"));
                    false
                }
            })?;
            // Validate the grid even when the family name is bad, so one
            // pass reports both problems.
            let grid = parse_grid(cx, root, dim, name == "flat_torus");
            if !known {
                return None;
            }
            let family = parse_family(cx, m, name, dim)?;
            Some(MetricSpec {
                source: MetricSource::Family { name: name.to_string(), dim, family },
                grid: Some(grid?),
            })
        }
        (None, Some(file)) => {
            let path = as_str(cx, "metric", "file", file)?.to_string();
            if root.contains_key("grid") {
                cx.err("remove [grid]: a metric file carries its own grid".to_string());
            }
            for key in [
                "dim",
                "radius",
                "amplitude",
                "center",
                "negative_directions",
                "waves",
                "seed",
            ] {
                if m.contains_key(key) {
                    cx.err(format!("key `metric.{key}` only applies to family metrics"));
                }
            }
            let signature_negative = def_usize(cx, m, "metric", "signature_negative", 0);
            let det_floor = def_f64(cx, m, "metric", "det_floor", 1e-9);
            positive(cx, "metric", "det_floor", det_floor)?;
            Some(MetricSpec {
                source: MetricSource::File { path, signature_negative, det_floor },
                grid: None,
            })
        }
    }
}

/// Parses the shrinking component for the attachment kinds: either [metric]
/// naming a closed family, or [component] carrying explicit totals.
fn parse_component(cx: &mut Cx, root: &Table, kind: Kind) -> Option<ComponentInput> {
    let has_metric = root.contains_key("metric");
    let has_component = root.contains_key("component");
    if has_metric && has_component {
        cx.err("[metric] and [component] are mutually exclusive".to_string());
        return None;
    }
    if !has_metric && !has_component {
        cx.err(
            "the component needs either [metric] (a closed catalog family) or [component] (explicit totals)"
                .to_string(),
        );
        return None;
    }
    if has_component {
        let c = section(cx, root, "component")?;
        let dim_range = "2..=6";
        match kind {
            Kind::DisconnectedSweep => {
                check_keys(cx, c, "component", &["dim", "action"]);
                let dim = req_usize(cx, c, "component", "dim")?;
                if !(2..=6).contains(&dim) {
                    cx.err(format!("`component.dim` must lie in {dim_range}, got {dim}"));
                    return None;
                }
                let action = req_f64(cx, c, "component", "action")?;
                finite(cx, "component", "action", action)?;
                Some(ComponentInput::ExplicitAction { dim, action })
            }
            _ => {
                check_keys(
                    cx,
                    c,
                    "component",
                    &[
                        "dim",
                        "volume",
                        "einstein_hilbert",
                        "r_squared",
                        "ricci_squared",
                        "riemann_squared",
                    ],
                );
                let dim = req_usize(cx, c, "component", "dim")?;
                if !(2..=8).contains(&dim) {
                    cx.err(format!("`component.dim` must lie in 2..=8, got {dim}"));
                    return None;
                }
                if kind == Kind::EgbLimit && dim != 4 {
                    cx.err(format!(
                        "`component.dim` must be 4 for egb-limit (the Gauss-Bonnet term is four-dimensional), got {dim}"
                    ));
                    return None;
                }
                let volume = req_f64(cx, c, "component", "volume")?;
                positive(cx, "component", "volume", volume)?;
                let eh = req_f64(cx, c, "component", "einstein_hilbert")?;
                let r2 = req_f64(cx, c, "component", "r_squared")?;
                let ric2 = req_f64(cx, c, "component", "ricci_squared")?;
                let riem2 = req_f64(cx, c, "component", "riemann_squared")?;
                for (k, v) in [
                    ("einstein_hilbert", eh),
                    ("r_squared", r2),
                    ("ricci_squared", ric2),
                    ("riemann_squared", riem2),
                ] {
                    finite(cx, "component", k, v)?;
                }
                Some(ComponentInput::ExplicitTotals {
                    dim,
                    volume,
                    einstein_hilbert: eh,
                    r_squared: r2,
                    ricci_squared: ric2,
                    riemann_squared: riem2,
                })
            }
        }
    } else {
        let m = section(cx, root, "metric")?;
        check_keys(cx, m, "metric", &METRIC_KEYS);
        let name = match m.get("family") {
            Some(v) => as_str(cx, "metric", "family", v)?,
            None => {
                cx.err(
                    "component metrics must name a catalog `family` (file metrics cannot cover a closed manifold)"
                        .to_string(),
                );
                return None;
            }
        };
        if !FAMILY_NAMES.contains(&name) {
            cx.err(format!(
                "unknown metric family `{name}`; {}",
                suggestion(name, &FAMILY_NAMES)
            ));
            return None;
        }
        let dim = req_usize(cx, m, "metric", "dim")?;
        if !(2..=6).contains(&dim) {
            cx.err(format!("`metric.dim` must lie in 2..=6, got {dim}"));
            return None;
        }
        if kind == Kind::EgbLimit && dim != 4 {
            cx.err(format!(
                "`metric.dim` must be 4 for egb-limit (the Gauss-Bonnet term is four-dimensional), got {dim}"
            ));
            return None;
        }
        match name {
            "sphere_stereographic" => {
                if root.contains_key("grid") {
                    cx.err("remove [grid]: sphere components use closed-form totals".to_string());
                }
                let family = parse_family(cx, m, name, dim)?;
                let radius = match family {
                    Family::SphereStereographic { radius } => radius,
                    _ => unreachable!(),
                };
                Some(ComponentInput::SphereOracle { dim, radius })
            }
            "flat_torus" | "perturbed_flat" => {
                let family = parse_family(cx, m, name, dim)?;
                let grid = parse_grid(cx, root, dim, true)?;
                if !grid.periodic.iter().all(|&p| p) {
                    cx.err(
                        "`grid.periodic` must be true on every axis: a closed component needs a fully periodic grid"
                            .to_string(),
                    );
                    return None;
                }
                Some(ComponentInput::PeriodicMetric {
                    metric: MetricSpec {
                        source: MetricSource::Family { name: name.to_string(), dim, family },
                        grid: Some(grid),
                    },
                })
            }
            other => {
                cx.err(format!(
                    "family `{other}` does not cover a closed manifold; component families: sphere_stereographic, flat_torus, perturbed_flat"
                ));
                None
            }
        }
    }
}

fn parse_mask(cx: &mut Cx, root: &Table, dim: usize) -> Option<MaskSpec> {
    let m = section(cx, root, "mask")?;
    check_keys(cx, m, "mask", &["lo", "hi"]);
    let lo = match m.get("lo") {
        Some(v) => fixed_f64_array(cx, "mask", "lo", v, dim, "one per axis")?,
        None => {
            cx.err("missing required key `mask.lo`".to_string());
            return None;
        }
    };
    let hi = match m.get("hi") {
        Some(v) => fixed_f64_array(cx, "mask", "hi", v, dim, "one per axis")?,
        None => {
            cx.err("missing required key `mask.hi`".to_string());
            return None;
        }
    };
    for a in 0..dim {
        if !(lo[a] < hi[a]) {
            cx.err(format!(
                "`mask.lo` must be strictly below `mask.hi` on axis {a}, got [{}, {}]",
                lo[a], hi[a]
            ));
            return None;
        }
    }
    Some(MaskSpec { lo, hi })
}

/// Parses [schedule]; absent sections yield None and record the kind's
/// module default.
fn parse_schedule(cx: &mut Cx, root: &Table, kind: Kind) -> Option<ScheduleSpec> {
    let s = match section(cx, root, "schedule") {
        Some(s) => s,
        None => {
            let described = match kind {
                Kind::ConnectedSweep => "geometric(first = epsilon_max, ratio = 0.5, count = 20)",
                Kind::Blowup => "geometric(first = 0.2, ratio = 0.5, count = 13)",
                _ => "geometric(first = 0.1, ratio = 0.5, count = 24)",
            };
            cx.applied("schedule", described.to_string());
            return None;
        }
    };
    check_keys(cx, s, "schedule", &["first", "ratio", "count"]);
    let first = req_f64(cx, s, "schedule", "first")?;
    positive(cx, "schedule", "first", first)?;
    let ratio = def_f64(cx, s, "schedule", "ratio", 0.5);
    if !(ratio > 0.0 && ratio < 1.0) {
        cx.err(format!("`schedule.ratio` must lie in (0, 1), got {ratio}"));
        return None;
    }
    let count = def_usize(cx, s, "schedule", "count", 24);
    if count < 4 {
        cx.err(format!(
            "`schedule.count` must be at least 4 for the fits, got {count}"
        ));
        return None;
    }
    Some(ScheduleSpec { first, ratio, count })
}

fn parse_variation(cx: &mut Cx, root: &Table, dim: usize) -> Option<VariationSpec> {
    let empty = Table::new();
    let v = match section(cx, root, "variation") {
        Some(v) => v,
        None => &empty,
    };
    check_keys(
        cx,
        v,
        "variation",
        &["center", "radius", "amplitude", "pattern", "steps"],
    );
    let center = match v.get("center") {
        Some(val) => fixed_f64_array(cx, "variation", "center", val, dim, "one per axis")?,
        None => {
            let c = vec![0.0; dim];
            cx.applied("variation.center", toml_float_array(&c));
            c
        }
    };
    let radius = def_f64(cx, v, "variation", "radius", 0.25);
    positive(cx, "variation", "radius", radius)?;
    let amplitude = def_f64(cx, v, "variation", "amplitude", 0.05);
    finite(cx, "variation", "amplitude", amplitude)?;
    if amplitude == 0.0 {
        cx.err("`variation.amplitude` must be nonzero".to_string());
        return None;
    }
    let pattern = match v.get("pattern") {
        None => {
            cx.applied("variation.pattern", "\"identity\"".to_string());
            identity_pattern(dim)
        }
        Some(Value::String(s)) if s == "identity" => identity_pattern(dim),
        Some(Value::String(s)) => {
            cx.err(format!(
                "`variation.pattern` must be \"identity\" or a {dim}x{dim} row-major array, got \"{s}\""
            ));
            return None;
        }
        Some(val) => fixed_f64_array(
            cx,
            "variation",
            "pattern",
            val,
            dim * dim,
            "row-major, dim x dim",
        )?,
    };
    let steps = match v.get("steps") {
        Some(val) => {
            let arr = as_f64_array(cx, "variation", "steps", val)?;
            if arr.is_empty() {
                cx.err("`variation.steps` must not be empty".to_string());
                return None;
            }
            for &s in &arr {
                positive(cx, "variation", "steps", s)?;
            }
            arr
        }
        None => {
            let s = vec![1e-2, 1e-3, 1e-4];
            cx.applied("variation.steps", toml_float_array(&s));
            s
        }
    };
    Some(VariationSpec { center, radius, amplitude, pattern, steps })
}

fn identity_pattern(dim: usize) -> Vec<f64> {
    let mut p = vec![0.0; dim * dim];
    for i in 0..dim {
        p[i * dim + i] = 1.0;
    }
    p
}

fn parse_surgery(cx: &mut Cx, root: &Table, dim: usize) -> Option<SurgerySpec> {
    let empty = Table::new();
    let s = match section(cx, root, "surgery") {
        Some(s) => s,
        None => &empty,
    };
    check_keys(
        cx,
        s,
        "surgery",
        &[
            "point",
            "collar_inner",
            "collar_outer",
            "cap_family",
            "cap_negative_directions",
            "cap_amplitude",
            "cap_count",
            "cap_euler",
            "epsilon_max",
            "scheme",
        ],
    );
    let point = match s.get("point") {
        Some(v) => fixed_f64_array(cx, "surgery", "point", v, dim, "one per axis")?,
        None => {
            let p = vec![0.0; dim];
            cx.applied("surgery.point", toml_float_array(&p));
            p
        }
    };
    let collar_inner = def_f64(cx, s, "surgery", "collar_inner", 0.5);
    let collar_outer = def_f64(cx, s, "surgery", "collar_outer", 0.8);
    if !(0.0 < collar_inner && collar_inner < collar_outer && collar_outer < 1.0) {
        cx.err(format!(
            "collar radii must satisfy 0 < collar_inner < collar_outer < 1, got ({collar_inner}, {collar_outer})"
        ));
        return None;
    }
    let cap_name = def_str(cx, s, "surgery", "cap_family", "flat");
    let cap = match cap_name.as_str() {
        "flat" => {
            if s.contains_key("cap_amplitude") {
                cx.err("key `surgery.cap_amplitude` only applies to conformal_quadratic caps".to_string());
            }
            let neg = def_usize(cx, s, "surgery", "cap_negative_directions", 0);
            if neg > dim {
                cx.err(format!(
                    "`surgery.cap_negative_directions` must lie in 0..={dim}, got {neg}"
                ));
                return None;
            }
            Family::Flat { negative_directions: neg }
        }
        "conformal_quadratic" => {
            if s.contains_key("cap_negative_directions") {
                cx.err("key `surgery.cap_negative_directions` only applies to flat caps".to_string());
            }
            let amplitude = def_f64(cx, s, "surgery", "cap_amplitude", 0.1);
            finite(cx, "surgery", "cap_amplitude", amplitude)?;
            Family::ConformalQuadratic { amplitude, center: vec![0.0; dim] }
        }
        other => {
            cx.err(format!(
                "`surgery.cap_family` must be one of flat, conformal_quadratic; got `{other}`; {}",
                suggestion(other, &["flat", "conformal_quadratic"])
            ));
            return None;
        }
    };
    let cap_count = def_usize(cx, s, "surgery", "cap_count", 21);
    if cap_count < 9 {
        cx.err(format!(
            "`surgery.cap_count` must be at least 9 to resolve the collars, got {cap_count}"
        ));
        return None;
    }
    let cap_euler = match s.get("cap_euler") {
        Some(v) => as_i64(cx, "surgery", "cap_euler", v)?,
        None => {
            cx.applied("surgery.cap_euler", "1".to_string());
            1
        }
    };
    let epsilon_max = match s.get("epsilon_max") {
        Some(v) => {
            let e = as_f64(cx, "surgery", "epsilon_max", v)?;
            positive(cx, "surgery", "epsilon_max", e)?;
            Some(e)
        }
        None => {
            cx.applied(
                "surgery.epsilon_max",
                "auto (largest well-resolved excision scale for the grid)".to_string(),
            );
            None
        }
    };
    let scheme_name = def_str(cx, s, "surgery", "scheme", "order2");
    let scheme = match scheme_name.as_str() {
        "order2" => Scheme::Order2,
        "order4" => Scheme::Order4,
        other => {
            cx.err(format!(
                "`surgery.scheme` must be one of order2, order4; got `{other}`"
            ));
            return None;
        }
    };
    Some(SurgerySpec {
        point,
        collar_inner,
        collar_outer,
        cap_name,
        cap,
        cap_count,
        cap_euler,
        epsilon_max,
        scheme_name,
        scheme,
    })
}

fn parse_coefficients(cx: &mut Cx, root: &Table) -> Option<CoeffSpec> {
    let empty = Table::new();
    let c = match section(cx, root, "coefficients") {
        Some(c) => c,
        None => &empty,
    };
    check_keys(cx, c, "coefficients", &["lambda", "alpha", "beta", "gamma"]);
    let lambda = def_f64(cx, c, "coefficients", "lambda", 0.0);
    let alpha = def_f64(cx, c, "coefficients", "alpha", 1.0);
    let beta = def_f64(cx, c, "coefficients", "beta", 0.0);
    let gamma = def_f64(cx, c, "coefficients", "gamma", 0.0);
    for (k, v) in [("lambda", lambda), ("alpha", alpha), ("beta", beta), ("gamma", gamma)] {
        finite(cx, "coefficients", k, v)?;
    }
    if alpha == 0.0 && beta == 0.0 && gamma == 0.0 {
        cx.err(
            "at least one of `coefficients.alpha`, `coefficients.beta`, `coefficients.gamma` must be nonzero for a quadratic action"
                .to_string(),
        );
        return None;
    }
    Some(CoeffSpec { lambda, alpha, beta, gamma })
}

fn parse_egb(cx: &mut Cx, root: &Table, component: Option<&ComponentInput>) -> Option<EgbSpec> {
    let empty = Table::new();
    let e = match section(cx, root, "egb") {
        Some(e) => e,
        None => &empty,
    };
    check_keys(cx, e, "egb", &["alpha", "euler", "gb_tolerance"]);
    let alpha = def_f64(cx, e, "egb", "alpha", 1.0);
    finite(cx, "egb", "alpha", alpha)?;
    let euler = match e.get("euler") {
        Some(v) => {
            let x = as_f64(cx, "egb", "euler", v)?;
            finite(cx, "egb", "euler", x)?;
            x
        }
        None => match component {
            Some(ComponentInput::SphereOracle { .. }) => {
                cx.applied("egb.euler", toml_float(2.0));
                2.0
            }
            Some(ComponentInput::PeriodicMetric { .. }) => {
                cx.applied("egb.euler", toml_float(0.0));
                0.0
            }
            Some(_) => {
                cx.err(
                    "`egb.euler` is required with explicit [component] totals (no closed form to derive it from)"
                        .to_string(),
                );
                return None;
            }
            // The component itself failed to parse; its errors are already
            // recorded, so stay quiet here.
            None => return None,
        },
    };
    let gb_tolerance = def_f64(cx, e, "egb", "gb_tolerance", 1e-6);
    positive(cx, "egb", "gb_tolerance", gb_tolerance)?;
    Some(EgbSpec { alpha, euler, gb_tolerance })
}

fn parse_blowup_family(cx: &mut Cx, root: &Table) -> Option<BlowupSpec> {
    let empty = Table::new();
    let f = match section(cx, root, "family") {
        Some(f) => f,
        None => &empty,
    };
    check_keys(
        cx,
        f,
        "family",
        &["base_dim", "gamma", "theta", "delta", "t_count", "base_count"],
    );
    let base_dim = def_usize(cx, f, "family", "base_dim", 2);
    if !(2..=5).contains(&base_dim) {
        cx.err(format!("`family.base_dim` must lie in 2..=5, got {base_dim}"));
        return None;
    }
    let n2 = base_dim * base_dim;
    let gamma = match f.get("gamma") {
        Some(v) => fixed_f64_array(cx, "family", "gamma", v, n2, "row-major, base_dim x base_dim")?,
        None => {
            let g = identity_pattern(base_dim);
            cx.applied("family.gamma", toml_float_array(&g));
            g
        }
    };
    let theta = match f.get("theta") {
        Some(v) => fixed_f64_array(cx, "family", "theta", v, n2, "row-major, base_dim x base_dim")?,
        None if base_dim == 2 => {
            let t = vec![1.0, 0.0, 0.0, -1.0];
            cx.applied("family.theta", toml_float_array(&t));
            t
        }
        None => {
            cx.err(format!(
                "`family.theta` is required for base_dim {base_dim} (no default trace-free oscillation)"
            ));
            return None;
        }
    };
    let delta = def_f64(cx, f, "family", "delta", 0.1);
    if !(delta > 0.0 && delta < 1.0) {
        cx.err(format!("`family.delta` must lie in (0, 1), got {delta}"));
        return None;
    }
    let t_count = def_usize(cx, f, "family", "t_count", 128);
    if t_count < 16 {
        cx.err(format!("`family.t_count` must be at least 16, got {t_count}"));
        return None;
    }
    let base_count = def_usize(cx, f, "family", "base_count", 32);
    if base_count < 4 {
        cx.err(format!("`family.base_count` must be at least 4, got {base_count}"));
        return None;
    }
    Some(BlowupSpec { base_dim, gamma, theta, delta, t_count, base_count })
}

fn parse_expect(cx: &mut Cx, root: &Table, kind: Kind) -> Option<ExpectSpec> {
    let e = section(cx, root, "expect")?;
    check_keys(cx, e, "expect", &["classification", "value", "value_tolerance"]);
    let classification = match e.get("classification") {
        None => None,
        Some(v) => {
            let s = as_str(cx, "expect", "classification", v)?;
            match s {
                "Undefined" => Some(ExpectedClass::Undefined),
                "Value" => Some(ExpectedClass::Value),
                "Zero" => Some(ExpectedClass::Zero),
                other => {
                    cx.err(format!(
                        "`expect.classification` must be one of Undefined, Value, Zero; got `{other}`; {}",
                        suggestion(other, &["Undefined", "Value", "Zero"])
                    ));
                    return None;
                }
            }
        }
    };
    if kind == Kind::EgbLimit && classification.is_some() {
        cx.err(
            "`expect.classification` does not apply to egb-limit; expect a `value` for the limit instead"
                .to_string(),
        );
        return None;
    }
    let value = match e.get("value") {
        None => None,
        Some(v) => {
            let x = as_f64(cx, "expect", "value", v)?;
            finite(cx, "expect", "value", x)?;
            Some(x)
        }
    };
    if value.is_some()
        && kind != Kind::EgbLimit
        && classification != Some(ExpectedClass::Value)
    {
        cx.err(
            "`expect.value` needs `expect.classification = \"Value\"` (only a finite nonzero derivative has a value)"
                .to_string(),
        );
        return None;
    }
    let value_tolerance = def_f64(cx, e, "expect", "value_tolerance", 1e-6);
    positive(cx, "expect", "value_tolerance", value_tolerance)?;
    Some(ExpectSpec { classification, value, value_tolerance })
}

fn tolerance_keys(kind: Kind) -> &'static [&'static str] {
    match kind {
        Kind::CurvatureCheck => &["route_gap", "reference_error"],
        Kind::GeometricDerivative => &["derivative_gap", "pairing_gap"],
        Kind::ConnectedSweep => &["kappa_gap"],
        Kind::Blowup => &["linear_bound", "pole_gap"],
        _ => &[],
    }
}

fn parse_tolerance(cx: &mut Cx, root: &Table, key: &str, default: f64) -> f64 {
    let empty = Table::new();
    // Type and key errors for [tolerances] are recorded once by
    // check_tolerance_keys; a malformed section falls back to defaults here.
    let t = match root.get("tolerances").and_then(Value::as_table) {
        Some(t) => t,
        None => &empty,
    };
    let v = def_f64(cx, t, "tolerances", key, default);
    positive(cx, "tolerances", key, v).unwrap_or(default)
}

fn check_tolerance_keys(cx: &mut Cx, root: &Table, kind: Kind) {
    if let Some(t) = section(cx, root, "tolerances") {
        check_keys(cx, t, "tolerances", tolerance_keys(kind));
    }
}

fn parse_output(cx: &mut Cx, root: &Table) -> OutputSpec {
    let empty = Table::new();
    let o = match section(cx, root, "output") {
        Some(o) => o,
        None => &empty,
    };
    check_keys(cx, o, "output", &["csv", "summary", "echo"]);
    let csv = def_str(cx, o, "output", "csv", "data.csv");
    let summary = def_str(cx, o, "output", "summary", "summary.json");
    let echo = def_str(cx, o, "output", "echo", "echo.toml");
    for (k, v) in [("csv", &csv), ("summary", &summary), ("echo", &echo)] {
        if v.is_empty() {
            cx.err(format!("`output.{k}` must not be empty"));
        }
    }
    OutputSpec { csv, summary, echo }
}

/// Parses and validates a scenario document. On failure the full list of
/// validation errors is returned, not just the first.
pub fn parse_scenario(text: &str) -> Result<ResolvedScenario, Vec<String>> {
    let root: Table = match toml::from_str(text) {
        Ok(t) => t,
        Err(e) => return Err(vec![format!("scenario is not well-formed TOML: {e}")]),
    };
    let mut cx = Cx::default();

    let kind = match root.get("kind") {
        None => {
            cx.err(format!(
                "missing required key `kind`; valid kinds: {}",
                KIND_NAMES.join(", ")
            ));
            None
        }
        Some(v) => match as_str(&mut cx, "", "kind", v) {
            None => None,
            Some(name) => match Kind::from_name(name) {
                Some(k) => Some(k),
                None => {
                    cx.err(format!(
                        "unknown kind `{name}`; {}",
                        suggestion(name, &KIND_NAMES)
                    ));
                    None
                }
            },
        },
    };

    let kind = match kind {
        Some(k) => k,
        None => {
            // Without a kind, still report structural problems against the
            // union of all sections so one pass surfaces as much as possible.
            let mut allowed: Vec<&'static str> = vec!["kind"];
            allowed.extend_from_slice(&ALL_SECTIONS);
            check_keys(&mut cx, &root, "", &allowed);
            return Err(cx.errors);
        }
    };

    let mut allowed: Vec<&'static str> = vec!["kind"];
    allowed.extend_from_slice(kind.sections());
    check_keys(&mut cx, &root, "", &allowed);
    check_tolerance_keys(&mut cx, &root, kind);

    let payload = match kind {
        Kind::CurvatureCheck => {
            let metric = parse_base_metric(&mut cx, &root);
            let tol = CurvatureTolerances {
                route_gap: parse_tolerance(&mut cx, &root, "route_gap", 0.05),
                reference_error: parse_tolerance(&mut cx, &root, "reference_error", 0.05),
            };
            let mask = match (&metric, root.contains_key("mask")) {
                (Some(m), true) => match &m.source {
                    MetricSource::Family { dim, .. } => parse_mask(&mut cx, &root, *dim),
                    MetricSource::File { .. } => {
                        cx.err(
                            "[mask] needs a family metric here; a file metric's dimension is unknown until run time"
                                .to_string(),
                        );
                        None
                    }
                },
                _ => None,
            };
            metric.map(|metric| Payload::CurvatureCheck { metric, mask, tol })
        }
        Kind::GeometricDerivative => {
            let metric = parse_base_metric(&mut cx, &root);
            let dim = metric.as_ref().and_then(|m| match &m.source {
                MetricSource::Family { dim, .. } => Some(*dim),
                MetricSource::File { .. } => None,
            });
            if metric.is_some() && dim.is_none() {
                cx.err(
                    "geometric-derivative needs a family metric (the variation bump is built on its grid)"
                        .to_string(),
                );
            }
            let tol = DerivativeTolerances {
                derivative_gap: parse_tolerance(&mut cx, &root, "derivative_gap", 1e-4),
                pairing_gap: parse_tolerance(&mut cx, &root, "pairing_gap", 0.05),
            };
            match (metric, dim) {
                (Some(metric), Some(dim)) => {
                    let mask = if root.contains_key("mask") {
                        parse_mask(&mut cx, &root, dim)
                    } else {
                        None
                    };
                    let variation = parse_variation(&mut cx, &root, dim);
                    variation.map(|variation| Payload::GeometricDerivative {
                        metric,
                        mask,
                        variation,
                        tol,
                    })
                }
                _ => None,
            }
        }
        Kind::DisconnectedSweep => {
            let component = parse_component(&mut cx, &root, kind);
            let schedule = parse_schedule(&mut cx, &root, kind);
            let expect = if root.contains_key("expect") {
                parse_expect(&mut cx, &root, kind)
            } else {
                None
            };
            component.map(|component| Payload::DisconnectedSweep { component, schedule, expect })
        }
        Kind::ConnectedSweep => {
            let metric = parse_base_metric(&mut cx, &root);
            let dim = metric.as_ref().and_then(|m| match &m.source {
                MetricSource::Family { dim, .. } => Some(*dim),
                MetricSource::File { .. } => None,
            });
            if metric.is_some() && dim.is_none() {
                cx.err(
                    "connected-sweep needs a family metric (the ball chart dimension comes from it)"
                        .to_string(),
                );
            }
            let tol = ConnectedTolerances {
                kappa_gap: parse_tolerance(&mut cx, &root, "kappa_gap", 1e-3),
            };
            match (metric, dim) {
                (Some(metric), Some(dim)) => {
                    let mask = if root.contains_key("mask") {
                        parse_mask(&mut cx, &root, dim)
                    } else {
                        None
                    };
                    let surgery = parse_surgery(&mut cx, &root, dim);
                    let schedule = parse_schedule(&mut cx, &root, kind);
                    let expect = if root.contains_key("expect") {
                        parse_expect(&mut cx, &root, kind)
                    } else {
                        None
                    };
                    surgery.map(|surgery| Payload::ConnectedSweep {
                        metric,
                        mask,
                        surgery,
                        schedule,
                        expect,
                        tol,
                    })
                }
                _ => None,
            }
        }
        Kind::QuadraticSweep => {
            let component = parse_component(&mut cx, &root, kind);
            let coefficients = parse_coefficients(&mut cx, &root);
            let schedule = parse_schedule(&mut cx, &root, kind);
            let expect = if root.contains_key("expect") {
                parse_expect(&mut cx, &root, kind)
            } else {
                None
            };
            match (component, coefficients) {
                (Some(component), Some(coefficients)) => Some(Payload::QuadraticSweep {
                    component,
                    coefficients,
                    schedule,
                    expect,
                }),
                _ => None,
            }
        }
        Kind::EgbLimit => {
            let component = parse_component(&mut cx, &root, kind);
            let egb = parse_egb(&mut cx, &root, component.as_ref());
            let schedule = parse_schedule(&mut cx, &root, kind);
            let expect = if root.contains_key("expect") {
                parse_expect(&mut cx, &root, kind)
            } else {
                None
            };
            match (component, egb) {
                (Some(component), Some(egb)) => {
                    Some(Payload::EgbLimit { component, egb, schedule, expect })
                }
                _ => None,
            }
        }
        Kind::Blowup => {
            let family = parse_blowup_family(&mut cx, &root);
            let schedule = parse_schedule(&mut cx, &root, kind);
            let tol = BlowupTolerances {
                linear_bound: parse_tolerance(&mut cx, &root, "linear_bound", 1e-6),
                pole_gap: parse_tolerance(&mut cx, &root, "pole_gap", 1e-3),
            };
            family.map(|family| Payload::Blowup { family, schedule, tol })
        }
    };

    let output = parse_output(&mut cx, &root);

    if !cx.errors.is_empty() {
        return Err(cx.errors);
    }
    let payload = payload.expect("payload is present when no errors were recorded");
    Ok(ResolvedScenario {
        kind,
        payload,
        output,
        applied_defaults: cx.defaults,
    })
}

pub fn parse_scenario_path(path: &Path) -> Result<ResolvedScenario, Vec<String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| vec![format!("cannot read scenario file {}: {e}", path.display())])?;
    parse_scenario(&text)
}

/// Values that only become known while the runner resolves module defaults
/// (data-dependent quantities the parser cannot compute).
#[derive(Debug, Clone, Default)]
pub struct RuntimeEcho {
    /// The fully resolved shrinking schedule.
    pub epsilons: Option<Vec<f64>>,
    /// The resolved largest excision scale (connected-sweep).
    pub epsilon_max: Option<f64>,
}

fn echo_metric(out: &mut String, metric: &MetricSpec) {
    out.push_str("\n[metric]\n");
    match &metric.source {
        MetricSource::Family { name, dim, family } => {
            let _ = writeln!(out, "family = {name:?}");
            let _ = writeln!(out, "dim = {dim}");
            match family {
                Family::Flat { negative_directions } => {
                    let _ = writeln!(out, "negative_directions = {negative_directions}");
                }
                Family::FlatTorus => {}
                Family::SphereStereographic { radius } => {
                    let _ = writeln!(out, "radius = {}", toml_float(*radius));
                }
                Family::ConformalQuadratic { amplitude, center } => {
                    let _ = writeln!(out, "amplitude = {}", toml_float(*amplitude));
                    let _ = writeln!(out, "center = {}", toml_float_array(center));
                }
                Family::PerturbedFlat { negative_directions, amplitude, waves, seed } => {
                    let _ = writeln!(out, "negative_directions = {negative_directions}");
                    let _ = writeln!(out, "amplitude = {}", toml_float(*amplitude));
                    let _ = writeln!(out, "waves = {waves}");
                    let _ = writeln!(out, "seed = {seed}");
                }
            }
        }
        MetricSource::File { path, signature_negative, det_floor } => {
            let _ = writeln!(out, "file = {path:?}");
            let _ = writeln!(out, "signature_negative = {signature_negative}");
            let _ = writeln!(out, "det_floor = {}", toml_float(*det_floor));
        }
    }
    if let Some(grid) = &metric.grid {
        out.push_str("\n[grid]\n");
        let _ = writeln!(out, "lo = {}", toml_float_array(&grid.lo));
        let _ = writeln!(out, "hi = {}", toml_float_array(&grid.hi));
        let _ = writeln!(out, "count = {}", toml_usize_array(&grid.count));
        let _ = writeln!(out, "periodic = {}", toml_bool_array(&grid.periodic));
    }
}

fn echo_component(out: &mut String, component: &ComponentInput) {
    match component {
        ComponentInput::SphereOracle { dim, radius } => {
            out.push_str("\n[metric]\n");
            let _ = writeln!(out, "family = \"sphere_stereographic\"");
            let _ = writeln!(out, "dim = {dim}");
            let _ = writeln!(out, "radius = {}", toml_float(*radius));
        }
        ComponentInput::PeriodicMetric { metric } => echo_metric(out, metric),
        ComponentInput::ExplicitAction { dim, action } => {
            out.push_str("\n[component]\n");
            let _ = writeln!(out, "dim = {dim}");
            let _ = writeln!(out, "action = {}", toml_float(*action));
        }
        ComponentInput::ExplicitTotals {
            dim,
            volume,
            einstein_hilbert,
            r_squared,
            ricci_squared,
            riemann_squared,
        } => {
            out.push_str("\n[component]\n");
            let _ = writeln!(out, "dim = {dim}");
            let _ = writeln!(out, "volume = {}", toml_float(*volume));
            let _ = writeln!(out, "einstein_hilbert = {}", toml_float(*einstein_hilbert));
            let _ = writeln!(out, "r_squared = {}", toml_float(*r_squared));
            let _ = writeln!(out, "ricci_squared = {}", toml_float(*ricci_squared));
            let _ = writeln!(out, "riemann_squared = {}", toml_float(*riemann_squared));
        }
    }
}

fn echo_mask(out: &mut String, mask: &Option<MaskSpec>) {
    if let Some(mask) = mask {
        out.push_str("\n[mask]\n");
        let _ = writeln!(out, "lo = {}", toml_float_array(&mask.lo));
        let _ = writeln!(out, "hi = {}", toml_float_array(&mask.hi));
    }
}

fn echo_schedule(out: &mut String, schedule: &Option<ScheduleSpec>, rt: &RuntimeEcho) {
    out.push_str("\n[schedule]\n");
    if let Some(s) = schedule {
        let _ = writeln!(out, "first = {}", toml_float(s.first));
        let _ = writeln!(out, "ratio = {}", toml_float(s.ratio));
        let _ = writeln!(out, "count = {}", s.count);
    }
    if let Some(eps) = &rt.epsilons {
        let _ = writeln!(out, "epsilons = {}", toml_float_array(eps));
    }
}

fn echo_expect(out: &mut String, expect: &Option<ExpectSpec>) {
    if let Some(e) = expect {
        out.push_str("\n[expect]\n");
        if let Some(c) = e.classification {
            let _ = writeln!(out, "classification = {:?}", c.name());
        }
        if let Some(v) = e.value {
            let _ = writeln!(out, "value = {}", toml_float(v));
        }
        let _ = writeln!(out, "value_tolerance = {}", toml_float(e.value_tolerance));
    }
}

fn echo_output(out: &mut String, o: &OutputSpec) {
    out.push_str("\n[output]\n");
    let _ = writeln!(out, "csv = {:?}", o.csv);
    let _ = writeln!(out, "summary = {:?}", o.summary);
    let _ = writeln!(out, "echo = {:?}", o.echo);
}

/// Renders the fully resolved configuration, including every module default
/// the runner filled in, as a TOML document.
pub fn echo_toml(sc: &ResolvedScenario, rt: &RuntimeEcho) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "kind = {:?}", sc.kind.name());
    match &sc.payload {
        Payload::CurvatureCheck { metric, mask, tol } => {
            echo_metric(&mut out, metric);
            echo_mask(&mut out, mask);
            out.push_str("\n[tolerances]\n");
            let _ = writeln!(out, "route_gap = {}", toml_float(tol.route_gap));
            let _ = writeln!(out, "reference_error = {}", toml_float(tol.reference_error));
        }
        Payload::GeometricDerivative { metric, mask, variation, tol } => {
            echo_metric(&mut out, metric);
            echo_mask(&mut out, mask);
            out.push_str("\n[variation]\n");
            let _ = writeln!(out, "center = {}", toml_float_array(&variation.center));
            let _ = writeln!(out, "radius = {}", toml_float(variation.radius));
            let _ = writeln!(out, "amplitude = {}", toml_float(variation.amplitude));
            let _ = writeln!(out, "pattern = {}", toml_float_array(&variation.pattern));
            let _ = writeln!(out, "steps = {}", toml_float_array(&variation.steps));
            out.push_str("\n[tolerances]\n");
            let _ = writeln!(out, "derivative_gap = {}", toml_float(tol.derivative_gap));
            let _ = writeln!(out, "pairing_gap = {}", toml_float(tol.pairing_gap));
        }
        Payload::DisconnectedSweep { component, schedule, expect } => {
            echo_component(&mut out, component);
            echo_schedule(&mut out, schedule, rt);
            echo_expect(&mut out, expect);
        }
        Payload::ConnectedSweep { metric, mask, surgery, schedule, expect, tol } => {
            echo_metric(&mut out, metric);
            echo_mask(&mut out, mask);
            out.push_str("\n[surgery]\n");
            let _ = writeln!(out, "point = {}", toml_float_array(&surgery.point));
            let _ = writeln!(out, "collar_inner = {}", toml_float(surgery.collar_inner));
            let _ = writeln!(out, "collar_outer = {}", toml_float(surgery.collar_outer));
            let _ = writeln!(out, "cap_family = {:?}", surgery.cap_name);
            match &surgery.cap {
                Family::Flat { negative_directions } => {
                    let _ = writeln!(out, "cap_negative_directions = {negative_directions}");
                }
                Family::ConformalQuadratic { amplitude, .. } => {
                    let _ = writeln!(out, "cap_amplitude = {}", toml_float(*amplitude));
                }
                _ => {}
            }
            let _ = writeln!(out, "cap_count = {}", surgery.cap_count);
            let _ = writeln!(out, "cap_euler = {}", surgery.cap_euler);
            match (surgery.epsilon_max, rt.epsilon_max) {
                (Some(e), _) | (None, Some(e)) => {
                    let _ = writeln!(out, "epsilon_max = {}", toml_float(e));
                }
                (None, None) => {}
            }
            let _ = writeln!(out, "scheme = {:?}", surgery.scheme_name);
            echo_schedule(&mut out, schedule, rt);
            echo_expect(&mut out, expect);
            out.push_str("\n[tolerances]\n");
            let _ = writeln!(out, "kappa_gap = {}", toml_float(tol.kappa_gap));
        }
        Payload::QuadraticSweep { component, coefficients, schedule, expect } => {
            echo_component(&mut out, component);
            out.push_str("\n[coefficients]\n");
            let _ = writeln!(out, "lambda = {}", toml_float(coefficients.lambda));
            let _ = writeln!(out, "alpha = {}", toml_float(coefficients.alpha));
            let _ = writeln!(out, "beta = {}", toml_float(coefficients.beta));
            let _ = writeln!(out, "gamma = {}", toml_float(coefficients.gamma));
            echo_schedule(&mut out, schedule, rt);
            echo_expect(&mut out, expect);
        }
        Payload::EgbLimit { component, egb, schedule, expect } => {
            echo_component(&mut out, component);
            out.push_str("\n[egb]\n");
            let _ = writeln!(out, "alpha = {}", toml_float(egb.alpha));
            let _ = writeln!(out, "euler = {}", toml_float(egb.euler));
            let _ = writeln!(out, "gb_tolerance = {}", toml_float(egb.gb_tolerance));
            echo_schedule(&mut out, schedule, rt);
            echo_expect(&mut out, expect);
        }
        Payload::Blowup { family, schedule, tol } => {
            out.push_str("\n[family]\n");
            let _ = writeln!(out, "base_dim = {}", family.base_dim);
            let _ = writeln!(out, "gamma = {}", toml_float_array(&family.gamma));
            let _ = writeln!(out, "theta = {}", toml_float_array(&family.theta));
            let _ = writeln!(out, "delta = {}", toml_float(family.delta));
            let _ = writeln!(out, "t_count = {}", family.t_count);
            let _ = writeln!(out, "base_count = {}", family.base_count);
            echo_schedule(&mut out, schedule, rt);
            out.push_str("\n[tolerances]\n");
            let _ = writeln!(out, "linear_bound = {}", toml_float(tol.linear_bound));
            let _ = writeln!(out, "pole_gap = {}", toml_float(tol.pole_gap));
        }
    }
    echo_output(&mut out, &sc.output);
    if !sc.applied_defaults.is_empty() {
        out.push('\n');
        for (key, value) in &sc.applied_defaults {
            out.push_str("[[applied_defaults]]\n");
            let _ = writeln!(out, "key = {key:?}");
            let _ = writeln!(out, "value = {value:?}");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn errors_of(text: &str) -> Vec<String> {
        parse_scenario(text).err().expect("expected validation errors")
    }

    #[test]
    fn a_minimal_curvature_check_fills_every_default() {
        let sc = parse_scenario(
            "kind = \"curvature-check\"\n[metric]\nfamily = \"flat\"\ndim = 3\n",
        )
        .unwrap();
        assert_eq!(sc.kind, Kind::CurvatureCheck);
        match &sc.payload {
            Payload::CurvatureCheck { metric, tol } => {
                let grid = metric.grid.as_ref().unwrap();
                assert_eq!(grid.count, vec![17, 17, 17]);
                assert_eq!(grid.lo, vec![-1.0; 3]);
                assert!((tol.route_gap - 0.05).abs() < 1e-15);
            }
            other => panic!("wrong payload {other:?}"),
        }
        let keys: Vec<&str> = sc.applied_defaults.iter().map(|d| d.0.as_str()).collect();
        for expected in [
            "metric.negative_directions",
            "grid.lo",
            "grid.hi",
            "grid.count",
            "grid.periodic",
            "tolerances.route_gap",
            "tolerances.reference_error",
            "output.csv",
            "output.summary",
            "output.echo",
        ] {
            assert!(keys.contains(&expected), "missing default for {expected}: {keys:?}");
        }
    }

    #[test]
    fn a_misspelled_family_suggests_the_nearest_name() {
        let errs = errors_of(
            "kind = \"curvature-check\"\n[metric]\nfamily = \"sphre\"\ndim = 3\n",
        );
        assert!(
            errs.iter().any(|e| e.contains("sphere_stereographic")),
            "no suggestion in {errs:?}"
        );
    }

    #[test]
    fn every_error_is_reported_not_just_the_first() {
        let errs = errors_of(
            "kind = \"curvature-check\"\n[metric]\nfamily = \"sphre\"\ndim = 3\nraduis = 1.0\n[grid]\ncount = 2\n",
        );
        assert!(errs.len() >= 3, "expected at least three errors, got {errs:?}");
        assert!(errs.iter().any(|e| e.contains("sphere_stereographic")));
        assert!(errs.iter().any(|e| e.contains("`raduis`") && e.contains("radius")));
        assert!(errs.iter().any(|e| e.contains("at least 5")));
    }

    #[test]
    fn unknown_top_level_sections_get_suggestions() {
        let errs = errors_of(
            "kind = \"blowup\"\n[famly]\ndelta = 0.1\n",
        );
        assert!(
            errs.iter().any(|e| e.contains("`famly`") && e.contains("family")),
            "no suggestion in {errs:?}"
        );
    }

    #[test]
    fn range_violations_name_the_documented_range() {
        let errs = errors_of(
            "kind = \"blowup\"\n[family]\ndelta = 1.5\n",
        );
        assert!(
            errs.iter().any(|e| e.contains("(0, 1)") && e.contains("1.5")),
            "no range in {errs:?}"
        );
    }

    #[test]
    fn connected_sweep_records_the_collar_defaults() {
        let sc = parse_scenario(
            "kind = \"connected-sweep\"\n[metric]\nfamily = \"flat\"\ndim = 3\n[surgery]\nepsilon_max = 0.04\n",
        )
        .unwrap();
        match &sc.payload {
            Payload::ConnectedSweep { surgery, .. } => {
                assert!((surgery.collar_inner - 0.5).abs() < 1e-15);
                assert!((surgery.collar_outer - 0.8).abs() < 1e-15);
            }
            other => panic!("wrong payload {other:?}"),
        }
        let find = |key: &str| {
            sc.applied_defaults
                .iter()
                .find(|d| d.0 == key)
                .unwrap_or_else(|| panic!("no default recorded for {key}"))
                .1
                .clone()
        };
        assert_eq!(find("surgery.collar_inner"), "0.5");
        assert_eq!(find("surgery.collar_outer"), "0.8");
        let echo = echo_toml(&sc, &RuntimeEcho::default());
        assert!(echo.contains("collar_inner = 0.5"), "echo:\n{echo}");
        assert!(echo.contains("collar_outer = 0.8"));
        assert!(echo.contains("[[applied_defaults]]"));
        assert!(echo.contains("\"surgery.collar_inner\""));
    }

    #[test]
    fn the_echo_is_valid_toml_with_resolved_values() {
        let sc = parse_scenario(
            "kind = \"disconnected-sweep\"\n[metric]\nfamily = \"sphere_stereographic\"\ndim = 4\n[expect]\nclassification = \"Value\"\nvalue = 315.8\n",
        )
        .unwrap();
        let rt = RuntimeEcho {
            epsilons: Some(vec![0.1, 0.05, 0.025, 0.0125]),
            epsilon_max: None,
        };
        let echo = echo_toml(&sc, &rt);
        let parsed: Table = toml::from_str(&echo).expect("echo must be valid TOML");
        assert_eq!(
            parsed["kind"].as_str().unwrap(),
            "disconnected-sweep",
        );
        assert!(parsed["schedule"]["epsilons"].as_array().unwrap().len() == 4);
        assert!(parsed["metric"]["radius"].as_float().is_some());
        assert!(parsed["applied_defaults"].as_array().unwrap().iter().any(|d| {
            d["key"].as_str() == Some("metric.radius")
        }));
    }

    #[test]
    fn component_and_metric_are_mutually_exclusive() {
        let errs = errors_of(
            "kind = \"disconnected-sweep\"\n[metric]\nfamily = \"sphere_stereographic\"\ndim = 4\n[component]\ndim = 4\naction = 1.0\n",
        );
        assert!(errs.iter().any(|e| e.contains("mutually exclusive")), "{errs:?}");
    }

    #[test]
    fn open_components_are_rejected() {
        let errs = errors_of(
            "kind = \"disconnected-sweep\"\n[metric]\nfamily = \"flat\"\ndim = 4\n",
        );
        assert!(
            errs.iter().any(|e| e.contains("closed manifold")),
            "{errs:?}"
        );
    }

    #[test]
    fn egb_requires_dimension_four() {
        let errs = errors_of(
            "kind = \"egb-limit\"\n[metric]\nfamily = \"sphere_stereographic\"\ndim = 5\n",
        );
        assert!(errs.iter().any(|e| e.contains("must be 4")), "{errs:?}");
    }

    #[test]
    fn quadratic_couplings_must_not_all_vanish() {
        let errs = errors_of(
            "kind = \"quadratic-sweep\"\n[metric]\nfamily = \"sphere_stereographic\"\ndim = 6\n[coefficients]\nalpha = 0.0\n",
        );
        assert!(errs.iter().any(|e| e.contains("nonzero")), "{errs:?}");
    }

    #[test]
    fn expect_value_needs_the_value_classification() {
        let errs = errors_of(
            "kind = \"disconnected-sweep\"\n[metric]\nfamily = \"sphere_stereographic\"\ndim = 4\n[expect]\nvalue = 315.8\n",
        );
        assert!(errs.iter().any(|e| e.contains("classification")), "{errs:?}");
    }

    #[test]
    fn misplaced_family_parameters_are_rejected() {
        let errs = errors_of(
            "kind = \"curvature-check\"\n[metric]\nfamily = \"flat\"\ndim = 3\nradius = 2.0\n",
        );
        assert!(
            errs.iter().any(|e| e.contains("does not apply to family `flat`")),
            "{errs:?}"
        );
    }

    #[test]
    fn the_torus_defaults_to_a_periodic_grid() {
        let sc = parse_scenario(
            "kind = \"curvature-check\"\n[metric]\nfamily = \"flat_torus\"\ndim = 3\n",
        )
        .unwrap();
        match &sc.payload {
            Payload::CurvatureCheck { metric, .. } => {
                assert_eq!(metric.grid.as_ref().unwrap().periodic, vec![true; 3]);
            }
            other => panic!("wrong payload {other:?}"),
        }
        assert!(sc
            .applied_defaults
            .iter()
            .any(|d| d.0 == "grid.periodic" && d.1 == "true"));
    }

    #[test]
    fn blowup_defaults_resolve_to_the_flat_torus_family() {
        let sc = parse_scenario("kind = \"blowup\"\n").unwrap();
        match &sc.payload {
            Payload::Blowup { family, .. } => {
                assert_eq!(family.base_dim, 2);
                assert_eq!(family.gamma, vec![1.0, 0.0, 0.0, 1.0]);
                assert_eq!(family.theta, vec![1.0, 0.0, 0.0, -1.0]);
                assert_eq!(family.t_count, 128);
            }
            other => panic!("wrong payload {other:?}"),
        }
    }

    #[test]
    fn kind_typos_are_suggested() {
        let errs = errors_of("kind = \"blowpu\"\n");
        assert!(errs.iter().any(|e| e.contains("blowup")), "{errs:?}");
    }
}
