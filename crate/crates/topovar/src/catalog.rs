//! Analytic metric families with closed-form curvature values.
//!
//! Every family here comes with reference data that is known exactly:
//! pointwise scalar curvature on the chart, and (for charts that cover a
//! closed manifold up to a measure-zero set) the volume and the total
//! curvature action. These closed forms are what the finite-difference
//! kernels are tested against, so they are computed from textbook formulas
//! only, never from the kernels themselves.
//!
//! Chart totals for curved closed manifolds (spheres) are never obtained by
//! numerical quadrature over the chart: the stereographic chart misses a
//! point and the integrand decays slowly, so totals always come from the
//! closed forms while grids only validate pointwise curvature.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ball::sphere_area;
use crate::error::{Error, Result};
use crate::field::{MetricField, ScalarField, TensorField};
use crate::grid::Grid;
use crate::smallmat::sym_eigenvalues;

/// Reference values for a chart that covers a closed manifold.
///
/// All fields are mutually consistent: for the constant-curvature families
/// stored here, `total_action = scalar_curvature * volume` holds exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedOracle {
    /// Constant scalar curvature of the closed manifold.
    pub scalar_curvature: f64,
    /// Einstein constant: the Ricci tensor equals this multiple of the metric.
    pub ricci_eigenvalue: f64,
    /// Riemannian volume of the closed manifold.
    pub volume: f64,
    /// Integral of the scalar curvature over the closed manifold.
    pub total_action: f64,
    /// Euler characteristic, when the family fixes the topology.
    pub euler_characteristic: Option<f64>,
}

/// Closed-form data for the round sphere of a given dimension and radius,
/// including the quadratic curvature invariants used by the higher-order
/// action tests.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereOracle {
    pub dim: usize,
    pub radius: f64,
    /// n(n-1)/rho^2.
    pub scalar_curvature: f64,
    /// (n-1)/rho^2; the Ricci tensor is this multiple of the metric.
    pub ricci_eigenvalue: f64,
    /// Area of the unit n-sphere times rho^n.
    pub volume: f64,
    /// scalar_curvature * volume.
    pub total_action: f64,
    /// Full contraction Ric:Ric = n(n-1)^2/rho^4.
    pub ricci_squared: f64,
    /// Full contraction Riem:Riem = 2n(n-1)/rho^4.
    pub riemann_squared: f64,
    /// R^2 - 4 Ric:Ric + Riem:Riem.
    pub gauss_bonnet_density: f64,
    /// gauss_bonnet_density * volume.
    pub gauss_bonnet_total: f64,
    /// 2 for even-dimensional spheres, 0 for odd.
    pub euler_characteristic: f64,
}

/// Returns the closed-form sphere data for dimension `dim` and the given
/// radius.
pub fn sphere_oracle(dim: usize, radius: f64) -> Result<SphereOracle> {
    if !(2..=6).contains(&dim) {
        return Err(Error::Config(format!(
            "sphere oracle supports dimensions 2..=6, got {dim}"
        )));
    }
    if !(radius > 0.0) {
        return Err(Error::Domain(format!(
            "sphere radius must be positive, got {radius}"
        )));
    }
    let n = dim as f64;
    let rho2 = radius * radius;
    let scalar = n * (n - 1.0) / rho2;
    let volume = sphere_area(dim) * radius.powi(dim as i32);
    let ricci_squared = n * (n - 1.0) * (n - 1.0) / (rho2 * rho2);
    let riemann_squared = 2.0 * n * (n - 1.0) / (rho2 * rho2);
    let gb = scalar * scalar - 4.0 * ricci_squared + riemann_squared;
    Ok(SphereOracle {
        dim,
        radius,
        scalar_curvature: scalar,
        ricci_eigenvalue: (n - 1.0) / rho2,
        volume,
        total_action: scalar * volume,
        ricci_squared,
        riemann_squared,
        gauss_bonnet_density: gb,
        gauss_bonnet_total: gb * volume,
        euler_characteristic: if dim % 2 == 0 { 2.0 } else { 0.0 },
    })
}

/// A named metric family that can be instantiated on a grid.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// Constant diagonal metric with the leading `negative_directions`
    /// entries equal to -1 and the rest +1.
    Flat { negative_directions: usize },
    /// Identity metric on a fully periodic grid.
    FlatTorus,
    /// Round sphere of the given radius in the stereographic chart:
    /// `g_ij = (2 rho^2 / (rho^2 + |x|^2))^2 delta_ij`.
    SphereStereographic { radius: f64 },
    /// Conformally flat metric `g = w^2 delta` with `w = 1 + a |x - c|^2`.
    ConformalQuadratic { amplitude: f64, center: Vec<f64> },
    /// Identity (or Lorentzian diagonal) metric plus a deterministic sum of
    /// random cosine waves with grid-commensurate frequencies.
    PerturbedFlat {
        negative_directions: usize,
        amplitude: f64,
        waves: usize,
        seed: u64,
    },
}

/// Optional parameters used when addressing a family by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FamilyParams {
    pub radius: Option<f64>,
    pub negative_directions: Option<usize>,
    pub amplitude: Option<f64>,
    pub center: Option<Vec<f64>>,
    pub waves: Option<usize>,
    pub seed: Option<u64>,
}

pub const FAMILY_NAMES: [&str; 5] = [
    "flat",
    "flat_torus",
    "sphere_stereographic",
    "conformal_quadratic",
    "perturbed_flat",
];

impl Family {
    /// Resolves a family from its name and a parameter bag, applying
    /// defaults for omitted parameters.
    pub fn from_name(name: &str, params: &FamilyParams) -> Result<Family> {
        match name {
            "flat" => Ok(Family::Flat {
                negative_directions: params.negative_directions.unwrap_or(0),
            }),
            "flat_torus" => Ok(Family::FlatTorus),
            "sphere_stereographic" => Ok(Family::SphereStereographic {
                radius: params.radius.unwrap_or(1.0),
            }),
            "conformal_quadratic" => {
                let center = params.center.clone().ok_or_else(|| {
                    Error::Config("conformal_quadratic requires a center".to_string())
                })?;
                Ok(Family::ConformalQuadratic {
                    amplitude: params.amplitude.unwrap_or(0.1),
                    center,
                })
            }
            "perturbed_flat" => Ok(Family::PerturbedFlat {
                negative_directions: params.negative_directions.unwrap_or(0),
                amplitude: params.amplitude.unwrap_or(0.2),
                waves: params.waves.unwrap_or(3),
                seed: params.seed.unwrap_or(0),
            }),
            other => Err(Error::Config(format!(
                "unknown metric family '{other}'; known families: {}",
                FAMILY_NAMES.join(", ")
            ))),
        }
    }

    /// Instantiates the family on a grid.
    pub fn build(&self, grid: &Grid) -> Result<MetricField> {
        match self {
            Family::Flat { negative_directions } => flat(grid, *negative_directions),
            Family::FlatTorus => flat_torus(grid),
            Family::SphereStereographic { radius } => sphere_stereographic(grid, *radius),
            Family::ConformalQuadratic { amplitude, center } => {
                conformal_quadratic(grid, *amplitude, center)
            }
            Family::PerturbedFlat {
                negative_directions,
                amplitude,
                waves,
                seed,
            } => perturbed_flat(grid, *negative_directions, *amplitude, *waves, *seed),
        }
    }

    /// Closed-form pointwise scalar curvature at a chart point, when the
    /// family has one.
    pub fn scalar_curvature_at(&self, x: &[f64]) -> Option<f64> {
        match self {
            Family::Flat { .. } | Family::FlatTorus => Some(0.0),
            Family::SphereStereographic { radius } => {
                let n = x.len() as f64;
                Some(n * (n - 1.0) / (radius * radius))
            }
            Family::ConformalQuadratic { amplitude, center } => {
                Some(conformal_quadratic_scalar(*amplitude, center, x))
            }
            Family::PerturbedFlat { .. } => None,
        }
    }

    /// Closed-manifold totals, when the chart covers a closed manifold.
    pub fn oracle(&self, dim: usize) -> Result<Option<ClosedOracle>> {
        match self {
            Family::SphereStereographic { radius } => {
                let s = sphere_oracle(dim, *radius)?;
                Ok(Some(ClosedOracle {
                    scalar_curvature: s.scalar_curvature,
                    ricci_eigenvalue: s.ricci_eigenvalue,
                    volume: s.volume,
                    total_action: s.total_action,
                    euler_characteristic: Some(s.euler_characteristic),
                }))
            }
            Family::FlatTorus => Ok(Some(ClosedOracle {
                scalar_curvature: 0.0,
                ricci_eigenvalue: 0.0,
                volume: f64::NAN, // depends on the grid periods; see torus_oracle
                total_action: 0.0,
                euler_characteristic: Some(0.0),
            })),
            _ => Ok(None),
        }
    }
}

/// Closed-manifold totals for the flat torus on a concrete periodic grid.
pub fn torus_oracle(grid: &Grid) -> Result<ClosedOracle> {
    if !grid.periodic().iter().all(|&p| p) {
        return Err(Error::Geometry(
            "the flat torus needs a fully periodic grid".to_string(),
        ));
    }
    Ok(ClosedOracle {
        scalar_curvature: 0.0,
        ricci_eigenvalue: 0.0,
        volume: grid.volume(),
        total_action: 0.0,
        euler_characteristic: Some(0.0),
    })
}

/// Constant diagonal metric; the leading `negative_directions` diagonal
/// entries are -1 and the rest are +1.
pub fn flat(grid: &Grid, negative_directions: usize) -> Result<MetricField> {
    let n = grid.dim();
    if negative_directions > n {
        return Err(Error::Config(format!(
            "{negative_directions} negative directions exceed dimension {n}"
        )));
    }
    MetricField::from_matrix_fn(grid.clone(), (negative_directions, n - negative_directions), 0.5, |_x, m| {
        for i in 0..n {
            for j in 0..n {
                m[i * n + j] = if i != j {
                    0.0
                } else if i < negative_directions {
                    -1.0
                } else {
                    1.0
                };
            }
        }
    })
}

/// Identity metric on a fully periodic grid.
pub fn flat_torus(grid: &Grid) -> Result<MetricField> {
    if !grid.periodic().iter().all(|&p| p) {
        return Err(Error::Geometry(
            "the flat torus needs a fully periodic grid".to_string(),
        ));
    }
    flat(grid, 0)
}

/// Round sphere of the given radius in the stereographic chart.
///
/// The chart covers the sphere minus one point; pointwise curvature is
/// n(n-1)/radius^2 everywhere on the chart.
pub fn sphere_stereographic(grid: &Grid, radius: f64) -> Result<MetricField> {
    if !(radius > 0.0) {
        return Err(Error::Domain(format!(
            "sphere radius must be positive, got {radius}"
        )));
    }
    if grid.periodic().iter().any(|&p| p) {
        return Err(Error::Geometry(
            "the stereographic chart is not periodic; use a bounded grid".to_string(),
        ));
    }
    let n = grid.dim();
    let rho2 = radius * radius;
    // The conformal factor is smallest at the corner farthest from the
    // origin; size the determinant floor from that corner.
    let rmax2: f64 = grid
        .bounds()
        .iter()
        .map(|&(lo, hi)| lo.abs().max(hi.abs()).powi(2))
        .sum();
    let wmin = 2.0 * rho2 / (rho2 + rmax2);
    let floor = 0.25 * wmin.powi(2 * n as i32);
    MetricField::from_matrix_fn(grid.clone(), (0, n), floor, |x, m| {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let w = 2.0 * rho2 / (rho2 + r2);
        let w2 = w * w;
        for i in 0..n {
            for j in 0..n {
                m[i * n + j] = if i == j { w2 } else { 0.0 };
            }
        }
    })
}

/// Conformally flat metric `g = w^2 delta` with `w = 1 + a |x - c|^2`.
pub fn conformal_quadratic(grid: &Grid, amplitude: f64, center: &[f64]) -> Result<MetricField> {
    let n = grid.dim();
    if center.len() != n {
        return Err(Error::Config(format!(
            "center has {} components, grid has dimension {n}",
            center.len()
        )));
    }
    if grid.periodic().iter().any(|&p| p) {
        return Err(Error::Geometry(
            "the quadratic conformal factor is not periodic; use a bounded grid".to_string(),
        ));
    }
    // w is radial around the center, so its extrema over the box lie at the
    // center or at a corner.
    let rmax2: f64 = grid
        .bounds()
        .iter()
        .zip(center)
        .map(|(&(lo, hi), &c)| (lo - c).abs().max((hi - c).abs()).powi(2))
        .sum();
    let wmin = (1.0 + amplitude * rmax2).min(1.0);
    if wmin <= 0.1 {
        return Err(Error::Degenerate {
            node: 0,
            det: wmin.powi(2 * n as i32),
            floor: 0.1f64.powi(2 * n as i32),
        });
    }
    let floor = 0.25 * wmin.powi(2 * n as i32);
    MetricField::from_matrix_fn(grid.clone(), (0, n), floor, |x, m| {
        let r2: f64 = x.iter().zip(center).map(|(v, c)| (v - c) * (v - c)).sum();
        let w = 1.0 + amplitude * r2;
        let w2 = w * w;
        for i in 0..n {
            for j in 0..n {
                m[i * n + j] = if i == j { w2 } else { 0.0 };
            }
        }
    })
}

/// Closed-form scalar curvature of `conformal_quadratic` at a chart point.
///
/// For `g = w^2 delta` in n dimensions,
/// `R = -2(n-1) (Lap w)/w^3 - (n-1)(n-4) |grad w|^2 / w^4`;
/// with `w = 1 + a |x-c|^2` this reduces to
/// `R = -4a(n-1) [ n / w^3 + a (n-4) |x-c|^2 / w^4 ]`.
pub fn conformal_quadratic_scalar(amplitude: f64, center: &[f64], x: &[f64]) -> f64 {
    let n = center.len() as f64;
    let r2: f64 = x.iter().zip(center).map(|(v, c)| (v - c) * (v - c)).sum();
    let w = 1.0 + amplitude * r2;
    -4.0 * amplitude * (n - 1.0) * (n / w.powi(3) + amplitude * (n - 4.0) * r2 / w.powi(4))
}

/// Scalar bump profile `(1 - |x-c|^2/r^2)^4` inside the ball of radius `r`
/// around `c`, zero outside. Three times continuously differentiable at the
/// support boundary.
pub fn bump_scalar(grid: &Grid, center: &[f64], radius: f64) -> Result<ScalarField> {
    check_bump_support(grid, center, radius)?;
    let r2 = radius * radius;
    Ok(ScalarField::from_fn(grid.clone(), |x| {
        let d2: f64 = x.iter().zip(center).map(|(v, c)| (v - c) * (v - c)).sum();
        if d2 >= r2 {
            0.0
        } else {
            (1.0 - d2 / r2).powi(4)
        }
    }))
}

/// Compactly supported symmetric perturbation: `amplitude * bump(x) * P`
/// where `P` is a constant symmetric matrix given row-major (only the upper
/// triangle is read).
pub fn bump_perturbation(
    grid: &Grid,
    center: &[f64],
    radius: f64,
    amplitude: f64,
    pattern: &[f64],
) -> Result<TensorField> {
    let n = grid.dim();
    if pattern.len() != n * n {
        return Err(Error::Config(format!(
            "pattern has {} entries, expected {}",
            pattern.len(),
            n * n
        )));
    }
    let bump = bump_scalar(grid, center, radius)?;
    let len = grid.len();
    let mut comps = vec![0.0; n * n * len];
    for i in 0..n {
        for j in 0..n {
            let p = amplitude * pattern[i.min(j) * n + i.max(j)];
            let dst = &mut comps[(i * n + j) * len..][..len];
            for (d, &b) in dst.iter_mut().zip(bump.values()) {
                *d = p * b;
            }
        }
    }
    TensorField::new(grid.clone(), 0, 2, comps)
}

/// Requires the closed support ball to sit strictly inside the chart with a
/// stencil-width margin on bounded axes (one spacing on periodic axes, so
/// the periodic extension stays smooth).
fn check_bump_support(grid: &Grid, center: &[f64], radius: f64) -> Result<()> {
    let n = grid.dim();
    if center.len() != n {
        return Err(Error::Config(format!(
            "center has {} components, grid has dimension {n}",
            center.len()
        )));
    }
    if !(radius > 0.0) {
        return Err(Error::Support(format!(
            "support radius must be positive, got {radius}"
        )));
    }
    for a in 0..n {
        let (lo, hi) = grid.bounds()[a];
        let h = grid.spacing()[a];
        let margin = if grid.periodic()[a] { h } else { 3.0 * h };
        if center[a] - radius < lo + margin || center[a] + radius > hi - margin {
            return Err(Error::Support(format!(
                "support ball [{:.6}, {:.6}] on axis {a} leaves the interior margin [{:.6}, {:.6}]",
                center[a] - radius,
                center[a] + radius,
                lo + margin,
                hi - margin
            )));
        }
    }
    Ok(())
}

/// Deterministic random metric: diagonal flat base plus `waves` cosine
/// modes with grid-commensurate frequencies and random symmetric component
/// patterns of unit spectral norm. The total perturbation never exceeds
/// `amplitude` in spectral norm, so the signature of the base survives.
pub fn perturbed_flat(
    grid: &Grid,
    negative_directions: usize,
    amplitude: f64,
    waves: usize,
    seed: u64,
) -> Result<MetricField> {
    let n = grid.dim();
    if negative_directions > n {
        return Err(Error::Config(format!(
            "{negative_directions} negative directions exceed dimension {n}"
        )));
    }
    if !(0.0..=0.9).contains(&amplitude) {
        return Err(Error::Amplitude(format!(
            "wave amplitude must lie in [0, 0.9] to preserve the signature, got {amplitude}"
        )));
    }
    if waves == 0 || waves > 16 {
        return Err(Error::Config(format!(
            "wave count must lie in 1..=16, got {waves}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut modes = Vec::with_capacity(waves);
    for _ in 0..waves {
        // Random symmetric pattern, rescaled to unit spectral norm.
        let mut p = vec![0.0; n * n];
        let mut eig = vec![0.0; n];
        loop {
            for i in 0..n {
                for j in i..n {
                    let v = rng.gen_range(-1.0..1.0);
                    p[i * n + j] = v;
                    p[j * n + i] = v;
                }
            }
            sym_eigenvalues(&p, n, &mut eig);
            let top = eig.iter().fold(0.0f64, |m, &e| m.max(e.abs()));
            if top > 1e-3 {
                for v in p.iter_mut() {
                    *v /= top;
                }
                break;
            }
        }
        let freqs: Vec<f64> = (0..n)
            .map(|a| {
                let (lo, hi) = grid.bounds()[a];
                let m = rng.gen_range(0..=2) as f64;
                m * 2.0 * std::f64::consts::PI / (hi - lo)
            })
            .collect();
        let phase = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
        modes.push((p, freqs, phase));
    }
    let per_wave = amplitude / waves as f64;
    let floor = 0.4 * (1.0 - amplitude).powi(n as i32);
    MetricField::from_matrix_fn(
        grid.clone(),
        (negative_directions, n - negative_directions),
        floor.max(1e-12),
        |x, m| {
            for i in 0..n {
                for j in 0..n {
                    m[i * n + j] = if i != j {
                        0.0
                    } else if i < negative_directions {
                        -1.0
                    } else {
                        1.0
                    };
                }
            }
            for (p, freqs, phase) in &modes {
                let arg: f64 = x.iter().zip(freqs).map(|(v, f)| v * f).sum::<f64>() + phase;
                let c = per_wave * arg.cos();
                for i in 0..n {
                    for j in 0..n {
                        m[i * n + j] += c * p[i * n + j];
                    }
                }
            }
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curvature::{action, scalar_direct_field};
    use crate::quad::{integrate, Mask};
    use crate::sobolev::{euclidean_aux, sobolev_norm, PNorm};

    const PI: f64 = std::f64::consts::PI;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn flat_metrics_have_expected_components_and_zero_action() {
        let grid = Grid::uniform(4, -1.0, 1.0, 5, false).unwrap();
        let lorentz = flat(&grid, 1).unwrap();
        for flatidx in [0, 3, grid.len() - 1] {
            assert_eq!(lorentz.value(flatidx, 0, 0), -1.0);
            assert_eq!(lorentz.value(flatidx, 1, 1), 1.0);
            assert_eq!(lorentz.value(flatidx, 2, 2), 1.0);
            assert_eq!(lorentz.value(flatidx, 3, 3), 1.0);
            assert_eq!(lorentz.value(flatidx, 0, 1), 0.0);
        }
        let grid2 = Grid::uniform(2, 0.0, 1.0, 6, false).unwrap();
        let euclid = flat(&grid2, 0).unwrap();
        assert_eq!(euclid.value(7, 0, 0), 1.0);
        assert_eq!(euclid.value(7, 1, 1), 1.0);
        assert_eq!(euclid.value(7, 0, 1), 0.0);

        let mask = Mask::closed_box(vec![0.1, 0.1], vec![0.9, 0.9]);
        let s = action(&euclid, Some(&mask)).unwrap();
        assert!(s.abs() < 1e-13, "flat action = {s}");
    }

    #[test]
    fn sphere_oracle_matches_closed_forms() {
        let s2 = sphere_oracle(2, 1.0).unwrap();
        assert!(rel(s2.volume, 4.0 * PI) < 1e-15);
        assert!(rel(s2.total_action, 8.0 * PI) < 1e-15);

        let s3 = sphere_oracle(3, 1.0).unwrap();
        assert!(rel(s3.volume, 2.0 * PI * PI) < 1e-15);
        assert!(rel(s3.total_action, 12.0 * PI * PI) < 1e-15);

        let s4 = sphere_oracle(4, 1.0).unwrap();
        assert!(rel(s4.volume, 8.0 * PI * PI / 3.0) < 1e-15);
        assert!(rel(s4.total_action, 32.0 * PI * PI) < 1e-15);
        assert!((s4.total_action - 315.827).abs() < 5e-3);

        let s5 = sphere_oracle(5, 1.0).unwrap();
        assert!(rel(s5.volume, PI.powi(3)) < 1e-15);

        // Quadratic invariants on the unit 4-sphere.
        assert!(rel(s4.scalar_curvature * s4.scalar_curvature, 144.0) < 1e-15);
        assert!(rel(s4.ricci_squared, 36.0) < 1e-15);
        assert!(rel(s4.riemann_squared, 24.0) < 1e-15);
        assert!(rel(s4.gauss_bonnet_density, 24.0) < 1e-13);
        assert!(rel(s4.gauss_bonnet_total, 64.0 * PI * PI) < 1e-13);
        assert_eq!(s4.euler_characteristic, 2.0);
        assert!(rel(s4.gauss_bonnet_total, 32.0 * PI * PI * s4.euler_characteristic) < 1e-13);

        // Sixth-dimensional input for the quadratic-action limit checks.
        let s6 = sphere_oracle(6, 1.0).unwrap();
        assert!(rel(s6.scalar_curvature, 30.0) < 1e-15);
        assert!(
            rel(s6.scalar_curvature * s6.scalar_curvature * s6.volume, 960.0 * PI.powi(3)) < 1e-13
        );
    }

    #[test]
    fn sphere_oracle_is_self_consistent() {
        for dim in 2..=6 {
            for &rho in &[0.5, 1.0, 2.25] {
                let s = sphere_oracle(dim, rho).unwrap();
                assert!(rel(s.total_action, s.scalar_curvature * s.volume) < 1e-15);
                let n = dim as f64;
                assert!(rel(s.ricci_eigenvalue * n, s.scalar_curvature) < 1e-15);
            }
        }
    }

    #[test]
    fn stereographic_sphere_curvature_converges_at_second_order() {
        // Radius-2 two-sphere: pointwise curvature should be 1/2 on the chart.
        let oracle = 0.5;
        let mut errs = Vec::new();
        for &count in &[17usize, 33] {
            let grid = Grid::uniform(2, -0.8, 0.8, count, false).unwrap();
            let g = sphere_stereographic(&grid, 2.0).unwrap();
            let r = scalar_direct_field(&g).unwrap();
            let mut worst = 0.0f64;
            for flatidx in 0..grid.len() {
                let i = grid.axis_pos(flatidx, 0);
                let j = grid.axis_pos(flatidx, 1);
                // Interior nodes only: one-sided boundary stencils converge
                // at the same order but with much larger constants.
                if i < 4 || i >= count - 4 || j < 4 || j >= count - 4 {
                    continue;
                }
                worst = worst.max((r.values()[flatidx] - oracle).abs());
            }
            errs.push(worst);
        }
        let order = (errs[0] / errs[1]).log2();
        assert!(
            order > 1.8,
            "sphere curvature errors {errs:?} give order {order:.2}"
        );
    }

    #[test]
    fn torus_entry_is_flat_and_measures_its_periods() {
        let grid = Grid::new(
            &[(0.0, 2.0 * PI), (0.0, 4.0)],
            &[12, 8],
            &[true, true],
        )
        .unwrap();
        let g = flat_torus(&grid).unwrap();
        let oracle = torus_oracle(&grid).unwrap();
        assert!(rel(oracle.volume, 8.0 * PI) < 1e-15);
        assert_eq!(oracle.total_action, 0.0);
        assert_eq!(oracle.euler_characteristic, Some(0.0));

        let s = action(&g, None).unwrap();
        assert!(s.abs() < 1e-13);

        let bounded = Grid::uniform(2, 0.0, 1.0, 8, false).unwrap();
        assert!(matches!(flat_torus(&bounded), Err(Error::Geometry(_))));
    }

    #[test]
    fn conformal_quadratic_matches_its_closed_form_curvature() {
        let center = [0.05, -0.1, 0.0];
        let mut errs = Vec::new();
        for &count in &[13usize, 25] {
            let grid = Grid::uniform(3, -0.5, 0.5, count, false).unwrap();
            let g = conformal_quadratic(&grid, 0.3, &center).unwrap();
            let r = scalar_direct_field(&g).unwrap();
            let mut worst = 0.0f64;
            let mut x = vec![0.0; 3];
            for flatidx in 0..grid.len() {
                let interior = (0..3).all(|a| {
                    let p = grid.axis_pos(flatidx, a);
                    p >= 4 && p < count - 4
                });
                if !interior {
                    continue;
                }
                grid.coord(flatidx, &mut x);
                let oracle = conformal_quadratic_scalar(0.3, &center, &x);
                worst = worst.max((r.values()[flatidx] - oracle).abs());
            }
            errs.push(worst);
        }
        let order = (errs[0] / errs[1]).log2();
        assert!(
            order > 1.8,
            "conformal curvature errors {errs:?} give order {order:.2}"
        );
    }

    #[test]
    fn conformal_quadratic_rejects_sign_changing_factors() {
        let grid = Grid::uniform(2, -1.0, 1.0, 9, false).unwrap();
        let center = [0.0, 0.0];
        assert!(matches!(
            conformal_quadratic(&grid, -0.6, &center),
            Err(Error::Degenerate { .. })
        ));
    }

    #[test]
    fn bump_is_centered_normalized_and_compactly_supported() {
        let grid = Grid::uniform(3, -1.0, 1.0, 17, false).unwrap();
        let center = [0.0, 0.0, 0.0];
        let pattern = [
            2.0, 0.5, 0.0, //
            0.5, 1.0, 0.0, //
            0.0, 0.0, 3.0,
        ];
        let h = bump_perturbation(&grid, &center, 0.5, 0.25, &pattern).unwrap();
        let center_flat = grid.flat_index(&[8, 8, 8]);
        assert!((h.value2(center_flat, 0, 0) - 0.5).abs() < 1e-15);
        assert!((h.value2(center_flat, 0, 1) - 0.125).abs() < 1e-15);
        assert!((h.value2(center_flat, 1, 0) - 0.125).abs() < 1e-15);
        assert!((h.value2(center_flat, 2, 2) - 0.75).abs() < 1e-15);
        // Outside the support ball everything vanishes.
        let outside = grid.flat_index(&[1, 8, 8]);
        for l in 0..h.lanes() {
            assert_eq!(h.lane(l)[outside], 0.0);
        }
        assert!(h.is_symmetric2());

        let zero = bump_perturbation(&grid, &center, 0.5, 0.0, &pattern).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
    }

    #[test]
    fn bump_support_must_respect_the_interior_margin() {
        let grid = Grid::uniform(2, -1.0, 1.0, 11, false).unwrap();
        let pattern = [1.0, 0.0, 0.0, 1.0];
        // Radius 0.9 leaves less than three spacings (0.6) of margin.
        assert!(matches!(
            bump_perturbation(&grid, &[0.0, 0.0], 0.9, 1.0, &pattern),
            Err(Error::Support(_))
        ));
        // Off-center support falling off one edge.
        assert!(matches!(
            bump_perturbation(&grid, &[0.7, 0.0], 0.3, 1.0, &pattern),
            Err(Error::Support(_))
        ));
    }

    #[test]
    fn bump_norm_scales_linearly_in_amplitude() {
        let grid = Grid::uniform(2, -1.0, 1.0, 21, false).unwrap();
        let pattern = [1.0, 0.3, 0.3, 2.0];
        let aux = euclidean_aux(&grid);
        let h1 = bump_perturbation(&grid, &[0.1, -0.05], 0.4, 1.0, &pattern).unwrap();
        let h2 = bump_perturbation(&grid, &[0.1, -0.05], 0.4, 2.625, &pattern).unwrap();
        let n1 = sobolev_norm(&h1, 2, PNorm::Finite(2.0), None, &aux).unwrap();
        let n2 = sobolev_norm(&h2, 2, PNorm::Finite(2.0), None, &aux).unwrap();
        assert!(rel(n2, 2.625 * n1) < 1e-10, "{n2} vs {}", 2.625 * n1);
    }

    #[test]
    fn perturbed_flat_is_deterministic_and_signature_safe() {
        let grid = Grid::uniform(3, 0.0, 2.0 * PI, 9, true).unwrap();
        let a = perturbed_flat(&grid, 0, 0.3, 3, 42).unwrap();
        let b = perturbed_flat(&grid, 0, 0.3, 3, 42).unwrap();
        assert_eq!(a.packed(), b.packed());
        let c = perturbed_flat(&grid, 0, 0.3, 3, 43).unwrap();
        assert_ne!(a.packed(), c.packed());

        // Lorentzian base survives the perturbation (validated on build).
        let grid4 = Grid::uniform(4, 0.0, 2.0 * PI, 6, true).unwrap();
        let l = perturbed_flat(&grid4, 1, 0.25, 2, 7).unwrap();
        assert_eq!(l.signature(), (1, 3));

        assert!(matches!(
            perturbed_flat(&grid, 0, 1.5, 3, 0),
            Err(Error::Amplitude(_))
        ));
    }

    #[test]
    fn families_resolve_by_name() {
        let f = Family::from_name(
            "sphere_stereographic",
            &FamilyParams {
                radius: Some(2.0),
                ..FamilyParams::default()
            },
        )
        .unwrap();
        assert_eq!(f, Family::SphereStereographic { radius: 2.0 });
        let oracle = f.oracle(2).unwrap().unwrap();
        assert!(rel(oracle.total_action, 0.5 * oracle.volume * 1.0) < 1e-15);
        assert!(rel(oracle.scalar_curvature, 0.5) < 1e-15);
        assert_eq!(f.scalar_curvature_at(&[0.3, 0.4]), Some(0.5));

        let err = Family::from_name("sphere_sterographic", &FamilyParams::default());
        match err {
            Err(Error::Config(msg)) => assert!(msg.contains("known families")),
            other => panic!("expected a config error, got {other:?}"),
        }

        let torus = Family::from_name("flat_torus", &FamilyParams::default()).unwrap();
        let grid = Grid::uniform(2, 0.0, 1.0, 8, true).unwrap();
        assert!(torus.build(&grid).is_ok());
    }

    #[test]
    fn perturbed_flat_integrates_smoothly_over_its_torus() {
        // Periodic grid + commensurate frequencies: the metric closes up, so
        // the curvature action over a full period is a well-defined number
        // and the trapezoid-free periodic quadrature reproduces it stably
        // across resolutions (order-2 agreement).
        let mut vals = Vec::new();
        for &count in &[16usize, 32, 64] {
            let grid = Grid::uniform(2, 0.0, 2.0 * PI, count, true).unwrap();
            let g = perturbed_flat(&grid, 0, 0.3, 3, 11).unwrap();
            vals.push(action(&g, None).unwrap());
        }
        let e1 = (vals[0] - vals[2]).abs();
        let e2 = (vals[1] - vals[2]).abs();
        assert!(e1 > 4.0 * e2 || e1 < 1e-10, "action sequence {vals:?}");
        // Exercise the flagged integrator on the same data for coverage.
        let grid = Grid::uniform(2, 0.0, 2.0 * PI, 16, true).unwrap();
        let g = perturbed_flat(&grid, 0, 0.3, 3, 11).unwrap();
        let ones = ScalarField::from_fn(grid.clone(), |_| 1.0);
        let vol = integrate(&ones, None);
        assert!(rel(vol, 4.0 * PI * PI) < 1e-12);
        drop(g);
    }

    #[test]
    fn bump_builder_reuses_symmetrized_pattern_entries() {
        let grid = Grid::uniform(2, -1.0, 1.0, 15, false).unwrap();
        // Lower-triangle entry differs from the upper one; only the upper
        // triangle is read, so the result is exactly symmetric.
        let pattern = [1.0, 0.7, -9.0, 2.0];
        let h = bump_perturbation(&grid, &[0.0, 0.0], 0.4, 1.0, &pattern).unwrap();
        let mid = grid.flat_index(&[7, 7]);
        assert_eq!(h.value2(mid, 0, 1), h.value2(mid, 1, 0));
        assert_eq!(h.value2(mid, 0, 1), 0.7);
    }
}
