//! Quadrature over coordinate balls and shells.
//!
//! Grid quadrature with a ball mask converges only at first order in the
//! spacing because of the staircase boundary. The rules here instead use
//! polar coordinates: Gauss-Legendre nodes in radius (with the r^{dim-1}
//! factor folded in), a product rule on the unit sphere (Gauss-Legendre in
//! the polar angles with the sine powers absorbed, the full-period rectangle
//! rule in the azimuth), and cubic interpolation of the grid data at the
//! resulting points. For smooth integrands the boundary is then resolved
//! exactly and the error is dominated by the O(h^4) interpolation.

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::interp::Sampler;

/// Gauss-Legendre nodes and weights on [-1, 1], by Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // evaluate P_n and P_n' at x via the three-term recurrence
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Quadrature points on the unit sphere S^{dim-1}: unit direction vectors
/// and weights summing to the sphere area (the weight sum is rescaled onto
/// the exact area so constants integrate exactly).
#[derive(Debug, Clone)]
pub struct SphereRule {
    dim: usize,
    dirs: Vec<f64>,
    weights: Vec<f64>,
}

impl SphereRule {
    /// `polar` Gauss-Legendre nodes per polar angle, `azimuthal` uniform
    /// nodes for the last angle.
    pub fn new(dim: usize, polar: usize, azimuthal: usize) -> Result<SphereRule> {
        if !(2..=6).contains(&dim) {
            return Err(Error::Domain(format!("sphere rule dimension {dim} out of range 2..=6")));
        }
        if polar < 2 || azimuthal < 4 {
            return Err(Error::Domain("sphere rule too coarse".to_string()));
        }
        let tau = std::f64::consts::TAU;
        // azimuth phi in [0, tau), uniform
        let mut dirs: Vec<Vec<f64>> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        for j in 0..azimuthal {
            let phi = tau * j as f64 / azimuthal as f64;
            dirs.push(vec![phi.cos(), phi.sin()]);
            weights.push(tau / azimuthal as f64);
        }
        // prepend polar angles one at a time: S^{k} built from S^{k-1} by
        // x = (cos t, sin t * y), weight sin^{k-1} t dt
        let (gl_nodes, gl_weights) = gauss_legendre(polar);
        let mut cur_dim = 2;
        while cur_dim < dim {
            let power = (cur_dim - 1) as i32;
            let mut next_dirs = Vec::with_capacity(dirs.len() * polar);
            let mut next_weights = Vec::with_capacity(dirs.len() * polar);
            for q in 0..polar {
                // map [-1,1] -> [0, pi]
                let t = 0.5 * std::f64::consts::PI * (gl_nodes[q] + 1.0);
                let wt = 0.5 * std::f64::consts::PI * gl_weights[q] * t.sin().powi(power);
                for (d, &w) in dirs.iter().zip(&weights) {
                    let mut v = Vec::with_capacity(cur_dim + 1);
                    v.push(t.cos());
                    for &c in d {
                        v.push(t.sin() * c);
                    }
                    next_dirs.push(v);
                    next_weights.push(w * wt);
                }
            }
            dirs = next_dirs;
            weights = next_weights;
            cur_dim += 1;
        }
        // rescale so the weights sum to the exact sphere area
        let sum: f64 = crate::quad::pairwise_sum(&weights);
        let area = sphere_area(dim - 1);
        let scale = area / sum;
        for w in &mut weights {
            *w *= scale;
        }
        let mut flat = Vec::with_capacity(dirs.len() * dim);
        for d in &dirs {
            flat.extend_from_slice(d);
        }
        Ok(SphereRule { dim, dirs: flat, weights })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn direction(&self, i: usize) -> &[f64] {
        &self.dirs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }
}

/// Area of the unit sphere S^k: 2 pi^{(k+1)/2} / Gamma((k+1)/2), via the
/// recurrence area(S^k) = 2 pi area(S^{k-2}) / (k - 1).
pub fn sphere_area(k: usize) -> f64 {
    match k {
        0 => 2.0,
        1 => std::f64::consts::TAU,
        _ => std::f64::consts::TAU * sphere_area(k - 2) / (k - 1) as f64,
    }
}

/// Volume of the unit ball B^n = area(S^{n-1}) / n.
pub fn ball_volume(n: usize) -> f64 {
    sphere_area(n - 1) / n as f64
}

/// Polar quadrature over a shell r0 <= |x - center| <= r1.
#[derive(Debug, Clone)]
pub struct ShellRule {
    sphere: SphereRule,
    radial: usize,
}

impl ShellRule {
    pub fn new(dim: usize, radial: usize, polar: usize, azimuthal: usize) -> Result<ShellRule> {
        if radial < 2 {
            return Err(Error::Domain("need at least 2 radial nodes".to_string()));
        }
        Ok(ShellRule { sphere: SphereRule::new(dim, polar, azimuthal)?, radial })
    }

    /// A default size ladder: coarser angular resolution as the dimension
    /// (and hence the point count) grows.
    pub fn standard(dim: usize) -> Result<ShellRule> {
        match dim {
            2 => ShellRule::new(2, 24, 8, 48),
            3 => ShellRule::new(3, 24, 24, 48),
            4 => ShellRule::new(4, 20, 16, 32),
            5 => ShellRule::new(5, 16, 12, 24),
            6 => ShellRule::new(6, 12, 10, 20),
            other => Err(Error::Domain(format!("no standard shell rule in dimension {other}"))),
        }
    }

    /// Integrates interpolated grid data over the shell. Fails if any
    /// quadrature point leaves the chart.
    pub fn integrate(
        &self,
        f: &ScalarField,
        center: &[f64],
        r0: f64,
        r1: f64,
    ) -> Result<f64> {
        if !(r0 >= 0.0) || !(r1 > r0) {
            return Err(Error::Domain(format!("bad shell radii [{r0}, {r1}]")));
        }
        let dim = f.grid().dim();
        if center.len() != dim || self.sphere.dim != dim {
            return Err(Error::Domain("shell rule dimension mismatch".to_string()));
        }
        let (rn, rw) = gauss_legendre(self.radial);
        let mut sampler = Sampler::new(f.grid());
        let mut x = vec![0.0; dim];
        let mut terms = Vec::with_capacity(self.radial * self.sphere.len());
        for q in 0..self.radial {
            let r = 0.5 * (r1 - r0) * (rn[q] + 1.0) + r0;
            let wr = 0.5 * (r1 - r0) * rw[q] * r.powi(dim as i32 - 1);
            for i in 0..self.sphere.len() {
                let u = self.sphere.direction(i);
                for a in 0..dim {
                    x[a] = center[a] + r * u[a];
                }
                sampler.stencil(&x)?;
                terms.push(wr * self.sphere.weight(i) * sampler.apply(f.values()));
            }
        }
        Ok(crate::quad::pairwise_sum(&terms))
    }

    /// Integral over the full ball of radius r.
    pub fn integrate_ball(&self, f: &ScalarField, center: &[f64], r: f64) -> Result<f64> {
        self.integrate(f, center, 0.0, r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use approx::assert_relative_eq;

    #[test]
    fn legendre_nodes_integrate_polynomials_exactly() {
        let (x, w) = gauss_legendre(5);
        // degree 9 is exact for a 5-point rule
        let val: f64 = x.iter().zip(&w).map(|(&t, &wt)| wt * (t.powi(8) + t.powi(9))).sum();
        assert_relative_eq!(val, 2.0 / 9.0, max_relative = 1e-13);
        let one: f64 = w.iter().sum();
        assert_relative_eq!(one, 2.0, max_relative = 1e-14);
    }

    #[test]
    fn sphere_areas_match_the_closed_forms() {
        assert_relative_eq!(sphere_area(1), std::f64::consts::TAU, max_relative = 1e-15);
        assert_relative_eq!(sphere_area(2), 4.0 * std::f64::consts::PI, max_relative = 1e-15);
        let pi = std::f64::consts::PI;
        assert_relative_eq!(sphere_area(3), 2.0 * pi * pi, max_relative = 1e-15);
        assert_relative_eq!(ball_volume(4), pi * pi / 2.0, max_relative = 1e-15);
    }

    #[test]
    fn sphere_rule_integrates_coordinate_moments() {
        for dim in 2..=5usize {
            let rule = SphereRule::new(dim, 12, 24).unwrap();
            let mut total = 0.0;
            let mut first = vec![0.0; dim];
            let mut second = vec![0.0; dim];
            for i in 0..rule.len() {
                let w = rule.weight(i);
                let u = rule.direction(i);
                total += w;
                for a in 0..dim {
                    first[a] += w * u[a];
                    second[a] += w * u[a] * u[a];
                }
            }
            assert_relative_eq!(total, sphere_area(dim - 1), max_relative = 1e-12);
            for a in 0..dim {
                assert!(first[a].abs() < 1e-10, "odd moment {a} = {} in dim {dim}", first[a]);
                // int u_a^2 over the sphere = area / dim
                assert_relative_eq!(
                    second[a],
                    sphere_area(dim - 1) / dim as f64,
                    max_relative = 1e-9
                );
            }
        }
    }

    #[test]
    fn ball_volumes_from_grid_data() {
        for dim in 2..=4usize {
            let count = if dim == 4 { 13 } else { 17 };
            let g = Grid::uniform(dim, -1.1, 1.1, count, false).unwrap();
            let one = ScalarField::from_fn(g, |_| 1.0);
            let rule = ShellRule::standard(dim).unwrap();
            let vol = rule.integrate_ball(&one, &vec![0.0; dim], 1.0).unwrap();
            assert_relative_eq!(vol, ball_volume(dim), max_relative = 1e-12);
        }
    }

    #[test]
    fn gaussian_on_a_disc_matches_the_closed_form() {
        // int_{|x|<=1} exp(-|x|^2) dx in the plane = pi (1 - 1/e)
        let g = Grid::uniform(2, -1.2, 1.2, 41, false).unwrap();
        let f = ScalarField::from_fn(g, |x| (-(x[0] * x[0] + x[1] * x[1])).exp());
        let rule = ShellRule::standard(2).unwrap();
        let got = rule.integrate_ball(&f, &[0.0, 0.0], 1.0).unwrap();
        let expected = std::f64::consts::PI * (1.0 - (-1.0f64).exp());
        assert_relative_eq!(got, expected, max_relative = 2e-6);
    }

    #[test]
    fn shells_add_up_to_the_ball() {
        let g = Grid::uniform(3, -1.1, 1.1, 15, false).unwrap();
        let f = ScalarField::from_fn(g, |x| 1.0 + x[0] * x[0] - 0.5 * x[2]);
        let rule = ShellRule::standard(3).unwrap();
        let c = [0.0; 3];
        let whole = rule.integrate_ball(&f, &c, 1.0).unwrap();
        let inner = rule.integrate(&f, &c, 0.0, 0.37).unwrap();
        let outer = rule.integrate(&f, &c, 0.37, 1.0).unwrap();
        assert_relative_eq!(inner + outer, whole, max_relative = 1e-10);
    }

    #[test]
    fn points_outside_the_chart_are_reported() {
        let g = Grid::uniform(2, -0.5, 0.5, 9, false).unwrap();
        let f = ScalarField::from_fn(g, |_| 1.0);
        let rule = ShellRule::standard(2).unwrap();
        assert!(rule.integrate_ball(&f, &[0.0, 0.0], 0.9).is_err());
    }
}
