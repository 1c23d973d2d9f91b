//! Ball and sphere averaging rules.
//!
//! Ball averages use polar (n = 2) or spherical (n = 3) product rules: Gauss-Legendre
//! in the radius (and in cos(polar angle) for n = 3) times an equal-angle trapezoid
//! rule in azimuth, so smooth integrands are integrated spectrally. In one dimension
//! the interval is split at the function's declared kinks.
//!
//! The derivative of the ball average in x is the outward-normal flux through the
//! sphere divided by the ball volume:
//!
//! ```text
//! D_theta f_r(x) = 1/(w_n r^n) * int_{dB(x,r)} f(y) theta.(y-x)/r dS(y)
//!                = (n / r) * mean_{dB(x,r)} f(y) theta.nu(y)
//! ```
//!
//! which returns `a . theta` for every linear `f(y) = a . y`.

use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::funcspace::DirectionalFunction;
use crate::linalg;

/// One averaging rule: unit-scale offsets with weights summing to one.
#[derive(Debug, Clone)]
pub(crate) struct Rule {
    pub nodes: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Default)]
struct RuleCache {
    ball: [OnceLock<Rule>; 3],
    sphere: [OnceLock<Rule>; 3],
    gauss: OnceLock<(Vec<f64>, Vec<f64>)>,
}

/// Quadrature orders. Rules are built lazily and shared between clones.
#[derive(Debug, Clone)]
pub struct QuadratureConfig {
    /// Gauss-Legendre order per radial / polar axis (azimuth uses `2 * order` nodes).
    pub order: usize,
    /// Equal-angle nodes on the circle.
    pub sphere_nodes_2d: usize,
    /// Icosahedral subdivision level on the 2-sphere (`10 * 4^level + 2` nodes).
    pub sphere_level_3d: u32,
    cache: Arc<RuleCache>,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self::new(32, 720, 4)
    }
}

impl QuadratureConfig {
    pub fn new(order: usize, sphere_nodes_2d: usize, sphere_level_3d: u32) -> Self {
        assert!(order >= 1 && sphere_nodes_2d >= 4);
        Self {
            order,
            sphere_nodes_2d,
            sphere_level_3d,
            cache: Arc::new(RuleCache::default()),
        }
    }

    /// Shared default configuration.
    pub fn global() -> &'static QuadratureConfig {
        static DEFAULT: OnceLock<QuadratureConfig> = OnceLock::new();
        DEFAULT.get_or_init(QuadratureConfig::default)
    }

    /// Volume of the unit ball in R^n.
    pub fn unit_ball_volume(n: usize) -> f64 {
        use std::f64::consts::PI;
        match n {
            1 => 2.0,
            2 => PI,
            3 => 4.0 * PI / 3.0,
            _ => panic!("dimension {n} unsupported"),
        }
    }

    /// Surface measure of the unit sphere in R^n (counting measure for n = 1).
    pub fn unit_sphere_area(n: usize) -> f64 {
        n as f64 * Self::unit_ball_volume(n)
    }

    pub(crate) fn gauss(&self) -> &(Vec<f64>, Vec<f64>) {
        self.cache.gauss.get_or_init(|| gauss_legendre(self.order))
    }

    pub(crate) fn ball_rule(&self, n: usize) -> &Rule {
        self.cache.ball[n - 1].get_or_init(|| build_ball_rule(n, self.gauss(), self.order))
    }

    pub(crate) fn sphere_rule(&self, n: usize) -> &Rule {
        self.cache.sphere[n - 1].get_or_init(|| match n {
            1 => Rule {
                nodes: vec![[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]],
                weights: vec![0.5, 0.5],
            },
            2 => circle_rule(self.sphere_nodes_2d),
            _ => icosphere_rule(self.sphere_level_3d),
        })
    }

    /// Integral of the constant 1 over `B(0, r)` as produced by the ball rule.
    pub fn ball_rule_volume(&self, n: usize, r: f64) -> f64 {
        self.ball_rule(n).weights.iter().sum::<f64>() * Self::unit_ball_volume(n) * r.powi(n as i32)
    }

    /// Integral of the constant 1 over `dB(0, r)` as produced by the sphere rule.
    pub fn sphere_rule_area(&self, n: usize, r: f64) -> f64 {
        self.sphere_rule(n).weights.iter().sum::<f64>()
            * Self::unit_sphere_area(n)
            * r.powi(n as i32 - 1)
    }

    pub fn sphere_node_count(&self, n: usize) -> usize {
        self.sphere_rule(n).nodes.len()
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1] (Newton iteration on P_q).
pub(crate) fn gauss_legendre(q: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; q];
    let mut w = vec![0.0; q];
    let m = q.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (q as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..q {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            pp = q as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[q - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[q - 1 - i] = w[i];
    }
    (x, w)
}

fn build_ball_rule(n: usize, gl: &(Vec<f64>, Vec<f64>), q: usize) -> Rule {
    use std::f64::consts::PI;
    let (gx, gw) = gl;
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    match n {
        1 => {
            for (x, w) in gx.iter().zip(gw) {
                nodes.push([*x, 0.0, 0.0]);
                weights.push(0.5 * w);
            }
        }
        2 => {
            let na = 2 * q;
            for (t, wt) in gx.iter().zip(gw) {
                let rho = 0.5 * (1.0 + t);
                let wr = 0.5 * wt * rho;
                for k in 0..na {
                    let phi = 2.0 * PI * k as f64 / na as f64;
                    nodes.push([rho * phi.cos(), rho * phi.sin(), 0.0]);
                    weights.push(wr * (2.0 * PI / na as f64) / PI);
                }
            }
        }
        3 => {
            let na = 2 * q;
            let vol = 4.0 * PI / 3.0;
            for (t, wt) in gx.iter().zip(gw) {
                let rho = 0.5 * (1.0 + t);
                let wr = 0.5 * wt * rho * rho;
                for (mu, wm) in gx.iter().zip(gw) {
                    let s = (1.0 - mu * mu).max(0.0).sqrt();
                    for k in 0..na {
                        let phi = 2.0 * PI * k as f64 / na as f64;
                        nodes.push([rho * s * phi.cos(), rho * s * phi.sin(), rho * mu]);
                        weights.push(wr * wm * (2.0 * PI / na as f64) / vol);
                    }
                }
            }
        }
        _ => unreachable!(),
    }
    Rule { nodes, weights }
}

fn circle_rule(m: usize) -> Rule {
    let nodes = (0..m)
        .map(|k| {
            let phi = 2.0 * std::f64::consts::PI * k as f64 / m as f64;
            [phi.cos(), phi.sin(), 0.0]
        })
        .collect();
    Rule {
        nodes,
        weights: vec![1.0 / m as f64; m],
    }
}

/// Vertices of a geodesic icosphere; keeps the full icosahedral symmetry, so
/// equal weights integrate spherical polynomials of degree <= 5 exactly.
pub(crate) fn icosphere_vertices(level: u32) -> Vec<[f64; 3]> {
    use std::collections::HashMap;
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<[f64; 3]> = vec![
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    for v in verts.iter_mut() {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        v.iter_mut().for_each(|c| *c /= n);
    }
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<[f64; 3]>| -> usize {
            let key = (a.min(b), a.max(b));
            *mid.entry(key).or_insert_with(|| {
                let (p, q) = (verts[a], verts[b]);
                let mut m = [p[0] + q[0], p[1] + q[1], p[2] + q[2]];
                let n = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt();
                m.iter_mut().for_each(|c| *c /= n);
                verts.push(m);
                verts.len() - 1
            })
        };
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    verts
}

fn icosphere_rule(level: u32) -> Rule {
    let nodes = icosphere_vertices(level);
    let m = nodes.len();
    Rule {
        nodes,
        weights: vec![1.0 / m as f64; m],
    }
}

/// `(1/|B(x,r)|) int_{B(x,r)} f` with the shared default rules; `f(x)` at `r = 0`.
pub fn ball_average(f: &DirectionalFunction, x: &[f64], r: f64) -> Result<f64> {
    ball_average_with(f, x, r, QuadratureConfig::global())
}

pub fn ball_average_with(
    f: &DirectionalFunction,
    x: &[f64],
    r: f64,
    quad: &QuadratureConfig,
) -> Result<f64> {
    let n = f.dim();
    if x.len() != n {
        return crate::error::arg(format!("point has dimension {}, function {n}", x.len()));
    }
    if !(r >= 0.0) || !r.is_finite() {
        return crate::error::arg(format!("radius must be finite and >= 0, got {r}"));
    }
    if r == 0.0 {
        return f.try_eval(x);
    }
    if let Some(d) = f.domain() {
        if !d.contains_ball(x, r) {
            return Err(Error::OutsideDomain { point: x.to_vec() });
        }
    }
    let mut y = [0.0f64; 3];
    if n == 1 {
        return interval_average(f, x[0], r, quad);
    }
    let rule = quad.ball_rule(n);
    let mut acc = 0.0;
    for (node, w) in rule.nodes.iter().zip(&rule.weights) {
        for a in 0..n {
            y[a] = x[a] + r * node[a];
        }
        let v = f.eval(&y[..n]);
        if !v.is_finite() {
            return Err(Error::NonFinite {
                point: y[..n].to_vec(),
                value: v,
            });
        }
        acc += w * v;
    }
    Ok(acc)
}

fn interval_average(
    f: &DirectionalFunction,
    c: f64,
    r: f64,
    quad: &QuadratureConfig,
) -> Result<f64> {
    let (a, b) = (c - r, c + r);
    let mut cuts = vec![a];
    cuts.extend(f.breakpoints().iter().copied().filter(|p| *p > a && *p < b));
    cuts.push(b);
    let (gx, gw) = quad.gauss();
    let mut acc = 0.0;
    for seg in cuts.windows(2) {
        let (lo, hi) = (seg[0], seg[1]);
        let half = 0.5 * (hi - lo);
        if half <= 0.0 {
            continue;
        }
        let mid = 0.5 * (hi + lo);
        let mut s = 0.0;
        for (t, w) in gx.iter().zip(gw) {
            let y = mid + half * t;
            let v = f.eval(&[y]);
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    point: vec![y],
                    value: v,
                });
            }
            s += w * v;
        }
        acc += s * half;
    }
    Ok(acc / (2.0 * r))
}

/// `D_theta f_r(x)` via the sphere flux formula with the default rules.
pub fn sphere_average_derivative(
    f: &DirectionalFunction,
    x: &[f64],
    r: f64,
    theta: &[f64],
) -> Result<f64> {
    sphere_average_derivative_with(f, x, r, theta, QuadratureConfig::global())
}

pub fn sphere_average_derivative_with(
    f: &DirectionalFunction,
    x: &[f64],
    r: f64,
    theta: &[f64],
    quad: &QuadratureConfig,
) -> Result<f64> {
    let n = f.dim();
    if x.len() != n || theta.len() != n {
        return crate::error::arg("point/direction dimension mismatch");
    }
    if !(r > 0.0) || !r.is_finite() {
        return crate::error::arg(format!(
            "sphere radius must be positive and finite, got {r}"
        ));
    }
    if let Some(d) = f.domain() {
        if !d.contains_ball(x, r) {
            return Err(Error::OutsideDomain { point: x.to_vec() });
        }
    }
    let rule = quad.sphere_rule(n);
    let mut y = [0.0f64; 3];
    let mut acc = 0.0;
    for (node, w) in rule.nodes.iter().zip(&rule.weights) {
        let tn = linalg::dot(theta, &node[..n]);
        if tn == 0.0 {
            continue;
        }
        for a in 0..n {
            y[a] = x[a] + r * node[a];
        }
        let v = f.eval(&y[..n]);
        if !v.is_finite() {
            return Err(Error::NonFinite {
                point: y[..n].to_vec(),
                value: v,
            });
        }
        acc += w * v * tn;
    }
    Ok(n as f64 / r * acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcspace::parse_function_spec;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((s - 2.0 / 15.0).abs() < 1e-14);
    }

    #[test]
    fn default_rules_meet_normalization_invariants() {
        let q = QuadratureConfig::default();
        for n in 1..=3 {
            for r in [0.3f64, 1.0, 7.5] {
                let exact_v = QuadratureConfig::unit_ball_volume(n) * r.powi(n as i32);
                assert!((q.ball_rule_volume(n, r) / exact_v - 1.0).abs() < 1e-12);
                let exact_a = QuadratureConfig::unit_sphere_area(n) * r.powi(n as i32 - 1);
                assert!((q.sphere_rule_area(n, r) / exact_a - 1.0).abs() < 1e-10);
            }
        }
        assert_eq!(q.sphere_node_count(2), 720);
        assert_eq!(q.sphere_node_count(3), 2562);
    }

    #[test]
    fn zero_radius_returns_point_value() {
        let f = parse_function_spec("tent").unwrap();
        assert_eq!(ball_average(&f, &[0.25], 0.0).unwrap(), 0.75);
    }

    #[test]
    fn constant_and_linear_averages() {
        for n in 1..=3 {
            let c = DirectionalFunction::constant(n, 2.5);
            let x = vec![0.3; n];
            let v = ball_average(&c, &x, 0.7).unwrap();
            assert!((v - 2.5).abs() < 2.5e-12, "{n} {v}");
            let a: Vec<f64> = (0..n).map(|i| 1.0 - 0.6 * i as f64).collect();
            let lin = DirectionalFunction::affine(a.clone(), 0.0);
            let expect = linalg::dot(&a, &x);
            let v = ball_average(&lin, &x, 1.3).unwrap();
            assert!((v - expect).abs() < 1e-12, "{n} {v} {expect}");
        }
    }

    #[test]
    fn tent_average_far_ball() {
        let f = parse_function_spec("tent").unwrap();
        let r = 7f64.sqrt();
        let v = ball_average(&f, &[2.0], r).unwrap();
        // composite-trapezoid value at 1e6 nodes, frozen
        assert!((v - 0.177_124_344_466_863_4).abs() < 2e-12, "{v}");
    }

    #[test]
    fn sphere_derivative_of_linear_is_exact() {
        for n in 1..=3 {
            let a: Vec<f64> = (0..n).map(|i| 0.5 + i as f64).collect();
            let lin = DirectionalFunction::affine(a.clone(), 0.2);
            let theta = linalg::normalized(&vec![1.0; n]).unwrap();
            let d = sphere_average_derivative(&lin, &vec![0.1; n], 0.9, &theta).unwrap();
            assert!((d - linalg::dot(&a, &theta)).abs() < 1e-12, "n={n} d={d}");
        }
    }

    #[test]
    fn sphere_derivative_rejects_nonpositive_radius() {
        let f = DirectionalFunction::constant(2, 1.0);
        assert!(sphere_average_derivative(&f, &[0.0, 0.0], 0.0, &[1.0, 0.0]).is_err());
        assert!(sphere_average_derivative(&f, &[0.0, 0.0], -1.0, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn nonfinite_inside_ball_names_point() {
        let f = DirectionalFunction::new(1, |x| if x[0] > 0.5 { f64::NAN } else { 1.0 });
        match ball_average(&f, &[0.0], 1.0) {
            Err(Error::NonFinite { point, .. }) => assert!(point[0] > 0.5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn icosphere_counts() {
        assert_eq!(icosphere_vertices(0).len(), 12);
        assert_eq!(icosphere_vertices(2).len(), 162);
    }
}
