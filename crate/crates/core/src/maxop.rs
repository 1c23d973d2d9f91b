//! The centred maximal operator `M_λ f(x) = sup_{r > λ} |f|_r(x)`, its best
//! radii, the envelope formula for its one-sided derivatives, and two audits
//! (translation bound, Lipschitz constant of `M_λ f`).

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::funcspace::{ball_average, sphere_average_derivative, BoxDomain, DirectionalFunction};
use crate::linalg;
use crate::nonsmooth::{directional_derivative, tau, Ladder, TauOptions, DERIVATIVE_TOL};
use crate::semilinear::{sample_unit_vectors, SemiLinearSubspace};

/// A best radius. `Zero` stands for `|f(x)|`, `Infinity` for the limit of
/// averages as `r` grows.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Radius {
    Zero,
    Finite(f64),
    Infinity,
}

impl Radius {
    pub fn value(&self) -> f64 {
        match self {
            Radius::Zero => 0.0,
            Radius::Finite(r) => *r,
            Radius::Infinity => f64::INFINITY,
        }
    }
}

impl fmt::Display for Radius {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Radius::Zero => write!(f, "0"),
            Radius::Finite(r) => write!(f, "{r:.11e}"),
            Radius::Infinity => write!(f, "inf"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaximalOptions {
    /// Log-spaced grid points on `[max(λ, r_floor), r_max]`.
    pub grid: usize,
    pub r_floor: f64,
    /// `None`: ten times the diameter of the function's extent plus the
    /// distance from `x` to it, or 100 when no extent is known.
    pub r_max: Option<f64>,
    /// Relative tolerance for membership in the best-radii set.
    pub rel_tol: f64,
}

impl Default for MaximalOptions {
    fn default() -> Self {
        Self {
            grid: 512,
            r_floor: 1e-3,
            r_max: None,
            rel_tol: 1e-8,
        }
    }
}

/// Result of one maximal-function evaluation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RadiiSet {
    pub x: Vec<f64>,
    pub lambda: f64,
    /// `M_λ f(x)`; infinite when the averages overflow.
    pub value: f64,
    /// Isolated best radii, ascending.
    pub radii: Vec<Radius>,
    /// Intervals of radii on which the average stays at the maximum.
    pub plateaus: Vec<(Radius, Radius)>,
    pub r_max: f64,
    /// `(radius, average)` for every evaluation, grid first.
    pub trace: Vec<(f64, f64)>,
}

impl RadiiSet {
    /// Isolated radii and plateau endpoints, ascending and deduplicated.
    pub fn all_radii(&self) -> Vec<Radius> {
        let mut out: Vec<Radius> = self.radii.clone();
        for (a, b) in &self.plateaus {
            out.push(*a);
            out.push(*b);
        }
        out.sort_by(|a, b| a.value().total_cmp(&b.value()));
        out.dedup_by(|a, b| a.value() == b.value());
        out
    }
}

const OVERFLOW_GUARD: f64 = 1e300;

fn default_r_max(f: &DirectionalFunction, x: &[f64]) -> f64 {
    match f.extent() {
        Some(b) => 10.0 * b.diameter() + b.distance_to(x),
        None => 100.0,
    }
}

/// Maximises `g(exp(s))` over `s ∈ [a, b]`.
fn golden_max(
    g: &dyn Fn(f64) -> Result<f64>,
    mut a: f64,
    mut b: f64,
    trace: &mut Vec<(f64, f64)>,
) -> Result<(f64, f64)> {
    let inv = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - inv * (b - a);
    let mut d = a + inv * (b - a);
    let mut fc = g(c.exp())?;
    let mut fd = g(d.exp())?;
    trace.push((c.exp(), fc));
    trace.push((d.exp(), fd));
    for _ in 0..200 {
        if (b - a).abs() < 1e-13 {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv * (b - a);
            fc = g(c.exp())?;
            trace.push((c.exp(), fc));
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv * (b - a);
            fd = g(d.exp())?;
            trace.push((d.exp(), fd));
        }
    }
    Ok(if fc >= fd {
        (c.exp(), fc)
    } else {
        (d.exp(), fd)
    })
}

/// `M_λ f(x)` with its best radii.
///
/// Averages of `|f|` are taken on a log grid, every bracketed local maximum is
/// refined by golden section, and all maxima within `rel_tol` of the best are
/// kept. With `λ = 0` the radius `0` competes with value `|f(x)|`.
pub fn maximal(
    f: &DirectionalFunction,
    x: &[f64],
    lambda: f64,
    opts: &MaximalOptions,
) -> Result<RadiiSet> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return arg("λ must be finite and >= 0");
    }
    if !f.is_continuous() {
        log::warn!("maximal operator applied to a function flagged discontinuous");
    }
    if opts.grid < 3 {
        return arg("radius grid needs at least 3 points");
    }
    let g = f.abs();
    let r_max = opts.r_max.unwrap_or_else(|| default_r_max(f, x));
    let r_lo = if lambda > 0.0 { lambda } else { opts.r_floor };
    if !(r_max > r_lo) {
        return arg(format!("r_max {r_max} must exceed the lower radius {r_lo}"));
    }
    let avg = |r: f64| -> Result<f64> {
        match ball_average(&g, x, r) {
            Ok(v) if v > OVERFLOW_GUARD => Ok(f64::INFINITY),
            Ok(v) => Ok(v),
            Err(Error::NonFinite { .. }) => Ok(f64::INFINITY),
            Err(e) => Err(e),
        }
    };
    let (s_lo, s_hi) = (r_lo.ln(), r_max.ln());
    let m = opts.grid;
    let radii: Vec<f64> = (0..m)
        .map(|i| (s_lo + (s_hi - s_lo) * i as f64 / (m - 1) as f64).exp())
        .collect();
    let values: Vec<f64> = radii.par_iter().map(|&r| avg(r)).collect::<Result<_>>()?;
    let mut trace: Vec<(f64, f64)> = radii.iter().copied().zip(values.iter().copied()).collect();
    let at_zero = if lambda == 0.0 {
        Some(g.try_eval(x).unwrap_or(f64::INFINITY))
    } else {
        None
    };

    if values.iter().chain(at_zero.iter()).any(|v| v.is_infinite()) {
        return Ok(RadiiSet {
            x: x.to_vec(),
            lambda,
            value: f64::INFINITY,
            radii: Vec::new(),
            plateaus: Vec::new(),
            r_max,
            trace,
        });
    }

    // bracketed local maxima, refined
    let mut cands: Vec<(Radius, f64)> = Vec::new();
    for i in 0..m {
        let left = if i == 0 {
            f64::NEG_INFINITY
        } else {
            values[i - 1]
        };
        let right = if i + 1 == m {
            f64::NEG_INFINITY
        } else {
            values[i + 1]
        };
        let v = values[i];
        let is_max = (v >= left && v > right) || (v > left && v >= right);
        if !is_max {
            continue;
        }
        if i + 1 == m {
            cands.push((Radius::Infinity, v));
            continue;
        }
        let a = radii[i.saturating_sub(1)].ln();
        let b = radii[i + 1].ln();
        let (r, fr) = golden_max(&avg, a, b, &mut trace)?;
        if i == 0 && values[0] >= fr {
            cands.push((Radius::Finite(radii[0]), values[0]));
        } else if fr >= v {
            cands.push((Radius::Finite(r), fr));
        } else {
            cands.push((Radius::Finite(radii[i]), v));
        }
    }
    if let Some(v0) = at_zero {
        cands.push((Radius::Zero, v0));
    }
    let best = cands
        .iter()
        .map(|c| c.1)
        .chain(values.iter().copied())
        .fold(f64::NEG_INFINITY, f64::max);
    let tol = opts.rel_tol * best.abs().max(f64::MIN_POSITIVE);
    let tied = |v: f64| best - v <= tol;

    // plateaus: runs of at least three tied grid points
    let mut plateaus: Vec<(Radius, Radius)> = Vec::new();
    let mut i = 0;
    while i < m {
        if !tied(values[i]) {
            i += 1;
            continue;
        }
        let start = i;
        while i < m && tied(values[i]) {
            i += 1;
        }
        if i - start >= 3 {
            let lo = if start == 0 && at_zero.is_some_and(tied) {
                Radius::Zero
            } else {
                Radius::Finite(radii[start])
            };
            let hi = if i == m {
                Radius::Infinity
            } else {
                Radius::Finite(radii[i - 1])
            };
            plateaus.push((lo, hi));
        }
    }
    let inside_plateau = |r: &Radius| {
        plateaus.iter().any(|(a, b)| {
            r.value() >= a.value() * (1.0 - 1e-12) && r.value() <= b.value() * (1.0 + 1e-12)
        })
    };

    let mut best_radii: Vec<Radius> = cands
        .iter()
        .filter(|c| tied(c.1))
        .map(|c| c.0)
        .filter(|r| !inside_plateau(r))
        .collect();
    best_radii.sort_by(|a, b| a.value().total_cmp(&b.value()));
    best_radii.dedup_by(|a, b| {
        (a.value() - b.value()).abs() <= 1e-6 * b.value().abs() || a.value() == b.value()
    });

    let last = values[m - 1];
    if tied(last) && !plateaus.iter().any(|p| p.1 == Radius::Infinity) && last >= values[m - 2] {
        log::warn!("average at r_max = {r_max} has not decayed below the maximum; the best radii may include infinity");
    }
    Ok(RadiiSet {
        x: x.to_vec(),
        lambda,
        value: best,
        radii: best_radii,
        plateaus,
        r_max,
        trace,
    })
}

/// Whether `f` is differentiable at `x`: an attached oracle must be linear in
/// the direction on `±e_i` and on `theta`; otherwise `τ(R^n, f, x) < 1e-3`.
fn differentiable_at(f: &DirectionalFunction, x: &[f64], theta: &[f64]) -> Result<bool> {
    let n = f.dim();
    if f.has_derivative() {
        let mut grad = vec![0.0; n];
        for (a, g) in grad.iter_mut().enumerate() {
            let e = linalg::unit(n, a);
            let (Some(p), Some(q)) = (
                f.exact_derivative(x, &e),
                f.exact_derivative(x, &linalg::scale(&e, -1.0)),
            ) else {
                return Ok(false);
            };
            if (p + q).abs() > 1e-9 * (1.0 + p.abs()) {
                return Ok(false);
            }
            *g = p;
        }
        let dt = f.exact_derivative(x, theta);
        let dm = f.exact_derivative(x, &linalg::scale(theta, -1.0));
        let lin = linalg::dot(&grad, theta);
        return Ok(
            matches!((dt, dm), (Some(a), Some(b)) if (a - lin).abs() <= 1e-9 * (1.0 + lin.abs()) && (b + lin).abs() <= 1e-9 * (1.0 + lin.abs())),
        );
    }
    let t = tau(f, x, &SemiLinearSubspace::full(n), &TauOptions::default())?;
    Ok(t.value < 1e-3)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnvelopeDerivative {
    pub value: f64,
    /// Contribution of each radius examined.
    pub contributions: Vec<(Radius, f64)>,
    pub radii: RadiiSet,
}

/// Plateau sample count for the envelope supremum.
const PLATEAU_SAMPLES: usize = 16;

/// `D_θ M_λ f(x) = sup_{r ∈ ℛ} D_θ |f|_r(x)`, with `D_θ|f|(x)` at radius 0
/// and 0 at infinity. At `λ = 0` the formula is only used where `f` is
/// differentiable at `x`.
pub fn maximal_directional_derivative(
    f: &DirectionalFunction,
    x: &[f64],
    theta: &[f64],
    lambda: f64,
    opts: &MaximalOptions,
) -> Result<EnvelopeDerivative> {
    if (linalg::norm(theta) - 1.0).abs() > 1e-9 || theta.len() != f.dim() {
        return arg("θ must be a unit vector of the function's dimension");
    }
    if lambda == 0.0 && !differentiable_at(f, x, theta)? {
        return Err(Error::Precondition(format!(
            "λ = 0 needs f differentiable at {x:?}; the envelope formula is not available there"
        )));
    }
    let radii = maximal(f, x, lambda, opts)?;
    if !radii.value.is_finite() {
        return Err(Error::NonFinite {
            point: x.to_vec(),
            value: radii.value,
        });
    }
    let g = f.abs();
    let contribution = |r: Radius| -> Result<f64> {
        match r {
            Radius::Zero => {
                Ok(directional_derivative(&g, x, theta, &Ladder::default(), DERIVATIVE_TOL)?.value)
            }
            Radius::Finite(r) => sphere_average_derivative(&g, x, r, theta),
            Radius::Infinity => Ok(0.0),
        }
    };
    let mut contributions = Vec::new();
    for r in &radii.radii {
        contributions.push((*r, contribution(*r)?));
    }
    for (a, b) in &radii.plateaus {
        contributions.push((*a, contribution(*a)?));
        contributions.push((*b, contribution(*b)?));
        let lo = a.value().max(radii.lambda).max(opts.r_floor);
        let hi = if b.value().is_finite() {
            b.value()
        } else {
            radii.r_max
        };
        if hi > lo {
            for k in 1..PLATEAU_SAMPLES {
                let r = (lo.ln() + (hi.ln() - lo.ln()) * k as f64 / PLATEAU_SAMPLES as f64).exp();
                contributions.push((Radius::Finite(r), contribution(Radius::Finite(r))?));
            }
        }
    }
    let value = contributions
        .iter()
        .map(|c| c.1)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(EnvelopeDerivative {
        value,
        contributions,
        radii,
    })
}

/// `M_λ f` as a plain function (values only; NaN where evaluation fails).
pub fn maximal_function(
    f: &DirectionalFunction,
    lambda: f64,
    opts: &MaximalOptions,
) -> DirectionalFunction {
    let inner = f.clone();
    let opts = opts.clone();
    let label = format!("M_{lambda}[{}]", f.label());
    DirectionalFunction::new(f.dim(), move |x| {
        maximal(&inner, x, lambda, &opts)
            .map(|r| r.value)
            .unwrap_or(f64::NAN)
    })
    .with_label(label)
}

/// `M_λ f` on the nodes of a grid, in row-major order.
pub fn maximal_field(
    f: &DirectionalFunction,
    domain: &BoxDomain,
    resolution: usize,
    lambda: f64,
    opts: &MaximalOptions,
) -> Result<Vec<RadiiSet>> {
    if domain.dim() != f.dim() {
        return arg("box and function dimensions differ");
    }
    domain
        .grid_nodes(resolution)
        .par_iter()
        .map(|x| {
            let mut r = maximal(f, x, lambda, opts)?;
            r.trace.clear();
            Ok(r)
        })
        .collect()
}

/// Empirical constants `Ĉ_n` used as audit thresholds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditConstants {
    pub c_hat: [f64; 3],
}

impl Default for AuditConstants {
    fn default() -> Self {
        Self {
            c_hat: [1.0, 4.0, 8.0],
        }
    }
}

impl AuditConstants {
    pub fn for_dim(&self, n: usize) -> f64 {
        self.c_hat[n - 1]
    }
}

/// JSON-ready audit outcome.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditReport {
    pub check: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs` over the bound without its constant, i.e. the empirical constant.
    pub ratio: f64,
    pub pass: bool,
}

/// `sup_{0 < |a| <= radius} |f(x+a) - f(x) - d.a| / |a|`, sampled on 16
/// spheres of directions.
pub fn remainder_sup(f: &DirectionalFunction, x: &[f64], d: &[f64], radius: f64) -> Result<f64> {
    let n = f.dim();
    let count = [2, 128, 512][n - 1];
    let dirs = sample_unit_vectors(&SemiLinearSubspace::full(n), count, 0)?;
    let fx = f.try_eval(x)?;
    let mut sup = 0.0f64;
    for k in 1..=16 {
        let s = radius * k as f64 / 16.0;
        for u in &dirs {
            let a = linalg::scale(u, s);
            let v = f.try_eval(&linalg::add(x, &a))?;
            sup = sup.max((v - fx - linalg::dot(d, &a)).abs() / s);
        }
    }
    Ok(sup)
}

/// Compares `|avg_{B(x+h,r)} f - avg_{B(x,r)} f - d.h|` with
/// `|h| Ĉ_n u_sup`.
pub fn check_translation_bound(
    f: &DirectionalFunction,
    x: &[f64],
    h: &[f64],
    r: f64,
    d: &[f64],
    u_sup: f64,
    constants: &AuditConstants,
) -> Result<AuditReport> {
    let n = f.dim();
    if h.len() != n || d.len() != n || x.len() != n {
        return arg("dimension mismatch in translation check");
    }
    if !(r > 0.0) || !(u_sup >= 0.0) {
        return arg("need r > 0 and u_sup >= 0");
    }
    let lhs =
        (ball_average(f, &linalg::add(x, h), r)? - ball_average(f, x, r)? - linalg::dot(d, h))
            .abs();
    let nh = linalg::norm(h);
    let base = nh * u_sup;
    let rhs = base * constants.for_dim(n);
    let (ratio, pass) = if base == 0.0 {
        if lhs > 1e-10 {
            (f64::INFINITY, false)
        } else {
            (0.0, true)
        }
    } else {
        (lhs / base, lhs <= rhs + 1e-12)
    };
    Ok(AuditReport {
        check: "translation_bound".into(),
        lhs,
        rhs,
        ratio,
        pass,
    })
}

/// Largest sampled difference quotient of `M_λ f` on random nearby pairs in
/// `domain`, against `Ĉ_n sup M_λ f / λ`.
pub fn lipschitz_audit(
    f: &DirectionalFunction,
    lambda: f64,
    domain: &BoxDomain,
    samples: usize,
    seed: u64,
    opts: &MaximalOptions,
    constants: &AuditConstants,
) -> Result<AuditReport> {
    if !(lambda > 0.0) {
        return arg("Lipschitz audit needs λ > 0");
    }
    if domain.dim() != f.dim() || samples == 0 {
        return arg("audit needs a matching box and at least one sample");
    }
    let n = f.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let diam = domain.diameter();
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..samples)
        .map(|_| {
            let x: Vec<f64> = (0..n)
                .map(|a| rng.gen_range(domain.lo[a]..=domain.hi[a]))
                .collect();
            let step = diam * rng.gen_range(1e-3..0.1);
            let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let u = linalg::normalized(&u).unwrap_or_else(|| linalg::unit(n, 0));
            let y: Vec<f64> = (0..n)
                .map(|a| (x[a] + step * u[a]).clamp(domain.lo[a], domain.hi[a]))
                .collect();
            (x, y)
        })
        .collect();
    let measured: Vec<(f64, f64)> = pairs
        .par_iter()
        .map(|(x, y)| -> Result<(f64, f64)> {
            let mx = maximal(f, x, lambda, opts)?.value;
            let my = maximal(f, y, lambda, opts)?.value;
            let d = linalg::dist(x, y);
            let q = if d > 0.0 { (mx - my).abs() / d } else { 0.0 };
            Ok((q, mx.max(my)))
        })
        .collect::<Result<_>>()?;
    let lhs = measured.iter().map(|m| m.0).fold(0.0, f64::max);
    let sup = measured.iter().map(|m| m.1).fold(0.0, f64::max);
    let base = sup / lambda;
    let rhs = constants.for_dim(n) * base;
    let ratio = if base > 0.0 { lhs / base } else { 0.0 };
    Ok(AuditReport {
        check: "lipschitz".into(),
        lhs,
        rhs,
        ratio,
        pass: lhs <= rhs + 1e-12,
    })
}
