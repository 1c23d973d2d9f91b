//! Difference quotients, one-sided directional derivatives, the τ measure of
//! non-differentiability over semi-linear subspaces, the maximal
//! differentiability degree γ and grid scans for non-differentiability points.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{arg, Error, Result};
use crate::funcspace::{BoxDomain, DirectionalFunction};
use crate::linalg;
use crate::minimax::chebyshev_fit;
use crate::semilinear::{sample_unit_vectors, SemiLinearMap, SemiLinearSubspace};

/// Decreasing positive radii.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Ladder(Vec<f64>);

impl Ladder {
    pub fn new(radii: Vec<f64>) -> Result<Self> {
        if radii.is_empty() {
            return arg("ladder needs at least one radius");
        }
        if radii.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
            return arg("ladder radii must be positive and finite");
        }
        if radii.windows(2).any(|w| !(w[1] < w[0])) {
            return arg("ladder radii must be strictly decreasing");
        }
        Ok(Self(radii))
    }

    /// `r0, r0 q, r0 q^2, ..` with `count` rungs.
    pub fn geometric(r0: f64, q: f64, count: usize) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return arg("ladder ratio must lie in (0, 1)");
        }
        Self::new((0..count).map(|j| r0 * q.powi(j as i32)).collect())
    }

    pub fn radii(&self) -> &[f64] {
        &self.0
    }

    pub fn smallest(&self) -> f64 {
        *self.0.last().unwrap()
    }
}

impl Default for Ladder {
    /// `0.5 * 2^-j`, twelve rungs.
    fn default() -> Self {
        Self::geometric(0.5, 0.5, 12).unwrap()
    }
}

/// `(f(x + h) - f(x)) / |h|`.
pub fn difference_quotient(f: &DirectionalFunction, x: &[f64], h: &[f64]) -> Result<f64> {
    let nh = linalg::norm(h);
    if nh == 0.0 {
        return arg("difference quotient needs h != 0");
    }
    if h.len() != x.len() {
        return arg("h and x have different dimensions");
    }
    Ok((f.try_eval(&linalg::add(x, h))? - f.try_eval(x)?) / nh)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DerivativeEstimate {
    pub value: f64,
    /// Extrapolated ladder limit, when the ladder settled.
    pub numeric: Option<f64>,
    /// Value reported by the function's derivative oracle, if any.
    pub oracle: Option<f64>,
    /// `(radius, difference quotient)` per rung.
    pub trace: Vec<(f64, f64)>,
}

/// Settling tolerance for the ladder extrapolation.
pub const DERIVATIVE_TOL: f64 = 1e-6;

/// One-sided derivative `D_theta f(x)` for unit `theta`.
///
/// Difference quotients along the ladder are combined pairwise by first-order
/// Richardson extrapolation; the limit is accepted when the last three
/// extrapolants agree within `10 * tol`. An exact oracle value takes priority
/// and the numerical value is kept for comparison.
pub fn directional_derivative(
    f: &DirectionalFunction,
    x: &[f64],
    theta: &[f64],
    ladder: &Ladder,
    tol: f64,
) -> Result<DerivativeEstimate> {
    if (linalg::norm(theta) - 1.0).abs() > 1e-9 {
        return arg("theta must be a unit vector");
    }
    let trace: Vec<(f64, f64)> = ladder
        .radii()
        .iter()
        .map(|&r| difference_quotient(f, x, &linalg::scale(theta, r)).map(|q| (r, q)))
        .collect::<Result<_>>()?;
    let rich: Vec<f64> = trace
        .windows(2)
        .map(|w| {
            let rho = w[1].0 / w[0].0;
            (w[1].1 - rho * w[0].1) / (1.0 - rho)
        })
        .collect();
    let numeric = if trace.len() == 1 {
        Some(trace[0].1)
    } else if rich.len() < 3 {
        rich.last().copied()
    } else if let Some(q) = settled(&trace[trace.len() - 3..], tol) {
        // quotients of piecewise-linear functions go flat once the ladder is
        // inside the kink-free cone; extrapolating across the bend only hurts
        Some(q)
    } else {
        let last = &rich[rich.len() - 3..];
        let spread = last.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            - last.iter().copied().fold(f64::INFINITY, f64::min);
        (spread <= 10.0 * tol * (1.0 + last[2].abs())).then_some(last[2])
    };
    let oracle = f.exact_derivative(x, theta);
    match (oracle, numeric) {
        (Some(v), _) => Ok(DerivativeEstimate {
            value: v,
            numeric,
            oracle,
            trace,
        }),
        (None, Some(v)) => Ok(DerivativeEstimate {
            value: v,
            numeric,
            oracle,
            trace,
        }),
        (None, None) => Err(Error::Nonconvergent { trace }),
    }
}

fn settled(tail: &[(f64, f64)], tol: f64) -> Option<f64> {
    let q = tail.last()?.1;
    tail.iter()
        .all(|(_, v)| (v - q).abs() <= tol * (1.0 + q.abs()))
        .then_some(q)
}

/// `D_h f(x) = |h| D_{h/|h|} f(x)`, the positively homogeneous extension to
/// non-unit `h`.
pub fn directional_derivative_along(
    f: &DirectionalFunction,
    x: &[f64],
    h: &[f64],
    ladder: &Ladder,
) -> Result<f64> {
    let nh = linalg::norm(h);
    if nh == 0.0 {
        return Ok(0.0);
    }
    let theta = linalg::scale(h, 1.0 / nh);
    Ok(nh * directional_derivative(f, x, &theta, ladder, DERIVATIVE_TOL)?.value)
}

/// True when `|D^{r theta} f(x)|` blows up along the ladder: it grows by at
/// least 1.2x over each of the last four rungs, ends at least ten times above
/// `1 + |first quotient|`, and exceeds the Lipschitz bound when one is known.
pub fn quotients_diverge(
    f: &DirectionalFunction,
    x: &[f64],
    theta: &[f64],
    ladder: &Ladder,
) -> Result<bool> {
    let q: Vec<f64> = ladder
        .radii()
        .iter()
        .map(|&r| difference_quotient(f, x, &linalg::scale(theta, r)).map(f64::abs))
        .collect::<Result<_>>()?;
    if q.len() < 5 {
        return Ok(false);
    }
    let tail = &q[q.len() - 5..];
    let growing = tail.windows(2).all(|w| w[1] >= 1.2 * w[0] && w[0] > 0.0);
    let last = *q.last().unwrap();
    let big = last >= 10.0 * (1.0 + q[0]);
    let beyond_k = f.lipschitz().is_none_or(|k| last > k * (1.0 + 1e-9));
    Ok(growing && big && beyond_k)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Rung {
    pub radius: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TauEstimate {
    /// Minimax residual at the smallest radius.
    pub value: f64,
    pub map: SemiLinearMap,
    pub rungs: Vec<Rung>,
    pub directions: usize,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct TauOptions {
    /// Direction count; `None` picks 2, 360 or 1024 by the dimension of span(W).
    pub directions: Option<usize>,
    pub ladder: Ladder,
    pub seed: u64,
}

fn default_directions(span_dim: usize) -> usize {
    match span_dim {
        1 => 2,
        2 => 360,
        _ => 1024,
    }
}

/// `τ(W, f, x)`: for each radius `r`, the smallest uniform error
/// `max_w |f(x + r w) - f(x) - r L(w)| / r` over linear `L` and sampled unit
/// `w ∈ W`; the value is the smallest-radius residual.
pub fn tau(
    f: &DirectionalFunction,
    x: &[f64],
    w: &SemiLinearSubspace,
    opts: &TauOptions,
) -> Result<TauEstimate> {
    let n = f.dim();
    if w.dim() != n || x.len() != n {
        return arg("function, point and subspace dimensions differ");
    }
    if w.is_trivial() {
        return arg("τ is undefined on the trivial subspace");
    }
    let frame = w.span_frame();
    let count = match opts.directions {
        Some(c) if c < 2 * n => return arg(format!("need at least {} directions", 2 * n)),
        Some(c) => c,
        None => default_directions(frame.len()),
    };
    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(count);
    for d in sample_unit_vectors(w, count, opts.seed)? {
        if !dirs.iter().any(|e| linalg::dist(e, &d) < 1e-12) {
            dirs.push(d);
        }
    }
    let coords: Vec<Vec<f64>> = dirs
        .iter()
        .map(|d| frame.iter().map(|e| linalg::dot(d, e)).collect())
        .collect();
    let fx = f.try_eval(x)?;
    let mut rungs = Vec::with_capacity(opts.ladder.radii().len());
    let mut last_coef = vec![0.0; frame.len()];
    for &r in opts.ladder.radii() {
        let y: Vec<f64> = dirs
            .iter()
            .map(|d| f.try_eval(&linalg::axpy(x, r, d)).map(|v| (v - fx) / r))
            .collect::<Result<_>>()?;
        let fit = chebyshev_fit(&coords, &y)?;
        rungs.push(Rung {
            radius: r,
            residual: fit.residual,
        });
        last_coef = fit.coef;
    }
    let mut d = vec![0.0; n];
    for (c, e) in last_coef.iter().zip(&frame) {
        d = linalg::axpy(&d, *c, e);
    }
    Ok(TauEstimate {
        value: rungs.last().unwrap().residual,
        map: SemiLinearMap::from_coefficients(w.clone(), &d),
        rungs,
        directions: dirs.len(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct GammaOptions {
    pub tol: f64,
    /// Quasi-random candidate subspaces per dimension, on top of kink seeds.
    pub candidates: usize,
    /// Sampled `b` directions per candidate (plus `b = 0`).
    pub b_samples: usize,
    pub tau: TauOptions,
    pub seed: u64,
}

impl Default for GammaOptions {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            candidates: 64,
            b_samples: 32,
            tau: TauOptions::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GammaEstimate {
    pub degree: usize,
    /// Orthonormal basis of the witness `V`.
    pub witness: Vec<Vec<f64>>,
    /// `max_b τ(V + <b>^+)` for the witness.
    pub worst_residual: f64,
    pub tol: f64,
}

/// Finite-difference gradients around `x` at radius `rho`, clustered; returns
/// unit differences of cluster centres (kink normals).
fn kink_normals(f: &DirectionalFunction, x: &[f64], rho: f64) -> Vec<Vec<f64>> {
    let n = f.dim();
    if n == 1 {
        return Vec::new();
    }
    let probes = match n {
        2 => sample_unit_vectors(&SemiLinearSubspace::full(2), 24, 0),
        _ => sample_unit_vectors(&SemiLinearSubspace::full(3), 48, 0),
    }
    .unwrap_or_default();
    let h = 0.1 * rho;
    let mut grads: Vec<Vec<f64>> = Vec::new();
    for u in &probes {
        let p = linalg::axpy(x, rho, u);
        let g: Option<Vec<f64>> = (0..n)
            .map(|a| {
                let e = linalg::unit(n, a);
                let fp = f.try_eval(&linalg::axpy(&p, h, &e)).ok()?;
                let fm = f.try_eval(&linalg::axpy(&p, -h, &e)).ok()?;
                Some((fp - fm) / (2.0 * h))
            })
            .collect();
        if let Some(g) = g {
            grads.push(g);
        }
    }
    let scale = grads
        .iter()
        .map(|g| linalg::norm(g))
        .fold(0.0, f64::max)
        .max(1e-12);
    let mut clusters: Vec<(Vec<f64>, usize)> = Vec::new();
    for g in &grads {
        match clusters
            .iter_mut()
            .find(|(c, _)| linalg::dist(c, g) < 1e-3 * scale)
        {
            Some((c, k)) => {
                *c = linalg::scale(
                    &linalg::add(&linalg::scale(c, *k as f64), g),
                    1.0 / (*k + 1) as f64,
                );
                *k += 1;
            }
            None => clusters.push((g.clone(), 1)),
        }
    }
    clusters.sort_by_key(|c| std::cmp::Reverse(c.1));
    let keep: Vec<&Vec<f64>> = clusters
        .iter()
        .filter(|(_, k)| *k >= 2)
        .map(|(c, _)| c)
        .take(6)
        .collect();
    let mut normals: Vec<Vec<f64>> = Vec::new();
    for i in 0..keep.len() {
        for j in i + 1..keep.len() {
            if let Some(mut v) = linalg::normalized(&linalg::sub(keep[i], keep[j])) {
                linalg::sign_normalize(&mut v);
                if !normals.iter().any(|u| linalg::dist(u, &v) < 1e-9) {
                    normals.push(v);
                }
            }
        }
    }
    normals
}

/// Candidate `k`-dimensional subspaces (as orthonormal bases) of R^n.
fn candidate_subspaces(
    n: usize,
    k: usize,
    normals: &[Vec<f64>],
    budget: usize,
    seed: u64,
) -> Vec<Vec<Vec<f64>>> {
    let mut out: Vec<Vec<Vec<f64>>> = Vec::new();
    let off = ((seed as f64) * 0.618_033_988_749_894_9).fract();
    let hemisphere = |count: usize| -> Vec<Vec<f64>> {
        let golden = 0.5 * (5f64.sqrt() - 1.0);
        (0..count)
            .map(|i| {
                let z = 1.0 - (i as f64 + 0.5) / count as f64;
                let phi = 2.0 * PI * ((i as f64) * golden + off).fract();
                let r = (1.0 - z * z).max(0.0).sqrt();
                vec![r * phi.cos(), r * phi.sin(), z]
            })
            .collect()
    };
    let perp_of = |v: &[f64]| linalg::complement(&[v.to_vec()], n);
    match (n, k) {
        (2, 1) => {
            for nu in normals {
                out.push(perp_of(nu));
            }
            for i in 0..budget {
                let t = PI * (i as f64 + off) / budget as f64;
                out.push(vec![vec![t.cos(), t.sin()]]);
            }
        }
        (3, 2) => {
            for nu in normals {
                out.push(perp_of(nu));
            }
            for v in hemisphere(budget) {
                out.push(perp_of(&v));
            }
        }
        (3, 1) => {
            for i in 0..normals.len() {
                for j in i + 1..normals.len() {
                    if let Some(d) = linalg::normalized(&linalg::cross(&normals[i], &normals[j])) {
                        out.push(vec![d]);
                    }
                }
            }
            for nu in normals {
                for d in perp_of(nu) {
                    out.push(vec![d]);
                }
            }
            for v in hemisphere(budget) {
                out.push(vec![v]);
            }
        }
        _ => {}
    }
    out
}

/// `max_b τ(V + <b>^+)` over `b = 0` and sampled unit `b ⊥ V`; stops early
/// once `stop_above` is exceeded.
fn worst_halfspace_tau(
    f: &DirectionalFunction,
    x: &[f64],
    basis: &[Vec<f64>],
    b_samples: usize,
    opts: &TauOptions,
    stop_above: f64,
) -> Result<f64> {
    let n = f.dim();
    let v = SemiLinearSubspace::linear_span(n, basis)?;
    let comp = linalg::complement(v.linear_part(), n);
    let mut worst = tau(f, x, &v, opts)?.value;
    if worst >= stop_above {
        return Ok(worst);
    }
    let bs: Vec<Vec<f64>> = match comp.len() {
        0 => Vec::new(),
        1 => vec![comp[0].clone(), linalg::scale(&comp[0], -1.0)],
        _ => (0..b_samples.max(2))
            .map(|i| {
                let t = 2.0 * PI * i as f64 / b_samples.max(2) as f64;
                linalg::add(
                    &linalg::scale(&comp[0], t.cos()),
                    &linalg::scale(&comp[1], t.sin()),
                )
            })
            .collect(),
    };
    for b in bs {
        let h = SemiLinearSubspace::halfspace(&v, &b)?;
        worst = worst.max(tau(f, x, &h, opts)?.value);
        if worst >= stop_above {
            break;
        }
    }
    Ok(worst)
}

/// Maximal differentiability degree: the largest `k` for which some sampled
/// `k`-dimensional `V` has `τ(V + <b>^+) < tol` for every sampled `b`.
pub fn gamma(f: &DirectionalFunction, x: &[f64], opts: &GammaOptions) -> Result<GammaEstimate> {
    if !(opts.tol > 0.0) {
        return arg("γ tolerance must be positive");
    }
    let n = f.dim();
    let full = SemiLinearSubspace::full(n);
    let t_full = tau(f, x, &full, &opts.tau)?.value;
    if t_full < opts.tol {
        return Ok(GammaEstimate {
            degree: n,
            witness: full.linear_part().to_vec(),
            worst_residual: t_full,
            tol: opts.tol,
        });
    }
    let normals = kink_normals(f, x, 0.5 * opts.tau.ladder.smallest());
    for k in (1..n).rev() {
        let mut best: Option<(f64, Vec<Vec<f64>>)> = None;
        for basis in candidate_subspaces(n, k, &normals, opts.candidates, opts.seed) {
            let r = worst_halfspace_tau(f, x, &basis, opts.b_samples, &opts.tau, opts.tol)?;
            if r < opts.tol && best.as_ref().is_none_or(|(b, _)| r < *b) {
                best = Some((r, basis));
            }
        }
        if let Some((r, basis)) = best {
            let mut witness = SemiLinearSubspace::linear_span(n, &basis)?
                .linear_part()
                .to_vec();
            witness.iter_mut().for_each(|v| linalg::sign_normalize(v));
            return Ok(GammaEstimate {
                degree: k,
                witness,
                worst_residual: r,
                tol: opts.tol,
            });
        }
    }
    Ok(GammaEstimate {
        degree: 0,
        witness: Vec::new(),
        worst_residual: 0.0,
        tol: opts.tol,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanOptions {
    pub tol: f64,
    /// Directions per τ evaluation.
    pub directions: usize,
    /// Compute γ for flagged points.
    pub gamma: bool,
    pub gamma_candidates: usize,
    pub seed: u64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            directions: 64,
            gamma: true,
            gamma_candidates: 16,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SingularPoint {
    pub x: Vec<f64>,
    pub tau: f64,
    /// γ at the scan scale; `None` when not requested.
    pub gamma: Option<usize>,
    /// Difference quotients diverge along some coordinate direction.
    pub sf: bool,
}

/// Flags grid nodes with `τ(R^n, f, x) >= tol` at the scan scale (radii 2, 1
/// and 0.5 grid cells, the smallest deciding), or with diverging difference
/// quotients. Output is in row-major grid order.
pub fn singular_scan(
    f: &DirectionalFunction,
    domain: &BoxDomain,
    resolution: usize,
    opts: &ScanOptions,
) -> Result<Vec<SingularPoint>> {
    if resolution < 16 {
        return arg("singular scan needs resolution >= 16");
    }
    let n = f.dim();
    if domain.dim() != n {
        return arg("box and function dimensions differ");
    }
    let r_min = 0.5 * domain.cell(resolution);
    let tau_opts = TauOptions {
        directions: Some(opts.directions.max(2 * n)),
        ladder: Ladder::new(vec![4.0 * r_min, 2.0 * r_min, r_min])?,
        seed: opts.seed,
    };
    let gamma_opts = GammaOptions {
        tol: opts.tol,
        candidates: opts.gamma_candidates,
        b_samples: 8,
        tau: tau_opts.clone(),
        seed: opts.seed,
    };
    let full = SemiLinearSubspace::full(n);
    let sf_ladder = Ladder::default();
    let nodes = domain.grid_nodes(resolution);
    let results: Vec<Option<SingularPoint>> = nodes
        .par_iter()
        .map(|x| -> Result<Option<SingularPoint>> {
            let t = tau(f, x, &full, &tau_opts)?.value;
            let mut sf = false;
            for a in 0..n {
                for s in [1.0, -1.0] {
                    let th = linalg::scale(&linalg::unit(n, a), s);
                    sf |= quotients_diverge(f, x, &th, &sf_ladder).unwrap_or(false);
                }
            }
            if t < opts.tol && !sf {
                return Ok(None);
            }
            let g = if opts.gamma {
                Some(gamma(f, x, &gamma_opts)?.degree)
            } else {
                None
            };
            Ok(Some(SingularPoint {
                x: x.clone(),
                tau: t,
                gamma: g,
                sf,
            }))
        })
        .collect::<Result<_>>()?;
    Ok(results.into_iter().flatten().collect())
}
