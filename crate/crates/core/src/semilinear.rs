//! Semi-linear subspaces `W = V + <b_1, .., b_m>^+` (a linear part plus at most
//! two rays), the unit-ball Hausdorff metric between them, and linear maps on
//! `W` with their minimum-norm extension to R^n.

use std::f64::consts::PI;
use std::fmt;

use serde::Serialize;

use crate::error::{arg, Error, Result};
use crate::linalg;

/// Angular tolerance (radians) for identifying or opposing ray directions.
pub const ANGLE_TOL: f64 = 1e-10;
const MEMBER_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SemiLinearSubspace {
    dim: usize,
    linear: Vec<Vec<f64>>,
    rays: Vec<Vec<f64>>,
}

fn angle(u: &[f64], v: &[f64]) -> f64 {
    let c = linalg::dot(u, v);
    let s = linalg::norm(&linalg::sub(u, &linalg::scale(v, c)));
    s.atan2(c)
}

impl SemiLinearSubspace {
    /// Canonicalises `span(linear) + cone(rays)`: the linear part becomes an
    /// orthonormal basis, rays are projected off it and normalised, rays that
    /// vanish are dropped, duplicate rays merge and opposite pairs are absorbed
    /// into the linear part.
    pub fn new(dim: usize, linear: &[Vec<f64>], rays: &[Vec<f64>]) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return arg(format!("ambient dimension must be 1..=3, got {dim}"));
        }
        if linear.iter().chain(rays).any(|v| v.len() != dim) {
            return arg("generator length differs from the ambient dimension");
        }
        if linear.iter().chain(rays).flatten().any(|c| !c.is_finite()) {
            return arg("generators must be finite");
        }
        let mut basis = linalg::gram_schmidt(linear, ANGLE_TOL);
        let mut pending: Vec<Vec<f64>> = rays.to_vec();
        loop {
            let mut units: Vec<Vec<f64>> = Vec::new();
            for r in &pending {
                let scale = linalg::norm(r);
                let perp = linalg::reject(&linalg::reject(r, &basis), &basis);
                if linalg::norm(&perp) <= ANGLE_TOL * scale.max(1e-300) {
                    continue;
                }
                let u = linalg::normalized(&perp).expect("nonzero");
                if !units.iter().any(|v| angle(v, &u) < ANGLE_TOL) {
                    units.push(u);
                }
            }
            let opposite = (0..units.len())
                .flat_map(|i| (i + 1..units.len()).map(move |j| (i, j)))
                .find(|&(i, j)| PI - angle(&units[i], &units[j]) < ANGLE_TOL);
            match opposite {
                Some((i, _)) => {
                    let mut gens = basis.clone();
                    gens.push(units[i].clone());
                    basis = linalg::gram_schmidt(&gens, ANGLE_TOL);
                    pending = units;
                }
                None => {
                    pending = units;
                    break;
                }
            }
        }
        if pending.len() > 2 {
            return Err(Error::TooManyRays {
                found: pending.len(),
            });
        }
        pending.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
        Ok(Self {
            dim,
            linear: basis,
            rays: pending,
        })
    }

    pub fn full(dim: usize) -> Self {
        let linear = (0..dim).map(|a| linalg::unit(dim, a)).collect();
        Self {
            dim,
            linear,
            rays: Vec::new(),
        }
    }

    pub fn trivial(dim: usize) -> Self {
        Self {
            dim,
            linear: Vec::new(),
            rays: Vec::new(),
        }
    }

    pub fn linear_span(dim: usize, vectors: &[Vec<f64>]) -> Result<Self> {
        Self::new(dim, vectors, &[])
    }

    pub fn ray(direction: Vec<f64>) -> Result<Self> {
        Self::new(direction.len(), &[], &[direction])
    }

    /// Parses `full`, `0`, or `V=[v1;v2];ray=[b1;b2]` (either part optional).
    pub fn parse(text: &str, dim: usize) -> Result<Self> {
        let t = text.trim();
        match t {
            "full" => return Ok(Self::full(dim)),
            "0" | "trivial" => return Ok(Self::trivial(dim)),
            _ => {}
        }
        // `;` separates both keys and vectors; a key stays in force until the next one
        let mut lin_vecs: Vec<Vec<f64>> = Vec::new();
        let mut ray_vecs: Vec<Vec<f64>> = Vec::new();
        let mut current: Option<bool> = None;
        for piece in t.split(';').map(str::trim).filter(|s| !s.is_empty()) {
            let body = if let Some((key, rest)) = piece.split_once('=') {
                current = match key.trim() {
                    "V" | "v" => Some(false),
                    "ray" | "rays" => Some(true),
                    other => return arg(format!("unknown subspace key `{other}`")),
                };
                rest
            } else {
                piece
            };
            let body = body.trim().trim_start_matches('[').trim_end_matches(']');
            if body.trim().is_empty() {
                continue;
            }
            let v: Vec<f64> = body
                .split(',')
                .map(|s| s.trim().replace('\u{2212}', "-").parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Argument(format!("bad vector `{body}`: {e}")))?;
            match current {
                Some(true) => ray_vecs.push(v),
                Some(false) => lin_vecs.push(v),
                None => return arg(format!("`{piece}` is not attached to V= or ray=")),
            }
        }
        Self::new(dim, &lin_vecs, &ray_vecs)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Orthonormal basis of the linear part.
    pub fn linear_part(&self) -> &[Vec<f64>] {
        &self.linear
    }

    pub fn rays(&self) -> &[Vec<f64>] {
        &self.rays
    }

    pub fn is_linear(&self) -> bool {
        self.rays.is_empty()
    }

    pub fn is_trivial(&self) -> bool {
        self.linear.is_empty() && self.rays.is_empty()
    }

    /// Orthonormal basis of `span(W)`, linear part first.
    pub fn span_frame(&self) -> Vec<Vec<f64>> {
        let mut gens = self.linear.clone();
        gens.extend(self.rays.iter().cloned());
        linalg::gram_schmidt(&gens, ANGLE_TOL)
    }

    fn cone_project(&self, p: &[f64]) -> Vec<f64> {
        // nonnegative least squares over at most two mutually non-opposite rays
        let mut best = vec![0.0; self.dim];
        let mut best_res = linalg::norm(p);
        let mut consider = |q: Vec<f64>| {
            let r = linalg::dist(p, &q);
            if r < best_res {
                best_res = r;
                best = q;
            }
        };
        for r in &self.rays {
            let c = linalg::dot(p, r);
            if c > 0.0 {
                consider(linalg::scale(r, c));
            }
        }
        if self.rays.len() == 2 {
            let (a, b) = (&self.rays[0], &self.rays[1]);
            let g = linalg::dot(a, b);
            let det = 1.0 - g * g;
            if det > 1e-14 {
                let (pa, pb) = (linalg::dot(p, a), linalg::dot(p, b));
                let la = (pa - g * pb) / det;
                let lb = (pb - g * pa) / det;
                if la >= 0.0 && lb >= 0.0 {
                    consider(linalg::add(&linalg::scale(a, la), &linalg::scale(b, lb)));
                }
            }
        }
        best
    }

    /// Nearest point of `W` to `p`.
    pub fn project(&self, p: &[f64]) -> Vec<f64> {
        let v = linalg::project(p, &self.linear);
        let perp = linalg::sub(p, &v);
        linalg::add(&v, &self.cone_project(&perp))
    }

    /// Nearest point of `W ∩ B(0,1)`; exact because `W` is a convex cone.
    pub fn project_unit_ball(&self, p: &[f64]) -> Vec<f64> {
        let q = self.project(p);
        let nq = linalg::norm(&q);
        if nq > 1.0 {
            linalg::scale(&q, 1.0 / nq)
        } else {
            q
        }
    }

    pub fn contains(&self, w: &[f64]) -> bool {
        w.len() == self.dim
            && linalg::dist(w, &self.project(w)) <= MEMBER_TOL * (1.0 + linalg::norm(w))
    }

    /// Same set up to `tol`, compared through projectors and ray directions.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        if self.dim != other.dim
            || self.linear.len() != other.linear.len()
            || self.rays.len() != other.rays.len()
        {
            return false;
        }
        let n = self.dim;
        for a in 0..n {
            let e = linalg::unit(n, a);
            if linalg::dist(
                &linalg::project(&e, &self.linear),
                &linalg::project(&e, &other.linear),
            ) > tol
            {
                return false;
            }
        }
        self.rays
            .iter()
            .all(|r| other.rays.iter().any(|s| linalg::dist(r, s) <= tol))
    }

    /// `(V, b) -> V + <b>^+` in canonical form.
    pub fn halfspace(v: &Self, b: &[f64]) -> Result<Self> {
        if !v.is_linear() {
            return arg("halfspace needs a purely linear V");
        }
        if b.len() != v.dim {
            return arg("b has the wrong dimension");
        }
        if linalg::norm(b) == 0.0 {
            log::warn!("halfspace: b = 0, returning V unchanged");
            return Ok(v.clone());
        }
        Self::new(v.dim, &v.linear, &[b.to_vec()])
    }
}

impl fmt::Display for SemiLinearSubspace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let fmt_vecs = |vs: &[Vec<f64>]| {
            vs.iter()
                .map(|v| {
                    v.iter()
                        .map(|c| format!("{c}"))
                        .collect::<Vec<_>>()
                        .join(",")
                })
                .collect::<Vec<_>>()
                .join(";")
        };
        if self.is_trivial() {
            return write!(f, "0");
        }
        let mut parts = Vec::new();
        if !self.linear.is_empty() {
            parts.push(format!("V=[{}]", fmt_vecs(&self.linear)));
        }
        if !self.rays.is_empty() {
            parts.push(format!("ray=[{}]", fmt_vecs(&self.rays)));
        }
        write!(f, "{}", parts.join(";"))
    }
}

fn fib_offset(seed: u64) -> f64 {
    // golden-ratio Weyl step keeps seeds well separated on [0,1)
    ((seed as f64) * 0.618_033_988_749_894_9).fract()
}

/// `N` unit vectors in `W`, quasi-uniform over `W ∩ S^{n-1}`.
pub fn sample_unit_vectors(
    w: &SemiLinearSubspace,
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if w.is_trivial() {
        return arg("cannot sample unit vectors of the trivial subspace");
    }
    if count == 0 {
        return arg("sample count must be positive");
    }
    let lin = w.linear_part();
    let rays = w.rays();
    let combo = |a: &[f64], ca: f64, b: &[f64], cb: f64| {
        linalg::add(&linalg::scale(a, ca), &linalg::scale(b, cb))
    };
    let off = fib_offset(seed);
    let out: Vec<Vec<f64>> = match (lin.len(), rays.len()) {
        (1, 0) => (0..count)
            .map(|i| {
                if i % 2 == 0 {
                    lin[0].clone()
                } else {
                    linalg::scale(&lin[0], -1.0)
                }
            })
            .collect(),
        (0, 1) => vec![rays[0].clone(); count],
        (2, 0) => (0..count)
            .map(|i| {
                let t = 2.0 * PI * (i as f64 + off) / count as f64;
                combo(&lin[0], t.cos(), &lin[1], t.sin())
            })
            .collect(),
        (1, 1) => arc(&rays[0], &lin[0], -0.5 * PI, 0.5 * PI, count),
        (0, 2) => {
            let a = &rays[0];
            let perp = linalg::normalized(&linalg::reject(&rays[1], std::slice::from_ref(a)))
                .expect("rays are not parallel");
            arc(a, &perp, 0.0, angle(a, &rays[1]), count)
        }
        (3, 0) => fibonacci(count, off, -1.0, 2.0 * PI)
            .into_iter()
            .map(|(z, c, s)| {
                let r = (1.0 - z * z).max(0.0).sqrt();
                vec![r * c, r * s, z]
            })
            .collect(),
        (2, 1) => fibonacci(count, off, 0.0, 2.0 * PI)
            .into_iter()
            .map(|(z, c, s)| {
                let r = (1.0 - z * z).max(0.0).sqrt();
                linalg::add(
                    &combo(&lin[0], r * c, &lin[1], r * s),
                    &linalg::scale(&rays[0], z),
                )
            })
            .collect(),
        (1, 2) => {
            let a = &rays[0];
            let perp = linalg::normalized(&linalg::reject(&rays[1], std::slice::from_ref(a)))
                .expect("rays are not parallel");
            let alpha = angle(a, &rays[1]);
            fibonacci(count, off, -1.0, alpha)
                .into_iter()
                .map(|(z, c, sn)| {
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let u = combo(a, c, &perp, sn);
                    linalg::add(&linalg::scale(&u, r), &linalg::scale(&lin[0], z))
                })
                .collect()
        }
        _ => return arg("unsupported semi-linear shape"),
    };
    Ok(out)
}

fn arc(e1: &[f64], e2: &[f64], from: f64, to: f64, count: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|i| {
            let t = if count == 1 {
                0.5 * (from + to)
            } else {
                from + (to - from) * i as f64 / (count - 1) as f64
            };
            linalg::add(&linalg::scale(e1, t.cos()), &linalg::scale(e2, t.sin()))
        })
        .collect()
}

/// Fibonacci lattice on the zone `z ∈ [z_lo, 1]`, azimuth range `[0, span)`.
fn fibonacci(count: usize, off: f64, z_lo: f64, span: f64) -> Vec<(f64, f64, f64)> {
    let golden = 0.5 * (5f64.sqrt() - 1.0);
    (0..count)
        .map(|i| {
            let z = 1.0 - (1.0 - z_lo) * (i as f64 + 0.5) / count as f64;
            let phi = span * ((i as f64) * golden + off).fract();
            (z, phi.cos(), phi.sin())
        })
        .collect()
}

/// Covering-radius estimate for `count` samples of `W ∩ S^{n-1}`.
pub fn mesh_spacing(w: &SemiLinearSubspace, count: usize) -> f64 {
    let count = count.max(1) as f64;
    match (w.linear_part().len(), w.rays().len()) {
        (0, 0) | (0, 1) => 0.0,
        (1, 0) => {
            if count >= 2.0 {
                0.0
            } else {
                2.0
            }
        }
        (2, 0) => PI / count,
        (1, 1) => PI / (2.0 * (count - 1.0).max(1.0)),
        (0, 2) => angle(&w.rays()[0], &w.rays()[1]) / (2.0 * (count - 1.0).max(1.0)),
        (3, 0) => (4.0 * PI / count).sqrt(),
        (2, 1) => (2.0 * PI / count).sqrt(),
        (1, 2) => (2.0 * angle(&w.rays()[0], &w.rays()[1]) / count).sqrt(),
        _ => f64::INFINITY,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HcDistance {
    pub value: f64,
    /// The exact distance lies in `[value, value + mesh_error]`.
    pub mesh_error: f64,
}

/// Default sample count: one-degree spacing on a full circle.
pub const HC_DEFAULT_SAMPLES: usize = 360;

/// Hausdorff distance between `W1 ∩ B_n` and `W2 ∩ B_n`.
///
/// The distance to a convex set is convex, so the supremum over `W ∩ B_n` is
/// attained on `W ∩ S^{n-1}` (or at 0); only unit vectors are sampled.
pub fn hc_distance(
    w1: &SemiLinearSubspace,
    w2: &SemiLinearSubspace,
    count: usize,
) -> Result<HcDistance> {
    if w1.dim() != w2.dim() {
        return arg(format!(
            "ambient dimensions differ: {} vs {}",
            w1.dim(),
            w2.dim()
        ));
    }
    if count < 100 {
        return arg("hc_distance needs at least 100 samples");
    }
    let one_way = |a: &SemiLinearSubspace, b: &SemiLinearSubspace| -> Result<f64> {
        if a.is_trivial() {
            return Ok(0.0);
        }
        Ok(sample_unit_vectors(a, count, 0)?
            .iter()
            .map(|u| linalg::dist(u, &b.project_unit_ball(u)))
            .fold(0.0, f64::max))
    };
    let value = one_way(w1, w2)?.max(one_way(w2, w1)?);
    Ok(HcDistance {
        value,
        mesh_error: mesh_spacing(w1, count).max(mesh_spacing(w2, count)),
    })
}

/// A linear map on a semi-linear subspace, given by its values on generators.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SemiLinearMap {
    carrier: SemiLinearSubspace,
    generators: Vec<Vec<f64>>,
    values: Vec<f64>,
    extended: Option<Vec<f64>>,
}

impl SemiLinearMap {
    /// `L` with `L(g) = value` for each linear or ray generator `g`.
    pub fn from_generators(
        dim: usize,
        linear: &[(Vec<f64>, f64)],
        rays: &[(Vec<f64>, f64)],
    ) -> Result<Self> {
        let lin: Vec<Vec<f64>> = linear.iter().map(|(g, _)| g.clone()).collect();
        let ray: Vec<Vec<f64>> = rays.iter().map(|(g, _)| g.clone()).collect();
        let carrier = SemiLinearSubspace::new(dim, &lin, &ray)?;
        let mut generators = lin;
        generators.extend(ray);
        let values = linear.iter().chain(rays).map(|(_, v)| *v).collect();
        Ok(Self {
            carrier,
            generators,
            values,
            extended: None,
        })
    }

    /// `w -> d . w` restricted to `carrier`; `d` is projected onto `span(W)`.
    pub fn from_coefficients(carrier: SemiLinearSubspace, d: &[f64]) -> Self {
        let frame = carrier.span_frame();
        let d = linalg::project(d, &frame);
        let values = frame.iter().map(|g| linalg::dot(&d, g)).collect();
        Self {
            carrier,
            generators: frame,
            values,
            extended: Some(d),
        }
    }

    pub fn carrier(&self) -> &SemiLinearSubspace {
        &self.carrier
    }

    pub fn generator_values(&self) -> &[f64] {
        &self.values
    }

    pub fn extended(&self) -> Option<&[f64]> {
        self.extended.as_deref()
    }

    /// `L(w)`; uses the extension, computing it on the fly if needed.
    pub fn apply(&self, w: &[f64]) -> Result<f64> {
        match &self.extended {
            Some(d) => Ok(linalg::dot(d, w)),
            None => Ok(linalg::dot(
                extend_linear_map(self)?.extended.as_ref().unwrap(),
                w,
            )),
        }
    }

    /// Lipschitz constant of `L` on `W`, which equals `|D|` for the
    /// minimum-norm extension `D`.
    pub fn lipschitz(&self) -> Result<f64> {
        match &self.extended {
            Some(d) => Ok(linalg::norm(d)),
            None => Ok(linalg::norm(
                extend_linear_map(self)?.extended.as_ref().unwrap(),
            )),
        }
    }
}

/// Fills the minimum-norm `D ∈ span(W)` with `D . g = L(g)` on every generator.
pub fn extend_linear_map(l: &SemiLinearMap) -> Result<SemiLinearMap> {
    let n = l.carrier.dim();
    let d = linalg::lstsq(&l.generators, &l.values, n);
    for (g, v) in l.generators.iter().zip(&l.values) {
        let r = linalg::dot(&d, g) - v;
        if r.abs() > 1e-9 * (1.0 + v.abs() + linalg::norm(g)) {
            return Err(Error::Consistency(format!(
                "generator {g:?} has value {v} but no linear map on the span agrees (residual {r:.3e})"
            )));
        }
    }
    Ok(SemiLinearMap {
        extended: Some(d),
        ..l.clone()
    })
}

/// Random subspace with a linear part of dimension `k` and `rays` extra rays,
/// for property tests and γ candidate generation.
pub fn random_subspace(
    dim: usize,
    k: usize,
    rays: usize,
    rng: &mut impl rand::Rng,
) -> Result<SemiLinearSubspace> {
    let mut gauss = || -> Vec<f64> {
        (0..dim)
            .map(|_| {
                let u: f64 = rng.gen_range(1e-12..1.0);
                let v: f64 = rng.gen_range(0.0..1.0);
                (-2.0 * u.ln()).sqrt() * (2.0 * PI * v).cos()
            })
            .collect()
    };
    let lin: Vec<Vec<f64>> = (0..k).map(|_| gauss()).collect();
    let r: Vec<Vec<f64>> = (0..rays).map(|_| gauss()).collect();
    SemiLinearSubspace::new(dim, &lin, &r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn e(n: usize, a: usize) -> Vec<f64> {
        linalg::unit(n, a)
    }

    #[test]
    fn opposite_rays_become_linear() {
        let w = SemiLinearSubspace::new(2, &[], &[vec![2.0, 0.0], vec![-1.0, 0.0], vec![0.0, 3.0]])
            .unwrap();
        assert_eq!(w.linear_part().len(), 1);
        assert_eq!(w.rays(), &[vec![0.0, 1.0]]);
    }

    #[test]
    fn ray_inside_linear_part_is_dropped() {
        let w = SemiLinearSubspace::new(3, &[e(3, 0)], &[vec![5.0, 0.0, 0.0]]).unwrap();
        assert!(w.is_linear());
        let w = SemiLinearSubspace::new(3, &[e(3, 0)], &[vec![1.0, 1.0, 0.0]]).unwrap();
        assert_eq!(w.rays(), &[e(3, 1)]);
    }

    #[test]
    fn too_many_rays_is_an_error() {
        let r = SemiLinearSubspace::new(3, &[], &[e(3, 0), e(3, 1), e(3, 2)]);
        assert!(matches!(r, Err(Error::TooManyRays { found: 3 })));
    }

    #[test]
    fn halfspace_examples() {
        let yaxis = SemiLinearSubspace::linear_span(2, &[e(2, 1)]).unwrap();
        let h = SemiLinearSubspace::halfspace(&yaxis, &e(2, 0)).unwrap();
        assert!(h.contains(&[0.5, -3.0]) && !h.contains(&[-0.5, 1.0]));
        let zero = SemiLinearSubspace::trivial(2);
        let r = SemiLinearSubspace::halfspace(&zero, &e(2, 0)).unwrap();
        assert_eq!(r, SemiLinearSubspace::ray(e(2, 0)).unwrap());
        let xaxis = SemiLinearSubspace::linear_span(2, &[e(2, 0)]).unwrap();
        assert_eq!(
            SemiLinearSubspace::halfspace(&xaxis, &e(2, 0)).unwrap(),
            xaxis
        );
        assert_eq!(
            SemiLinearSubspace::halfspace(&xaxis, &[0.0, 0.0]).unwrap(),
            xaxis
        );
        assert!(SemiLinearSubspace::halfspace(&h, &e(2, 0)).is_err());
    }

    #[test]
    fn parse_round_trip() {
        let w = SemiLinearSubspace::parse("V=[0,1];ray=[1,0]", 2).unwrap();
        assert_eq!(w.linear_part(), &[e(2, 1)]);
        assert_eq!(w.rays(), &[e(2, 0)]);
        let again = SemiLinearSubspace::parse(&w.to_string(), 2).unwrap();
        assert!(w.approx_eq(&again, 1e-12));
        assert_eq!(
            SemiLinearSubspace::parse("full", 3).unwrap(),
            SemiLinearSubspace::full(3)
        );
        let two = SemiLinearSubspace::parse("V=[1,0,0;0,1,0]", 3).unwrap();
        assert_eq!(two.linear_part().len(), 2);
        assert!(SemiLinearSubspace::parse("W=[1]", 1).is_err());
    }

    #[test]
    fn sampling_examples() {
        let line = SemiLinearSubspace::full(1);
        assert_eq!(
            sample_unit_vectors(&line, 2, 0).unwrap(),
            vec![vec![1.0], vec![-1.0]]
        );
        let ray = SemiLinearSubspace::ray(e(2, 0)).unwrap();
        assert!(sample_unit_vectors(&ray, 5, 3)
            .unwrap()
            .iter()
            .all(|v| v == &e(2, 0)));
        let h = SemiLinearSubspace::parse("V=[0,1];ray=[1,0]", 2).unwrap();
        let s = sample_unit_vectors(&h, 4, 0).unwrap();
        assert_eq!(s.len(), 4);
        assert!(s.iter().all(|v| v[0] >= -1e-15 && h.contains(v)));
        assert!(sample_unit_vectors(&SemiLinearSubspace::trivial(2), 4, 0).is_err());
    }

    #[test]
    fn samples_are_members_for_every_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (n, k, r) in [
            (2, 2, 0),
            (2, 1, 1),
            (2, 0, 2),
            (3, 3, 0),
            (3, 2, 1),
            (3, 1, 2),
            (3, 0, 2),
            (3, 1, 1),
        ] {
            let w = random_subspace(n, k, r, &mut rng).unwrap();
            for v in sample_unit_vectors(&w, 200, 1).unwrap() {
                assert!((linalg::norm(&v) - 1.0).abs() < 1e-12);
                assert!(w.contains(&v), "{w} {v:?}");
            }
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let w = SemiLinearSubspace::full(3);
        assert_eq!(
            sample_unit_vectors(&w, 50, 9).unwrap(),
            sample_unit_vectors(&w, 50, 9).unwrap()
        );
    }

    #[test]
    fn hc_examples() {
        let x = SemiLinearSubspace::linear_span(2, &[e(2, 0)]).unwrap();
        let d = hc_distance(&x, &x, 360).unwrap();
        assert!(d.value <= d.mesh_error);
        let p = SemiLinearSubspace::ray(e(2, 0)).unwrap();
        let m = SemiLinearSubspace::ray(vec![-1.0, 0.0]).unwrap();
        assert!((hc_distance(&p, &m, 360).unwrap().value - 1.0).abs() < 1e-12);
        let y = SemiLinearSubspace::linear_span(2, &[e(2, 1)]).unwrap();
        assert!((hc_distance(&x, &y, 360).unwrap().value - 1.0).abs() < 1e-12);
        assert!(hc_distance(&x, &SemiLinearSubspace::full(3), 360).is_err());
        assert!(hc_distance(&x, &y, 50).is_err());
    }

    #[test]
    fn hc_lines_at_an_angle() {
        // brute force: sup over the unit segment of one line of the distance to the other segment
        for alpha in [0.2f64, 0.7, 1.2] {
            let x = SemiLinearSubspace::linear_span(2, &[e(2, 0)]).unwrap();
            let l = SemiLinearSubspace::linear_span(2, &[vec![alpha.cos(), alpha.sin()]]).unwrap();
            let brute = (0..=2_000)
                .map(|i| {
                    let t = -1.0 + 2.0 * i as f64 / 2_000.0;
                    let p = [t, 0.0];
                    (0..=2_000)
                        .map(|j| {
                            let s = -1.0 + 2.0 * j as f64 / 2_000.0;
                            linalg::dist(&p, &[s * alpha.cos(), s * alpha.sin()])
                        })
                        .fold(f64::INFINITY, f64::min)
                })
                .fold(0.0, f64::max);
            let d = hc_distance(&x, &l, 360).unwrap();
            assert!(
                (d.value - brute).abs() < 1e-3,
                "{alpha}: {} vs {brute}",
                d.value
            );
        }
    }

    #[test]
    fn extension_examples() {
        let l = SemiLinearMap::from_generators(
            3,
            &[(e(3, 0), 1.0), (e(3, 1), -2.0), (e(3, 2), 0.5)],
            &[],
        )
        .unwrap();
        assert_eq!(
            extend_linear_map(&l).unwrap().extended().unwrap(),
            &[1.0, -2.0, 0.5]
        );
        let l = SemiLinearMap::from_generators(2, &[(e(2, 0), 3.0)], &[]).unwrap();
        let d = extend_linear_map(&l).unwrap();
        assert!(linalg::dist(d.extended().unwrap(), &[3.0, 0.0]) < 1e-14);
        let l = SemiLinearMap::from_generators(2, &[(e(2, 1), 2.0)], &[(e(2, 0), 1.0)]).unwrap();
        let d = extend_linear_map(&l).unwrap();
        assert!(linalg::dist(d.extended().unwrap(), &[1.0, 2.0]) < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = d.carrier().clone();
        for v in sample_unit_vectors(&w, 100, 5).unwrap() {
            use rand::Rng;
            let s: f64 = rng.gen_range(0.0..4.0);
            let p = linalg::scale(&v, s);
            let expect = p[0] * 1.0 + p[1] * 2.0;
            assert!((d.apply(&p).unwrap() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn inconsistent_values_are_rejected() {
        let l = SemiLinearMap::from_generators(2, &[], &[(e(2, 0), 1.0), (vec![-1.0, 0.0], 1.0)])
            .unwrap();
        assert!(matches!(extend_linear_map(&l), Err(Error::Consistency(_))));
    }
}
