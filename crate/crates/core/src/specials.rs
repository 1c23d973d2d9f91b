//! Distance functions to closed sets, medial-axis scans, infimal convolution and
//! pointwise maxima of finite C¹ families.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{arg, Error, Result};
use crate::funcspace::{BoxDomain, DirectionalFunction, Evaluator, GridFunction};
use crate::linalg;

/// Relative distance tolerance for declaring two candidates equally near.
pub const TIE_TOLERANCE: f64 = 1e-6;
/// Candidates whose directions from the query point differ by less than this
/// angle (radians) are the same nearest point.
pub const ANGULAR_DEDUP: f64 = 1e-4;

#[derive(Clone, Debug)]
enum Geometry {
    Points(Vec<Vec<f64>>),
    /// Closed loop, edges `v[i] -> v[i+1 mod m]`.
    Polygon(Vec<[f64; 2]>),
    TriangleMesh {
        vertices: Vec<[f64; 3]>,
        triangles: Vec<[usize; 3]>,
    },
    /// Zero crossings of a sampled field, one point per sign-changing grid edge.
    GridLevelSet {
        crossings: Vec<Vec<f64>>,
        cell: f64,
    },
}

/// A nonempty closed set `A` in R^n, queried through its distance function.
#[derive(Clone, Debug)]
pub struct ClosedSetModel {
    dim: usize,
    geometry: Geometry,
    tolerance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NearestSet {
    pub distance: f64,
    pub points: Vec<Vec<f64>>,
}

struct Candidate {
    distance: f64,
    point: Vec<f64>,
    primitive: usize,
}

impl ClosedSetModel {
    pub fn points(points: Vec<Vec<f64>>) -> Result<Self> {
        let dim = match points.first() {
            Some(p) => p.len(),
            None => return arg("closed set must be nonempty"),
        };
        if !(1..=3).contains(&dim) || points.iter().any(|p| p.len() != dim) {
            return arg("points must share a dimension in 1..=3");
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return arg("point coordinates must be finite");
        }
        Ok(Self {
            dim,
            geometry: Geometry::Points(points),
            tolerance: 1e-12,
        })
    }

    /// Boundary of a polygon given as a closed vertex loop.
    pub fn polygon(vertices: Vec<[f64; 2]>) -> Result<Self> {
        if vertices.len() < 2 {
            return arg("polygon needs at least two vertices");
        }
        if vertices.iter().flatten().any(|v| !v.is_finite()) {
            return arg("polygon coordinates must be finite");
        }
        Ok(Self {
            dim: 2,
            geometry: Geometry::Polygon(vertices),
            tolerance: 1e-12,
        })
    }

    /// Polygon from a JSON array of `[x, y]` pairs.
    pub fn polygon_from_json(text: &str) -> Result<Self> {
        let v: Vec<[f64; 2]> = serde_json::from_str(text)?;
        Self::polygon(v)
    }

    /// Axis-aligned square boundary with corners `lo` and `lo + side`.
    pub fn square(lo: [f64; 2], side: f64) -> Result<Self> {
        let [a, b] = lo;
        Self::polygon(vec![
            [a, b],
            [a + side, b],
            [a + side, b + side],
            [a, b + side],
        ])
    }

    pub fn triangle_mesh(vertices: Vec<[f64; 3]>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if triangles.is_empty() {
            return arg("mesh needs at least one triangle");
        }
        if triangles.iter().flatten().any(|&i| i >= vertices.len()) {
            return arg("triangle index out of range");
        }
        Ok(Self {
            dim: 3,
            geometry: Geometry::TriangleMesh {
                vertices,
                triangles,
            },
            tolerance: 1e-12,
        })
    }

    /// Zero level set of a grid field, located to cell accuracy by linear
    /// interpolation along sign-changing grid edges.
    pub fn grid_level_set(field: &GridFunction) -> Result<Self> {
        let n = field.dim();
        let res = field.resolution().to_vec();
        let samples = field.samples();
        let mut strides = vec![1usize; n];
        for a in (0..n.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * res[a + 1];
        }
        let coords = |flat: usize| -> Vec<f64> {
            (0..n)
                .map(|a| field.node_coordinate(a, (flat / strides[a]) % res[a]))
                .collect()
        };
        let mut crossings = Vec::new();
        for flat in 0..samples.len() {
            let v = samples[flat];
            if v == 0.0 {
                crossings.push(coords(flat));
                continue;
            }
            for a in 0..n {
                if (flat / strides[a]) % res[a] + 1 == res[a] {
                    continue;
                }
                let w = samples[flat + strides[a]];
                if w != 0.0 && (v < 0.0) != (w < 0.0) {
                    let t = v / (v - w);
                    let p = coords(flat);
                    let q = coords(flat + strides[a]);
                    crossings.push(p.iter().zip(&q).map(|(x, y)| x + t * (y - x)).collect());
                }
            }
        }
        if crossings.is_empty() {
            return arg("grid field has no zero crossing");
        }
        let cell = (0..n)
            .map(|a| field.node_coordinate(a, 1) - field.node_coordinate(a, 0))
            .fold(0.0, f64::max);
        Ok(Self {
            dim: n,
            geometry: Geometry::GridLevelSet { crossings, cell },
            tolerance: 1e-12,
        })
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tolerance = tol;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// False for grid level sets, whose nearest points are only cell-accurate.
    pub fn is_exact(&self) -> bool {
        !matches!(self.geometry, Geometry::GridLevelSet { .. })
    }

    /// Cell size for grid level sets, zero otherwise.
    pub fn resolution_limit(&self) -> f64 {
        match &self.geometry {
            Geometry::GridLevelSet { cell, .. } => *cell,
            _ => 0.0,
        }
    }

    fn primitive_count(&self) -> usize {
        match &self.geometry {
            Geometry::Points(p) => p.len(),
            Geometry::Polygon(v) => v.len(),
            Geometry::TriangleMesh { triangles, .. } => triangles.len(),
            Geometry::GridLevelSet { crossings, .. } => crossings.len(),
        }
    }

    fn closest_on(&self, id: usize, x: &[f64]) -> Vec<f64> {
        match &self.geometry {
            Geometry::Points(p) => p[id].clone(),
            Geometry::Polygon(v) => {
                let a = v[id];
                let b = v[(id + 1) % v.len()];
                closest_on_segment(x, &a, &b)
            }
            Geometry::TriangleMesh {
                vertices,
                triangles,
            } => {
                let [i, j, k] = triangles[id];
                closest_on_triangle(x, &vertices[i], &vertices[j], &vertices[k]).to_vec()
            }
            Geometry::GridLevelSet { crossings, .. } => crossings[id].clone(),
        }
    }

    fn candidates(&self, x: &[f64]) -> Vec<Candidate> {
        (0..self.primitive_count())
            .map(|id| {
                let point = self.closest_on(id, x);
                Candidate {
                    distance: linalg::dist(x, &point),
                    point,
                    primitive: id,
                }
            })
            .collect()
    }

    /// `g_A(x)`.
    pub fn distance(&self, x: &[f64]) -> f64 {
        (0..self.primitive_count())
            .map(|id| linalg::dist(x, &self.closest_on(id, x)))
            .fold(f64::INFINITY, f64::min)
    }

    fn nearest_candidates(&self, x: &[f64]) -> Result<(f64, Vec<Candidate>)> {
        if x.len() != self.dim {
            return arg(format!("point has dimension {}, set {}", x.len(), self.dim));
        }
        let all = self.candidates(x);
        let d = all.iter().map(|c| c.distance).fold(f64::INFINITY, f64::min);
        if d <= self.tolerance {
            return arg(format!(
                "{x:?} lies in the closed set; the distance function is defined off the set"
            ));
        }
        let cut = d * (1.0 + TIE_TOLERANCE);
        let mut kept: Vec<Candidate> = Vec::new();
        let mut dirs: Vec<Vec<f64>> = Vec::new();
        for c in all.into_iter().filter(|c| c.distance <= cut) {
            let u = linalg::scale(&linalg::sub(x, &c.point), 1.0 / c.distance);
            let dup = dirs.iter().any(|v| angle_between(v, &u) < ANGULAR_DEDUP);
            if !dup {
                dirs.push(u);
                kept.push(c);
            }
        }
        Ok((d, kept))
    }

    /// Distance and all nearest points of `A` to `x`.
    pub fn nearest_set(&self, x: &[f64]) -> Result<NearestSet> {
        let (distance, kept) = self.nearest_candidates(x)?;
        Ok(NearestSet {
            distance,
            points: kept.into_iter().map(|c| c.point).collect(),
        })
    }

    /// The distance function as a [`DirectionalFunction`] with exact one-sided
    /// derivatives off the set.
    pub fn to_function(&self) -> DirectionalFunction {
        let a = self.clone();
        let b = self.clone();
        DirectionalFunction::new(self.dim, move |x| a.distance(x))
            .with_derivative(move |x, t| {
                distance_directional_derivative(&b, x, t).unwrap_or(f64::NAN)
            })
            .with_lipschitz(1.0)
            .with_label("dist")
    }
}

fn angle_between(u: &[f64], v: &[f64]) -> f64 {
    // atan2 form stays accurate for tiny angles
    let c = linalg::dot(u, v);
    let s = linalg::norm(&linalg::sub(u, &linalg::scale(v, c)));
    s.atan2(c)
}

fn closest_on_segment(x: &[f64], a: &[f64; 2], b: &[f64; 2]) -> Vec<f64> {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    if len2 == 0.0 {
        return a.to_vec();
    }
    let t = (((x[0] - a[0]) * ab[0] + (x[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0);
    vec![a[0] + t * ab[0], a[1] + t * ab[1]]
}

fn closest_on_triangle(p: &[f64], a: &[f64; 3], b: &[f64; 3], c: &[f64; 3]) -> [f64; 3] {
    let sub3 = |u: &[f64], v: &[f64; 3]| [u[0] - v[0], u[1] - v[1], u[2] - v[2]];
    let d3 = |u: &[f64; 3], v: &[f64; 3]| u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
    let lerp = |o: &[f64; 3], u: &[f64; 3], s: f64, v: &[f64; 3], t: f64| {
        [
            o[0] + s * u[0] + t * v[0],
            o[1] + s * u[1] + t * v[1],
            o[2] + s * u[2] + t * v[2],
        ]
    };
    let ab = sub3(b, a);
    let ac = sub3(c, a);
    let ap = sub3(p, a);
    let (e1, e2) = (d3(&ab, &ap), d3(&ac, &ap));
    if e1 <= 0.0 && e2 <= 0.0 {
        return *a;
    }
    let bp = sub3(p, b);
    let (e3, e4) = (d3(&ab, &bp), d3(&ac, &bp));
    if e3 >= 0.0 && e4 <= e3 {
        return *b;
    }
    let vc = e1 * e4 - e3 * e2;
    if vc <= 0.0 && e1 >= 0.0 && e3 <= 0.0 {
        return lerp(a, &ab, e1 / (e1 - e3), &ac, 0.0);
    }
    let cp = sub3(p, c);
    let (e5, e6) = (d3(&ab, &cp), d3(&ac, &cp));
    if e6 >= 0.0 && e5 <= e6 {
        return *c;
    }
    let vb = e5 * e2 - e1 * e6;
    if vb <= 0.0 && e2 >= 0.0 && e6 <= 0.0 {
        return lerp(a, &ab, 0.0, &ac, e2 / (e2 - e6));
    }
    let va = e3 * e6 - e5 * e4;
    if va <= 0.0 && e4 - e3 >= 0.0 && e5 - e6 >= 0.0 {
        let bc = sub3(c, b);
        return lerp(b, &bc, (e4 - e3) / ((e4 - e3) + (e5 - e6)), &bc, 0.0);
    }
    let denom = 1.0 / (va + vb + vc);
    lerp(a, &ab, vb * denom, &ac, vc * denom)
}

/// `min over nearest y of theta . (x - y) / |x - y|`.
pub fn distance_directional_derivative(
    a: &ClosedSetModel,
    x: &[f64],
    theta: &[f64],
) -> Result<f64> {
    let near = a.nearest_set(x)?;
    Ok(near
        .points
        .iter()
        .map(|y| linalg::dot(theta, &linalg::sub(x, y)) / near.distance)
        .fold(f64::INFINITY, f64::min))
}

/// One-sided difference `(g(x + h theta) - g(x)) / h`, for cross-checking.
pub fn distance_derivative_fd(a: &ClosedSetModel, x: &[f64], theta: &[f64], h: f64) -> f64 {
    (a.distance(&linalg::axpy(x, h, theta)) - a.distance(x)) / h
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MedialPoint {
    pub x: Vec<f64>,
    pub distance: f64,
    /// Number of distinct nearest points; 0 for grid nodes lying in the set.
    pub multiplicity: usize,
    /// Set when the axis passes between this node and a neighbour rather
    /// than through the node itself.
    pub straddle: bool,
}

/// Annotates every grid node of `domain` with its nearest-point multiplicity.
///
/// Exact ties are rare on a grid, so a node is also put on the axis when the
/// nearest points of it and an axis neighbour lie on different pieces of the
/// set with sharply different normals; of the pair, the node closer to the
/// equal-distance crossing is flagged.
pub fn medial_scan(
    a: &ClosedSetModel,
    domain: &BoxDomain,
    resolution: usize,
) -> Result<Vec<MedialPoint>> {
    if resolution < 32 {
        return arg("medial scan needs resolution >= 32");
    }
    if domain.dim() != a.dim() {
        return arg("box and set dimensions differ");
    }
    let nodes = domain.grid_nodes(resolution);
    let info: Vec<Option<(f64, Vec<Candidate>)>> = nodes
        .par_iter()
        .map(|x| a.nearest_candidates(x).ok())
        .collect();
    let mut out: Vec<MedialPoint> = nodes
        .iter()
        .zip(&info)
        .map(|(x, c)| match c {
            Some((d, c)) => MedialPoint {
                x: x.clone(),
                distance: *d,
                multiplicity: c.len(),
                straddle: false,
            },
            None => MedialPoint {
                x: x.clone(),
                distance: 0.0,
                multiplicity: 0,
                straddle: false,
            },
        })
        .collect();

    let n = domain.dim();
    let mut strides = vec![1usize; n];
    for ax in (0..n.saturating_sub(1)).rev() {
        strides[ax] = strides[ax + 1] * resolution;
    }
    for p in 0..nodes.len() {
        for ax in 0..n {
            if (p / strides[ax]) % resolution + 1 == resolution {
                continue;
            }
            let q = p + strides[ax];
            let (Some((dp, cp)), Some((dq, cq))) = (&info[p], &info[q]) else {
                continue;
            };
            if cp.len() != 1 || cq.len() != 1 {
                continue;
            }
            let (yp, yq) = (&cp[0], &cq[0]);
            if yp.primitive == yq.primitive {
                continue;
            }
            let np = linalg::scale(&linalg::sub(&nodes[p], &yp.point), 1.0 / dp);
            let nq = linalg::scale(&linalg::sub(&nodes[q], &yq.point), 1.0 / dq);
            let step = linalg::dist(&nodes[p], &nodes[q]);
            if angle_between(&np, &nq) <= 3.0 * step / dp.min(*dq) {
                continue;
            }
            // phi(t) = d(z, piece p) - d(z, piece q) is <= 0 at p and >= 0 at q
            let phi = |t: f64| {
                let z = linalg::axpy(&nodes[p], t, &linalg::sub(&nodes[q], &nodes[p]));
                linalg::dist(&z, &a.closest_on(yp.primitive, &z))
                    - linalg::dist(&z, &a.closest_on(yq.primitive, &z))
            };
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if phi(mid) <= 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let t = 0.5 * (lo + hi);
            for (node, flag) in [(p, t <= 0.5), (q, t >= 0.5)] {
                if flag && out[node].multiplicity == 1 {
                    out[node].multiplicity = 2;
                    out[node].straddle = true;
                }
            }
        }
    }
    Ok(out)
}

/// Two-point coupling `f(x, y)` for infimal convolution.
type CouplingFn = dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync;

#[derive(Clone)]
pub struct Coupling(Arc<CouplingFn>);

impl Coupling {
    pub fn new(f: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self(Arc::new(f))
    }

    /// `|x - y|^2 / (2t)`, the Moreau-envelope coupling.
    pub fn quadratic(t: f64) -> Self {
        assert!(t > 0.0, "quadratic coupling needs t > 0");
        Self::new(move |x, y| {
            let d = linalg::dist(x, y);
            d * d / (2.0 * t)
        })
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        (self.0)(x, y)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InfConvResult {
    pub value: f64,
    pub minimizers: Vec<Vec<f64>>,
    /// Some minimizer sits on the search-box boundary, so the box may be too small.
    pub boundary: bool,
}

/// `inf_y u(y) + f(x, y)` over `ybox`, by grid search and local refinement.
pub fn inf_convolution(
    u: &DirectionalFunction,
    coupling: &Coupling,
    x: &[f64],
    ybox: &BoxDomain,
    resolution: usize,
    strict: bool,
) -> Result<InfConvResult> {
    let n = ybox.dim();
    if u.dim() != n || x.len() != n {
        return arg("u, x and the y-box must share a dimension");
    }
    if resolution < 3 {
        return arg("y-resolution must be at least 3");
    }
    let obj = |y: &[f64]| u.eval(y) + coupling.eval(x, y);
    let nodes = ybox.grid_nodes(resolution);
    let vals: Vec<f64> = nodes.iter().map(|y| obj(y)).collect();
    if let Some(i) = vals.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            point: nodes[i].clone(),
            value: vals[i],
        });
    }

    let mut strides = vec![1usize; n];
    for a in (0..n.saturating_sub(1)).rev() {
        strides[a] = strides[a + 1] * resolution;
    }
    let mut local: Vec<usize> = (0..nodes.len())
        .filter(|&i| {
            (0..n).all(|a| {
                let k = (i / strides[a]) % resolution;
                (k == 0 || vals[i - strides[a]] >= vals[i])
                    && (k + 1 == resolution || vals[i + strides[a]] >= vals[i])
            })
        })
        .collect();
    local.sort_by(|&i, &j| vals[i].total_cmp(&vals[j]));
    local.truncate(16);

    let h: Vec<f64> = (0..n)
        .map(|a| (ybox.hi[a] - ybox.lo[a]) / (resolution - 1) as f64)
        .collect();
    let mut refined: Vec<(f64, Vec<f64>)> = local
        .iter()
        .map(|&i| {
            let y = if n == 1 {
                golden_1d(
                    &obj,
                    (nodes[i][0] - h[0]).max(ybox.lo[0]),
                    (nodes[i][0] + h[0]).min(ybox.hi[0]),
                )
            } else {
                compass(&obj, &nodes[i], &h, ybox)
            };
            (obj(&y), y)
        })
        .collect();
    refined.sort_by(|a, b| a.0.total_cmp(&b.0));
    let best = refined[0].0;
    let cut = best + 1e-9 * (1.0 + best.abs());
    let hmax = h.iter().copied().fold(0.0, f64::max);
    let mut minimizers: Vec<Vec<f64>> = Vec::new();
    for (v, y) in refined.into_iter().filter(|(v, _)| *v <= cut) {
        let _ = v;
        if !minimizers.iter().any(|m| linalg::dist(m, &y) < hmax) {
            minimizers.push(y);
        }
    }
    let edge = 1e-9 * (1.0 + ybox.diameter());
    let on_boundary =
        |y: &[f64]| (0..n).any(|a| y[a] - ybox.lo[a] <= edge || ybox.hi[a] - y[a] <= edge);
    let boundary = minimizers.iter().any(|y| on_boundary(y));
    if boundary && strict {
        let point = minimizers
            .iter()
            .find(|y| on_boundary(y))
            .cloned()
            .unwrap_or_default();
        return Err(Error::BoundaryMinimum { point });
    }
    Ok(InfConvResult {
        value: best,
        minimizers,
        boundary,
    })
}

fn golden_1d(f: &impl Fn(&[f64]) -> f64, mut a: f64, mut b: f64) -> Vec<f64> {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(&[c]), f(&[d]));
    while (b - a).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(&[c]);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(&[d]);
        }
    }
    // the bracket ends may beat the interior when the minimum is at an endpoint
    let mid = 0.5 * (a + b);
    [a, mid, b]
        .into_iter()
        .min_by(|p, q| f(&[*p]).total_cmp(&f(&[*q])))
        .map(|v| vec![v])
        .unwrap()
}

fn compass(f: &impl Fn(&[f64]) -> f64, start: &[f64], h: &[f64], ybox: &BoxDomain) -> Vec<f64> {
    let n = start.len();
    let mut y = start.to_vec();
    let mut fy = f(&y);
    let mut step: Vec<f64> = h.iter().map(|s| 0.5 * s).collect();
    let floor = 1e-11 * (1.0 + ybox.diameter());
    while step.iter().copied().fold(0.0, f64::max) > floor {
        let mut moved = false;
        for a in 0..n {
            for s in [1.0, -1.0] {
                let mut z = y.clone();
                z[a] = (z[a] + s * step[a]).clamp(ybox.lo[a], ybox.hi[a]);
                let fz = f(&z);
                if fz < fy {
                    y = z;
                    fy = fz;
                    moved = true;
                }
            }
        }
        if !moved {
            step.iter_mut().for_each(|s| *s *= 0.5);
        }
    }
    y
}

/// Gradient callback of a family member.
pub type Gradient = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
pub struct FamilyMember {
    eval: Evaluator,
    grad: Gradient,
}

impl FamilyMember {
    pub fn new(
        eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            eval: Arc::new(eval),
            grad: Arc::new(grad),
        }
    }

    pub fn affine(a: Vec<f64>, c: f64) -> Self {
        let a2 = a.clone();
        Self::new(move |x| linalg::dot(&a, x) + c, move |_| a2.clone())
    }
}

/// Pointwise maximum `F = max_k f_k` of a finite C¹ family.
#[derive(Clone)]
pub struct MaxFamily {
    dim: usize,
    members: Vec<FamilyMember>,
    active_tol: f64,
    lipschitz: Option<f64>,
    affine: Option<Vec<(Vec<f64>, f64)>>,
}

impl std::fmt::Debug for MaxFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MaxFamily")
            .field("dim", &self.dim)
            .field("members", &self.members.len())
            .field("active_tol", &self.active_tol)
            .field("affine", &self.affine)
            .finish()
    }
}

impl MaxFamily {
    /// Checks every member gradient against central differences at ten probes.
    pub fn new(dim: usize, members: Vec<FamilyMember>) -> Result<Self> {
        if members.is_empty() {
            return arg("max family must have at least one member");
        }
        if !(1..=3).contains(&dim) {
            return arg("dimension must be 1..=3");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x6d61_7866);
        let h = 1e-6;
        for _ in 0..10 {
            let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            for (k, m) in members.iter().enumerate() {
                let g = (m.grad)(&x);
                if g.len() != dim {
                    return arg(format!("member {k} gradient has the wrong length"));
                }
                for a in 0..dim {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[a] += h;
                    xm[a] -= h;
                    let fd = ((m.eval)(&xp) - (m.eval)(&xm)) / (2.0 * h);
                    if (fd - g[a]).abs() > 1e-5 * (1.0 + g[a].abs()) {
                        return Err(Error::Consistency(format!(
                            "member {k}: gradient component {a} is {} but finite differences give {fd} at {x:?}",
                            g[a]
                        )));
                    }
                }
            }
        }
        Ok(Self {
            dim,
            members,
            active_tol: 1e-9,
            lipschitz: None,
            affine: None,
        })
    }

    /// `max_k (a_k . x + c_k)`; Lipschitz bound `max_k |a_k|`.
    pub fn affine(pieces: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        let dim = match pieces.first() {
            Some((a, _)) => a.len(),
            None => return arg("max family must have at least one member"),
        };
        if pieces.iter().any(|(a, _)| a.len() != dim) {
            return arg("affine pieces must share a dimension");
        }
        let members = pieces
            .iter()
            .map(|(a, c)| FamilyMember::affine(a.clone(), *c))
            .collect();
        let mut fam = Self::new(dim, members)?;
        fam.lipschitz = Some(
            pieces
                .iter()
                .map(|(a, _)| linalg::norm(a))
                .fold(0.0, f64::max),
        );
        fam.affine = Some(pieces);
        Ok(fam)
    }

    pub fn with_active_tolerance(mut self, tol: f64) -> Self {
        self.active_tol = tol;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    /// Coefficients `(a_k, c_k)` when every member is affine.
    pub fn affine_pieces(&self) -> Option<&[(Vec<f64>, f64)]> {
        self.affine.as_deref()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.members
            .iter()
            .map(|m| (m.eval)(x))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn active_set(&self, x: &[f64]) -> Vec<usize> {
        let vals: Vec<f64> = self.members.iter().map(|m| (m.eval)(x)).collect();
        let top = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let cut = top - self.active_tol * (1.0 + top.abs());
        (0..vals.len()).filter(|&k| vals[k] >= cut).collect()
    }

    pub fn to_function(&self) -> DirectionalFunction {
        let a = self.clone();
        let b = self.clone();
        let mut f = DirectionalFunction::new(self.dim, move |x| a.eval(x))
            .with_derivative(move |x, t| max_family_derivative(&b, x, t))
            .with_label("maxfamily");
        if let Some(k) = self.lipschitz {
            f = f.with_lipschitz(k);
        }
        if let (1, Some(p)) = (self.dim, &self.affine) {
            let mut bp = Vec::new();
            for i in 0..p.len() {
                for j in i + 1..p.len() {
                    let da = p[i].0[0] - p[j].0[0];
                    if da != 0.0 {
                        bp.push((p[j].1 - p[i].1) / da);
                    }
                }
            }
            f = f.with_breakpoints(bp);
        }
        f
    }
}

/// `max over active k of grad f_k(x) . theta`.
pub fn max_family_derivative(family: &MaxFamily, x: &[f64], theta: &[f64]) -> f64 {
    family
        .active_set(x)
        .into_iter()
        .map(|k| linalg::dot(&(family.members[k].grad)(x), theta))
        .fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_points() -> ClosedSetModel {
        ClosedSetModel::points(vec![vec![-1.0, 0.0], vec![1.0, 0.0]]).unwrap()
    }

    #[test]
    fn nearest_set_examples() {
        let a = ClosedSetModel::points(vec![vec![0.0, 0.0]]).unwrap();
        let n = a.nearest_set(&[1.0, 0.0]).unwrap();
        assert_eq!(n.distance, 1.0);
        assert_eq!(n.points, vec![vec![0.0, 0.0]]);

        let n = two_points().nearest_set(&[0.0, 1.0]).unwrap();
        assert!((n.distance - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(n.points.len(), 2);

        let sq = ClosedSetModel::square([0.0, 0.0], 1.0).unwrap();
        let n = sq.nearest_set(&[0.5, 0.5]).unwrap();
        assert!((n.distance - 0.5).abs() < 1e-15);
        let mut pts = n.points.clone();
        pts.sort_by(|p, q| p.partial_cmp(q).unwrap());
        assert_eq!(
            pts,
            vec![
                vec![0.0, 0.5],
                vec![0.5, 0.0],
                vec![0.5, 1.0],
                vec![1.0, 0.5]
            ]
        );
    }

    #[test]
    fn point_in_set_is_rejected() {
        assert!(two_points().nearest_set(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn derivative_examples() {
        let a = ClosedSetModel::points(vec![vec![0.0, 0.0]]).unwrap();
        assert_eq!(
            distance_directional_derivative(&a, &[1.0, 0.0], &[1.0, 0.0]).unwrap(),
            1.0
        );
        let d = distance_directional_derivative(&two_points(), &[0.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((d + 0.5f64.sqrt()).abs() < 1e-15);
        let sq = ClosedSetModel::square([0.0, 0.0], 1.0).unwrap();
        assert_eq!(
            distance_directional_derivative(&sq, &[0.5, 0.5], &[1.0, 0.0]).unwrap(),
            -1.0
        );
    }

    #[test]
    fn shared_polygon_vertex_counts_once() {
        let sq = ClosedSetModel::square([0.0, 0.0], 1.0).unwrap();
        let n = sq.nearest_set(&[-1.0, -1.0]).unwrap();
        assert_eq!(n.points, vec![vec![0.0, 0.0]]);
    }

    #[test]
    fn triangle_mesh_distance() {
        let m = ClosedSetModel::triangle_mesh(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert!((m.distance(&[0.2, 0.2, 0.5]) - 0.5).abs() < 1e-15);
        assert!((m.distance(&[-1.0, 0.0, 0.0]) - 1.0).abs() < 1e-15);
        assert!((m.distance(&[1.0, 1.0, 0.0]) - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn grid_level_set_finds_circle() {
        let b = BoxDomain::cube(2, -2.0, 2.0);
        let g = GridFunction::from_fn(b, vec![81, 81], |p| linalg::norm(p) - 1.0).unwrap();
        let a = ClosedSetModel::grid_level_set(&g).unwrap();
        assert!(!a.is_exact());
        let d = a.distance(&[0.0, 0.0]);
        assert!((d - 1.0).abs() < a.resolution_limit(), "{d}");
    }

    #[test]
    fn two_point_bisector_is_detected() {
        let b = BoxDomain::cube(2, -2.0, 2.0);
        let scan = medial_scan(&two_points(), &b, 33).unwrap();
        let cell = b.cell(33);
        let axis: Vec<_> = scan.iter().filter(|m| m.multiplicity >= 2).collect();
        assert!(axis.iter().all(|m| m.x[0].abs() <= 0.5 * cell + 1e-12));
        assert_eq!(axis.len(), 33);
    }

    #[test]
    fn single_point_has_no_axis() {
        let a = ClosedSetModel::points(vec![vec![0.0, 0.0]]).unwrap();
        let b = BoxDomain::new(vec![1.0, 1.0], vec![2.0, 2.0]).unwrap();
        let scan = medial_scan(&a, &b, 32).unwrap();
        assert!(scan.iter().all(|m| m.multiplicity == 1));
    }

    #[test]
    fn huber_values() {
        let u = crate::funcspace::parse_function_spec("abs").unwrap();
        let q = Coupling::quadratic(1.0);
        let ybox = BoxDomain::cube(1, -5.0, 5.0);
        let r = inf_convolution(&u, &q, &[2.0], &ybox, 401, true).unwrap();
        assert!((r.value - 1.5).abs() < 1e-9, "{r:?}");
        assert!((r.minimizers[0][0] - 1.0).abs() < 1e-6);
        let r = inf_convolution(&u, &q, &[0.5], &ybox, 401, true).unwrap();
        assert!((r.value - 0.125).abs() < 1e-9);
        assert!(r.minimizers[0][0].abs() < 1e-6);
    }

    #[test]
    fn zero_potential_and_boundary_flag() {
        let u = DirectionalFunction::constant(1, 0.0);
        let q = Coupling::quadratic(1.0);
        let r =
            inf_convolution(&u, &q, &[0.3], &BoxDomain::cube(1, -1.0, 1.0), 101, false).unwrap();
        assert!(r.value.abs() < 1e-12 && (r.minimizers[0][0] - 0.3).abs() < 1e-6);
        let r =
            inf_convolution(&u, &q, &[3.0], &BoxDomain::cube(1, -1.0, 1.0), 101, false).unwrap();
        assert!(r.boundary);
        assert!(matches!(
            inf_convolution(&u, &q, &[3.0], &BoxDomain::cube(1, -1.0, 1.0), 101, true),
            Err(Error::BoundaryMinimum { .. })
        ));
    }

    #[test]
    fn max_family_examples() {
        let f = MaxFamily::affine(vec![(vec![1.0], 0.0), (vec![-1.0], 0.0)]).unwrap();
        assert_eq!(max_family_derivative(&f, &[0.0], &[1.0]), 1.0);
        assert_eq!(max_family_derivative(&f, &[0.0], &[-1.0]), 1.0);
        let g = MaxFamily::affine(vec![
            (vec![1.0, 1.0], 0.0),
            (vec![1.0, -1.0], 0.0),
            (vec![-1.0, 0.0], 0.0),
        ])
        .unwrap();
        assert_eq!(max_family_derivative(&g, &[0.0, 0.0], &[0.0, 1.0]), 1.0);
        let h = 1e-7;
        let fd = (g.eval(&[0.0, h]) - g.eval(&[0.0, 0.0])) / h;
        assert!((fd - 1.0).abs() < 1e-9);
    }

    #[test]
    fn bad_gradient_is_caught() {
        let m = FamilyMember::new(|x| x[0] * x[0], |x| vec![x[0]]);
        assert!(matches!(
            MaxFamily::new(1, vec![m]),
            Err(Error::Consistency(_))
        ));
        assert!(MaxFamily::affine(vec![]).is_err());
    }
}
