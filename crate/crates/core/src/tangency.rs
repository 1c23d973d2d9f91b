//! Shell-based k-tangentiality tests for point clouds, tangent fitting and a
//! greedy decomposition into tangential pieces.
//!
//! Tangentiality is a limit statement; finite data is judged by a shell-trend
//! rule. Displacements `h = p - x` are binned into dyadic shells
//! `(R 2^-j, R 2^(1-j)]` and each shell records `max |h^⊥| / |h^V|`. The verdict
//! is `tangential` when the three smallest populated shells are all below `η`
//! and do not grow towards `x` (up to a slack of `η/2`), `not_tangential` when
//! three consecutive populated shells are at or above `2η`, and
//! `inconclusive` otherwise.

use std::collections::VecDeque;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::linalg;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Tangential,
    NotTangential,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ShellStat {
    pub index: usize,
    pub inner: f64,
    pub outer: f64,
    pub count: usize,
    /// Infinite when some displacement is purely normal.
    pub max_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TangencyOptions {
    pub eta: f64,
    pub shells: usize,
    /// Analysis radius; `None` uses 32 times the median nearest-neighbour spacing.
    pub radius: Option<f64>,
    /// Shells reaching below this distance are ignored.
    pub min_scale: f64,
}

impl Default for TangencyOptions {
    fn default() -> Self {
        Self {
            eta: 0.2,
            shells: 8,
            radius: None,
            min_scale: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TangencyReport {
    pub x: Vec<f64>,
    pub subspace: Vec<Vec<f64>>,
    /// Populated shells, outermost first.
    pub shells: Vec<ShellStat>,
    pub empty_shells: Vec<usize>,
    pub verdict: Verdict,
    pub eta: f64,
    pub radius: f64,
    pub rule: &'static str,
}

/// Median distance from a point to its nearest distinct neighbour.
pub fn median_spacing(points: &[Vec<f64>]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let mut nn: Vec<f64> = points
        .par_iter()
        .map(|p| {
            points
                .iter()
                .map(|q| linalg::dist(p, q))
                .filter(|d| *d > 0.0)
                .fold(f64::INFINITY, f64::min)
        })
        .filter(|d| d.is_finite())
        .collect();
    if nn.is_empty() {
        return 0.0;
    }
    nn.sort_by(f64::total_cmp);
    nn[nn.len() / 2]
}

fn check_points(points: &[Vec<f64>], x: &[f64]) -> Result<()> {
    if points.iter().any(|p| p.len() != x.len()) {
        return arg("points and base point have different dimensions");
    }
    Ok(())
}

/// Top-`k` principal directions of the unit displacements `(p - x)/|p - x|`
/// for points within `radius` of `x`. Eigenvector signs are normalised so the
/// first nonzero component is positive.
pub fn fit_tangent(
    points: &[Vec<f64>],
    x: &[f64],
    k: usize,
    radius: Option<f64>,
) -> Result<Vec<Vec<f64>>> {
    check_points(points, x)?;
    let n = x.len();
    if k == 0 || k > n {
        return arg(format!("tangent dimension must lie in 1..={n}"));
    }
    let r = radius.unwrap_or(f64::INFINITY);
    let units: Vec<Vec<f64>> = points
        .iter()
        .map(|p| linalg::sub(p, x))
        .filter(|h| {
            let d = linalg::norm(h);
            d > 0.0 && d <= r
        })
        .map(|h| linalg::normalized(&h).unwrap())
        .collect();
    if units.len() < 2 * k {
        let rank = linalg::gram_schmidt(&units, 1e-9).len().min(k);
        return Err(Error::RankDeficient {
            requested: k,
            achievable: rank,
        });
    }
    let mut cov = DMatrix::<f64>::zeros(n, n);
    for u in &units {
        for i in 0..n {
            for j in 0..n {
                cov[(i, j)] += u[i] * u[j];
            }
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..n)
        .map(|i| {
            let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            linalg::sign_normalize(&mut v);
            (eig.eigenvalues[i], v)
        })
        .collect();
    pairs.sort_by(|a, b| {
        b.0.total_cmp(&a.0).then_with(|| {
            a.1.iter()
                .zip(&b.1)
                .map(|(p, q)| q.total_cmp(p))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    let top = pairs[0].0.max(f64::MIN_POSITIVE);
    let rank = pairs.iter().filter(|p| p.0 > 1e-12 * top).count();
    if rank < k {
        return Err(Error::RankDeficient {
            requested: k,
            achievable: rank,
        });
    }
    Ok(pairs.into_iter().take(k).map(|p| p.1).collect())
}

fn check_orthonormal(v: &[Vec<f64>], n: usize) -> Result<()> {
    for (i, a) in v.iter().enumerate() {
        if a.len() != n {
            return arg("subspace basis has the wrong dimension");
        }
        for (j, b) in v.iter().enumerate() {
            let want = if i == j { 1.0 } else { 0.0 };
            if (linalg::dot(a, b) - want).abs() > 1e-9 {
                return arg("subspace basis must be orthonormal");
            }
        }
    }
    Ok(())
}

/// Shell statistics and verdict for `points` at `x` against the subspace `V`.
pub fn is_k_tangential(
    points: &[Vec<f64>],
    x: &[f64],
    v: &[Vec<f64>],
    opts: &TangencyOptions,
) -> Result<TangencyReport> {
    check_points(points, x)?;
    check_orthonormal(v, x.len())?;
    if !(opts.eta > 0.0 && opts.eta < 1.0) {
        return arg("η must lie in (0, 1)");
    }
    if opts.shells < 4 {
        return arg("at least 4 shells are needed");
    }
    let radius = match opts.radius {
        Some(r) if r > 0.0 => r,
        Some(_) => return arg("analysis radius must be positive"),
        None => 32.0 * median_spacing(points),
    };
    let mut stats: Vec<ShellStat> = (1..=opts.shells)
        .map(|j| ShellStat {
            index: j,
            inner: radius * 0.5f64.powi(j as i32),
            outer: radius * 0.5f64.powi(j as i32 - 1),
            count: 0,
            max_ratio: 0.0,
        })
        .collect();
    for p in points {
        let h = linalg::sub(p, x);
        let d = linalg::norm(h.as_slice());
        if d == 0.0 || d > radius {
            continue;
        }
        let j = ((radius / d).log2().floor() as usize).min(opts.shells - 1);
        // guard against rounding at shell edges
        let j = if d > stats[j].outer {
            j.saturating_sub(1)
        } else if d <= stats[j].inner {
            j + 1
        } else {
            j
        };
        if j >= opts.shells {
            continue;
        }
        let along = linalg::norm(&linalg::project(&h, v));
        let normal = linalg::norm(&linalg::reject(&h, v));
        let ratio = if along > 1e-14 * d {
            normal / along
        } else {
            f64::INFINITY
        };
        let s = &mut stats[j];
        s.count += 1;
        s.max_ratio = s.max_ratio.max(ratio);
    }
    stats.retain(|s| s.inner >= opts.min_scale * (1.0 - 1e-12));
    let empty_shells: Vec<usize> = stats
        .iter()
        .filter(|s| s.count == 0)
        .map(|s| s.index)
        .collect();
    stats.retain(|s| s.count > 0);
    let verdict = shell_verdict(&stats, opts.eta);
    Ok(TangencyReport {
        x: x.to_vec(),
        subspace: v.to_vec(),
        shells: stats,
        empty_shells,
        verdict,
        eta: opts.eta,
        radius,
        rule: "shell-trend",
    })
}

fn shell_verdict(populated: &[ShellStat], eta: f64) -> Verdict {
    if populated.len() < 3 {
        return Verdict::Inconclusive;
    }
    let ratios: Vec<f64> = populated.iter().map(|s| s.max_ratio).collect();
    let m = ratios.len();
    let small = &ratios[m - 3..];
    let below = small.iter().all(|r| *r < eta);
    let trend = small.windows(2).all(|w| w[1] <= w[0] + 0.5 * eta);
    if below && trend {
        return Verdict::Tangential;
    }
    if ratios.windows(3).any(|w| w.iter().all(|r| *r >= 2.0 * eta)) {
        return Verdict::NotTangential;
    }
    Verdict::Inconclusive
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SigmaOptions {
    pub pieces: usize,
    pub eta: f64,
    pub bases_per_piece: usize,
    /// Required share of tangential bases among the conclusive ones.
    pub pass_fraction: f64,
}

impl Default for SigmaOptions {
    fn default() -> Self {
        Self {
            pieces: 8,
            eta: 0.2,
            bases_per_piece: 32,
            pass_fraction: 0.9,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PieceVerdict {
    Pass,
    Fail,
    /// Too small for any base point to reach three shells.
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Piece {
    pub indices: Vec<usize>,
    pub bases: Vec<usize>,
    pub tangential: usize,
    pub not_tangential: usize,
    pub inconclusive: usize,
    pub verdict: PieceVerdict,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SigmaDecomposition {
    pub k: usize,
    pub spacing: f64,
    pub pieces: Vec<Piece>,
    pub pass: bool,
    pub diagnostics: Vec<String>,
}

/// Affine local frame at a point: orthonormal directions and a quality score.
struct LocalFrame {
    basis: Vec<Vec<f64>>,
    support: usize,
}

/// sin of the largest principal angle between two orthonormal frames of equal size.
pub fn principal_angle_sin(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .map(|u| linalg::norm(&linalg::reject(u, b)))
        .fold(0.0, f64::max)
}

fn neighbours(points: &[Vec<f64>], i: usize, r: f64) -> Vec<usize> {
    (0..points.len())
        .filter(|&j| j != i && linalg::dist(&points[i], &points[j]) <= r)
        .collect()
}

/// For `k = 1`, the line through `p` that passes within `band` of the most
/// neighbours (candidates: directions to each neighbour). For larger `k`,
/// principal directions of the neighbourhood.
fn local_frame(points: &[Vec<f64>], i: usize, k: usize, r: f64, band: f64) -> Option<LocalFrame> {
    let nb = neighbours(points, i, r);
    let p = &points[i];
    if k == 1 {
        let mut best: Option<(usize, f64, Vec<f64>)> = None;
        for &j in &nb {
            let Some(d) = linalg::normalized(&linalg::sub(&points[j], p)) else {
                continue;
            };
            let frame = [d.clone()];
            let mut count = 0;
            let mut resid = 0.0;
            for &q in &nb {
                let off = linalg::norm(&linalg::reject(&linalg::sub(&points[q], p), &frame));
                if off <= band {
                    count += 1;
                    resid += off;
                }
            }
            let better = match &best {
                None => true,
                Some((c, r0, _)) => count > *c || (count == *c && resid < *r0),
            };
            if better {
                best = Some((count, resid, d));
            }
        }
        let (support, _, mut d) = best?;
        // refine by PCA over the inliers
        let frame = [d.clone()];
        let inliers: Vec<Vec<f64>> = nb
            .iter()
            .map(|&q| points[q].clone())
            .filter(|q| linalg::norm(&linalg::reject(&linalg::sub(q, p), &frame)) <= band)
            .collect();
        if let Ok(v) = fit_tangent(&inliers, p, 1, None) {
            d = v[0].clone();
        }
        Some(LocalFrame {
            basis: vec![d],
            support,
        })
    } else {
        let sub: Vec<Vec<f64>> = nb.iter().map(|&q| points[q].clone()).collect();
        let basis = fit_tangent(&sub, p, k, None).ok()?;
        Some(LocalFrame {
            basis,
            support: nb.len(),
        })
    }
}

/// Greedy decomposition into pieces with a consistent local tangent, followed
/// by tangency verdicts at up to `bases_per_piece` base points per piece.
///
/// Points carry a robust local frame (neighbourhood of 8 spacings). Pieces
/// grow breadth-first from the best-supported unassigned point through
/// neighbours within 3 spacings whose frame is within 15 degrees and which lie
/// within one spacing (plus 15% of the offset) of the current frame.
/// Fragments under 6 points are merged into the piece of their nearest
/// assigned point. Bases are judged with radius 48 spacings and shells above 6
/// spacings, using only the piece's own points. A piece passes when at least
/// `pass_fraction` of its conclusive bases are tangential; a piece without a
/// conclusive base is reported as inconclusive and does not fail the whole.
pub fn sigma_decompose(
    points: &[Vec<f64>],
    k: usize,
    opts: &SigmaOptions,
) -> Result<SigmaDecomposition> {
    let Some(n) = points.first().map(Vec::len) else {
        return Ok(SigmaDecomposition {
            k,
            spacing: 0.0,
            pieces: Vec::new(),
            pass: true,
            diagnostics: vec!["empty point set".into()],
        });
    };
    if points.iter().any(|p| p.len() != n) {
        return arg("points have mixed dimensions");
    }
    if k == 0 || k > n {
        return arg(format!("k must lie in 1..={n}"));
    }
    if opts.pieces == 0 {
        return arg("need at least one piece");
    }
    let s = median_spacing(points);
    let mut diagnostics = Vec::new();
    if k == n || s == 0.0 {
        let piece = Piece {
            indices: (0..points.len()).collect(),
            bases: Vec::new(),
            tangential: 0,
            not_tangential: 0,
            inconclusive: 0,
            verdict: if k == n {
                PieceVerdict::Pass
            } else {
                PieceVerdict::Inconclusive
            },
        };
        return Ok(SigmaDecomposition {
            k,
            spacing: s,
            pass: k == n,
            pieces: vec![piece],
            diagnostics,
        });
    }

    let frames: Vec<Option<LocalFrame>> = (0..points.len())
        .into_par_iter()
        .map(|i| local_frame(points, i, k, 8.0 * s, s))
        .collect();
    let angle_tol = 15f64.to_radians().sin();
    let mut label: Vec<Option<usize>> = vec![None; points.len()];
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(frames[i].as_ref().map_or(0, |f| f.support)));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for &seed in &order {
        if label[seed].is_some() || frames[seed].is_none() {
            continue;
        }
        let g = groups.len();
        label[seed] = Some(g);
        let mut members = vec![seed];
        let mut queue = VecDeque::from([seed]);
        while let Some(p) = queue.pop_front() {
            let fp = frames[p].as_ref().unwrap();
            for q in neighbours(points, p, 3.0 * s) {
                if label[q].is_some() {
                    continue;
                }
                let Some(fq) = frames[q].as_ref() else {
                    continue;
                };
                let h = linalg::sub(&points[q], &points[p]);
                let off = linalg::norm(&linalg::reject(&h, &fp.basis));
                if principal_angle_sin(&fq.basis, &fp.basis) <= angle_tol
                    && off <= s + 0.15 * linalg::norm(&h)
                {
                    label[q] = Some(g);
                    members.push(q);
                    queue.push_back(q);
                }
            }
        }
        groups.push(members);
    }
    // merge fragments and frameless points
    const MIN_PIECE: usize = 6;
    let big: Vec<bool> = groups.iter().map(|g| g.len() >= MIN_PIECE).collect();
    if big.iter().any(|b| *b) {
        let anchors: Vec<usize> = (0..points.len())
            .filter(|&i| label[i].is_some_and(|g| big[g]))
            .collect();
        let mut merged = 0;
        for i in 0..points.len() {
            if label[i].is_some_and(|g| big[g]) {
                continue;
            }
            let nearest = anchors
                .iter()
                .copied()
                .min_by(|&a, &b| {
                    linalg::dist(&points[i], &points[a])
                        .total_cmp(&linalg::dist(&points[i], &points[b]))
                        .then(a.cmp(&b))
                })
                .unwrap();
            label[i] = label[nearest];
            merged += 1;
        }
        if merged > 0 {
            diagnostics.push(format!(
                "{merged} points from fragments merged into neighbouring pieces"
            ));
        }
    }
    let mut remap: Vec<Option<usize>> = vec![None; groups.len()];
    let mut indices: Vec<Vec<usize>> = Vec::new();
    for i in 0..points.len() {
        let g = label[i].expect("every point is labelled");
        let id = *remap[g].get_or_insert_with(|| {
            indices.push(Vec::new());
            indices.len() - 1
        });
        indices[id].push(i);
    }
    let mut pass = true;
    if indices.len() > opts.pieces {
        diagnostics.push(format!(
            "{} pieces needed, {} allowed",
            indices.len(),
            opts.pieces
        ));
        pass = false;
    }

    let topts = TangencyOptions {
        eta: opts.eta,
        shells: 8,
        radius: Some(48.0 * s),
        min_scale: 6.0 * s,
    };
    let pieces: Vec<Piece> = indices
        .into_par_iter()
        .map(|idx| -> Result<Piece> {
            let pts: Vec<Vec<f64>> = idx.iter().map(|&i| points[i].clone()).collect();
            let nb = opts.bases_per_piece.max(1).min(idx.len());
            let bases: Vec<usize> = (0..nb).map(|b| b * idx.len() / nb).collect();
            let (mut t, mut nt, mut inc) = (0, 0, 0);
            for &b in &bases {
                let x = &pts[b];
                let verdict = match fit_tangent(&pts, x, k, Some(16.0 * s)) {
                    Ok(v) => is_k_tangential(&pts, x, &v, &topts)?.verdict,
                    Err(Error::RankDeficient { .. }) => Verdict::Inconclusive,
                    Err(e) => return Err(e),
                };
                match verdict {
                    Verdict::Tangential => t += 1,
                    Verdict::NotTangential => nt += 1,
                    Verdict::Inconclusive => inc += 1,
                }
            }
            let conclusive = t + nt;
            let verdict = if conclusive == 0 {
                PieceVerdict::Inconclusive
            } else if t as f64 >= opts.pass_fraction * conclusive as f64 {
                PieceVerdict::Pass
            } else {
                PieceVerdict::Fail
            };
            Ok(Piece {
                bases: bases.iter().map(|&b| idx[b]).collect(),
                indices: idx,
                tangential: t,
                not_tangential: nt,
                inconclusive: inc,
                verdict,
            })
        })
        .collect::<Result<_>>()?;
    for (i, p) in pieces.iter().enumerate() {
        match p.verdict {
            PieceVerdict::Fail => {
                pass = false;
                diagnostics.push(format!(
                    "piece {i}: {} of {} bases tangential",
                    p.tangential,
                    p.bases.len()
                ));
            }
            PieceVerdict::Inconclusive => diagnostics.push(format!(
                "piece {i} ({} points) too small to judge",
                p.indices.len()
            )),
            PieceVerdict::Pass => {}
        }
    }
    if !pieces.iter().any(|p| p.verdict == PieceVerdict::Pass) {
        pass = false;
    }
    Ok(SigmaDecomposition {
        k,
        spacing: s,
        pieces,
        pass,
        diagnostics,
    })
}
