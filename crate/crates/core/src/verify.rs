//! Self-check suites run by `tangentia verify`. Each suite compares the
//! library against closed forms or brute force on small instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{arg, Result};
use crate::funcspace::{parse_function_spec, BoxDomain, DirectionalFunction};
use crate::linalg;
use crate::maxop::{self, AuditConstants, MaximalOptions, Radius};
use crate::nonsmooth::{quotients_diverge, singular_scan, Ladder, ScanOptions};
use crate::specials::{
    distance_derivative_fd, distance_directional_derivative, medial_scan, ClosedSetModel, MaxFamily,
};
use crate::tangency::{sigma_decompose, SigmaOptions};

pub const SUITES: &[&str] = &[
    "envelope",
    "tangential",
    "singular",
    "translation",
    "distance",
];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub pass: bool,
    pub checks: Vec<Check>,
}

fn check(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Check {
    Check {
        name: name.into(),
        pass,
        detail: detail.into(),
    }
}

pub fn run_suite(name: &str, seed: u64) -> Result<SuiteReport> {
    let checks = match name {
        "envelope" => envelope()?,
        "tangential" => tangential(seed)?,
        "singular" => singular()?,
        "translation" => translation(seed)?,
        "distance" => distance(seed)?,
        other => {
            return arg(format!(
                "unknown suite `{other}`; available: {}",
                SUITES.join(", ")
            ))
        }
    };
    Ok(SuiteReport {
        suite: name.to_string(),
        pass: checks.iter().all(|c| c.pass),
        checks,
    })
}

fn tent() -> DirectionalFunction {
    parse_function_spec("tent").expect("builtin")
}

fn envelope() -> Result<Vec<Check>> {
    let f = tent();
    let o = MaximalOptions::default();
    let s7 = 7f64.sqrt();
    let mut out = Vec::new();
    let r = maxop::maximal(&f, &[2.0], 0.0, &o)?;
    let want = (3.0 - s7) / 2.0;
    out.push(check(
        "value at 2",
        (r.value - want).abs() < 1e-6,
        format!("{} vs {want}", r.value),
    ));
    let ok = r.radii.len() == 1 && (r.radii[0].value() - s7).abs() < 1e-4;
    out.push(check("best radius at 2", ok, format!("{:?}", r.radii)));
    let h = 1e-4;
    let mf = |x: f64| maxop::maximal(&f, &[x], 0.0, &o).map(|r| r.value);
    for i in 0..10 {
        let x = 1.2 + 1.8 * i as f64 / 9.0;
        let d = maxop::maximal_directional_derivative(&f, &[x], &[1.0], 0.0, &o)?.value;
        let cd = (mf(x + h)? - mf(x - h)?) / (2.0 * h);
        out.push(check(
            format!("derivative at {x:.3}"),
            (d - cd).abs() < 1e-3,
            format!("{d} vs {cd}"),
        ));
    }
    let r = maxop::maximal(&f, &[0.0], 1.0, &o)?;
    out.push(check(
        "restricted value",
        (r.value - 0.5).abs() < 1e-6 && r.radii == vec![Radius::Finite(1.0)],
        format!("{} {:?}", r.value, r.radii),
    ));
    for th in [1.0, -1.0] {
        let d = maxop::maximal_directional_derivative(&f, &[0.0], &[th], 1.0, &o)?.value;
        out.push(check(
            format!("restricted derivative θ={th}"),
            d.abs() < 1e-4,
            d.to_string(),
        ));
    }
    Ok(out)
}

fn singular() -> Result<Vec<Check>> {
    let m = maxop::maximal_function(
        &tent(),
        0.0,
        &MaximalOptions {
            grid: 256,
            ..Default::default()
        },
    );
    let ladder = Ladder::default();
    let mut out = Vec::new();
    for i in 0..16 {
        let x = -3.0 + 6.0 * (i as f64 + 0.5) / 16.0;
        let diverge = quotients_diverge(&m, &[x], &[1.0], &ladder)?
            || quotients_diverge(&m, &[x], &[-1.0], &ladder)?;
        out.push(check(format!("bounded quotients at {x:.3}"), !diverge, ""));
    }
    Ok(out)
}

/// Random `c + b.x + x^T A x / 2` with its gradient at `x`.
fn random_quadratic(
    rng: &mut ChaCha8Rng,
    n: usize,
) -> (DirectionalFunction, Vec<Vec<f64>>, Vec<f64>) {
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let v = rng.gen_range(-1.0..1.0);
            a[i][j] = v;
            a[j][i] = v;
        }
    }
    let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let c = rng.gen_range(-1.0..1.0);
    let (a2, b2) = (a.clone(), b.clone());
    let f = DirectionalFunction::new(n, move |x| {
        let ax: Vec<f64> = a2.iter().map(|row| linalg::dot(row, x)).collect();
        c + linalg::dot(&b2, x) + 0.5 * linalg::dot(x, &ax)
    });
    (f, a, b)
}

fn translation(seed: u64) -> Result<Vec<Check>> {
    let consts = AuditConstants::default();
    let mut out = Vec::new();
    let sq = DirectionalFunction::new(1, |x| x[0] * x[0]);
    let u = maxop::remainder_sup(&sq, &[0.0], &[0.0], 0.6)?;
    let rep = maxop::check_translation_bound(&sq, &[0.0], &[0.1], 0.5, &[0.0], u, &consts)?;
    out.push(check(
        "square: lhs = h^2",
        (rep.lhs - 0.01).abs() < 1e-8,
        rep.lhs.to_string(),
    ));
    out.push(check(
        "square: bound",
        rep.pass,
        format!("ratio {}", rep.ratio),
    ));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in 0..20 {
        let n = 1 + t % 3;
        let (f, a, b) = random_quadratic(&mut rng, n);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.2..0.2)).collect();
        let r = rng.gen_range(0.1..1.0);
        let d: Vec<f64> = (0..n).map(|i| b[i] + linalg::dot(&a[i], &x)).collect();
        let u = maxop::remainder_sup(&f, &x, &d, r + linalg::norm(&h))?;
        let rep = maxop::check_translation_bound(&f, &x, &h, r, &d, u, &consts)?;
        out.push(check(
            format!("quadratic {t} (n={n})"),
            rep.pass,
            format!("ratio {}", rep.ratio),
        ));
    }
    Ok(out)
}

fn distance(seed: u64) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let k = rng.gen_range(2..6);
        let pts: Vec<Vec<f64>> = (0..k)
            .map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect();
        let a = ClosedSetModel::points(pts)?;
        let x = vec![rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)];
        let phi = rng.gen_range(0.0..std::f64::consts::TAU);
        let th = [phi.cos(), phi.sin()];
        let d = distance_directional_derivative(&a, &x, &th)?;
        worst = worst.max((d - distance_derivative_fd(&a, &x, &th, 1e-7)).abs());
    }
    out.push(check(
        "formula vs difference",
        worst < 1e-3,
        format!("max gap {worst:e}"),
    ));

    let sq = ClosedSetModel::square([0.0, 0.0], 1.0)?;
    let b = BoxDomain::cube(2, 0.0, 1.0);
    let scan = medial_scan(&sq, &b, 64)?;
    let half = 0.5 * b.cell(64);
    let axis: Vec<_> = scan
        .iter()
        .filter(|m| m.multiplicity >= 2 || m.straddle)
        .collect();
    let off = axis
        .iter()
        .map(|m| (m.x[0] - m.x[1]).abs().min((m.x[0] + m.x[1] - 1.0).abs()) / 2f64.sqrt())
        .fold(0.0, f64::max);
    out.push(check(
        "square axis near diagonals",
        !axis.is_empty() && off <= half + 1e-12,
        format!("{} points, max offset {off:e}", axis.len()),
    ));

    let two = ClosedSetModel::points(vec![vec![-1.0, 0.0], vec![1.0, 0.0]])?;
    let b = BoxDomain::cube(2, -2.0, 2.0);
    let scan = medial_scan(&two, &b, 33)?;
    let axis: Vec<_> = scan.iter().filter(|m| m.multiplicity >= 2).collect();
    out.push(check(
        "two-point bisector",
        axis.len() == 33 && axis.iter().all(|m| m.x[0].abs() < 1e-12),
        format!("{} points", axis.len()),
    ));
    Ok(out)
}

/// Random `max` of three affine pieces on the square.
pub fn random_max_affine(rng: &mut impl Rng) -> MaxFamily {
    let pieces = (0..3)
        .map(|_| {
            (
                vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                rng.gen_range(-0.5..0.5),
            )
        })
        .collect();
    MaxFamily::affine(pieces).expect("three finite pieces")
}

/// Distance from `x` to the set where two pieces tie for the maximum.
pub fn distance_to_arrangement(family: &MaxFamily, x: &[f64]) -> f64 {
    let pieces = family.affine_pieces().expect("affine family");
    let mut best = f64::INFINITY;
    for i in 0..pieces.len() {
        for j in i + 1..pieces.len() {
            let a = linalg::sub(&pieces[i].0, &pieces[j].0);
            let c = pieces[i].1 - pieces[j].1;
            let na = linalg::norm(&a);
            if na < 1e-12 {
                continue;
            }
            // tie line a.y + c = 0; walk along it from the foot of x
            let t = (linalg::dot(&a, x) + c) / (na * na);
            let foot = linalg::axpy(x, -t, &a);
            let dir = [-a[1] / na, a[0] / na];
            let active = |y: &[f64]| {
                let vi = linalg::dot(&pieces[i].0, y) + pieces[i].1;
                pieces
                    .iter()
                    .all(|(b, d)| linalg::dot(b, y) + d <= vi + 1e-12)
            };
            // the active part of the tie line is an interval; find its closest point
            // to the foot by scanning candidate interval endpoints
            let mut ends: Vec<f64> = vec![0.0];
            for (k, (b, d)) in pieces.iter().enumerate() {
                if k == i || k == j {
                    continue;
                }
                let g = linalg::sub(b, &pieces[i].0);
                let slope = linalg::dot(&g, &dir);
                if slope.abs() > 1e-14 {
                    ends.push(-(linalg::dot(&g, &foot) + d - pieces[i].1) / slope);
                }
            }
            for s in ends {
                let y = linalg::axpy(&foot, s, &dir);
                if active(&y) {
                    best = best.min(linalg::dist(x, &y));
                }
            }
        }
    }
    best
}

fn tangential(seed: u64) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = BoxDomain::cube(2, -1.0, 1.0);
    let res = 64;
    let half = 0.5 * b.cell(res);
    for t in 0..3 {
        let fam = random_max_affine(&mut rng);
        let f = fam.to_function();
        let flags = singular_scan(
            &f,
            &b,
            res,
            &ScanOptions {
                gamma: false,
                ..Default::default()
            },
        )?;
        let off = flags
            .iter()
            .map(|p| distance_to_arrangement(&fam, &p.x))
            .fold(0.0, f64::max);
        out.push(check(
            format!("trial {t}: flags hug edges"),
            off <= half + 1e-9,
            format!("{} flags, max offset {off:e}", flags.len()),
        ));
        if flags.is_empty() {
            continue;
        }
        let pts: Vec<Vec<f64>> = flags.into_iter().map(|p| p.x).collect();
        let d = sigma_decompose(&pts, 1, &SigmaOptions::default())?;
        out.push(check(
            format!("trial {t}: decomposition"),
            d.pass && d.pieces.len() <= 3,
            format!("{} pieces, {:?}", d.pieces.len(), d.diagnostics),
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arrangement_distance_for_abs() {
        let fam = MaxFamily::affine(vec![
            (vec![1.0, 0.0], 0.0),
            (vec![-1.0, 0.0], 0.0),
            (vec![0.0, 0.0], -5.0),
        ])
        .unwrap();
        assert!((distance_to_arrangement(&fam, &[0.3, 0.7]) - 0.3).abs() < 1e-12);
        // three rays from the origin: x, -x, y
        let fam = MaxFamily::affine(vec![
            (vec![1.0, 0.0], 0.0),
            (vec![-1.0, 0.0], 0.0),
            (vec![0.0, 1.0], 0.0),
        ])
        .unwrap();
        // (0, -1) lies on the ray x = -x >= y
        assert!(distance_to_arrangement(&fam, &[0.0, -1.0]) < 1e-12);
        // (0, 1): nearest edge point is on x = y or -x = y
        assert!((distance_to_arrangement(&fam, &[0.0, 1.0]) - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn unknown_suite() {
        assert!(run_suite("nope", 0).is_err());
    }

    #[test]
    fn suites_pass() {
        for s in SUITES {
            let r = run_suite(s, 7).unwrap();
            assert!(
                r.pass,
                "{s}: {:?}",
                r.checks.iter().filter(|c| !c.pass).collect::<Vec<_>>()
            );
        }
    }
}
