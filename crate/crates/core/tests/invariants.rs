//! Properties that should hold for every input, checked on random draws.

mod common;

use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tangentia::funcspace::{
    ball_average, parse_function_spec, sphere_average_derivative, BoxDomain, DirectionalFunction,
};
use tangentia::maxop::{self, MaximalOptions};
use tangentia::nonsmooth::{
    directional_derivative, gamma, tau, GammaOptions, Ladder, TauOptions, DERIVATIVE_TOL,
};
use tangentia::semilinear::{
    extend_linear_map, hc_distance, random_subspace, SemiLinearMap, SemiLinearSubspace,
};
use tangentia::specials::{max_family_derivative, medial_scan, ClosedSetModel, MaxFamily};
use tangentia::tangency::{is_k_tangential, TangencyOptions, Verdict};

fn quadratic(q: Vec<Vec<f64>>, b: Vec<f64>) -> DirectionalFunction {
    let n = b.len();
    DirectionalFunction::new(n, move |x| {
        let quad: f64 = (0..n)
            .map(|i| (0..n).map(|j| x[i] * q[i][j] * x[j]).sum::<f64>())
            .sum();
        quad + b.iter().zip(x).map(|(u, v)| u * v).sum::<f64>()
    })
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    v.into_iter().map(|a| a / n).collect()
}

#[test]
fn small_balls_recover_point_values() {
    let tent = parse_function_spec("tent").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let x = rng.gen_range(-2.0..2.0);
        assert!((ball_average(&tent, &[x], 1e-4).unwrap() - common::tent_value(x)).abs() < 1e-4);
    }
}

#[test]
fn tent_ball_average_matches_trapezoid() {
    let tent = parse_function_spec("tent").unwrap();
    let r = 7f64.sqrt();
    let (a, b) = (2.0 - r, 2.0 + r);
    let m = 1_000_000;
    let h = (b - a) / m as f64;
    let sum: f64 = (0..=m)
        .map(|i| common::tent_value(a + i as f64 * h) * if i == 0 || i == m { 0.5 } else { 1.0 })
        .sum();
    let trap = sum * h / (b - a);
    assert_abs_diff_eq!(
        ball_average(&tent, &[2.0], r).unwrap(),
        trap,
        epsilon = 1e-9
    );
    assert_abs_diff_eq!(trap, common::tent_avg(2.0, r), epsilon = 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sphere_derivative_is_the_x_derivative_of_ball_averages(
        n in 1usize..=3,
        raw in proptest::collection::vec(-1.0f64..1.0, 18),
        r in 0.1f64..1.5,
    ) {
        let q: Vec<Vec<f64>> = (0..n).map(|i| raw[i * 3..i * 3 + n].to_vec()).collect();
        let b = raw[9..9 + n].to_vec();
        let x = raw[12..12 + n].to_vec();
        let th = unit(raw[15..15 + n].iter().map(|v| v + 1.5).collect());
        let f = quadratic(q, b);
        let h = 1e-4;
        let xp: Vec<f64> = x.iter().zip(&th).map(|(a, t)| a + h * t).collect();
        let xm: Vec<f64> = x.iter().zip(&th).map(|(a, t)| a - h * t).collect();
        let fd = (ball_average(&f, &xp, r).unwrap() - ball_average(&f, &xm, r).unwrap()) / (2.0 * h);
        let d = sphere_average_derivative(&f, &x, r, &th).unwrap();
        prop_assert!((d - fd).abs() < 1e-6, "{d} vs {fd}");
    }

    #[test]
    fn hc_is_symmetric_and_nearly_triangular(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draw = |rng: &mut ChaCha8Rng| random_subspace(2, rng.gen_range(0..=1), 1, rng).unwrap();
        let (a, b, c) = (draw(&mut rng), draw(&mut rng), draw(&mut rng));
        let ab = hc_distance(&a, &b, 720).unwrap();
        let ba = hc_distance(&b, &a, 720).unwrap();
        prop_assert_eq!(ab.value, ba.value);
        let bc = hc_distance(&b, &c, 720).unwrap();
        let ac = hc_distance(&a, &c, 720).unwrap();
        let mesh = ab.mesh_error.max(bc.mesh_error).max(ac.mesh_error);
        prop_assert!(ac.value <= ab.value + bc.value + 3.0 * mesh);
    }

    #[test]
    fn canonical_form_is_idempotent(seed in any::<u64>(), n in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.gen_range(0..=n);
        let rays = rng.gen_range(0..=2.min(n - k));
        let w = random_subspace(n, k, rays, &mut rng).unwrap();
        let again = SemiLinearSubspace::new(n, w.linear_part(), w.rays()).unwrap();
        prop_assert!(again.approx_eq(&w, 1e-10));
        for (u, v) in again.linear_part().iter().flatten().zip(w.linear_part().iter().flatten()) {
            prop_assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn extension_restricts_to_generator_values(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let gen = |rng: &mut ChaCha8Rng| -> (Vec<f64>, f64) {
            let g: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let v = g.iter().zip(&d).map(|(a, b)| a * b).sum();
            (g, v)
        };
        let lin = vec![gen(&mut rng)];
        let rays = vec![gen(&mut rng)];
        let l = extend_linear_map(&SemiLinearMap::from_generators(3, &lin, &rays).unwrap()).unwrap();
        for (g, v) in lin.iter().chain(&rays) {
            prop_assert!((l.apply(g).unwrap() - v).abs() < 1e-10);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn tau_is_nonnegative_and_scales_with_f(
        pieces in proptest::collection::vec((-2.0f64..2.0, -2.0f64..2.0, -0.3f64..0.3), 1..5),
        x in (-0.5f64..0.5, -0.5f64..0.5),
        c in -3.0f64..3.0,
    ) {
        let fam = MaxFamily::affine(pieces.iter().map(|(a, b, k)| (vec![*a, *b], *k)).collect()).unwrap();
        let f = fam.to_function();
        let w = SemiLinearSubspace::full(2);
        let opts = TauOptions::default();
        let t = tau(&f, &[x.0, x.1], &w, &opts).unwrap().value;
        let tc = tau(&f.scaled(c), &[x.0, x.1], &w, &opts).unwrap().value;
        prop_assert!(t >= 0.0 && tc >= 0.0);
        prop_assert!((tc - c.abs() * t).abs() <= 1e-9 * (1.0 + c.abs() * t));
        if fam.active_set(&[x.0, x.1]).len() == 1 {
            prop_assert!(t < 1e-6);
        }
    }

    #[test]
    fn raising_gamma_tolerance_never_lowers_the_degree(x in (-0.4f64..0.4, -0.4f64..0.4), seed in any::<u64>()) {
        let f = parse_function_spec("maxaffine[(1,0,0),(-1,0,0),(0,1,0.2)]").unwrap();
        let mut last = 0;
        for tol in [1e-6, 1e-3, 1e-1, 2.0] {
            let g = gamma(&f, &[x.0, x.1], &GammaOptions { tol, seed, ..Default::default() }).unwrap().degree;
            prop_assert!(g >= last, "tol {tol}: {g} < {last}");
            last = g;
        }
    }

    #[test]
    fn family_formula_matches_numeric_derivative(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(1..=3);
        let pieces: Vec<(Vec<f64>, f64)> = (0..rng.gen_range(1..=4))
            .map(|_| ((0..n).map(|_| rng.gen_range(-2.0..2.0)).collect(), rng.gen_range(-0.5..0.5)))
            .collect();
        let fam = MaxFamily::affine(pieces).unwrap();
        let f = fam.to_function().without_derivative();
        for _ in 0..8 {
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let th = unit((0..n).map(|_| rng.gen_range(-1.0..1.0) + 1e-3).collect());
            let d = directional_derivative(&f, &x, &th, &Ladder::default(), DERIVATIVE_TOL).unwrap().value;
            prop_assert!((max_family_derivative(&fam, &x, &th) - d).abs() < 1e-4);
        }
    }

    #[test]
    fn distance_functions_are_one_lipschitz(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<Vec<f64>> = (0..5).map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
        let a = ClosedSetModel::points(pts).unwrap();
        for _ in 0..50 {
            let x: [f64; 2] = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let y: [f64; 2] = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let gap = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt();
            prop_assert!((a.distance(&x) - a.distance(&y)).abs() <= gap * (1.0 + 1e-9));
        }
    }
}

#[test]
fn medial_points_split_by_multiplicity() {
    let sq = ClosedSetModel::square([0.0, 0.0], 1.0).unwrap();
    let g = sq.to_function();
    let scan = medial_scan(&sq, &BoxDomain::cube(2, 0.0, 1.0), 33).unwrap();
    let mut checked = (0, 0);
    for m in scan.iter().filter(|m| m.distance > 0.1) {
        if m.multiplicity >= 2 && checked.0 < 6 {
            let ns = sq.nearest_set(&m.x).unwrap();
            let dirs: Vec<Vec<f64>> = ns
                .points
                .iter()
                .map(|p| unit(vec![m.x[0] - p[0], m.x[1] - p[1]]))
                .collect();
            let mut gap = f64::INFINITY;
            for i in 0..dirs.len() {
                for j in i + 1..dirs.len() {
                    gap = gap.min(1.0 - dirs[i][0] * dirs[j][0] - dirs[i][1] * dirs[j][1]);
                }
            }
            let t = tau(
                &g,
                &m.x,
                &SemiLinearSubspace::full(2),
                &TauOptions::default(),
            )
            .unwrap()
            .value;
            assert!(t >= gap / 2.0, "{:?}: τ={t} gap={gap}", m.x);
            checked.0 += 1;
        } else if m.multiplicity == 1
            && !m.straddle
            && checked.1 < 6
            && (m.x[0] - m.x[1]).abs() > 0.1
            && (m.x[0] + m.x[1] - 1.0).abs() > 0.1
        {
            assert_eq!(
                gamma(&g, &m.x, &GammaOptions::default()).unwrap().degree,
                2,
                "{:?}",
                m.x
            );
            checked.1 += 1;
        }
    }
    assert_eq!(checked, (6, 6));
}

// ---------------------------------------------------------------------------
// maximal operator

#[test]
fn operator_sees_only_absolute_values() {
    let f = parse_function_spec("gauss(0.7)").unwrap().scaled(-1.5);
    let o = MaximalOptions::default();
    for i in 0..11 {
        let x = [-2.5 + 0.5 * i as f64];
        let a = maxop::maximal(&f, &x, 0.0, &o).unwrap().value;
        let b = maxop::maximal(&f.abs(), &x, 0.0, &o).unwrap().value;
        assert_eq!(a, b);
    }
}

#[test]
fn larger_lambda_never_increases_the_sup() {
    let f = parse_function_spec("tent").unwrap();
    let o = MaximalOptions::default();
    for i in 0..13 {
        let x = [-3.0 + 0.5 * i as f64];
        let vals: Vec<f64> = [0.0, 0.25, 0.5, 1.0, 2.0, 4.0]
            .iter()
            .map(|&l| maxop::maximal(&f, &x, l, &o).unwrap().value)
            .collect();
        assert!(
            vals.windows(2).all(|w| w[1] <= w[0] + 1e-12),
            "{x:?}: {vals:?}"
        );
    }
}

#[test]
fn nearby_best_radii_accumulate_on_root_seven() {
    let f = parse_function_spec("tent").unwrap();
    let o = MaximalOptions::default();
    for x in [2.0 - 1e-3, 2.0 + 1e-3] {
        for r in maxop::maximal(&f, &[x], 0.0, &o).unwrap().radii {
            assert!((r.value() - 7f64.sqrt()).abs() < 1e-2, "x={x}: {r}");
        }
    }
}

// ---------------------------------------------------------------------------
// tangency

fn rotate(p: &[f64], a: f64) -> Vec<f64> {
    vec![
        a.cos() * p[0] - a.sin() * p[1],
        a.sin() * p[0] + a.cos() * p[1],
    ]
}

#[test]
fn verdicts_are_rigid_motion_invariant() {
    let pts: Vec<Vec<f64>> = (-150..=150)
        .map(|i| i as f64 * 0.01)
        .map(|t| vec![t, t * t + 0.3 * t.powi(3)])
        .collect();
    let x = pts[150].clone();
    let v = vec![vec![1.0, 0.0]];
    let opts = TangencyOptions::default();
    let base = is_k_tangential(&pts, &x, &v, &opts).unwrap();
    assert_eq!(base.verdict, Verdict::Tangential);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let a = rng.gen_range(0.0..std::f64::consts::TAU);
        let shift = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
        let mv = |p: &[f64]| {
            let q = rotate(p, a);
            vec![q[0] + shift[0], q[1] + shift[1]]
        };
        let moved: Vec<Vec<f64>> = pts.iter().map(|p| mv(p)).collect();
        let r = is_k_tangential(
            &moved,
            &mv(&x),
            &[rotate(&v[0], a)],
            &TangencyOptions {
                radius: Some(base.radius),
                ..opts.clone()
            },
        )
        .unwrap();
        assert_eq!(r.verdict, base.verdict);
        assert_eq!(r.shells.len(), base.shells.len());
        for (s, t) in r.shells.iter().zip(&base.shells) {
            assert_eq!(s.count, t.count);
            assert!((s.max_ratio - t.max_ratio).abs() < 1e-12 * (1.0 + t.max_ratio));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn subsets_of_a_subspace_are_tangential(
        dir in (-1.0f64..1.0, -1.0f64..1.0, 0.1f64..1.0),
        ts in proptest::collection::vec(-1.0f64..1.0, 40..200),
        eta in 0.01f64..1.0,
    ) {
        let v = unit(vec![dir.0, dir.1, dir.2]);
        let mut pts: Vec<Vec<f64>> = ts.iter().map(|t| v.iter().map(|c| c * t).collect()).collect();
        pts.push(vec![0.0; 3]);
        let r = is_k_tangential(&pts, &[0.0, 0.0, 0.0], &[v], &TangencyOptions { eta, radius: Some(2.0), ..Default::default() }).unwrap();
        prop_assert!(r.shells.iter().all(|s| s.max_ratio < 1e-9));
        prop_assert_ne!(r.verdict, Verdict::NotTangential);
    }
}
