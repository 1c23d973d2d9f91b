//! Tent-function oracle shared by the integration tests: exact ball averages
//! from the antiderivative and a brute-force supremum over radii.
#![allow(dead_code)]

pub fn tent_value(y: f64) -> f64 {
    (1.0 - y.abs()).max(0.0)
}

pub fn tent_primitive(y: f64) -> f64 {
    if y <= -1.0 {
        0.0
    } else if y <= 0.0 {
        (1.0 + y).powi(2) / 2.0
    } else if y <= 1.0 {
        1.0 - (1.0 - y).powi(2) / 2.0
    } else {
        1.0
    }
}

pub fn tent_avg(x: f64, r: f64) -> f64 {
    if r == 0.0 {
        tent_value(x)
    } else {
        (tent_primitive(x + r) - tent_primitive(x - r)) / (2.0 * r)
    }
}

/// `(sup, argmax)` over `r >= lo` (plus r = 0 when lo = 0): 10^4 log-spaced
/// radii on [max(lo, 1e-3), 100] followed by golden refinement of the best bracket.
pub fn brute_maximal(x: f64, lo: f64) -> (f64, f64) {
    let m = 10_000;
    let a = lo.max(1e-3).ln();
    let b = 100f64.ln();
    let rs: Vec<f64> = (0..m)
        .map(|i| (a + (b - a) * i as f64 / (m - 1) as f64).exp())
        .collect();
    let vals: Vec<f64> = rs.iter().map(|&r| tent_avg(x, r)).collect();
    let (ib, _) = vals
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| {
            if *v > acc.1 {
                (i, *v)
            } else {
                acc
            }
        });
    let (mut l, mut h) = (rs[ib.saturating_sub(1)], rs[(ib + 1).min(m - 1)]);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let c = h - g * (h - l);
        let d = l + g * (h - l);
        if tent_avg(x, c) >= tent_avg(x, d) {
            h = d;
        } else {
            l = c;
        }
    }
    let r = 0.5 * (l + h);
    let mut best = (tent_avg(x, r).max(vals[ib]), r);
    if vals[ib] > tent_avg(x, r) {
        best.1 = rs[ib];
    }
    if lo == 0.0 && tent_value(x) > best.0 {
        best = (tent_value(x), 0.0);
    }
    best
}
