//! Uniform-norm (Chebyshev) linear fitting: `min_c max_i |y_i - a_i . c|`.
//!
//! Solved through its LP dual
//!
//! ```text
//! max  sum_i y_i (u_i - v_i)
//! s.t. sum_i (u_i - v_i) a_i = 0,   sum_i (u_i + v_i) = 1,   u, v >= 0
//! ```
//!
//! with a dense two-phase simplex (Bland's rule). The primal coefficients are
//! minus the simplex multipliers of the first `m` equality rows.

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Clone, Debug, PartialEq)]
pub struct ChebyshevFit {
    pub coef: Vec<f64>,
    /// `max_i |y_i - a_i . coef|`, recomputed from the data.
    pub residual: f64,
}

fn max_residual(rows: &[Vec<f64>], y: &[f64], c: &[f64]) -> f64 {
    rows.iter()
        .zip(y)
        .map(|(a, v)| (v - linalg::dot(a, c)).abs())
        .fold(0.0, f64::max)
}

/// Best uniform approximation of `y` by `rows * coef`.
pub fn chebyshev_fit(rows: &[Vec<f64>], y: &[f64]) -> Result<ChebyshevFit> {
    if rows.is_empty() || rows.len() != y.len() {
        return Err(Error::Argument(
            "chebyshev_fit needs matching, nonempty rows and values".into(),
        ));
    }
    let m = rows[0].len();
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::Argument("rows must share a length".into()));
    }
    if y.iter()
        .chain(rows.iter().flatten())
        .any(|v| !v.is_finite())
    {
        return Err(Error::Argument("chebyshev_fit data must be finite".into()));
    }
    let ls = linalg::lstsq(rows, y, m);
    let ls_res = max_residual(rows, y, &ls);
    let scale = y.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    if m == 0 || ls_res <= 1e-12 * (1.0 + scale) {
        return Ok(ChebyshevFit {
            coef: ls,
            residual: ls_res,
        });
    }
    let coef = dual_simplex_fit(rows, y)?;
    let residual = max_residual(rows, y, &coef);
    if residual <= ls_res {
        Ok(ChebyshevFit { coef, residual })
    } else {
        log::debug!("simplex fit ({residual}) lost to least squares ({ls_res})");
        Ok(ChebyshevFit {
            coef: ls,
            residual: ls_res,
        })
    }
}

/// Dense tableau: `rows x (cols + 1)`, last column is the right-hand side.
struct Tableau {
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
}

const PIVOT_EPS: f64 = 1e-11;

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.t[r][c];
        for v in self.t[r].iter_mut() {
            *v /= p;
        }
        let prow = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&prow) {
                    *v -= f * pv;
                }
            }
        }
        self.basis[r] = c;
    }

    /// Minimises `cost . z` over the current basis; columns with `allowed[j]`
    /// false never enter.
    fn optimise(&mut self, cost: &[f64], allowed: &[bool]) -> Result<()> {
        let rows = self.t.len();
        for _ in 0..50 * (self.cols + rows) {
            // reduced cost d_j = c_j - c_B B^-1 A_j
            let mut enter = None;
            for j in 0..self.cols {
                if !allowed[j] || self.basis.contains(&j) {
                    continue;
                }
                let d = cost[j]
                    - (0..rows)
                        .map(|i| cost[self.basis[i]] * self.t[i][j])
                        .sum::<f64>();
                if d < -PIVOT_EPS {
                    enter = Some(j);
                    break;
                }
            }
            let Some(c) = enter else { return Ok(()) };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..rows {
                let a = self.t[i][c];
                if a > PIVOT_EPS {
                    let ratio = self.t[i][self.cols] / a;
                    let better = match leave {
                        None => true,
                        Some((k, best)) => {
                            ratio < best - 1e-14
                                || (ratio <= best + 1e-14 && self.basis[i] < self.basis[k])
                        }
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            match leave {
                Some((r, _)) => self.pivot(r, c),
                None => return Err(Error::Solver("unbounded dual problem".into())),
            }
        }
        Err(Error::Solver("simplex iteration limit reached".into()))
    }
}

fn dual_simplex_fit(rows: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>> {
    let n = rows.len();
    let m = rows[0].len();
    let nrows = m + 1;
    let nvar = 2 * n;
    let cols = nvar + nrows;
    let mut t = vec![vec![0.0; cols + 1]; nrows];
    for (i, a) in rows.iter().enumerate() {
        for k in 0..m {
            t[k][i] = a[k];
            t[k][n + i] = -a[k];
        }
        t[m][i] = 1.0;
        t[m][n + i] = 1.0;
    }
    for r in 0..nrows {
        t[r][nvar + r] = 1.0;
    }
    t[m][cols] = 1.0;
    let mut tab = Tableau {
        t,
        basis: (nvar..cols).collect(),
        cols,
    };

    let mut phase1 = vec![0.0; cols];
    phase1[nvar..].iter_mut().for_each(|c| *c = 1.0);
    let mut allowed = vec![true; cols];
    tab.optimise(&phase1, &allowed)?;
    let infeas: f64 = (0..nrows)
        .filter(|&i| tab.basis[i] >= nvar)
        .map(|i| tab.t[i][cols])
        .sum();
    if infeas > 1e-9 {
        return Err(Error::Solver(format!(
            "dual problem infeasible ({infeas:e})"
        )));
    }
    // drive zero-level artificials out where a structural column can replace them
    for r in 0..nrows {
        if tab.basis[r] >= nvar {
            if let Some(c) =
                (0..nvar).find(|&j| !tab.basis.contains(&j) && tab.t[r][j].abs() > 1e-9)
            {
                tab.pivot(r, c);
            }
        }
    }

    let mut cost = vec![0.0; cols];
    for i in 0..n {
        cost[i] = -y[i];
        cost[n + i] = y[i];
    }
    allowed[nvar..].iter_mut().for_each(|a| *a = false);
    tab.optimise(&cost, &allowed)?;

    // multipliers pi = c_B B^-1; B^-1 sits in the artificial columns
    let pi: Vec<f64> = (0..nrows)
        .map(|k| {
            (0..nrows)
                .map(|i| cost[tab.basis[i]] * tab.t[i][nvar + k])
                .sum()
        })
        .collect();
    Ok(pi[..m].iter().map(|p| -p).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_fit_is_midrange() {
        let rows = vec![vec![1.0]; 3];
        let f = chebyshev_fit(&rows, &[0.0, 1.0, 0.25]).unwrap();
        assert!((f.coef[0] - 0.5).abs() < 1e-12);
        assert!((f.residual - 0.5).abs() < 1e-12);
    }

    #[test]
    fn absolute_value_slope() {
        // |t| sampled at t = +-1: best slope 0, error 1
        let f = chebyshev_fit(&[vec![1.0], vec![-1.0]], &[1.0, 1.0]).unwrap();
        assert!(f.coef[0].abs() < 1e-12);
        assert!((f.residual - 1.0).abs() < 1e-12);
    }

    #[test]
    fn classic_line_fit() {
        // best uniform line through (0,0),(1,1),(2,0): slope 0, offset 0.5
        let rows = vec![vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0]];
        let f = chebyshev_fit(&rows, &[0.0, 1.0, 0.0]).unwrap();
        assert!((f.residual - 0.5).abs() < 1e-12);
        assert!((f.coef[0] - 0.5).abs() < 1e-12 && f.coef[1].abs() < 1e-12);
    }

    #[test]
    fn matches_grid_search_in_two_unknowns() {
        // || cos phi | - a cos phi - b sin phi | over 360 directions
        let rows: Vec<Vec<f64>> = (0..360)
            .map(|i| {
                let p = (i as f64).to_radians();
                vec![p.cos(), p.sin()]
            })
            .collect();
        let y: Vec<f64> = rows.iter().map(|r| r[0].abs()).collect();
        let f = chebyshev_fit(&rows, &y).unwrap();
        let mut best = f64::INFINITY;
        for i in -100..=100 {
            for j in -100..=100 {
                let c = [i as f64 * 0.01, j as f64 * 0.01];
                best = best.min(max_residual(&rows, &y, &c));
            }
        }
        assert!(f.residual <= best + 1e-12);
        assert!((f.residual - 1.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn never_worse_than_least_squares(data in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -2.0f64..2.0), 4..40)) {
            let rows: Vec<Vec<f64>> = data.iter().map(|(a, b, _)| vec![1.0, *a, *b]).collect();
            let y: Vec<f64> = data.iter().map(|(_, _, v)| *v).collect();
            let f = chebyshev_fit(&rows, &y).unwrap();
            let ls = linalg::lstsq(&rows, &y, 3);
            prop_assert!(f.residual <= max_residual(&rows, &y, &ls) + 1e-12);
            prop_assert!(f.residual >= 0.0);
        }

        #[test]
        fn exact_data_gives_zero(c in proptest::collection::vec(-3.0f64..3.0, 2), pts in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 3..30)) {
            let rows: Vec<Vec<f64>> = pts.iter().map(|(a, b)| vec![*a, *b]).collect();
            let y: Vec<f64> = rows.iter().map(|r| linalg::dot(r, &c)).collect();
            prop_assert!(chebyshev_fit(&rows, &y).unwrap().residual < 1e-9);
        }

        #[test]
        fn optimality_against_perturbation(data in proptest::collection::vec((-1.0f64..1.0, -2.0f64..2.0), 3..25), d in proptest::collection::vec(-0.1f64..0.1, 2)) {
            let rows: Vec<Vec<f64>> = data.iter().map(|(a, _)| vec![1.0, *a]).collect();
            let y: Vec<f64> = data.iter().map(|(_, v)| *v).collect();
            let f = chebyshev_fit(&rows, &y).unwrap();
            let moved = [f.coef[0] + d[0], f.coef[1] + d[1]];
            prop_assert!(f.residual <= max_residual(&rows, &y, &moved) + 1e-10);
        }
    }
}
