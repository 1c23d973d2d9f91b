//! Grid-sampled functions with multilinear interpolation.
//!
//! File format (CSV, UTF-8): the first line is `n,res_1..res_n,lo_1..lo_n,hi_1..hi_n`;
//! every following value (any number per line, comma separated) is a sample in
//! row-major order with the last axis varying fastest.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{arg, Error, Result};
use crate::funcspace::{BoxDomain, DirectionalFunction};

#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    domain: BoxDomain,
    res: Vec<usize>,
    samples: Vec<f64>,
}

impl GridFunction {
    pub fn new(domain: BoxDomain, res: Vec<usize>, samples: Vec<f64>) -> Result<Self> {
        if res.len() != domain.dim() {
            return arg("resolution list must match the box dimension");
        }
        if res.iter().any(|&r| r < 2) {
            return arg("every axis needs at least two nodes");
        }
        let count: usize = res.iter().product();
        if count != samples.len() {
            return arg(format!("expected {count} samples, got {}", samples.len()));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return arg(format!("sample {i} is not finite"));
        }
        Ok(Self {
            domain,
            res,
            samples,
        })
    }

    /// Samples `f` on the row-major node grid.
    pub fn from_fn(domain: BoxDomain, res: Vec<usize>, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let n = domain.dim();
        if res.len() != n {
            return arg("resolution list must match the box dimension");
        }
        let count: usize = res.iter().product();
        let mut samples = Vec::with_capacity(count);
        let mut idx = vec![0usize; n];
        for _ in 0..count {
            let p: Vec<f64> = (0..n)
                .map(|a| self_node(&domain, &res, a, idx[a]))
                .collect();
            samples.push(f(&p));
            for a in (0..n).rev() {
                idx[a] += 1;
                if idx[a] < res[a] {
                    break;
                }
                idx[a] = 0;
            }
        }
        Self::new(domain, res, samples)
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn resolution(&self) -> &[usize] {
        &self.res
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn dim(&self) -> usize {
        self.res.len()
    }

    pub fn node_coordinate(&self, axis: usize, i: usize) -> f64 {
        self_node(&self.domain, &self.res, axis, i)
    }

    fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.res).fold(0, |acc, (i, r)| acc * r + i)
    }

    /// Multilinear interpolation; NaN outside the box.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let n = self.dim();
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..n {
            let (lo, hi) = (self.domain.lo[a], self.domain.hi[a]);
            let slack = 1e-12 * (hi - lo);
            if !(x[a] >= lo - slack && x[a] <= hi + slack) {
                return f64::NAN;
            }
            let cells = (self.res[a] - 1) as f64;
            let t = ((x[a] - lo) / (hi - lo) * cells).clamp(0.0, cells);
            let i = (t.floor() as usize).min(self.res[a] - 2);
            base[a] = i;
            frac[a] = t - i as f64;
        }
        let mut acc = 0.0;
        let mut idx = [0usize; 3];
        for corner in 0..(1usize << n) {
            let mut w = 1.0;
            for a in 0..n {
                let bit = (corner >> a) & 1;
                idx[a] = base[a] + bit;
                w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
            }
            if w != 0.0 {
                acc += w * self.samples[self.flat(&idx[..n])];
            }
        }
        acc
    }

    /// Wraps the interpolant as a [`DirectionalFunction`] restricted to the box.
    pub fn to_function(&self) -> DirectionalFunction {
        let g = self.clone();
        let mut f = DirectionalFunction::new(self.dim(), move |x| g.interpolate(x))
            .with_domain(self.domain.clone())
            .with_label("grid");
        if self.dim() == 1 {
            let nodes = (0..self.res[0])
                .map(|i| self.node_coordinate(0, i))
                .collect();
            f = f.with_breakpoints(nodes);
        }
        f
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        let reader = std::io::BufReader::new(file);
        let mut values: Vec<f64> = Vec::new();
        let mut header: Option<Vec<f64>> = None;
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row: Vec<f64> = line
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| {
                    s.trim().parse::<f64>().map_err(|e| Error::Parse {
                        pos: lineno + 1,
                        msg: format!("grid file line {}: `{}`: {e}", lineno + 1, s.trim()),
                    })
                })
                .collect::<Result<_>>()?;
            if header.is_none() {
                header = Some(row);
            } else {
                values.extend(row);
            }
        }
        let header = header.ok_or_else(|| Error::Parse {
            pos: 0,
            msg: "empty grid file".into(),
        })?;
        let n = header.first().copied().unwrap_or(0.0);
        if !(n == 1.0 || n == 2.0 || n == 3.0) {
            return Err(Error::Parse {
                pos: 1,
                msg: format!("grid dimension must be 1..3, got {n}"),
            });
        }
        let n = n as usize;
        if header.len() != 1 + 3 * n {
            return Err(Error::Parse {
                pos: 1,
                msg: format!(
                    "header needs {} fields (n,res..,lo..,hi..), got {}",
                    1 + 3 * n,
                    header.len()
                ),
            });
        }
        let res = header[1..=n].iter().map(|r| *r as usize).collect();
        let lo = header[1 + n..1 + 2 * n].to_vec();
        let hi = header[1 + 2 * n..].to_vec();
        Self::new(BoxDomain::new(lo, hi)?, res, values)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
        let mut head = vec![self.dim().to_string()];
        head.extend(self.res.iter().map(|r| r.to_string()));
        head.extend(self.domain.lo.iter().map(|v| format!("{v:e}")));
        head.extend(self.domain.hi.iter().map(|v| format!("{v:e}")));
        writeln!(out, "{}", head.join(","))?;
        let last = *self.res.last().unwrap();
        for row in self.samples.chunks(last) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        out.flush()?;
        Ok(())
    }
}

fn self_node(domain: &BoxDomain, res: &[usize], axis: usize, i: usize) -> f64 {
    if i + 1 == res[axis] {
        domain.hi[axis]
    } else {
        domain.lo[axis] + (domain.hi[axis] - domain.lo[axis]) * i as f64 / (res[axis] - 1) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bilinear_grid() -> GridFunction {
        let b = BoxDomain::new(vec![-1.0, 0.0], vec![1.0, 2.0]).unwrap();
        GridFunction::from_fn(b, vec![5, 7], |p| p[0] * p[0] - 3.0 * p[1] + p[0] * p[1]).unwrap()
    }

    #[test]
    fn rejects_bad_shapes() {
        let b = BoxDomain::cube(1, 0.0, 1.0);
        assert!(GridFunction::new(b.clone(), vec![3], vec![0.0; 4]).is_err());
        assert!(GridFunction::new(b.clone(), vec![1], vec![0.0]).is_err());
        assert!(GridFunction::new(b, vec![2], vec![0.0, f64::NAN]).is_err());
    }

    #[test]
    fn nodes_are_reproduced_exactly() {
        let g = bilinear_grid();
        for i in 0..5 {
            for j in 0..7 {
                let p = [g.node_coordinate(0, i), g.node_coordinate(1, j)];
                assert_eq!(g.interpolate(&p), g.samples()[i * 7 + j]);
            }
        }
    }

    #[test]
    fn outside_is_nan_and_function_errors() {
        let g = bilinear_grid();
        assert!(g.interpolate(&[1.5, 1.0]).is_nan());
        let f = g.to_function();
        assert!(matches!(
            f.try_eval(&[1.5, 1.0]),
            Err(Error::OutsideDomain { .. })
        ));
    }

    #[test]
    fn csv_round_trip() {
        let g = bilinear_grid();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.csv");
        g.write_csv(&p).unwrap();
        let h = GridFunction::read_csv(&p).unwrap();
        assert_eq!(g, h);
    }

    proptest! {
        #[test]
        fn bilinear_functions_are_reproduced(x in -1.0f64..1.0, y in 0.0f64..2.0, a in -2.0f64..2.0, c in -2.0f64..2.0) {
            let b = BoxDomain::new(vec![-1.0, 0.0], vec![1.0, 2.0]).unwrap();
            let g = GridFunction::from_fn(b, vec![4, 3], |p| a * p[0] + c * p[1] + p[0] * p[1]).unwrap();
            let exact = a * x + c * y + x * y;
            prop_assert!((g.interpolate(&[x, y]) - exact).abs() < 1e-12);
        }
    }
}
