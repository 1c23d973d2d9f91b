//! Function representations shared by every other module.
//!
//! A [`DirectionalFunction`] wraps a deterministic evaluator on R^n (n = 1..3)
//! together with optional metadata: an exact one-sided derivative oracle, a
//! Lipschitz bound, a domain of validity, an effective support (used to size
//! radius searches) and, in one dimension, the locations of kinks so that
//! interval quadrature can split panels there.

mod grid;
mod parse;
mod quadrature;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

pub use grid::GridFunction;
pub(crate) use parse::parse_number;
pub use parse::{parse_closed_set, parse_function_spec, BUILTINS};
pub use quadrature::{
    ball_average, ball_average_with, sphere_average_derivative, sphere_average_derivative_with,
    QuadratureConfig,
};

pub type Evaluator = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// `(x, theta) -> D_theta f(x)`. Returning NaN means "no exact value here".
pub type DerivativeOracle = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// Axis-aligned box `[lo, hi]` in R^n.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() || lo.len() > 3 {
            return crate::error::arg(format!(
                "box needs matching lo/hi of dimension 1..3, got {} and {}",
                lo.len(),
                hi.len()
            ));
        }
        if lo
            .iter()
            .zip(&hi)
            .any(|(l, h)| !(h > l) || !l.is_finite() || !h.is_finite())
        {
            return crate::error::arg("box must satisfy lo < hi on every axis");
        }
        Ok(Self { lo, hi })
    }

    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        Self {
            lo: vec![lo; dim],
            hi: vec![hi; dim],
        }
    }

    /// Parses `lo1,hi1[,lo2,hi2[,lo3,hi3]]`.
    pub fn parse(text: &str) -> Result<Self> {
        let vals: Vec<f64> = text
            .split(',')
            .map(|s| parse::parse_number(s.trim()))
            .collect::<Result<_>>()?;
        if vals.is_empty() || !vals.len().is_multiple_of(2) {
            return crate::error::arg(format!("box `{text}` must list lo,hi pairs"));
        }
        let lo = vals.iter().step_by(2).copied().collect();
        let hi = vals.iter().skip(1).step_by(2).copied().collect();
        Self::new(lo, hi)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn diameter(&self) -> f64 {
        linalg::dist(&self.lo, &self.hi)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| 0.5 * (l + h))
            .collect()
    }

    pub fn contains(&self, x: &[f64], slack: f64) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (l, h))| *v >= l - slack && *v <= h + slack)
    }

    pub fn contains_ball(&self, x: &[f64], r: f64) -> bool {
        let slack = 1e-12 * (1.0 + self.diameter());
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (l, h))| v - r >= l - slack && v + r <= h + slack)
    }

    /// Euclidean distance from `x` to the box (0 inside).
    pub fn distance_to(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(v, (l, h))| {
                let d = if v < l {
                    l - v
                } else if v > h {
                    v - h
                } else {
                    0.0
                };
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Row-major grid nodes with `res` nodes per axis, last axis fastest.
    pub fn grid_nodes(&self, res: usize) -> Vec<Vec<f64>> {
        let n = self.dim();
        let total = res.pow(n as u32);
        let step: Vec<f64> = (0..n)
            .map(|a| {
                if res > 1 {
                    (self.hi[a] - self.lo[a]) / (res - 1) as f64
                } else {
                    0.0
                }
            })
            .collect();
        (0..total)
            .map(|mut idx| {
                let mut p = vec![0.0; n];
                for a in (0..n).rev() {
                    let i = idx % res;
                    idx /= res;
                    p[a] = if i == res - 1 {
                        self.hi[a]
                    } else {
                        self.lo[a] + i as f64 * step[a]
                    };
                }
                p
            })
            .collect()
    }

    /// Largest grid spacing for `res` nodes per axis.
    pub fn cell(&self, res: usize) -> f64 {
        (0..self.dim())
            .map(|a| (self.hi[a] - self.lo[a]) / (res.max(2) - 1) as f64)
            .fold(0.0, f64::max)
    }
}

/// Scalar function on R^n with the metadata the nonsmooth toolkit consumes.
#[derive(Clone)]
pub struct DirectionalFunction {
    dim: usize,
    eval: Evaluator,
    derivative: Option<DerivativeOracle>,
    lipschitz: Option<f64>,
    continuous: bool,
    domain: Option<BoxDomain>,
    support: Option<BoxDomain>,
    breakpoints: Vec<f64>,
    label: String,
}

impl fmt::Debug for DirectionalFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DirectionalFunction")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("lipschitz", &self.lipschitz)
            .field("continuous", &self.continuous)
            .field("has_derivative", &self.derivative.is_some())
            .field("domain", &self.domain)
            .finish()
    }
}

impl DirectionalFunction {
    /// Wraps a closure. Dimension must be 1, 2 or 3; the function is assumed
    /// continuous until told otherwise.
    pub fn new<F>(dim: usize, eval: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        assert!((1..=3).contains(&dim), "dimension must be 1..=3, got {dim}");
        Self {
            dim,
            eval: Arc::new(eval),
            derivative: None,
            lipschitz: None,
            continuous: true,
            domain: None,
            support: None,
            breakpoints: Vec::new(),
            label: String::from("<closure>"),
        }
    }

    /// Affine function `a . x + c`.
    pub fn affine(a: Vec<f64>, c: f64) -> Self {
        let dim = a.len();
        let k = linalg::norm(&a);
        let a1 = a.clone();
        let a2 = a.clone();
        Self::new(dim, move |x| linalg::dot(&a1, x) + c)
            .with_derivative(move |_, t| linalg::dot(&a2, t))
            .with_lipschitz(k)
            .with_label(format!("affine{a:?}+{c}"))
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Self::new(dim, move |_| c)
            .with_derivative(|_, _| 0.0)
            .with_lipschitz(0.0)
            .with_label(format!("const({c})"))
    }

    pub fn with_derivative<D>(mut self, d: D) -> Self
    where
        D: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        self.derivative = Some(Arc::new(d));
        self
    }

    pub fn with_lipschitz(mut self, k: f64) -> Self {
        assert!(k >= 0.0, "Lipschitz bound must be nonnegative");
        self.lipschitz = Some(k);
        self
    }

    pub fn with_continuity(mut self, continuous: bool) -> Self {
        self.continuous = continuous;
        self
    }

    pub fn with_domain(mut self, domain: BoxDomain) -> Self {
        self.domain = Some(domain);
        self
    }

    pub fn with_support(mut self, support: BoxDomain) -> Self {
        self.support = Some(support);
        self
    }

    /// One-dimensional kink locations; interval quadrature splits panels there.
    pub fn with_breakpoints(mut self, mut b: Vec<f64>) -> Self {
        b.retain(|v| v.is_finite());
        b.sort_by(|a, c| a.total_cmp(c));
        b.dedup();
        self.breakpoints = b;
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn without_derivative(mut self) -> Self {
        self.derivative = None;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    pub fn is_continuous(&self) -> bool {
        self.continuous
    }

    pub fn domain(&self) -> Option<&BoxDomain> {
        self.domain.as_ref()
    }

    pub fn support(&self) -> Option<&BoxDomain> {
        self.support.as_ref()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn has_derivative(&self) -> bool {
        self.derivative.is_some()
    }

    /// Raw evaluation; no checks.
    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    /// Evaluation that rejects points outside the domain and non-finite values.
    pub fn try_eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return crate::error::arg(format!(
                "point has dimension {}, function {}",
                x.len(),
                self.dim
            ));
        }
        if let Some(d) = &self.domain {
            if !d.contains(x, 1e-12 * (1.0 + d.diameter())) {
                return Err(Error::OutsideDomain { point: x.to_vec() });
            }
        }
        let v = self.eval(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite {
                point: x.to_vec(),
                value: v,
            })
        }
    }

    /// Exact one-sided derivative `D_theta f(x)` if an oracle is attached and
    /// it produces a finite value at `x`.
    pub fn exact_derivative(&self, x: &[f64], theta: &[f64]) -> Option<f64> {
        self.derivative
            .as_ref()
            .map(|d| d(x, theta))
            .filter(|v| v.is_finite())
    }

    /// `|f|`, keeping the metadata that survives taking absolute values.
    pub fn abs(&self) -> Self {
        let inner = self.eval.clone();
        let inner2 = self.eval.clone();
        let mut out = self.clone();
        out.eval = Arc::new(move |x| inner(x).abs());
        out.derivative = self.derivative.clone().map(|d| {
            let d: DerivativeOracle = Arc::new(move |x: &[f64], t: &[f64]| {
                let v = inner2(x);
                let dv = d(x, t);
                if v > 0.0 {
                    dv
                } else if v < 0.0 {
                    -dv
                } else {
                    dv.abs()
                }
            });
            d
        });
        out.label = format!("|{}|", self.label);
        out
    }

    /// `c * f`.
    pub fn scaled(&self, c: f64) -> Self {
        let inner = self.eval.clone();
        let mut out = self.clone();
        out.eval = Arc::new(move |x| c * inner(x));
        out.derivative = self.derivative.clone().map(|d| {
            let d: DerivativeOracle = Arc::new(move |x: &[f64], t: &[f64]| {
                if c >= 0.0 {
                    c * d(x, t)
                } else {
                    // one-sided derivatives are only positively homogeneous
                    f64::NAN
                }
            });
            d
        });
        out.lipschitz = self.lipschitz.map(|k| k * c.abs());
        out.label = format!("{c}*{}", self.label);
        out
    }

    /// Effective support if known, otherwise the domain.
    pub fn extent(&self) -> Option<&BoxDomain> {
        self.support.as_ref().or(self.domain.as_ref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_parse_and_nodes() {
        let b = BoxDomain::parse("-1,1,0,2").unwrap();
        assert_eq!(b.dim(), 2);
        let nodes = b.grid_nodes(3);
        assert_eq!(nodes.len(), 9);
        assert_eq!(nodes[0], vec![-1.0, 0.0]);
        assert_eq!(nodes[1], vec![-1.0, 1.0]);
        assert_eq!(nodes[8], vec![1.0, 2.0]);
        assert!(BoxDomain::parse("1,0").is_err());
        assert!(BoxDomain::parse("1").is_err());
    }

    #[test]
    fn try_eval_reports_offending_point() {
        let f = DirectionalFunction::new(1, |x| 1.0 / x[0]);
        match f.try_eval(&[0.0]) {
            Err(Error::NonFinite { point, .. }) => assert_eq!(point, vec![0.0]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn abs_flips_derivative_sign() {
        let f = DirectionalFunction::affine(vec![2.0], -1.0);
        let g = f.abs();
        assert_eq!(g.eval(&[0.0]), 1.0);
        assert_eq!(g.exact_derivative(&[0.0], &[1.0]), Some(-2.0));
        assert_eq!(g.exact_derivative(&[0.5], &[-1.0]), Some(2.0));
    }

    #[test]
    fn evaluator_is_deterministic() {
        let f = parse_function_spec("dist[(-1,0),(1,0)]").unwrap();
        let x = [0.3, -0.7];
        assert_eq!(f.eval(&x).to_bits(), f.eval(&x).to_bits());
    }
}
