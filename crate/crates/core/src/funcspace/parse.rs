//! Function-spec mini-language.
//!
//! ```text
//! expr   := "grid:" PATH
//!         | NAME [ "(" arg { "," arg } ")" ] [ "[" item { "," item } "]" ]
//! arg    := NUMBER | expr
//! item   := NUMBER | "(" NUMBER { "," NUMBER } ")"
//! ```
//!
//! Numbers accept the Unicode minus sign. Positions in errors are character
//! offsets into the input.

use crate::error::{Error, Result};
use crate::funcspace::{BoxDomain, DirectionalFunction, GridFunction};
use crate::linalg;
use crate::specials::{inf_convolution, ClosedSetModel, Coupling, MaxFamily};

/// Builtin names with their argument forms.
pub const BUILTINS: &[&str] = &[
    "tent",
    "tent(n)",
    "abs",
    "abs(n)",
    "gauss(s)",
    "gauss(s,n)",
    "maxaffine[(a..,c),..]",
    "dist[p1,..,pk]",
    "distpoly[v1,..,vk]",
    "infconv(u,t)",
    "grid:<path>",
];

/// Parses a number, accepting `−` (U+2212) as a minus sign.
pub(crate) fn parse_number(text: &str) -> Result<f64> {
    let clean = text.trim().replace('\u{2212}', "-");
    clean
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Argument(format!("`{text}` is not a finite number")))
}

pub fn parse_function_spec(text: &str) -> Result<DirectionalFunction> {
    let mut p = Parser {
        chars: text.chars().collect(),
        pos: 0,
    };
    let f = p.expr()?;
    p.skip_ws();
    if p.pos < p.chars.len() {
        return Err(p.error(format!("unexpected `{}` after expression", p.chars[p.pos])));
    }
    Ok(f.with_label(text.trim()))
}

/// Closed set for distance computations: `dist[p1,..]`, `distpoly[v1,..]`,
/// or `grid:PATH` (zero level set of a sampled field).
pub fn parse_closed_set(text: &str) -> Result<ClosedSetModel> {
    let mut p = Parser {
        chars: text.chars().collect(),
        pos: 0,
    };
    p.skip_ws();
    let start = p.pos;
    let name = p.ident()?;
    if name == "grid" && p.peek() == Some(':') {
        let path: String = p.chars[p.pos + 1..]
            .iter()
            .collect::<String>()
            .trim()
            .to_string();
        if path.is_empty() {
            return Err(p.error("grid: needs a file path"));
        }
        return ClosedSetModel::grid_level_set(&GridFunction::read_csv(&path)?);
    }
    p.expect('[')?;
    let mut items = vec![p.tuple()?];
    while p.peek() == Some(',') {
        p.pos += 1;
        items.push(p.tuple()?);
    }
    p.expect(']')?;
    p.skip_ws();
    if p.pos < p.chars.len() {
        return Err(p.error(format!("unexpected `{}` after set", p.chars[p.pos])));
    }
    match name.as_str() {
        "dist" => ClosedSetModel::points(items),
        "distpoly" if items.iter().all(|v| v.len() == 2) => {
            ClosedSetModel::polygon(items.iter().map(|v| [v[0], v[1]]).collect())
        }
        _ => Err(Error::Parse {
            pos: start,
            msg: "expected dist[..], distpoly[..] or grid:PATH".into(),
        }),
    }
}

enum Arg {
    Num(f64),
    Func(DirectionalFunction),
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
}

impl Parser {
    fn error(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            pos: self.pos,
            msg: msg.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).copied()
    }

    fn expect(&mut self, c: char) -> Result<()> {
        match self.peek() {
            Some(d) if d == c => {
                self.pos += 1;
                Ok(())
            }
            Some(d) => Err(self.error(format!("expected `{c}`, found `{d}`"))),
            None => Err(self.error(format!("expected `{c}`, found end of input"))),
        }
    }

    fn ident(&mut self) -> Result<String> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.chars.len()
            && (self.chars[self.pos].is_ascii_alphanumeric() || self.chars[self.pos] == '_')
        {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.error("expected a builtin name"));
        }
        Ok(self.chars[start..self.pos].iter().collect())
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.chars.len() {
            let c = self.chars[self.pos];
            if c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E' | '\u{2212}') {
                self.pos += 1;
            } else {
                break;
            }
        }
        let s: String = self.chars[start..self.pos].iter().collect();
        parse_number(&s).map_err(|_| Error::Parse {
            pos: start,
            msg: format!("expected a number, found `{s}`"),
        })
    }

    fn starts_number(&mut self) -> bool {
        matches!(self.peek(), Some(c) if c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | '\u{2212}'))
    }

    fn tuple(&mut self) -> Result<Vec<f64>> {
        if self.peek() == Some('(') {
            self.pos += 1;
            let mut v = vec![self.number()?];
            while self.peek() == Some(',') {
                self.pos += 1;
                v.push(self.number()?);
            }
            self.expect(')')?;
            Ok(v)
        } else {
            Ok(vec![self.number()?])
        }
    }

    fn expr(&mut self) -> Result<DirectionalFunction> {
        self.skip_ws();
        let start = self.pos;
        let name = self.ident()?;
        if name == "grid" && self.peek() == Some(':') {
            self.pos += 1;
            let path: String = self.chars[self.pos..]
                .iter()
                .collect::<String>()
                .trim()
                .to_string();
            self.pos = self.chars.len();
            if path.is_empty() {
                return Err(self.error("grid: needs a file path"));
            }
            return Ok(GridFunction::read_csv(&path)?.to_function());
        }
        let mut args = Vec::new();
        if self.peek() == Some('(') {
            self.pos += 1;
            loop {
                if self.starts_number() {
                    args.push(Arg::Num(self.number()?));
                } else {
                    args.push(Arg::Func(self.expr()?));
                }
                match self.peek() {
                    Some(',') => self.pos += 1,
                    _ => break,
                }
            }
            self.expect(')')?;
        }
        let mut items = Vec::new();
        let bracketed = self.peek() == Some('[');
        if bracketed {
            self.pos += 1;
            if self.peek() != Some(']') {
                items.push(self.tuple()?);
                while self.peek() == Some(',') {
                    self.pos += 1;
                    items.push(self.tuple()?);
                }
            }
            self.expect(']')?;
        }
        let at = |msg: String| Error::Parse { pos: start, msg };
        let nums = |args: &[Arg]| -> Result<Vec<f64>> {
            args.iter()
                .map(|a| match a {
                    Arg::Num(v) => Ok(*v),
                    Arg::Func(_) => Err(at(format!("`{name}` takes numeric arguments"))),
                })
                .collect()
        };
        let dim_arg = |v: Option<&f64>| -> Result<usize> {
            match v {
                None => Ok(1),
                Some(&d) if d == 1.0 || d == 2.0 || d == 3.0 => Ok(d as usize),
                Some(d) => Err(at(format!("dimension must be 1, 2 or 3, got {d}"))),
            }
        };
        let no_items = |items: &[Vec<f64>]| -> Result<()> {
            if bracketed || !items.is_empty() {
                Err(at(format!("`{name}` takes no bracketed list")))
            } else {
                Ok(())
            }
        };
        match name.as_str() {
            "tent" => {
                no_items(&items)?;
                let a = nums(&args)?;
                if a.len() > 1 {
                    return Err(at("tent takes at most a dimension".into()));
                }
                Ok(tent(dim_arg(a.first())?))
            }
            "abs" => {
                no_items(&items)?;
                let a = nums(&args)?;
                if a.len() > 1 {
                    return Err(at("abs takes at most a dimension".into()));
                }
                Ok(euclidean_norm(dim_arg(a.first())?))
            }
            "gauss" => {
                no_items(&items)?;
                let a = nums(&args)?;
                if a.is_empty() || a.len() > 2 {
                    return Err(at("gauss needs a width and optionally a dimension".into()));
                }
                if !(a[0] > 0.0) {
                    return Err(at("gauss width must be positive".into()));
                }
                Ok(gauss(a[0], dim_arg(a.get(1))?))
            }
            "maxaffine" => {
                if !args.is_empty() || items.is_empty() {
                    return Err(at("maxaffine needs a list of (a..,c) tuples".into()));
                }
                let n = items[0].len().saturating_sub(1);
                if !(1..=3).contains(&n) || items.iter().any(|t| t.len() != n + 1) {
                    return Err(at("maxaffine tuples must all have 2 to 4 entries".into()));
                }
                let pieces = items.iter().map(|t| (t[..n].to_vec(), t[n])).collect();
                Ok(MaxFamily::affine(pieces)?.to_function())
            }
            "dist" => {
                if !args.is_empty() || items.is_empty() {
                    return Err(at("dist needs a list of points".into()));
                }
                let a = ClosedSetModel::points(items.clone()).map_err(|e| at(e.to_string()))?;
                let mut f = a.to_function();
                if a.dim() == 1 {
                    let mut bp: Vec<f64> = items.iter().map(|p| p[0]).collect();
                    let mut s = bp.clone();
                    s.sort_by(|x, y| x.total_cmp(y));
                    bp.extend(s.windows(2).map(|w| 0.5 * (w[0] + w[1])));
                    f = f.with_breakpoints(bp);
                }
                Ok(f)
            }
            "distpoly" => {
                if !args.is_empty() || items.len() < 2 || items.iter().any(|v| v.len() != 2) {
                    return Err(at("distpoly needs at least two (x,y) vertices".into()));
                }
                let v = items.iter().map(|p| [p[0], p[1]]).collect();
                Ok(ClosedSetModel::polygon(v)?.to_function())
            }
            "infconv" => {
                no_items(&items)?;
                match args.as_slice() {
                    [Arg::Func(u), Arg::Num(t)] if *t > 0.0 => Ok(moreau(u.clone(), *t)),
                    _ => Err(at("infconv needs (function, t > 0)".into())),
                }
            }
            _ => Err(Error::UnknownBuiltin {
                name,
                available: BUILTINS.join(", "),
            }),
        }
    }
}

fn tent(n: usize) -> DirectionalFunction {
    DirectionalFunction::new(n, |x| (1.0 - linalg::norm(x)).max(0.0))
        .with_derivative(|x, t| {
            let r = linalg::norm(x);
            if r == 0.0 {
                -linalg::norm(t)
            } else {
                let radial = linalg::dot(x, t) / r;
                if r < 1.0 {
                    -radial
                } else if r == 1.0 {
                    (-radial).max(0.0)
                } else {
                    0.0
                }
            }
        })
        .with_lipschitz(1.0)
        .with_support(BoxDomain::cube(n, -1.0, 1.0))
        .with_breakpoints(if n == 1 {
            vec![-1.0, 0.0, 1.0]
        } else {
            Vec::new()
        })
}

fn euclidean_norm(n: usize) -> DirectionalFunction {
    DirectionalFunction::new(n, linalg::norm)
        .with_derivative(|x, t| {
            let r = linalg::norm(x);
            if r == 0.0 {
                linalg::norm(t)
            } else {
                linalg::dot(x, t) / r
            }
        })
        .with_lipschitz(1.0)
        .with_breakpoints(if n == 1 { vec![0.0] } else { Vec::new() })
}

fn gauss(s: f64, n: usize) -> DirectionalFunction {
    let g = move |x: &[f64]| (-linalg::dot(x, x) / (2.0 * s * s)).exp();
    DirectionalFunction::new(n, g)
        .with_derivative(move |x, t| -g(x) * linalg::dot(x, t) / (s * s))
        .with_lipschitz(1.0 / (s * std::f64::consts::E.sqrt()))
        .with_support(BoxDomain::cube(n, -6.0 * s, 6.0 * s))
}

/// `x -> inf_y u(y) + |x - y|^2 / (2t)`, evaluated by a fresh minimisation
/// per point.
fn moreau(u: DirectionalFunction, t: f64) -> DirectionalFunction {
    let n = u.dim();
    let half = match u.lipschitz() {
        Some(k) => (2.0 * k * t).max(1e-3),
        None => 4.0 * t.max(1.0),
    };
    let res = match n {
        1 => 401,
        2 => 81,
        _ => 21,
    };
    let coupling = Coupling::quadratic(t);
    let k = u.lipschitz();
    let mut f = DirectionalFunction::new(n, move |x| {
        let ybox = BoxDomain {
            lo: x.iter().map(|v| v - half).collect(),
            hi: x.iter().map(|v| v + half).collect(),
        };
        inf_convolution(&u, &coupling, x, &ybox, res, false)
            .map(|r| r.value)
            .unwrap_or(f64::NAN)
    });
    if let Some(k) = k {
        f = f.with_lipschitz(k);
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tent_metadata() {
        let f = parse_function_spec("tent").unwrap();
        assert_eq!(f.dim(), 1);
        assert_eq!(f.lipschitz(), Some(1.0));
        assert!(f.is_continuous());
        assert_eq!(f.eval(&[0.25]), 0.75);
        assert_eq!(f.exact_derivative(&[1.0], &[1.0]), Some(0.0));
        assert_eq!(f.exact_derivative(&[1.0], &[-1.0]), Some(1.0));
        assert_eq!(parse_function_spec("tent(2)").unwrap().dim(), 2);
    }

    #[test]
    fn maxaffine_is_abs() {
        let f = parse_function_spec("maxaffine[(1,0),(−1,0)]").unwrap();
        assert_eq!(f.lipschitz(), Some(1.0));
        for x in [-2.0, -0.3, 0.0, 0.7] {
            assert_eq!(f.eval(&[x]), f64::abs(x));
        }
        assert_eq!(f.breakpoints(), &[0.0]);
    }

    #[test]
    fn dist_two_points() {
        let f = parse_function_spec("dist[(-1,0),(1,0)]").unwrap();
        assert_eq!(f.dim(), 2);
        assert!((f.eval(&[0.0, 1.0]) - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(f.lipschitz(), Some(1.0));
    }

    #[test]
    fn gauss_and_infconv() {
        let g = parse_function_spec("gauss(0.5, 2)").unwrap();
        assert_eq!(g.dim(), 2);
        assert_eq!(g.eval(&[0.0, 0.0]), 1.0);
        let h = parse_function_spec("infconv(abs, 1)").unwrap();
        assert!((h.eval(&[2.0]) - 1.5).abs() < 1e-9);
        assert!((h.eval(&[0.5]) - 0.125).abs() < 1e-9);
    }

    #[test]
    fn errors_carry_positions() {
        match parse_function_spec("maxaffine[(1,0),(1,0") {
            Err(Error::Parse { pos, .. }) => assert_eq!(pos, 20),
            other => panic!("{other:?}"),
        }
        match parse_function_spec("tent  x") {
            Err(Error::Parse { pos, .. }) => assert_eq!(pos, 6),
            other => panic!("{other:?}"),
        }
        match parse_function_spec("sinc") {
            Err(Error::UnknownBuiltin { available, .. }) => {
                assert!(available.contains("maxaffine"))
            }
            other => panic!("{other:?}"),
        }
        assert!(parse_function_spec("gauss(-1)").is_err());
        assert!(parse_function_spec("tent(4)").is_err());
    }

    #[test]
    fn closed_set_specs() {
        let a = parse_closed_set("dist[(-1,0),(1,0)]").unwrap();
        assert_eq!(a.dim(), 2);
        assert!((a.distance(&[0.0, 1.0]) - 2f64.sqrt()).abs() < 1e-12);
        let sq = parse_closed_set("distpoly[(0,0),(1,0),(1,1),(0,1)]").unwrap();
        assert!((sq.distance(&[0.5, 0.4]) - 0.4).abs() < 1e-12);
        assert!(matches!(
            parse_closed_set("tent[(0,0)]"),
            Err(Error::Parse { pos: 0, .. })
        ));
        assert!(parse_closed_set("dist[(0,0)] x").is_err());
    }

    #[test]
    fn grid_spec_reads_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.csv");
        std::fs::write(&p, "1,3,0,2\n0,1,4\n").unwrap();
        let f = parse_function_spec(&format!("grid:{}", p.display())).unwrap();
        assert_eq!(f.eval(&[0.5]), 0.5);
        assert_eq!(f.eval(&[1.5]), 2.5);
    }
}
