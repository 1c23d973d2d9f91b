//! Command-line driver. Every subcommand resolves its flags into an
//! [`ExperimentConfig`], optionally overlays a JSON config file, echoes the
//! resolved config as the first line of its output and writes CSV or JSON.
//!
//! Exit codes: 0 success, 1 failed verification or numerical failure,
//! 2 usage error.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::funcspace::{parse_closed_set, parse_function_spec, BoxDomain, DirectionalFunction};
use crate::linalg;
use crate::maxop::{self, MaximalOptions};
use crate::nonsmooth::{self, GammaOptions, Ladder, ScanOptions, TauOptions, DERIVATIVE_TOL};
use crate::semilinear::SemiLinearSubspace;
use crate::specials::{inf_convolution, medial_scan, Coupling};
use crate::tangency::{self, SigmaOptions, TangencyOptions, TangencyReport, Verdict};
use crate::verify;

/// Fully resolved settings of one run. Round-trips through JSON; fields a
/// command does not use stay `None` and are omitted.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub function: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub set: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub point: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subspace: Option<String>,
    #[serde(rename = "box", skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub res: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shells: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub directions: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub candidates: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius_grid: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decompose: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub suite: Option<String>,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
}

impl ExperimentConfig {
    /// Overlays the keys present in a JSON object onto `self`.
    pub fn overlay(&self, json: &str) -> Result<Self> {
        let patch: serde_json::Value = serde_json::from_str(json)?;
        let serde_json::Value::Object(patch) = patch else {
            return arg("config file must hold a JSON object");
        };
        let mut base = serde_json::to_value(self)?;
        let obj = base
            .as_object_mut()
            .expect("config serialises to an object");
        for (k, v) in patch {
            if k == "command" && v.as_str() != Some(self.command.as_str()) {
                return arg(format!("config file is for `{v}`, not `{}`", self.command));
            }
            obj.insert(k, v);
        }
        Ok(serde_json::from_value(base)?)
    }

    fn need<'a, T>(v: &'a Option<T>, name: &str) -> Result<&'a T> {
        v.as_ref()
            .ok_or_else(|| Error::Argument(format!("missing --{name}")))
    }
}

fn parse_list(text: &str) -> std::result::Result<Vec<f64>, String> {
    text.split(',')
        .map(|s| crate::funcspace::parse_number(s.trim()).map_err(|e| e.to_string()))
        .collect()
}

/// Comma-separated coordinates as one flag value.
#[derive(Clone, Debug)]
struct Coords(Vec<f64>);

fn parse_coords(text: &str) -> std::result::Result<Coords, String> {
    parse_list(text).map(Coords)
}

#[derive(Parser, Debug)]
#[command(
    name = "tangentia",
    version,
    about = "Directional derivatives, maximal functions and tangency diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON file whose keys override the flags
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file (stdout when absent)
    #[arg(long)]
    out: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// M_λ f on a grid: x..,Mf,r_best_count,r_best_..
    MaximalField {
        #[arg(long)]
        function: String,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        lambda: f64,
        #[arg(long = "box", allow_hyphen_values = true)]
        domain: String,
        #[arg(long, default_value_t = 512)]
        res: usize,
        /// Log-spaced radii per evaluation
        #[arg(long, default_value_t = 512)]
        radius_grid: usize,
        #[arg(long)]
        r_max: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// One-sided derivative of f, or of M_λ f when --lambda is given
    Dirderiv {
        #[arg(long)]
        function: String,
        #[arg(long, value_parser = parse_coords, allow_hyphen_values = true)]
        point: Coords,
        #[arg(long, value_parser = parse_coords, allow_hyphen_values = true)]
        theta: Coords,
        #[arg(long, allow_hyphen_values = true)]
        lambda: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// τ over a semi-linear subspace (`full`, `0`, or `V=[..];ray=[..]`)
    Tau {
        #[arg(long)]
        function: String,
        #[arg(long, value_parser = parse_coords, allow_hyphen_values = true)]
        point: Coords,
        #[arg(long, default_value = "full")]
        subspace: String,
        /// Sampled directions (default by span dimension: 2, 360, 1024)
        #[arg(long)]
        directions: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Maximal differentiability degree
    Gamma {
        #[arg(long)]
        function: String,
        #[arg(long, value_parser = parse_coords, allow_hyphen_values = true)]
        point: Coords,
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
        #[arg(long, default_value_t = 64)]
        candidates: usize,
        #[arg(long, default_value_t = 32)]
        b_samples: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Grid scan for non-differentiability: x..,tau,gamma,sf_flag
    SingularSet {
        #[arg(long)]
        function: String,
        #[arg(long = "box", allow_hyphen_values = true)]
        domain: String,
        #[arg(long, default_value_t = 64)]
        res: usize,
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
        #[arg(long, default_value_t = 64)]
        directions: usize,
        /// Skip the γ annotation
        #[arg(long)]
        no_gamma: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Medial-axis nodes of a closed set: x..,distance,multiplicity,straddle
    MedialAxis {
        /// `dist[..]`, `distpoly[..]` or `grid:PATH`
        #[arg(long)]
        set: String,
        #[arg(long = "box", allow_hyphen_values = true)]
        domain: String,
        #[arg(long, default_value_t = 128)]
        res: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Moreau envelope of u on a grid: x..,value,boundary
    Infconv {
        #[arg(long)]
        function: String,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long = "box", allow_hyphen_values = true)]
        domain: String,
        #[arg(long, default_value_t = 101)]
        res: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Tangency reports for a CSV point cloud
    Tangency {
        #[arg(long)]
        points: String,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value_t = 0.2)]
        eta: f64,
        #[arg(long, default_value_t = 8)]
        shells: usize,
        /// Analysis radius (default 32 nearest-neighbour spacings)
        #[arg(long)]
        radius: Option<f64>,
        /// Run the piecewise decomposition instead of per-point reports
        #[arg(long)]
        decompose: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Built-in self-check suites
    Verify {
        /// envelope, tangential, singular, translation, distance, or all
        #[arg(long, default_value = "all")]
        suite: String,
        #[command(flatten)]
        common: Common,
    },
}

fn resolve(cmd: Command) -> (ExperimentConfig, Option<PathBuf>) {
    let mut c = ExperimentConfig::default();
    let common = match cmd {
        Command::MaximalField {
            function,
            lambda,
            domain,
            res,
            radius_grid,
            r_max,
            common,
        } => {
            c.command = "maximal-field".into();
            c.function = Some(function);
            c.lambda = Some(lambda);
            c.domain = Some(domain);
            c.res = Some(res);
            c.radius_grid = Some(radius_grid);
            c.r_max = r_max;
            common
        }
        Command::Dirderiv {
            function,
            point,
            theta,
            lambda,
            common,
        } => {
            c.command = "dirderiv".into();
            c.function = Some(function);
            c.point = Some(point.0);
            c.theta = Some(theta.0);
            c.lambda = lambda;
            common
        }
        Command::Tau {
            function,
            point,
            subspace,
            directions,
            common,
        } => {
            c.command = "tau".into();
            c.function = Some(function);
            c.point = Some(point.0);
            c.subspace = Some(subspace);
            c.directions = directions;
            common
        }
        Command::Gamma {
            function,
            point,
            tol,
            candidates,
            b_samples,
            common,
        } => {
            c.command = "gamma".into();
            c.function = Some(function);
            c.point = Some(point.0);
            c.tol = Some(tol);
            c.candidates = Some(candidates);
            c.b_samples = Some(b_samples);
            common
        }
        Command::SingularSet {
            function,
            domain,
            res,
            tol,
            directions,
            no_gamma,
            common,
        } => {
            c.command = "singular-set".into();
            c.function = Some(function);
            c.domain = Some(domain);
            c.res = Some(res);
            c.tol = Some(tol);
            c.directions = Some(directions);
            c.gamma = Some(!no_gamma);
            common
        }
        Command::MedialAxis {
            set,
            domain,
            res,
            common,
        } => {
            c.command = "medial-axis".into();
            c.set = Some(set);
            c.domain = Some(domain);
            c.res = Some(res);
            common
        }
        Command::Infconv {
            function,
            t,
            domain,
            res,
            common,
        } => {
            c.command = "infconv".into();
            c.function = Some(function);
            c.t = Some(t);
            c.domain = Some(domain);
            c.res = Some(res);
            common
        }
        Command::Tangency {
            points,
            k,
            eta,
            shells,
            radius,
            decompose,
            common,
        } => {
            c.command = "tangency".into();
            c.points = Some(points);
            c.k = Some(k);
            c.eta = Some(eta);
            c.shells = Some(shells);
            c.radius = radius;
            c.decompose = Some(decompose);
            common
        }
        Command::Verify { suite, common } => {
            c.command = "verify".into();
            c.suite = Some(suite);
            common
        }
    };
    c.seed = common.seed;
    c.out = common.out;
    (c, common.config)
}

fn num(v: f64) -> String {
    format!("{v:.11e}")
}

fn open_out(cfg: &ExperimentConfig) -> Result<Box<dyn Write>> {
    Ok(match &cfg.out {
        Some(p) => Box::new(io::BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn csv_out(cfg: &ExperimentConfig, header: Vec<String>, rows: Vec<Vec<String>>) -> Result<()> {
    let mut w = open_out(cfg)?;
    writeln!(w, "# {}", serde_json::to_string(cfg)?)?;
    let mut c = csv::WriterBuilder::new().flexible(true).from_writer(w);
    c.write_record(&header)?;
    for r in rows {
        c.write_record(&r)?;
    }
    c.flush()?;
    Ok(())
}

fn json_out<T: Serialize>(cfg: &ExperimentConfig, body: &T) -> Result<()> {
    #[derive(Serialize)]
    struct Envelope<'a, T> {
        config: &'a ExperimentConfig,
        result: &'a T,
    }
    let mut w = open_out(cfg)?;
    serde_json::to_writer_pretty(
        &mut w,
        &Envelope {
            config: cfg,
            result: body,
        },
    )?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn coord_header(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("x{i}")).collect()
}

fn function(cfg: &ExperimentConfig) -> Result<DirectionalFunction> {
    parse_function_spec(ExperimentConfig::need(&cfg.function, "function")?)
}

fn domain(cfg: &ExperimentConfig, dim: usize) -> Result<BoxDomain> {
    let b = BoxDomain::parse(ExperimentConfig::need(&cfg.domain, "box")?)?;
    if b.dim() != dim {
        return arg(format!("box has dimension {}, expected {dim}", b.dim()));
    }
    Ok(b)
}

fn point(cfg: &ExperimentConfig, dim: usize) -> Result<Vec<f64>> {
    let p = ExperimentConfig::need(&cfg.point, "point")?.clone();
    if p.len() != dim {
        return arg(format!("point has dimension {}, function {dim}", p.len()));
    }
    Ok(p)
}

/// Reads `x1,..,xn` rows; a non-numeric first row is taken as a header and
/// lines starting with `#` are skipped.
pub fn read_points(path: &str) -> Result<Vec<Vec<f64>>> {
    let file = BufReader::new(File::open(path)?);
    let mut out: Vec<Vec<f64>> = Vec::new();
    for (i, line) in file.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        match parse_list(t) {
            Ok(p) => out.push(p),
            Err(_) if out.is_empty() && i < 2 => continue,
            Err(e) => return arg(format!("{path}:{}: {e}", i + 1)),
        }
    }
    let Some(n) = out.first().map(Vec::len) else {
        return arg(format!("{path} holds no points"));
    };
    if out.iter().any(|p| p.len() != n) {
        return arg(format!("{path}: rows have different lengths"));
    }
    Ok(out)
}

/// Executes a resolved configuration; `Ok(false)` means a verification failed.
pub fn execute(cfg: &ExperimentConfig) -> Result<bool> {
    match cfg.command.as_str() {
        "maximal-field" => {
            let f = function(cfg)?;
            let b = domain(cfg, f.dim())?;
            let opts = MaximalOptions {
                grid: cfg.radius_grid.unwrap_or(512),
                r_max: cfg.r_max,
                ..Default::default()
            };
            let field = maxop::maximal_field(
                &f,
                &b,
                cfg.res.unwrap_or(512),
                cfg.lambda.unwrap_or(0.0),
                &opts,
            )?;
            let width = field.iter().map(|r| r.all_radii().len()).max().unwrap_or(0);
            let mut header = coord_header(f.dim());
            header.push("Mf".into());
            header.push("r_best_count".into());
            header.extend((1..=width).map(|i| format!("r_best_{i}")));
            let rows = field
                .iter()
                .map(|r| {
                    let radii = r.all_radii();
                    let mut row: Vec<String> = r.x.iter().map(|v| num(*v)).collect();
                    row.push(num(r.value));
                    row.push(radii.len().to_string());
                    row.extend(radii.iter().map(|r| r.to_string()));
                    row
                })
                .collect();
            csv_out(cfg, header, rows)?;
            Ok(true)
        }
        "dirderiv" => {
            let f = function(cfg)?;
            let x = point(cfg, f.dim())?;
            let theta = linalg::normalized(ExperimentConfig::need(&cfg.theta, "theta")?)
                .ok_or_else(|| Error::Argument("θ must be nonzero".into()))?;
            if theta.len() != f.dim() {
                return arg("θ has the wrong dimension");
            }
            match cfg.lambda {
                Some(l) => json_out(
                    cfg,
                    &maxop::maximal_directional_derivative(
                        &f,
                        &x,
                        &theta,
                        l,
                        &MaximalOptions::default(),
                    )?,
                )?,
                None => json_out(
                    cfg,
                    &nonsmooth::directional_derivative(
                        &f,
                        &x,
                        &theta,
                        &Ladder::default(),
                        DERIVATIVE_TOL,
                    )?,
                )?,
            }
            Ok(true)
        }
        "tau" => {
            let f = function(cfg)?;
            let x = point(cfg, f.dim())?;
            let w = SemiLinearSubspace::parse(cfg.subspace.as_deref().unwrap_or("full"), f.dim())?;
            let opts = TauOptions {
                directions: cfg.directions,
                seed: cfg.seed,
                ..Default::default()
            };
            json_out(cfg, &nonsmooth::tau(&f, &x, &w, &opts)?)?;
            Ok(true)
        }
        "gamma" => {
            let f = function(cfg)?;
            let x = point(cfg, f.dim())?;
            let d = GammaOptions::default();
            let opts = GammaOptions {
                tol: cfg.tol.unwrap_or(d.tol),
                candidates: cfg.candidates.unwrap_or(d.candidates),
                b_samples: cfg.b_samples.unwrap_or(d.b_samples),
                seed: cfg.seed,
                ..d
            };
            json_out(cfg, &nonsmooth::gamma(&f, &x, &opts)?)?;
            Ok(true)
        }
        "singular-set" => {
            let f = function(cfg)?;
            let b = domain(cfg, f.dim())?;
            let d = ScanOptions::default();
            let opts = ScanOptions {
                tol: cfg.tol.unwrap_or(d.tol),
                directions: cfg.directions.unwrap_or(d.directions),
                gamma: cfg.gamma.unwrap_or(true),
                seed: cfg.seed,
                ..d
            };
            let pts = nonsmooth::singular_scan(&f, &b, cfg.res.unwrap_or(64), &opts)?;
            let mut header = coord_header(f.dim());
            header.extend(["tau", "gamma", "sf_flag"].map(String::from));
            let rows = pts
                .iter()
                .map(|p| {
                    let mut row: Vec<String> = p.x.iter().map(|v| num(*v)).collect();
                    row.push(num(p.tau));
                    row.push(p.gamma.map(|g| g.to_string()).unwrap_or_default());
                    row.push(u8::from(p.sf).to_string());
                    row
                })
                .collect();
            csv_out(cfg, header, rows)?;
            Ok(true)
        }
        "medial-axis" => {
            let a = parse_closed_set(ExperimentConfig::need(&cfg.set, "set")?)?;
            let b = domain(cfg, a.dim())?;
            let scan = medial_scan(&a, &b, cfg.res.unwrap_or(128))?;
            let mut header = coord_header(a.dim());
            header.extend(["distance", "multiplicity", "straddle"].map(String::from));
            let rows = scan
                .iter()
                .filter(|m| m.multiplicity >= 2 || m.straddle)
                .map(|m| {
                    let mut row: Vec<String> = m.x.iter().map(|v| num(*v)).collect();
                    row.push(num(m.distance));
                    row.push(m.multiplicity.to_string());
                    row.push(u8::from(m.straddle).to_string());
                    row
                })
                .collect();
            csv_out(cfg, header, rows)?;
            Ok(true)
        }
        "infconv" => {
            let u = function(cfg)?;
            let n = u.dim();
            let b = domain(cfg, n)?;
            let t = cfg.t.unwrap_or(1.0);
            if !(t > 0.0) {
                return arg("t must be positive");
            }
            let half = match u.lipschitz() {
                Some(k) => (2.0 * k * t).max(1e-3),
                None => 4.0 * t.max(1.0),
            };
            let ybox = BoxDomain::new(
                b.lo.iter().map(|v| v - half).collect(),
                b.hi.iter().map(|v| v + half).collect(),
            )?;
            let yres = [801, 161, 41][n - 1];
            let coupling = Coupling::quadratic(t);
            use rayon::prelude::*;
            let nodes = b.grid_nodes(cfg.res.unwrap_or(101));
            let vals: Vec<_> = nodes
                .par_iter()
                .map(|x| inf_convolution(&u, &coupling, x, &ybox, yres, false))
                .collect::<Result<_>>()?;
            let mut header = coord_header(n);
            header.extend(["value", "boundary"].map(String::from));
            let rows = nodes
                .iter()
                .zip(&vals)
                .map(|(x, r)| {
                    let mut row: Vec<String> = x.iter().map(|v| num(*v)).collect();
                    row.push(num(r.value));
                    row.push(u8::from(r.boundary).to_string());
                    row
                })
                .collect();
            csv_out(cfg, header, rows)?;
            Ok(true)
        }
        "tangency" => {
            let pts = read_points(ExperimentConfig::need(&cfg.points, "points")?)?;
            let k = cfg.k.unwrap_or(1);
            let d = TangencyOptions::default();
            let eta = cfg.eta.unwrap_or(d.eta);
            if cfg.decompose.unwrap_or(false) {
                let opts = SigmaOptions {
                    eta,
                    ..Default::default()
                };
                json_out(cfg, &tangency::sigma_decompose(&pts, k, &opts)?)?;
                return Ok(true);
            }
            let radius = match cfg.radius {
                Some(r) => r,
                None => 32.0 * tangency::median_spacing(&pts),
            };
            let opts = TangencyOptions {
                eta,
                shells: cfg.shells.unwrap_or(d.shells),
                radius: Some(radius),
                ..d
            };
            let reports: Vec<TangencyReport> = pts
                .iter()
                .map(
                    |x| match tangency::fit_tangent(&pts, x, k, Some(0.5 * radius)) {
                        Ok(v) => tangency::is_k_tangential(&pts, x, &v, &opts),
                        Err(Error::RankDeficient { .. }) => Ok(TangencyReport {
                            x: x.clone(),
                            subspace: Vec::new(),
                            shells: Vec::new(),
                            empty_shells: Vec::new(),
                            verdict: Verdict::Inconclusive,
                            eta,
                            radius,
                            rule: "shell-trend",
                        }),
                        Err(e) => Err(e),
                    },
                )
                .collect::<Result<_>>()?;
            json_out(cfg, &reports)?;
            Ok(true)
        }
        "verify" => {
            let suite = cfg.suite.as_deref().unwrap_or("all");
            let names: Vec<&str> = if suite == "all" {
                verify::SUITES.to_vec()
            } else {
                vec![suite]
            };
            let reports: Vec<verify::SuiteReport> = names
                .iter()
                .map(|s| verify::run_suite(s, cfg.seed))
                .collect::<Result<_>>()?;
            for r in &reports {
                log::info!(
                    "suite {}: {}",
                    r.suite,
                    if r.pass { "PASS" } else { "FAIL" }
                );
            }
            json_out(cfg, &reports)?;
            Ok(reports.iter().all(|r| r.pass))
        }
        other => arg(format!("unknown command `{other}`")),
    }
}

fn configure_threads() {
    if let Ok(v) = std::env::var("TANGENTIA_THREADS") {
        match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => {
                if rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .is_err()
                {
                    log::debug!("thread pool already initialised");
                }
            }
            _ => log::warn!("ignoring TANGENTIA_THREADS={v}"),
        }
    }
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    configure_threads();
    let (flags, config_path) = resolve(cli.command);
    let cfg = match config_path {
        None => Ok(flags),
        Some(p) => std::fs::read_to_string(&p)
            .map_err(Error::from)
            .and_then(|text| flags.overlay(&text)),
    };
    let outcome = cfg.and_then(|c| execute(&c));
    match outcome {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(
            e @ (Error::Argument(_)
            | Error::Parse { .. }
            | Error::UnknownBuiltin { .. }
            | Error::Json(_)),
        ) => {
            eprintln!("error: {e}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
