//! Grid sweeps over `(μ̄, σ̄)` and capacity search.
//!
//! A sweep evaluates any subset of the MIR methods at every grid point in
//! parallel. Failures at a point are recorded in that row's `status` and do
//! not stop the sweep; rows always come back in `μ̄`-major order.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::mir_bounds_with;
use crate::error::{Error, Result};
use crate::mc::{estimate_mir, simulate};
use crate::mir::{mir_discrete_with, mir_quadrature_with, mir_series_with};
use crate::numeric::derive_seed;
use crate::quadrature::Quadrature;
use crate::receptor::ReceptorSpec;
use crate::trunc_gauss::TruncatedGaussianSpec;

pub const DEFAULT_SERIES_ORDER: usize = 40;
pub const DEFAULT_DELTA_T: f64 = 1e-3;
pub const DEFAULT_MC_N: usize = 1_000_000;

/// Slack allowed when auditing `lower ≤ mir_quadrature ≤ upper`.
pub const SANDWICH_SLACK: f64 = 1e-9;

pub const CSV_HEADER: [&str; 14] = [
    "mu_bar",
    "sigma_bar",
    "mu",
    "sigma2",
    "mir_quadrature",
    "mir_series",
    "lb_s2",
    "ub_s2",
    "lb_s4",
    "ub_s4",
    "mir_discrete",
    "mc_value",
    "mc_stderr",
    "status",
];

pub const STATUS_OK: &str = "ok";

/// Evenly spaced values from `min` to `max` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl Grid {
    pub fn new(min: f64, max: f64, steps: usize) -> Self {
        Self { min, max, steps }
    }

    /// A one-point grid.
    pub fn single(value: f64) -> Self {
        Self::new(value, value, 1)
    }

    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.min];
        }
        let last = (self.steps - 1) as f64;
        (0..self.steps)
            .map(|i| {
                if i + 1 == self.steps {
                    self.max
                } else {
                    self.min + (self.max - self.min) * i as f64 / last
                }
            })
            .collect()
    }

    fn validate(&self, field: &str) -> Result<()> {
        let bad = |message: String| Error::Config {
            field: field.to_string(),
            message,
        };
        if !self.min.is_finite() || !self.max.is_finite() {
            return Err(bad("grid bounds must be finite".into()));
        }
        if self.steps == 0 {
            return Err(bad("steps must be at least 1".into()));
        }
        if self.steps == 1 && self.min != self.max {
            return Err(bad("a one-step grid needs min == max".into()));
        }
        if self.steps > 1 && !(self.min < self.max) {
            return Err(bad(format!(
                "min ({}) must be below max ({})",
                self.min, self.max
            )));
        }
        Ok(())
    }
}

/// One evaluation method of a sweep.
///
/// Text form: `quadrature`, `series[:K]`, `bounds[:S]`, `discrete[:DT]`,
/// `mc[:N[@DT]]`. In JSON configs a method may also be a one-key object such
/// as `{"series": 40}` or `{"mc": {"n": 100000, "delta_t": 0.001}}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MethodRepr", into = "String")]
pub enum Method {
    Quadrature,
    Series { order: usize },
    Bounds { s: u32 },
    Discrete { delta_t: f64 },
    MonteCarlo { n: usize, delta_t: f64 },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Quadrature => "quadrature",
            Method::Series { .. } => "series",
            Method::Bounds { .. } => "bounds",
            Method::Discrete { .. } => "discrete",
            Method::MonteCarlo { .. } => "mc",
        }
    }

    /// Row columns this method fills.
    fn columns(&self) -> &'static [&'static str] {
        match self {
            Method::Quadrature => &["mir_quadrature"],
            Method::Series { .. } => &["mir_series"],
            Method::Bounds { s: 2 } => &["lb_s2", "ub_s2"],
            Method::Bounds { .. } => &["lb_s4", "ub_s4"],
            Method::Discrete { .. } => &["mir_discrete"],
            Method::MonteCarlo { .. } => &["mc_value", "mc_stderr"],
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        match *self {
            Method::Series { order } if order < 2 => {
                Err(format!("series order must be >= 2, got {order}"))
            }
            Method::Bounds { s } if s != 2 && s != 4 => {
                Err(format!("bounds order must be 2 or 4, got {s}"))
            }
            Method::Discrete { delta_t } | Method::MonteCarlo { delta_t, .. }
                if !(delta_t > 0.0) =>
            {
                Err(format!("delta_t must be positive, got {delta_t}"))
            }
            Method::MonteCarlo { n, .. } if n < crate::mc::BATCHES => Err(format!(
                "mc needs at least {} steps, got {n}",
                crate::mc::BATCHES
            )),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Quadrature => write!(f, "quadrature"),
            Method::Series { order } => write!(f, "series:{order}"),
            Method::Bounds { s } => write!(f, "bounds:{s}"),
            Method::Discrete { delta_t } => write!(f, "discrete:{delta_t:e}"),
            Method::MonteCarlo { n, delta_t } => write!(f, "mc:{n}@{delta_t:e}"),
        }
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(text: &str) -> std::result::Result<Self, String> {
        let (name, arg) = match text.trim().split_once(':') {
            Some((name, arg)) => (name.trim(), Some(arg.trim())),
            None => (text.trim(), None),
        };
        fn num<T: FromStr>(what: &str, raw: &str) -> std::result::Result<T, String> {
            raw.parse()
                .map_err(|_| format!("cannot parse {what} from `{raw}`"))
        }
        let method = match (name, arg) {
            ("quadrature", None) => Method::Quadrature,
            ("series", None) => Method::Series {
                order: DEFAULT_SERIES_ORDER,
            },
            ("series", Some(k)) => Method::Series {
                order: num("series order", k)?,
            },
            ("bounds", None) => Method::Bounds { s: 2 },
            ("bounds", Some(s)) => Method::Bounds {
                s: num("bounds order", s)?,
            },
            ("discrete", None) => Method::Discrete {
                delta_t: DEFAULT_DELTA_T,
            },
            ("discrete", Some(dt)) => Method::Discrete {
                delta_t: num("delta_t", dt)?,
            },
            ("mc", None) => Method::MonteCarlo {
                n: DEFAULT_MC_N,
                delta_t: DEFAULT_DELTA_T,
            },
            ("mc", Some(arg)) => match arg.split_once('@') {
                Some((n, dt)) => Method::MonteCarlo {
                    n: parse_count(n)?,
                    delta_t: num("delta_t", dt)?,
                },
                None => Method::MonteCarlo {
                    n: parse_count(arg)?,
                    delta_t: DEFAULT_DELTA_T,
                },
            },
            _ => return Err(format!("unknown method `{text}`")),
        };
        method.validate()?;
        Ok(method)
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.to_string()
    }
}

/// Parses a sample count written either as an integer or in exponent form
/// (`1000000`, `1e6`). Non-integral or negative values are rejected.
pub fn parse_count(raw: &str) -> std::result::Result<usize, String> {
    let raw = raw.trim();
    if let Ok(n) = raw.parse::<usize>() {
        return Ok(n);
    }
    match raw.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.fract() == 0.0 && v <= usize::MAX as f64 => Ok(v as usize),
        _ => Err(format!("cannot parse mc length from `{raw}`")),
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum MethodRepr {
    Text(String),
    Keyed(HashMap<String, serde_json::Value>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct McParams {
    n: f64,
    #[serde(default = "default_delta_t")]
    delta_t: f64,
}

fn default_delta_t() -> f64 {
    DEFAULT_DELTA_T
}

impl TryFrom<MethodRepr> for Method {
    type Error = String;

    fn try_from(repr: MethodRepr) -> std::result::Result<Self, String> {
        match repr {
            MethodRepr::Text(text) => text.parse(),
            MethodRepr::Keyed(map) => {
                if map.len() != 1 {
                    return Err("a method object needs exactly one key".into());
                }
                let (name, value) = map.into_iter().next().unwrap();
                let method = match (name.as_str(), &value) {
                    ("mc", serde_json::Value::Object(_)) => {
                        let p: McParams =
                            serde_json::from_value(value).map_err(|e| e.to_string())?;
                        Method::MonteCarlo {
                            n: parse_count(&p.n.to_string())?,
                            delta_t: p.delta_t,
                        }
                    }
                    (_, serde_json::Value::Number(n)) => format!("{name}:{n}").parse()?,
                    _ => return Err(format!("unsupported value for method `{name}`")),
                };
                method.validate()?;
                Ok(method)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(format!(
                "unknown output format `{s}` (expected csv or json)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub path: PathBuf,
    #[serde(default)]
    pub format: OutputFormat,
}

/// A validated sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub receptor: ReceptorSpec,
    pub a: f64,
    pub b: f64,
    pub mu_bar_grid: Grid,
    pub sigma_bar_grid: Grid,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub quadrature: Quadrature,
    pub output: Option<OutputSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum ReceptorRef {
    Path(PathBuf),
    Inline(ReceptorSpec),
}

/// On-disk sweep description. `receptor` is either an inline receptor or a
/// path, resolved relative to the config file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepFile {
    receptor: ReceptorRef,
    a: f64,
    b: f64,
    mu_bar_grid: Grid,
    sigma_bar_grid: Grid,
    methods: Vec<Method>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    quad_nodes: Option<usize>,
    #[serde(default)]
    output: Option<OutputSpec>,
}

impl SweepConfig {
    pub fn new(
        receptor: ReceptorSpec,
        a: f64,
        b: f64,
        mu_bar_grid: Grid,
        sigma_bar_grid: Grid,
        methods: Vec<Method>,
    ) -> Self {
        Self {
            receptor,
            a,
            b,
            mu_bar_grid,
            sigma_bar_grid,
            methods,
            seed: 0,
            quadrature: Quadrature::default(),
            output: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Parses a JSON sweep description; relative receptor and output paths
    /// are taken relative to `base_dir`.
    pub fn from_json_str(text: &str, base_dir: &Path) -> Result<Self> {
        let file: SweepFile = serde_json::from_str(text).map_err(|e| Error::Config {
            field: format!("line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        let receptor = match file.receptor {
            ReceptorRef::Inline(spec) => spec,
            ReceptorRef::Path(p) => ReceptorSpec::load(base_dir.join(p))?,
        };
        let mut quadrature = Quadrature::default();
        if let Some(n) = file.quad_nodes {
            if n == 0 {
                return Err(Error::Config {
                    field: "quad_nodes".into(),
                    message: "must be at least 1".into(),
                });
            }
            quadrature = Quadrature::with_initial_nodes(n);
        }
        let output = file.output.map(|mut o| {
            if o.path.is_relative() {
                o.path = base_dir.join(&o.path);
            }
            o
        });
        let config = Self {
            receptor,
            a: file.a,
            b: file.b,
            mu_bar_grid: file.mu_bar_grid,
            sigma_bar_grid: file.sigma_bar_grid,
            methods: file.methods,
            seed: file.seed,
            quadrature,
            output,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            field: path.display().to_string(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_json_str(&text, base).map_err(|e| match e {
            Error::Config { field, message } => Error::Config {
                field: format!("{}: {field}", path.display()),
                message,
            },
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: String| Error::Config {
            field: field.to_string(),
            message,
        };
        if !(self.a >= 0.0) || !(self.b > self.a) || !self.b.is_finite() {
            return Err(bad(
                "a",
                format!("need 0 <= a < b, got a = {}, b = {}", self.a, self.b),
            ));
        }
        self.mu_bar_grid.validate("mu_bar_grid")?;
        self.sigma_bar_grid.validate("sigma_bar_grid")?;
        if !(self.sigma_bar_grid.min > 0.0) {
            return Err(bad("sigma_bar_grid", "sigma_bar must be positive".into()));
        }
        if self.methods.is_empty() {
            return Err(bad("methods", "select at least one method".into()));
        }
        let mut seen: Vec<&str> = Vec::new();
        for m in &self.methods {
            m.validate().map_err(|msg| bad("methods", msg))?;
            for col in m.columns() {
                if seen.contains(col) {
                    return Err(bad(
                        "methods",
                        format!("more than one method fills `{col}`"),
                    ));
                }
                seen.push(col);
            }
            if matches!(m, Method::Series { .. }) && (self.b > 2.0 || self.a <= 0.0) {
                return Err(bad(
                    "methods",
                    format!(
                        "series needs 0 < a and b <= 2, got a = {}, b = {}",
                        self.a, self.b
                    ),
                ));
            }
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<(f64, f64)> {
        let sigmas = self.sigma_bar_grid.values();
        self.mu_bar_grid
            .values()
            .into_iter()
            .flat_map(|m| sigmas.iter().map(move |&s| (m, s)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub mu_bar: f64,
    pub sigma_bar: f64,
    pub mu: Option<f64>,
    pub sigma2: Option<f64>,
    pub mir_quadrature: Option<f64>,
    pub mir_series: Option<f64>,
    pub lb_s2: Option<f64>,
    pub ub_s2: Option<f64>,
    pub lb_s4: Option<f64>,
    pub ub_s4: Option<f64>,
    pub mir_discrete: Option<f64>,
    pub mc_value: Option<f64>,
    pub mc_stderr: Option<f64>,
    pub status: String,
}

impl SweepRow {
    fn empty(mu_bar: f64, sigma_bar: f64) -> Self {
        Self {
            mu_bar,
            sigma_bar,
            mu: None,
            sigma2: None,
            mir_quadrature: None,
            mir_series: None,
            lb_s2: None,
            ub_s2: None,
            lb_s4: None,
            ub_s4: None,
            mir_discrete: None,
            mc_value: None,
            mc_stderr: None,
            status: STATUS_OK.into(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == STATUS_OK
    }

    pub fn get(&self, field: RowField) -> Option<f64> {
        match field {
            RowField::MirQuadrature => self.mir_quadrature,
            RowField::MirSeries => self.mir_series,
            RowField::LbS2 => self.lb_s2,
            RowField::UbS2 => self.ub_s2,
            RowField::LbS4 => self.lb_s4,
            RowField::UbS4 => self.ub_s4,
            RowField::MirDiscrete => self.mir_discrete,
            RowField::McValue => self.mc_value,
        }
    }

    fn push_issue(&mut self, issue: String) {
        if self.is_ok() {
            self.status = issue;
        } else {
            self.status.push_str("; ");
            self.status.push_str(&issue);
        }
    }

    /// Sandwich violations between the populated bounds and `mir_quadrature`.
    pub fn sandwich_violations(&self) -> Vec<String> {
        let Some(exact) = self.mir_quadrature else {
            return Vec::new();
        };
        [(2, self.lb_s2, self.ub_s2), (4, self.lb_s4, self.ub_s4)]
            .into_iter()
            .filter_map(|(s, lo, hi)| {
                let below = lo.is_some_and(|lo| exact < lo - SANDWICH_SLACK);
                let above = hi.is_some_and(|hi| exact > hi + SANDWICH_SLACK);
                (below || above).then(|| format!("sandwich violated for s={s}"))
            })
            .collect()
    }

    fn cells(&self) -> [String; 14] {
        let opt = |v: Option<f64>| v.map(format_value).unwrap_or_default();
        [
            format_value(self.mu_bar),
            format_value(self.sigma_bar),
            opt(self.mu),
            opt(self.sigma2),
            opt(self.mir_quadrature),
            opt(self.mir_series),
            opt(self.lb_s2),
            opt(self.ub_s2),
            opt(self.lb_s4),
            opt(self.ub_s4),
            opt(self.mir_discrete),
            opt(self.mc_value),
            opt(self.mc_stderr),
            self.status.clone(),
        ]
    }
}

/// Shortest round-trip representation, in exponent form outside
/// `[1e-4, 1e15)`.
fn format_value(v: f64) -> String {
    let mag = v.abs();
    if v != 0.0 && v.is_finite() && !(1e-4..1e15).contains(&mag) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

/// A numeric column usable as a capacity objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowField {
    MirQuadrature,
    MirSeries,
    LbS2,
    UbS2,
    LbS4,
    UbS4,
    MirDiscrete,
    McValue,
}

impl RowField {
    pub fn column(&self) -> &'static str {
        match self {
            RowField::MirQuadrature => "mir_quadrature",
            RowField::MirSeries => "mir_series",
            RowField::LbS2 => "lb_s2",
            RowField::UbS2 => "ub_s2",
            RowField::LbS4 => "lb_s4",
            RowField::UbS4 => "ub_s4",
            RowField::MirDiscrete => "mir_discrete",
            RowField::McValue => "mc_value",
        }
    }
}

impl FromStr for RowField {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        use RowField::*;
        [
            MirQuadrature,
            MirSeries,
            LbS2,
            UbS2,
            LbS4,
            UbS4,
            MirDiscrete,
            McValue,
        ]
        .into_iter()
        .find(|f| f.column() == s)
        .ok_or_else(|| format!("unknown field `{s}`"))
    }
}

impl fmt::Display for RowField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.column())
    }
}

fn evaluate_point(config: &SweepConfig, index: usize, mu_bar: f64, sigma_bar: f64) -> SweepRow {
    let mut row = SweepRow::empty(mu_bar, sigma_bar);
    let dist = match TruncatedGaussianSpec::new(mu_bar, sigma_bar, config.a, config.b) {
        Ok(d) => d,
        Err(e) => {
            row.push_issue(format!("distribution: {e}"));
            return row;
        }
    };
    row.mu = Some(dist.mu());
    row.sigma2 = Some(dist.sigma2());
    let spec = &config.receptor;
    let quad = &config.quadrature;
    for method in &config.methods {
        let outcome =
            match *method {
                Method::Quadrature => mir_quadrature_with(spec, &dist, quad)
                    .map(|r| row.mir_quadrature = Some(r.value)),
                Method::Series { order } => mir_series_with(spec, &dist, order, quad)
                    .map(|r| row.mir_series = Some(r.value)),
                Method::Bounds { s } => mir_bounds_with(spec, &dist, s, quad).map(|b| {
                    if s == 2 {
                        row.lb_s2 = Some(b.lower);
                        row.ub_s2 = Some(b.upper);
                    } else {
                        row.lb_s4 = Some(b.lower);
                        row.ub_s4 = Some(b.upper);
                    }
                }),
                Method::Discrete { delta_t } => mir_discrete_with(spec, &dist, delta_t, quad)
                    .map(|r| row.mir_discrete = Some(r.value)),
                Method::MonteCarlo { n, delta_t } => {
                    let seed = derive_seed(config.seed, index as u64);
                    simulate(spec, &dist, delta_t, n, seed)
                        .and_then(|t| estimate_mir(&t, spec, &dist))
                        .map(|e| {
                            row.mc_value = Some(e.value);
                            row.mc_stderr = Some(e.stderr);
                        })
                }
            };
        if let Err(e) = outcome {
            row.push_issue(format!("{}: {e}", method.name()));
        }
    }
    row
}

/// Evaluates every grid point, `μ̄`-major then `σ̄`, then audits each row for
/// sandwich violations.
pub fn run_sweep(config: &SweepConfig) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let points = config.points();
    let mut rows: Vec<SweepRow> = points
        .par_iter()
        .enumerate()
        .map(|(i, &(m, s))| evaluate_point(config, i, m, s))
        .collect();
    audit(&mut rows);
    Ok(rows)
}

/// Marks rows whose populated bounds fail to enclose `mir_quadrature`.
/// Returns the number of rows marked.
pub fn audit(rows: &mut [SweepRow]) -> usize {
    let mut marked = 0;
    for row in rows.iter_mut() {
        let issues = row.sandwich_violations();
        if !issues.is_empty() {
            marked += 1;
            for issue in issues {
                row.push_issue(issue);
            }
        }
    }
    marked
}

/// Grid point maximizing `field`; ties go to the smallest `μ̄`, then the
/// smallest `σ̄`.
pub fn find_capacity(rows: &[SweepRow], field: RowField) -> Result<(f64, f64, f64)> {
    if rows.is_empty() {
        return Err(Error::EmptySweep);
    }
    let mut best: Option<(f64, f64, f64)> = None;
    for row in rows {
        let value = row
            .get(field)
            .filter(|v| !v.is_nan())
            .ok_or_else(|| Error::MissingField(field.column().into()))?;
        let better = match best {
            None => true,
            Some((bm, bs, bv)) => {
                value > bv
                    || (value == bv
                        && (row.mu_bar < bm || (row.mu_bar == bm && row.sigma_bar < bs)))
            }
        };
        if better {
            best = Some((row.mu_bar, row.sigma_bar, value));
        }
    }
    Ok(best.expect("rows is nonempty"))
}

pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let io_err = |e: csv::Error| Error::Config {
        field: "output".into(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER).map_err(io_err)?;
    for row in rows {
        w.write_record(row.cells()).map_err(io_err)?;
    }
    w.flush().map_err(|e| Error::Config {
        field: "output".into(),
        message: e.to_string(),
    })
}

pub fn to_csv_string(rows: &[SweepRow]) -> String {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf).expect("writing to memory does not fail");
    String::from_utf8(buf).expect("CSV output is UTF-8")
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<SweepRow>> {
    let bad = |field: String, message: String| Error::Config { field, message };
    let mut r = csv::Reader::from_reader(input);
    let header = r
        .headers()
        .map_err(|e| bad("header".into(), e.to_string()))?;
    if header.iter().ne(CSV_HEADER) {
        return Err(bad(
            "header".into(),
            format!("expected `{}`", CSV_HEADER.join(",")),
        ));
    }
    let mut rows = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record.map_err(|e| bad(format!("row {}", i + 1), e.to_string()))?;
        let cell = |k: usize| -> Result<Option<f64>> {
            let raw = &record[k];
            if raw.is_empty() {
                return Ok(None);
            }
            raw.parse().map(Some).map_err(|_| {
                bad(
                    format!("row {} column {}", i + 1, CSV_HEADER[k]),
                    format!("not a number: `{raw}`"),
                )
            })
        };
        let required = |k: usize| -> Result<f64> {
            cell(k)?.ok_or_else(|| {
                bad(
                    format!("row {} column {}", i + 1, CSV_HEADER[k]),
                    "missing value".into(),
                )
            })
        };
        rows.push(SweepRow {
            mu_bar: required(0)?,
            sigma_bar: required(1)?,
            mu: cell(2)?,
            sigma2: cell(3)?,
            mir_quadrature: cell(4)?,
            mir_series: cell(5)?,
            lb_s2: cell(6)?,
            ub_s2: cell(7)?,
            lb_s4: cell(8)?,
            ub_s4: cell(9)?,
            mir_discrete: cell(10)?,
            mc_value: cell(11)?,
            mc_stderr: cell(12)?,
            status: record[13].to_string(),
        });
    }
    Ok(rows)
}

pub fn write_json<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    serde_json::to_writer_pretty(out, rows).map_err(|e| Error::Config {
        field: "output".into(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chr2() -> ReceptorSpec {
        ReceptorSpec::chr2(1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn grid_values_hit_both_ends() {
        let g = Grid::new(0.2, 1.8, 5).values();
        assert_eq!(g.len(), 5);
        assert_eq!(g[0], 0.2);
        assert_eq!(g[4], 1.8);
        assert!((g[2] - 1.0).abs() < 1e-15);
        assert_eq!(Grid::single(0.5).values(), vec![0.5]);
    }

    #[test]
    fn method_text_forms() {
        assert_eq!("quadrature".parse::<Method>().unwrap(), Method::Quadrature);
        assert_eq!(
            "series".parse::<Method>().unwrap(),
            Method::Series { order: 40 }
        );
        assert_eq!(
            "bounds:4".parse::<Method>().unwrap(),
            Method::Bounds { s: 4 }
        );
        assert_eq!(
            "mc:5000@0.01".parse::<Method>().unwrap(),
            Method::MonteCarlo {
                n: 5000,
                delta_t: 0.01
            }
        );
        assert!("bounds:3".parse::<Method>().is_err());
        assert!("simpson".parse::<Method>().is_err());
        assert_eq!(
            "mc:1e4@1e-2".parse::<Method>().unwrap(),
            Method::MonteCarlo {
                n: 10_000,
                delta_t: 1e-2
            }
        );
        assert!("mc:1.5e0".parse::<Method>().is_err());
        assert!("mc:-3".parse::<Method>().is_err());
        for m in [
            Method::Quadrature,
            Method::Series { order: 12 },
            Method::Discrete { delta_t: 2.5e-4 },
            Method::MonteCarlo {
                n: 100,
                delta_t: 1e-3,
            },
        ] {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
    }

    #[test]
    fn method_json_forms() {
        let ms: Vec<Method> =
            serde_json::from_str(r#"["quadrature", {"series": 20}, "bounds:2", {"mc": {"n": 1000, "delta_t": 0.01}}, {"discrete": 0.001}]"#)
                .unwrap();
        assert_eq!(
            ms,
            vec![
                Method::Quadrature,
                Method::Series { order: 20 },
                Method::Bounds { s: 2 },
                Method::MonteCarlo {
                    n: 1000,
                    delta_t: 0.01
                },
                Method::Discrete { delta_t: 0.001 },
            ]
        );
        assert!(serde_json::from_str::<Method>(r#"{"series": 20, "bounds": 2}"#).is_err());
    }

    #[test]
    fn single_point_sandwich() {
        let config = SweepConfig::new(
            chr2(),
            1e-5,
            2.0,
            Grid::single(1.0),
            Grid::single(0.5),
            vec![Method::Quadrature, Method::Bounds { s: 2 }],
        );
        let rows = run_sweep(&config).unwrap();
        assert_eq!(rows.len(), 1);
        let r = &rows[0];
        assert!(r.is_ok(), "{}", r.status);
        assert!(r.lb_s2.unwrap() <= r.mir_quadrature.unwrap());
        assert!(r.mir_quadrature.unwrap() <= r.ub_s2.unwrap());
        assert_eq!(r.mir_series, None);
    }

    #[test]
    fn rows_are_mu_bar_major() {
        let config = SweepConfig::new(
            chr2(),
            1e-5,
            2.0,
            Grid::new(0.5, 1.5, 3),
            Grid::new(0.2, 0.4, 2),
            vec![Method::Quadrature],
        );
        let rows = run_sweep(&config).unwrap();
        let order: Vec<(f64, f64)> = rows.iter().map(|r| (r.mu_bar, r.sigma_bar)).collect();
        assert_eq!(order, config.points());
        assert_eq!(order[1], (0.5, 0.4));
        assert_eq!(order[2], (1.0, 0.2));
    }

    #[test]
    fn point_failures_stay_in_their_row() {
        // Δt = 0.6 is admissible at x = 1 but not at x = 2
        let config = SweepConfig::new(
            chr2(),
            1e-5,
            2.0,
            Grid::single(1.0),
            Grid::single(0.5),
            vec![Method::Quadrature, Method::Discrete { delta_t: 0.6 }],
        );
        let rows = run_sweep(&config).unwrap();
        assert!(rows[0].mir_quadrature.is_some());
        assert!(rows[0].mir_discrete.is_none());
        assert!(
            rows[0].status.starts_with("discrete:"),
            "{}",
            rows[0].status
        );
    }

    #[test]
    fn validation_names_the_field() {
        let mut config = SweepConfig::new(
            chr2(),
            1e-5,
            2.5,
            Grid::single(1.0),
            Grid::single(0.5),
            vec![Method::Series { order: 10 }],
        );
        match config.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "methods"),
            other => panic!("{other:?}"),
        }
        config.b = 2.0;
        config.sigma_bar_grid = Grid::new(0.5, 0.1, 3);
        match config.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "sigma_bar_grid"),
            other => panic!("{other:?}"),
        }
        config.sigma_bar_grid = Grid::single(0.5);
        config.methods = vec![Method::Bounds { s: 2 }, Method::Bounds { s: 2 }];
        assert!(config.validate().is_err());
    }

    #[test]
    fn capacity_tie_break() {
        let mut rows: Vec<SweepRow> = [(1.0, 0.5), (0.5, 0.7), (0.5, 0.3), (1.5, 0.1)]
            .into_iter()
            .map(|(m, s)| {
                let mut r = SweepRow::empty(m, s);
                r.mir_quadrature = Some(2.0);
                r
            })
            .collect();
        assert_eq!(
            find_capacity(&rows, RowField::MirQuadrature).unwrap(),
            (0.5, 0.3, 2.0)
        );
        rows[3].mir_quadrature = Some(2.5);
        assert_eq!(
            find_capacity(&rows, RowField::MirQuadrature).unwrap(),
            (1.5, 0.1, 2.5)
        );
        assert!(matches!(
            find_capacity(&rows, RowField::LbS2),
            Err(Error::MissingField(_))
        ));
        assert!(matches!(
            find_capacity(&[], RowField::LbS2),
            Err(Error::EmptySweep)
        ));
    }

    #[test]
    fn audit_flags_broken_sandwich() {
        let mut row = SweepRow::empty(1.0, 0.5);
        row.mir_quadrature = Some(1.0);
        row.lb_s2 = Some(0.5);
        row.ub_s2 = Some(0.9);
        let mut rows = vec![row];
        assert_eq!(audit(&mut rows), 1);
        assert_eq!(rows[0].status, "sandwich violated for s=2");
    }

    #[test]
    fn csv_layout() {
        let mut row = SweepRow::empty(1.0, 0.5);
        row.mir_quadrature = Some(0.0516);
        row.lb_s2 = Some(1.5e-9);
        let text = to_csv_string(&[row.clone()]);
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER.join(","));
        assert_eq!(lines.next().unwrap(), "1,0.5,,,0.0516,,1.5e-9,,,,,,,ok");
        assert_eq!(read_csv(text.as_bytes()).unwrap(), vec![row]);
    }

    #[test]
    fn config_file_with_relative_receptor() {
        let dir = std::env::temp_dir().join(format!("sweep-config-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let receptor: crate::receptor::ReceptorConfig = chr2().into();
        std::fs::write(
            dir.join("r.json"),
            serde_json::to_string(&receptor).unwrap(),
        )
        .unwrap();
        let text = r#"{
            "receptor": "r.json",
            "a": 1e-5, "b": 2.0,
            "mu_bar_grid": {"min": 0.5, "max": 1.5, "steps": 3},
            "sigma_bar_grid": {"min": 0.5, "max": 0.5, "steps": 1},
            "methods": ["quadrature", {"bounds": 2}],
            "seed": 9
        }"#;
        let c = SweepConfig::from_json_str(text, &dir).unwrap();
        assert_eq!(c.receptor, chr2());
        assert_eq!(c.seed, 9);
        assert_eq!(c.points().len(), 3);
        let err =
            SweepConfig::from_json_str(&text.replace("\"seed\"", "\"sed\""), &dir).unwrap_err();
        assert!(
            matches!(err, Error::Config { ref field, .. } if field.starts_with("line")),
            "{err:?}"
        );
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
