use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use transduce_core::bounds::mir_bounds_with;
use transduce_core::mc::{estimate_mir, simulate};
use transduce_core::mir::{mir_discrete_with, mir_quadrature_with, mir_series_with};
use transduce_core::sweep::{self, OutputFormat};
use transduce_core::{
    find_capacity, run_sweep, Quadrature, ReceptorSpec, RowField, SweepConfig,
    TruncatedGaussianSpec,
};

const EXIT_CONFIG: u8 = 2;
const EXIT_POINT_FAILURE: u8 = 3;

#[derive(Parser)]
#[command(
    name = "transduce",
    version,
    about = "Mutual information rate of receptor channels under truncated-Gaussian input"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Receptor JSON for single-point commands, sweep JSON for `sweep`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Write results here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, global = true, default_value_t = 40)]
    series_k: usize,

    #[arg(long, global = true, default_value_t = 1e-3)]
    delta_t: f64,

    /// Initial Gauss-Legendre node count; refinement doubles from here.
    #[arg(long, global = true, default_value_t = 200)]
    quad_nodes: usize,

    /// Monte Carlo path length; exponent form such as `1e6` is accepted.
    #[arg(long, global = true, default_value = "1000000", value_parser = sweep::parse_count)]
    mc_n: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum PointMethod {
    Quadrature,
    Series,
    Discrete,
    Mc,
}

#[derive(Args)]
struct Point {
    #[arg(long, allow_hyphen_values = true)]
    mu_bar: f64,
    #[arg(long)]
    sigma_bar: f64,
    #[arg(long, default_value_t = 1e-5)]
    a: f64,
    #[arg(long, default_value_t = 2.0)]
    b: f64,
}

#[derive(Subcommand)]
enum Command {
    /// MIR at one (mu_bar, sigma_bar) point.
    Mir {
        #[command(flatten)]
        point: Point,
        #[arg(long, value_enum, default_value = "quadrature")]
        method: PointMethod,
    },
    /// Lower and upper MIR bounds at one point.
    Bounds {
        #[command(flatten)]
        point: Point,
        #[arg(long, default_value_t = 2)]
        s: u32,
    },
    /// Raw and central moments of the truncated Gaussian.
    Moments {
        #[command(flatten)]
        point: Point,
        #[arg(long, default_value_t = 4)]
        order: usize,
    },
    /// Simulate a receptor path and estimate the MIR from it.
    Simulate {
        #[command(flatten)]
        point: Point,
        /// Also write the path as tab-separated `step, x, y`.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Evaluate a (mu_bar, sigma_bar) grid described by `--config`.
    Sweep {
        /// Report the grid point maximizing this column.
        #[arg(long)]
        capacity: Option<String>,
    },
}

/// A failure attributable to the configuration or command line.
#[derive(Debug)]
struct ConfigFailure;

impl std::fmt::Display for ConfigFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("invalid configuration")
    }
}

impl std::error::Error for ConfigFailure {}

fn config_err<T>(r: std::result::Result<T, transduce_core::Error>) -> Result<T> {
    r.map_err(|e| anyhow::Error::new(e).context(ConfigFailure))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            let config = e.downcast_ref::<ConfigFailure>().is_some();
            // the marker is the outermost layer; leave it out of the message
            let msg: Vec<String> = e
                .chain()
                .skip(usize::from(config))
                .map(|c| c.to_string())
                .collect();
            eprintln!("error: {}", msg.join(": "));
            ExitCode::from(if config {
                EXIT_CONFIG
            } else {
                EXIT_POINT_FAILURE
            })
        }
    }
}

fn run(cli: &Cli) -> Result<ExitCode> {
    if cli.quad_nodes == 0 {
        return Err(anyhow::anyhow!("--quad-nodes must be at least 1").context(ConfigFailure));
    }
    let quad = Quadrature::with_initial_nodes(cli.quad_nodes);
    match &cli.command {
        Command::Mir { point, method } => {
            let (spec, dist) = load_point(cli, point)?;
            let result = match method {
                PointMethod::Quadrature => mir_quadrature_with(&spec, &dist, &quad)?,
                PointMethod::Series => mir_series_with(&spec, &dist, cli.series_k, &quad)?,
                PointMethod::Discrete => mir_discrete_with(&spec, &dist, cli.delta_t, &quad)?,
                PointMethod::Mc => {
                    let traj =
                        simulate(&spec, &dist, cli.delta_t, cli.mc_n, cli.seed.unwrap_or(0))?;
                    let e = estimate_mir(&traj, &spec, &dist)?;
                    return emit_json(cli, &e).map(|_| ExitCode::SUCCESS);
                }
            };
            emit_json(cli, &result)?;
        }
        Command::Bounds { point, s } => {
            let (spec, dist) = load_point(cli, point)?;
            emit_json(cli, &mir_bounds_with(&spec, &dist, *s, &quad)?)?;
        }
        Command::Moments { point, order } => {
            let (_, dist) = load_point(cli, point)?;
            emit_json(cli, &dist.raw_moments_with(*order, &quad)?)?;
        }
        Command::Simulate { point, dump } => {
            let (spec, dist) = load_point(cli, point)?;
            let traj = simulate(&spec, &dist, cli.delta_t, cli.mc_n, cli.seed.unwrap_or(0))?;
            if let Some(path) = dump {
                let file = File::create(path)
                    .with_context(|| format!("cannot create {}", path.display()))?;
                traj.write_tsv(BufWriter::new(file))
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            #[derive(Serialize)]
            struct Summary {
                n: usize,
                delta_t: f64,
                seed: u64,
                occupancy: Vec<f64>,
                stationary: Vec<f64>,
                mir: transduce_core::McEstimate,
            }
            let summary = Summary {
                n: traj.len(),
                delta_t: traj.delta_t,
                seed: traj.seed,
                occupancy: traj.occupancy(),
                stationary: spec.mean_steady_state(dist.mu())?.probabilities().to_vec(),
                mir: estimate_mir(&traj, &spec, &dist)?,
            };
            emit_json(cli, &summary)?;
        }
        Command::Sweep { capacity } => return run_sweep_command(cli, capacity.as_deref()),
    }
    Ok(ExitCode::SUCCESS)
}

fn load_point(cli: &Cli, point: &Point) -> Result<(ReceptorSpec, TruncatedGaussianSpec)> {
    let spec = match &cli.config {
        Some(path) => config_err(ReceptorSpec::load(path))?,
        None => ReceptorSpec::chr2(1.0, 1.0, 1.0)?,
    };
    let dist = config_err(TruncatedGaussianSpec::new(
        point.mu_bar,
        point.sigma_bar,
        point.a,
        point.b,
    ))?;
    Ok((spec, dist))
}

fn open_output(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn emit_json<T: Serialize>(cli: &Cli, value: &T) -> Result<()> {
    if matches!(cli.format, Some(Format::Csv)) {
        return Err(anyhow::anyhow!("--format csv applies to `sweep` only").context(ConfigFailure));
    }
    let mut out = open_output(cli.out.as_ref())?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn run_sweep_command(cli: &Cli, capacity: Option<&str>) -> Result<ExitCode> {
    let Some(path) = &cli.config else {
        return Err(anyhow::anyhow!("`sweep` needs --config PATH").context(ConfigFailure));
    };
    let mut config: SweepConfig = config_err(SweepConfig::load(path))?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if cli.quad_nodes != 200 {
        config.quadrature = Quadrature::with_initial_nodes(cli.quad_nodes);
    }
    let field = capacity
        .map(|c| c.parse::<RowField>())
        .transpose()
        .map_err(|e| anyhow::anyhow!(e).context(ConfigFailure))?;

    let rows = config_err(run_sweep(&config))?;

    let out_path = cli
        .out
        .clone()
        .or_else(|| config.output.as_ref().map(|o| o.path.clone()));
    let format = match cli.format {
        Some(Format::Csv) => OutputFormat::Csv,
        Some(Format::Json) => OutputFormat::Json,
        None => config.output.as_ref().map(|o| o.format).unwrap_or_default(),
    };
    let out = open_output(out_path.as_ref())?;
    match format {
        OutputFormat::Csv => sweep::write_csv(&rows, out)?,
        OutputFormat::Json => sweep::write_json(&rows, out)?,
    }

    let failed = rows.iter().filter(|r| !r.is_ok()).count();
    if let Some(field) = field {
        match find_capacity(&rows, field) {
            Ok((m, s, v)) => {
                eprintln!("capacity by {field}: {v:e} at mu_bar = {m}, sigma_bar = {s}")
            }
            Err(e) => eprintln!("capacity by {field}: {e}"),
        }
    }
    if failed > 0 {
        eprintln!(
            "{failed} of {} grid points failed; see the status column",
            rows.len()
        );
        return Ok(ExitCode::from(EXIT_POINT_FAILURE));
    }
    if out_path.is_some() {
        eprintln!("{} rows written", rows.len());
    }
    Ok(ExitCode::SUCCESS)
}
