//! `sparse-ode`: simulate, fit, benchmark, and compare sparse linear ODE networks.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use sparse_ode::benchmark::{run_benchmark, BenchmarkConfig};
use sparse_ode::io::{fmt_f64, ingest_timeseries, read_edges, write_coefficients, write_timeseries};
use sparse_ode::network::{compare_network, AdjacencyOutput};
use sparse_ode::pipeline::fit_network;
use sparse_ode::simulation::simulate_replicate;
use sparse_ode::{Error, ErrorClass, PipelineConfig, Result, SimConfig, TimeMap, TimeSeries};

#[derive(Parser)]
#[command(name = "sparse-ode", version, about = "Sparse estimation of linear ODE systems from noisy time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one replicate of the block-rotation design.
    Simulate(SimulateArgs),
    /// Estimate the coefficient matrix of a time-series CSV.
    Fit(FitArgs),
    /// Monte Carlo comparison of estimators on simulated data.
    Benchmark(BenchmarkArgs),
    /// Fit a network and compare it against reference edges.
    Net(NetArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Replicate stream within the seed.
    #[arg(long)]
    replicate: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; receives series.csv, truth_A.csv and provenance.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineFlags {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated penalty levels, replacing the automatic grid.
    #[arg(long, value_delimiter = ',')]
    lambdas: Option<Vec<f64>>,
    /// Comma-separated bandwidths, replacing the automatic grid.
    #[arg(long, value_delimiter = ',')]
    bandwidths: Option<Vec<f64>>,
    #[arg(long)]
    scad_a: Option<f64>,
    #[arg(long)]
    grid_size: Option<usize>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[command(flatten)]
    pipeline: PipelineFlags,
    /// Coefficients CSV; provenance.json is written alongside.
    #[arg(long)]
    out: PathBuf,
    /// Report coefficients in the input's time units instead of rescaled units.
    #[arg(long)]
    original_units: bool,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<usize>,
    #[command(flatten)]
    pipeline: PipelineFlags,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct NetArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Reference edges as `source,target` rows.
    #[arg(long = "ref")]
    reference: PathBuf,
    #[command(flatten)]
    pipeline: PipelineFlags,
    #[arg(long)]
    out: PathBuf,
}

/// Contents of the `--config` JSON document.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RunConfig {
    simulation: SimConfig,
    pipeline: PipelineConfig,
    replicate: u64,
    /// Columns of the `net` comparison; defaults to the reference sources.
    regulators: Option<Vec<String>>,
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| Error::Io(e).context(format!("reading {}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Json(e).context(format!("config {}", path.display())))
}

impl PipelineFlags {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = load_config(self.config.as_deref())?;
        let p = &mut cfg.pipeline;
        if let Some(ls) = &self.lambdas {
            p.lambdas = Some(ls.clone());
        }
        if let Some(hs) = &self.bandwidths {
            p.bandwidths = Some(hs.clone());
        }
        if let Some(a) = self.scad_a {
            p.scad_a = a;
        }
        if let Some(g) = self.grid_size {
            p.grid_size = g;
        }
        p.validate()?;
        Ok(cfg)
    }
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => dir.join(name),
        _ => PathBuf::from(name),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::Io(e).context(format!("writing {}", path.display())))
}

fn default_names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("m{j}")).collect()
}

#[derive(Serialize)]
struct SimulationProvenance<'a> {
    tool_version: &'a str,
    simulation: &'a SimConfig,
    replicate: u64,
    euler_step_used: f64,
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let mut cfg = load_config(args.config.as_deref())?;
    let sim = &mut cfg.simulation;
    if let Some(n) = args.n {
        sim.n = n;
    }
    if let Some(s) = args.sigma {
        sim.sigma = s;
    }
    if let Some(s) = args.seed {
        sim.seed = s;
    }
    let replicate = args.replicate.unwrap_or(cfg.replicate);
    let data = simulate_replicate(sim, replicate)?;
    let names = default_names(data.system.p());
    let series = TimeSeries::with_names(data.series.times().to_vec(), data.series.values().clone(), names.clone())?;

    fs::create_dir_all(&args.out).map_err(|e| Error::Io(e).context(format!("creating {}", args.out.display())))?;
    write_timeseries(args.out.join("series.csv"), &series, &TimeMap::IDENTITY)?;
    write_coefficients(args.out.join("truth_A.csv"), &names, &data.system.a)?;
    write_json(
        &args.out.join("provenance.json"),
        &SimulationProvenance {
            tool_version: sparse_ode::VERSION,
            simulation: sim,
            replicate,
            euler_step_used: sim.aligned_step(),
        },
    )
}

fn fit_input(input: &Path, cfg: &RunConfig) -> Result<AdjacencyOutput> {
    let ingested = ingest_timeseries(input)?;
    let fit = fit_network(&ingested.series, &cfg.pipeline)?;
    AdjacencyOutput::new(
        ingested.series.names().to_vec(),
        &fit,
        &cfg.pipeline,
        ingested.time_map,
        None,
        Some(input.display().to_string()),
    )
}

fn fit(args: FitArgs) -> Result<()> {
    let cfg = args.pipeline.load()?;
    let adj = fit_input(&args.input, &cfg)?;
    let coefficients: DMatrix<f64> = if args.original_units {
        &adj.coefficients / adj.provenance.time_map.scale
    } else {
        adj.coefficients.clone()
    };
    write_coefficients(&args.out, &adj.names, &coefficients)?;
    write_json(&sibling(&args.out, "provenance.json"), &adj.provenance)
}

#[derive(Serialize)]
struct BenchmarkProvenance<'a> {
    tool_version: &'a str,
    config: &'a BenchmarkConfig,
    failures: &'a [(u64, String)],
}

fn benchmark(args: BenchmarkArgs) -> Result<()> {
    let run = args.pipeline.load()?;
    let mut cfg = BenchmarkConfig {
        simulation: run.simulation,
        pipeline: run.pipeline,
    };
    let sim = &mut cfg.simulation;
    if let Some(n) = args.n {
        sim.n = n;
    }
    if let Some(s) = args.sigma {
        sim.sigma = s;
    }
    if let Some(s) = args.seed {
        sim.seed = s;
    }
    if let Some(r) = args.replicates {
        sim.replicates = r;
    }
    if cfg.simulation.replicates == 0 {
        return Err(Error::InvalidConfig("replicates must be positive".into()));
    }
    let report = run_benchmark(&cfg)?;
    if report.replicates.is_empty() {
        return Err(Error::AllCandidatesFailed(format!(
            "every replicate failed; first: {}",
            report.failures.first().map(|f| f.1.as_str()).unwrap_or("")
        )));
    }

    let mut text = String::from("estimator,n,replicates,amse_mean,amse_stderr,avg_nonzero\n");
    for s in &report.summaries {
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.estimator.label(),
            cfg.simulation.n,
            report.replicates.len(),
            fmt_f64(s.amse.mean),
            fmt_f64(s.amse.stderr),
            fmt_f64(s.avg_nonzero)
        ));
    }
    fs::write(&args.out, text).map_err(|e| Error::Io(e).context(format!("writing {}", args.out.display())))?;
    write_json(
        &sibling(&args.out, "provenance.json"),
        &BenchmarkProvenance {
            tool_version: sparse_ode::VERSION,
            config: &cfg,
            failures: &report.failures,
        },
    )
}

fn net(args: NetArgs) -> Result<()> {
    let cfg = args.pipeline.load()?;
    let edges = read_edges(&args.reference)?;
    let adj = fit_input(&args.input, &cfg)?;
    let cmp = compare_network(&adj, &edges, cfg.regulators.as_deref())?;
    let table = cmp.render();
    fs::write(&args.out, &table).map_err(|e| Error::Io(e).context(format!("writing {}", args.out.display())))?;
    write_json(&sibling(&args.out, "provenance.json"), &adj.provenance)?;
    let mut stdout = std::io::stdout().lock();
    for line in table.lines().filter(|l| l.starts_with("ppv") || l.starts_with("sensitivity")) {
        writeln!(stdout, "{line}")?;
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Input => 2,
        ErrorClass::Numerical => 3,
        ErrorClass::Config => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Benchmark(a) => benchmark(a),
        Command::Net(a) => net(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
