use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Mutex;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use contract_learn::config::{write_regret_curve, TraceCsv};
use contract_learn::oracle::{
    brute_force_best_capped, dp_best, BundleSpace, PayoffReport, DEFAULT_ENUMERATION_CAP,
    TIE_TOLERANCE,
};
use contract_learn::sim::{run_sweep, PreparedRun, TraceRow};
use contract_learn::{
    make_grid, BuyerModel, Error, Revenue, SimulationConfig, SweepConfig, TypeDistribution,
};
use serde_json::json;

const EXIT_CONFIG: u8 = 2;
const EXIT_CAP: u8 = 3;
const EXIT_SWEEP_FAILED: u8 = 4;
const EXIT_RUNTIME: u8 = 1;

#[derive(Parser)]
#[command(
    name = "contract-learn",
    version,
    about = "Online contract-bundle learning experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured episodes and write CSV traces plus a JSON summary.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// CSV trace path; the summary goes next to it with a `.json` extension.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's root seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Best bundle on a grid under a known type distribution.
    Oracle {
        #[arg(long, value_enum)]
        model: ModelKind,
        #[arg(long)]
        a: Option<f64>,
        #[arg(long)]
        b: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long, value_enum)]
        dist: DistKind,
        #[arg(long)]
        m: usize,
        /// Grid resolution `n`; contracts are `k / n` for `k = 1..n-1`.
        #[arg(long)]
        grid: usize,
        /// Run exhaustive enumeration (both routes run when neither flag is given).
        #[arg(long)]
        brute: bool,
        /// Run the dynamic program.
        #[arg(long)]
        dp: bool,
        #[arg(long, value_enum)]
        revenue: Option<RevenueKind>,
        /// Largest bundle space brute force will enumerate.
        #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
        cap: u128,
    },
    /// Mean final regret over a list of horizons and its log-log slope.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKind {
    DataPlan,
    Spectrum,
    Recommendation,
}

#[derive(Clone, Copy, ValueEnum)]
enum DistKind {
    Uniform,
    Triangular,
}

#[derive(Clone, Copy, ValueEnum)]
enum RevenueKind {
    Value,
    Unit,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Cap(String),
    SweepFailed,
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. }
            | Error::InvalidParameter { .. }
            | Error::InvalidResolution(_)
            | Error::InvalidDistribution(_)
            | Error::UnsupportedSchedule { .. } => Failure::Config(e.to_string()),
            Error::CapExceeded { .. } => Failure::Cap(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure::Runtime(format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { config, out, seed } => simulate(&config, &out, seed),
        Command::Oracle {
            model,
            a,
            b,
            epsilon,
            dist,
            m,
            grid,
            brute,
            dp,
            revenue,
            cap,
        } => build_model(model, a, b, epsilon).and_then(|model| {
            let dist = match dist {
                DistKind::Uniform => TypeDistribution::uniform(),
                DistKind::Triangular => TypeDistribution::triangular(),
            };
            let revenue = match revenue {
                Some(RevenueKind::Value) => Revenue::Value,
                Some(RevenueKind::Unit) => Revenue::Unit,
                None => model.default_revenue(),
            };
            let (brute, dp) = if brute || dp {
                (brute, dp)
            } else {
                (true, true)
            };
            oracle(&model, &dist, revenue, m, grid, brute, dp, cap)
        }),
        Command::Sweep { config, out } => sweep(&config, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let code = match &f {
                Failure::Config(msg) => {
                    eprintln!("config error: {msg}");
                    EXIT_CONFIG
                }
                Failure::Cap(msg) => {
                    eprintln!("error: {msg}");
                    EXIT_CAP
                }
                Failure::SweepFailed => EXIT_SWEEP_FAILED,
                Failure::Runtime(msg) => {
                    eprintln!("error: {msg}");
                    EXIT_RUNTIME
                }
            };
            ExitCode::from(code)
        }
    }
}

fn build_model(
    kind: ModelKind,
    a: Option<f64>,
    b: Option<f64>,
    eps: Option<f64>,
) -> Result<BuyerModel, Failure> {
    let need = |v: Option<f64>, flag: &str| {
        v.ok_or_else(|| Failure::Config(format!("--{flag} is required for this model")))
    };
    let model = match kind {
        ModelKind::DataPlan => BuyerModel::data_plan(need(a, "a")?, need(b, "b")?),
        ModelKind::Spectrum => BuyerModel::spectrum(need(a, "a")?),
        ModelKind::Recommendation => BuyerModel::recommendation(need(eps, "epsilon")?),
    };
    Ok(model?)
}

fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).expect("json value serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io_failure(path, e))
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let ext = out
        .extension()
        .map(|e| e.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".into());
    out.with_file_name(format!("{stem}{suffix}.{ext}"))
}

/// Per-replication CSV files, each with its own writer.
struct TraceFiles {
    paths: Vec<PathBuf>,
    results: Vec<Mutex<Option<io::Result<()>>>>,
}

impl TraceFiles {
    fn new(paths: Vec<PathBuf>) -> Self {
        let results = paths.iter().map(|_| Mutex::new(None)).collect();
        TraceFiles { paths, results }
    }

    fn sink(&self, i: usize, horizon: u64) -> impl FnMut(&TraceRow) + '_ {
        let slot = &self.results[i];
        let mut csv = File::create(&self.paths[i]).and_then(|f| TraceCsv::new(BufWriter::new(f)));
        let mut written = 0u64;
        move |row: &TraceRow| {
            written += 1;
            let res = match csv.as_mut() {
                Ok(w) => w.row(row),
                Err(_) => Ok(()),
            };
            let mut guard = slot.lock().expect("result slot");
            if let Err(e) = res {
                guard.get_or_insert(Err(e));
            }
            if written == horizon {
                let done = std::mem::replace(&mut csv, Err(io::ErrorKind::Other.into()));
                let finish = done.and_then(|w| w.finish()).and_then(|mut w| w.flush());
                if guard.is_none() {
                    *guard = Some(finish);
                }
            }
        }
    }

    fn check(self) -> Result<(), Failure> {
        for (path, slot) in self.paths.iter().zip(self.results) {
            match slot.into_inner().expect("result slot") {
                Some(Ok(())) => {}
                Some(Err(e)) => return Err(io_failure(path, e)),
                None => {
                    return Err(Failure::Runtime(format!(
                        "{}: trace incomplete",
                        path.display()
                    )))
                }
            }
        }
        Ok(())
    }
}

fn simulate(config: &Path, out: &Path, seed: Option<u64>) -> Result<(), Failure> {
    let started = Instant::now();
    let mut cfg = SimulationConfig::from_json(&read_text(config)?)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let run = PreparedRun::new(&cfg)?;
    let reps = cfg.replications;
    let paths = if reps == 1 {
        vec![out.to_path_buf()]
    } else {
        (0..reps)
            .map(|i| sibling(out, &format!("_rep{i}")))
            .collect()
    };
    let files = TraceFiles::new(paths.clone());
    let horizon = run.horizon();
    let result = run.replicate_with(cfg.seed, reps, |i| files.sink(i, horizon))?;
    files.check()?;
    if reps > 1 {
        let file = File::create(out).map_err(|e| io_failure(out, e))?;
        write_regret_curve(BufWriter::new(file), &result.mean, &result.stderr)
            .map_err(|e| io_failure(out, e))?;
    }

    let summary = json!({
        "config": cfg,
        "n": run.resolution(),
        "benchmark_bundle": run.benchmark().bundle,
        "benchmark_value": run.benchmark().value,
        "benchmark_cost": result.summaries[0].benchmark_cost,
        "final_regret": result.final_mean(),
        "final_regret_stderr": result.stderr.last().copied().unwrap_or(0.0),
        "traces": paths,
        "replications": result.summaries,
        "wall_clock_seconds": started.elapsed().as_secs_f64(),
    });
    write_json(&out.with_extension("json"), &summary)
}

#[allow(clippy::too_many_arguments)]
fn oracle(
    model: &BuyerModel,
    dist: &TypeDistribution,
    revenue: Revenue,
    m: usize,
    n: usize,
    brute: bool,
    dp: bool,
    cap: u128,
) -> Result<(), Failure> {
    let space = BundleSpace::new(make_grid(n)?, m)?;
    let dp_report = dp
        .then(|| dp_best(&space, model, dist, revenue))
        .transpose()?;
    let brute_report = brute
        .then(|| brute_force_best_capped(&space, model, dist, revenue, cap))
        .transpose()?;
    if let (Some(d), Some(b)) = (&dp_report, &brute_report) {
        if d.bundle != b.bundle || (d.value - b.value).abs() > TIE_TOLERANCE {
            return Err(Failure::Runtime(format!(
                "dynamic program {:?} ({}) disagrees with enumeration {:?} ({})",
                d.bundle, d.value, b.bundle, b.value
            )));
        }
    }
    let primary: &PayoffReport = brute_report
        .as_ref()
        .or(dp_report.as_ref())
        .expect("one route runs");
    let out = json!({
        "bundle": primary.bundle,
        "value": primary.value,
        "ties": primary.ties,
        "bundle_count": space.cardinality().to_string(),
        "dp": dp_report,
        "brute": brute_report,
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&out).expect("json value serializes")
    );
    Ok(())
}

fn sweep(config: &Path, out: &Path) -> Result<(), Failure> {
    let started = Instant::now();
    let sweep = SweepConfig::from_json(&read_text(config)?)?;
    let report = run_sweep(&sweep)?;
    let mut value = serde_json::to_value(&report).expect("report serializes");
    value["wall_clock_seconds"] = json!(started.elapsed().as_secs_f64());
    write_json(out, &value)?;
    eprintln!(
        "slope {:.4} (ceiling {}): {}",
        report.fit.slope,
        report.slope_ceiling,
        if report.pass { "pass" } else { "fail" }
    );
    if report.pass {
        Ok(())
    } else {
        Err(Failure::SweepFailed)
    }
}
