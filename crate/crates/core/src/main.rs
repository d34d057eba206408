use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use serde::Serialize;
use sha2::{Digest, Sha256};

use doco::config::{parse_sweep, ExperimentConfig, Prepared, RunError};
use doco::metrics::{
    partition_regret_report, summarize, write_partition_csv, write_stack_csv, write_trace_csv, PartitionReport,
    RunSummary,
};
use doco::verify::verify;

/// Run or verify a gossip-learning experiment described by a JSON config.
#[derive(Debug, Parser)]
#[command(name = "doco", version)]
struct Cli {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Number of seeds; overrides the config.
    #[arg(long)]
    seeds: Option<usize>,
    /// Output directory; falls back to the config's `output_dir`, then `doco-runs`.
    #[arg(long, env = "DOCO_OUT")]
    out: Option<PathBuf>,
    /// Check every invariant suite on fresh traces instead of writing artifacts.
    #[arg(long)]
    verify: bool,
    /// Repeat the run for each value: `param=v1,v2,...`.
    #[arg(long)]
    sweep: Option<String>,
}

#[derive(Debug)]
enum Failure {
    Run(RunError),
    Io(String),
    Verify,
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        Failure::Run(e)
    }
}

impl From<doco::config::ConfigError> for Failure {
    fn from(e: doco::config::ConfigError) -> Self {
        Failure::Run(e.into())
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::Run(e) => match e.category() {
                "config" => 2,
                "numeric" => 3,
                _ => 4,
            },
            Failure::Verify => 5,
        }
    }
}

fn io<E: std::fmt::Display>(what: &Path) -> impl FnOnce(E) -> Failure + '_ {
    move |e| Failure::Io(format!("{}: {e}", what.display()))
}

#[derive(Serialize)]
struct Summary {
    config_sha256: String,
    learner: String,
    seeds: usize,
    mean_regrets: Vec<f64>,
    runs: Vec<RunSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    partitions: Vec<PartitionReport>,
}

#[derive(Serialize)]
struct Manifest {
    version: &'static str,
    config_sha256: String,
    master_seed: u64,
    seeds: usize,
    files: BTreeMap<String, String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

struct SeedOutput {
    files: Vec<(String, Vec<u8>)>,
    summary: RunSummary,
    partition: Option<PartitionReport>,
}

fn run_one(config: &ExperimentConfig, prepared: &Prepared, index: usize) -> Result<SeedOutput, RunError> {
    let (scenario, trace) = config.run_seed(prepared, index)?;
    let seed = config.seed(index);
    let mut files = Vec::new();
    let mut buf = Vec::new();
    write_trace_csv(&mut buf, &trace, &scenario, &config.comparators)?;
    files.push((format!("trace_seed{seed}.csv"), buf));
    if !trace.stacks.is_empty() {
        let mut buf = Vec::new();
        write_stack_csv(&mut buf, &trace)?;
        files.push((format!("stacks_seed{seed}.csv"), buf));
    }
    let partition = if config.cells.is_empty() {
        None
    } else {
        let cells: Vec<(usize, Vec<f64>)> =
            config.cells.iter().map(|c| (c.subgraph, config.comparators[c.comparator].clone())).collect();
        let report = partition_regret_report(&trace, &scenario, &prepared.collection, &cells)?;
        let mut buf = Vec::new();
        write_partition_csv(&mut buf, &report)?;
        files.push((format!("partition_seed{seed}.csv"), buf));
        Some(report)
    };
    let summary = summarize(&trace, &scenario, &config.comparators)?;
    Ok(SeedOutput { files, summary, partition })
}

/// Runs every seed concurrently and writes artifacts into `dir`.
fn run_point(config: &ExperimentConfig, dir: &Path) -> Result<Vec<RunSummary>, Failure> {
    let prepared = config.prepare()?;
    let outputs: Vec<Result<SeedOutput, RunError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..config.seeds)
            .map(|i| {
                let prepared = &prepared;
                scope.spawn(move || run_one(config, prepared, i))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("seed thread panicked")).collect()
    });
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let config_json = config.to_json();
    let config_sha256 = sha256_hex(config_json.as_bytes());
    let mut files = BTreeMap::new();
    let mut write = |name: &str, bytes: &[u8]| -> Result<(), Failure> {
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(io(&path))?;
        files.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    };
    write("config.json", config_json.as_bytes())?;
    let mut runs = Vec::new();
    let mut partitions = Vec::new();
    for out in outputs {
        let out = out?;
        for (name, bytes) in &out.files {
            write(name, bytes)?;
        }
        runs.push(out.summary);
        partitions.extend(out.partition);
    }
    let mean_regrets = (0..config.comparators.len())
        .map(|j| runs.iter().map(|r| r.comparators[j].regret).sum::<f64>() / runs.len() as f64)
        .collect();
    let summary = Summary {
        config_sha256: config_sha256.clone(),
        learner: runs.first().map_or_else(String::new, |r| r.meta.learner.clone()),
        seeds: config.seeds,
        mean_regrets,
        runs: runs.clone(),
        partitions,
    };
    let text = serde_json::to_string_pretty(&summary).map_err(|e| Failure::Io(e.to_string()))?;
    write("summary.json", text.as_bytes())?;
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        config_sha256,
        master_seed: config.master_seed,
        seeds: config.seeds,
        files,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::Io(e.to_string()))?;
    let path = dir.join("manifest.json");
    std::fs::write(&path, text).map_err(io(&path))?;
    Ok(runs)
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    let path = &cli.config;
    let text = std::fs::read_to_string(path).map_err(io(path))?;
    let mut config = ExperimentConfig::from_json(&text)?;
    if let Some(n) = cli.seeds {
        config = config.with_param("seeds", &n.to_string())?;
    }
    let points: Vec<(Option<(String, String)>, ExperimentConfig)> = match &cli.sweep {
        None => vec![(None, config.clone())],
        Some(arg) => {
            let (name, values) = parse_sweep(arg)?;
            values
                .into_iter()
                .map(|v| Ok((Some((name.clone(), v.clone())), config.with_param(&name, &v)?)))
                .collect::<Result<_, Failure>>()?
        }
    };
    if cli.verify {
        let mut ok = true;
        for (point, c) in &points {
            if let Some((name, value)) = point {
                println!("# {name} = {value}");
            }
            let report = verify(c)?;
            print!("{}", report.render());
            ok &= report.passed();
        }
        println!("{}", if ok { "verify: all invariants pass" } else { "verify: FAILED" });
        return if ok { Ok(()) } else { Err(Failure::Verify) };
    }
    let out = cli
        .out
        .clone()
        .or_else(|| config.output_dir.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("doco-runs"));
    let mut table = String::from("param,value,seed,learner,comparator,regret,linearized,bound\n");
    for (point, c) in &points {
        let dir = match point {
            Some((name, value)) => out.join(format!("{name}={value}")),
            None => out.clone(),
        };
        let runs = run_point(c, &dir)?;
        for r in &runs {
            for (j, cs) in r.comparators.iter().enumerate() {
                let (name, value) = point.clone().unwrap_or_default();
                writeln!(
                    table,
                    "{name},{value},{},{},{j},{},{},{}",
                    r.scenario.seed,
                    r.meta.learner,
                    cs.regret,
                    cs.linearized,
                    cs.bound.map_or_else(String::new, |b| b.to_string())
                )
                .expect("string write");
            }
        }
        println!("wrote {} run(s) to {}", runs.len(), dir.display());
    }
    if cli.sweep.is_some() {
        let path = out.join("sweep.csv");
        std::fs::write(&path, table).map_err(io(&path))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Run(e) => eprintln!("error [{}]: {e}", e.category()),
                Failure::Io(e) => eprintln!("error [io]: {e}"),
                Failure::Verify => {}
            }
            ExitCode::from(f.code())
        }
    }
}
