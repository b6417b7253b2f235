//! Configuration-driven runs of the tailbound pipelines with CSV and JSON
//! artifacts.
//!
//! Exit status: 0 success, 1 configuration error, 2 dominance violation in
//! `compare`, 3 numerical failure (including curves with gaps).

pub mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use serde::Serialize;
use tailbound::bounds::{region_entropy, tail_curve, TailCurve};
use tailbound::chaining::EntropyProfile;
use tailbound::phi::conjugate;
use tailbound::simulate::{compare, empirical_tail, ComparisonReport, EmpiricalTail, SimulationPlan, Verdict};

use config::{parse, resolve, ConfigError, Format, Needs, Resolved};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_VIOLATION: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "tailbound", version, about = "Deviation-tail bounds for maximum likelihood estimators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output.directory`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Master seed; overrides `simulation.master_seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Bound curve over the v grid.
    Bound,
    /// Monte Carlo tail over the v grid.
    Simulate,
    /// Bound curve against the Monte Carlo tail.
    Compare,
    /// Entropy profile of the configured region.
    Entropy,
    /// Conjugate table of the configured kernel.
    Conjugate,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Bound => "bound",
            Command::Simulate => "simulate",
            Command::Compare => "compare",
            Command::Entropy => "entropy",
            Command::Conjugate => "conjugate",
        }
    }

    fn needs(self) -> Needs {
        match self {
            Command::Bound => Needs::Bound,
            Command::Simulate => Needs::Simulate,
            Command::Compare => Needs::Compare,
            Command::Entropy => Needs::Entropy,
            Command::Conjugate => Needs::Conjugate,
        }
    }
}

/// A failed run with its exit status.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure { code: EXIT_CONFIG, message: e.0 }
    }
}

fn numeric(module: &str, e: impl std::fmt::Display) -> Failure {
    Failure { code: EXIT_NUMERIC, message: format!("{module}: {e}") }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure { code: EXIT_CONFIG, message: format!("{}: {e}", path.display()) }
}

/// What a successful (or partially successful) run wrote.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub code: i32,
    pub files: Vec<PathBuf>,
    pub summary: String,
}

/// Parses the config file and runs the command.
pub fn run(cli: &Cli) -> Result<Outcome, Failure> {
    let path = cli.config.as_ref().ok_or_else(|| Failure { code: EXIT_CONFIG, message: "--config <path> is required".into() })?;
    let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    let cfg = parse(&text).map_err(|e| Failure { code: EXIT_CONFIG, message: format!("{}: {}", path.display(), e.0) })?;
    let resolved = resolve(cfg, cli.command.needs(), cli.seed)?;
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(&resolved.config.output.directory));
    let workers = cli.workers.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    if workers == 0 {
        return Err(Failure { code: EXIT_CONFIG, message: "--workers must be positive".into() });
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Failure { code: EXIT_NUMERIC, message: format!("thread pool: {e}") })?;
    pool.install(|| execute(cli.command, &resolved, &out, workers))
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    command: &'a str,
    seed: Option<u64>,
    config: &'a config::RunConfig,
    result: T,
}

struct Writer<'a> {
    dir: &'a Path,
    resolved: &'a Resolved,
    command: Command,
    files: Vec<PathBuf>,
}

impl Writer<'_> {
    fn wants(&self, f: Format) -> bool {
        self.resolved.config.output.formats.contains(&f)
    }

    fn put(&mut self, name: &str, body: &str) -> Result<(), Failure> {
        let p = self.dir.join(name);
        fs::write(&p, body).map_err(|e| io_failure(&p, e))?;
        self.files.push(p);
        Ok(())
    }

    fn csv(&mut self, name: &str, body: String) -> Result<(), Failure> {
        if self.wants(Format::Csv) {
            self.put(name, &body)?;
        }
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, result: T) -> Result<(), Failure> {
        if !self.wants(Format::Json) {
            return Ok(());
        }
        let r = Report { command: self.command.name(), seed: self.resolved.seed(), config: &self.resolved.config, result };
        let mut s = serde_json::to_string_pretty(&r).map_err(|e| numeric("json", e))?;
        s.push('\n');
        self.put(name, &s)
    }
}

/// Runs a resolved command and writes its artifacts into `dir`.
pub fn execute(command: Command, resolved: &Resolved, dir: &Path, workers: usize) -> Result<Outcome, Failure> {
    fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    let mut w = Writer { dir, resolved, command, files: Vec::new() };
    let toml = toml::to_string(&resolved.config).map_err(|e| numeric("config", e))?;
    w.put("resolved_config.toml", &toml)?;
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let info = serde_json::json!({ "command": command.name(), "timestamp_unix": stamp, "workers": workers });
    w.put("run_info.json", &format!("{info}\n"))?;

    let (code, summary) = match command {
        Command::Bound => {
            let curve = bound_curve(resolved)?;
            w.csv("tail_curve.csv", curve_csv(&curve))?;
            w.json("tail_curve.json", &curve)?;
            gap_status(&curve, format!("{} points", curve.points.len()))
        }
        Command::Simulate => {
            let tail = simulate(resolved)?;
            w.csv("empirical_tail.csv", tail_csv(&tail))?;
            w.json("empirical_tail.json", &tail)?;
            (EXIT_OK, format!("{} replications", tail.replications))
        }
        Command::Compare => {
            let curve = bound_curve(resolved)?;
            let tail = simulate(resolved)?;
            let report = compare(&curve, &tail).map_err(|e| numeric("simulate", e))?;
            w.csv("tail_curve.csv", curve_csv(&curve))?;
            w.csv("empirical_tail.csv", tail_csv(&tail))?;
            w.json("tail_curve.json", &curve)?;
            w.json("empirical_tail.json", &tail)?;
            w.json("comparison.json", &report)?;
            compare_status(&curve, &report)
        }
        Command::Entropy => {
            let e = resolved.config.entropy.as_ref().expect("validated");
            let profile = region_entropy(&resolved.family, e.v, e.layer, &resolved.options).map_err(|e| numeric("bounds", e))?;
            w.csv("entropy.csv", entropy_csv(&profile))?;
            w.json("entropy.json", &profile)?;
            (EXIT_OK, format!("{} radii", profile.epsilons.len()))
        }
        Command::Conjugate => {
            let c = resolved.config.conjugate.as_ref().expect("validated");
            let phi = c.kernel.phi(&resolved.family, &resolved.options).map_err(|e| numeric("phi", e))?;
            let xs = c.x.values("conjugate.x")?;
            let rows: Vec<(f64, f64)> = xs.iter().map(|&x| (x, conjugate(&phi, x))).collect();
            w.csv("conjugate.csv", conjugate_csv(&rows))?;
            w.json("conjugate.json", serde_json::json!({ "phi": phi, "table": rows }))?;
            (EXIT_OK, format!("{} arguments", rows.len()))
        }
    };
    Ok(Outcome { code, files: w.files, summary })
}

fn bound_curve(r: &Resolved) -> Result<TailCurve, Failure> {
    let method = r.method.expect("validated");
    tail_curve(method, &r.family, &r.grid, &r.options).map_err(|e| numeric("bounds", e))
}

fn simulate(r: &Resolved) -> Result<EmpiricalTail, Failure> {
    let sim = r.config.simulation.as_ref().expect("validated");
    let plan = SimulationPlan {
        family: r.family.clone(),
        n: r.sim_n(),
        replications: sim.replications,
        v_grid: r.grid.clone(),
        master_seed: sim.master_seed.expect("validated"),
        scaled: sim.scaled,
    };
    empirical_tail(&plan).map_err(|e| numeric("simulate", e))
}

fn gap_status(curve: &TailCurve, ok: String) -> (i32, String) {
    let gaps: Vec<String> = curve.points.iter().filter_map(|p| p.error.as_ref().map(|e| format!("v = {}: {e}", p.v))).collect();
    if gaps.is_empty() {
        (EXIT_OK, ok)
    } else {
        (EXIT_NUMERIC, format!("bounds: {} of {} points unavailable; {}", gaps.len(), curve.points.len(), gaps.join("; ")))
    }
}

fn compare_status(curve: &TailCurve, report: &ComparisonReport) -> (i32, String) {
    let (code, msg) = gap_status(curve, String::new());
    if code != EXIT_OK {
        return (code, msg);
    }
    match report.verdict {
        Verdict::Pass => (EXIT_OK, format!("PASS: 0 violations over {} points", report.records.len())),
        Verdict::Fail => (EXIT_VIOLATION, format!("FAIL: {} dominance violations", report.violations)),
    }
}

pub fn curve_csv(curve: &TailCurve) -> String {
    let mut s = String::from("v,bound,method,delta_star,layers,flags\n");
    for p in &curve.points {
        let (bound, delta, layers, flags) = match (&p.bound, &p.detail) {
            (Some(b), Some(d)) => (b.to_string(), d.delta_star.to_string(), d.layers.to_string(), d.flags.join(";")),
            _ => (String::new(), String::new(), String::new(), "gap".into()),
        };
        let _ = writeln!(s, "{},{},{},{},{},{}", p.v, bound, curve.method, delta, layers, flags);
    }
    s
}

pub fn tail_csv(t: &EmpiricalTail) -> String {
    let mut s = String::from("v,estimate,wilson_lo,wilson_hi,count\n");
    for i in 0..t.v_grid.len() {
        let _ = writeln!(s, "{},{},{},{},{}", t.v_grid[i], t.estimates[i], t.wilson_lo[i], t.wilson_hi[i], t.exceed_counts[i]);
    }
    s
}

pub fn entropy_csv(p: &EntropyProfile) -> String {
    let mut s = String::from("epsilon,H\n");
    for (e, h) in p.epsilons.iter().zip(&p.entropies) {
        let _ = writeln!(s, "{e},{h}");
    }
    s
}

pub fn conjugate_csv(rows: &[(f64, f64)]) -> String {
    let mut s = String::from("x,phi_star\n");
    for (x, y) in rows {
        let _ = writeln!(s, "{x},{y}");
    }
    s
}
