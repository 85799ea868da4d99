//! Experiment driver behind the `illposed` binary: `solve`, `compare`, `report`
//! and `gen`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hybrid::{hybrid_run, HybridOptions, MuRule};
use crate::io::{export_problem, import_problem, save_vector, write_pgm};
use crate::jbd::{HatRule, InnerSolver, JbdOptions, Reorth};
use crate::jbdqr::{jbdqr_run, JbdqrOptions, SolveLog, StopRule, Summary};
use crate::problems::{ProblemConfig, ProblemInstance, ProblemKind, Regularizer};
use crate::reference::{tgsvd_run, tikhonov_run};

/// Environment variable holding the default seed.
pub const SEED_ENV: &str = "ILLPOSED_SEED";
const FALLBACK_SEED: u64 = 1;
const TIKHONOV_GRID: usize = 60;

pub fn default_seed() -> u64 {
    std::env::var(SEED_ENV)
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(FALLBACK_SEED)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Jbdqr,
    HybridGcv,
    HybridWgcv,
    Tgsvd,
    Tikhonov,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Jbdqr => "jbdqr",
            SolverKind::HybridGcv => "hybrid_gcv",
            SolverKind::HybridWgcv => "hybrid_wgcv",
            SolverKind::Tgsvd => "tgsvd",
            SolverKind::Tikhonov => "tikhonov",
        }
    }
}

impl FromStr for SolverKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "jbdqr" => Ok(SolverKind::Jbdqr),
            "hybrid_gcv" | "jbdgcv" => Ok(SolverKind::HybridGcv),
            "hybrid_wgcv" | "jbdwgcv" => Ok(SolverKind::HybridWgcv),
            "tgsvd" => Ok(SolverKind::Tgsvd),
            "tikhonov" => Ok(SolverKind::Tikhonov),
            other => Err(Error::Config(format!("unknown solver `{other}`"))),
        }
    }
}

/// Everything one `solve` run needs. Unset JSON fields take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub problem: String,
    pub n: usize,
    pub eps: f64,
    pub seed: u64,
    /// deriv2 right-hand side, 1..=3.
    pub example: u8,
    /// heat conductivity.
    pub kappa: f64,
    /// blur half-bandwidth and PSF width.
    pub band: usize,
    pub sigma: f64,
    pub regularizer: Regularizer,
    /// A directory written by `gen`; overrides the generator fields.
    pub input: Option<PathBuf>,
    pub solver: SolverKind,
    pub rule: String,
    pub max_k: Option<usize>,
    pub inner_tol: f64,
    pub reorth: Reorth,
    pub bbar: HatRule,
    pub inner: InnerSolver,
    /// `ω` of `hybrid_wgcv`; `None` uses the adaptive weight.
    pub omega: Option<f64>,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let jbd = JbdOptions::default();
        Self {
            problem: "shaw".into(),
            n: 256,
            eps: 1e-3,
            seed: default_seed(),
            example: 2,
            kappa: 1.0,
            band: 16,
            sigma: 2.0,
            regularizer: Regularizer::FirstDiff,
            input: None,
            solver: SolverKind::Jbdqr,
            rule: "oracle-best".into(),
            max_k: None,
            inner_tol: jbd.inner_tol,
            reorth: jbd.reorth,
            bbar: jbd.hat,
            inner: jbd.inner,
            omega: Some(crate::hybrid::DEFAULT_OMEGA),
            output_dir: PathBuf::from("out"),
        }
    }
}

pub fn parse_problem_kind(name: &str, example: u8, kappa: f64, band: usize, sigma: f64) -> Result<ProblemKind> {
    match name.trim().to_ascii_lowercase().as_str() {
        "shaw" => Ok(ProblemKind::Shaw),
        "baart" => Ok(ProblemKind::Baart),
        "heat" => Ok(ProblemKind::Heat { kappa }),
        "deriv2" => Ok(ProblemKind::Deriv2 { example }),
        "blur" => Ok(ProblemKind::Blur { band, sigma }),
        other => Err(Error::Config(format!("unknown problem `{other}`"))),
    }
}

pub fn parse_regularizer(s: &str) -> Result<Regularizer> {
    match s {
        "first-diff" | "first_diff" | "l1" | "L1" => Ok(Regularizer::FirstDiff),
        "identity" | "I" => Ok(Regularizer::Identity),
        other => Err(Error::Config(format!("unknown regularizer `{other}`"))),
    }
}

impl RunConfig {
    pub fn problem_config(&self) -> Result<ProblemConfig> {
        if !(self.eps >= 0.0) {
            return Err(Error::Config(format!("eps must be >= 0, got {}", self.eps)));
        }
        let kind = parse_problem_kind(&self.problem, self.example, self.kappa, self.band, self.sigma)?;
        let mut cfg = ProblemConfig::new(kind, self.n, self.eps, self.seed);
        cfg.regularizer = self.regularizer;
        Ok(cfg)
    }

    pub fn stop_rule(&self) -> Result<StopRule> {
        self.rule.parse()
    }

    pub fn jbd_options(&self) -> JbdOptions {
        JbdOptions {
            inner_tol: self.inner_tol,
            inner_max_iter: None,
            reorth: self.reorth,
            hat: self.bbar,
            inner: self.inner,
        }
    }

    pub fn load_problem(&self) -> Result<ProblemInstance> {
        match &self.input {
            Some(dir) => import_problem(dir),
            None => self.problem_config()?.build(),
        }
    }

    /// Checks every referenced name without building anything.
    pub fn validate(&self) -> Result<()> {
        if self.input.is_none() {
            self.problem_config()?;
        }
        self.stop_rule()?;
        if !(self.inner_tol > 0.0) {
            return Err(Error::Config("inner_tol must be positive".into()));
        }
        if let Some(w) = self.omega {
            if !(w > 0.0 && w <= 1.0) {
                return Err(Error::Config(format!("omega must lie in (0, 1], got {w}")));
            }
        }
        Ok(())
    }
}

/// Outcome of one run, as written to disk.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: Summary,
    pub log: SolveLog,
    pub x: Vec<f64>,
}

/// Solves one configuration in memory.
pub fn execute(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let problem = cfg.load_problem()?;
    let rule = cfg.stop_rule()?;
    let jbd = cfg.jbd_options();
    let (log, x, wall) = match cfg.solver {
        SolverKind::Jbdqr => {
            let opts = JbdqrOptions {
                max_k: cfg.max_k,
                jbd,
                rule,
                ..Default::default()
            };
            let r = jbdqr_run(&problem, &opts)?;
            (r.log, r.x, r.wall_time_s)
        }
        SolverKind::HybridGcv | SolverKind::HybridWgcv => {
            let mu_rule = match (cfg.solver, cfg.omega) {
                (SolverKind::HybridGcv, _) => MuRule::Gcv,
                (_, Some(omega)) => MuRule::Wgcv { omega },
                (_, None) => MuRule::WgcvAdaptive,
            };
            let opts = HybridOptions {
                max_k: cfg.max_k,
                jbd,
                mu_rule,
                rule,
                ..Default::default()
            };
            let r = hybrid_run(&problem, &opts)?;
            (r.log, r.x, r.wall_time_s)
        }
        SolverKind::Tgsvd => {
            let k = cfg.max_k.unwrap_or_else(|| problem.a.cols().min(problem.l.rows()).min(100));
            let r = tgsvd_run(&problem, k, rule, None)?;
            (r.log, r.x, r.wall_time_s)
        }
        SolverKind::Tikhonov => {
            let r = tikhonov_run(&problem, cfg.max_k.unwrap_or(TIKHONOV_GRID), rule, None)?;
            (r.log, r.x, r.wall_time_s)
        }
    };
    let summary = Summary::from_log(&problem, cfg.solver.name(), &log, wall);
    Ok(RunOutput { summary, log, x })
}

/// Solves `cfg` and writes `config.json`, `log.csv`, `summary.json`, `x.txt` and,
/// for image problems, `x.pgm` into its output directory.
pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    let out = execute(cfg)?;
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.json"), serde_json::to_string_pretty(cfg)?)?;
    let mut w = BufWriter::new(fs::File::create(dir.join("log.csv"))?);
    out.log.write_csv(&mut w)?;
    w.flush()?;
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&out.summary)?)?;
    save_vector(&dir.join("x.txt"), &out.x)?;
    let side = parse_problem_kind(&cfg.problem, cfg.example, cfg.kappa, cfg.band, cfg.sigma)
        .ok()
        .filter(|k| k.is_2d() && cfg.input.is_none())
        .map(|_| cfg.n);
    if let Some(side) = side {
        let mut w = BufWriter::new(fs::File::create(dir.join("x.pgm"))?);
        write_pgm(&mut w, &out.x, side)?;
        w.flush()?;
    }
    Ok(out)
}

/// One row of a `report` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub problem: String,
    pub eps: f64,
    pub solver: String,
    pub seed: u64,
    pub rule: String,
    pub chosen_k: Option<usize>,
    pub best_k: Option<usize>,
    pub best_rel_err_l: Option<f64>,
    pub rel_err_l_at_chosen: Option<f64>,
    pub residual_at_chosen: Option<f64>,
    pub wall_time_s: f64,
}

impl From<&Summary> for ReportRow {
    fn from(s: &Summary) -> Self {
        Self {
            problem: s.problem.clone(),
            eps: s.eps,
            solver: s.solver.clone(),
            seed: s.seed,
            rule: s.rule.clone(),
            chosen_k: s.chosen_k,
            best_k: s.best_k,
            best_rel_err_l: s.best_rel_err_l,
            rel_err_l_at_chosen: s.rel_err_l_at_chosen,
            residual_at_chosen: s.residual_at_chosen,
            wall_time_s: s.wall_time_s,
        }
    }
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

fn key_cmp(a: &ReportRow, b: &ReportRow) -> std::cmp::Ordering {
    a.problem
        .cmp(&b.problem)
        .then(a.eps.total_cmp(&b.eps))
        .then(a.solver.cmp(&b.solver))
        .then(a.seed.cmp(&b.seed))
        .then(a.rule.cmp(&b.rule))
}

pub const REPORT_HEADER: &str =
    "problem,eps,solver,seed,rule,chosen_k,best_k,best_rel_err_L,rel_err_L_at_chosen,residual_at_chosen,wall_time_s";

/// Every `summary.json` below `roots`, one row each, sorted by
/// `(problem, eps, solver, seed)`. Unreadable summaries are skipped with a
/// message in the returned warnings.
pub fn collect_rows(roots: &[PathBuf]) -> (Vec<ReportRow>, Vec<String>) {
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for root in roots {
        for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
            let entry = match entry {
                Ok(e) => e,
                Err(e) => {
                    warnings.push(e.to_string());
                    continue;
                }
            };
            if entry.file_name() != "summary.json" {
                continue;
            }
            let parsed = fs::read_to_string(entry.path())
                .map_err(Error::from)
                .and_then(|t| serde_json::from_str::<Summary>(&t).map_err(Error::from));
            match parsed {
                Ok(s) => rows.push(ReportRow::from(&s)),
                Err(e) => warnings.push(format!("skipping {}: {e}", entry.path().display())),
            }
        }
    }
    rows.sort_by(key_cmp);
    (rows, warnings)
}

pub fn write_report<W: Write>(mut w: W, rows: &[ReportRow]) -> Result<()> {
    writeln!(w, "{REPORT_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{:e},{},{},{},{},{},{},{},{},{:.3}",
            r.problem,
            r.eps,
            r.solver,
            r.seed,
            r.rule,
            opt(r.chosen_k),
            opt(r.best_k),
            opt(r.best_rel_err_l),
            opt(r.rel_err_l_at_chosen),
            opt(r.residual_at_chosen),
            r.wall_time_s
        )?;
    }
    Ok(())
}

/// Per `(problem, eps, solver)` statistics across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub problem: String,
    pub eps: f64,
    pub solver: String,
    pub runs: usize,
    pub mean_best_rel_err_l: Option<f64>,
    pub min_best_rel_err_l: Option<f64>,
    pub mean_best_k: Option<f64>,
    pub mean_rel_err_l_at_chosen: Option<f64>,
    pub min_rel_err_l_at_chosen: Option<f64>,
}

fn mean_min(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    (Some(mean), Some(v.iter().copied().fold(f64::INFINITY, f64::min)))
}

pub fn aggregate(rows: &[ReportRow]) -> Vec<Aggregate> {
    let mut groups: BTreeMap<(String, u64, String), Vec<&ReportRow>> = BTreeMap::new();
    for r in rows {
        // eps as ordered bits keeps the map key total; all eps are >= 0
        groups
            .entry((r.problem.clone(), r.eps.to_bits(), r.solver.clone()))
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|((problem, eps, solver), g)| {
            let best: Vec<f64> = g.iter().filter_map(|r| r.best_rel_err_l).collect();
            let chosen: Vec<f64> = g.iter().filter_map(|r| r.rel_err_l_at_chosen).collect();
            let ks: Vec<f64> = g.iter().filter_map(|r| r.best_k.map(|k| k as f64)).collect();
            let (mean_best, min_best) = mean_min(&best);
            let (mean_chosen, min_chosen) = mean_min(&chosen);
            Aggregate {
                problem,
                eps: f64::from_bits(eps),
                solver,
                runs: g.len(),
                mean_best_rel_err_l: mean_best,
                min_best_rel_err_l: min_best,
                mean_best_k: mean_min(&ks).0,
                mean_rel_err_l_at_chosen: mean_chosen,
                min_rel_err_l_at_chosen: min_chosen,
            }
        })
        .collect()
}

pub const AGGREGATE_HEADER: &str = "problem,eps,solver,runs,mean_best_rel_err_L,min_best_rel_err_L,mean_best_k,mean_rel_err_L_at_chosen,min_rel_err_L_at_chosen";

pub fn write_aggregate<W: Write>(mut w: W, aggs: &[Aggregate]) -> Result<()> {
    writeln!(w, "{AGGREGATE_HEADER}")?;
    for a in aggs {
        writeln!(
            w,
            "{},{:e},{},{},{},{},{},{},{}",
            a.problem,
            a.eps,
            a.solver,
            a.runs,
            opt(a.mean_best_rel_err_l),
            opt(a.min_best_rel_err_l),
            opt(a.mean_best_k),
            opt(a.mean_rel_err_l_at_chosen),
            opt(a.min_rel_err_l_at_chosen)
        )?;
    }
    Ok(())
}

/// Runs `configs` on a pool of `jobs` threads, each into its own directory.
pub fn run_many(configs: &[RunConfig], jobs: usize) -> Result<Vec<Result<RunOutput>>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(|| configs.par_iter().map(run).collect()))
}

fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

// ---- command line ----

#[derive(Debug, Parser)]
#[command(name = "illposed", version, about = "General-form regularization by joint bidiagonalization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a problem, solve it and write the run artifacts.
    Solve(SolveArgs),
    /// Run a grid of problems x solvers x seeds and print the best errors.
    Compare(CompareArgs),
    /// Collect summary.json files into one CSV table.
    Report(ReportArgs),
    /// Write a generated problem to disk.
    Gen(GenArgs),
}

/// Problem flags shared by `solve` and `gen`; each overrides the config file.
#[derive(Debug, Clone, Args, Default)]
pub struct ProblemArgs {
    #[arg(long)]
    pub problem: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub eps: Option<f64>,
    /// Defaults to $ILLPOSED_SEED, else 1.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub example: Option<u8>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub band: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// `first-diff` or `identity`.
    #[arg(long = "L", alias = "regularizer")]
    pub regularizer: Option<String>,
}

#[derive(Debug, Clone, Args, Default)]
pub struct SolveArgs {
    /// JSON file with `RunConfig` fields; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Directory written by `gen`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// jbdqr, hybrid_gcv, hybrid_wgcv, tgsvd or tikhonov.
    #[arg(long)]
    pub solver: Option<String>,
    /// lcurve, discrepancy[:tau], oracle-best or max-iter.
    #[arg(long)]
    pub rule: Option<String>,
    #[arg(long)]
    pub max_k: Option<usize>,
    #[arg(long)]
    pub inner_tol: Option<f64>,
    /// none, one-step or full.
    #[arg(long)]
    pub reorth: Option<String>,
    /// gram or recurrence.
    #[arg(long)]
    pub bbar: Option<String>,
    /// lsqr or dense-qr.
    #[arg(long)]
    pub inner: Option<String>,
    /// WGCV weight in (0, 1], or `adaptive`.
    #[arg(long)]
    pub omega: Option<String>,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    /// Comma-separated problem names.
    #[arg(long, value_delimiter = ',', default_value = "shaw,deriv2")]
    pub problems: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "jbdqr,hybrid_gcv")]
    pub solvers: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "1e-3")]
    pub eps: Vec<f64>,
    /// Number of seeds, counted up from the base seed.
    #[arg(long, default_value_t = 3)]
    pub seeds: u64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 256)]
    pub n: usize,
    #[arg(long)]
    pub max_k: Option<usize>,
    #[arg(long, default_value = "oracle-best")]
    pub rule: String,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, short, default_value = "compare-out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Directories searched recursively for summary.json.
    pub dirs: Vec<PathBuf>,
    /// Print per-(problem, eps, solver) mean and min across seeds instead.
    #[arg(long)]
    pub aggregate: bool,
    /// Output file; stdout when absent.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Also write the dense A.txt and L.txt.
    #[arg(long)]
    pub operators: bool,
    #[arg(long, short)]
    pub out: PathBuf,
}

impl ProblemArgs {
    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        if let Some(v) = &self.problem {
            cfg.problem = v.clone();
        }
        if let Some(v) = self.n {
            cfg.n = v;
        }
        if let Some(v) = self.eps {
            cfg.eps = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.example {
            cfg.example = v;
        }
        if let Some(v) = self.kappa {
            cfg.kappa = v;
        }
        if let Some(v) = self.band {
            cfg.band = v;
        }
        if let Some(v) = self.sigma {
            cfg.sigma = v;
        }
        if let Some(v) = &self.regularizer {
            cfg.regularizer = parse_regularizer(v)?;
        }
        Ok(())
    }
}

impl SolveArgs {
    /// The config file (if any) with every given flag applied on top.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => serde_json::from_str(&fs::read_to_string(path)?)?,
            None => RunConfig::default(),
        };
        self.problem.apply(&mut cfg)?;
        if let Some(v) = &self.input {
            cfg.input = Some(v.clone());
        }
        if let Some(v) = &self.solver {
            cfg.solver = v.parse()?;
        }
        if let Some(v) = &self.rule {
            cfg.rule = v.clone();
        }
        if let Some(v) = self.max_k {
            cfg.max_k = Some(v);
        }
        if let Some(v) = self.inner_tol {
            cfg.inner_tol = v;
        }
        if let Some(v) = &self.reorth {
            cfg.reorth = v.parse()?;
        }
        if let Some(v) = &self.bbar {
            cfg.bbar = v.parse()?;
        }
        if let Some(v) = &self.inner {
            cfg.inner = v.parse()?;
        }
        if let Some(v) = &self.omega {
            cfg.omega = match v.as_str() {
                "adaptive" => None,
                s => Some(s.parse().map_err(|_| Error::Config(format!("bad omega `{s}`")))?),
            };
        }
        if let Some(v) = &self.out {
            cfg.output_dir = v.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl CompareArgs {
    pub fn configs(&self) -> Result<Vec<RunConfig>> {
        let base = self.seed.unwrap_or_else(default_seed);
        let mut out = Vec::new();
        for problem in &self.problems {
            for &eps in &self.eps {
                for solver in &self.solvers {
                    let solver: SolverKind = solver.parse()?;
                    for seed in base..base + self.seeds {
                        let cfg = RunConfig {
                            problem: problem.clone(),
                            n: self.n,
                            eps,
                            seed,
                            solver,
                            rule: self.rule.clone(),
                            max_k: self.max_k,
                            output_dir: self
                                .out
                                .join(format!("{problem}_eps{eps:e}_{}_seed{seed}", solver.name())),
                            ..RunConfig::default()
                        };
                        cfg.validate()?;
                        out.push(cfg);
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Median best `rel_err_L` per `(problem, eps, solver)`, in input order.
pub fn compare_table(configs: &[RunConfig], results: &[Result<RunOutput>]) -> Vec<(String, f64, String, Option<f64>)> {
    let mut keys: Vec<(String, f64, String)> = Vec::new();
    let mut vals: Vec<Vec<f64>> = Vec::new();
    for (cfg, res) in configs.iter().zip(results) {
        let key = (cfg.problem.clone(), cfg.eps, cfg.solver.name().to_string());
        let idx = match keys.iter().position(|k| *k == key) {
            Some(i) => i,
            None => {
                keys.push(key);
                vals.push(Vec::new());
                keys.len() - 1
            }
        };
        if let Ok(out) = res {
            vals[idx].extend(out.summary.best_rel_err_l);
        }
    }
    keys.into_iter()
        .zip(vals)
        .map(|((p, e, s), mut v)| (p, e, s, median(&mut v)))
        .collect()
}

/// Runs the parsed command; the returned code is the process exit status.
pub fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Solve(args) => {
            let cfg = args.resolve()?;
            let out = run(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&out.summary)?);
            Ok(0)
        }
        Command::Compare(args) => {
            let configs = args.configs()?;
            let results = run_many(&configs, args.jobs)?;
            let mut failed = 0;
            for (cfg, r) in configs.iter().zip(&results) {
                if let Err(e) = r {
                    eprintln!("{}: {e}", cfg.output_dir.display());
                    failed += 1;
                }
            }
            println!("problem,eps,solver,median_best_rel_err_L");
            for (p, e, s, m) in compare_table(&configs, &results) {
                println!("{p},{e:e},{s},{}", opt(m));
            }
            Ok(if failed > 0 { 1 } else { 0 })
        }
        Command::Report(args) => {
            let (rows, warnings) = collect_rows(&args.dirs);
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            let mut buf = Vec::new();
            if args.aggregate {
                write_aggregate(&mut buf, &aggregate(&rows))?;
            } else {
                write_report(&mut buf, &rows)?;
            }
            match &args.out {
                Some(path) => fs::write(path, buf)?,
                None => std::io::stdout().write_all(&buf)?,
            }
            Ok(0)
        }
        Command::Gen(args) => {
            let mut cfg = RunConfig::default();
            args.problem.apply(&mut cfg)?;
            let problem = cfg.problem_config()?.build()?;
            export_problem(&problem, &args.out, args.operators)?;
            println!("wrote {}", args.out.display());
            Ok(0)
        }
    }
}

/// Entry point for the binary: parses `args`, reports errors on stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e @ Error::Config(_)) | Err(e @ Error::Parse(_)) => {
            eprintln!("error: {e}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Path of the JSON schema every `summary.json` conforms to.
pub fn summary_schema_path() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/schemas/summary.schema.json"))
}
