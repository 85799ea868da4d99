//! JBDQR: iterate the joint bidiagonalization, solve the projected problem
//! `min ‖B_k y − β₁e₁‖` at every step, log `‖Ax_k − b‖` and `‖Lx_k‖` from the
//! projected quantities, choose `k` by a stopping rule and recover `x_k` from
//! `(A; L) x_k = Ṽ_k y_k`.

use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::jbd::{InnerSolver, JbdOptions, JbdState, StepOutcome};
use crate::linop::LinearMap;
use crate::lsqr::lsqr_solve;
use crate::param_choice::{discrepancy_pick, lcurve_corner, LCurvePoints};
use crate::problems::ProblemInstance;
use crate::projected_ls::{seminorm, solve_projected, QrUpdateState};
use crate::vecops::{norm2, sub};

/// Default `τ` of the discrepancy principle.
pub const DEFAULT_TAU: f64 = 1.1;

/// Iteration cap used when no `max_k` is given, further limited by `min(n, p)`.
pub const DEFAULT_MAX_K: usize = 600;

/// A projected residual below `RESIDUAL_FLOOR · ‖b‖` ends the run as converged.
pub const RESIDUAL_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StopRule {
    Lcurve,
    Discrepancy { tau: f64 },
    OracleBest,
    MaxIter,
}

impl StopRule {
    pub fn name(&self) -> &'static str {
        match self {
            StopRule::Lcurve => "lcurve",
            StopRule::Discrepancy { .. } => "discrepancy",
            StopRule::OracleBest => "oracle_best",
            StopRule::MaxIter => "max_iter",
        }
    }
}

impl std::fmt::Display for StopRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StopRule::Discrepancy { tau } => write!(f, "discrepancy({tau})"),
            other => f.write_str(other.name()),
        }
    }
}

/// Accepts `lcurve`, `oracle-best`, `max-iter`, `discrepancy` and `discrepancy:<tau>`.
impl FromStr for StopRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase().replace('_', "-");
        if let Some(t) = s.strip_prefix("discrepancy") {
            let t = t.trim_start_matches([':', '=', '(']).trim_end_matches(')');
            let tau = if t.is_empty() {
                DEFAULT_TAU
            } else {
                t.parse().map_err(|_| Error::Parse(format!("bad tau '{t}'")))?
            };
            if !(tau > 1.0) {
                return Err(Error::Config(format!("discrepancy tau must exceed 1, got {tau}")));
            }
            return Ok(StopRule::Discrepancy { tau });
        }
        match s.as_str() {
            "lcurve" | "l-curve" => Ok(StopRule::Lcurve),
            "oracle-best" | "oracle" => Ok(StopRule::OracleBest),
            "max-iter" | "maxiter" => Ok(StopRule::MaxIter),
            other => Err(Error::Parse(format!("unknown stopping rule '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct JbdqrOptions {
    pub max_k: Option<usize>,
    pub jbd: JbdOptions,
    pub rule: StopRule,
    /// Overrides the noise norm of the instance for the discrepancy rule.
    pub noise_norm: Option<f64>,
    /// Tolerance of the final recovery solve; `None` reuses the inner tolerance.
    pub recover_tol: Option<f64>,
}

impl Default for JbdqrOptions {
    fn default() -> Self {
        Self {
            max_k: None,
            jbd: JbdOptions::default(),
            rule: StopRule::Lcurve,
            noise_norm: None,
            recover_tol: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub k: usize,
    pub residual_norm: f64,
    pub seminorm: f64,
    #[serde(rename = "rel_err_L")]
    pub rel_err_l: Option<f64>,
    pub rel_err_plain: Option<f64>,
    /// Projected Tikhonov parameter (hybrid runs only).
    pub mu_k: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveLog {
    pub entries: Vec<LogEntry>,
    pub chosen_k: Option<usize>,
    pub chosen_rule: StopRule,
    pub breakdown_at: Option<usize>,
    /// The projected residual fell below `RESIDUAL_FLOOR · ‖b‖`.
    pub converged: bool,
    pub note: Option<String>,
}

impl SolveLog {
    pub(crate) fn new(rule: StopRule) -> Self {
        Self {
            entries: Vec::new(),
            chosen_k: None,
            chosen_rule: rule,
            breakdown_at: None,
            converged: false,
            note: None,
        }
    }

    pub fn entry(&self, k: usize) -> Option<&LogEntry> {
        k.checked_sub(1).and_then(|i| self.entries.get(i))
    }

    pub fn residuals(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.residual_norm).collect()
    }

    pub fn seminorms(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.seminorm).collect()
    }

    /// Error used for ranking iterates: `rel_err_L` when defined, else the plain error.
    fn score(e: &LogEntry) -> Option<f64> {
        e.rel_err_l.or(e.rel_err_plain)
    }

    /// `(k, error)` of the most accurate logged iterate, first one on ties.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.entries
            .iter()
            .filter_map(|e| Self::score(e).map(|s| (e.k, s)))
            .fold(None, |acc: Option<(usize, f64)>, (k, s)| match acc {
                Some((_, bs)) if bs <= s => acc,
                _ => Some((k, s)),
            })
    }

    /// CSV with header `k,residual_norm,seminorm,rel_err_L,rel_err_plain`, plus
    /// `mu_k` when any entry carries one.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let with_mu = self.entries.iter().any(|e| e.mu_k.is_some());
        write!(w, "k,residual_norm,seminorm,rel_err_L,rel_err_plain")?;
        if with_mu {
            write!(w, ",mu_k")?;
        }
        writeln!(w)?;
        let cell = |v: Option<f64>| v.map(|x| format!("{x:.17e}")).unwrap_or_default();
        for e in &self.entries {
            write!(
                w,
                "{},{:.17e},{:.17e},{},{}",
                e.k,
                e.residual_norm,
                e.seminorm,
                cell(e.rel_err_l),
                cell(e.rel_err_plain)
            )?;
            if with_mu {
                write!(w, ",{}", cell(e.mu_k))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Parses the output of [`SolveLog::write_csv`]; rule and flags are not stored there.
    pub fn read_csv(text: &str) -> Result<Vec<LogEntry>> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty log".into()))?;
        let with_mu = header.split(',').count() == 6;
        let opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| Error::Parse(format!("bad number '{s}'")))
            }
        };
        lines
            .filter(|l| !l.trim().is_empty())
            .map(|line| {
                let f: Vec<&str> = line.split(',').collect();
                if f.len() != if with_mu { 6 } else { 5 } {
                    return Err(Error::Parse(format!("bad log row '{line}'")));
                }
                Ok(LogEntry {
                    k: f[0].parse().map_err(|_| Error::Parse(format!("bad k '{}'", f[0])))?,
                    residual_norm: opt(f[1])?.unwrap_or(f64::NAN),
                    seminorm: opt(f[2])?.unwrap_or(f64::NAN),
                    rel_err_l: opt(f[3])?,
                    rel_err_plain: opt(f[4])?,
                    mu_k: if with_mu { opt(f[5])? } else { None },
                })
            })
            .collect()
    }
}

/// Relative errors of a reconstruction against the truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelErrors {
    /// `‖L(x − x_true)‖ / ‖L x_true‖`; `None` when `L x_true = 0`.
    pub rel_err_l: Option<f64>,
    /// `‖x − x_true‖ / ‖x_true‖`.
    pub rel_err_plain: f64,
}

pub fn relative_errors(l: &LinearMap, x: &[f64], x_true: &[f64]) -> Result<RelErrors> {
    check_len("relative errors: x", x_true.len(), x.len())?;
    let lt = l.apply(x_true)?;
    let d = sub(x, x_true);
    let ld = l.apply(&d)?;
    let lt_norm = norm2(&lt);
    let xt_norm = norm2(x_true);
    if xt_norm == 0.0 {
        return Err(Error::InvalidArgument("x_true is zero".into()));
    }
    Ok(RelErrors {
        rel_err_l: (lt_norm > 0.0).then(|| norm2(&ld) / lt_norm),
        rel_err_plain: norm2(&d) / xt_norm,
    })
}

/// Outcome of the final solve `(A; L) x = Ṽ_k y`.
#[derive(Debug, Clone)]
pub struct Recovered {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Solve `(A; L) x_k = Ṽ_k y_k` by LSQR.
pub fn recover_solution(state: &JbdState, y: &[f64], tol: f64) -> Result<Recovered> {
    if y.iter().all(|&v| v == 0.0) {
        return Ok(Recovered {
            x: vec![0.0; state.n()],
            iterations: 0,
            converged: true,
        });
    }
    let rhs = state.vtil_times(y)?;
    let stacked = state.stacked();
    let rep = lsqr_solve(stacked, &rhs, tol, 2 * (stacked.rows() + stacked.cols()))?;
    Ok(Recovered {
        x: rep.solution,
        iterations: rep.iterations,
        converged: rep.converged,
    })
}

/// JBD state plus the running QR of `B_k`, advanced one step at a time.
#[derive(Debug, Clone)]
pub struct JbdqrIter {
    state: JbdState,
    qr: QrUpdateState,
    norm_b: f64,
}

/// Per-step projected quantities.
#[derive(Debug, Clone)]
pub struct StepData {
    pub k: usize,
    pub y: Vec<f64>,
    pub residual_norm: f64,
    pub seminorm: f64,
    pub breakdown: bool,
}

impl JbdqrIter {
    pub fn new(a: LinearMap, l: LinearMap, b: &[f64], opts: JbdOptions) -> Result<Self> {
        let state = JbdState::init(a, l, b, opts)?;
        let qr = QrUpdateState::new(state.beta1())?;
        Ok(Self {
            state,
            qr,
            norm_b: norm2(b),
        })
    }

    pub fn state(&self) -> &JbdState {
        &self.state
    }

    pub fn into_state(self) -> JbdState {
        self.state
    }

    pub fn norm_b(&self) -> f64 {
        self.norm_b
    }

    pub fn can_step(&self) -> bool {
        self.state.breakdown().is_none() && self.state.k() < self.state.n().min(self.state.p())
    }

    /// One JBD step followed by the projected solve; `None` when no step is possible.
    pub fn advance(&mut self) -> Result<Option<StepData>> {
        if !self.can_step() {
            return Ok(None);
        }
        let outcome = self.state.step()?;
        let k = self.state.k();
        self.qr.qr_push(self.state.alpha()[k - 1], self.state.beta()[k])?;
        let y = self.qr.solve_y()?;
        let bbar = self.state.bidiag_bbar_at(k)?;
        Ok(Some(StepData {
            k,
            residual_norm: self.qr.residual_norm(),
            seminorm: seminorm(&bbar, &y),
            y,
            breakdown: matches!(outcome, StepOutcome::Breakdown(_)),
        }))
    }

    /// `x_k = Z_k y_k` from the tracked `Z`, used for per-step error logging.
    pub fn iterate(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.state.z_times(y)
    }
}

/// Result of a full run.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub log: SolveLog,
    pub x: Vec<f64>,
    /// `y_{k*}` of the returned solution.
    pub y: Vec<f64>,
    pub recovery_converged: bool,
    pub wall_time_s: f64,
    pub state: JbdState,
}

/// Relative accuracy of the projections behind `Ṽ_k`; the projected
/// residual is only meaningful while it exceeds `drift · ‖y_k‖`.
pub(crate) fn projection_drift(opts: &JbdOptions) -> f64 {
    match opts.inner {
        InnerSolver::Lsqr => opts.inner_tol,
        InnerSolver::DenseQr => f64::EPSILON,
    }
}

pub(crate) fn resolve_max_k(requested: Option<usize>, n: usize, p: usize) -> Result<usize> {
    let limit = n.min(p);
    match requested {
        Some(0) => Err(Error::Config("max_k must be positive".into())),
        Some(k) if k > limit => Err(Error::Config(format!("max_k = {k} exceeds min(n, p) = {limit}"))),
        Some(k) => Ok(k),
        None => Ok(limit.min(DEFAULT_MAX_K)),
    }
}

pub(crate) fn check_rule(problem: &ProblemInstance, rule: StopRule, noise_norm: Option<f64>) -> Result<Option<f64>> {
    match rule {
        StopRule::Discrepancy { tau } => {
            if !(tau > 1.0) {
                return Err(Error::Config(format!("discrepancy tau must exceed 1, got {tau}")));
            }
            let e = noise_norm.or_else(|| problem.noise_norm()).ok_or_else(|| {
                Error::Config("discrepancy rule needs the noise norm ‖e‖".into())
            })?;
            if !(e > 0.0) {
                return Err(Error::Config("discrepancy rule needs a positive noise norm".into()));
            }
            Ok(Some(e))
        }
        StopRule::OracleBest if problem.x_true.is_none() => {
            Err(Error::Config("oracle_best rule needs x_true".into()))
        }
        _ => Ok(None),
    }
}

/// Pick `k` after the loop for the post hoc rules.
///
/// The L-curve only sees the first `lcurve_len` entries (all when `None`).
pub(crate) fn choose_post_hoc(log: &mut SolveLog, rule: StopRule, lcurve_len: Option<usize>) {
    let last = log.entries.last().map(|e| e.k);
    match rule {
        StopRule::Lcurve => {
            let m = lcurve_len.unwrap_or(log.entries.len()).min(log.entries.len());
            let pts = LCurvePoints::from_norms(&log.residuals()[..m], &log.seminorms()[..m]);
            match pts.and_then(|p| lcurve_corner(&p)) {
                Ok(k) => log.chosen_k = Some(k),
                Err(e) => log.note = Some(e.to_string()),
            }
        }
        StopRule::OracleBest => log.chosen_k = log.best().map(|(k, _)| k),
        StopRule::MaxIter => log.chosen_k = last,
        StopRule::Discrepancy { .. } => {
            if log.chosen_k.is_none() {
                log.note = Some("discrepancy bound not reached".into());
            }
        }
    }
}

pub fn jbdqr_run(problem: &ProblemInstance, opts: &JbdqrOptions) -> Result<SolveResult> {
    let start = Instant::now();
    let max_k = resolve_max_k(opts.max_k, problem.a.cols(), problem.l.rows())?;
    let noise = check_rule(problem, opts.rule, opts.noise_norm)?;
    let mut it = JbdqrIter::new(problem.a.clone(), problem.l.clone(), &problem.b, opts.jbd)?;
    let mut log = SolveLog::new(opts.rule);
    let mut last_y = Vec::new();
    let drift = projection_drift(&opts.jbd);
    let mut reliable = None;

    while log.entries.len() < max_k {
        let step = match it.advance() {
            Ok(Some(s)) => s,
            Ok(None) => break,
            Err(Error::RankDeficient(_)) => {
                log.breakdown_at = Some(it.state().k());
                log.note = Some("projected R_k is singular".into());
                break;
            }
            Err(e) => return Err(e),
        };
        let errs = match &problem.x_true {
            Some(xt) => Some(relative_errors(&problem.l, &it.iterate(&step.y)?, xt)?),
            None => None,
        };
        log.entries.push(LogEntry {
            k: step.k,
            residual_norm: step.residual_norm,
            seminorm: step.seminorm,
            rel_err_l: errs.and_then(|e| e.rel_err_l),
            rel_err_plain: errs.map(|e| e.rel_err_plain),
            mu_k: None,
        });
        if reliable.is_none() && drift * norm2(&step.y) > step.residual_norm {
            reliable = Some(step.k - 1);
        }
        last_y = step.y;
        if step.breakdown {
            log.breakdown_at = Some(step.k);
            break;
        }
        if let (StopRule::Discrepancy { tau }, Some(e)) = (opts.rule, noise) {
            if let Some(k) = discrepancy_pick(&[step.residual_norm], e, tau)? {
                log.chosen_k = Some(step.k + k - 1);
                break;
            }
        }
        if step.residual_norm <= RESIDUAL_FLOOR * it.norm_b() {
            log.converged = true;
            break;
        }
    }
    if log.entries.is_empty() {
        return Err(Error::Breakdown {
            step: 1,
            coefficient: "projected",
            value: 0.0,
        });
    }
    choose_post_hoc(&mut log, opts.rule, reliable);
    if let (StopRule::Lcurve, Some(m)) = (opts.rule, reliable) {
        let msg = format!("L-curve restricted to k <= {m}");
        log.note = Some(match log.note.take() {
            Some(n) => format!("{msg}; {n}"),
            None => msg,
        });
    }

    let k_final = log.chosen_k.unwrap_or_else(|| log.entries.last().unwrap().k);
    let y = if k_final == last_y.len() {
        last_y
    } else {
        solve_projected(&it.state().bidiag_b_at(k_final)?, it.state().beta1())?.0
    };
    let tol = opts.recover_tol.unwrap_or(opts.jbd.inner_tol);
    let rec = recover_solution(it.state(), &y, tol)?;
    Ok(SolveResult {
        log,
        x: rec.x,
        y,
        recovery_converged: rec.converged,
        wall_time_s: start.elapsed().as_secs_f64(),
        state: it.into_state(),
    })
}

/// The JSON summary of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub problem: String,
    pub solver: String,
    pub rule: String,
    pub n: usize,
    pub eps: f64,
    pub seed: u64,
    pub chosen_k: Option<usize>,
    pub best_k: Option<usize>,
    #[serde(rename = "best_rel_err_L")]
    pub best_rel_err_l: Option<f64>,
    #[serde(rename = "rel_err_L_at_chosen")]
    pub rel_err_l_at_chosen: Option<f64>,
    pub residual_at_chosen: Option<f64>,
    pub wall_time_s: f64,
    pub breakdown_at: Option<usize>,
    pub converged: bool,
    pub note: Option<String>,
}

impl Summary {
    pub fn from_log(problem: &ProblemInstance, solver: &str, log: &SolveLog, wall_time_s: f64) -> Self {
        let best = log.best();
        let at_chosen = log.chosen_k.and_then(|k| log.entry(k));
        Self {
            problem: problem.name().to_string(),
            solver: solver.to_string(),
            rule: log.chosen_rule.to_string(),
            n: problem.config.as_ref().map_or(problem.a.cols(), |c| c.n),
            eps: problem.eps,
            seed: problem.seed,
            chosen_k: log.chosen_k,
            best_k: best.map(|b| b.0),
            best_rel_err_l: best.map(|b| b.1),
            rel_err_l_at_chosen: at_chosen.and_then(SolveLog::score),
            residual_at_chosen: at_chosen.map(|e| e.residual_norm),
            wall_time_s,
            breakdown_at: log.breakdown_at,
            converged: log.converged,
            note: log.note.clone(),
        }
    }
}
