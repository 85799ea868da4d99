//! Dense reference solvers (TGSVD and Tikhonov through the GSVD) logged in the
//! same [`SolveLog`] format as the iterative ones. Desk scale only.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::gsvd_oracle::{gsvd, GsvdFactors, Ordering};
use crate::jbdqr::{check_rule, choose_post_hoc, relative_errors, LogEntry, SolveLog, StopRule};
use crate::param_choice::discrepancy_pick;
use crate::problems::ProblemInstance;
use crate::vecops::{norm2, sub};

#[derive(Debug, Clone)]
pub struct ReferenceResult {
    pub log: SolveLog,
    pub x: Vec<f64>,
    pub wall_time_s: f64,
}

fn entry(problem: &ProblemInstance, k: usize, x: &[f64], param: Option<f64>) -> Result<LogEntry> {
    let residual = norm2(&sub(&problem.a.apply(x)?, &problem.b));
    let errs = match &problem.x_true {
        Some(xt) => Some(relative_errors(&problem.l, x, xt)?),
        None => None,
    };
    Ok(LogEntry {
        k,
        residual_norm: residual,
        seminorm: norm2(&problem.l.apply(x)?),
        rel_err_l: errs.and_then(|e| e.rel_err_l),
        rel_err_plain: errs.map(|e| e.rel_err_plain),
        mu_k: param,
    })
}

fn factor(problem: &ProblemInstance) -> Result<GsvdFactors> {
    gsvd(&problem.a.to_dense(), &problem.l.to_dense(), Ordering::PaperSvda)
}

/// Runs the candidate solutions `solve(1..=count)` in order and applies `rule`.
fn sweep(
    problem: &ProblemInstance,
    rule: StopRule,
    noise_norm: Option<f64>,
    count: usize,
    param: impl Fn(usize) -> Option<f64>,
    solve: impl Fn(usize) -> Result<Vec<f64>>,
) -> Result<(SolveLog, Vec<Vec<f64>>)> {
    let noise = check_rule(problem, rule, noise_norm)?;
    let mut log = SolveLog::new(rule);
    let mut xs = Vec::new();
    for k in 1..=count {
        let x = match solve(k) {
            Ok(x) => x,
            Err(Error::Singular(msg)) => {
                log.note = Some(msg);
                break;
            }
            Err(e) => return Err(e),
        };
        let e = entry(problem, k, &x, param(k))?;
        let residual = e.residual_norm;
        log.entries.push(e);
        xs.push(x);
        if let (StopRule::Discrepancy { tau }, Some(nn)) = (rule, noise) {
            if discrepancy_pick(&[residual], nn, tau)?.is_some() {
                log.chosen_k = Some(k);
                break;
            }
        }
    }
    if log.entries.is_empty() {
        return Err(Error::Singular("no admissible reference solution".into()));
    }
    choose_post_hoc(&mut log, rule, None);
    Ok((log, xs))
}

/// TGSVD solutions for truncations `k = 1..=max_k`.
pub fn tgsvd_run(
    problem: &ProblemInstance,
    max_k: usize,
    rule: StopRule,
    noise_norm: Option<f64>,
) -> Result<ReferenceResult> {
    let start = Instant::now();
    let f = factor(problem)?;
    let count = max_k.min(f.regular_indices().len());
    let (log, mut xs) = sweep(problem, rule, noise_norm, count, |_| None, |k| {
        f.tgsvd_solution(&problem.b, k)
    })?;
    let k = log.chosen_k.unwrap_or(xs.len());
    Ok(ReferenceResult {
        x: xs.swap_remove(k - 1),
        log,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// `count` values of `λ`, logarithmically spaced and decreasing from
/// `γ_max` to `1e-8·γ_max` with `γ = c/s` over the regular pairs.
pub fn tikhonov_grid(f: &GsvdFactors, count: usize) -> Vec<f64> {
    let gmax = f
        .regular_indices()
        .iter()
        .filter(|&&i| f.s[i] > 0.0)
        .map(|&i| f.c[i] / f.s[i])
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let steps = count.max(2) - 1;
    (0..count)
        .map(|j| gmax * 10f64.powf(-8.0 * j as f64 / steps as f64))
        .collect()
}

/// Tikhonov solutions on the [`tikhonov_grid`]. Row `k` of the log holds the
/// `k`-th `λ` in its `mu_k` column.
pub fn tikhonov_run(
    problem: &ProblemInstance,
    grid_points: usize,
    rule: StopRule,
    noise_norm: Option<f64>,
) -> Result<ReferenceResult> {
    let start = Instant::now();
    let f = factor(problem)?;
    let grid = tikhonov_grid(&f, grid_points);
    let (log, mut xs) = sweep(problem, rule, noise_norm, grid.len(), |k| Some(grid[k - 1]), |k| {
        f.tikhonov_solution(&problem.b, grid[k - 1])
    })?;
    let k = log.chosen_k.unwrap_or(xs.len());
    Ok(ReferenceResult {
        x: xs.swap_remove(k - 1),
        log,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}
