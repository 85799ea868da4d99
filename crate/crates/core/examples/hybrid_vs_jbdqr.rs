//! Compares the best JBDQR iterate with the hybrid method (Tikhonov on each
//! projected problem, parameter by GCV or WGCV) on a few 1D problems.
//!
//! cargo run --release --example hybrid_vs_jbdqr

use illposed::hybrid::{hybrid_run, HybridOptions, MuRule};
use illposed::jbdqr::{jbdqr_run, JbdqrOptions, StopRule};
use illposed::problems::{ProblemConfig, ProblemKind};

fn main() -> illposed::Result<()> {
    let cases = [
        (ProblemKind::Shaw, 512, 30),
        (ProblemKind::Baart, 512, 20),
        (ProblemKind::Deriv2 { example: 2 }, 1000, 40),
    ];
    println!("problem  eps     jbdqr(k*)      gcv(k)         wgcv(k)");
    for (kind, n, max_k) in cases {
        for eps in [1e-2, 1e-3] {
            let p = ProblemConfig::new(kind, n, eps, 3).build()?;
            let j = jbdqr_run(&p, &JbdqrOptions { max_k: Some(max_k), rule: StopRule::OracleBest, ..Default::default() })?;
            let mut row = format!("{:<8} {eps:.0e}", kind.name());
            let cell = |best: Option<(usize, f64)>| best.map_or("-".into(), |(k, e)| format!("{e:.4}({k})"));
            row += &format!("  {:<14}", cell(j.log.best()));
            for mu_rule in [MuRule::Gcv, MuRule::Wgcv { omega: 0.8 }] {
                let h = hybrid_run(&p, &HybridOptions { max_k: Some(max_k), mu_rule, ..Default::default() })?;
                row += &format!(" {:<14}", cell(h.log.best()));
            }
            println!("{row}");
        }
    }
    Ok(())
}
