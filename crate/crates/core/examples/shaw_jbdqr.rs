//! JBDQR on `shaw` with the first-difference regularizer: the per-step error
//! log and the steps picked by three stopping rules.
//!
//! cargo run --release --example shaw_jbdqr [n] [eps] [seed]

use illposed::jbdqr::{jbdqr_run, JbdqrOptions, StopRule};
use illposed::problems::{ProblemConfig, ProblemKind};

fn main() -> illposed::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n = args.first().map_or(Ok(512), |s| s.parse()).expect("n");
    let eps = args.get(1).map_or(Ok(1e-3), |s| s.parse()).expect("eps");
    let seed = args.get(2).map_or(Ok(1), |s| s.parse()).expect("seed");
    let p = ProblemConfig::new(ProblemKind::Shaw, n, eps, seed).build()?;

    let base = JbdqrOptions {
        max_k: Some(20),
        rule: StopRule::OracleBest,
        ..Default::default()
    };
    let r = jbdqr_run(&p, &base)?;
    println!(" k  residual      seminorm      rel_err_L");
    for e in &r.log.entries {
        println!("{:2}  {:.6e}  {:.6e}  {:.4}", e.k, e.residual_norm, e.seminorm, e.rel_err_l.unwrap());
    }
    println!("oracle k* = {:?}", r.log.chosen_k);

    for rule in [StopRule::Lcurve, StopRule::Discrepancy { tau: 1.1 }] {
        let r = jbdqr_run(&p, &JbdqrOptions { rule, ..base })?;
        let err = r.log.chosen_k.and_then(|k| r.log.entry(k)).and_then(|e| e.rel_err_l);
        println!("{rule}: k = {:?}, rel_err_L = {err:?}, note = {:?}", r.log.chosen_k, r.log.note);
    }
    Ok(())
}
