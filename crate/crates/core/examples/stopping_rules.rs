//! Discrepancy principle with several safety factors and the L-curve corner on
//! one logged JBDQR run.
//!
//! cargo run --release --example stopping_rules

use illposed::jbdqr::{jbdqr_run, JbdqrOptions, StopRule};
use illposed::param_choice::{discrepancy_pick, lcurve_corner, LCurvePoints};
use illposed::problems::{ProblemConfig, ProblemKind};

fn main() -> illposed::Result<()> {
    let p = ProblemConfig::new(ProblemKind::Heat { kappa: 1.0 }, 256, 1e-3, 2).build()?;
    let r = jbdqr_run(&p, &JbdqrOptions { max_k: Some(40), rule: StopRule::MaxIter, ..Default::default() })?;
    let log = &r.log;
    let e = p.noise_norm().unwrap();
    println!("oracle best: {:?}", log.best());
    for tau in [1.005, 1.1, 2.0] {
        let k = discrepancy_pick(&log.residuals(), e, tau)?;
        let err = k.and_then(|k| log.entry(k)).and_then(|en| en.rel_err_l);
        println!("discrepancy tau = {tau}: k = {k:?}, rel_err_L = {err:?}");
    }
    let pts = LCurvePoints::from_norms(&log.residuals(), &log.seminorms())?;
    match lcurve_corner(&pts) {
        Ok(k) => println!("L-curve corner: k = {k}, rel_err_L = {:?}", log.entry(k).and_then(|en| en.rel_err_l)),
        Err(err) => println!("L-curve: {err}"),
    }
    Ok(())
}
