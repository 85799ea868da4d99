//! Plain LSQR on a noisy `shaw` problem: the error of the iterates first falls
//! and then grows once noise enters (standard-form semi-convergence).
//!
//! cargo run --release --example lsqr_basic

use illposed::lsqr::lsqr_with_observer;
use illposed::problems::{ProblemConfig, ProblemKind};
use illposed::vecops::{norm2, sub};

fn main() -> illposed::Result<()> {
    let p = ProblemConfig::new(ProblemKind::Shaw, 256, 1e-3, 7).build()?;
    let xt = p.x_true.clone().unwrap();
    let mut errs = Vec::new();
    let report = lsqr_with_observer(&p.a, &p.b, 1e-12, 40, |_, x| {
        errs.push(norm2(&sub(x, &xt)) / norm2(&xt));
    })?;
    println!("iter  rel_err");
    for (i, e) in errs.iter().enumerate() {
        println!("{:4}  {e:.4}", i + 1);
    }
    let (best, e) = errs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, e)| (i + 1, *e))
        .unwrap();
    println!("best iterate {best} ({e:.4}); final residual {:.3e}", report.residual_norm);
    Ok(())
}
