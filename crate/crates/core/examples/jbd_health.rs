//! Loss of orthogonality in the joint bidiagonalization with and without
//! reorthogonalization, and the column-norm identity of `(B_k; B̄_k)`.
//!
//! cargo run --release --example jbd_health

use illposed::jbd::{JbdOptions, JbdState, Reorth};
use illposed::problems::{ProblemConfig, ProblemKind};
use illposed::vecops::dot;

fn max_offdiag(vs: &[Vec<f64>]) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..vs.len() {
        for j in 0..i {
            worst = worst.max(dot(&vs[i], &vs[j]).abs());
        }
    }
    worst
}

fn main() -> illposed::Result<()> {
    let p = ProblemConfig::new(ProblemKind::Shaw, 128, 1e-3, 1).build()?;
    println!("reorth    max|UᵀU−I|  max|ṼᵀṼ−I|  max column-norm defect");
    for reorth in [Reorth::None, Reorth::OneStep, Reorth::Full] {
        let opts = JbdOptions { reorth, inner_tol: 1e-12, ..Default::default() };
        let mut s = JbdState::init(p.a.clone(), p.l.clone(), &p.b, opts)?;
        while s.k() < 30 && s.breakdown().is_none() {
            s.step()?;
        }
        let (a, b, ah, bh) = (s.alpha(), s.beta(), s.alphahat(), s.betahat());
        let defect = (0..s.k())
            .map(|i| {
                let prev = if i > 0 { bh[i - 1] } else { 0.0 };
                (a[i] * a[i] + b[i + 1] * b[i + 1] + ah[i] * ah[i] + prev * prev - 1.0).abs()
            })
            .fold(0.0, f64::max);
        println!("{reorth:<9?} {:.2e}    {:.2e}    {defect:.2e}", max_offdiag(s.u()), max_offdiag(s.vtil()));
    }
    Ok(())
}
