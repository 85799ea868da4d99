//! Dense GSVD of `{A, L}` on a small problem: the Picard table, and the JBDQR
//! iterate written as a filtered GSVD expansion with filters from the Ritz
//! values of `B_k`
//! (the null-space part of `L` included).
//!
//! cargo run --release --example gsvd_filters

use illposed::gsvd_oracle::{filter_factors, gsvd, picard_plateau, Ordering};
use illposed::jbd::{InnerSolver, JbdOptions};
use illposed::jbdqr::JbdqrIter;
use illposed::problems::{ProblemConfig, ProblemKind};
use illposed::vecops::{norm2, sub};

fn main() -> illposed::Result<()> {
    let p = ProblemConfig::new(ProblemKind::Shaw, 32, 1e-3, 2).build()?;
    let f = gsvd(&p.a.to_dense(), &p.l.to_dense(), Ordering::PaperSvda)?;
    println!("reconstruction error of A: {:.2e}", (f.reconstruct_a() - p.a.to_dense().to_nalgebra()).norm());
    println!("CS identity error: {:.2e}", f.cs_identity_error());

    let table = f.picard_table(&p.b)?;
    println!(" i  c_i          |p_i^T b|    ratio");
    for r in table.iter().take(12) {
        println!("{:2}  {:.4e}  {:.4e}  {:.4e}", r.index, r.c, r.coefficient, r.ratio);
    }
    println!("coefficients reach the noise level at i = {:?}", picard_plateau(&table, 8, 3.0));

    let opts = JbdOptions { inner: InnerSolver::DenseQr, ..Default::default() };
    let mut it = JbdqrIter::new(p.a.clone(), p.l.clone(), &p.b, opts)?;
    println!(" k  ‖x_k − filtered expansion‖ / ‖x_k‖");
    while let Some(step) = it.advance()? {
        if step.k > 6 {
            break;
        }
        let x = it.iterate(&step.y)?;
        let ritz = it.state().bidiag_b()?.singular_values();
        let filters = filter_factors(&f.c, &ritz)?;
        // the null-space block has c = 1 and gets the same polynomial filter
        let null_filter = filter_factors(&[1.0], &ritz)?[0];
        let xf = f.filtered_solution(&p.b, &filters, null_filter)?;
        println!("{:2}  {:.2e}", step.k, norm2(&sub(&x, &xf)) / norm2(&x));
    }
    Ok(())
}
