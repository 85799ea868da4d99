//! Dense oracles shared by the integration tests.
#![allow(dead_code)]

use illposed::problems::ProblemInstance;
use nalgebra::{DMatrix, DVector};

/// Thin QR of the stacked `(A; L)`.
pub struct StackedQr {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub m: usize,
}

impl StackedQr {
    pub fn new(problem: &ProblemInstance) -> Self {
        let a = problem.a.to_dense().to_nalgebra();
        let l = problem.l.to_dense().to_nalgebra();
        let (m, p, n) = (a.nrows(), l.nrows(), a.ncols());
        let mut s = DMatrix::zeros(m + p, n);
        s.view_mut((0, 0), (m, n)).copy_from(&a);
        s.view_mut((m, 0), (p, n)).copy_from(&l);
        let qr = s.qr();
        Self { q: qr.q(), r: qr.r(), m }
    }

    pub fn q_a(&self) -> DMatrix<f64> {
        self.q.rows(0, self.m).into_owned()
    }

    pub fn r_inv(&self, w: &DVector<f64>) -> DVector<f64> {
        self.r.solve_upper_triangular(w).expect("R is nonsingular")
    }
}

/// `argmin ‖M w − b‖` over the Krylov space `K_k(MᵀM, Mᵀb)`, built with
/// twice-repeated Gram-Schmidt (the exact-arithmetic LSQR iterate).
pub fn krylov_lsqr_iterate(m: &DMatrix<f64>, b: &[f64], k: usize) -> DVector<f64> {
    let b = DVector::from_column_slice(b);
    let n = m.ncols();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut v = m.transpose() * &b;
    for _ in 0..k {
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&v);
                v.axpy(-c, q, 1.0);
            }
        }
        let nv = v.norm();
        if nv == 0.0 {
            break;
        }
        v /= nv;
        basis.push(v.clone());
        v = m.transpose() * (m * &v);
    }
    let vk = DMatrix::from_columns(&basis);
    let mv = m * &vk;
    let coef = mv.svd(true, true).solve(&b, 1e-300).expect("least-squares solve");
    let w = &vk * coef;
    debug_assert_eq!(w.len(), n);
    w
}

pub fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
