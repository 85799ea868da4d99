//! Paige–Saunders LSQR for `min ‖A x − b‖`.
//!
//! Used for the inner projections of the joint bidiagonalization and for
//! recovering `x` from `(A; L) x = Ṽ y`.

use crate::error::{check_len, Error, Result};
use crate::linop::LinearMap;
use crate::vecops::{axpy, norm2, scale};

pub const DEFAULT_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct LsqrReport {
    pub solution: Vec<f64>,
    pub iterations: usize,
    /// The stopping quantity that fired: `min(‖r‖/‖b‖, ‖Aᵀr‖/(‖A‖ ‖r‖))`.
    pub relative_residual_estimate: f64,
    /// Recurrence estimate of `‖b − A x‖`.
    pub residual_norm: f64,
    /// Frobenius-type running estimate of `‖A‖`.
    pub anorm: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct LsqrOptions {
    pub tol: f64,
    /// `None` means `2 (rows + cols)`.
    pub max_iter: Option<usize>,
}

impl Default for LsqrOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: None,
        }
    }
}

pub fn lsqr_solve(map: &LinearMap, rhs: &[f64], tol: f64, max_iter: usize) -> Result<LsqrReport> {
    lsqr_with_observer(map, rhs, tol, max_iter, |_, _| {})
}

pub fn lsqr(map: &LinearMap, rhs: &[f64], opts: LsqrOptions) -> Result<LsqrReport> {
    let maxit = opts.max_iter.unwrap_or(2 * (map.rows() + map.cols()));
    lsqr_solve(map, rhs, opts.tol, maxit)
}

/// LSQR with a callback invoked after every iteration with `(iteration, x)`.
pub fn lsqr_with_observer(
    map: &LinearMap,
    rhs: &[f64],
    tol: f64,
    max_iter: usize,
    mut observe: impl FnMut(usize, &[f64]),
) -> Result<LsqrReport> {
    check_len("lsqr right-hand side", map.rows(), rhs.len())?;
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("lsqr tolerance must be positive, got {tol}")));
    }
    let (m, n) = (map.rows(), map.cols());
    let mut x = vec![0.0; n];
    let bnorm = norm2(rhs);
    if bnorm == 0.0 {
        return Ok(LsqrReport {
            solution: x,
            iterations: 0,
            relative_residual_estimate: 0.0,
            residual_norm: 0.0,
            anorm: 0.0,
            converged: true,
        });
    }

    let mut u = rhs.to_vec();
    let mut beta = bnorm;
    scale(1.0 / beta, &mut u);
    let mut v = vec![0.0; n];
    map.apply_t_to(&u, &mut v)?;
    let mut alpha = norm2(&v);
    if alpha == 0.0 {
        // rhs is orthogonal to the range: x = 0 is the minimizer
        return Ok(LsqrReport {
            solution: x,
            iterations: 0,
            relative_residual_estimate: 0.0,
            residual_norm: bnorm,
            anorm: 0.0,
            converged: true,
        });
    }
    scale(1.0 / alpha, &mut v);

    let mut w = v.clone();
    let mut phibar = beta;
    let mut rhobar = alpha;
    let mut anorm2 = 0.0f64;
    let mut av = vec![0.0; m];
    let mut atu = vec![0.0; n];
    let mut estimate = f64::INFINITY;
    let mut residual = bnorm;

    for iter in 1..=max_iter {
        // bidiagonalization step
        map.apply_to(&v, &mut av)?;
        for (ui, ai) in u.iter_mut().zip(&av) {
            *ui = ai - alpha * *ui;
        }
        beta = norm2(&u);
        anorm2 += alpha * alpha + beta * beta;
        if beta > 0.0 {
            scale(1.0 / beta, &mut u);
            map.apply_t_to(&u, &mut atu)?;
            for (vi, ai) in v.iter_mut().zip(&atu) {
                *vi = ai - beta * *vi;
            }
            alpha = norm2(&v);
            if alpha > 0.0 {
                scale(1.0 / alpha, &mut v);
            }
        } else {
            alpha = 0.0;
        }

        // plane rotation eliminating beta
        let rho = rhobar.hypot(beta);
        let c = rhobar / rho;
        let s = beta / rho;
        let theta = s * alpha;
        rhobar = -c * alpha;
        let phi = c * phibar;
        phibar *= s;

        axpy(phi / rho, &w, &mut x);
        for (wi, vi) in w.iter_mut().zip(&v) {
            *wi = vi - (theta / rho) * *wi;
        }
        observe(iter, &x);

        residual = phibar;
        let anorm = anorm2.sqrt();
        let arnorm = phibar * alpha * c.abs();
        let test1 = residual / bnorm;
        let test2 = if residual > 0.0 {
            arnorm / (anorm * residual)
        } else {
            0.0
        };
        estimate = test1.min(test2);
        if estimate <= tol || alpha == 0.0 || beta == 0.0 {
            return Ok(LsqrReport {
                solution: x,
                iterations: iter,
                relative_residual_estimate: if alpha == 0.0 || beta == 0.0 { 0.0 } else { estimate },
                residual_norm: residual,
                anorm,
                converged: true,
            });
        }
    }
    Ok(LsqrReport {
        solution: x,
        iterations: max_iter,
        relative_residual_estimate: estimate,
        residual_norm: residual,
        anorm: anorm2.sqrt(),
        converged: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linop::DenseMatrix;
    use crate::problems::{first_derivative_1d, gen_shaw};
    use crate::vecops::{dot, sub};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_in_one_iteration() {
        let id = LinearMap::identity(2).unwrap();
        let rep = lsqr_solve(&id, &[3.0, -1.0], 1e-10, 10).unwrap();
        assert_eq!(rep.iterations, 1);
        assert!(rep.converged);
        assert!((rep.solution[0] - 3.0).abs() < 1e-14 && (rep.solution[1] + 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_rhs_and_bad_input() {
        let id = LinearMap::identity(3).unwrap();
        let rep = lsqr_solve(&id, &[0.0; 3], 1e-6, 10).unwrap();
        assert_eq!(rep.iterations, 0);
        assert!(rep.converged);
        assert_eq!(rep.solution, vec![0.0; 3]);
        assert!(lsqr_solve(&id, &[1.0; 2], 1e-6, 10).is_err());
        assert!(lsqr_solve(&id, &[1.0; 3], 0.0, 10).is_err());
    }

    #[test]
    fn matches_dense_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = DenseMatrix::from_fn(20, 10, |i, j| {
            rng.gen_range(-1.0..1.0) + if i == j { 3.0 } else { 0.0 }
        });
        let b: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let rep = lsqr_solve(&LinearMap::dense(a.clone()).unwrap(), &b, 1e-10, 200).unwrap();
        assert!(rep.converged);
        // oracle: normal equations by Cholesky
        let an = a.to_nalgebra();
        let ata = an.transpose() * &an;
        let atb = an.transpose() * nalgebra::DVector::from_column_slice(&b);
        let x = ata.cholesky().unwrap().solve(&atb);
        let diff: Vec<f64> = rep.solution.iter().zip(x.iter()).map(|(p, q)| p - q).collect();
        assert!(norm2(&diff) <= 1e-8 * x.norm());
    }

    #[test]
    fn maxit_exhaustion_is_not_an_error() {
        let g = gen_shaw(32).unwrap();
        let rep = lsqr_solve(&g.a, &g.b_true, 1e-14, 3).unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.iterations, 3);
    }

    #[test]
    fn stacked_shaw_meets_normal_equation_criterion() {
        let g = gen_shaw(64).unwrap();
        let stacked = LinearMap::vstack(g.a.clone(), first_derivative_1d(64).unwrap()).unwrap();
        let mut rhs = g.b_true.clone();
        rhs.extend(vec![0.0; 63]);
        let rep = lsqr(&stacked, &rhs, LsqrOptions::default()).unwrap();
        assert!(rep.converged);
        let r = sub(&rhs, &stacked.apply(&rep.solution).unwrap());
        let atr = stacked.apply_t(&r).unwrap();
        let rr = norm2(&r);
        if rr > 1e-6 * norm2(&rhs) {
            // inconsistent: the normal-equation test must hold for the true residual
            assert!(norm2(&atr) <= 1e-6 * rep.anorm * rr, "{}", norm2(&atr) / (rep.anorm * rr));
        }
    }

    #[test]
    fn residuals_are_monotone_and_consistent_systems_converge() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = DenseMatrix::from_fn(15, 15, |i, j| {
            rng.gen_range(-0.5..0.5) + if i == j { 2.0 } else { 0.0 }
        });
        let map = LinearMap::dense(a).unwrap();
        let xt: Vec<f64> = (0..15).map(|i| (i as f64).sin()).collect();
        let b = map.apply(&xt).unwrap();
        let mut res = Vec::new();
        let tol = 1e-8;
        let rep = lsqr_with_observer(&map, &b, tol, 100, |_, x| {
            res.push(norm2(&sub(&b, &map.apply(x).unwrap())));
        })
        .unwrap();
        for w in res.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
        let r = norm2(&sub(&b, &map.apply(&rep.solution).unwrap()));
        assert!(r <= 10.0 * tol * norm2(&b));
        assert!(dot(&rep.solution, &rep.solution) > 0.0);
    }
}
