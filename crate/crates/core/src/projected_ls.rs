//! The projected problem `min ‖B_k y − β₁ e₁‖`, solved by an incrementally updated
//! Givens QR factorization of the lower-bidiagonal `B_k`.

use nalgebra::{DMatrix, DVector};

use crate::bidiag::{LowerBidiag, UpperBidiag};
use crate::error::{Error, Result};

/// Relative threshold under which a diagonal entry of `R_k` counts as zero.
pub const RANK_TOL: f64 = 1e-14;

/// QR factorization `Q_kᵀ B_k = (R_k; 0)` carried across iterations.
///
/// `R_k` is upper bidiagonal with diagonal `rho` and superdiagonal `theta`.
#[derive(Debug, Clone)]
pub struct QrUpdateState {
    beta1: f64,
    rho: Vec<f64>,
    theta: Vec<f64>,
    phi: Vec<f64>,
    phibar: f64,
    c_prev: f64,
    s_prev: f64,
    rmax: f64,
}

impl QrUpdateState {
    pub fn new(beta1: f64) -> Result<Self> {
        if !beta1.is_finite() || beta1 < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "beta1 must be nonnegative and finite, got {beta1}"
            )));
        }
        Ok(Self {
            beta1,
            rho: Vec::new(),
            theta: Vec::new(),
            phi: Vec::new(),
            phibar: beta1,
            c_prev: 1.0,
            s_prev: 0.0,
            rmax: 0.0,
        })
    }

    pub fn k(&self) -> usize {
        self.rho.len()
    }

    pub fn beta1(&self) -> f64 {
        self.beta1
    }

    /// Append column `k+1` of `B`: diagonal entry `alpha = α_{k+1}`, subdiagonal `beta = β_{k+2}`.
    pub fn qr_push(&mut self, alpha: f64, beta: f64) -> Result<()> {
        if !alpha.is_finite() || !beta.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "non-finite bidiagonal entries ({alpha}, {beta})"
            )));
        }
        // the previous rotation acts on rows (k, k+1) of the new column (0, α)
        let (theta, rhobar) = if self.rho.is_empty() {
            (0.0, alpha)
        } else {
            (self.s_prev * alpha, -self.c_prev * alpha)
        };
        let rho = rhobar.hypot(beta);
        let (c, s) = if rho == 0.0 { (1.0, 0.0) } else { (rhobar / rho, beta / rho) };
        if !self.rho.is_empty() {
            self.theta.push(theta);
        }
        self.rho.push(rho);
        self.phi.push(c * self.phibar);
        self.phibar *= s;
        self.c_prev = c;
        self.s_prev = s;
        self.rmax = self.rmax.max(rho.abs()).max(theta.abs());
        Ok(())
    }

    /// `‖B_k y_k − β₁ e₁‖`, available without forming `y_k`.
    pub fn residual_norm(&self) -> f64 {
        self.phibar.abs()
    }

    /// `y_k = R_k⁻¹ f_k` by back substitution.
    pub fn solve_y(&self) -> Result<Vec<f64>> {
        let k = self.k();
        if k == 0 {
            return Err(Error::InvalidArgument("no columns pushed".into()));
        }
        if let Some(j) = self
            .rho
            .iter()
            .position(|r| r.abs() <= RANK_TOL * self.rmax.max(f64::MIN_POSITIVE))
        {
            return Err(Error::RankDeficient(j + 1));
        }
        let mut y = vec![0.0; k];
        for j in (0..k).rev() {
            let mut v = self.phi[j];
            if j + 1 < k {
                v -= self.theta[j] * y[j + 1];
            }
            y[j] = v / self.rho[j];
        }
        Ok(y)
    }
}

/// `‖B̄_k y‖`, which equals `‖L x_k‖` for `x_k = Z_k y`.
pub fn seminorm(bbar: &UpperBidiag, y: &[f64]) -> f64 {
    crate::vecops::norm2(&bbar.mul(y))
}

/// Solve the projected problem from scratch: `y = argmin ‖B y − β₁ e₁‖`.
pub fn solve_projected(b: &LowerBidiag, beta1: f64) -> Result<(Vec<f64>, f64)> {
    let mut qr = QrUpdateState::new(beta1)?;
    for (a, s) in b.diag.iter().zip(&b.sub) {
        qr.qr_push(*a, *s)?;
    }
    Ok((qr.solve_y()?, qr.residual_norm()))
}

/// Outcome of comparing the substitution route with the direct projected solve.
#[derive(Debug, Clone)]
pub struct EquivalenceCheck {
    pub y_direct: Vec<f64>,
    pub y_substituted: Vec<f64>,
    pub relative_difference: f64,
}

/// Solve `min ‖B B̄⁻¹ ỹ − β₁ e₁‖` densely, set `y = B̄⁻¹ ỹ` and compare with `β₁ B† e₁`.
pub fn constrained_equivalence_check(
    b: &LowerBidiag,
    bbar: &UpperBidiag,
    beta1: f64,
) -> Result<EquivalenceCheck> {
    let k = b.k();
    crate::error::check_len("equivalence check: B-bar order", k, bbar.k())?;
    let bd = b.to_dense();
    let bbd = bbar.to_dense();
    if (0..k).any(|i| bbd[(i, i)] == 0.0) {
        return Err(Error::Singular("B-bar is singular".into()));
    }
    let mut rhs = DVector::zeros(k + 1);
    rhs[0] = beta1;
    // M = B B̄⁻¹ from the triangular system B̄ᵀ Mᵀ = Bᵀ
    let mt = bbd
        .transpose()
        .solve_lower_triangular(&bd.transpose())
        .ok_or_else(|| Error::Singular("B-bar is singular".into()))?;
    let ytil = ls_solve(&mt.transpose(), &rhs)?;
    let y_sub = bbd
        .solve_upper_triangular(&ytil)
        .ok_or_else(|| Error::Singular("B-bar is singular".into()))?;
    let y_direct = ls_solve(&bd, &rhs)?;
    let diff = (&y_sub - &y_direct).norm() / y_direct.norm().max(f64::MIN_POSITIVE);
    Ok(EquivalenceCheck {
        y_direct: y_direct.iter().copied().collect(),
        y_substituted: y_sub.iter().copied().collect(),
        relative_difference: diff,
    })
}

/// Householder least squares for full column rank, minimum-norm SVD solve otherwise.
fn ls_solve(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let qr = m.clone().qr();
    let r = qr.r();
    let rmax = r.diagonal().amax();
    if r.diagonal().iter().all(|d| d.abs() > 1e-13 * rmax) {
        let qtb = qr.q().transpose() * rhs;
        return r
            .solve_upper_triangular(&qtb)
            .ok_or_else(|| Error::Singular("triangular factor".into()));
    }
    pinv_solve(m, rhs)
}

fn pinv_solve(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    svd.solve(rhs, 1e-14 * smax)
        .map_err(|e| Error::Singular(e.to_string()))
}
