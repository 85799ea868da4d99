//! Joint bidiagonalization of the pair `{A, L}`.
//!
//! The process builds orthonormal `U_{k+1}`, `Û_k`, `Ṽ_k` and the coefficients of the
//! lower-bidiagonal `B_k` and upper-bidiagonal `B̂_k`. Each application of `QQᵀ`
//! (the orthogonal projector onto `range((A; L))`) is an inner LSQR solve of
//! `min ‖(A; L) x̃ − (u; 0)‖`, after which `QQᵀ(u; 0) = (A; L) x̃`.
//!
//! Alongside `Ṽ_k` the state carries `Z_k` with `Ṽ_k = (A; L) Z_k` exactly: every
//! linear combination applied to a `ṽ` (recurrence and reorthogonalization) is
//! applied to its `z` as well. Then `A Z_k = U_{k+1} B_k`, `L Z_k = Û_k B̄_k`, and an
//! iterate `x_k = Z_k y_k` costs one `n x k` product.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bidiag::{LowerBidiag, UpperBidiag};
use crate::error::{check_len, Error, Result};
use crate::linop::LinearMap;
use crate::lsqr::lsqr_solve;
use crate::vecops::{axpy, combine, dot, norm2, scale};

pub const BREAKDOWN_REL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Reorth {
    None,
    /// A single modified Gram–Schmidt sweep against all stored vectors.
    OneStep,
    /// Two sweeps ("twice is enough").
    #[default]
    Full,
}

impl Reorth {
    fn passes(self) -> usize {
        match self {
            Reorth::None => 0,
            Reorth::OneStep => 1,
            Reorth::Full => 2,
        }
    }
}

impl std::str::FromStr for Reorth {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Reorth::None),
            "one-step" | "one_step" => Ok(Reorth::OneStep),
            "full" => Ok(Reorth::Full),
            other => Err(Error::Config(format!("unknown reorthogonalization `{other}`"))),
        }
    }
}

/// How the coefficients of `B̄_k` are obtained.
///
/// `Recurrence` runs the `û` recurrence literally and takes `α̂_{i+1}` as the norm of
/// the new vector. Each `β̂_i = α_{i+1}β_{i+1}/α̂_i` amplifies rounding errors by
/// `1/α̂_i`; with a derivative `L` several `α̂_i` are tiny and after a few steps
/// `B̄_k` no longer satisfies `B_kᵀB_k + B̄_kᵀB̄_k = I` (so `‖B̄_k y‖ ≠ ‖L Z_k y‖`).
///
/// `Gram` obtains the same quantities from that identity, i.e. `B̄_k` is the
/// bidiagonal Cholesky factor of `I − B_kᵀB_k` (shifted by [`GRAM_SHIFT`]):
/// `α̂_i² = 1 − α_i² − β_{i+1}² − β̂_{i−1}²` and `β̂_i = α_{i+1}β_{i+1}/α̂_i`. `Û` is then kept as an orthonormal basis built
/// from the `L`-parts of `Ṽ` and is not used by the solvers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HatRule {
    Recurrence,
    #[default]
    Gram,
}

impl std::str::FromStr for HatRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "recurrence" => Ok(HatRule::Recurrence),
            "gram" => Ok(HatRule::Gram),
            other => Err(Error::Config(format!("unknown B-bar rule `{other}`"))),
        }
    }
}

/// How `QQᵀ(u; 0)` is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InnerSolver {
    /// Matrix-free LSQR on `(A; L)` to `inner_tol`.
    #[default]
    Lsqr,
    /// Householder QR of the assembled stack, computed once; desk scale only.
    DenseQr,
}

impl std::str::FromStr for InnerSolver {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lsqr" => Ok(InnerSolver::Lsqr),
            "dense-qr" | "dense_qr" | "dense" => Ok(InnerSolver::DenseQr),
            other => Err(Error::Config(format!("unknown inner solver `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BreakdownInfo {
    /// Step during which the coefficient vanished; `B_step`, `B̄_step` are complete.
    pub step: usize,
    pub coefficient: &'static str,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    Advanced,
    /// The process cannot continue; the state holds a complete step `k` anyway.
    Breakdown(BreakdownInfo),
}

#[derive(Debug, Clone, Copy)]
pub struct JbdOptions {
    pub inner_tol: f64,
    /// `None` uses the LSQR default `2 (rows + cols)`.
    pub inner_max_iter: Option<usize>,
    pub reorth: Reorth,
    pub hat: HatRule,
    pub inner: InnerSolver,
}

impl Default for JbdOptions {
    fn default() -> Self {
        Self {
            inner_tol: crate::lsqr::DEFAULT_TOL,
            inner_max_iter: None,
            reorth: Reorth::Full,
            hat: HatRule::Gram,
            inner: InnerSolver::Lsqr,
        }
    }
}

/// Statistics about the inner least-squares solves.
#[derive(Debug, Clone, Default)]
pub struct InnerStats {
    pub solves: usize,
    pub total_iterations: usize,
    pub unconverged: usize,
}

#[derive(Debug, Clone)]
pub struct JbdState {
    a: LinearMap,
    l: LinearMap,
    stacked: LinearMap,
    dense_qr: Option<nalgebra::linalg::QR<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    opts: JbdOptions,
    u: Vec<Vec<f64>>,
    uhat: Vec<Vec<f64>>,
    vtil: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    alphahat: Vec<f64>,
    betahat: Vec<f64>,
    k: usize,
    breakdown: Option<BreakdownInfo>,
    inner: InnerStats,
    gram_shift: f64,
}

fn below_threshold(value: f64, previous: f64) -> bool {
    value < BREAKDOWN_REL * previous.max(1.0)
}

/// Initial diagonal shift in the Gram rule: `B̄_k` factors `(1 + δ) I − B_kᵀB_k`
/// with `δ = GRAM_SHIFT` to begin with.
///
/// Once a Ritz value of `B_k` reaches 1 to working precision (any nontrivial null
/// space of `L` does this within a few steps) the unshifted matrix is singular or
/// slightly indefinite in floating point. With inexact inner solves `‖B_k‖` can
/// also exceed 1 by about the inner tolerance; a non-positive pivot then raises
/// `δ` to `GRAM_SHIFT + ‖B_k‖² − 1` and refactors. The shift perturbs `‖B̄_k y‖²`
/// by `δ ‖y‖²`.
pub const GRAM_SHIFT: f64 = 1e-14;

impl JbdState {
    /// Steps 1–3 of the process: `u₁ = b/‖b‖`, `α₁ṽ₁ = QQᵀ(u₁; 0)`, `α̂₁û₁ = ṽ₁(m+1:m+p)`.
    pub fn init(a: LinearMap, l: LinearMap, b: &[f64], opts: JbdOptions) -> Result<Self> {
        check_len("JBD: A and L columns", a.cols(), l.cols())?;
        check_len("JBD: right-hand side", a.rows(), b.len())?;
        if !(opts.inner_tol > 0.0) {
            return Err(Error::InvalidArgument("inner tolerance must be positive".into()));
        }
        let beta1 = norm2(b);
        if beta1 == 0.0 {
            return Err(Error::ZeroRhs);
        }
        let stacked = LinearMap::vstack(a.clone(), l.clone())?;
        let dense_qr = match opts.inner {
            InnerSolver::Lsqr => None,
            InnerSolver::DenseQr => Some(stacked.to_dense().to_nalgebra().qr()),
        };
        let mut state = Self {
            a,
            l,
            stacked,
            dense_qr,
            opts,
            u: Vec::new(),
            uhat: Vec::new(),
            vtil: Vec::new(),
            z: Vec::new(),
            alpha: Vec::new(),
            beta: vec![beta1],
            alphahat: Vec::new(),
            betahat: Vec::new(),
            k: 0,
            breakdown: None,
            inner: InnerStats::default(),
            gram_shift: GRAM_SHIFT,
        };
        let mut u1 = b.to_vec();
        scale(1.0 / beta1, &mut u1);
        let (mut z1, mut v1) = state.project(&u1)?;
        let alpha1 = norm2(&v1);
        if below_threshold(alpha1, 1.0) {
            return Err(Error::Breakdown {
                step: 0,
                coefficient: "alpha_1",
                value: alpha1,
            });
        }
        scale(1.0 / alpha1, &mut v1);
        scale(1.0 / alpha1, &mut z1);
        let m = state.m();
        let mut uh1 = v1[m..].to_vec();
        let alphahat1 = norm2(&uh1);
        if below_threshold(alphahat1, 1.0) {
            return Err(Error::Breakdown {
                step: 0,
                coefficient: "alphahat_1",
                value: alphahat1,
            });
        }
        scale(1.0 / alphahat1, &mut uh1);
        state.u.push(u1);
        state.vtil.push(v1);
        state.z.push(z1);
        state.uhat.push(uh1);
        state.alpha.push(alpha1);
        state.alphahat.push(alphahat1);
        Ok(state)
    }

    /// `QQᵀ(u; 0)` through an inner LSQR solve. Returns `(x̃, (A; L) x̃)`.
    fn project(&mut self, u: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut rhs = u.to_vec();
        rhs.resize(self.stacked.rows(), 0.0);
        if let Some(qr) = &self.dense_qr {
            let mut w = nalgebra::DVector::from_vec(rhs);
            qr.q_tr_mul(&mut w);
            let n = self.n();
            let x = qr
                .r()
                .solve_upper_triangular(&w.rows(0, n).into_owned())
                .ok_or_else(|| Error::StackedRankDeficient { rank: n - 1, n })?;
            self.inner.solves += 1;
            let x: Vec<f64> = x.iter().copied().collect();
            let proj = self.stacked.apply(&x)?;
            return Ok((x, proj));
        }
        let maxit = self
            .opts
            .inner_max_iter
            .unwrap_or(2 * (self.stacked.rows() + self.stacked.cols()));
        let rep = lsqr_solve(&self.stacked, &rhs, self.opts.inner_tol, maxit)?;
        self.inner.solves += 1;
        self.inner.total_iterations += rep.iterations;
        if !rep.converged {
            self.inner.unconverged += 1;
        }
        let proj = self.stacked.apply(&rep.solution)?;
        Ok((rep.solution, proj))
    }

    fn reorthogonalize(
        &self,
        w: &mut [f64],
        basis: &[Vec<f64>],
        mut shadow: Option<&mut Vec<f64>>,
        shadow_basis: &[Vec<f64>],
    ) {
        for _ in 0..self.opts.reorth.passes() {
            for (j, q) in basis.iter().enumerate() {
                let c = dot(q, w);
                axpy(-c, q, w);
                if let Some(zw) = shadow.as_deref_mut() {
                    axpy(-c, &shadow_basis[j], zw);
                }
            }
        }
    }

    /// One pass of the main loop (steps 5–8), producing `B_{k+1}` and `B̄_{k+1}`.
    pub fn step(&mut self) -> Result<StepOutcome> {
        if let Some(info) = self.breakdown {
            return Err(Error::Breakdown {
                step: info.step,
                coefficient: info.coefficient,
                value: info.value,
            });
        }
        let limit = self.n().min(self.p());
        if self.k + 1 > limit {
            return Err(Error::InvalidArgument(format!(
                "JBD step {} exceeds min(n, p) = {limit}",
                self.k + 1
            )));
        }
        let i = self.k + 1;
        let m = self.m();

        // β_{i+1} u_{i+1} = ṽ_i(1:m) − α_i u_i
        let alpha_i = self.alpha[i - 1];
        let mut w = self.vtil[i - 1][..m].to_vec();
        axpy(-alpha_i, &self.u[i - 1], &mut w);
        self.reorthogonalize(&mut w, &self.u, None, &[]);
        let beta_next = norm2(&w);
        if below_threshold(beta_next, self.beta[i - 1]) {
            if self.opts.hat == HatRule::Gram {
                self.gram_pivot(i, beta_next)?;
            }
            self.beta.push(beta_next);
            return Ok(self.record_breakdown(i, "beta", beta_next));
        }
        scale(1.0 / beta_next, &mut w);
        let u_next = w;

        // α_{i+1} ṽ_{i+1} = QQᵀ(u_{i+1}; 0) − β_{i+1} ṽ_i
        let (mut zw, mut vw) = self.project(&u_next)?;
        axpy(-beta_next, &self.vtil[i - 1], &mut vw);
        axpy(-beta_next, &self.z[i - 1], &mut zw);
        self.reorthogonalize(&mut vw, &self.vtil, Some(&mut zw), &self.z);
        let alpha_next = norm2(&vw);
        if below_threshold(alpha_next, alpha_i) {
            if self.opts.hat == HatRule::Gram {
                self.gram_pivot(i, beta_next)?;
            }
            self.beta.push(beta_next);
            self.u.push(u_next);
            return Ok(self.record_breakdown(i, "alpha", alpha_next));
        }
        scale(1.0 / alpha_next, &mut vw);
        scale(1.0 / alpha_next, &mut zw);

        if self.opts.hat == HatRule::Gram {
            self.gram_pivot(i, beta_next)?;
        }

        // β̂_i = α_{i+1} β_{i+1} / α̂_i
        let alphahat_i = self.alphahat[i - 1];
        let betahat_i = alpha_next * beta_next / alphahat_i;

        // α̂_{i+1} û_{i+1} = (−1)^i ṽ_{i+1}(m+1:m+p) − β̂_i û_i
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        let mut hw: Vec<f64> = vw[m..].iter().map(|v| sign * v).collect();
        let coef = match self.opts.hat {
            HatRule::Recurrence => betahat_i,
            HatRule::Gram => dot(&self.uhat[i - 1], &hw),
        };
        axpy(-coef, &self.uhat[i - 1], &mut hw);
        self.reorthogonalize(&mut hw, &self.uhat, None, &[]);
        let hnorm = norm2(&hw);

        self.beta.push(beta_next);
        self.u.push(u_next);
        self.alpha.push(alpha_next);
        self.vtil.push(vw);
        self.z.push(zw);
        self.betahat.push(betahat_i);
        if self.opts.hat == HatRule::Recurrence && i < limit && below_threshold(hnorm, alphahat_i) {
            self.alphahat.push(hnorm);
            return Ok(self.record_breakdown(i, "alphahat", hnorm));
        }
        if hnorm > 0.0 {
            scale(1.0 / hnorm, &mut hw);
        }
        // under the Gram rule this is provisional until the next step supplies β_{i+2}
        self.alphahat.push(hnorm);
        self.uhat.push(hw);
        self.k = i;
        Ok(StepOutcome::Advanced)
    }

    /// Squared Cholesky pivot `α̂_i²` of `(1 + δ) I − B_iᵀB_i`, given `β_{i+1}`.
    fn gram_pivot_sq(&self, i: usize, beta_next: f64, shift: f64) -> f64 {
        let bh = if i >= 2 { self.betahat[i - 2] } else { 0.0 };
        let a = self.alpha[i - 1];
        1.0 + shift - a * a - beta_next * beta_next - bh * bh
    }

    /// Sets `α̂_i` by the Gram rule, raising the shift and refactoring
    /// `α̂_1..α̂_i`, `β̂_1..β̂_{i−1}` when the pivot is not positive.
    fn gram_pivot(&mut self, i: usize, beta_next: f64) -> Result<()> {
        let v = self.gram_pivot_sq(i, beta_next, self.gram_shift);
        if v > 0.5 * self.gram_shift {
            self.alphahat[i - 1] = v.sqrt();
            return Ok(());
        }
        let mut sub = self.beta[1..i].to_vec();
        sub.push(beta_next);
        let b = LowerBidiag::new(self.alpha[..i].to_vec(), sub)?;
        let smax = b.singular_values().into_iter().fold(0.0, f64::max);
        let mut shift = (GRAM_SHIFT + (smax * smax - 1.0).max(0.0)).max(2.0 * self.gram_shift);
        for _ in 0..60 {
            if self.refactor_gram(i, beta_next, shift) {
                self.gram_shift = shift;
                return Ok(());
            }
            shift *= 2.0;
        }
        Err(Error::Breakdown {
            step: i,
            coefficient: "alphahat",
            value: 0.0,
        })
    }

    fn refactor_gram(&mut self, i: usize, beta_next: f64, shift: f64) -> bool {
        let floor = 0.5 * shift;
        for j in 1..=i {
            let bn = if j < i { self.beta[j] } else { beta_next };
            let v = self.gram_pivot_sq(j, bn, shift);
            if v <= floor {
                return false;
            }
            self.alphahat[j - 1] = v.sqrt();
            if j < i {
                self.betahat[j - 1] = self.alpha[j] * self.beta[j] / self.alphahat[j - 1];
            }
        }
        true
    }

    /// Current diagonal shift of the Gram rule.
    pub fn gram_shift(&self) -> f64 {
        self.gram_shift
    }

    fn record_breakdown(&mut self, step: usize, coefficient: &'static str, value: f64) -> StepOutcome {
        let info = BreakdownInfo {
            step,
            coefficient,
            value,
        };
        self.k = step;
        self.breakdown = Some(info);
        StepOutcome::Breakdown(info)
    }

    pub fn m(&self) -> usize {
        self.a.rows()
    }

    pub fn n(&self) -> usize {
        self.a.cols()
    }

    pub fn p(&self) -> usize {
        self.l.rows()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn a(&self) -> &LinearMap {
        &self.a
    }

    pub fn l(&self) -> &LinearMap {
        &self.l
    }

    pub fn stacked(&self) -> &LinearMap {
        &self.stacked
    }

    pub fn options(&self) -> JbdOptions {
        self.opts
    }

    pub fn breakdown(&self) -> Option<BreakdownInfo> {
        self.breakdown
    }

    pub fn inner_stats(&self) -> &InnerStats {
        &self.inner
    }

    pub fn beta1(&self) -> f64 {
        self.beta[0]
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// `β₁, β₂, ...`
    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn alphahat(&self) -> &[f64] {
        &self.alphahat
    }

    pub fn betahat(&self) -> &[f64] {
        &self.betahat
    }

    pub fn u(&self) -> &[Vec<f64>] {
        &self.u
    }

    pub fn uhat(&self) -> &[Vec<f64>] {
        &self.uhat
    }

    pub fn vtil(&self) -> &[Vec<f64>] {
        &self.vtil
    }

    /// Columns of `Z` with `ṽ_j = (A; L) z_j`.
    pub fn z(&self) -> &[Vec<f64>] {
        &self.z
    }

    /// `B_k`, `(k+1) x k`.
    pub fn bidiag_b(&self) -> Result<LowerBidiag> {
        self.bidiag_b_at(self.k)
    }

    pub fn bidiag_b_at(&self, k: usize) -> Result<LowerBidiag> {
        self.check_view(k)?;
        LowerBidiag::new(self.alpha[..k].to_vec(), self.beta[1..=k].to_vec())
    }

    /// `B̄_k = B̂_k D` with `D = diag(1, −1, 1, ...)`, so that `L Z_k = Û_k B̄_k`.
    pub fn bidiag_bbar(&self) -> Result<UpperBidiag> {
        self.bidiag_bbar_at(self.k)
    }

    pub fn bidiag_bbar_at(&self, k: usize) -> Result<UpperBidiag> {
        self.check_view(k)?;
        let sgn = |j: usize| if j % 2 == 0 { 1.0 } else { -1.0 };
        let diag = (0..k).map(|j| sgn(j) * self.alphahat[j]).collect();
        let sup = (0..k - 1).map(|j| sgn(j + 1) * self.betahat[j]).collect();
        UpperBidiag::new(diag, sup)
    }

    fn check_view(&self, k: usize) -> Result<()> {
        if k == 0 {
            return Err(Error::InvalidArgument(
                "bidiagonal view needs at least one completed step".into(),
            ));
        }
        if k > self.k {
            return Err(Error::InvalidArgument(format!(
                "requested step {k}, only {} completed",
                self.k
            )));
        }
        Ok(())
    }

    /// `Z_j y` with `j = y.len()`.
    pub fn z_times(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check_view(y.len())?;
        Ok(combine(&self.z, y, self.n()))
    }

    /// `Ṽ_j y` with `j = y.len()`.
    pub fn vtil_times(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check_view(y.len())?;
        Ok(combine(&self.vtil, y, self.m() + self.p()))
    }

    /// Debug dump of the recurrence coefficients, one row per index.
    pub fn write_coefficients_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "i,alpha,beta,alphahat,betahat")?;
        let rows = self.alpha.len().max(self.beta.len());
        let cell = |v: Option<&f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        for i in 0..rows {
            writeln!(
                w,
                "{},{},{},{},{}",
                i + 1,
                cell(self.alpha.get(i)),
                cell(self.beta.get(i)),
                cell(self.alphahat.get(i)),
                cell(self.betahat.get(i)),
            )?;
        }
        Ok(())
    }
}
