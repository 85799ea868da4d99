//! Test-problem generators, regularization matrices and noise injection.
//!
//! The one-dimensional problems are Galerkin or quadrature discretizations of
//! the classic first-kind integral equations (`shaw`, `baart`, `heat`,
//! `deriv2`). In every generator `b_true` is formed as `A · x_true`, so the
//! consistency check `‖A x_true − b_true‖ ≤ 1e-10 ‖b_true‖` holds by
//! construction.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linop::{DenseMatrix, LinearMap};
use crate::vecops::norm2;

/// Operator plus the exact solution and data it was generated from.
#[derive(Debug, Clone)]
pub struct Generated {
    pub a: LinearMap,
    pub x_true: Vec<f64>,
    pub b_true: Vec<f64>,
}

impl Generated {
    fn from_solution(a: LinearMap, x_true: Vec<f64>) -> Result<Self> {
        let b_true = a.apply(&x_true)?;
        Ok(Self { a, x_true, b_true })
    }
}

/// Shaw's one-dimensional image restoration model on `[-π/2, π/2]`.
pub fn gen_shaw(n: usize) -> Result<Generated> {
    if n < 2 || n % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "shaw needs an even n >= 2, got {n}"
        )));
    }
    let h = PI / n as f64;
    let t: Vec<f64> = (0..n).map(|i| -FRAC_PI_2 + (i as f64 + 0.5) * h).collect();
    let co: Vec<f64> = t.iter().map(|v| v.cos()).collect();
    let psi: Vec<f64> = t.iter().map(|v| PI * v.sin()).collect();
    let a = DenseMatrix::from_fn(n, n, |i, j| {
        let ss = psi[i] + psi[j];
        let sinc = if ss == 0.0 { 1.0 } else { ss.sin() / ss };
        let v = (co[i] + co[j]) * sinc;
        h * v * v
    });
    let x_true = t
        .iter()
        .map(|&s| 2.0 * (-6.0 * (s - 0.8).powi(2)).exp() + (-2.0 * (s + 0.5).powi(2)).exp())
        .collect();
    Generated::from_solution(LinearMap::dense(a)?, x_true)
}

/// Baart's first-kind Fredholm equation with kernel `exp(s cos t)`,
/// `s ∈ [0, π/2]`, `t ∈ [0, π]` and solution `sin t`.
pub fn gen_baart(n: usize) -> Result<Generated> {
    if n < 2 || n % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "baart needs an even n >= 2, got {n}"
        )));
    }
    let hs = FRAC_PI_2 / n as f64;
    let ht = PI / n as f64;
    let c = 1.0 / (3.0 * 2f64.sqrt());
    let ihs: Vec<f64> = (0..=n).map(|i| i as f64 * hs).collect();
    // Galerkin in s (box functions), Simpson in t.
    let integral = |co: f64| -> Vec<f64> {
        if co.abs() < 1e-14 {
            vec![hs; n]
        } else {
            (0..n)
                .map(|i| ((ihs[i + 1] * co).exp() - (ihs[i] * co).exp()) / co)
                .collect()
        }
    };
    let mut a = DenseMatrix::zeros(n, n);
    let mut f3 = integral(1.0);
    for j in 0..n {
        let f1 = f3;
        let f2 = integral((((j as f64) + 0.5) * ht).cos());
        f3 = if j + 1 == n / 2 {
            vec![hs; n]
        } else {
            integral((((j + 1) as f64) * ht).cos())
        };
        for i in 0..n {
            a.set(i, j, c * (f1[i] + 4.0 * f2[i] + f3[i]));
        }
    }
    let x_true = (0..n)
        .map(|j| ((j as f64 * ht).cos() - ((j + 1) as f64 * ht).cos()) / ht.sqrt())
        .collect();
    Generated::from_solution(LinearMap::dense(a)?, x_true)
}

/// Inverse heat equation: a Volterra (lower-triangular Toeplitz) kernel with
/// conductivity `kappa`.
pub fn gen_heat(n: usize, kappa: f64) -> Result<Generated> {
    if n < 2 || n % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "heat needs an even n >= 2, got {n}"
        )));
    }
    if !(kappa > 0.0) {
        return Err(Error::InvalidArgument(format!("heat needs kappa > 0, got {kappa}")));
    }
    let h = 1.0 / n as f64;
    let c = h / (2.0 * kappa * PI.sqrt());
    let d = 1.0 / (4.0 * kappa * kappa);
    let kern: Vec<f64> = (0..n)
        .map(|i| {
            let t = (i as f64 + 0.5) * h;
            c * t.powf(-1.5) * (-d / t).exp()
        })
        .collect();
    let a = DenseMatrix::from_fn(n, n, |i, j| if j <= i { kern[i - j] } else { 0.0 });
    let mut x_true = vec![0.0; n];
    for (i, x) in x_true.iter_mut().enumerate().take(n / 2) {
        let ti = (i + 1) as f64 * 20.0 / n as f64;
        *x = if ti < 2.0 {
            0.75 * ti * ti / 4.0
        } else if ti < 3.0 {
            0.75 + (ti - 2.0) * (3.0 - ti)
        } else {
            0.75 * (-(ti - 3.0) * 2.0).exp()
        };
    }
    Generated::from_solution(LinearMap::dense(a)?, x_true)
}

/// Galerkin discretization of the second-derivative Green's function on
/// `[0, 1]`. The kernel is semiseparable, so the operator is stored in that form
/// and applied in `O(n)`; [`LinearMap::to_dense`] recovers the dense matrix.
pub fn gen_deriv2(n: usize, example: u8) -> Result<Generated> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("deriv2 needs n >= 2, got {n}")));
    }
    if !(1..=3).contains(&example) {
        return Err(Error::InvalidArgument(format!(
            "deriv2 example must be 1, 2 or 3, got {example}"
        )));
    }
    let h = 1.0 / n as f64;
    let h2 = h * h;
    let lower: Vec<f64> = (1..=n).map(|j| j as f64 - 0.5).collect();
    let upper: Vec<f64> = (1..=n).map(|i| h2 * ((i as f64 - 0.5) * h - 1.0)).collect();
    let diag: Vec<f64> = (1..=n)
        .map(|i| {
            let i = i as f64;
            h2 * ((i * i - i + 0.25) * h - (i - 2.0 / 3.0))
        })
        .collect();
    // Galerkin coefficients of f against the normalized box functions.
    let antiderivative = |t: f64| -> f64 {
        match example {
            1 => 0.5 * t * t,
            2 => t.exp(),
            _ => {
                if t <= 0.5 {
                    0.5 * t * t
                } else {
                    t - 0.5 * t * t - 0.25
                }
            }
        }
    };
    let sqhi = 1.0 / h.sqrt();
    let x_true = (0..n)
        .map(|i| sqhi * (antiderivative((i + 1) as f64 * h) - antiderivative(i as f64 * h)))
        .collect();
    Generated::from_solution(LinearMap::semiseparable(lower, upper, diag)?, x_true)
}

/// Symmetric banded Toeplitz factor of the Gaussian point-spread function.
pub fn gaussian_toeplitz(side: usize, band: usize, sigma: f64) -> Result<DenseMatrix> {
    if side == 0 || band < 1 || band > side {
        return Err(Error::InvalidArgument(format!(
            "blur band must satisfy 1 <= band <= N (band = {band}, N = {side})"
        )));
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!("blur sigma must be positive, got {sigma}")));
    }
    Ok(DenseMatrix::from_fn(side, side, |i, j| {
        let d = i.abs_diff(j);
        if d < band {
            (-((d * d) as f64) / (2.0 * sigma * sigma)).exp()
        } else {
            0.0
        }
    }))
}

/// `A = (2πσ²)⁻¹ T ⊗ T` acting on row-major `N x N` images.
pub fn gen_gaussian_blur(side: usize, band: usize, sigma: f64) -> Result<LinearMap> {
    let t = gaussian_toeplitz(side, band, sigma)?;
    LinearMap::kronecker(t.clone(), t, 1.0 / (2.0 * PI * sigma * sigma))
}

/// Synthetic `N x N` test image: two flat blocks plus a Gaussian bump.
pub fn phantom_image(side: usize) -> Vec<f64> {
    let denom = (side.max(2) - 1) as f64;
    let mut img = Vec::with_capacity(side * side);
    for i in 0..side {
        for j in 0..side {
            let s = i as f64 / denom;
            let t = j as f64 / denom;
            let mut v = 0.0;
            if (0.15..=0.45).contains(&s) && (0.2..=0.6).contains(&t) {
                v += 1.0;
            }
            if (0.55..=0.85).contains(&s) && (0.55..=0.8).contains(&t) {
                v += 0.6;
            }
            v += 0.8 * (-((s - 0.7).powi(2) + (t - 0.3).powi(2)) / (2.0 * 0.08 * 0.08)).exp();
            img.push(v);
        }
    }
    img
}

pub fn gen_blur_problem(side: usize, band: usize, sigma: f64) -> Result<Generated> {
    Generated::from_solution(gen_gaussian_blur(side, band, sigma)?, phantom_image(side))
}

pub fn first_derivative_1d(n: usize) -> Result<LinearMap> {
    LinearMap::first_diff_1d(n)
}

pub fn first_derivative_2d(side: usize) -> Result<LinearMap> {
    LinearMap::first_diff_2d(side)
}

/// Standard normal samples by the Box–Muller transform on a seeded ChaCha stream.
pub fn standard_normals(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uniform = || {
        // 53 random bits mapped to (0, 1]
        ((rng.next_u64() >> 11) as f64 + 1.0) / (1u64 << 53) as f64
    };
    let mut out = Vec::with_capacity(len + 1);
    while out.len() < len {
        let r = (-2.0 * uniform().ln()).sqrt();
        let theta = 2.0 * PI * uniform();
        out.push(r * theta.cos());
        out.push(r * theta.sin());
    }
    out.truncate(len);
    out
}

/// White noise rescaled so that `‖e‖ = eps · ‖b_true‖`; returns `(b, e)`.
pub fn add_noise(b_true: &[f64], eps: f64, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!("noise level must be >= 0, got {eps}")));
    }
    if eps == 0.0 {
        return Ok((b_true.to_vec(), vec![0.0; b_true.len()]));
    }
    let mut e = standard_normals(b_true.len(), seed);
    let factor = eps * norm2(b_true) / norm2(&e);
    e.iter_mut().for_each(|v| *v *= factor);
    let b = b_true.iter().zip(&e).map(|(x, y)| x + y).collect();
    Ok((b, e))
}

/// Which test problem to generate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ProblemKind {
    Shaw,
    Baart,
    Heat { kappa: f64 },
    Deriv2 { example: u8 },
    /// Gaussian blur of the synthetic phantom; `n` is the grid side.
    Blur { band: usize, sigma: f64 },
}

impl ProblemKind {
    pub fn name(&self) -> &'static str {
        match self {
            ProblemKind::Shaw => "shaw",
            ProblemKind::Baart => "baart",
            ProblemKind::Heat { .. } => "heat",
            ProblemKind::Deriv2 { .. } => "deriv2",
            ProblemKind::Blur { .. } => "blur",
        }
    }

    pub fn is_2d(&self) -> bool {
        matches!(self, ProblemKind::Blur { .. })
    }
}

/// Regularization matrix choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regularizer {
    /// `L₁` in 1D, the stacked `(I ⊗ L₁; L₁ ⊗ I)` in 2D.
    FirstDiff,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub kind: ProblemKind,
    pub n: usize,
    pub eps: f64,
    pub seed: u64,
    pub regularizer: Regularizer,
}

impl ProblemConfig {
    pub fn new(kind: ProblemKind, n: usize, eps: f64, seed: u64) -> Self {
        Self {
            kind,
            n,
            eps,
            seed,
            regularizer: Regularizer::FirstDiff,
        }
    }

    pub fn build(&self) -> Result<ProblemInstance> {
        let gen = match self.kind {
            ProblemKind::Shaw => gen_shaw(self.n)?,
            ProblemKind::Baart => gen_baart(self.n)?,
            ProblemKind::Heat { kappa } => gen_heat(self.n, kappa)?,
            ProblemKind::Deriv2 { example } => gen_deriv2(self.n, example)?,
            ProblemKind::Blur { band, sigma } => gen_blur_problem(self.n, band, sigma)?,
        };
        let cols = gen.a.cols();
        let l = match (self.regularizer, self.kind.is_2d()) {
            (Regularizer::Identity, _) => LinearMap::identity(cols)?,
            (Regularizer::FirstDiff, false) => first_derivative_1d(cols)?,
            (Regularizer::FirstDiff, true) => first_derivative_2d(self.n)?,
        };
        let (b, e) = add_noise(&gen.b_true, self.eps, self.seed)?;
        Ok(ProblemInstance {
            config: Some(self.clone()),
            a: gen.a,
            l,
            b,
            x_true: Some(gen.x_true),
            b_true: Some(gen.b_true),
            noise: Some(e),
            eps: self.eps,
            seed: self.seed,
        })
    }
}

/// A complete problem: operators, data and (for synthetic problems) the truth.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub config: Option<ProblemConfig>,
    pub a: LinearMap,
    pub l: LinearMap,
    pub b: Vec<f64>,
    pub x_true: Option<Vec<f64>>,
    pub b_true: Option<Vec<f64>>,
    pub noise: Option<Vec<f64>>,
    pub eps: f64,
    pub seed: u64,
}

impl ProblemInstance {
    /// Wraps user-supplied operators and data without a known truth.
    pub fn from_data(a: LinearMap, l: LinearMap, b: Vec<f64>) -> Result<Self> {
        crate::error::check_len("problem data", a.rows(), b.len())?;
        crate::error::check_len("A and L columns", a.cols(), l.cols())?;
        Ok(Self {
            config: None,
            a,
            l,
            b,
            x_true: None,
            b_true: None,
            noise: None,
            eps: 0.0,
            seed: 0,
        })
    }

    pub fn name(&self) -> &str {
        self.config.as_ref().map_or("custom", |c| c.kind.name())
    }

    pub fn noise_norm(&self) -> Option<f64> {
        self.noise.as_deref().map(norm2)
    }

    /// Grid side for image problems.
    pub fn image_side(&self) -> Option<usize> {
        self.config
            .as_ref()
            .filter(|c| c.kind.is_2d())
            .map(|c| c.n)
    }
}
