//! Dense GSVD of a pair `{A, L}` through the QR factorization of `(A; L)` and the
//! CS decomposition of `{Q_A, Q_L}`. Used as a reference at desk scale: Tikhonov
//! and TGSVD solutions, the null-space term `g_⊥`, and the filter factors of the
//! JBDQR iterates.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linop::DenseMatrix;

/// `s_i` at or below this value puts index `i` in the `c = 1` block.
pub const NULL_THRESHOLD: f64 = 1e-8;

/// Relative threshold on the singular values of `R` for the stacked rank test.
pub const STACKED_RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Ordering {
    /// Regular indices by decreasing `c`, the `c = 1` block last.
    #[default]
    PaperSvda,
    /// The `c = 1` block first, then regular indices by decreasing `c`.
    Relabeled,
}

#[derive(Debug, Clone)]
pub struct GsvdFactors {
    /// `m x m` orthogonal; column `i < n` pairs with index `i`.
    pub p_a: DMatrix<f64>,
    /// `p x p` orthogonal.
    pub p_l: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub c: Vec<f64>,
    pub s: Vec<f64>,
    /// `G = R⁻¹ W`, columns `g_i`.
    pub g: DMatrix<f64>,
    pub ordering: Ordering,
    /// Column of `P_L` paired with each index, `None` in the `c = 1` block.
    pub pl_index: Vec<Option<usize>>,
}

pub fn gsvd(a: &DenseMatrix, l: &DenseMatrix, ordering: Ordering) -> Result<GsvdFactors> {
    gsvd_nalgebra(&a.to_nalgebra(), &l.to_nalgebra(), ordering)
}

pub fn gsvd_nalgebra(a: &DMatrix<f64>, l: &DMatrix<f64>, ordering: Ordering) -> Result<GsvdFactors> {
    let (m, n) = a.shape();
    let p = l.nrows();
    check_len("gsvd: L columns", n, l.ncols())?;
    if m < n {
        return Err(Error::InvalidArgument(format!(
            "gsvd needs m >= n, got {m} x {n}"
        )));
    }
    let mut stacked = DMatrix::zeros(m + p, n);
    stacked.rows_mut(0, m).copy_from(a);
    stacked.rows_mut(m, p).copy_from(l);
    let qr = stacked.qr();
    let q = qr.q();
    let r = qr.r();
    let rsv = r.singular_values();
    let rmax = rsv.max();
    let rank = rsv.iter().filter(|&&v| v > STACKED_RANK_TOL * rmax).count();
    if rank < n {
        return Err(Error::StackedRankDeficient { rank, n });
    }
    let qa = q.rows(0, m).into_owned();
    let ql = q.rows(m, p).into_owned();

    let svd = qa.svd(true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested V^T");
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let c_sorted: Vec<f64> = idx.iter().map(|&i| svd.singular_values[i].min(1.0)).collect();
    let u_sorted = DMatrix::from_fn(m, n, |r_, j| u[(r_, idx[j])]);
    let w_sorted = DMatrix::from_fn(n, n, |r_, j| vt[(idx[j], r_)]);

    // s_i = ‖Q_L w_i‖; the `c = 1` block collects the negligible ones
    let t = &ql * &w_sorted;
    let norms: Vec<f64> = (0..n).map(|j| t.column(j).norm()).collect();
    let mut regular: Vec<usize> = (0..n).filter(|&j| norms[j] > NULL_THRESHOLD).collect();
    if regular.len() > p {
        regular.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
        regular.truncate(p);
        regular.sort_unstable();
    }
    let null: Vec<usize> = (0..n).filter(|j| !regular.contains(j)).collect();

    // P_L from a Householder QR of the regular columns of Q_L W, largest s first
    let mut qr_order = regular.clone();
    qr_order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let nr = qr_order.len();
    let mut s_sorted = vec![0.0; n];
    let mut pl_cols: Vec<Option<DVector<f64>>> = vec![None; n];
    let mut pl_full = DMatrix::identity(p, p);
    if nr > 0 {
        let treg = DMatrix::from_fn(p, nr, |r_, j| t[(r_, qr_order[j])]);
        let qr2 = treg.qr();
        let r2 = qr2.r();
        let q2 = qr2.q();
        qr2.q_tr_mul(&mut pl_full);
        pl_full.transpose_mut();
        for (jj, &j) in qr_order.iter().enumerate() {
            let d = r2[(jj, jj)];
            s_sorted[j] = d.abs();
            let col = q2.column(jj) * d.signum();
            pl_cols[j] = Some(col);
        }
    }

    let perm: Vec<usize> = match ordering {
        Ordering::PaperSvda => regular.iter().chain(&null).copied().collect(),
        Ordering::Relabeled => null.iter().chain(&regular).copied().collect(),
    };

    let mut c = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    let mut pl_index = Vec::with_capacity(n);
    let mut p_l = DMatrix::zeros(p, p);
    let mut next_pl = 0;
    for &j in &perm {
        if let Some(col) = &pl_cols[j] {
            c.push(c_sorted[j]);
            s.push(s_sorted[j]);
            p_l.set_column(next_pl, col);
            pl_index.push(Some(next_pl));
            next_pl += 1;
        } else {
            c.push(1.0);
            s.push(0.0);
            pl_index.push(None);
        }
    }
    for j in nr..p {
        p_l.set_column(j, &pl_full.column(j));
    }

    let mut p_a = DMatrix::zeros(m, m);
    for (jj, &j) in perm.iter().enumerate() {
        p_a.set_column(jj, &u_sorted.column(j));
    }
    if m > n {
        let mut full = DMatrix::identity(m, m);
        let qr3 = u_sorted.clone().qr();
        qr3.q_tr_mul(&mut full);
        full.transpose_mut();
        for j in n..m {
            p_a.set_column(j, &full.column(j));
        }
    }
    let w = DMatrix::from_fn(n, n, |r_, jj| w_sorted[(r_, perm[jj])]);
    let g = r
        .solve_upper_triangular(&w)
        .ok_or_else(|| Error::Singular("R is singular".into()))?;

    Ok(GsvdFactors {
        p_a,
        p_l,
        w,
        r,
        c,
        s,
        g,
        ordering,
        pl_index,
    })
}

impl GsvdFactors {
    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn m(&self) -> usize {
        self.p_a.nrows()
    }

    pub fn p(&self) -> usize {
        self.p_l.nrows()
    }

    /// Number of indices in the `c = 1` block.
    pub fn null_count(&self) -> usize {
        self.pl_index.iter().filter(|v| v.is_none()).count()
    }

    /// Regular indices ordered by decreasing `c` (dominant first).
    pub fn regular_indices(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.n()).filter(|&i| self.pl_index[i].is_some()).collect();
        idx.sort_by(|&i, &j| self.c[j].total_cmp(&self.c[i]).then(i.cmp(&j)));
        idx
    }

    pub fn null_indices(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.pl_index[i].is_none()).collect()
    }

    pub fn c_matrix(&self) -> DMatrix<f64> {
        let mut cm = DMatrix::zeros(self.m(), self.n());
        for (i, &ci) in self.c.iter().enumerate() {
            cm[(i, i)] = ci;
        }
        cm
    }

    pub fn s_matrix(&self) -> DMatrix<f64> {
        let mut sm = DMatrix::zeros(self.p(), self.n());
        for (i, row) in self.pl_index.iter().enumerate() {
            if let Some(r) = row {
                sm[(*r, i)] = self.s[i];
            }
        }
        sm
    }

    /// `G⁻¹ = Wᵀ R`.
    pub fn g_inverse(&self) -> DMatrix<f64> {
        self.w.transpose() * &self.r
    }

    pub fn reconstruct_a(&self) -> DMatrix<f64> {
        &self.p_a * self.c_matrix() * self.g_inverse()
    }

    pub fn reconstruct_l(&self) -> DMatrix<f64> {
        &self.p_l * self.s_matrix() * self.g_inverse()
    }

    /// `max_i |c_i² + s_i² − 1|`.
    pub fn cs_identity_error(&self) -> f64 {
        self.c
            .iter()
            .zip(&self.s)
            .map(|(c, s)| (c * c + s * s - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// `p_{i,A}ᵀ b` for the `n` paired columns.
    pub fn coefficients(&self, b: &[f64]) -> Result<Vec<f64>> {
        check_len("gsvd: right-hand side", self.m(), b.len())?;
        let bv = DVector::from_column_slice(b);
        Ok((0..self.n()).map(|i| self.p_a.column(i).dot(&bv)).collect())
    }

    fn expand(&self, weights: &[f64]) -> Vec<f64> {
        let x = &self.g * DVector::from_column_slice(weights);
        x.iter().copied().collect()
    }

    /// `g_⊥ = Σ_{c=1 block} (p_{i,A}ᵀ b) g_i`, zero when `p ≥ n`.
    pub fn null_space_term(&self, b: &[f64]) -> Result<Vec<f64>> {
        let coef = self.coefficients(b)?;
        let mut wts = vec![0.0; self.n()];
        for i in self.null_indices() {
            wts[i] = coef[i];
        }
        Ok(self.expand(&wts))
    }

    /// Expansion `Σ f_i (p_{i,A}ᵀ b / c_i) g_i + f_⊥ g_⊥` over the regular indices,
    /// with `filters` indexed like `c`.
    pub fn filtered_solution(&self, b: &[f64], filters: &[f64], null_filter: f64) -> Result<Vec<f64>> {
        check_len("gsvd: filters", self.n(), filters.len())?;
        let coef = self.coefficients(b)?;
        let mut wts = vec![0.0; self.n()];
        for i in 0..self.n() {
            if self.pl_index[i].is_none() {
                wts[i] = null_filter * coef[i];
            } else if filters[i] != 0.0 {
                if self.c[i] == 0.0 {
                    return Err(Error::Singular(format!("c_{} = 0 with a nonzero filter", i + 1)));
                }
                wts[i] = filters[i] * coef[i] / self.c[i];
            }
        }
        Ok(self.expand(&wts))
    }

    /// `x_λ = (AᵀA + λ²LᵀL)⁻¹ Aᵀ b` through the filter factors `c²/(c² + λ²s²)`.
    pub fn tikhonov_solution(&self, b: &[f64], lambda: f64) -> Result<Vec<f64>> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {lambda}")));
        }
        let mut f = vec![0.0; self.n()];
        for i in 0..self.n() {
            let (c, s) = (self.c[i], self.s[i]);
            if self.pl_index[i].is_none() {
                continue;
            }
            if c == 0.0 && lambda == 0.0 {
                return Err(Error::Singular(format!("c_{} = 0 at lambda = 0", i + 1)));
            }
            f[i] = c * c / (c * c + lambda * lambda * s * s);
        }
        self.filtered_solution(b, &f, 1.0)
    }

    /// The `k` dominant regular components plus `g_⊥`.
    pub fn tgsvd_solution(&self, b: &[f64], k: usize) -> Result<Vec<f64>> {
        let reg = self.regular_indices();
        if k > reg.len() {
            return Err(Error::InvalidArgument(format!(
                "TGSVD truncation {k} exceeds min(n, p) = {}",
                reg.len()
            )));
        }
        let mut f = vec![0.0; self.n()];
        for &i in &reg[..k] {
            f[i] = 1.0;
        }
        self.filtered_solution(b, &f, 1.0)
    }

    /// `(i, c_i, |p_{i,A}ᵀ b|, |p_{i,A}ᵀ b| / c_i)` over the regular indices, dominant first.
    pub fn picard_table(&self, b: &[f64]) -> Result<Vec<PicardRow>> {
        let coef = self.coefficients(b)?;
        Ok(self
            .regular_indices()
            .into_iter()
            .enumerate()
            .map(|(rank, i)| PicardRow {
                index: rank + 1,
                c: self.c[i],
                coefficient: coef[i].abs(),
                ratio: coef[i].abs() / self.c[i],
            })
            .collect())
    }

    /// Write every factor as a plain-text matrix into `dir`.
    pub fn export(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mats = [
            ("P_A.txt", &self.p_a),
            ("P_L.txt", &self.p_l),
            ("W.txt", &self.w),
            ("R.txt", &self.r),
            ("G.txt", &self.g),
        ];
        for (name, mat) in mats {
            let file = std::fs::File::create(dir.join(name))?;
            DenseMatrix::from_nalgebra(mat).write_text(std::io::BufWriter::new(file))?;
        }
        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("cs.txt"))?);
        for (c, s) in self.c.iter().zip(&self.s) {
            writeln!(f, "{c:e} {s:e}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PicardRow {
    pub index: usize,
    pub c: f64,
    pub coefficient: f64,
    pub ratio: f64,
}

/// Index after which `|p_{i,A}ᵀ b|` stops decaying: the first `i` from which
/// the running geometric mean over a window stays within `factor` of its tail value.
pub fn picard_plateau(rows: &[PicardRow], window: usize, factor: f64) -> Option<usize> {
    if rows.len() < 2 * window || window == 0 {
        return None;
    }
    let logs: Vec<f64> = rows.iter().map(|r| r.coefficient.max(f64::MIN_POSITIVE).ln()).collect();
    let mean = |a: usize| logs[a..a + window].iter().sum::<f64>() / window as f64;
    let tail = mean(logs.len() - window);
    (0..=logs.len() - window).find(|&i| (i..=logs.len() - window).all(|j| (mean(j) - tail).abs() <= factor.ln()))
}

/// `f_i = 1 − ∏_j (c̃_j² − c_i²)/c̃_j²` for every `c_i`, with `ritz` the Ritz values `c̃_j`.
pub fn filter_factors(c: &[f64], ritz: &[f64]) -> Result<Vec<f64>> {
    if ritz.is_empty() {
        return Err(Error::InvalidArgument("no Ritz values".into()));
    }
    if ritz.iter().any(|&r| r == 0.0 || !r.is_finite()) {
        return Err(Error::InvalidArgument("Ritz values must be nonzero and finite".into()));
    }
    Ok(c
        .iter()
        .map(|&ci| {
            let ts: Vec<f64> = ritz.iter().map(|&r| (ci * ci) / (r * r)).collect();
            if ts.iter().all(|&t| t < 1.0) {
                // 1 − ∏(1 − t_j) without cancellation for small t
                -(ts.iter().map(|&t| (-t).ln_1p()).sum::<f64>()).exp_m1()
            } else {
                1.0 - ts.iter().map(|&t| 1.0 - t).product::<f64>()
            }
        })
        .collect())
}
