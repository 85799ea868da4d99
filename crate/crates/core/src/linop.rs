//! Matrix-free linear operators.
//!
//! Every solver in this crate touches `A` and `L` only through [`LinearMap::apply`]
//! and [`LinearMap::apply_t`]. The structured kinds (Kronecker products, stacks,
//! difference stencils) are applied without ever assembling a dense matrix.
//!
//! Vectors that represent images are stored row-major: pixel `(i, j)` of an
//! `N x N` image lives at index `i * N + j`. With that convention
//! `(T_L ⊗ T_R) vec(X) = vec(T_L X T_Rᵀ)`.

use std::fmt;
use std::io::{BufRead, Write};
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{check_len, Error, Result};
use crate::vecops::dot;

/// Dense row-major matrix.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DenseMatrix({}x{})", self.rows, self.cols)
    }
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_len("DenseMatrix::new", rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn frobenius_norm(&self) -> f64 {
        dot(&self.data, &self.data).sqrt()
    }

    pub fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub fn from_nalgebra(m: &DMatrix<f64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }

    fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for (yi, row) in y.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *yi = dot(row, x);
        }
    }

    fn matvec_t_into(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for (&xi, row) in x.iter().zip(self.data.chunks_exact(self.cols)) {
            if xi != 0.0 {
                for (yj, &a) in y.iter_mut().zip(row) {
                    *yj += xi * a;
                }
            }
        }
    }

    /// Writes the plain-text matrix format: a `rows cols` header line followed by
    /// one line of whitespace-separated values per row.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{} {}", self.rows, self.cols)?;
        for i in 0..self.rows {
            let line: Vec<String> = self.row(i).iter().map(|v| format!("{v:e}")).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty matrix file".into()))??;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|e| Error::Parse(format!("header: {e}"))))
            .collect::<Result<_>>()?;
        if dims.len() != 2 {
            return Err(Error::Parse(format!("header must be `rows cols`, got `{header}`")));
        }
        let (rows, cols) = (dims[0], dims[1]);
        let mut data = Vec::with_capacity(rows * cols);
        for (i, line) in lines.enumerate().take(rows) {
            let line = line?;
            let before = data.len();
            for tok in line.split_whitespace() {
                data.push(
                    tok.parse::<f64>()
                        .map_err(|e| Error::Parse(format!("row {i}: `{tok}`: {e}")))?,
                );
            }
            if data.len() - before != cols {
                return Err(Error::Parse(format!(
                    "row {i} has {} entries, expected {cols}",
                    data.len() - before
                )));
            }
        }
        if data.len() != rows * cols {
            return Err(Error::Parse(format!(
                "expected {rows} rows, found {}",
                data.len() / cols.max(1)
            )));
        }
        Self::new(rows, cols, data)
    }
}

/// Structure behind a [`LinearMap`].
#[derive(Debug, Clone)]
pub enum MapKind {
    Dense(DenseMatrix),
    /// `scale · (left ⊗ right)`.
    Kronecker {
        left: DenseMatrix,
        right: DenseMatrix,
        scale: f64,
    },
    VStack(LinearMap, LinearMap),
    Identity,
    /// The `(n-1) x n` difference matrix with rows `(.., 1, -1, ..)`.
    FirstDiff1d,
    /// `(I_N ⊗ L₁; L₁ ⊗ I_N)` on an `N x N` grid.
    FirstDiff2d { side: usize },
    /// Symmetric semiseparable matrix: `a[i][j] = upper[max(i,j)] * lower[min(i,j)]`
    /// off the diagonal and `diag[i]` on it.
    Semiseparable {
        lower: Vec<f64>,
        upper: Vec<f64>,
        diag: Vec<f64>,
    },
}

/// An immutable, cheaply clonable linear operator with declared dimensions.
#[derive(Debug, Clone)]
pub struct LinearMap {
    rows: usize,
    cols: usize,
    kind: Arc<MapKind>,
}

impl LinearMap {
    pub fn dense(m: DenseMatrix) -> Result<Self> {
        if m.rows == 0 || m.cols == 0 {
            return Err(Error::InvalidArgument("dense map needs positive dimensions".into()));
        }
        Ok(Self {
            rows: m.rows,
            cols: m.cols,
            kind: Arc::new(MapKind::Dense(m)),
        })
    }

    pub fn identity(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("identity needs n >= 1".into()));
        }
        Ok(Self {
            rows: n,
            cols: n,
            kind: Arc::new(MapKind::Identity),
        })
    }

    pub fn first_diff_1d(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "first difference needs n >= 2, got {n}"
            )));
        }
        Ok(Self {
            rows: n - 1,
            cols: n,
            kind: Arc::new(MapKind::FirstDiff1d),
        })
    }

    pub fn first_diff_2d(side: usize) -> Result<Self> {
        if side < 2 {
            return Err(Error::InvalidArgument(format!(
                "2D first difference needs N >= 2, got {side}"
            )));
        }
        Ok(Self {
            rows: 2 * side * (side - 1),
            cols: side * side,
            kind: Arc::new(MapKind::FirstDiff2d { side }),
        })
    }

    pub fn kronecker(left: DenseMatrix, right: DenseMatrix, scale: f64) -> Result<Self> {
        if left.rows == 0 || right.rows == 0 || left.cols == 0 || right.cols == 0 {
            return Err(Error::InvalidArgument("empty Kronecker factor".into()));
        }
        Ok(Self {
            rows: left.rows * right.rows,
            cols: left.cols * right.cols,
            kind: Arc::new(MapKind::Kronecker { left, right, scale }),
        })
    }

    pub fn vstack(top: LinearMap, bottom: LinearMap) -> Result<Self> {
        check_len("vstack columns", top.cols, bottom.cols)?;
        Ok(Self {
            rows: top.rows + bottom.rows,
            cols: top.cols,
            kind: Arc::new(MapKind::VStack(top, bottom)),
        })
    }

    pub fn semiseparable(lower: Vec<f64>, upper: Vec<f64>, diag: Vec<f64>) -> Result<Self> {
        let n = diag.len();
        if n == 0 {
            return Err(Error::InvalidArgument("empty semiseparable map".into()));
        }
        check_len("semiseparable lower generator", n, lower.len())?;
        check_len("semiseparable upper generator", n, upper.len())?;
        Ok(Self {
            rows: n,
            cols: n,
            kind: Arc::new(MapKind::Semiseparable { lower, upper, diag }),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn kind(&self) -> &MapKind {
        &self.kind
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.rows];
        self.apply_to(x, &mut y)?;
        Ok(y)
    }

    pub fn apply_t(&self, y: &[f64]) -> Result<Vec<f64>> {
        let mut x = vec![0.0; self.cols];
        self.apply_t_to(y, &mut x)?;
        Ok(x)
    }

    /// `out = self · x`, overwriting `out`.
    pub fn apply_to(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        check_len("apply input", self.cols, x.len())?;
        check_len("apply output", self.rows, out.len())?;
        self.forward(x, out);
        Ok(())
    }

    /// `out = selfᵀ · y`, overwriting `out`.
    pub fn apply_t_to(&self, y: &[f64], out: &mut [f64]) -> Result<()> {
        check_len("apply_t input", self.rows, y.len())?;
        check_len("apply_t output", self.cols, out.len())?;
        self.adjoint(y, out);
        Ok(())
    }

    fn forward(&self, x: &[f64], out: &mut [f64]) {
        match &*self.kind {
            MapKind::Dense(m) => m.matvec_into(x, out),
            MapKind::Identity => out.copy_from_slice(x),
            MapKind::FirstDiff1d => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = x[i] - x[i + 1];
                }
            }
            MapKind::FirstDiff2d { side } => {
                let n = *side;
                let (rows_part, cols_part) = out.split_at_mut(n * (n - 1));
                for i in 0..n {
                    for j in 0..n - 1 {
                        rows_part[i * (n - 1) + j] = x[i * n + j] - x[i * n + j + 1];
                    }
                }
                for i in 0..n - 1 {
                    for j in 0..n {
                        cols_part[i * n + j] = x[i * n + j] - x[(i + 1) * n + j];
                    }
                }
            }
            MapKind::Kronecker { left, right, scale } => {
                kron_apply(left, right, *scale, x, out);
            }
            MapKind::VStack(top, bottom) => {
                let (a, b) = out.split_at_mut(top.rows);
                top.forward(x, a);
                bottom.forward(x, b);
            }
            MapKind::Semiseparable { lower, upper, diag } => {
                semiseparable_apply(lower, upper, diag, x, out);
            }
        }
    }

    fn adjoint(&self, y: &[f64], out: &mut [f64]) {
        match &*self.kind {
            MapKind::Dense(m) => m.matvec_t_into(y, out),
            MapKind::Identity => out.copy_from_slice(y),
            MapKind::FirstDiff1d => {
                let p = y.len();
                out[0] = y[0];
                for j in 1..p {
                    out[j] = y[j] - y[j - 1];
                }
                out[p] = -y[p - 1];
            }
            MapKind::FirstDiff2d { side } => {
                let n = *side;
                out.iter_mut().for_each(|v| *v = 0.0);
                let (rows_part, cols_part) = y.split_at(n * (n - 1));
                for i in 0..n {
                    for j in 0..n - 1 {
                        let v = rows_part[i * (n - 1) + j];
                        out[i * n + j] += v;
                        out[i * n + j + 1] -= v;
                    }
                }
                for i in 0..n - 1 {
                    for j in 0..n {
                        let v = cols_part[i * n + j];
                        out[i * n + j] += v;
                        out[(i + 1) * n + j] -= v;
                    }
                }
            }
            MapKind::Kronecker { left, right, scale } => {
                kron_apply_t(left, right, *scale, y, out);
            }
            MapKind::VStack(top, bottom) => {
                let (a, b) = y.split_at(top.rows);
                top.adjoint(a, out);
                let mut tmp = vec![0.0; self.cols];
                bottom.adjoint(b, &mut tmp);
                for (o, t) in out.iter_mut().zip(&tmp) {
                    *o += t;
                }
            }
            MapKind::Semiseparable { lower, upper, diag } => {
                semiseparable_apply(lower, upper, diag, y, out);
            }
        }
    }

    /// Assembles the operator column by column. Intended for desk-scale checks.
    pub fn to_dense(&self) -> DenseMatrix {
        if let MapKind::Dense(m) = &*self.kind {
            return m.clone();
        }
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        let mut e = vec![0.0; self.cols];
        let mut col = vec![0.0; self.rows];
        for j in 0..self.cols {
            e[j] = 1.0;
            self.forward(&e, &mut col);
            for (i, &v) in col.iter().enumerate() {
                out.set(i, j, v);
            }
            e[j] = 0.0;
        }
        out
    }

    /// Short name of the operator kind, used in metadata files.
    pub fn kind_name(&self) -> &'static str {
        match &*self.kind {
            MapKind::Dense(_) => "dense",
            MapKind::Kronecker { .. } => "kronecker",
            MapKind::VStack(..) => "vstack",
            MapKind::Identity => "identity",
            MapKind::FirstDiff1d => "first_diff_1d",
            MapKind::FirstDiff2d { .. } => "first_diff_2d",
            MapKind::Semiseparable { .. } => "semiseparable",
        }
    }
}

fn kron_apply(left: &DenseMatrix, right: &DenseMatrix, scale: f64, x: &[f64], out: &mut [f64]) {
    // X is cols_L x cols_R; tmp = X Rᵀ is cols_L x rows_R; Y = L tmp.
    let (cl, cr, rr) = (left.cols, right.cols, right.rows);
    let mut tmp = vec![0.0; cl * rr];
    for a in 0..cl {
        let xrow = &x[a * cr..(a + 1) * cr];
        for r in 0..rr {
            tmp[a * rr + r] = dot(right.row(r), xrow);
        }
    }
    out.iter_mut().for_each(|v| *v = 0.0);
    for l in 0..left.rows {
        let orow = &mut out[l * rr..(l + 1) * rr];
        for (a, &tla) in left.row(l).iter().enumerate() {
            if tla != 0.0 {
                let trow = &tmp[a * rr..(a + 1) * rr];
                for (o, &t) in orow.iter_mut().zip(trow) {
                    *o += tla * t;
                }
            }
        }
        orow.iter_mut().for_each(|v| *v *= scale);
    }
}

fn kron_apply_t(left: &DenseMatrix, right: &DenseMatrix, scale: f64, y: &[f64], out: &mut [f64]) {
    // Y is rows_L x rows_R; X = Lᵀ Y R is cols_L x cols_R.
    let (rl, rr, cr) = (left.rows, right.rows, right.cols);
    let mut tmp = vec![0.0; rl * cr];
    for l in 0..rl {
        let trow = &mut tmp[l * cr..(l + 1) * cr];
        for r in 0..rr {
            let v = y[l * rr + r];
            if v != 0.0 {
                for (t, &rv) in trow.iter_mut().zip(right.row(r)) {
                    *t += v * rv;
                }
            }
        }
    }
    out.iter_mut().for_each(|v| *v = 0.0);
    for l in 0..rl {
        let trow = &tmp[l * cr..(l + 1) * cr];
        for (a, &tla) in left.row(l).iter().enumerate() {
            if tla != 0.0 {
                let orow = &mut out[a * cr..(a + 1) * cr];
                for (o, &t) in orow.iter_mut().zip(trow) {
                    *o += tla * t;
                }
            }
        }
    }
    out.iter_mut().for_each(|v| *v *= scale);
}

fn semiseparable_apply(lower: &[f64], upper: &[f64], diag: &[f64], x: &[f64], out: &mut [f64]) {
    // out_i = d_i x_i + upper_i Σ_{j<i} lower_j x_j + lower_i Σ_{j>i} upper_j x_j
    let n = diag.len();
    let mut acc = 0.0;
    for i in 0..n {
        out[i] = diag[i] * x[i] + upper[i] * acc;
        acc += lower[i] * x[i];
    }
    acc = 0.0;
    for i in (0..n).rev() {
        out[i] += lower[i] * acc;
        acc += upper[i] * x[i];
    }
}
