//! Compressed sparse row matrices and direct factorizations backed by faer.

use std::io::Write;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, Lu, SymbolicLlt, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// CSR matrix with sorted, duplicate-free column indices and no stored zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        SparseMatrix { n_rows, n_cols, row_ptr: vec![0; n_rows + 1], col_idx: Vec::new(), values: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix { n_rows: n, n_cols: n, row_ptr: (0..=n).collect(), col_idx: (0..n).collect(), values: vec![1.0; n] }
    }

    /// Sum duplicate entries, sort, and drop exact zeros.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut counts = vec![0usize; n_rows + 1];
        for &(r, c, _) in triplets {
            if r >= n_rows || c >= n_cols {
                return Err(Error::Dimension(format!("entry ({r}, {c}) outside a {n_rows}x{n_cols} matrix")));
            }
            counts[r + 1] += 1;
        }
        for r in 0..n_rows {
            counts[r + 1] += counts[r];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(r, c, v) in triplets {
            cols[next[r]] = c;
            vals[next[r]] = v;
            next[r] += 1;
        }
        let mut out = SparseMatrix::zeros(n_rows, n_cols);
        let mut row: Vec<(usize, f64)> = Vec::new();
        for r in 0..n_rows {
            row.clear();
            row.extend((counts[r]..counts[r + 1]).map(|k| (cols[k], vals[k])));
            // stable sort keeps the summation order deterministic
            row.sort_by_key(|e| e.0);
            let mut k = 0;
            while k < row.len() {
                let c = row[k].0;
                let mut sum = 0.0;
                while k < row.len() && row[k].0 == c {
                    sum += row[k].1;
                    k += 1;
                }
                if sum != 0.0 {
                    out.col_idx.push(c);
                    out.values.push(sum);
                }
            }
            out.row_ptr[r + 1] = out.col_idx.len();
        }
        Ok(out)
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut t = Vec::new();
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                t.push((r, c, m[(r, c)]));
            }
        }
        Self::from_triplets(m.nrows(), m.ncols(), &t).expect("indices are in range")
    }

    pub fn nrows(&self) -> usize {
        self.n_rows
    }

    pub fn ncols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(column, value)` pairs of row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[range.clone()].binary_search(&c) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> DVector<f64> {
        DVector::from_fn(self.n_rows.min(self.n_cols), |i, _| self.get(i, i))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.n_cols, "dimension mismatch in sparse product");
        DVector::from_fn(self.n_rows, |r, _| self.row(r).map(|(c, v)| v * x[c]).sum())
    }

    /// `|A| |x|`, the scale of rounding errors in `A x`.
    pub fn abs_mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.n_cols, "dimension mismatch in sparse product");
        DVector::from_fn(self.n_rows, |r, _| self.row(r).map(|(c, v)| (v * x[c]).abs()).sum())
    }

    /// `x^T A x`.
    pub fn quad_form(&self, x: &DVector<f64>) -> f64 {
        x.dot(&self.mul_vec(x))
    }

    pub fn transpose(&self) -> SparseMatrix {
        let t: Vec<_> = self.iter().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_triplets(self.n_cols, self.n_rows, &t).expect("indices are in range")
    }

    pub fn scaled(&self, alpha: f64) -> SparseMatrix {
        Self::linear_combination(&[(self, alpha)]).expect("single term")
    }

    /// `sum_k alpha_k A_k` over matrices of equal shape.
    pub fn linear_combination(terms: &[(&SparseMatrix, f64)]) -> Result<SparseMatrix> {
        let Some(&(first, _)) = terms.first() else {
            return Err(Error::Dimension("empty linear combination".into()));
        };
        let (n, m) = (first.n_rows, first.n_cols);
        if terms.iter().any(|(a, _)| a.n_rows != n || a.n_cols != m) {
            return Err(Error::Dimension("matrices in a linear combination differ in shape".into()));
        }
        let mut out = SparseMatrix::zeros(n, m);
        let mut acc = vec![0.0; m];
        let mut mark = vec![usize::MAX; m];
        let mut cols = Vec::new();
        for r in 0..n {
            cols.clear();
            for &(a, alpha) in terms {
                for (c, v) in a.row(r) {
                    if mark[c] != r {
                        mark[c] = r;
                        acc[c] = 0.0;
                        cols.push(c);
                    }
                    acc[c] += alpha * v;
                }
            }
            cols.sort_unstable();
            for &c in &cols {
                if acc[c] != 0.0 {
                    out.col_idx.push(c);
                    out.values.push(acc[c]);
                }
            }
            out.row_ptr[r + 1] = out.col_idx.len();
        }
        Ok(out)
    }

    /// `max |A - A^T|`.
    pub fn asymmetry(&self) -> f64 {
        self.iter().map(|(r, c, v)| (v - self.get(c, r)).abs()).fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n_rows, self.n_cols);
        for (r, c, v) in self.iter() {
            d[(r, c)] = v;
        }
        d
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let t: Vec<_> = self.iter().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
        SparseColMat::try_new_from_triplets(self.n_rows, self.n_cols, &t).map_err(|e| Error::Solver(format!("{e:?}")))
    }

    /// Coordinate text export: a header line `rows cols nnz`, then one
    /// `row col value` line per stored entry, zero-based, in row-major order.
    pub fn write_coordinate(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{} {} {}", self.n_rows, self.n_cols, self.nnz())?;
        for (r, c, v) in self.iter() {
            writeln!(w, "{r} {c} {v:e}")?;
        }
        Ok(())
    }
}

/// Sparse direct factorization: Cholesky when the matrix is symmetric
/// positive definite, LU otherwise.
pub enum Factorization {
    Cholesky(Llt<usize, f64>),
    Lu(Lu<usize, f64>),
}

impl std::fmt::Debug for Factorization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(if self.is_cholesky() { "Factorization::Cholesky" } else { "Factorization::Lu" })
    }
}

impl Factorization {
    pub fn new(a: &SparseMatrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::Dimension(format!("cannot factor a {}x{} matrix", a.nrows(), a.ncols())));
        }
        let fa = a.to_faer()?;
        if a.asymmetry() <= 1e-12 * a.max_abs() {
            if let Ok(llt) = SymbolicLlt::try_new(fa.symbolic(), Side::Lower)
                .map_err(|e| format!("{e:?}"))
                .and_then(|s| Llt::try_new_with_symbolic(s, fa.as_ref(), Side::Lower).map_err(|e| format!("{e:?}")))
            {
                return Ok(Factorization::Cholesky(llt));
            }
            log::debug!("Cholesky failed; falling back to LU");
        }
        let sym = SymbolicLu::try_new(fa.symbolic()).map_err(|e| Error::Solver(format!("symbolic LU: {e:?}")))?;
        let lu = Lu::try_new_with_symbolic(sym, fa.as_ref()).map_err(|e| Error::Solver(format!("numeric LU: {e:?}")))?;
        Ok(Factorization::Lu(lu))
    }

    pub fn is_cholesky(&self) -> bool {
        matches!(self, Factorization::Cholesky(_))
    }

    /// Solve for every column of `b`.
    pub fn solve_many(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut x = Mat::<f64>::from_fn(b.nrows(), b.ncols(), |i, j| b[(i, j)]);
        match self {
            Factorization::Cholesky(f) => f.solve_in_place(x.as_mut()),
            Factorization::Lu(f) => f.solve_in_place(x.as_mut()),
        }
        let out = DMatrix::from_fn(b.nrows(), b.ncols(), |i, j| x[(i, j)]);
        if out.iter().all(|v| v.is_finite()) {
            Ok(out)
        } else {
            Err(Error::Solver("factorization produced non-finite values (singular matrix)".into()))
        }
    }

    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        let m = DMatrix::from_column_slice(b.len(), 1, b.as_slice());
        Ok(self.solve_many(&m)?.column(0).into_owned())
    }
}
