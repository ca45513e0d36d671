//! Compressed sparse column matrices with a fixed pattern and a sparse LU
//! solver (backed by faer) that reuses its symbolic analysis.

use faer::prelude::*;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum LinalgError {
    #[error("sparse factorization failed: {0}")]
    Factorization(String),
    #[error("linear solve produced non-finite values (singular or ill-conditioned system)")]
    NonFinite,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
}

/// Square CSC sparsity pattern with sorted row indices per column.
#[derive(Clone, Debug, PartialEq)]
pub struct SparsePattern {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
}

impl SparsePattern {
    /// Builds the pattern from `(row, col)` pairs; duplicates are merged.
    pub fn from_entries(n: usize, entries: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut cols: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (r, c) in entries {
            assert!(r < n && c < n, "entry ({r}, {c}) outside a {n}x{n} pattern");
            cols[c].push(r);
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for mut rows in cols {
            rows.sort_unstable();
            rows.dedup();
            row_idx.extend(rows);
            col_ptr.push(row_idx.len());
        }
        SparsePattern { n, col_ptr, row_idx }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    /// Index into the value array of entry `(row, col)`, if it is stored.
    pub fn position(&self, row: usize, col: usize) -> Option<usize> {
        let (lo, hi) = (self.col_ptr[col], self.col_ptr[col + 1]);
        self.row_idx[lo..hi].binary_search(&row).ok().map(|k| lo + k)
    }

    fn symbolic(&self) -> SymbolicSparseColMatRef<'_, usize> {
        SymbolicSparseColMatRef::new_checked(self.n, self.n, &self.col_ptr, None, &self.row_idx)
    }
}

/// Values over a borrowed pattern.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    pub values: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(pattern: &SparsePattern) -> Self {
        SparseMatrix { values: vec![0.0; pattern.nnz()] }
    }

    pub fn clear(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
    }

    /// `y = A x`.
    pub fn mul_vec(&self, pattern: &SparsePattern, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; pattern.n];
        for c in 0..pattern.n {
            for k in pattern.col_ptr[c]..pattern.col_ptr[c + 1] {
                y[pattern.row_idx[k]] += self.values[k] * x[c];
            }
        }
        y
    }

    /// Dense copy, row-major; intended for tests and small systems.
    pub fn to_dense(&self, pattern: &SparsePattern) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; pattern.n]; pattern.n];
        for c in 0..pattern.n {
            for k in pattern.col_ptr[c]..pattern.col_ptr[c + 1] {
                d[pattern.row_idx[k]][c] = self.values[k];
            }
        }
        d
    }
}

/// Sparse LU with the fill-reducing analysis computed once per pattern.
pub struct LuSolver {
    symbolic: SymbolicLu<usize>,
    n: usize,
}

impl LuSolver {
    pub fn new(pattern: &SparsePattern) -> Result<Self, LinalgError> {
        let symbolic = SymbolicLu::try_new(pattern.symbolic()).map_err(|e| LinalgError::Factorization(format!("{e:?}")))?;
        Ok(LuSolver { symbolic, n: pattern.n })
    }

    /// Factorizes `matrix` and solves for each right-hand side.
    pub fn factor(&self, pattern: &SparsePattern, matrix: &SparseMatrix) -> Result<Factorization, LinalgError> {
        if pattern.n != self.n {
            return Err(LinalgError::Dimension { expected: self.n, found: pattern.n });
        }
        let a = SparseColMatRef::new(pattern.symbolic(), &matrix.values);
        let lu = Lu::try_new_with_symbolic(self.symbolic.clone(), a).map_err(|e| LinalgError::Factorization(format!("{e:?}")))?;
        Ok(Factorization { lu, n: self.n })
    }

    pub fn solve(&self, pattern: &SparsePattern, matrix: &SparseMatrix, rhs: &[f64]) -> Result<Vec<f64>, LinalgError> {
        self.factor(pattern, matrix)?.solve(rhs)
    }
}

/// A numeric LU factorization, reusable for several right-hand sides.
pub struct Factorization {
    lu: Lu<usize, f64>,
    n: usize,
}

impl Factorization {
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if rhs.len() != self.n {
            return Err(LinalgError::Dimension { expected: self.n, found: rhs.len() });
        }
        let b = Mat::<f64>::from_fn(self.n, 1, |i, _| rhs[i]);
        let x = self.lu.solve(&b);
        let out: Vec<f64> = (0..self.n).map(|i| x[(i, 0)]).collect();
        if out.iter().all(|v| v.is_finite()) {
            Ok(out)
        } else {
            Err(LinalgError::NonFinite)
        }
    }
}
