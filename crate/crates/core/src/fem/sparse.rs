use crate::error::{Error, Result};
use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, SymbolicSparseColMat};
use faer::Mat;
use std::sync::{Arc, Mutex};

/// Compressed-column sparsity pattern with sorted row indices.
#[derive(Debug)]
pub struct Pattern {
    nrows: usize,
    ncols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    symbolic_lu: Mutex<Option<SymbolicLu<usize>>>,
}

impl Pattern {
    /// Builds a pattern from per-column row lists (duplicates allowed).
    pub fn from_columns(nrows: usize, mut cols: Vec<Vec<usize>>) -> Pattern {
        let ncols = cols.len();
        let mut col_ptr = Vec::with_capacity(ncols + 1);
        col_ptr.push(0);
        let mut row_idx = Vec::new();
        for c in cols.iter_mut() {
            c.sort_unstable();
            c.dedup();
            debug_assert!(c.last().is_none_or(|&r| r < nrows));
            row_idx.extend_from_slice(c);
            col_ptr.push(row_idx.len());
        }
        Pattern { nrows, ncols, col_ptr, row_idx, symbolic_lu: Mutex::new(None) }
    }

    pub fn from_entries(nrows: usize, ncols: usize, entries: impl IntoIterator<Item = (usize, usize)>) -> Pattern {
        let mut cols = vec![Vec::new(); ncols];
        for (r, c) in entries {
            cols[c].push(r);
        }
        Pattern::from_columns(nrows, cols)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_idx(&self) -> &[usize] {
        &self.row_idx
    }

    /// Storage position of entry `(r, c)`.
    #[inline]
    pub fn position(&self, r: usize, c: usize) -> Option<usize> {
        let lo = self.col_ptr[c];
        let hi = self.col_ptr[c + 1];
        self.row_idx[lo..hi].binary_search(&r).ok().map(|k| lo + k)
    }

    fn symbolic(&self) -> SymbolicSparseColMat<usize> {
        SymbolicSparseColMat::new_checked(self.nrows, self.ncols, self.col_ptr.clone(), None, self.row_idx.clone())
    }
}

/// Sparse matrix in compressed-column form over a shared pattern.
#[derive(Clone, Debug)]
pub struct CscMatrix {
    pattern: Arc<Pattern>,
    values: Vec<f64>,
}

impl CscMatrix {
    pub fn zeros(pattern: Arc<Pattern>) -> Self {
        let values = vec![0.0; pattern.nnz()];
        CscMatrix { pattern, values }
    }

    pub fn identity(n: usize) -> Self {
        let p = Pattern::from_entries(n, n, (0..n).map(|i| (i, i)));
        CscMatrix { pattern: Arc::new(p), values: vec![1.0; n] }
    }

    pub fn from_triplets(nrows: usize, ncols: usize, t: &[(usize, usize, f64)]) -> Self {
        let pattern = Arc::new(Pattern::from_entries(nrows, ncols, t.iter().map(|&(r, c, _)| (r, c))));
        let mut m = CscMatrix::zeros(pattern);
        for &(r, c, v) in t {
            m.add(r, c, v);
        }
        m
    }

    pub fn pattern(&self) -> &Arc<Pattern> {
        &self.pattern
    }

    pub fn nrows(&self) -> usize {
        self.pattern.nrows
    }

    pub fn ncols(&self) -> usize {
        self.pattern.ncols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Adds `v` to entry `(r, c)`, which must be in the pattern.
    #[inline]
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        match self.pattern.position(r, c) {
            Some(k) => self.values[k] += v,
            None => panic!("entry ({r}, {c}) is not in the sparsity pattern"),
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.pattern.position(r, c).map_or(0.0, |k| self.values[k])
    }

    pub fn fill_zero(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
    }

    /// `y = A x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows()];
        self.mul_vec_add(x, &mut y);
        y
    }

    /// `y += A x`
    pub fn mul_vec_add(&self, x: &[f64], y: &mut [f64]) {
        let p = &self.pattern;
        for c in 0..p.ncols {
            let xc = x[c];
            if xc == 0.0 {
                continue;
            }
            for k in p.col_ptr[c]..p.col_ptr[c + 1] {
                y[p.row_idx[k]] += self.values[k] * xc;
            }
        }
    }

    /// `y = A^T x`
    pub fn mul_transpose_vec(&self, x: &[f64]) -> Vec<f64> {
        let p = &self.pattern;
        (0..p.ncols).map(|c| (p.col_ptr[c]..p.col_ptr[c + 1]).map(|k| self.values[k] * x[p.row_idx[k]]).sum()).collect()
    }

    /// Replaces row `r` by the unit row `e_r`. Requires a structurally
    /// symmetric pattern so that row entries can be found by columns.
    pub fn set_identity_row(&mut self, r: usize) {
        let p = self.pattern.clone();
        for k in p.col_ptr[r]..p.col_ptr[r + 1] {
            let c = p.row_idx[k];
            if let Some(pos) = p.position(r, c) {
                self.values[pos] = if c == r { 1.0 } else { 0.0 };
            }
        }
    }

    pub fn transpose(&self) -> CscMatrix {
        let p = &self.pattern;
        let mut t = Vec::with_capacity(p.nnz());
        for c in 0..p.ncols {
            for k in p.col_ptr[c]..p.col_ptr[c + 1] {
                t.push((c, p.row_idx[k], self.values[k]));
            }
        }
        CscMatrix::from_triplets(p.ncols, p.nrows, &t)
    }

    /// Dense copy, for small systems.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let p = &self.pattern;
        let mut d = vec![vec![0.0; p.ncols]; p.nrows];
        for c in 0..p.ncols {
            for k in p.col_ptr[c]..p.col_ptr[c + 1] {
                d[p.row_idx[k]][c] += self.values[k];
            }
        }
        d
    }

    fn to_faer(&self) -> SparseColMat<usize, f64> {
        SparseColMat::new(self.pattern.symbolic(), self.values.clone())
    }
}

/// Sparse LU factorization. The symbolic analysis is cached on the pattern
/// and reused by every matrix sharing it.
pub struct SparseLu {
    lu: Lu<usize, f64>,
    n: usize,
}

impl SparseLu {
    pub fn factor(a: &CscMatrix) -> Result<SparseLu> {
        if a.nrows() != a.ncols() {
            return Err(Error::InvalidArgument(format!("LU needs a square matrix, got {} x {}", a.nrows(), a.ncols())));
        }
        let fa = a.to_faer();
        let symbolic = {
            let mut guard =
                a.pattern.symbolic_lu.lock().map_err(|_| Error::Internal("poisoned symbolic cache".into()))?;
            match guard.as_ref() {
                Some(s) => s.clone(),
                None => {
                    let s = SymbolicLu::try_new(fa.symbolic())
                        .map_err(|e| Error::Internal(format!("symbolic LU failed: {e:?}")))?;
                    *guard = Some(s.clone());
                    s
                }
            }
        };
        let lu = Lu::try_new_with_symbolic(symbolic, fa.as_ref())
            .map_err(|_| Error::SolverFailure { residual: f64::INFINITY, tol: 0.0 })?;
        Ok(SparseLu { lu, n: a.nrows() })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut rhs = Mat::<f64>::from_fn(self.n, 1, |i, _| b[i]);
        self.lu.solve_in_place(rhs.as_mut());
        (0..self.n).map(|i| rhs[(i, 0)]).collect()
    }

    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let mut rhs = Mat::<f64>::from_fn(self.n, 1, |i, _| b[i]);
        self.lu.solve_transpose_in_place(rhs.as_mut());
        (0..self.n).map(|i| rhs[(i, 0)]).collect()
    }
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Relative residual `||b - A x|| / ||b||` (absolute when `b = 0`).
pub fn relative_residual(a: &CscMatrix, x: &[f64], b: &[f64], transpose: bool) -> f64 {
    let ax = if transpose { a.mul_transpose_vec(x) } else { a.mul_vec(x) };
    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let nb = norm2(b);
    if nb > 0.0 {
        norm2(&r) / nb
    } else {
        norm2(&r)
    }
}

/// Linear system with Dirichlet constraints applied as identity rows.
#[derive(Clone, Debug)]
pub struct SparseSystem {
    pub matrix: CscMatrix,
    pub rhs: Vec<f64>,
    pub constrained: Vec<(usize, f64)>,
}

impl SparseSystem {
    pub fn new(matrix: CscMatrix, rhs: Vec<f64>) -> Self {
        SparseSystem { matrix, rhs, constrained: Vec::new() }
    }

    /// Replaces constrained rows by identity rows with the prescribed values.
    pub fn apply_constraints(&mut self) {
        for &(r, v) in &self.constrained {
            self.matrix.set_identity_row(r);
            self.rhs[r] = v;
        }
    }
}

/// Direct solve with a residual contract: fails when the relative residual
/// exceeds `tol`.
pub fn solve_sparse(system: &SparseSystem, tol: f64) -> Result<Vec<f64>> {
    let mut sys = system.clone();
    sys.apply_constraints();
    if sys.rhs.len() != sys.matrix.nrows() {
        return Err(Error::InvalidArgument(format!(
            "rhs length {} does not match matrix size {}",
            sys.rhs.len(),
            sys.matrix.nrows()
        )));
    }
    let lu = SparseLu::factor(&sys.matrix)?;
    let mut x = lu.solve(&sys.rhs);
    let mut res = relative_residual(&sys.matrix, &x, &sys.rhs, false);
    if !res.is_finite() {
        return Err(Error::SolverFailure { residual: res, tol });
    }
    // One step of iterative refinement.
    if res > tol {
        let ax = sys.matrix.mul_vec(&x);
        let r: Vec<f64> = sys.rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let dx = lu.solve(&r);
        x.iter_mut().zip(&dx).for_each(|(xi, d)| *xi += d);
        res = relative_residual(&sys.matrix, &x, &sys.rhs, false);
    }
    if res > tol || !res.is_finite() {
        return Err(Error::SolverFailure { residual: res, tol });
    }
    Ok(x)
}
