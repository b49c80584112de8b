//! Compressed sparse row matrices over ℂ, sparse LU solves and inverse
//! iteration.
//!
//! Factorisation is delegated to faer's sparse LU (COLAMD column ordering,
//! partial pivoting). A CSR matrix read as CSC is its transpose, so the
//! stored arrays are handed over as-is and systems are solved with the
//! transposed factors.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::linalg::LuError;
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::MatMut;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is singular (pivot {pivot})")]
    Singular { pivot: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("inverse iteration did not converge in {iterations} steps (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64, best: Box<EigenEstimate> },
    #[error("sparse factorisation failed: {0}")]
    Backend(String),
}

/// Square sparse complex matrix in CSR form with sorted column indices.
/// Explicit zeros are kept, so matrices built on the same mesh graph share
/// one pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseComplexMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<Complex64>,
}

impl SparseComplexMatrix {
    /// Sums duplicate entries.
    pub fn from_triplets(
        n: usize,
        triplets: impl IntoIterator<Item = (usize, usize, Complex64)>,
    ) -> Result<Self, LinalgError> {
        let mut t: Vec<(usize, usize, Complex64)> = triplets.into_iter().collect();
        if let Some(&(r, c, _)) = t.iter().find(|&&(r, c, _)| r >= n || c >= n) {
            return Err(LinalgError::Dimension { expected: n, got: r.max(c) + 1 });
        }
        t.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0; n + 1];
        let mut col_idx = Vec::with_capacity(t.len());
        let mut values: Vec<Complex64> = Vec::with_capacity(t.len());
        let mut last = None;
        for (r, c, v) in t {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(SparseComplexMatrix { n, row_ptr, col_idx, values })
    }

    /// Builds from raw CSR parts; columns must be sorted within each row.
    pub fn from_csr(
        n: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<Complex64>,
    ) -> Result<Self, LinalgError> {
        let ok = row_ptr.len() == n + 1
            && row_ptr[0] == 0
            && row_ptr.windows(2).all(|w| w[0] <= w[1])
            && row_ptr[n] == col_idx.len()
            && col_idx.len() == values.len()
            && (0..n).all(|i| {
                let cols = &col_idx[row_ptr[i]..row_ptr[i + 1]];
                cols.windows(2).all(|w| w[0] < w[1]) && cols.iter().all(|&c| c < n)
            });
        if !ok {
            return Err(LinalgError::Backend("malformed CSR arrays".into()));
        }
        Ok(SparseComplexMatrix { n, row_ptr, col_idx, values })
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diag(&vec![Complex64::new(1.0, 0.0); n])
    }

    pub fn from_diag(d: &[Complex64]) -> Self {
        let n = d.len();
        SparseComplexMatrix { n, row_ptr: (0..=n).collect(), col_idx: (0..n).collect(), values: d.to_vec() }
    }

    /// Keeps the nonzero entries of a dense row-major matrix.
    pub fn from_dense(rows: &[Vec<Complex64>]) -> Self {
        let n = rows.len();
        let t = rows
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().enumerate().filter(|(_, v)| **v != Complex64::new(0.0, 0.0)).map(move |(j, &v)| (i, j, v)));
        Self::from_triplets(n, t).expect("square input")
    }

    pub fn to_dense(&self) -> Vec<Vec<Complex64>> {
        let mut d = vec![vec![Complex64::new(0.0, 0.0); self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                row[self.col_idx[p]] += self.values[p];
            }
        }
        d
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    /// Position of `(r, c)` in the value array, if stored.
    pub fn position(&self, r: usize, c: usize) -> Option<usize> {
        let lo = self.row_ptr[r];
        let cols = &self.col_idx[lo..self.row_ptr[r + 1]];
        cols.binary_search(&c).ok().map(|k| lo + k)
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.position(r, c).map_or(Complex64::new(0.0, 0.0), |p| self.values[p])
    }

    /// Iterates `(row, col, value)` in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.n).flat_map(move |i| (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |p| (i, self.col_idx[p], self.values[p])))
    }

    pub fn mul_vec(&self, x: &[Complex64]) -> Result<Vec<Complex64>, LinalgError> {
        if x.len() != self.n {
            return Err(LinalgError::Dimension { expected: self.n, got: x.len() });
        }
        Ok((0..self.n)
            .map(|i| {
                let mut s = Complex64::new(0.0, 0.0);
                for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                    s += self.values[p] * x[self.col_idx[p]];
                }
                s
            })
            .collect())
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| self.values[self.row_ptr[i]..self.row_ptr[i + 1]].iter().map(|v| v.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn same_pattern(&self, other: &Self) -> bool {
        self.n == other.n && self.row_ptr == other.row_ptr && self.col_idx == other.col_idx
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(self.n, self.triplets().map(|(r, c, v)| (c, r, v))).expect("same dimension")
    }

    /// Largest `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        self.triplets().map(|(r, c, v)| (v - self.get(c, r)).norm()).fold(0.0, f64::max)
    }

    /// `Σ coef_i · A_i`. Shares the pattern when all terms do.
    pub fn combine(terms: &[(Complex64, &SparseComplexMatrix)]) -> Result<Self, LinalgError> {
        let first = terms.first().ok_or(LinalgError::Dimension { expected: 1, got: 0 })?.1;
        for (_, m) in terms {
            if m.n != first.n {
                return Err(LinalgError::Dimension { expected: first.n, got: m.n });
            }
        }
        if terms.iter().all(|(_, m)| m.same_pattern(first)) {
            let mut values = vec![Complex64::new(0.0, 0.0); first.nnz()];
            for (coef, m) in terms {
                for (v, &a) in values.iter_mut().zip(&m.values) {
                    *v += coef * a;
                }
            }
            return Ok(SparseComplexMatrix { values, ..first.clone() });
        }
        Self::from_triplets(first.n, terms.iter().flat_map(|(coef, m)| m.triplets().map(move |(r, c, v)| (r, c, coef * v))))
    }

    /// Coordinate text dump, one `row col re im` line per stored entry.
    pub fn to_coordinate_text(&self) -> String {
        use std::fmt::Write as _;
        let mut s = format!("{} {} {}\n", self.n, self.n, self.nnz());
        for (r, c, v) in self.triplets() {
            let _ = writeln!(s, "{r} {c} {:?} {:?}", v.re, v.im);
        }
        s
    }

    fn as_faer_transpose(&self) -> SparseColMatRef<'_, usize, Complex64> {
        let sym = SymbolicSparseColMatRef::new_checked(self.n, self.n, &self.row_ptr, None, &self.col_idx);
        SparseColMatRef::new(sym, &self.values)
    }
}

fn backend(e: LuError) -> LinalgError {
    match e {
        LuError::SymbolicSingular { index } => LinalgError::Singular { pivot: index },
        other => LinalgError::Backend(format!("{other:?}")),
    }
}

/// Fill-reducing ordering and symbolic factors for one sparsity pattern,
/// shareable by every matrix with that pattern.
#[derive(Debug, Clone)]
pub struct SymbolicFactor {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    inner: SymbolicLu<usize>,
}

impl SymbolicFactor {
    pub fn analyze(a: &SparseComplexMatrix) -> Result<Self, LinalgError> {
        let inner = SymbolicLu::try_new(a.as_faer_transpose().symbolic()).map_err(|e| LinalgError::Backend(format!("{e:?}")))?;
        Ok(SymbolicFactor { n: a.n, row_ptr: a.row_ptr.clone(), col_idx: a.col_idx.clone(), inner })
    }

    pub fn factor(&self, a: &SparseComplexMatrix) -> Result<Factorization, LinalgError> {
        if a.n != self.n || a.row_ptr != self.row_ptr || a.col_idx != self.col_idx {
            return Err(LinalgError::Backend("matrix pattern differs from the analysed one".into()));
        }
        let lu = Lu::try_new_with_symbolic(self.inner.clone(), a.as_faer_transpose()).map_err(backend)?;
        let f = Factorization { n: a.n, lu };
        // an exactly zero pivot shows up as a non-finite solve
        let probe = f.solve(&vec![Complex64::new(1.0, 0.0); a.n])?;
        if let Some(pivot) = probe.iter().position(|v| !v.is_finite()) {
            return Err(LinalgError::Singular { pivot });
        }
        Ok(f)
    }
}

/// Sparse LU factors of one matrix. Immutable; concurrent solves are safe.
#[derive(Debug, Clone)]
pub struct Factorization {
    n: usize,
    lu: Lu<usize, Complex64>,
}

impl Factorization {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[Complex64]) -> Result<Vec<Complex64>, LinalgError> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x)?;
        Ok(x)
    }

    pub fn solve_in_place(&self, x: &mut [Complex64]) -> Result<(), LinalgError> {
        self.solve_many_in_place(x, 1)
    }

    /// Solves for `ncols` right-hand sides stored column-major in `x`.
    pub fn solve_many_in_place(&self, x: &mut [Complex64], ncols: usize) -> Result<(), LinalgError> {
        if x.len() != self.n * ncols {
            return Err(LinalgError::Dimension { expected: self.n * ncols, got: x.len() });
        }
        let rhs = MatMut::from_column_major_slice_mut(x, self.n, ncols);
        self.lu.solve_transpose_in_place(rhs);
        Ok(())
    }
}

pub fn lu_factor(a: &SparseComplexMatrix) -> Result<Factorization, LinalgError> {
    SymbolicFactor::analyze(a)?.factor(a)
}

pub fn solve(fact: &Factorization, b: &[Complex64]) -> Result<Vec<Complex64>, LinalgError> {
    fact.solve(b)
}

pub fn norm2(x: &[Complex64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// Seeded complex vector with entries uniform in the unit square.
pub fn random_vector(n: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenEstimate {
    pub lambda: Complex64,
    /// Unit 2-norm.
    pub vector: Vec<Complex64>,
    /// `‖A u − λ u‖₂`.
    pub residual: f64,
    pub iterations: usize,
}

/// Inverse iteration for the eigenvalue of smallest magnitude. Stops once
/// `‖A u − λ u‖₂ ≤ tol·‖A‖_∞`, with `λ` the Rayleigh quotient.
pub fn inverse_iteration(
    a: &SparseComplexMatrix,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<EigenEstimate, LinalgError> {
    let fact = lu_factor(a)?;
    inverse_iteration_with(a, &fact, tol, max_iter, seed)
}

pub fn inverse_iteration_with(
    a: &SparseComplexMatrix,
    fact: &Factorization,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<EigenEstimate, LinalgError> {
    let n = a.dim();
    let target = tol * a.norm_inf();
    let mut u = random_vector(n, seed);
    let s = norm2(&u);
    u.iter_mut().for_each(|v| *v /= s);

    let mut best: Option<EigenEstimate> = None;
    for it in 1..=max_iter.max(1) {
        let w = fact.solve(&u)?;
        let s = norm2(&w);
        if !(s.is_finite() && s > 0.0) {
            return Err(LinalgError::Singular { pivot: w.iter().position(|v| !v.is_finite()).unwrap_or(0) });
        }
        u = w.into_iter().map(|v| v / s).collect();
        let au = a.mul_vec(&u)?;
        let lambda: Complex64 = u.iter().zip(&au).map(|(x, y)| x.conj() * y).sum();
        let residual = norm2(&au.iter().zip(&u).map(|(y, x)| y - lambda * x).collect::<Vec<_>>());
        let est = EigenEstimate { lambda, vector: u.clone(), residual, iterations: it };
        if residual <= target {
            return Ok(est);
        }
        if best.as_ref().is_none_or(|b| residual < b.residual) {
            best = Some(est);
        }
    }
    let best = best.expect("at least one iteration");
    Err(LinalgError::NoConvergence { iterations: max_iter, residual: best.residual, best: Box::new(best) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn identity_solve_is_exact() {
        let f = lu_factor(&SparseComplexMatrix::identity(5)).unwrap();
        let b: Vec<_> = (0..5).map(|i| c(i as f64, -1.0)).collect();
        assert_eq!(f.solve(&b).unwrap(), b);
    }

    #[test]
    fn permutation_needs_pivoting() {
        let a = SparseComplexMatrix::from_dense(&[vec![c(0.0, 0.0), c(1.0, 0.0)], vec![c(1.0, 0.0), c(0.0, 0.0)]]);
        let x = lu_factor(&a).unwrap().solve(&[c(1.0, 0.0), c(2.0, 0.0)]).unwrap();
        assert_eq!(x, vec![c(2.0, 0.0), c(1.0, 0.0)]);
    }

    #[test]
    fn diagonal_solve() {
        let d = [c(2.0, 0.0), c(0.0, 4.0), c(-1.0, 1.0)];
        let b = [c(1.0, 1.0), c(2.0, 0.0), c(3.0, -3.0)];
        let x = lu_factor(&SparseComplexMatrix::from_diag(&d)).unwrap().solve(&b).unwrap();
        for i in 0..3 {
            assert!((x[i] - b[i] / d[i]).norm() < 1e-15);
        }
    }

    #[test]
    fn nonsymmetric_solve_uses_the_right_orientation() {
        let a = SparseComplexMatrix::from_dense(&[
            vec![c(4.0, 0.0), c(1.0, 2.0), c(0.0, 0.0)],
            vec![c(0.0, 0.0), c(3.0, 0.0), c(0.0, -1.0)],
            vec![c(2.0, 0.0), c(0.0, 0.0), c(5.0, 1.0)],
        ]);
        let b = [c(1.0, 0.0), c(0.0, 1.0), c(-2.0, 0.5)];
        let x = lu_factor(&a).unwrap().solve(&b).unwrap();
        let r = a.mul_vec(&x).unwrap();
        for i in 0..3 {
            assert!((r[i] - b[i]).norm() < 1e-14);
        }
    }

    #[test]
    fn singular_matrices_are_reported() {
        let a = SparseComplexMatrix::from_dense(&[vec![c(1.0, 0.0), c(2.0, 0.0)], vec![c(2.0, 0.0), c(4.0, 0.0)]]);
        assert!(matches!(lu_factor(&a), Err(LinalgError::Singular { .. })));
        let b = SparseComplexMatrix::from_triplets(2, [(0, 0, c(1.0, 0.0)), (1, 0, c(1.0, 0.0))]).unwrap();
        assert!(matches!(lu_factor(&b), Err(LinalgError::Singular { .. })));
    }

    #[test]
    fn dimension_errors() {
        let f = lu_factor(&SparseComplexMatrix::identity(3)).unwrap();
        assert!(matches!(f.solve(&[c(1.0, 0.0)]), Err(LinalgError::Dimension { expected: 3, got: 1 })));
        assert!(SparseComplexMatrix::from_triplets(2, [(2, 0, c(1.0, 0.0))]).is_err());
    }

    #[test]
    fn triplets_sum_duplicates_and_combine() {
        let a = SparseComplexMatrix::from_triplets(2, [(0, 0, c(1.0, 0.0)), (0, 0, c(2.0, 0.0)), (1, 0, c(0.0, 1.0))]).unwrap();
        assert_eq!(a.get(0, 0), c(3.0, 0.0));
        assert_eq!(a.nnz(), 2);
        let b = SparseComplexMatrix::identity(2);
        let s = SparseComplexMatrix::combine(&[(c(2.0, 0.0), &a), (c(0.0, 1.0), &b)]).unwrap();
        assert_eq!(s.get(0, 0), c(6.0, 1.0));
        assert_eq!(s.get(1, 1), c(0.0, 1.0));
        assert_eq!(s.get(1, 0), c(0.0, 2.0));
        assert_eq!(a.transpose().get(0, 1), c(0.0, 1.0));
    }

    #[test]
    fn inverse_iteration_on_diagonal() {
        let a = SparseComplexMatrix::from_diag(&[c(3.0, 0.0), c(1e-6, 0.0), c(2.0, 0.0)]);
        let e = inverse_iteration(&a, 1e-12, 50, 1).unwrap();
        assert!((e.lambda - c(1e-6, 0.0)).norm() < 1e-15);
        assert!((e.vector[1].norm() - 1.0).abs() < 1e-12);
        assert!((norm2(&e.vector) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn inverse_iteration_is_deterministic() {
        let a = SparseComplexMatrix::from_diag(&[c(3.0, 1.0), c(0.5, 0.0), c(0.6, 0.0), c(2.0, 0.0)]);
        let e1 = inverse_iteration(&a, 1e-10, 200, 9).unwrap();
        let e2 = inverse_iteration(&a, 1e-10, 200, 9).unwrap();
        assert_eq!(e1, e2);
        match inverse_iteration(&a, 1e-16, 3, 9) {
            Err(LinalgError::NoConvergence { best, .. }) => assert_eq!(best.vector.len(), 4),
            other => panic!("{other:?}"),
        }
    }
}
