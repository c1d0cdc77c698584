//! Hermitian helpers on top of nalgebra: PSD square root and positive
//! definite solves.

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::{real, CMatrix, CVector, Real};

/// Condition number above which a solve logs a warning.
pub const CONDITION_WARNING: f64 = 1e10;

/// `(A + Aᴴ)/2`.
pub fn hermitian_part<T: Real>(a: &CMatrix<T>) -> CMatrix<T> {
    (a + a.adjoint()).unscale(T::of(2.0))
}

/// `‖A - Aᴴ‖_F / ‖A‖_F` (0 for the zero matrix).
pub fn hermitian_defect<T: Real>(a: &CMatrix<T>) -> T {
    let n = a.norm();
    if n == T::zero() {
        T::zero()
    } else {
        (a - a.adjoint()).norm() / n
    }
}

/// `‖A - B‖_F / ‖B‖_F`, or the absolute error when `B = 0`.
pub fn relative_frobenius<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> T {
    let d = (a - b).norm();
    let n = b.norm();
    if n == T::zero() {
        d
    } else {
        d / n
    }
}

/// Eigen-decomposition of a Hermitian matrix; eigenvalues in ascending order.
pub fn hermitian_eigen<T: Real>(a: &CMatrix<T>) -> (Vec<T>, CMatrix<T>) {
    let eig = SymmetricEigen::new(hermitian_part(a));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[i]
            .partial_cmp(&eig.eigenvalues[j])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(a.nrows(), a.ncols(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Hermitian PSD square root. Negative eigenvalues (round-off in a PSD
/// input) are clamped to zero.
pub fn hermitian_sqrt<T: Real>(a: &CMatrix<T>) -> Result<CMatrix<T>> {
    if !a.is_square() {
        return Err(Error::dims("square root input", "square matrix", format!("{}x{}", a.nrows(), a.ncols())));
    }
    let (values, u) = hermitian_eigen(a);
    let n = values.len();
    let mut scaled = u.clone();
    for (c, &lam) in values.iter().enumerate() {
        let root = if lam > T::zero() { lam.sqrt() } else { T::zero() };
        for r in 0..n {
            scaled[(r, c)] *= real(root);
        }
    }
    Ok(hermitian_part(&(scaled * u.adjoint())))
}

/// Raises every eigenvalue of a Hermitian matrix to at least `floor`.
pub fn hermitian_floor<T: Real>(a: &CMatrix<T>, floor: T) -> CMatrix<T> {
    let (values, u) = hermitian_eigen(a);
    let mut scaled = u.clone();
    for (c, &lam) in values.iter().enumerate() {
        let v = if lam > floor { lam } else { floor };
        for r in 0..scaled.nrows() {
            scaled[(r, c)] *= real(v);
        }
    }
    hermitian_part(&(scaled * u.adjoint()))
}

/// Numerical rank: eigenvalues above `tol · λ_max`.
pub fn hermitian_rank<T: Real>(a: &CMatrix<T>, tol: T) -> usize {
    let (values, _) = hermitian_eigen(a);
    let max = values.iter().fold(T::zero(), |m, &v| if v.abs() > m { v.abs() } else { m });
    if max == T::zero() {
        return 0;
    }
    values.iter().filter(|&&v| v > tol * max).count()
}

/// Cholesky factor of a Hermitian positive definite matrix.
pub struct HpdFactor<T: Real> {
    chol: Cholesky<num_complex::Complex<T>, Dyn>,
}

impl<T: Real> HpdFactor<T> {
    pub fn new(a: &CMatrix<T>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::dims("HPD factorization", "square matrix", format!("{}x{}", a.nrows(), a.ncols())));
        }
        let chol = Cholesky::new(hermitian_part(a))
            .ok_or_else(|| Error::SingularSystem(format!("{0}x{0} matrix is not positive definite", a.nrows())))?;
        // diag(L)² brackets the eigenvalue range, a cheap lower bound on κ
        let l = chol.l_dirty();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..l.nrows() {
            let d = l[(i, i)].re.as_f64().powi(2);
            lo = lo.min(d);
            hi = hi.max(d);
        }
        if lo <= 0.0 || !lo.is_finite() {
            return Err(Error::SingularSystem("non-positive pivot".into()));
        }
        let eps = T::default_epsilon().as_f64() * l.nrows() as f64;
        if lo <= hi * eps {
            return Err(Error::SingularSystem(format!("pivot ratio {:.3e} below working precision", lo / hi)));
        }
        if hi / lo > CONDITION_WARNING {
            log::warn!("ill-conditioned solve: condition estimate {:.3e}", hi / lo);
        }
        Ok(HpdFactor { chol })
    }

    pub fn solve(&self, b: &CVector<T>) -> CVector<T> {
        self.chol.solve(b)
    }
}

/// Solves `A x = b` for Hermitian positive definite `A`.
pub fn hpd_solve<T: Real>(a: &CMatrix<T>, b: &CVector<T>) -> Result<CVector<T>> {
    if a.nrows() != b.len() {
        return Err(Error::dims("HPD solve right-hand side", a.nrows(), b.len()));
    }
    Ok(HpdFactor::new(a)?.solve(b))
}
