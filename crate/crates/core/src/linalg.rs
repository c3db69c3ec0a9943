//! Small dense complex linear algebra helpers.

use nalgebra::{Complex, DMatrix, SymmetricEigen};

use crate::scalar::{cis, modulus, re, CMatrix, Real};

pub fn identity<T: Real>(dim: usize) -> CMatrix<T> {
    CMatrix::identity(dim, dim)
}

pub fn zeros<T: Real>(dim: usize) -> CMatrix<T> {
    CMatrix::zeros(dim, dim)
}

pub fn kron<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> CMatrix<T> {
    a.kronecker(b)
}

pub fn dagger<T: Real>(a: &CMatrix<T>) -> CMatrix<T> {
    a.adjoint()
}

pub fn commutator<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> CMatrix<T> {
    a * b - b * a
}

/// Largest entry modulus.
pub fn max_abs<T: Real>(a: &CMatrix<T>) -> T {
    a.iter().fold(T::zero(), |m, z| {
        let v = modulus(*z);
        if v > m {
            v
        } else {
            m
        }
    })
}

/// `‖A − A†‖_max`.
pub fn hermiticity_defect<T: Real>(a: &CMatrix<T>) -> T {
    max_abs(&(a - a.adjoint()))
}

/// `‖U†U − 1‖_max`.
pub fn unitarity_defect<T: Real>(u: &CMatrix<T>) -> T {
    let n = u.nrows();
    max_abs(&(u.adjoint() * u - identity::<T>(n)))
}

pub fn trace<T: Real>(a: &CMatrix<T>) -> Complex<T> {
    a.diagonal().iter().fold(re(T::zero()), |s, z| s + *z)
}

/// Spectral decomposition of a Hermitian matrix, reused for propagators of
/// arbitrary duration.
#[derive(Clone, Debug)]
pub struct HermitianEigen<T: Real> {
    pub values: Vec<T>,
    pub vectors: CMatrix<T>,
}

impl<T: Real> HermitianEigen<T> {
    pub fn new(h: &CMatrix<T>) -> Self {
        // Symmetrise first so round-off in the assembly never leaks into the
        // eigenvectors.
        let sym = (h + h.adjoint()) * re(T::lit(0.5));
        let eig = SymmetricEigen::new(sym);
        Self {
            values: eig.eigenvalues.iter().copied().collect(),
            vectors: eig.eigenvectors,
        }
    }

    /// `exp(−i H t)`.
    pub fn propagator(&self, t: T) -> CMatrix<T> {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (j, &lambda) in self.values.iter().enumerate() {
            let phase = cis(-lambda * t);
            for i in 0..n {
                scaled[(i, j)] *= phase;
            }
        }
        scaled * self.vectors.adjoint()
    }
}

/// `exp(−i H t)` for a Hermitian `H`.
pub fn expm_hermitian<T: Real>(h: &CMatrix<T>, t: T) -> CMatrix<T> {
    HermitianEigen::new(h).propagator(t)
}

/// `U^n` by repeated squaring.
pub fn matrix_power<T: Real>(u: &CMatrix<T>, mut n: u64) -> CMatrix<T> {
    let mut result = identity::<T>(u.nrows());
    let mut base = u.clone();
    while n > 0 {
        if n & 1 == 1 {
            result = &base * &result;
        }
        n >>= 1;
        if n > 0 {
            base = &base * &base;
        }
    }
    result
}

/// One Newton–Schulz step `U(3 − U†U)/2` towards the nearest unitary.
pub fn reunitarize<T: Real>(u: &CMatrix<T>) -> CMatrix<T> {
    let n = u.nrows();
    let three = identity::<T>(n) * re(T::lit(3.0));
    u * (three - u.adjoint() * u) * re(T::lit(0.5))
}

/// `U^n` for unitary `U` by repeated squaring, re-projecting onto the
/// unitary group after every product so the defect does not double with
/// each squaring.
pub fn unitary_power<T: Real>(u: &CMatrix<T>, mut n: u64) -> CMatrix<T> {
    let mut result = identity::<T>(u.nrows());
    let mut base = u.clone();
    while n > 0 {
        if n & 1 == 1 {
            result = reunitarize(&(&base * &result));
        }
        n >>= 1;
        if n > 0 {
            base = reunitarize(&(&base * &base));
        }
    }
    result
}

pub fn from_rows<T: Real>(rows: &[&[(f64, f64)]]) -> CMatrix<T> {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    DMatrix::from_fn(n, m, |i, j| {
        let (a, b) = rows[i][j];
        Complex::new(T::lit(a), T::lit(b))
    })
}
