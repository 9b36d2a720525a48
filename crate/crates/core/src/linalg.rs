//! Small dense linear-algebra helpers shared by the numerical modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense complex matrix.
pub type CMat = DMatrix<Complex64>;
/// Dense real matrix.
pub type RMat = DMatrix<f64>;

pub(crate) const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Frobenius norm of `A - A^†`.
pub fn hermiticity_deviation(a: &CMat) -> f64 {
    (a - a.adjoint()).norm()
}

pub fn is_hermitian(a: &CMat, tol: f64) -> bool {
    a.is_square() && hermiticity_deviation(a) <= tol * a.norm().max(1.0)
}

/// Frobenius norm of `U^† U - 1`.
pub fn unitarity_deviation(u: &CMat) -> f64 {
    if !u.is_square() {
        return f64::INFINITY;
    }
    (u.adjoint() * u - identity(u.nrows())).norm()
}

pub fn trace(a: &CMat) -> Complex64 {
    a.diagonal().sum()
}

/// `tr(A B)` without forming the product.
pub fn trace_product(a: &CMat, b: &CMat) -> Complex64 {
    let n = a.nrows();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..a.ncols() {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn to_complex(a: &RMat) -> CMat {
    a.map(|x| Complex64::new(x, 0.0))
}

/// Eigendecomposition of a Hermitian matrix, `H = V diag(w) V^†`.
///
/// An exactly zero matrix returns `V = 1` so cached outputs are reproducible.
pub fn eigh(h: &CMat) -> Result<(DVector<f64>, CMat)> {
    let n = h.nrows();
    if h.iter().all(|z| z.re == 0.0 && z.im == 0.0) {
        return Ok((DVector::zeros(n), identity(n)));
    }
    // Symmetrize so round-off in the input cannot leak into the solver.
    let sym = (h + h.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 100_000)
        .ok_or_else(|| Error::Numerical("Hermitian eigensolver did not converge".into()))?;
    Ok((eig.eigenvalues, eig.eigenvectors))
}

/// `exp(-i H t)` for Hermitian `H` through its eigendecomposition.
pub fn expm_hermitian(h: &CMat, t: f64) -> Result<CMat> {
    let (w, v) = eigh(h)?;
    Ok(propagator_from_eigen(&w, &v, t))
}

pub fn propagator_from_eigen(w: &DVector<f64>, v: &CMat, t: f64) -> CMat {
    let mut scaled = v.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        let phase = Complex64::from_polar(1.0, -w[j] * t);
        col *= phase;
    }
    scaled * v.adjoint()
}

/// `(e^{ix} - 1) / (ix)`, evaluated without cancellation near `x = 0`.
pub fn phi(x: f64) -> Complex64 {
    let half = 0.5 * x;
    Complex64::from_polar(sinc(half), half)
}

/// `sin(x)/x` with the removable singularity filled in.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 * (1.0 - x2 / 20.0)
    } else {
        x.sin() / x
    }
}

/// Integer matrix power by repeated squaring.
pub fn matrix_power(m: &CMat, mut exponent: u64) -> CMat {
    let n = m.nrows();
    let mut result = identity(n);
    let mut base = m.clone();
    while exponent > 0 {
        if exponent & 1 == 1 {
            result = &result * &base;
        }
        exponent >>= 1;
        if exponent > 0 {
            base = &base * &base;
        }
    }
    result
}

/// `sum_{g=0}^{n-1} M^g`, by doubling, together with `M^n`.
pub fn geometric_sum(m: &CMat, n: u64) -> (CMat, CMat) {
    let dim = m.nrows();
    if n == 0 {
        return (CMat::zeros(dim, dim), identity(dim));
    }
    // (S_k, M^k) for k = number of leading bits consumed so far.
    let mut sum = identity(dim);
    let mut power = m.clone();
    let top = 63 - n.leading_zeros();
    for bit in (0..top).rev() {
        // S_{2k} = S_k (1 + M^k), M^{2k} = M^k M^k
        sum = &sum + &sum * &power;
        power = &power * &power;
        if (n >> bit) & 1 == 1 {
            // S_{k+1} = 1 + M S_k, M^{k+1} = M M^k
            sum = identity(dim) + m * &sum;
            power = m * &power;
        }
    }
    (sum, power)
}

/// Trapezoid quadrature weights for a strictly increasing grid.
pub fn trapezoid_weights(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut w = vec![0.0; n];
    for i in 0..n.saturating_sub(1) {
        let h = 0.5 * (x[i + 1] - x[i]);
        w[i] += h;
        w[i + 1] += h;
    }
    w
}
