//! Orthonormal Hermitian operator bases and the Liouville representation.
//!
//! All bases are normalized as `tr(C_i C_j) = δ_ij`. For the built-in bases
//! `C_0 = 1/√d` and every other element is traceless.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, SVD};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{c, hermiticity_deviation, identity, kron, trace, unitarity_deviation, CMat, RMat};

/// Largest Hilbert-space dimension the constructors accept.
pub const MAX_DIM: usize = 64;

/// Entries of the trace tensor with modulus below this are dropped.
pub const TRACE_TENSOR_THRESHOLD: f64 = 1e-14;

/// Number of intermediate product entries above which the trace tensor is refused.
pub const TRACE_TENSOR_WORK_LIMIT: usize = 400_000_000;

const VALIDATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    Pauli,
    Ggm,
    Custom,
}

type SparseMat = Vec<(usize, usize, Complex64)>;

#[derive(Debug)]
struct Inner {
    elements: Vec<CMat>,
    sparse: Vec<SparseMat>,
    dim: usize,
    kind: BasisKind,
    n_qubits: Option<usize>,
    identity_first: bool,
    vectorized: OnceLock<CMat>,
    trace_tensor: OnceLock<Arc<TraceTensor>>,
}

/// An ordered orthonormal Hermitian operator basis.
///
/// Cloning is cheap; clones share the lazily built caches.
#[derive(Debug, Clone)]
pub struct Basis {
    inner: Arc<Inner>,
}

fn to_sparse(m: &CMat) -> SparseMat {
    let mut out = Vec::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let v = m[(i, j)];
            if v.norm() > 0.0 {
                out.push((i, j, v));
            }
        }
    }
    out
}

fn pauli_matrices() -> [CMat; 4] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let z = c(0.0, 0.0);
    [
        CMat::from_row_slice(2, 2, &[c(s, 0.0), z, z, c(s, 0.0)]),
        CMat::from_row_slice(2, 2, &[z, c(s, 0.0), c(s, 0.0), z]),
        CMat::from_row_slice(2, 2, &[z, c(0.0, -s), c(0.0, s), z]),
        CMat::from_row_slice(2, 2, &[c(s, 0.0), z, z, c(-s, 0.0)]),
    ]
}

impl Basis {
    fn build(elements: Vec<CMat>, kind: BasisKind, n_qubits: Option<usize>, identity_first: bool) -> Basis {
        let dim = elements[0].nrows();
        let sparse = elements.iter().map(to_sparse).collect();
        Basis {
            inner: Arc::new(Inner {
                elements,
                sparse,
                dim,
                kind,
                n_qubits,
                identity_first,
                vectorized: OnceLock::new(),
                trace_tensor: OnceLock::new(),
            }),
        }
    }

    /// Normalized n-qubit Pauli basis, identity first, lexicographic order
    /// with qubit 0 as the most significant tensor factor.
    pub fn pauli(n_qubits: usize) -> Result<Basis> {
        if n_qubits == 0 {
            return Err(Error::InvalidArgument("need at least one qubit".into()));
        }
        let dim = 1usize
            .checked_shl(n_qubits as u32)
            .filter(|&d| d <= MAX_DIM && n_qubits < 32)
            .ok_or(Error::DimensionOverflow { requested: n_qubits, max: MAX_DIM.trailing_zeros() as usize })?;
        let single = pauli_matrices();
        let mut elements: Vec<CMat> = single.to_vec();
        for _ in 1..n_qubits {
            let mut next = Vec::with_capacity(elements.len() * 4);
            for a in &elements {
                for b in &single {
                    next.push(kron(a, b));
                }
            }
            elements = next;
        }
        debug_assert_eq!(elements[0].nrows(), dim);
        Ok(Basis::build(elements, BasisKind::Pauli, Some(n_qubits), true))
    }

    /// Generalized Gell-Mann basis: identity, symmetric `u_jk`, antisymmetric
    /// `v_jk` (both with `j < k` in lexicographic order), then diagonal `w_l`.
    pub fn ggm(d: usize) -> Result<Basis> {
        if d < 2 {
            return Err(Error::InvalidArgument(format!("GGM basis needs d >= 2, got {d}")));
        }
        if d > MAX_DIM {
            return Err(Error::DimensionOverflow { requested: d, max: MAX_DIM });
        }
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut elements = Vec::with_capacity(d * d);
        elements.push(identity(d) * c(1.0 / (d as f64).sqrt(), 0.0));
        let mut pairs = Vec::new();
        for j in 0..d {
            for k in j + 1..d {
                pairs.push((j, k));
            }
        }
        for &(j, k) in &pairs {
            let mut m = CMat::zeros(d, d);
            m[(j, k)] = c(s, 0.0);
            m[(k, j)] = c(s, 0.0);
            elements.push(m);
        }
        for &(j, k) in &pairs {
            let mut m = CMat::zeros(d, d);
            m[(j, k)] = c(0.0, -s);
            m[(k, j)] = c(0.0, s);
            elements.push(m);
        }
        for l in 1..d {
            let norm = 1.0 / ((l * (l + 1)) as f64).sqrt();
            let mut m = CMat::zeros(d, d);
            for i in 0..l {
                m[(i, i)] = c(norm, 0.0);
            }
            m[(l, l)] = c(-(l as f64) * norm, 0.0);
            elements.push(m);
        }
        Ok(Basis::build(elements, BasisKind::Ggm, None, true))
    }

    /// Validates a user-supplied list of matrices as a complete orthonormal
    /// Hermitian basis.
    pub fn custom(elements: Vec<CMat>) -> Result<Basis> {
        let dim = validate_elements(&elements, true)?;
        let identity_first = is_identity_first(&elements, dim);
        Ok(Basis::build(elements, BasisKind::Custom, None, identity_first))
    }

    /// Completes a list of orthonormal Hermitian matrices to a full basis.
    ///
    /// The inputs are expanded in a GGM reference basis and the remaining
    /// elements are built from an orthonormal null space of the coefficient
    /// matrix obtained by SVD.
    pub fn complete(partial: Vec<CMat>) -> Result<Basis> {
        if partial.is_empty() {
            return Err(Error::InvalidArgument("need at least one matrix to complete".into()));
        }
        let dim = partial[0].nrows();
        let n = dim * dim;
        if partial.len() > n {
            return Err(Error::Shape(format!("{} matrices exceed d² = {n}", partial.len())));
        }
        for (k, m) in partial.iter().enumerate() {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(Error::Shape(format!("matrix {k} is {}x{}, expected {dim}x{dim}", m.nrows(), m.ncols())));
            }
            let dev = hermiticity_deviation(m);
            if dev > 1e-10 {
                return Err(Error::NotHermitian { what: format!("matrix {k}"), deviation: dev });
            }
        }
        check_orthonormal(&partial, 1e-10)?;
        let m = partial.len();
        if m == n {
            let identity_first = is_identity_first(&partial, dim);
            return Ok(Basis::build(partial, BasisKind::Custom, None, identity_first));
        }
        let reference = Basis::ggm(dim)?;
        // Coefficients are real because both sides are Hermitian. Pad to a
        // square matrix so the SVD returns a full set of right singular vectors.
        let mut coeff = RMat::zeros(n, n);
        for (i, p) in partial.iter().enumerate() {
            let e = reference.expand(p);
            for j in 0..n {
                coeff[(i, j)] = e[j].re;
            }
        }
        let svd = SVD::new(coeff, false, true);
        let v_t = svd.v_t.expect("right singular vectors requested");
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let smallest_kept = svd.singular_values[order[m - 1]];
        if smallest_kept < 1e-10 {
            return Err(Error::RankDeficient(smallest_kept));
        }
        let mut elements = partial;
        for &row in &order[m..] {
            let mut acc = CMat::zeros(dim, dim);
            for j in 0..n {
                let w = v_t[(row, j)];
                if w != 0.0 {
                    acc += reference.element(j) * c(w, 0.0);
                }
            }
            // Drop the imaginary round-off so the new elements are exactly Hermitian.
            let herm = (&acc + acc.adjoint()) * c(0.5, 0.0);
            elements.push(herm);
        }
        let identity_first = is_identity_first(&elements, dim);
        Ok(Basis::build(elements, BasisKind::Custom, None, identity_first))
    }

    pub fn dim(&self) -> usize {
        self.inner.dim
    }

    /// Number of elements, `d²`.
    pub fn len(&self) -> usize {
        self.inner.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.elements.is_empty()
    }

    pub fn kind(&self) -> BasisKind {
        self.inner.kind
    }

    /// Number of qubits when this is a qubit Pauli basis.
    pub fn n_qubits(&self) -> Option<usize> {
        match self.inner.kind {
            BasisKind::Pauli => self.inner.n_qubits,
            _ => None,
        }
    }

    /// Whether `C_0 ∝ 1` and all other elements are traceless.
    pub fn identity_first(&self) -> bool {
        self.inner.identity_first
    }

    pub fn element(&self, k: usize) -> &CMat {
        &self.inner.elements[k]
    }

    pub fn elements(&self) -> &[CMat] {
        &self.inner.elements
    }

    pub(crate) fn sparse_element(&self, k: usize) -> &[(usize, usize, Complex64)] {
        &self.inner.sparse[k]
    }

    /// Whether both handles describe the same ordered basis.
    pub fn same_as(&self, other: &Basis) -> bool {
        if Arc::ptr_eq(&self.inner, &other.inner) {
            return true;
        }
        self.dim() == other.dim()
            && self.len() == other.len()
            && self.elements().iter().zip(other.elements()).all(|(a, b)| (a - b).norm() <= 1e-14)
    }

    /// `d² × d²` matrix whose column `k` is the row-major vectorization of `C_k`.
    pub fn vectorized(&self) -> &CMat {
        self.inner.vectorized.get_or_init(|| {
            let d = self.dim();
            let mut m = CMat::zeros(d * d, self.len());
            for (k, sp) in self.inner.sparse.iter().enumerate() {
                for &(a, b, v) in sp {
                    m[(a * d + b, k)] = v;
                }
            }
            m
        })
    }

    /// Expansion coefficients `tr(C_k A)` of an arbitrary matrix.
    pub fn expand(&self, a: &CMat) -> Vec<Complex64> {
        self.inner.sparse.iter().map(|sp| sp.iter().map(|&(i, j, v)| v * a[(j, i)]).sum()).collect()
    }

    /// Reassembles `Σ_k x_k C_k`.
    pub fn synthesize(&self, x: &[Complex64]) -> CMat {
        let d = self.dim();
        let mut out = CMat::zeros(d, d);
        for (sp, &xk) in self.inner.sparse.iter().zip(x) {
            for &(i, j, v) in sp {
                out[(i, j)] += v * xk;
            }
        }
        out
    }

    /// Lazily built, shared sparse trace tensor.
    pub fn trace_tensor(&self) -> Result<Arc<TraceTensor>> {
        if let Some(t) = self.inner.trace_tensor.get() {
            return Ok(t.clone());
        }
        let t = Arc::new(TraceTensor::build(self)?);
        // A concurrent caller may have won the race; both results are identical.
        Ok(self.inner.trace_tensor.get_or_init(|| t).clone())
    }

    /// Liouville representation `𝒰_ij = tr(C_i U C_j U†)` of unitary conjugation.
    pub fn liouville_of_unitary(&self, u: &CMat) -> Result<RMat> {
        if u.nrows() != self.dim() || u.ncols() != self.dim() {
            return Err(Error::Shape(format!("unitary is {}x{}, basis dimension is {}", u.nrows(), u.ncols(), self.dim())));
        }
        let dev = unitarity_deviation(u);
        if dev > 1e-10 {
            return Err(Error::NotUnitary(dev));
        }
        Ok(self.liouville_unchecked(u))
    }

    pub(crate) fn liouville_unchecked(&self, u: &CMat) -> RMat {
        let superop = kron(u, &u.map(|z| z.conj()));
        let cv = self.vectorized();
        let full = cv.adjoint() * (superop * cv);
        full.map(|z| z.re)
    }

    /// Liouville representation of an arbitrary superoperator given as a
    /// row-major `d² × d²` matrix acting on vectorized operators.
    pub fn liouville_of_superoperator(&self, superop: &CMat) -> CMat {
        let cv = self.vectorized();
        cv.adjoint() * (superop * cv)
    }

    /// Vectorization `x_k = tr(C_k A)` as a real vector when `A` is Hermitian.
    pub fn vectorize_hermitian(&self, a: &CMat) -> Vec<f64> {
        self.expand(a).into_iter().map(|z| z.re).collect()
    }
}

/// Pauli basis on `n_qubits` qubits.
pub fn pauli_basis(n_qubits: usize) -> Result<Basis> {
    Basis::pauli(n_qubits)
}

/// Generalized Gell-Mann basis for dimension `d`.
pub fn ggm_basis(d: usize) -> Result<Basis> {
    Basis::ggm(d)
}

/// Completes orthonormal Hermitian matrices to a full basis.
pub fn complete_basis(partial: Vec<CMat>) -> Result<Basis> {
    Basis::complete(partial)
}

/// `𝒰_ij = tr(C_i U C_j U†)`.
pub fn liouville_of_unitary(u: &CMat, basis: &Basis) -> Result<RMat> {
    basis.liouville_of_unitary(u)
}

fn is_identity_first(elements: &[CMat], dim: usize) -> bool {
    let id = identity(dim) * c(1.0 / (dim as f64).sqrt(), 0.0);
    (&elements[0] - &id).norm() <= VALIDATION_TOL && elements[1..].iter().all(|m| trace(m).norm() <= VALIDATION_TOL)
}

fn check_orthonormal(elements: &[CMat], tol: f64) -> Result<()> {
    for i in 0..elements.len() {
        for j in i..elements.len() {
            // tr(C_i† C_j) as an elementwise inner product.
            let ip: Complex64 = elements[i].iter().zip(elements[j].iter()).map(|(a, b)| a.conj() * b).sum();
            let target = if i == j { 1.0 } else { 0.0 };
            let dev = (ip - target).norm();
            if dev > tol {
                return Err(Error::NotOrthonormal { i, j, deviation: dev });
            }
        }
    }
    Ok(())
}

/// Maximum deviation from `Σ_k C_{k,ba} C_{k,cd} = δ_ac δ_bd`.
pub fn completeness_deviation(elements: &[CMat]) -> f64 {
    let d = elements[0].nrows();
    let mut worst = 0.0f64;
    for a in 0..d {
        for b in 0..d {
            for cc in 0..d {
                for dd in 0..d {
                    let s: Complex64 = elements.iter().map(|m| m[(b, a)] * m[(cc, dd)]).sum();
                    let target = if a == cc && b == dd { 1.0 } else { 0.0 };
                    worst = worst.max((s - target).norm());
                }
            }
        }
    }
    worst
}

/// Maximum deviation from `tr(C_i† C_j) = δ_ij`.
pub fn orthonormality_deviation(elements: &[CMat]) -> f64 {
    let n = elements.len();
    let d = elements[0].nrows();
    let mut v = CMat::zeros(d * d, n);
    for (k, m) in elements.iter().enumerate() {
        for a in 0..d {
            for b in 0..d {
                v[(a * d + b, k)] = m[(a, b)];
            }
        }
    }
    let gram = v.adjoint() * v;
    (gram - CMat::identity(n, n)).iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

fn validate_elements(elements: &[CMat], require_complete: bool) -> Result<usize> {
    if elements.is_empty() {
        return Err(Error::Shape("empty basis".into()));
    }
    let dim = elements[0].nrows();
    if dim == 0 || dim > MAX_DIM {
        return Err(Error::DimensionOverflow { requested: dim, max: MAX_DIM });
    }
    for (k, m) in elements.iter().enumerate() {
        if m.nrows() != dim || m.ncols() != dim {
            return Err(Error::Shape(format!("element {k} is {}x{}, expected {dim}x{dim}", m.nrows(), m.ncols())));
        }
        let dev = hermiticity_deviation(m);
        if dev > VALIDATION_TOL {
            return Err(Error::NotHermitian { what: format!("basis element {k}"), deviation: dev });
        }
    }
    check_orthonormal(elements, VALIDATION_TOL)?;
    if require_complete {
        if elements.len() != dim * dim {
            return Err(Error::Incomplete(format!("{} elements for dimension {dim}", elements.len())));
        }
        let dev = completeness_deviation(elements);
        if dev > VALIDATION_TOL {
            return Err(Error::Incomplete(format!("completeness relation violated by {dev:.3e}")));
        }
    }
    Ok(dim)
}

/// Sparse `T_ijkl = tr(C_i C_j C_k C_l)`.
#[derive(Debug, Clone)]
pub struct TraceTensor {
    n: usize,
    entries: Vec<([u32; 4], Complex64)>,
}

impl TraceTensor {
    fn build(basis: &Basis) -> Result<TraceTensor> {
        let n = basis.len();
        let d = basis.dim();
        // Products P_ij = C_i C_j, bucketed by matrix position.
        let rows: Vec<Vec<Vec<(usize, Complex64)>>> = (0..n)
            .map(|k| {
                let mut r = vec![Vec::new(); d];
                for &(a, b, v) in basis.sparse_element(k) {
                    r[a].push((b, v));
                }
                r
            })
            .collect();
        let mut by_pos: Vec<Vec<(u32, Complex64)>> = vec![Vec::new(); d * d];
        let mut work = 0usize;
        let mut buf = DMatrix::<Complex64>::zeros(d, d);
        let mut touched: Vec<(usize, usize)> = Vec::new();
        for i in 0..n {
            for j in 0..n {
                for &(a, cc, x) in basis.sparse_element(i) {
                    for &(b, y) in &rows[j][cc] {
                        if buf[(a, b)].norm() == 0.0 {
                            touched.push((a, b));
                        }
                        buf[(a, b)] += x * y;
                    }
                }
                for &(a, b) in &touched {
                    let v = buf[(a, b)];
                    if v.norm() > 1e-16 {
                        by_pos[a * d + b].push(((i * n + j) as u32, v));
                        work += 1;
                    }
                    buf[(a, b)] = c(0.0, 0.0);
                }
                touched.clear();
                if work > TRACE_TENSOR_WORK_LIMIT {
                    return Err(Error::MemoryLimit(format!("trace tensor for a dense basis of dimension {d}; use the GGM basis")));
                }
            }
        }
        let mut pair_work = 0usize;
        for a in 0..d {
            for b in 0..d {
                pair_work += by_pos[a * d + b].len() * by_pos[b * d + a].len();
            }
        }
        if pair_work > TRACE_TENSOR_WORK_LIMIT {
            return Err(Error::MemoryLimit(format!("trace tensor contraction needs {pair_work} products; use a sparser basis")));
        }
        let mut acc: HashMap<(u32, u32), Complex64> = HashMap::new();
        for a in 0..d {
            for b in 0..d {
                let left = &by_pos[a * d + b];
                let right = &by_pos[b * d + a];
                for &(p, x) in left {
                    for &(q, y) in right {
                        *acc.entry((p, q)).or_insert(c(0.0, 0.0)) += x * y;
                    }
                }
            }
        }
        let nn = n as u32;
        let mut entries: Vec<([u32; 4], Complex64)> = acc
            .into_iter()
            .filter(|(_, v)| v.norm() > TRACE_TENSOR_THRESHOLD)
            .map(|((p, q), v)| ([p / nn, p % nn, q / nn, q % nn], v))
            .collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(TraceTensor { n, entries })
    }

    /// Number of basis elements per index.
    pub fn size(&self) -> usize {
        self.n
    }

    /// Stored nonzero entries in lexicographic index order.
    pub fn entries(&self) -> &[([u32; 4], Complex64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> Complex64 {
        let key = [i as u32, j as u32, k as u32, l as u32];
        match self.entries.binary_search_by(|e| e.0.cmp(&key)) {
            Ok(pos) => self.entries[pos].1,
            Err(_) => c(0.0, 0.0),
        }
    }
}

/// `T_ijkl` for a basis, built once and cached.
pub fn trace_tensor(basis: &Basis) -> Result<Arc<TraceTensor>> {
    basis.trace_tensor()
}

/// Fraction of nonzero matrix entries across all basis elements.
pub fn filling_factor(basis: &Basis) -> f64 {
    let d = basis.dim();
    let nnz: usize = (0..basis.len()).map(|k| basis.sparse_element(k).len()).sum();
    nnz as f64 / (basis.len() * d * d) as f64
}
