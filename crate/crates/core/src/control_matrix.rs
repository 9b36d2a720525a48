//! Frequency-domain control matrices and filter functions.
//!
//! The control matrix of a pulse is
//! `𝓑_αk(ω) = Σ_g s_α[g] e^{iω t_{g-1}} tr([B̄_α ∘ I(ω)] C̄_k)`
//! with operators in the eigenbasis of each segment's control Hamiltonian and
//! `I_ij(ω) = Δt φ((ω + Ω_ij) Δt)`, `φ(x) = (e^{ix} - 1)/(ix)`.

use std::sync::Arc;

use nalgebra::DMatrix;
use ndarray::{Array2, Array4, Array5, ArrayD, IxDyn};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{c, geometric_sum, identity, kron, matrix_power, phi, to_complex, CMat, RMat};
use crate::pulse::{check_compatible, concatenate_pulses, PulseSequence};

/// Relative distance to resonance below which `I_ij` takes its limit `Δt`.
pub const RESONANCE_TOL: f64 = 1e-8;

/// Smallest singular value of `1 - e^{iωT}𝒬` below which the periodic
/// closed form falls back to the explicit geometric sum.
pub const PERIODIC_SINGULAR_TOL: f64 = 1e-10;

/// Upper bound on the number of complex entries of dense filter-function arrays.
pub const MAX_FF_ENTRIES: usize = 200_000_000;

/// Control matrix on a frequency grid, one `n_α × d²` matrix per frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlMatrix {
    omega: Vec<f64>,
    values: Vec<CMat>,
    noise_ids: Vec<String>,
}

impl ControlMatrix {
    pub fn new(omega: Vec<f64>, values: Vec<CMat>, noise_ids: Vec<String>) -> Result<ControlMatrix> {
        if omega.len() != values.len() {
            return Err(Error::Shape(format!("{} frequencies, {} matrices", omega.len(), values.len())));
        }
        if let Some(first) = values.first() {
            if first.nrows() != noise_ids.len() || values.iter().any(|v| v.shape() != first.shape()) {
                return Err(Error::Shape("control-matrix slices have inconsistent shapes".into()));
            }
        }
        Ok(ControlMatrix { omega, values, noise_ids })
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    /// Slice at frequency index `i`, rows noise sources, columns basis elements.
    pub fn at(&self, i: usize) -> &CMat {
        &self.values[i]
    }

    pub fn values(&self) -> &[CMat] {
        &self.values
    }

    pub fn noise_ids(&self) -> &[String] {
        &self.noise_ids
    }

    pub fn n_noise(&self) -> usize {
        self.noise_ids.len()
    }

    pub fn n_basis(&self) -> usize {
        self.values.first().map(|v| v.ncols()).unwrap_or(0)
    }

    pub fn n_omega(&self) -> usize {
        self.omega.len()
    }

    /// `𝓑_αk(ω_i)`.
    pub fn get(&self, alpha: usize, k: usize, i: usize) -> Complex64 {
        self.values[i][(alpha, k)]
    }

    /// Dense `(α, k, ω)` array.
    pub fn to_array(&self) -> ndarray::Array3<Complex64> {
        ndarray::Array3::from_shape_fn((self.n_noise(), self.n_basis(), self.n_omega()), |(a, k, i)| self.get(a, k, i))
    }

    /// Maximum elementwise modulus of the difference to another control matrix.
    pub fn max_abs_diff(&self, other: &ControlMatrix) -> f64 {
        self.values.iter().zip(&other.values).flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm())).fold(0.0, f64::max)
    }

    pub(crate) fn remap_columns(&self, new_n: usize, stride: usize, scale: f64) -> ControlMatrix {
        let values = self
            .values
            .iter()
            .map(|v| {
                let mut out = CMat::zeros(v.nrows(), new_n);
                for k in 0..v.ncols() {
                    for a in 0..v.nrows() {
                        out[(a, k * stride)] = v[(a, k)] * scale;
                    }
                }
                out
            })
            .collect();
        ControlMatrix { omega: self.omega.clone(), values, noise_ids: self.noise_ids.clone() }
    }
}

/// Per-segment quantities in the eigenbasis of the control Hamiltonian.
pub(crate) struct Segment {
    pub dt: f64,
    pub t0: f64,
    /// `Ω_ij = ω_i - ω_j`.
    pub big_omega: DMatrix<f64>,
    /// `V† B_α V`.
    pub bbar: Vec<CMat>,
    /// Row `(a·d + b)`, column `k`: `(C̄_k)_ab` with `C̄_k = V† Q_{g-1} C_k Q_{g-1}† V`.
    pub cbar: CMat,
    /// `V† Q_{g-1}`, mapping lab-frame operators into the segment eigenframe.
    pub frame: CMat,
    pub sens: Vec<f64>,
}

pub(crate) fn segments(p: &PulseSequence) -> Result<Vec<Segment>> {
    let eig = p.eigensystems()?;
    let props = p.propagators()?;
    let basis = p.basis();
    let cv = basis.vectorized();
    let d = p.dim();
    Ok(eig
        .iter()
        .enumerate()
        .map(|(g, e)| {
            let v = &e.eigenvectors;
            let w = &e.eigenvalues;
            let frame = v.adjoint() * &props.cumulative[g];
            let cbar = kron(&frame, &frame.map(|z| z.conj())) * cv;
            Segment {
                dt: p.dt()[g],
                t0: p.times()[g],
                big_omega: DMatrix::from_fn(d, d, |i, j| w[i] - w[j]),
                bbar: p.noise_terms().iter().map(|n| v.adjoint() * &n.op * v).collect(),
                cbar,
                frame,
                sens: p.noise_terms().iter().map(|n| n.sens[g]).collect(),
            }
        })
        .collect())
}

/// `I_ij(ω) = ∫_0^Δt e^{i(ω + Ω_ij)t} dt`.
pub fn segment_integral(omega: f64, big_omega: f64, dt: f64) -> Complex64 {
    let x = omega + big_omega;
    if x.abs() < RESONANCE_TOL * omega.abs().max(big_omega.abs()).max(1.0 / dt) {
        return c(dt, 0.0);
    }
    phi(x * dt) * dt
}

impl Segment {
    /// `B̄_α ∘ I(ω)` flattened transposed, so that a product with `cbar` gives
    /// `tr([B̄_α ∘ I] C̄_k)`.
    fn weighted_noise(&self, omega: f64) -> CMat {
        let d = self.big_omega.nrows();
        let integ = DMatrix::from_fn(d, d, |i, j| segment_integral(omega, self.big_omega[(i, j)], self.dt));
        let mut x = CMat::zeros(self.bbar.len(), d * d);
        for (a, b) in self.bbar.iter().enumerate() {
            for i in 0..d {
                for j in 0..d {
                    x[(a, j * d + i)] = b[(i, j)] * integ[(i, j)];
                }
            }
        }
        x
    }

    /// This segment's contribution `𝓖^{(g)}(ω)` to the control matrix,
    /// including the phase `e^{iω t_{g-1}}` and the sensitivities.
    pub(crate) fn contribution(&self, omega: f64) -> CMat {
        let mut out = self.weighted_noise(omega) * &self.cbar;
        let phase = Complex64::from_polar(1.0, omega * self.t0);
        for (a, mut row) in out.row_iter_mut().enumerate() {
            row *= phase * self.sens[a];
        }
        out
    }

    /// `Σ_ij` Hilbert-space operator whose basis expansion is this segment's
    /// contribution: `Q† V (B̄ ∘ I) V† Q`, times phase and sensitivity.
    fn conjugated(&self, omega: f64) -> Vec<CMat> {
        let d = self.big_omega.nrows();
        let integ = DMatrix::from_fn(d, d, |i, j| segment_integral(omega, self.big_omega[(i, j)], self.dt));
        let phase = Complex64::from_polar(1.0, omega * self.t0);
        self.bbar
            .iter()
            .zip(&self.sens)
            .map(|(b, &s)| {
                let inner = b.component_mul(&integ);
                self.frame.adjoint() * inner * &self.frame * (phase * s)
            })
            .collect()
    }
}

fn check_grid(omega: &[f64]) -> Result<()> {
    if omega.is_empty() {
        return Err(Error::InvalidGrid("empty frequency grid".into()));
    }
    if omega.iter().any(|w| !w.is_finite()) {
        return Err(Error::InvalidGrid("non-finite frequency".into()));
    }
    Ok(())
}

fn zero_identity_column(p: &PulseSequence, values: &mut [CMat]) {
    // Noise operators are traceless, so the identity column is zero analytically.
    if p.basis().identity_first() {
        for v in values {
            v.column_mut(0).fill(c(0.0, 0.0));
        }
    }
}

/// Control matrix of a single pulse, cached on the pulse by exact grid.
pub fn single_pulse_control_matrix(p: &PulseSequence, omega: &[f64]) -> Result<Arc<ControlMatrix>> {
    check_grid(omega)?;
    if let Some(cm) = p.cached_control_matrix(omega) {
        return Ok(cm);
    }
    let segs = segments(p)?;
    let n_a = p.n_noise();
    let n = p.basis().len();
    let mut values: Vec<CMat> = omega
        .par_iter()
        .map(|&w| {
            let mut acc = CMat::zeros(n_a, n);
            for s in &segs {
                acc += s.contribution(w);
            }
            acc
        })
        .collect();
    zero_identity_column(p, &mut values);
    let cm = ControlMatrix { omega: omega.to_vec(), values, noise_ids: p.noise_ids() };
    Ok(p.store_control_matrix(Arc::new(cm)))
}

/// `e^{iω t0} 𝓑(ω) 𝒬` for every frequency, with the rotation applied as one
/// real product over the stacked rows of all frequencies.
fn shift_and_rotate(cm: &ControlMatrix, lq: &RMat, t0: f64) -> Vec<CMat> {
    let (na, n) = (cm.n_noise(), cm.n_basis());
    let nw = cm.omega.len();
    let re = RMat::from_fn(nw * na, n, |r, k| cm.values[r / na][(r % na, k)].re);
    let im = RMat::from_fn(nw * na, n, |r, k| cm.values[r / na][(r % na, k)].im);
    let (re, im) = (re * lq, im * lq);
    cm.omega
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let phase = Complex64::from_polar(1.0, w * t0);
            CMat::from_fn(na, n, |a, k| c(re[(i * na + a, k)], im[(i * na + a, k)]) * phase)
        })
        .collect()
}

/// Calls `f(g, 𝓑̃^{(g)})` with the phase-shifted, rotated control matrices
/// `e^{iω t_{g-1}} 𝓑^{(g)}(ω) 𝒬^{(g-1)}` of each pulse in a sequence.
fn for_each_shifted(pulses: &[&PulseSequence], omega: &[f64], mut f: impl FnMut(usize, Vec<CMat>)) -> Result<()> {
    let first = pulses.first().ok_or_else(|| Error::InvalidArgument("no pulses given".into()))?;
    for p in &pulses[1..] {
        check_compatible(first, p)?;
    }
    let mut lq = RMat::identity(first.basis().len(), first.basis().len());
    let mut t0 = 0.0;
    for (g, p) in pulses.iter().enumerate() {
        let cm = single_pulse_control_matrix(p, omega)?;
        f(g, shift_and_rotate(&cm, &lq, t0));
        lq = p.total_liouville()? * lq;
        t0 += p.duration();
    }
    Ok(())
}

fn shifted_control_matrices(pulses: &[&PulseSequence], omega: &[f64]) -> Result<Vec<Vec<CMat>>> {
    let mut out = Vec::with_capacity(pulses.len());
    for_each_shifted(pulses, omega, |_, m| out.push(m))?;
    Ok(out)
}

/// Control matrix of a sequence of pulses from the pulses' own control
/// matrices, together with the merged pulse (which caches the result).
pub fn concatenate(pulses: &[&PulseSequence], omega: &[f64]) -> Result<(PulseSequence, Arc<ControlMatrix>)> {
    check_grid(omega)?;
    let merged = concatenate_pulses(pulses)?;
    let mut values: Vec<CMat> = Vec::new();
    for_each_shifted(pulses, omega, |g, m| {
        if g == 0 {
            values = m;
        } else {
            values.iter_mut().zip(&m).for_each(|(acc, x)| *acc += x);
        }
    })?;
    let cm = ControlMatrix { omega: omega.to_vec(), values, noise_ids: merged.noise_ids() };
    let cm = merged.store_control_matrix(Arc::new(cm));
    Ok((merged, cm))
}

/// Control matrix of `reps` back-to-back repetitions of a pulse, using the
/// closed-form Neumann series with `O(log reps)` matrix products.
pub fn concatenate_periodic(p: &PulseSequence, omega: &[f64], reps: u64) -> Result<ControlMatrix> {
    if reps == 0 {
        return Err(Error::InvalidArgument("number of repetitions must be positive".into()));
    }
    let cm = single_pulse_control_matrix(p, omega)?;
    let total = p.total_liouville()?;
    let period = p.duration();
    // For identity-first bases the identity decouples; work on the traceless block.
    let off = if p.basis().identity_first() { 1 } else { 0 };
    let n = total.nrows();
    let m_sub = n - off;
    let q = to_complex(&total.view((off, off), (m_sub, m_sub)).into_owned());
    let values: Vec<CMat> = omega
        .par_iter()
        .zip(cm.values.par_iter())
        .map(|(&w, b1)| {
            let m = &q * Complex64::from_polar(1.0, w * period);
            let b_sub = b1.columns(off, m_sub).into_owned();
            let one = identity(m_sub);
            let lhs = &one - &m;
            let smallest = lhs.clone().singular_values().min();
            let factor = if smallest < PERIODIC_SINGULAR_TOL {
                geometric_sum(&m, reps).0
            } else {
                // (1 - M) and (1 - M^G) commute.
                let rhs = &one - matrix_power(&m, reps);
                lhs.lu().solve(&rhs).unwrap_or_else(|| geometric_sum(&m, reps).0)
            };
            let mut out = CMat::zeros(b1.nrows(), n);
            out.columns_mut(off, m_sub).copy_from(&(b_sub * factor));
            out
        })
        .collect();
    Ok(ControlMatrix { omega: omega.to_vec(), values, noise_ids: p.noise_ids() })
}

/// `F_α(ω) = Σ_k |𝓑_αk(ω)|²`, shape `(α, ω)`.
pub fn fidelity_filter_function(cm: &ControlMatrix) -> Array2<f64> {
    Array2::from_shape_fn((cm.n_noise(), cm.n_omega()), |(a, i)| cm.values[i].row(a).iter().map(|z| z.norm_sqr()).sum())
}

/// `F_αβ,kl(ω) = 𝓑*_αk(ω) 𝓑_βl(ω)`, shape `(α, β, k, l, ω)`.
pub fn generalized_filter_function(cm: &ControlMatrix) -> Result<Array5<Complex64>> {
    let (na, n, nw) = (cm.n_noise(), cm.n_basis(), cm.n_omega());
    let size = na * na * n * n * nw;
    if size > MAX_FF_ENTRIES {
        return Err(Error::MemoryLimit(format!("generalized filter function needs {size} entries; contract on the fly instead")));
    }
    Ok(Array5::from_shape_fn((na, na, n, n, nw), |(a, b, k, l, i)| cm.values[i][(a, k)].conj() * cm.values[i][(b, l)]))
}

/// Pulse-correlation filter function of a sequence, shape `(g, g', α, β, k, l, ω)`:
/// `F^{(gg')}_αβ,kl = conj(𝓑̃^{(g')}_αk) 𝓑̃^{(g)}_βl` with
/// `𝓑̃^{(g)} = e^{iω t_{g-1}} 𝓑^{(g)} 𝒬^{(g-1)}`.
pub fn pulse_correlation_filter_function(pulses: &[&PulseSequence], omega: &[f64]) -> Result<ArrayD<Complex64>> {
    check_grid(omega)?;
    let shifted = shifted_control_matrices(pulses, omega)?;
    let ng = pulses.len();
    let na = pulses[0].n_noise();
    let n = pulses[0].basis().len();
    let nw = omega.len();
    let size = ng * ng * na * na * n * n * nw;
    if size > MAX_FF_ENTRIES {
        return Err(Error::MemoryLimit(format!("pulse-correlation filter function needs {size} entries")));
    }
    let shape = [ng, ng, na, na, n, n, nw];
    Ok(ArrayD::from_shape_fn(IxDyn(&shape), |ix| {
        let (g, gp, a, b, k, l, i) = (ix[0], ix[1], ix[2], ix[3], ix[4], ix[5], ix[6]);
        shifted[gp][i][(a, k)].conj() * shifted[g][i][(b, l)]
    }))
}

/// Fidelity-traced pulse-correlation filter function, shape `(g, g', α, ω)`:
/// `Σ_k conj(𝓑̃^{(g')}_αk) 𝓑̃^{(g)}_αk`. Off-diagonal pairs may be negative.
pub fn pulse_correlation_fidelity_filter_function(pulses: &[&PulseSequence], omega: &[f64]) -> Result<Array4<Complex64>> {
    check_grid(omega)?;
    let shifted = shifted_control_matrices(pulses, omega)?;
    let ng = pulses.len();
    let na = pulses[0].n_noise();
    Ok(Array4::from_shape_fn((ng, ng, na, omega.len()), |(g, gp, a, i)| {
        shifted[gp][i].row(a).iter().zip(shifted[g][i].row(a).iter()).map(|(x, y)| x.conj() * y).sum()
    }))
}

/// How to evaluate the fidelity filter function of a pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FfMethod {
    /// Conjugation path when the dimension exceeds the threshold, Liouville otherwise.
    Auto {
        threshold: usize,
    },
    Liouville,
    Conjugation,
}

impl Default for FfMethod {
    fn default() -> Self {
        FfMethod::Auto { threshold: 16 }
    }
}

/// Fidelity filter function of a pulse, shape `(α, ω)`.
///
/// The conjugation path never forms the control matrix; it evaluates the
/// Hilbert-space operator whose basis coefficients are `𝓑_αk` and uses
/// `Σ_k |tr(C_k X)|² = ‖X‖_F²`.
pub fn pulse_fidelity_filter_function(p: &PulseSequence, omega: &[f64], method: FfMethod) -> Result<Array2<f64>> {
    check_grid(omega)?;
    let conj = match method {
        FfMethod::Auto { threshold } => p.dim() > threshold,
        FfMethod::Liouville => false,
        FfMethod::Conjugation => true,
    };
    if !conj {
        return Ok(fidelity_filter_function(&*single_pulse_control_matrix(p, omega)?));
    }
    let segs = segments(p)?;
    let na = p.n_noise();
    let d = p.dim();
    let cols: Vec<Vec<f64>> = omega
        .par_iter()
        .map(|&w| {
            let mut acc = vec![CMat::zeros(d, d); na];
            for s in &segs {
                for (a, x) in s.conjugated(w).into_iter().enumerate() {
                    acc[a] += x;
                }
            }
            acc.iter().map(|x| x.norm_squared()).collect()
        })
        .collect();
    Ok(Array2::from_shape_fn((na, omega.len()), |(a, i)| cols[i][a]))
}
