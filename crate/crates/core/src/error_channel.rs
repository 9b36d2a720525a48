//! Decay amplitudes, frequency shifts, the cumulant function and the error
//! transfer matrix.
//!
//! Correlation functions relate to spectra as
//! `⟨b_α(t₁) b_β(t₂)⟩ = ∫ dω/2π S_αβ(ω) e^{-iω(t₁-t₂)}`, matching the
//! control-matrix convention `𝓑(ω) = ∫ dt e^{iωt} 𝓑(t)`.

use std::sync::Arc;

use nalgebra::DMatrix;
use ndarray::Array4;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::basis::Basis;
use crate::control_matrix::{segments, single_pulse_control_matrix, ControlMatrix};
use crate::error::{Error, Result};
use crate::linalg::{c, phi, CMat, RMat, I};
use crate::pulse::PulseSequence;
use crate::spectrum::Spectrum;

/// Frequencies are processed in fixed-size chunks so parallel reductions
/// always sum in the same order.
const CHUNK: usize = 32;

/// Rank-4 quantity indexed `(α, β, k, l)`, such as Γ or Δ.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceTensor {
    data: Array4<Complex64>,
    noise_ids: Vec<String>,
}

impl SourceTensor {
    pub fn new(data: Array4<Complex64>, noise_ids: Vec<String>) -> Result<SourceTensor> {
        let s = data.shape();
        if s[0] != noise_ids.len() || s[1] != noise_ids.len() || s[2] != s[3] {
            return Err(Error::Shape(format!("tensor shape {s:?} does not match {} sources", noise_ids.len())));
        }
        Ok(SourceTensor { data, noise_ids })
    }

    /// Wraps a single `d² × d²` matrix as one source.
    pub fn from_total(m: &CMat) -> SourceTensor {
        let n = m.nrows();
        SourceTensor { data: Array4::from_shape_fn((1, 1, n, n), |(_, _, k, l)| m[(k, l)]), noise_ids: vec!["total".into()] }
    }

    pub fn data(&self) -> &Array4<Complex64> {
        &self.data
    }

    pub fn noise_ids(&self) -> &[String] {
        &self.noise_ids
    }

    pub fn n_basis(&self) -> usize {
        self.data.shape()[2]
    }

    /// `(k, l)` block of the source pair `(α, β)`.
    pub fn pair(&self, alpha: usize, beta: usize) -> CMat {
        let n = self.n_basis();
        CMat::from_fn(n, n, |k, l| self.data[[alpha, beta, k, l]])
    }

    /// Sum over all source pairs.
    pub fn total(&self) -> CMat {
        let n = self.n_basis();
        let na = self.noise_ids.len();
        CMat::from_fn(n, n, |k, l| {
            let mut s = c(0.0, 0.0);
            for a in 0..na {
                for b in 0..na {
                    s += self.data[[a, b, k, l]];
                }
            }
            s
        })
    }

    /// `tr_kl` of the `(α, β)` block.
    pub fn trace(&self, alpha: usize, beta: usize) -> Complex64 {
        (0..self.n_basis()).map(|k| self.data[[alpha, beta, k, k]]).sum()
    }
}

fn require_same_grid(omega: &[f64], s: &Spectrum) -> Result<()> {
    if omega.len() != s.omega().len() || omega.iter().zip(s.omega()).any(|(a, b)| a.to_bits() != b.to_bits()) {
        return Err(Error::GridMismatch("spectrum and control matrix are sampled on different grids; resample the spectrum".into()));
    }
    Ok(())
}

fn finish(acc: Array4<Complex64>, take_real: bool) -> Array4<Complex64> {
    if take_real {
        acc.mapv(|z| c(z.re, 0.0))
    } else {
        acc
    }
}

/// Deterministic parallel sum of per-frequency contributions.
fn integrate<F>(n_omega: usize, shape: (usize, usize, usize, usize), f: F) -> Array4<Complex64>
where
    F: Fn(usize, &mut Array4<Complex64>) + Sync,
{
    let starts: Vec<usize> = (0..n_omega).step_by(CHUNK).collect();
    let partial: Vec<Array4<Complex64>> = starts
        .par_iter()
        .map(|&s| {
            let mut acc = Array4::zeros(shape);
            for i in s..(s + CHUNK).min(n_omega) {
                f(i, &mut acc);
            }
            acc
        })
        .collect();
    let mut total = Array4::zeros(shape);
    for p in partial {
        total += &p;
    }
    total
}

/// `Γ_αβ,kl = ∫ dω/2π 𝓑*_αk(ω) S_αβ(ω) 𝓑_βl(ω)` by the trapezoid rule.
pub fn decay_amplitudes(cm: &ControlMatrix, s: &Spectrum) -> Result<SourceTensor> {
    require_same_grid(cm.omega(), s)?;
    let (w, take_real) = Spectrum::quadrature_weights(cm.omega())?;
    let spec = s.matrices_for(cm.noise_ids())?;
    let (na, n) = (cm.n_noise(), cm.n_basis());
    let acc = integrate(cm.n_omega(), (na, na, n, n), |i, acc| {
        let b = cm.at(i);
        for a in 0..na {
            for bb in 0..na {
                let sab = spec[i][(a, bb)];
                if sab.norm() == 0.0 {
                    continue;
                }
                let f = sab * w[i];
                for k in 0..n {
                    let left = b[(a, k)].conj() * f;
                    if left.norm() == 0.0 {
                        continue;
                    }
                    for l in 0..n {
                        acc[[a, bb, k, l]] += left * b[(bb, l)];
                    }
                }
            }
        }
    });
    SourceTensor::new(finish(acc, take_real), cm.noise_ids().to_vec())
}

/// Which closed form evaluates a within-segment frequency-shift integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftBranch {
    /// `ω + Ω_mn` away from zero.
    Generic,
    /// `ω + Ω_mn ≈ 0` with `Ω_ij - ω` nonzero, by series in `(ω + Ω_mn)Δt`.
    SinglyResonant,
    /// Both exponents vanish: `Δt²/2`.
    DoublyResonant,
}

/// Below this `|(ω + Ω_mn) Δt|` the nested integral is evaluated by series.
pub const SHIFT_SERIES_THRESHOLD: f64 = 1e-3;

const SHIFT_SERIES_TERMS: usize = 8;

/// `J_m(x) = ∫_0^1 u^m e^{ixu} du` for `m = 0..=m_max`.
fn moments(x: f64, m_max: usize) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(m_max + 1);
    if x.abs() < 2.0 {
        for m in 0..=m_max {
            // Σ_k (ix)^k / (k! (m + k + 1))
            let mut term = c(1.0, 0.0);
            let mut sum = c(1.0 / (m + 1) as f64, 0.0);
            for k in 1..80 {
                term *= I * x / k as f64;
                let t = term / (m + k + 1) as f64;
                sum += t;
                if t.norm() < 1e-18 * sum.norm() {
                    break;
                }
            }
            out.push(sum);
        }
    } else {
        let e = Complex64::from_polar(1.0, x);
        out.push(phi(x));
        for m in 1..=m_max {
            let prev = out[m - 1];
            out.push((e - prev * m as f64) / (I * x));
        }
    }
    out
}

/// `I_ijmn(ω) = ∫_0^Δt dt e^{i(Ω_ij - ω)t} ∫_0^t dt' e^{i(ω + Ω_mn)t'}` and the
/// branch used to evaluate it.
pub fn shift_integral_with_branch(omega_ij: f64, omega_mn: f64, omega: f64, dt: f64) -> (Complex64, ShiftBranch) {
    let a = omega_ij - omega;
    let b = omega + omega_mn;
    let x = a * dt;
    let h = b * dt;
    if a == 0.0 && b == 0.0 {
        return (c(dt * dt / 2.0, 0.0), ShiftBranch::DoublyResonant);
    }
    if h.abs() < SHIFT_SERIES_THRESHOLD {
        // Expand the inner exponential: Δt² Σ_n (ih)^n J_{n+1}(x) / (n+1)!
        let j = moments(x, SHIFT_SERIES_TERMS);
        let mut sum = c(0.0, 0.0);
        let mut pow = c(1.0, 0.0);
        let mut fact = 1.0;
        for n in 0..SHIFT_SERIES_TERMS {
            fact *= (n + 1) as f64;
            sum += pow * j[n + 1] / fact;
            pow *= I * h;
        }
        let branch = if x.abs() < SHIFT_SERIES_THRESHOLD && h == 0.0 { ShiftBranch::DoublyResonant } else { ShiftBranch::SinglyResonant };
        return (sum * dt * dt, branch);
    }
    let value = I * dt / b * (phi(x) - phi(x + h));
    (value, ShiftBranch::Generic)
}

/// Nested within-segment integral of the frequency shifts.
pub fn shift_integral(omega_ij: f64, omega_mn: f64, omega: f64, dt: f64) -> Complex64 {
    shift_integral_with_branch(omega_ij, omega_mn, omega, dt).0
}

/// Frequency shifts
/// `Δ_αβ,kl = ∫_0^τ dt₁ ∫_0^{t₁} dt₂ ⟨b_α(t₁) b_β(t₂)⟩ 𝓑_αk(t₁) 𝓑_βl(t₂)`
/// evaluated in the frequency domain on the spectrum's grid.
pub fn frequency_shifts(p: &PulseSequence, s: &Spectrum, omega: &[f64]) -> Result<SourceTensor> {
    require_same_grid(omega, s)?;
    let (w, take_real) = Spectrum::quadrature_weights(omega)?;
    let ids = p.noise_ids();
    let spec = s.matrices_for(&ids)?;
    let segs = segments(p)?;
    let (na, n, d) = (p.n_noise(), p.basis().len(), p.dim());
    // X_α[k, (i,j)] = B̄_α,ij C̄_k,ji; the right factor is its transpose.
    let xs: Vec<Vec<CMat>> = segs
        .iter()
        .map(|sg| {
            sg.bbar
                .iter()
                .map(|b| {
                    CMat::from_fn(n, d * d, |k, ij| {
                        let (i, j) = (ij / d, ij % d);
                        b[(i, j)] * sg.cbar[(j * d + i, k)]
                    })
                })
                .collect()
        })
        .collect();
    let acc = integrate(omega.len(), (na, na, n, n), |iw, acc| {
        let om = omega[iw];
        if spec[iw].iter().all(|z| z.norm() == 0.0) {
            return;
        }
        let mut running = CMat::zeros(na, n);
        let mut local = Array4::<Complex64>::zeros((na, na, n, n));
        for (g, sg) in segs.iter().enumerate() {
            let contrib = sg.contribution(om);
            let integ = DMatrix::from_fn(d * d, d * d, |ij, mn| {
                shift_integral(sg.big_omega[(ij / d, ij % d)], sg.big_omega[(mn / d, mn % d)], om, sg.dt)
            });
            for a in 0..na {
                let xa_i = &xs[g][a] * &integ;
                for bb in 0..na {
                    if spec[iw][(a, bb)].norm() == 0.0 {
                        continue;
                    }
                    let within = &xa_i * xs[g][bb].transpose() * c(sg.sens[a] * sg.sens[bb], 0.0);
                    for k in 0..n {
                        let left = contrib[(a, k)].conj();
                        for l in 0..n {
                            local[[a, bb, k, l]] += left * running[(bb, l)] + within[(k, l)];
                        }
                    }
                }
            }
            running += contrib;
        }
        for a in 0..na {
            for bb in 0..na {
                let f = spec[iw][(a, bb)] * w[iw];
                if f.norm() == 0.0 {
                    continue;
                }
                for k in 0..n {
                    for l in 0..n {
                        acc[[a, bb, k, l]] += local[[a, bb, k, l]] * f;
                    }
                }
            }
        }
    });
    SourceTensor::new(finish(acc, take_real), ids)
}

/// `𝒦_ij = -½ Σ_kl (f_ijkl Δ_kl + g_ijkl Γ_kl)` with source pairs summed.
pub fn cumulant_function(gamma: &SourceTensor, delta: Option<&SourceTensor>, basis: &Basis) -> Result<RMat> {
    let g = gamma.total();
    let d = delta.map(|x| x.total());
    cumulant_from_totals(&g, d.as_ref(), basis)
}

/// Cumulant function from source-summed `Γ` and optional `Δ`.
pub fn cumulant_from_totals(gamma: &CMat, delta: Option<&CMat>, basis: &Basis) -> Result<RMat> {
    let n = basis.len();
    if gamma.nrows() != n || gamma.ncols() != n || delta.is_some_and(|x| x.nrows() != n || x.ncols() != n) {
        return Err(Error::Shape(format!("decay amplitudes must be {n}x{n} for this basis")));
    }
    let t = basis.trace_tensor()?;
    let mut k = CMat::zeros(n, n);
    let half = c(0.5, 0.0);
    for &(idx, val) in t.entries() {
        let [a, b, cc, e] = idx.map(|x| x as usize);
        let tv = val * half;
        k[(e, cc)] -= tv * gamma[(a, b)];
        k[(e, b)] += tv * gamma[(a, cc)];
        k[(b, e)] += tv * gamma[(a, cc)];
        k[(b, cc)] -= tv * gamma[(a, e)];
        if let Some(dl) = delta {
            k[(e, cc)] += tv * (dl[(b, a)] - dl[(a, b)]);
            k[(cc, e)] += tv * (dl[(a, b)] - dl[(b, a)]);
        }
    }
    let mut out = k.map(|z| z.re);
    if basis.identity_first() {
        out.row_mut(0).fill(0.0);
        out.column_mut(0).fill(0.0);
    }
    Ok(out)
}

/// Single-qubit Pauli-basis shortcut for the cumulant function.
pub fn cumulant_function_pauli(gamma: &SourceTensor, delta: Option<&SourceTensor>) -> Result<RMat> {
    let g = gamma.total();
    let d = delta.map(|x| x.total());
    cumulant_pauli_from_totals(&g, d.as_ref())
}

/// Pauli shortcut from source-summed `Γ` and optional `Δ`.
pub fn cumulant_pauli_from_totals(gamma: &CMat, delta: Option<&CMat>) -> Result<RMat> {
    if gamma.nrows() != 4 || gamma.ncols() != 4 || delta.is_some_and(|x| x.nrows() != 4 || x.ncols() != 4) {
        return Err(Error::Shape("the Pauli shortcut needs a single qubit (4x4 amplitudes)".into()));
    }
    let mut k = RMat::zeros(4, 4);
    for i in 1..4 {
        for j in 1..4 {
            k[(i, j)] = if i == j {
                -(1..4).filter(|&m| m != i).map(|m| gamma[(m, m)].re).sum::<f64>()
            } else {
                let d = delta.map(|x| -x[(i, j)].re + x[(j, i)].re).unwrap_or(0.0);
                d + gamma[(i, j)].re
            };
        }
    }
    Ok(k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TransferMode {
    /// `exp(𝒦)`.
    #[default]
    Exact,
    /// `1 + 𝒦`.
    FirstOrder,
}

/// Error transfer matrix `⟨𝒰̃⟩` from the cumulant function.
///
/// When the first row and column of `𝒦` vanish they are reproduced exactly.
pub fn error_transfer_matrix(k: &RMat, mode: TransferMode) -> RMat {
    let n = k.nrows();
    let bordered = n > 1 && k.row(0).iter().all(|&x| x == 0.0) && k.column(0).iter().all(|&x| x == 0.0);
    match mode {
        TransferMode::FirstOrder => RMat::identity(n, n) + k,
        TransferMode::Exact if bordered => {
            let sub = k.view((1, 1), (n - 1, n - 1)).into_owned().exp();
            let mut out = RMat::zeros(n, n);
            out[(0, 0)] = 1.0;
            out.view_mut((1, 1), (n - 1, n - 1)).copy_from(&sub);
            out
        }
        TransferMode::Exact => k.clone().exp(),
    }
}

/// Options for assembling an [`ErrorChannel`].
#[derive(Debug, Clone, Copy, Default)]
pub struct ChannelOptions {
    pub mode: TransferMode,
    pub with_shifts: bool,
}

/// Noise-averaged error channel of a pulse.
#[derive(Debug, Clone)]
pub struct ErrorChannel {
    pub gamma: SourceTensor,
    pub delta: Option<SourceTensor>,
    pub cumulant: RMat,
    pub transfer: RMat,
    pub mode: TransferMode,
}

impl ErrorChannel {
    /// Computes Γ (and optionally Δ) on the spectrum's grid and assembles the channel.
    pub fn compute(p: &PulseSequence, s: &Spectrum, opts: ChannelOptions) -> Result<ErrorChannel> {
        let cm: Arc<ControlMatrix> = single_pulse_control_matrix(p, s.omega())?;
        let gamma = decay_amplitudes(&cm, s)?;
        let delta = if opts.with_shifts { Some(frequency_shifts(p, s, s.omega())?) } else { None };
        let cumulant = cumulant_function(&gamma, delta.as_ref(), p.basis())?;
        let transfer = error_transfer_matrix(&cumulant, opts.mode);
        Ok(ErrorChannel { gamma, delta, cumulant, transfer, mode: opts.mode })
    }

    /// Per source pair `(α, β)` contribution to the cumulant function.
    pub fn per_source(&self, basis: &Basis) -> Result<Vec<((String, String), RMat)>> {
        let ids = self.gamma.noise_ids();
        let mut out = Vec::new();
        for (a, ia) in ids.iter().enumerate() {
            for (b, ib) in ids.iter().enumerate() {
                let g = self.gamma.pair(a, b);
                let d = self.delta.as_ref().map(|x| x.pair(a, b));
                out.push(((ia.clone(), ib.clone()), cumulant_from_totals(&g, d.as_ref(), basis)?));
            }
        }
        Ok(out)
    }
}
