//! Scalar figures of merit derived from error channels.

use num_complex::Complex64;

use crate::basis::Basis;
use crate::control_matrix::{single_pulse_control_matrix, ControlMatrix};
use crate::error::{Error, Result};
use crate::error_channel::{decay_amplitudes, ChannelOptions, ErrorChannel, TransferMode};
use crate::linalg::{c, eigh, hermiticity_deviation, trace, CMat, RMat};
use crate::pulse::PulseSequence;
use crate::spectrum::Spectrum;

/// Default ratio of maximum to rms noise amplitude used for the convergence check.
pub const DEFAULT_C_M: f64 = 3.0;

fn check_square(etm: &RMat, d: usize) -> Result<()> {
    if etm.nrows() != d * d || etm.ncols() != d * d {
        return Err(Error::Shape(format!("transfer matrix is {}x{}, expected {}x{}", etm.nrows(), etm.ncols(), d * d, d * d)));
    }
    Ok(())
}

/// `tr⟨𝒰̃⟩ / d²`.
pub fn entanglement_fidelity(etm: &RMat, d: usize) -> Result<f64> {
    check_square(etm, d)?;
    Ok(etm.trace() / (d * d) as f64)
}

/// `(tr⟨𝒰̃⟩ + d) / (d(d+1))`.
pub fn avg_gate_fidelity(etm: &RMat, d: usize) -> Result<f64> {
    check_square(etm, d)?;
    let d = d as f64;
    Ok((etm.trace() + d) / (d * (d + 1.0)))
}

/// Fidelities restricted to a subspace of dimension `d_sub`, tracing only over
/// the listed diagonal indices of the transfer matrix.
///
/// Returns `(average, entanglement)` with `F_ent = Σ_{i∈indices} 𝒰̃_ii / d_sub²`.
pub fn subspace_fidelities(etm: &RMat, d_sub: usize, indices: &[usize]) -> Result<(f64, f64)> {
    if d_sub == 0 {
        return Err(Error::InvalidArgument("subspace dimension must be positive".into()));
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= etm.nrows().min(etm.ncols())) {
        return Err(Error::Shape(format!("index {bad} outside a {}x{} transfer matrix", etm.nrows(), etm.ncols())));
    }
    let dc = d_sub as f64;
    let ent = indices.iter().map(|&i| etm[(i, i)]).sum::<f64>() / (dc * dc);
    Ok(((dc * ent + 1.0) / (dc + 1.0), ent))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InfidelityMethod {
    /// `tr Γ_αβ / d`.
    GammaTrace,
    /// `(1/d) ∫ dω/2π S_αβ(ω) Σ_k 𝓑*_αk(ω) 𝓑_βk(ω)`.
    FfIntegral,
}

/// Entanglement infidelity per source pair `((α, β), ℐ_αβ)`.
pub fn infidelity(cm: &ControlMatrix, s: &Spectrum, d: usize, method: InfidelityMethod) -> Result<Vec<((String, String), f64)>> {
    let ids = cm.noise_ids().to_vec();
    let na = ids.len();
    let values: Vec<Vec<Complex64>> = match method {
        InfidelityMethod::GammaTrace => {
            let g = decay_amplitudes(cm, s)?;
            (0..na).map(|a| (0..na).map(|b| g.trace(a, b)).collect()).collect()
        }
        InfidelityMethod::FfIntegral => {
            if cm.omega().len() != s.omega().len() || cm.omega().iter().zip(s.omega()).any(|(a, b)| a.to_bits() != b.to_bits()) {
                return Err(Error::GridMismatch("spectrum and control matrix are sampled on different grids".into()));
            }
            let (w, take_real) = Spectrum::quadrature_weights(cm.omega())?;
            let spec = s.matrices_for(&ids)?;
            let mut out = vec![vec![c(0.0, 0.0); na]; na];
            for (i, wi) in w.iter().enumerate() {
                let b = cm.at(i);
                for a in 0..na {
                    for bb in 0..na {
                        let sab = spec[i][(a, bb)];
                        if sab.norm() == 0.0 {
                            continue;
                        }
                        let ff: Complex64 = b.row(a).iter().zip(b.row(bb).iter()).map(|(x, y)| x.conj() * y).sum();
                        out[a][bb] += sab * ff * *wi;
                    }
                }
            }
            if take_real {
                for row in &mut out {
                    for z in row.iter_mut() {
                        *z = c(z.re, 0.0);
                    }
                }
            }
            out
        }
    };
    let mut result = Vec::with_capacity(na * na);
    for a in 0..na {
        for b in 0..na {
            result.push(((ids[a].clone(), ids[b].clone()), values[a][b].re / d as f64));
        }
    }
    Ok(result)
}

fn density_check(rho: &CMat, d: usize, what: &str) -> Result<()> {
    if rho.nrows() != d || rho.ncols() != d {
        return Err(Error::Shape(format!("{what} is {}x{}, expected {d}x{d}", rho.nrows(), rho.ncols())));
    }
    let dev = hermiticity_deviation(rho);
    if dev > 1e-10 {
        return Err(Error::NotHermitian { what: what.into(), deviation: dev });
    }
    let tr = trace(rho);
    if (tr - c(1.0, 0.0)).norm() > 1e-10 {
        return Err(Error::InvalidState(format!("{what} has trace {tr}, expected 1")));
    }
    Ok(())
}

fn vectorize(basis: &Basis, a: &CMat) -> nalgebra::DVector<f64> {
    nalgebra::DVector::from_vec(basis.vectorize_hermitian(a))
}

/// `⟨⟨ρ|𝒬|σ⟩⟩` for a pure state `ρ` and a density matrix `σ`.
pub fn state_fidelity(channel: &RMat, rho: &CMat, sigma: &CMat, basis: &Basis) -> Result<f64> {
    let d = basis.dim();
    check_square(channel, d)?;
    density_check(rho, d, "rho")?;
    density_check(sigma, d, "sigma")?;
    let purity = (rho * rho).trace().re;
    if (purity - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidState(format!("rho is not pure (tr ρ² = {purity})")));
    }
    Ok(vectorize(basis, rho).dot(&(channel * vectorize(basis, sigma))))
}

/// `⟨⟨E|𝒬|σ⟩⟩` for a POVM element `E`.
pub fn povm_probability(e: &CMat, channel: &RMat, sigma: &CMat, basis: &Basis) -> Result<f64> {
    let d = basis.dim();
    check_square(channel, d)?;
    density_check(sigma, d, "sigma")?;
    if e.nrows() != d || e.ncols() != d {
        return Err(Error::Shape(format!("POVM element is {}x{}, expected {d}x{d}", e.nrows(), e.ncols())));
    }
    let dev = hermiticity_deviation(e);
    if dev > 1e-10 {
        return Err(Error::NotHermitian { what: "POVM element".into(), deviation: dev });
    }
    let (w, _) = eigh(e)?;
    let min = w.min();
    if min < -1e-10 {
        return Err(Error::NotPositive(min));
    }
    Ok(vectorize(basis, e).dot(&(channel * vectorize(basis, sigma))))
}

/// Leakage `L_c = ⟨⟨Π_ℓ|𝒬|Π_c⟩⟩/d_c` and seepage `L_ℓ = ⟨⟨Π_c|𝒬|Π_ℓ⟩⟩/d_ℓ`.
pub fn leakage_rates(channel: &RMat, comp_projector: &CMat, basis: &Basis) -> Result<(f64, f64)> {
    let d = basis.dim();
    check_square(channel, d)?;
    let p = comp_projector;
    if p.nrows() != d || p.ncols() != d {
        return Err(Error::Shape(format!("projector is {}x{}, expected {d}x{d}", p.nrows(), p.ncols())));
    }
    if hermiticity_deviation(p) > 1e-10 || (p * p - p).norm() > 1e-10 {
        return Err(Error::NotProjector("Π must be Hermitian and idempotent".into()));
    }
    let dc = trace(p).re.round();
    let dl = d as f64 - dc;
    if dc < 1.0 || dl < 1.0 {
        return Err(Error::NotProjector(format!("projector rank {dc} leaves no leakage subspace in dimension {d}")));
    }
    let leak_proj = CMat::identity(d, d) - p;
    let vc = vectorize(basis, p);
    let vl = vectorize(basis, &leak_proj);
    Ok((vl.dot(&(channel * &vc)) / dc, vc.dot(&(channel * &vl)) / dl))
}

/// Convergence parameter ξ² and whether the underlying band integrals are finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XiReport {
    pub xi_sq: f64,
    pub reliable: bool,
}

impl XiReport {
    /// Whether `ξ < π / C_m`.
    pub fn converges(&self, c_m: f64) -> bool {
        self.reliable && self.xi_sq.sqrt() < std::f64::consts::PI / c_m
    }
}

/// `ξ² = Σ_α ‖B_α‖_F² (∫ dω/2π S_α) (Σ_g |s_α[g]| Δt_g)²`.
///
/// Spectra must be diagonal. Uses `|s|` so that `|tr Γ| ≤ ξ²` holds for
/// sign-changing sensitivities as well.
pub fn xi_squared(p: &PulseSequence, s: &Spectrum) -> Result<XiReport> {
    if !s.is_diagonal() {
        return Err(Error::InvalidSpectrum("ξ is defined for uncorrelated noise sources only".into()));
    }
    let ids = p.noise_ids();
    let power = s.band_power(&ids)?;
    let mut xi_sq = 0.0;
    for (term, pw) in p.noise_terms().iter().zip(&power) {
        let norm_sq = term.op.norm_squared();
        let area: f64 = term.sens.iter().zip(p.dt()).map(|(s, dt)| s.abs() * dt).sum();
        xi_sq += norm_sq * pw * area * area;
    }
    Ok(XiReport { xi_sq, reliable: xi_sq.is_finite() })
}

/// Figures of merit of a pulse under a given spectrum.
#[derive(Debug, Clone)]
pub struct ChannelMetrics {
    pub avg_fidelity: f64,
    pub ent_fidelity: f64,
    pub infid_per_source: Vec<((String, String), f64)>,
    pub xi_sq: Option<f64>,
}

/// Evaluates the error channel and its fidelities for a pulse.
pub fn channel_metrics(p: &PulseSequence, s: &Spectrum, mode: TransferMode) -> Result<ChannelMetrics> {
    let channel = ErrorChannel::compute(p, s, ChannelOptions { mode, with_shifts: false })?;
    let d = p.dim();
    let cm = single_pulse_control_matrix(p, s.omega())?;
    let xi_sq = if s.is_diagonal() { Some(xi_squared(p, s)?.xi_sq) } else { None };
    Ok(ChannelMetrics {
        avg_fidelity: avg_gate_fidelity(&channel.transfer, d)?,
        ent_fidelity: entanglement_fidelity(&channel.transfer, d)?,
        infid_per_source: infidelity(&cm, s, d, InfidelityMethod::GammaTrace)?,
        xi_sq,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn ket(v: &[Complex64]) -> CMat {
        let k = CMat::from_column_slice(v.len(), 1, v);
        &k * k.adjoint()
    }

    #[test]
    fn identity_channel() {
        let b = Basis::pauli(1).unwrap();
        let id = RMat::identity(4, 4);
        assert!((avg_gate_fidelity(&id, 2).unwrap() - 1.0).abs() < 1e-15);
        let rho = ket(&[c(1.0, 0.0), c(0.0, 0.0)]);
        assert!((state_fidelity(&id, &rho, &rho, &b).unwrap() - 1.0).abs() < 1e-14);
        assert!((povm_probability(&CMat::identity(2, 2), &id, &rho, &b).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn dephasing_fidelities() {
        let b = Basis::pauli(1).unwrap();
        let gamma = 0.3f64;
        let etm = RMat::from_diagonal(&DVector::from_vec(vec![1.0, (-gamma).exp(), (-gamma).exp(), 1.0]));
        let f = avg_gate_fidelity(&etm, 2).unwrap();
        assert!((f - (4.0 + 2.0 * (-gamma).exp()) / 6.0).abs() < 1e-15);
        let fe = entanglement_fidelity(&etm, 2).unwrap();
        assert!((f - (2.0 * fe + 1.0) / 3.0).abs() < 1e-15);
        let zero = ket(&[c(1.0, 0.0), c(0.0, 0.0)]);
        assert!((state_fidelity(&etm, &zero, &zero, &b).unwrap() - 1.0).abs() < 1e-14);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let plus = ket(&[c(s, 0.0), c(s, 0.0)]);
        assert!((state_fidelity(&etm, &plus, &plus, &b).unwrap() - (1.0 + (-gamma).exp()) / 2.0).abs() < 1e-14);
    }

    #[test]
    fn state_validation() {
        let b = Basis::pauli(1).unwrap();
        let id = RMat::identity(4, 4);
        let mixed = CMat::identity(2, 2) * c(0.5, 0.0);
        assert!(matches!(state_fidelity(&id, &mixed, &mixed, &b), Err(Error::InvalidState(_))));
        let bad = CMat::identity(2, 2);
        assert!(matches!(state_fidelity(&id, &bad, &bad, &b), Err(Error::InvalidState(_))));
        let neg = CMat::from_diagonal(&DVector::from_vec(vec![c(1.0, 0.0), c(-0.5, 0.0)]));
        assert!(matches!(povm_probability(&neg, &id, &mixed, &b), Err(Error::NotPositive(_))));
    }

    #[test]
    fn leakage_of_identity_is_zero() {
        let b = Basis::ggm(3).unwrap();
        let id = RMat::identity(9, 9);
        let pc = CMat::from_diagonal(&DVector::from_vec(vec![c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]));
        let (lc, ll) = leakage_rates(&id, &pc, &b).unwrap();
        assert!(lc.abs() < 1e-15 && ll.abs() < 1e-15);
        let not_proj = pc * c(0.5, 0.0);
        assert!(matches!(leakage_rates(&id, &not_proj, &b), Err(Error::NotProjector(_))));
    }

    #[test]
    fn subspace_mask() {
        let id = RMat::identity(4, 4);
        let (avg, ent) = subspace_fidelities(&id, 2, &[1, 2, 3]).unwrap();
        assert!((ent - 0.75).abs() < 1e-15);
        assert!((avg - (1.5 + 1.0) / 3.0).abs() < 1e-15);
    }
}
