//! Single-qubit randomized benchmarking on top of the filter-function machinery.

use std::collections::HashMap;

use num_complex::Complex64;
use qfilter::control_matrix::{concatenate, single_pulse_control_matrix};
use qfilter::error_channel::{cumulant_pauli_from_totals, decay_amplitudes, error_transfer_matrix, TransferMode};
use qfilter::linalg::expm_hermitian;
use qfilter::metrics::{infidelity, state_fidelity, InfidelityMethod};
use qfilter::pulse::{concatenate_pulses, ControlTerm, NoiseTerm, PulseSequence};
use qfilter::{Basis, CMat, Spectrum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{c, half_paulis};

type Rot = [[i32; 3]; 3];

fn rotation(u: &CMat) -> Rot {
    let s = half_paulis();
    let mut r = [[0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            // tr(σ_i U σ_j U†) / 2 with σ = 2·(σ/2)
            let v: Complex64 = (&s[i] * u * &s[j] * u.adjoint()).trace() * 2.0;
            r[i][j] = v.re.round() as i32;
        }
    }
    r
}

fn compose(a: &Rot, b: &Rot) -> Rot {
    let mut r = [[0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            r[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    r
}

fn transpose(a: &Rot) -> Rot {
    let mut r = [[0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            r[i][j] = a[j][i];
        }
    }
    r
}

fn noise_terms(n_segments: usize) -> Vec<NoiseTerm> {
    half_paulis().iter().zip(["x", "y", "z"]).map(|(op, id)| NoiseTerm::new(op.clone(), vec![1.0; n_segments], id)).collect()
}

/// The 24 single-qubit Cliffords as pulses.
pub struct CliffordSet {
    pub pulses: Vec<PulseSequence>,
    rotations: Vec<Rot>,
    index: HashMap<Rot, usize>,
}

/// Words in X(π/2) and Y(π/2) reaching each Clifford, shortest first.
fn clifford_words() -> Vec<(Vec<usize>, CMat)> {
    let s = half_paulis();
    let gens = [expm_hermitian(&s[0], std::f64::consts::FRAC_PI_2).unwrap(), expm_hermitian(&s[1], std::f64::consts::FRAC_PI_2).unwrap()];
    let mut seen = HashMap::new();
    let id = CMat::identity(2, 2);
    seen.insert(rotation(&id), ());
    let mut out = vec![(vec![], id)];
    let mut head = 0;
    while head < out.len() {
        let (word, u) = out[head].clone();
        head += 1;
        for (g, gate) in gens.iter().enumerate() {
            let next = gate * &u;
            let key = rotation(&next);
            if seen.insert(key, ()).is_none() {
                let mut w = word.clone();
                w.push(g);
                out.push((w, next));
            }
        }
    }
    assert_eq!(out.len(), 24);
    out
}

impl CliffordSet {
    fn from_pulses(pulses: Vec<PulseSequence>) -> CliffordSet {
        let rotations: Vec<Rot> = pulses.iter().map(|p| rotation(&p.total_propagator().unwrap())).collect();
        let index = rotations.iter().enumerate().map(|(i, r)| (*r, i)).collect();
        CliffordSet { pulses, rotations, index }
    }

    /// Cliffords compiled from single-segment π/2 rotations of duration `t_g`;
    /// the identity is an idle of the same duration.
    pub fn composite(t_g: f64) -> CliffordSet {
        let s = half_paulis();
        let amp = std::f64::consts::FRAC_PI_2 / t_g;
        let primitive = |g: Option<usize>| {
            let coeff = |k| if g == Some(k) { amp } else { 0.0 };
            let control = vec![ControlTerm::new(s[0].clone(), vec![coeff(0)]), ControlTerm::new(s[1].clone(), vec![coeff(1)])];
            PulseSequence::new(control, noise_terms(1), vec![t_g], Basis::pauli(1).unwrap()).unwrap()
        };
        let prims = [primitive(Some(0)), primitive(Some(1))];
        let idle = primitive(None);
        let pulses = clifford_words()
            .into_iter()
            .map(|(word, _)| {
                if word.is_empty() {
                    idle.clone()
                } else {
                    let refs: Vec<&PulseSequence> = word.iter().map(|&g| &prims[g]).collect();
                    concatenate_pulses(&refs).unwrap()
                }
            })
            .collect();
        CliffordSet::from_pulses(pulses)
    }

    /// Each Clifford as one rotation about its symmetry axis lasting `duration`.
    pub fn single(duration: f64) -> CliffordSet {
        let s = half_paulis();
        let pulses = clifford_words()
            .into_iter()
            .map(|(_, u)| {
                let det = u.determinant().sqrt();
                let mut v = u / det;
                if v.trace().re < 0.0 {
                    v = -v;
                }
                let a0 = (v.trace().re / 2.0).clamp(-1.0, 1.0);
                let phi = 2.0 * a0.acos();
                let sin = (phi / 2.0).sin();
                let control = (0..3)
                    .map(|k| {
                        // tr(V σ_k) = -2i sin(φ/2) n_k
                        let nk = if sin.abs() < 1e-12 { 0.0 } else { ((&v * &s[k]).trace() * 2.0 * c(0.0, 1.0)).re / (2.0 * sin) };
                        ControlTerm::new(s[k].clone(), vec![phi * nk / duration])
                    })
                    .collect();
                PulseSequence::new(control, noise_terms(1), vec![duration], Basis::pauli(1).unwrap()).unwrap()
            })
            .collect();
        CliffordSet::from_pulses(pulses)
    }

    pub fn mean_duration(&self) -> f64 {
        self.pulses.iter().map(|p| p.duration()).sum::<f64>() / self.pulses.len() as f64
    }

    /// Clifford undoing the sequence (applied first to last).
    pub fn inverse_of(&self, seq: &[usize]) -> usize {
        let total = seq.iter().fold([[1, 0, 0], [0, 1, 0], [0, 0, 1]], |acc, &i| compose(&self.rotations[i], &acc));
        self.index[&transpose(&total)]
    }

    /// Average gate infidelity per Clifford, `d/(d+1) · Σ_α ℐ_αα`.
    pub fn average_infidelity(&self, s: &Spectrum) -> f64 {
        let total: f64 = self
            .pulses
            .iter()
            .map(|p| {
                let cm = single_pulse_control_matrix(p, s.omega()).unwrap();
                infidelity(&cm, s, 2, InfidelityMethod::GammaTrace)
                    .unwrap()
                    .iter()
                    .filter(|((a, b), _)| a == b)
                    .map(|(_, v)| v)
                    .sum::<f64>()
            })
            .sum();
        2.0 / 3.0 * total / self.pulses.len() as f64
    }

    /// Probability of returning to |0⟩ after the sequence.
    pub fn survival(&self, seq: &[usize], s: &Spectrum) -> f64 {
        let refs: Vec<&PulseSequence> = seq.iter().map(|&i| &self.pulses[i]).collect();
        let (merged, cm) = concatenate(&refs, s.omega()).unwrap();
        let gamma = decay_amplitudes(&cm, s).unwrap();
        let k = cumulant_pauli_from_totals(&gamma.total(), None).unwrap();
        let channel = merged.total_liouville().unwrap() * error_transfer_matrix(&k, TransferMode::Exact);
        let rho = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        state_fidelity(&channel, &rho, &rho, merged.basis()).unwrap()
    }
}

pub struct RbResult {
    pub lengths: Vec<usize>,
    pub mean_decay: Vec<f64>,
    pub slope: f64,
}

/// Mean `1 - p` over `k` random sequences per length, and its fitted slope.
pub fn run(set: &CliffordSet, s: &Spectrum, lengths: &[usize], k: usize, seed: u64) -> RbResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mean_decay: Vec<f64> = lengths
        .iter()
        .map(|&m| {
            (0..k)
                .map(|_| {
                    let mut seq: Vec<usize> = (0..m).map(|_| rng.random_range(0..24)).collect();
                    seq.push(set.inverse_of(&seq));
                    1.0 - set.survival(&seq, s)
                })
                .sum::<f64>()
                / k as f64
        })
        .collect();
    let x: Vec<f64> = lengths.iter().map(|&m| m as f64).collect();
    let (slope, _) = super::linear_fit(&x, &mean_decay);
    RbResult { lengths: lengths.to_vec(), mean_decay, slope }
}
