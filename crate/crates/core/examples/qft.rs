//! Filter functions of a four-qubit quantum Fourier transform on a chain with
//! nearest-neighbour coupling.
//!
//! The gate set is X(π/2), Y(π/2) on every qubit and a controlled phase
//! CR(π/8) on neighbouring pairs, each a single 30 ns segment. Hadamards,
//! CNOTs, SWAPs and larger controlled phases are sequenced from these, so the
//! whole circuit reuses the control matrices of 11 distinct gates. Noise acts
//! on the first qubit along x, y and z.
//!
//! cargo run --release --example qft

use std::collections::HashMap;
use std::f64::consts::PI;
use std::time::Instant;

use num_complex::Complex64;
use qfilter::control_matrix::{concatenate, fidelity_filter_function, single_pulse_control_matrix};
use qfilter::linalg::kron;
use qfilter::pulse::concatenate_pulses;
use qfilter::spectrum::log_grid;
use qfilter::{Basis, CMat, ControlTerm, NoiseTerm, PulseSequence};

const N: usize = 4;
const TAU: f64 = 30.0;

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum Gate {
    X(usize),
    Y(usize),
    /// CR(π/8) between qubits i and i + 1.
    Cr(usize),
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn pauli(k: usize) -> CMat {
    let (o, i) = (c(0.0, 0.0), c(1.0, 0.0));
    match k {
        0 => CMat::from_row_slice(2, 2, &[o, i, i, o]),
        1 => CMat::from_row_slice(2, 2, &[o, c(0.0, -1.0), c(0.0, 1.0), o]),
        _ => CMat::from_row_slice(2, 2, &[i, o, o, -i]),
    }
}

/// Single-qubit operator `op` on qubit `q` of the register.
fn on(q: usize, op: &CMat) -> CMat {
    (0..N).fold(CMat::identity(1, 1), |acc, k| kron(&acc, &if k == q { op.clone() } else { CMat::identity(2, 2) }))
}

fn build(g: Gate) -> PulseSequence {
    let control = match g {
        Gate::X(q) => vec![ControlTerm::new(on(q, &pauli(0)) * c(0.5, 0.0), vec![PI / 2.0 / TAU])],
        Gate::Y(q) => vec![ControlTerm::new(on(q, &pauli(1)) * c(0.5, 0.0), vec![PI / 2.0 / TAU])],
        Gate::Cr(q) => {
            // exp(-iφ/4 (z_i + z_j - z_i z_j)) is diag(1, 1, 1, e^{iφ}) up to a phase.
            let (zi, zj) = (on(q, &pauli(2)), on(q + 1, &pauli(2)));
            let op = &zi + &zj - &zi * &zj;
            vec![ControlTerm::new(op, vec![PI / 8.0 / 4.0 / TAU])]
        }
    };
    let noise = ["x", "y", "z"].iter().enumerate().map(|(k, id)| NoiseTerm::new(on(0, &pauli(k)) * c(0.5, 0.0), vec![1.0], *id)).collect();
    PulseSequence::new(control, noise, vec![TAU], Basis::pauli(N).unwrap()).unwrap()
}

fn hadamard(q: usize) -> Vec<Gate> {
    vec![Gate::Y(q), Gate::X(q), Gate::X(q)]
}

/// Controlled phase π/2^m on qubits q, q + 1.
fn cphase(q: usize, m: u32) -> Vec<Gate> {
    vec![Gate::Cr(q); 1 << (3 - m)]
}

fn cnot(control: usize, target: usize) -> Vec<Gate> {
    let pair = control.min(target);
    [hadamard(target), cphase(pair, 0), hadamard(target)].concat()
}

fn swap(q: usize) -> Vec<Gate> {
    [cnot(q, q + 1), cnot(q + 1, q), cnot(q, q + 1)].concat()
}

/// Each logical qubit is rotated, then swapped down the chain past the qubits
/// it still has to interact with; the swaps leave the outputs bit-reversed as
/// the transform requires.
fn circuit() -> Vec<Gate> {
    let mut gates = Vec::new();
    for stage in 0..N {
        gates.extend(hadamard(0));
        for k in 0..N - 1 - stage {
            gates.extend(cphase(k, k as u32 + 1));
            gates.extend(swap(k));
        }
    }
    gates
}

fn qft_matrix() -> CMat {
    let d = 1 << N;
    CMat::from_fn(d, d, |j, k| Complex64::from_polar(1.0 / (d as f64).sqrt(), 2.0 * PI * (j * k) as f64 / d as f64))
}

fn main() {
    let gates = circuit();
    let mut cache: HashMap<Gate, PulseSequence> = HashMap::new();
    for &g in &gates {
        cache.entry(g).or_insert_with(|| build(g));
    }
    let refs: Vec<&PulseSequence> = gates.iter().map(|g| &cache[g]).collect();
    println!("{} elementary pulses, {} distinct, total duration {:.2} µs", refs.len(), cache.len(), refs.len() as f64 * TAU / 1e3);

    let omega = log_grid(1e-4, 1e2, 120).unwrap();
    let start = Instant::now();
    let (qft, cm) = concatenate(&refs, &omega).unwrap();
    let t_concat = start.elapsed();

    let d = (1 << N) as f64;
    let overlap = (qft_matrix().adjoint() * qft.total_propagator().unwrap()).trace().norm() / d;
    println!("|tr(QFT† U)|/d = {overlap:.12}");

    let start = Instant::now();
    let direct = single_pulse_control_matrix(&concatenate_pulses(&refs).unwrap(), &omega).unwrap();
    let t_direct = start.elapsed();
    println!(
        "control matrix: concatenated {:.2} s, segment by segment {:.2} s, max difference {:.2e}",
        t_concat.as_secs_f64(),
        t_direct.as_secs_f64(),
        cm.max_abs_diff(&direct)
    );

    let ff = fidelity_filter_function(&cm);
    // Sensitivity accumulated in [0, ω] relative to the whole grid.
    let mut cumulative = vec![vec![0.0; omega.len()]; 3];
    for a in 0..3 {
        for i in 1..omega.len() {
            cumulative[a][i] = cumulative[a][i - 1] + 0.5 * (ff[(a, i)] + ff[(a, i - 1)]) * (omega[i] - omega[i - 1]);
        }
    }
    println!("\n{:>10} {:>12} {:>12} {:>12} {:>8} {:>8} {:>8}", "omega", "F_x", "F_y", "F_z", "I_x", "I_y", "I_z");
    for i in (0..omega.len()).step_by(10) {
        print!("{:>10.3e}", omega[i]);
        for a in 0..3 {
            print!(" {:>12.4e}", ff[(a, i)]);
        }
        for a in 0..3 {
            print!(" {:>8.4}", cumulative[a][i] / cumulative[a][omega.len() - 1]);
        }
        println!();
    }
}
