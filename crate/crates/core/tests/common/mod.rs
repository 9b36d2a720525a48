#![allow(dead_code)]

pub mod rb;

use num_complex::Complex64;
use qfilter::pulse::{ControlTerm, NoiseTerm, PulseSequence};
use qfilter::{Basis, CMat};
use rand::Rng;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Pauli matrices divided by two: `[σx/2, σy/2, σz/2]`.
pub fn half_paulis() -> [CMat; 3] {
    let z = c(0.0, 0.0);
    let h = c(0.5, 0.0);
    [
        CMat::from_row_slice(2, 2, &[z, h, h, z]),
        CMat::from_row_slice(2, 2, &[z, c(0.0, -0.5), c(0.0, 0.5), z]),
        CMat::from_row_slice(2, 2, &[h, z, z, -h]),
    ]
}

pub fn fid_pulse(tau: f64) -> PulseSequence {
    let [_, _, z] = half_paulis();
    PulseSequence::new(vec![], vec![NoiseTerm::new(z, vec![1.0], "z")], vec![tau], Basis::pauli(1).unwrap()).unwrap()
}

/// Single-qubit pulse with random x/y/z control amplitudes and durations.
/// `n_noise` selects how many of σz/2, σx/2, σy/2 act as noise operators.
pub fn random_qubit_pulse<R: Rng>(rng: &mut R, n_segments: usize, n_noise: usize, signed_sens: bool) -> PulseSequence {
    let ops = half_paulis();
    let control =
        ops.iter().map(|op| ControlTerm::new(op.clone(), (0..n_segments).map(|_| rng.random_range(-4.0..4.0)).collect())).collect();
    let ids = ["z", "x", "y"];
    let noise = [2usize, 0, 1]
        .iter()
        .take(n_noise)
        .zip(ids)
        .map(|(&k, id)| {
            let sens =
                (0..n_segments).map(|_| if signed_sens { rng.random_range(-1.5..1.5) } else { rng.random_range(0.5..1.5) }).collect();
            NoiseTerm::new(ops[k].clone(), sens, id)
        })
        .collect();
    let dt = (0..n_segments).map(|_| rng.random_range(0.05..0.5)).collect();
    PulseSequence::new(control, noise, dt, Basis::pauli(1).unwrap()).unwrap()
}

/// Segments `range` of a pulse as a pulse of its own.
pub fn slice(p: &PulseSequence, range: std::ops::Range<usize>) -> PulseSequence {
    let control = p.control_terms().iter().map(|t| ControlTerm::new(t.op.clone(), t.coeffs[range.clone()].to_vec())).collect();
    let noise = p.noise_terms().iter().map(|t| NoiseTerm::new(t.op.clone(), t.sens[range.clone()].to_vec(), t.id.clone())).collect();
    PulseSequence::new(control, noise, p.dt()[range].to_vec(), p.basis().clone()).unwrap()
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        loop {
            let (mut p0, mut p1) = (1.0, 0.0);
            for k in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * k + 1) as f64 * z * p1 - k as f64 * p2) / (k + 1) as f64;
            }
            let dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                let (mut p0, mut p1) = (1.0, 0.0);
                for k in 0..n {
                    let p2 = p1;
                    p1 = p0;
                    p0 = ((2 * k + 1) as f64 * z * p1 - k as f64 * p2) / (k + 1) as f64;
                }
                let dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
                x[i] = z;
                w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
                break;
            }
        }
    }
    (x, w)
}

/// `∫_0^T dt f(t) ∫_0^t dt' g(t')` by nested Gauss-Legendre quadrature,
/// with the outer interval split into `panels`.
pub fn nested_integral(f: impl Fn(f64) -> Complex64, g: impl Fn(f64) -> Complex64, t: f64, panels: usize, n: usize) -> Complex64 {
    let (x, w) = gauss_legendre(n);
    let integrate = |h: &dyn Fn(f64) -> Complex64, a: f64, b: f64| -> Complex64 {
        let (mid, half) = ((a + b) / 2.0, (b - a) / 2.0);
        x.iter().zip(&w).map(|(xi, wi)| h(mid + half * xi) * (wi * half)).sum()
    };
    let inner = |s: f64| -> Complex64 {
        let k = panels.max(1);
        (0..k).map(|j| integrate(&g, s * j as f64 / k as f64, s * (j + 1) as f64 / k as f64)).sum()
    };
    (0..panels)
        .map(|j| {
            let (a, b) = (t * j as f64 / panels as f64, t * (j + 1) as f64 / panels as f64);
            integrate(&|s| f(s) * inner(s), a, b)
        })
        .sum()
}

/// Least-squares slope and intercept of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}
