mod common;

use common::{c, half_paulis, random_qubit_pulse, slice};
use nalgebra::DVector;
use proptest::prelude::*;
use qfilter::control_matrix::{concatenate, concatenate_periodic, fidelity_filter_function, single_pulse_control_matrix};
use qfilter::error_channel::{cumulant_from_totals, decay_amplitudes, error_transfer_matrix, frequency_shifts, TransferMode};
use qfilter::linalg::{expm_hermitian, unitarity_deviation};
use qfilter::metrics::{avg_gate_fidelity, entanglement_fidelity, infidelity, leakage_rates, povm_probability, InfidelityMethod};
use qfilter::pulse::{ControlTerm, NoiseTerm, PulseSequence};
use qfilter::spectrum::{linear_grid, log_grid, SpectrumValues};
use qfilter::{Basis, CMat, RMat, Spectrum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_hermitian(rng: &mut ChaCha8Rng, d: usize) -> CMat {
    let mut h = CMat::zeros(d, d);
    for i in 0..d {
        h[(i, i)] = c(rng.random_range(-1.0..1.0), 0.0);
        for j in i + 1..d {
            let z = c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            h[(i, j)] = z;
            h[(j, i)] = z.conj();
        }
    }
    h
}

fn random_unitary(rng: &mut ChaCha8Rng, d: usize) -> CMat {
    let h = random_hermitian(rng, d);
    expm_hermitian(&h, rng.random_range(0.1..3.0)).unwrap()
}

fn random_unital_channel(rng: &mut ChaCha8Rng, basis: &Basis) -> RMat {
    let n = basis.len();
    let w: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..1.0)).collect();
    let total: f64 = w.iter().sum();
    let mut q = RMat::zeros(n, n);
    for wi in w {
        q += basis.liouville_of_unitary(&random_unitary(rng, basis.dim())).unwrap() * (wi / total);
    }
    q
}

fn bases() -> Vec<Basis> {
    vec![Basis::pauli(1).unwrap(), Basis::pauli(2).unwrap(), Basis::ggm(3).unwrap()]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn liouville_is_homomorphism(seed in any::<u64>(), which in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = &bases()[which];
        let (u, v) = (random_unitary(&mut rng, b.dim()), random_unitary(&mut rng, b.dim()));
        let lhs = b.liouville_of_unitary(&(&u * &v)).unwrap();
        let rhs = b.liouville_of_unitary(&u).unwrap() * b.liouville_of_unitary(&v).unwrap();
        prop_assert!((lhs - rhs).abs().max() <= 1e-12);
    }

    #[test]
    fn propagators_match_subdivision(seed in any::<u64>(), n_seg in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_qubit_pulse(&mut rng, n_seg, 1, true);
        let props = p.propagators().unwrap();
        for q in &props.cumulative {
            prop_assert!(unitarity_deviation(q) <= 1e-10);
        }
        let fine: Vec<usize> = (0..n_seg).flat_map(|g| std::iter::repeat_n(g, 10)).collect();
        let control = p.control_terms().iter().map(|t| ControlTerm::new(t.op.clone(), fine.iter().map(|&g| t.coeffs[g]).collect())).collect();
        let noise = p.noise_terms().iter().map(|t| NoiseTerm::new(t.op.clone(), fine.iter().map(|&g| t.sens[g]).collect(), t.id.clone())).collect();
        let dt = fine.iter().map(|&g| p.dt()[g] / 10.0).collect();
        let q = PulseSequence::new(control, noise, dt, p.basis().clone()).unwrap();
        prop_assert!((q.total_propagator().unwrap() - p.total_propagator().unwrap()).norm() <= 1e-10);
    }

    #[test]
    fn extension_matches_recomputation(seed in any::<u64>(), position in 0usize..2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_qubit_pulse(&mut rng, 3, 2, true);
        let omega = log_grid(1e-1, 1e1, 20).unwrap();
        single_pulse_control_matrix(&p, &omega).unwrap();
        let ext = p.extend(&[2, 2], position).unwrap();
        let remapped = single_pulse_control_matrix(&ext, &omega).unwrap();
        let fresh = PulseSequence::new(ext.control_terms().to_vec(), ext.noise_terms().to_vec(), ext.dt().to_vec(), ext.basis().clone()).unwrap();
        let computed = single_pulse_control_matrix(&fresh, &omega).unwrap();
        prop_assert!(remapped.max_abs_diff(&computed) <= 1e-10);
    }

    #[test]
    fn monolithic_equals_concatenated(seed in any::<u64>(), n_seg in 2usize..7, split_frac in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_qubit_pulse(&mut rng, n_seg, 2, true);
        let split = 1 + ((n_seg - 1) as f64 * split_frac) as usize % (n_seg - 1);
        let omega = log_grid(1e-2, 1e2, 50).unwrap();
        let whole = single_pulse_control_matrix(&p, &omega).unwrap();
        let (_, joined) = concatenate(&[&slice(&p, 0..split), &slice(&p, split..n_seg)], &omega).unwrap();
        prop_assert!(whole.max_abs_diff(&joined) <= 1e-10);
    }

    #[test]
    fn periodic_equals_repetition(seed in any::<u64>(), reps in prop::sample::select(vec![1u64, 2, 3, 7, 16])) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_qubit_pulse(&mut rng, 3, 1, true);
        let omega = log_grid(1e-2, 1e2, 50).unwrap();
        let periodic = concatenate_periodic(&p, &omega, reps).unwrap();
        let copies = vec![&p; reps as usize];
        let (_, explicit) = concatenate(&copies, &omega).unwrap();
        prop_assert!(periodic.max_abs_diff(&explicit) <= 1e-9);
    }

    #[test]
    fn filter_function_nonnegative_and_finite(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_qubit_pulse(&mut rng, 4, 3, true);
        let omega = linear_grid(-20.0, 20.0, 81).unwrap();
        let cm = single_pulse_control_matrix(&p, &omega).unwrap();
        for v in cm.values() {
            prop_assert!(v.column(0).iter().all(|z| z.norm() <= 1e-14));
        }
        let f = fidelity_filter_function(&cm);
        prop_assert!(f.iter().all(|x| x.is_finite() && *x >= 0.0));
    }

    #[test]
    fn dc_limit_without_control(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_seg = rng.random_range(1..5);
        let sens: Vec<f64> = (0..n_seg).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dt: Vec<f64> = (0..n_seg).map(|_| rng.random_range(0.1..1.0)).collect();
        let b = half_paulis()[0].clone() * c(0.3, 0.0) + half_paulis()[2].clone();
        let p = PulseSequence::new(vec![], vec![NoiseTerm::new(b.clone(), sens.clone(), "n")], dt.clone(), Basis::pauli(1).unwrap()).unwrap();
        let f = fidelity_filter_function(&single_pulse_control_matrix(&p, &[0.0, 1.0]).unwrap());
        let area: f64 = sens.iter().zip(&dt).map(|(s, t)| s * t).sum();
        let weight: f64 = p.basis().elements().iter().map(|ck| (&b * ck).trace().norm_sqr()).sum();
        prop_assert!((f[(0, 0)] - area * area * weight).abs() <= 1e-12 * (1.0 + area * area * weight));
    }

    #[test]
    fn decay_amplitudes_hermitian(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_qubit_pulse(&mut rng, 3, 2, true);
        let omega = linear_grid(-30.0, 30.0, 121).unwrap();
        let corr = c(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
        let mats = omega
            .iter()
            .map(|w| {
                let s = 1.0 / (1.0 + w * w);
                CMat::from_row_slice(2, 2, &[c(s, 0.0), corr * s, corr.conj() * s, c(2.0 * s, 0.0)])
            })
            .collect();
        let s = Spectrum::tabulated(omega.clone(), SpectrumValues::Full(mats), Some(p.noise_ids())).unwrap();
        let g = decay_amplitudes(&single_pulse_control_matrix(&p, &omega).unwrap(), &s).unwrap();
        let data = g.data();
        let (na, n) = (data.shape()[0], data.shape()[2]);
        let mut worst = 0.0f64;
        for a in 0..na {
            for b in 0..na {
                for k in 0..n {
                    for l in 0..n {
                        worst = worst.max((data[[a, b, k, l]] - data[[b, a, l, k]].conj()).norm());
                    }
                }
            }
        }
        prop_assert!(worst <= 1e-12);
    }

    #[test]
    fn cumulant_diagonal_ignores_shifts(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_qubit_pulse(&mut rng, 3, 1, true);
        let omega = log_grid(1e-2, 1e2, 60).unwrap();
        let s = Spectrum::power_law(1e-2, 1.0, omega.clone()).unwrap();
        let gamma = decay_amplitudes(&single_pulse_control_matrix(&p, &omega).unwrap(), &s).unwrap().total();
        let delta = frequency_shifts(&p, &s, &omega).unwrap().total();
        let with = cumulant_from_totals(&gamma, Some(&delta), p.basis()).unwrap();
        let without = cumulant_from_totals(&gamma, None, p.basis()).unwrap();
        prop_assert!((with.diagonal() - without.diagonal()).abs().max() <= 1e-12);
        let u = error_transfer_matrix(&with, TransferMode::Exact);
        prop_assert!(u[(0, 0)] == 1.0 && (1..4).all(|k| u[(0, k)] == 0.0 && u[(k, 0)] == 0.0));
    }

    #[test]
    fn incoherent_part_is_contractive(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_qubit_pulse(&mut rng, 3, 3, true);
        let omega = log_grid(1e-2, 1e2, 80).unwrap();
        let s = Spectrum::power_law(1.0, 0.5, omega.clone()).unwrap();
        let gamma = decay_amplitudes(&single_pulse_control_matrix(&p, &omega).unwrap(), &s).unwrap().total();
        let k = cumulant_from_totals(&gamma, None, p.basis()).unwrap();
        let k = &k * (0.1 / k.norm().max(1e-300));
        let u = error_transfer_matrix(&k, TransferMode::Exact);
        prop_assert!(u.singular_values().max() <= 1.0 + 1e-10);
    }

    #[test]
    fn infidelity_methods_agree(seed in any::<u64>(), one_sided in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_qubit_pulse(&mut rng, 3, 2, true);
        let omega = if one_sided { log_grid(1e-2, 1e2, 100).unwrap() } else { linear_grid(-40.0, 40.0, 161).unwrap() };
        let s = Spectrum::tabulated(
            omega.clone(),
            SpectrumValues::Diagonal(vec![omega.iter().map(|w| 1.0 / (1.0 + w.abs())).collect(), vec![0.3; omega.len()]]),
            Some(p.noise_ids()),
        )
        .unwrap();
        let cm = single_pulse_control_matrix(&p, &omega).unwrap();
        let a = infidelity(&cm, &s, 2, InfidelityMethod::GammaTrace).unwrap();
        let b = infidelity(&cm, &s, 2, InfidelityMethod::FfIntegral).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(&x.0, &y.0);
            prop_assert!((x.1 - y.1).abs() <= 1e-12 * (1.0 + x.1.abs()));
        }
    }

    #[test]
    fn fidelity_relations(seed in any::<u64>(), which in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = &bases()[which];
        let d = b.dim();
        let q = random_unital_channel(&mut rng, b);
        let fa = avg_gate_fidelity(&q, d).unwrap();
        let fe = entanglement_fidelity(&q, d).unwrap();
        prop_assert!((fa - (d as f64 * fe + 1.0) / (d as f64 + 1.0)).abs() <= 1e-14);

        // Complete projective measurement in a random basis.
        let v = random_unitary(&mut rng, d);
        let psi = random_unitary(&mut rng, d).column(0).into_owned();
        let sigma = &psi * psi.adjoint();
        let total: f64 = (0..d)
            .map(|i| {
                let e = v.column(i) * v.column(i).adjoint();
                povm_probability(&e, &q, &sigma, b).unwrap()
            })
            .sum();
        prop_assert!((total - 1.0).abs() <= 1e-10);

        if d > 2 || which == 1 {
            let rank = rng.random_range(1..d);
            let pc = CMat::from_diagonal(&DVector::from_fn(d, |i, _| c(if i < rank { 1.0 } else { 0.0 }, 0.0)));
            let (lc, ll) = leakage_rates(&q, &pc, b).unwrap();
            prop_assert!((rank as f64 * lc - (d - rank) as f64 * ll).abs() <= 1e-10);
        }
    }

    #[test]
    fn spectrum_constructors_valid(level in 0.0f64..10.0, amp in 0.0f64..10.0, a in 0.0f64..3.0) {
        let omega = log_grid(1e-3, 1e3, 40).unwrap();
        for s in [Spectrum::white(level, omega.clone()).unwrap(), Spectrum::power_law(amp, a, omega.clone()).unwrap()] {
            match s.values() {
                SpectrumValues::Diagonal(rows) => prop_assert!(rows.iter().flatten().all(|v| v.is_finite() && *v >= 0.0)),
                SpectrumValues::Full(_) => prop_assert!(false),
            }
        }
    }
}

#[test]
fn ggm_and_pauli_span_the_same_space() {
    let (p, g) = (Basis::pauli(1).unwrap(), Basis::ggm(2).unwrap());
    let m = RMat::from_fn(4, 4, |i, j| (p.element(i) * g.element(j)).trace().re);
    assert!((m.transpose() * &m - RMat::identity(4, 4)).abs().max() <= 1e-12);
}
