//! Simulated single-qubit randomized benchmarking under white and 1/f^0.7
//! noise for two Clifford gate sets: composite sequences of π/2 rotations and
//! single rotations of the same mean duration.
//!
//! Prints the mean decay `1 - p(|0⟩)` per sequence length and compares the
//! fitted slope with the average Clifford infidelity `r`, following
//! `p(|0⟩) ≈ 1 - r·m`.
//!
//! cargo run --release --example randomized_benchmarking

use std::f64::consts::PI;

use qfilter::spectrum::{linear_grid, log_grid};
use qfilter::Spectrum;

#[allow(dead_code)]
#[path = "../tests/common/mod.rs"]
mod common;

use common::rb::{run, CliffordSet};

fn main() {
    let composite = CliffordSet::composite(1.0);
    let single = CliffordSet::single(composite.mean_duration());
    let lengths: Vec<usize> = (0..=5).map(|i| 1 + 20 * i).collect();
    let longest = (lengths[lengths.len() - 1] + 1) as f64 * composite.pulses.iter().map(|p| p.duration()).fold(0.0, f64::max);
    let dw = PI / longest;

    let white = linear_grid(0.0, 20.0, (20.0 / dw).ceil() as usize + 1).unwrap();
    let mut pink = log_grid(1e-3 / longest, 0.5, 400).unwrap();
    pink.pop();
    pink.extend(linear_grid(0.5, 20.0, (19.5 / dw).ceil() as usize + 1).unwrap());

    let target = 1e-3;
    for (noise, omega, exponent) in [("white", &white, 0.0), ("1/f^0.7", &pink, 0.7)] {
        for (name, set) in [("composite", &composite), ("single-rotation", &single)] {
            let unit = Spectrum::power_law(1.0, exponent, omega.clone()).unwrap();
            let amp = target / set.average_infidelity(&unit);
            let s = Spectrum::power_law(amp, exponent, omega.clone()).unwrap();
            let r = set.average_infidelity(&s);
            let result = run(set, &s, &lengths, 10, 7);
            println!("{noise} noise, {name} gate set (r = {r:.3e})");
            for (m, decay) in result.lengths.iter().zip(&result.mean_decay) {
                println!("  m = {m:4}  1 - p = {decay:.4e}  r·m = {:.4e}", r * *m as f64);
            }
            println!("  fitted slope {:.4e}, deviation from r {:+.1}%\n", result.slope, 100.0 * (result.slope - r) / r);
        }
    }
}
