//! Monte Carlo reference simulation: classical noise trajectories are sampled,
//! propagated exactly and averaged.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use ndarray::Array3;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::basis::Basis;
use crate::control_matrix::{pulse_fidelity_filter_function, FfMethod};
use crate::error::{Error, Result};
use crate::linalg::{c, eigh, propagator_from_eigen, CMat};
use crate::pulse::{ControlTerm, NoiseTerm, PulseSequence};
use crate::spectrum::{log_grid, Spectrum};

/// Noise spectrum used to generate trajectories. Every source draws an
/// independent realisation of the same process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    /// Flat two-sided spectrum `S₀` up to the sampling band edge.
    White { level: f64 },
    /// `S(ω) = amplitude/|ω|^exponent` for `ir_cutoff ≤ |ω| ≤ uv_cutoff`, zero elsewhere.
    PowerLaw { amplitude: f64, exponent: f64, ir_cutoff: f64, uv_cutoff: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub n_traj: usize,
    /// Sub-steps per pulse segment.
    pub n_sub: usize,
    pub seed: u64,
    pub model: NoiseModel,
}

impl NoiseModel {
    /// Two-sided spectral density at angular frequency `w`.
    pub fn density(&self, w: f64) -> f64 {
        match *self {
            NoiseModel::White { level } => level,
            NoiseModel::PowerLaw { amplitude, exponent, ir_cutoff, uv_cutoff } => {
                let w = w.abs();
                if w >= ir_cutoff && w <= uv_cutoff {
                    amplitude / w.powf(exponent)
                } else {
                    0.0
                }
            }
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_traj == 0 || self.n_sub == 0 {
            return Err(Error::InvalidArgument("n_traj and n_sub must be at least 1".into()));
        }
        match self.model {
            NoiseModel::White { level } if !(level.is_finite() && level >= 0.0) => {
                Err(Error::InvalidSpectrum(format!("white-noise level {level} must be finite and >= 0")))
            }
            NoiseModel::PowerLaw { amplitude, exponent, ir_cutoff, uv_cutoff }
                if !(amplitude.is_finite() && amplitude >= 0.0 && exponent.is_finite() && ir_cutoff > 0.0 && uv_cutoff > ir_cutoff) =>
            {
                Err(Error::InvalidSpectrum("power-law model needs amplitude >= 0 and 0 < ir_cutoff < uv_cutoff".into()))
            }
            _ => Ok(()),
        }
    }
}

fn trajectory_rng(seed: u64, traj: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(traj as u64);
    rng
}

/// Shaped Gaussian noise on a uniform grid of `n` points with spacing `h`.
fn colored_noise(rng: &mut ChaCha8Rng, n: usize, h: f64, amplitude: f64, exponent: f64, ir: f64, uv: f64) -> Vec<f64> {
    let min_len = (2.0 * PI / (ir * h)).ceil() as usize;
    let size = n.max(min_len).max(2).next_power_of_two();
    let dw = 2.0 * PI / (size as f64 * h);
    let norm = 1.0 / (size as f64 * h);
    let mut x = vec![c(0.0, 0.0); size];
    for k in 1..=size / 2 {
        let w = k as f64 * dw;
        let s = if w >= ir && w <= uv { amplitude / w.powf(exponent) } else { 0.0 };
        let (g1, g2): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
        if s == 0.0 {
            continue;
        }
        let sd = (s * norm).sqrt();
        if k == size / 2 {
            x[k] = c(sd * g1, 0.0);
        } else {
            let z = c(g1, g2) * (sd / 2f64.sqrt());
            x[k] = z;
            x[size - k] = z.conj();
        }
    }
    FftPlanner::new().plan_fft_inverse(size).process(&mut x);
    x.into_iter().take(n).map(|z| z.re).collect()
}

/// Largest FFT length accepted for colored noise.
const MAX_NOISE_GRID: usize = 1 << 24;

/// Spacing of the auxiliary noise grid and whether it coincides with the
/// sub-steps. Non-uniform sub-steps are sampled no finer than an eighth of the
/// shortest period in the band.
fn noise_grid_step(h: &[f64], uv: f64) -> (f64, bool) {
    let h0 = h.iter().cloned().fold(f64::INFINITY, f64::min);
    if h.iter().all(|&x| x == h0) {
        (h0, true)
    } else {
        (h0.max(PI / (8.0 * uv)), false)
    }
}

fn check_noise_grid(model: &NoiseModel, h: &[f64]) -> Result<()> {
    if let NoiseModel::PowerLaw { ir_cutoff, uv_cutoff, .. } = *model {
        let (h0, uniform) = noise_grid_step(h, uv_cutoff);
        let total: f64 = h.iter().sum();
        let n = if uniform { h.len() } else { (total / h0).ceil() as usize + 1 };
        let size = (2.0 * PI / (ir_cutoff * h0)).ceil().max(n as f64);
        if size > MAX_NOISE_GRID as f64 {
            return Err(Error::InvalidArgument(format!(
                "colored noise needs {size:.3e} grid points; raise the infrared cutoff or lower n_sub"
            )));
        }
    }
    Ok(())
}

/// Noise values for each source on sub-steps of durations `h`, evaluated at
/// the sub-step midpoints.
fn sample_sources(model: &NoiseModel, rng: &mut ChaCha8Rng, n_sources: usize, h: &[f64]) -> Vec<Vec<f64>> {
    match *model {
        NoiseModel::White { level } => (0..n_sources)
            .map(|_| {
                h.iter()
                    .map(|&hi| {
                        let g: f64 = rng.sample(StandardNormal);
                        if level == 0.0 {
                            0.0
                        } else {
                            g * (level / hi).sqrt()
                        }
                    })
                    .collect()
            })
            .collect(),
        NoiseModel::PowerLaw { amplitude, exponent, ir_cutoff, uv_cutoff } => {
            let (h0, uniform) = noise_grid_step(h, uv_cutoff);
            let total: f64 = h.iter().sum();
            let n = if uniform { h.len() } else { (total / h0).ceil() as usize + 1 };
            (0..n_sources)
                .map(|_| {
                    let grid = colored_noise(rng, n, h0, amplitude, exponent, ir_cutoff, uv_cutoff);
                    if uniform {
                        return grid;
                    }
                    // Grid point j sits at the midpoint time (j + 1/2)·h0.
                    let mut t = 0.0;
                    h.iter()
                        .map(|&hi| {
                            let mid = t + hi / 2.0;
                            t += hi;
                            let x = (mid / h0 - 0.5).max(0.0);
                            let j = (x.floor() as usize).min(n - 2);
                            let f = x - j as f64;
                            grid[j] * (1.0 - f) + grid[j + 1] * f
                        })
                        .collect()
                })
                .collect()
        }
    }
}

/// Samples noise trajectories on a uniform grid; returns an array indexed by
/// `(trajectory, source, step)`.
///
/// White noise has variance `S₀/dt_sub`, i.e. the band integral of `S/2π` up
/// to the sampling frequency.
pub fn sample_trajectories(cfg: &McConfig, n_sources: usize, total_steps: usize, dt_sub: f64) -> Result<Array3<f64>> {
    cfg.validate()?;
    if !(dt_sub > 0.0 && dt_sub.is_finite()) {
        return Err(Error::InvalidArgument(format!("sub-step duration {dt_sub} must be positive")));
    }
    let h = vec![dt_sub; total_steps];
    check_noise_grid(&cfg.model, &h)?;
    let rows: Vec<Vec<Vec<f64>>> = (0..cfg.n_traj)
        .into_par_iter()
        .map(|traj| sample_sources(&cfg.model, &mut trajectory_rng(cfg.seed, traj), n_sources, &h))
        .collect();
    let mut out = Array3::zeros((cfg.n_traj, n_sources, total_steps));
    for (t, row) in rows.iter().enumerate() {
        for (a, src) in row.iter().enumerate() {
            for (k, v) in src.iter().enumerate() {
                out[(t, a, k)] = *v;
            }
        }
    }
    Ok(out)
}

/// Sample mean and standard error of the trajectory estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
}

impl McEstimate {
    pub fn infidelity(&self) -> f64 {
        1.0 - self.mean
    }

    fn from_samples(samples: &[f64]) -> McEstimate {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = if samples.len() > 1 { samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        McEstimate { mean, std_error: (var / n).sqrt() }
    }
}

/// Entanglement fidelity `|tr(Q†U)/d|²` for a single noise realisation.
fn trajectory_fidelity(p: &PulseSequence, cfg: &McConfig, traj: usize, q_ideal: &CMat, h: &[f64]) -> Result<f64> {
    let d = p.dim();
    let n_sub = cfg.n_sub;
    let mut rng = trajectory_rng(cfg.seed, traj);
    let b = sample_sources(&cfg.model, &mut rng, p.n_noise(), h);
    let mut u = CMat::identity(d, d);
    for g in 0..p.n_segments() {
        let hc = p.hamiltonian(g);
        for s in 0..n_sub {
            let k = g * n_sub + s;
            let mut ht = hc.clone();
            for (a, term) in p.noise_terms().iter().enumerate() {
                let amp = b[a][k] * term.sens[g];
                if amp != 0.0 {
                    ht += &term.op * c(amp, 0.0);
                }
            }
            let (w, v) = eigh(&ht)?;
            u = propagator_from_eigen(&w, &v, h[k]) * u;
        }
    }
    let overlap: Complex64 = (q_ideal.adjoint() * u).trace() / d as f64;
    Ok(overlap.norm_sqr())
}

/// Monte Carlo estimate of the noise-averaged entanglement fidelity.
pub fn mc_entanglement_fidelity(p: &PulseSequence, cfg: &McConfig) -> Result<McEstimate> {
    cfg.validate()?;
    let q_ideal = p.total_propagator()?;
    let h: Vec<f64> = p.dt().iter().flat_map(|&dt| std::iter::repeat_n(dt / cfg.n_sub as f64, cfg.n_sub)).collect();
    check_noise_grid(&cfg.model, &h)?;
    let samples: Vec<f64> = (0..cfg.n_traj).into_par_iter().map(|t| trajectory_fidelity(p, cfg, t, &q_ideal, &h)).collect::<Result<_>>()?;
    Ok(McEstimate::from_samples(&samples))
}

/// Parameters of the filter-function side of the scaling benchmark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FfBenchParams {
    pub n_segments: usize,
    pub n_omega: usize,
    /// Once a cell of a method exceeds this, larger dimensions are skipped for it.
    pub timeout: Duration,
}

impl Default for FfBenchParams {
    fn default() -> Self {
        FfBenchParams { n_segments: 10, n_omega: 200, timeout: Duration::from_secs(60) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub d: usize,
    pub method: String,
    pub wall_seconds: f64,
    pub estimate: f64,
    pub stderr: f64,
}

/// Least-squares fit of `t = a·d^b`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingFit {
    pub method: String,
    pub prefactor: f64,
    pub exponent: f64,
    /// Root-mean-square residual in `ln t`.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchTable {
    pub rows: Vec<BenchRow>,
    pub fits: Vec<ScalingFit>,
}

fn random_hermitian(rng: &mut ChaCha8Rng, d: usize) -> CMat {
    let mut a = CMat::zeros(d, d);
    for i in 0..d {
        a[(i, i)] = c(rng.sample(StandardNormal), 0.0);
        for j in i + 1..d {
            let z = c(rng.sample(StandardNormal), rng.sample(StandardNormal));
            a[(i, j)] = z;
            a[(j, i)] = z.conj();
        }
    }
    a
}

/// Random pulse of dimension `d` with two control terms and one traceless noise operator.
pub fn random_pulse(d: usize, n_segments: usize, seed: u64) -> Result<PulseSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let control = (0..2)
        .map(|_| {
            let op = random_hermitian(&mut rng, d) / c(d as f64, 0.0);
            ControlTerm::new(op, (0..n_segments).map(|_| rng.random_range(-1.0..1.0)).collect())
        })
        .collect();
    let mut b = random_hermitian(&mut rng, d);
    let tr = b.trace() / d as f64;
    for i in 0..d {
        b[(i, i)] -= tr;
    }
    let b = &b / c(b.norm(), 0.0);
    let noise = vec![NoiseTerm::new(b, vec![1.0; n_segments], "b")];
    let dt = (0..n_segments).map(|_| rng.random_range(0.5..1.5) / n_segments as f64).collect();
    PulseSequence::new(control, noise, dt, Basis::ggm(d)?)
}

fn fit_power_law(method: &str, rows: &[BenchRow]) -> Option<ScalingFit> {
    let pts: Vec<(f64, f64)> =
        rows.iter().filter(|r| r.method == method && r.wall_seconds > 0.0).map(|r| ((r.d as f64).ln(), r.wall_seconds.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let b = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx;
    let ln_a = my - b * mx;
    let residual = (pts.iter().map(|p| (p.1 - ln_a - b * p.0).powi(2)).sum::<f64>() / n).sqrt();
    Some(ScalingFit { method: method.into(), prefactor: ln_a.exp(), exponent: b, residual })
}

/// Times Monte Carlo and both filter-function evaluation strategies on random
/// pulses of each dimension. Results are hardware dependent.
pub fn scaling_benchmark(dims: &[usize], cfg: &McConfig, ff: &FfBenchParams) -> Result<BenchTable> {
    cfg.validate()?;
    let methods = ["mc", "ff_liouville", "ff_conjugation"];
    let mut skip = [false; 3];
    let mut rows = Vec::new();
    for &d in dims {
        let p = random_pulse(d, ff.n_segments, cfg.seed ^ d as u64)?;
        let omega = match cfg.model {
            NoiseModel::White { .. } => {
                let t = p.duration();
                log_grid(1e-3 / t, 1e3 * ff.n_segments as f64 / t, ff.n_omega.max(2))?
            }
            NoiseModel::PowerLaw { ir_cutoff, uv_cutoff, .. } => log_grid(ir_cutoff, uv_cutoff, ff.n_omega.max(2))?,
        };
        let (weights, _) = Spectrum::quadrature_weights(&omega)?;
        let weighted: Vec<f64> = omega.iter().zip(&weights).map(|(&w, &q)| q * cfg.model.density(w)).collect();
        for (mi, &method) in methods.iter().enumerate() {
            if skip[mi] {
                continue;
            }
            // Fresh copy so cached control matrices do not leak between methods.
            let fresh = PulseSequence::new(p.control_terms().to_vec(), p.noise_terms().to_vec(), p.dt().to_vec(), p.basis().clone())?;
            let start = Instant::now();
            let (estimate, stderr) = match mi {
                0 => {
                    let e = mc_entanglement_fidelity(&fresh, cfg)?;
                    (e.infidelity(), e.std_error)
                }
                _ => {
                    let m = if mi == 1 { FfMethod::Liouville } else { FfMethod::Conjugation };
                    let f = pulse_fidelity_filter_function(&fresh, &omega, m)?;
                    (f.row(0).iter().zip(&weighted).map(|(f, w)| f * w).sum::<f64>() / d as f64, 0.0)
                }
            };
            let elapsed = start.elapsed();
            skip[mi] = elapsed > ff.timeout;
            rows.push(BenchRow { d, method: method.into(), wall_seconds: elapsed.as_secs_f64(), estimate, stderr });
        }
    }
    let fits = methods.iter().filter_map(|m| fit_power_law(m, &rows)).collect();
    Ok(BenchTable { rows, fits })
}
