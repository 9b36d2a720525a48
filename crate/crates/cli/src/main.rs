//! Command-line front end: reads pulse and spectrum files, writes CSV curves
//! and JSON results.

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qfilter::control_matrix::{concatenate, concatenate_periodic, fidelity_filter_function, pulse_fidelity_filter_function, FfMethod};
use qfilter::error_channel::{ChannelOptions, ErrorChannel, TransferMode};
use qfilter::io::{load_matrix, load_pulse, pulse_to_json, read_spectrum_file, real_matrix_to_json, SpectrumFile};
use qfilter::metrics::{
    avg_gate_fidelity, entanglement_fidelity, infidelity, leakage_rates, subspace_fidelities, xi_squared, InfidelityMethod, DEFAULT_C_M,
};
use qfilter::montecarlo::{mc_entanglement_fidelity, scaling_benchmark, FfBenchParams, McConfig, NoiseModel};
use qfilter::spectrum::{linear_grid, log_grid};
use qfilter::{Error, ErrorCategory, PulseSequence, Spectrum};
use serde_json::json;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

#[derive(Parser, Debug)]
#[command(name = "qfilter", version, about = "Filter functions and error channels of noisy control pulses")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Output file (default: standard output).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker thread cap.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Frequencies on input and output are in Hz instead of rad per time unit.
    #[arg(long, global = true)]
    hz: bool,
    /// Lower end of the frequency grid.
    #[arg(long, global = true)]
    omega_min: Option<f64>,
    /// Upper end of the frequency grid.
    #[arg(long, global = true)]
    omega_max: Option<f64>,
    /// Number of grid points.
    #[arg(long, global = true)]
    omega_n: Option<usize>,
    /// Grid spacing.
    #[arg(long, global = true, value_enum)]
    omega_scale: Option<Scale>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Scale {
    Log,
    Linear,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Exact,
    FirstOrder,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Method {
    Auto,
    Liouville,
    Conjugation,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fidelity filter function of a pulse.
    ///
    /// CSV columns: omega, then F_<id> for every noise source.
    FilterFunction {
        #[arg(long)]
        pulse: PathBuf,
        #[arg(long, value_enum, default_value = "auto")]
        method: Method,
    },
    /// Entanglement infidelity per noise-source pair, as JSON.
    Infidelity {
        #[arg(long)]
        pulse: PathBuf,
        #[arg(long)]
        spectrum: PathBuf,
        /// Ratio of maximum to rms noise amplitude for the convergence check.
        #[arg(long, default_value_t = DEFAULT_C_M)]
        c_m: f64,
    },
    /// Noise-averaged error transfer matrix.
    ///
    /// CSV columns: row, col, re, im.
    TransferMatrix {
        #[arg(long)]
        pulse: PathBuf,
        #[arg(long)]
        spectrum: PathBuf,
        #[arg(long, value_enum, default_value = "exact")]
        mode: Mode,
        /// Include second-order coherent frequency shifts.
        #[arg(long)]
        with_shifts: bool,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        /// Also report fidelities of a subspace of this dimension (JSON only).
        #[arg(long, requires = "mask")]
        subspace_dim: Option<usize>,
        /// Transfer-matrix diagonal indices summed for the subspace fidelities.
        #[arg(long, value_delimiter = ',', requires = "subspace_dim")]
        mask: Vec<usize>,
    },
    /// Joins pulses in time and writes the filter function of the result.
    ///
    /// CSV columns: omega, then F_<id> for every noise source.
    Concat {
        /// Pulse files in temporal order.
        #[arg(required = true, num_args = 1..)]
        pulses: Vec<PathBuf>,
        /// Where to write the composite pulse as JSON.
        #[arg(long)]
        pulse_out: Option<PathBuf>,
    },
    /// Filter function of a pulse repeated back to back.
    ///
    /// CSV columns: omega, then F_<id> for every noise source.
    Periodic {
        #[arg(long)]
        pulse: PathBuf,
        #[arg(long)]
        reps: u64,
    },
    /// Leakage out of and back into a computational subspace, as JSON.
    Leakage {
        #[arg(long)]
        pulse: PathBuf,
        #[arg(long)]
        spectrum: PathBuf,
        /// JSON matrix of the projector onto the computational subspace.
        #[arg(long)]
        projector: PathBuf,
        #[arg(long, value_enum, default_value = "exact")]
        mode: Mode,
        #[arg(long)]
        with_shifts: bool,
    },
    /// Compares the filter-function infidelity with a Monte Carlo estimate.
    ///
    /// The spectrum must be a white or power_law model; power laws are cut off
    /// at the grid ends. Writes JSON.
    McValidate {
        #[arg(long)]
        pulse: PathBuf,
        #[arg(long)]
        spectrum: PathBuf,
        #[arg(long, default_value_t = 1000)]
        n_traj: usize,
        #[arg(long, default_value_t = 20)]
        n_sub: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Wall-time scaling of Monte Carlo and filter-function evaluation.
    ///
    /// CSV columns: d, method, wall_seconds, estimate, stderr.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
        dims: Vec<usize>,
        #[arg(long, default_value_t = 100)]
        n_traj: usize,
        #[arg(long, default_value_t = 10)]
        n_sub: usize,
        #[arg(long, default_value_t = 10)]
        n_segments: usize,
        #[arg(long, default_value_t = 200)]
        n_omega: usize,
        /// Seconds after which larger dimensions are skipped for a method.
        #[arg(long, default_value_t = 60.0)]
        timeout: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the fitted t = a·d^b exponents as JSON to this file.
        #[arg(long)]
        fits: Option<PathBuf>,
    },
}

#[derive(Debug)]
enum CliError {
    Lib(Error),
    Io(io::Error),
    Usage(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(io::Error::other(e))
    }
}

impl CliError {
    fn category(&self) -> (&'static str, u8) {
        match self {
            CliError::Lib(e) => match e.category() {
                ErrorCategory::Parse => ("parse", 1),
                ErrorCategory::Validation => ("validation", 2),
                ErrorCategory::Numerical => ("numerical", 3),
            },
            CliError::Io(_) => ("io", 1),
            CliError::Usage(_) => ("validation", 2),
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Lib(e) => e.to_string(),
            CliError::Io(e) => e.to_string(),
            CliError::Usage(m) => m.clone(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

struct Ctx {
    global: Global,
}

impl Ctx {
    fn unit(&self) -> f64 {
        if self.global.hz {
            TWO_PI
        } else {
            1.0
        }
    }

    fn grid_given(&self) -> bool {
        let g = &self.global;
        g.omega_min.is_some() || g.omega_max.is_some() || g.omega_n.is_some() || g.omega_scale.is_some()
    }

    /// Grid from the flags, filling unset values with defaults.
    fn flag_grid(&self) -> CliResult<Vec<f64>> {
        let g = &self.global;
        let scale = g.omega_scale.unwrap_or(Scale::Log);
        let min = g.omega_min.unwrap_or(match scale {
            Scale::Log => 1e-2,
            Scale::Linear => 0.0,
        });
        let max = g.omega_max.unwrap_or(1e2);
        let n = g.omega_n.unwrap_or(500);
        let k = self.unit();
        Ok(match scale {
            Scale::Log => log_grid(min * k, max * k, n)?,
            Scale::Linear => linear_grid(min * k, max * k, n)?,
        })
    }

    fn spectrum_file(&self, path: &Path) -> CliResult<SpectrumFile> {
        let mut f = read_spectrum_file(path)?;
        if self.global.hz {
            f.scale_frequencies(TWO_PI);
        }
        Ok(f)
    }

    /// Grid flags win; model spectra without a grid of their own get the default grid.
    fn grid_for(&self, f: &SpectrumFile) -> CliResult<Option<Vec<f64>>> {
        let needs_grid = matches!(f, SpectrumFile::Model { grid: None, .. });
        Ok(if self.grid_given() || needs_grid { Some(self.flag_grid()?) } else { None })
    }

    fn spectrum(&self, path: &Path) -> CliResult<Spectrum> {
        let f = self.spectrum_file(path)?;
        Ok(f.build(self.grid_for(&f)?)?)
    }

    fn writer(&self) -> CliResult<Box<dyn Write>> {
        Ok(match &self.global.out {
            Some(p) => Box::new(io::BufWriter::new(File::create(p)?)),
            None => Box::new(io::BufWriter::new(io::stdout().lock())),
        })
    }

    fn write_json(&self, value: &serde_json::Value) -> CliResult<()> {
        let mut w = self.writer()?;
        serde_json::to_writer_pretty(&mut w, value).map_err(io::Error::other)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    /// Writes `omega, F_<id>...` rows.
    fn write_filter_function(&self, omega: &[f64], ids: &[String], f: &ndarray::Array2<f64>) -> CliResult<()> {
        let mut w = csv::Writer::from_writer(self.writer()?);
        let mut header = vec!["omega".to_string()];
        header.extend(ids.iter().map(|id| format!("F_{id}")));
        w.write_record(&header)?;
        for (i, &om) in omega.iter().enumerate() {
            let mut row = vec![(om / self.unit()).to_string()];
            row.extend((0..ids.len()).map(|a| f[(a, i)].to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn mode(m: Mode) -> TransferMode {
    match m {
        Mode::Exact => TransferMode::Exact,
        Mode::FirstOrder => TransferMode::FirstOrder,
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.global.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let ctx = Ctx { global: cli.global };
    match cli.command {
        Command::FilterFunction { pulse, method } => {
            let p = load_pulse(&pulse)?;
            let omega = ctx.flag_grid()?;
            let method = match method {
                Method::Auto => FfMethod::default(),
                Method::Liouville => FfMethod::Liouville,
                Method::Conjugation => FfMethod::Conjugation,
            };
            let f = pulse_fidelity_filter_function(&p, &omega, method)?;
            ctx.write_filter_function(&omega, &p.noise_ids(), &f)
        }
        Command::Infidelity { pulse, spectrum, c_m } => {
            let p = load_pulse(&pulse)?;
            let s = ctx.spectrum(&spectrum)?;
            let cm = qfilter::single_pulse_control_matrix(&p, s.omega())?;
            let records: Vec<_> = infidelity(&cm, &s, p.dim(), InfidelityMethod::GammaTrace)?
                .into_iter()
                .map(|((a, b), v)| json!({"alpha": a, "beta": b, "infidelity": v}))
                .collect();
            let total: f64 = records.iter().map(|r| r["infidelity"].as_f64().unwrap_or(0.0)).sum();
            let xi = if s.is_diagonal() {
                let x = xi_squared(&p, &s)?;
                json!({"xi_squared": if x.reliable { json!(x.xi_sq) } else { json!(null) }, "reliable": x.reliable, "c_m": c_m, "converges": x.converges(c_m)})
            } else {
                json!(null)
            };
            ctx.write_json(&json!({"records": records, "total": total, "convergence": xi}))
        }
        Command::TransferMatrix { pulse, spectrum, mode: m, with_shifts, format, subspace_dim, mask } => {
            let p = load_pulse(&pulse)?;
            let s = ctx.spectrum(&spectrum)?;
            let ch = ErrorChannel::compute(&p, &s, ChannelOptions { mode: mode(m), with_shifts })?;
            let u = &ch.transfer;
            match format {
                Format::Json => {
                    let mut v = json!({
                        "mode": match m { Mode::Exact => "exact", Mode::FirstOrder => "first-order" },
                        "with_shifts": with_shifts,
                        "dim": p.dim(),
                        "transfer": real_matrix_to_json(u),
                        "avg_gate_fidelity": avg_gate_fidelity(u, p.dim())?,
                        "entanglement_fidelity": entanglement_fidelity(u, p.dim())?,
                    });
                    if let Some(d_sub) = subspace_dim {
                        let (avg, ent) = subspace_fidelities(u, d_sub, &mask)?;
                        v["subspace"] = json!({"dim": d_sub, "mask": mask, "avg_gate_fidelity": avg, "entanglement_fidelity": ent});
                    }
                    ctx.write_json(&v)
                }
                Format::Csv => {
                    let mut w = csv::Writer::from_writer(ctx.writer()?);
                    w.write_record(["row", "col", "re", "im"])?;
                    for i in 0..u.nrows() {
                        for j in 0..u.ncols() {
                            w.write_record([i.to_string(), j.to_string(), u[(i, j)].to_string(), 0f64.to_string()])?;
                        }
                    }
                    w.flush()?;
                    Ok(())
                }
            }
        }
        Command::Concat { pulses, pulse_out } => {
            let loaded = pulses.iter().map(|p| load_pulse(p)).collect::<Result<Vec<_>, _>>()?;
            let refs: Vec<&PulseSequence> = loaded.iter().collect();
            let omega = ctx.flag_grid()?;
            let (merged, cm) = concatenate(&refs, &omega)?;
            if let Some(path) = pulse_out {
                let mut f = io::BufWriter::new(File::create(path)?);
                serde_json::to_writer_pretty(&mut f, &pulse_to_json(&merged, None)).map_err(io::Error::other)?;
                writeln!(f)?;
            }
            ctx.write_filter_function(&omega, &merged.noise_ids(), &fidelity_filter_function(&cm))
        }
        Command::Periodic { pulse, reps } => {
            let p = load_pulse(&pulse)?;
            let omega = ctx.flag_grid()?;
            let cm = concatenate_periodic(&p, &omega, reps)?;
            ctx.write_filter_function(&omega, &p.noise_ids(), &fidelity_filter_function(&cm))
        }
        Command::Leakage { pulse, spectrum, projector, mode: m, with_shifts } => {
            let p = load_pulse(&pulse)?;
            let s = ctx.spectrum(&spectrum)?;
            let proj = load_matrix(&projector)?;
            let ch = ErrorChannel::compute(&p, &s, ChannelOptions { mode: mode(m), with_shifts })?;
            let channel = p.total_liouville()? * &ch.transfer;
            let (lc, ll) = leakage_rates(&channel, &proj, p.basis())?;
            let dc = proj.trace().re.round();
            ctx.write_json(&json!({"leakage": lc, "seepage": ll, "d_c": dc, "d_l": p.dim() as f64 - dc}))
        }
        Command::McValidate { pulse, spectrum, n_traj, n_sub, seed } => {
            let p = load_pulse(&pulse)?;
            let file = ctx.spectrum_file(&spectrum)?;
            let s = file.build(ctx.grid_for(&file)?)?;
            let get = |params: &std::collections::BTreeMap<String, f64>, names: &[&str]| {
                names
                    .iter()
                    .find_map(|n| params.get(*n).copied())
                    .ok_or_else(|| CliError::Usage(format!("spectrum model needs '{}'", names[0])))
            };
            let model = match &file {
                SpectrumFile::Model { model, params, .. } if model == "white" => {
                    NoiseModel::White { level: get(params, &["level", "S0"])? }
                }
                SpectrumFile::Model { model, params, .. } if model == "power_law" => {
                    let w = s.omega();
                    NoiseModel::PowerLaw {
                        amplitude: get(params, &["amplitude", "amp", "A"])?,
                        exponent: get(params, &["exponent", "alpha", "a"])?,
                        ir_cutoff: w.iter().copied().filter(|x| *x > 0.0).fold(f64::INFINITY, f64::min),
                        uv_cutoff: w.iter().copied().fold(0.0, f64::max),
                    }
                }
                _ => return Err(CliError::Usage("mc-validate needs a white or power_law model spectrum".into())),
            };
            let cm = qfilter::single_pulse_control_matrix(&p, s.omega())?;
            let ff: f64 =
                infidelity(&cm, &s, p.dim(), InfidelityMethod::GammaTrace)?.iter().filter(|((a, b), _)| a == b).map(|(_, v)| v).sum();
            let mc = mc_entanglement_fidelity(&p, &McConfig { n_traj, n_sub, seed, model })?;
            let sigma = if mc.std_error > 0.0 { (ff - mc.infidelity()).abs() / mc.std_error } else { f64::INFINITY };
            let xi = xi_squared(&p, &s)?;
            ctx.write_json(&json!({
                "ff_infidelity": ff,
                "mc_infidelity": mc.infidelity(),
                "mc_stderr": mc.std_error,
                "discrepancy_sigma": if sigma.is_finite() { json!(sigma) } else { json!(null) },
                "xi_squared": xi.xi_sq,
                "n_traj": n_traj,
                "seed": seed,
            }))
        }
        Command::Bench { dims, n_traj, n_sub, n_segments, n_omega, timeout, seed, fits } => {
            let cfg = McConfig { n_traj, n_sub, seed, model: NoiseModel::White { level: 1e-3 } };
            let ff = FfBenchParams { n_segments, n_omega, timeout: Duration::from_secs_f64(timeout.max(0.0)) };
            let table = scaling_benchmark(&dims, &cfg, &ff)?;
            let mut w = csv::Writer::from_writer(ctx.writer()?);
            w.write_record(["d", "method", "wall_seconds", "estimate", "stderr"])?;
            for r in &table.rows {
                w.write_record([
                    r.d.to_string(),
                    r.method.clone(),
                    r.wall_seconds.to_string(),
                    r.estimate.to_string(),
                    r.stderr.to_string(),
                ])?;
            }
            w.flush()?;
            if let Some(path) = fits {
                let v: Vec<_> = table
                    .fits
                    .iter()
                    .map(|f| json!({"method": f.method, "prefactor": f.prefactor, "exponent": f.exponent, "residual": f.residual}))
                    .collect();
                std::fs::write(path, serde_json::to_string_pretty(&v).map_err(io::Error::other)? + "\n")?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand)
            {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let err = json!({"error": {"category": "parse", "message": e.to_string().trim_end()}});
            eprintln!("{err}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (category, code) = e.category();
            eprintln!("{}", json!({"error": {"category": category, "message": e.message()}}));
            ExitCode::from(code)
        }
    }
}
