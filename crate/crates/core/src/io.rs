//! JSON file formats for pulses, spectra, bases and matrices.
//!
//! Complex matrices are nested arrays of `[re, im]` pairs, row by row.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::basis::Basis;
use crate::error::{Error, Result};
use crate::linalg::{c, CMat, RMat};
use crate::pulse::{ControlTerm, NoiseTerm, PulseSequence};
use crate::spectrum::{linear_grid, log_grid, Spectrum, SpectrumValues};

/// Row-major complex matrix as `[[[re, im], ...], ...]`.
pub type MatrixJson = Vec<Vec<[f64; 2]>>;

pub fn matrix_from_json(m: &MatrixJson) -> Result<CMat> {
    let rows = m.len();
    let cols = m.first().map(|r| r.len()).unwrap_or(0);
    if rows == 0 || m.iter().any(|r| r.len() != cols) {
        return Err(Error::Shape("matrix rows must be non-empty and of equal length".into()));
    }
    Ok(CMat::from_fn(rows, cols, |i, j| c(m[i][j][0], m[i][j][1])))
}

pub fn matrix_to_json(a: &CMat) -> MatrixJson {
    (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| [a[(i, j)].re, a[(i, j)].im]).collect()).collect()
}

pub fn real_matrix_to_json(a: &RMat) -> MatrixJson {
    (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| [a[(i, j)], 0.0]).collect()).collect()
}

fn parse_json<T: for<'de> Deserialize<'de>>(text: &str, what: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse(format!("{what}: {e}")))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControlJson {
    pub op: MatrixJson,
    pub coeffs: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseJson {
    pub op: MatrixJson,
    pub sens: Vec<f64>,
    pub id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BasisJson {
    Named(String),
    Custom { custom: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PulseFile {
    pub dim: usize,
    pub dt: Vec<f64>,
    #[serde(default)]
    pub control: Vec<ControlJson>,
    pub noise: Vec<NoiseJson>,
    pub basis: BasisJson,
}

/// Loads a basis from a JSON list of matrices. A partial list is completed.
pub fn load_basis(path: &Path) -> Result<Basis> {
    let mats: Vec<MatrixJson> = parse_json(&read(path)?, &path.display().to_string())?;
    let elements = mats.iter().map(matrix_from_json).collect::<Result<Vec<_>>>()?;
    let d = elements.first().map(|m| m.nrows()).ok_or_else(|| Error::Incomplete("basis file is empty".into()))?;
    if elements.len() == d * d {
        Basis::custom(elements)
    } else {
        Basis::complete(elements)
    }
}

fn basis_from_json(spec: &BasisJson, dim: usize, base_dir: &Path) -> Result<Basis> {
    let basis = match spec {
        BasisJson::Named(name) => match name.as_str() {
            "pauli" => {
                if !dim.is_power_of_two() || dim < 2 {
                    return Err(Error::InvalidArgument(format!("Pauli basis needs a power-of-two dimension, got {dim}")));
                }
                Basis::pauli(dim.trailing_zeros() as usize)?
            }
            "ggm" => Basis::ggm(dim)?,
            other => return Err(Error::Parse(format!("unknown basis '{other}'"))),
        },
        BasisJson::Custom { custom } => {
            let p = PathBuf::from(custom);
            load_basis(&if p.is_absolute() { p } else { base_dir.join(p) })?
        }
    };
    if basis.dim() != dim {
        return Err(Error::BasisMismatch(format!("basis dimension {} but pulse dimension {dim}", basis.dim())));
    }
    Ok(basis)
}

/// Parses a pulse definition. Relative custom-basis paths resolve against `base_dir`.
pub fn parse_pulse(text: &str, base_dir: &Path) -> Result<PulseSequence> {
    let f: PulseFile = parse_json(text, "pulse file")?;
    let basis = basis_from_json(&f.basis, f.dim, base_dir)?;
    let control = f.control.iter().map(|t| Ok(ControlTerm::new(matrix_from_json(&t.op)?, t.coeffs.clone()))).collect::<Result<Vec<_>>>()?;
    let noise =
        f.noise.iter().map(|t| Ok(NoiseTerm::new(matrix_from_json(&t.op)?, t.sens.clone(), t.id.clone()))).collect::<Result<Vec<_>>>()?;
    PulseSequence::new(control, noise, f.dt, basis)
}

pub fn load_pulse(path: &Path) -> Result<PulseSequence> {
    let text = read(path)?;
    parse_pulse(&text, path.parent().unwrap_or(Path::new("."))).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Serializable form of a pulse. Non-Pauli bases are written as `"ggm"` unless
/// `basis` is given.
pub fn pulse_to_json(p: &PulseSequence, basis: Option<BasisJson>) -> PulseFile {
    let basis = basis.unwrap_or_else(|| match p.basis().kind() {
        crate::basis::BasisKind::Pauli => BasisJson::Named("pauli".into()),
        _ => BasisJson::Named("ggm".into()),
    });
    PulseFile {
        dim: p.dim(),
        dt: p.dt().to_vec(),
        control: p.control_terms().iter().map(|t| ControlJson { op: matrix_to_json(&t.op), coeffs: t.coeffs.clone() }).collect(),
        noise: p.noise_terms().iter().map(|t| NoiseJson { op: matrix_to_json(&t.op), sens: t.sens.clone(), id: t.id.clone() }).collect(),
        basis,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    Log,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridJson {
    #[serde(rename = "type")]
    pub kind: GridKind,
    pub n: usize,
    pub min: f64,
    pub max: f64,
}

impl GridJson {
    pub fn build(&self) -> Result<Vec<f64>> {
        match self.kind {
            GridKind::Log => log_grid(self.min, self.max, self.n),
            GridKind::Linear => linear_grid(self.min, self.max, self.n),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpectrumFile {
    Tabulated {
        omega: Vec<f64>,
        #[serde(rename = "S")]
        s: BTreeMap<String, Vec<[f64; 2]>>,
    },
    Model {
        model: String,
        #[serde(default)]
        params: BTreeMap<String, f64>,
        #[serde(default)]
        grid: Option<GridJson>,
    },
}

fn param(params: &BTreeMap<String, f64>, names: &[&str]) -> Result<f64> {
    names.iter().find_map(|n| params.get(*n).copied()).ok_or_else(|| Error::Parse(format!("spectrum model needs parameter '{}'", names[0])))
}

fn split_key(key: &str) -> Result<(String, String)> {
    let parts: Vec<&str> = key.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [a] => Ok((a.to_string(), a.to_string())),
        [a, b] => Ok((a.to_string(), b.to_string())),
        _ => Err(Error::Parse(format!("spectrum key '{key}' must be 'source' or 'source,source'"))),
    }
}

fn tabulated(omega: Vec<f64>, s: &BTreeMap<String, Vec<[f64; 2]>>) -> Result<Spectrum> {
    let mut ids: Vec<String> = Vec::new();
    let mut entries = Vec::new();
    for (key, vals) in s {
        let (a, b) = split_key(key)?;
        for id in [&a, &b] {
            if !ids.contains(id) {
                ids.push(id.clone());
            }
        }
        if vals.len() != omega.len() {
            return Err(Error::Shape(format!("spectrum '{key}' has {} values for {} frequencies", vals.len(), omega.len())));
        }
        entries.push((a, b, vals));
    }
    let index = |id: &String| ids.iter().position(|x| x == id).unwrap();
    let n = ids.len();
    let diagonal = entries.iter().all(|(a, b, _)| a == b);
    let values = if diagonal {
        let mut rows = vec![vec![0.0; omega.len()]; n];
        for (a, _, vals) in &entries {
            if let Some(v) = vals.iter().find(|v| v[1] != 0.0) {
                return Err(Error::InvalidSpectrum(format!("auto-spectrum '{a}' has imaginary part {}", v[1])));
            }
            rows[index(a)] = vals.iter().map(|v| v[0]).collect();
        }
        SpectrumValues::Diagonal(rows)
    } else {
        let mut mats = vec![CMat::zeros(n, n); omega.len()];
        let mut set = vec![vec![false; n]; n];
        for (a, b, vals) in &entries {
            let (i, j) = (index(a), index(b));
            set[i][j] = true;
            for (m, v) in mats.iter_mut().zip(vals.iter()) {
                m[(i, j)] = c(v[0], v[1]);
            }
        }
        for i in 0..n {
            for j in 0..n {
                if !set[i][j] && set[j][i] {
                    for m in mats.iter_mut() {
                        m[(i, j)] = m[(j, i)].conj();
                    }
                }
            }
        }
        SpectrumValues::Full(mats)
    };
    Spectrum::tabulated(omega, values, Some(ids))
}

impl SpectrumFile {
    /// Multiplies every frequency in the file by `k`, keeping `∫ dω/2π S` per
    /// unit frequency band fixed. Power-law amplitudes pick up `k^exponent`.
    pub fn scale_frequencies(&mut self, k: f64) {
        match self {
            SpectrumFile::Tabulated { omega, .. } => omega.iter_mut().for_each(|w| *w *= k),
            SpectrumFile::Model { model, params, grid } => {
                if let Some(g) = grid {
                    g.min *= k;
                    g.max *= k;
                }
                if model == "power_law" {
                    let exponent = ["exponent", "alpha", "a"].iter().find_map(|n| params.get(*n).copied()).unwrap_or(0.0);
                    for name in ["amplitude", "amp", "A"] {
                        if let Some(a) = params.get_mut(name) {
                            *a *= k.powf(exponent);
                        }
                    }
                }
            }
        }
    }

    /// Builds the spectrum. `grid` overrides the grid of model spectra and is
    /// required when the file does not specify one; tabulated spectra are
    /// resampled onto it.
    pub fn build(&self, grid: Option<Vec<f64>>) -> Result<Spectrum> {
        match self {
            SpectrumFile::Tabulated { omega, s } => {
                let spec = tabulated(omega.clone(), s)?;
                match grid {
                    Some(g) => spec.resample(g),
                    None => Ok(spec),
                }
            }
            SpectrumFile::Model { model, params, grid: file_grid } => {
                let omega = match (grid, file_grid) {
                    (Some(g), _) => g,
                    (None, Some(g)) => g.build()?,
                    (None, None) => return Err(Error::InvalidGrid("model spectrum needs a frequency grid".into())),
                };
                match model.as_str() {
                    "white" => Spectrum::white(param(params, &["level", "S0"])?, omega),
                    "power_law" => {
                        Spectrum::power_law(param(params, &["amplitude", "amp", "A"])?, param(params, &["exponent", "alpha", "a"])?, omega)
                    }
                    other => Err(Error::Parse(format!("unknown spectrum model '{other}'"))),
                }
            }
        }
    }
}

pub fn parse_spectrum_file(text: &str) -> Result<SpectrumFile> {
    parse_json(text, "spectrum file")
}

/// Parses and builds a spectrum; see [`SpectrumFile::build`].
pub fn parse_spectrum(text: &str, grid: Option<Vec<f64>>) -> Result<Spectrum> {
    parse_spectrum_file(text)?.build(grid)
}

pub fn read_spectrum_file(path: &Path) -> Result<SpectrumFile> {
    parse_spectrum_file(&read(path)?).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn load_spectrum(path: &Path, grid: Option<Vec<f64>>) -> Result<Spectrum> {
    read_spectrum_file(path)?.build(grid)
}

/// Loads a single complex matrix, such as a projector.
pub fn load_matrix(path: &Path) -> Result<CMat> {
    matrix_from_json(&parse_json(&read(path)?, &path.display().to_string())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FID: &str = r#"{"dim": 2, "dt": [1.0], "control": [],
        "noise": [{"op": [[[0.5,0],[0,0]],[[0,0],[-0.5,0]]], "sens": [1.0], "id": "z"}],
        "basis": "pauli"}"#;

    #[test]
    fn pulse_roundtrip() {
        let p = parse_pulse(FID, Path::new(".")).unwrap();
        assert_eq!(p.n_segments(), 1);
        assert_eq!(p.noise_ids(), vec!["z".to_string()]);
        let text = serde_json::to_string(&pulse_to_json(&p, None)).unwrap();
        let q = parse_pulse(&text, Path::new(".")).unwrap();
        assert_eq!(q.noise_terms()[0].op, p.noise_terms()[0].op);
    }

    #[test]
    fn malformed_json_reports_position() {
        let err = parse_pulse("{\"dim\": 2,\n \"dt\": [1.0,, }", Path::new(".")).unwrap_err();
        match err {
            Error::Parse(m) => assert!(m.contains("line 2"), "{m}"),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn spectra() {
        let s =
            parse_spectrum(r#"{"model": "white", "params": {"level": 2.0}, "grid": {"type": "log", "n": 5, "min": 0.1, "max": 10}}"#, None)
                .unwrap();
        assert_eq!(s.omega().len(), 5);
        let t = parse_spectrum(r#"{"omega": [0, 1], "S": {"a,a": [[1,0],[2,0]], "b,b": [[3,0],[4,0]], "a,b": [[0.5,0.5],[0,0]]}}"#, None)
            .unwrap();
        assert!(!t.is_diagonal());
        let m = t.matrices_for(&["b".into(), "a".into()]).unwrap();
        assert_eq!(m[0][(0, 1)], c(0.5, -0.5));
        assert!(parse_spectrum(r#"{"model": "white", "params": {"level": 1}}"#, None).is_err());
    }
}
