//! Noise power spectral densities on a frequency grid.
//!
//! Spectra are per angular frequency and two-sided, `⟨b_α b_β⟩ = ∫ dω/2π S_αβ(ω)`.
//! A grid without negative frequencies is taken as one half of a symmetric
//! classical spectrum: integrals over it are doubled and only their real part
//! is kept, since the integrands at `-ω` are complex conjugates of those at `ω`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{c, trapezoid_weights, CMat};

#[derive(Debug, Clone, PartialEq)]
pub enum SpectrumValues {
    /// Auto-spectra only, indexed `[source][ω]`.
    Diagonal(Vec<Vec<f64>>),
    /// Full cross-spectral matrices, one `n × n` matrix per grid point.
    Full(Vec<CMat>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    omega: Vec<f64>,
    values: SpectrumValues,
    source_ids: Option<Vec<String>>,
}

fn validate_grid(omega: &[f64]) -> Result<()> {
    if omega.is_empty() {
        return Err(Error::InvalidGrid("empty frequency grid".into()));
    }
    if omega.iter().any(|w| !w.is_finite()) {
        return Err(Error::InvalidGrid("non-finite frequency".into()));
    }
    if omega.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid("frequencies must be strictly increasing".into()));
    }
    Ok(())
}

impl Spectrum {
    /// Constant spectrum `S(ω) = level`, shared by every noise source.
    pub fn white(level: f64, omega: Vec<f64>) -> Result<Spectrum> {
        if !(level.is_finite() && level >= 0.0) {
            return Err(Error::InvalidSpectrum(format!("white-noise level {level} must be finite and >= 0")));
        }
        validate_grid(&omega)?;
        let n = omega.len();
        Ok(Spectrum { omega, values: SpectrumValues::Diagonal(vec![vec![level; n]]), source_ids: None })
    }

    /// `S(ω) = amplitude / |ω|^a`, shared by every noise source.
    pub fn power_law(amplitude: f64, exponent: f64, omega: Vec<f64>) -> Result<Spectrum> {
        if !(amplitude.is_finite() && amplitude >= 0.0 && exponent.is_finite()) {
            return Err(Error::InvalidSpectrum("power-law amplitude must be >= 0 and exponent finite".into()));
        }
        validate_grid(&omega)?;
        if exponent > 0.0 && omega.iter().any(|&w| w == 0.0) {
            return Err(Error::InvalidSpectrum("power law with positive exponent is singular at ω = 0".into()));
        }
        let vals = omega.iter().map(|w| amplitude / w.abs().powf(exponent)).collect();
        Ok(Spectrum { omega, values: SpectrumValues::Diagonal(vec![vals]), source_ids: None })
    }

    /// Spectrum given point by point.
    ///
    /// Without `source_ids` the rows of a diagonal spectrum are matched to
    /// noise sources by position, and a single row applies to every source.
    pub fn tabulated(omega: Vec<f64>, values: SpectrumValues, source_ids: Option<Vec<String>>) -> Result<Spectrum> {
        validate_grid(&omega)?;
        let n_w = omega.len();
        let n_src = match &values {
            SpectrumValues::Diagonal(rows) => {
                for (a, row) in rows.iter().enumerate() {
                    if row.len() != n_w {
                        return Err(Error::Shape(format!("source {a} has {} values for {n_w} frequencies", row.len())));
                    }
                    if let Some(v) = row.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                        return Err(Error::InvalidSpectrum(format!("auto-spectrum of source {a} has value {v}")));
                    }
                }
                rows.len()
            }
            SpectrumValues::Full(mats) => {
                if mats.len() != n_w {
                    return Err(Error::Shape(format!("{} matrices for {n_w} frequencies", mats.len())));
                }
                let n = mats.first().map(|m| m.nrows()).unwrap_or(0);
                for (i, m) in mats.iter().enumerate() {
                    if m.nrows() != n || m.ncols() != n {
                        return Err(Error::Shape(format!("cross-spectrum at index {i} is not {n}x{n}")));
                    }
                    for a in 0..n {
                        let s = m[(a, a)];
                        if !(s.re.is_finite() && s.re >= 0.0) || s.im.abs() > 1e-12 * s.re.abs().max(1.0) {
                            return Err(Error::InvalidSpectrum(format!("auto-spectrum S_{a}{a} at index {i} must be real and >= 0")));
                        }
                        for b in 0..n {
                            let dev = (m[(a, b)] - m[(b, a)].conj()).norm();
                            if dev > 1e-12 * m[(a, b)].norm().max(1.0) {
                                return Err(Error::InvalidSpectrum(format!("S_{a}{b} and S_{b}{a} are not conjugate at index {i}")));
                            }
                        }
                    }
                }
                n
            }
        };
        if n_src == 0 {
            return Err(Error::Shape("spectrum has no sources".into()));
        }
        if let Some(ids) = &source_ids {
            if ids.len() != n_src {
                return Err(Error::Shape(format!("{} source ids for {n_src} sources", ids.len())));
            }
        }
        Ok(Spectrum { omega, values, source_ids })
    }

    /// Attaches source labels.
    pub fn with_sources(mut self, ids: Vec<String>) -> Result<Spectrum> {
        let n = self.n_sources();
        if n != 1 && ids.len() != n {
            return Err(Error::Shape(format!("{} source ids for {n} sources", ids.len())));
        }
        if n == 1 && ids.len() > 1 {
            // Broadcast a single curve to every labelled source.
            if let SpectrumValues::Diagonal(rows) = &mut self.values {
                let row = rows[0].clone();
                *rows = vec![row; ids.len()];
            }
        }
        self.source_ids = Some(ids);
        Ok(self)
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn values(&self) -> &SpectrumValues {
        &self.values
    }

    pub fn source_ids(&self) -> Option<&[String]> {
        self.source_ids.as_deref()
    }

    pub fn n_sources(&self) -> usize {
        match &self.values {
            SpectrumValues::Diagonal(rows) => rows.len(),
            SpectrumValues::Full(m) => m[0].nrows(),
        }
    }

    /// Whether the grid contains negative frequencies and is used verbatim.
    pub fn is_two_sided(&self) -> bool {
        self.omega[0] < 0.0
    }

    /// Quadrature weights for `∫ dω/2π` over the real line.
    ///
    /// For one-sided grids the weights are doubled and callers must take the
    /// real part of the weighted sum.
    pub fn quadrature_weights(omega: &[f64]) -> Result<(Vec<f64>, bool)> {
        if omega.len() < 2 {
            return Err(Error::InvalidGrid("integration needs at least two frequencies".into()));
        }
        let two_sided = omega[0] < 0.0;
        let factor = if two_sided { 1.0 } else { 2.0 } / (2.0 * PI);
        Ok((trapezoid_weights(omega).into_iter().map(|w| w * factor).collect(), !two_sided))
    }

    /// Matches spectrum rows to noise labels.
    fn source_index(&self, ids: &[String]) -> Result<Vec<usize>> {
        let n = self.n_sources();
        match &self.source_ids {
            Some(own) => ids.iter().map(|id| own.iter().position(|o| o == id).ok_or_else(|| Error::MissingSource(id.clone()))).collect(),
            None if n == 1 && matches!(self.values, SpectrumValues::Diagonal(_)) => Ok(vec![0; ids.len()]),
            None if n == ids.len() => Ok((0..n).collect()),
            None => Err(Error::NoiseMismatch(format!("spectrum has {n} sources, pulse has {}", ids.len()))),
        }
    }

    /// Cross-spectral matrices `S_αβ(ω_i)` in the order of `ids`.
    ///
    /// Sources of a diagonal spectrum are uncorrelated, even when a single
    /// curve is broadcast to several sources.
    pub fn matrices_for(&self, ids: &[String]) -> Result<Vec<CMat>> {
        let idx = self.source_index(ids)?;
        let n = ids.len();
        Ok((0..self.omega.len())
            .map(|i| match &self.values {
                SpectrumValues::Diagonal(rows) => {
                    let mut m = CMat::zeros(n, n);
                    for a in 0..n {
                        m[(a, a)] = c(rows[idx[a]][i], 0.0);
                    }
                    m
                }
                SpectrumValues::Full(mats) => CMat::from_fn(n, n, |a, b| mats[i][(idx[a], idx[b])]),
            })
            .collect())
    }

    /// Auto-spectra `S_αα(ω_i)` in the order of `ids`, indexed `[α][ω]`.
    pub fn diagonal_for(&self, ids: &[String]) -> Result<Vec<Vec<f64>>> {
        let idx = self.source_index(ids)?;
        Ok(idx
            .iter()
            .map(|&a| match &self.values {
                SpectrumValues::Diagonal(rows) => rows[a].clone(),
                SpectrumValues::Full(mats) => mats.iter().map(|m| m[(a, a)].re).collect(),
            })
            .collect())
    }

    /// Whether all cross-spectra vanish.
    pub fn is_diagonal(&self) -> bool {
        match &self.values {
            SpectrumValues::Diagonal(_) => true,
            SpectrumValues::Full(mats) => {
                mats.iter().all(|m| (0..m.nrows()).all(|a| (0..m.ncols()).all(|b| a == b || m[(a, b)].norm() == 0.0)))
            }
        }
    }

    /// Evaluates the spectrum on another grid inside the tabulated range.
    ///
    /// Positive auto-spectra between positive frequencies are interpolated
    /// linearly in log-log coordinates; everything else linearly.
    pub fn resample(&self, omega: Vec<f64>) -> Result<Spectrum> {
        validate_grid(&omega)?;
        let lo = self.omega[0];
        let hi = *self.omega.last().unwrap();
        if omega[0] < lo || *omega.last().unwrap() > hi {
            return Err(Error::InvalidGrid(format!("target grid leaves the tabulated range [{lo}, {hi}]")));
        }
        let locate = |w: f64| -> (usize, f64) {
            let n = self.omega.len();
            if n == 1 {
                return (0, 0.0);
            }
            let k = match self.omega.partition_point(|&x| x <= w) {
                0 => 0,
                p if p >= n => n - 2,
                p => p - 1,
            };
            (k, w)
        };
        let interp_real = |y: &[f64], w: f64| -> f64 {
            let (k, w) = locate(w);
            if y.len() == 1 {
                return y[0];
            }
            let (x0, x1, y0, y1) = (self.omega[k], self.omega[k + 1], y[k], y[k + 1]);
            if x0 > 0.0 && y0 > 0.0 && y1 > 0.0 {
                let t = (w.ln() - x0.ln()) / (x1.ln() - x0.ln());
                (y0.ln() + t * (y1.ln() - y0.ln())).exp()
            } else {
                let t = (w - x0) / (x1 - x0);
                y0 + t * (y1 - y0)
            }
        };
        let values = match &self.values {
            SpectrumValues::Diagonal(rows) => {
                SpectrumValues::Diagonal(rows.iter().map(|r| omega.iter().map(|&w| interp_real(r, w)).collect()).collect())
            }
            SpectrumValues::Full(mats) => {
                let n = mats[0].nrows();
                SpectrumValues::Full(
                    omega
                        .iter()
                        .map(|&w| {
                            let (k, w) = locate(w);
                            if mats.len() == 1 {
                                return mats[0].clone();
                            }
                            CMat::from_fn(n, n, |a, b| {
                                if a == b {
                                    let y: Vec<f64> = mats.iter().map(|m| m[(a, a)].re).collect();
                                    c(interp_real(&y, w), 0.0)
                                } else {
                                    let t = (w - self.omega[k]) / (self.omega[k + 1] - self.omega[k]);
                                    mats[k][(a, b)] * (1.0 - t) + mats[k + 1][(a, b)] * t
                                }
                            })
                        })
                        .collect(),
                )
            }
        };
        Ok(Spectrum { omega, values, source_ids: self.source_ids.clone() })
    }

    /// `∫ dω/2π S_αα(ω)` for each source in `ids`.
    pub fn band_power(&self, ids: &[String]) -> Result<Vec<f64>> {
        let (w, _) = Spectrum::quadrature_weights(&self.omega)?;
        Ok(self.diagonal_for(ids)?.iter().map(|row| row.iter().zip(&w).map(|(s, wi)| s * wi).sum()).collect())
    }
}

/// Logarithmically spaced grid of `n` points on `[min, max]`.
pub fn log_grid(min: f64, max: f64, n: usize) -> Result<Vec<f64>> {
    if !(min > 0.0 && max > min && n >= 2) {
        return Err(Error::InvalidGrid(format!("log grid needs 0 < min < max and n >= 2 (got {min}, {max}, {n})")));
    }
    let (a, b) = (min.ln(), max.ln());
    let mut out: Vec<f64> = (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect();
    out[0] = min;
    out[n - 1] = max;
    Ok(out)
}

/// Linearly spaced grid of `n` points on `[min, max]`.
pub fn linear_grid(min: f64, max: f64, n: usize) -> Result<Vec<f64>> {
    if !(max > min && n >= 2 && min.is_finite() && max.is_finite()) {
        return Err(Error::InvalidGrid(format!("linear grid needs min < max and n >= 2 (got {min}, {max}, {n})")));
    }
    Ok((0..n).map(|i| min + (max - min) * i as f64 / (n - 1) as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn white_band_power() {
        let w = 50.0;
        let grid = linear_grid(-w, w, 2001).unwrap();
        let s = Spectrum::white(3.0, grid).unwrap();
        let p = s.band_power(&["a".to_string()]).unwrap();
        assert!((p[0] / (3.0 * w / PI) - 1.0).abs() < 1e-12);
        // One-sided grids integrate to the same value.
        let half = Spectrum::white(3.0, linear_grid(0.0, w, 1001).unwrap()).unwrap();
        let q = half.band_power(&["a".into()]).unwrap()[0];
        assert!((q / p[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn power_law_rejects_zero_frequency() {
        assert!(Spectrum::power_law(1.0, 0.7, vec![0.0, 1.0]).is_err());
        assert!(Spectrum::power_law(1.0, 0.0, vec![0.0, 1.0]).is_ok());
        let s = Spectrum::power_law(2.0, 0.0, vec![1.0, 2.0]).unwrap();
        assert_eq!(s, Spectrum::white(2.0, vec![1.0, 2.0]).unwrap());
    }

    #[test]
    fn tabulated_checks() {
        let grid = vec![1.0, 2.0];
        assert!(Spectrum::tabulated(grid.clone(), SpectrumValues::Diagonal(vec![vec![1.0, -1.0]]), None).is_err());
        let good = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.3), c(0.0, -0.3), c(1.0, 0.0)]);
        let bad = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.3), c(0.0, 0.3), c(1.0, 0.0)]);
        assert!(Spectrum::tabulated(grid.clone(), SpectrumValues::Full(vec![good.clone(), good.clone()]), None).is_ok());
        assert!(Spectrum::tabulated(grid.clone(), SpectrumValues::Full(vec![good, bad]), None).is_err());
        let single = Spectrum::white(1.0, vec![1.0]).unwrap();
        assert!(single.band_power(&["a".into()]).is_err());
    }

    #[test]
    fn resample_power_law_is_exact_in_log_log() {
        let grid = log_grid(1e-2, 1e2, 9).unwrap();
        let s = Spectrum::power_law(1.5, 0.7, grid).unwrap();
        let target = log_grid(2e-2, 5e1, 13).unwrap();
        let r = s.resample(target.clone()).unwrap();
        let vals = r.diagonal_for(&["x".into()]).unwrap();
        for (w, v) in target.iter().zip(&vals[0]) {
            assert!((v - 1.5 / w.powf(0.7)).abs() < 1e-12 * v);
        }
    }

    #[test]
    fn labelled_sources() {
        let s = Spectrum::white(1.0, vec![0.0, 1.0]).unwrap().with_sources(vec!["x".into(), "z".into()]).unwrap();
        assert!(matches!(s.matrices_for(&["y".into()]), Err(Error::MissingSource(_))));
        let m = s.matrices_for(&["z".into(), "x".into()]).unwrap();
        assert_eq!(m[0][(0, 1)], c(0.0, 0.0));
        assert_eq!(m[0][(1, 1)], c(1.0, 0.0));
    }
}
