//! Piecewise-constant control and noise Hamiltonians.
//!
//! Segment `g` (0-based here) lasts `dt[g]` and carries the control
//! Hamiltonian `Σ_i a_i[g] A_i` and noise couplings `s_α[g] B_α`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DVector;

use crate::basis::{Basis, BasisKind};
use crate::control_matrix::ControlMatrix;
use crate::error::{Error, Result};
use crate::linalg::{c, eigh, hermiticity_deviation, identity, kron, propagator_from_eigen, trace, CMat, RMat};

const HERMITIAN_TOL: f64 = 1e-12;

/// One control operator and its per-segment coefficients.
#[derive(Debug, Clone)]
pub struct ControlTerm {
    pub op: CMat,
    pub coeffs: Vec<f64>,
}

/// One noise coupling operator, its per-segment sensitivities and a label.
#[derive(Debug, Clone)]
pub struct NoiseTerm {
    pub op: CMat,
    pub sens: Vec<f64>,
    pub id: String,
}

impl NoiseTerm {
    pub fn new(op: CMat, sens: Vec<f64>, id: impl Into<String>) -> NoiseTerm {
        NoiseTerm { op, sens, id: id.into() }
    }
}

impl ControlTerm {
    pub fn new(op: CMat, coeffs: Vec<f64>) -> ControlTerm {
        ControlTerm { op, coeffs }
    }
}

/// Eigendecomposition of one segment's control Hamiltonian.
#[derive(Debug, Clone)]
pub struct Eigensystem {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: CMat,
}

/// Segment propagators `P_g` and cumulative propagators `Q_g` with `Q_0 = 1`.
#[derive(Debug, Clone)]
pub struct Propagators {
    pub segment: Vec<CMat>,
    pub cumulative: Vec<CMat>,
}

#[derive(Debug)]
pub struct PulseSequence {
    control: Vec<ControlTerm>,
    noise: Vec<NoiseTerm>,
    dt: Vec<f64>,
    t: Vec<f64>,
    basis: Basis,
    eigen: OnceLock<Vec<Eigensystem>>,
    propagators: OnceLock<Propagators>,
    liouville: OnceLock<Vec<RMat>>,
    cm_cache: Mutex<HashMap<Vec<u64>, Arc<ControlMatrix>>>,
}

impl Clone for PulseSequence {
    fn clone(&self) -> Self {
        PulseSequence {
            control: self.control.clone(),
            noise: self.noise.clone(),
            dt: self.dt.clone(),
            t: self.t.clone(),
            basis: self.basis.clone(),
            eigen: self.eigen.clone(),
            propagators: self.propagators.clone(),
            liouville: self.liouville.clone(),
            cm_cache: Mutex::new(self.cm_cache.lock().expect("cache lock poisoned").clone()),
        }
    }
}

pub(crate) fn grid_key(omega: &[f64]) -> Vec<u64> {
    omega.iter().map(|w| w.to_bits()).collect()
}

fn check_hermitian(m: &CMat, what: String, dim: usize) -> Result<()> {
    if m.nrows() != dim || m.ncols() != dim {
        return Err(Error::Shape(format!("{what} is {}x{}, expected {dim}x{dim}", m.nrows(), m.ncols())));
    }
    let dev = hermiticity_deviation(m);
    if dev > HERMITIAN_TOL * m.norm().max(1.0) {
        return Err(Error::NotHermitian { what, deviation: dev });
    }
    Ok(())
}

impl PulseSequence {
    /// Validates and assembles a pulse. Caches start empty.
    pub fn new(control: Vec<ControlTerm>, noise: Vec<NoiseTerm>, dt: Vec<f64>, basis: Basis) -> Result<PulseSequence> {
        let dim = basis.dim();
        let n_seg = dt.len();
        if n_seg == 0 {
            return Err(Error::Shape("pulse needs at least one segment".into()));
        }
        for (g, &x) in dt.iter().enumerate() {
            if !(x.is_finite() && x > 0.0) {
                return Err(Error::NonPositiveDuration { index: g, value: x });
            }
        }
        for (i, term) in control.iter().enumerate() {
            if term.coeffs.len() != n_seg {
                return Err(Error::Shape(format!("control term {i} has {} coefficients for {n_seg} segments", term.coeffs.len())));
            }
            if term.coeffs.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidArgument(format!("control term {i} has non-finite coefficients")));
            }
            check_hermitian(&term.op, format!("control operator {i}"), dim)?;
        }
        for (a, term) in noise.iter().enumerate() {
            if term.sens.len() != n_seg {
                return Err(Error::Shape(format!("noise term {a} has {} sensitivities for {n_seg} segments", term.sens.len())));
            }
            if term.sens.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidArgument(format!("noise term {a} has non-finite sensitivities")));
            }
            check_hermitian(&term.op, format!("noise operator {a}"), dim)?;
            let tr = trace(&term.op).norm();
            if tr > HERMITIAN_TOL * term.op.norm().max(1.0) {
                return Err(Error::NotTraceless { index: a, trace: tr });
            }
        }
        let mut ids: Vec<&str> = noise.iter().map(|n| n.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("noise ids must be unique".into()));
        }
        let mut t = Vec::with_capacity(n_seg + 1);
        t.push(0.0);
        for &x in &dt {
            t.push(t.last().unwrap() + x);
        }
        Ok(PulseSequence {
            control,
            noise,
            dt,
            t,
            basis,
            eigen: OnceLock::new(),
            propagators: OnceLock::new(),
            liouville: OnceLock::new(),
            cm_cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn n_segments(&self) -> usize {
        self.dt.len()
    }

    pub fn dt(&self) -> &[f64] {
        &self.dt
    }

    /// Segment boundaries `t_0 = 0, t_1, ..., t_G`.
    pub fn times(&self) -> &[f64] {
        &self.t
    }

    pub fn duration(&self) -> f64 {
        self.t[self.dt.len()]
    }

    pub fn control_terms(&self) -> &[ControlTerm] {
        &self.control
    }

    pub fn noise_terms(&self) -> &[NoiseTerm] {
        &self.noise
    }

    pub fn n_noise(&self) -> usize {
        self.noise.len()
    }

    pub fn noise_ids(&self) -> Vec<String> {
        self.noise.iter().map(|n| n.id.clone()).collect()
    }

    /// Control Hamiltonian of segment `g`.
    pub fn hamiltonian(&self, g: usize) -> CMat {
        let d = self.dim();
        let mut h = CMat::zeros(d, d);
        for term in &self.control {
            let a = term.coeffs[g];
            if a != 0.0 {
                h += &term.op * c(a, 0.0);
            }
        }
        h
    }

    /// Per-segment eigensystems of the control Hamiltonian, cached.
    pub fn eigensystems(&self) -> Result<&[Eigensystem]> {
        if let Some(e) = self.eigen.get() {
            return Ok(e);
        }
        let mut out = Vec::with_capacity(self.n_segments());
        for g in 0..self.n_segments() {
            let (w, v) = eigh(&self.hamiltonian(g))?;
            out.push(Eigensystem { eigenvalues: w, eigenvectors: v });
        }
        Ok(self.eigen.get_or_init(|| out))
    }

    /// Segment and cumulative propagators, cached.
    pub fn propagators(&self) -> Result<&Propagators> {
        if let Some(p) = self.propagators.get() {
            return Ok(p);
        }
        let eig = self.eigensystems()?;
        let mut segment = Vec::with_capacity(eig.len());
        let mut cumulative = Vec::with_capacity(eig.len() + 1);
        cumulative.push(identity(self.dim()));
        for (g, e) in eig.iter().enumerate() {
            let p = propagator_from_eigen(&e.eigenvalues, &e.eigenvectors, self.dt[g]);
            let q = &p * cumulative.last().unwrap();
            segment.push(p);
            cumulative.push(q);
        }
        Ok(self.propagators.get_or_init(|| Propagators { segment, cumulative }))
    }

    /// Total ideal propagator `Q_G`.
    pub fn total_propagator(&self) -> Result<CMat> {
        Ok(self.propagators()?.cumulative.last().unwrap().clone())
    }

    /// Liouville representations `𝒬^{(g)}` of the cumulative propagators, `g = 0..=G`.
    pub fn liouville_propagators(&self) -> Result<&[RMat]> {
        if let Some(l) = self.liouville.get() {
            return Ok(l);
        }
        let props = self.propagators()?;
        let out: Vec<RMat> = props.cumulative.iter().map(|q| self.basis.liouville_unchecked(q)).collect();
        Ok(self.liouville.get_or_init(|| out))
    }

    /// Liouville representation of the total ideal propagator.
    pub fn total_liouville(&self) -> Result<RMat> {
        Ok(self.liouville_propagators()?.last().unwrap().clone())
    }

    pub(crate) fn cached_control_matrix(&self, omega: &[f64]) -> Option<Arc<ControlMatrix>> {
        self.cm_cache.lock().expect("cache lock poisoned").get(&grid_key(omega)).cloned()
    }

    /// Stores a control matrix computed for this pulse; the key is the exact grid.
    pub(crate) fn store_control_matrix(&self, cm: Arc<ControlMatrix>) -> Arc<ControlMatrix> {
        let mut cache = self.cm_cache.lock().expect("cache lock poisoned");
        cache.entry(grid_key(cm.omega())).or_insert(cm).clone()
    }

    /// Frequency grids for which a control matrix is cached.
    pub fn cached_grids(&self) -> usize {
        self.cm_cache.lock().expect("cache lock poisoned").len()
    }

    /// Embeds this pulse into a larger register of qubits.
    ///
    /// `target_dims` lists the subsystem dimensions of the composite space and
    /// the pulse occupies the subsystems starting at `position`. Cached control
    /// matrices are carried over by remapping their columns.
    pub fn extend(&self, target_dims: &[usize], position: usize) -> Result<PulseSequence> {
        let n_own = match (self.basis.kind(), self.basis.n_qubits()) {
            (BasisKind::Pauli, Some(n)) => n,
            _ => return Err(Error::NonSeparableBasis),
        };
        if target_dims.iter().any(|&d| d != 2) {
            return Err(Error::NonSeparableBasis);
        }
        if position + n_own > target_dims.len() {
            return Err(Error::PositionOutOfRange { position, width: n_own, available: target_dims.len() });
        }
        let n_total = target_dims.len();
        let n_after = n_total - position - n_own;
        let d_before = 1usize << position;
        let d_after = 1usize << n_after;
        let basis = Basis::pauli(n_total)?;
        let embed = |m: &CMat| kron(&kron(&identity(d_before), m), &identity(d_after));
        let control = self.control.iter().map(|t| ControlTerm { op: embed(&t.op), coeffs: t.coeffs.clone() }).collect();
        let noise = self.noise.iter().map(|t| NoiseTerm { op: embed(&t.op), sens: t.sens.clone(), id: t.id.clone() }).collect();
        let out = PulseSequence::new(control, noise, self.dt.clone(), basis)?;
        let stride = 1usize << (2 * n_after);
        let scale = ((d_before * d_after) as f64).sqrt();
        let cached: Vec<Arc<ControlMatrix>> = self.cm_cache.lock().expect("cache lock poisoned").values().cloned().collect();
        for cm in cached {
            out.store_control_matrix(Arc::new(cm.remap_columns(out.basis.len(), stride, scale)));
        }
        Ok(out)
    }
}

/// Joins pulses in time into one pulse with all segments in order.
///
/// Control operators are merged by value; noise operators must agree.
pub fn concatenate_pulses(pulses: &[&PulseSequence]) -> Result<PulseSequence> {
    let first = pulses.first().ok_or_else(|| Error::InvalidArgument("no pulses to concatenate".into()))?;
    for p in &pulses[1..] {
        check_compatible(first, p)?;
    }
    let mut ops: Vec<CMat> = Vec::new();
    for p in pulses {
        for t in &p.control {
            if !ops.iter().any(|o| (o - &t.op).norm() <= 1e-14) {
                ops.push(t.op.clone());
            }
        }
    }
    let total: usize = pulses.iter().map(|p| p.n_segments()).sum();
    let mut coeffs = vec![Vec::with_capacity(total); ops.len()];
    let mut sens = vec![Vec::with_capacity(total); first.noise.len()];
    let mut dt = Vec::with_capacity(total);
    for p in pulses {
        for (i, op) in ops.iter().enumerate() {
            match p.control.iter().find(|t| (&t.op - op).norm() <= 1e-14) {
                Some(t) => coeffs[i].extend_from_slice(&t.coeffs),
                None => coeffs[i].extend(std::iter::repeat(0.0).take(p.n_segments())),
            }
        }
        for (a, t) in p.noise.iter().enumerate() {
            sens[a].extend_from_slice(&t.sens);
        }
        dt.extend_from_slice(&p.dt);
    }
    let control = ops.into_iter().zip(coeffs).map(|(op, coeffs)| ControlTerm { op, coeffs }).collect();
    let noise = first.noise.iter().zip(sens).map(|(t, s)| NoiseTerm { op: t.op.clone(), sens: s, id: t.id.clone() }).collect();
    PulseSequence::new(control, noise, dt, first.basis.clone())
}

pub(crate) fn check_compatible(a: &PulseSequence, b: &PulseSequence) -> Result<()> {
    if a.dim() != b.dim() || !a.basis.same_as(&b.basis) {
        return Err(Error::BasisMismatch("pulses use different bases".into()));
    }
    if a.noise.len() != b.noise.len() {
        return Err(Error::NoiseMismatch(format!("{} vs {} noise operators", a.noise.len(), b.noise.len())));
    }
    for (x, y) in a.noise.iter().zip(&b.noise) {
        if x.id != y.id || (&x.op - &y.op).norm() > 1e-12 {
            return Err(Error::NoiseMismatch(format!("noise operator '{}' differs from '{}'", x.id, y.id)));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{expm_hermitian, unitarity_deviation};

    fn paulis() -> [CMat; 3] {
        let z = c(0.0, 0.0);
        [
            CMat::from_row_slice(2, 2, &[z, c(1.0, 0.0), c(1.0, 0.0), z]),
            CMat::from_row_slice(2, 2, &[z, c(0.0, -1.0), c(0.0, 1.0), z]),
            CMat::from_row_slice(2, 2, &[c(1.0, 0.0), z, z, c(-1.0, 0.0)]),
        ]
    }

    fn half(m: &CMat) -> CMat {
        m * c(0.5, 0.0)
    }

    #[test]
    fn fid_pulse_is_valid() {
        let [_, _, z] = paulis();
        let p = PulseSequence::new(vec![], vec![NoiseTerm::new(half(&z), vec![1.0], "z")], vec![1.0], Basis::pauli(1).unwrap()).unwrap();
        let props = p.propagators().unwrap();
        assert_eq!(props.cumulative[1], identity(2));
    }

    #[test]
    fn rejects_bad_inputs() {
        let [x, _, z] = paulis();
        let b = Basis::pauli(1).unwrap();
        let noise = || vec![NoiseTerm::new(half(&z), vec![1.0, 1.0], "z")];
        assert!(matches!(PulseSequence::new(vec![], noise(), vec![1.0, 0.0], b.clone()), Err(Error::NonPositiveDuration { index: 1, .. })));
        assert!(matches!(
            PulseSequence::new(vec![ControlTerm::new(x.clone(), vec![1.0])], noise(), vec![1.0, 1.0], b.clone()),
            Err(Error::Shape(_))
        ));
        let non_herm = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        assert!(matches!(
            PulseSequence::new(vec![ControlTerm::new(non_herm, vec![1.0, 1.0])], noise(), vec![1.0, 1.0], b.clone()),
            Err(Error::NotHermitian { .. })
        ));
        assert!(matches!(
            PulseSequence::new(vec![], vec![NoiseTerm::new(identity(2), vec![1.0, 1.0], "i")], vec![1.0, 1.0], b),
            Err(Error::NotTraceless { .. })
        ));
    }

    #[test]
    fn echo_propagator_is_pi_rotation() {
        let [x, _, z] = paulis();
        let tpi = 1e-3;
        let p = PulseSequence::new(
            vec![ControlTerm::new(half(&x), vec![0.0, std::f64::consts::PI / tpi, 0.0])],
            vec![NoiseTerm::new(half(&z), vec![1.0; 3], "z")],
            vec![0.5, tpi, 0.5],
            Basis::pauli(1).unwrap(),
        )
        .unwrap();
        let e = &p.eigensystems().unwrap()[1];
        let mut w: Vec<f64> = e.eigenvalues.iter().copied().collect();
        w.sort_by(f64::total_cmp);
        assert!((w[0] + std::f64::consts::PI / (2.0 * tpi)).abs() < 1e-9);
        let q = p.total_propagator().unwrap();
        // exp(-iπσx/2) = -iσx
        let target = &x * c(0.0, -1.0);
        assert!((q - target).norm() < 1e-12);
    }

    #[test]
    fn cumulative_propagators_match_fine_steps() {
        let [x, y, z] = paulis();
        let coeffs = vec![vec![0.3, -1.2, 2.0], vec![1.1, 0.4, -0.7]];
        let dt = vec![0.4, 0.9, 0.25];
        let p = PulseSequence::new(
            vec![ControlTerm::new(half(&x), coeffs[0].clone()), ControlTerm::new(half(&y), coeffs[1].clone())],
            vec![NoiseTerm::new(half(&z), vec![1.0; 3], "z")],
            dt.clone(),
            Basis::pauli(1).unwrap(),
        )
        .unwrap();
        let mut fine = identity(2);
        for g in 0..3 {
            let h = p.hamiltonian(g);
            for _ in 0..10 {
                fine = expm_hermitian(&h, dt[g] / 10.0).unwrap() * fine;
            }
        }
        let q = p.total_propagator().unwrap();
        assert!((q.clone() - fine).norm() < 1e-10);
        for qg in &p.propagators().unwrap().cumulative {
            assert!(unitarity_deviation(qg) < 1e-10);
        }
    }

    #[test]
    fn extension_rejects_bad_layouts() {
        let [_, _, z] = paulis();
        let p = PulseSequence::new(vec![], vec![NoiseTerm::new(half(&z), vec![1.0], "z")], vec![1.0], Basis::pauli(1).unwrap()).unwrap();
        assert!(matches!(p.extend(&[2, 2], 2), Err(Error::PositionOutOfRange { .. })));
        assert!(matches!(p.extend(&[2, 3], 0), Err(Error::NonSeparableBasis)));
        let g = PulseSequence::new(vec![], vec![NoiseTerm::new(half(&z), vec![1.0], "z")], vec![1.0], Basis::ggm(2).unwrap()).unwrap();
        assert!(matches!(g.extend(&[2, 2], 0), Err(Error::NonSeparableBasis)));
        let same = p.extend(&[2], 0).unwrap();
        assert_eq!(same.noise_terms()[0].op, p.noise_terms()[0].op);
    }
}
