//! Density matrices and the named state families.
//!
//! Basis ordering is big-endian binary: `|00>, |01>, |10>, |11>` for two
//! qubits and `|000> ... |111>` for three.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::{self, ComplexMatrix, HERMITIAN_TOL, ONE, PSD_TOL, ZERO};

/// Tolerance on `|Tr rho - 1|`.
pub const TRACE_TOL: f64 = 1e-10;

/// A validated `N`-qubit density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    qubits: usize,
    mat: ComplexMatrix,
}

impl DensityMatrix {
    /// Wraps `mat` after checking dimension, Hermiticity, trace and positivity.
    pub fn new(qubits: usize, mat: ComplexMatrix) -> Result<Self> {
        if qubits == 0 || qubits > 8 || mat.dim() != 1 << qubits {
            return Err(Error::Dimension(format!(
                "{qubits} qubits need dimension {}, got {}",
                1usize.checked_shl(qubits as u32).unwrap_or(0),
                mat.dim()
            )));
        }
        let report = validate(&mat);
        if !report.passed {
            return Err(Error::InvalidState(report.to_string()));
        }
        Ok(Self { qubits, mat })
    }

    /// Skips validation; for matrices that are valid by construction.
    pub(crate) fn from_trusted(qubits: usize, mat: ComplexMatrix) -> Self {
        debug_assert_eq!(mat.dim(), 1 << qubits);
        Self { qubits, mat }
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn dim(&self) -> usize {
        self.mat.dim()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.mat
    }

    /// `Tr rho^2`.
    pub fn purity(&self) -> f64 {
        // Hermitian, so Tr rho^2 = sum |rho_ij|^2
        self.mat.entries().iter().map(|z| z.norm_sqr()).sum()
    }

    /// `u rho u^dagger` for a unitary `u` of matching dimension.
    pub fn conjugate_by(&self, u: &ComplexMatrix) -> Result<Self> {
        let m = u.matmul(&self.mat)?.matmul(&u.adjoint())?;
        Ok(Self::from_trusted(self.qubits, m))
    }

    /// Convex combination `alpha * self + (1 - alpha) * other`.
    pub fn mix(&self, other: &Self, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Domain(format!("mixing weight {alpha} outside [0,1]")));
        }
        if self.qubits != other.qubits {
            return Err(Error::Dimension(format!(
                "cannot mix {}-qubit and {}-qubit states",
                self.qubits, other.qubits
            )));
        }
        let m = self.mat.scale(alpha).add(&other.mat.scale(1.0 - alpha))?;
        Ok(Self::from_trusted(self.qubits, m))
    }

    pub fn to_doc(&self) -> StateDoc {
        StateDoc {
            qubits: self.qubits,
            entries: self.mat.entries().iter().map(|z| [z.re, z.im]).collect(),
        }
    }

    pub fn from_doc(doc: &StateDoc) -> Result<Self> {
        let dim = 1usize
            .checked_shl(doc.qubits as u32)
            .filter(|_| doc.qubits <= 8)
            .ok_or_else(|| Error::Dimension(format!("{} qubits unsupported", doc.qubits)))?;
        let entries = doc.entries.iter().map(|&[re, im]| Complex64::new(re, im)).collect();
        Self::new(doc.qubits, ComplexMatrix::new(dim, entries)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_doc())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_doc(&serde_json::from_str(text)?)
    }
}

/// JSON form of a state: `{"qubits": N, "entries": [[re, im], ...]}`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDoc {
    pub qubits: usize,
    pub entries: Vec<[f64; 2]>,
}

/// The state families used throughout the crate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag", content = "parameter", rename_all = "snake_case")]
pub enum StateFamily {
    BellPhiPlus,
    BellPsiPlus,
    Ghz,
    /// Maximally entangled mixed state, concurrence `gamma` in `[0,1]`.
    Mems(f64),
    /// Two-qubit MNMS, `gamma` in `[-1,1]`.
    Mnms2(f64),
    /// Three-qubit MNMS, `f` in `[0,1/8]`.
    Mnms3(f64),
    /// `p|00><00| + (1-p)|11><11|`, `p` in `[0,1]`.
    DiagMix(f64),
    /// Zero local vectors and `T = diag(lambda, lambda, 0)`, `lambda` in `[0,1/2]`.
    Planar2(f64),
    /// GHZ through an equal-probability single-spin bit-flip channel, `f` in `[0,1/8]`.
    GhzBitFlip(f64),
}

impl StateFamily {
    pub const TAGS: [&'static str; 9] = [
        "bell_phi_plus",
        "bell_psi_plus",
        "ghz",
        "mems",
        "mnms2",
        "mnms3",
        "diag_mix",
        "planar2",
        "ghz_bit_flip",
    ];

    /// Parses a family from its tag; parameterless families ignore `param`.
    pub fn from_tag(tag: &str, param: Option<f64>) -> Result<Self> {
        let need = |name: &str| {
            param.ok_or_else(|| Error::Domain(format!("family {name} requires a parameter")))
        };
        let norm = tag.to_ascii_lowercase().replace('-', "_");
        Ok(match norm.as_str() {
            "bell" | "bell_phi_plus" | "phi_plus" => Self::BellPhiPlus,
            "bell_psi_plus" | "psi_plus" => Self::BellPsiPlus,
            "ghz" => Self::Ghz,
            "mems" | "mems2" => Self::Mems(need("mems")?),
            "mnms2" => Self::Mnms2(need("mnms2")?),
            "mnms3" => Self::Mnms3(need("mnms3")?),
            "diag_mix" | "diagmix" => Self::DiagMix(need("diag_mix")?),
            "planar2" => Self::Planar2(need("planar2")?),
            "ghz_bit_flip" | "ghzbitflip" => Self::GhzBitFlip(need("ghz_bit_flip")?),
            _ => return Err(Error::Domain(format!("unknown state family '{tag}'"))),
        })
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Self::BellPhiPlus => "bell_phi_plus",
            Self::BellPsiPlus => "bell_psi_plus",
            Self::Ghz => "ghz",
            Self::Mems(_) => "mems",
            Self::Mnms2(_) => "mnms2",
            Self::Mnms3(_) => "mnms3",
            Self::DiagMix(_) => "diag_mix",
            Self::Planar2(_) => "planar2",
            Self::GhzBitFlip(_) => "ghz_bit_flip",
        }
    }

    pub fn parameter(&self) -> Option<f64> {
        match *self {
            Self::BellPhiPlus | Self::BellPsiPlus | Self::Ghz => None,
            Self::Mems(x)
            | Self::Mnms2(x)
            | Self::Mnms3(x)
            | Self::DiagMix(x)
            | Self::Planar2(x)
            | Self::GhzBitFlip(x) => Some(x),
        }
    }

    /// Closed parameter interval, if the family has a parameter.
    pub fn domain(&self) -> Option<(f64, f64)> {
        match self {
            Self::BellPhiPlus | Self::BellPsiPlus | Self::Ghz => None,
            Self::Mems(_) | Self::DiagMix(_) => Some((0.0, 1.0)),
            Self::Mnms2(_) => Some((-1.0, 1.0)),
            Self::Mnms3(_) | Self::GhzBitFlip(_) => Some((0.0, 0.125)),
            Self::Planar2(_) => Some((0.0, 0.5)),
        }
    }

    pub fn qubits(&self) -> usize {
        match self {
            Self::Ghz | Self::Mnms3(_) | Self::GhzBitFlip(_) => 3,
            _ => 2,
        }
    }

    /// Same family with a different parameter.
    pub fn with_parameter(&self, x: f64) -> Self {
        match self {
            Self::BellPhiPlus | Self::BellPsiPlus | Self::Ghz => *self,
            Self::Mems(_) => Self::Mems(x),
            Self::Mnms2(_) => Self::Mnms2(x),
            Self::Mnms3(_) => Self::Mnms3(x),
            Self::DiagMix(_) => Self::DiagMix(x),
            Self::Planar2(_) => Self::Planar2(x),
            Self::GhzBitFlip(_) => Self::GhzBitFlip(x),
        }
    }

    fn check_domain(&self) -> Result<()> {
        if let (Some(x), Some((lo, hi))) = (self.parameter(), self.domain()) {
            if !(lo..=hi).contains(&x) {
                return Err(Error::Domain(format!(
                    "{} parameter {x} outside [{lo}, {hi}]",
                    self.tag()
                )));
            }
        }
        Ok(())
    }
}

impl fmt::Display for StateFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.parameter() {
            Some(x) => write!(f, "{}({x})", self.tag()),
            None => f.write_str(self.tag()),
        }
    }
}

fn ket(dim: usize, amplitudes: &[(usize, f64)]) -> Vec<Complex64> {
    let mut v = vec![ZERO; dim];
    for &(i, a) in amplitudes {
        v[i] = Complex64::new(a, 0.0);
    }
    v
}

/// `|Phi+> = (|00> + |11>)/sqrt 2`.
pub fn phi_plus() -> Vec<Complex64> {
    ket(4, &[(0, FRAC_1_SQRT_2), (3, FRAC_1_SQRT_2)])
}

/// `|Psi+> = (|01> + |10>)/sqrt 2`.
pub fn psi_plus() -> Vec<Complex64> {
    ket(4, &[(1, FRAC_1_SQRT_2), (2, FRAC_1_SQRT_2)])
}

/// `(|000> + |111>)/sqrt 2`.
pub fn ghz_ket() -> Vec<Complex64> {
    ket(8, &[(0, FRAC_1_SQRT_2), (7, FRAC_1_SQRT_2)])
}

/// Builds the density matrix of a state family.
pub fn make_state(family: StateFamily) -> Result<DensityMatrix> {
    family.check_domain()?;
    let state = match family {
        StateFamily::BellPhiPlus => DensityMatrix::from_trusted(2, ComplexMatrix::outer(&phi_plus())),
        StateFamily::BellPsiPlus => DensityMatrix::from_trusted(2, ComplexMatrix::outer(&psi_plus())),
        StateFamily::Ghz => DensityMatrix::from_trusted(3, ComplexMatrix::outer(&ghz_ket())),
        StateFamily::Mems(gamma) => {
            let g = if gamma < 2.0 / 3.0 { 1.0 / 3.0 } else { gamma / 2.0 };
            let mut m = ComplexMatrix::diag(&[g, 1.0 - 2.0 * g, 0.0, g]);
            m[(0, 3)] = Complex64::new(gamma / 2.0, 0.0);
            m[(3, 0)] = Complex64::new(gamma / 2.0, 0.0);
            DensityMatrix::from_trusted(2, m)
        }
        StateFamily::Mnms2(gamma) => {
            // (1+gamma)/2 |Phi+><Phi+| + (1-gamma)/2 |Psi+><Psi+|
            let outer = Complex64::new((1.0 + gamma) / 4.0, 0.0);
            let inner = Complex64::new((1.0 - gamma) / 4.0, 0.0);
            let mut m = ComplexMatrix::zeros(4);
            for (i, j) in [(0, 0), (0, 3), (3, 0), (3, 3)] {
                m[(i, j)] = outer;
            }
            for (i, j) in [(1, 1), (1, 2), (2, 1), (2, 2)] {
                m[(i, j)] = inner;
            }
            DensityMatrix::from_trusted(2, m)
        }
        StateFamily::Mnms3(f) => {
            let f1 = 0.5 - 3.0 * f;
            let mut m = ComplexMatrix::zeros(8);
            for k in 0..4 {
                let w = Complex64::new(if k == 0 { f1 } else { f }, 0.0);
                let kk = 7 - k;
                m[(k, k)] = w;
                m[(kk, kk)] = w;
                m[(k, kk)] = w;
                m[(kk, k)] = w;
            }
            DensityMatrix::from_trusted(3, m)
        }
        StateFamily::DiagMix(p) => {
            DensityMatrix::from_trusted(2, ComplexMatrix::diag(&[p, 0.0, 0.0, 1.0 - p]))
        }
        StateFamily::Planar2(lambda) => {
            let xx = matcore::kron(&matcore::pauli_x(), &matcore::pauli_x())?;
            let yy = matcore::kron(&matcore::pauli_y(), &matcore::pauli_y())?;
            let m = ComplexMatrix::identity(4)
                .add(&xx.add(&yy)?.scale(lambda))?
                .scale(0.25);
            DensityMatrix::from_trusted(2, m)
        }
        StateFamily::GhzBitFlip(f) => bit_flip_channel(&make_state(StateFamily::Ghz)?, 2.0 * f)?,
    };
    Ok(state)
}

/// Flips exactly one spin, each with probability `p`, otherwise leaves the
/// state alone (probability `1 - N p`).
pub fn bit_flip_channel(rho: &DensityMatrix, p: f64) -> Result<DensityMatrix> {
    let n = rho.qubits();
    let keep = 1.0 - n as f64 * p;
    if p < 0.0 || keep < -1e-15 {
        return Err(Error::Domain(format!("single-flip probability {p} invalid for {n} qubits")));
    }
    let mut acc = rho.matrix().scale(keep.max(0.0));
    for k in 0..n {
        let x_k = local_operator(n, k, &matcore::pauli_x())?;
        let flipped = x_k.matmul(rho.matrix())?.matmul(&x_k)?;
        acc = acc.add(&flipped.scale(p))?;
    }
    Ok(DensityMatrix::from_trusted(n, acc))
}

/// `I ⊗ ... ⊗ op ⊗ ... ⊗ I` with `op` on qubit `k` (0-based, big-endian).
pub fn local_operator(qubits: usize, k: usize, op: &ComplexMatrix) -> Result<ComplexMatrix> {
    let id = ComplexMatrix::identity(2);
    let factors: Vec<&ComplexMatrix> = (0..qubits).map(|i| if i == k { op } else { &id }).collect();
    matcore::kron_all(factors)
}

/// `v rho + (1 - v) I / 2^N`.
pub fn mix_white_noise(rho: &DensityMatrix, v: f64) -> Result<DensityMatrix> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::Domain(format!("visibility {v} outside [0,1]")));
    }
    let d = rho.dim();
    let noise = ComplexMatrix::identity(d).scale(1.0 / d as f64);
    let m = rho.matrix().scale(v).add(&noise.scale(1.0 - v))?;
    Ok(DensityMatrix::from_trusted(rho.qubits(), m))
}

/// Normalized linear entropy `d/(d-1) (1 - Tr rho^2)`, clamped to `[0, 1]`
/// so rounding on pure states cannot push it below zero.
pub fn linear_entropy(rho: &DensityMatrix) -> f64 {
    let d = rho.dim() as f64;
    (d / (d - 1.0) * (1.0 - rho.purity())).clamp(0.0, 1.0)
}

/// Outcome of [`validate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValidationReport {
    pub hermiticity_defect: f64,
    pub trace_defect: f64,
    pub min_eigenvalue: f64,
    pub passed: bool,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "hermiticity defect {:e}, trace defect {:e}, min eigenvalue {:e} ({})",
            self.hermiticity_defect,
            self.trace_defect,
            self.min_eigenvalue,
            if self.passed { "pass" } else { "fail" }
        )
    }
}

/// Checks Hermiticity, unit trace and positivity of an arbitrary matrix.
pub fn validate(m: &ComplexMatrix) -> ValidationReport {
    let hermiticity_defect = m.hermiticity_defect();
    let tr = m.trace();
    let trace_defect = (tr - ONE).norm();
    // eigenvalues of the Hermitian part; for non-Hermitian input the report
    // already fails on the defect
    let herm = m.add(&m.adjoint()).expect("same dimension").scale(0.5);
    let min_eigenvalue = matcore::herm_eigvals(&herm)
        .ok()
        .and_then(|v| v.last().copied())
        .unwrap_or(f64::NAN);
    let passed = hermiticity_defect <= HERMITIAN_TOL
        && trace_defect <= TRACE_TOL
        && min_eigenvalue >= -PSD_TOL;
    ValidationReport { hermiticity_defect, trace_defect, min_eigenvalue, passed }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn mnms2_at_one_is_bell_state() {
        let rho = make_state(StateFamily::Mnms2(1.0)).unwrap();
        let bell = make_state(StateFamily::BellPhiPlus).unwrap();
        assert!(rho.matrix().max_abs_diff(bell.matrix()).unwrap() < 1e-15);
    }

    #[test]
    fn mnms3_at_zero_is_ghz() {
        let rho = make_state(StateFamily::Mnms3(0.0)).unwrap();
        let ghz = make_state(StateFamily::Ghz).unwrap();
        assert!(rho.matrix().max_abs_diff(ghz.matrix()).unwrap() < 1e-15);
    }

    #[test]
    fn bit_flip_reproduces_mnms3() {
        for f in [0.0, 1.0 / 32.0, 1.0 / 16.0, 0.125] {
            let a = make_state(StateFamily::GhzBitFlip(f)).unwrap();
            let b = make_state(StateFamily::Mnms3(f)).unwrap();
            assert!(a.matrix().max_abs_diff(b.matrix()).unwrap() <= 1e-15, "f = {f}");
        }
    }

    #[test]
    fn white_noise_endpoints() {
        let bell = make_state(StateFamily::BellPhiPlus).unwrap();
        let same = mix_white_noise(&bell, 1.0).unwrap();
        assert!(same.matrix().max_abs_diff(bell.matrix()).unwrap() < 1e-16);
        let flat = mix_white_noise(&bell, 0.0).unwrap();
        let id = ComplexMatrix::identity(4).scale(0.25);
        assert!(flat.matrix().max_abs_diff(&id).unwrap() < 1e-16);
        assert!(matches!(mix_white_noise(&bell, 1.5), Err(Error::Domain(_))));
    }

    #[test]
    fn werner_at_half_visibility() {
        let bell = make_state(StateFamily::BellPhiPlus).unwrap();
        let w = mix_white_noise(&bell, 0.5).unwrap();
        let m = w.matrix();
        let diag: Vec<f64> = (0..4).map(|i| m[(i, i)].re).collect();
        for (got, want) in diag.iter().zip([0.375, 0.125, 0.125, 0.375]) {
            assert!(close(*got, want, 1e-16));
        }
        assert!(close(m[(0, 3)].re, 0.25, 1e-16) && close(m[(3, 0)].re, 0.25, 1e-16));
    }

    #[test]
    fn entropy_examples() {
        assert!(close(linear_entropy(&make_state(StateFamily::Ghz).unwrap()), 0.0, 1e-15));
        let flat = mix_white_noise(&make_state(StateFamily::Ghz).unwrap(), 0.0).unwrap();
        assert!(close(linear_entropy(&flat), 1.0, 1e-15));
        for gamma in [-0.7, 0.0, 0.3, 0.8, 1.0] {
            let rho = make_state(StateFamily::Mnms2(gamma)).unwrap();
            let want = 1.0 - (1.0 + 2.0 * gamma * gamma) / 3.0;
            assert!(close(linear_entropy(&rho), want, 1e-15));
        }
        let rho = make_state(StateFamily::Mnms3(1.0 / 16.0)).unwrap();
        assert!(close(linear_entropy(&rho), 9.0 / 14.0, 1e-15));
    }

    #[test]
    fn validate_examples() {
        assert!(validate(make_state(StateFamily::Mnms3(0.1)).unwrap().matrix()).passed);
        let r = validate(make_state(StateFamily::Mems(0.9)).unwrap().matrix());
        assert!(r.passed && r.trace_defect < 1e-15);

        // (sigma_x ⊗ sigma_x + sigma_y ⊗ sigma_y / 2)/4: zero diagonal
        let xx = matcore::kron(&matcore::pauli_x(), &matcore::pauli_x()).unwrap();
        let yy = matcore::kron(&matcore::pauli_y(), &matcore::pauli_y()).unwrap();
        let m = xx.add(&yy.scale(0.5)).unwrap().scale(0.25);
        let r = validate(&m);
        assert!(!r.passed && r.min_eigenvalue < 0.0);
    }

    #[test]
    fn domain_errors() {
        for bad in [
            StateFamily::Mems(1.1),
            StateFamily::Mnms2(-1.01),
            StateFamily::Mnms3(0.13),
            StateFamily::DiagMix(-0.1),
            StateFamily::Planar2(0.6),
            StateFamily::GhzBitFlip(0.2),
        ] {
            assert!(matches!(make_state(bad), Err(Error::Domain(_))), "{bad}");
        }
    }

    #[test]
    fn mnms3_trace_identity_is_exact() {
        for k in 0..=40 {
            let f = k as f64 / 320.0;
            let rho = make_state(StateFamily::Mnms3(f)).unwrap();
            let f1 = rho.matrix()[(0, 0)].re;
            assert_eq!(2.0 * f1 + 6.0 * f, 1.0, "f = {f}");
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let rho = make_state(StateFamily::Mems(0.123456789)).unwrap();
        let back = DensityMatrix::from_json(&rho.to_json().unwrap()).unwrap();
        assert_eq!(back, rho);
    }

    #[test]
    fn json_rejects_invalid_state() {
        let text = r#"{"qubits":1,"entries":[[1,0],[0,0],[0,0],[1,0]]}"#;
        assert!(matches!(DensityMatrix::from_json(text), Err(Error::InvalidState(_))));
        let text = r#"{"qubits":2,"entries":[[1,0]]}"#;
        assert!(matches!(DensityMatrix::from_json(text), Err(Error::Dimension(_))));
    }

    #[test]
    fn family_tags_round_trip() {
        for tag in StateFamily::TAGS {
            let fam = StateFamily::from_tag(tag, Some(0.05)).unwrap();
            assert_eq!(fam.tag(), tag);
        }
        assert!(StateFamily::from_tag("mnms2", None).is_err());
        assert!(StateFamily::from_tag("werner", Some(0.5)).is_err());
    }
}
