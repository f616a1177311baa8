//! CHSH and Svetlichny operators, their expectations and maxima.
//!
//! All values use the normalized convention: the classical (hybrid) bound is 1
//! and the quantum maximum is `sqrt 2`. Multiply by [`raw_multiplier`] to get
//! the conventional scale (e.g. 2 and `2 sqrt 2` for CHSH).
//!
//! Setting index `i_k ∈ {1,2}` is stored as question bit `q_k = i_k - 1`. A
//! question `J` is a bitmask with party 1 in the most significant bit, and its
//! sign is `(-1)^{floor(T/2)}` with `T` the number of set bits.

use std::cmp::Ordering;
use std::f64::consts::{FRAC_PI_2, PI, TAU};

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::{self, ComplexMatrix};
use crate::optimize::NelderMead;
use crate::seeding::{self, DOMAIN_STARTS};
use crate::states::{mix_white_noise, DensityMatrix};

/// Largest imaginary residue tolerated in `Tr(rho S)`.
const IMAG_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SettingMode {
    /// Directions in the xy-plane: `cos phi sigma_x + sin phi sigma_y`.
    Planar,
    /// Arbitrary directions on the Bloch sphere.
    Bloch,
}

impl SettingMode {
    fn params_per_setting(self) -> usize {
        match self {
            Self::Planar => 1,
            Self::Bloch => 2,
        }
    }
}

/// One projective ±1 measurement `n · sigma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementSetting {
    pub mode: SettingMode,
    /// Polar angle; fixed at `pi/2` for planar settings.
    pub theta: f64,
    /// Azimuth.
    pub phi: f64,
}

impl MeasurementSetting {
    pub fn planar(phi: f64) -> Self {
        Self { mode: SettingMode::Planar, theta: FRAC_PI_2, phi }
    }

    pub fn bloch(theta: f64, phi: f64) -> Self {
        Self { mode: SettingMode::Bloch, theta, phi }
    }

    /// Setting pointing along a (not necessarily normalized) nonzero vector.
    pub fn along(v: [f64; 3]) -> Self {
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let theta = (v[2] / norm).clamp(-1.0, 1.0).acos();
        let phi = v[1].atan2(v[0]);
        Self::bloch(theta, phi)
    }

    pub fn direction(&self) -> [f64; 3] {
        match self.mode {
            SettingMode::Planar => [self.phi.cos(), self.phi.sin(), 0.0],
            SettingMode::Bloch => {
                let (st, ct) = self.theta.sin_cos();
                let (sp, cp) = self.phi.sin_cos();
                [st * cp, st * sp, ct]
            }
        }
    }

    /// The single-qubit observable `n · sigma`.
    pub fn observable(&self) -> ComplexMatrix {
        let [x, y, z] = self.direction();
        let mut m = ComplexMatrix::zeros(2);
        m[(0, 0)] = Complex64::new(z, 0.0);
        m[(1, 1)] = Complex64::new(-z, 0.0);
        m[(0, 1)] = Complex64::new(x, -y);
        m[(1, 0)] = Complex64::new(x, y);
        m
    }

    fn reduced(&self) -> Self {
        Self { mode: self.mode, theta: self.theta.rem_euclid(TAU), phi: self.phi.rem_euclid(TAU) }
    }
}

/// Two settings per party; `settings[k][q]` is party `k+1`'s setting for question bit `q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "SettingsDoc", try_from = "SettingsDoc")]
pub struct SettingsTable {
    settings: Vec<[MeasurementSetting; 2]>,
}

impl SettingsTable {
    pub fn new(settings: Vec<[MeasurementSetting; 2]>) -> Result<Self> {
        if settings.is_empty() {
            return Err(Error::Dimension("settings table needs at least one party".into()));
        }
        Ok(Self { settings })
    }

    /// Planar table from `[[phi_k1, phi_k2]; N]`.
    pub fn planar(angles: &[[f64; 2]]) -> Self {
        Self {
            settings: angles
                .iter()
                .map(|&[a, b]| [MeasurementSetting::planar(a), MeasurementSetting::planar(b)])
                .collect(),
        }
    }

    pub fn parties(&self) -> usize {
        self.settings.len()
    }

    pub fn get(&self, party: usize, question_bit: usize) -> &MeasurementSetting {
        &self.settings[party][question_bit]
    }

    pub fn rows(&self) -> &[[MeasurementSetting; 2]] {
        &self.settings
    }

    pub fn mode(&self) -> SettingMode {
        if self.settings.iter().flatten().all(|s| s.mode == SettingMode::Planar) {
            SettingMode::Planar
        } else {
            SettingMode::Bloch
        }
    }

    /// Angles reduced mod `2 pi`.
    pub fn reduced(&self) -> Self {
        Self { settings: self.settings.iter().map(|[a, b]| [a.reduced(), b.reduced()]).collect() }
    }

    /// Reorders parties: new party `k` is old party `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self { settings: perm.iter().map(|&p| self.settings[p]).collect() }
    }

    /// Unit direction pairs per party.
    pub fn directions(&self) -> Vec<[[f64; 3]; 2]> {
        self.settings.iter().map(|[a, b]| [a.direction(), b.direction()]).collect()
    }

    /// Flat optimizer parameters for `mode`.
    fn to_params(&self, mode: SettingMode) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.parties() * 2 * mode.params_per_setting());
        for s in self.settings.iter().flatten() {
            match mode {
                SettingMode::Planar => p.push(s.phi),
                SettingMode::Bloch => p.extend([s.theta, s.phi]),
            }
        }
        p
    }

    fn from_params(params: &[f64], mode: SettingMode) -> Self {
        let k = mode.params_per_setting();
        let settings = params
            .chunks(2 * k)
            .map(|c| match mode {
                SettingMode::Planar => {
                    [MeasurementSetting::planar(c[0]), MeasurementSetting::planar(c[1])]
                }
                SettingMode::Bloch => {
                    [MeasurementSetting::bloch(c[0], c[1]), MeasurementSetting::bloch(c[2], c[3])]
                }
            })
            .collect();
        Self { settings }
    }
}

/// JSON form of a settings table:
/// `{"parties": N, "mode": "planar"|"bloch", "angles": [[phi | [theta, phi], ...], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingsDoc {
    pub parties: usize,
    pub mode: SettingMode,
    pub angles: Vec<Vec<AngleSpec>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AngleSpec {
    Phi(f64),
    ThetaPhi([f64; 2]),
}

impl From<SettingsTable> for SettingsDoc {
    fn from(t: SettingsTable) -> Self {
        let mode = t.mode();
        let angles = t
            .settings
            .iter()
            .map(|pair| {
                pair.iter()
                    .map(|s| match mode {
                        SettingMode::Planar => AngleSpec::Phi(s.phi),
                        SettingMode::Bloch => AngleSpec::ThetaPhi([s.theta, s.phi]),
                    })
                    .collect()
            })
            .collect();
        Self { parties: t.parties(), mode, angles }
    }
}

impl TryFrom<SettingsDoc> for SettingsTable {
    type Error = Error;

    fn try_from(doc: SettingsDoc) -> Result<Self> {
        if doc.angles.len() != doc.parties {
            return Err(Error::Dimension(format!(
                "settings declare {} parties but list {}",
                doc.parties,
                doc.angles.len()
            )));
        }
        let mut settings = Vec::with_capacity(doc.parties);
        for (k, row) in doc.angles.iter().enumerate() {
            if row.len() != 2 {
                return Err(Error::Dimension(format!(
                    "party {} has {} settings, expected 2",
                    k + 1,
                    row.len()
                )));
            }
            let mut pair = [MeasurementSetting::planar(0.0); 2];
            for (slot, spec) in pair.iter_mut().zip(row) {
                *slot = match (doc.mode, *spec) {
                    (SettingMode::Planar, AngleSpec::Phi(phi)) => MeasurementSetting::planar(phi),
                    (SettingMode::Bloch, AngleSpec::ThetaPhi([t, p])) => {
                        MeasurementSetting::bloch(t, p)
                    }
                    (mode, spec) => {
                        return Err(Error::Dimension(format!(
                            "angle {spec:?} does not match mode {mode:?}"
                        )))
                    }
                };
            }
            settings.push(pair);
        }
        Self::new(settings)
    }
}

/// Local vectors and correlation matrix of a two-qubit state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochDecomposition2Q {
    pub r: [f64; 3],
    pub s: [f64; 3],
    /// `t[m][n] = Tr(rho sigma_m ⊗ sigma_n)`.
    pub t: [[f64; 3]; 3],
    /// Eigenvalues of `T^T T`, descending.
    pub lambda_sq: [f64; 3],
}

impl BlochDecomposition2Q {
    /// Rebuilds `(I⊗I + Σ r_i σ_i⊗I + Σ s_j I⊗σ_j + Σ t_mn σ_m⊗σ_n)/4`.
    pub fn reconstruct(&self) -> ComplexMatrix {
        let p = matcore::paulis();
        let id = ComplexMatrix::identity(2);
        let mut m = ComplexMatrix::identity(4);
        let kr = |a: &ComplexMatrix, b: &ComplexMatrix| matcore::kron(a, b).expect("4x4");
        for i in 0..3 {
            m = m.add(&kr(&p[i], &id).scale(self.r[i])).expect("4x4");
            m = m.add(&kr(&id, &p[i]).scale(self.s[i])).expect("4x4");
            for j in 0..3 {
                m = m.add(&kr(&p[i], &p[j]).scale(self.t[i][j])).expect("4x4");
            }
        }
        m.scale(0.25)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    HorodeckiExact,
    Optimized,
    ClosedForm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonlocalityResult {
    pub s_value: f64,
    pub settings: SettingsTable,
    pub method: Method,
    /// False when the optimizer ran out of budget before converging.
    pub converged: bool,
}

/// `2^{N-1}`: converts normalized values to the conventional scale.
pub fn raw_multiplier(parties: usize) -> f64 {
    (1u64 << (parties - 1)) as f64
}

/// `(-1)^{floor(T/2)}` for a question bitmask.
pub fn question_sign(question: usize) -> f64 {
    if (question.count_ones() / 2).is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Question bit of `party` (0-based) in bitmask `question` over `parties` players.
pub fn question_bit(question: usize, party: usize, parties: usize) -> usize {
    (question >> (parties - 1 - party)) & 1
}

fn check_parties(n: usize) -> Result<()> {
    if !(2..=3).contains(&n) {
        return Err(Error::Dimension(format!("game operators are defined for 2 or 3 parties, got {n}")));
    }
    Ok(())
}

fn check_two_qubits(rho: &DensityMatrix) -> Result<()> {
    if rho.qubits() != 2 {
        return Err(Error::Dimension(format!("expected a two-qubit state, got {} qubits", rho.qubits())));
    }
    Ok(())
}

/// `t_mn`, `r_i`, `s_j` of a two-qubit state and the spectrum of `T^T T`.
pub fn bloch_decompose(rho: &DensityMatrix) -> Result<BlochDecomposition2Q> {
    check_two_qubits(rho)?;
    let p = matcore::paulis();
    let id = ComplexMatrix::identity(2);
    let m = rho.matrix();
    let ev = |op: ComplexMatrix| m.trace_product(&op).map(|z| z.re);
    let mut r = [0.0; 3];
    let mut s = [0.0; 3];
    let mut t = [[0.0; 3]; 3];
    for i in 0..3 {
        r[i] = ev(matcore::kron(&p[i], &id)?)?;
        s[i] = ev(matcore::kron(&id, &p[i])?)?;
        for j in 0..3 {
            t[i][j] = ev(matcore::kron(&p[i], &p[j])?)?;
        }
    }
    let (lambda_sq, _) = matcore::sym_eigh(&gram(&t), 3);
    Ok(BlochDecomposition2Q { r, s, t, lambda_sq: [lambda_sq[0], lambda_sq[1], lambda_sq[2]] })
}

/// `T^T T`, row-major.
fn gram(t: &[[f64; 3]; 3]) -> Vec<f64> {
    let mut u = vec![0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            u[i * 3 + j] = (0..3).map(|k| t[k][i] * t[k][j]).sum();
        }
    }
    u
}

/// Exact CHSH maximum `sqrt(lambda_1^2 + lambda_2^2)` together with settings attaining it.
pub fn chsh_max_horodecki(rho: &DensityMatrix) -> Result<NonlocalityResult> {
    let dec = bloch_decompose(rho)?;
    let (vals, vecs) = matcore::sym_eigh(&gram(&dec.t), 3);
    let sig1 = vals[0].max(0.0).sqrt();
    let sig2 = vals[1].max(0.0).sqrt();
    let s_value = (sig1 * sig1 + sig2 * sig2).sqrt();

    let apply = |v: &[f64]| -> [f64; 3] {
        let mut out = [0.0; 3];
        for (m, o) in out.iter_mut().enumerate() {
            *o = (0..3).map(|n| dec.t[m][n] * v[n]).sum();
        }
        out
    };
    let (v1, v2) = (&vecs[0], &vecs[1]);
    let u1 = if sig1 > 1e-12 { scaled(apply(v1), 1.0 / sig1) } else { [1.0, 0.0, 0.0] };
    let u2 = if sig2 > 1e-12 { scaled(apply(v2), 1.0 / sig2) } else { orthogonal_to(u1) };
    let angle = sig2.atan2(sig1);
    let (sa, ca) = angle.sin_cos();
    let b1: [f64; 3] = std::array::from_fn(|i| ca * v1[i] + sa * v2[i]);
    let b2: [f64; 3] = std::array::from_fn(|i| ca * v1[i] - sa * v2[i]);
    let settings = SettingsTable {
        settings: vec![
            [MeasurementSetting::along(u1), MeasurementSetting::along(u2)],
            [MeasurementSetting::along(b1), MeasurementSetting::along(b2)],
        ],
    };
    Ok(NonlocalityResult { s_value, settings, method: Method::HorodeckiExact, converged: true })
}

fn scaled(v: [f64; 3], s: f64) -> [f64; 3] {
    [v[0] * s, v[1] * s, v[2] * s]
}

fn orthogonal_to(u: [f64; 3]) -> [f64; 3] {
    // cross with the axis least aligned to u
    let axis = if u[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let c = [
        u[1] * axis[2] - u[2] * axis[1],
        u[2] * axis[0] - u[0] * axis[2],
        u[0] * axis[1] - u[1] * axis[0],
    ];
    let n = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
    scaled(c, 1.0 / n)
}

/// `2^{1-N} Σ_J (-1)^{floor(T/2)} A_{1,i_1} ⊗ ... ⊗ A_{N,i_N}`.
pub fn game_operator(settings: &SettingsTable) -> Result<ComplexMatrix> {
    let n = settings.parties();
    check_parties(n)?;
    let observables: Vec<[ComplexMatrix; 2]> = settings
        .rows()
        .iter()
        .map(|[a, b]| [a.observable(), b.observable()])
        .collect();
    let mut op = ComplexMatrix::zeros(1 << n);
    for question in 0..(1usize << n) {
        let factors: Vec<&ComplexMatrix> =
            (0..n).map(|k| &observables[k][question_bit(question, k, n)]).collect();
        let term = matcore::kron_all(factors)?;
        op = op.add(&term.scale(question_sign(question)))?;
    }
    Ok(op.scale(1.0 / raw_multiplier(n)))
}

/// `Tr(rho · game_operator(settings))`.
pub fn expectation(rho: &DensityMatrix, settings: &SettingsTable) -> Result<f64> {
    if settings.parties() != rho.qubits() {
        return Err(Error::Dimension(format!(
            "{}-party settings on a {}-qubit state",
            settings.parties(),
            rho.qubits()
        )));
    }
    let op = game_operator(settings)?;
    let z = rho.matrix().trace_product(&op)?;
    if z.im.abs() > IMAG_TOL {
        return Err(Error::Inconsistent(format!("Tr(rho S) has imaginary part {:e}", z.im)));
    }
    Ok(z.re)
}

/// Full Pauli correlation tensor `Tr(rho σ_{a_1} ⊗ ... ⊗ σ_{a_N})`, indices
/// in base 3 with party 1 most significant. Evaluating the game value through
/// it is much cheaper than rebuilding the operator.
#[derive(Debug, Clone)]
pub struct CorrelationTensor {
    parties: usize,
    t: Vec<f64>,
}

impl CorrelationTensor {
    pub fn new(rho: &DensityMatrix) -> Result<Self> {
        let n = rho.qubits();
        check_parties(n)?;
        let p = matcore::paulis();
        let len = 3usize.pow(n as u32);
        let mut t = Vec::with_capacity(len);
        for idx in 0..len {
            let factors: Vec<&ComplexMatrix> =
                (0..n).map(|k| &p[(idx / 3usize.pow((n - 1 - k) as u32)) % 3]).collect();
            let op = matcore::kron_all(factors)?;
            t.push(rho.matrix().trace_product(&op)?.re);
        }
        Ok(Self { parties: n, t })
    }

    pub fn parties(&self) -> usize {
        self.parties
    }

    /// Game value for per-party direction pairs.
    pub fn game_value(&self, dirs: &[[[f64; 3]; 2]]) -> f64 {
        let n = self.parties;
        debug_assert_eq!(dirs.len(), n);
        let mut buf = [0.0; 27];
        let mut total = 0.0;
        for question in 0..(1usize << n) {
            let mut len = self.t.len();
            buf[..len].copy_from_slice(&self.t);
            for k in (0..n).rev() {
                let v = &dirs[k][question_bit(question, k, n)];
                len /= 3;
                for i in 0..len {
                    buf[i] = buf[3 * i] * v[0] + buf[3 * i + 1] * v[1] + buf[3 * i + 2] * v[2];
                }
            }
            total += question_sign(question) * buf[0];
        }
        total / raw_multiplier(n)
    }

    fn value_at(&self, params: &[f64], mode: SettingMode) -> f64 {
        let k = mode.params_per_setting();
        let mut dirs = [[[0.0; 3]; 2]; 3];
        for (party, chunk) in params.chunks(2 * k).enumerate() {
            for q in 0..2 {
                dirs[party][q] = match mode {
                    SettingMode::Planar => {
                        let (s, c) = chunk[q].sin_cos();
                        [c, s, 0.0]
                    }
                    SettingMode::Bloch => {
                        let (st, ct) = chunk[2 * q].sin_cos();
                        let (sp, cp) = chunk[2 * q + 1].sin_cos();
                        [st * cp, st * sp, ct]
                    }
                };
            }
        }
        self.game_value(&dirs[..self.parties])
    }
}

/// Multi-start optimizer configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaximizeOptions {
    pub starts: usize,
    pub nelder_mead: NelderMead,
    pub seed: u64,
}

impl Default for MaximizeOptions {
    fn default() -> Self {
        Self { starts: 64, nelder_mead: NelderMead::default(), seed: 0 }
    }
}

#[derive(Debug, Clone)]
struct Candidate {
    value: f64,
    params: Vec<f64>,
    converged: bool,
}

/// Total order: higher value first, then lexicographically smaller angles.
fn better(a: &Candidate, b: &Candidate) -> Ordering {
    b.value.total_cmp(&a.value).then_with(|| {
        a.params
            .iter()
            .zip(&b.params)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    })
}

fn reduce_params(params: &[f64]) -> Vec<f64> {
    params.iter().map(|p| p.rem_euclid(TAU)).collect()
}

/// Maximizes the game value over all setting angles with multi-start Nelder–Mead.
pub fn maximize(rho: &DensityMatrix, mode: SettingMode, opts: &MaximizeOptions) -> Result<NonlocalityResult> {
    let tensor = CorrelationTensor::new(rho)?;
    let n = tensor.parties();
    let dim = 2 * n * mode.params_per_setting();
    let starts = opts.starts.max(1);

    let candidates: Vec<Candidate> = (0..starts)
        .into_par_iter()
        .map(|start| {
            let mut rng = seeding::stream_rng(opts.seed, DOMAIN_STARTS, start as u64);
            let x0: Vec<f64> = (0..dim)
                .map(|i| match mode {
                    SettingMode::Bloch if i % 2 == 0 => rng.random_range(0.0..PI),
                    _ => rng.random_range(0.0..TAU),
                })
                .collect();
            run_start(&tensor, mode, &opts.nelder_mead, &x0)
        })
        .collect();

    let best = candidates.into_iter().min_by(better).expect("at least one start");
    Ok(NonlocalityResult {
        s_value: best.value,
        settings: SettingsTable::from_params(&best.params, mode),
        method: Method::Optimized,
        converged: best.converged,
    })
}

/// Single Nelder–Mead run from the given settings.
pub fn maximize_from(
    rho: &DensityMatrix,
    start: &SettingsTable,
    mode: SettingMode,
    nelder_mead: &NelderMead,
) -> Result<NonlocalityResult> {
    let tensor = CorrelationTensor::new(rho)?;
    if start.parties() != tensor.parties() {
        return Err(Error::Dimension("warm-start settings do not match the state".into()));
    }
    let best = run_start(&tensor, mode, nelder_mead, &start.to_params(mode));
    Ok(NonlocalityResult {
        s_value: best.value,
        settings: SettingsTable::from_params(&best.params, mode),
        method: Method::Optimized,
        converged: best.converged,
    })
}

fn run_start(tensor: &CorrelationTensor, mode: SettingMode, nm: &NelderMead, x0: &[f64]) -> Candidate {
    let min = nm.minimize(|p| -tensor.value_at(p, mode), x0);
    let params = reduce_params(&min.x);
    // re-evaluate at the reduced angles so the reported value matches the settings
    let value = tensor.value_at(&params, mode);
    Candidate { value, params, converged: min.converged }
}

/// `theta(f) = arccos sqrt((1 - 8f)/(2 - 24f))` for the three-qubit MNMS.
pub fn mnms3_theta(f: f64) -> Result<f64> {
    if !(0.0..=1.0 / 16.0).contains(&f) {
        return Err(Error::Domain(format!("closed-form settings need f in [0, 1/16], got {f}")));
    }
    Ok(((1.0 - 8.0 * f) / (2.0 - 24.0 * f)).sqrt().min(1.0).acos())
}

/// Planar settings `phi_11 = phi_21 = -theta`, `phi_12 = phi_22 = phi_31 = theta`,
/// `phi_32 = pi - theta` that attain the three-qubit MNMS maximum for `f <= 1/16`.
pub fn mnms3_optimal_settings(f: f64) -> Result<SettingsTable> {
    let theta = mnms3_theta(f)?;
    Ok(SettingsTable::planar(&[[-theta, theta], [-theta, theta], [theta, PI - theta]]))
}

/// Planar settings reaching value 1 on every three-qubit MNMS: parties 1 and 2
/// measure `sigma_x` for both questions, party 3 measures `±sigma_x`.
pub fn terrace_settings() -> SettingsTable {
    SettingsTable::planar(&[[0.0, 0.0], [0.0, 0.0], [0.0, PI]])
}

/// Closed-form maximal Svetlichny value of the three-qubit MNMS.
pub fn mnms3_max_value(f: f64) -> Result<f64> {
    if !(0.0..=0.125).contains(&f) {
        return Err(Error::Domain(format!("MNMS3 parameter {f} outside [0, 1/8]")));
    }
    Ok(if f <= 1.0 / 16.0 {
        (1.0 - 8.0 * f).powf(1.5) / (0.5 - 6.0 * f).sqrt()
    } else {
        1.0
    })
}

/// Closed-form settings for MNMS3 on its whole domain.
pub fn mnms3_closed_form_settings(f: f64) -> Result<SettingsTable> {
    if f <= 1.0 / 16.0 {
        mnms3_optimal_settings(f)
    } else if f <= 0.125 {
        Ok(terrace_settings())
    } else {
        Err(Error::Domain(format!("MNMS3 parameter {f} outside [0, 1/8]")))
    }
}

/// Smallest white-noise visibility `v` at which `v rho + (1-v) I/d` still
/// reaches the classical bound, found by bisection on `v`.
///
/// Two-qubit states use the exact criterion at every step; three-qubit states
/// run the multi-start optimizer once and then warm-start each step from the
/// previous argmax.
pub fn critical_visibility(rho: &DensityMatrix, mode: SettingMode, opts: &MaximizeOptions) -> Result<f64> {
    const STEPS: usize = 60;
    let n = rho.qubits();
    check_parties(n)?;

    let full = if n == 2 { chsh_max_horodecki(rho)? } else { maximize(rho, mode, opts)? };
    if full.s_value <= 1.0 {
        return Err(Error::Local(full.s_value));
    }

    let warm_nm = NelderMead { step: 0.05, ..opts.nelder_mead };
    let mut warm = full.settings.clone();
    let mut value_at = |v: f64| -> Result<f64> {
        let noisy = mix_white_noise(rho, v)?;
        if n == 2 {
            Ok(chsh_max_horodecki(&noisy)?.s_value)
        } else {
            let r = maximize_from(&noisy, &warm, mode, &warm_nm)?;
            warm = r.settings.clone();
            Ok(r.s_value)
        }
    };

    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..STEPS {
        let mid = 0.5 * (lo + hi);
        if value_at(mid)? >= 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
