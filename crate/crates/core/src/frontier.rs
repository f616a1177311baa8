//! Entropy–nonlocality frontier: analytic curves, family points, random-state
//! scans and envelope checks in the `(E_L, S)` plane.

use std::fmt;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::sig17;
use crate::matcore::ComplexMatrix;
use crate::nonlocality::{
    chsh_max_horodecki, expectation, maximize, mnms3_closed_form_settings, MaximizeOptions,
    SettingMode,
};
use crate::seeding::{self, DOMAIN_SAMPLES, DOMAIN_STARTS};
use crate::states::{linear_entropy, make_state, DensityMatrix, StateFamily};

/// Entropy where two-qubit MNMS stop violating CHSH.
pub const E_CRIT_2Q: f64 = 2.0 / 3.0;
/// Entropy where the three-qubit MNMS reach the classical bound.
pub const E_CRIT_3Q: f64 = 9.0 / 14.0;
/// End of the three-qubit MNMS family (`f = 1/8`).
pub const E_MAX_MNMS3: f64 = 6.0 / 7.0;
/// Seam between the two MEMS branches (`gamma = 2/3`).
pub const E_MEMS_SEAM: f64 = 16.0 / 27.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveFamily {
    Mnms2,
    Mems2,
    Min2,
    Planar2,
    Mnms3,
}

impl CurveFamily {
    pub const ALL: [CurveFamily; 5] = [Self::Mnms2, Self::Mems2, Self::Min2, Self::Planar2, Self::Mnms3];

    pub fn tag(self) -> &'static str {
        match self {
            Self::Mnms2 => "mnms2",
            Self::Mems2 => "mems2",
            Self::Min2 => "min2",
            Self::Planar2 => "planar2",
            Self::Mnms3 => "mnms3",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.tag() == tag.to_ascii_lowercase())
            .or_else(|| (tag.eq_ignore_ascii_case("mems")).then_some(Self::Mems2))
            .ok_or_else(|| Error::Domain(format!("unknown curve family '{tag}'")))
    }

    /// `(lo, hi, lo_open)`; the upper end is always closed.
    pub fn domain(self) -> (f64, f64, bool) {
        match self {
            Self::Mnms2 | Self::Min2 => (0.0, E_CRIT_2Q, false),
            Self::Mems2 => (0.0, 8.0 / 9.0, false),
            Self::Planar2 => (E_CRIT_2Q, 1.0, true),
            Self::Mnms3 => (0.0, E_MAX_MNMS3, false),
        }
    }

    pub fn contains(self, e_l: f64) -> bool {
        let (lo, hi, open) = self.domain();
        e_l <= hi && if open { e_l > lo } else { e_l >= lo }
    }

    /// `grid` evenly spaced entropies covering the domain (an open lower end is skipped).
    pub fn grid(self, grid: usize) -> Vec<f64> {
        let (lo, hi, open) = self.domain();
        match (grid, open) {
            (0, _) => vec![],
            (1, _) => vec![hi],
            (_, false) => (0..grid).map(|i| lo + (hi - lo) * i as f64 / (grid - 1) as f64).collect(),
            (_, true) => (1..=grid).map(|i| lo + (hi - lo) * i as f64 / grid as f64).collect(),
        }
    }
}

impl fmt::Display for CurveFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Analytic `S(E_L)` for a curve family.
pub fn curve_value(family: CurveFamily, e_l: f64) -> Result<f64> {
    if !family.contains(e_l) {
        let (lo, hi, open) = family.domain();
        return Err(Error::Domain(format!(
            "E_L = {e_l} outside {}{lo}, {hi}] for {family}",
            if open { "(" } else { "[" }
        )));
    }
    Ok(match family {
        CurveFamily::Mnms2 => (2.0 - 1.5 * e_l).sqrt(),
        CurveFamily::Min2 => (1.0 - 1.5 * e_l).max(0.0).sqrt(),
        CurveFamily::Planar2 => (3.0 - 3.0 * e_l).sqrt(),
        CurveFamily::Mems2 => {
            if e_l <= E_MEMS_SEAM {
                (2.0_f64.sqrt() + (2.0 - 3.0 * e_l).max(0.0).sqrt()) / 2.0
            } else {
                let cut = (1.5 * (8.0 - 9.0 * e_l)).min(1.0);
                (25.0 - 27.0 * e_l - cut).max(0.0).sqrt() / 3.0
            }
        }
        CurveFamily::Mnms3 => {
            if e_l < E_CRIT_3Q {
                let w = 6.0 - 6.0_f64.sqrt() * (6.0 - 7.0 * e_l).sqrt();
                (1.0 - w / 6.0).powf(1.5) / (0.5 - w / 8.0).sqrt()
            } else {
                1.0
            }
        }
    })
}

/// Best possible `S` at entropy `e_l` among all states with `qubits` qubits.
pub fn upper_envelope(qubits: usize, e_l: f64) -> Result<f64> {
    match qubits {
        2 if e_l <= E_CRIT_2Q => curve_value(CurveFamily::Mnms2, e_l.max(0.0)),
        2 => curve_value(CurveFamily::Planar2, e_l.min(1.0)),
        3 if e_l < E_CRIT_3Q => curve_value(CurveFamily::Mnms3, e_l.max(0.0)),
        3 => Ok(1.0),
        _ => Err(Error::Dimension(format!("no envelope for {qubits} qubits"))),
    }
}

/// Curve a family's `(E_L, S)` points lie on, if any.
pub fn curve_for(family: StateFamily) -> Option<CurveFamily> {
    match family {
        StateFamily::BellPhiPlus | StateFamily::BellPsiPlus | StateFamily::Mnms2(_) => {
            Some(CurveFamily::Mnms2)
        }
        StateFamily::Mems(_) => Some(CurveFamily::Mems2),
        StateFamily::Planar2(_) => Some(CurveFamily::Planar2),
        StateFamily::Ghz | StateFamily::Mnms3(_) | StateFamily::GhzBitFlip(_) => Some(CurveFamily::Mnms3),
        StateFamily::DiagMix(_) => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PointSource {
    Sampled { index: u64 },
    Family { family: StateFamily },
    Curve { family: CurveFamily },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrontierPoint {
    pub e_l: f64,
    pub s: f64,
    pub source: PointSource,
    /// False when the optimizer producing `s` ran out of budget.
    pub converged: bool,
}

/// Exact `(E_L, S)` of a state family member.
///
/// Two-qubit families use the exact CHSH maximum. Three-qubit families use the
/// closed-form settings, cross-checked by a short optimizer run.
pub fn family_point(family: StateFamily) -> Result<FrontierPoint> {
    let rho = make_state(family)?;
    let e_l = linear_entropy(&rho);
    let s = if rho.qubits() == 2 {
        chsh_max_horodecki(&rho)?.s_value
    } else {
        let f = match family {
            StateFamily::Ghz => 0.0,
            StateFamily::Mnms3(f) | StateFamily::GhzBitFlip(f) => f,
            _ => unreachable!("all three-qubit families are GHZ-based"),
        };
        let closed = expectation(&rho, &mnms3_closed_form_settings(f)?)?;
        let opts = MaximizeOptions { starts: 8, ..Default::default() };
        let found = maximize(&rho, SettingMode::Planar, &opts)?.s_value;
        if found > closed + 1e-6 {
            return Err(Error::Inconsistent(format!(
                "{family}: optimizer found {found}, closed form gives {closed}"
            )));
        }
        closed
    };
    Ok(FrontierPoint { e_l, s, source: PointSource::Family { family }, converged: true })
}

/// Points along an analytic curve.
pub fn curve_points(family: CurveFamily, grid: usize) -> Result<Vec<FrontierPoint>> {
    family
        .grid(grid)
        .into_iter()
        .map(|e_l| {
            Ok(FrontierPoint {
                e_l,
                s: curve_value(family, e_l)?,
                source: PointSource::Curve { family },
                converged: true,
            })
        })
        .collect()
}

/// Random density matrix `G G^dagger / Tr(G G^dagger)` with `G` a `d × rank`
/// matrix of independent standard complex Gaussians. `rank = d` gives the
/// Hilbert–Schmidt ensemble.
pub fn sample_state<R: Rng + ?Sized>(qubits: usize, rank: usize, rng: &mut R) -> Result<DensityMatrix> {
    if !(1..=8).contains(&qubits) {
        return Err(Error::Dimension(format!("cannot sample {qubits}-qubit states")));
    }
    let d = 1usize << qubits;
    if rank == 0 || rank > d {
        return Err(Error::Domain(format!("rank {rank} outside [1, {d}]")));
    }
    let g: Vec<Complex64> = (0..d * rank)
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let mut m = ComplexMatrix::zeros(d);
    for i in 0..d {
        for j in 0..d {
            m[(i, j)] = (0..rank).map(|k| g[i * rank + k] * g[j * rank + k].conj()).sum();
        }
    }
    // exact Hermiticity before normalization
    for i in 0..d {
        m[(i, i)].im = 0.0;
        for j in 0..i {
            m[(i, j)] = m[(j, i)].conj();
        }
    }
    let tr = m.trace().re;
    DensityMatrix::new(qubits, m.scale(1.0 / tr))
}

/// Hilbert–Schmidt sample number `index` of the stream for `seed`.
pub fn sample_indexed(qubits: usize, rank: usize, seed: u64, index: u64) -> Result<DensityMatrix> {
    let mut rng = seeding::stream_rng(seed, DOMAIN_SAMPLES, index);
    sample_state(qubits, rank, &mut rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanConfig {
    pub qubits: usize,
    pub samples: u64,
    pub seed: u64,
    /// Setting mode for three-qubit optimization.
    pub mode: SettingMode,
    /// Columns of the Ginibre matrix; `None` means full rank.
    pub rank: Option<usize>,
    /// Optimizer starts per three-qubit sample.
    pub starts: usize,
    /// Fraction of highest planar points re-optimized in Bloch mode.
    pub audit_fraction: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            qubits: 2,
            samples: 1000,
            seed: 0,
            mode: SettingMode::Planar,
            rank: None,
            starts: MaximizeOptions::default().starts,
            audit_fraction: 0.01,
        }
    }
}

/// `(E_L, S_max)` for `samples` random states; order follows the sample index.
pub fn scan(config: &ScanConfig) -> Result<Vec<FrontierPoint>> {
    if !(2..=3).contains(&config.qubits) {
        return Err(Error::Dimension(format!("scans support 2 or 3 qubits, got {}", config.qubits)));
    }
    if config.samples == 0 {
        return Err(Error::Domain("samples must be at least 1".into()));
    }
    let rank = config.rank.unwrap_or(1 << config.qubits);
    let opts_for = |index: u64| MaximizeOptions {
        starts: config.starts,
        seed: seeding::derive_seed(config.seed, DOMAIN_STARTS, index),
        ..Default::default()
    };

    let mut points: Vec<FrontierPoint> = (0..config.samples)
        .into_par_iter()
        .map(|index| {
            let rho = sample_indexed(config.qubits, rank, config.seed, index)?;
            let (s, converged) = if config.qubits == 2 {
                (chsh_max_horodecki(&rho)?.s_value, true)
            } else {
                let r = maximize(&rho, config.mode, &opts_for(index))?;
                (r.s_value, r.converged)
            };
            Ok(FrontierPoint {
                e_l: linear_entropy(&rho),
                s,
                source: PointSource::Sampled { index },
                converged,
            })
        })
        .collect::<Result<_>>()?;

    if config.qubits == 3 && config.mode == SettingMode::Planar && config.audit_fraction > 0.0 {
        let count = ((config.samples as f64 * config.audit_fraction).ceil() as usize).min(points.len());
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| points[b].s.total_cmp(&points[a].s).then(a.cmp(&b)));
        let audited: Vec<(usize, f64, bool)> = order[..count]
            .par_iter()
            .map(|&i| {
                let rho = sample_indexed(3, rank, config.seed, i as u64)?;
                let r = maximize(&rho, SettingMode::Bloch, &opts_for(i as u64))?;
                Ok((i, r.s_value, r.converged))
            })
            .collect::<Result<_>>()?;
        for (i, s, converged) in audited {
            if s > points[i].s {
                points[i].s = s;
                points[i].converged = converged;
            }
        }
    }
    Ok(points)
}

/// Outcome of comparing sampled points with the analytic envelopes.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EnvelopeReport {
    pub checked: usize,
    pub skipped_unconverged: usize,
    /// Indices (into the input) of points above the upper envelope.
    pub above_upper: Vec<usize>,
    /// Indices of two-qubit points below MIN2 with `E_L <= 2/3`.
    pub below_min: Vec<usize>,
    /// Largest `s - upper` seen (negative when everything is inside).
    pub max_excess: f64,
}

impl EnvelopeReport {
    pub fn clean(&self) -> bool {
        self.above_upper.is_empty() && self.below_min.is_empty()
    }
}

/// Checks every converged point against the upper (and, for two qubits, lower)
/// envelope with tolerance `tol`.
pub fn check_envelope(points: &[FrontierPoint], qubits: usize, tol: f64) -> Result<EnvelopeReport> {
    let mut report = EnvelopeReport { max_excess: f64::NEG_INFINITY, ..Default::default() };
    for (i, p) in points.iter().enumerate() {
        if !p.converged {
            report.skipped_unconverged += 1;
            continue;
        }
        report.checked += 1;
        let excess = p.s - upper_envelope(qubits, p.e_l)?;
        report.max_excess = report.max_excess.max(excess);
        if excess > tol {
            report.above_upper.push(i);
        }
        if qubits == 2 && p.e_l <= E_CRIT_2Q && p.s < curve_value(CurveFamily::Min2, p.e_l.max(0.0))? - tol {
            report.below_min.push(i);
        }
    }
    Ok(report)
}

const CSV_HEADER: [&str; 4] = ["e_l", "s", "source", "parameter"];

fn source_fields(p: &FrontierPoint) -> (String, String) {
    match p.source {
        PointSource::Sampled { index } => (
            if p.converged { "sampled".into() } else { "sampled_unconverged".into() },
            index.to_string(),
        ),
        PointSource::Family { family } => (
            format!("family:{}", family.tag()),
            family.parameter().map(sig17).unwrap_or_default(),
        ),
        PointSource::Curve { family } => (format!("curve:{}", family.tag()), String::new()),
    }
}

/// Renders `e_l,s,source,parameter` rows with 17 significant digits.
pub fn csv_string(points: &[FrontierPoint]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    // writing to memory cannot fail
    w.write_record(CSV_HEADER).expect("in-memory CSV");
    for p in points {
        let (source, parameter) = source_fields(p);
        w.write_record([sig17(p.e_l), sig17(p.s), source, parameter]).expect("in-memory CSV");
    }
    String::from_utf8(w.into_inner().expect("in-memory CSV")).expect("CSV fields are UTF-8")
}

/// Writes [`csv_string`] to `path`.
pub fn emit_csv(points: &[FrontierPoint], path: &Path) -> Result<()> {
    std::fs::write(path, csv_string(points)).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

/// Parses a file written by [`emit_csv`].
pub fn read_csv(path: &Path) -> Result<Vec<FrontierPoint>> {
    let wrap = |source| Error::Csv { path: path.to_path_buf(), source };
    let bad = |what: String| Error::Inconsistent(format!("{}: {what}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(wrap)?;
    let header = r.headers().map_err(wrap)?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(bad(format!("unexpected header {header:?}")));
    }
    let mut points = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(wrap)?;
        let num = |i: usize| rec[i].parse::<f64>().map_err(|e| bad(format!("{:?}: {e}", &rec[i])));
        let (source, converged) = match &rec[2] {
            "sampled" | "sampled_unconverged" => {
                let index = rec[3].parse().map_err(|e| bad(format!("sample index: {e}")))?;
                (PointSource::Sampled { index }, &rec[2] == "sampled")
            }
            s if s.starts_with("family:") => {
                let param = if rec[3].is_empty() { None } else { Some(num(3)?) };
                (PointSource::Family { family: StateFamily::from_tag(&s[7..], param)? }, true)
            }
            s if s.starts_with("curve:") => {
                (PointSource::Curve { family: CurveFamily::from_tag(&s[6..])? }, true)
            }
            other => return Err(bad(format!("unknown source {other:?}"))),
        };
        points.push(FrontierPoint { e_l: num(0)?, s: num(1)?, source, converged });
    }
    Ok(points)
}
