use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;
use proptest::prelude::*;

use nonlocal::frontier::{curve_for, curve_value, family_point, sample_indexed};
use nonlocal::games::{quantum_win_exact, GameSpec};
use nonlocal::matcore::{herm_eigvals, kron, ComplexMatrix};
use nonlocal::nonlocality::{chsh_max_horodecki, expectation, MeasurementSetting, SettingsTable};
use nonlocal::states::{make_state, mix_white_noise, validate, DensityMatrix, StateFamily};

fn matrix(dim: usize) -> impl Strategy<Value = ComplexMatrix> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), dim * dim).prop_map(move |v| {
        ComplexMatrix::new(dim, v.into_iter().map(|(re, im)| Complex64::new(re, im)).collect()).unwrap()
    })
}

fn state(qubits: usize) -> impl Strategy<Value = DensityMatrix> {
    any::<u64>().prop_map(move |seed| sample_indexed(qubits, 1 << qubits, seed, 0).unwrap())
}

fn settings(parties: usize) -> impl Strategy<Value = SettingsTable> {
    prop::collection::vec((0.0..PI, 0.0..2.0 * PI), 2 * parties).prop_map(|angles| {
        let rows = angles
            .chunks(2)
            .map(|pair| [MeasurementSetting::bloch(pair[0].0, pair[0].1), MeasurementSetting::bloch(pair[1].0, pair[1].1)])
            .collect();
        SettingsTable::new(rows).unwrap()
    })
}

/// Householder reflection `I - 2 v v† / |v|²`, a unitary for any nonzero `v`.
fn householder(v: &[Complex64]) -> ComplexMatrix {
    let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum();
    let d = v.len();
    ComplexMatrix::from_fn(d, |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        Complex64::new(delta, 0.0) - v[i] * v[j].conj() * (2.0 / norm)
    })
}

fn vector(dim: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((0.1..1.0f64, -1.0..1.0f64), dim)
        .prop_map(|v| v.into_iter().map(|(re, im)| Complex64::new(re, im)).collect())
}

/// Reorders qubits so that new qubit `k` is old qubit `perm[k]`; qubit 0 is the
/// most significant bit.
fn permute_qubits(rho: &DensityMatrix, perm: &[usize]) -> DensityMatrix {
    let n = rho.qubits();
    let old_index = |new: usize| {
        (0..n).fold(0, |acc, k| {
            let bit = new >> (n - 1 - k) & 1;
            acc | bit << (n - 1 - perm[k])
        })
    };
    let m = rho.matrix();
    let permuted = ComplexMatrix::from_fn(rho.dim(), |i, j| m[(old_index(i), old_index(j))]);
    DensityMatrix::new(n, permuted).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn kron_is_associative(a in matrix(2), b in matrix(2), c in matrix(2)) {
        let left = kron(&kron(&a, &b).unwrap(), &c).unwrap();
        let right = kron(&a, &kron(&b, &c).unwrap()).unwrap();
        prop_assert!(left.max_abs_diff(&right).unwrap() < 1e-15);
    }

    #[test]
    fn kron_trace_is_product(a in matrix(2), b in matrix(4)) {
        let t = kron(&a, &b).unwrap().trace();
        prop_assert!((t - a.trace() * b.trace()).norm() < 1e-12);
    }

    #[test]
    fn spectrum_is_unitarily_invariant(rho in state(2), v in vector(4)) {
        let u = householder(&v);
        let rotated = rho.conjugate_by(&u).unwrap();
        let a = herm_eigvals(rho.matrix()).unwrap();
        let b = herm_eigvals(rotated.matrix()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn expectation_is_linear(r1 in state(3), r2 in state(3), s in settings(3), alpha in 0.0..1.0f64) {
        let mixed = r1.mix(&r2, alpha).unwrap();
        let lhs = expectation(&mixed, &s).unwrap();
        let rhs = alpha * expectation(&r1, &s).unwrap() + (1.0 - alpha) * expectation(&r2, &s).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn tsirelson_caps_every_value(r2 in state(2), s2 in settings(2), r3 in state(3), s3 in settings(3)) {
        prop_assert!(expectation(&r2, &s2).unwrap().abs() <= SQRT_2 + 1e-12);
        prop_assert!(expectation(&r3, &s3).unwrap().abs() <= SQRT_2 + 1e-12);
        prop_assert!(chsh_max_horodecki(&r2).unwrap().s_value <= SQRT_2 + 1e-12);
    }

    #[test]
    fn chsh_max_is_local_unitary_invariant(rho in state(2), va in vector(2), vb in vector(2)) {
        let u = kron(&householder(&va), &householder(&vb)).unwrap();
        let rotated = rho.conjugate_by(&u).unwrap();
        let a = chsh_max_horodecki(&rho).unwrap().s_value;
        let b = chsh_max_horodecki(&rotated).unwrap().s_value;
        prop_assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn xor_identity(rho in state(3), s in settings(3)) {
        let pr = quantum_win_exact(&rho, &s, &GameSpec::local(3).unwrap()).unwrap().win_probability;
        prop_assert!((pr - (2.0 + expectation(&rho, &s).unwrap()) / 4.0).abs() < 1e-12);
    }

    #[test]
    fn relabelling_players_preserves_value(
        rho in state(3),
        s in settings(3),
        perm in Just(vec![0usize, 1, 2]).prop_shuffle(),
    ) {
        let moved = permute_qubits(&rho, &perm);
        let a = expectation(&rho, &s).unwrap();
        let b = expectation(&moved, &s.permuted(&perm)).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn white_noise_scales_chsh_max(rho in state(2), v1 in 0.0..1.0f64, v2 in 0.0..1.0f64) {
        let (lo, hi) = if v1 <= v2 { (v1, v2) } else { (v2, v1) };
        let s = |v| chsh_max_horodecki(&mix_white_noise(&rho, v).unwrap()).unwrap().s_value;
        prop_assert!(s(lo) <= s(hi) + 1e-12);
        prop_assert!((s(hi) - hi * s(1.0)).abs() < 1e-10);
    }
}

fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn parametric(family: StateFamily) -> bool {
    family.domain().is_some()
}

#[test]
fn families_are_valid_across_domains() {
    let families = [
        StateFamily::Mems(0.0),
        StateFamily::Mnms2(0.0),
        StateFamily::Mnms3(0.0),
        StateFamily::DiagMix(0.0),
        StateFamily::Planar2(0.0),
        StateFamily::GhzBitFlip(0.0),
    ];
    for family in families {
        assert!(parametric(family));
        let (lo, hi) = family.domain().unwrap();
        for x in grid(lo, hi, 41) {
            let rho = make_state(family.with_parameter(x)).unwrap();
            let report = validate(rho.matrix());
            assert!(report.passed, "{} at {x}: {report:?}", family.tag());
        }
    }
    for family in [StateFamily::BellPhiPlus, StateFamily::BellPsiPlus, StateFamily::Ghz] {
        assert!(validate(make_state(family).unwrap().matrix()).passed);
    }
}

#[test]
fn family_points_lie_on_their_curves() {
    let families = [
        StateFamily::Mems(0.0),
        StateFamily::Mnms2(0.0),
        StateFamily::Planar2(0.0),
        StateFamily::Mnms3(0.0),
        StateFamily::GhzBitFlip(0.0),
    ];
    for family in families {
        let (lo, hi) = family.domain().unwrap();
        for x in grid(lo, hi, 50) {
            let member = family.with_parameter(x);
            let curve = curve_for(member).unwrap();
            let p = family_point(member).unwrap();
            let want = curve_value(curve, p.e_l).unwrap();
            assert!((p.s - want).abs() < 1e-9, "{member}: S={} curve {want} at E_L={}", p.s, p.e_l);
        }
    }
}

#[test]
fn chsh_win_probability_curves() {
    let spec = GameSpec::local(2).unwrap();
    for g in grid(0.0, 1.0, 50) {
        let rho = make_state(StateFamily::Mnms2(g)).unwrap();
        let best = chsh_max_horodecki(&rho).unwrap();
        let pr = quantum_win_exact(&rho, &best.settings, &spec).unwrap().win_probability;
        assert!((pr - (2.0 + (1.0 + g * g).sqrt()) / 4.0).abs() < 1e-9);

        let mems = chsh_max_horodecki(&make_state(StateFamily::Mems(g)).unwrap()).unwrap().s_value;
        assert!(best.s_value >= mems - 1e-12);
        if g > 0.0 && g < 1.0 {
            assert!(best.s_value > mems);
        }
    }
}
