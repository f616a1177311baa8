use std::f64::consts::SQRT_2;

use nonlocal::frontier::sample_indexed;
use nonlocal::games::{simulate_rounds, GameSpec};
use nonlocal::nonlocality::{
    chsh_max_horodecki, maximize, mnms3_closed_form_settings, expectation, MaximizeOptions, SettingMode,
};
use nonlocal::states::{make_state, StateFamily};

#[test]
fn hilbert_schmidt_mean_purity() {
    // (d + k) / (d k + 1) for d = k = 4
    let n = 10_000;
    let mean: f64 = (0..n).map(|i| sample_indexed(2, 4, 2024, i).unwrap().purity()).sum::<f64>() / n as f64;
    let want = 8.0 / 17.0;
    assert!((mean - want).abs() / want < 0.02, "mean purity {mean}");
}

#[test]
fn rank_one_samples_are_pure() {
    for i in 0..20 {
        let rho = sample_indexed(3, 1, 5, i).unwrap();
        assert!((rho.purity() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn planar_settings_suffice_for_mnms3() {
    let opts = MaximizeOptions { starts: 16, seed: 3, ..Default::default() };
    for f in [0.0, 0.02, 1.0 / 32.0, 0.05, 1.0 / 16.0, 0.09, 0.125] {
        let rho = make_state(StateFamily::Mnms3(f)).unwrap();
        let closed = expectation(&rho, &mnms3_closed_form_settings(f).unwrap()).unwrap();
        let planar = maximize(&rho, SettingMode::Planar, &opts).unwrap().s_value;
        let bloch = maximize(&rho, SettingMode::Bloch, &opts).unwrap().s_value;
        assert!(bloch <= planar + 1e-6, "f={f}: bloch {bloch} planar {planar}");
        assert!((planar - closed).abs() < 1e-6, "f={f}: planar {planar} closed {closed}");
    }
}

#[test]
fn simulation_converges_on_ghz() {
    let ghz = make_state(StateFamily::Ghz).unwrap();
    let settings = maximize(&ghz, SettingMode::Planar, &MaximizeOptions::default()).unwrap().settings;
    let want = (2.0 + SQRT_2) / 4.0;
    let sigma = (want * (1.0 - want) / 200_000.0).sqrt();
    for seed in 0..3 {
        let r = simulate_rounds(&ghz, &settings, &GameSpec::local(3).unwrap(), 200_000, seed).unwrap();
        assert!((r.win_probability - want).abs() < 5.0 * sigma, "seed {seed}: {}", r.win_probability);
    }
}

#[test]
fn simulation_win_count_is_seed_determined() {
    let bell = make_state(StateFamily::BellPhiPlus).unwrap();
    let settings = chsh_max_horodecki(&bell).unwrap().settings;
    let spec = GameSpec::local(2).unwrap();
    let a = simulate_rounds(&bell, &settings, &spec, 50_000, 77).unwrap();
    let b = simulate_rounds(&bell, &settings, &spec, 50_000, 77).unwrap();
    let c = simulate_rounds(&bell, &settings, &spec, 50_000, 78).unwrap();
    assert_eq!(a.wins, b.wins);
    assert_ne!(a.wins, c.wins);
}
