use std::f64::consts::{PI, TAU};

use dualloop::magnetostatics::linspace;
use dualloop::rng::{stream, Purpose};
use dualloop::spin::*;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Normal};

fn drive() -> DriveTone {
    DriveTone::resonant(7e6, 0.0)
}

fn quick(shots: usize, seed: u64) -> SpinParams {
    SpinParams {
        shots,
        seed,
        ..SpinParams::default()
    }
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
    let mut r = vec![0.0; v.len()];
    for (rank, &i) in idx.iter().enumerate() {
        r[i] = rank as f64;
    }
    r
}

fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b).powi(2)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

#[test]
fn bloch_matches_phasor_sum_on_random_tone_sets() {
    let mut rng = stream(7, Purpose::Scenario, 0);
    for _ in 0..200 {
        let n = rng.gen_range(1..5);
        let tones: Vec<DriveTone> = (0..n)
            .map(|_| DriveTone::resonant(rng.gen_range(0.0..10e6), rng.gen_range(0.0..TAU)))
            .collect();
        let tau = rng.gen_range(0.0..1e-6);
        let a = bloch_evolve(&[Interval::new(tau, tones.clone())]).excited;
        let b = shot_population(tau, &tones).unwrap();
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}

#[test]
fn detuned_drive_follows_generalised_rabi_formula() {
    let om = 5e6;
    for delta in [0.0, 2e6, 5e6, 12e6] {
        let tone = DriveTone {
            rabi_hz: om,
            phase: 0.3,
            detuning_hz: delta,
        };
        let w = (om * om + delta * delta).sqrt();
        for tau in linspace(0.0, 400e-9, 41) {
            let exact = om * om / (w * w) * (PI * w * tau).sin().powi(2);
            let got = bloch_evolve(&[Interval::new(tau, vec![tone])]).excited;
            assert!((got - exact).abs() < 1e-9, "delta {delta} tau {tau}: {got} vs {exact}");
        }
    }
}

#[test]
fn equivalent_detuning_reproduces_suppression() {
    let om = 7e6;
    for s in [0.03, 0.1, 0.5] {
        let delta = equivalent_detuning(om, s).unwrap();
        let tone = DriveTone {
            rabi_hz: om,
            phase: 0.0,
            detuning_hz: delta,
        };
        // first maximum of the generalised Rabi oscillation
        let w = (om * om + delta * delta).sqrt();
        let tau = 0.5 / w;
        let peak = bloch_evolve(&[Interval::new(tau, vec![tone])]).excited;
        assert!((peak - s).abs() < 1e-9, "s {s}: {peak}");
    }
}

#[test]
fn piecewise_schedule_composes() {
    let t = drive();
    let half = 1.0 / (4.0 * t.rabi_hz);
    let split = bloch_evolve(&[Interval::new(half, vec![t]), Interval::new(half, vec![t])]);
    assert!((split.excited - 1.0).abs() < 1e-12);
    let back = DriveTone { phase: PI, ..t };
    let undo = bloch_evolve(&[Interval::new(half, vec![t]), Interval::new(half, vec![back])]);
    assert!(undo.excited < 1e-12);
}

#[test]
fn synthetic_fit_recovers_generator() {
    let taus = default_tau_grid();
    for (f, t) in [(7e6, 761e-9), (5e6, 300e-9), (10e6, 2e-6)] {
        let y: Vec<f64> = taus
            .iter()
            .map(|&x| 0.4 * (TAU * f * x + 2.0).cos() * (-x / t).exp() + 0.45)
            .collect();
        let fit = fit_decaying_sinusoid(&taus, &y).unwrap();
        assert!((fit.frequency_hz / f - 1.0).abs() < 1e-3);
        assert!((fit.t_rabi / t - 1.0).abs() < 1e-3);
        assert!((fit.amplitude / 0.4 - 1.0).abs() < 1e-3);
        assert!((fit.offset / 0.45 - 1.0).abs() < 1e-3);
        assert!((fit.phase - 2.0).abs() < 1e-3);
    }
}

#[test]
fn noisy_synthetic_fit_within_ten_percent() {
    let taus = default_tau_grid();
    let normal = Normal::new(0.0, 0.05).unwrap();
    let mut ts = Vec::new();
    for k in 0..100 {
        let mut rng = stream(11, Purpose::Scenario, k);
        let y: Vec<f64> = taus
            .iter()
            .map(|&x| -0.5 * (TAU * 7e6 * x).cos() * (-x / 761e-9).exp() + 0.5 + normal.sample(&mut rng))
            .collect();
        ts.push(fit_decaying_sinusoid(&taus, &y).unwrap().t_rabi);
    }
    let mean = ts.iter().sum::<f64>() / ts.len() as f64;
    assert!((mean / 761e-9 - 1.0).abs() < 0.10, "mean {mean}");
    let inside = ts.iter().filter(|t| (*t / 761e-9 - 1.0).abs() < 0.10).count();
    assert!(inside >= 90, "{inside}/100 within 10%");
}

#[test]
fn fit_errors_on_degenerate_input() {
    let taus = default_tau_grid();
    assert!(fit_decaying_sinusoid(&taus, &vec![0.3; taus.len()]).is_err());
    assert!(fit_decaying_sinusoid(&taus[..10], &vec![0.3; 10]).is_err());
}

#[test]
fn clean_trace_is_self_consistent() {
    let tr = rabi_trace(&quick(200, 3), &drive(), &NoiseModel::NONE, &default_tau_grid()).unwrap();
    assert!((tr.fit.t_rabi / 761e-9 - 1.0).abs() < 0.01);
    assert!((tr.fit.frequency_hz / 7e6 - 1.0).abs() < 1e-3);
    assert!(tr.population.iter().all(|p| (0.0..=1.0).contains(p)));
}

#[test]
fn decay_time_decreases_with_noise_amplitude() {
    let taus = default_tau_grid();
    let amps = linspace(0.2e6, 1.2e6, 8);
    for seed in 1..=10 {
        let p = quick(1000, seed);
        let ts: Vec<f64> = amps
            .iter()
            .map(|&a| rabi_trace(&p, &drive(), &NoiseModel::random(a), &taus).unwrap().fit.t_rabi)
            .collect();
        let rho = spearman(&amps, &ts);
        assert!(rho < -0.9, "seed {seed}: rho {rho}");
    }
}

#[test]
fn decay_time_non_increasing_in_suppression() {
    let taus = default_tau_grid();
    let p = quick(2000, 5);
    let ts: Vec<f64> = [0.0, 0.01, 0.03, 0.1, 0.3, 1.0]
        .iter()
        .map(|&s| {
            let n = NoiseModel::random(0.63e6).with_suppression(s);
            rabi_trace(&p, &drive(), &n, &taus).unwrap().fit.t_rabi
        })
        .collect();
    for w in ts.windows(2) {
        assert!(w[1] <= w[0] * 1.005, "{ts:?}");
    }
}

#[test]
fn in_phase_aggressors_decohere_faster() {
    let taus = default_tau_grid();
    let p = quick(2000, 9);
    let one = rabi_trace(&p, &drive(), &NoiseModel::random(0.63e6), &taus).unwrap();
    let two = rabi_trace(&p, &drive(), &NoiseModel::random(1.26e6), &taus).unwrap();
    assert!(two.fit.t_rabi < one.fit.t_rabi);
}

#[test]
fn calibration_hits_target() {
    let taus = default_tau_grid();
    let p = quick(2000, 2);
    let om = calibrate_noise(&p, &drive(), 400e-9, &taus).unwrap();
    let t = rabi_trace(&p, &drive(), &NoiseModel::random(om), &taus).unwrap().fit.t_rabi;
    assert!((t / 400e-9 - 1.0).abs() < 0.02, "{t}");
    assert!(matches!(
        calibrate_noise(&p, &drive(), 800e-9, &taus),
        Err(SpinError::InfeasibleTarget { .. })
    ));
}

#[test]
fn penalty_vanishes_without_noise() {
    let p = quick(500, 4);
    let c = coherence_penalty(&p, &drive(), f64::NEG_INFINITY, &default_tau_grid()).unwrap();
    assert!(c.reduction.abs() < 1e-9);
}

#[test]
fn readout_noise_stays_normalised() {
    let p = SpinParams {
        photons_per_shot: Some(2e4),
        ..quick(500, 8)
    };
    let tr = rabi_trace(&p, &drive(), &NoiseModel::NONE, &default_tau_grid()).unwrap();
    assert!(tr.population.iter().all(|v| (-1.2..=1.2).contains(v)));
    assert!((tr.fit.t_rabi / 761e-9 - 1.0).abs() < 0.15, "{}", tr.fit.t_rabi);
}

#[test]
fn trace_independent_of_thread_count() {
    let p = quick(1000, 12);
    let n = NoiseModel::random(0.6e6);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| rabi_trace(&p, &drive(), &n, &default_tau_grid()).unwrap())
    };
    let (a, b) = (run(1), run(4));
    let (mut ca, mut cb) = (Vec::new(), Vec::new());
    a.write_csv(&mut ca).unwrap();
    b.write_csv(&mut cb).unwrap();
    assert_eq!(ca, cb);
    assert!(String::from_utf8(ca).unwrap().starts_with("tau_ns,population,fit_value\n"));
}

#[test]
fn odmr_contrast_linear_in_low_power() {
    let p = SpinParams::default();
    let freqs = default_freq_grid(&p);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for k in 1..=10 {
        let power = 0.2 * k as f64 / 10.0;
        let a = p.saturation_rabi_hz * power.sqrt();
        let s = odmr_spectrum(&p, &[DriveTone::resonant(a, 0.0)], &freqs, Some(1e6), k).unwrap();
        xs.push(power);
        ys.push(s.fit.contrast);
    }
    // zero-intercept linear model
    let slope = xs.iter().zip(&ys).map(|(x, y)| x * y).sum::<f64>() / xs.iter().map(|x| x * x).sum::<f64>();
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let sse: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - slope * x).powi(2)).sum();
    let sst: f64 = ys.iter().map(|y| (y - mean).powi(2)).sum();
    let r2 = 1.0 - sse / sst;
    assert!(r2 >= 0.999, "R² {r2}");
    assert!((slope / p.contrast_max - 1.0).abs() < 0.02);
}

#[test]
fn odmr_without_drive_is_consistent_with_zero() {
    let p = SpinParams::default();
    let s = odmr_spectrum(&p, &[], &default_freq_grid(&p), Some(1e5), 3).unwrap();
    assert!(s.fit.contrast.abs() <= 3.0 * s.fit.contrast_err, "{:?}", s.fit);
    assert!(s.fit.contrast_err > 0.0);
}

#[test]
fn odmr_destructive_pair_within_one_sigma_of_zero() {
    let p = SpinParams::default();
    let tones = [DriveTone::resonant(4e6, 0.0), DriveTone::resonant(4e6, PI)];
    let s = odmr_spectrum(&p, &tones, &default_freq_grid(&p), Some(1e5), 1).unwrap();
    assert!(s.fit.contrast <= s.fit.contrast_err, "{:?}", s.fit);
}

#[test]
fn phase_contrast_flat_without_outer_tone() {
    let p = SpinParams::default();
    let phases = linspace(0.0, TAU, 25);
    let pc = contrast_vs_phase(
        &p,
        &DriveTone::resonant(4e6, 0.0),
        &DriveTone::resonant(0.0, 0.0),
        0.0,
        &phases[..24],
        Some(1e5),
    )
    .unwrap();
    let err = pc.contrast_errs.iter().sum::<f64>() / pc.contrast_errs.len() as f64;
    assert!(pc.fit.amplitude < 2.0 * err, "{} vs {err}", pc.fit.amplitude);
}

#[test]
fn phase_contrast_minimum_follows_offset() {
    let p = SpinParams::default();
    let phases = linspace(0.0, TAU, 37);
    let t = DriveTone::resonant(4e6, 0.0);
    let pc = contrast_vs_phase(&p, &t, &t, 0.75 * PI, &phases[..36], Some(1e5)).unwrap();
    assert!((pc.min_phase.to_degrees() - 45.0).abs() < 3.0, "{}", pc.min_phase.to_degrees());
    assert!(pc.normalized_min <= 0.12);
    assert!(pc.fit.r_squared >= 0.99);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn global_phase_invariance(
        amps in prop::collection::vec(0.0f64..10e6, 1..4),
        phases in prop::collection::vec(0.0f64..TAU, 4),
        shift in 0.0f64..TAU,
        tau in 0.0f64..1e-6,
    ) {
        let tones: Vec<DriveTone> = amps.iter().zip(&phases).map(|(a, p)| DriveTone::resonant(*a, *p)).collect();
        let shifted: Vec<DriveTone> = tones.iter().map(|t| DriveTone { phase: t.phase + shift, ..*t }).collect();
        let a = shot_population(tau, &tones).unwrap();
        let b = shot_population(tau, &shifted).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn bloch_populations_conserve_probability(
        amp in 0.0f64..10e6,
        det in -20e6f64..20e6,
        tau in 0.0f64..1e-6,
    ) {
        let t = DriveTone { rabi_hz: amp, phase: 0.4, detuning_hz: det };
        let pop = bloch_evolve(&[Interval::new(tau, vec![t])]);
        prop_assert!((pop.ground + pop.excited - 1.0).abs() < 1e-12);
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&pop.excited));
    }
}
