//! Acceptance checks. Each test prints one `PASS`/`FAIL criterion N` line and
//! asserts on the same condition.

use std::f64::consts::PI;
use std::sync::OnceLock;

use dualloop::experiments::{run, ScenarioConfig, ScenarioName, ScenarioResult};
use dualloop::geometry::{discretize_with, UM};
use dualloop::magnetostatics::{segment_sum, MU0};
use dualloop::spin::{bloch_evolve, equivalent_detuning, shot_population, DriveTone, Interval};
use dualloop::{LoopSpec, Point3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(id: &str, pass: bool, detail: String) {
    println!("{} criterion {id}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {id}: {detail}");
}

fn scenario(name: ScenarioName) -> ScenarioResult {
    run(&ScenarioConfig::for_scenario(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn line_scan() -> &'static ScenarioResult {
    static R: OnceLock<ScenarioResult> = OnceLock::new();
    R.get_or_init(|| scenario(ScenarioName::Fig1dLineScan))
}

fn rabi_suite() -> &'static ScenarioResult {
    static R: OnceLock<ScenarioResult> = OnceLock::new();
    R.get_or_init(|| scenario(ScenarioName::Fig4RabiSuite))
}

fn m(r: &ScenarioResult, key: &str) -> f64 {
    r.metric(key).unwrap_or_else(|| panic!("{} lacks {key}", r.scenario))
}

#[test]
fn criterion_01_single_loop_residual() {
    let db = m(line_scan(), "single_db_at_target");
    verdict(
        "1",
        (db + 60.0).abs() <= 3.0,
        format!("single-loop |B|² at 60 µm = {db:.2} dB (want -60 ± 3)"),
    );
}

#[test]
fn criterion_02_dual_loop_null() {
    let db = m(line_scan(), "dual_z_db_at_target");
    let total = m(line_scan(), "dual_total_db_at_target");
    verdict(
        "2",
        db <= -120.0,
        format!("dual-loop |Bz|² at target = {db:.1} dB (want <= -120; total |B|² {total:.1} dB)"),
    );
}

#[test]
fn criterion_03a_single_loop_exponent() {
    let k = m(line_scan(), "single_exponent");
    verdict("3a", (k + 6.0).abs() <= 1.0, format!("single-loop |B|² exponent = {k:.3} (want -6 ± 1)"));
}

#[test]
fn criterion_03b_dual_loop_exponent() {
    let k = m(line_scan(), "dual_exponent_beyond_null");
    let before = m(line_scan(), "dual_exponent_before_null");
    verdict(
        "3b",
        (k + 15.0).abs() <= 2.0,
        format!(
            "dual-loop |B|² exponent beyond the null = {k:.3} (want -15 ± 2; approach to the null gives {before:.2})"
        ),
    );
}

#[test]
fn criterion_04_centre_power_ratio() {
    let r = m(line_scan(), "centre_power_ratio");
    let unit = m(line_scan(), "unit_centre_power_ratio");
    verdict(
        "4",
        (r - 6.3).abs() <= 0.5,
        format!("inner:outer |B|² at the local centre = {r:.2} (want 6.3 ± 0.5; per unit current {unit:.2})"),
    );
}

#[test]
fn criterion_05_second_third_neighbour_attenuation() {
    let a2 = m(line_scan(), "attenuation_db_nn2");
    let a3 = m(line_scan(), "attenuation_db_nn3");
    verdict(
        "5",
        a2 >= 15.0 && a3 >= 15.0,
        format!("extra attenuation at √3·s = {a2:.1} dB, at 2s = {a3:.1} dB (want >= 20 - 5)"),
    );
}

#[test]
fn criterion_06_on_axis_amplitude_decay() {
    let k = m(line_scan(), "on_axis_amplitude_exponent");
    verdict("6", (k + 3.0).abs() <= 0.2, format!("on-axis |B| exponent = {k:.3} (want -3 ± 0.2)"));
}

#[test]
fn criterion_07_rabi_power_scaling() {
    let r = scenario(ScenarioName::Fig3kPowerScaling);
    let k = m(&r, "slope");
    verdict("7", (k - 0.5).abs() <= 0.02, format!("log-log slope f_Rabi vs power = {k:.4} (want 0.50 ± 0.02)"));
}

#[test]
fn criterion_08_odmr_interference() {
    let r = scenario(ScenarioName::Fig4cPhaseContrast);
    let min = m(&r, "min_phase_deg");
    let norm = m(&r, "normalized_min");
    let r2 = m(&r, "r_squared");
    verdict(
        "8",
        (min - 45.0).abs() <= 3.0 && norm <= 0.12 && r2 >= 0.99,
        format!("contrast minimum at {min:.2}° (want 45 ± 3), normalized {norm:.3} (want <= 0.12), R² {r2:.4} (want >= 0.99)"),
    );
}

#[test]
fn criterion_09_rabi_suite() {
    let r = rabi_suite();
    let noisy = m(r, "t_noisy_ns");
    let prot = m(r, "t_protected_ns");
    let inph = m(r, "t_in_phase_ns");
    let calibrated = (noisy - 249.0).abs() <= 0.05 * 249.0;
    let a = (600.0..=810.0).contains(&prot);
    let b = inph < 249.0 && (inph - 162.0).abs() <= 0.4 * 162.0;
    let c = inph < noisy && noisy < prot;
    verdict(
        "9",
        calibrated && a && b && c,
        format!(
            "T noisy {noisy:.1} ns (249 ± 5%: {calibrated}), protected {prot:.1} ns (600..810: {a}), \
             in-phase {inph:.1} ns (<249, 162 ± 40%: {b}), ordering {c}"
        ),
    );
}

#[test]
fn criterion_10_equivalent_detuning() {
    let d = equivalent_detuning(7e6, 0.03).unwrap();
    verdict(
        "10",
        (d - 40e6).abs() <= 2e6,
        format!("equivalent detuning(7 MHz, 0.03) = {:.3} MHz (want 40 ± 2)", d / 1e6),
    );
}

#[test]
fn criterion_11_weak_noise_penalty() {
    let r = scenario(ScenarioName::CoherencePenaltyCurve);
    let p60 = m(&r, "penalty_noise_-60db") * 100.0;
    let e60 = m(&r, "penalty_noise_-60db_err") * 100.0;
    let p20 = m(&r, "penalty_imbalance_-20db") * 100.0;
    let e20 = m(&r, "penalty_imbalance_-20db_err") * 100.0;
    verdict(
        "11",
        p60 <= 1.0 && e60 < 0.5 && (p20 - 2.0).abs() <= 1.0,
        format!(
            "penalty at -60 dB = {p60:.3} ± {e60:.3} % (want <= 1, err < 0.5); \
             at -20 dB imbalance = {p20:.2} ± {e20:.2} % (want 2 ± 1)"
        ),
    );
}

#[test]
fn criterion_12_oracle_agreement() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst_spin = 0.0f64;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=4);
        let tones: Vec<DriveTone> = (0..n)
            .map(|_| DriveTone::resonant(rng.gen_range(0.1e6..10e6), rng.gen_range(-PI..PI)))
            .collect();
        let tau = rng.gen_range(0.0..2e-6);
        let direct = shot_population(tau, &tones).unwrap();
        let evolved = bloch_evolve(&[Interval::new(tau, tones)]).excited;
        worst_spin = worst_spin.max((direct - evolved).abs());
    }

    let radius = 7.5 * UM;
    let ring = LoopSpec::circle_um(15.0, Point3::ORIGIN).unwrap();
    let segments = discretize_with(&ring, 1024);
    let mut worst_field = 0.0f64;
    for z_um in [0.5, 1.0, 5.0, 20.0, 100.0] {
        let z = z_um * UM;
        let exact = MU0 * radius * radius / (2.0 * (radius * radius + z * z).powf(1.5));
        let bz = segment_sum(&segments, Point3::from_um(0.0, 0.0, z_um)).b[2].re;
        worst_field = worst_field.max(((bz - exact) / exact).abs());
    }
    verdict(
        "12",
        worst_spin <= 1e-9 && worst_field <= 1e-4,
        format!(
            "Bloch vs phasor worst |ΔP| = {worst_spin:.2e} (want <= 1e-9); \
             1024-segment on-axis worst relative error = {worst_field:.2e} (want <= 1e-4)"
        ),
    );
}

#[test]
fn criterion_13_determinism() {
    let cfg = ScenarioConfig::for_scenario(ScenarioName::Fig4RabiSuite);
    let in_pool = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run(&cfg).unwrap())
    };
    let one = in_pool(1);
    let four = in_pool(4);
    let same = one.tables == four.tables && one.tables == rabi_suite().tables;
    verdict(
        "13",
        same,
        format!("fig4_rabi_suite CSVs byte-identical across reruns and 1 vs 4 workers: {same}"),
    );
}
