mod common;

use std::f64::consts::PI;

use common::circular_loop_field;
use dualloop::cancellation::{
    extinction_ratio, imbalance_for_extinction, residual_at, solve, sweep_phase, sweep_ratio,
    ScanAxis,
};
use dualloop::geometry::{LoopSpec, Point3, UM};
use dualloop::magnetostatics::{field_at, linspace, power_db, Phasor, PowerMetric};
use proptest::prelude::*;

fn pair() -> (LoopSpec, LoopSpec) {
    (
        LoopSpec::circle_um(15.0, Point3::ORIGIN).unwrap(),
        LoopSpec::circle_um(38.0, Point3::ORIGIN).unwrap(),
    )
}

fn target() -> Point3 {
    Point3::from_um(60.0, 0.0, 1.0)
}

#[test]
fn solved_ratio_matches_elliptic_oracle() {
    let (a, b) = pair();
    let sol = solve(&a, &b, target()).unwrap();
    let bi = circular_loop_field(7.5 * UM, 60.0 * UM, 0.0, 1.0 * UM)[2];
    let bo = circular_loop_field(19.0 * UM, 60.0 * UM, 0.0, 1.0 * UM)[2];
    assert!(((sol.ratio - bi / bo) / sol.ratio).abs() < 1e-6, "{}", sol.ratio);
    assert!((sol.phase_offset - PI).abs() < 1e-12);
    assert!(sol.residual_power_db <= -120.0, "{}", sol.residual_power_db);
}

#[test]
fn residual_recomputed_through_field_at_agrees() {
    let (a, b) = pair();
    let sol = solve(&a, &b, target()).unwrap();
    let r = residual_at(&sol, &a, &b, sol.target, PowerMetric::Z).unwrap();
    if sol.residual_power_db.is_finite() {
        assert!((r - sol.residual_power_db).abs() < 0.1);
    } else {
        assert!(r <= -120.0);
    }
}

#[test]
fn far_target_ratio_tends_to_dipole_moment_ratio() {
    // equal dipole moments I·πd²/4 cancel in the far field
    let (a, b) = pair();
    let sol = solve(&a, &b, Point3::from_um(5000.0, 0.0, 1.0)).unwrap();
    let oracle = (15.0f64 / 38.0).powi(2);
    assert!(((sol.ratio - oracle) / oracle).abs() < 1e-3, "{} vs {oracle}", sol.ratio);
}

#[test]
fn centre_power_ratios() {
    let (a, b) = pair();
    let sol = solve(&a, &b, target()).unwrap();
    // per unit current the centre field scales as 1/d, so power as (d_out/d_in)² at z = 0
    let unit = (circular_loop_field(7.5 * UM, 0.0, 0.0, UM)[2]
        / circular_loop_field(19.0 * UM, 0.0, 0.0, UM)[2])
        .powi(2);
    assert!((sol.unit_centre_power_ratio - unit).abs() / unit < 1e-6);
    assert!((sol.centre_power_ratio - unit / sol.ratio.powi(2)).abs() / sol.centre_power_ratio < 1e-6);
    assert!(sol.local_power_factor < 1.0 && sol.local_power_factor > 0.85);
}

#[test]
fn second_and_third_neighbours_are_attenuated() {
    let (a, b) = pair();
    let sol = solve(&a, &b, target()).unwrap();
    let single_ref = field_at(&[a], sol.local).unwrap().power_total();
    for x in [60.0 * 3f64.sqrt(), 120.0] {
        let p = Point3::from_um(x, 0.0, 1.0);
        let dual = residual_at(&sol, &a, &b, p, PowerMetric::Total).unwrap();
        let single = power_db(field_at(&[a], p).unwrap().power_total(), single_ref).unwrap();
        assert!(single - dual >= 20.0, "x={x}: {single} vs {dual}");
    }
}

#[test]
fn ratio_sweep_moves_null_monotonically() {
    let (a, b) = pair();
    let sol = solve(&a, &b, target()).unwrap();
    let axis = ScanAxis::along_x(25.0, 200.0, 1.0);
    let factors = [0.0, 0.95, 0.98, 1.0, 1.02, 1.05];
    let nulls = sweep_ratio(&a, &b, &sol, &factors, &axis).unwrap();
    assert!(nulls[0].boundary, "outer off: no interior null");
    let at_one = nulls[3];
    assert!(!at_one.boundary);
    assert!((at_one.position_um - 60.0).abs() < 1e-3, "{}", at_one.position_um);
    assert!(at_one.power_db < -120.0);
    let interior: Vec<f64> = nulls[1..].iter().map(|n| n.position_um).collect();
    for w in interior.windows(2) {
        assert!(w[1] > w[0], "{interior:?}");
    }
}

#[test]
fn solved_null_is_a_local_minimum() {
    let (a, b) = pair();
    let sol = solve(&a, &b, target()).unwrap();
    let pair = sol.apply(&a, &b);
    let h = 0.05;
    let pz = |x: f64| field_at(&pair, Point3::from_um(x, 0.0, 1.0)).unwrap().power_z();
    let second = pz(60.0 + h) - 2.0 * pz(60.0) + pz(60.0 - h);
    assert!(second > 0.0);
    assert!(pz(60.0) < pz(60.0 + h) && pz(60.0) < pz(60.0 - h));
}

#[test]
fn phase_sweep_minimum_at_pi() {
    let (a, b) = pair();
    let sol = solve(&a, &b, target()).unwrap();
    let phases = linspace(0.0, 2.0 * PI, 73);
    let sweep = sweep_phase(&a, &b, sol.ratio, &phases, sol.local, sol.target).unwrap();
    let imin = (0..phases.len())
        .min_by(|&i, &j| sweep.remote_power[i].partial_cmp(&sweep.remote_power[j]).unwrap())
        .unwrap();
    assert!((phases[imin] - PI).abs() < 1e-9);
    let imax = (0..phases.len())
        .max_by(|&i, &j| sweep.remote_power[i].partial_cmp(&sweep.remote_power[j]).unwrap())
        .unwrap();
    assert!(phases[imax].abs() < 1e-9 || (phases[imax] - 2.0 * PI).abs() < 1e-9);
    assert!(sweep.remote_fit.relative_residual < 0.01);
    assert!((sweep.remote_fit.phase_of_min() - PI).abs() < 1e-6);
    // periodic and symmetric about the minimum
    assert!((sweep.remote_power[0] - sweep.remote_power[72]).abs() <= 1e-12 * sweep.remote_power[0]);
    for k in 1..36 {
        let (l, r) = (sweep.remote_power[36 - k], sweep.remote_power[36 + k]);
        assert!((l - r).abs() <= 1e-9 * l.max(r));
    }
}

#[test]
fn local_power_follows_phasor_sum() {
    let (a, b) = pair();
    let sol = solve(&a, &b, target()).unwrap();
    let bi = field_at(&[a], sol.local).unwrap().bz().re;
    let bo = field_at(&[b.with_drive(Phasor::new(sol.ratio, 0.0).unwrap())], sol.local)
        .unwrap()
        .bz()
        .re;
    let r = bo / bi;
    let phases = linspace(0.0, 2.0 * PI, 25);
    let sweep = sweep_phase(&a, &b, sol.ratio, &phases, sol.local, sol.target).unwrap();
    for (phi, p) in phases.iter().zip(&sweep.local_power) {
        let oracle = bi * bi * (1.0 + r * r + 2.0 * r * phi.cos());
        assert!((p - oracle).abs() <= 1e-9 * oracle);
    }
    let lo = sweep.local_power.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = sweep.local_power.iter().cloned().fold(0.0, f64::max);
    assert!((lo / (bi * bi) - (1.0 - r).powi(2)).abs() < 1e-9);
    assert!((hi / (bi * bi) - (1.0 + r).powi(2)).abs() < 1e-9);
}

#[test]
fn extinction_matches_phasor_arithmetic() {
    let (a, b) = pair();
    let sol = solve(&a, &b, target()).unwrap();
    for db in [-40.0, -30.0, -20.0, -15.0, -10.0] {
        let eps = 10f64.powf(db / 20.0);
        // |1 - (1 + eps)|² relative to the inner-only field
        let oracle = eps * eps;
        let got = extinction_ratio(&sol, &a, &b, sol.target, db).unwrap();
        assert!((got - oracle).abs() < 1e-6 * oracle, "{db}: {got} vs {oracle}");
    }
    let db = imbalance_for_extinction(0.03);
    assert!((db + 15.2288).abs() < 1e-3);
    let got = extinction_ratio(&sol, &a, &b, sol.target, db).unwrap();
    assert!((got - 0.03).abs() < 1e-7);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn scale_invariance(k in 0.01f64..100.0, phase in 0.0f64..6.28) {
        let (a, b) = pair();
        let base = solve(&a, &b, target()).unwrap();
        let a2 = a.with_drive(Phasor::new(k, phase).unwrap());
        let b2 = b.with_drive(Phasor::new(k * 3.0, 0.0).unwrap());
        let s = solve(&a2, &b2, target()).unwrap();
        prop_assert!((s.ratio - base.ratio).abs() < 1e-9 * base.ratio);
        prop_assert!((s.phase_offset - base.phase_offset).abs() < 1e-12);
        prop_assert!(s.residual_power_db <= -120.0);
        let probe = Point3::from_um(104.0, 0.0, 1.0);
        let r1 = residual_at(&base, &a, &b, probe, PowerMetric::Total).unwrap();
        let r2 = residual_at(&s, &a2, &b2, probe, PowerMetric::Total).unwrap();
        prop_assert!((r1 - r2).abs() < 1e-6);
    }
}
