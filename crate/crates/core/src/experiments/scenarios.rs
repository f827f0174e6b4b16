use std::collections::BTreeMap;
use std::f64::consts::TAU;

use super::config::{GeometryConfig, ScenarioConfig, ScenarioName};
use super::{ExperimentError, Metric, NamedTable, StageExt};
use crate::cancellation::{
    extinction_ratio, null_table, residual_at, solve, sweep_phase, sweep_ratio, CancellationSolution,
    ScanAxis,
};
use crate::geometry::{GeometryError, LoopSpec, Point3};
use crate::magnetostatics::{
    amplitude_decay_exponent, field_at, fit_log_log, fit_power_law, line_scan, linspace, power_db,
    PowerMetric,
};
use crate::spin::{
    bloch_evolve, calibrate_noise, coherence_penalty, contrast_vs_phase, equivalent_detuning,
    penalty_for, rabi_frequency, rabi_trace, DriveTone, Interval, NoiseModel, RabiTrace,
};
use crate::table::Table;

type Output = (Vec<NamedTable>, BTreeMap<String, Metric>);

/// Concentric inner and outer loops at the origin, both with unit drive.
pub fn build_loops(g: &GeometryConfig) -> Result<(LoopSpec, LoopSpec), GeometryError> {
    let inner = LoopSpec::circle_um(g.inner_diameter_um, Point3::ORIGIN)?.with_segments(g.segments)?;
    let outer = LoopSpec::circle_um(g.outer_diameter_um, Point3::ORIGIN)?.with_segments(g.segments)?;
    Ok((inner, outer))
}

/// Nearest-neighbour site at the qubit height.
pub fn target_point(g: &GeometryConfig) -> Point3 {
    Point3::from_um(g.spacing_um, 0.0, g.z_um)
}

struct Summary(BTreeMap<String, Metric>);

impl Summary {
    fn new() -> Self {
        Summary(BTreeMap::new())
    }

    fn put(&mut self, key: impl Into<String>, v: impl Into<Metric>) {
        self.0.insert(key.into(), v.into());
    }
}

fn table(name: &str, csv: String) -> NamedTable {
    NamedTable {
        name: name.to_string(),
        csv,
    }
}

fn csv_of<F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>>(f: F) -> String {
    let mut buf = Vec::new();
    f(&mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv is utf-8")
}

/// dB label used in metric names, e.g. -60 → `-60`, -15.5 → `-15.5`.
fn db_label(v: f64) -> String {
    if v == v.trunc() {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

pub(super) fn dispatch(name: ScenarioName, c: &ScenarioConfig) -> Result<Output, ExperimentError> {
    match name {
        ScenarioName::Fig1dLineScan => line_scan_scenario(name, c),
        ScenarioName::Fig1gRatioSweep => ratio_sweep_scenario(name, c),
        ScenarioName::Fig1hPhaseSweep => phase_sweep_scenario(name, c),
        ScenarioName::Fig3kPowerScaling => power_scaling_scenario(name, c),
        ScenarioName::Fig4cPhaseContrast => phase_contrast_scenario(name, c),
        ScenarioName::Fig4RabiSuite => rabi_suite_scenario(name, c),
        ScenarioName::DetuningEquivalence => detuning_scenario(name, c),
        ScenarioName::CoherencePenaltyCurve => penalty_scenario(name, c),
    }
}

fn solved(
    name: ScenarioName,
    g: &GeometryConfig,
) -> Result<(LoopSpec, LoopSpec, CancellationSolution), ExperimentError> {
    let (inner, outer) = build_loops(g).at(name, "geometry")?;
    let sol = solve(&inner, &outer, target_point(g)).at(name, "solve")?;
    Ok((inner, outer, sol))
}

fn line_scan_scenario(name: ScenarioName, c: &ScenarioConfig) -> Result<Output, ExperimentError> {
    let g = c.geometry();
    let w = c.sweep();
    let s = g.spacing_um;
    let (inner, outer, sol) = solved(name, &g)?;
    let pair = sol.apply(&inner, &outer);
    let xs = linspace(
        w.x_from_um.unwrap_or(0.0),
        w.x_to_um.unwrap_or(200.0),
        w.x_points.unwrap_or(801),
    );
    let x_axis = Point3::from_m(1.0, 0.0, 0.0);
    let single = line_scan(&[inner], Point3::ORIGIN, x_axis, &xs, g.z_um).at(name, "single scan")?;
    let dual = line_scan(&pair, Point3::ORIGIN, x_axis, &xs, g.z_um).at(name, "dual scan")?;
    let single_local = field_at(&[inner], sol.local).at(name, "single scan")?.power_total();
    let single = single.with_reference(single_local);
    let dual = dual.with_reference(field_at(&pair, sol.local).at(name, "dual scan")?.power_total());

    let mut t = Table::new(&["x_um", "single_db", "dual_db", "dual_z_db", "attenuation_db"]);
    let sd = single.db(PowerMetric::Total).at(name, "single scan")?;
    let dd = dual.db(PowerMetric::Total).at(name, "dual scan")?;
    let dz = dual.db(PowerMetric::Z).at(name, "dual scan")?;
    for i in 0..xs.len() {
        t.push(vec![xs[i], sd[i], dd[i], dz[i], sd[i] - dd[i]]);
    }

    // exact probe points rather than the nearest grid sample
    let single_db_at = |x_um: f64| -> Result<f64, ExperimentError> {
        let p = field_at(&[inner], Point3::from_um(x_um, 0.0, g.z_um)).at(name, "probe")?;
        power_db(p.power_total(), single_local).at(name, "probe")
    };
    let dual_db_at = |x_um: f64| {
        residual_at(&sol, &inner, &outer, Point3::from_um(x_um, 0.0, g.z_um), PowerMetric::Total)
            .at(name, "probe")
    };
    let nn2 = 3f64.sqrt() * s;
    let nn3 = 2.0 * s;

    let mut m = Summary::new();
    m.put("ratio", sol.ratio);
    m.put("phase_offset_rad", sol.phase_offset);
    m.put("single_db_at_target", single_db_at(s)?);
    m.put("dual_z_db_at_target", sol.residual_power_db);
    m.put("dual_total_db_at_target", sol.residual_total_db);
    m.put("attenuation_db_nn2", single_db_at(nn2)? - dual_db_at(nn2)?);
    m.put("attenuation_db_nn3", single_db_at(nn3)? - dual_db_at(nn3)?);
    m.put("centre_power_ratio", sol.centre_power_ratio);
    m.put("unit_centre_power_ratio", sol.unit_centre_power_ratio);
    let far = (w.x_to_um.unwrap_or(200.0) * 0.4, w.x_to_um.unwrap_or(200.0));
    m.put(
        "single_exponent",
        fit_power_law(&single, far.0, far.1, PowerMetric::Total).at(name, "fit")?.exponent,
    );
    // beyond the null: second to third neighbour shell
    m.put(
        "dual_exponent_beyond_null",
        fit_power_law(&dual, nn2, nn3, PowerMetric::Total).at(name, "fit")?.exponent,
    );
    // approach to the null from inside the first shell
    m.put(
        "dual_exponent_before_null",
        fit_power_law(&dual, s * 5.0 / 12.0, s * 11.0 / 12.0, PowerMetric::Total)
            .at(name, "fit")?
            .exponent,
    );

    // on-axis amplitude decay of the single loop
    let zs = linspace(0.0, 200.0, 401);
    let axis = line_scan(&[inner], Point3::ORIGIN, Point3::from_m(0.0, 0.0, 1.0), &zs, 0.0)
        .at(name, "on-axis scan")?;
    m.put(
        "on_axis_amplitude_exponent",
        amplitude_decay_exponent(&axis, 80.0, 200.0).at(name, "fit")?.exponent,
    );
    let mut on_axis = Table::new(&["z_um", "b_abs_t"]);
    for (z, f) in zs.iter().zip(&axis.fields) {
        on_axis.push(vec![*z, f.magnitude()]);
    }
    Ok((
        vec![table("main", t.to_csv()), table("on_axis", on_axis.to_csv())],
        m.0,
    ))
}

fn ratio_sweep_scenario(name: ScenarioName, c: &ScenarioConfig) -> Result<Output, ExperimentError> {
    let g = c.geometry();
    let w = c.sweep();
    let (inner, outer, sol) = solved(name, &g)?;
    let factors = w.ratio_factors.unwrap_or_else(|| linspace(0.9, 1.1, 21));
    let mut axis = ScanAxis::along_x(w.x_from_um.unwrap_or(25.0), w.x_to_um.unwrap_or(200.0), g.z_um);
    if let Some(n) = w.x_points {
        axis.samples = n;
    }
    let nulls = sweep_ratio(&inner, &outer, &sol, &factors, &axis).at(name, "ratio sweep")?;
    let mut m = Summary::new();
    m.put("ratio", sol.ratio);
    if let Some(unity) = nulls.iter().find(|p| p.factor == 1.0) {
        m.put("null_um_at_unity", unity.position_um);
        m.put("null_db_at_unity", unity.power_db);
    }
    let interior: Vec<_> = nulls.iter().filter(|p| !p.boundary).collect();
    m.put(
        "nulls_monotonic",
        interior.windows(2).all(|w| w[1].position_um <= w[0].position_um + 1e-9),
    );
    Ok((vec![table("main", null_table(&nulls).to_csv())], m.0))
}

fn phase_sweep_scenario(name: ScenarioName, c: &ScenarioConfig) -> Result<Output, ExperimentError> {
    let g = c.geometry();
    let w = c.sweep();
    let (inner, outer, sol) = solved(name, &g)?;
    let n = w.phase_points.unwrap_or(72);
    let phases: Vec<f64> = (0..n).map(|i| TAU * i as f64 / n as f64).collect();
    let sweep = sweep_phase(&inner, &outer, sol.ratio, &phases, sol.local, sol.target)
        .at(name, "phase sweep")?;
    let rel: Vec<f64> = sweep
        .remote_power
        .iter()
        .zip(&sweep.local_power)
        .map(|(r, l)| power_db(*r, *l).unwrap_or(f64::NAN))
        .collect();
    let mut m = Summary::new();
    m.put("model", "analytic quasi-static analogue of the full-wave device");
    m.put("ratio", sol.ratio);
    m.put("remote_min_phase_rad", sweep.remote_fit.phase_of_min());
    m.put("remote_min_phase_deg", sweep.remote_fit.phase_of_min().to_degrees());
    m.put("remote_fit_r_squared", sweep.remote_fit.r_squared);
    m.put("remote_max_db", rel.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    m.put("remote_min_db", rel.iter().cloned().fold(f64::INFINITY, f64::min));
    Ok((vec![table("main", csv_of(|b| sweep.write_csv(b)))], m.0))
}

fn power_scaling_scenario(name: ScenarioName, c: &ScenarioConfig) -> Result<Output, ExperimentError> {
    let params = c.spin_params();
    let w = c.sweep();
    let gamma = params.gyromagnetic_hz_per_t;
    let powers = w
        .powers_mw
        .unwrap_or_else(|| vec![5.0, 10.0, 20.0, 30.0, 50.0, 70.0, 100.0]);
    // default coupling puts 10 MHz at 50 mW
    let k_loop = w
        .loop_coupling_t_per_sqrt_mw
        .unwrap_or(2.0 * 10e6 / gamma / 50f64.sqrt());
    let taus = tau_grid(c);
    let mut t = Table::new(&["power_mw", "b_perp_t", "f_model_hz", "f_fit_hz", "f_fit_err_hz"]);
    let mut fits = Vec::with_capacity(powers.len());
    for &p in &powers {
        let b = k_loop * p.sqrt();
        let f = rabi_frequency(b, gamma);
        let tr = rabi_trace(&params, &DriveTone::resonant(f, 0.0), &NoiseModel::NONE, &taus)
            .at(name, "rabi fit")?;
        t.push(vec![p, b, f, tr.fit.frequency_hz, tr.fit.frequency_err_hz]);
        fits.push(tr.fit.frequency_hz);
    }
    let slope = fit_log_log(&powers, &fits).at(name, "power law")?;
    let mut m = Summary::new();
    m.put("slope", slope.exponent);
    m.put("slope_err", slope.std_err);
    m.put("loop_coupling_t_per_sqrt_mw", k_loop);
    if let Some(k_ant) = w.antenna_coupling_t_per_sqrt_mw {
        m.put("efficiency_ratio", (k_loop / k_ant).powi(2));
    }
    Ok((vec![table("main", t.to_csv())], m.0))
}

fn phase_contrast_scenario(name: ScenarioName, c: &ScenarioConfig) -> Result<Output, ExperimentError> {
    let params = c.spin_params();
    let w = c.sweep();
    let amp = w.tone_rabi.map_or(4e6, |f| f.0);
    let offset = w.static_offset_deg.unwrap_or(135.0).to_radians();
    let photons = Some(w.photons_per_point.unwrap_or(1e5));
    let n = w.phase_points.unwrap_or(36);
    let phases: Vec<f64> = (0..n).map(|i| TAU * i as f64 / n as f64).collect();
    let tone = DriveTone::resonant(amp, 0.0);
    let pc = contrast_vs_phase(&params, &tone, &tone, offset, &phases, photons)
        .at(name, "phase contrast")?;
    let silent = DriveTone::resonant(0.0, 0.0);
    let control = contrast_vs_phase(&params, &tone, &silent, offset, &phases, photons)
        .at(name, "single-loop control")?;
    let mut m = Summary::new();
    m.put("min_phase_deg", pc.min_phase.to_degrees());
    m.put("max_phase_deg", pc.fit.phase_of_max.to_degrees());
    m.put("normalized_min", pc.normalized_min);
    m.put("r_squared", pc.fit.r_squared);
    m.put("fit_amplitude", pc.fit.amplitude);
    m.put("fit_offset", pc.fit.offset);
    m.put("control_amplitude", control.fit.amplitude);
    m.put(
        "control_mean_err",
        control.contrast_errs.iter().sum::<f64>() / control.contrast_errs.len() as f64,
    );
    Ok((
        vec![
            table("main", csv_of(|b| pc.write_csv(b))),
            table("control", csv_of(|b| control.write_csv(b))),
        ],
        m.0,
    ))
}

fn tau_grid(c: &ScenarioConfig) -> Vec<f64> {
    let w = c.sweep();
    linspace(0.0, w.tau_max.map_or(1000e-9, |d| d.0), w.tau_points.unwrap_or(201))
}

fn rabi_suite_scenario(name: ScenarioName, c: &ScenarioConfig) -> Result<Output, ExperimentError> {
    let params = c.spin_params();
    let sc = c.spin_config();
    let taus = tau_grid(c);
    let drive = DriveTone::resonant(sc.drive_rabi.0, 0.0);
    let omega_n = calibrate_noise(&params, &drive, sc.noisy_target.0, &taus).at(name, "calibrate")?;
    let cases = [
        ("clean", NoiseModel::NONE),
        ("noisy", NoiseModel::random(omega_n)),
        ("protected", NoiseModel::random(omega_n).with_suppression(sc.suppression)),
        // both left-loop tones share one random phase
        ("in_phase", NoiseModel::random(2.0 * omega_n)),
    ];
    let mut traces: Vec<(&str, RabiTrace)> = Vec::new();
    for (label, noise) in cases {
        let tr = rabi_trace(&params, &drive, &noise, &taus).at(name, "rabi trace")?;
        traces.push((label, tr));
    }
    let mut cols = vec!["tau_ns".to_string()];
    for (label, _) in &traces {
        cols.push(label.to_string());
        cols.push(format!("{label}_fit"));
    }
    let mut t = Table::new(&cols);
    for (i, tau) in taus.iter().enumerate() {
        let mut row = vec![tau * 1e9];
        for (_, tr) in &traces {
            row.push(tr.population[i]);
            row.push(tr.fit_values[i]);
        }
        t.push(row);
    }
    let mut m = Summary::new();
    m.put("omega_n_hz", omega_n);
    m.put("suppression", sc.suppression);
    for (label, tr) in &traces {
        m.put(format!("t_{label}_ns"), tr.fit.t_rabi * 1e9);
        m.put(format!("t_{label}_err_ns"), tr.fit.t_rabi_err * 1e9);
        m.put(format!("f_{label}_hz"), tr.fit.frequency_hz);
    }
    let t_of = |k: usize| traces[k].1.fit.t_rabi;
    m.put("ordering_ok", t_of(3) < t_of(1) && t_of(1) < t_of(2) && t_of(2) <= t_of(0) * 1.01);
    if sc.suppression > 0.0 {
        m.put(
            "equivalent_detuning_hz",
            equivalent_detuning(drive.rabi_hz, sc.suppression).at(name, "detuning")?,
        );
    }
    Ok((vec![table("main", t.to_csv())], m.0))
}

fn detuning_scenario(name: ScenarioName, c: &ScenarioConfig) -> Result<Output, ExperimentError> {
    let sc = c.spin_config();
    let w = c.sweep();
    let om = sc.drive_rabi.0;
    let ss = w
        .suppressions
        .unwrap_or_else(|| vec![0.001, 0.003, 0.01, 0.03, 0.1, 0.3, 0.5, 1.0]);
    let mut t = Table::new(&["suppression", "detuning_hz", "bloch_peak_population"]);
    for &s in &ss {
        let d = equivalent_detuning(om, s).at(name, "detuning")?;
        let tone = DriveTone {
            rabi_hz: om,
            phase: 0.0,
            detuning_hz: d,
        };
        let w_eff = om.hypot(d);
        let peak = bloch_evolve(&[Interval::new(0.5 / w_eff, vec![tone])]).excited;
        t.push(vec![s, d, peak]);
    }
    let mut m = Summary::new();
    m.put("rabi_hz", om);
    m.put("suppression", sc.suppression);
    if sc.suppression > 0.0 {
        m.put(
            "detuning_hz",
            equivalent_detuning(om, sc.suppression).at(name, "detuning")?,
        );
    }
    Ok((vec![table("main", t.to_csv())], m.0))
}

fn penalty_scenario(name: ScenarioName, c: &ScenarioConfig) -> Result<Output, ExperimentError> {
    let params = c.spin_params();
    let sc = c.spin_config();
    let g = c.geometry();
    let w = c.sweep();
    let taus = tau_grid(c);
    let drive = DriveTone::resonant(sc.drive_rabi.0, 0.0);
    let mut m = Summary::new();

    let noise_db = w
        .noise_db
        .unwrap_or_else(|| vec![-60.0, -50.0, -40.0, -30.0, -20.0]);
    let mut t = Table::new(&["noise_db", "reduction", "reduction_err", "t_noisy_ns"]);
    for &db in &noise_db {
        let p = coherence_penalty(&params, &drive, db, &taus).at(name, "noise penalty")?;
        t.push(vec![db, p.reduction, p.reduction_err, p.t_noisy * 1e9]);
        m.put(format!("penalty_noise_{}db", db_label(db)), p.reduction);
        m.put(format!("penalty_noise_{}db_err", db_label(db)), p.reduction_err);
    }

    // amplitude imbalance of the outer loop leaves ε² of the calibrated crosstalk
    let (inner, outer, sol) = solved(name, &g)?;
    let omega_n = calibrate_noise(&params, &drive, sc.noisy_target.0, &taus).at(name, "calibrate")?;
    m.put("omega_n_hz", omega_n);
    let imbalance = w.imbalance_db.unwrap_or_else(|| vec![-40.0, -30.0, -20.0, -10.0]);
    let mut ti = Table::new(&["imbalance_db", "extinction_ratio", "reduction", "reduction_err", "t_noisy_ns"]);
    for &db in &imbalance {
        let ext = extinction_ratio(&sol, &inner, &outer, sol.target, db).at(name, "extinction")?;
        let noise = NoiseModel::random(omega_n).with_suppression(ext.min(1.0));
        let p = penalty_for(&params, &drive, &noise, &taus).at(name, "imbalance penalty")?;
        ti.push(vec![db, ext, p.reduction, p.reduction_err, p.t_noisy * 1e9]);
        m.put(format!("penalty_imbalance_{}db", db_label(db)), p.reduction);
        m.put(format!("penalty_imbalance_{}db_err", db_label(db)), p.reduction_err);
    }
    Ok((
        vec![table("main", t.to_csv()), table("imbalance", ti.to_csv())],
        m.0,
    ))
}

/// Summary keys every run of `name` must report.
pub fn required_metrics(name: ScenarioName) -> &'static [&'static str] {
    match name {
        ScenarioName::Fig1dLineScan => &[
            "ratio",
            "single_db_at_target",
            "dual_z_db_at_target",
            "dual_total_db_at_target",
            "attenuation_db_nn2",
            "attenuation_db_nn3",
            "centre_power_ratio",
            "unit_centre_power_ratio",
            "single_exponent",
            "dual_exponent_beyond_null",
            "dual_exponent_before_null",
            "on_axis_amplitude_exponent",
        ],
        ScenarioName::Fig1gRatioSweep => &["ratio", "nulls_monotonic"],
        ScenarioName::Fig1hPhaseSweep => &["model", "remote_min_phase_deg", "remote_min_db"],
        ScenarioName::Fig3kPowerScaling => &["slope", "slope_err"],
        ScenarioName::Fig4cPhaseContrast => &["min_phase_deg", "normalized_min", "r_squared"],
        ScenarioName::Fig4RabiSuite => &[
            "omega_n_hz",
            "t_clean_ns",
            "t_noisy_ns",
            "t_protected_ns",
            "t_in_phase_ns",
            "ordering_ok",
        ],
        ScenarioName::DetuningEquivalence => &["detuning_hz"],
        ScenarioName::CoherencePenaltyCurve => &[
            "omega_n_hz",
            "penalty_noise_-60db",
            "penalty_noise_-60db_err",
            "penalty_imbalance_-20db",
            "penalty_imbalance_-20db_err",
        ],
    }
}
