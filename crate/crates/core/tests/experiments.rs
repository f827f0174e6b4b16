use dualloop::experiments::*;
use dualloop::spin::SpinError;

fn run_default(name: ScenarioName) -> ScenarioResult {
    run(&ScenarioConfig::for_scenario(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn every_scenario_reports_its_schema() {
    for name in ScenarioName::ALL {
        let r = run_default(name);
        for key in required_metrics(name) {
            assert!(r.summary.contains_key(*key), "{name} lacks `{key}`");
        }
        let main = r.table("main").expect("main table");
        assert!(main.lines().count() > 2, "{name} main table is empty");
        assert_eq!(r.provenance.hash8.len(), 8);
        assert_eq!(r.provenance.seed, 1);
    }
}

#[test]
fn line_scan_summary_values() {
    let r = run_default(ScenarioName::Fig1dLineScan);
    let m = |k| r.metric(k).unwrap();
    assert!((m("single_db_at_target") + 60.0).abs() <= 3.0);
    assert!(m("dual_z_db_at_target") <= -120.0);
    assert!((m("single_exponent") + 6.0).abs() <= 1.0);
    assert!((m("on_axis_amplitude_exponent") + 3.0).abs() <= 0.2);
    assert!(m("attenuation_db_nn2") >= 15.0 && m("attenuation_db_nn3") >= 15.0);
    let csv = r.table("main").unwrap();
    assert!(csv.starts_with("x_um,single_db,dual_db,dual_z_db,attenuation_db\n"));
    assert!(r.table("on_axis").unwrap().starts_with("z_um,b_abs_t\n"));
}

#[test]
fn phase_sweep_is_labelled_analytic() {
    let r = run_default(ScenarioName::Fig1hPhaseSweep);
    match r.summary.get("model") {
        Some(Metric::Text(t)) => assert!(t.contains("analytic")),
        other => panic!("{other:?}"),
    }
    assert!((r.metric("remote_min_phase_deg").unwrap() - 180.0).abs() < 1.0);
}

#[test]
fn power_scaling_slope_is_half() {
    let r = run_default(ScenarioName::Fig3kPowerScaling);
    assert!((r.metric("slope").unwrap() - 0.5).abs() <= 0.02);
    assert!(!r.summary.contains_key("efficiency_ratio"));
    let mut c = ScenarioConfig::for_scenario(ScenarioName::Fig3kPowerScaling);
    c.sweep = Some(SweepConfig {
        loop_coupling_t_per_sqrt_mw: Some(2e-4),
        antenna_coupling_t_per_sqrt_mw: Some(2e-4 / 200f64.sqrt()),
        ..SweepConfig::default()
    });
    let r = run(&c).unwrap();
    assert!((r.metric("efficiency_ratio").unwrap() - 200.0).abs() < 1e-9);
}

#[test]
fn rabi_suite_ordering_and_published_reference() {
    let r = run_default(ScenarioName::Fig4RabiSuite);
    assert_eq!(r.summary.get("ordering_ok"), Some(&Metric::Flag(true)));
    let reference = published_reference(ScenarioName::Fig4RabiSuite).unwrap();
    let report = compare_to_reference(&r, &reference).unwrap();
    assert!(report.pass, "{report:?}");
    assert_eq!(report.checks.len(), 4);
}

#[test]
fn reruns_are_byte_identical() {
    for name in [ScenarioName::Fig4RabiSuite, ScenarioName::Fig4cPhaseContrast] {
        let a = run_default(name);
        let b = run_default(name);
        assert_eq!(a.tables, b.tables, "{name}");
        assert_eq!(a.summary_toml(), b.summary_toml());
    }
}

#[test]
fn seed_changes_monte_carlo_output() {
    let mut c = ScenarioConfig::for_scenario(ScenarioName::Fig4cPhaseContrast);
    let a = run(&c).unwrap();
    c.seed = 2;
    let b = run(&c).unwrap();
    assert_ne!(a.table("main"), b.table("main"));
    assert_ne!(a.provenance.hash8, b.provenance.hash8);
}

#[test]
fn comparison_flags_only_the_bad_metric() {
    let r = run_default(ScenarioName::DetuningEquivalence);
    let d = r.metric("detuning_hz").unwrap();
    let exact = Reference {
        scenario: "detuning_equivalence".into(),
        source: None,
        metric: vec![
            ReferenceMetric { name: "detuning_hz".into(), value: d, abs_tol: Some(0.0), rel_tol: None },
            ReferenceMetric { name: "rabi_hz".into(), value: 7e6, abs_tol: None, rel_tol: Some(1e-12) },
        ],
    };
    assert!(compare_to_reference(&r, &exact).unwrap().pass);

    let mut off = exact.clone();
    off.metric[1].value = 8e6;
    let rep = compare_to_reference(&r, &off).unwrap();
    assert!(!rep.pass);
    assert!(rep.checks[0].pass && !rep.checks[1].pass);

    let mut wrong = exact.clone();
    wrong.scenario = "fig1d_line_scan".into();
    assert!(matches!(
        compare_to_reference(&r, &wrong),
        Err(CompareError::ScenarioMismatch { .. })
    ));
    let mut missing = exact;
    missing.metric[0].name = "nope".into();
    assert!(matches!(
        compare_to_reference(&r, &missing),
        Err(CompareError::MissingMetric(_))
    ));
}

#[test]
fn outputs_are_written_with_hashed_names() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_default(ScenarioName::DetuningEquivalence);
    let files = r.write_to(dir.path()).unwrap();
    let stem = format!("detuning_equivalence__{}", r.provenance.hash8);
    assert!(dir.path().join(format!("{stem}.csv")).exists());
    let summary = std::fs::read_to_string(dir.path().join(format!("{stem}.summary.toml"))).unwrap();
    assert!(summary.contains("detuning_hz"));
    assert!(summary.contains(&r.provenance.config_hash));
    assert_eq!(files.len(), 2);
    let leftovers = std::fs::read_dir(dir.path()).unwrap().count();
    assert_eq!(leftovers, 2, "no temporary files left behind");
}

#[test]
fn stage_errors_carry_context() {
    let mut c = ScenarioConfig::for_scenario(ScenarioName::Fig4RabiSuite);
    c.spin.as_mut().unwrap().noisy_target = Duration(800e-9);
    let err = run(&c).unwrap_err();
    match &err {
        ExperimentError::Stage { scenario, stage, source: StageError::Spin(SpinError::InfeasibleTarget { .. }) } => {
            assert_eq!(*scenario, ScenarioName::Fig4RabiSuite);
            assert_eq!(*stage, "calibrate");
        }
        other => panic!("{other:?}"),
    }
    assert!(!err.is_config());
    assert!(err.to_string().contains("fig4_rabi_suite"));
}

#[test]
fn config_errors_are_reported_as_such() {
    let err = run(&ScenarioConfig::default()).unwrap_err();
    assert!(err.is_config());
    assert!(err.to_string().contains("fig1d_line_scan"));
    let mut c = ScenarioConfig::for_scenario(ScenarioName::Fig1dLineScan);
    c.geometry.as_mut().unwrap().inner_diameter_um = 40.0;
    assert!(run(&c).unwrap_err().is_config());
}

#[test]
fn shipped_configs_parse_and_validate() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let text = std::fs::read_to_string(&path).unwrap();
            let c = ScenarioConfig::from_toml(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            let w = c.validate().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert!(w.is_empty(), "{}: {w:?}", path.display());
            seen += 1;
        }
    }
    assert!(seen >= 8);
}
