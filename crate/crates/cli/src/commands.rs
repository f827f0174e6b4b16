use std::error::Error as StdError;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use dualloop::cancellation::solve;
use dualloop::experiments::{
    self, build_loops, compare_to_reference, published_reference, target_point, CompareError,
    ConfigError, ExperimentError, Frequency, Reference, ScenarioConfig, ScenarioName,
};
use dualloop::magnetostatics::{field_at, field_map, line_scan, linspace, power_db, PowerMetric};
use dualloop::spin::{
    calibrate_noise, default_freq_grid, drive_quality_ok, odmr_spectrum, rabi_trace, DriveTone,
    NoiseModel,
};
use dualloop::table::{write_atomic, Table};
use dualloop::Point3;
use serde_json::json;
use thiserror::Error;

use crate::{Command, Common};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read config {}: {source}", path.display())]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{label}: {source}")]
    Config { label: String, source: ConfigError },
    #[error("{0}")]
    Usage(String),
    #[error("{label}: {source}")]
    Run {
        label: String,
        source: ExperimentError,
    },
    #[error("{label}: {source}")]
    Domain {
        label: String,
        source: Box<dyn StdError + Send + Sync>,
    },
    #[error("cannot write {}: {source}", path.display())]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("reference {}: {source}", path.display())]
    Compare { path: PathBuf, source: CompareError },
    #[error("{failed} metric(s) outside reference tolerance")]
    ComparisonFailed { failed: usize },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Read { .. } | CliError::Config { .. } | CliError::Usage(_) => 2,
            CliError::Run { source, .. } if source.is_config() => 2,
            CliError::Compare {
                source: CompareError::Parse(_),
                ..
            } => 2,
            _ => 1,
        }
    }
}

/// Loaded config plus where output goes.
struct Ctx {
    cfg: ScenarioConfig,
    label: String,
    out: PathBuf,
    verbose: u8,
}

impl Ctx {
    fn domain<E: StdError + Send + Sync + 'static>(&self, e: E) -> CliError {
        CliError::Domain {
            label: self.label.clone(),
            source: Box::new(e),
        }
    }

    fn write(&self, command: &str, ext: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self
            .out
            .join(format!("{command}__{}.{ext}", self.cfg.hash8()));
        write_atomic(&path, bytes).map_err(|source| CliError::Write {
            path: path.clone(),
            source,
        })?;
        println!("{}", path.display());
        Ok(path)
    }
}

fn read_config(path: &Path) -> Result<ScenarioConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    ScenarioConfig::from_toml(&text).map_err(|source| CliError::Config {
        label: path.display().to_string(),
        source,
    })
}

fn load(common: &Common, verbose: u8) -> Result<Ctx, CliError> {
    let (mut cfg, label) = match &common.config {
        Some(p) => (read_config(p)?, p.display().to_string()),
        None => (ScenarioConfig::default(), "<defaults>".to_string()),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let warnings = cfg.validate().map_err(|source| CliError::Config {
        label: label.clone(),
        source,
    })?;
    for w in warnings {
        eprintln!("warning: {label}: {w}");
    }
    eprintln!("seed: {}", cfg.seed);
    Ok(Ctx {
        cfg,
        label,
        out: common.out.clone(),
        verbose,
    })
}

pub fn dispatch(command: Command, verbose: u8) -> Result<(), CliError> {
    match command {
        Command::FieldMap {
            common,
            half_width_um,
            points,
        } => field_map_cmd(&load(&common, verbose)?, half_width_um, points),
        Command::LineScan { common, single } => line_scan_cmd(&load(&common, verbose)?, single),
        Command::CancelSolve { common } => cancel_cmd(&load(&common, verbose)?),
        Command::RatioSweep { common } => {
            scenario_as(&load(&common, verbose)?, ScenarioName::Fig1gRatioSweep)
        }
        Command::PhaseSweep { common } => {
            scenario_as(&load(&common, verbose)?, ScenarioName::Fig1hPhaseSweep)
        }
        Command::Rabi {
            common,
            noise,
            calibrate,
            suppression,
        } => rabi_cmd(&load(&common, verbose)?, noise.as_deref(), calibrate, suppression),
        Command::Odmr {
            common,
            photons,
            second_tone_phase_deg,
        } => odmr_cmd(&load(&common, verbose)?, photons, second_tone_phase_deg),
        Command::Scenario {
            common,
            name,
            reference,
            published,
        } => scenario_cmd(&common, verbose, name.as_deref(), reference.as_deref(), published),
        Command::Validate { config } => validate_cmd(&config),
    }
}

fn field_map_cmd(ctx: &Ctx, half_width_um: f64, points: usize) -> Result<(), CliError> {
    if !(half_width_um > 0.0) || points < 2 {
        return Err(CliError::Usage(
            "--half-width-um must be > 0 and --points >= 2".into(),
        ));
    }
    let g = ctx.cfg.geometry();
    let (inner, outer) = build_loops(&g).map_err(|e| ctx.domain(e))?;
    let sol = solve(&inner, &outer, target_point(&g)).map_err(|e| ctx.domain(e))?;
    let pair = sol.apply(&inner, &outer);
    let axis = linspace(-half_width_um, half_width_um, points);
    let single = field_map(&[inner], &axis, &axis, g.z_um).map_err(|e| ctx.domain(e))?;
    let dual = field_map(&pair, &axis, &axis, g.z_um).map_err(|e| ctx.domain(e))?;
    let ref_single = field_at(&[inner], sol.local).map_err(|e| ctx.domain(e))?.power_total();
    let ref_dual = field_at(&pair, sol.local).map_err(|e| ctx.domain(e))?.power_total();
    let mut t = Table::new(&["x_um", "y_um", "single_db", "dual_db", "dual_z_db"]);
    let db = |v: f64, r: f64| power_db(v, r).unwrap_or(f64::NAN);
    for (k, (s, d)) in single.iter().zip(&dual).enumerate() {
        let (x, y) = (axis[k % points], axis[k / points]);
        t.push(vec![
            x,
            y,
            db(s.power_total(), ref_single),
            db(d.power_total(), ref_dual),
            db(d.power_z(), ref_dual),
        ]);
    }
    ctx.write("field_map", "csv", t.to_csv().as_bytes())?;
    Ok(())
}

fn line_scan_cmd(ctx: &Ctx, single: bool) -> Result<(), CliError> {
    let g = ctx.cfg.geometry();
    let w = ctx.cfg.sweep();
    let (inner, outer) = build_loops(&g).map_err(|e| ctx.domain(e))?;
    let sol = solve(&inner, &outer, target_point(&g)).map_err(|e| ctx.domain(e))?;
    let pair = sol.apply(&inner, &outer);
    let loops: &[_] = if single { &pair[..1] } else { &pair };
    let xs = linspace(
        w.x_from_um.unwrap_or(0.0),
        w.x_to_um.unwrap_or(200.0),
        w.x_points.unwrap_or(801),
    );
    let reference = field_at(loops, sol.local).map_err(|e| ctx.domain(e))?.power_total();
    let scan = line_scan(loops, Point3::ORIGIN, Point3::from_m(1.0, 0.0, 0.0), &xs, g.z_um)
        .map_err(|e| ctx.domain(e))?
        .with_reference(reference);
    let mut buf = Vec::new();
    scan.write_csv(&mut buf).expect("writing to memory");
    let name = if single { "line_scan_single" } else { "line_scan" };
    ctx.write(name, "csv", &buf)?;
    if ctx.verbose > 0 {
        if let Some(i) = scan.sample_near(g.spacing_um) {
            let db = power_db(PowerMetric::Total.of(&scan.fields[i]), reference).unwrap_or(f64::NAN);
            eprintln!("|B|² at {} µm: {db:.2} dB", g.spacing_um);
        }
    }
    Ok(())
}

fn cancel_cmd(ctx: &Ctx) -> Result<(), CliError> {
    let g = ctx.cfg.geometry();
    let (inner, outer) = build_loops(&g).map_err(|e| ctx.domain(e))?;
    let sol = solve(&inner, &outer, target_point(&g)).map_err(|e| ctx.domain(e))?;
    let text = serde_json::to_string_pretty(&sol).expect("solution serialises");
    ctx.write("cancel_solve", "json", text.as_bytes())?;
    if ctx.verbose > 0 {
        eprintln!("{text}");
    }
    Ok(())
}

fn scenario_as(ctx: &Ctx, name: ScenarioName) -> Result<(), CliError> {
    let mut cfg = ctx.cfg.clone();
    cfg.scenario = Some(name);
    if cfg.geometry.is_none() {
        cfg.geometry = Some(Default::default());
    }
    run_and_write(&cfg, &ctx.label, &ctx.out, ctx.verbose).map(|_| ())
}

fn run_and_write(
    cfg: &ScenarioConfig,
    label: &str,
    out: &Path,
    verbose: u8,
) -> Result<experiments::ScenarioResult, CliError> {
    let run_err = |source| CliError::Run {
        label: label.to_string(),
        source,
    };
    let result = experiments::run(cfg).map_err(run_err)?;
    for path in result.write_to(out).map_err(run_err)? {
        println!("{}", path.display());
    }
    if verbose > 0 {
        eprint!("{}", result.summary_toml());
    }
    Ok(result)
}

fn parse_frequency(flag: &str, s: &str) -> Result<f64, CliError> {
    Frequency::parse(s)
        .map(|f| f.0)
        .map_err(|e| CliError::Usage(format!("{flag}: {e}")))
}

fn rabi_cmd(
    ctx: &Ctx,
    noise: Option<&str>,
    calibrate: bool,
    suppression: f64,
) -> Result<(), CliError> {
    let params = ctx.cfg.spin_params();
    let sc = ctx.cfg.spin_config();
    let w = ctx.cfg.sweep();
    let taus = linspace(0.0, w.tau_max.map_or(1000e-9, |d| d.0), w.tau_points.unwrap_or(201));
    let drive = DriveTone::resonant(sc.drive_rabi.0, 0.0);
    let noise_hz = if calibrate {
        calibrate_noise(&params, &drive, sc.noisy_target.0, &taus).map_err(|e| ctx.domain(e))?
    } else {
        match noise {
            Some(s) => parse_frequency("--noise", s)?,
            None => 0.0,
        }
    };
    let model = NoiseModel::random(noise_hz).with_suppression(suppression);
    let trace = rabi_trace(&params, &drive, &model, &taus).map_err(|e| ctx.domain(e))?;
    let mut buf = Vec::new();
    trace.write_csv(&mut buf).expect("writing to memory");
    ctx.write("rabi", "csv", &buf)?;
    let s = trace.summary();
    let summary = json!({
        "frequency_hz": s.frequency_hz,
        "t_rabi_ns": s.t_rabi_ns,
        "t_rabi_err_ns": s.t_rabi_err_ns,
        "amplitude": s.amplitude,
        "offset": s.offset,
        "seed": s.seed,
        "noise_rabi_hz": noise_hz,
        "suppression": suppression,
        "drive_quality_ok": drive_quality_ok(drive.rabi_hz, params.t_base),
    });
    let text = serde_json::to_string_pretty(&summary).expect("json");
    ctx.write("rabi", "json", text.as_bytes())?;
    if ctx.verbose > 0 {
        eprintln!("{text}");
    }
    Ok(())
}

fn odmr_cmd(ctx: &Ctx, photons: Option<f64>, second_phase_deg: Option<f64>) -> Result<(), CliError> {
    let params = ctx.cfg.spin_params();
    let sc = ctx.cfg.spin_config();
    let mut tones = vec![DriveTone::resonant(sc.drive_rabi.0, 0.0)];
    if let Some(deg) = second_phase_deg {
        tones.push(DriveTone::resonant(sc.drive_rabi.0, deg.to_radians()));
    }
    let photons = photons.or(ctx.cfg.sweep().photons_per_point);
    let spec = odmr_spectrum(&params, &tones, &default_freq_grid(&params), photons, 0)
        .map_err(|e| ctx.domain(e))?;
    let mut buf = Vec::new();
    spec.write_csv(&mut buf).expect("writing to memory");
    ctx.write("odmr", "csv", &buf)?;
    let fit = json!({
        "centre_hz": spec.fit.centre_hz,
        "sigma_hz": spec.fit.sigma_hz,
        "contrast": spec.fit.contrast,
        "contrast_err": spec.fit.contrast_err,
        "model_contrast": spec.model_contrast,
        "seed": params.seed,
    });
    let text = serde_json::to_string_pretty(&fit).expect("json");
    ctx.write("odmr", "json", text.as_bytes())?;
    if ctx.verbose > 0 {
        eprintln!("{text}");
    }
    Ok(())
}

fn scenario_cmd(
    common: &Common,
    verbose: u8,
    name: Option<&str>,
    reference: Option<&Path>,
    published: bool,
) -> Result<(), CliError> {
    let (cfg, label) = match (name, &common.config) {
        (Some(n), _) => {
            let parsed = ScenarioName::from_str(n).map_err(|source| CliError::Config {
                label: "--name".into(),
                source,
            })?;
            (ScenarioConfig::for_scenario(parsed), format!("--name {n}"))
        }
        (None, Some(_)) => {
            let ctx = load(common, verbose)?;
            (ctx.cfg, ctx.label)
        }
        (None, None) => {
            return Err(CliError::Usage(
                "scenario needs --config <file> or --name <scenario>".into(),
            ))
        }
    };
    let mut cfg = cfg;
    if name.is_some() {
        if let Some(seed) = common.seed {
            cfg.seed = seed;
        }
        eprintln!("seed: {}", cfg.seed);
    }
    let result = run_and_write(&cfg, &label, &common.out, verbose)?;

    let reference = match (reference, published) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
                path: path.to_path_buf(),
                source,
            })?;
            let r = Reference::from_toml(&text).map_err(|source| CliError::Compare {
                path: path.to_path_buf(),
                source,
            })?;
            Some((r, path.to_path_buf()))
        }
        (None, true) => match published_reference(result.scenario) {
            Some(r) => Some((r, PathBuf::from("<published values>"))),
            None => {
                eprintln!("no published reference for {}", result.scenario);
                None
            }
        },
        (None, false) => None,
    };
    if let Some((r, path)) = reference {
        let report = compare_to_reference(&result, &r)
            .map_err(|source| CliError::Compare { path, source })?;
        for c in &report.checks {
            println!(
                "{} {}: {:.6} vs {:.6} (tolerance {:.6})",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                c.actual,
                c.expected,
                c.tolerance
            );
        }
        let failed = report.checks.iter().filter(|c| !c.pass).count();
        if failed > 0 {
            return Err(CliError::ComparisonFailed { failed });
        }
    }
    Ok(())
}

fn validate_cmd(path: &Path) -> Result<(), CliError> {
    let cfg = read_config(path)?;
    let warnings = cfg.validate().map_err(|source| CliError::Config {
        label: path.display().to_string(),
        source,
    })?;
    for w in &warnings {
        eprintln!("warning: {}: {w}", path.display());
    }
    match cfg.scenario {
        Some(s) => println!("ok: {} (scenario {s}, seed {})", path.display(), cfg.seed),
        None => println!("ok: {} (no scenario; usable by the single-stage subcommands)", path.display()),
    }
    Ok(())
}
