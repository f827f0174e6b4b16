//! Scenario configuration files (TOML).
//!
//! Lengths are plain numbers in µm and carry an `_um` suffix in the key.
//! Frequencies, durations and gyromagnetic ratios are strings with an explicit
//! unit, e.g. `"7 MHz"`, `"761 ns"`, `"2.8e10 Hz/T"`.

use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::spin::SpinParams;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("`{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("scenario `{scenario}` needs a [{block}] block")]
    MissingBlock { scenario: String, block: &'static str },
    #[error("no scenario named in config; valid names: {}", ScenarioName::ALL_NAMES.join(", "))]
    NoScenario,
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioName {
    Fig1dLineScan,
    Fig1gRatioSweep,
    Fig1hPhaseSweep,
    Fig3kPowerScaling,
    Fig4cPhaseContrast,
    Fig4RabiSuite,
    DetuningEquivalence,
    CoherencePenaltyCurve,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 8] = [
        ScenarioName::Fig1dLineScan,
        ScenarioName::Fig1gRatioSweep,
        ScenarioName::Fig1hPhaseSweep,
        ScenarioName::Fig3kPowerScaling,
        ScenarioName::Fig4cPhaseContrast,
        ScenarioName::Fig4RabiSuite,
        ScenarioName::DetuningEquivalence,
        ScenarioName::CoherencePenaltyCurve,
    ];

    pub const ALL_NAMES: [&'static str; 8] = [
        "fig1d_line_scan",
        "fig1g_ratio_sweep",
        "fig1h_phase_sweep",
        "fig3k_power_scaling",
        "fig4c_phase_contrast",
        "fig4_rabi_suite",
        "detuning_equivalence",
        "coherence_penalty_curve",
    ];

    pub fn as_str(self) -> &'static str {
        Self::ALL_NAMES[Self::ALL.iter().position(|s| *s == self).unwrap()]
    }

    pub fn needs_geometry(self) -> bool {
        matches!(
            self,
            ScenarioName::Fig1dLineScan
                | ScenarioName::Fig1gRatioSweep
                | ScenarioName::Fig1hPhaseSweep
                | ScenarioName::CoherencePenaltyCurve
        )
    }

    pub fn needs_spin(self) -> bool {
        matches!(
            self,
            ScenarioName::Fig3kPowerScaling
                | ScenarioName::Fig4cPhaseContrast
                | ScenarioName::Fig4RabiSuite
                | ScenarioName::DetuningEquivalence
                | ScenarioName::CoherencePenaltyCurve
        )
    }
}

impl std::str::FromStr for ScenarioName {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL_NAMES
            .iter()
            .position(|n| *n == s)
            .map(|i| Self::ALL[i])
            .ok_or_else(|| {
                invalid(
                    "scenario",
                    format!("unknown scenario `{s}`; valid names: {}", Self::ALL_NAMES.join(", ")),
                )
            })
    }
}

impl fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Leading numeric part of `s` (digits, sign, point, exponent) and the rest.
fn split_number(s: &str) -> (&str, &str) {
    let b = s.as_bytes();
    let mut i = 0;
    while i < b.len() {
        let c = b[i];
        let sign = (c == b'+' || c == b'-') && (i == 0 || matches!(b[i - 1], b'e' | b'E'));
        let exp = (c == b'e' || c == b'E')
            && i > 0
            && b[i - 1].is_ascii_digit()
            && b.get(i + 1).is_some_and(|n| n.is_ascii_digit() || *n == b'+' || *n == b'-');
        if !(c.is_ascii_digit() || c == b'.' || sign || exp) {
            break;
        }
        i += 1;
    }
    (&s[..i], &s[i..])
}

/// Parse `"7 MHz"` into a value in base units.
fn parse_with_units(s: &str, kind: &str, units: &[(&str, f64)]) -> Result<f64, String> {
    let s = s.trim();
    let names = || units.iter().map(|u| u.0).collect::<Vec<_>>().join(", ");
    let (num, unit) = split_number(s);
    let unit = unit.trim();
    if unit.is_empty() {
        return Err(format!("{kind} `{s}` needs a unit suffix ({})", names()));
    }
    let value: f64 = num
        .parse()
        .map_err(|_| format!("{kind} `{s}`: `{num}` is not a number"))?;
    let factor = units
        .iter()
        .find(|(u, _)| *u == unit)
        .map(|(_, f)| *f)
        .ok_or_else(|| format!("{kind} `{s}`: unknown unit `{unit}` (expected {})", names()))?;
    let v = value * factor;
    if !v.is_finite() {
        return Err(format!("{kind} `{s}` is not finite"));
    }
    Ok(v)
}

macro_rules! quantity {
    ($name:ident, $kind:literal, $base:literal, [$(($u:literal, $f:expr)),+ $(,)?]) => {
        #[doc = concat!("A ", $kind, " stored in ", $base, "; written with an explicit unit.")]
        #[derive(Debug, Clone, Copy, PartialEq)]
        pub struct $name(pub f64);

        impl $name {
            pub const UNITS: &'static [(&'static str, f64)] = &[$(($u, $f)),+];

            pub fn parse(s: &str) -> Result<Self, String> {
                parse_with_units(s, $kind, Self::UNITS).map($name)
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&format!("{} {}", self.0, $base))
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                struct V;
                impl<'de> Visitor<'de> for V {
                    type Value = $name;

                    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                        write!(f, "a {} string with a unit suffix", $kind)
                    }

                    fn visit_str<E: de::Error>(self, v: &str) -> Result<$name, E> {
                        $name::parse(v).map_err(E::custom)
                    }

                    fn visit_f64<E: de::Error>(self, v: f64) -> Result<$name, E> {
                        Err(E::custom(format!(
                            "{} {v} needs a unit suffix, e.g. \"{v} {}\"",
                            $kind, $base
                        )))
                    }

                    fn visit_i64<E: de::Error>(self, v: i64) -> Result<$name, E> {
                        self.visit_f64(v as f64)
                    }

                    fn visit_u64<E: de::Error>(self, v: u64) -> Result<$name, E> {
                        self.visit_f64(v as f64)
                    }
                }
                d.deserialize_any(V)
            }
        }
    };
}

quantity!(Frequency, "frequency", "Hz", [("Hz", 1.0), ("kHz", 1e3), ("MHz", 1e6), ("GHz", 1e9)]);
quantity!(Duration, "duration", "s", [("s", 1.0), ("ms", 1e-3), ("us", 1e-6), ("µs", 1e-6), ("ns", 1e-9)]);
quantity!(GyroRatio, "gyromagnetic ratio", "Hz/T", [("Hz/T", 1.0), ("kHz/T", 1e3), ("MHz/T", 1e6), ("GHz/T", 1e9)]);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    pub inner_diameter_um: f64,
    pub outer_diameter_um: f64,
    /// Nearest-neighbour site spacing.
    pub spacing_um: f64,
    /// Height of the qubit plane above the loops.
    pub z_um: f64,
    pub segments: usize,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            inner_diameter_um: 15.0,
            outer_diameter_um: 38.0,
            spacing_um: 60.0,
            z_um: 1.0,
            segments: crate::geometry::DEFAULT_CIRCLE_SEGMENTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpinConfig {
    pub resonance: Frequency,
    pub zero_field_splitting: Frequency,
    pub gyromagnetic: GyroRatio,
    pub t_base: Duration,
    pub contrast_max: f64,
    pub shots: usize,
    /// Mean photons per Rabi trace point; absent means noiseless readout.
    pub photons_per_shot: Option<f64>,
    pub odmr_sigma: Frequency,
    pub saturation_rabi: Frequency,
    /// Local drive Ω/2π.
    pub drive_rabi: Frequency,
    /// Decay time the unprotected noise tone is calibrated to.
    pub noisy_target: Duration,
    /// Power suppression of the protected case.
    pub suppression: f64,
}

impl Default for SpinConfig {
    fn default() -> Self {
        let p = SpinParams::default();
        SpinConfig {
            resonance: Frequency(p.resonance_hz),
            zero_field_splitting: Frequency(p.zero_field_splitting_hz),
            gyromagnetic: GyroRatio(p.gyromagnetic_hz_per_t),
            t_base: Duration(p.t_base),
            contrast_max: p.contrast_max,
            shots: p.shots,
            photons_per_shot: p.photons_per_shot,
            odmr_sigma: Frequency(p.odmr_sigma_hz),
            saturation_rabi: Frequency(p.saturation_rabi_hz),
            drive_rabi: Frequency(7e6),
            noisy_target: Duration(249e-9),
            suppression: 0.03,
        }
    }
}

/// Optional grid overrides; anything left out uses the scenario's own default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub x_from_um: Option<f64>,
    pub x_to_um: Option<f64>,
    pub x_points: Option<usize>,
    pub ratio_factors: Option<Vec<f64>>,
    pub phase_points: Option<usize>,
    pub tau_max: Option<Duration>,
    pub tau_points: Option<usize>,
    pub powers_mw: Option<Vec<f64>>,
    /// Transverse field per √mW at the qubit for the loop antenna.
    pub loop_coupling_t_per_sqrt_mw: Option<f64>,
    /// Same for a reference antenna, used only for the efficiency ratio.
    pub antenna_coupling_t_per_sqrt_mw: Option<f64>,
    pub noise_db: Option<Vec<f64>>,
    pub imbalance_db: Option<Vec<f64>>,
    pub suppressions: Option<Vec<f64>>,
    pub photons_per_point: Option<f64>,
    pub tone_rabi: Option<Frequency>,
    pub static_offset_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Option<ScenarioName>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub geometry: Option<GeometryConfig>,
    pub spin: Option<SpinConfig>,
    pub sweep: Option<SweepConfig>,
}

fn default_seed() -> u64 {
    1
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            scenario: None,
            seed: default_seed(),
            geometry: Some(GeometryConfig::default()),
            spin: Some(SpinConfig::default()),
            sweep: None,
        }
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

impl ScenarioConfig {
    /// A default config for `name` with every block present.
    pub fn for_scenario(name: ScenarioName) -> Self {
        ScenarioConfig {
            scenario: Some(name),
            ..Self::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
            ConfigError::Parse {
                line,
                column,
                message: e.message().to_string(),
            }
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// SHA-256 of the canonical serialisation, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn hash8(&self) -> String {
        self.hash()[..8].to_string()
    }

    pub fn geometry(&self) -> GeometryConfig {
        self.geometry.clone().unwrap_or_default()
    }

    pub fn spin_config(&self) -> SpinConfig {
        self.spin.clone().unwrap_or_default()
    }

    pub fn sweep(&self) -> SweepConfig {
        self.sweep.clone().unwrap_or_default()
    }

    pub fn spin_params(&self) -> SpinParams {
        let s = self.spin_config();
        SpinParams {
            resonance_hz: s.resonance.0,
            zero_field_splitting_hz: s.zero_field_splitting.0,
            gyromagnetic_hz_per_t: s.gyromagnetic.0,
            t_base: s.t_base.0,
            contrast_max: s.contrast_max,
            shots: s.shots,
            seed: self.seed,
            photons_per_shot: s.photons_per_shot,
            odmr_sigma_hz: s.odmr_sigma.0,
            saturation_rabi_hz: s.saturation_rabi.0,
        }
    }

    /// Pre-flight checks without computation. Returns warnings on success.
    pub fn validate(&self) -> Result<Vec<String>, ConfigError> {
        let mut warnings = Vec::new();
        if let Some(name) = self.scenario {
            if name.needs_geometry() && self.geometry.is_none() {
                return Err(ConfigError::MissingBlock {
                    scenario: name.to_string(),
                    block: "geometry",
                });
            }
            if name.needs_spin() && self.spin.is_none() {
                return Err(ConfigError::MissingBlock {
                    scenario: name.to_string(),
                    block: "spin",
                });
            }
        }
        let g = self.geometry();
        let positive = |field: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(invalid(field, format!("must be > 0, got {v}")))
            }
        };
        positive("geometry.inner_diameter_um", g.inner_diameter_um)?;
        positive("geometry.outer_diameter_um", g.outer_diameter_um)?;
        positive("geometry.spacing_um", g.spacing_um)?;
        if !(g.z_um.is_finite() && g.z_um >= 0.0) {
            return Err(invalid("geometry.z_um", format!("must be >= 0, got {}", g.z_um)));
        }
        if g.inner_diameter_um >= g.outer_diameter_um {
            return Err(invalid(
                "geometry.inner_diameter_um",
                format!(
                    "must be smaller than the outer diameter ({} >= {})",
                    g.inner_diameter_um, g.outer_diameter_um
                ),
            ));
        }
        if g.segments < crate::geometry::MIN_SEGMENTS {
            return Err(invalid(
                "geometry.segments",
                format!("need >= {}, got {}", crate::geometry::MIN_SEGMENTS, g.segments),
            ));
        }
        if g.spacing_um <= g.outer_diameter_um / 2.0 {
            warnings.push(format!(
                "geometry.spacing_um = {} µm: neighbour site inside outer loop (radius {} µm)",
                g.spacing_um,
                g.outer_diameter_um / 2.0
            ));
        } else if g.spacing_um <= g.outer_diameter_um {
            warnings.push(format!(
                "geometry.spacing_um = {} µm: neighbouring outer loops ({} µm) overlap",
                g.spacing_um, g.outer_diameter_um
            ));
        }

        let s = self.spin_config();
        positive("spin.resonance", s.resonance.0)?;
        positive("spin.gyromagnetic", s.gyromagnetic.0)?;
        positive("spin.t_base", s.t_base.0)?;
        positive("spin.odmr_sigma", s.odmr_sigma.0)?;
        positive("spin.saturation_rabi", s.saturation_rabi.0)?;
        positive("spin.drive_rabi", s.drive_rabi.0)?;
        positive("spin.noisy_target", s.noisy_target.0)?;
        if !(s.contrast_max > 0.0 && s.contrast_max <= 1.0) {
            return Err(invalid("spin.contrast_max", format!("must lie in (0, 1], got {}", s.contrast_max)));
        }
        if s.shots < 100 {
            return Err(invalid("spin.shots", format!("need >= 100, got {}", s.shots)));
        }
        if let Some(n) = s.photons_per_shot {
            positive("spin.photons_per_shot", n)?;
        }
        if !(s.suppression >= 0.0 && s.suppression <= 1.0) {
            return Err(invalid("spin.suppression", format!("must lie in [0, 1], got {}", s.suppression)));
        }
        let calibrates = matches!(
            self.scenario,
            Some(ScenarioName::Fig4RabiSuite | ScenarioName::CoherencePenaltyCurve)
        );
        if calibrates && s.noisy_target.0 >= s.t_base.0 {
            warnings.push(format!(
                "spin.noisy_target {} ns is not below t_base {} ns; calibration will fail",
                s.noisy_target.0 * 1e9,
                s.t_base.0 * 1e9
            ));
        }
        if let Some(w) = &self.sweep {
            validate_sweep(w)?;
        }
        Ok(warnings)
    }
}

fn validate_sweep(w: &SweepConfig) -> Result<(), ConfigError> {
    if let (Some(a), Some(b)) = (w.x_from_um, w.x_to_um) {
        if !(b > a) {
            return Err(invalid("sweep.x_to_um", format!("must exceed x_from_um ({b} <= {a})")));
        }
    }
    let min_points = |field: &str, v: Option<usize>, min: usize| match v {
        Some(n) if n < min => Err(invalid(field, format!("need >= {min}, got {n}"))),
        _ => Ok(()),
    };
    min_points("sweep.x_points", w.x_points, 8)?;
    min_points("sweep.phase_points", w.phase_points, 3)?;
    min_points("sweep.tau_points", w.tau_points, 20)?;
    if let Some(t) = w.tau_max {
        if !(t.0 > 0.0) {
            return Err(invalid("sweep.tau_max", "must be > 0"));
        }
    }
    if let Some(f) = &w.ratio_factors {
        if f.is_empty() || f.iter().any(|k| !(k.is_finite() && *k >= 0.0)) {
            return Err(invalid("sweep.ratio_factors", "need a non-empty list of values >= 0"));
        }
    }
    if let Some(p) = &w.powers_mw {
        if p.len() < 2 || p.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(invalid("sweep.powers_mw", "need >= 2 values > 0"));
        }
    }
    for (field, v) in [
        ("sweep.loop_coupling_t_per_sqrt_mw", w.loop_coupling_t_per_sqrt_mw),
        ("sweep.antenna_coupling_t_per_sqrt_mw", w.antenna_coupling_t_per_sqrt_mw),
        ("sweep.photons_per_point", w.photons_per_point),
    ] {
        if let Some(v) = v {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(field, format!("must be > 0, got {v}")));
            }
        }
    }
    if let Some(d) = &w.imbalance_db {
        if d.iter().any(|v| v.is_nan() || *v > 0.0) {
            return Err(invalid("sweep.imbalance_db", "values must be <= 0 dB"));
        }
    }
    if let Some(d) = &w.noise_db {
        if d.iter().any(|v| v.is_nan()) {
            return Err(invalid("sweep.noise_db", "values must not be NaN"));
        }
    }
    if let Some(s) = &w.suppressions {
        if s.iter().any(|v| !(*v > 0.0 && *v <= 1.0)) {
            return Err(invalid("sweep.suppressions", "values must lie in (0, 1]"));
        }
    }
    Ok(())
}
