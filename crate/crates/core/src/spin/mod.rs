//! Two-level spin response to resonant drive tones plus crosstalk noise.
//!
//! Frequencies are in Hz (Rabi amplitudes are Ω/2π), times in seconds.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fit::FitError;

pub mod bloch;
pub mod odmr;
pub mod rabi;

pub use bloch::{bloch_evolve, Interval, Populations};
pub use odmr::{contrast_vs_phase, default_freq_grid, model_contrast, odmr_spectrum, OdmrFit, OdmrSpectrum, PhaseContrast};
pub use rabi::{
    calibrate_noise, coherence_penalty, default_tau_grid, fit_decaying_sinusoid, penalty_for,
    rabi_trace, CoherencePenalty, DecayFit, RabiSummary, RabiTrace,
};

/// Readout schedule of the pulsed sequence (seconds).
pub mod schedule {
    pub const POLARIZE: f64 = 3e-6;
    pub const READOUT: f64 = 3e-6;
    /// Photon-counting window at the start of the readout pulse.
    pub const SIGNAL_WINDOW: f64 = 0.5e-6;
    /// Normalisation window at the end of the readout pulse.
    pub const REFERENCE_WINDOW: f64 = 1.5e-6;
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpinError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("closed-form population needs resonant tones; tone {index} has detuning {detuning_hz} Hz")]
    OffResonant { index: usize, detuning_hz: f64 },
    #[error("target decay time {target_ns:.1} ns is not below the baseline {baseline_ns:.1} ns")]
    InfeasibleTarget { target_ns: f64, baseline_ns: f64 },
    #[error("noise calibration could not bracket {target_ns:.1} ns")]
    CalibrationBracket { target_ns: f64 },
    #[error(transparent)]
    Fit(#[from] FitError),
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> SpinError {
    SpinError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinParams {
    /// Qubit transition frequency.
    pub resonance_hz: f64,
    /// Ground-state zero-field splitting, informational only.
    pub zero_field_splitting_hz: f64,
    /// Gyromagnetic ratio (Hz/T).
    pub gyromagnetic_hz_per_t: f64,
    /// Phenomenological decay of the Rabi envelope.
    pub t_base: f64,
    /// Maximum readout contrast.
    pub contrast_max: f64,
    pub shots: usize,
    pub seed: u64,
    /// Mean signal-window photons per trace point; `None` disables readout noise.
    pub photons_per_shot: Option<f64>,
    /// Gaussian standard deviation of the ODMR dip.
    pub odmr_sigma_hz: f64,
    /// Rabi amplitude at which ODMR contrast saturates (P = P_sat).
    pub saturation_rabi_hz: f64,
}

impl Default for SpinParams {
    fn default() -> Self {
        SpinParams {
            resonance_hz: 3.14e9,
            zero_field_splitting_hz: 2.87e9,
            gyromagnetic_hz_per_t: 2.80e10,
            t_base: 761e-9,
            contrast_max: 0.3,
            shots: 4000,
            seed: 1,
            photons_per_shot: None,
            odmr_sigma_hz: 5e6,
            saturation_rabi_hz: 20e6,
        }
    }
}

impl SpinParams {
    pub fn validate(&self) -> Result<(), SpinError> {
        let pos = |name, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(invalid(name, format!("must be > 0, got {v}")))
            }
        };
        pos("resonance", self.resonance_hz)?;
        pos("gyromagnetic_ratio", self.gyromagnetic_hz_per_t)?;
        pos("t_base", self.t_base)?;
        pos("odmr_sigma", self.odmr_sigma_hz)?;
        pos("saturation_rabi", self.saturation_rabi_hz)?;
        if !(self.contrast_max > 0.0 && self.contrast_max <= 1.0) {
            return Err(invalid(
                "contrast_max",
                format!("must lie in (0, 1], got {}", self.contrast_max),
            ));
        }
        if self.shots == 0 {
            return Err(invalid("shots", "must be positive"));
        }
        if let Some(n) = self.photons_per_shot {
            pos("photons_per_shot", n)?;
        }
        Ok(())
    }
}

/// A microwave tone as seen by the qubit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveTone {
    /// Ω/2π in Hz.
    pub rabi_hz: f64,
    pub phase: f64,
    pub detuning_hz: f64,
}

impl DriveTone {
    pub fn resonant(rabi_hz: f64, phase: f64) -> Self {
        DriveTone {
            rabi_hz,
            phase,
            detuning_hz: 0.0,
        }
    }

    pub fn phasor(&self) -> Complex64 {
        Complex64::from_polar(self.rabi_hz, self.phase)
    }

    pub fn validate(&self) -> Result<(), SpinError> {
        if !(self.rabi_hz.is_finite() && self.rabi_hz >= 0.0) {
            return Err(invalid("rabi", format!("must be >= 0, got {}", self.rabi_hz)));
        }
        if !(self.phase.is_finite() && self.detuning_hz.is_finite()) {
            return Err(invalid("tone", "phase and detuning must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhasePolicy {
    Fixed,
    /// Uniform on [0, 2π), redrawn every shot.
    RandomPerShot,
}

/// Crosstalk tone reaching the qubit from a neighbouring site.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Ω_N/2π before suppression.
    pub rabi_hz: f64,
    pub policy: PhasePolicy,
    /// Phase used by [`PhasePolicy::Fixed`].
    pub phase: f64,
    /// Power suppression factor s in [0, 1]; amplitude scales by √s.
    pub suppression: f64,
}

impl NoiseModel {
    pub const NONE: NoiseModel = NoiseModel {
        rabi_hz: 0.0,
        policy: PhasePolicy::RandomPerShot,
        phase: 0.0,
        suppression: 1.0,
    };

    pub fn random(rabi_hz: f64) -> Self {
        NoiseModel {
            rabi_hz,
            ..Self::NONE
        }
    }

    pub fn with_suppression(mut self, s: f64) -> Self {
        self.suppression = s;
        self
    }

    /// Amplitude reaching the qubit after suppression.
    pub fn effective_rabi_hz(&self) -> f64 {
        self.rabi_hz * self.suppression.sqrt()
    }

    pub fn validate(&self) -> Result<(), SpinError> {
        if !(self.rabi_hz.is_finite() && self.rabi_hz >= 0.0) {
            return Err(invalid("noise rabi", format!("must be >= 0, got {}", self.rabi_hz)));
        }
        if !(0.0..=1.0).contains(&self.suppression) {
            return Err(invalid(
                "suppression",
                format!("must lie in [0, 1], got {}", self.suppression),
            ));
        }
        Ok(())
    }
}

/// Rabi frequency of a transverse field: `f = γ·B⊥ / 2`.
pub fn rabi_frequency(b_perp_t: f64, gyromagnetic_hz_per_t: f64) -> f64 {
    gyromagnetic_hz_per_t * b_perp_t.max(0.0) / 2.0
}

/// Excited-state probability after `tau` seconds of equal-frequency resonant
/// tones: `sin²(π·|Σ f_k e^{iφ_k}|·τ)`.
pub fn shot_population(tau: f64, tones: &[DriveTone]) -> Result<f64, SpinError> {
    let mut sum = Complex64::new(0.0, 0.0);
    for (index, t) in tones.iter().enumerate() {
        if t.detuning_hz != 0.0 {
            return Err(SpinError::OffResonant {
                index,
                detuning_hz: t.detuning_hz,
            });
        }
        sum += t.phasor();
    }
    Ok((PI * sum.norm() * tau).sin().powi(2))
}

/// Detuning whose off-resonant excitation `Ω²/(Ω² + Δ²)` equals the power
/// suppression `s`: `Δ = Ω·√(1/s − 1)`.
pub fn equivalent_detuning(noise_rabi_hz: f64, suppression: f64) -> Result<f64, SpinError> {
    if !(suppression > 0.0 && suppression <= 1.0) {
        return Err(invalid(
            "suppression",
            format!("must lie in (0, 1], got {suppression}"),
        ));
    }
    if !(noise_rabi_hz > 0.0 && noise_rabi_hz.is_finite()) {
        return Err(invalid("noise rabi", format!("must be > 0, got {noise_rabi_hz}")));
    }
    Ok(noise_rabi_hz * (1.0 / suppression - 1.0).sqrt())
}

/// Drive is fast enough for coherent control when one Rabi period is under a tenth of T₂.
pub fn drive_quality_ok(rabi_hz: f64, t2: f64) -> bool {
    rabi_hz > 0.0 && 1.0 / rabi_hz < t2 / 10.0
}
