//! Monte-Carlo Rabi traces under random-phase crosstalk and their decay fits.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bloch::{bloch_evolve, Interval};
use super::{invalid, schedule, DriveTone, NoiseModel, PhasePolicy, SpinError, SpinParams};
use crate::fit::{levenberg_marquardt, linear_least_squares, Bounds, FitError, LmFit};
use crate::magnetostatics::{linspace, normalize_phase};
use crate::rng::{stream, Purpose};
use crate::table::fmt_f64;

/// Default pulse-length grid: 0 to 1000 ns in 5 ns steps.
pub fn default_tau_grid() -> Vec<f64> {
    linspace(0.0, 1000e-9, 201)
}

/// `A·cos(2πfτ + φ)·exp(−τ/T) + c` with one-sigma errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub frequency_hz: f64,
    pub frequency_err_hz: f64,
    pub t_rabi: f64,
    pub t_rabi_err: f64,
    pub amplitude: f64,
    pub amplitude_err: f64,
    pub phase: f64,
    pub offset: f64,
    pub offset_err: f64,
    pub sse: f64,
}

impl DecayFit {
    pub fn eval(&self, tau: f64) -> f64 {
        let decay = if self.t_rabi.is_finite() {
            (-tau / self.t_rabi).exp()
        } else {
            1.0
        };
        self.amplitude * (TAU * self.frequency_hz * tau + self.phase).cos() * decay + self.offset
    }
}

fn decay_model(p: &[f64], t: f64) -> f64 {
    // p = [A, f (MHz), φ, k (1/µs), c], t in µs
    p[0] * (TAU * p[1] * t + p[2]).cos() * (-p[3] * t).exp() + p[4]
}

fn periodogram_peak(t: &[f64], y: &[f64], mean: f64) -> f64 {
    let span = t[t.len() - 1] - t[0];
    let mut dts: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    dts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let dt = dts[dts.len() / 2];
    let (fmin, fmax) = (0.5 / span, 0.5 / dt);
    let grid = linspace(fmin, fmax, 4000);
    let mut best = (fmin, -1.0);
    for f in grid {
        let s: Complex64 = t
            .iter()
            .zip(y)
            .map(|(&ti, &yi)| Complex64::from_polar(yi - mean, -TAU * f * ti))
            .sum();
        if s.norm_sqr() > best.1 {
            best = (f, s.norm_sqr());
        }
    }
    best.0
}

/// Decay rate from a straight-line fit to the log of per-period half ranges.
fn envelope_rate(t: &[f64], y: &[f64], f: f64) -> Option<f64> {
    let period = 1.0 / f;
    let mut centres = Vec::new();
    let mut amps = Vec::new();
    let mut start = t[0];
    while start + period <= t[t.len() - 1] {
        let w: Vec<f64> = t
            .iter()
            .zip(y)
            .filter(|(ti, _)| **ti >= start && **ti < start + period)
            .map(|(_, yi)| *yi)
            .collect();
        if w.len() >= 3 {
            let hi = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = w.iter().cloned().fold(f64::INFINITY, f64::min);
            if hi > lo {
                centres.push(start + 0.5 * period);
                amps.push((0.5 * (hi - lo)).ln());
            }
        }
        start += period;
    }
    if centres.len() < 2 {
        return None;
    }
    let ones = vec![1.0; centres.len()];
    let (c, _, _) = linear_least_squares(&[ones, centres], &amps).ok()?;
    let k = -c[1];
    (k.is_finite() && k > 0.0).then_some(k)
}

/// Fit a decaying sinusoid to a Rabi trace (`taus` in seconds).
///
/// Starts from the strongest periodogram line and a log-envelope decay rate,
/// then refines with Levenberg–Marquardt plus five perturbed restarts.
pub fn fit_decaying_sinusoid(taus: &[f64], values: &[f64]) -> Result<DecayFit, FitError> {
    const RESTARTS: usize = 5;
    if taus.len() != values.len() || taus.len() < 20 {
        return Err(FitError::TooFewSamples {
            needed: 20,
            got: taus.len().min(values.len()),
        });
    }
    let t: Vec<f64> = taus.iter().map(|v| v * 1e6).collect();
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread = hi - lo;
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if !(spread > 1e-9 * (1.0 + mean.abs())) {
        return Err(FitError::NoOscillation { spread });
    }
    let span = t[t.len() - 1] - t[0];
    let f0 = periodogram_peak(&t, values, mean);
    let k0 = envelope_rate(&t, values, f0).unwrap_or(1.0 / span);

    let start_from = |f: f64, k: f64| -> Option<Vec<f64>> {
        let e: Vec<f64> = t.iter().map(|&ti| (-k * ti).exp()).collect();
        let cosb: Vec<f64> = t.iter().zip(&e).map(|(&ti, ei)| ei * (TAU * f * ti).cos()).collect();
        let sinb: Vec<f64> = t.iter().zip(&e).map(|(&ti, ei)| ei * (TAU * f * ti).sin()).collect();
        let (c, _, _) = linear_least_squares(&[cosb, sinb, vec![1.0; t.len()]], values).ok()?;
        let amp = c[0].hypot(c[1]);
        let phase = (-c[1]).atan2(c[0]);
        Some(vec![amp, f, phase, k, c[2]])
    };

    let scales = [spread, f0, 1.0, k0.max(1.0 / span), spread];
    let bounds = Bounds {
        lower: vec![f64::NEG_INFINITY, 1e-3 / span, f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY],
        upper: vec![f64::INFINITY; 5],
    };
    let mut rng = stream(0, Purpose::FitRestart, taus.len() as u64);
    let mut best: Option<LmFit> = None;
    for attempt in 0..=RESTARTS {
        let (f, k) = if attempt == 0 {
            (f0, k0)
        } else {
            let u: f64 = rng.gen_range(-1.0..1.0);
            let v: f64 = rng.gen_range(-1.0..1.0);
            (f0 * (1.0 + 0.05 * u), k0 * 2f64.powf(v))
        };
        let Some(p0) = start_from(f, k) else { continue };
        let Ok(fit) = levenberg_marquardt(decay_model, &t, values, &p0, &scales, &bounds, 500)
        else {
            continue;
        };
        if fit.params.iter().all(|v| v.is_finite())
            && best.as_ref().map_or(true, |b| fit.sse < b.sse)
        {
            best = Some(fit);
        }
    }
    let Some(fit) = best else {
        return Err(FitError::NonConvergence {
            restarts: RESTARTS,
            best_residual: f64::INFINITY,
        });
    };
    let p = &fit.params;
    let e = &fit.errors;
    // an oscillation must be resolved and carry at least two visible periods
    if !fit.converged || !(p[0].abs() > 3.0 * e[0]) || p[1] * span < 2.0 {
        if !(p[0].abs() > 3.0 * e[0]) {
            return Err(FitError::NoOscillation { spread });
        }
        return Err(FitError::NonConvergence {
            restarts: RESTARTS,
            best_residual: fit.sse,
        });
    }
    let (amplitude, phase) = if p[0] < 0.0 {
        (-p[0], normalize_phase(p[2] + PI))
    } else {
        (p[0], normalize_phase(p[2]))
    };
    let k = p[3];
    let (t_rabi, t_rabi_err) = if k > 0.0 {
        (1e-6 / k, 1e-6 * e[3] / (k * k))
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    Ok(DecayFit {
        frequency_hz: p[1] * 1e6,
        frequency_err_hz: e[1] * 1e6,
        t_rabi,
        t_rabi_err,
        amplitude,
        amplitude_err: e[0],
        phase,
        offset: p[4],
        offset_err: e[4],
        sse: fit.sse,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RabiTrace {
    /// Pulse lengths (s), strictly increasing.
    pub taus: Vec<f64>,
    /// Excited-state population after decoherence (and readout noise, if enabled).
    pub population: Vec<f64>,
    pub fit_values: Vec<f64>,
    pub fit: DecayFit,
    pub seed: u64,
}

/// Fit summary record of a Rabi trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RabiSummary {
    pub frequency_hz: f64,
    pub t_rabi_ns: f64,
    pub t_rabi_err_ns: f64,
    pub amplitude: f64,
    pub offset: f64,
    pub seed: u64,
}

impl RabiTrace {
    pub const CSV_HEADER: &'static str = "tau_ns,population,fit_value";

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for i in 0..self.taus.len() {
            writeln!(
                w,
                "{},{},{}",
                fmt_f64(self.taus[i] * 1e9),
                fmt_f64(self.population[i]),
                fmt_f64(self.fit_values[i])
            )?;
        }
        Ok(())
    }

    pub fn summary(&self) -> RabiSummary {
        RabiSummary {
            frequency_hz: self.fit.frequency_hz,
            t_rabi_ns: self.fit.t_rabi * 1e9,
            t_rabi_err_ns: self.fit.t_rabi_err * 1e9,
            amplitude: self.fit.amplitude,
            offset: self.fit.offset,
            seed: self.seed,
        }
    }
}

fn check_taus(taus: &[f64]) -> Result<(), SpinError> {
    if taus.is_empty() {
        return Err(invalid("tau grid", "must not be empty"));
    }
    if taus.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(invalid("tau grid", "values must be finite and >= 0"));
    }
    if taus.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("tau grid", "must be strictly increasing"));
    }
    Ok(())
}

/// Shot-averaged excited population with the decay envelope applied,
/// before readout noise and fitting.
pub fn mean_population(
    params: &SpinParams,
    drive: &DriveTone,
    noise: &NoiseModel,
    taus: &[f64],
) -> Result<Vec<f64>, SpinError> {
    params.validate()?;
    drive.validate()?;
    noise.validate()?;
    check_taus(taus)?;
    if params.shots < 100 {
        return Err(invalid("shots", format!("need >= 100, got {}", params.shots)));
    }
    let amp = noise.effective_rabi_hz();
    let noise_tones: Vec<DriveTone> = (0..params.shots as u64)
        .map(|shot| {
            let phase = match noise.policy {
                PhasePolicy::Fixed => noise.phase,
                PhasePolicy::RandomPerShot => {
                    stream(params.seed, Purpose::NoisePhase, shot).gen::<f64>() * TAU
                }
            };
            DriveTone {
                rabi_hz: amp,
                phase,
                detuning_hz: drive.detuning_hz,
            }
        })
        .collect();
    let resonant = drive.detuning_hz == 0.0;
    let shot_freqs: Vec<f64> = noise_tones
        .iter()
        .map(|n| (drive.phasor() + n.phasor()).norm())
        .collect();
    let shots = params.shots as f64;
    let out = taus
        .par_iter()
        .map(|&tau| {
            let mean = if resonant {
                shot_freqs
                    .iter()
                    .map(|f| (PI * f * tau).sin().powi(2))
                    .sum::<f64>()
                    / shots
            } else {
                noise_tones
                    .iter()
                    .map(|n| bloch_evolve(&[Interval::new(tau, vec![*drive, *n])]).excited)
                    .sum::<f64>()
                    / shots
            };
            let env = (-tau / params.t_base).exp();
            0.5 + env * (mean - 0.5)
        })
        .collect();
    Ok(out)
}

/// Photon-counting readout: signal window vs reference window, converted back
/// to an excited-population estimate.
fn apply_readout_noise(params: &SpinParams, pop: &mut [f64], photons: f64) {
    let ratio = schedule::REFERENCE_WINDOW / schedule::SIGNAL_WINDOW;
    let c = params.contrast_max;
    for (i, p) in pop.iter_mut().enumerate() {
        let mut rng = stream(params.seed, Purpose::ReadoutNoise, i as u64);
        let sig_mean = photons * (1.0 - c * *p);
        let sig = Poisson::new(sig_mean.max(1e-12)).map(|d| d.sample(&mut rng)).unwrap_or(0.0);
        let refc = Poisson::new(photons * ratio).map(|d| d.sample(&mut rng)).unwrap_or(0.0);
        if refc > 0.0 {
            let norm = sig / (refc / ratio);
            *p = ((1.0 - norm) / c).clamp(-1.2, 1.2);
        }
    }
}

/// Simulate and fit a Rabi experiment with a crosstalk tone of random phase per shot.
pub fn rabi_trace(
    params: &SpinParams,
    drive: &DriveTone,
    noise: &NoiseModel,
    taus: &[f64],
) -> Result<RabiTrace, SpinError> {
    let mut population = mean_population(params, drive, noise, taus)?;
    if let Some(n) = params.photons_per_shot {
        apply_readout_noise(params, &mut population, n);
    }
    let fit = fit_decaying_sinusoid(taus, &population)?;
    let fit_values = taus.iter().map(|&t| fit.eval(t)).collect();
    Ok(RabiTrace {
        taus: taus.to_vec(),
        population,
        fit_values,
        fit,
        seed: params.seed,
    })
}

/// Fitted decay time for a random-phase noise amplitude; failed fits count as fully dephased.
fn decay_time(params: &SpinParams, drive: &DriveTone, noise_hz: f64, taus: &[f64]) -> Result<f64, SpinError> {
    match rabi_trace(params, drive, &NoiseModel::random(noise_hz), taus) {
        Ok(tr) => Ok(tr.fit.t_rabi),
        Err(SpinError::Fit(_)) => Ok(0.0),
        Err(e) => Err(e),
    }
}

/// Find the random-phase noise amplitude Ω_N/2π whose fitted T_Rabi equals `target_t`.
pub fn calibrate_noise(
    params: &SpinParams,
    drive: &DriveTone,
    target_t: f64,
    taus: &[f64],
) -> Result<f64, SpinError> {
    params.validate()?;
    if !(target_t > 0.0) {
        return Err(invalid("target_t", format!("must be > 0, got {target_t}")));
    }
    if target_t >= params.t_base {
        return Err(SpinError::InfeasibleTarget {
            target_ns: target_t * 1e9,
            baseline_ns: params.t_base * 1e9,
        });
    }
    let mut lo = 0.0;
    let mut hi = 0.05 * drive.rabi_hz.max(1e3);
    let mut doublings = 0;
    while decay_time(params, drive, hi, taus)? > target_t {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 20 {
            return Err(SpinError::CalibrationBracket {
                target_ns: target_t * 1e9,
            });
        }
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        let t = decay_time(params, drive, mid, taus)?;
        if t > target_t {
            lo = mid;
        } else {
            hi = mid;
        }
        if ((t - target_t) / target_t).abs() < 1e-3 || (hi - lo) < 1e-6 * hi {
            return Ok(mid);
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherencePenalty {
    /// `1 − T_noisy / T_clean`.
    pub reduction: f64,
    pub reduction_err: f64,
    pub t_clean: f64,
    pub t_noisy: f64,
}

/// Fractional T_Rabi loss from a random-phase tone at `noise_power_db`
/// relative to the drive power.
pub fn coherence_penalty(
    params: &SpinParams,
    drive: &DriveTone,
    noise_power_db: f64,
    taus: &[f64],
) -> Result<CoherencePenalty, SpinError> {
    if noise_power_db.is_nan() {
        return Err(invalid("noise_power_db", "must not be NaN"));
    }
    let noise_hz = drive.rabi_hz * 10f64.powf(noise_power_db / 20.0);
    penalty_for(params, drive, &NoiseModel::random(noise_hz), taus)
}

/// Fractional T_Rabi loss caused by an arbitrary noise model.
pub fn penalty_for(
    params: &SpinParams,
    drive: &DriveTone,
    noise: &NoiseModel,
    taus: &[f64],
) -> Result<CoherencePenalty, SpinError> {
    let clean = rabi_trace(params, drive, &NoiseModel::NONE, taus)?.fit;
    let noisy = rabi_trace(params, drive, noise, taus)?.fit;
    let reduction = 1.0 - noisy.t_rabi / clean.t_rabi;
    let a = noisy.t_rabi_err / clean.t_rabi;
    let b = noisy.t_rabi * clean.t_rabi_err / clean.t_rabi.powi(2);
    Ok(CoherencePenalty {
        reduction,
        reduction_err: a.hypot(b),
        t_clean: clean.t_rabi,
        t_noisy: noisy.t_rabi,
    })
}
