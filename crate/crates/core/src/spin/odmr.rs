//! Continuous-wave ODMR dips and their contrast under two interfering tones.

use std::io::Write;

use num_complex::Complex64;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::{invalid, DriveTone, SpinError, SpinParams};
use crate::cancellation::{fit_cosine, CosineFit};
use crate::fit::{levenberg_marquardt, linear_least_squares, Bounds, FitError};
use crate::magnetostatics::linspace;
use crate::rng::{stream, Purpose};
use crate::table::fmt_f64;

/// Gaussian dip fitted to a normalised PL spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdmrFit {
    pub centre_hz: f64,
    pub sigma_hz: f64,
    /// Fractional dip depth.
    pub contrast: f64,
    pub contrast_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdmrSpectrum {
    pub freqs: Vec<f64>,
    /// PL normalised to the off-resonant level.
    pub pl: Vec<f64>,
    pub fit: OdmrFit,
    /// Noise-free contrast implied by the drive power.
    pub model_contrast: f64,
}

impl OdmrSpectrum {
    pub const CSV_HEADER: &'static str = "freq_hz,pl_norm";

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for (f, p) in self.freqs.iter().zip(&self.pl) {
            writeln!(w, "{},{}", fmt_f64(*f), fmt_f64(*p))?;
        }
        Ok(())
    }
}

/// Default scan: resonance ± 4σ in 81 points.
pub fn default_freq_grid(params: &SpinParams) -> Vec<f64> {
    let w = 4.0 * params.odmr_sigma_hz;
    linspace(params.resonance_hz - w, params.resonance_hz + w, 81)
}

/// Contrast of the summed resonant tones, linear in power up to saturation.
pub fn model_contrast(params: &SpinParams, tones: &[DriveTone]) -> f64 {
    let sum: Complex64 = tones.iter().map(|t| t.phasor()).sum();
    let p = sum.norm_sqr() / params.saturation_rabi_hz.powi(2);
    params.contrast_max * p.min(1.0)
}

fn gaussian(f: f64, centre: f64, sigma: f64) -> f64 {
    (-(f - centre).powi(2) / (2.0 * sigma * sigma)).exp()
}

fn fit_dip(params: &SpinParams, freqs: &[f64], pl: &[f64]) -> Result<OdmrFit, FitError> {
    let (f0, s0) = (params.resonance_hz, params.odmr_sigma_hz);
    let g: Vec<f64> = freqs.iter().map(|&f| gaussian(f, f0, s0)).collect();
    // fixed-shape linear fit: pl = a − b·g
    let neg: Vec<f64> = g.iter().map(|v| -v).collect();
    let (c, e, _) = linear_least_squares(&[vec![1.0; freqs.len()], neg], pl)?;
    let (a, b) = (c[0], c[1]);
    let linear = OdmrFit {
        centre_hz: f0,
        sigma_hz: s0,
        contrast: b / a,
        contrast_err: e[1] / a,
    };
    if !(b > 5.0 * e[1]) || !e[1].is_finite() || e[1] == 0.0 {
        return Ok(linear);
    }
    // work in units of σ around the nominal centre
    let xs: Vec<f64> = freqs.iter().map(|f| (f - f0) / s0).collect();
    let model = |p: &[f64], x: f64| p[0] - p[1] * (-(x - p[2]).powi(2) / (2.0 * p[3] * p[3])).exp();
    let bounds = Bounds {
        lower: vec![f64::NEG_INFINITY, f64::NEG_INFINITY, -4.0, 0.05],
        upper: vec![f64::INFINITY, f64::INFINITY, 4.0, 10.0],
    };
    let Ok(fit) = levenberg_marquardt(model, &xs, pl, &[a, b, 0.0, 1.0], &[1.0, b, 1.0, 1.0], &bounds, 200)
    else {
        return Ok(linear);
    };
    let p = &fit.params;
    if !p.iter().all(|v| v.is_finite()) || p[0] <= 0.0 {
        return Ok(linear);
    }
    Ok(OdmrFit {
        centre_hz: f0 + p[2] * s0,
        sigma_hz: p[3] * s0,
        contrast: p[1] / p[0],
        contrast_err: fit.errors[1] / p[0],
    })
}

/// Simulate and fit a normalised ODMR spectrum under the given tones.
///
/// `photons_per_point` enables Poisson shot noise; `index` selects the noise stream.
pub fn odmr_spectrum(
    params: &SpinParams,
    tones: &[DriveTone],
    freqs: &[f64],
    photons_per_point: Option<f64>,
    index: u64,
) -> Result<OdmrSpectrum, SpinError> {
    params.validate()?;
    for t in tones {
        t.validate()?;
    }
    if freqs.len() < 8 {
        return Err(invalid("frequency grid", format!("need >= 8 points, got {}", freqs.len())));
    }
    if let Some(n) = photons_per_point {
        if !(n.is_finite() && n > 0.0) {
            return Err(invalid("photons_per_point", format!("must be > 0, got {n}")));
        }
    }
    let c = model_contrast(params, tones);
    let mut rng = stream(params.seed, Purpose::OdmrNoise, index);
    let pl: Vec<f64> = freqs
        .iter()
        .map(|&f| {
            let ideal = 1.0 - c * gaussian(f, params.resonance_hz, params.odmr_sigma_hz);
            match photons_per_point {
                Some(n) => Poisson::new(n * ideal)
                    .map(|d| d.sample(&mut rng) / n)
                    .unwrap_or(0.0),
                None => ideal,
            }
        })
        .collect();
    let fit = fit_dip(params, freqs, &pl)?;
    Ok(OdmrSpectrum {
        freqs: freqs.to_vec(),
        pl,
        fit,
        model_contrast: c,
    })
}

/// ODMR contrast while the outer tone phase steps relative to the inner tone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseContrast {
    pub phases: Vec<f64>,
    pub contrasts: Vec<f64>,
    pub contrast_errs: Vec<f64>,
    pub fit: CosineFit,
    pub min_phase: f64,
    /// `(offset − amplitude)/(offset + amplitude)` of the cosine fit.
    pub normalized_min: f64,
}

impl PhaseContrast {
    pub const CSV_HEADER: &'static str = "phase_rad,contrast,contrast_err,fit";

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for i in 0..self.phases.len() {
            writeln!(
                w,
                "{},{},{},{}",
                fmt_f64(self.phases[i]),
                fmt_f64(self.contrasts[i]),
                fmt_f64(self.contrast_errs[i]),
                fmt_f64(self.fit.eval(self.phases[i]))
            )?;
        }
        Ok(())
    }
}

/// Sweep the applied phase difference Δφ and fit the contrast.
///
/// The outer tone reaches the qubit at `inner.phase + Δφ + static_offset`.
pub fn contrast_vs_phase(
    params: &SpinParams,
    inner: &DriveTone,
    outer: &DriveTone,
    static_offset: f64,
    phases: &[f64],
    photons_per_point: Option<f64>,
) -> Result<PhaseContrast, SpinError> {
    if phases.len() < 3 {
        return Err(invalid("phases", format!("need >= 3, got {}", phases.len())));
    }
    let freqs = default_freq_grid(params);
    let mut contrasts = Vec::with_capacity(phases.len());
    let mut errs = Vec::with_capacity(phases.len());
    for (i, &p) in phases.iter().enumerate() {
        let o = DriveTone {
            phase: inner.phase + p + static_offset,
            ..*outer
        };
        let s = odmr_spectrum(params, &[*inner, o], &freqs, photons_per_point, i as u64)?;
        contrasts.push(s.fit.contrast);
        errs.push(s.fit.contrast_err);
    }
    let fit = fit_cosine(phases, &contrasts).ok_or(FitError::Singular)?;
    let denom = fit.offset + fit.amplitude;
    Ok(PhaseContrast {
        phases: phases.to_vec(),
        contrasts,
        contrast_errs: errs,
        min_phase: fit.phase_of_min(),
        normalized_min: if denom != 0.0 {
            (fit.offset - fit.amplitude) / denom
        } else {
            f64::NAN
        },
        fit,
    })
}
