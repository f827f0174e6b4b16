//! Exact two-level evolution under piecewise-constant drives.
//!
//! States are amplitudes in the frame rotating at the qubit frequency. Within
//! an interval whose tones share one detuning the propagator is a closed-form
//! SU(2) rotation; intervals mixing detunings are sub-stepped.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::DriveTone;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub duration: f64,
    pub tones: Vec<DriveTone>,
}

impl Interval {
    pub fn new(duration: f64, tones: Vec<DriveTone>) -> Self {
        Interval { duration, tones }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Populations {
    pub ground: f64,
    pub excited: f64,
}

type Mat2 = [[Complex64; 2]; 2];

const I0: Complex64 = Complex64 { re: 0.0, im: 0.0 };

fn mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut c = [[I0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

fn identity() -> Mat2 {
    let one = Complex64::new(1.0, 0.0);
    [[one, I0], [I0, one]]
}

/// `exp(−i·2π·H·t)` for `H = ½(hx σx + hy σy + hz σz)` in Hz.
fn rotation(hx: f64, hy: f64, hz: f64, t: f64) -> Mat2 {
    let w = (hx * hx + hy * hy + hz * hz).sqrt();
    if w == 0.0 || t == 0.0 {
        return identity();
    }
    let (s, c) = (PI * w * t).sin_cos();
    let (nx, ny, nz) = (hx / w, hy / w, hz / w);
    let i = Complex64::new(0.0, 1.0);
    // cos·I − i·sin·(n·σ)
    [
        [Complex64::new(c, 0.0) - i * s * nz, -i * s * Complex64::new(nx, -ny)],
        [-i * s * Complex64::new(nx, ny), Complex64::new(c, 0.0) + i * s * nz],
    ]
}

/// `V(t) = exp(−iπΔt σz)`, the map from the drive frame to the qubit frame.
fn frame(delta: f64, t: f64) -> Mat2 {
    let a = PI * delta * t;
    [
        [Complex64::from_polar(1.0, -a), I0],
        [I0, Complex64::from_polar(1.0, a)],
    ]
}

fn dagger(m: &Mat2) -> Mat2 {
    [
        [m[0][0].conj(), m[1][0].conj()],
        [m[0][1].conj(), m[1][1].conj()],
    ]
}

fn interval_propagator(iv: &Interval, t0: f64) -> Mat2 {
    let t1 = t0 + iv.duration;
    let shared = iv
        .tones
        .first()
        .map(|t| t.detuning_hz)
        .filter(|d| iv.tones.iter().all(|t| t.detuning_hz == *d));
    match shared {
        Some(delta) => {
            let sum: Complex64 = iv.tones.iter().map(DriveTone::phasor).sum();
            let u = rotation(sum.re, sum.im, -delta, iv.duration);
            mul(&frame(delta, t1), &mul(&u, &dagger(&frame(delta, t0))))
        }
        None if iv.tones.is_empty() => identity(),
        None => {
            let fmax = iv
                .tones
                .iter()
                .map(|t| t.detuning_hz.abs() + t.rabi_hz)
                .sum::<f64>();
            let steps = ((fmax * iv.duration * 2000.0).ceil() as usize).max(1);
            let dt = iv.duration / steps as f64;
            let mut u = identity();
            for k in 0..steps {
                let tm = t0 + (k as f64 + 0.5) * dt;
                let h: Complex64 = iv
                    .tones
                    .iter()
                    .map(|t| t.phasor() * Complex64::from_polar(1.0, 2.0 * PI * t.detuning_hz * tm))
                    .sum();
                u = mul(&rotation(h.re, h.im, 0.0, dt), &u);
            }
            u
        }
    }
}

/// Evolve |0⟩ through the schedule and return the final populations.
pub fn bloch_evolve(schedule: &[Interval]) -> Populations {
    let mut u = identity();
    let mut t = 0.0;
    for iv in schedule {
        u = mul(&interval_propagator(iv, t), &u);
        t += iv.duration;
    }
    let excited = u[1][0].norm_sqr().clamp(0.0, 1.0);
    Populations {
        ground: (1.0 - excited).clamp(0.0, 1.0),
        excited,
    }
}
