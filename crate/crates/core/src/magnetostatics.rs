//! Quasi-static field phasors of driven loop sets.
//!
//! Each loop is a closed polyline carrying a single-frequency current phasor.
//! The per-unit-current field of a straight segment uses the closed-form
//! finite-wire Biot–Savart expression, so a polyline is integrated exactly.
//! Circles are approximated by inscribed polygons; the O(1/N²) polygon error is
//! removed by one Richardson step that pairs the N-gon with the N/2-gon built
//! from every other vertex.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, LoopSpec, Point3, Segment, Shape, UM};

/// Vacuum permeability (T·m/A).
pub const MU0: f64 = 4e-7 * PI;

/// Powers below this (T²) are reported as −∞ dB.
pub const POWER_FLOOR: f64 = 1e-30;

/// Closest allowed approach of an evaluation point to a conductor.
pub const MIN_CONDUCTOR_DISTANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("evaluation point ({x:.4}, {y:.4}, {z:.4}) µm lies {distance:.3e} m from a conductor")]
    SingularPoint {
        x: f64,
        y: f64,
        z: f64,
        distance: f64,
    },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("power-law fit domain: {0}")]
    FitDomain(String),
}

/// Complex amplitude of a single-frequency drive. The phase is kept in [0, 2π).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phasor {
    pub amplitude: f64,
    pub phase: f64,
}

impl Phasor {
    pub const UNIT: Phasor = Phasor {
        amplitude: 1.0,
        phase: 0.0,
    };

    pub const ZERO: Phasor = Phasor {
        amplitude: 0.0,
        phase: 0.0,
    };

    pub fn new(amplitude: f64, phase: f64) -> Result<Self, FieldError> {
        let p = Phasor {
            amplitude,
            phase: normalize_phase(phase),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        if !(self.amplitude.is_finite() && self.amplitude >= 0.0) {
            return Err(FieldError::InvalidParameter {
                name: "amplitude",
                reason: format!("must be finite and >= 0, got {}", self.amplitude),
            });
        }
        if !self.phase.is_finite() {
            return Err(FieldError::InvalidParameter {
                name: "phase",
                reason: "must be finite".into(),
            });
        }
        Ok(())
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::from_polar(self.amplitude, self.phase)
    }

    pub fn shifted(self, dphi: f64) -> Self {
        Phasor {
            amplitude: self.amplitude,
            phase: normalize_phase(self.phase + dphi),
        }
    }

    pub fn scaled(self, k: f64) -> Self {
        Phasor {
            amplitude: self.amplitude * k,
            phase: self.phase,
        }
    }
}

pub fn normalize_phase(phi: f64) -> f64 {
    let p = phi.rem_euclid(TAU);
    if p >= TAU {
        0.0
    } else {
        p
    }
}

/// Complex field vector at a point (tesla for currents in amperes).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FieldPhasor {
    pub b: [Complex64; 3],
}

impl FieldPhasor {
    pub const ZERO: FieldPhasor = FieldPhasor {
        b: [Complex64 { re: 0.0, im: 0.0 }; 3],
    };

    pub fn bx(&self) -> Complex64 {
        self.b[0]
    }

    pub fn by(&self) -> Complex64 {
        self.b[1]
    }

    pub fn bz(&self) -> Complex64 {
        self.b[2]
    }

    /// |B|² = |Bx|² + |By|² + |Bz|².
    pub fn power_total(&self) -> f64 {
        self.b.iter().map(|c| c.norm_sqr()).sum()
    }

    /// |Bz|².
    pub fn power_z(&self) -> f64 {
        self.b[2].norm_sqr()
    }

    pub fn magnitude(&self) -> f64 {
        self.power_total().sqrt()
    }

    pub fn add(&self, o: &FieldPhasor) -> FieldPhasor {
        FieldPhasor {
            b: [self.b[0] + o.b[0], self.b[1] + o.b[1], self.b[2] + o.b[2]],
        }
    }

    pub fn scale(&self, k: Complex64) -> FieldPhasor {
        FieldPhasor {
            b: [self.b[0] * k, self.b[1] * k, self.b[2] * k],
        }
    }

    fn from_real(v: [f64; 3], k: Complex64) -> FieldPhasor {
        FieldPhasor {
            b: [k * v[0], k * v[1], k * v[2]],
        }
    }
}

/// Field of a straight unit-current segment from `a` to `b`, evaluated at `p`.
#[inline]
fn segment_unit_field(a: Point3, b: Point3, p: Point3) -> [f64; 3] {
    let r1 = p.sub(a);
    let r2 = p.sub(b);
    let n1 = r1.norm();
    let n2 = r2.norm();
    let denom = n1 * n2 * (n1 * n2 + r1.dot(r2));
    if denom == 0.0 {
        return [0.0; 3];
    }
    let c = r1.cross(r2);
    let k = MU0 / (4.0 * PI) * (n1 + n2) / denom;
    [k * c.x, k * c.y, k * c.z]
}

fn polyline_unit_field(vs: &[Point3], stride: usize, p: Point3) -> [f64; 3] {
    let n = vs.len();
    let mut acc = [0.0; 3];
    let mut i = 0;
    while i < n {
        let j = (i + stride) % n;
        let f = segment_unit_field(vs[i], vs[j], p);
        acc[0] += f[0];
        acc[1] += f[1];
        acc[2] += f[2];
        i += stride;
    }
    acc
}

/// Raw Biot–Savart sum over a segment list, each segment weighted by its current phasor.
pub fn segment_sum(segments: &[Segment], p: Point3) -> FieldPhasor {
    segments.iter().fold(FieldPhasor::ZERO, |acc, s| {
        let f = segment_unit_field(s.start, s.end, p);
        acc.add(&FieldPhasor::from_real(f, s.current.to_complex()))
    })
}

fn check_clearance(vs: &[Point3], p: Point3, current: Phasor) -> Result<(), FieldError> {
    let n = vs.len();
    let mut closest = f64::INFINITY;
    for i in 0..n {
        let seg = Segment {
            start: vs[i],
            end: vs[(i + 1) % n],
            current,
        };
        closest = closest.min(seg.distance_to(p));
    }
    if closest <= MIN_CONDUCTOR_DISTANCE {
        let [x, y, z] = p.to_um();
        return Err(FieldError::SingularPoint {
            x,
            y,
            z,
            distance: closest,
        });
    }
    Ok(())
}

/// Cheap bounding test: points well away from the loop outline cannot touch it.
fn near_outline(spec: &LoopSpec, p: Point3) -> bool {
    let dz = (p.z - spec.centre.z).abs();
    if dz > MIN_CONDUCTOR_DISTANCE {
        return false;
    }
    let rho = (p.x - spec.centre.x).hypot(p.y - spec.centre.y);
    let reach = spec.shape.outer_radius();
    let inner = match spec.shape {
        Shape::Circle { diameter } => {
            let r = diameter / 2.0;
            r * (PI / spec.segment_count as f64).cos()
        }
        Shape::Rectangle { width, height } => 0.5 * width.min(height),
    };
    rho >= inner - 2.0 * MIN_CONDUCTOR_DISTANCE && rho <= reach + 2.0 * MIN_CONDUCTOR_DISTANCE
}

/// Real field per unit current of one loop at `p` (no drive phasor applied).
pub fn unit_field(spec: &LoopSpec, p: Point3) -> Result<[f64; 3], FieldError> {
    let n = spec.segment_count;
    let vs = geometry::vertices(spec, n);
    if near_outline(spec, p) {
        check_clearance(&vs, p, spec.drive)?;
    }
    let fine = polyline_unit_field(&vs, 1, p);
    match spec.shape {
        Shape::Circle { .. } if n % 2 == 0 => {
            let coarse = polyline_unit_field(&vs, 2, p);
            Ok([
                (4.0 * fine[0] - coarse[0]) / 3.0,
                (4.0 * fine[1] - coarse[1]) / 3.0,
                (4.0 * fine[2] - coarse[2]) / 3.0,
            ])
        }
        _ => Ok(fine),
    }
}

/// Field phasor of a loop set at `p`: Σ drive × per-unit-current field.
pub fn field_at(loops: &[LoopSpec], p: Point3) -> Result<FieldPhasor, FieldError> {
    if !p.is_finite() {
        return Err(FieldError::InvalidParameter {
            name: "point",
            reason: "coordinates must be finite".into(),
        });
    }
    let mut acc = FieldPhasor::ZERO;
    for spec in loops {
        let f = unit_field(spec, p)?;
        acc = acc.add(&FieldPhasor::from_real(f, spec.drive.to_complex()));
    }
    Ok(acc)
}

/// Field phasors on an x-y grid at height `z_um`, row-major with y outer.
pub fn field_map(
    loops: &[LoopSpec],
    xs_um: &[f64],
    ys_um: &[f64],
    z_um: f64,
) -> Result<Vec<FieldPhasor>, FieldError> {
    let points: Vec<Point3> = ys_um
        .iter()
        .flat_map(|&y| xs_um.iter().map(move |&x| Point3::from_um(x, y, z_um)))
        .collect();
    points.par_iter().map(|&p| field_at(loops, p)).collect()
}

/// `10·log10(value / reference)`, with −∞ for values under the power floor.
pub fn power_db(value: f64, reference: f64) -> Result<f64, FieldError> {
    if !(reference > 0.0) {
        return Err(FieldError::InvalidParameter {
            name: "reference power",
            reason: format!("must be > 0, got {reference}"),
        });
    }
    if value < POWER_FLOOR {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(10.0 * (value / reference).log10())
}

/// Which power a fit or a dB column refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerMetric {
    Total,
    Z,
}

impl PowerMetric {
    pub fn of(self, f: &FieldPhasor) -> f64 {
        match self {
            PowerMetric::Total => f.power_total(),
            PowerMetric::Z => f.power_z(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineScan {
    pub start: Point3,
    /// Unit direction in the x-y plane or 3D.
    pub direction: Point3,
    /// Distance along the axis (metres), strictly increasing.
    pub positions: Vec<f64>,
    pub points: Vec<Point3>,
    pub fields: Vec<FieldPhasor>,
    /// |B|² used as 0 dB. Zero when the loop set is empty.
    pub reference_power: f64,
}

impl LineScan {
    pub fn powers(&self, metric: PowerMetric) -> Vec<f64> {
        self.fields.iter().map(|f| metric.of(f)).collect()
    }

    pub fn db(&self, metric: PowerMetric) -> Result<Vec<f64>, FieldError> {
        self.fields
            .iter()
            .map(|f| power_db(metric.of(f), self.reference_power))
            .collect()
    }

    pub fn with_reference(mut self, reference_power: f64) -> Self {
        self.reference_power = reference_power;
        self
    }

    /// Nearest sample to a given axis position (µm).
    pub fn sample_near(&self, position_um: f64) -> Option<usize> {
        let target = position_um * UM;
        (0..self.positions.len()).min_by(|&a, &b| {
            (self.positions[a] - target)
                .abs()
                .partial_cmp(&(self.positions[b] - target).abs())
                .unwrap()
        })
    }

    pub const CSV_HEADER: &'static str =
        "x_um,z_um,Bx_re,Bx_im,By_re,By_im,Bz_re,Bz_im,P_total,P_z,P_total_db,P_z_db";

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for (p, f) in self.points.iter().zip(&self.fields) {
            let [x, _, z] = p.to_um();
            let db = |v: f64| match power_db(v, self.reference_power) {
                Ok(d) => crate::table::fmt_f64(d),
                Err(_) => "nan".to_string(),
            };
            writeln!(
                w,
                "{},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{},{}",
                crate::table::fmt_f64(x),
                crate::table::fmt_f64(z),
                f.b[0].re,
                f.b[0].im,
                f.b[1].re,
                f.b[1].im,
                f.b[2].re,
                f.b[2].im,
                f.power_total(),
                f.power_z(),
                db(f.power_total()),
                db(f.power_z()),
            )?;
        }
        Ok(())
    }
}

/// Sample the field along `start + t·direction` (t in µm), with every point
/// lifted by `z_height_um` along z. The first sample's |B|² becomes the 0 dB reference.
pub fn line_scan(
    loops: &[LoopSpec],
    start: Point3,
    direction: Point3,
    positions_um: &[f64],
    z_height_um: f64,
) -> Result<LineScan, FieldError> {
    if positions_um.len() < 2 {
        return Err(FieldError::InvalidParameter {
            name: "positions",
            reason: format!("need at least 2 samples, got {}", positions_um.len()),
        });
    }
    if positions_um.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(FieldError::InvalidParameter {
            name: "positions",
            reason: "must be strictly increasing".into(),
        });
    }
    let norm = direction.norm();
    if !(norm > 0.0) {
        return Err(FieldError::InvalidParameter {
            name: "direction",
            reason: "must be non-zero".into(),
        });
    }
    let dir = direction.scale(1.0 / norm);
    let positions: Vec<f64> = positions_um.iter().map(|t| t * UM).collect();
    let points: Vec<Point3> = positions
        .iter()
        .map(|&t| {
            let q = start.add(dir.scale(t));
            Point3::from_m(q.x, q.y, q.z + z_height_um * UM)
        })
        .collect();
    let fields = points
        .par_iter()
        .map(|&p| field_at(loops, p))
        .collect::<Result<Vec<_>, _>>()?;
    let reference_power = fields[0].power_total();
    Ok(LineScan {
        start,
        direction: dir,
        positions,
        points,
        fields,
        reference_power,
    })
}

/// `n` evenly spaced values from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![a],
        _ => (0..n)
            .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub std_err: f64,
    pub samples: usize,
}

/// Least-squares slope of log10(y) against log10(x).
pub fn fit_log_log(xs: &[f64], ys: &[f64]) -> Result<PowerLawFit, FieldError> {
    if xs.len() != ys.len() {
        return Err(FieldError::FitDomain("x and y lengths differ".into()));
    }
    if xs.len() < 5 {
        return Err(FieldError::FitDomain(format!(
            "need at least 5 samples in the window, got {}",
            xs.len()
        )));
    }
    if let Some(i) = (0..xs.len()).find(|&i| !(xs[i] > 0.0 && ys[i] > 0.0)) {
        return Err(FieldError::FitDomain(format!(
            "non-positive value at x = {:.6e}: y = {:.3e}",
            xs[i], ys[i]
        )));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.log10()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.log10()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(FieldError::FitDomain("all x values identical".into()));
    }
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let sse: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - icpt - slope * x).powi(2))
        .sum();
    let std_err = (sse / (n - 2.0) / sxx).sqrt();
    Ok(PowerLawFit {
        exponent: slope,
        std_err,
        samples: xs.len(),
    })
}

fn window(scan: &LineScan, x_min_um: f64, x_max_um: f64) -> Vec<usize> {
    (0..scan.positions.len())
        .filter(|&i| {
            let x = scan.positions[i] / UM;
            x >= x_min_um && x <= x_max_um
        })
        .collect()
}

/// Power-law exponent of |B|² (or |Bz|²) against axis distance inside [x_min, x_max] µm.
pub fn fit_power_law(
    scan: &LineScan,
    x_min_um: f64,
    x_max_um: f64,
    metric: PowerMetric,
) -> Result<PowerLawFit, FieldError> {
    let idx = window(scan, x_min_um, x_max_um);
    let xs: Vec<f64> = idx.iter().map(|&i| scan.positions[i]).collect();
    let ys: Vec<f64> = idx.iter().map(|&i| metric.of(&scan.fields[i])).collect();
    fit_log_log(&xs, &ys)
}

/// Power-law exponent of the field amplitude |B| against axis distance.
pub fn amplitude_decay_exponent(
    scan: &LineScan,
    x_min_um: f64,
    x_max_um: f64,
) -> Result<PowerLawFit, FieldError> {
    let idx = window(scan, x_min_um, x_max_um);
    let xs: Vec<f64> = idx.iter().map(|&i| scan.positions[i]).collect();
    let ys: Vec<f64> = idx.iter().map(|&i| scan.fields[i].magnitude()).collect();
    fit_log_log(&xs, &ys)
}
