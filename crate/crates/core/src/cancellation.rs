//! Active crosstalk cancellation for a concentric inner/outer loop pair.
//!
//! The outer loop is driven with amplitude `ratio × inner amplitude` and a
//! phase offset so that its out-of-plane field at a chosen neighbour site is
//! equal and opposite to the inner loop's.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{LoopSpec, Point3, UM};
use crate::magnetostatics::{
    field_at, linspace, normalize_phase, power_db, unit_field, FieldError, Phasor, PowerMetric,
    POWER_FLOOR,
};
use crate::table::{fmt_f64, Table};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CancelError {
    #[error("loops must be concentric and coplanar: {0}")]
    NotConcentric(String),
    #[error("target coincides with the loop centre")]
    TargetAtCentre,
    #[error("outer loop has no out-of-plane field at the target; cannot cancel")]
    Unsolvable,
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CancellationSolution {
    /// Outer amplitude divided by inner amplitude.
    pub ratio: f64,
    /// Outer phase minus inner phase (radians).
    pub phase_offset: f64,
    pub target: Point3,
    /// Common loop centre lifted to the target height.
    pub local: Point3,
    pub inner_drive: Phasor,
    pub outer_drive: Phasor,
    /// |Bz(target)|² relative to |B(local)|² with both loops driven.
    pub residual_power_db: f64,
    /// |B(target)|² relative to |B(local)|².
    pub residual_total_db: f64,
    /// Dual-loop |B(local)|² over inner-only |B(local)|².
    pub local_power_factor: f64,
    /// Inner:outer |B|² at the local centre with the solved drives applied.
    pub centre_power_ratio: f64,
    /// Inner:outer |B|² at the local centre for equal unit drive currents.
    pub unit_centre_power_ratio: f64,
}

impl CancellationSolution {
    /// Copies of the two loops carrying the solved drives.
    pub fn apply(&self, inner: &LoopSpec, outer: &LoopSpec) -> [LoopSpec; 2] {
        [
            inner.with_drive(self.inner_drive),
            outer.with_drive(self.outer_drive),
        ]
    }

    /// Like [`apply`](Self::apply) but with the outer amplitude scaled by `k`.
    pub fn apply_scaled(&self, inner: &LoopSpec, outer: &LoopSpec, k: f64) -> [LoopSpec; 2] {
        [
            inner.with_drive(self.inner_drive),
            outer.with_drive(self.outer_drive.scaled(k)),
        ]
    }
}

fn check_pair(inner: &LoopSpec, outer: &LoopSpec) -> Result<(), CancelError> {
    let d = inner.centre.distance(outer.centre);
    let scale = inner.shape.outer_radius().max(outer.shape.outer_radius());
    if d > 1e-9 * scale {
        return Err(CancelError::NotConcentric(format!(
            "centres are {:.3e} µm apart",
            d / UM
        )));
    }
    Ok(())
}

fn local_point(inner: &LoopSpec, target: Point3) -> Point3 {
    Point3::from_m(inner.centre.x, inner.centre.y, target.z)
}

/// Solve the outer drive that nulls Bz at `target`.
pub fn solve(
    inner: &LoopSpec,
    outer: &LoopSpec,
    target: Point3,
) -> Result<CancellationSolution, CancelError> {
    check_pair(inner, outer)?;
    let local = local_point(inner, target);
    if (target.x - local.x).hypot(target.y - local.y) < 1e-9 {
        return Err(CancelError::TargetAtCentre);
    }
    let bi = unit_field(inner, target)?[2];
    let bo = unit_field(outer, target)?[2];
    if bo == 0.0 || !(bo.abs() > 1e-15 * bi.abs().max(f64::MIN_POSITIVE)) {
        return Err(CancelError::Unsolvable);
    }
    // outer must contribute -bi: ratio·e^{i·offset}·bo = -bi
    let phase_offset = if bi / bo > 0.0 { PI } else { 0.0 };
    let sign = phase_offset.cos();
    let mut ratio = (bi / bo).abs();

    // refine on the signed drive-weighted Bz; the residual is linear in the ratio
    let amp = inner.drive.amplitude;
    let inner_drive = inner.drive;
    let residual = |r: f64| -> Result<f64, CancelError> {
        let outer_drive = Phasor::new(amp * r, inner_drive.phase + phase_offset)?;
        let f = field_at(
            &[inner.with_drive(inner_drive), outer.with_drive(outer_drive)],
            target,
        )?;
        // project onto the inner drive phase to get a real signed value
        Ok((f.bz() * inner_drive.to_complex().conj()).re)
    };
    if amp > 0.0 {
        let slope = sign * bo * amp * amp;
        for _ in 0..3 {
            let g = residual(ratio)?;
            if g == 0.0 {
                break;
            }
            let next = ratio - g / slope;
            if !(next.is_finite() && next >= 0.0) || next == ratio {
                break;
            }
            ratio = next;
        }
    }

    let outer_drive = Phasor::new(amp * ratio, inner_drive.phase + phase_offset)?;
    let pair = [inner.with_drive(inner_drive), outer.with_drive(outer_drive)];
    let at_target = field_at(&pair, target)?;
    let at_local = field_at(&pair, local)?;
    let inner_local = field_at(&pair[..1], local)?;
    let outer_local = field_at(&pair[1..], local)?;
    let ref_power = at_local.power_total();
    let unit_inner = unit_field(inner, local)?;
    let unit_outer = unit_field(outer, local)?;
    let norm2 = |v: [f64; 3]| v.iter().map(|c| c * c).sum::<f64>();

    Ok(CancellationSolution {
        ratio,
        phase_offset: normalize_phase(phase_offset),
        target,
        local,
        inner_drive,
        outer_drive,
        residual_power_db: power_db(at_target.power_z(), ref_power)?,
        residual_total_db: power_db(at_target.power_total(), ref_power)?,
        local_power_factor: ref_power / inner_local.power_total(),
        centre_power_ratio: inner_local.power_total() / outer_local.power_total(),
        unit_centre_power_ratio: norm2(unit_inner) / norm2(unit_outer),
    })
}

/// Power at `probe` relative to |B|² at the local centre, with the solution applied.
pub fn residual_at(
    solution: &CancellationSolution,
    inner: &LoopSpec,
    outer: &LoopSpec,
    probe: Point3,
    metric: PowerMetric,
) -> Result<f64, CancelError> {
    let pair = solution.apply(inner, outer);
    let reference = field_at(&pair, solution.local)?.power_total();
    let p = field_at(&pair, probe)?;
    Ok(power_db(metric.of(&p), reference)?)
}

/// Straight scan line used by the ratio sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanAxis {
    pub start: Point3,
    pub direction: Point3,
    pub from_um: f64,
    pub to_um: f64,
    pub samples: usize,
}

impl ScanAxis {
    /// +x axis at height `z_um` from `from_um` to `to_um`.
    pub fn along_x(from_um: f64, to_um: f64, z_um: f64) -> Self {
        ScanAxis {
            start: Point3::from_um(0.0, 0.0, z_um),
            direction: Point3::from_m(1.0, 0.0, 0.0),
            from_um,
            to_um,
            samples: 1000,
        }
    }

    fn point(&self, t_um: f64) -> Point3 {
        let n = self.direction.norm();
        self.start.add(self.direction.scale(t_um * UM / n))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullPoint {
    pub factor: f64,
    /// Position of min |Bz|² along the axis (µm).
    pub position_um: f64,
    /// |Bz|² at the null relative to |B|² at the local centre.
    pub power_db: f64,
    /// The minimum sits on the scan boundary rather than inside it.
    pub boundary: bool,
}

const GOLDEN: f64 = 0.618_033_988_749_894_8;

fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        c
    } else {
        d
    }
}

/// Locate the |Bz|² minimum along `axis` for each outer-amplitude factor
/// (outer amplitude = factor × solved ratio × inner amplitude).
pub fn sweep_ratio(
    inner: &LoopSpec,
    outer: &LoopSpec,
    base: &CancellationSolution,
    ratio_factors: &[f64],
    axis: &ScanAxis,
) -> Result<Vec<NullPoint>, CancelError> {
    if let Some(k) = ratio_factors.iter().find(|k| !(k.is_finite() && **k >= 0.0)) {
        return Err(CancelError::InvalidParameter {
            name: "ratio_factors",
            reason: format!("factors must be >= 0, got {k}"),
        });
    }
    if axis.samples < 3 || !(axis.to_um > axis.from_um) {
        return Err(CancelError::InvalidParameter {
            name: "scan_axis",
            reason: "need >= 3 samples over a non-empty interval".into(),
        });
    }
    ratio_factors
        .par_iter()
        .map(|&k| {
            let pair = base.apply_scaled(inner, outer, k);
            let reference = field_at(&pair, base.local)?.power_total();
            let pz = |t: f64| field_at(&pair, axis.point(t)).map(|f| f.power_z());
            let grid = linspace(axis.from_um, axis.to_um, axis.samples);
            let vals = grid.iter().map(|&t| pz(t)).collect::<Result<Vec<_>, _>>()?;
            let i = (0..vals.len())
                .min_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap())
                .unwrap();
            let boundary = i == 0 || i == vals.len() - 1;
            let x = if boundary {
                grid[i]
            } else {
                golden_min(
                    |t| pz(t).unwrap_or(f64::INFINITY),
                    grid[i - 1],
                    grid[i + 1],
                    1e-12 * axis.to_um.abs().max(1.0),
                )
            };
            let p = pz(x)?;
            Ok(NullPoint {
                factor: k,
                position_um: x,
                power_db: power_db(p, reference)?,
                boundary,
            })
        })
        .collect()
}

pub fn null_table(points: &[NullPoint]) -> Table {
    let mut t = Table::new(&["ratio_factor", "null_x_um", "null_power_db"]);
    for p in points {
        t.push(vec![p.factor, p.position_um, p.power_db]);
    }
    t
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSweep {
    pub phases: Vec<f64>,
    /// |Bz|² at the local site.
    pub local_power: Vec<f64>,
    /// |Bz|² at the remote site.
    pub remote_power: Vec<f64>,
    pub remote_fit: CosineFit,
}

impl PhaseSweep {
    pub const CSV_HEADER: &'static str = "phase_rad,P_local,P_remote,P_remote_db";

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for i in 0..self.phases.len() {
            let db = power_db(self.remote_power[i], self.local_power[i])
                .map(fmt_f64)
                .unwrap_or_else(|_| "nan".into());
            writeln!(
                w,
                "{},{:e},{:e},{}",
                fmt_f64(self.phases[i]),
                self.local_power[i],
                self.remote_power[i],
                db
            )?;
        }
        Ok(())
    }
}

/// `offset + amplitude·cos(φ − phase_of_max)` fitted by linear least squares.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CosineFit {
    pub offset: f64,
    pub amplitude: f64,
    /// Phase of the maximum, in [0, 2π).
    pub phase_of_max: f64,
    /// RMS residual divided by the mean of the data.
    pub relative_residual: f64,
    pub r_squared: f64,
}

impl CosineFit {
    pub fn phase_of_min(&self) -> f64 {
        normalize_phase(self.phase_of_max + PI)
    }

    pub fn eval(&self, phi: f64) -> f64 {
        self.offset + self.amplitude * (phi - self.phase_of_max).cos()
    }
}

/// Fit `c0 + c1·cos φ + c2·sin φ` and report it in offset/amplitude/phase form.
pub fn fit_cosine(phases: &[f64], values: &[f64]) -> Option<CosineFit> {
    if phases.len() != values.len() || phases.len() < 3 {
        return None;
    }
    let rows: Vec<[f64; 3]> = phases.iter().map(|&p| [1.0, p.cos(), p.sin()]).collect();
    let mut ata = nalgebra::Matrix3::<f64>::zeros();
    let mut aty = nalgebra::Vector3::<f64>::zeros();
    for (r, &y) in rows.iter().zip(values) {
        let v = nalgebra::Vector3::new(r[0], r[1], r[2]);
        ata += v * v.transpose();
        aty += v * y;
    }
    let c = ata.lu().solve(&aty)?;
    let amplitude = c[1].hypot(c[2]);
    let phase_of_max = normalize_phase(c[2].atan2(c[1]));
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let mut sse = 0.0;
    let mut sst = 0.0;
    for (r, &y) in rows.iter().zip(values) {
        let pred = c[0] + c[1] * r[1] + c[2] * r[2];
        sse += (y - pred).powi(2);
        sst += (y - mean).powi(2);
    }
    Some(CosineFit {
        offset: c[0],
        amplitude,
        phase_of_max,
        relative_residual: if mean != 0.0 {
            (sse / n).sqrt() / mean.abs()
        } else {
            f64::INFINITY
        },
        r_squared: if sst > 0.0 { 1.0 - sse / sst } else { f64::NAN },
    })
}

/// |Bz|² at the local and remote points while the outer phase (relative to
/// the inner drive) steps through `phases`, at outer amplitude `ratio × inner`.
pub fn sweep_phase(
    inner: &LoopSpec,
    outer: &LoopSpec,
    ratio: f64,
    phases: &[f64],
    local: Point3,
    remote: Point3,
) -> Result<PhaseSweep, CancelError> {
    if phases.len() < 3 {
        return Err(CancelError::InvalidParameter {
            name: "phases",
            reason: "need at least 3 phase samples".into(),
        });
    }
    // per-unit fields once; the sweep only rotates the outer contribution
    let drive = inner.drive;
    let fi_l = field_at(&[*inner], local)?;
    let fi_r = field_at(&[*inner], remote)?;
    let unit_outer = outer.with_drive(Phasor::UNIT);
    let fo_l = field_at(&[unit_outer], local)?;
    let fo_r = field_at(&[unit_outer], remote)?;
    let mut local_power = Vec::with_capacity(phases.len());
    let mut remote_power = Vec::with_capacity(phases.len());
    for &dphi in phases {
        let k = Phasor::new(drive.amplitude * ratio, drive.phase + dphi)?.to_complex();
        local_power.push(fi_l.add(&fo_l.scale(k)).power_z());
        remote_power.push(fi_r.add(&fo_r.scale(k)).power_z());
    }
    let remote_fit = fit_cosine(phases, &remote_power).ok_or(CancelError::InvalidParameter {
        name: "phases",
        reason: "phase grid does not determine a cosine".into(),
    })?;
    Ok(PhaseSweep {
        phases: phases.to_vec(),
        local_power,
        remote_power,
        remote_fit,
    })
}

/// Residual crosstalk power at `probe` relative to the inner-only crosstalk,
/// when the outer amplitude is off by a relative `10^(imbalance_db/20)`.
pub fn extinction_ratio(
    solution: &CancellationSolution,
    inner: &LoopSpec,
    outer: &LoopSpec,
    probe: Point3,
    imbalance_db: f64,
) -> Result<f64, CancelError> {
    if imbalance_db.is_nan() || imbalance_db > 0.0 {
        return Err(CancelError::InvalidParameter {
            name: "imbalance_db",
            reason: format!("must be <= 0 dB, got {imbalance_db}"),
        });
    }
    let eps = 10f64.powf(imbalance_db / 20.0);
    let pair = solution.apply_scaled(inner, outer, 1.0 + eps);
    let mitigated = field_at(&pair, probe)?.power_z();
    if mitigated < POWER_FLOOR {
        return Ok(0.0);
    }
    let unmitigated = field_at(&pair[..1], probe)?.power_z();
    if unmitigated == 0.0 {
        return Err(CancelError::Unsolvable);
    }
    Ok(mitigated / unmitigated)
}

/// Amplitude imbalance (dB) that leaves a given residual power ratio at the target.
pub fn imbalance_for_extinction(ratio: f64) -> f64 {
    10.0 * ratio.log10()
}
