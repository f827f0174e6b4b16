//! Loop shapes, their polyline discretization and the hexagonal site lattice.
//!
//! Every length crossing this module's public surface is given in micrometres
//! and stored in metres.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::magnetostatics::Phasor;

/// Metres per micrometre.
pub const UM: f64 = 1e-6;

/// Default polygon resolution for circular loops.
pub const DEFAULT_CIRCLE_SEGMENTS: usize = 1024;

/// Smallest segment count accepted for any loop.
pub const MIN_SEGMENTS: usize = 16;

/// Longest straight piece used when splitting rectangle sides.
pub const MAX_RECT_SEGMENT_UM: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
}

fn invalid(name: &'static str, reason: impl Into<String>) -> GeometryError {
    GeometryError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

/// A point in the device frame. Coordinates are held in metres.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ORIGIN: Point3 = Point3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// Build a point from micrometre coordinates.
    pub fn from_um(x: f64, y: f64, z: f64) -> Self {
        Point3 {
            x: x * UM,
            y: y * UM,
            z: z * UM,
        }
    }

    pub fn from_m(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn to_um(self) -> [f64; 3] {
        [self.x / UM, self.y / UM, self.z / UM]
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn sub(self, o: Point3) -> Point3 {
        Point3::from_m(self.x - o.x, self.y - o.y, self.z - o.z)
    }

    pub fn add(self, o: Point3) -> Point3 {
        Point3::from_m(self.x + o.x, self.y + o.y, self.z + o.z)
    }

    pub fn scale(self, k: f64) -> Point3 {
        Point3::from_m(self.x * k, self.y * k, self.z * k)
    }

    pub fn dot(self, o: Point3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Point3) -> Point3 {
        Point3::from_m(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(self, o: Point3) -> f64 {
        self.sub(o).norm()
    }
}

/// Outline of a planar loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    /// Circle of the given diameter (metres).
    Circle { diameter: f64 },
    /// Axis-aligned rectangle (metres).
    Rectangle { width: f64, height: f64 },
}

impl Shape {
    pub fn circle_um(diameter_um: f64) -> Self {
        Shape::Circle {
            diameter: diameter_um * UM,
        }
    }

    pub fn rectangle_um(width_um: f64, height_um: f64) -> Self {
        Shape::Rectangle {
            width: width_um * UM,
            height: height_um * UM,
        }
    }

    /// Exact perimeter of the ideal outline.
    pub fn perimeter(&self) -> f64 {
        match *self {
            Shape::Circle { diameter } => PI * diameter,
            Shape::Rectangle { width, height } => 2.0 * (width + height),
        }
    }

    /// Largest distance from the centre to the outline.
    pub fn outer_radius(&self) -> f64 {
        match *self {
            Shape::Circle { diameter } => diameter / 2.0,
            Shape::Rectangle { width, height } => 0.5 * width.hypot(height),
        }
    }
}

/// Current circulation sense viewed from +z.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Winding {
    #[default]
    CounterClockwise,
    Clockwise,
}

impl Winding {
    pub fn sign(self) -> f64 {
        match self {
            Winding::CounterClockwise => 1.0,
            Winding::Clockwise => -1.0,
        }
    }

    pub fn from_sign(sign: i32) -> Result<Self, GeometryError> {
        match sign {
            1 => Ok(Winding::CounterClockwise),
            -1 => Ok(Winding::Clockwise),
            other => Err(invalid("winding", format!("expected +1 or -1, got {other}"))),
        }
    }
}

/// A driven planar current loop lying in the plane `z = centre.z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopSpec {
    pub shape: Shape,
    pub centre: Point3,
    pub winding: Winding,
    pub drive: Phasor,
    pub segment_count: usize,
}

impl LoopSpec {
    pub fn new(
        shape: Shape,
        centre: Point3,
        winding: Winding,
        drive: Phasor,
        segment_count: usize,
    ) -> Result<Self, GeometryError> {
        let spec = LoopSpec {
            shape,
            centre,
            winding,
            drive,
            segment_count,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Counter-clockwise circle at `centre` with unit drive and default resolution.
    pub fn circle_um(diameter_um: f64, centre: Point3) -> Result<Self, GeometryError> {
        Self::new(
            Shape::circle_um(diameter_um),
            centre,
            Winding::CounterClockwise,
            Phasor::UNIT,
            DEFAULT_CIRCLE_SEGMENTS,
        )
    }

    pub fn with_drive(mut self, drive: Phasor) -> Self {
        self.drive = drive;
        self
    }

    pub fn with_segments(mut self, n: usize) -> Result<Self, GeometryError> {
        self.segment_count = n;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        match self.shape {
            Shape::Circle { diameter } => {
                if !(diameter.is_finite() && diameter > 0.0) {
                    return Err(invalid("diameter", format!("must be > 0, got {diameter} m")));
                }
            }
            Shape::Rectangle { width, height } => {
                if !(width.is_finite() && width > 0.0 && height.is_finite() && height > 0.0) {
                    return Err(invalid(
                        "rectangle",
                        format!("width and height must be > 0, got {width} x {height} m"),
                    ));
                }
            }
        }
        if !self.centre.is_finite() {
            return Err(invalid("centre", "coordinates must be finite"));
        }
        if self.segment_count < MIN_SEGMENTS {
            return Err(invalid(
                "segment_count",
                format!("must be >= {MIN_SEGMENTS}, got {}", self.segment_count),
            ));
        }
        self.drive.validate().map_err(|e| invalid("drive", e.to_string()))
    }
}

/// Straight current element. The current phasor is the parent loop's drive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: Point3,
    pub end: Point3,
    pub current: Phasor,
}

impl Segment {
    pub fn length(&self) -> f64 {
        self.end.distance(self.start)
    }

    /// Shortest distance from `p` to this segment.
    pub fn distance_to(&self, p: Point3) -> f64 {
        let d = self.end.sub(self.start);
        let len2 = d.dot(d);
        let t = if len2 > 0.0 {
            (p.sub(self.start).dot(d) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        p.distance(self.start.add(d.scale(t)))
    }
}

/// Polyline vertices of a loop, closed implicitly (last vertex connects to the first).
pub(crate) fn vertices(spec: &LoopSpec, n: usize) -> Vec<Point3> {
    let c = spec.centre;
    let sense = spec.winding.sign();
    match spec.shape {
        Shape::Circle { diameter } => {
            let r = diameter / 2.0;
            (0..n)
                .map(|k| {
                    let t = sense * TAU * k as f64 / n as f64;
                    Point3::from_m(c.x + r * t.cos(), c.y + r * t.sin(), c.z)
                })
                .collect()
        }
        Shape::Rectangle { width, height } => {
            let (hw, hh) = (width / 2.0, height / 2.0);
            let mut corners = [
                (hw, -hh),
                (hw, hh),
                (-hw, hh),
                (-hw, -hh),
            ];
            if sense < 0.0 {
                corners.reverse();
            }
            let per_side = |len: f64| -> usize {
                let by_len = (len / (MAX_RECT_SEGMENT_UM * UM)).ceil() as usize;
                by_len.max(n.div_ceil(4)).max(1)
            };
            let mut out = Vec::new();
            for i in 0..4 {
                let (ax, ay) = corners[i];
                let (bx, by) = corners[(i + 1) % 4];
                let m = per_side((bx - ax).hypot(by - ay));
                for j in 0..m {
                    let t = j as f64 / m as f64;
                    out.push(Point3::from_m(
                        c.x + ax + t * (bx - ax),
                        c.y + ay + t * (by - ay),
                        c.z,
                    ));
                }
            }
            out
        }
    }
}

fn close(vs: &[Point3], current: Phasor) -> Vec<Segment> {
    (0..vs.len())
        .map(|i| Segment {
            start: vs[i],
            end: vs[(i + 1) % vs.len()],
            current,
        })
        .collect()
}

/// Discretize a loop into a closed polyline of straight segments.
///
/// Circles become the inscribed regular polygon with `segment_count` sides.
/// Rectangle sides are split into pieces no longer than 0.5 µm, with at least
/// `segment_count / 4` pieces per side.
pub fn discretize(spec: &LoopSpec) -> Vec<Segment> {
    close(&vertices(spec, spec.segment_count), spec.drive)
}

/// Same as [`discretize`] but with an explicit resolution, skipping the
/// minimum-count invariant. Used for convergence checks.
pub fn discretize_with(spec: &LoopSpec, n: usize) -> Vec<Segment> {
    close(&vertices(spec, n.max(3)), spec.drive)
}

pub fn polyline_length(segments: &[Segment]) -> f64 {
    segments.iter().map(Segment::length).sum()
}

/// Signed area of the polyline projected onto the x-y plane.
/// Positive for counter-clockwise circulation.
pub fn signed_area(segments: &[Segment]) -> f64 {
    0.5 * segments
        .iter()
        .map(|s| s.start.x * s.end.y - s.end.x * s.start.y)
        .sum::<f64>()
}

/// Hexagonal neighbour order of a site relative to the origin site.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub position: Point3,
    /// Ring index on the lattice: 0 for the origin, then 1, 2, ... .
    pub ring: u32,
    /// Nearest-neighbour order (1 = s, 2 = √3·s, 3 = 2·s, ...) by distinct distance.
    pub nn_order: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteLayout {
    pub spacing: f64,
    pub ring_count: u32,
    pub sites: Vec<Site>,
}

impl SiteLayout {
    pub fn by_order(&self, order: u32) -> impl Iterator<Item = &Site> {
        self.sites.iter().filter(move |s| s.nn_order == order)
    }

    /// Distinct neighbour distances (metres), ascending, excluding the origin.
    pub fn shell_distances(&self) -> Vec<f64> {
        let mut d: Vec<f64> = Vec::new();
        for s in &self.sites {
            if s.ring == 0 {
                continue;
            }
            let r = s.position.norm();
            if !d.iter().any(|&x| (x - r).abs() <= 1e-9 * r) {
                d.push(r);
            }
        }
        d.sort_by(|a, b| a.partial_cmp(b).unwrap());
        d
    }
}

/// Triangular lattice (hexagonal packing) of sites around the origin.
///
/// Uses axial coordinates (q, r); a site belongs to ring `max(|q|, |r|, |q + r|)`.
pub fn hex_sites(spacing_um: f64, ring_count: u32) -> Result<SiteLayout, GeometryError> {
    if !(spacing_um.is_finite() && spacing_um > 0.0) {
        return Err(invalid("spacing", format!("must be > 0, got {spacing_um} µm")));
    }
    let s = spacing_um * UM;
    let n = ring_count as i64;
    let mut raw = Vec::new();
    for q in -n..=n {
        for r in -n..=n {
            let ring = q.abs().max(r.abs()).max((q + r).abs());
            if ring > n {
                continue;
            }
            let x = s * (q as f64 + 0.5 * r as f64);
            let y = s * (3f64.sqrt() / 2.0) * r as f64;
            raw.push((Point3::from_m(x, y, 0.0), ring as u32));
        }
    }
    // order sites by distance, then angle, for a stable listing
    raw.sort_by(|(a, _), (b, _)| {
        let (da, db) = (a.norm(), b.norm());
        da.partial_cmp(&db)
            .unwrap()
            .then(a.y.atan2(a.x).partial_cmp(&b.y.atan2(b.x)).unwrap())
    });
    let mut sites = Vec::with_capacity(raw.len());
    let mut order = 0u32;
    let mut last = 0.0f64;
    for (p, ring) in raw {
        let d = p.norm();
        if ring > 0 && (d - last).abs() > 1e-9 * d {
            order += 1;
            last = d;
        }
        sites.push(Site {
            position: p,
            ring,
            nn_order: order,
        });
    }
    Ok(SiteLayout {
        spacing: s,
        ring_count,
        sites,
    })
}
