#![allow(dead_code)]
//! Independent oracles shared by integration tests.

use std::f64::consts::PI;

pub const MU0: f64 = 4e-7 * PI;

/// Complete elliptic integrals K(m), E(m) (parameter m = k²) by the AGM.
pub fn ellip_ke(m: f64) -> (f64, f64) {
    let mut a = 1.0f64;
    let mut b = (1.0 - m).sqrt();
    let mut c = m.sqrt();
    let mut sum = 0.5 * c * c;
    let mut pow2 = 0.5;
    for _ in 0..60 {
        let an = 0.5 * (a + b);
        let bn = (a * b).sqrt();
        c = 0.5 * (a - b);
        pow2 *= 2.0;
        sum += pow2 * c * c;
        a = an;
        b = bn;
        if c.abs() < 1e-17 {
            break;
        }
    }
    let k = PI / (2.0 * a);
    (k, k * (1.0 - sum))
}

/// Exact field of a circular filament of radius `a` (m) in the z = 0 plane,
/// centred on the origin, counter-clockwise, unit current. Returns (Bx, By, Bz).
pub fn circular_loop_field(a: f64, x: f64, y: f64, z: f64) -> [f64; 3] {
    let rho = x.hypot(y);
    let a2 = a * a;
    let r2 = rho * rho + z * z;
    let alpha2 = a2 + r2 - 2.0 * a * rho;
    let beta2 = a2 + r2 + 2.0 * a * rho;
    let beta = beta2.sqrt();
    let m = 1.0 - alpha2 / beta2;
    let (k, e) = ellip_ke(m);
    let c = MU0 / PI;
    let bz = c / (2.0 * alpha2 * beta) * ((a2 - r2) * e + alpha2 * k);
    if rho < 1e-15 {
        return [0.0, 0.0, bz];
    }
    let brho = c * z / (2.0 * alpha2 * beta * rho) * ((a2 + r2) * e - alpha2 * k);
    [brho * x / rho, brho * y / rho, bz]
}

pub fn on_axis_field(a: f64, z: f64) -> f64 {
    MU0 * a * a / (2.0 * (a * a + z * z).powf(1.5))
}
