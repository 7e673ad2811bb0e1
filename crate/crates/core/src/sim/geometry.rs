use std::f64::consts::PI;

/// Wraps an angle into (−π, π].
pub fn normalize_angle(a: f64) -> f64 {
    let wrapped = (a + PI).rem_euclid(2.0 * PI) - PI;
    if wrapped <= -PI {
        PI
    } else {
        wrapped
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Pose2D {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    /// Polar coordinates `(r, bearing)` of a world point in this pose's frame.
    pub fn polar_to(&self, px: f64, py: f64) -> (f64, f64) {
        let dx = px - self.x;
        let dy = py - self.y;
        let r = dx.hypot(dy);
        if r == 0.0 {
            return (0.0, 0.0);
        }
        (r, normalize_angle(dy.atan2(dx) - self.theta))
    }
}

/// Spherical coordinates `(r, polar, azimuth)` of a point relative to the
/// origin; the polar angle is measured from +z. At the poles the azimuth is
/// degenerate and reported as 0.
pub fn cartesian_to_spherical(p: [f64; 3]) -> [f64; 3] {
    let rho = p[0].hypot(p[1]);
    let r = rho.hypot(p[2]);
    if r == 0.0 {
        return [0.0, 0.0, 0.0];
    }
    let polar = rho.atan2(p[2]);
    let azimuth = if rho == 0.0 { 0.0 } else { p[1].atan2(p[0]) };
    [r, polar, azimuth]
}

pub fn spherical_to_cartesian(s: [f64; 3]) -> [f64; 3] {
    let [r, polar, azimuth] = s;
    let rho = r * polar.sin();
    [rho * azimuth.cos(), rho * azimuth.sin(), r * polar.cos()]
}

pub fn distance3(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}
