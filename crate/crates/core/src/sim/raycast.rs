//! Planar laser scanner: 360 rays min-pooled into 16 sectors.

use super::drive::{BoxObstacle, Walls};
use super::geometry::Pose2D;

pub const N_RAYS: usize = 360;
pub const N_SECTORS: usize = 16;
pub const MAX_RANGE: f64 = 10.0;

/// Sector of ray `i` (ray `i` points `i` degrees counter-clockwise from the
/// robot heading). Sector `k` is centred on `k · 22.5°`, so sector 0 looks
/// straight ahead.
pub fn sector_of_ray(i: usize) -> usize {
    let deg = i as f64 * 360.0 / N_RAYS as f64;
    let width = 360.0 / N_SECTORS as f64;
    (((deg + width / 2.0) / width).floor() as usize) % N_SECTORS
}

/// Bearing of the centre of sector `k` in the robot frame, in (−π, π].
pub fn sector_bearing(k: usize) -> f64 {
    super::geometry::normalize_angle(k as f64 * std::f64::consts::TAU / N_SECTORS as f64)
}

/// Distance along a unit ray from inside the arena to its boundary.
fn ray_to_walls(ox: f64, oy: f64, dx: f64, dy: f64, walls: &Walls) -> f64 {
    let axis = |o: f64, d: f64, half: f64| {
        if d > 0.0 {
            (half - o) / d
        } else if d < 0.0 {
            (-half - o) / d
        } else {
            f64::INFINITY
        }
    };
    axis(ox, dx, walls.half_x())
        .min(axis(oy, dy, walls.half_y()))
        .max(0.0)
}

/// Slab test; `None` if the ray misses, 0 if the origin is inside the box.
fn ray_to_box(ox: f64, oy: f64, dx: f64, dy: f64, b: &BoxObstacle) -> Option<f64> {
    let h = b.half();
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    for (o, d, c) in [(ox, dx, b.center_x), (oy, dy, b.center_y)] {
        let (lo, hi) = (c - h, c + h);
        if d == 0.0 {
            if o < lo || o > hi {
                return None;
            }
            continue;
        }
        let (t0, t1) = ((lo - o) / d, (hi - o) / d);
        let (t0, t1) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
        t_near = t_near.max(t0);
        t_far = t_far.min(t1);
    }
    if t_far < t_near || t_far < 0.0 {
        None
    } else {
        Some(t_near.max(0.0))
    }
}

/// Distance measured by one ray at absolute heading `angle`.
pub fn cast_ray(
    x: f64,
    y: f64,
    angle: f64,
    walls: &Walls,
    obstacles: &[BoxObstacle],
    max_range: f64,
) -> f64 {
    let (dy, dx) = angle.sin_cos();
    let mut d = ray_to_walls(x, y, dx, dy, walls);
    for b in obstacles {
        if let Some(t) = ray_to_box(x, y, dx, dy, b) {
            d = d.min(t);
        }
    }
    d.clamp(0.0, max_range)
}

/// Full scan: per-sector minimum of the 360 ray distances.
pub fn raycast_scan(
    pose: Pose2D,
    walls: &Walls,
    obstacles: &[BoxObstacle],
    max_range: f64,
) -> [f64; N_SECTORS] {
    let mut out = [max_range; N_SECTORS];
    for i in 0..N_RAYS {
        let angle = pose.theta + i as f64 * std::f64::consts::TAU / N_RAYS as f64;
        let d = cast_ray(pose.x, pose.y, angle, walls, obstacles, max_range);
        let k = sector_of_ray(i);
        out[k] = out[k].min(d);
    }
    out
}
