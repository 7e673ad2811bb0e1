//! Differential-drive base: unicycle kinematics, scene geometry and footprint
//! collision.

use super::geometry::{normalize_angle, Pose2D};

/// Footprint radius of the mobile base.
pub const ROBOT_RADIUS: f64 = 0.4;
/// Edge length of the cube obstacles.
pub const OBSTACLE_EDGE: f64 = 0.5;
pub const MAX_LINEAR_VEL: f64 = 0.5;
pub const MAX_ANGULAR_VEL: f64 = 1.0;

/// Axis-aligned rectangular arena centred on the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Walls {
    /// Extent along x, meters.
    pub length: f64,
    /// Extent along y, meters.
    pub width: f64,
}

impl Default for Walls {
    /// The 8 m × 6 m map, long axis along x.
    fn default() -> Self {
        Walls {
            length: 8.0,
            width: 6.0,
        }
    }
}

impl Walls {
    pub fn half_x(&self) -> f64 {
        self.length / 2.0
    }

    pub fn half_y(&self) -> f64 {
        self.width / 2.0
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x.abs() <= self.half_x() && y.abs() <= self.half_y()
    }

    /// Longest possible distance between two points of the map.
    pub fn diagonal(&self) -> f64 {
        self.length.hypot(self.width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxObstacle {
    pub center_x: f64,
    pub center_y: f64,
    pub edge: f64,
}

impl BoxObstacle {
    pub fn cube(center_x: f64, center_y: f64) -> Self {
        BoxObstacle {
            center_x,
            center_y,
            edge: OBSTACLE_EDGE,
        }
    }

    pub fn half(&self) -> f64 {
        self.edge / 2.0
    }

    /// Euclidean distance from a point to the box footprint (0 inside).
    pub fn distance_to(&self, x: f64, y: f64) -> f64 {
        let dx = ((x - self.center_x).abs() - self.half()).max(0.0);
        let dy = ((y - self.center_y).abs() - self.half()).max(0.0);
        dx.hypot(dy)
    }
}

/// Advances a unicycle pose by one exact arc of constant `(v, w)`.
pub fn step_diff_drive(pose: Pose2D, v: f64, w: f64, dt: f64) -> Pose2D {
    debug_assert!(dt > 0.0);
    let th = pose.theta;
    if w.abs() < 1e-9 {
        return Pose2D {
            x: pose.x + v * dt * th.cos(),
            y: pose.y + v * dt * th.sin(),
            theta: normalize_angle(th + w * dt),
        };
    }
    let th1 = th + w * dt;
    let k = v / w;
    Pose2D {
        x: pose.x + k * (th1.sin() - th.sin()),
        y: pose.y - k * (th1.cos() - th.cos()),
        theta: normalize_angle(th1),
    }
}

/// True iff the circular footprint overlaps a box or crosses a wall.
/// Exact contact is not a collision.
pub fn check_base_collision(
    pose: Pose2D,
    radius: f64,
    walls: &Walls,
    obstacles: &[BoxObstacle],
) -> bool {
    let wall_clearance = (walls.half_x() - pose.x.abs()).min(walls.half_y() - pose.y.abs());
    if wall_clearance < radius {
        return true;
    }
    obstacles
        .iter()
        .any(|b| b.distance_to(pose.x, pose.y) < radius)
}
