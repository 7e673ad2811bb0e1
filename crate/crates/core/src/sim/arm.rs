//! Six-axis arm: Denavit–Hartenberg forward kinematics, rate-limited joint
//! position controller, capsule collision model and a position-only IK
//! solver used to build reachable targets.

use super::geometry::normalize_angle;
use std::f64::consts::PI;

pub const N_JOINTS: usize = 6;
pub const JOINT_LIMIT: f64 = PI;
pub const MAX_JOINT_VEL: f64 = 1.0;
pub const LINK_RADIUS: f64 = 0.06;
pub const GROUND_CLEARANCE: f64 = 0.02;

/// UR10 DH parameters (standard convention).
pub const DH_A: [f64; N_JOINTS] = [0.0, -0.612, -0.5723, 0.0, 0.0, 0.0];
pub const DH_D: [f64; N_JOINTS] = [0.1273, 0.0, 0.0, 0.163941, 0.1157, 0.0922];
pub const DH_ALPHA: [f64; N_JOINTS] = [PI / 2.0, 0.0, 0.0, PI / 2.0, -PI / 2.0, 0.0];

pub type Joints = [f64; N_JOINTS];
pub type Vec3 = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ArmConfig {
    pub joints: Joints,
    pub joint_vels: Joints,
}

impl ArmConfig {
    pub fn at_rest(joints: Joints) -> Self {
        ArmConfig {
            joints,
            joint_vels: [0.0; N_JOINTS],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CollisionReport {
    pub self_collision: bool,
    pub ground_collision: bool,
    pub base_collision: bool,
}

impl CollisionReport {
    pub fn any(&self) -> bool {
        self.self_collision || self.ground_collision || self.base_collision
    }

    pub fn merge(self, other: CollisionReport) -> CollisionReport {
        CollisionReport {
            self_collision: self.self_collision || other.self_collision,
            ground_collision: self.ground_collision || other.ground_collision,
            base_collision: self.base_collision || other.base_collision,
        }
    }
}

/// Rigid transform: row-major rotation plus translation.
#[derive(Debug, Clone, Copy)]
struct Frame {
    rot: [[f64; 3]; 3],
    pos: Vec3,
}

impl Frame {
    const IDENTITY: Frame = Frame {
        rot: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        pos: [0.0, 0.0, 0.0],
    };

    fn z_axis(&self) -> Vec3 {
        [self.rot[0][2], self.rot[1][2], self.rot[2][2]]
    }

    /// `self · Rz(θ) Tz(d) Tx(a) Rx(α)`.
    fn then_dh(&self, theta: f64, d: f64, a: f64, alpha: f64) -> Frame {
        let (st, ct) = theta.sin_cos();
        let (sa, ca) = alpha.sin_cos();
        let link_rot = [[ct, -st * ca, st * sa], [st, ct * ca, -ct * sa], [0.0, sa, ca]];
        let link_pos = [a * ct, a * st, d];
        let mut rot = [[0.0; 3]; 3];
        let mut pos = self.pos;
        for i in 0..3 {
            for j in 0..3 {
                rot[i][j] = (0..3).map(|k| self.rot[i][k] * link_rot[k][j]).sum();
            }
            pos[i] += (0..3).map(|k| self.rot[i][k] * link_pos[k]).sum::<f64>();
        }
        Frame { rot, pos }
    }
}

fn frames(joints: &Joints) -> [Frame; N_JOINTS + 1] {
    let mut out = [Frame::IDENTITY; N_JOINTS + 1];
    for i in 0..N_JOINTS {
        out[i + 1] = out[i].then_dh(joints[i], DH_D[i], DH_A[i], DH_ALPHA[i]);
    }
    out
}

/// Origins of the base frame and of the six link frames, in the base frame.
pub fn frame_origins(joints: &Joints) -> [Vec3; N_JOINTS + 1] {
    frames(joints).map(|f| f.pos)
}

/// End-effector (last frame origin) position in the base frame.
pub fn forward_kinematics(joints: &Joints) -> Vec3 {
    frames(joints)[N_JOINTS].pos
}

pub fn within_limits(joints: &Joints) -> bool {
    joints.iter().all(|q| q.abs() <= JOINT_LIMIT)
}

/// Moves every joint toward `target` by at most `v_max · dt`, landing exactly
/// on the target when it is closer than one step.
pub fn step_joint_controller(cfg: &ArmConfig, target: &Joints, dt: f64, v_max: f64) -> ArmConfig {
    let max_step = v_max * dt;
    let mut next = *cfg;
    for i in 0..N_JOINTS {
        let q = cfg.joints[i];
        let err = target[i] - q;
        let q_next = if err.abs() <= max_step {
            target[i]
        } else {
            q + max_step.copysign(err)
        };
        next.joints[i] = q_next;
        next.joint_vels[i] = (q_next - q) / dt;
    }
    next
}

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Shortest distance between segments `p1q1` and `p2q2`.
pub fn segment_distance(p1: Vec3, q1: Vec3, p2: Vec3, q2: Vec3) -> f64 {
    const EPS: f64 = 1e-12;
    let d1 = sub(q1, p1);
    let d2 = sub(q2, p2);
    let r = sub(p1, p2);
    let a = dot(d1, d1);
    let e = dot(d2, d2);
    let f = dot(d2, r);
    let (s, t);
    if a <= EPS && e <= EPS {
        return dot(r, r).sqrt();
    }
    if a <= EPS {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = dot(d1, r);
        if e <= EPS {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = dot(d1, d2);
            let denom = a * e - b * b;
            let mut s0 = if denom > EPS {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let mut t0 = (b * s0 + f) / e;
            if t0 < 0.0 {
                t0 = 0.0;
                s0 = (-c / a).clamp(0.0, 1.0);
            } else if t0 > 1.0 {
                t0 = 1.0;
                s0 = ((b - c) / a).clamp(0.0, 1.0);
            }
            s = s0;
            t = t0;
        }
    }
    let c1 = [p1[0] + d1[0] * s, p1[1] + d1[1] * s, p1[2] + d1[2] * s];
    let c2 = [p2[0] + d2[0] * t, p2[1] + d2[1] * t, p2[2] + d2[2] * t];
    let d = sub(c1, c2);
    dot(d, d).sqrt()
}

/// Length of link `i`, the segment from frame origin `i` to `i + 1`.
pub fn link_length(i: usize) -> f64 {
    DH_D[i].hypot(DH_A[i])
}

/// Link pairs checked for self collision: not adjacent, and separated by a
/// chain of links at least one capsule diameter long. Pairs joined by a
/// shorter chain always overlap and are treated as adjacent.
pub fn self_collision_pairs() -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for i in 0..N_JOINTS {
        for j in i + 2..N_JOINTS {
            let between: f64 = (i + 1..j).map(link_length).sum();
            if between >= 2.0 * LINK_RADIUS {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

/// Links are capsules between consecutive frame origins. Link 0 is the base
/// column and is exempt from the ground test.
pub fn check_arm_collision(cfg: &ArmConfig) -> CollisionReport {
    let o = frame_origins(&cfg.joints);
    let mut report = CollisionReport::default();
    for i in 0..N_JOINTS {
        for j in i + 2..N_JOINTS {
            let between: f64 = (i + 1..j).map(link_length).sum();
            if between < 2.0 * LINK_RADIUS {
                continue;
            }
            if segment_distance(o[i], o[i + 1], o[j], o[j + 1]) < 2.0 * LINK_RADIUS {
                report.self_collision = true;
            }
        }
    }
    report.ground_collision = (1..N_JOINTS)
        .any(|i| o[i][2].min(o[i + 1][2]) - LINK_RADIUS < GROUND_CLEARANCE);
    report
}

/// Position-only inverse kinematics by damped least squares, started from
/// `seed`. Returns joints within limits whose end effector lies within `tol`
/// of `target`, or `None` if the iteration does not converge.
pub fn solve_position_ik(target: Vec3, seed: &Joints, tol: f64) -> Option<Joints> {
    const DAMPING: f64 = 0.05;
    const MAX_STEP: f64 = 0.2;
    let mut q = *seed;
    for _ in 0..300 {
        let fr = frames(&q);
        let p = fr[N_JOINTS].pos;
        let err = sub(target, p);
        if dot(err, err).sqrt() < tol {
            return Some(q);
        }
        // Geometric Jacobian columns z_{i} × (p − o_{i}).
        let cols: [Vec3; N_JOINTS] =
            std::array::from_fn(|i| cross(fr[i].z_axis(), sub(p, fr[i].pos)));
        // (J Jᵀ + λ² I) y = err
        let mut m = [[0.0; 3]; 3];
        for (r, row) in m.iter_mut().enumerate() {
            for (c, cell) in row.iter_mut().enumerate() {
                *cell = cols.iter().map(|col| col[r] * col[c]).sum();
            }
            row[r] += DAMPING * DAMPING;
        }
        let y = solve3(m, err)?;
        let mut dq: Joints = std::array::from_fn(|i| dot(cols[i], y));
        let largest = dq.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if largest > MAX_STEP {
            dq.iter_mut().for_each(|v| *v *= MAX_STEP / largest);
        }
        for i in 0..N_JOINTS {
            q[i] = normalize_angle(q[i] + dq[i]);
        }
    }
    None
}

fn solve3(m: [[f64; 3]; 3], b: Vec3) -> Option<Vec3> {
    let det = dot(m[0], cross(m[1], m[2]));
    if det.abs() < 1e-15 {
        return None;
    }
    // Cramer's rule via the adjugate.
    let c0 = cross(m[1], m[2]);
    let c1 = cross(m[2], m[0]);
    let c2 = cross(m[0], m[1]);
    Some([
        (c0[0] * b[0] + c1[0] * b[1] + c2[0] * b[2]) / det,
        (c0[1] * b[0] + c1[1] * b[1] + c2[1] * b[2]) / det,
        (c0[2] * b[0] + c1[2] * b[1] + c2[2] * b[2]) / det,
    ])
}
