use std::f64::consts::{FRAC_PI_2, PI};

use gymlink::sim::arm::{
    self, check_arm_collision, forward_kinematics, link_length, step_joint_controller, ArmConfig, DH_A, DH_ALPHA,
    DH_D, LINK_RADIUS, MAX_JOINT_VEL, N_JOINTS,
};
use gymlink::sim::drive::{check_base_collision, step_diff_drive, BoxObstacle, Walls, ROBOT_RADIUS};
use gymlink::sim::raycast::{cast_ray, raycast_scan, sector_of_ray, MAX_RANGE, N_SECTORS};
use gymlink::sim::Pose2D;
use nalgebra::{Matrix4, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Standard DH chain as a product of homogeneous matrices:
/// Rz(θ) · Tz(d) · Tx(a) · Rx(α).
fn dh_oracle(q: &[f64; N_JOINTS]) -> [f64; 3] {
    let mut t = Matrix4::<f64>::identity();
    for i in 0..N_JOINTS {
        let (st, ct) = q[i].sin_cos();
        let rz = Matrix4::new(ct, -st, 0.0, 0.0, st, ct, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        let mut tz = Matrix4::identity();
        tz[(2, 3)] = DH_D[i];
        let mut tx = Matrix4::identity();
        tx[(0, 3)] = DH_A[i];
        let (sa, ca) = DH_ALPHA[i].sin_cos();
        let rx = Matrix4::new(1.0, 0.0, 0.0, 0.0, 0.0, ca, -sa, 0.0, 0.0, sa, ca, 0.0, 0.0, 0.0, 0.0, 1.0);
        t = t * rz * tz * tx * rx;
    }
    let p = t * Vector4::new(0.0, 0.0, 0.0, 1.0);
    [p[0], p[1], p[2]]
}

fn random_joints(rng: &mut impl Rng) -> [f64; N_JOINTS] {
    std::array::from_fn(|_| rng.gen_range(-PI..=PI))
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

#[test]
fn fk_matches_matrix_chain() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let worst = (0..1000)
        .map(|_| {
            let q = random_joints(&mut rng);
            dist(forward_kinematics(&q), dh_oracle(&q))
        })
        .fold(0.0, f64::max);
    assert!(worst <= 1e-9, "max FK error {worst}");
}

#[test]
fn base_rotation_is_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..200 {
        let q = random_joints(&mut rng);
        let phi = rng.gen_range(-1.0..1.0);
        let mut q2 = q;
        q2[0] += phi;
        let p = forward_kinematics(&q);
        let (s, c) = phi.sin_cos();
        let rotated = [c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]];
        assert!(dist(forward_kinematics(&q2), rotated) < 1e-12);
    }
}

#[test]
fn fk_is_lipschitz_in_joint_space() {
    // No point of the chain is farther from any joint axis than the total
    // link length, so |Δp| ≤ L · Σ|Δq_i|.
    let l: f64 = (0..N_JOINTS).map(link_length).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..1000 {
        let q = random_joints(&mut rng);
        let dq: [f64; N_JOINTS] = std::array::from_fn(|_| rng.gen_range(-0.05..0.05));
        let q2: [f64; N_JOINTS] = std::array::from_fn(|i| q[i] + dq[i]);
        let bound = l * dq.iter().map(|d| d.abs()).sum::<f64>();
        assert!(dist(forward_kinematics(&q), forward_kinematics(&q2)) <= bound + 1e-12);
    }
}

#[test]
fn upright_pose_has_the_published_height() {
    let q = [0.0, -FRAC_PI_2, 0.0, -FRAC_PI_2, 0.0, 0.0];
    let p = forward_kinematics(&q);
    let column = DH_D[0] - DH_A[1] - DH_A[2] + DH_D[4];
    assert!((p[2] - column).abs() < 1e-12, "{p:?}");
    assert!(!check_arm_collision(&ArmConfig::at_rest(q)).any());
}

#[test]
fn collision_witnesses() {
    // Stretched flat along the floor.
    let flat = check_arm_collision(&ArmConfig::at_rest([0.0; N_JOINTS]));
    assert!(flat.ground_collision);
    // Forearm folded back onto the upper arm.
    let folded = check_arm_collision(&ArmConfig::at_rest([0.0, -FRAC_PI_2, PI, 0.0, 0.0, 0.0]));
    assert!(folded.self_collision);
    // Shoulder pointing down into the floor.
    let down = check_arm_collision(&ArmConfig::at_rest([0.0, FRAC_PI_2, 0.0, 0.0, 0.0, 0.0]));
    assert!(down.ground_collision);
}

#[test]
fn self_collision_pairs_skip_only_the_short_wrist_chain() {
    let pairs = arm::self_collision_pairs();
    assert!(!pairs.contains(&(3, 5)));
    assert_eq!(pairs.len(), 9);
    assert!(link_length(4) < 2.0 * LINK_RADIUS);
}

#[test]
fn segment_distance_matches_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..200 {
        let mut p = || [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let (a, b, c, d) = (p(), p(), p(), p());
        let exact = arm::segment_distance(a, b, c, d);
        let lerp = |u: [f64; 3], v: [f64; 3], t: f64| std::array::from_fn::<f64, 3, _>(|i| u[i] + t * (v[i] - u[i]));
        let n = 200;
        let mut sampled = f64::INFINITY;
        for i in 0..=n {
            for j in 0..=n {
                let s = i as f64 / n as f64;
                let t = j as f64 / n as f64;
                sampled = sampled.min(dist(lerp(a, b, s), lerp(c, d, t)));
            }
        }
        assert!(exact <= sampled + 1e-12);
        assert!(sampled - exact < 0.02, "{exact} vs {sampled}");
    }
}

#[test]
fn controller_is_rate_limited_and_lands_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let dt = 0.008;
    for _ in 0..100 {
        let start = random_joints(&mut rng);
        let goal = random_joints(&mut rng);
        let max_err = (0..N_JOINTS).map(|i| (goal[i] - start[i]).abs()).fold(0.0, f64::max);
        let expected_ticks = (max_err / (MAX_JOINT_VEL * dt)).ceil() as usize;
        let mut cfg = ArmConfig::at_rest(start);
        let mut ticks = 0;
        while cfg.joints != goal {
            let next = step_joint_controller(&cfg, &goal, dt, MAX_JOINT_VEL);
            for i in 0..N_JOINTS {
                assert!((next.joints[i] - cfg.joints[i]).abs() <= MAX_JOINT_VEL * dt + 1e-15);
                assert!(next.joint_vels[i].abs() <= MAX_JOINT_VEL + 1e-9);
            }
            cfg = next;
            ticks += 1;
            assert!(ticks <= expected_ticks + 1);
        }
        assert!(ticks.abs_diff(expected_ticks) <= 1);
        let rest = step_joint_controller(&cfg, &goal, dt, MAX_JOINT_VEL);
        assert_eq!(rest.joints, goal);
        assert_eq!(rest.joint_vels, [0.0; N_JOINTS]);
    }
}

fn euler(pose: Pose2D, v: f64, w: f64, dt: f64, n: usize) -> (f64, f64) {
    let h = dt / n as f64;
    let (mut x, mut y, mut th) = (pose.x, pose.y, pose.theta);
    for _ in 0..n {
        x += v * th.cos() * h;
        y += v * th.sin() * h;
        th += w * h;
    }
    (x, y)
}

#[test]
fn diff_drive_matches_fine_euler() {
    let cases = [
        (0.5, 1.0, 0.1),
        (0.5, -1.0, 0.1),
        (-0.3, 0.4, 0.1),
        (0.2, 1e-12, 0.1),
        (0.5, 0.7, 1.0),
    ];
    for (k, &(v, w, dt)) in cases.iter().enumerate() {
        let start = Pose2D::new(0.3 * k as f64, -0.2, 0.5 - 0.4 * k as f64);
        let exact = step_diff_drive(start, v, w, dt);
        let (ex, ey) = euler(start, v, w, dt, 10_000_000);
        let err = (exact.x - ex).hypot(exact.y - ey);
        assert!(err <= 1e-6, "case {k}: {err}");
    }
}

fn random_scene(rng: &mut impl Rng) -> (Pose2D, Vec<BoxObstacle>) {
    let walls = Walls::default();
    let obstacles: Vec<_> = (0..rng.gen_range(0..5))
        .map(|_| BoxObstacle::cube(rng.gen_range(-3.0..3.0), rng.gen_range(-2.0..2.0)))
        .collect();
    loop {
        let pose = Pose2D::new(rng.gen_range(-3.5..3.5), rng.gen_range(-2.5..2.5), rng.gen_range(-PI..PI));
        if !check_base_collision(pose, ROBOT_RADIUS, &walls, &obstacles) {
            return (pose, obstacles);
        }
    }
}

/// Sector minima from 100 rays per degree over the angular span each sector's
/// physical rays cover (first to last ray of the sector).
fn dense_scan(pose: Pose2D, obstacles: &[BoxObstacle]) -> [f64; N_SECTORS] {
    let walls = Walls::default();
    let per_degree = 100;
    let mut out = [MAX_RANGE; N_SECTORS];
    for i in 0..360 * per_degree {
        let (lo, hi) = (i / per_degree, (i + per_degree - 1) / per_degree % 360);
        let k = sector_of_ray(lo);
        if sector_of_ray(hi) != k {
            continue;
        }
        let deg = i as f64 / per_degree as f64;
        let d = cast_ray(pose.x, pose.y, pose.theta + deg.to_radians(), &walls, obstacles, MAX_RANGE);
        out[k] = out[k].min(d);
    }
    out
}

#[test]
fn raycast_sectors_match_dense_rays() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let (pose, obstacles) = random_scene(&mut rng);
        let coarse = raycast_scan(pose, &Walls::default(), &obstacles, MAX_RANGE);
        let dense = dense_scan(pose, &obstacles);
        for k in 0..N_SECTORS {
            assert!(coarse[k] >= dense[k] - 1e-12);
            worst = worst.max((coarse[k] - dense[k]) / dense[k]);
        }
    }
    assert!(worst <= 0.01, "max relative error {worst}");
}

#[test]
fn sector_layout() {
    assert_eq!(sector_of_ray(0), 0);
    assert_eq!(sector_of_ray(11), 0);
    assert_eq!(sector_of_ray(12), 1);
    assert_eq!(sector_of_ray(349), 0);
    assert_eq!(sector_of_ray(90), 4);
    assert_eq!(sector_of_ray(180), 8);
    // A cube dead ahead and one to the left.
    let pose = Pose2D::new(0.0, 0.0, 0.0);
    let obstacles = [BoxObstacle::cube(1.25, 0.0), BoxObstacle::cube(0.0, 1.75)];
    let scan = raycast_scan(pose, &Walls::default(), &obstacles, MAX_RANGE);
    assert!((scan[0] - 1.0).abs() < 1e-12);
    assert!((scan[4] - 1.5).abs() < 1e-12);
    assert!((scan[8] - 4.0).abs() < 1e-12);
    assert!((scan[12] - 3.0).abs() < 1e-12);
}

#[test]
fn moving_toward_a_wall_shrinks_the_front_sector() {
    let walls = Walls::default();
    let mut pose = Pose2D::new(0.0, 0.0, 0.0);
    let mut last = f64::INFINITY;
    for _ in 0..30 {
        let scan = raycast_scan(pose, &walls, &[], MAX_RANGE);
        assert!(scan[0] < last);
        last = scan[0];
        pose = step_diff_drive(pose, 0.5, 0.0, 0.2);
    }
}

#[test]
fn adding_an_obstacle_never_increases_a_reading() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let walls = Walls::default();
    for _ in 0..300 {
        let (pose, mut obstacles) = random_scene(&mut rng);
        let before = raycast_scan(pose, &walls, &obstacles, MAX_RANGE);
        obstacles.push(BoxObstacle::cube(rng.gen_range(-3.5..3.5), rng.gen_range(-2.5..2.5)));
        let after = raycast_scan(pose, &walls, &obstacles, MAX_RANGE);
        for k in 0..N_SECTORS {
            assert!(after[k] <= before[k]);
            assert!((0.0..=MAX_RANGE).contains(&after[k]));
        }
    }
}
