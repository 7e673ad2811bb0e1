mod common;

use std::io::{BufRead, BufReader};
use std::process::{Command, Stdio};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use gymlink::command::TimingConfig;
use gymlink::robot_server::{layout, ClockMode, DesiredState};
use gymlink::sim::{Pose2D, RobotModel};
use gymlink::wire::{payload, Client, PayloadExt, Value, WireError};

fn client(addr: std::net::SocketAddr) -> Client {
    Client::connect(&addr.to_string(), Duration::from_secs(1)).unwrap()
}

fn mobile_desired() -> Vec<f64> {
    DesiredState::Mobile {
        robot: Pose2D::new(-2.0, 0.0, 0.0),
        target: Pose2D::new(2.0, 0.0, 0.0),
        obstacles: vec![(0.0, 1.5)],
    }
    .to_array()
}

fn arm_desired() -> Vec<f64> {
    DesiredState::Arm {
        joints: [0.0, -1.2, 1.0, -1.4, -1.57, 0.0],
        target_spherical: [0.9, 0.8, 0.5],
    }
    .to_array()
}

fn set(c: &Client, desired: Vec<f64>) {
    c.call("set_state", payload([("desired", Value::Array(desired))]), Duration::from_secs(2))
        .unwrap();
}

fn act(c: &Client, a: &[f64]) -> Result<gymlink::wire::Payload, WireError> {
    c.call("send_action", payload([("action", Value::Array(a.to_vec()))]), Duration::from_secs(2))
}

fn state(c: &Client) -> Vec<f64> {
    c.call("get_state", Default::default(), Duration::from_secs(1))
        .unwrap()
        .req_array("state")
        .unwrap()
        .to_vec()
}

#[test]
fn not_initialized_until_set_state() {
    let s = common::robot_server(RobotModel::Mir100, ClockMode::Fast);
    let c = client(s.local_addr());
    let e = c.call("get_state", Default::default(), Duration::from_secs(1)).unwrap_err();
    assert_eq!(e.remote_code(), Some("NotInitialized"));
    assert_eq!(act(&c, &[0.5, 0.0]).unwrap_err().remote_code(), Some("NotInitialized"));
    set(&c, mobile_desired());
    assert_eq!(state(&c).len(), layout::MOBILE_LEN);
}

#[test]
fn clock_advances_by_repeats_times_dt() {
    for (model, desired, action, timing) in [
        (RobotModel::Mir100, mobile_desired(), vec![0.5, 0.1], TimingConfig::mir100()),
        (RobotModel::Ur10, arm_desired(), vec![0.0, -0.3, 0.3, -0.4, -0.5, 0.0], TimingConfig::ur10()),
    ] {
        let s = common::robot_server(model, ClockMode::Fast);
        let c = client(s.local_addr());
        set(&c, desired);
        let ci = layout::clock_index(model);
        for k in 0..5 {
            let before = state(&c)[ci];
            let r = act(&c, &action).unwrap();
            let (start, end) = (r.req_f64("start_clock").unwrap(), r.req_f64("end_clock").unwrap());
            let expected = timing.repeats() as f64 * timing.actuation_cycle();
            assert!((end - start - expected).abs() < 1e-12, "{model} step {k}");
            assert_eq!(start, before);
            assert_eq!(state(&c)[ci], end);
        }
    }
}

fn mean_action_time(model: RobotModel, desired: Vec<f64>, action: &[f64], n: usize) -> f64 {
    let s = common::robot_server(model, ClockMode::RealTime);
    let c = client(s.local_addr());
    set(&c, desired);
    let mut total = 0.0;
    for _ in 0..n {
        let t = Instant::now();
        act(&c, action).unwrap();
        total += t.elapsed().as_secs_f64();
    }
    total / n as f64
}

#[test]
fn realtime_action_duration_matches_the_action_cycle() {
    let mir = mean_action_time(RobotModel::Mir100, mobile_desired(), &[0.2, 0.0], 20);
    assert!((0.100..=0.110).contains(&mir), "mir100 mean {mir}");
    let ur = mean_action_time(RobotModel::Ur10, arm_desired(), &[0.0, -0.38, 0.32, -0.45, -0.5, 0.0], 20);
    assert!((0.040..=0.050).contains(&ur), "ur10 mean {ur}");
}

#[test]
fn overlapping_action_is_rejected_and_reset_interrupts() {
    let s = common::robot_server(RobotModel::Mir100, ClockMode::RealTime);
    let addr = s.local_addr();
    let c = Arc::new(client(addr));
    set(&c, mobile_desired());
    let slow = {
        let c = Arc::clone(&c);
        thread::spawn(move || act(&c, &[0.1, 0.0]))
    };
    thread::sleep(Duration::from_millis(30));
    assert_eq!(act(&c, &[0.1, 0.0]).unwrap_err().remote_code(), Some("RejectedCommand"));
    assert!(slow.join().unwrap().is_ok());

}

#[test]
fn reset_interrupts_a_multi_tick_action() {
    let s = common::robot_server(RobotModel::Ur10, ClockMode::RealTime);
    let c = Arc::new(client(s.local_addr()));
    set(&c, arm_desired());
    let interrupted = {
        let c = Arc::clone(&c);
        thread::spawn(move || act(&c, &[0.0, -0.3, 0.3, -0.4, -0.5, 0.0]))
    };
    thread::sleep(Duration::from_millis(15));
    set(&c, arm_desired());
    assert_eq!(
        interrupted.join().unwrap().unwrap_err().remote_code(),
        Some("ExecutionInterrupted")
    );
    let st = state(&c);
    assert_eq!(&st[layout::ARM_JOINTS..layout::ARM_JOINTS + 6], &arm_desired()[..6]);
    assert_eq!(st[layout::ARM_CLOCK], 0.0);
    // The slot is free again.
    assert!(act(&c, &[0.0, -0.3, 0.3, -0.4, -0.5, 0.0]).is_ok());
}

#[test]
fn invalid_inputs_are_refused() {
    let s = common::robot_server(RobotModel::Ur10, ClockMode::Fast);
    let c = client(s.local_addr());
    let bad_state = c
        .call("set_state", payload([("desired", Value::Array(vec![0.0; 4]))]), Duration::from_secs(1))
        .unwrap_err();
    assert_eq!(bad_state.remote_code(), Some("InvalidState"));
    let out_of_reach = DesiredState::Arm {
        joints: [0.0, -1.57, 0.0, -1.57, 0.0, 0.0],
        target_spherical: [2.0, 0.5, 0.0],
    };
    let e = c
        .call(
            "set_state",
            payload([("desired", Value::Array(out_of_reach.to_array()))]),
            Duration::from_secs(1),
        )
        .unwrap_err();
    assert_eq!(e.remote_code(), Some("InvalidState"));
    set(&c, arm_desired());
    assert_eq!(act(&c, &[0.0; 5]).unwrap_err().remote_code(), Some("InvalidAction"));
    assert_eq!(act(&c, &[1.5, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap_err().remote_code(), Some("InvalidAction"));
}

#[test]
fn fast_mode_is_deterministic() {
    let run = || {
        let s = common::robot_server(RobotModel::Mir100, ClockMode::Fast);
        let c = client(s.local_addr());
        set(&c, mobile_desired());
        for k in 0..30 {
            act(&c, &[0.8, (k as f64 * 0.3).sin()]).unwrap();
        }
        state(&c)
    };
    assert_eq!(run(), run());
}

#[test]
fn health_reports_heartbeat_and_mode() {
    let s = common::robot_server(RobotModel::Ur10, ClockMode::Fast);
    let c = client(s.local_addr());
    let h = |c: &Client| c.call("health", Default::default(), Duration::from_secs(1)).unwrap();
    let first = h(&c);
    assert_eq!(first.req_str("mode").unwrap(), "fast");
    assert_eq!(first.req_str("model").unwrap(), "ur10");
    assert_eq!(first.get("initialized"), Some(&Value::Bool(false)));
    thread::sleep(Duration::from_millis(50));
    assert!(h(&c).req_f64("heartbeat").unwrap() > first.req_f64("heartbeat").unwrap());
    c.call("inject_fault", payload([("fault", "freeze")]), Duration::from_secs(1)).unwrap();
    thread::sleep(Duration::from_millis(30));
    let a = h(&c).req_f64("heartbeat").unwrap();
    thread::sleep(Duration::from_millis(50));
    assert_eq!(h(&c).req_f64("heartbeat").unwrap(), a);
}

#[test]
fn binary_announces_address_and_exits_on_crash() {
    let mut child = Command::new(common::server_binary())
        .args(["--model", "mir100", "--mode", "fast"])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("robot-server listening on ").expect(&line).to_string();
    let c = Client::connect(&addr, Duration::from_secs(1)).unwrap();
    assert!(c.call("health", Default::default(), Duration::from_secs(1)).is_ok());
    let _ = c.call("inject_fault", payload([("fault", "crash")]), Duration::from_secs(1));
    let status = child.wait().unwrap();
    assert_eq!(status.code(), Some(70));
}
