//! Command handler: bridges discrete agent actions to the fixed-rate robot
//! control loop.
//!
//! The handler owns a queue with room for exactly one command. An offered
//! command is accepted only when the slot is empty. On every actuation tick
//! the loop asks the handler what to send: a queued command is published for
//! `repeats` consecutive ticks and then removed from the slot; with nothing
//! queued the handler answers with the model's default command (stop for the
//! mobile base, hold position for the arm).

use std::sync::Mutex;
use std::time::Duration;

use crate::sim::arm::{Joints, JOINT_LIMIT, N_JOINTS};
use crate::sim::drive::{MAX_ANGULAR_VEL, MAX_LINEAR_VEL};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CommandError {
    #[error("invalid command: {0}")]
    InvalidCommand(String),
    #[error("invalid timing: {0}")]
    InvalidTiming(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Velocity,
    JointPosition,
}

impl Mode {
    pub fn arity(self) -> usize {
        match self {
            Mode::Velocity => 2,
            Mode::JointPosition => N_JOINTS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Command {
    /// Linear (m/s) and angular (rad/s) velocity of the mobile base.
    Velocity { linear: f64, angular: f64 },
    /// Joint position targets for the arm, radians.
    JointPosition(Joints),
}

impl Command {
    pub fn mode(&self) -> Mode {
        match self {
            Command::Velocity { .. } => Mode::Velocity,
            Command::JointPosition(_) => Mode::JointPosition,
        }
    }

    /// Builds and validates a command from a flat value list.
    pub fn from_values(mode: Mode, values: &[f64]) -> Result<Command, CommandError> {
        if values.len() != mode.arity() {
            return Err(CommandError::InvalidCommand(format!(
                "{mode:?} takes {} values, got {}",
                mode.arity(),
                values.len()
            )));
        }
        let cmd = match mode {
            Mode::Velocity => Command::Velocity {
                linear: values[0],
                angular: values[1],
            },
            Mode::JointPosition => {
                let mut q = [0.0; N_JOINTS];
                q.copy_from_slice(values);
                Command::JointPosition(q)
            }
        };
        cmd.validate()?;
        Ok(cmd)
    }

    pub fn values(&self) -> Vec<f64> {
        match self {
            Command::Velocity { linear, angular } => vec![*linear, *angular],
            Command::JointPosition(q) => q.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<(), CommandError> {
        let bad = |what: String| Err(CommandError::InvalidCommand(what));
        match self {
            Command::Velocity { linear, angular } => {
                if !(linear.abs() <= MAX_LINEAR_VEL) {
                    return bad(format!("linear velocity {linear} outside ±{MAX_LINEAR_VEL}"));
                }
                if !(angular.abs() <= MAX_ANGULAR_VEL) {
                    return bad(format!("angular velocity {angular} outside ±{MAX_ANGULAR_VEL}"));
                }
            }
            Command::JointPosition(q) => {
                if let Some((i, v)) = q.iter().enumerate().find(|(_, v)| !(v.abs() <= JOINT_LIMIT)) {
                    return bad(format!("joint {i} target {v} outside ±π"));
                }
            }
        }
        Ok(())
    }
}

/// Robot-actuation cycle (time between commands sent to the controller) and
/// action cycle (time between agent actions).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingConfig {
    actuation_cycle: f64,
    action_cycle: f64,
    repeats: u32,
}

impl TimingConfig {
    pub fn new(actuation_cycle: f64, action_cycle: f64) -> Result<TimingConfig, CommandError> {
        if !(actuation_cycle > 0.0 && action_cycle > 0.0) {
            return Err(CommandError::InvalidTiming("cycle times must be positive".into()));
        }
        let ratio = action_cycle / actuation_cycle;
        let repeats = ratio.round();
        if repeats < 1.0 || (ratio - repeats).abs() > 1e-9 * ratio.max(1.0) {
            return Err(CommandError::InvalidTiming(format!(
                "action cycle {action_cycle}s is not a whole multiple of actuation cycle {actuation_cycle}s"
            )));
        }
        Ok(TimingConfig {
            actuation_cycle,
            action_cycle,
            repeats: repeats as u32,
        })
    }

    /// Mobile base: both cycles 100 ms.
    pub fn mir100() -> TimingConfig {
        TimingConfig::new(0.1, 0.1).expect("valid")
    }

    /// Arm: 8 ms actuation, 40 ms action cycle.
    pub fn ur10() -> TimingConfig {
        TimingConfig::new(0.008, 0.04).expect("valid")
    }

    pub fn actuation_cycle(&self) -> f64 {
        self.actuation_cycle
    }

    pub fn action_cycle(&self) -> f64 {
        self.action_cycle
    }

    pub fn repeats(&self) -> u32 {
        self.repeats
    }

    pub fn actuation_duration(&self) -> Duration {
        Duration::from_secs_f64(self.actuation_cycle)
    }

    pub fn action_duration(&self) -> Duration {
        Duration::from_secs_f64(self.action_cycle)
    }

    /// Idle time left in an action cycle after the agent spent
    /// `generation` seconds producing the action.
    pub fn sleep_time(&self, generation: f64) -> f64 {
        (self.action_cycle - generation).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QueueState {
    pub slot: Option<Command>,
    pub remaining_repeats: u32,
}

/// What the control loop publishes on one actuation tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Emission {
    Agent {
        cmd: Command,
        /// First publication of a freshly dequeued command.
        first: bool,
        /// Final publication; the slot is empty afterwards.
        last: bool,
    },
    Default,
}

pub fn offer_command(q: QueueState, cmd: Command) -> Result<(QueueState, bool), CommandError> {
    cmd.validate()?;
    if q.slot.is_some() {
        return Ok((q, false));
    }
    Ok((
        QueueState {
            slot: Some(cmd),
            remaining_repeats: 0,
        },
        true,
    ))
}

pub fn actuation_tick(q: QueueState, repeats: u32) -> (QueueState, Emission) {
    let Some(cmd) = q.slot else {
        return (QueueState::default(), Emission::Default);
    };
    let first = q.remaining_repeats == 0;
    let remaining = if first { repeats } else { q.remaining_repeats } - 1;
    let last = remaining == 0;
    let next = QueueState {
        slot: if last { None } else { Some(cmd) },
        remaining_repeats: remaining,
    };
    (next, Emission::Agent { cmd, first, last })
}

/// Thread-safe wrapper shared by the RPC context (offers) and the control
/// loop (ticks).
#[derive(Debug)]
pub struct CommandHandler {
    state: Mutex<QueueState>,
    repeats: u32,
}

impl CommandHandler {
    pub fn new(repeats: u32) -> Self {
        assert!(repeats >= 1);
        CommandHandler {
            state: Mutex::new(QueueState::default()),
            repeats,
        }
    }

    pub fn repeats(&self) -> u32 {
        self.repeats
    }

    pub fn offer(&self, cmd: Command) -> Result<bool, CommandError> {
        let mut st = self.state.lock().unwrap();
        let (next, accepted) = offer_command(*st, cmd)?;
        *st = next;
        Ok(accepted)
    }

    pub fn tick(&self) -> Emission {
        let mut st = self.state.lock().unwrap();
        let (next, emission) = actuation_tick(*st, self.repeats);
        *st = next;
        emission
    }

    pub fn is_busy(&self) -> bool {
        self.state.lock().unwrap().slot.is_some()
    }

    pub fn clear(&self) {
        *self.state.lock().unwrap() = QueueState::default();
    }
}
