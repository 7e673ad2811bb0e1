//! Distance-shaped rewards with terminal bonus and penalty.

use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Running,
    Success,
    Collision,
    Timeout,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Running => "running",
            Outcome::Success => "success",
            Outcome::Collision => "collision",
            Outcome::Timeout => "timeout",
        }
    }

    pub fn is_done(self) -> bool {
        self != Outcome::Running
    }

    /// Collision wins over success, success over timeout.
    pub fn classify(collided: bool, distance: f64, success_radius: f64, steps: u32, max_steps: u32) -> Outcome {
        if collided {
            Outcome::Collision
        } else if distance <= success_radius {
            Outcome::Success
        } else if steps >= max_steps {
            Outcome::Timeout
        } else {
            Outcome::Running
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Outcome {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "running" => Ok(Outcome::Running),
            "success" => Ok(Outcome::Success),
            "collision" => Ok(Outcome::Collision),
            "timeout" => Ok(Outcome::Timeout),
            other => Err(format!("unknown outcome {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardParams {
    /// Reward per metre of progress toward the target.
    pub k_dist: f64,
    pub r_success: f64,
    pub r_collision: f64,
    pub success_radius: f64,
}

impl RewardParams {
    pub fn mobile() -> Self {
        RewardParams {
            k_dist: 10.0,
            r_success: 100.0,
            r_collision: -100.0,
            success_radius: 0.3,
        }
    }

    pub fn arm() -> Self {
        RewardParams {
            success_radius: 0.05,
            ..RewardParams::mobile()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.k_dist > 0.0 && self.r_success > 0.0 && self.r_collision < 0.0 && self.success_radius > 0.0) {
            return Err(format!("invalid reward parameters {self:?}"));
        }
        Ok(())
    }
}

/// Progress reward `k·(prev − new)` plus the terminal term of `outcome`.
pub fn compute_reward(prev_dist: f64, new_dist: f64, outcome: Outcome, p: &RewardParams) -> f64 {
    let base = p.k_dist * (prev_dist - new_dist);
    match outcome {
        Outcome::Success => base + p.r_success,
        Outcome::Collision => base + p.r_collision,
        Outcome::Running | Outcome::Timeout => base,
    }
}
