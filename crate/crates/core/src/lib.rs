//! Distributed reinforcement-learning environments for a mobile robot and a
//! six-axis arm.
//!
//! The stack has four layers: an [`env::Environment`] (Gym-style
//! `reset`/`step`) talks over the [`wire`] protocol to a [`robot_server`],
//! whose simulation loop feeds the [`command`] handler's one-slot queue into
//! the [`sim`] kernel. The [`manager`] spawns, supervises and restarts robot
//! server processes. [`bench`] drives scripted and random agents through
//! whole evaluation runs.

pub mod wire;
pub mod command;
pub mod sim;
pub mod robot_server;
pub mod manager;
pub mod env;
pub mod bench;
