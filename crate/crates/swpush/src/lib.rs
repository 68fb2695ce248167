//! Planar switching-push toolkit.
//!
//! A self-contained implementation of single-point quasi-static pushing:
//! the pushing motion model acts as the plant, a receding-horizon controller
//! regulates one pushing round inside a motion constraint region (MCR), and a
//! small value network learns which pushing point to use next. An open-loop
//! pushing-primitive baseline (SP-PP) and an evaluation harness are included.
//!
//! Modules map onto the pipeline stages:
//!
//! - [`geometry`] — poses, object shapes with pushing points, MCRs, workspace
//! - [`kinematics`] — the quasi-static pushing motion model and the plant
//! - [`mpc`] — the per-round pushing controller
//! - [`qlearn`] — value network, replay buffer, and the training loop
//! - [`env`] — the switching-push decision environment and SP-PP executor
//! - [`bench`] — metrics, repeated-trial evaluation, and method comparison

pub mod bench;
pub mod env;
mod error;
pub mod geometry;
pub mod kinematics;
pub mod mpc;
pub mod qlearn;

pub use error::{Error, Result};
