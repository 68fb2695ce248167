//! The switching-push decision environment.
//!
//! One decision round selects a pushing point, builds the motion constraint
//! region for the current and goal positions, runs the controller (or an
//! open-loop pushing primitive for the SP-PP baseline), and scores the
//! transition with the environmental reward plus potential-based shaping.

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::geometry::{build_mcr, wrap_finite, Mcr, Pose2D, ShapeModel, ShapeName, Workspace};
use crate::kinematics::{MotionModel, NoiseModel, Plant};
use crate::mpc::{run_round, GoalSpec, MpcConfig, RoundOutcome, RoundReason};
use crate::qlearn::{DecisionEnv, Transition, N_ACTIONS, STATE_DIM};
use crate::{Error, Result};

/// How a selected point is executed for one round.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Executor {
    /// Closed-loop controller regulating the object inside the region.
    Mpc,
    /// Open-loop pushing primitive with fixed direction and distance.
    Spp,
}

/// Episode-level configuration.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub shape: ShapeName,
    /// Goal pose of {B} in {W}.
    pub goal: Pose2D,
    pub workspace: Workspace,
    /// Region radius near the goal, meters.
    pub r_min: f64,
    /// Minor-to-major axis ratio of the elliptic region.
    pub k: f64,
    /// Decision rounds per episode.
    pub max_rounds: usize,
    /// Goal position tolerance, meters.
    pub pos_tol: f64,
    /// Goal orientation tolerance, radians.
    pub ang_tol: f64,
    /// Shaping coefficient on the next-state potential.
    pub alpha: f64,
    /// Meters-per-radian weight mixing the orientation into state norms.
    pub angle_weight: f64,
    /// Start sampler: margin from the workspace boundary, meters.
    pub init_margin: f64,
    /// Start sampler: orientation drawn uniformly from +- this bound.
    pub init_theta_max: f64,
    pub executor: Executor,
    pub model: MotionModel,
    pub noise: NoiseModel,
    pub seed: u64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            shape: ShapeName::T,
            goal: Pose2D::new(0.0, 0.0, 0.0),
            workspace: Workspace::default(),
            r_min: 0.03,
            k: 1.0 / 3.0,
            max_rounds: 70,
            pos_tol: 0.015,
            ang_tol: 0.0436,
            alpha: 0.9,
            angle_weight: 0.1,
            init_margin: 0.05,
            init_theta_max: PI,
            executor: Executor::Mpc,
            model: MotionModel::default(),
            noise: NoiseModel::default(),
            seed: 0,
        }
    }
}

impl EpisodeConfig {
    fn goal_state(&self) -> [f64; STATE_DIM] {
        [self.goal.x, self.goal.y, self.goal.theta]
    }

    fn goal_test(&self, s: &[f64; STATE_DIM]) -> bool {
        let g = self.goal_state();
        let pos_err = (s[0] - g[0]).hypot(s[1] - g[1]);
        let ang_err = wrap_finite(s[2] - g[2]).abs();
        pos_err < self.pos_tol && ang_err < self.ang_tol
    }
}

/// Orientation-weighted distance between two states (angles wrapped).
pub fn weighted_error(s: &[f64; STATE_DIM], g: &[f64; STATE_DIM], angle_weight: f64) -> f64 {
    let dx = s[0] - g[0];
    let dy = s[1] - g[1];
    let dt = angle_weight * wrap_finite(s[2] - g[2]);
    (dx * dx + dy * dy + dt * dt).sqrt()
}

/// State potential: negative weighted distance to the goal, scaled by the
/// goal state's own weighted norm, or by the workspace diagonal when the
/// goal is at the origin and that norm degenerates.
pub fn potential(s: &[f64; STATE_DIM], cfg: &EpisodeConfig) -> f64 {
    let g = cfg.goal_state();
    let err = weighted_error(s, &g, cfg.angle_weight);
    let gt = cfg.angle_weight * g[2];
    let g_norm = (g[0] * g[0] + g[1] * g[1] + gt * gt).sqrt();
    let scale = if g_norm > 1e-6 { g_norm } else { cfg.workspace.diagonal() };
    -err / scale
}

/// Potential-based shaping term for one round.
pub fn shaping(s: &[f64; STATE_DIM], s_next: &[f64; STATE_DIM], cfg: &EpisodeConfig) -> f64 {
    cfg.alpha * potential(s_next, cfg) - potential(s, cfg)
}

/// Environmental reward: +-100 on termination (goal reached / out of
/// workspace), otherwise +-1 by whether the weighted distance decreased.
pub fn env_reward(
    s: &[f64; STATE_DIM],
    s_next: &[f64; STATE_DIM],
    cfg: &EpisodeConfig,
    out_of_workspace: bool,
) -> f64 {
    if cfg.goal_test(s_next) {
        100.0
    } else if out_of_workspace {
        -100.0
    } else {
        let g = cfg.goal_state();
        if weighted_error(s_next, &g, cfg.angle_weight)
            < weighted_error(s, &g, cfg.angle_weight)
        {
            1.0
        } else {
            -1.0
        }
    }
}

/// Result of one decision round.
#[derive(Clone, Debug)]
pub struct RoundResult {
    pub transition: Transition,
    pub outcome: RoundOutcome,
    /// `(environmental, shaping)`; the transition reward is exactly their sum.
    pub reward_parts: (f64, f64),
    /// Region the round was constrained to.
    pub mcr: Mcr,
}

/// The switching-push environment over one object.
#[derive(Clone, Debug)]
pub struct PushEnv {
    cfg: EpisodeConfig,
    mpc_cfg: MpcConfig,
    plant: Plant,
    rounds: usize,
    terminated: bool,
    succeeded: bool,
    rng: ChaCha8Rng,
}

impl PushEnv {
    pub fn new(cfg: EpisodeConfig, mpc_cfg: MpcConfig) -> Self {
        Self::with_shape(ShapeModel::builtin(cfg.shape), cfg, mpc_cfg)
    }

    pub fn with_shape(shape: ShapeModel, cfg: EpisodeConfig, mpc_cfg: MpcConfig) -> Self {
        let mut noise = cfg.noise;
        noise.seed = cfg.seed.wrapping_add(noise.seed).wrapping_add(1);
        let plant = Plant::new(shape, cfg.model, noise);
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Self { cfg, mpc_cfg, plant, rounds: 0, terminated: false, succeeded: false, rng }
    }

    pub fn cfg(&self) -> &EpisodeConfig {
        &self.cfg
    }

    pub fn mpc_cfg(&self) -> &MpcConfig {
        &self.mpc_cfg
    }

    pub fn shape(&self) -> &ShapeModel {
        self.plant.shape()
    }

    pub fn pose(&self) -> Pose2D {
        self.plant.pose()
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    pub fn is_terminated(&self) -> bool {
        self.terminated
    }

    pub fn state(&self) -> [f64; STATE_DIM] {
        let p = self.plant.pose();
        [p.x, p.y, p.theta]
    }

    pub fn goal_spec(&self) -> GoalSpec {
        GoalSpec { target: self.cfg.goal, pos_tol: self.cfg.pos_tol, ang_tol: self.cfg.ang_tol }
    }

    /// Sample a fresh starting pose: position uniform in the workspace
    /// shrunk by the margin, orientation uniform over the configured range
    /// (the full circle by default), rejecting poses already at the goal.
    pub fn reset(&mut self) -> [f64; STATE_DIM] {
        let hx = self.cfg.workspace.half_width - self.cfg.init_margin;
        let hy = self.cfg.workspace.half_height - self.cfg.init_margin;
        debug_assert!(hx > 0.0 && hy > 0.0);
        let pose = loop {
            let x = self.rng.random_range(-hx..hx);
            let y = self.rng.random_range(-hy..hy);
            let theta = if self.cfg.init_theta_max >= PI {
                // Uniform over (-pi, pi].
                PI - 2.0 * PI * self.rng.random::<f64>()
            } else {
                let m = self.cfg.init_theta_max;
                self.rng.random_range(-m..m)
            };
            let pose = Pose2D::new(x, y, theta);
            if !self.goal_spec().reached(&pose) {
                break pose;
            }
        };
        self.start_episode(pose);
        self.state()
    }

    /// Start an episode from a fixed pose (scripted scenarios).
    pub fn reset_to(&mut self, pose: Pose2D) -> [f64; STATE_DIM] {
        self.start_episode(pose);
        self.state()
    }

    fn start_episode(&mut self, pose: Pose2D) {
        self.plant.set_pose(pose);
        self.rounds = 0;
        self.terminated = false;
        self.succeeded = false;
    }

    /// Execute one decision round with the configured executor.
    pub fn step_round(&mut self, action: usize) -> Result<RoundResult> {
        self.round_with(action, self.cfg.executor)
    }

    /// Execute one open-loop pushing primitive regardless of the configured
    /// executor.
    pub fn spp_execute(&mut self, primitive_idx: usize) -> Result<RoundResult> {
        self.round_with(primitive_idx, Executor::Spp)
    }

    fn round_with(&mut self, action: usize, executor: Executor) -> Result<RoundResult> {
        if self.terminated {
            return Err(Error::EpisodeTerminated);
        }
        if action >= N_ACTIONS {
            return Err(Error::InvalidPointId { id: action + 1, count: N_ACTIONS });
        }
        let point_id = action + 1;
        let s = self.state();

        // The region applies to the center of mass: the controller state and
        // the exit trigger must agree on the constrained quantity.
        let com = self.plant.com_world();
        let goal_com = self.cfg.goal.transform_point(&self.plant.shape().com());
        let mcr = build_mcr(com, goal_com, self.cfg.r_min, self.cfg.k);
        let goal = self.goal_spec();

        let outcome = match executor {
            Executor::Mpc => {
                run_round(&mut self.plant, point_id, &goal, Some(&mcr), &self.mpc_cfg)?
            }
            Executor::Spp => self.spp_outcome(point_id)?,
        };

        let s_next = self.state();
        let oob = !self.cfg.workspace.contains_pose(&self.plant.pose());
        let r_env = env_reward(&s, &s_next, &self.cfg, oob);
        let r_shaping = shaping(&s, &s_next, &self.cfg);

        self.rounds += 1;
        let goal_hit = self.cfg.goal_test(&s_next);
        let done = goal_hit || oob || self.rounds >= self.cfg.max_rounds;
        self.terminated = done;
        self.succeeded = goal_hit;

        Ok(RoundResult {
            transition: Transition {
                s,
                c_idx: action,
                r: r_env + r_shaping,
                s_next,
                done,
            },
            outcome,
            reward_parts: (r_env, r_shaping),
            mcr,
        })
    }

    /// Open-loop pushing primitive. Points #1..#4 translate: the push runs
    /// from the point through the CoM for the inf-norm of the remaining
    /// position error. Points #5 and #6 rotate: the push is perpendicular to
    /// the point-to-CoM ray, signed to reduce the orientation error, for a
    /// fixed 0.025 m. Motion is applied in plant sub-steps of at most the
    /// largest admissible input component.
    fn spp_outcome(&mut self, point_id: usize) -> Result<RoundOutcome> {
        let shape = self.plant.shape();
        let point = shape.point(point_id)?;
        let radial = (shape.com() - point.p).normalize();
        let pose = self.plant.pose();

        let (dir, total) = if point_id <= 4 {
            let err = self.cfg.goal.position() - pose.position();
            (radial, err.x.abs().max(err.y.abs()))
        } else {
            let perp = Vector2::new(-radial.y, radial.x);
            let c = shape.lever(point_id)?;
            let spin = c.x * perp.y - c.y * perp.x;
            let ang_err = wrap_finite(pose.theta - self.cfg.goal.theta);
            // Rotate against the error under the one-step model prediction.
            let dir = if ang_err * spin > 0.0 { -perp } else { perp };
            (dir, 0.025)
        };

        let u_step = self.mpc_cfg.u_max[0].max(self.mpc_cfg.u_max[1]);
        let mut trajectory = vec![pose];
        let mut inputs = Vec::new();
        let mut remaining = total;
        while remaining > 1e-12 {
            let d = remaining.min(u_step);
            let u = dir * d;
            self.plant.step(point_id, u)?;
            trajectory.push(self.plant.pose());
            inputs.push(u);
            remaining -= d;
        }
        let reason = if self.goal_spec().reached(&self.plant.pose()) {
            RoundReason::ReachedGoal
        } else {
            RoundReason::StepCap
        };
        let steps = inputs.len();
        Ok(RoundOutcome { reason, steps, trajectory, inputs })
    }

    /// A copy of this environment with the disturbance stream removed, for
    /// model-based lookahead.
    fn lookahead_copy(&self) -> PushEnv {
        let mut copy = self.clone();
        copy.plant = self.plant.noiseless_copy();
        copy
    }

    fn succeeded(&self) -> bool {
        self.succeeded
    }
}

impl DecisionEnv for PushEnv {
    fn reset(&mut self) -> [f64; STATE_DIM] {
        PushEnv::reset(self)
    }

    fn step(&mut self, action: usize) -> Result<Transition> {
        Ok(self.step_round(action)?.transition)
    }

    fn succeeded(&self) -> bool {
        PushEnv::succeeded(self)
    }
}

/// One-round lookahead point selection: simulate each candidate on a
/// noiseless copy and pick the one whose round ends nearest the goal in the
/// weighted norm (ties break toward the lowest index).
pub fn greedy_select(env: &PushEnv) -> usize {
    let g = env.cfg.goal_state();
    let mut best = 0;
    let mut best_err = f64::INFINITY;
    for action in 0..N_ACTIONS {
        let mut sim = env.lookahead_copy();
        let Ok(result) = sim.step_round(action) else { continue };
        let err = weighted_error(&result.transition.s_next, &g, env.cfg.angle_weight);
        if err < best_err {
            best_err = err;
            best = action;
        }
    }
    best
}
