//! Evaluation harness: per-episode metrics, repeated-trial reports, and
//! head-to-head comparison of policies/executors.

use nalgebra::Vector2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::time::Instant;

use crate::env::{greedy_select, EpisodeConfig, PushEnv};
use crate::geometry::{wrap_finite, Mcr, Pose2D, ShapeName};
use crate::mpc::{MpcConfig, RoundReason};
use crate::qlearn::{argmax, QNet};
use crate::{Error, Result};

/// How pushing points are selected during evaluation (always greedy with
/// respect to the source, no exploration).
pub enum Policy<'a> {
    /// Argmax of a trained value network.
    Net(&'a QNet),
    /// One-round lookahead on the model.
    Greedy,
}

impl Policy<'_> {
    fn select(&self, env: &PushEnv) -> usize {
        match self {
            Policy::Net(net) => argmax(&net.forward(&env.state())),
            Policy::Greedy => greedy_select(env),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Policy::Net(_) => "net",
            Policy::Greedy => "greedy",
        }
    }
}

/// Everything recorded about one decision round.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub point_id: usize,
    pub reason: RoundReason,
    pub steps: usize,
    /// Poses including the round-start pose.
    pub poses: Vec<Pose2D>,
    pub inputs: Vec<Vector2<f64>>,
    pub r_env: f64,
    pub r_shaping: f64,
    pub mcr: Mcr,
}

/// A full episode trace, self-contained enough to recompute its metrics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub shape: ShapeName,
    pub goal: Pose2D,
    pub pos_tol: f64,
    pub ang_tol: f64,
    pub initial_pose: Pose2D,
    pub rounds: Vec<RoundRecord>,
}

impl EpisodeTrace {
    /// The pose sequence at plant-step granularity.
    pub fn flat_poses(&self) -> Vec<Pose2D> {
        let mut poses = vec![self.initial_pose];
        for r in &self.rounds {
            poses.extend_from_slice(&r.poses[1..]);
        }
        poses
    }

    pub fn final_pose(&self) -> Pose2D {
        self.rounds
            .last()
            .and_then(|r| r.poses.last().copied())
            .unwrap_or(self.initial_pose)
    }
}

/// Per-episode evaluation metrics.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub success: bool,
    /// Total {B}-origin path length, meters.
    pub trajectory_length: f64,
    /// Total wrapped orientation travel, radians.
    pub angle_trajectory_length: f64,
    pub rounds: usize,
    pub plant_steps: usize,
    /// Seconds; zero unless wall-time measurement was requested.
    pub wall_time: f64,
}

/// Path lengths of a pose sequence: summed consecutive position distances
/// and summed wrapped orientation increments.
pub fn path_metrics(poses: &[Pose2D]) -> Result<(f64, f64)> {
    if poses.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let mut dist = 0.0;
    let mut ang = 0.0;
    for w in poses.windows(2) {
        dist += (w[1].position() - w[0].position()).norm();
        ang += wrap_finite(w[1].theta - w[0].theta).abs();
    }
    Ok((dist, ang))
}

/// Metrics of a recorded episode; pure in the trace.
pub fn episode_metrics(trace: &EpisodeTrace) -> Result<EpisodeMetrics> {
    let poses = trace.flat_poses();
    let (trajectory_length, angle_trajectory_length) = path_metrics(&poses)?;
    let last = trace.final_pose();
    let pos_err = (last.position() - trace.goal.position()).norm();
    let ang_err = wrap_finite(last.theta - trace.goal.theta).abs();
    Ok(EpisodeMetrics {
        success: pos_err < trace.pos_tol && ang_err < trace.ang_tol,
        trajectory_length,
        angle_trajectory_length,
        rounds: trace.rounds.len(),
        plant_steps: trace.rounds.iter().map(|r| r.steps).sum(),
        wall_time: 0.0,
    })
}

/// Run one full episode under a policy, recording the trace.
pub fn run_episode(
    env: &mut PushEnv,
    policy: &Policy<'_>,
    start: Option<Pose2D>,
) -> Result<(EpisodeTrace, EpisodeMetrics)> {
    match start {
        Some(p) => env.reset_to(p),
        None => env.reset(),
    };
    let mut trace = EpisodeTrace {
        shape: env.cfg().shape,
        goal: env.cfg().goal,
        pos_tol: env.cfg().pos_tol,
        ang_tol: env.cfg().ang_tol,
        initial_pose: env.pose(),
        rounds: Vec::new(),
    };
    loop {
        let action = policy.select(env);
        let r = env.step_round(action)?;
        let done = r.transition.done;
        trace.rounds.push(RoundRecord {
            round: trace.rounds.len(),
            point_id: action + 1,
            reason: r.outcome.reason,
            steps: r.outcome.steps,
            poses: r.outcome.trajectory,
            inputs: r.outcome.inputs,
            r_env: r.reward_parts.0,
            r_shaping: r.reward_parts.1,
            mcr: r.mcr,
        });
        if done {
            break;
        }
    }
    let metrics = episode_metrics(&trace)?;
    Ok((trace, metrics))
}

/// Mean/std/min/max of one metric across episodes (sample std, n-1).
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct Stats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            mean,
            std: var.sqrt(),
            min: values.iter().cloned().fold(f64::INFINITY, f64::min),
            max: values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct Aggregates {
    pub trajectory_length: Stats,
    pub angle_trajectory_length: Stats,
    pub rounds: Stats,
    pub plant_steps: Stats,
    pub wall_time: Stats,
}

/// Aggregated result of a repeated-trial evaluation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SuiteReport {
    pub policy: String,
    pub config_fingerprint: String,
    pub seeds: Vec<u64>,
    pub episodes: Vec<EpisodeMetrics>,
    /// Absent (not zero) when no episodes were run.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub success_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aggregates: Option<Aggregates>,
}

impl SuiteReport {
    fn assemble(
        policy: String,
        fingerprint: String,
        seeds: Vec<u64>,
        episodes: Vec<EpisodeMetrics>,
    ) -> Self {
        let (success_rate, aggregates) = if episodes.is_empty() {
            (None, None)
        } else {
            let successes = episodes.iter().filter(|m| m.success).count();
            let col = |f: fn(&EpisodeMetrics) -> f64| {
                Stats::of(&episodes.iter().map(f).collect::<Vec<_>>())
            };
            (
                Some(successes as f64 / episodes.len() as f64),
                Some(Aggregates {
                    trajectory_length: col(|m| m.trajectory_length),
                    angle_trajectory_length: col(|m| m.angle_trajectory_length),
                    rounds: col(|m| m.rounds as f64),
                    plant_steps: col(|m| m.plant_steps as f64),
                    wall_time: col(|m| m.wall_time),
                }),
            )
        };
        Self { policy, config_fingerprint: fingerprint, seeds, episodes, success_rate, aggregates }
    }
}

/// Evaluation options. Wall-time measurement is off by default so reports
/// are bit-reproducible across runs of the same build.
#[derive(Clone, Copy, Debug)]
pub struct EvalOptions {
    pub episodes: usize,
    pub base_seed: u64,
    /// Fixed starting pose (scripted scenarios) instead of the sampler.
    pub fixed_start: Option<Pose2D>,
    pub measure_wall_time: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { episodes: 120, base_seed: 0, fixed_start: None, measure_wall_time: false }
    }
}

fn fingerprint(cfg: &EpisodeConfig, mpc: &MpcConfig, seeds: &[u64]) -> String {
    #[derive(Serialize)]
    struct Fingerprint<'a> {
        cfg: &'a EpisodeConfig,
        mpc: &'a MpcConfig,
        seeds: &'a [u64],
    }
    serde_json::to_string(&Fingerprint { cfg, mpc, seeds }).expect("config serializes")
}

/// Run a repeated-trial evaluation: one independent environment per episode,
/// seeded from the suite seed list; episodes run on parallel workers and the
/// report assembly is order-independent.
pub fn evaluate(
    policy: &Policy<'_>,
    cfg: &EpisodeConfig,
    mpc: &MpcConfig,
    opts: &EvalOptions,
) -> Result<(SuiteReport, Vec<EpisodeTrace>)> {
    let seeds: Vec<u64> = (0..opts.episodes).map(|i| opts.base_seed + i as u64).collect();
    let fp = fingerprint(cfg, mpc, &seeds);

    let runs: Result<Vec<(EpisodeTrace, EpisodeMetrics)>> = seeds
        .par_iter()
        .map(|seed| {
            let mut episode_cfg = *cfg;
            episode_cfg.seed = *seed;
            let mut env = PushEnv::new(episode_cfg, *mpc);
            let started = Instant::now();
            let (trace, mut metrics) = run_episode(&mut env, policy, opts.fixed_start)?;
            if opts.measure_wall_time {
                metrics.wall_time = started.elapsed().as_secs_f64();
            }
            Ok((trace, metrics))
        })
        .collect();
    let (traces, episodes): (Vec<_>, Vec<_>) = runs?.into_iter().unzip();

    Ok((
        SuiteReport::assemble(policy.label().to_string(), fp, seeds, episodes),
        traces,
    ))
}

/// Side-by-side aggregate comparison of several reports. Relative deltas are
/// against the first report; mismatched fingerprints are recorded as
/// warnings, not errors.
#[derive(Clone, Debug, Serialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ComparisonRow {
    pub label: String,
    pub episodes: usize,
    pub success_rate: Option<f64>,
    pub trajectory_length: f64,
    pub angle_trajectory_length: f64,
    pub rounds: f64,
    pub plant_steps: f64,
    pub wall_time: f64,
    /// Relative change of the trajectory length against the first row.
    pub rel_trajectory_length: f64,
    pub rel_angle_trajectory_length: f64,
}

pub fn compare(reports: &[(String, &SuiteReport)]) -> Comparison {
    assert!(reports.len() >= 2, "comparison needs at least two reports");
    let mut warnings = Vec::new();
    let base_fp = &reports[0].1.config_fingerprint;
    for (label, r) in reports.iter().skip(1) {
        if r.config_fingerprint != *base_fp {
            warnings.push(format!(
                "config fingerprint of {label:?} differs from {:?}; metrics are not \
                 directly comparable",
                reports[0].0
            ));
        }
    }
    let base = reports[0].1.aggregates;
    let rel = |v: f64, b: Option<f64>| match b {
        Some(b) if b.abs() > 1e-12 => (v - b) / b,
        _ => 0.0,
    };
    let rows = reports
        .iter()
        .map(|(label, r)| {
            let a = r.aggregates;
            let get = |f: fn(&Aggregates) -> f64| a.as_ref().map(f).unwrap_or(f64::NAN);
            ComparisonRow {
                label: label.clone(),
                episodes: r.episodes.len(),
                success_rate: r.success_rate,
                trajectory_length: get(|a| a.trajectory_length.mean),
                angle_trajectory_length: get(|a| a.angle_trajectory_length.mean),
                rounds: get(|a| a.rounds.mean),
                plant_steps: get(|a| a.plant_steps.mean),
                wall_time: get(|a| a.wall_time.mean),
                rel_trajectory_length: rel(
                    get(|a| a.trajectory_length.mean),
                    base.as_ref().map(|b| b.trajectory_length.mean),
                ),
                rel_angle_trajectory_length: rel(
                    get(|a| a.angle_trajectory_length.mean),
                    base.as_ref().map(|b| b.angle_trajectory_length.mean),
                ),
            }
        })
        .collect();
    Comparison { rows, warnings }
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<16} {:>8} {:>9} {:>10} {:>10} {:>8} {:>11} {:>9} {:>9}",
            "label",
            "episodes",
            "success",
            "traj[m]",
            "angle[rad]",
            "rounds",
            "steps",
            "d_traj",
            "d_angle"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<16} {:>8} {:>9} {:>10.4} {:>10.4} {:>8.1} {:>11.1} {:>8.1}% {:>8.1}%",
                r.label,
                r.episodes,
                r.success_rate.map(|s| format!("{s:.3}")).unwrap_or_else(|| "-".into()),
                r.trajectory_length,
                r.angle_trajectory_length,
                r.rounds,
                r.plant_steps,
                100.0 * r.rel_trajectory_length,
                100.0 * r.rel_angle_trajectory_length,
            )?;
        }
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}
