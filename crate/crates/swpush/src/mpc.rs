//! Receding-horizon pushing controller.
//!
//! Each control step solves a condensed finite-horizon convex program for a
//! fixed pushing point: quadratic state/input cost, sticking-contact cone
//! and box constraints on the input (handled by exact projection), and the
//! motion-constraint-region state constraint (handled by supporting-halfplane
//! linearization with an augmented quadratic penalty, re-checked against the
//! exact region). [`run_round`] drives the plant with the first input of each
//! solve until the round terminates.

use nalgebra::{Matrix2, Matrix3x2, Rotation2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::geometry::{wrap_finite, Mcr, Pose2D};
use crate::kinematics::{push_jacobian, Plant};
use crate::Result;

/// Distance from the region boundary at which a round is considered to have
/// hit the MCR.
const MCR_EXIT_TOL: f64 = 1e-4;

/// A starting state farther outside the region than this is infeasible.
const MCR_START_TOL: f64 = 1e-6;

/// Target on the supporting-halfplane violation at convergence.
const MCR_SOLVE_TOL: f64 = 1e-9;

/// Controller configuration.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MpcConfig {
    /// Prediction horizon length.
    pub n_horizon: usize,
    /// Diagonal state-error weights `[1/m^2, 1/m^2, 1/rad^2]`.
    pub q_weights: [f64; 3],
    /// Diagonal input weights.
    pub r_weights: [f64; 2],
    /// Componentwise input bound, meters.
    pub u_max: [f64; 2],
    /// Relative cost-decrease threshold for convergence.
    pub solver_tol: f64,
    /// Cap on accepted solver iterations per solve.
    pub max_solver_iters: usize,
    /// Cap on plant steps per pushing round.
    pub round_step_cap: usize,
    /// Consecutive low-improvement steps before a round stalls.
    pub stall_window: usize,
    /// Minimum per-step improvement of the best predicted cost.
    pub stall_eps: f64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            n_horizon: 10,
            q_weights: [100.0, 100.0, 10.0],
            r_weights: [1.0, 1.0],
            u_max: [0.01, 0.01],
            solver_tol: 1e-10,
            max_solver_iters: 600,
            round_step_cap: 40,
            stall_window: 5,
            stall_eps: 1e-8,
        }
    }
}

/// Sticking-contact halfplane rows on the input: `u` is admissible iff both
/// `row . u <= 0`, i.e. the push stays inside the contact friction cone.
pub fn friction_cone_rows(
    e_n: Vector2<f64>,
    e_t: Vector2<f64>,
    mu_c: f64,
) -> [Vector2<f64>; 2] {
    debug_assert!(mu_c > 0.0);
    [-mu_c * e_n + e_t, -mu_c * e_n - e_t]
}

/// The admissible input set for one pushing point: friction cone intersected
/// with the symmetric input box, materialized as a convex polygon.
#[derive(Clone, Debug)]
pub struct InputSet {
    rows: [Vector2<f64>; 2],
    u_max: Vector2<f64>,
    polygon: Vec<Vector2<f64>>,
}

impl InputSet {
    pub fn new(rows: [Vector2<f64>; 2], u_max: Vector2<f64>) -> Self {
        debug_assert!(u_max.x > 0.0 && u_max.y > 0.0);
        let mut poly = vec![
            Vector2::new(-u_max.x, -u_max.y),
            Vector2::new(u_max.x, -u_max.y),
            Vector2::new(u_max.x, u_max.y),
            Vector2::new(-u_max.x, u_max.y),
        ];
        for row in rows {
            poly = clip_halfplane(&poly, row);
        }
        Self { rows, u_max, polygon: poly }
    }

    pub fn contains(&self, u: &Vector2<f64>, tol: f64) -> bool {
        u.x.abs() <= self.u_max.x + tol
            && u.y.abs() <= self.u_max.y + tol
            && self.rows.iter().all(|r| r.dot(u) <= tol)
    }

    /// Euclidean projection onto the set, exact by 2-D case analysis:
    /// interior points are returned unchanged, all others map to the nearest
    /// point of the nearest polygon edge (facet or vertex).
    pub fn project(&self, u: &Vector2<f64>) -> Vector2<f64> {
        if self.contains(u, 1e-15) {
            return *u;
        }
        match self.polygon.len() {
            0 => Vector2::zeros(),
            1 => self.polygon[0],
            _ => {
                let m = self.polygon.len();
                let mut best = self.polygon[0];
                let mut best_d = f64::INFINITY;
                for i in 0..m {
                    let a = self.polygon[i];
                    let b = self.polygon[(i + 1) % m];
                    let cand = project_segment(u, &a, &b);
                    let d = (u - cand).norm_squared();
                    if d < best_d {
                        best_d = d;
                        best = cand;
                    }
                }
                best
            }
        }
    }
}

/// Nearest point of the admissible set `cone ∩ box` to `u`.
pub fn project_input(
    u: Vector2<f64>,
    rows: [Vector2<f64>; 2],
    u_max: Vector2<f64>,
) -> Vector2<f64> {
    InputSet::new(rows, u_max).project(&u)
}

fn project_segment(p: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> Vector2<f64> {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 < 1e-30 {
        return *a;
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    a + t * ab
}

/// Clip a convex CCW polygon to the halfplane `{ u : n . u <= 0 }`.
fn clip_halfplane(poly: &[Vector2<f64>], n: Vector2<f64>) -> Vec<Vector2<f64>> {
    let mut out: Vec<Vector2<f64>> = Vec::with_capacity(poly.len() + 2);
    let m = poly.len();
    for i in 0..m {
        let a = poly[i];
        let b = poly[(i + 1) % m];
        let da = n.dot(&a);
        let db = n.dot(&b);
        let a_in = da <= 0.0;
        let b_in = db <= 0.0;
        if a_in {
            out.push(a);
        }
        if a_in != b_in {
            let t = da / (da - db);
            out.push(a + t * (b - a));
        }
    }
    out.dedup_by(|a, b| (*a - *b).norm_squared() < 1e-30);
    if out.len() > 1 && (out[0] - out[out.len() - 1]).norm_squared() < 1e-30 {
        out.pop();
    }
    out
}

/// One condensed finite-horizon problem, with the state-update matrix frozen
/// at the current orientation.
#[derive(Clone, Debug)]
pub struct MpcProblem {
    /// Maps one input to the state increment `[d_com_w, d_omega]`
    /// (translation block already rotated into the world frame).
    pub b: Matrix3x2<f64>,
    /// Current state `[com_x, com_y, omega]` in {W}.
    pub x0: Vector3<f64>,
    /// Target state.
    pub x_star: Vector3<f64>,
    /// Sticking-contact rows on the input (object frame).
    pub cone_rows: [Vector2<f64>; 2],
    /// Motion constraint region on predicted positions; `None` disables the
    /// state constraint.
    pub mcr: Option<Mcr>,
    pub config: MpcConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    IterCap,
    Infeasible,
}

/// Solved input sequence with diagnostics.
#[derive(Clone, Debug)]
pub struct MpcSolution {
    pub u_seq: Vec<Vector2<f64>>,
    pub x_pred: Vec<Vector3<f64>>,
    pub cost: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    /// Worst distance of a predicted position outside the exact region.
    pub mcr_violation: f64,
}

/// Solve from a cold start.
pub fn solve(problem: &MpcProblem) -> MpcSolution {
    solve_warm(problem, &[])
}

/// Solve starting from a warm-start input sequence (shorter sequences are
/// zero-padded).
pub fn solve_warm(problem: &MpcProblem, warm: &[Vector2<f64>]) -> MpcSolution {
    solve_traced(problem, warm, None)
}

/// The error-state dynamics of one problem in condensed form.
struct CondensedQp {
    n: usize,
    b: Matrix3x2<f64>,
    bt: Matrix2<f64>,
    q: Vector3<f64>,
    r: Vector2<f64>,
    e0: Vector3<f64>,
    pos0: Vector2<f64>,
}

impl CondensedQp {
    fn new(p: &MpcProblem) -> Self {
        let e0 = Vector3::new(
            p.x0.x - p.x_star.x,
            p.x0.y - p.x_star.y,
            wrap_finite(p.x0.z - p.x_star.z),
        );
        Self {
            n: p.config.n_horizon,
            b: p.b,
            bt: Matrix2::new(p.b[(0, 0)], p.b[(0, 1)], p.b[(1, 0)], p.b[(1, 1)]),
            q: Vector3::from(p.config.q_weights),
            r: Vector2::from(p.config.r_weights),
            e0,
            pos0: Vector2::new(p.x0.x, p.x0.y),
        }
    }

    /// Predicted error states e(i), i = 1..=N.
    fn errors(&self, u: &[Vector2<f64>], out: &mut Vec<Vector3<f64>>) {
        out.clear();
        let mut e = self.e0;
        for ui in u {
            e += self.b * ui;
            out.push(e);
        }
    }

    fn position(&self, e: &Vector3<f64>) -> Vector2<f64> {
        // e(i) differs from x(i) by the constant target offset.
        Vector2::new(e.x - self.e0.x + self.pos0.x, e.y - self.e0.y + self.pos0.y)
    }

    fn cost(&self, errors: &[Vector3<f64>], u: &[Vector2<f64>]) -> f64 {
        let mut j = 0.0;
        for e in errors {
            j += self.q.x * e.x * e.x + self.q.y * e.y * e.y + self.q.z * e.z * e.z;
        }
        for ui in u {
            j += self.r.x * ui.x * ui.x + self.r.y * ui.y * ui.y;
        }
        j
    }

    /// Augmented objective: cost plus the shifted quadratic penalty of the
    /// halfplane constraints on predicted positions.
    fn augmented(
        &self,
        errors: &[Vector3<f64>],
        u: &[Vector2<f64>],
        planes: &[(Vector2<f64>, f64)],
        lambda: &[f64],
        rho: f64,
    ) -> f64 {
        let mut val = self.cost(errors, u);
        if !planes.is_empty() {
            for (i, e) in errors.iter().enumerate() {
                let p = self.position(e);
                let v = planes[i].0.dot(&p) - planes[i].1;
                let s = (lambda[i] + rho * v).max(0.0);
                val += (s * s - lambda[i] * lambda[i]) / (2.0 * rho);
            }
        }
        val
    }

    fn gradient(
        &self,
        errors: &[Vector3<f64>],
        u: &[Vector2<f64>],
        planes: &[(Vector2<f64>, f64)],
        lambda: &[f64],
        rho: f64,
        out: &mut Vec<Vector2<f64>>,
    ) {
        out.clear();
        out.resize(self.n, Vector2::zeros());
        // Suffix accumulation: u_j influences every e(i) with i > j.
        let mut acc_state = Vector3::zeros();
        let mut acc_pos = Vector2::zeros();
        for j in (0..self.n).rev() {
            let e = &errors[j];
            acc_state += 2.0
                * Vector3::new(self.q.x * e.x, self.q.y * e.y, self.q.z * e.z);
            if !planes.is_empty() {
                let p = self.position(e);
                let v = planes[j].0.dot(&p) - planes[j].1;
                let s = (lambda[j] + rho * v).max(0.0);
                if s > 0.0 {
                    acc_pos += s * planes[j].0;
                }
            }
            out[j] = self.b.transpose() * acc_state
                + self.bt.transpose() * acc_pos
                + 2.0 * Vector2::new(self.r.x * u[j].x, self.r.y * u[j].y);
        }
    }
}

/// Full solver with an optional monotonicity trace: every accepted augmented
/// objective value of each inner descent is appended to `trace`.
pub(crate) fn solve_traced(
    problem: &MpcProblem,
    warm: &[Vector2<f64>],
    mut trace: Option<&mut Vec<Vec<f64>>>,
) -> MpcSolution {
    let cfg = &problem.config;
    debug_assert!(cfg.n_horizon >= 1);
    let n = cfg.n_horizon;
    let qp = CondensedQp::new(problem);
    let input_set = InputSet::new(problem.cone_rows, Vector2::from(cfg.u_max));

    // A start already outside the region cannot satisfy the linearized
    // constraint for any input sequence.
    if let Some(mcr) = &problem.mcr {
        if mcr.boundary_signed_distance(&qp.pos0) > MCR_START_TOL {
            let u_seq = vec![Vector2::zeros(); n];
            let mut errors = Vec::with_capacity(n);
            qp.errors(&u_seq, &mut errors);
            let cost = qp.cost(&errors, &u_seq);
            let x_pred = vec![problem.x0; n];
            return MpcSolution {
                u_seq,
                x_pred,
                cost,
                iterations: 0,
                status: SolveStatus::Infeasible,
                mcr_violation: mcr.boundary_signed_distance(&qp.pos0),
            };
        }
    }

    let mut u: Vec<Vector2<f64>> = (0..n)
        .map(|i| input_set.project(warm.get(i).copied().get_or_insert(Vector2::zeros())))
        .collect();

    let mut errors = Vec::with_capacity(n);
    let mut grad = Vec::with_capacity(n);
    let mut cand = vec![Vector2::zeros(); n];
    let mut cand_errors = Vec::with_capacity(n);
    let mut planes: Vec<(Vector2<f64>, f64)> = Vec::new();
    let mut lambda = vec![0.0; n];
    let mut rho = 1e4;

    // Conservative curvature bound for the initial step size; backtracking
    // with growth adapts from there.
    let b_norm2 = qp.b.norm_squared();
    let qmax = cfg.q_weights.iter().cloned().fold(0.0, f64::max);
    let rmax = cfg.r_weights.iter().cloned().fold(0.0, f64::max);
    let mut step = 1.0 / (2.0 * ((n * n) as f64 * qmax * b_norm2 + rmax)).max(1e-12);

    let mut total_iters = 0usize;
    let mut inner_converged = false;
    let max_outer = 12;

    for outer in 0..max_outer {
        // Relinearize: supporting halfplane at the boundary point nearest to
        // each predicted position.
        if let Some(mcr) = &problem.mcr {
            qp.errors(&u, &mut errors);
            planes.clear();
            for e in &errors {
                let h = mcr.halfspace(&qp.position(e));
                planes.push((h.normal, h.offset));
            }
        }

        let mut inner_trace: Vec<f64> = Vec::new();
        qp.errors(&u, &mut errors);
        let mut val = qp.augmented(&errors, &u, &planes, &lambda, rho);
        inner_trace.push(val);
        let mut low_progress = 0;
        inner_converged = false;

        while total_iters < cfg.max_solver_iters {
            qp.gradient(&errors, &u, &planes, &lambda, rho, &mut grad);

            // Projected gradient step with Armijo backtracking on the
            // majorization bound; only improving iterates are accepted.
            let mut accepted = false;
            for _ in 0..60 {
                let mut diff2 = 0.0;
                let mut gdot = 0.0;
                for j in 0..n {
                    cand[j] = input_set.project(&(u[j] - step * grad[j]));
                    let d = cand[j] - u[j];
                    diff2 += d.norm_squared();
                    gdot += grad[j].dot(&d);
                }
                if diff2 == 0.0 {
                    break; // fixed point of the projection
                }
                qp.errors(&cand, &mut cand_errors);
                let cand_val =
                    qp.augmented(&cand_errors, &cand, &planes, &lambda, rho);
                if cand_val <= val + gdot + diff2 / (2.0 * step) {
                    std::mem::swap(&mut u, &mut cand);
                    std::mem::swap(&mut errors, &mut cand_errors);
                    let drop = val - cand_val;
                    val = cand_val;
                    inner_trace.push(val);
                    accepted = true;
                    step = (step * 1.25).min(1e6);
                    if drop <= cfg.solver_tol * val.abs().max(1.0) {
                        low_progress += 1;
                    } else {
                        low_progress = 0;
                    }
                    break;
                }
                step *= 0.5;
            }
            if accepted {
                total_iters += 1;
            }
            if !accepted || low_progress >= 2 {
                inner_converged = true;
                break;
            }
        }
        if let Some(t) = trace.as_deref_mut() {
            t.push(inner_trace);
        }

        let Some(mcr) = &problem.mcr else { break };

        // Multiplier update on the current linearization.
        qp.errors(&u, &mut errors);
        let mut max_viol: f64 = 0.0;
        for i in 0..n {
            let p = qp.position(&errors[i]);
            let v = planes[i].0.dot(&p) - planes[i].1;
            lambda[i] = (lambda[i] + rho * v).max(0.0);
            max_viol = max_viol.max(v);
        }
        let exact_viol = max_exact_violation(mcr, &qp, &errors);
        if inner_converged && max_viol <= MCR_SOLVE_TOL && exact_viol <= MCR_SOLVE_TOL {
            break;
        }
        if total_iters >= cfg.max_solver_iters {
            break;
        }
        if outer % 2 == 1 && max_viol > MCR_SOLVE_TOL {
            rho = (rho * 10.0).min(1e10);
        }
    }

    qp.errors(&u, &mut errors);
    let cost = qp.cost(&errors, &u);
    let mcr_violation = problem
        .mcr
        .as_ref()
        .map(|m| max_exact_violation(m, &qp, &errors))
        .unwrap_or(0.0);
    let x_pred = errors
        .iter()
        .map(|e| {
            Vector3::new(
                e.x - qp.e0.x + qp.pos0.x,
                e.y - qp.e0.y + qp.pos0.y,
                e.z + problem.x_star.z,
            )
        })
        .collect();
    let status = if total_iters >= cfg.max_solver_iters || !inner_converged {
        SolveStatus::IterCap
    } else if mcr_violation > 1e-8 {
        SolveStatus::IterCap
    } else {
        SolveStatus::Converged
    };
    MpcSolution { u_seq: u, x_pred, cost, iterations: total_iters, status, mcr_violation }
}

fn max_exact_violation(mcr: &Mcr, qp: &CondensedQp, errors: &[Vector3<f64>]) -> f64 {
    errors
        .iter()
        .map(|e| mcr.boundary_signed_distance(&qp.position(e)))
        .fold(0.0, f64::max)
}

/// Pose goal with the two independently checked tolerances.
#[derive(Clone, Copy, Debug)]
pub struct GoalSpec {
    pub target: Pose2D,
    /// {B}-origin position tolerance, meters.
    pub pos_tol: f64,
    /// Wrapped orientation tolerance, radians.
    pub ang_tol: f64,
}

impl GoalSpec {
    pub fn reached(&self, pose: &Pose2D) -> bool {
        let pos_err = (pose.position() - self.target.position()).norm();
        let ang_err = wrap_finite(pose.theta - self.target.theta).abs();
        pos_err < self.pos_tol && ang_err < self.ang_tol
    }
}

/// Why a pushing round ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RoundReason {
    ReachedGoal,
    HitMcrBoundary,
    Stalled,
    Infeasible,
    StepCap,
}

impl std::fmt::Display for RoundReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            RoundReason::ReachedGoal => "reached_goal",
            RoundReason::HitMcrBoundary => "hit_mcr_boundary",
            RoundReason::Stalled => "stalled",
            RoundReason::Infeasible => "infeasible",
            RoundReason::StepCap => "step_cap",
        };
        f.write_str(s)
    }
}

/// Result of one pushing round at a fixed pushing point.
#[derive(Clone, Debug)]
pub struct RoundOutcome {
    pub reason: RoundReason,
    /// Plant steps taken; equals `trajectory.len() - 1`.
    pub steps: usize,
    /// Poses including the starting pose.
    pub trajectory: Vec<Pose2D>,
    /// Input applied at each plant step (object frame).
    pub inputs: Vec<Vector2<f64>>,
}

impl RoundOutcome {
    fn finish(reason: RoundReason, trajectory: Vec<Pose2D>, inputs: Vec<Vector2<f64>>) -> Self {
        debug_assert_eq!(inputs.len() + 1, trajectory.len());
        Self { reason, steps: inputs.len(), trajectory, inputs }
    }
}

/// Build the controller problem for the plant's current state.
fn build_problem(
    plant: &Plant,
    point_id: usize,
    goal: &GoalSpec,
    mcr: Option<&Mcr>,
    cfg: &MpcConfig,
) -> Result<MpcProblem> {
    let shape = plant.shape();
    let point = shape.point(point_id)?;
    let c = shape.lever(point_id)?;
    let pose = plant.pose();

    // Freeze the world-frame lift at the measured orientation: the
    // translation rows rotate with the object, the rotation row does not.
    let b_obj = push_jacobian(c, plant.model().h);
    let rot = Rotation2::new(pose.theta);
    let t = rot.matrix() * Matrix2::new(b_obj[(0, 0)], b_obj[(0, 1)], b_obj[(1, 0)], b_obj[(1, 1)]);
    let b = Matrix3x2::new(
        t[(0, 0)],
        t[(0, 1)],
        t[(1, 0)],
        t[(1, 1)],
        b_obj[(2, 0)],
        b_obj[(2, 1)],
    );

    let com_w = plant.com_world();
    let target_com = goal.target.transform_point(&plant.shape().com());
    Ok(MpcProblem {
        b,
        x0: Vector3::new(com_w.x, com_w.y, pose.theta),
        x_star: Vector3::new(target_com.x, target_com.y, goal.target.theta),
        cone_rows: friction_cone_rows(point.e_n, point.e_t, plant.model().mu_c),
        mcr: mcr.copied(),
        config: *cfg,
    })
}

/// Run one pushing round: repeatedly solve and apply the first input until
/// the goal is reached, the object hits the MCR boundary, progress stalls,
/// the problem is infeasible, or the step cap is exhausted.
///
/// The MCR applies to the center of mass in {W}; the starting state is
/// allowed to sit on the boundary (rounds start at an apex of the region)
/// but not outside it.
pub fn run_round(
    plant: &mut Plant,
    point_id: usize,
    goal: &GoalSpec,
    mcr: Option<&Mcr>,
    cfg: &MpcConfig,
) -> Result<RoundOutcome> {
    let mut trajectory = vec![plant.pose()];
    let mut inputs: Vec<Vector2<f64>> = Vec::new();

    if goal.reached(&plant.pose()) {
        return Ok(RoundOutcome::finish(RoundReason::ReachedGoal, trajectory, inputs));
    }
    if let Some(m) = mcr {
        if m.boundary_signed_distance(&plant.com_world()) > MCR_START_TOL {
            return Ok(RoundOutcome::finish(RoundReason::HitMcrBoundary, trajectory, inputs));
        }
    }

    let mut warm: Vec<Vector2<f64>> = Vec::new();
    let mut best_cost = f64::INFINITY;
    let mut stall_count = 0usize;

    for _ in 0..cfg.round_step_cap {
        let problem = build_problem(plant, point_id, goal, mcr, cfg)?;
        let sol = solve_warm(&problem, &warm);
        if sol.status == SolveStatus::Infeasible {
            return Ok(RoundOutcome::finish(RoundReason::Infeasible, trajectory, inputs));
        }

        let u0 = sol.u_seq[0];
        plant.step(point_id, u0)?;
        trajectory.push(plant.pose());
        inputs.push(u0);

        if goal.reached(&plant.pose()) {
            return Ok(RoundOutcome::finish(RoundReason::ReachedGoal, trajectory, inputs));
        }
        if let Some(m) = mcr {
            if m.boundary_signed_distance(&plant.com_world()) >= -MCR_EXIT_TOL {
                return Ok(RoundOutcome::finish(
                    RoundReason::HitMcrBoundary,
                    trajectory,
                    inputs,
                ));
            }
        }

        if best_cost - sol.cost < cfg.stall_eps {
            stall_count += 1;
            if stall_count >= cfg.stall_window {
                return Ok(RoundOutcome::finish(RoundReason::Stalled, trajectory, inputs));
            }
        } else {
            stall_count = 0;
        }
        best_cost = best_cost.min(sol.cost);

        // Receding-horizon warm start: shift the solution by one step.
        warm.clear();
        warm.extend_from_slice(&sol.u_seq[1..]);
        warm.push(Vector2::zeros());
    }
    Ok(RoundOutcome::finish(RoundReason::StepCap, trajectory, inputs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_mcr, ShapeModel, ShapeName};
    use crate::kinematics::{MotionModel, NoiseModel};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn upward_cone() -> [Vector2<f64>; 2] {
        friction_cone_rows(Vector2::new(0.0, 1.0), Vector2::new(1.0, 0.0), 0.6)
    }

    #[test]
    fn cone_rows_spot_values() {
        let rows = upward_cone();
        let feasible = |u: Vector2<f64>| rows.iter().all(|r| r.dot(&u) <= 1e-12);
        assert!(feasible(Vector2::new(0.0, 0.01)));
        assert!(!feasible(Vector2::new(0.01, 0.01)));
        // Boundary case: tangential exactly mu times normal.
        let u = Vector2::new(0.006, 0.01);
        assert_relative_eq!(rows[0].dot(&u), 0.0, epsilon = 1e-15);
        assert!(feasible(u));
        // Pulling is never admissible.
        assert!(!feasible(Vector2::new(0.0, -0.001)));
    }

    #[test]
    fn projection_identity_on_feasible_points() {
        let set = InputSet::new(upward_cone(), Vector2::new(0.01, 0.01));
        let u = Vector2::new(0.003, 0.008);
        assert_eq!(set.project(&u), u);
        // Apex is in the set.
        assert_eq!(set.project(&Vector2::zeros()), Vector2::zeros());
    }

    #[test]
    fn projection_spot_values() {
        let set = InputSet::new(upward_cone(), Vector2::new(0.01, 0.01));
        // Outside past the box/cone corner.
        let p = set.project(&Vector2::new(0.02, 0.01));
        assert_relative_eq!(p.x, 0.006, epsilon = 1e-12);
        assert_relative_eq!(p.y, 0.01, epsilon = 1e-12);
        // Pulling projects to the apex.
        let p = set.project(&Vector2::new(0.0, -0.01));
        assert_relative_eq!(p.norm(), 0.0, epsilon = 1e-12);
    }

    /// Brute-force nearest feasible grid point oracle.
    fn grid_oracle(
        set: &InputSet,
        u: Vector2<f64>,
        u_max: Vector2<f64>,
        steps: usize,
    ) -> Vector2<f64> {
        let mut best = Vector2::zeros();
        let mut best_d = f64::INFINITY;
        for ix in 0..=steps {
            let x = -u_max.x + 2.0 * u_max.x * ix as f64 / steps as f64;
            for iy in 0..=steps {
                let y = -u_max.y + 2.0 * u_max.y * iy as f64 / steps as f64;
                let cand = Vector2::new(x, y);
                if set.rows.iter().all(|r| r.dot(&cand) <= 1e-15) {
                    let d = (cand - u).norm_squared();
                    if d < best_d {
                        best_d = d;
                        best = cand;
                    }
                }
            }
        }
        best
    }

    #[test]
    fn projection_matches_grid_oracle() {
        // The returned point must be feasible, at least as close as every
        // feasible grid point, and no farther than one grid cell from the
        // grid best: that sandwiches its distance at grid resolution.
        let u_max = Vector2::new(0.01, 0.01);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..25 {
            let ang = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let e_n = Vector2::new(ang.cos(), ang.sin());
            let e_t = Vector2::new(-e_n.y, e_n.x);
            let set = InputSet::new(friction_cone_rows(e_n, e_t, 0.6), u_max);
            let u = Vector2::new(rng.random_range(-0.03..0.03), rng.random_range(-0.03..0.03));
            let exact = set.project(&u);
            let approx = grid_oracle(&set, u, u_max, 400);
            let d_exact = (u - exact).norm();
            let d_grid = (u - approx).norm();
            assert!(set.contains(&exact, 1e-12));
            assert!(d_exact <= d_grid + 1e-12, "projection lost to a grid point");
            assert!(
                d_grid - d_exact <= 8e-5,
                "projection distance {d_exact} vs grid {d_grid} for u={u:?}"
            );
        }
    }

    fn unconstrained_problem(n: usize) -> MpcProblem {
        // Push at the CoM: inputs map directly to translation.
        let b = Matrix3x2::new(1.0, 0.0, 0.0, 1.0, 0.0, 0.0);
        MpcProblem {
            b,
            x0: Vector3::zeros(),
            x_star: Vector3::new(0.005, 0.002, 0.3),
            cone_rows: friction_cone_rows(
                Vector2::new(0.005, 0.002).normalize(),
                {
                    let e_n = Vector2::new(0.005, 0.002).normalize();
                    Vector2::new(-e_n.y, e_n.x)
                },
                0.6,
            ),
            mcr: None,
            config: MpcConfig {
                n_horizon: n,
                q_weights: [1.0, 1.0, 1.0],
                r_weights: [1e-10, 1e-10],
                solver_tol: 1e-14,
                max_solver_iters: 4000,
                ..MpcConfig::default()
            },
        }
    }

    #[test]
    fn solve_matches_least_squares_solution() {
        // One step, negligible input cost, no active constraint: the
        // minimizer is the pseudo-inverse solution; the rotation target is
        // unreachable and only adds constant cost.
        let sol = solve(&unconstrained_problem(1));
        assert_eq!(sol.status, SolveStatus::Converged);
        assert_relative_eq!(sol.u_seq[0].x, 0.005, epsilon = 1e-6);
        assert_relative_eq!(sol.u_seq[0].y, 0.002, epsilon = 1e-6);
        assert_relative_eq!(sol.cost, 0.09, max_relative = 1e-6);
    }

    #[test]
    fn solve_at_rest_returns_zero_inputs() {
        let mut p = unconstrained_problem(4);
        p.x_star = p.x0;
        let sol = solve(&p);
        assert!(sol.cost < 1e-12);
        for u in &sol.u_seq {
            assert!(u.norm() < 1e-7);
        }
    }

    fn random_problem(rng: &mut ChaCha8Rng, n: usize) -> MpcProblem {
        let c = Vector2::new(rng.random_range(-0.09..0.09), rng.random_range(-0.09..0.09));
        let b_obj = push_jacobian(c, 0.5);
        let theta = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let rot = Rotation2::new(theta);
        let t = rot.matrix()
            * Matrix2::new(b_obj[(0, 0)], b_obj[(0, 1)], b_obj[(1, 0)], b_obj[(1, 1)]);
        let b = Matrix3x2::new(
            t[(0, 0)],
            t[(0, 1)],
            t[(1, 0)],
            t[(1, 1)],
            b_obj[(2, 0)],
            b_obj[(2, 1)],
        );
        let ang = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let e_n = Vector2::new(ang.cos(), ang.sin());
        let e_t = Vector2::new(-e_n.y, e_n.x);
        let x0 = Vector3::new(
            rng.random_range(-0.1..0.1),
            rng.random_range(-0.1..0.1),
            rng.random_range(-1.0..1.0),
        );
        let x_star = Vector3::new(
            rng.random_range(-0.1..0.1),
            rng.random_range(-0.1..0.1),
            rng.random_range(-1.0..1.0),
        );
        // Region around the current position so the start is feasible.
        let pos0 = Vector2::new(x0.x, x0.y);
        let target = Vector2::new(x_star.x, x_star.y);
        let mcr = build_mcr(pos0, target, 0.03, 1.0 / 3.0);
        MpcProblem {
            b,
            x0,
            x_star,
            cone_rows: friction_cone_rows(e_n, e_t, 0.6),
            mcr: Some(mcr),
            config: MpcConfig {
                n_horizon: n,
                solver_tol: 1e-13,
                max_solver_iters: 4000,
                ..MpcConfig::default()
            },
        }
    }

    /// Exhaustive feasible-cost search over a coarse input grid.
    fn grid_best_cost(p: &MpcProblem, steps_per_axis: usize) -> f64 {
        let cfg = &p.config;
        assert_eq!(cfg.n_horizon, 2);
        let qp = CondensedQp::new(p);
        let axis: Vec<f64> = (0..=steps_per_axis)
            .map(|i| -cfg.u_max[0] + 2.0 * cfg.u_max[0] * i as f64 / steps_per_axis as f64)
            .collect();
        let mut best = f64::INFINITY;
        let mut errors = Vec::new();
        for &x0 in &axis {
            for &y0 in &axis {
                let u0 = Vector2::new(x0, y0);
                if !p.cone_rows.iter().all(|r| r.dot(&u0) <= 1e-15) {
                    continue;
                }
                for &x1 in &axis {
                    for &y1 in &axis {
                        let u1 = Vector2::new(x1, y1);
                        if !p.cone_rows.iter().all(|r| r.dot(&u1) <= 1e-15) {
                            continue;
                        }
                        let u = [u0, u1];
                        qp.errors(&u, &mut errors);
                        if let Some(m) = &p.mcr {
                            if !errors.iter().all(|e| m.contains(&qp.position(e))) {
                                continue;
                            }
                        }
                        best = best.min(qp.cost(&errors, &u));
                    }
                }
            }
        }
        best
    }

    #[test]
    fn solver_beats_coarse_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let p = random_problem(&mut rng, 2);
            let sol = solve(&p);
            let grid = grid_best_cost(&p, 40);
            assert!(
                sol.cost <= grid + 1e-6,
                "solver {} vs grid {} ({:?})",
                sol.cost,
                grid,
                sol.status
            );
            let set = InputSet::new(p.cone_rows, Vector2::from(p.config.u_max));
            for u in &sol.u_seq {
                assert!(set.contains(u, 1e-8));
            }
        }
    }

    #[test]
    fn solver_descent_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let p = random_problem(&mut rng, 6);
            let mut trace = Vec::new();
            let _ = solve_traced(&p, &[], Some(&mut trace));
            for inner in &trace {
                for w in inner.windows(2) {
                    assert!(
                        w[1] <= w[0] + 1e-12,
                        "augmented objective increased: {} -> {}",
                        w[0],
                        w[1]
                    );
                }
            }
        }
    }

    #[test]
    fn infeasible_when_start_outside_region() {
        let mut p = random_problem(&mut ChaCha8Rng::seed_from_u64(2), 2);
        p.mcr = Some(Mcr::Circle { center: Vector2::new(10.0, 10.0), radius: 0.01 });
        let sol = solve(&p);
        assert_eq!(sol.status, SolveStatus::Infeasible);
        assert!(sol.u_seq.iter().all(|u| u.norm() == 0.0));
    }

    fn goal(target: Pose2D) -> GoalSpec {
        GoalSpec { target, pos_tol: 0.015, ang_tol: 0.0436 }
    }

    fn t_plant(pose: Pose2D) -> Plant {
        let mut plant = Plant::new(
            ShapeModel::builtin(ShapeName::T),
            MotionModel::default(),
            NoiseModel::default(),
        );
        plant.set_pose(pose);
        plant
    }

    #[test]
    fn run_round_at_goal_is_zero_steps() {
        let mut plant = t_plant(Pose2D::new(0.001, 0.0, 0.01));
        let out = run_round(
            &mut plant,
            1,
            &goal(Pose2D::new(0.0, 0.0, 0.0)),
            None,
            &MpcConfig::default(),
        )
        .unwrap();
        assert_eq!(out.reason, RoundReason::ReachedGoal);
        assert_eq!(out.steps, 0);
        assert_eq!(out.trajectory.len(), 1);
    }

    #[test]
    fn run_round_descends_through_com_point() {
        // Top-of-stem point pushes downward through the CoM line; the round
        // reaches the goal with strictly decreasing height.
        let mut plant = t_plant(Pose2D::new(0.0, 0.08, 0.0));
        let com0 = plant.com_world();
        let g = goal(Pose2D::new(0.0, 0.0, 0.0));
        let target_com = g.target.transform_point(&plant.shape().com());
        let mcr = build_mcr(com0, target_com, 0.03, 1.0 / 3.0);
        let out =
            run_round(&mut plant, 1, &g, Some(&mcr), &MpcConfig::default()).unwrap();
        assert_eq!(out.reason, RoundReason::ReachedGoal, "{:?}", out.trajectory.last());
        for w in out.trajectory.windows(2) {
            assert!(w[1].y < w[0].y, "height must strictly decrease");
        }
    }

    #[test]
    fn run_round_blocked_cone_stalls_or_exits() {
        // Point #1 can only push downward, but the target is above: no
        // admissible input makes progress.
        let mut plant = t_plant(Pose2D::new(0.0, 0.0, 0.0));
        let com0 = plant.com_world();
        let g = goal(Pose2D::new(0.0, 0.12, 0.0));
        let target_com = g.target.transform_point(&plant.shape().com());
        let mcr = build_mcr(com0, target_com, 0.03, 1.0 / 3.0);
        let cfg = MpcConfig::default();
        let out = run_round(&mut plant, 1, &g, Some(&mcr), &cfg).unwrap();
        assert!(
            matches!(out.reason, RoundReason::Stalled | RoundReason::HitMcrBoundary),
            "{:?}",
            out.reason
        );
        assert!(out.steps < cfg.round_step_cap);
    }

    #[test]
    fn run_round_inputs_always_admissible() {
        let mut plant = t_plant(Pose2D::new(0.05, 0.07, 0.4));
        let g = goal(Pose2D::new(0.0, 0.0, 0.0));
        let com0 = plant.com_world();
        let target_com = g.target.transform_point(&plant.shape().com());
        let mcr = build_mcr(com0, target_com, 0.03, 1.0 / 3.0);
        let cfg = MpcConfig::default();
        let point = plant.shape().point(4).unwrap();
        let rows = friction_cone_rows(point.e_n, point.e_t, plant.model().mu_c);
        let set = InputSet::new(rows, Vector2::from(cfg.u_max));
        let out = run_round(&mut plant, 4, &g, Some(&mcr), &cfg).unwrap();
        for u in &out.inputs {
            assert!(set.contains(u, 1e-8), "inadmissible input {u:?}");
        }
    }

    #[test]
    fn run_round_mcr_overshoot_is_bounded() {
        // No state may leave the region by more than one input step.
        let mut plant = t_plant(Pose2D::new(-0.06, 0.09, -0.2));
        let g = goal(Pose2D::new(0.0, 0.0, 0.0));
        let com0 = plant.com_world();
        let target_com = g.target.transform_point(&plant.shape().com());
        let mcr = build_mcr(com0, target_com, 0.03, 1.0 / 3.0);
        let cfg = MpcConfig::default();
        for pid in 1..=6 {
            let mut p = plant.clone();
            let out = run_round(&mut p, pid, &g, Some(&mcr), &cfg).unwrap();
            let shape = p.shape().clone();
            for pose in &out.trajectory {
                let com = pose.transform_point(&shape.com());
                let sd = mcr.boundary_signed_distance(&com);
                assert!(sd <= 0.01 * std::f64::consts::SQRT_2 + 1e-9, "overshoot {sd}");
            }
        }
    }

    #[test]
    fn run_round_converges_without_region_constraint() {
        // Start within 0.2 m of the target, aligned orientation, pushing
        // point collinear with the target direction: the closed loop
        // converges well within the step budget.
        let mut plant = t_plant(Pose2D::new(0.0, 0.18, 0.0));
        let g = goal(Pose2D::new(0.0, 0.0, 0.0));
        let cfg = MpcConfig { round_step_cap: 200, ..MpcConfig::default() };
        let out = run_round(&mut plant, 1, &g, None, &cfg).unwrap();
        assert_eq!(out.reason, RoundReason::ReachedGoal);
        assert!(out.steps <= 200);
    }

    #[test]
    fn run_round_is_deterministic() {
        let run = || {
            let mut plant = t_plant(Pose2D::new(0.04, 0.06, 0.3));
            let g = goal(Pose2D::new(0.0, 0.0, 0.0));
            let com0 = plant.com_world();
            let target_com = g.target.transform_point(&plant.shape().com());
            let mcr = build_mcr(com0, target_com, 0.03, 1.0 / 3.0);
            run_round(&mut plant, 6, &g, Some(&mcr), &MpcConfig::default()).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.reason, b.reason);
        assert_eq!(a.steps, b.steps);
        for (pa, pb) in a.trajectory.iter().zip(&b.trajectory) {
            assert_eq!(pa.x.to_bits(), pb.x.to_bits());
            assert_eq!(pa.y.to_bits(), pb.y.to_bits());
            assert_eq!(pa.theta.to_bits(), pb.theta.to_bits());
        }
    }
}
