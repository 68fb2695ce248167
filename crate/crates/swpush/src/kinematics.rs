//! Quasi-static single-point pushing kinematics and the simulation plant.
//!
//! The motion model maps a pusher displacement `u` (object frame, at a
//! contact point with lever arm `c` about the center of mass) to the object
//! displacement: translation of the CoM plus a rotation. Under sticking
//! contact the contact point moves exactly with the pusher.

use nalgebra::{Matrix3x2, Vector2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geometry::{wrap_finite, Pose2D, ShapeModel};
use crate::{Error, Result};

/// Parameters of the pushing motion model.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MotionModel {
    /// Ratio of the object's maximum frictional moment to its maximum
    /// sliding friction, meters.
    pub h: f64,
    /// Contact friction coefficient between pusher and object.
    pub mu_c: f64,
}

impl Default for MotionModel {
    fn default() -> Self {
        Self { h: 0.5, mu_c: 0.6 }
    }
}

/// Object displacement produced by one push, in the object frame.
#[derive(Clone, Copy, Debug)]
pub struct PushDelta {
    /// CoM displacement, meters.
    pub d_com: Vector2<f64>,
    /// Rotation, radians.
    pub d_omega: f64,
}

/// Per-step Gaussian disturbance added to the model output (zero by default).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Std of the noise on each CoM displacement component, meters.
    pub sigma_pos: f64,
    /// Std of the noise on the rotation, radians.
    pub sigma_rot: f64,
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self { sigma_pos: 0.0, sigma_rot: 0.0, seed: 0 }
    }
}

impl NoiseModel {
    pub fn is_zero(&self) -> bool {
        self.sigma_pos == 0.0 && self.sigma_rot == 0.0
    }
}

/// The 3x2 matrix `B` mapping a pusher displacement `u` to the object
/// displacement `[d_com_x, d_com_y, d_omega]`, for a contact point with
/// lever arm `c` about the CoM (all in the object frame).
pub fn push_jacobian(c: Vector2<f64>, h: f64) -> Matrix3x2<f64> {
    debug_assert!(h > 0.0);
    let den = h * h + c.norm_squared();
    Matrix3x2::new(
        (h * h + c.x * c.x) / den,
        c.x * c.y / den,
        c.x * c.y / den,
        (h * h + c.y * c.y) / den,
        -c.y / den,
        c.x / den,
    )
}

/// Evaluate the motion model directly (componentwise form of the jacobian
/// product; the rotation is exactly zero when the push line of action passes
/// through the CoM).
pub fn push_delta(c: Vector2<f64>, u: Vector2<f64>, h: f64) -> PushDelta {
    debug_assert!(h > 0.0);
    let den = h * h + c.norm_squared();
    PushDelta {
        d_com: Vector2::new(
            ((h * h + c.x * c.x) * u.x + c.x * c.y * u.y) / den,
            ((h * h + c.y * c.y) * u.y + c.x * c.y * u.x) / den,
        ),
        d_omega: (c.x * u.y - c.y * u.x) / den,
    }
}

/// Apply one noiseless push at the given pushing point and return the new
/// {B}-origin pose.
///
/// The model displacement is computed in the object frame, the translation
/// is rotated into the world frame at the current orientation, and the pose
/// is recovered from the updated CoM.
pub fn apply_push(
    pose: Pose2D,
    shape: &ShapeModel,
    point_id: usize,
    u: Vector2<f64>,
    model: &MotionModel,
) -> Result<Pose2D> {
    apply_push_with(pose, shape, point_id, u, model, Vector2::zeros(), 0.0)
}

fn apply_push_with(
    pose: Pose2D,
    shape: &ShapeModel,
    point_id: usize,
    u: Vector2<f64>,
    model: &MotionModel,
    noise_pos: Vector2<f64>,
    noise_rot: f64,
) -> Result<Pose2D> {
    if !(u.x.is_finite() && u.y.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite push input {u:?}")));
    }
    let c = shape.lever(point_id)?;
    let delta = push_delta(c, u, model.h);
    let d_com = delta.d_com + noise_pos;
    let d_omega = delta.d_omega + noise_rot;
    if d_com == Vector2::zeros() && d_omega == 0.0 {
        return Ok(pose); // keep the zero push bit-exact
    }

    let rot = pose.rotation();
    let com_world = pose.position() + rot * shape.com();
    let new_com = com_world + rot * d_com;
    let new_theta = wrap_finite(pose.theta + d_omega);
    let new_origin = new_com - nalgebra::Rotation2::new(new_theta) * shape.com();
    Ok(Pose2D::new(new_origin.x, new_origin.y, new_theta))
}

/// World position of a pushing point at the given pose.
pub fn contact_point_world(
    pose: &Pose2D,
    shape: &ShapeModel,
    point_id: usize,
) -> Result<Vector2<f64>> {
    Ok(pose.transform_point(&shape.point(point_id)?.p))
}

/// The simulation plant: owns the object pose and the disturbance stream.
///
/// One plant instance is single-threaded; concurrent rollouts use separate
/// instances with distinct seeds.
#[derive(Clone, Debug)]
pub struct Plant {
    shape: ShapeModel,
    model: MotionModel,
    noise: NoiseModel,
    rng: ChaCha8Rng,
    pose: Pose2D,
}

impl Plant {
    pub fn new(shape: ShapeModel, model: MotionModel, noise: NoiseModel) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(noise.seed);
        Self { shape, model, noise, rng, pose: Pose2D::new(0.0, 0.0, 0.0) }
    }

    pub fn shape(&self) -> &ShapeModel {
        &self.shape
    }

    pub fn model(&self) -> &MotionModel {
        &self.model
    }

    pub fn pose(&self) -> Pose2D {
        self.pose
    }

    pub fn set_pose(&mut self, pose: Pose2D) {
        self.pose = pose;
    }

    /// World position of the center of mass.
    pub fn com_world(&self) -> Vector2<f64> {
        self.pose.transform_point(&self.shape.com())
    }

    /// Apply one push (object-frame input `u`) at the given point; returns
    /// the new pose. Disturbances are drawn from the plant's own stream.
    pub fn step(&mut self, point_id: usize, u: Vector2<f64>) -> Result<Pose2D> {
        let (noise_pos, noise_rot) = if self.noise.is_zero() {
            (Vector2::zeros(), 0.0)
        } else {
            let np = Normal::new(0.0, self.noise.sigma_pos)
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            let nr = Normal::new(0.0, self.noise.sigma_rot)
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            (
                Vector2::new(np.sample(&mut self.rng), np.sample(&mut self.rng)),
                nr.sample(&mut self.rng),
            )
        };
        self.pose =
            apply_push_with(self.pose, &self.shape, point_id, u, &self.model, noise_pos, noise_rot)?;
        Ok(self.pose)
    }

    /// A copy of this plant with the disturbance stream removed, for
    /// model-based lookahead.
    pub fn noiseless_copy(&self) -> Self {
        let mut copy = self.clone();
        copy.noise = NoiseModel { sigma_pos: 0.0, sigma_rot: 0.0, seed: 0 };
        copy
    }
}
