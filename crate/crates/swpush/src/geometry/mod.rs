//! Planar geometry: poses, angle wrapping, object shapes with pushing
//! points, motion constraint regions, and workspace bounds.

use nalgebra::{Rotation2, Vector2};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::{Error, Result};

mod polygon;
mod shapes;

pub use polygon::Polygon;
pub use shapes::{builtin_shapes, PushingPoint, ShapeModel, ShapeName};

/// Wrap an angle into `(-pi, pi]`.
///
/// `-pi` maps to `+pi` (half-open interval convention).
pub fn wrap_angle(a: f64) -> Result<f64> {
    if !a.is_finite() {
        return Err(Error::InvalidArgument(format!("non-finite angle {a}")));
    }
    Ok(wrap_finite(a))
}

/// Angle wrap for values already known to be finite.
#[inline]
pub(crate) fn wrap_finite(a: f64) -> f64 {
    // rem_euclid keeps the result in [0, 2pi); the outer subtraction maps
    // that to (-pi, pi] with -pi landing on +pi.
    PI - (PI - a).rem_euclid(2.0 * PI)
}

/// Planar pose of the object frame {B} in the world frame {W}.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    /// X position in meters.
    pub x: f64,
    /// Y position in meters.
    pub y: f64,
    /// Rotation of {B} about the world z-axis, radians, always in `(-pi, pi]`.
    pub theta: f64,
}

impl Pose2D {
    /// Create a pose, normalizing `theta` into `(-pi, pi]`.
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        debug_assert!(x.is_finite() && y.is_finite() && theta.is_finite());
        Self { x, y, theta: wrap_finite(theta) }
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    pub fn rotation(&self) -> Rotation2<f64> {
        Rotation2::new(self.theta)
    }

    /// Map a point given in {B} into {W}.
    pub fn transform_point(&self, p: &Vector2<f64>) -> Vector2<f64> {
        self.position() + self.rotation() * p
    }
}

/// Axis-aligned rectangular workspace centered at the world origin.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Workspace {
    pub half_width: f64,
    pub half_height: f64,
}

impl Workspace {
    pub fn new(half_width: f64, half_height: f64) -> Self {
        debug_assert!(half_width > 0.0 && half_height > 0.0);
        Self { half_width, half_height }
    }

    /// Boundary-inclusive point containment.
    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        p.x.abs() <= self.half_width && p.y.abs() <= self.half_height
    }

    /// Containment of a pose, tested on the {B}-origin only (the object
    /// contour is allowed to overhang the boundary).
    pub fn contains_pose(&self, pose: &Pose2D) -> bool {
        self.contains(&pose.position())
    }

    /// Diagonal length of the full rectangle.
    pub fn diagonal(&self) -> f64 {
        2.0 * (self.half_width.hypot(self.half_height))
    }
}

impl Default for Workspace {
    /// The 0.5 x 0.5 m workspace.
    fn default() -> Self {
        Self::new(0.25, 0.25)
    }
}

/// Supporting halfplane `{ q : normal . q <= offset }`.
#[derive(Clone, Copy, Debug)]
pub struct Halfspace {
    pub normal: Vector2<f64>,
    pub offset: f64,
}

impl Halfspace {
    /// Signed violation of `p` (positive outside the halfplane).
    pub fn violation(&self, p: &Vector2<f64>) -> f64 {
        self.normal.dot(p) - self.offset
    }
}

/// Motion constraint region for one pushing round.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Mcr {
    Ellipse {
        center: Vector2<f64>,
        semi_major: f64,
        semi_minor: f64,
        /// Direction of the major axis, radians.
        orientation: f64,
    },
    Circle {
        center: Vector2<f64>,
        radius: f64,
    },
}

/// Slack on the canonical quadratic form when testing containment.
const MCR_CONTAINS_TOL: f64 = 1e-9;

/// Build the motion constraint region for a round that starts at `current`
/// and aims for `target`.
///
/// Far from the target (`dist >= r_min`) the region is an ellipse whose
/// major axis is the current-to-target segment, with minor axis `k` times
/// the major axis; both endpoints lie on the boundary. Near the target the
/// region is a circle of radius `r_min` centered at the target.
pub fn build_mcr(current: Vector2<f64>, target: Vector2<f64>, r_min: f64, k: f64) -> Mcr {
    debug_assert!(r_min > 0.0 && k > 0.0 && k < 1.0);
    let diff = target - current;
    let dist = diff.norm();
    if dist >= r_min {
        Mcr::Ellipse {
            center: 0.5 * (current + target),
            semi_major: 0.5 * dist,
            semi_minor: 0.5 * k * dist,
            orientation: diff.y.atan2(diff.x),
        }
    } else {
        Mcr::Circle { center: target, radius: r_min }
    }
}

impl Mcr {
    pub fn center(&self) -> Vector2<f64> {
        match self {
            Mcr::Ellipse { center, .. } | Mcr::Circle { center, .. } => *center,
        }
    }

    /// Map a world point into the region's local frame (center at origin,
    /// major axis along +x).
    fn to_local(&self, p: &Vector2<f64>) -> Vector2<f64> {
        match self {
            Mcr::Circle { center, .. } => p - center,
            Mcr::Ellipse { center, orientation, .. } => {
                Rotation2::new(-orientation) * (p - center)
            }
        }
    }

    fn from_local(&self, q: &Vector2<f64>) -> Vector2<f64> {
        match self {
            Mcr::Circle { center, .. } => center + q,
            Mcr::Ellipse { center, orientation, .. } => {
                center + Rotation2::new(*orientation) * q
            }
        }
    }

    /// Canonical quadratic form value: `<= 1` on and inside the boundary.
    pub fn canonical_value(&self, p: &Vector2<f64>) -> f64 {
        let q = self.to_local(p);
        match self {
            Mcr::Circle { radius, .. } => (q.norm() / radius).powi(2),
            Mcr::Ellipse { semi_major, semi_minor, .. } => {
                (q.x / semi_major).powi(2) + (q.y / semi_minor).powi(2)
            }
        }
    }

    /// True iff `p` is inside or on the region boundary.
    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        self.canonical_value(p) <= 1.0 + MCR_CONTAINS_TOL
    }

    /// Boundary point nearest to `p`, in world coordinates.
    pub fn nearest_boundary_point(&self, p: &Vector2<f64>) -> Vector2<f64> {
        let q = self.to_local(p);
        let local = match self {
            Mcr::Circle { radius, .. } => {
                let n = q.norm();
                if n < 1e-12 {
                    // Degenerate center query; tie broken toward +x.
                    Vector2::new(*radius, 0.0)
                } else {
                    q * (radius / n)
                }
            }
            Mcr::Ellipse { semi_major, semi_minor, .. } => {
                nearest_on_ellipse(*semi_major, *semi_minor, q)
            }
        };
        self.from_local(&local)
    }

    /// Euclidean distance of `p` to the region boundary, signed positive
    /// outside the region and negative inside.
    pub fn boundary_signed_distance(&self, p: &Vector2<f64>) -> f64 {
        let d = (p - self.nearest_boundary_point(p)).norm();
        if self.canonical_value(p) <= 1.0 {
            -d
        } else {
            d
        }
    }

    /// Supporting halfplane at the boundary point nearest to `p`.
    ///
    /// The region is contained in the returned halfplane, so the halfplane
    /// is a sound outer linearization of the convex constraint.
    pub fn halfspace(&self, p: &Vector2<f64>) -> Halfspace {
        let b = self.nearest_boundary_point(p);
        let q = self.to_local(&b);
        let local_normal = match self {
            Mcr::Circle { radius, .. } => q / *radius,
            Mcr::Ellipse { semi_major, semi_minor, .. } => {
                let g = Vector2::new(q.x / semi_major.powi(2), q.y / semi_minor.powi(2));
                g / g.norm()
            }
        };
        let normal = match self {
            Mcr::Circle { .. } => local_normal,
            Mcr::Ellipse { orientation, .. } => Rotation2::new(*orientation) * local_normal,
        };
        Halfspace { normal, offset: normal.dot(&b) }
    }
}

/// Nearest point on the ellipse `x^2/a^2 + y^2/b^2 = 1` (a >= b) to the
/// query `q`, all in the ellipse's local frame.
///
/// Reduces to the first quadrant, solves the radial root equation by
/// bisection, and restores signs. On-axis queries use the closed forms;
/// the exact center maps to the minor-axis endpoint `(0, b)`.
fn nearest_on_ellipse(a: f64, b: f64, q: Vector2<f64>) -> Vector2<f64> {
    debug_assert!(a >= b && b > 0.0);
    let (sx, sy) = (if q.x < 0.0 { -1.0 } else { 1.0 }, if q.y < 0.0 { -1.0 } else { 1.0 });
    let (px, py) = (q.x.abs(), q.y.abs());
    const EPS: f64 = 1e-14;

    let nearest = if py <= EPS * b {
        // Query on (or nearly on) the major axis. Inside the evolute the
        // nearest point leaves the axis.
        let threshold = (a * a - b * b) / a;
        if px < threshold {
            let x = a * a * px / (a * a - b * b);
            let y = b * (1.0 - (x / a).powi(2)).max(0.0).sqrt();
            Vector2::new(x, y)
        } else {
            Vector2::new(a, 0.0)
        }
    } else if px <= EPS * a {
        // Minor axis (including the exact center).
        Vector2::new(0.0, b)
    } else {
        // General case: root of
        //   F(t) = (a px / (t + a^2))^2 + (b py / (t + b^2))^2 - 1
        // on t in (-b^2, inf), where F is strictly decreasing.
        let mut lo = -b * b + b * py; // F(lo) >= 0
        let mut hi = -b * b + (a * px).hypot(b * py); // F(hi) <= 0
        let f = |t: f64| {
            let u = a * px / (t + a * a);
            let v = b * py / (t + b * b);
            u * u + v * v - 1.0
        };
        for _ in 0..120 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t = 0.5 * (lo + hi);
        Vector2::new(a * a * px / (t + a * a), b * b * py / (t + b * b))
    };
    Vector2::new(sx * nearest.x, sy * nearest.y)
}
