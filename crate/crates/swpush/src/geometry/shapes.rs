//! Object shape catalog: contour polygons, center of mass, and the named
//! pushing-point sets with their contact frames.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use super::polygon::{point_segment_distance, Polygon};
use crate::{Error, Result};

/// Maximum distance of a pushing point from the contour boundary.
pub const POINT_ON_BOUNDARY_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ShapeName {
    T,
    L,
    Triangle,
    Trapezoid,
}

impl ShapeName {
    pub const ALL: [ShapeName; 4] =
        [ShapeName::T, ShapeName::L, ShapeName::Triangle, ShapeName::Trapezoid];
}

impl fmt::Display for ShapeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ShapeName::T => "T",
            ShapeName::L => "L",
            ShapeName::Triangle => "triangle",
            ShapeName::Trapezoid => "trapezoid",
        };
        f.write_str(s)
    }
}

impl FromStr for ShapeName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "t" => Ok(ShapeName::T),
            "l" => Ok(ShapeName::L),
            "triangle" => Ok(ShapeName::Triangle),
            "trapezoid" => Ok(ShapeName::Trapezoid),
            other => Err(Error::InvalidArgument(format!(
                "unknown shape {other:?} (expected T, L, triangle, or trapezoid)"
            ))),
        }
    }
}

/// A candidate contact point on the object boundary with its contact frame.
///
/// `e_n` is the inward unit normal of the contour at the point; `e_t` is the
/// unit tangent. Pushes are expressed in this frame by the controller's
/// sticking-contact constraint.
#[derive(Clone, Copy, Debug)]
pub struct PushingPoint {
    /// 1-based point id as listed in the shape definition.
    pub id: usize,
    /// Position in {B}, meters.
    pub p: Vector2<f64>,
    /// Inward unit contact normal in {B}.
    pub e_n: Vector2<f64>,
    /// Unit contact tangent in {B}.
    pub e_t: Vector2<f64>,
}

/// An object: contour polygon, center of mass, and pushing points, all in
/// the body frame {B}.
#[derive(Clone, Debug)]
pub struct ShapeModel {
    pub name: ShapeName,
    contour: Polygon,
    com: Vector2<f64>,
    points: Vec<PushingPoint>,
}

impl ShapeModel {
    /// Validate a shape definition and precompute the contact frames.
    ///
    /// Requirements: simple contour, center of mass strictly interior, and
    /// every pushing point on the contour boundary within
    /// [`POINT_ON_BOUNDARY_TOL`].
    pub fn new(
        name: ShapeName,
        contour: Vec<Vector2<f64>>,
        com: Vector2<f64>,
        raw_points: Vec<(usize, Vector2<f64>)>,
    ) -> Result<Self> {
        let contour = Polygon::new(contour).map_err(Error::InvalidShape)?;
        if !contour.contains_strict(&com, 1e-9) {
            return Err(Error::InvalidShape(format!(
                "center of mass {com:?} is not strictly inside the contour"
            )));
        }
        let mut points = Vec::with_capacity(raw_points.len());
        for (id, p) in raw_points {
            let (e_n, e_t) = contact_frame(&contour, &com, &p).ok_or_else(|| {
                Error::InvalidShape(format!(
                    "point #{id} at {p:?} is not on the contour boundary"
                ))
            })?;
            points.push(PushingPoint { id, p, e_n, e_t });
        }
        Ok(Self { name, contour, com, points })
    }

    /// The four built-in shapes by name.
    pub fn builtin(name: ShapeName) -> Self {
        builtin_shapes()
            .into_iter()
            .find(|s| s.name == name)
            .expect("builtin catalog covers every ShapeName")
    }

    pub fn contour(&self) -> &Polygon {
        &self.contour
    }

    pub fn com(&self) -> Vector2<f64> {
        self.com
    }

    pub fn points(&self) -> &[PushingPoint] {
        &self.points
    }

    /// Look up a pushing point by its 1-based id.
    pub fn point(&self, id: usize) -> Result<&PushingPoint> {
        self.points
            .iter()
            .find(|pt| pt.id == id)
            .ok_or(Error::InvalidPointId { id, count: self.points.len() })
    }

    /// Lever arm of a point about the center of mass, in {B}.
    pub fn lever(&self, id: usize) -> Result<Vector2<f64>> {
        Ok(self.point(id)?.p - self.com)
    }

    /// Parse a shape definition from its TOML text form.
    ///
    /// Keys: `name`, `contour` (vertex list), `com`, and a `points` array of
    /// `{ id, p }` tables. Contact frames are computed, never stored.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawShape = toml::from_str(text)
            .map_err(|e| Error::InvalidShape(format!("shape file parse error: {e}")))?;
        let name = raw.name.parse()?;
        let contour = raw.contour.iter().map(|v| Vector2::new(v[0], v[1])).collect();
        let points = raw
            .points
            .into_iter()
            .map(|p| (p.id, Vector2::new(p.p[0], p.p[1])))
            .collect();
        Self::new(name, contour, Vector2::new(raw.com[0], raw.com[1]), points)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }
}

#[derive(Deserialize)]
struct RawShape {
    name: String,
    com: [f64; 2],
    contour: Vec<[f64; 2]>,
    points: Vec<RawPoint>,
}

#[derive(Deserialize)]
struct RawPoint {
    id: usize,
    p: [f64; 2],
}

/// Contact frame at a boundary point: the inward normal and tangent of the
/// contour edge containing it. At a vertex (several edges within tolerance)
/// the edge whose inward normal points most directly toward the center of
/// mass is used.
fn contact_frame(
    contour: &Polygon,
    com: &Vector2<f64>,
    p: &Vector2<f64>,
) -> Option<(Vector2<f64>, Vector2<f64>)> {
    let mut candidates: Vec<(f64, Vector2<f64>, Vector2<f64>)> = Vec::new();
    let mut min_dist = f64::INFINITY;
    for i in 0..contour.edge_count() {
        let (a, b) = contour.edge(i);
        let d = point_segment_distance(p, &a, &b);
        min_dist = min_dist.min(d);
        if d <= POINT_ON_BOUNDARY_TOL {
            let e_t = (b - a).normalize();
            // Counter-clockwise contour: the inward normal is the tangent
            // rotated +90 degrees.
            let e_n = Vector2::new(-e_t.y, e_t.x);
            candidates.push((d, e_n, e_t));
        }
    }
    if candidates.is_empty() {
        return None;
    }
    let toward_com = (com - p).normalize();
    candidates
        .into_iter()
        .max_by(|a, b| {
            let sa = a.1.dot(&toward_com);
            let sb = b.1.dot(&toward_com);
            sa.partial_cmp(&sb).unwrap()
        })
        .map(|(_, e_n, e_t)| (e_n, e_t))
}

/// Intersection of line(a1, a2) with line(b1, b2).
fn line_intersect(
    a1: Vector2<f64>,
    a2: Vector2<f64>,
    b1: Vector2<f64>,
    b2: Vector2<f64>,
) -> Vector2<f64> {
    let d1 = a2 - a1;
    let d2 = b2 - b1;
    let denom = d1.x * d2.y - d1.y * d2.x;
    debug_assert!(denom.abs() > 1e-12, "parallel lines");
    let t = ((b1.x - a1.x) * d2.y - (b1.y - a1.y) * d2.x) / denom;
    a1 + t * d1
}

/// The four built-in shapes.
///
/// Pushing-point coordinates and centers of mass are the canonical values;
/// the contour polygons are reconstructions chosen so that every point lies
/// exactly on an edge and the center of mass is interior.
pub fn builtin_shapes() -> Vec<ShapeModel> {
    vec![t_shape(), l_shape(), triangle_shape(), trapezoid_shape()]
}

fn v(x: f64, y: f64) -> Vector2<f64> {
    Vector2::new(x, y)
}

fn t_shape() -> ShapeModel {
    // Wide base bar with a narrow stem pointing up; #3/#5/#6 sit on the
    // base's bottom edge, #2/#4 on its sides, #1 on top of the stem.
    let contour = vec![
        v(-0.066, -0.078),
        v(0.064, -0.078),
        v(0.064, -0.020),
        v(0.020, -0.020),
        v(0.020, 0.053),
        v(-0.020, 0.053),
        v(-0.020, -0.020),
        v(-0.066, -0.020),
    ];
    let points = vec![
        (1, v(0.002, 0.053)),
        (2, v(-0.066, -0.039)),
        (3, v(0.0, -0.078)),
        (4, v(0.064, -0.037)),
        (5, v(-0.035, -0.078)),
        (6, v(0.031, -0.078)),
    ];
    ShapeModel::new(ShapeName::T, contour, v(0.0, -0.029), points)
        .expect("builtin T shape is valid")
}

fn l_shape() -> ShapeModel {
    // Long foot along x with a low heel block on the left end.
    let contour = vec![
        v(-0.027, -0.064),
        v(0.104, -0.064),
        v(0.104, -0.010),
        v(0.033, -0.010),
        v(0.033, -0.002),
        v(-0.027, -0.002),
    ];
    let points = vec![
        (1, v(0.027, -0.002)),
        (2, v(-0.027, -0.020)),
        (3, v(0.027, -0.064)),
        (4, v(0.104, -0.025)),
        (5, v(0.092, -0.010)),
        (6, v(0.088, -0.064)),
    ];
    ShapeModel::new(ShapeName::L, contour, v(0.025, -0.025), points)
        .expect("builtin L shape is valid")
}

fn triangle_shape() -> ShapeModel {
    let p1 = v(-0.020, 0.082);
    let p2 = v(-0.039, 0.006);
    let p3 = v(0.0, -0.039);
    let p4 = v(0.051, 0.002);
    let p5 = v(0.052, -0.002);
    let p6 = v(0.006, 0.064);
    // Vertices are the pairwise intersections of the three edge lines, each
    // line fitted through two of the points, so all six lie on the boundary
    // by construction: left edge through #2/#1, bottom through #3/#5, right
    // through #4/#6.
    let apex = line_intersect(p2, p1, p4, p6);
    let bottom_left = line_intersect(p2, p1, p3, p5);
    let bottom_right = line_intersect(p3, p5, p4, p6);
    let contour = vec![apex, bottom_left, bottom_right];
    let points = vec![(1, p1), (2, p2), (3, p3), (4, p4), (5, p5), (6, p6)];
    ShapeModel::new(ShapeName::Triangle, contour, v(0.0, 0.006), points)
        .expect("builtin triangle shape is valid")
}

fn trapezoid_shape() -> ShapeModel {
    // Horizontal top and bottom, vertical right side through #4/#6, slanted
    // left side through #2 with slope dx/dy = 0.225.
    let slope = 0.225;
    let top_left = v(-0.032 + 0.053 * slope, 0.053);
    let bottom_left = v(-0.032 - 0.051 * slope, -0.051);
    let contour = vec![bottom_left, v(0.063, -0.051), v(0.063, 0.053), top_left];
    let points = vec![
        (1, v(0.010, 0.053)),
        (2, v(-0.032, 0.0)),
        (3, v(0.012, -0.051)),
        (4, v(0.063, -0.004)),
        (5, v(-0.012, -0.051)),
        (6, v(0.063, 0.018)),
    ];
    ShapeModel::new(ShapeName::Trapezoid, contour, v(0.011, -0.004), points)
        .expect("builtin trapezoid shape is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn builtin_catalog_spot_values() {
        let t = ShapeModel::builtin(ShapeName::T);
        assert_relative_eq!(t.com().x, 0.0);
        assert_relative_eq!(t.com().y, -0.029);
        let p3 = t.point(3).unwrap();
        assert_relative_eq!(p3.p.x, 0.0);
        assert_relative_eq!(p3.p.y, -0.078);

        let l = ShapeModel::builtin(ShapeName::L);
        let p4 = l.point(4).unwrap();
        assert_relative_eq!(p4.p.x, 0.104);
        assert_relative_eq!(p4.p.y, -0.025);

        let z = ShapeModel::builtin(ShapeName::Trapezoid);
        assert_relative_eq!(z.com().x, 0.011);
        assert_relative_eq!(z.com().y, -0.004);
    }

    #[test]
    fn builtin_shapes_satisfy_invariants() {
        for shape in builtin_shapes() {
            assert_eq!(shape.points().len(), 6, "{}", shape.name);
            assert!(shape.contour().contains_strict(&shape.com(), 1e-9), "{}", shape.name);
            for pt in shape.points() {
                let d = shape.contour().distance_to_boundary(&pt.p);
                assert!(
                    d <= POINT_ON_BOUNDARY_TOL,
                    "{} point #{} off boundary by {d:e}",
                    shape.name,
                    pt.id
                );
                // Orthonormal contact frame.
                assert_relative_eq!(pt.e_n.norm(), 1.0, epsilon = 1e-12);
                assert_relative_eq!(pt.e_t.norm(), 1.0, epsilon = 1e-12);
                assert!(pt.e_n.dot(&pt.e_t).abs() < 1e-12);
                // Inward normal: a small step along e_n lands inside.
                let probe = pt.p + 1e-4 * pt.e_n;
                assert!(
                    shape.contour().contains(&probe),
                    "{} point #{} normal is not inward",
                    shape.name,
                    pt.id
                );
            }
        }
    }

    #[test]
    fn com_inside_rejected_when_outside() {
        let contour = vec![v(0.0, 0.0), v(1.0, 0.0), v(1.0, 1.0), v(0.0, 1.0)];
        let r = ShapeModel::new(ShapeName::T, contour, v(2.0, 2.0), vec![(1, v(0.5, 0.0))]);
        assert!(r.is_err());
    }

    #[test]
    fn off_boundary_point_rejected() {
        let contour = vec![v(0.0, 0.0), v(1.0, 0.0), v(1.0, 1.0), v(0.0, 1.0)];
        let r = ShapeModel::new(
            ShapeName::T,
            contour,
            v(0.5, 0.5),
            vec![(1, v(0.5, 0.01))],
        );
        assert!(r.is_err());
    }

    #[test]
    fn toml_roundtrip_matches_builtin_frames() {
        let text = r#"
            name = "T"
            com = [0.0, -0.029]
            contour = [
                [-0.066, -0.078], [0.064, -0.078], [0.064, -0.020], [0.020, -0.020],
                [0.020, 0.053], [-0.020, 0.053], [-0.020, -0.020], [-0.066, -0.020],
            ]
            [[points]]
            id = 3
            p = [0.0, -0.078]
        "#;
        let shape = ShapeModel::from_toml_str(text).unwrap();
        let builtin = ShapeModel::builtin(ShapeName::T);
        let a = shape.point(3).unwrap();
        let b = builtin.point(3).unwrap();
        assert_relative_eq!(a.e_n.x, b.e_n.x);
        assert_relative_eq!(a.e_n.y, b.e_n.y);
        assert!(ShapeModel::from_toml_str("name = \"bogus\"").is_err());
    }

    #[test]
    fn shape_name_parsing() {
        assert_eq!("T".parse::<ShapeName>().unwrap(), ShapeName::T);
        assert_eq!("triangle".parse::<ShapeName>().unwrap(), ShapeName::Triangle);
        assert!("hexagon".parse::<ShapeName>().is_err());
    }
}
