//! Simple-polygon helpers used by the shape catalog.

use nalgebra::Vector2;

/// A simple closed polygon with counter-clockwise vertex order.
#[derive(Clone, Debug)]
pub struct Polygon {
    vertices: Vec<Vector2<f64>>,
}

impl Polygon {
    /// Build from a vertex list. Reverses the order if it is clockwise and
    /// rejects self-intersecting or degenerate input.
    pub fn new(mut vertices: Vec<Vector2<f64>>) -> Result<Self, String> {
        if vertices.len() < 3 {
            return Err(format!("polygon needs >= 3 vertices, got {}", vertices.len()));
        }
        if vertices.iter().any(|v| !v.x.is_finite() || !v.y.is_finite()) {
            return Err("polygon has non-finite vertex".into());
        }
        let area = signed_area(&vertices);
        if area.abs() < 1e-12 {
            return Err("polygon is degenerate (zero area)".into());
        }
        if area < 0.0 {
            vertices.reverse();
        }
        let poly = Self { vertices };
        if !poly.is_simple() {
            return Err("polygon is self-intersecting".into());
        }
        Ok(poly)
    }

    pub fn vertices(&self) -> &[Vector2<f64>] {
        &self.vertices
    }

    pub fn edge_count(&self) -> usize {
        self.vertices.len()
    }

    /// Edge `i` as its endpoint pair (vertex i, vertex i+1).
    pub fn edge(&self, i: usize) -> (Vector2<f64>, Vector2<f64>) {
        let n = self.vertices.len();
        (self.vertices[i % n], self.vertices[(i + 1) % n])
    }

    fn is_simple(&self) -> bool {
        let n = self.vertices.len();
        for i in 0..n {
            let (a1, a2) = self.edge(i);
            if (a2 - a1).norm() < 1e-12 {
                return false; // repeated vertex
            }
            for j in i + 1..n {
                // Adjacent edges share exactly one endpoint.
                if j == i || (j + 1) % n == i || (i + 1) % n == j {
                    continue;
                }
                let (b1, b2) = self.edge(j);
                if segments_intersect(a1, a2, b1, b2) {
                    return false;
                }
            }
        }
        true
    }

    /// Strict interior test: inside by winding and not within `margin` of
    /// the boundary.
    pub fn contains_strict(&self, p: &Vector2<f64>, margin: f64) -> bool {
        self.contains(p) && self.distance_to_boundary(p) > margin
    }

    /// Even-odd containment (points on the boundary may report either way;
    /// use [`Self::distance_to_boundary`] for boundary queries).
    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        let n = self.vertices.len();
        let mut inside = false;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            if (a.y > p.y) != (b.y > p.y) {
                let x_cross = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if p.x < x_cross {
                    inside = !inside;
                }
            }
        }
        inside
    }

    pub fn distance_to_boundary(&self, p: &Vector2<f64>) -> f64 {
        (0..self.edge_count())
            .map(|i| {
                let (a, b) = self.edge(i);
                point_segment_distance(p, &a, &b)
            })
            .fold(f64::INFINITY, f64::min)
    }
}

pub(crate) fn signed_area(vertices: &[Vector2<f64>]) -> f64 {
    let n = vertices.len();
    let mut acc = 0.0;
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        acc += a.x * b.y - b.x * a.y;
    }
    0.5 * acc
}

pub(crate) fn point_segment_distance(
    p: &Vector2<f64>,
    a: &Vector2<f64>,
    b: &Vector2<f64>,
) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 < 1e-24 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + t * ab)).norm()
}

fn segments_intersect(
    a1: Vector2<f64>,
    a2: Vector2<f64>,
    b1: Vector2<f64>,
    b2: Vector2<f64>,
) -> bool {
    let cross = |u: Vector2<f64>, v: Vector2<f64>| u.x * v.y - u.y * v.x;
    let d1 = cross(a2 - a1, b1 - a1);
    let d2 = cross(a2 - a1, b2 - a1);
    let d3 = cross(b2 - b1, a1 - b1);
    let d4 = cross(b2 - b1, a2 - b1);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on_segment = |a: Vector2<f64>, b: Vector2<f64>, q: Vector2<f64>| {
        q.x >= a.x.min(b.x) - 1e-12
            && q.x <= a.x.max(b.x) + 1e-12
            && q.y >= a.y.min(b.y) - 1e-12
            && q.y <= a.y.max(b.y) + 1e-12
    };
    (d1.abs() < 1e-15 && on_segment(a1, a2, b1))
        || (d2.abs() < 1e-15 && on_segment(a1, a2, b2))
        || (d3.abs() < 1e-15 && on_segment(b1, b2, a1))
        || (d4.abs() < 1e-15 && on_segment(b1, b2, a2))
}
