//! Polygons in continuous `(i, j)` pixel coordinates and even-odd scanline fill.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Mask;

/// `(i, j)`: row, column.
pub type Point = (f64, f64);

/// Closed polygon; the last vertex connects back to the first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polygon {
    vertices: Vec<Point>,
}

impl Polygon {
    pub fn new(vertices: Vec<Point>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InsufficientBoundaryPoints(vertices.len()));
        }
        if vertices.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
            return Err(Error::NonFinite("polygon vertex"));
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |k| (self.vertices[k], self.vertices[(k + 1) % n]))
    }

    pub fn perimeter(&self) -> f64 {
        self.edges()
            .map(|(a, b)| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt())
            .sum()
    }

    /// Unsigned shoelace area.
    pub fn area(&self) -> f64 {
        let twice: f64 = self.edges().map(|(a, b)| a.1 * b.0 - b.1 * a.0).sum();
        twice.abs() / 2.0
    }

    /// Shortest distance from `p` to the polygon outline.
    pub fn distance_to_boundary(&self, p: Point) -> f64 {
        self.edges()
            .map(|(a, b)| segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }
}

fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (di, dj) = (b.0 - a.0, b.1 - a.1);
    let len2 = di * di + dj * dj;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * di + (p.1 - a.1) * dj) / len2).clamp(0.0, 1.0)
    };
    let (ci, cj) = (a.0 + t * di, a.1 + t * dj);
    ((p.0 - ci).powi(2) + (p.1 - cj).powi(2)).sqrt()
}

/// Column positions where the horizontal line at row coordinate `y` crosses
/// polygon edges. An edge counts when exactly one endpoint lies strictly
/// below `y`, the usual half-open rule that avoids double-counting vertices.
fn crossings(poly: &Polygon, y: f64, out: &mut Vec<f64>) {
    out.clear();
    for ((yi, xi), (yj, xj)) in poly.edges() {
        if (yi > y) != (yj > y) {
            out.push((xj - xi) * (y - yi) / (yj - yi) + xi);
        }
    }
    out.sort_by(f64::total_cmp);
}

/// Even-odd scanline fill: pixel `(i, j)` is set iff its center
/// `(i + 0.5, j + 0.5)` lies inside the polygon. Polygons of zero area
/// produce an empty mask.
pub fn rasterize(poly: &Polygon, height: usize, width: usize) -> Mask {
    let mut mask = Mask::new(height, width);
    let mut xs = Vec::new();
    for i in 0..height {
        crossings(poly, i as f64 + 0.5, &mut xs);
        // a center px is inside iff an odd number of crossings lie strictly right
        // of it, i.e. px ∈ [xs[2m], xs[2m+1])
        for pair in xs.chunks_exact(2) {
            let (lo, hi) = (pair[0], pair[1]);
            let mut j = first_center_at_or_after(lo);
            while j < width as i64 && (j as f64 + 0.5) < hi {
                if j >= 0 {
                    mask.set(i, j as usize, true);
                }
                j += 1;
            }
        }
    }
    mask
}

/// Smallest integer `j` with `j + 0.5 >= x`, evaluated with the same
/// floating-point predicate the fill loop uses.
fn first_center_at_or_after(x: f64) -> i64 {
    let mut j = (x - 0.5).ceil().clamp(-1e15, 1e15) as i64;
    while (j as f64 - 0.5) >= x {
        j -= 1;
    }
    while (j as f64 + 0.5) < x {
        j += 1;
    }
    j
}

/// Single-point even-odd test consistent with [`rasterize`].
pub fn contains(poly: &Polygon, p: Point) -> bool {
    let (py, px) = p;
    let mut inside = false;
    for ((yi, xi), (yj, xj)) in poly.edges() {
        if (yi > py) != (yj > py) && px < (xj - xi) * (py - yi) / (yj - yi) + xi {
            inside = !inside;
        }
    }
    inside
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_fills_sixteen_pixels() {
        let sq = Polygon::new(vec![(2.0, 2.0), (2.0, 6.0), (6.0, 6.0), (6.0, 2.0)]).unwrap();
        let m = rasterize(&sq, 10, 10);
        assert_eq!(m.area(), 16);
        assert!(m.get(2, 2) && m.get(5, 5) && !m.get(6, 6) && !m.get(1, 2));
        assert_eq!(sq.area(), 16.0);
        assert_eq!(sq.perimeter(), 16.0);
    }

    #[test]
    fn triangle_outside_image_is_empty() {
        let t = Polygon::new(vec![(-10.0, -10.0), (-10.0, -2.0), (-2.0, -6.0)]).unwrap();
        assert_eq!(rasterize(&t, 8, 8).area(), 0);
        let far = Polygon::new(vec![(20.0, 20.0), (20.0, 30.0), (30.0, 25.0)]).unwrap();
        assert_eq!(rasterize(&far, 8, 8).area(), 0);
    }

    #[test]
    fn zero_area_polygon_is_empty() {
        let line = Polygon::new(vec![(1.0, 1.0), (5.0, 5.0), (3.0, 3.0)]).unwrap();
        assert_eq!(rasterize(&line, 8, 8).area(), 0);
    }

    #[test]
    fn fewer_than_three_vertices_rejected() {
        assert!(matches!(
            Polygon::new(vec![(0.0, 0.0), (1.0, 1.0)]),
            Err(Error::InsufficientBoundaryPoints(2))
        ));
    }

    #[test]
    fn boundary_distance() {
        let sq = Polygon::new(vec![(0.0, 0.0), (0.0, 4.0), (4.0, 4.0), (4.0, 0.0)]).unwrap();
        assert_eq!(sq.distance_to_boundary((2.0, 2.0)), 2.0);
        assert_eq!(sq.distance_to_boundary((7.0, 4.0)), 3.0);
    }
}
