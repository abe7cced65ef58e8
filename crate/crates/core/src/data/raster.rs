use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::scene::{point_in_polygon, polygon_signed_area};

pub const DEFAULT_RESOLUTION: usize = 64;

/// Square occupancy grid; row index runs along z, column index along x.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutMask {
    pub resolution: usize,
    pub cells: Vec<u8>,
}

impl LayoutMask {
    pub fn new(resolution: usize, cells: Vec<u8>) -> Result<Self> {
        if cells.len() != resolution * resolution {
            return Err(Error::ShapeMismatch {
                op: "layout mask",
                lhs: vec![resolution, resolution],
                rhs: vec![cells.len()],
            });
        }
        if cells.iter().any(|&c| c > 1) {
            return Err(Error::Incompatible("layout mask cells must be 0 or 1".into()));
        }
        Ok(Self { resolution, cells })
    }

    pub fn filled(resolution: usize, value: u8) -> Self {
        Self {
            resolution,
            cells: vec![value.min(1); resolution * resolution],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.cells[row * self.resolution + col]
    }

    pub fn fill_fraction(&self) -> f64 {
        self.cells.iter().map(|&c| c as f64).sum::<f64>() / self.cells.len().max(1) as f64
    }

    /// Quarter turn matching a +90° yaw of the underlying polygon.
    pub fn rotated_quarter(&self) -> Self {
        let n = self.resolution;
        let mut cells = vec![0; n * n];
        for r in 0..n {
            for c in 0..n {
                // (x, z) -> (z, -x) in cell coordinates
                cells[(n - 1 - c) * n + r] = self.get(r, c);
            }
        }
        Self { resolution: n, cells }
    }
}

fn segments_cross<T: Scalar>(a: [T; 2], b: [T; 2], c: [T; 2], d: [T; 2]) -> bool {
    let orient = |p: [T; 2], q: [T; 2], r: [T; 2]| (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]);
    let (o1, o2) = (orient(a, b, c), orient(a, b, d));
    let (o3, o4) = (orient(c, d, a), orient(c, d, b));
    o1 * o2 < T::zero() && o3 * o4 < T::zero()
}

/// Rejects polygons with fewer than 3 vertices, zero area, non-finite
/// coordinates, or crossing edges.
pub fn validate_polygon<T: Scalar>(polygon: &[[T; 2]]) -> Result<()> {
    let n = polygon.len();
    if n < 3 {
        return Err(Error::DegeneratePolygon(format!("{n} vertices, need at least 3")));
    }
    if polygon.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::DegeneratePolygon("non-finite vertex".into()));
    }
    if polygon_signed_area(polygon).abs() < T::lit(1e-12) {
        return Err(Error::DegeneratePolygon("zero area".into()));
    }
    for i in 0..n {
        for j in i + 1..n {
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            let (a, b) = (polygon[i], polygon[(i + 1) % n]);
            let (c, d) = (polygon[j], polygon[(j + 1) % n]);
            if segments_cross(a, b, c, d) {
                return Err(Error::DegeneratePolygon(format!("edges {i} and {j} intersect")));
            }
        }
    }
    Ok(())
}

/// Marks every cell whose center lies inside `polygon`. The grid spans
/// `resolution * meters_per_cell` meters on each side and is centered on
/// `center`.
pub fn rasterize_floor<T: Scalar>(
    polygon: &[[T; 2]],
    resolution: usize,
    meters_per_cell: T,
    center: [T; 2],
) -> Result<LayoutMask> {
    validate_polygon(polygon)?;
    if !(meters_per_cell > T::zero()) || resolution == 0 {
        return Err(Error::Config("raster needs a positive cell size and resolution".into()));
    }
    let half = T::lit(resolution as f64 / 2.0);
    let mut cells = vec![0u8; resolution * resolution];
    for r in 0..resolution {
        let z = center[1] + (T::lit(r as f64 + 0.5) - half) * meters_per_cell;
        for c in 0..resolution {
            let x = center[0] + (T::lit(c as f64 + 0.5) - half) * meters_per_cell;
            cells[r * resolution + c] = point_in_polygon([x, z], polygon) as u8;
        }
    }
    Ok(LayoutMask { resolution, cells })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_frame_square() {
        let sq: Vec<[f64; 2]> = vec![[-3.2, -3.2], [3.2, -3.2], [3.2, 3.2], [-3.2, 3.2]];
        let m = rasterize_floor(&sq, 64, 0.1, [0.0, 0.0]).unwrap();
        assert!(m.fill_fraction() > 0.9);
    }

    #[test]
    fn quarter_turn_commutes() {
        let poly: Vec<[f64; 2]> = vec![[-2.0, -1.0], [2.5, -1.0], [2.5, 0.5], [0.0, 0.5], [0.0, 2.0], [-2.0, 2.0]];
        let turned: Vec<[f64; 2]> = poly
            .iter()
            .map(|p| {
                let (x, z) = crate::geometry::rotate_xz(p[0], p[1], std::f64::consts::FRAC_PI_2);
                [x, z]
            })
            .collect();
        let a = rasterize_floor(&poly, 64, 0.1, [0.0, 0.0]).unwrap();
        let b = rasterize_floor(&turned, 64, 0.1, [0.0, 0.0]).unwrap();
        assert_eq!(a.rotated_quarter(), b);
    }

    #[test]
    fn rejects_bad_polygons() {
        let two: Vec<[f64; 2]> = vec![[0.0, 0.0], [1.0, 0.0]];
        assert!(rasterize_floor(&two, 64, 0.1, [0.0, 0.0]).is_err());
        let bowtie: Vec<[f64; 2]> = vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(validate_polygon(&bowtie).is_err());
    }
}
