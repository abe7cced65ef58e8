use serde::{Deserialize, Serialize};

use crate::geometry::{project_topdown, rotate_xz, Box2D, SceneObject};
use crate::scalar::{wrap_angle, Scalar};

/// A room: floor polygon on the x-z plane plus an unordered set of objects.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene<T> {
    pub scene_id: String,
    pub room_type: String,
    /// Counter-clockwise vertices in meters.
    pub floor: Vec<[T; 2]>,
    pub objects: Vec<SceneObject<T>>,
}

impl<T: Scalar> Scene<T> {
    pub fn new(
        scene_id: impl Into<String>,
        room_type: impl Into<String>,
        floor: Vec<[T; 2]>,
        objects: Vec<SceneObject<T>>,
    ) -> Self {
        Self {
            scene_id: scene_id.into(),
            room_type: room_type.into(),
            floor,
            objects,
        }
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    /// Bounding box of the floor, or of the object footprints when the floor
    /// is missing.
    pub fn reference_bounds(&self) -> Box2D<T> {
        if let Some(b) = Box2D::from_points(&self.floor) {
            return b;
        }
        let corners: Vec<[T; 2]> = self
            .objects
            .iter()
            .flat_map(|o| project_topdown(o).corners())
            .collect();
        Box2D::from_points(&corners).unwrap_or(Box2D {
            min: [T::zero(); 2],
            max: [T::zero(); 2],
        })
    }

    /// Area centroid of the floor polygon (vertex mean when degenerate).
    pub fn floor_centroid(&self) -> [T; 2] {
        polygon_centroid(&self.floor).unwrap_or_else(|| self.reference_bounds().center())
    }

    /// Rotates the whole room about `pivot` by `angle` (yaw about +y).
    pub fn rotated(&self, pivot: [T; 2], angle: T) -> Self {
        let rot = |p: [T; 2]| {
            let (x, z) = rotate_xz(p[0] - pivot[0], p[1] - pivot[1], angle);
            [x + pivot[0], z + pivot[1]]
        };
        Self {
            scene_id: self.scene_id.clone(),
            room_type: self.room_type.clone(),
            floor: self.floor.iter().map(|p| rot(*p)).collect(),
            objects: self
                .objects
                .iter()
                .map(|o| {
                    let [x, z] = rot(o.center_xz());
                    SceneObject {
                        class_id: o.class_id,
                        translation: [x, o.translation[1], z],
                        size: o.size,
                        rotation: wrap_angle(o.rotation + angle),
                    }
                })
                .collect(),
        }
    }

    /// Scene restricted to the given object indices, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            scene_id: self.scene_id.clone(),
            room_type: self.room_type.clone(),
            floor: self.floor.clone(),
            objects: indices.iter().map(|&i| self.objects[i].clone()).collect(),
        }
    }
}

/// Signed shoelace area; positive for counter-clockwise polygons.
pub fn polygon_signed_area<T: Scalar>(poly: &[[T; 2]]) -> T {
    let n = poly.len();
    let mut acc = T::zero();
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        acc += a[0] * b[1] - b[0] * a[1];
    }
    acc * T::lit(0.5)
}

pub fn polygon_centroid<T: Scalar>(poly: &[[T; 2]]) -> Option<[T; 2]> {
    if poly.is_empty() {
        return None;
    }
    let area = polygon_signed_area(poly);
    if area.abs() <= T::epsilon() {
        let n = T::from_usize(poly.len())?;
        let sx = poly.iter().map(|p| p[0]).sum::<T>();
        let sz = poly.iter().map(|p| p[1]).sum::<T>();
        return Some([sx / n, sz / n]);
    }
    let n = poly.len();
    let (mut cx, mut cz) = (T::zero(), T::zero());
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let cross = a[0] * b[1] - b[0] * a[1];
        cx += (a[0] + b[0]) * cross;
        cz += (a[1] + b[1]) * cross;
    }
    let k = T::lit(6.0) * area;
    Some([cx / k, cz / k])
}

/// Even-odd point-in-polygon test.
pub fn point_in_polygon<T: Scalar>(p: [T; 2], poly: &[[T; 2]]) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n.wrapping_sub(1);
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Euclidean distance from a point to the polygon boundary.
pub fn distance_to_boundary<T: Scalar>(p: [T; 2], poly: &[[T; 2]]) -> T {
    let n = poly.len();
    let mut best = T::infinity();
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let (dx, dz) = (b[0] - a[0], b[1] - a[1]);
        let len2 = dx * dx + dz * dz;
        let t = if len2 > T::zero() {
            (((p[0] - a[0]) * dx + (p[1] - a[1]) * dz) / len2).max(T::zero()).min(T::one())
        } else {
            T::zero()
        };
        let (qx, qz) = (a[0] + t * dx, a[1] + t * dz);
        best = best.min((p[0] - qx).hypot(p[1] - qz));
    }
    best
}
