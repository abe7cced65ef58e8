//! Oriented furniture boxes, their top-down projection, GIoU, and the
//! clustering distance matrix `m_ij = d_ij + lambda * (1 - GIoU)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{wrap_angle, Scalar};
use crate::scene::Scene;

/// Default GIoU weight of the clustering distance.
pub const DEFAULT_LAMBDA: f64 = 0.02;

/// One oriented furniture box. Translation is the box center (y-up), size is
/// the full extent along each local axis, rotation is the yaw about +y.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneObject<T> {
    pub class_id: usize,
    pub translation: [T; 3],
    pub size: [T; 3],
    pub rotation: T,
}

impl<T: Scalar> SceneObject<T> {
    /// Builds a validated object; the yaw is wrapped into `[-pi, pi)`.
    pub fn new(class_id: usize, translation: [T; 3], size: [T; 3], rotation: T) -> Result<Self> {
        if size.iter().any(|s| !(*s > T::zero()) || !s.is_finite()) {
            return Err(Error::InvalidObject(format!("size components must be positive, got {size:?}")));
        }
        if translation.iter().any(|t| !t.is_finite()) || !rotation.is_finite() {
            return Err(Error::InvalidObject("non-finite translation or rotation".into()));
        }
        Ok(Self {
            class_id,
            translation,
            size,
            rotation: wrap_angle(rotation),
        })
    }

    pub fn volume(&self) -> T {
        self.size[0] * self.size[1] * self.size[2]
    }

    pub fn footprint_area(&self) -> T {
        self.size[0] * self.size[2]
    }

    /// Center on the ground plane.
    pub fn center_xz(&self) -> [T; 2] {
        [self.translation[0], self.translation[2]]
    }

    /// Corners of the yaw-rotated footprint, counter-clockwise in local frame.
    pub fn footprint_corners(&self) -> [[T; 2]; 4] {
        let half = T::lit(0.5);
        let hx = self.size[0] * half;
        let hz = self.size[2] * half;
        let local = [[-hx, -hz], [hx, -hz], [hx, hz], [-hx, hz]];
        let [cx, cz] = self.center_xz();
        local.map(|[x, z]| {
            let (rx, rz) = rotate_xz(x, z, self.rotation);
            [cx + rx, cz + rz]
        })
    }
}

/// Rotates a ground-plane vector by `angle` about +y.
#[inline]
pub fn rotate_xz<T: Scalar>(x: T, z: T, angle: T) -> (T, T) {
    let (s, c) = angle.sin_cos();
    (x * c + z * s, -x * s + z * c)
}

/// Axis-aligned box on the x-z plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Box2D<T> {
    pub min: [T; 2],
    pub max: [T; 2],
}

impl<T: Scalar> Box2D<T> {
    pub fn new(min: [T; 2], max: [T; 2]) -> Self {
        debug_assert!(min[0] <= max[0] && min[1] <= max[1]);
        Self { min, max }
    }

    pub fn from_points(points: &[[T; 2]]) -> Option<Self> {
        let first = *points.first()?;
        let mut b = Self { min: first, max: first };
        for p in &points[1..] {
            for k in 0..2 {
                b.min[k] = b.min[k].min(p[k]);
                b.max[k] = b.max[k].max(p[k]);
            }
        }
        Some(b)
    }

    pub fn width(&self) -> T {
        self.max[0] - self.min[0]
    }

    pub fn depth(&self) -> T {
        self.max[1] - self.min[1]
    }

    pub fn area(&self) -> T {
        self.width() * self.depth()
    }

    pub fn center(&self) -> [T; 2] {
        let half = T::lit(0.5);
        [(self.min[0] + self.max[0]) * half, (self.min[1] + self.max[1]) * half]
    }

    pub fn diagonal(&self) -> T {
        self.width().hypot(self.depth())
    }

    pub fn corners(&self) -> [[T; 2]; 4] {
        [
            [self.min[0], self.min[1]],
            [self.max[0], self.min[1]],
            [self.max[0], self.max[1]],
            [self.min[0], self.max[1]],
        ]
    }

    /// Area of the overlap, zero when disjoint.
    pub fn intersection_area(&self, other: &Self) -> T {
        let w = (self.max[0].min(other.max[0]) - self.min[0].max(other.min[0])).max(T::zero());
        let d = (self.max[1].min(other.max[1]) - self.min[1].max(other.min[1])).max(T::zero());
        w * d
    }

    /// Smallest axis-aligned box containing both.
    pub fn enclosure(&self, other: &Self) -> Self {
        Self {
            min: [self.min[0].min(other.min[0]), self.min[1].min(other.min[1])],
            max: [self.max[0].max(other.max[0]), self.max[1].max(other.max[1])],
        }
    }
}

/// Axis-aligned bounding box of the yaw-rotated footprint.
pub fn project_topdown<T: Scalar>(obj: &SceneObject<T>) -> Box2D<T> {
    Box2D::from_points(&obj.footprint_corners()).expect("four corners")
}

/// Intersection over union. Two zero-area boxes score 1 when they coincide
/// and 0 otherwise.
pub fn iou<T: Scalar>(a: &Box2D<T>, b: &Box2D<T>) -> T {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union > T::zero() {
        inter / union
    } else if a == b {
        T::one()
    } else {
        T::zero()
    }
}

/// Generalized IoU: `IoU - |C \ (a u b)| / |C|` with `C` the enclosing box.
pub fn giou<T: Scalar>(a: &Box2D<T>, b: &Box2D<T>) -> T {
    if a == b {
        return T::one();
    }
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    let iou = if union > T::zero() { inter / union } else { T::zero() };
    let hull = a.enclosure(b).area();
    if hull > T::zero() {
        iou - (hull - union) / hull
    } else {
        iou
    }
}

/// How center distances are scaled before entering the distance matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceNormalization {
    /// Divide by the diagonal of the floor's bounding box.
    #[default]
    Diagonal,
    /// Raw meters.
    None,
}

impl std::str::FromStr for DistanceNormalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diagonal" => Ok(Self::Diagonal),
            "none" => Ok(Self::None),
            other => Err(Error::Unknown {
                kind: "distance normalization",
                value: other.to_string(),
            }),
        }
    }
}

/// Symmetric pairwise clustering distances with zero diagonal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix<T> {
    n: usize,
    entries: Vec<T>,
    pub lambda: T,
}

impl<T: Scalar> DistanceMatrix<T> {
    /// Wraps a row-major `n x n` matrix. Symmetry and the zero diagonal are
    /// checked; entries must be finite and non-negative.
    pub fn from_rows(n: usize, entries: Vec<T>, lambda: T) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::ShapeMismatch {
                op: "distance matrix",
                lhs: vec![n, n],
                rhs: vec![entries.len()],
            });
        }
        for i in 0..n {
            if entries[i * n + i] != T::zero() {
                return Err(Error::Config(format!("diagonal entry {i} is not zero")));
            }
            for j in 0..n {
                let v = entries[i * n + j];
                if !v.is_finite() || v < T::zero() || v != entries[j * n + i] {
                    return Err(Error::Config(format!("entry ({i},{j}) breaks symmetry or is invalid")));
                }
            }
        }
        Ok(Self { n, entries, lambda })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.entries[i * self.n + j]
    }

    pub fn entries(&self) -> &[T] {
        &self.entries
    }
}

/// Builds `m_ij = d_ij + lambda * (1 - GIoU(o_i, o_j))` over the projected
/// boxes of a scene.
pub fn build_distance_matrix<T: Scalar>(
    scene: &Scene<T>,
    lambda: T,
    normalization: DistanceNormalization,
) -> Result<DistanceMatrix<T>> {
    let n = scene.objects.len();
    if n == 0 {
        return Err(Error::EmptyScene);
    }
    if lambda < T::zero() {
        return Err(Error::Config("lambda must be non-negative".into()));
    }
    let scale = match normalization {
        DistanceNormalization::None => T::one(),
        DistanceNormalization::Diagonal => {
            let diag = scene.reference_bounds().diagonal();
            if diag > T::zero() {
                diag
            } else {
                T::one()
            }
        }
    };
    let boxes: Vec<Box2D<T>> = scene.objects.iter().map(project_topdown).collect();
    let mut entries = vec![T::zero(); n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let [xi, zi] = boxes[i].center();
            let [xj, zj] = boxes[j].center();
            let d = (xi - xj).hypot(zi - zj) / scale;
            let m = d + lambda * (T::one() - giou(&boxes[i], &boxes[j]));
            entries[i * n + j] = m;
            entries[j * n + i] = m;
        }
    }
    Ok(DistanceMatrix { n, entries, lambda })
}
