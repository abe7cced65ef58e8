use serde::{Deserialize, Serialize};

use super::config::GEOMETRY_DIMS;
use crate::error::{Error, Result};
use crate::geometry::SceneObject;
use crate::scalar::Scalar;
use crate::scene::Scene;

/// `(sin 2^0 πh, cos 2^0 πh, ..., sin 2^(L-1) πh, cos 2^(L-1) πh)`.
pub fn encode_scalar<T: Scalar>(h: T, frequencies: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(2 * frequencies);
    let mut f = T::PI();
    for _ in 0..frequencies {
        let (s, c) = (f * h).sin_cos();
        out.push(s);
        out.push(c);
        f = f + f;
    }
    out
}

/// Concatenated encodings of the seven normalized attributes.
pub fn encode_geometry<T: Scalar>(h: &[T; GEOMETRY_DIMS], frequencies: usize) -> Vec<T> {
    h.iter().flat_map(|&v| encode_scalar(v, frequencies)).collect()
}

/// Center of the floor bounding box; translations are stored relative to it.
pub fn room_origin<T: Scalar>(scene: &Scene<T>) -> [T; 2] {
    scene.reference_bounds().center()
}

/// Shifts floor and objects so the room origin sits at `(0, 0)`.
pub fn to_room_frame<T: Scalar>(scene: &Scene<T>) -> Scene<T> {
    let o = room_origin(scene);
    shift(scene, [-o[0], -o[1]])
}

pub fn shift<T: Scalar>(scene: &Scene<T>, by: [T; 2]) -> Scene<T> {
    let mut out = scene.clone();
    for p in &mut out.floor {
        p[0] += by[0];
        p[1] += by[1];
    }
    for o in &mut out.objects {
        o.translation[0] += by[0];
        o.translation[2] += by[1];
    }
    out
}

/// Per-attribute ranges mapping meters and radians onto `[-1, 1]`, plus the
/// raster cell size shared by every layout mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormBounds {
    pub lo: [f64; GEOMETRY_DIMS],
    pub hi: [f64; GEOMETRY_DIMS],
    pub meters_per_cell: f64,
}

const MARGIN: f64 = 0.05;

impl NormBounds {
    /// Min/max over the room-frame objects of `scenes`, widened by 5% of the
    /// range. With `rotation_invariant` the x and z ranges become symmetric
    /// and cover every yaw of the room.
    pub fn from_scenes<T: Scalar>(scenes: &[Scene<T>], rotation_invariant: bool, resolution: usize) -> Result<Self> {
        let mut lo = [f64::INFINITY; GEOMETRY_DIMS];
        let mut hi = [f64::NEG_INFINITY; GEOMETRY_DIMS];
        let mut radius: f64 = 0.0;
        let mut extent: f64 = 0.0;
        let mut any = false;
        for scene in scenes {
            let local = to_room_frame(scene);
            for p in &local.floor {
                let (x, z) = (p[0].as_f64(), p[1].as_f64());
                radius = radius.max(x.hypot(z));
                extent = extent.max(x.abs()).max(z.abs());
            }
            for o in &local.objects {
                any = true;
                let v = raw_attributes(o);
                for d in 0..GEOMETRY_DIMS - 1 {
                    lo[d] = lo[d].min(v[d]);
                    hi[d] = hi[d].max(v[d]);
                }
                let (x, z) = (v[0], v[2]);
                radius = radius.max(x.hypot(z));
            }
        }
        if !any {
            return Err(Error::EmptyInput("normalization needs at least one object"));
        }
        for d in 0..GEOMETRY_DIMS - 1 {
            let span = (hi[d] - lo[d]).max(1e-3);
            lo[d] -= MARGIN * span;
            hi[d] += MARGIN * span;
        }
        if rotation_invariant {
            let r = radius * (1.0 + MARGIN);
            for d in [0, 2] {
                lo[d] = -r;
                hi[d] = r;
            }
        }
        lo[6] = -std::f64::consts::PI;
        hi[6] = std::f64::consts::PI;
        let half = if rotation_invariant { radius } else { extent };
        let meters_per_cell = (2.0 * half * (1.0 + MARGIN) / resolution.max(1) as f64).max(1e-3);
        Ok(Self { lo, hi, meters_per_cell })
    }

    /// Maps one attribute to `[-1, 1]`; the flag reports clamping.
    pub fn normalize(&self, dim: usize, value: f64) -> (f64, bool) {
        let h = 2.0 * (value - self.lo[dim]) / (self.hi[dim] - self.lo[dim]) - 1.0;
        if (-1.0..=1.0).contains(&h) {
            (h, false)
        } else {
            (h.clamp(-1.0, 1.0), true)
        }
    }

    pub fn denormalize(&self, dim: usize, h: f64) -> f64 {
        self.lo[dim] + (h.clamp(-1.0, 1.0) + 1.0) * 0.5 * (self.hi[dim] - self.lo[dim])
    }

    /// Normalized attributes of a room-frame object, clamped into range.
    pub fn normalize_object<T: Scalar>(&self, obj: &SceneObject<T>) -> [T; GEOMETRY_DIMS] {
        let raw = raw_attributes(obj);
        let mut out = [T::zero(); GEOMETRY_DIMS];
        let mut clamped = false;
        for d in 0..GEOMETRY_DIMS {
            let (h, c) = self.normalize(d, raw[d]);
            clamped |= c;
            out[d] = T::lit(h);
        }
        if clamped {
            log::warn!("object attributes {raw:?} fall outside the normalization bounds; clamped");
        }
        out
    }

    /// Rebuilds a room-frame object; sizes are floored at 1 mm.
    pub fn denormalize_object<T: Scalar>(&self, class_id: usize, h: &[T; GEOMETRY_DIMS]) -> SceneObject<T> {
        let v: Vec<f64> = (0..GEOMETRY_DIMS).map(|d| self.denormalize(d, h[d].as_f64())).collect();
        let t = [T::lit(v[0]), T::lit(v[1]), T::lit(v[2])];
        let b = [T::lit(v[3].max(1e-3)), T::lit(v[4].max(1e-3)), T::lit(v[5].max(1e-3))];
        SceneObject::new(class_id, t, b, T::lit(v[6])).expect("finite denormalized attributes")
    }
}

fn raw_attributes<T: Scalar>(o: &SceneObject<T>) -> [f64; GEOMETRY_DIMS] {
    [
        o.translation[0].as_f64(),
        o.translation[1].as_f64(),
        o.translation[2].as_f64(),
        o.size[0].as_f64(),
        o.size[1].as_f64(),
        o.size[2].as_f64(),
        o.rotation.as_f64(),
    ]
}

/// Sinusoidal absolute position encoding, `[len, dim]` row-major.
pub fn position_table<T: Scalar>(len: usize, dim: usize) -> Vec<T> {
    let mut out = vec![T::zero(); len * dim];
    for p in 0..len {
        for i in 0..dim {
            let rate = 10000f64.powf((2 * (i / 2)) as f64 / dim as f64);
            let a = p as f64 / rate;
            out[p * dim + i] = T::lit(if i % 2 == 0 { a.sin() } else { a.cos() });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_encoding_examples() {
        let z = encode_scalar(0.0f64, 32);
        assert_eq!(z.len(), 64);
        for k in 0..32 {
            assert_eq!(z[2 * k], 0.0);
            assert_eq!(z[2 * k + 1], 1.0);
        }
        let half = encode_scalar(0.5f64, 32);
        assert!((half[0] - 1.0).abs() < 1e-12 && half[1].abs() < 1e-12);
        assert!(half[2].abs() < 1e-12 && (half[3] + 1.0).abs() < 1e-12);
        let one = encode_scalar(1.0f64, 32);
        for k in 0..32 {
            assert!(one[2 * k].abs() < 1e-5 * (1u64 << k) as f64);
            assert!(one[2 * k + 1].abs() > 0.99);
        }
    }

    #[test]
    fn bounds_round_trip() {
        let o = SceneObject::new(0, [1.0f64, 0.4, -0.5], [1.0, 0.8, 0.6], 0.3).unwrap();
        let floor = vec![[-3.0, -2.0], [3.0, -2.0], [3.0, 2.0], [-3.0, 2.0]];
        let s = Scene::new("a", "bedroom", floor, vec![o.clone()]);
        let b = NormBounds::from_scenes(&[s], true, 64).unwrap();
        let h = b.normalize_object(&o);
        assert!(h.iter().all(|v| (-1.0..=1.0).contains(v)));
        let back = b.denormalize_object(0, &h);
        for k in 0..3 {
            assert!((back.translation[k] - o.translation[k]).abs() < 1e-9);
            assert!((back.size[k] - o.size[k]).abs() < 1e-9);
        }
        assert!((back.rotation - o.rotation).abs() < 1e-9);
    }
}
