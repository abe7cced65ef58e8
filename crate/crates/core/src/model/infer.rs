use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::GEOMETRY_DIMS;
use super::encoding::{room_origin, shift, to_room_frame};
use super::net::{Model, SequenceInput};
use crate::data::LayoutMask;
use crate::error::{Error, Result};
use crate::geometry::SceneObject;
use crate::numerics::{mixture, Graph};
use crate::ordering::{order_with_forest, parse_scene, OrderingConfig, Strategy};
use crate::scalar::Scalar;
use crate::scene::Scene;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleOptions {
    /// Softmax temperature for the class head; `<= 0` means argmax.
    pub temperature: f64,
    /// Object cap; defaults to the model's `max_len`.
    pub max_len: Option<usize>,
}

impl Default for SampleOptions {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            max_len: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sampled<T> {
    pub scene: Scene<T>,
    /// True when generation hit the length cap before the end token.
    pub truncated: bool,
}

/// Draws a class index from logits at temperature `tau`.
pub fn sample_class<T: Scalar, R: Rng + ?Sized>(logits: &[T], tau: f64, rng: &mut R) -> usize {
    let argmax = (0..logits.len()).fold(0, |b, j| if logits[j] > logits[b] { j } else { b });
    if tau <= 0.0 {
        return argmax;
    }
    let max = logits[argmax].as_f64();
    let w: Vec<f64> = logits.iter().map(|l| ((l.as_f64() - max) / tau).exp()).collect();
    let total: f64 = w.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, wi) in w.iter().enumerate() {
        if u < *wi {
            return i;
        }
        u -= wi;
    }
    argmax
}

/// Room-frame working state shared by the generation entry points.
struct Session<'m, T: Scalar> {
    model: &'m Model<T>,
    mask: LayoutMask,
    classes: Vec<usize>,
    geometry: Vec<[T; GEOMETRY_DIMS]>,
}

impl<'m, T: Scalar> Session<'m, T> {
    fn new(model: &'m Model<T>, floor: &[[T; 2]]) -> Result<Self> {
        Ok(Self {
            model,
            mask: model.room_mask(floor)?,
            classes: Vec::new(),
            geometry: Vec::new(),
        })
    }

    fn push(&mut self, obj: &SceneObject<T>) {
        self.classes.push(obj.class_id);
        self.geometry.push(self.model.bounds.normalize_object(obj));
    }

    fn input(&self) -> SequenceInput<T> {
        SequenceInput {
            mask: self.mask.clone(),
            geometry: self.geometry.clone(),
            forced_classes: self.classes.clone(),
            masked: Vec::new(),
        }
    }

    /// Class logits after the current prefix.
    fn next_logits(&self) -> Result<Vec<T>> {
        let mut g = Graph::new(self.model.params());
        let seq = self.model.sequence(&mut g, &self.input())?;
        let ctx = self.model.decode(&mut g, seq)?;
        let last = g.shape(ctx)[0] - 1;
        let row = g.slice_rows(ctx, last, last + 1)?;
        let logits = self.model.class_logits(&mut g, row)?;
        Ok(g.value(logits).to_vec())
    }

    /// Mixture rows `[7][3K]` for the next object of class `class`.
    fn next_geometry(&self, class: usize) -> Result<Vec<Vec<T>>> {
        let mut g = Graph::new(self.model.params());
        let seq = self.model.sequence(&mut g, &self.input())?;
        let ctx = self.model.decode(&mut g, seq)?;
        let last = g.shape(ctx)[0] - 1;
        let row = g.slice_rows(ctx, last, last + 1)?;
        let mix = self.model.geometry_params(&mut g, row, &[class])?;
        let k3 = 3 * self.model.config.mixture_components;
        Ok(g.value(mix).chunks(k3).map(|c| c.to_vec()).collect())
    }

    /// Samples geometry for `class`, keeping the normalized values in
    /// `keep` where given.
    fn place<R: Rng + ?Sized>(&mut self, class: usize, keep: [Option<T>; GEOMETRY_DIMS], rng: &mut R) -> Result<SceneObject<T>> {
        let rows = self.next_geometry(class)?;
        let mut h = [T::zero(); GEOMETRY_DIMS];
        for d in 0..GEOMETRY_DIMS {
            h[d] = match keep[d] {
                Some(v) => v,
                None => mixture::sample(&rows[d], rng),
            };
        }
        self.classes.push(class);
        self.geometry.push(h);
        Ok(self.model.bounds.denormalize_object(class, &h))
    }

    /// Continues until the end token or `cap` objects.
    fn run<R: Rng + ?Sized>(&mut self, out: &mut Vec<SceneObject<T>>, cap: usize, tau: f64, rng: &mut R) -> Result<bool> {
        while self.classes.len() < cap {
            let class = sample_class(&self.next_logits()?, tau, rng);
            if class == self.model.end_class() {
                return Ok(false);
            }
            out.push(self.place(class, [None; GEOMETRY_DIMS], rng)?);
        }
        Ok(true)
    }
}

impl<T: Scalar> Model<T> {
    fn cap(&self, opts: &SampleOptions) -> usize {
        opts.max_len.unwrap_or(self.config.max_len).min(self.config.max_len)
    }

    /// Floor mask for a polygon given in world coordinates.
    pub fn layout_mask(&self, floor: &[[T; 2]]) -> Result<LayoutMask> {
        let room = to_room_frame(&Scene::new("", "", floor.to_vec(), Vec::new()));
        self.room_mask(&room.floor)
    }

    /// Distribution over the next class (last entry is the end token) after
    /// the given objects, fed in the order supplied.
    pub fn next_class_distribution(&self, floor: &[[T; 2]], prefix: &[SceneObject<T>]) -> Result<Vec<f64>> {
        let world = Scene::new("", "", floor.to_vec(), prefix.to_vec());
        let room = to_room_frame(&world);
        let mut s = Session::new(self, &room.floor)?;
        for o in &room.objects {
            s.push(o);
        }
        let logits = s.next_logits()?;
        let max = logits.iter().map(|l| l.as_f64()).fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| (l.as_f64() - max).exp()).collect();
        let z: f64 = e.iter().sum();
        Ok(e.into_iter().map(|v| v / z).collect())
    }

    /// Unconditional generation inside a floor polygon.
    pub fn sample_scene<R: Rng + ?Sized>(
        &self,
        scene_id: &str,
        room_type: &str,
        floor: &[[T; 2]],
        opts: &SampleOptions,
        rng: &mut R,
    ) -> Result<Sampled<T>> {
        self.complete_scene(
            &Scene::new(scene_id, room_type, floor.to_vec(), Vec::new()),
            opts,
            &OrderingConfig::default(),
            rng,
        )
    }

    /// Keeps the given objects (ordered anchors first) and generates the rest.
    pub fn complete_scene<R: Rng + ?Sized>(
        &self,
        partial: &Scene<T>,
        opts: &SampleOptions,
        ordering: &OrderingConfig,
        rng: &mut R,
    ) -> Result<Sampled<T>> {
        let cap = self.cap(opts);
        if partial.objects.len() > cap {
            return Err(Error::TooLong {
                len: partial.objects.len(),
                max: cap,
            });
        }
        self.check_classes(&partial.objects)?;
        let origin = room_origin(partial);
        let room = to_room_frame(partial);
        let mut s = Session::new(self, &room.floor)?;
        let mut objects = Vec::with_capacity(cap);
        if !room.objects.is_empty() {
            let forest = parse_scene(&room, ordering)?.forest;
            let order = order_with_forest(&room, &forest, Strategy::ForestBfs, rng.gen(), None)?.order;
            for &i in &order {
                s.push(&room.objects[i]);
                objects.push(room.objects[i].clone());
            }
        }
        let truncated = s.run(&mut objects, cap, opts.temperature, rng)?;
        let out = Scene::new(partial.scene_id.clone(), partial.room_type.clone(), room.floor, objects);
        Ok(Sampled {
            scene: shift(&out, origin),
            truncated,
        })
    }

    /// Re-places the objects at `targets`: the others are fed first, then
    /// each target gets new translation and yaw with class and size kept.
    /// Output objects follow the input indexing.
    pub fn rearrange<R: Rng + ?Sized>(
        &self,
        scene: &Scene<T>,
        targets: &[usize],
        ordering: &OrderingConfig,
        rng: &mut R,
    ) -> Result<Scene<T>> {
        let n = scene.objects.len();
        if n == 0 {
            return Err(Error::EmptyScene);
        }
        if n > self.config.max_len {
            return Err(Error::TooLong {
                len: n,
                max: self.config.max_len,
            });
        }
        if let Some(&t) = targets.iter().find(|&&t| t >= n) {
            return Err(Error::Unknown {
                kind: "object index",
                value: t.to_string(),
            });
        }
        self.check_classes(&scene.objects)?;
        let origin = room_origin(scene);
        let room = to_room_frame(scene);
        let mut is_target = vec![false; n];
        for &t in targets {
            is_target[t] = true;
        }
        let keep: Vec<usize> = (0..n).filter(|&i| !is_target[i]).collect();
        let mut s = Session::new(self, &room.floor)?;
        if !keep.is_empty() {
            let sub = room.subset(&keep);
            let forest = parse_scene(&sub, ordering)?.forest;
            let order = order_with_forest(&sub, &forest, Strategy::ForestBfs, rng.gen(), None)?.order;
            for &i in &order {
                s.push(&sub.objects[i]);
            }
        }
        let mut objects = room.objects.clone();
        let mut placed = vec![false; n];
        for &t in targets {
            if std::mem::replace(&mut placed[t], true) {
                continue;
            }
            let h = self.bounds.normalize_object(&room.objects[t]);
            let keep = [None, None, None, Some(h[3]), Some(h[4]), Some(h[5]), None];
            let mut obj = s.place(room.objects[t].class_id, keep, rng)?;
            obj.size = room.objects[t].size;
            objects[t] = obj;
        }
        let out = Scene::new(scene.scene_id.clone(), scene.room_type.clone(), room.floor, objects);
        Ok(shift(&out, origin))
    }

    fn check_classes(&self, objects: &[SceneObject<T>]) -> Result<()> {
        match objects.iter().find(|o| o.class_id >= self.num_classes()) {
            Some(o) => Err(Error::Unknown {
                kind: "class id",
                value: o.class_id.to_string(),
            }),
            None => Ok(()),
        }
    }
}
