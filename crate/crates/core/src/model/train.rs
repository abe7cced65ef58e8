use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, TrainConfig, GEOMETRY_DIMS};
use super::corrupt::{corrupt, Corruption};
use super::encoding::{to_room_frame, NormBounds};
use super::net::{Model, SequenceInput};
use crate::data::{rasterize_floor, LayoutMask};
use crate::error::{Error, Result};
use crate::numerics::{AdamW, Gradients, Graph};
use crate::ordering::{
    class_frequencies, derive_seed, order_with_forest, parse_scene, rng_from_seed, SceneForest, Strategy,
};
use crate::scalar::Scalar;
use crate::scene::Scene;

/// A scene in its room frame with its forest parsed once.
#[derive(Clone, Debug)]
pub struct PreparedScene<T> {
    pub scene: Scene<T>,
    pub forest: SceneForest,
    mask: Option<LayoutMask>,
}

/// One learning-curve row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub steps: usize,
    /// Mean per-scene training loss over the epoch (with corruption).
    pub train_nll: f64,
    /// Mean per-scene validation NLL, on evaluation epochs.
    pub val_nll: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub curve: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_metric: f64,
    pub steps: usize,
}

/// Teacher-forced statistics over a scene set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalStats {
    /// Mean per-scene NLL.
    pub nll: f64,
    pub class_nll: f64,
    pub geometry_nll: f64,
    /// Argmax class accuracy over every object and end-token position.
    pub class_accuracy: f64,
}

impl<T: Scalar> Model<T> {
    /// Floor mask of a room-frame polygon.
    pub fn room_mask(&self, floor: &[[T; 2]]) -> Result<LayoutMask> {
        rasterize_floor(
            floor,
            self.config.layout_resolution,
            T::lit(self.bounds.meters_per_cell),
            [T::zero(), T::zero()],
        )
    }

    pub fn prepare(&self, scene: &Scene<T>, ordering: &crate::ordering::OrderingConfig, cache_mask: bool) -> Result<PreparedScene<T>> {
        if scene.objects.is_empty() {
            return Err(Error::EmptyScene);
        }
        if scene.objects.len() > self.config.max_len {
            return Err(Error::TooLong {
                len: scene.objects.len(),
                max: self.config.max_len,
            });
        }
        if let Some(o) = scene.objects.iter().find(|o| o.class_id >= self.num_classes()) {
            return Err(Error::Unknown {
                kind: "class id",
                value: o.class_id.to_string(),
            });
        }
        let local = to_room_frame(scene);
        let forest = parse_scene(&local, ordering)?.forest;
        let mask = if cache_mask { Some(self.room_mask(&local.floor)?) } else { None };
        Ok(PreparedScene {
            scene: local,
            forest,
            mask,
        })
    }

    /// Teacher-forcing input for `scene` in `order`; returns the input and
    /// the class targets.
    pub fn teacher_input(
        &self,
        scene: &Scene<T>,
        order: &[usize],
        mask: LayoutMask,
        corruption: Option<Corruption>,
    ) -> (SequenceInput<T>, Vec<usize>) {
        let targets: Vec<usize> = order.iter().map(|&i| scene.objects[i].class_id).collect();
        let geometry: Vec<[T; GEOMETRY_DIMS]> = order
            .iter()
            .map(|&i| self.bounds.normalize_object(&scene.objects[i]))
            .collect();
        let c = corruption.unwrap_or_else(|| Corruption::identity(&targets));
        (
            SequenceInput {
                mask,
                geometry,
                forced_classes: c.forced_classes,
                masked: c.masked,
            },
            targets,
        )
    }

    /// Deterministic evaluation: fixed per-scene orderings, no augmentation,
    /// no corruption, no dropout.
    pub fn evaluate(&self, scenes: &[PreparedScene<T>], strategy: Strategy, frequencies: Option<&[usize]>, seed: u64) -> Result<EvalStats> {
        if scenes.is_empty() {
            return Err(Error::EmptyInput("evaluation scenes"));
        }
        let (mut nll, mut cls, mut geo) = (0.0, 0.0, 0.0);
        let (mut correct, mut total) = (0usize, 0usize);
        for (i, p) in scenes.iter().enumerate() {
            let s = derive_seed(seed, &[i as u64, 0xe7a1]);
            let order = order_with_forest(&p.scene, &p.forest, strategy, s, frequencies)?.order;
            let mask = match &p.mask {
                Some(m) => m.clone(),
                None => self.room_mask(&p.scene.floor)?,
            };
            let (input, targets) = self.teacher_input(&p.scene, &order, mask, None);
            let mut g = Graph::new(self.params());
            let loss = self.scene_loss(&mut g, &input, &targets)?;
            nll += g.scalar(loss.total).as_f64();
            cls += loss.class_nll;
            geo += loss.geometry_nll;
            let logits = g.value(loss.logits);
            let width = self.num_classes() + 1;
            for (r, t) in targets.iter().chain(std::iter::once(&self.end_class())).enumerate() {
                let row = &logits[r * width..(r + 1) * width];
                let arg = (0..width).fold(0, |b, j| if row[j] > row[b] { j } else { b });
                correct += (arg == *t) as usize;
                total += 1;
            }
        }
        let n = scenes.len() as f64;
        Ok(EvalStats {
            nll: nll / n,
            class_nll: cls / n,
            geometry_nll: geo / n,
            class_accuracy: correct as f64 / total.max(1) as f64,
        })
    }
}

/// Fresh model with bounds fitted to the training scenes, exactly as
/// [`train`] initializes it.
pub fn init_model<T: Scalar>(
    train_scenes: &[Scene<T>],
    vocab: Vec<String>,
    model_config: ModelConfig,
    config: &TrainConfig,
) -> Result<Model<T>> {
    config.validate()?;
    if train_scenes.is_empty() {
        return Err(Error::EmptyInput("training scenes"));
    }
    let bounds = NormBounds::from_scenes(train_scenes, config.rotation_augmentation, model_config.layout_resolution)?;
    let mut model = Model::<T>::new(model_config, vocab, bounds, derive_seed(config.seed, &[0x1417]))?;
    model.train_config = Some(config.clone());
    Ok(model)
}

/// Trains a fresh model. `progress` sees every learning-curve row.
pub fn train<T: Scalar>(
    train_scenes: &[Scene<T>],
    val_scenes: &[Scene<T>],
    vocab: Vec<String>,
    model_config: ModelConfig,
    config: &TrainConfig,
    progress: &mut dyn FnMut(&EpochRecord),
) -> Result<(Model<T>, TrainReport)> {
    let model = init_model(train_scenes, vocab, model_config, config)?;
    fit(model, train_scenes, val_scenes, config, progress)
}

/// Continues training `model`; its normalization bounds are kept.
pub fn fit<T: Scalar>(
    mut model: Model<T>,
    train_scenes: &[Scene<T>],
    val_scenes: &[Scene<T>],
    config: &TrainConfig,
    progress: &mut dyn FnMut(&EpochRecord),
) -> Result<(Model<T>, TrainReport)> {
    config.validate()?;
    if train_scenes.is_empty() {
        return Err(Error::EmptyInput("training scenes"));
    }
    model.train_config = Some(config.clone());
    let frequencies = class_frequencies(train_scenes, model.num_classes());
    let freq = Some(frequencies.as_slice());
    let cache = !config.rotation_augmentation;
    let prepared: Vec<PreparedScene<T>> = train_scenes
        .iter()
        .map(|s| model.prepare(s, &config.ordering, cache))
        .collect::<Result<_>>()?;
    let val: Vec<PreparedScene<T>> = val_scenes
        .iter()
        .map(|s| model.prepare(s, &config.ordering, true))
        .collect::<Result<_>>()?;

    let mut opt = AdamW::new(model.params(), config.optimizer.clone());
    let mut best = model.params().clone();
    let mut best_metric = f64::INFINITY;
    let mut best_epoch = 0;
    let mut curve = Vec::new();
    let mut steps = 0usize;
    let mc = model.config.clone();
    let mut indices: Vec<usize> = (0..prepared.len()).collect();

    'epochs: for epoch in 0..config.epochs {
        indices.sort_unstable();
        indices.shuffle(&mut rng_from_seed(derive_seed(config.seed, &[epoch as u64, 0x5bff])));
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        let mut stopped = false;
        for batch in indices.chunks(config.batch_size) {
            let mut grads = Gradients::zeros(model.params().len());
            for &si in batch {
                let p = &prepared[si];
                let seed = derive_seed(config.seed, &[epoch as u64, si as u64]);
                let mut rng = rng_from_seed(seed);
                let (scene, mask) = if config.rotation_augmentation {
                    let angle = T::lit(rng.gen_range(0.0..std::f64::consts::TAU));
                    let rotated = p.scene.rotated([T::zero(), T::zero()], angle);
                    let mask = model.room_mask(&rotated.floor)?;
                    (rotated, mask)
                } else {
                    (p.scene.clone(), p.mask.clone().expect("cached mask"))
                };
                let order = order_with_forest(&scene, &p.forest, config.strategy, rng.gen(), freq)?.order;
                let classes: Vec<usize> = order.iter().map(|&i| scene.objects[i].class_id).collect();
                let c = corrupt(&classes, model.num_classes(), mc.mask_rate, mc.noise_rate, &mut rng);
                let (input, targets) = model.teacher_input(&scene, &order, mask, Some(c));
                let mut g = Graph::training(model.params(), rng.gen());
                let loss = model.scene_loss(&mut g, &input, &targets)?;
                let value = g.scalar(loss.total).as_f64();
                if !value.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        context: format!("epoch {epoch}, step {steps}, scene {}", p.scene.scene_id),
                        value,
                    });
                }
                g.backward(loss.total)?;
                grads.add_assign(g.param_grads());
                epoch_loss += value;
                seen += 1;
            }
            grads.scale(T::lit(1.0 / batch.len() as f64));
            if !grads.is_finite() {
                return Err(Error::NonFiniteLoss {
                    context: format!("gradient at epoch {epoch}, step {steps}"),
                    value: f64::NAN,
                });
            }
            opt.step(model.params_mut(), &grads);
            steps += 1;
            if config.max_steps.is_some_and(|m| steps >= m) {
                stopped = true;
                break;
            }
        }
        let train_nll = epoch_loss / seen.max(1) as f64;
        let last = stopped || epoch + 1 == config.epochs;
        let eval_now = (epoch + 1) % config.eval_every == 0 || last;
        let mut val_nll = None;
        if eval_now {
            let metric = if val.is_empty() {
                train_nll
            } else {
                let v = model.evaluate(&val, config.strategy, freq, config.seed)?.nll;
                val_nll = Some(v);
                v
            };
            if metric < best_metric || !val.is_empty() && best_metric.is_infinite() {
                best_metric = metric;
                best_epoch = epoch;
                best = model.params().clone();
            }
        }
        let record = EpochRecord {
            epoch,
            steps,
            train_nll,
            val_nll,
        };
        log::info!("epoch {epoch} steps {steps} train {train_nll:.4} val {val_nll:?}");
        progress(&record);
        curve.push(record);
        if stopped {
            break 'epochs;
        }
    }
    if val.is_empty() {
        // without a validation split the final weights are kept
        best = model.params().clone();
        best_epoch = curve.last().map_or(0, |r| r.epoch);
        best_metric = curve.last().map_or(f64::NAN, |r| r.train_nll);
    }
    *model.params_mut() = best;
    Ok((
        model,
        TrainReport {
            curve,
            best_epoch,
            best_metric,
            steps,
        },
    ))
}
