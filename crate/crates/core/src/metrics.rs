//! Tree reconstruction similarity, sequence-set statistics, categorical KL,
//! and geometric scene-quality proxies.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou, project_topdown};
use crate::ordering::{SceneForest, SceneTree};
use crate::scalar::Scalar;
use crate::scene::{distance_to_boundary, point_in_polygon, Scene};

/// Objects grouped by depth; `levels[0]` holds depth 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LevelSets {
    pub levels: Vec<BTreeSet<usize>>,
}

impl LevelSets {
    pub fn from_tree(tree: &SceneTree) -> Self {
        let mut levels: Vec<BTreeSet<usize>> = Vec::new();
        for i in tree.members() {
            let d = tree.depth(i).expect("member has a depth");
            if levels.len() < d {
                levels.resize_with(d, BTreeSet::new);
            }
            levels[d - 1].insert(i);
        }
        Self { levels }
    }
}

/// Average per-depth Jaccard similarity between the level sets of a
/// predicted and a ground-truth tree, averaged over the ground-truth depths.
/// Higher is better; identical trees score 1.
pub fn ahd(predicted: &SceneTree, truth: &SceneTree) -> Result<f64> {
    let (pm, tm) = (predicted.members(), truth.members());
    if pm != tm || predicted.num_objects() != truth.num_objects() {
        return Err(Error::MismatchedObjects("trees cover different objects".into()));
    }
    let p = LevelSets::from_tree(predicted);
    let t = LevelSets::from_tree(truth);
    if t.levels.is_empty() {
        return Ok(1.0);
    }
    let empty = BTreeSet::new();
    let total: f64 = t
        .levels
        .iter()
        .enumerate()
        .map(|(d, truth_level)| {
            let pred_level = p.levels.get(d).unwrap_or(&empty);
            let inter = truth_level.intersection(pred_level).count();
            let union = truth_level.union(pred_level).count();
            inter as f64 / union as f64
        })
        .sum();
    Ok(total / t.levels.len() as f64)
}

/// What counts as a positional mismatch between two sequences.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HammingMode {
    /// Compare class labels, so swapping two chairs is not disorder.
    #[default]
    Class,
    /// Compare object identities.
    Identity,
}

/// Mean positional Hamming distance over all pairs of sequences.
///
/// `classes[i]` is the class of object `i`; it is ignored in
/// [`HammingMode::Identity`]. A single sequence scores 0.
pub fn inconsistency(seqs: &[Vec<usize>], classes: &[usize], mode: HammingMode) -> Result<f64> {
    if seqs.is_empty() {
        return Err(Error::EmptyInput("sequence set"));
    }
    let len = seqs[0].len();
    if seqs.iter().any(|s| s.len() != len) {
        return Err(Error::MismatchedObjects("sequences differ in length".into()));
    }
    let key = |i: usize| match mode {
        HammingMode::Class => classes[i],
        HammingMode::Identity => i,
    };
    if seqs.len() == 1 {
        return Ok(0.0);
    }
    let mut total = 0usize;
    let mut pairs = 0usize;
    for a in 0..seqs.len() {
        for b in (a + 1)..seqs.len() {
            total += seqs[a]
                .iter()
                .zip(&seqs[b])
                .filter(|(&x, &y)| key(x) != key(y))
                .count();
            pairs += 1;
        }
    }
    Ok(total as f64 / pairs as f64)
}

/// Number of member trees of a forest under full enumeration (capped).
pub fn diversity(forest: &SceneForest) -> usize {
    forest.member_count()
}

/// Probability vector over the class vocabulary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoricalDistribution {
    probs: Vec<f64>,
}

impl CategoricalDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Config("probabilities must be finite and non-negative".into()));
        }
        let s: f64 = probs.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("probabilities sum to {s}")));
        }
        Ok(Self { probs })
    }

    pub fn from_counts(counts: &[usize]) -> Result<Self> {
        let total: usize = counts.iter().sum();
        if total == 0 {
            return Err(Error::EmptyInput("class counts"));
        }
        Self::new(counts.iter().map(|&c| c as f64 / total as f64).collect())
    }

    /// Class frequencies over every object of every scene.
    pub fn from_scenes<T: Scalar>(scenes: &[Scene<T>], num_classes: usize) -> Result<Self> {
        Self::from_counts(&crate::ordering::class_frequencies(scenes, num_classes))
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// Additive smoothing applied to the second argument of [`categorical_kl`].
pub const KL_SMOOTHING: f64 = 1e-6;

/// `KL(p || q)` in nats with `q` smoothed by [`KL_SMOOTHING`] and
/// renormalized. Tables conventionally print this times 100.
pub fn categorical_kl(p: &CategoricalDistribution, q: &CategoricalDistribution) -> Result<f64> {
    if p.probs.len() != q.probs.len() {
        return Err(Error::MismatchedObjects(format!(
            "vocabularies of size {} and {}",
            p.probs.len(),
            q.probs.len()
        )));
    }
    let z = 1.0 + KL_SMOOTHING * q.probs.len() as f64;
    Ok(p.probs
        .iter()
        .zip(&q.probs)
        .filter(|(&pk, _)| pk > 0.0)
        .map(|(&pk, &qk)| pk * (pk / ((qk + KL_SMOOTHING) / z)).ln())
        .sum())
}

/// Tolerance for an object's projected box leaving the floor polygon.
pub const OUT_OF_BOUNDS_TOLERANCE: f64 = 0.05;
/// Projected-box IoU above which a pair counts as overlapping.
pub const OVERLAP_IOU: f64 = 0.1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneQuality {
    pub out_of_bounds_rate: f64,
    pub pairwise_overlap_rate: f64,
}

/// Whether an object's projected box leaves the floor by more than the
/// tolerance.
pub fn out_of_bounds<T: Scalar>(scene: &Scene<T>, index: usize) -> bool {
    let tol = T::lit(OUT_OF_BOUNDS_TOLERANCE);
    project_topdown(&scene.objects[index])
        .corners()
        .iter()
        .any(|&c| !point_in_polygon(c, &scene.floor) && distance_to_boundary(c, &scene.floor) > tol)
}

pub fn scene_quality<T: Scalar>(scene: &Scene<T>) -> SceneQuality {
    let n = scene.objects.len();
    if n == 0 {
        return SceneQuality::default();
    }
    let oob = (0..n).filter(|&i| out_of_bounds(scene, i)).count();
    let boxes: Vec<_> = scene.objects.iter().map(project_topdown).collect();
    let mut overlapping = 0usize;
    let mut pairs = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            pairs += 1;
            if iou(&boxes[i], &boxes[j]).as_f64() > OVERLAP_IOU {
                overlapping += 1;
            }
        }
    }
    SceneQuality {
        out_of_bounds_rate: oob as f64 / n as f64,
        pairwise_overlap_rate: if pairs == 0 { 0.0 } else { overlapping as f64 / pairs as f64 },
    }
}

/// Object-weighted and pair-weighted averages of [`scene_quality`] over a
/// set of scenes.
pub fn dataset_quality<T: Scalar>(scenes: &[Scene<T>]) -> SceneQuality {
    let (mut oob, mut objects, mut overlap, mut pairs) = (0.0, 0usize, 0.0, 0usize);
    for s in scenes {
        let q = scene_quality(s);
        let n = s.objects.len();
        let p = n * n.saturating_sub(1) / 2;
        oob += q.out_of_bounds_rate * n as f64;
        overlap += q.pairwise_overlap_rate * p as f64;
        objects += n;
        pairs += p;
    }
    SceneQuality {
        out_of_bounds_rate: if objects == 0 { 0.0 } else { oob / objects as f64 },
        pairwise_overlap_rate: if pairs == 0 { 0.0 } else { overlap / pairs as f64 },
    }
}
