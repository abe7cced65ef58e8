//! Turning unordered object sets into ordered sequences: MEDC clustering,
//! scene trees and forests, and the baseline orderings they are compared
//! against.

mod dbscan;
mod forest;
mod tree;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{build_distance_matrix, DistanceNormalization, DEFAULT_LAMBDA};
use crate::scalar::Scalar;
use crate::scene::Scene;

pub use dbscan::{dbscan, ClusterLabels, NOISE};
pub use forest::{set2tree, tree2forest, ForestMode, SceneForest, MEMBER_CAP};
pub use tree::{linearize, Parent, SceneTree, Traversal};

pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mixes a base seed with a path of integers (scene index, epoch, ...) into
/// an independent seed. SplitMix64 finalizer per component.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut h = base ^ 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        h = splitmix(h ^ splitmix(p.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over a string, used to key per-scene randomness by scene id.
pub fn hash_str(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// The ordering settings compared in the ordering ablation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// One random permutation per scene, reused for every epoch.
    RandomSingle,
    /// Class-frequency order.
    Fixed,
    /// Base tree with outliers under the root, sibling-shuffled BFS.
    TreeBfs,
    /// A fresh uniform permutation on every call.
    RandomMultiple,
    ForestDfs,
    ForestBfs,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::RandomSingle,
        Strategy::Fixed,
        Strategy::TreeBfs,
        Strategy::RandomMultiple,
        Strategy::ForestDfs,
        Strategy::ForestBfs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::RandomSingle => "random-single",
            Strategy::Fixed => "fixed",
            Strategy::TreeBfs => "tree-bfs",
            Strategy::RandomMultiple => "random-multiple",
            Strategy::ForestDfs => "forest-dfs",
            Strategy::ForestBfs => "forest-bfs",
        }
    }

    /// Whether the strategy is derived from a parsed scene tree or forest.
    pub fn uses_tree(self) -> bool {
        matches!(self, Strategy::TreeBfs | Strategy::ForestDfs | Strategy::ForestBfs)
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('_', "-");
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == key)
            .ok_or_else(|| Error::Unknown {
                kind: "ordering strategy",
                value: s.to_string(),
            })
    }
}

/// A permutation of a scene's objects and how it was produced.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderedSequence {
    pub order: Vec<usize>,
    pub strategy: Strategy,
    pub seed: u64,
}

impl OrderedSequence {
    pub fn is_permutation(&self) -> bool {
        let mut seen = vec![false; self.order.len()];
        self.order.iter().all(|&i| i < seen.len() && !std::mem::replace(&mut seen[i], true))
    }
}

/// Scene parsing parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrderingConfig {
    pub lambda: f64,
    pub eps: f64,
    pub min_samples: usize,
    pub normalization: DistanceNormalization,
    pub forest_mode: ForestMode,
}

impl Default for OrderingConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            eps: 0.15,
            min_samples: 2,
            normalization: DistanceNormalization::Diagonal,
            forest_mode: ForestMode::Generalized,
        }
    }
}

/// Result of parsing a scene into clusters and a forest.
#[derive(Clone, Debug)]
pub struct ParsedScene {
    pub labels: ClusterLabels,
    pub forest: SceneForest,
}

/// Distance matrix, DBSCAN, Set2Tree and Tree2Forest in one go.
pub fn parse_scene<T: Scalar>(scene: &Scene<T>, cfg: &OrderingConfig) -> Result<ParsedScene> {
    let m = build_distance_matrix(scene, T::lit(cfg.lambda), cfg.normalization)?;
    let labels = dbscan(&m, T::lit(cfg.eps), cfg.min_samples);
    let (base, outliers) = set2tree(scene, &labels)?;
    let forest = tree2forest(base, outliers, cfg.forest_mode)?;
    Ok(ParsedScene { labels, forest })
}

/// Per-class object counts over a training split.
pub fn class_frequencies<T: Scalar>(scenes: &[Scene<T>], num_classes: usize) -> Vec<usize> {
    let mut counts = vec![0usize; num_classes];
    for o in scenes.iter().flat_map(|s| &s.objects) {
        if o.class_id < num_classes {
            counts[o.class_id] += 1;
        }
    }
    counts
}

/// Descending class frequency, then ascending class id, then ascending
/// distance to the floor centroid (index breaks any remaining tie).
pub fn fixed_order<T: Scalar>(scene: &Scene<T>, frequencies: &[usize]) -> Vec<usize> {
    let centroid = scene.floor_centroid();
    let dist = |i: usize| {
        let [x, z] = scene.objects[i].center_xz();
        (x - centroid[0]).hypot(z - centroid[1])
    };
    let freq = |i: usize| frequencies.get(scene.objects[i].class_id).copied().unwrap_or(0);
    let mut order: Vec<usize> = (0..scene.objects.len()).collect();
    order.sort_by(|&a, &b| {
        freq(b)
            .cmp(&freq(a))
            .then(scene.objects[a].class_id.cmp(&scene.objects[b].class_id))
            .then(dist(a).partial_cmp(&dist(b)).unwrap_or(std::cmp::Ordering::Equal))
            .then(a.cmp(&b))
    });
    order
}

/// Orders a scene whose forest is already known. `frequencies` is required
/// for [`Strategy::Fixed`].
pub fn order_with_forest<T: Scalar>(
    scene: &Scene<T>,
    forest: &SceneForest,
    strategy: Strategy,
    seed: u64,
    frequencies: Option<&[usize]>,
) -> Result<OrderedSequence> {
    if scene.objects.is_empty() {
        return Err(Error::EmptyScene);
    }
    let n = scene.objects.len();
    if forest.base.num_objects() != n {
        return Err(Error::MismatchedObjects(format!(
            "forest over {} objects, scene has {n}",
            forest.base.num_objects()
        )));
    }
    let order = match strategy {
        Strategy::RandomSingle => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng_from_seed(hash_str(&scene.scene_id)));
            order
        }
        Strategy::RandomMultiple => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng_from_seed(seed));
            order
        }
        Strategy::Fixed => {
            let freq = frequencies.ok_or_else(|| Error::Config("fixed ordering needs class frequencies".into()))?;
            fixed_order(scene, freq)
        }
        Strategy::TreeBfs => linearize(&forest.outliers_at_root(), Traversal::Bfs, &mut rng_from_seed(seed)),
        Strategy::ForestBfs | Strategy::ForestDfs => {
            let mut rng = rng_from_seed(seed);
            let tree = forest.sample(&mut rng);
            let traversal = if strategy == Strategy::ForestBfs {
                Traversal::Bfs
            } else {
                Traversal::Dfs
            };
            linearize(&tree, traversal, &mut rng)
        }
    };
    Ok(OrderedSequence { order, strategy, seed })
}

/// Parses the scene (for tree strategies) and orders it.
pub fn make_ordering<T: Scalar>(
    scene: &Scene<T>,
    strategy: Strategy,
    seed: u64,
    cfg: &OrderingConfig,
    frequencies: Option<&[usize]>,
) -> Result<OrderedSequence> {
    if scene.objects.is_empty() {
        return Err(Error::EmptyScene);
    }
    let forest = if strategy.uses_tree() {
        parse_scene(scene, cfg)?.forest
    } else {
        let n = scene.objects.len();
        let mut flat = SceneTree::empty(n);
        for i in 0..n {
            flat.attach(i, Parent::Root)?;
        }
        tree2forest(flat, vec![], cfg.forest_mode)?
    };
    order_with_forest(scene, &forest, strategy, seed, frequencies)
}
