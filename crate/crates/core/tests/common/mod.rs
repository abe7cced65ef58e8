#![allow(dead_code)]

use rand::Rng;
use sceneseq::data::{generate_grammar_dataset, GrammarSpec, SceneDocument};
use sceneseq::geometry::SceneObject;
use sceneseq::ordering::{Parent, SceneTree, Traversal};
use sceneseq::{Box2D, Scene};

/// GIoU from cell counts on a `grid x grid` raster of the enclosing box.
pub fn raster_giou(a: &Box2D, b: &Box2D, grid: usize) -> f64 {
    let x0 = a.min[0].min(b.min[0]);
    let z0 = a.min[1].min(b.min[1]);
    let x1 = a.max[0].max(b.max[0]);
    let z1 = a.max[1].max(b.max[1]);
    let (dx, dz) = ((x1 - x0) / grid as f64, (z1 - z0) / grid as f64);
    let inside = |bx: &Box2D, x: f64, z: f64| x >= bx.min[0] && x < bx.max[0] && z >= bx.min[1] && z < bx.max[1];
    let (mut inter, mut union) = (0usize, 0usize);
    for i in 0..grid {
        let x = x0 + (i as f64 + 0.5) * dx;
        for j in 0..grid {
            let z = z0 + (j as f64 + 0.5) * dz;
            let (ia, ib) = (inside(a, x, z), inside(b, x, z));
            inter += (ia && ib) as usize;
            union += (ia || ib) as usize;
        }
    }
    let hull = (grid * grid) as f64;
    let iou = if union == 0 { 0.0 } else { inter as f64 / union as f64 };
    iou - (hull - union as f64) / hull
}

pub fn random_box<R: Rng>(rng: &mut R) -> Box2D {
    let c = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
    let h = [rng.gen_range(0.05..1.5), rng.gen_range(0.05..1.5)];
    Box2D::new([c[0] - h[0], c[1] - h[1]], [c[0] + h[0], c[1] + h[1]])
}

/// Density-reachability by transitive closure, written independently of
/// the queue-based implementation. Clusters are numbered by their lowest
/// core point and a border point joins the lowest-numbered cluster that
/// holds a core neighbor.
pub fn dbscan_oracle(d: &[Vec<f64>], eps: f64, min_samples: usize) -> Vec<i32> {
    let n = d.len();
    let near = |i: usize, j: usize| d[i][j] <= eps;
    let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| near(i, j)).count() >= min_samples).collect();
    let mut reach = vec![vec![false; n]; n];
    for i in 0..n {
        for j in 0..n {
            reach[i][j] = core[i] && core[j] && near(i, j);
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if reach[i][k] && reach[k][j] {
                    reach[i][j] = true;
                }
            }
        }
    }
    let mut cluster_of = vec![-1i32; n];
    let mut next = 0;
    for i in 0..n {
        if core[i] && cluster_of[i] < 0 {
            for j in 0..n {
                if reach[i][j] {
                    cluster_of[j] = next;
                }
            }
            next += 1;
        }
    }
    (0..n)
        .map(|i| {
            if core[i] {
                cluster_of[i]
            } else {
                (0..n)
                    .filter(|&j| core[j] && near(i, j))
                    .map(|j| cluster_of[j])
                    .min()
                    .unwrap_or(-1)
            }
        })
        .collect()
}

/// Whether two labelings induce the same partition with the same noise set.
pub fn same_partition(a: &[i32], b: &[i32]) -> bool {
    a.len() == b.len()
        && (0..a.len()).all(|i| {
            (a[i] < 0) == (b[i] < 0) && (0..a.len()).all(|j| a[i] < 0 || (a[i] == a[j]) == (b[i] == b[j]))
        })
}

/// Random tree over `n` objects: each node hangs under the root or an
/// earlier node, then indices are permuted.
pub fn random_tree<R: Rng>(n: usize, max_depth: usize, rng: &mut R) -> SceneTree {
    let mut perm: Vec<usize> = (0..n).collect();
    rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), rng);
    let mut t = SceneTree::empty(n);
    let mut placed: Vec<usize> = Vec::new();
    for &v in &perm {
        let candidates: Vec<usize> = placed.iter().copied().filter(|&p| t.depth(p).unwrap() < max_depth).collect();
        let parent = if candidates.is_empty() || rng.gen_bool(0.4) {
            Parent::Root
        } else {
            Parent::Node(candidates[rng.gen_range(0..candidates.len())])
        };
        t.attach(v, parent).unwrap();
        placed.push(v);
    }
    t
}

/// Every violated ordering invariant of `seq` against `tree`.
pub fn sequence_violations(tree: &SceneTree, seq: &[usize], traversal: Traversal) -> Vec<String> {
    let mut out = Vec::new();
    let mut members = tree.members();
    let mut sorted = seq.to_vec();
    sorted.sort_unstable();
    members.sort_unstable();
    if sorted != members {
        out.push(format!("{seq:?} is not a permutation of {members:?}"));
        return out;
    }
    let mut pos = vec![usize::MAX; tree.num_objects()];
    for (k, &v) in seq.iter().enumerate() {
        pos[v] = k;
    }
    for &v in seq {
        if let Some(Parent::Node(p)) = tree.parent(v) {
            if pos[p] > pos[v] {
                out.push(format!("{p} after its child {v} in {seq:?}"));
            }
        }
    }
    if traversal == Traversal::Bfs {
        let depths: Vec<usize> = seq.iter().map(|&v| tree.depth(v).unwrap()).collect();
        if depths.windows(2).any(|w| w[0] > w[1]) {
            out.push(format!("depths {depths:?} not monotone"));
        }
    }
    if traversal == Traversal::Dfs {
        // each subtree occupies a contiguous block
        for &v in seq {
            let mut size = 0;
            let mut stack = vec![v];
            while let Some(u) = stack.pop() {
                size += 1;
                stack.extend(tree.children(Parent::Node(u)));
            }
            let block = &seq[pos[v]..pos[v] + size];
            if !block.iter().all(|&u| is_descendant(tree, u, v)) {
                out.push(format!("subtree of {v} not contiguous in {seq:?}"));
            }
        }
    }
    out
}

fn is_descendant(tree: &SceneTree, mut u: usize, v: usize) -> bool {
    loop {
        if u == v {
            return true;
        }
        match tree.parent(u) {
            Some(Parent::Node(p)) => u = p,
            _ => return false,
        }
    }
}

pub fn grammar_documents(count: usize, seed: u64) -> (GrammarSpec, Vec<SceneDocument>) {
    let spec = GrammarSpec {
        seed,
        ..GrammarSpec::default()
    };
    let docs = generate_grammar_dataset(&spec, count).unwrap();
    (spec, docs)
}

pub fn grammar_scenes(count: usize, seed: u64) -> (Vec<String>, Vec<SceneDocument>, Vec<Scene>) {
    let (spec, docs) = grammar_documents(count, seed);
    let vocab = spec.vocab();
    let scenes = docs.iter().map(|d| d.to_scene(&vocab).unwrap()).collect();
    (vocab, docs, scenes)
}

pub fn object(class_id: usize, x: f64, z: f64, w: f64, d: f64, r: f64) -> SceneObject<f64> {
    SceneObject::new(class_id, [x, 0.4, z], [w, 0.8, d], r).unwrap()
}

pub fn square_floor(half: f64) -> Vec<[f64; 2]> {
    vec![[-half, -half], [half, -half], [half, half], [-half, half]]
}

/// A network small enough for finite differences and second-long training.
pub fn tiny_config() -> sceneseq::model::ModelConfig {
    sceneseq::model::ModelConfig {
        decoder_layers: 1,
        decoder_heads: 2,
        hidden: 16,
        ff_mult: 2,
        layout_resolution: 16,
        layout_patch: 4,
        layout_layers: 1,
        layout_heads: 2,
        layout_dim: 16,
        class_dim: 8,
        encoding_frequencies: 4,
        geometry_hidden: 16,
        mixture_components: 3,
        dropout: 0.0,
        mask_rate: 0.0,
        noise_rate: 0.0,
        ..sceneseq::model::ModelConfig::default()
    }
}

/// Logistic mixture bin masses from the CDF directly.
pub fn mixture_bins_oracle(row: &[f64], bins: usize) -> Vec<f64> {
    let k = row.len() / 3;
    let zmax = row[..k].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row[..k].iter().map(|w| (w - zmax).exp()).collect();
    let z: f64 = e.iter().sum();
    let cdf = |x: f64, mu: f64, s: f64| 1.0 / (1.0 + (-(x - mu) / s).exp());
    (0..bins)
        .map(|b| {
            let lo = -1.0 + 2.0 * b as f64 / bins as f64;
            let hi = lo + 2.0 / bins as f64;
            (0..k)
                .map(|j| {
                    let (mu, s) = (row[k + j], 1e-3 + row[2 * k + j].exp());
                    let upper = if b + 1 == bins { 1.0 } else { cdf(hi, mu, s) };
                    let lower = if b == 0 { 0.0 } else { cdf(lo, mu, s) };
                    e[j] / z * (upper - lower)
                })
                .sum()
        })
        .collect()
}
