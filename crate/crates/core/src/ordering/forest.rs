use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dbscan::ClusterLabels;
use super::tree::{Parent, SceneTree};
use crate::error::{Error, Result};
use crate::geometry::SceneObject;
use crate::scalar::Scalar;
use crate::scene::Scene;

/// Largest number of member trees materialized by full enumeration.
pub const MEMBER_CAP: usize = 256;

/// How outliers expand a base tree into a forest.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForestMode {
    /// Every outlier independently picks a parent; members are the
    /// Cartesian product of choices and always hold every object. A scene
    /// without outliers has exactly one member, the base tree.
    #[default]
    Generalized,
    /// One outlier per member copy, the others left out; no outliers means
    /// no members. Only enumeration and counting honour this mode, sampling
    /// always uses the generalized form.
    SingleOutlier,
}

/// Groups objects into a base tree: in each cluster the largest object
/// (volume, then footprint area, then lower index) hangs under the virtual
/// root and the rest of the cluster under it. Outliers are returned apart.
pub fn set2tree<T: Scalar>(scene: &Scene<T>, labels: &ClusterLabels) -> Result<(SceneTree, Vec<usize>)> {
    let n = scene.objects.len();
    if labels.labels.len() != n {
        return Err(Error::MismatchedObjects(format!(
            "{} labels for {} objects",
            labels.labels.len(),
            n
        )));
    }
    let mut tree = SceneTree::empty(n);
    for label in 0..labels.num_clusters() {
        let members = labels.members(label);
        let Some(head) = largest(&scene.objects, &members) else {
            continue;
        };
        tree.attach(head, Parent::Root)?;
        for &m in members.iter().filter(|&&m| m != head) {
            tree.attach(m, Parent::Node(head))?;
        }
    }
    Ok((tree, labels.outliers()))
}

fn largest<T: Scalar>(objects: &[SceneObject<T>], members: &[usize]) -> Option<usize> {
    members.iter().copied().reduce(|best, i| {
        let (a, b) = (&objects[best], &objects[i]);
        let bigger = b.volume() > a.volume()
            || (b.volume() == a.volume() && b.footprint_area() > a.footprint_area());
        if bigger {
            i
        } else {
            best
        }
    })
}

/// A base tree plus the admissible parents of each outlier.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SceneForest {
    pub base: SceneTree,
    pub outliers: Vec<usize>,
    /// `parent_choices[k]` lists the cluster heads, then the virtual root,
    /// for `outliers[k]`.
    pub parent_choices: Vec<Vec<Parent>>,
    pub mode: ForestMode,
}

/// Expands a base tree by letting each outlier attach to any cluster head or
/// to the virtual root.
pub fn tree2forest(base: SceneTree, outliers: Vec<usize>, mode: ForestMode) -> Result<SceneForest> {
    for &o in &outliers {
        if base.contains(o) || o >= base.num_objects() {
            return Err(Error::MismatchedObjects(format!("outlier {o} overlaps the base tree")));
        }
    }
    if base.len() + outliers.len() != base.num_objects() {
        return Err(Error::MismatchedObjects("base tree and outliers do not partition the scene".into()));
    }
    let mut choices: Vec<Parent> = base.top_level().iter().map(|&h| Parent::Node(h)).collect();
    choices.push(Parent::Root);
    let parent_choices = vec![choices; outliers.len()];
    Ok(SceneForest {
        base,
        outliers,
        parent_choices,
        mode,
    })
}

impl SceneForest {
    /// Number of member trees under full enumeration, capped at
    /// [`MEMBER_CAP`].
    pub fn member_count(&self) -> usize {
        match self.mode {
            ForestMode::Generalized => self
                .parent_choices
                .iter()
                .try_fold(1usize, |acc, c| acc.checked_mul(c.len()))
                .map_or(MEMBER_CAP, |c| c.min(MEMBER_CAP)),
            ForestMode::SingleOutlier => self.parent_choices.iter().map(Vec::len).sum::<usize>().min(MEMBER_CAP),
        }
    }

    fn tree_with(&self, assignment: &[Parent]) -> SceneTree {
        let mut t = self.base.clone();
        for (&o, &p) in self.outliers.iter().zip(assignment) {
            t.attach(o, p).expect("outlier parents are base members or the root");
        }
        t
    }

    /// Materializes member trees in odometer order (first outlier varies
    /// slowest), stopping at [`MEMBER_CAP`].
    pub fn members(&self) -> Vec<SceneTree> {
        match self.mode {
            ForestMode::SingleOutlier => {
                let mut out = Vec::new();
                for (&o, choices) in self.outliers.iter().zip(&self.parent_choices) {
                    for &p in choices {
                        if out.len() == MEMBER_CAP {
                            return out;
                        }
                        let mut t = self.base.clone();
                        t.attach(o, p).expect("valid parent");
                        out.push(t);
                    }
                }
                out
            }
            ForestMode::Generalized => {
                let mut out = Vec::new();
                let mut digits = vec![0usize; self.outliers.len()];
                loop {
                    let assignment: Vec<Parent> = digits
                        .iter()
                        .zip(&self.parent_choices)
                        .map(|(&d, c)| c[d])
                        .collect();
                    out.push(self.tree_with(&assignment));
                    if out.len() == MEMBER_CAP {
                        return out;
                    }
                    let mut k = digits.len();
                    loop {
                        if k == 0 {
                            return out;
                        }
                        k -= 1;
                        digits[k] += 1;
                        if digits[k] < self.parent_choices[k].len() {
                            break;
                        }
                        digits[k] = 0;
                    }
                }
            }
        }
    }

    /// Draws one complete member tree: each outlier picks a parent uniformly
    /// and independently.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SceneTree {
        let assignment: Vec<Parent> = self
            .parent_choices
            .iter()
            .map(|c| c[rng.gen_range(0..c.len())])
            .collect();
        self.tree_with(&assignment)
    }

    /// The single tree with every outlier under the virtual root.
    pub fn outliers_at_root(&self) -> SceneTree {
        self.tree_with(&vec![Parent::Root; self.outliers.len()])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ordering::rng_from_seed;

    fn obj(size: [f64; 3]) -> SceneObject<f64> {
        SceneObject::new(0, [0.0, 0.0, 0.0], size, 0.0).unwrap()
    }

    fn scene(objects: Vec<SceneObject<f64>>) -> Scene<f64> {
        Scene::new("t", "room", vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]], objects)
    }

    #[test]
    fn largest_object_heads_cluster() {
        // table, sofa, tv stand
        let s = scene(vec![obj([0.8, 0.4, 0.8]), obj([2.0, 0.9, 0.9]), obj([1.2, 0.5, 0.4])]);
        let labels = ClusterLabels { labels: vec![0, 0, 0] };
        let (tree, outliers) = set2tree(&s, &labels).unwrap();
        assert!(outliers.is_empty());
        assert_eq!(tree.top_level(), &[1]);
        assert_eq!(tree.children(Parent::Node(1)), &[0, 2]);
        assert!(tree.is_complete());
    }

    #[test]
    fn equal_volume_tie_breaks_to_lower_index() {
        let s = scene(vec![obj([1.0, 1.0, 1.0]), obj([1.0, 1.0, 1.0])]);
        let (tree, _) = set2tree(&s, &ClusterLabels { labels: vec![0, 0] }).unwrap();
        assert_eq!(tree.top_level(), &[0]);
        // same volume, larger footprint wins
        let s = scene(vec![obj([2.0, 1.0, 1.0]), obj([1.0, 2.0, 1.0])]);
        let (tree, _) = set2tree(&s, &ClusterLabels { labels: vec![0, 0] }).unwrap();
        assert_eq!(tree.top_level(), &[0]);
        let s = scene(vec![obj([1.0, 2.0, 1.0]), obj([2.0, 0.5, 2.0])]);
        let (tree, _) = set2tree(&s, &ClusterLabels { labels: vec![0, 0] }).unwrap();
        assert_eq!(tree.top_level(), &[1]);
    }

    #[test]
    fn only_outliers() {
        let s = scene(vec![obj([1.0; 3]), obj([1.0; 3])]);
        let (tree, outliers) = set2tree(&s, &ClusterLabels { labels: vec![-1, -1] }).unwrap();
        assert!(tree.is_empty());
        assert_eq!(outliers, vec![0, 1]);
        let forest = tree2forest(tree, outliers, ForestMode::Generalized).unwrap();
        assert_eq!(forest.member_count(), 1);
        assert!(forest.members()[0].is_complete());
    }

    fn two_cluster_forest(outliers: usize) -> SceneForest {
        let n = 4 + outliers;
        let mut labels = vec![0, 0, 1, 1];
        labels.extend(std::iter::repeat(-1).take(outliers));
        let s = scene((0..n).map(|_| obj([1.0; 3])).collect());
        let (tree, outl) = set2tree(&s, &ClusterLabels { labels }).unwrap();
        tree2forest(tree, outl, ForestMode::Generalized).unwrap()
    }

    #[test]
    fn forest_sizes() {
        assert_eq!(two_cluster_forest(0).member_count(), 1);
        assert_eq!(two_cluster_forest(0).members().len(), 1);
        let f = two_cluster_forest(1);
        assert_eq!(f.member_count(), 3);
        let members = f.members();
        assert_eq!(members.len(), 3);
        let parents: Vec<_> = members.iter().map(|t| t.parent(4).unwrap()).collect();
        assert_eq!(parents, vec![Parent::Node(0), Parent::Node(2), Parent::Root]);
        let f = two_cluster_forest(2);
        assert_eq!(f.member_count(), 9);
        let members = f.members();
        assert_eq!(members.len(), 9);
        assert!(members.iter().all(|t| t.is_complete() && t.validate().is_ok()));
        let mut maps: Vec<_> = members.iter().map(|t| t.to_parent_map()).collect();
        maps.dedup();
        assert_eq!(maps.len(), 9);
    }

    #[test]
    fn forest_cap() {
        let f = two_cluster_forest(6);
        assert_eq!(f.member_count(), MEMBER_CAP);
        assert_eq!(f.members().len(), MEMBER_CAP);
    }

    #[test]
    fn literal_mode() {
        let mut f = two_cluster_forest(2);
        f.mode = ForestMode::SingleOutlier;
        assert_eq!(f.member_count(), 6);
        let members = f.members();
        assert_eq!(members.len(), 6);
        assert!(members.iter().all(|t| t.len() == 5));
        let mut empty = two_cluster_forest(0);
        empty.mode = ForestMode::SingleOutlier;
        assert_eq!(empty.member_count(), 0);
        assert!(empty.members().is_empty());
    }

    #[test]
    fn sampling_is_uniform_and_seeded() {
        let f = two_cluster_forest(1);
        let mut rng = rng_from_seed(11);
        let mut counts = [0usize; 3];
        for _ in 0..3000 {
            let t = f.sample(&mut rng);
            let k = f.parent_choices[0].iter().position(|&p| Some(p) == t.parent(4)).unwrap();
            counts[k] += 1;
        }
        for c in counts {
            assert!((c as f64 / 3000.0 - 1.0 / 3.0).abs() < 0.03, "{counts:?}");
        }
        let a = f.sample(&mut rng_from_seed(5));
        let b = f.sample(&mut rng_from_seed(5));
        assert_eq!(a, b);
        let none = two_cluster_forest(0);
        assert_eq!(none.sample(&mut rng_from_seed(1)), none.base);
    }

    #[test]
    fn rejects_overlapping_partition() {
        let f = two_cluster_forest(1);
        assert!(tree2forest(f.base.clone(), vec![0], ForestMode::Generalized).is_err());
        assert!(tree2forest(f.base.clone(), vec![], ForestMode::Generalized).is_err());
    }
}
