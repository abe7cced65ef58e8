use std::collections::{BTreeMap, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where a node hangs in a scene tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Parent {
    /// The virtual room node, which carries no object.
    Root,
    Node(usize),
}

impl Parent {
    /// `-1` for the virtual root, the object index otherwise.
    pub fn to_index(self) -> i64 {
        match self {
            Parent::Root => -1,
            Parent::Node(i) => i as i64,
        }
    }

    pub fn from_index(i: i64) -> Option<Self> {
        match i {
            -1 => Some(Parent::Root),
            i if i >= 0 => Some(Parent::Node(i as usize)),
            _ => None,
        }
    }
}

/// Breadth-first (level order) or depth-first (preorder) flattening.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Traversal {
    Bfs,
    Dfs,
}

impl std::str::FromStr for Traversal {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bfs" => Ok(Self::Bfs),
            "dfs" => Ok(Self::Dfs),
            other => Err(Error::Unknown {
                kind: "traversal",
                value: other.to_string(),
            }),
        }
    }
}

/// Virtual-rooted hierarchy over a subset of a scene's object indices.
///
/// Child lists keep insertion order; linearization shuffles them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SceneTree {
    parent: Vec<Option<Parent>>,
    children: Vec<Vec<usize>>,
    root_children: Vec<usize>,
}

impl SceneTree {
    /// A tree over a scene with `num_objects` objects that holds none of them.
    pub fn empty(num_objects: usize) -> Self {
        Self {
            parent: vec![None; num_objects],
            children: vec![Vec::new(); num_objects],
            root_children: Vec::new(),
        }
    }

    pub fn num_objects(&self) -> usize {
        self.parent.len()
    }

    /// Number of objects placed in the tree.
    pub fn len(&self) -> usize {
        self.parent.iter().filter(|p| p.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.root_children.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.parent.iter().all(Option::is_some)
    }

    pub fn contains(&self, i: usize) -> bool {
        self.parent.get(i).is_some_and(Option::is_some)
    }

    pub fn parent(&self, i: usize) -> Option<Parent> {
        self.parent.get(i).copied().flatten()
    }

    pub fn children(&self, p: Parent) -> &[usize] {
        match p {
            Parent::Root => &self.root_children,
            Parent::Node(i) => &self.children[i],
        }
    }

    /// Depth-1 nodes (cluster heads and root-level outliers).
    pub fn top_level(&self) -> &[usize] {
        &self.root_children
    }

    pub fn members(&self) -> Vec<usize> {
        (0..self.num_objects()).filter(|&i| self.contains(i)).collect()
    }

    /// Hangs object `child` under `parent`. The parent must already be in
    /// the tree and the child must not be.
    pub fn attach(&mut self, child: usize, parent: Parent) -> Result<()> {
        let n = self.num_objects();
        if child >= n {
            return Err(Error::MismatchedObjects(format!("object {child} out of range {n}")));
        }
        if self.contains(child) {
            return Err(Error::MismatchedObjects(format!("object {child} already placed")));
        }
        match parent {
            Parent::Root => self.root_children.push(child),
            Parent::Node(p) => {
                if !self.contains(p) {
                    return Err(Error::MismatchedObjects(format!("parent {p} of {child} is not in the tree")));
                }
                self.children[p].push(child);
            }
        }
        self.parent[child] = Some(parent);
        Ok(())
    }

    /// Depth of a member (root children have depth 1).
    pub fn depth(&self, i: usize) -> Option<usize> {
        let mut d = 0;
        let mut cur = self.parent(i)?;
        d += 1;
        while let Parent::Node(p) = cur {
            d += 1;
            cur = self.parent(p)?;
            if d > self.num_objects() {
                return None;
            }
        }
        Some(d)
    }

    pub fn max_depth(&self) -> usize {
        self.members().into_iter().filter_map(|i| self.depth(i)).max().unwrap_or(0)
    }

    /// `-1` for root children, the parent index otherwise, keyed by member.
    pub fn to_parent_map(&self) -> BTreeMap<usize, i64> {
        self.members()
            .into_iter()
            .map(|i| (i, self.parent(i).expect("member").to_index()))
            .collect()
    }

    /// Rebuilds a tree from a parent map. Children are attached in ascending
    /// index order; cycles and dangling parents are rejected.
    pub fn from_parent_map(num_objects: usize, map: &BTreeMap<usize, i64>) -> Result<Self> {
        let mut pending: Vec<(usize, Parent)> = Vec::with_capacity(map.len());
        for (&child, &p) in map {
            let parent = Parent::from_index(p)
                .ok_or_else(|| Error::MismatchedObjects(format!("invalid parent {p} for {child}")))?;
            if let Parent::Node(q) = parent {
                if q >= num_objects || !map.contains_key(&q) {
                    return Err(Error::MismatchedObjects(format!("parent {q} of {child} is not a member")));
                }
            }
            pending.push((child, parent));
        }
        let mut tree = Self::empty(num_objects);
        while !pending.is_empty() {
            let before = pending.len();
            let mut rest = Vec::new();
            for (child, parent) in pending {
                let ready = match parent {
                    Parent::Root => true,
                    Parent::Node(q) => tree.contains(q),
                };
                if ready {
                    tree.attach(child, parent)?;
                } else {
                    rest.push((child, parent));
                }
            }
            if rest.len() == before {
                return Err(Error::MismatchedObjects("parent map contains a cycle".into()));
            }
            pending = rest;
        }
        Ok(tree)
    }

    /// Checks structural invariants: single virtual root, each member
    /// reachable exactly once, parents strictly shallower than children.
    pub fn validate(&self) -> Result<()> {
        let mut seen = vec![false; self.num_objects()];
        let mut queue: VecDeque<(usize, usize)> = self.root_children.iter().map(|&c| (c, 1)).collect();
        while let Some((v, d)) = queue.pop_front() {
            if seen[v] {
                return Err(Error::MismatchedObjects(format!("object {v} reached twice")));
            }
            seen[v] = true;
            if self.depth(v) != Some(d) {
                return Err(Error::MismatchedObjects(format!("object {v} has inconsistent depth")));
            }
            for &c in &self.children[v] {
                if self.parent(c) != Some(Parent::Node(v)) {
                    return Err(Error::MismatchedObjects(format!("child list of {v} disagrees with parent of {c}")));
                }
                queue.push_back((c, d + 1));
            }
        }
        for (i, reached) in seen.iter().enumerate() {
            if *reached != self.contains(i) {
                return Err(Error::MismatchedObjects(format!("object {i} is detached from the root")));
            }
        }
        Ok(())
    }

    /// Shuffles every sibling list. The root list is shuffled first, then
    /// object nodes in ascending index order, so the outcome depends only on
    /// the RNG state.
    pub fn shuffle_siblings<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.root_children.shuffle(rng);
        for list in &mut self.children {
            list.shuffle(rng);
        }
    }

    /// Flattens the tree; the virtual root emits nothing.
    pub fn traverse(&self, traversal: Traversal) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.len());
        match traversal {
            Traversal::Bfs => {
                let mut queue: VecDeque<usize> = self.root_children.iter().copied().collect();
                while let Some(v) = queue.pop_front() {
                    out.push(v);
                    queue.extend(self.children[v].iter().copied());
                }
            }
            Traversal::Dfs => {
                let mut stack: Vec<usize> = self.root_children.iter().rev().copied().collect();
                while let Some(v) = stack.pop() {
                    out.push(v);
                    stack.extend(self.children[v].iter().rev().copied());
                }
            }
        }
        out
    }

    /// Graphviz rendering; `labels[i]` names object `i`.
    pub fn to_dot(&self, labels: &[String]) -> String {
        let mut s = String::from("digraph scene {\n  root [label=\"room\", shape=box];\n");
        for i in self.members() {
            let name = labels.get(i).map_or("?", String::as_str);
            s.push_str(&format!("  n{i} [label=\"{i}: {name}\"];\n"));
        }
        for i in self.members() {
            match self.parent(i).expect("member") {
                Parent::Root => s.push_str(&format!("  root -> n{i};\n")),
                Parent::Node(p) => s.push_str(&format!("  n{p} -> n{i};\n")),
            }
        }
        s.push_str("}\n");
        s
    }
}

/// Shuffles siblings with `rng` and flattens a copy of the tree.
pub fn linearize<R: Rng + ?Sized>(tree: &SceneTree, traversal: Traversal, rng: &mut R) -> Vec<usize> {
    let mut t = tree.clone();
    t.shuffle_siblings(rng);
    t.traverse(traversal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ordering::rng_from_seed;

    // root -> {A=0 -> {1, 2}, B=3 -> {4}}
    fn sample_tree() -> SceneTree {
        let mut t = SceneTree::empty(5);
        t.attach(0, Parent::Root).unwrap();
        t.attach(3, Parent::Root).unwrap();
        t.attach(1, Parent::Node(0)).unwrap();
        t.attach(2, Parent::Node(0)).unwrap();
        t.attach(4, Parent::Node(3)).unwrap();
        t
    }

    #[test]
    fn traversals_unshuffled() {
        let t = sample_tree();
        assert_eq!(t.traverse(Traversal::Bfs), vec![0, 3, 1, 2, 4]);
        assert_eq!(t.traverse(Traversal::Dfs), vec![0, 1, 2, 3, 4]);
        t.validate().unwrap();
        assert_eq!(t.depth(4), Some(2));
        assert_eq!(t.max_depth(), 2);
    }

    #[test]
    fn shuffled_bfs_keeps_heads_first() {
        let t = sample_tree();
        for seed in 0..50 {
            let bfs = linearize(&t, Traversal::Bfs, &mut rng_from_seed(seed));
            let mut heads = bfs[..2].to_vec();
            heads.sort();
            assert_eq!(heads, vec![0, 3]);
            let dfs = linearize(&t, Traversal::Dfs, &mut rng_from_seed(seed));
            let a = dfs.iter().position(|&x| x == 0).unwrap();
            assert!(dfs[a + 1..a + 3].contains(&1) && dfs[a + 1..a + 3].contains(&2), "{dfs:?}");
        }
    }

    #[test]
    fn single_node() {
        let mut t = SceneTree::empty(1);
        t.attach(0, Parent::Root).unwrap();
        assert_eq!(linearize(&t, Traversal::Bfs, &mut rng_from_seed(3)), vec![0]);
    }

    #[test]
    fn attach_errors() {
        let mut t = SceneTree::empty(3);
        assert!(t.attach(1, Parent::Node(0)).is_err());
        t.attach(0, Parent::Root).unwrap();
        assert!(t.attach(0, Parent::Root).is_err());
        assert!(t.attach(7, Parent::Root).is_err());
    }

    #[test]
    fn parent_map_round_trip() {
        let t = sample_tree();
        let map = t.to_parent_map();
        assert_eq!(map[&1], 0);
        assert_eq!(map[&3], -1);
        let back = SceneTree::from_parent_map(5, &map).unwrap();
        assert_eq!(back.to_parent_map(), map);
        let mut cyc = BTreeMap::new();
        cyc.insert(0, 1);
        cyc.insert(1, 0);
        assert!(SceneTree::from_parent_map(2, &cyc).is_err());
    }

    #[test]
    fn dot_output_mentions_edges() {
        let t = sample_tree();
        let labels: Vec<String> = ["sofa", "table", "tv", "bed", "lamp"].iter().map(|s| s.to_string()).collect();
        let dot = t.to_dot(&labels);
        assert!(dot.contains("n0 -> n1;"));
        assert!(dot.contains("root -> n3;"));
        assert!(dot.contains("4: lamp"));
    }
}
