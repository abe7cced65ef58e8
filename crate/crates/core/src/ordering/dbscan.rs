use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::geometry::DistanceMatrix;
use crate::scalar::Scalar;

pub const NOISE: i32 = -1;

/// Per-object cluster assignment; `-1` marks an outlier.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterLabels {
    pub labels: Vec<i32>,
}

impl ClusterLabels {
    pub fn num_clusters(&self) -> usize {
        self.labels.iter().copied().max().map_or(0, |m| (m + 1).max(0) as usize)
    }

    pub fn outliers(&self) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == NOISE)
            .map(|(i, _)| i)
            .collect()
    }

    /// Members of cluster `label` in ascending index order.
    pub fn members(&self, label: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == label as i32)
            .map(|(i, _)| i)
            .collect()
    }
}

/// DBSCAN over a precomputed distance matrix.
///
/// A point is core when at least `min_samples` points (itself included) lie
/// within `eps`. Points are visited in ascending index order and a border
/// point keeps the first cluster that reaches it, so labels are fully
/// deterministic.
pub fn dbscan<T: Scalar>(m: &DistanceMatrix<T>, eps: T, min_samples: usize) -> ClusterLabels {
    let n = m.len();
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| m.get(i, j) <= eps).collect())
        .collect();
    let is_core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= min_samples.max(1)).collect();

    let mut labels = vec![NOISE; n];
    let mut visited = vec![false; n];
    let mut next = 0i32;
    for start in 0..n {
        if visited[start] || !is_core[start] {
            continue;
        }
        let cluster = next;
        next += 1;
        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        labels[start] = cluster;
        while let Some(p) = queue.pop_front() {
            if !is_core[p] {
                continue;
            }
            for &q in &neighbors[p] {
                if labels[q] == NOISE {
                    labels[q] = cluster;
                }
                if !visited[q] && is_core[q] {
                    visited[q] = true;
                    queue.push_back(q);
                }
            }
        }
    }
    ClusterLabels { labels }
}
