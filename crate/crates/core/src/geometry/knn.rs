use std::cmp::Ordering;

use super::PointCloud;
use crate::error::{Error, Result};
use crate::exec::Exec;

/// Fixed-degree neighbor lists, nearest first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborGraph {
    k: usize,
    indices: Vec<usize>,
}

impl NeighborGraph {
    /// Builds a graph from explicit lists; every list must have `k` entries in `[0, n)`.
    pub fn from_lists(n: usize, k: usize, lists: &[Vec<usize>]) -> Result<Self> {
        if lists.len() != n {
            return Err(Error::invalid(format!("{} neighbor lists for {n} points", lists.len())));
        }
        let mut indices = Vec::with_capacity(n * k);
        for (i, l) in lists.iter().enumerate() {
            if l.len() != k || l.iter().any(|&j| j >= n) {
                return Err(Error::invalid(format!("neighbor list {i} is malformed")));
            }
            indices.extend_from_slice(l);
        }
        Ok(Self { k, indices })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.indices.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.indices[i * self.k..(i + 1) * self.k]
    }
}

pub fn knn(cloud: &PointCloud, k: usize) -> Result<NeighborGraph> {
    knn_with(cloud, k, Exec::Parallel)
}

/// Exact k-nearest-neighbor graph by brute force.
///
/// The query point itself is excluded unless `N <= k`, in which case every
/// other point is listed and the remainder is padded with the query index.
/// Equal distances resolve to the lower index.
pub fn knn_with(cloud: &PointCloud, k: usize, exec: Exec) -> Result<NeighborGraph> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let pts = cloud.points();
    let n = pts.len();
    let lists = exec.map(n, |i| {
        let mut cand: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| ((pts[j] - pts[i]).norm_squared(), j))
            .collect();
        let by_dist =
            |a: &(f64, usize), b: &(f64, usize)| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1));
        if cand.len() > k {
            cand.select_nth_unstable_by(k, by_dist);
            cand.truncate(k);
        }
        cand.sort_by(by_dist);
        let mut list: Vec<usize> = cand.into_iter().map(|(_, j)| j).collect();
        list.resize(k, i);
        list
    });
    Ok(NeighborGraph {
        k,
        indices: lists.into_iter().flatten().collect(),
    })
}
