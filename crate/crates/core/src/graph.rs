//! Neighbor graphs and heat-kernel weights.

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Undirected graph without self loops, stored as sorted adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborGraph {
    adjacency: Vec<Vec<usize>>,
}

pub fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl NeighborGraph {
    /// Builds a graph from arbitrary pairs; self loops are dropped and
    /// duplicates merged.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); n];
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidParameter(format!(
                    "edge ({i},{j}) out of range for n={n}"
                )));
            }
            if i != j {
                adjacency[i].push(j);
                adjacency[j].push(i);
            }
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        Ok(NeighborGraph { adjacency })
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    /// Edges as `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, list)| list.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
            .collect()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i].binary_search(&j).is_ok()
    }

    pub fn component_count(&self) -> usize {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut count = 0;
        let mut stack = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(v) = stack.pop() {
                for &w in &self.adjacency[v] {
                    if !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
        }
        count
    }

    fn warn_if_disconnected(&self) {
        let c = self.component_count();
        if c > 1 {
            log::warn!("neighbor graph has {c} connected components");
        }
    }
}

/// Indices of the `k` points nearest to `query` (ascending distance, ties by
/// index), skipping `exclude`.
pub fn nearest(
    points: &ArrayView2<f64>,
    query: ArrayView1<f64>,
    k: usize,
    exclude: Option<usize>,
) -> Vec<(usize, f64)> {
    let mut d: Vec<(usize, f64)> = points
        .rows()
        .into_iter()
        .enumerate()
        .filter(|(j, _)| Some(*j) != exclude)
        .map(|(j, row)| (j, sq_dist(query, row)))
        .collect();
    let by_dist = |a: &(usize, f64), b: &(usize, f64)| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0));
    if k < d.len() {
        d.select_nth_unstable_by(k, by_dist);
        d.truncate(k);
    }
    d.sort_by(by_dist);
    d
}

/// Union-symmetrized k-nearest-neighbor graph.
pub fn knn_graph(points: &ArrayView2<f64>, k: usize) -> Result<NeighborGraph> {
    let n = points.nrows();
    if k == 0 || k >= n {
        return Err(Error::InvalidParameter(format!(
            "knn needs 1 <= k < n, got k={k}, n={n}"
        )));
    }
    let edges: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| {
            nearest(points, points.row(i), k, Some(i))
                .into_iter()
                .map(move |(j, _)| (i, j))
        })
        .collect();
    let g = NeighborGraph::from_edges(n, edges)?;
    g.warn_if_disconnected();
    Ok(g)
}

/// Graph joining every pair at Euclidean distance `<= tau`.
pub fn ball_graph(points: &ArrayView2<f64>, tau: f64) -> Result<NeighborGraph> {
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tau must be positive, got {tau}"
        )));
    }
    let n = points.nrows();
    let tau2 = tau * tau;
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if sq_dist(points.row(i), points.row(j)) <= tau2 {
                edges.push((i, j));
            }
        }
    }
    let g = NeighborGraph::from_edges(n, edges)?;
    g.warn_if_disconnected();
    Ok(g)
}

/// Heat-kernel weights `exp(-dist²/t)` on the edges of `g`, ones on the
/// diagonal, zeros elsewhere.
pub fn weight_matrix(points: &ArrayView2<f64>, g: &NeighborGraph, t: f64) -> Result<Array2<f64>> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "temperature must be positive, got {t}"
        )));
    }
    let n = points.nrows();
    if g.len() != n {
        return Err(Error::Shape(format!(
            "graph has {} vertices, {n} points given",
            g.len()
        )));
    }
    let mut w = Array2::eye(n);
    for (i, j) in g.edges() {
        let v = (-sq_dist(points.row(i), points.row(j)) / t).exp();
        w[[i, j]] = v;
        w[[j, i]] = v;
    }
    Ok(w)
}
