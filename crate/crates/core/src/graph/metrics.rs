use std::collections::VecDeque;

use rayon::prelude::*;

use super::UndirectedGraph;
use crate::error::{Error, Result};

const UNREACHED: u32 = u32::MAX;

/// Totals of an all-pairs breadth-first search over connected pairs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PathSummary {
    /// Sum of hop distances over connected unordered pairs.
    pub distance_sum: u64,
    /// Number of connected unordered pairs of distinct nodes.
    pub connected_pairs: u64,
    /// Largest finite distance (the diameter over all components).
    pub max_distance: u32,
}

fn bfs(g: &UndirectedGraph, source: usize, dist: &mut [u32], queue: &mut VecDeque<usize>) {
    dist.fill(UNREACHED);
    dist[source] = 0;
    queue.clear();
    queue.push_back(source);
    while let Some(u) = queue.pop_front() {
        let next = dist[u] + 1;
        for &v in g.neighbors(u) {
            if dist[v] == UNREACHED {
                dist[v] = next;
                queue.push_back(v);
            }
        }
    }
}

/// Breadth-first search from every node; sources fan out across threads and
/// are reduced in index order.
pub fn path_summary(g: &UndirectedGraph) -> PathSummary {
    let n = g.node_count();
    let per_source: Vec<(u64, u64, u32)> = (0..n)
        .into_par_iter()
        .map_init(
            || (vec![UNREACHED; n], VecDeque::new()),
            |(dist, queue), s| {
                bfs(g, s, dist, queue);
                let mut sum = 0u64;
                let mut pairs = 0u64;
                let mut max = 0u32;
                // count each unordered pair once, from its smaller endpoint
                for &d in &dist[s + 1..] {
                    if d != UNREACHED {
                        sum += d as u64;
                        pairs += 1;
                        max = max.max(d);
                    }
                }
                (sum, pairs, max)
            },
        )
        .collect();
    per_source.into_iter().fold(
        PathSummary {
            distance_sum: 0,
            connected_pairs: 0,
            max_distance: 0,
        },
        |acc, (sum, pairs, max)| PathSummary {
            distance_sum: acc.distance_sum + sum,
            connected_pairs: acc.connected_pairs + pairs,
            max_distance: acc.max_distance.max(max),
        },
    )
}

/// Mean hop distance over connected unordered pairs; disconnected pairs are
/// left out of both numerator and denominator.
pub fn average_path_length(g: &UndirectedGraph) -> Result<f64> {
    if g.node_count() < 2 {
        return Err(Error::InvalidParameter(
            "average path length needs at least 2 nodes".into(),
        ));
    }
    let s = path_summary(g);
    if s.connected_pairs == 0 {
        return Err(Error::NoConnectedPairs);
    }
    Ok(s.distance_sum as f64 / s.connected_pairs as f64)
}

/// Largest finite shortest-path distance over all components.
pub fn diameter(g: &UndirectedGraph) -> Result<u32> {
    if g.edge_count() == 0 {
        return Err(Error::Edgeless("diameter"));
    }
    Ok(path_summary(g).max_distance)
}

/// Local clustering coefficient of every node; degree < 2 gives 0.
pub fn local_clustering(g: &UndirectedGraph) -> Vec<f64> {
    let n = g.node_count();
    let mut mark = vec![usize::MAX; n];
    (0..n)
        .map(|u| {
            let nbrs = g.neighbors(u);
            let k = nbrs.len();
            if k < 2 {
                return 0.0;
            }
            for &v in nbrs {
                mark[v] = u;
            }
            let mut links = 0usize;
            for &v in nbrs {
                links += g.neighbors(v).iter().filter(|&&w| mark[w] == u).count();
            }
            // each neighbor-neighbor link was seen from both ends
            let triangles = links / 2;
            triangles as f64 / (k * (k - 1) / 2) as f64
        })
        .collect()
}

pub fn average_clustering(g: &UndirectedGraph) -> f64 {
    if g.node_count() == 0 {
        return 0.0;
    }
    local_clustering(g).iter().sum::<f64>() / g.node_count() as f64
}

/// Maximal connected node sets, largest first, ties broken by smallest
/// member. Members are listed in increasing index order.
pub fn connected_components(g: &UndirectedGraph) -> Vec<Vec<usize>> {
    let n = g.node_count();
    let mut seen = vec![false; n];
    let mut comps = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut comp = Vec::new();
        while let Some(u) = queue.pop_front() {
            comp.push(u);
            for &v in g.neighbors(u) {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        comp.sort_unstable();
        comps.push(comp);
    }
    comps.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    comps
}

/// `2E / N`; 0 for the empty graph.
pub fn average_degree(g: &UndirectedGraph) -> f64 {
    if g.node_count() == 0 {
        return 0.0;
    }
    2.0 * g.edge_count() as f64 / g.node_count() as f64
}
