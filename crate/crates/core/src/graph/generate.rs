use super::UndirectedGraph;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Watts-Strogatz small-world graph.
///
/// Starts from the ring lattice joining every node to its `k / 2` nearest
/// neighbors on each side, then visits lattice edges `(u, u + j)` for
/// `j = 1..=k/2` and `u = 0..n` and, with probability `p`, moves the far
/// endpoint to a uniformly drawn node that is neither `u` nor already
/// adjacent to it. Rewiring is skipped when `u` is adjacent to every other
/// node. The edge count stays `n * k / 2`.
pub fn generate_ws(n: usize, k: usize, p: f64, seed: u64) -> Result<UndirectedGraph> {
    if k < 2 || !k.is_multiple_of(2) || n <= k {
        return Err(Error::InvalidParameter(format!(
            "Watts-Strogatz needs n > k >= 2 with k even (got n={n}, k={k})"
        )));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!(
            "rewiring probability {p} outside [0, 1]"
        )));
    }
    let mut adj: Vec<std::collections::BTreeSet<usize>> = vec![Default::default(); n];
    for j in 1..=k / 2 {
        for u in 0..n {
            let v = (u + j) % n;
            adj[u].insert(v);
            adj[v].insert(u);
        }
    }
    let mut rng = Rng::new(seed);
    for j in 1..=k / 2 {
        for u in 0..n {
            let v = (u + j) % n;
            if rng.uniform() >= p || !adj[u].contains(&v) {
                continue;
            }
            if adj[u].len() >= n - 1 {
                continue;
            }
            let w = loop {
                let w = rng.below(n);
                if w != u && !adj[u].contains(&w) {
                    break w;
                }
            };
            adj[u].remove(&v);
            adj[v].remove(&u);
            adj[u].insert(w);
            adj[w].insert(u);
        }
    }
    let pairs = adj
        .iter()
        .enumerate()
        .flat_map(|(u, set)| set.iter().filter(move |&&v| u < v).map(move |&v| (u, v)));
    UndirectedGraph::from_edges(n, pairs.collect::<Vec<_>>())
}
