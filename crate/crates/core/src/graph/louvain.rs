//! Seeded Louvain community detection.
//!
//! Local moving visits nodes in a seeded random order and repeats passes
//! until a pass gains less than [`MIN_GAIN`] modularity; communities are then
//! collapsed into weighted super-nodes and the process repeats until a new
//! level stops improving.

use super::UndirectedGraph;
use crate::error::{Error, Result};
use crate::rng::Rng;

const MIN_GAIN: f64 = 1e-7;

/// Community label per node, numbered densely in order of first appearance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    labels: Vec<usize>,
}

impl Partition {
    pub fn from_labels(labels: &[usize]) -> Self {
        Self {
            labels: renumber(labels),
        }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn community_count(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    /// Members of each community, in label order.
    pub fn communities(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.community_count()];
        for (node, &c) in self.labels.iter().enumerate() {
            out[c].push(node);
        }
        out
    }
}

fn renumber(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|&c| {
            let next = map.len();
            *map.entry(c).or_insert(next)
        })
        .collect()
}

/// Newman modularity of an arbitrary labelling of `g` (unweighted).
pub fn modularity_of(g: &UndirectedGraph, labels: &[usize]) -> f64 {
    let m = g.edge_count() as f64;
    if m == 0.0 {
        return 0.0;
    }
    let k = labels.iter().max().map_or(0, |x| x + 1);
    let mut internal = vec![0.0; k];
    let mut total = vec![0.0; k];
    for &(a, b) in g.edges() {
        if labels[a] == labels[b] {
            internal[labels[a]] += 1.0;
        }
    }
    for (node, &c) in labels.iter().enumerate() {
        total[c] += g.degree(node) as f64;
    }
    internal
        .iter()
        .zip(&total)
        .map(|(l, d)| l / m - (d / (2.0 * m)).powi(2))
        .sum()
}

/// Louvain modularity: the best partition found and its modularity `Q`.
/// Deterministic for a fixed seed.
pub fn modularity(g: &UndirectedGraph, seed: u64) -> Result<(f64, Partition)> {
    if g.edge_count() == 0 {
        return Err(Error::Edgeless("modularity"));
    }
    let mut rng = Rng::new(seed);
    let m = g.edge_count() as f64;
    let mut level = Level::from_graph(g);
    let mut membership: Vec<usize> = (0..g.node_count()).collect();

    let comm = level.local_moving(m, &mut rng);
    let mut best_q = level.quality(&comm, m);
    let comm = renumber(&comm);
    for c in membership.iter_mut() {
        *c = comm[*c];
    }
    level = level.aggregate(&comm);

    loop {
        let comm = level.local_moving(m, &mut rng);
        let q = level.quality(&comm, m);
        if q - best_q < MIN_GAIN {
            break;
        }
        best_q = q;
        let comm = renumber(&comm);
        for c in membership.iter_mut() {
            *c = comm[*c];
        }
        level = level.aggregate(&comm);
    }

    let partition = Partition::from_labels(&membership);
    Ok((modularity_of(g, partition.labels()), partition))
}

struct Level {
    adjacency: Vec<Vec<(usize, f64)>>,
    self_weight: Vec<f64>,
    degree: Vec<f64>,
}

impl Level {
    fn from_graph(g: &UndirectedGraph) -> Self {
        let n = g.node_count();
        let adjacency = (0..n)
            .map(|u| g.neighbors(u).iter().map(|&v| (v, 1.0)).collect())
            .collect();
        Self {
            adjacency,
            self_weight: vec![0.0; n],
            degree: (0..n).map(|u| g.degree(u) as f64).collect(),
        }
    }

    fn len(&self) -> usize {
        self.degree.len()
    }

    fn quality(&self, comm: &[usize], m: f64) -> f64 {
        let n = self.len();
        let mut internal = vec![0.0; n];
        let mut total = vec![0.0; n];
        for u in 0..n {
            let c = comm[u];
            internal[c] += self.self_weight[u];
            total[c] += self.degree[u];
            for &(v, w) in &self.adjacency[u] {
                if u < v && comm[v] == c {
                    internal[c] += w;
                }
            }
        }
        internal
            .iter()
            .zip(&total)
            .map(|(l, d)| l / m - (d / (2.0 * m)).powi(2))
            .sum()
    }

    fn local_moving(&self, m: f64, rng: &mut Rng) -> Vec<usize> {
        let n = self.len();
        let mut comm: Vec<usize> = (0..n).collect();
        let mut total = self.degree.clone();
        let mut link = vec![0.0f64; n];
        let mut touched: Vec<usize> = Vec::new();
        let mut is_touched = vec![false; n];
        let mut current = self.quality(&comm, m);
        loop {
            let mut moved = false;
            for &u in &rng.permutation(n) {
                let home = comm[u];
                let k = self.degree[u];
                for &(v, w) in &self.adjacency[u] {
                    let c = comm[v];
                    if !is_touched[c] {
                        is_touched[c] = true;
                        touched.push(c);
                    }
                    link[c] += w;
                }
                total[home] -= k;
                let scale = k / (2.0 * m);
                let mut best = home;
                let mut best_gain = link[home] - total[home] * scale;
                for &c in &touched {
                    let gain = link[c] - total[c] * scale;
                    if gain > best_gain {
                        best = c;
                        best_gain = gain;
                    }
                }
                total[best] += k;
                comm[u] = best;
                moved |= best != home;
                for &c in &touched {
                    link[c] = 0.0;
                    is_touched[c] = false;
                }
                touched.clear();
            }
            let q = self.quality(&comm, m);
            if !moved || q - current < MIN_GAIN {
                break;
            }
            current = q;
        }
        comm
    }

    /// Collapse communities (labels already dense) into super-nodes.
    fn aggregate(&self, comm: &[usize]) -> Self {
        let k = comm.iter().max().map_or(0, |x| x + 1);
        let mut self_weight = vec![0.0; k];
        let mut degree = vec![0.0; k];
        let mut weights: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); k];
        for u in 0..self.len() {
            let cu = comm[u];
            self_weight[cu] += self.self_weight[u];
            degree[cu] += self.degree[u];
            for &(v, w) in &self.adjacency[u] {
                if u < v {
                    let cv = comm[v];
                    if cu == cv {
                        self_weight[cu] += w;
                    } else {
                        *weights[cu].entry(cv).or_default() += w;
                        *weights[cv].entry(cu).or_default() += w;
                    }
                }
            }
        }
        Self {
            adjacency: weights.into_iter().map(|m| m.into_iter().collect()).collect(),
            self_weight,
            degree,
        }
    }
}
