//! Compile an undirected graph into a single-entry, single-exit DAG.
//!
//! Nodes receive a seeded random rank and every edge points from the lower
//! rank to the higher one. A virtual source feeds every node without
//! interior predecessors and a virtual sink collects every node without
//! interior successors, so disconnected components and isolated nodes need
//! no special handling.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::UndirectedGraph;
use crate::rng::Rng;

/// Interior edges oriented by a recorded permutation, before the source and
/// sink are attached.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrientedGraph {
    pub interior_node_count: usize,
    /// Sorted lexicographically.
    pub edges: Vec<(usize, usize)>,
    /// `permutation[u]` is the rank drawn for node `u`.
    pub permutation: Vec<usize>,
    pub seed: u64,
    pub source_graph: String,
}

/// Draw a uniform permutation from `seed` and orient each edge toward the
/// higher-ranked endpoint.
pub fn orient_edges(g: &UndirectedGraph, seed: u64) -> OrientedGraph {
    let permutation = Rng::new(seed).permutation(g.node_count());
    orient_with_permutation(g, permutation, seed)
}

/// Orient with a caller-supplied permutation. Panics if it is not a
/// permutation of `0..node_count`.
pub fn orient_with_permutation(
    g: &UndirectedGraph,
    permutation: Vec<usize>,
    seed: u64,
) -> OrientedGraph {
    assert!(
        is_permutation(&permutation, g.node_count()),
        "not a permutation of 0..{}",
        g.node_count()
    );
    let mut edges: Vec<(usize, usize)> = g
        .edges()
        .iter()
        .map(|&(a, b)| {
            if permutation[a] < permutation[b] {
                (a, b)
            } else {
                (b, a)
            }
        })
        .collect();
    edges.sort_unstable();
    OrientedGraph {
        interior_node_count: g.node_count(),
        edges,
        permutation,
        seed,
        source_graph: String::new(),
    }
}

fn is_permutation(p: &[usize], n: usize) -> bool {
    if p.len() != n {
        return false;
    }
    let mut seen = vec![false; n];
    for &x in p {
        if x >= n || std::mem::replace(&mut seen[x], true) {
            return false;
        }
    }
    true
}

/// Attach the broadcast source and averaging sink.
pub fn augment_source_sink(oriented: OrientedGraph) -> Result<ArchitectureDag> {
    let n = oriented.interior_node_count;
    if n == 0 {
        return Err(Error::EmptyGraph);
    }
    let (input_nodes, output_nodes) = boundary_nodes(n, &oriented.edges);
    Ok(ArchitectureDag {
        interior_node_count: n,
        edges: oriented.edges,
        input_nodes,
        output_nodes,
        permutation: oriented.permutation,
        seed: oriented.seed,
        source_graph: oriented.source_graph,
    })
}

fn boundary_nodes(n: usize, edges: &[(usize, usize)]) -> (Vec<usize>, Vec<usize>) {
    let mut indeg = vec![0usize; n];
    let mut outdeg = vec![0usize; n];
    for &(u, v) in edges {
        outdeg[u] += 1;
        indeg[v] += 1;
    }
    let inputs = (0..n).filter(|&u| indeg[u] == 0).collect();
    let outputs = (0..n).filter(|&u| outdeg[u] == 0).collect();
    (inputs, outputs)
}

/// Orient, augment and label in one call.
pub fn compile(
    g: &UndirectedGraph,
    seed: u64,
    source_graph: impl Into<String>,
) -> Result<ArchitectureDag> {
    let mut oriented = orient_edges(g, seed);
    oriented.source_graph = source_graph.into();
    augment_source_sink(oriented)
}

/// Oriented, source/sink-augmented compute graph. The source has id
/// `interior_node_count`, the sink `interior_node_count + 1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureDag {
    interior_node_count: usize,
    edges: Vec<(usize, usize)>,
    input_nodes: Vec<usize>,
    output_nodes: Vec<usize>,
    permutation: Vec<usize>,
    seed: u64,
    source_graph: String,
}

impl ArchitectureDag {
    pub fn interior_node_count(&self) -> usize {
        self.interior_node_count
    }

    pub fn source_id(&self) -> usize {
        self.interior_node_count
    }

    pub fn sink_id(&self) -> usize {
        self.interior_node_count + 1
    }

    /// Interior edges, sorted lexicographically.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn input_nodes(&self) -> &[usize] {
        &self.input_nodes
    }

    pub fn output_nodes(&self) -> &[usize] {
        &self.output_nodes
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn source_graph(&self) -> &str {
        &self.source_graph
    }

    /// Every edge of the augmented graph: source edges first, then interior
    /// edges, then sink edges.
    pub fn all_edges(&self) -> Vec<(usize, usize)> {
        let src = self.source_id();
        let sink = self.sink_id();
        self.input_nodes
            .iter()
            .map(|&v| (src, v))
            .chain(self.edges.iter().copied())
            .chain(self.output_nodes.iter().map(|&u| (u, sink)))
            .collect()
    }

    /// Predecessors of each interior node in edge-list order, with the
    /// source standing in for input nodes.
    pub fn predecessors(&self) -> Vec<Vec<usize>> {
        let mut preds = vec![Vec::new(); self.interior_node_count];
        for &v in &self.input_nodes {
            preds[v].push(self.source_id());
        }
        for &(u, v) in &self.edges {
            preds[v].push(u);
        }
        preds
    }

    /// Kahn's algorithm over the augmented graph, always taking the smallest
    /// ready id. Starts with the source and ends with the sink.
    pub fn topological_order(&self) -> Result<Vec<usize>> {
        let total = self.interior_node_count + 2;
        let mut succ = vec![Vec::new(); total];
        let mut indeg = vec![0usize; total];
        for (u, v) in self.all_edges() {
            succ[u].push(v);
            indeg[v] += 1;
        }
        let mut ready: BTreeSet<usize> = (0..total).filter(|&u| indeg[u] == 0).collect();
        let mut order = Vec::with_capacity(total);
        while let Some(u) = ready.pop_first() {
            order.push(u);
            for &v in &succ[u] {
                indeg[v] -= 1;
                if indeg[v] == 0 {
                    ready.insert(v);
                }
            }
        }
        if order.len() != total {
            return Err(Error::Structure(format!(
                "cycle detected: {} of {} nodes could not be ordered",
                total - order.len(),
                total
            )));
        }
        if order.first() != Some(&self.source_id()) || order.last() != Some(&self.sink_id()) {
            return Err(Error::Structure(
                "source and sink are not the unique endpoints".into(),
            ));
        }
        Ok(order)
    }

    /// Check every structural invariant: permutation monotone edges,
    /// boundary sets matching interior degrees, acyclicity, and full
    /// source/sink reachability.
    pub fn validate(&self) -> Result<()> {
        let n = self.interior_node_count;
        if !is_permutation(&self.permutation, n) {
            return Err(Error::Structure("permutation is not a bijection".into()));
        }
        for &(u, v) in &self.edges {
            if u >= n || v >= n {
                return Err(Error::UnknownNode(u.max(v).to_string()));
            }
            if self.permutation[u] >= self.permutation[v] {
                return Err(Error::Structure(format!(
                    "edge {u}->{v} runs against the permutation"
                )));
            }
        }
        let (inputs, outputs) = boundary_nodes(n, &self.edges);
        if inputs != self.input_nodes || outputs != self.output_nodes {
            return Err(Error::Structure(
                "input/output nodes do not match interior degrees".into(),
            ));
        }
        self.topological_order()?;
        let total = n + 2;
        let mut fwd = vec![Vec::new(); total];
        let mut rev = vec![Vec::new(); total];
        for (u, v) in self.all_edges() {
            fwd[u].push(v);
            rev[v].push(u);
        }
        if reach(&fwd, self.source_id()).iter().any(|r| !r) {
            return Err(Error::Structure("node unreachable from source".into()));
        }
        if reach(&rev, self.sink_id()).iter().any(|r| !r) {
            return Err(Error::Structure("node cannot reach sink".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string(self).expect("dag serializes");
        s.push('\n');
        s
    }

    /// Parse and schema-check DAG JSON. Cycles are reported by
    /// [`topological_order`](Self::topological_order), not here.
    pub fn from_json(text: &str) -> Result<Self> {
        let dag: ArchitectureDag =
            serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        dag.check_schema()?;
        Ok(dag)
    }

    fn check_schema(&self) -> Result<()> {
        let n = self.interior_node_count;
        if n == 0 {
            return Err(Error::Schema("interior_node_count must be positive".into()));
        }
        if !is_permutation(&self.permutation, n) {
            return Err(Error::Schema(format!(
                "permutation must list each of 0..{n} exactly once"
            )));
        }
        let mut sorted = self.edges.clone();
        sorted.sort_unstable();
        if sorted != self.edges {
            return Err(Error::Schema("edges must be sorted lexicographically".into()));
        }
        for &(u, v) in &self.edges {
            for x in [u, v] {
                if x >= n {
                    return Err(Error::UnknownNode(x.to_string()));
                }
            }
            if u == v {
                return Err(Error::Schema(format!("self-loop on node {u}")));
            }
        }
        let (inputs, outputs) = boundary_nodes(n, &self.edges);
        if inputs != self.input_nodes {
            return Err(Error::Schema(
                "input_nodes must be exactly the nodes with indegree 0".into(),
            ));
        }
        if outputs != self.output_nodes {
            return Err(Error::Schema(
                "output_nodes must be exactly the nodes with outdegree 0".into(),
            ));
        }
        Ok(())
    }
}

fn reach(adj: &[Vec<usize>], start: usize) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    seen
}
