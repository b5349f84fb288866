//! Undirected simple graphs and their small-world statistics.

mod generate;
mod louvain;
mod metrics;
mod parse;
mod source;
mod stats;

pub use generate::generate_ws;
pub use louvain::{modularity, modularity_of, Partition};
pub use metrics::{
    average_clustering, average_degree, average_path_length, connected_components, diameter,
    local_clustering, path_summary, PathSummary,
};
pub use parse::{parse_edge_list, parse_graphml};
pub use source::{parse_graph, read_graph, GraphFormat, GraphSpec, WsSpec};
pub use stats::{stats, GraphStats};

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Normalized simple undirected graph: dense node indices, no self-loops,
/// no duplicate pairs, each edge stored once as `(i, j)` with `i < j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UndirectedGraph {
    node_count: usize,
    edges: Vec<(usize, usize)>,
    node_names: Option<Vec<String>>,
    adjacency: Vec<Vec<usize>>,
}

impl UndirectedGraph {
    /// Build a graph from arbitrary pairs; self-loops are dropped and
    /// reciprocal or repeated pairs merged.
    pub fn from_edges<I>(node_count: usize, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut edges = Vec::new();
        for (a, b) in pairs {
            if a >= node_count || b >= node_count {
                return Err(Error::UnknownNode(a.max(b).to_string()));
            }
            if a != b {
                edges.push((a.min(b), a.max(b)));
            }
        }
        edges.sort_unstable();
        edges.dedup();
        let mut adjacency = vec![Vec::new(); node_count];
        for &(a, b) in &edges {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Self {
            node_count,
            edges,
            node_names: None,
            adjacency,
        })
    }

    /// Attach original file IDs; `names.len()` must equal the node count.
    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.node_count {
            return Err(Error::InvalidParameter(format!(
                "{} names for {} nodes",
                names.len(),
                self.node_count
            )));
        }
        self.node_names = Some(names);
        Ok(self)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Canonical edges, sorted lexicographically.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        a < self.node_count && self.adjacency[a].binary_search(&b).is_ok()
    }

    pub fn node_names(&self) -> Option<&[String]> {
        self.node_names.as_deref()
    }

    /// Display name of a node: its file ID when known, else its index.
    pub fn node_name(&self, node: usize) -> String {
        match &self.node_names {
            Some(names) => names[node].clone(),
            None => node.to_string(),
        }
    }

    /// Serialize to edge-list text that [`parse_edge_list`] reads back into
    /// an identical graph: one single-token line per node in index order
    /// (this pins indices and keeps isolated nodes), then one line per edge.
    pub fn to_edge_list(&self) -> Result<String> {
        let names: Vec<String> = (0..self.node_count).map(|i| self.node_name(i)).collect();
        for name in &names {
            if name.is_empty()
                || name.chars().any(char::is_whitespace)
                || name.starts_with('#')
                || name.starts_with('%')
            {
                return Err(Error::InvalidParameter(format!(
                    "node id {name:?} cannot be written as an edge-list token"
                )));
            }
        }
        let mut out = String::new();
        out.push_str(&format!(
            "# {} nodes, {} edges\n",
            self.node_count,
            self.edges.len()
        ));
        for name in &names {
            out.push_str(name);
            out.push('\n');
        }
        for &(a, b) in &self.edges {
            out.push_str(&names[a]);
            out.push(' ');
            out.push_str(&names[b]);
            out.push('\n');
        }
        Ok(out)
    }
}

/// Assigns dense indices to string IDs in first-appearance order.
#[derive(Default)]
pub(crate) struct NodeInterner {
    index: HashMap<String, usize>,
    names: Vec<String>,
}

impl NodeInterner {
    pub(crate) fn intern(&mut self, id: &str) -> usize {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        let i = self.names.len();
        self.index.insert(id.to_owned(), i);
        self.names.push(id.to_owned());
        i
    }

    pub(crate) fn get(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub(crate) fn len(&self) -> usize {
        self.names.len()
    }

    pub(crate) fn into_names(self) -> Vec<String> {
        self.names
    }
}
