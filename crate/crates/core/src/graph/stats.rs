use serde::{Deserialize, Serialize};

use super::{
    average_clustering, average_degree, connected_components, modularity, path_summary,
    UndirectedGraph,
};
use crate::error::{Error, Result};

/// Small-world summary of one graph; serializes with snake_case keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub node_count: usize,
    pub edge_count: usize,
    pub average_path_length: f64,
    pub average_clustering: f64,
    pub connected_components: usize,
    pub diameter: u32,
    pub average_degree: f64,
    pub modularity: f64,
}

pub fn stats(g: &UndirectedGraph, seed: u64) -> Result<GraphStats> {
    if g.node_count() < 2 {
        return Err(Error::InvalidParameter(
            "statistics need at least 2 nodes".into(),
        ));
    }
    if g.edge_count() == 0 {
        return Err(Error::Edgeless("statistics"));
    }
    let paths = path_summary(g);
    let (q, _) = modularity(g, seed)?;
    Ok(GraphStats {
        node_count: g.node_count(),
        edge_count: g.edge_count(),
        average_path_length: paths.distance_sum as f64 / paths.connected_pairs as f64,
        average_clustering: average_clustering(g),
        connected_components: connected_components(g).len(),
        diameter: paths.max_distance,
        average_degree: average_degree(g),
        modularity: q,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_edge() {
        let g = UndirectedGraph::from_edges(2, [(0, 1)]).unwrap();
        let s = stats(&g, 0).unwrap();
        assert_eq!(
            (s.node_count, s.edge_count, s.connected_components, s.diameter),
            (2, 1, 1, 1)
        );
        assert_eq!(s.average_path_length, 1.0);
        assert_eq!(s.average_clustering, 0.0);
        assert_eq!(s.average_degree, 1.0);
        assert!(s.modularity.abs() < 1e-12);
    }

    #[test]
    fn json_keys() {
        let g = crate::graph::generate_ws(32, 4, 0.0, 0).unwrap();
        let v = serde_json::to_value(stats(&g, 0).unwrap()).unwrap();
        let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        keys.sort_unstable();
        assert_eq!(
            keys,
            [
                "average_clustering",
                "average_degree",
                "average_path_length",
                "connected_components",
                "diameter",
                "edge_count",
                "modularity",
                "node_count"
            ]
        );
    }
}
