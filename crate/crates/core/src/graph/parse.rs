use super::{NodeInterner, UndirectedGraph};
use crate::error::{Error, Result};

/// Read the GraphML subset `graphml/graph/node/edge`. Directed files are
/// collapsed to undirected pairs; all other elements and attributes are
/// ignored.
pub fn parse_graphml(text: &str) -> Result<UndirectedGraph> {
    let doc = roxmltree::Document::parse(text).map_err(|e| {
        let pos = e.pos();
        Error::Parse {
            line: pos.row as usize,
            column: pos.col as usize,
            message: e.to_string(),
        }
    })?;
    let at = |node: roxmltree::Node, message: String| {
        let pos = doc.text_pos_at(node.range().start);
        Error::Parse {
            line: pos.row as usize,
            column: pos.col as usize,
            message,
        }
    };

    let mut graphs = doc
        .descendants()
        .filter(|n| n.is_element() && n.tag_name().name() == "graph");
    let graph = graphs
        .next()
        .ok_or_else(|| at(doc.root_element(), "no <graph> element".into()))?;
    if let Some(extra) = graphs.next() {
        return Err(at(extra, "more than one <graph> element".into()));
    }
    if let Some(mode) = graph.attribute("edgedefault") {
        if mode != "directed" && mode != "undirected" {
            return Err(at(graph, format!("invalid edgedefault {mode:?}")));
        }
    }

    let mut nodes = NodeInterner::default();
    for node in graph
        .children()
        .filter(|n| n.is_element() && n.tag_name().name() == "node")
    {
        let id = node
            .attribute("id")
            .ok_or_else(|| at(node, "<node> without id".into()))?;
        if nodes.get(id).is_some() {
            return Err(at(node, format!("duplicate node id {id:?}")));
        }
        nodes.intern(id);
    }

    let mut pairs = Vec::new();
    for edge in graph
        .children()
        .filter(|n| n.is_element() && n.tag_name().name() == "edge")
    {
        let endpoint = |attr: &str| -> Result<usize> {
            let id = edge
                .attribute(attr)
                .ok_or_else(|| at(edge, format!("<edge> without {attr}")))?;
            nodes.get(id).ok_or_else(|| Error::UnknownNode(id.to_owned()))
        };
        pairs.push((endpoint("source")?, endpoint("target")?));
    }

    let n = nodes.len();
    UndirectedGraph::from_edges(n, pairs)?.with_names(nodes.into_names())
}

/// Read whitespace-separated `u v [weight]` lines; `#` or `%` start a
/// comment. A line holding a single ID declares a node without edges.
/// Weights are validated and discarded.
pub fn parse_edge_list(text: &str) -> Result<UndirectedGraph> {
    let mut nodes = NodeInterner::default();
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find(['#', '%']) {
            Some(cut) => &raw[..cut],
            None => raw,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        let err = |column: usize, message: String| Error::Parse {
            line: lineno + 1,
            column,
            message,
        };
        match fields.as_slice() {
            [] => {}
            [id] => {
                nodes.intern(id);
            }
            [u, v, rest @ ..] => {
                if rest.len() > 1 {
                    return Err(err(
                        column_of(raw, rest[1]),
                        format!("expected `u v [weight]`, found {} fields", fields.len()),
                    ));
                }
                if let Some(w) = rest.first() {
                    if w.parse::<f64>().is_err() {
                        return Err(err(column_of(raw, w), format!("non-numeric weight {w:?}")));
                    }
                }
                let a = nodes.intern(u);
                let b = nodes.intern(v);
                pairs.push((a, b));
            }
        }
    }
    if nodes.len() == 0 {
        return Err(Error::EmptyGraph);
    }
    let n = nodes.len();
    UndirectedGraph::from_edges(n, pairs)?.with_names(nodes.into_names())
}

fn column_of(line: &str, token: &str) -> usize {
    // `token` is a subslice of `line`
    token.as_ptr() as usize - line.as_ptr() as usize + 1
}
