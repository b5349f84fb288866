use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{generate_ws, parse_edge_list, parse_graphml, UndirectedGraph};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphFormat {
    Graphml,
    Edgelist,
}

impl GraphFormat {
    /// `.graphml` and `.xml` files are GraphML; anything else is an edge
    /// list.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("graphml") || e.eq_ignore_ascii_case("xml") => {
                GraphFormat::Graphml
            }
            _ => GraphFormat::Edgelist,
        }
    }
}

impl FromStr for GraphFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "graphml" => Ok(GraphFormat::Graphml),
            "edgelist" => Ok(GraphFormat::Edgelist),
            other => Err(Error::InvalidParameter(format!(
                "unknown graph format `{other}` (expected graphml or edgelist)"
            ))),
        }
    }
}

impl fmt::Display for GraphFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GraphFormat::Graphml => "graphml",
            GraphFormat::Edgelist => "edgelist",
        })
    }
}

pub fn parse_graph(text: &str, format: GraphFormat) -> Result<UndirectedGraph> {
    match format {
        GraphFormat::Graphml => parse_graphml(text),
        GraphFormat::Edgelist => parse_edge_list(text),
    }
}

/// Read and parse a graph file.
pub fn read_graph(path: &Path, format: GraphFormat) -> Result<UndirectedGraph> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?;
    parse_graph(&text, format)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WsSpec {
    pub n: usize,
    pub k: usize,
    #[serde(default)]
    pub p: f64,
    #[serde(default)]
    pub seed: u64,
}

/// Where a graph module's wiring comes from: a file or a Watts-Strogatz
/// generator. Exactly one of `file` and `ws` is set.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<GraphFormat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ws: Option<WsSpec>,
}

impl GraphSpec {
    pub fn file(path: impl Into<PathBuf>, format: Option<GraphFormat>) -> Self {
        Self {
            file: Some(path.into()),
            format,
            ws: None,
        }
    }

    pub fn ws(n: usize, k: usize, p: f64, seed: u64) -> Self {
        Self {
            file: None,
            format: None,
            ws: Some(WsSpec { n, k, p, seed }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.file, &self.ws) {
            (Some(_), None) => Ok(()),
            (None, Some(_)) if self.format.is_none() => Ok(()),
            (None, Some(_)) => Err(Error::Schema("`format` applies only to `file` graphs".into())),
            _ => Err(Error::Schema(
                "graph spec needs exactly one of `file` or `ws`".into(),
            )),
        }
    }

    pub fn load(&self) -> Result<UndirectedGraph> {
        self.validate()?;
        match (&self.file, &self.ws) {
            (Some(path), _) => {
                let format = self.format.unwrap_or_else(|| GraphFormat::from_path(path));
                read_graph(path, format)
            }
            (_, Some(ws)) => generate_ws(ws.n, ws.k, ws.p, ws.seed),
            _ => unreachable!("validated"),
        }
    }

    /// Short name recorded in compiled DAGs.
    pub fn label(&self) -> String {
        match (&self.file, &self.ws) {
            (Some(path), _) => path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string()),
            (_, Some(ws)) => format!("ws(n={},k={},p={},seed={})", ws.n, ws.k, ws.p, ws.seed),
            _ => String::new(),
        }
    }
}
