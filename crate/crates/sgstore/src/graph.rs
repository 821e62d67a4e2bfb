//! A toy directed graph with stable integer node ids.
//!
//! Exists to demonstrate the link extension point: a container kind that is
//! neither a sequence nor a map brings its own indexing policy
//! ([`NodeIdPolicy`]) and immediately works with [`ElementLink`].
//!
//! [`ElementLink`]: crate::links::ElementLink

use crate::links::{IndexingPolicy, LinkableContainer, NodeIdPolicy};
use crate::storable::{CodecError, Persistable, Storable};

/// One graph node. Ids are caller-assigned and stable.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphNode {
    pub id: u32,
    pub weight: f64,
}

/// Directed graph: nodes with unique ids plus directed edges between them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Graph {
    nodes: Vec<GraphNode>,
    edges: Vec<(u32, u32)>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a node; returns false (and does nothing) if the id is taken.
    pub fn add_node(&mut self, id: u32, weight: f64) -> bool {
        if self.node(id).is_some() {
            return false;
        }
        self.nodes.push(GraphNode { id, weight });
        true
    }

    /// Adds a directed edge; both endpoints must exist.
    pub fn add_edge(&mut self, from: u32, to: u32) -> bool {
        if self.node(from).is_none() || self.node(to).is_none() {
            return false;
        }
        self.edges.push((from, to));
        true
    }

    pub fn node(&self, id: u32) -> Option<&GraphNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn nodes(&self) -> &[GraphNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }
}

impl Storable for Graph {
    fn type_name() -> &'static str {
        "Graph"
    }

    /// `N <id> <weight>` per node, then `E <from> <to>` per edge.
    fn encode(&self) -> Vec<u8> {
        let mut lines = Vec::with_capacity(self.nodes.len() + self.edges.len());
        for n in &self.nodes {
            lines.push(format!("N {} {}", n.id, n.weight));
        }
        for (from, to) in &self.edges {
            lines.push(format!("E {from} {to}"));
        }
        lines.join("\n").into_bytes()
    }
}

impl Persistable for Graph {
    fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let text = std::str::from_utf8(bytes)
            .map_err(|e| CodecError::new(format!("graph payload is not UTF-8: {e}")))?;
        let mut graph = Graph::new();
        for line in text.lines() {
            let mut tokens = line.split_whitespace();
            match tokens.next() {
                Some("N") => {
                    let id = parse_token(tokens.next(), line)?;
                    let weight = parse_token(tokens.next(), line)?;
                    if !graph.add_node(id, weight) {
                        return Err(CodecError::new(format!("duplicate node id in `{line}`")));
                    }
                }
                Some("E") => {
                    let from = parse_token(tokens.next(), line)?;
                    let to = parse_token(tokens.next(), line)?;
                    if !graph.add_edge(from, to) {
                        return Err(CodecError::new(format!("edge to unknown node in `{line}`")));
                    }
                }
                Some(other) => {
                    return Err(CodecError::new(format!("unknown graph record `{other}`")))
                }
                None => continue,
            }
            if tokens.next().is_some() {
                return Err(CodecError::new(format!("trailing tokens in `{line}`")));
            }
        }
        Ok(graph)
    }
}

fn parse_token<T: std::str::FromStr>(token: Option<&str>, line: &str) -> Result<T, CodecError> {
    token
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| CodecError::new(format!("malformed graph line `{line}`")))
}

impl IndexingPolicy<Graph> for NodeIdPolicy {
    type Element = GraphNode;

    fn policy_name() -> &'static str {
        "node-id"
    }

    fn index_of(container: &Graph, element: &GraphNode) -> Option<Vec<u8>> {
        let found = container.node(element.id)?;
        (found == element).then(|| element.id.to_string().into_bytes())
    }

    fn element_at<'c>(container: &'c Graph, index: &[u8]) -> Option<&'c GraphNode> {
        let id: u32 = std::str::from_utf8(index).ok()?.parse().ok()?;
        container.node(id)
    }
}

impl LinkableContainer for Graph {
    type Element = GraphNode;
    type Policy = NodeIdPolicy;
}
