//! Line-oriented graph files:
//!
//! ```text
//! # comment
//! node L0 covariate
//! node A0 treatment
//! edge L0 -> A1
//! ```

use std::path::Path;

use super::{CausalGraph, GraphError, Role};

pub fn parse_graph(text: &str) -> Result<CausalGraph, GraphError> {
    let mut nodes: Vec<(String, Role)> = Vec::new();
    let mut edges: Vec<(String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let syntax = |message: String| GraphError::Syntax { line: i + 1, message };
        let mut words = line.split_whitespace();
        match words.next() {
            Some("node") => {
                let name = words.next().ok_or_else(|| syntax("node without a name".into()))?;
                let role = match words.next() {
                    Some(r) => Role::parse(r).ok_or_else(|| syntax(format!("unknown role '{r}'")))?,
                    None => Role::Other,
                };
                if let Some(extra) = words.next() {
                    return Err(syntax(format!("unexpected '{extra}'")));
                }
                nodes.push((name.to_string(), role));
            }
            Some("edge") => {
                let rest: Vec<&str> = words.collect();
                match rest.as_slice() {
                    [from, "->", to] => edges.push((from.to_string(), to.to_string())),
                    _ => return Err(syntax("expected 'edge <from> -> <to>'".into())),
                }
            }
            Some(other) => return Err(syntax(format!("unknown directive '{other}'"))),
            None => {}
        }
    }
    CausalGraph::build(&nodes, &edges)
}

pub fn read_graph(path: impl AsRef<Path>) -> Result<CausalGraph, GraphError> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| GraphError::Invalid(format!("{}: {e}", path.as_ref().display())))?;
    parse_graph(&text)
}
