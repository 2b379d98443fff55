use std::collections::HashMap;

use super::dsep::{find_open_path, OpenPath};
use super::{CausalGraph, GraphError, NodeId, Role};

/// Single-world intervention graph.
///
/// Node ids `0..n` are the random parts of the original nodes (same ids as
/// in the source DAG); each intervened node adds a fixed part after them.
/// A random part keeps its incoming edges and its outgoing edges move to
/// the fixed part.
#[derive(Debug, Clone)]
pub struct Swig {
    graph: CausalGraph,
    original_len: usize,
    fixed_of: HashMap<NodeId, NodeId>,
    labels: Vec<String>,
    interventions: Vec<(NodeId, i64)>,
}

/// Splits every intervened node into random and fixed parts and relabels
/// descendants of fixed parts as potential outcomes.
pub fn swig_transform<S: AsRef<str>>(g: &CausalGraph, interventions: &[(S, i64)]) -> Result<Swig, GraphError> {
    let n = g.len();
    let mut fixed_of = HashMap::new();
    let mut ordered = Vec::with_capacity(interventions.len());
    let mut names: Vec<String> = g.names().to_vec();
    let mut roles: Vec<Role> = (0..n).map(|v| g.role(v)).collect();
    for (name, value) in interventions {
        let v = g.id(name.as_ref())?;
        if g.role(v) == Role::Outcome {
            return Err(GraphError::InterveneOnOutcome(g.name(v).to_string()));
        }
        if fixed_of.contains_key(&v) {
            return Err(GraphError::Invalid(format!("'{}' intervened on twice", g.name(v))));
        }
        let mut fixed_name = format!("{}={}", g.name(v).to_lowercase(), value);
        while names.contains(&fixed_name) {
            fixed_name.push('\'');
        }
        fixed_of.insert(v, names.len());
        names.push(fixed_name);
        roles.push(g.role(v));
        ordered.push((v, *value));
    }

    let edges: Vec<(NodeId, NodeId)> = g
        .edges()
        .into_iter()
        .map(|(f, t)| (fixed_of.get(&f).copied().unwrap_or(f), t))
        .collect();
    let graph = CausalGraph::from_parts(names, roles, &edges)?;

    let mut labels: Vec<String> = graph.names().to_vec();
    for v in 0..n {
        let sup: Vec<String> = ordered
            .iter()
            .filter(|(x, _)| graph.descendants_mask(&[fixed_of[x]])[v])
            .map(|(x, val)| format!("{}={}", g.name(*x).to_lowercase(), val))
            .collect();
        if !sup.is_empty() {
            labels[v] = format!("{}^{{{}}}", g.name(v), sup.join(","));
        }
    }

    Ok(Swig {
        graph,
        original_len: n,
        fixed_of,
        labels,
        interventions: ordered,
    })
}

impl Swig {
    pub fn graph(&self) -> &CausalGraph {
        &self.graph
    }

    /// Potential-outcome label, e.g. `Y^{a1=0,a2=0}`; fixed parts render as `a1=0`.
    pub fn label(&self, v: NodeId) -> &str {
        &self.labels[v]
    }

    pub fn is_fixed(&self, v: NodeId) -> bool {
        v >= self.original_len
    }

    /// Random part of an original node (same id as in the source DAG).
    pub fn random(&self, name: &str) -> Result<NodeId, GraphError> {
        let v = self.graph.id(name)?;
        if self.is_fixed(v) {
            return Err(GraphError::Invalid(format!("'{name}' is a fixed node")));
        }
        Ok(v)
    }

    pub fn fixed(&self, name: &str) -> Result<Option<NodeId>, GraphError> {
        let v = self.graph.id(name)?;
        Ok(self.fixed_of.get(&v).copied())
    }

    pub fn interventions(&self) -> &[(NodeId, i64)] {
        &self.interventions
    }

    fn with_fixed(&self, x: &[NodeId], y: &[NodeId], z: &[NodeId]) -> Vec<NodeId> {
        let mut zz = z.to_vec();
        for v in self.original_len..self.graph.len() {
            if !x.contains(&v) && !y.contains(&v) && !zz.contains(&v) {
                zz.push(v);
            }
        }
        zz
    }

    /// Active trail in the SWIG; fixed parts are constants and always block.
    pub fn find_open_path(&self, x: &[NodeId], y: &[NodeId], z: &[NodeId]) -> Result<Option<OpenPath>, GraphError> {
        find_open_path(&self.graph, x, y, &self.with_fixed(x, y, z))
    }

    pub fn d_separated(&self, x: &[NodeId], y: &[NodeId], z: &[NodeId]) -> Result<bool, GraphError> {
        Ok(self.find_open_path(x, y, z)?.is_none())
    }

    pub fn render_path(&self, p: &OpenPath) -> String {
        p.render(|v| self.label(v).to_string())
    }
}
