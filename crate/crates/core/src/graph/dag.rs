use std::collections::HashMap;

use super::GraphError;

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Treatment,
    Ice,
    Covariate,
    Outcome,
    Other,
}

impl Role {
    pub fn parse(s: &str) -> Option<Role> {
        Some(match s.to_ascii_lowercase().as_str() {
            "treatment" => Role::Treatment,
            "ice" => Role::Ice,
            "covariate" => Role::Covariate,
            "outcome" => Role::Outcome,
            "other" | "latent" => Role::Other,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Treatment => "treatment",
            Role::Ice => "ice",
            Role::Covariate => "covariate",
            Role::Outcome => "outcome",
            Role::Other => "other",
        }
    }
}

/// Validated directed acyclic graph with named, role-tagged nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalGraph {
    names: Vec<String>,
    roles: Vec<Role>,
    parents: Vec<Vec<NodeId>>,
    children: Vec<Vec<NodeId>>,
    index: HashMap<String, NodeId>,
}

impl CausalGraph {
    /// Builds from declared nodes and an edge list; rejects unknown
    /// endpoints, duplicates, self-loops and cycles.
    pub fn build<S: AsRef<str>>(nodes: &[(S, Role)], edges: &[(S, S)]) -> Result<Self, GraphError> {
        let mut index = HashMap::new();
        let mut names = Vec::with_capacity(nodes.len());
        let mut roles = Vec::with_capacity(nodes.len());
        for (name, role) in nodes {
            let name = name.as_ref().to_string();
            if index.insert(name.clone(), names.len()).is_some() {
                return Err(GraphError::DuplicateNode(name));
            }
            names.push(name);
            roles.push(*role);
        }
        let n = names.len();
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        for (from, to) in edges {
            let f = *index
                .get(from.as_ref())
                .ok_or_else(|| GraphError::UnknownNode(from.as_ref().to_string()))?;
            let t = *index
                .get(to.as_ref())
                .ok_or_else(|| GraphError::UnknownNode(to.as_ref().to_string()))?;
            if f == t {
                return Err(GraphError::Cycle(names[f].clone()));
            }
            if !children[f].contains(&t) {
                children[f].push(t);
                parents[t].push(f);
            }
        }
        let g = CausalGraph {
            names,
            roles,
            parents,
            children,
            index,
        };
        g.topological_order()?;
        Ok(g)
    }

    pub(crate) fn from_parts(names: Vec<String>, roles: Vec<Role>, edges: &[(NodeId, NodeId)]) -> Result<Self, GraphError> {
        let nodes: Vec<(String, Role)> = names.into_iter().zip(roles).collect();
        let named: Vec<(String, String)> = edges
            .iter()
            .map(|&(f, t)| (nodes[f].0.clone(), nodes[t].0.clone()))
            .collect();
        let nodes_ref: Vec<(&str, Role)> = nodes.iter().map(|(n, r)| (n.as_str(), *r)).collect();
        let edges_ref: Vec<(&str, &str)> = named.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        Self::build(&nodes_ref, &edges_ref)
    }

    /// Kahn's algorithm; errors with a node on a cycle.
    pub fn topological_order(&self) -> Result<Vec<NodeId>, GraphError> {
        let n = self.len();
        let mut indeg: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut ready: Vec<NodeId> = (0..n).filter(|&v| indeg[v] == 0).rev().collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop() {
            order.push(v);
            for &c in &self.children[v] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.push(c);
                }
            }
        }
        if order.len() < n {
            let stuck = (0..n).find(|&v| indeg[v] > 0).unwrap();
            return Err(GraphError::Cycle(self.names[stuck].clone()));
        }
        Ok(order)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.children.iter().map(Vec::len).sum()
    }

    pub fn id(&self, name: &str) -> Result<NodeId, GraphError> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| GraphError::UnknownNode(name.to_string()))
    }

    pub fn ids<S: AsRef<str>>(&self, names: &[S]) -> Result<Vec<NodeId>, GraphError> {
        names.iter().map(|n| self.id(n.as_ref())).collect()
    }

    pub fn name(&self, v: NodeId) -> &str {
        &self.names[v]
    }

    pub fn role(&self, v: NodeId) -> Role {
        self.roles[v]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn parents(&self, v: NodeId) -> &[NodeId] {
        &self.parents[v]
    }

    pub fn children(&self, v: NodeId) -> &[NodeId] {
        &self.children[v]
    }

    pub fn has_edge(&self, from: NodeId, to: NodeId) -> bool {
        self.children[from].contains(&to)
    }

    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        (0..self.len())
            .flat_map(|f| self.children[f].iter().map(move |&t| (f, t)))
            .collect()
    }

    /// Nodes reachable by directed paths from `seeds`, seeds included.
    pub fn descendants_mask(&self, seeds: &[NodeId]) -> Vec<bool> {
        self.reach_mask(seeds, |v| &self.children[v])
    }

    /// Ancestors of `seeds`, seeds included.
    pub fn ancestors_mask(&self, seeds: &[NodeId]) -> Vec<bool> {
        self.reach_mask(seeds, |v| &self.parents[v])
    }

    fn reach_mask<'a>(&'a self, seeds: &[NodeId], next: impl Fn(NodeId) -> &'a [NodeId]) -> Vec<bool> {
        let mut mask = vec![false; self.len()];
        let mut stack: Vec<NodeId> = seeds.to_vec();
        while let Some(v) = stack.pop() {
            if mask[v] {
                continue;
            }
            mask[v] = true;
            stack.extend(next(v).iter().copied().filter(|&u| !mask[u]));
        }
        mask
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_loop_rejected() {
        let err = CausalGraph::build(&[("A", Role::Other)], &[("A", "A")]).unwrap_err();
        assert_eq!(err, GraphError::Cycle("A".into()));
    }

    #[test]
    fn cycle_rejected() {
        let nodes = [("A", Role::Other), ("B", Role::Other), ("C", Role::Other)];
        let err = CausalGraph::build(&nodes, &[("A", "B"), ("B", "C"), ("C", "A")]).unwrap_err();
        assert!(matches!(err, GraphError::Cycle(_)));
    }

    #[test]
    fn unknown_node_rejected() {
        let err = CausalGraph::build(&[("A", Role::Other)], &[("A", "B")]).unwrap_err();
        assert_eq!(err, GraphError::UnknownNode("B".into()));
    }

    #[test]
    fn duplicate_node_rejected() {
        let err = CausalGraph::build::<&str>(&[("A", Role::Other), ("A", Role::Other)], &[]).unwrap_err();
        assert_eq!(err, GraphError::DuplicateNode("A".into()));
    }

    #[test]
    fn ancestry() {
        let nodes = [("A", Role::Other), ("B", Role::Other), ("C", Role::Other)];
        let g = CausalGraph::build(&nodes, &[("A", "B"), ("B", "C")]).unwrap();
        assert_eq!(g.descendants_mask(&[1]), vec![false, true, true]);
        assert_eq!(g.ancestors_mask(&[1]), vec![true, true, false]);
    }
}
