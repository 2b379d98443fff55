//! d-separation by reachability over (node, direction) states.

use std::collections::VecDeque;

use super::{CausalGraph, GraphError, NodeId};

/// One hop of a trail: the node reached and whether the edge from the
/// previous node points forward (`prev -> node`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathStep {
    pub node: NodeId,
    pub forward: bool,
}

/// An active trail from a node in X to a node in Y.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpenPath {
    pub start: NodeId,
    pub steps: Vec<PathStep>,
}

impl OpenPath {
    pub fn nodes(&self) -> Vec<NodeId> {
        std::iter::once(self.start).chain(self.steps.iter().map(|s| s.node)).collect()
    }

    /// Renders as `A1 <- L1 -> Y`, using `label` for node names.
    pub fn render(&self, label: impl Fn(NodeId) -> String) -> String {
        let mut out = label(self.start);
        for s in &self.steps {
            out.push_str(if s.forward { " -> " } else { " <- " });
            out.push_str(&label(s.node));
        }
        out
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Dir {
    /// Arrived from a child (travelling against an edge).
    Up,
    /// Arrived from a parent.
    Down,
}

fn check_disjoint(g: &CausalGraph, sets: [&[NodeId]; 3]) -> Result<(), GraphError> {
    let mut seen = vec![false; g.len()];
    for set in sets {
        let mut local = vec![false; g.len()];
        for &v in set {
            if v >= g.len() {
                return Err(GraphError::Invalid(format!("node id {v} out of range")));
            }
            if local[v] {
                continue;
            }
            local[v] = true;
            if seen[v] {
                return Err(GraphError::OverlappingSets(g.name(v).to_string()));
            }
        }
        for (s, l) in seen.iter_mut().zip(local) {
            *s |= l;
        }
    }
    Ok(())
}

/// Shortest active trail between X and Y given Z, if any.
pub fn find_open_path(g: &CausalGraph, x: &[NodeId], y: &[NodeId], z: &[NodeId]) -> Result<Option<OpenPath>, GraphError> {
    check_disjoint(g, [x, y, z])?;
    let n = g.len();
    let mut in_z = vec![false; n];
    for &v in z {
        in_z[v] = true;
    }
    let mut in_y = vec![false; n];
    for &v in y {
        in_y[v] = true;
    }
    let anc_z = g.ancestors_mask(z);

    let slot = |v: NodeId, d: Dir| v * 2 + usize::from(d == Dir::Down);
    let mut prev: Vec<Option<Option<usize>>> = vec![None; 2 * n];
    let mut queue = VecDeque::new();
    for &v in x {
        let s = slot(v, Dir::Up);
        if prev[s].is_none() {
            prev[s] = Some(None);
            queue.push_back((v, Dir::Up));
        }
    }

    let visit = |from: usize, v: NodeId, d: Dir, queue: &mut VecDeque<(NodeId, Dir)>, prev: &mut Vec<Option<Option<usize>>>| {
        let s = slot(v, d);
        if prev[s].is_none() {
            prev[s] = Some(Some(from));
            queue.push_back((v, d));
        }
    };

    while let Some((v, d)) = queue.pop_front() {
        let here = slot(v, d);
        if in_y[v] {
            return Ok(Some(reconstruct(here, &prev)));
        }
        match d {
            Dir::Up => {
                if !in_z[v] {
                    for &p in g.parents(v) {
                        visit(here, p, Dir::Up, &mut queue, &mut prev);
                    }
                    for &c in g.children(v) {
                        visit(here, c, Dir::Down, &mut queue, &mut prev);
                    }
                }
            }
            Dir::Down => {
                if !in_z[v] {
                    for &c in g.children(v) {
                        visit(here, c, Dir::Down, &mut queue, &mut prev);
                    }
                }
                if anc_z[v] {
                    for &p in g.parents(v) {
                        visit(here, p, Dir::Up, &mut queue, &mut prev);
                    }
                }
            }
        }
    }
    Ok(None)
}

fn reconstruct(end: usize, prev: &[Option<Option<usize>>]) -> OpenPath {
    let mut states = vec![end];
    let mut cur = end;
    while let Some(Some(p)) = prev[cur] {
        states.push(p);
        cur = p;
    }
    states.reverse();
    let start = states[0] / 2;
    let steps = states[1..]
        .iter()
        .map(|&s| PathStep {
            node: s / 2,
            // Down means we arrived along a parent -> child edge.
            forward: s % 2 == 1,
        })
        .collect();
    OpenPath { start, steps }
}

/// True iff every path between X and Y is blocked by Z.
pub fn d_separated(g: &CausalGraph, x: &[NodeId], y: &[NodeId], z: &[NodeId]) -> Result<bool, GraphError> {
    Ok(find_open_path(g, x, y, z)?.is_none())
}
