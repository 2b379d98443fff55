//! Sequential exchangeability and MAR of the hypothetical potential
//! outcomes, read off the SWIG that sets every ICE (or treatment) node.

use std::collections::HashMap;

use super::{swig_transform, CausalGraph, GraphError, NodeId, Role, Swig};

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    /// 1-based position in the ordered node list.
    pub time: usize,
    /// SWIG label of the node whose independence is tested.
    pub node: String,
    pub conditioning: Vec<String>,
    pub targets: Vec<String>,
    pub holds: bool,
    /// First target found d-connected, with an active trail to it.
    pub failing_target: Option<String>,
    pub witness: Option<String>,
    pub witness_nodes: Vec<String>,
}

impl ConditionReport {
    /// `A1 ⊥ (L2^{a1=0}, Y^{a1=0,a2=0}) | A0, L0, L1`.
    pub fn statement(&self) -> String {
        let targets = if self.targets.len() == 1 {
            self.targets[0].clone()
        } else {
            format!("({})", self.targets.join(", "))
        };
        if self.conditioning.is_empty() {
            format!("{} ⊥ {}", self.node, targets)
        } else {
            format!("{} ⊥ {} | {}", self.node, targets, self.conditioning.join(", "))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentifiabilityReport {
    pub conditions: Vec<ConditionReport>,
}

impl IdentifiabilityReport {
    pub fn holds(&self) -> bool {
        self.conditions.iter().all(|c| c.holds)
    }
}

fn check_order(g: &CausalGraph, ordered: &[NodeId]) -> Result<(), GraphError> {
    for (i, &earlier) in ordered.iter().enumerate() {
        let anc = g.ancestors_mask(&[earlier]);
        for &later in &ordered[i + 1..] {
            if anc[later] {
                return Err(GraphError::Misordered {
                    earlier: g.name(earlier).to_string(),
                    later: g.name(later).to_string(),
                });
            }
        }
    }
    Ok(())
}

fn resolve_history(
    g: &CausalGraph,
    nodes: &[NodeId],
    history: &HashMap<String, Vec<String>>,
) -> Result<Vec<Vec<NodeId>>, GraphError> {
    for key in history.keys() {
        let v = g.id(key)?;
        if !nodes.contains(&v) {
            return Err(GraphError::Invalid(format!("history given for '{key}', which is not in the ordered node list")));
        }
    }
    nodes
        .iter()
        .map(|&v| match history.get(g.name(v)) {
            Some(h) => g.ids(h),
            None => Ok(Vec::new()),
        })
        .collect()
}

fn push_unique(v: &mut Vec<NodeId>, x: NodeId) {
    if !v.contains(&x) {
        v.push(x);
    }
}

fn evaluate(swig: &Swig, time: usize, node: NodeId, conditioning: Vec<NodeId>, targets: Vec<NodeId>) -> Result<ConditionReport, GraphError> {
    let mut failing = None;
    for &t in &targets {
        if let Some(path) = swig.find_open_path(&[node], &[t], &conditioning)? {
            failing = Some((t, path));
            break;
        }
    }
    let label = |v: NodeId| swig.label(v).to_string();
    Ok(ConditionReport {
        time,
        node: label(node),
        conditioning: conditioning.iter().map(|&v| label(v)).collect(),
        targets: targets.iter().map(|&v| label(v)).collect(),
        holds: failing.is_none(),
        failing_target: failing.as_ref().map(|(t, _)| label(*t)),
        witness: failing.as_ref().map(|(_, p)| swig.render_path(p)),
        witness_nodes: failing
            .as_ref()
            .map(|(_, p)| p.nodes().iter().map(|&v| swig.graph().name(v).to_string()).collect())
            .unwrap_or_default(),
    })
}

/// MAR of the hypothetical outcomes under the all-zero ICE regime.
///
/// For each ICE node `A_k` (in temporal order) checks, on the SWIG that
/// sets every ICE node to 0,
/// `A_k ⊥ (later covariates, Y) | treatments, earlier ICEs, history(A_k)`,
/// where treatments are the non-ICE nodes tagged `treatment` and later
/// covariates are covariate-tagged descendants of `A_k`.
pub fn check_mar_hypothetical<S: AsRef<str>>(
    g: &CausalGraph,
    ice_nodes: &[S],
    history: &HashMap<String, Vec<String>>,
    outcome: &str,
) -> Result<IdentifiabilityReport, GraphError> {
    let ice = g.ids(ice_nodes)?;
    check_order(g, &ice)?;
    let y = g.id(outcome)?;
    let hist = resolve_history(g, &ice, history)?;
    let interventions: Vec<(&str, i64)> = ice.iter().map(|&v| (g.name(v), 0)).collect();
    let swig = swig_transform(g, &interventions)?;

    let treatments: Vec<NodeId> = (0..g.len())
        .filter(|&v| g.role(v) == Role::Treatment && !ice.contains(&v))
        .collect();

    let mut conditions = Vec::with_capacity(ice.len());
    for (k, &a) in ice.iter().enumerate() {
        let mut z = treatments.clone();
        for &earlier in &ice[..k] {
            push_unique(&mut z, earlier);
        }
        for &h in &hist[k] {
            push_unique(&mut z, h);
        }
        z.retain(|&v| v != a);
        let desc = g.descendants_mask(&[a]);
        let mut targets = vec![y];
        for v in 0..g.len() {
            if v != a && desc[v] && g.role(v) == Role::Covariate && !z.contains(&v) && v != y {
                targets.push(v);
            }
        }
        conditions.push(evaluate(&swig, k + 1, a, z, targets)?);
    }
    Ok(IdentifiabilityReport { conditions })
}

/// Sequential exchangeability `Y^ā ⊥ A_k | Ā_{k−1}, L̄_k` for every `k`,
/// checked on the SWIG that intervenes on all listed treatment nodes.
pub fn check_sequential_exchangeability<S: AsRef<str>>(
    g: &CausalGraph,
    treatment_nodes: &[S],
    history: &HashMap<String, Vec<String>>,
    outcome: &str,
) -> Result<IdentifiabilityReport, GraphError> {
    let treat = g.ids(treatment_nodes)?;
    check_order(g, &treat)?;
    let y = g.id(outcome)?;
    let hist = resolve_history(g, &treat, history)?;
    let interventions: Vec<(&str, i64)> = treat.iter().map(|&v| (g.name(v), 0)).collect();
    let swig = swig_transform(g, &interventions)?;
    let mut conditions = Vec::with_capacity(treat.len());
    for (k, &a) in treat.iter().enumerate() {
        let mut z: Vec<NodeId> = Vec::new();
        for &earlier in &treat[..k] {
            push_unique(&mut z, earlier);
        }
        for &h in &hist[k] {
            push_unique(&mut z, h);
        }
        z.retain(|&v| v != a);
        conditions.push(evaluate(&swig, k + 1, a, z, vec![y])?);
    }
    Ok(IdentifiabilityReport { conditions })
}

/// Parses `"A1:L0,L1;A2:L0,L1,L2"`.
pub fn parse_history(spec: &str) -> Result<HashMap<String, Vec<String>>, GraphError> {
    let mut out = HashMap::new();
    for part in spec.split(';').map(str::trim).filter(|s| !s.is_empty()) {
        let (node, list) = part
            .split_once(':')
            .ok_or_else(|| GraphError::Invalid(format!("history entry '{part}' lacks ':'")))?;
        let vars = list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect();
        out.insert(node.trim().to_string(), vars);
    }
    Ok(out)
}
