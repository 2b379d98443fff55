//! Causal DAGs, single-world intervention graphs (SWIGs), d-separation and
//! the graphical identifiability checks used to justify the estimators.

mod checks;
mod dag;
mod dsep;
mod parse;
mod swig;

pub use checks::{check_mar_hypothetical, parse_history, check_sequential_exchangeability, ConditionReport, IdentifiabilityReport};
pub use dag::{CausalGraph, NodeId, Role};
pub use dsep::{d_separated, OpenPath, PathStep};
pub use parse::{parse_graph, read_graph};
pub use swig::{swig_transform, Swig};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("unknown node '{0}'")]
    UnknownNode(String),
    #[error("duplicate node '{0}'")]
    DuplicateNode(String),
    #[error("graph has a cycle through '{0}'")]
    Cycle(String),
    #[error("node sets overlap at '{0}'")]
    OverlappingSets(String),
    #[error("cannot intervene on the outcome node '{0}'")]
    InterveneOnOutcome(String),
    #[error("ICE/treatment nodes are not in temporal order: '{later}' is an ancestor of '{earlier}'")]
    Misordered { earlier: String, later: String },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
}
