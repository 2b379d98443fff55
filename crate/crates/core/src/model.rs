//! Pieces shared by the estimators: model-fitting options, covariate
//! history layout and the estimation error type.

use serde::{Deserialize, Serialize};

use crate::data::{Subject, TrialDataset};
use crate::glm::{self, Design, GlmError};

/// Which subjects a nuisance model is fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitPopulation {
    /// Everyone with the modelled variable observed; past ICE indicators
    /// enter as covariates.
    AllData,
    /// Only subjects ICE-free up to the modelled time point; no ICE covariates.
    IceFree,
}

/// One model with the randomised arm as a covariate, or one model per arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArmPooling {
    Pooled,
    PerArm,
}

impl FitPopulation {
    pub fn as_str(self) -> &'static str {
        match self {
            FitPopulation::AllData => "all",
            FitPopulation::IceFree => "icefree",
        }
    }
}

impl ArmPooling {
    pub fn as_str(self) -> &'static str {
        match self {
            ArmPooling::Pooled => "pooled",
            ArmPooling::PerArm => "perarm",
        }
    }

    /// Subject groups that get their own models, as (label, arm filter).
    pub(crate) fn groups(self) -> Vec<Option<bool>> {
        match self {
            ArmPooling::Pooled => vec![None],
            ArmPooling::PerArm => vec![Some(false), Some(true)],
        }
    }
}

pub(crate) fn group_label(group: Option<bool>) -> &'static str {
    match group {
        None => "pooled arms",
        Some(false) => "arm 0",
        Some(true) => "arm 1",
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EstimateError {
    #[error("{context}: {source}")]
    Fit {
        context: String,
        #[source]
        source: GlmError,
    },
    #[error("{context}: {rows} usable rows, need at least {needed}")]
    TooFewRows { context: String, rows: usize, needed: usize },
    #[error("{0}: no subjects available")]
    EmptyStratum(String),
    #[error("{context}: weight model did not converge ({diagnostic})")]
    NotConverged { context: String, diagnostic: String },
    #[error("positivity violation: subject {subject}, time {k}, P(no ICE) = {probability:e}")]
    Positivity { subject: usize, k: usize, probability: f64 },
    #[error("{0}")]
    Invalid(String),
}

/// Columns used to model a variable measured at visit `visit`
/// (`visit = K + 1` stands for the outcome).
#[derive(Debug, Clone)]
pub(crate) struct HistoryLayout {
    pub include_a0: bool,
    /// ICE indicators `A_1..A_{past_ice}` as covariates.
    pub past_ice: usize,
    /// Covariates `L_0..L_{l_through}` (all components).
    pub l_through: usize,
    pub dims: Vec<usize>,
}

impl HistoryLayout {
    pub fn names(&self) -> Vec<String> {
        let mut names = Vec::new();
        if self.include_a0 {
            names.push("a0".to_string());
        }
        names.extend((1..=self.past_ice).map(|j| format!("a{j}")));
        for k in 0..=self.l_through {
            names.extend((1..=self.dims[k]).map(|c| format!("l{k}_{c}")));
        }
        names
    }

    pub fn width(&self) -> usize {
        usize::from(self.include_a0) + self.past_ice + self.dims[..=self.l_through].iter().sum::<usize>()
    }

    /// Row from explicit values: arm, ICE indicators and covariate vectors.
    pub fn row(&self, a0: bool, ice: impl Fn(usize) -> bool, l: impl Fn(usize) -> Vec<f64>) -> Vec<f64> {
        let mut row = Vec::with_capacity(self.width());
        if self.include_a0 {
            row.push(if a0 { 1.0 } else { 0.0 });
        }
        for j in 1..=self.past_ice {
            row.push(if ice(j) { 1.0 } else { 0.0 });
        }
        for k in 0..=self.l_through {
            row.extend(l(k));
        }
        row
    }

    /// Observed history row, or `None` if any required value is missing.
    pub fn observed_row(&self, s: &Subject) -> Option<Vec<f64>> {
        let mut row = Vec::with_capacity(self.width());
        if self.include_a0 {
            row.push(if s.a0 { 1.0 } else { 0.0 });
        }
        for j in 1..=self.past_ice {
            row.push(if s.ice[j - 1]? { 1.0 } else { 0.0 });
        }
        for k in 0..=self.l_through {
            row.extend_from_slice(s.covariates(k)?);
        }
        Some(row)
    }
}

/// Outcome or covariate component measured at `visit` (K + 1 is Y).
pub(crate) fn target_value(s: &Subject, visit: usize, component: usize, k_total: usize) -> Option<f64> {
    if visit == k_total + 1 {
        s.y
    } else {
        s.covariates(visit).map(|v| v[component])
    }
}

pub(crate) fn in_group(s: &Subject, group: Option<bool>) -> bool {
    group.is_none_or(|a| s.a0 == a)
}

/// Design plus response over the rows passing `keep`; enforces `p + 2` rows.
pub(crate) fn collect_linear(
    data: &TrialDataset,
    layout: &HistoryLayout,
    keep: impl Fn(&Subject) -> bool,
    response: impl Fn(&Subject) -> Option<f64>,
    context: &str,
) -> Result<glm::FittedLinearModel<f64>, EstimateError> {
    let names = layout.names();
    let mut design = Design::with_intercept(&names);
    let mut y = Vec::new();
    for s in data.subjects() {
        if !keep(s) {
            continue;
        }
        let (Some(r), Some(v)) = (layout.observed_row(s), response(s)) else {
            continue;
        };
        design.push_row(&r).expect("layout width");
        y.push(v);
    }
    let needed = names.len() + 1 + 2;
    if y.is_empty() {
        return Err(EstimateError::EmptyStratum(context.to_string()));
    }
    if y.len() < needed {
        return Err(EstimateError::TooFewRows {
            context: context.to_string(),
            rows: y.len(),
            needed,
        });
    }
    glm::ols_fit(&design, &y).map_err(|source| EstimateError::Fit {
        context: context.to_string(),
        source,
    })
}

pub(crate) fn variable_name(visit: usize, component: usize, k_total: usize, dims: &[usize]) -> String {
    if visit == k_total + 1 {
        "Y".to_string()
    } else if dims[visit] == 1 {
        format!("L{visit}")
    } else {
        format!("L{visit}[{}]", component + 1)
    }
}
