//! Inverse probability of ICE weighting (Hájek form).

use serde::{Deserialize, Serialize};

use crate::data::{EstimateResult, TrialDataset};
use crate::glm::{self, Design, FitDiagnostic, GlmError};
use crate::model::{group_label, in_group, ArmPooling, EstimateError, FitPopulation, HistoryLayout};

/// Fitted P(no ICE) below this is treated as a positivity violation.
pub const POSITIVITY_FLOOR: f64 = 1e-12;
/// Inverse of the 1:1 randomisation probability.
pub const RANDOMISATION_FACTOR: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSource {
    FittedLogistic,
    /// Per-subject `P(A_k = 0 | history)` supplied by the caller.
    SuppliedTrueProbabilities,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    /// Cap weights at a fixed value (> 1).
    Cap(f64),
    /// Cap weights at this quantile of the retained weights, e.g. 0.99.
    Quantile(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IpwSpec {
    pub population: FitPopulation,
    pub pooling: ArmPooling,
    pub weight_source: WeightSource,
    pub truncation: Option<Truncation>,
}

impl IpwSpec {
    pub fn fitted(population: FitPopulation, pooling: ArmPooling) -> Self {
        IpwSpec {
            population,
            pooling,
            weight_source: WeightSource::FittedLogistic,
            truncation: None,
        }
    }

    pub fn true_weights() -> Self {
        IpwSpec {
            population: FitPopulation::IceFree,
            pooling: ArmPooling::PerArm,
            weight_source: WeightSource::SuppliedTrueProbabilities,
            truncation: None,
        }
    }

    fn validate(&self) -> Result<(), EstimateError> {
        match self.truncation {
            Some(Truncation::Cap(c)) if !(c > 1.0) => Err(EstimateError::Invalid(format!("weight cap must exceed 1, got {c}"))),
            Some(Truncation::Quantile(q)) if !(q > 0.0 && q < 1.0) => {
                Err(EstimateError::Invalid(format!("truncation quantile must lie in (0, 1), got {q}")))
            }
            _ => Ok(()),
        }
    }
}

fn ice_layout(spec: &IpwSpec, data: &TrialDataset, k: usize) -> HistoryLayout {
    HistoryLayout {
        include_a0: spec.pooling == ArmPooling::Pooled,
        past_ice: match spec.population {
            FitPopulation::AllData => k - 1,
            FitPopulation::IceFree => 0,
        },
        l_through: k,
        dims: data.dims().to_vec(),
    }
}

/// Per-subject `P̂(A_k = 0 | history)` for subjects ICE-free through `K`,
/// `probs[i][k-1]`; other subjects get `None`.
fn fitted_no_ice_probabilities(data: &TrialDataset, spec: &IpwSpec) -> Result<Vec<Option<Vec<f64>>>, EstimateError> {
    let k_total = data.k();
    let n = data.n();
    let retained = data.ice_free_mask(k_total);
    let mut probs: Vec<Option<Vec<f64>>> = retained
        .iter()
        .map(|&r| if r { Some(Vec::with_capacity(k_total)) } else { None })
        .collect();
    for k in 1..=k_total {
        let layout = ice_layout(spec, data, k);
        let names = layout.names();
        for group in spec.pooling.groups() {
            let context = format!("ICE model at time {k} ({})", group_label(group));
            let mut design = Design::with_intercept(&names);
            let mut response = Vec::new();
            for s in data.subjects() {
                if !in_group(s, group) || (spec.population == FitPopulation::IceFree && !s.ice_free_through(k - 1)) {
                    continue;
                }
                let (Some(row), Some(a)) = (layout.observed_row(s), s.ice[k - 1]) else {
                    continue;
                };
                design.push_row(&row).expect("layout width");
                response.push(if a { 1.0 } else { 0.0 });
            }
            let model = match glm::logistic_fit(&design, &response) {
                Ok(m) => Some(m),
                // Nobody in the stratum had the ICE: the fitted P(no ICE) is 1.
                Err(GlmError::OneClass { class: 0 }) => None,
                Err(source) => return Err(EstimateError::Fit { context, source }),
            };
            if let Some(m) = &model {
                // Quasi-separation drives some coefficients to infinity while the
                // fitted probabilities still converge; the positivity guard below
                // catches any retained subject whose P(no ICE) collapses to 0.
                let quasi = matches!(m.diagnostic, Some(FitDiagnostic::QuasiSeparation { .. }));
                if quasi {
                    log::debug!("{context}: {}", m.diagnostic.as_ref().unwrap());
                }
                if !m.converged && !quasi {
                    return Err(EstimateError::NotConverged {
                        context,
                        diagnostic: m.diagnostic.as_ref().map_or_else(String::new, |d| d.to_string()),
                    });
                }
            }
            for i in 0..n {
                let s = &data.subjects()[i];
                if !in_group(s, group) {
                    continue;
                }
                let Some(p) = probs[i].as_mut() else { continue };
                let q = match &model {
                    Some(m) => {
                        let row = layout.observed_row(s).expect("retained subjects are observed");
                        m.predict_complement(&row).expect("layout matches model")
                    }
                    None => 1.0,
                };
                p.push(q);
            }
        }
    }
    Ok(probs)
}

/// Unstabilised weights `W_i = 2 × ∏_k 1 / P(A_k = 0 | history_i)` for
/// subjects ICE-free through `K`; `None` for everyone else.
///
/// `true_probabilities[i][k-1]` must be given when the spec asks for
/// supplied probabilities; only retained subjects' entries are read.
pub fn compute_weights(
    data: &TrialDataset,
    spec: &IpwSpec,
    true_probabilities: Option<&[Vec<f64>]>,
) -> Result<Vec<Option<f64>>, EstimateError> {
    spec.validate()?;
    let k_total = data.k();
    let probs: Vec<Option<Vec<f64>>> = match spec.weight_source {
        WeightSource::FittedLogistic => fitted_no_ice_probabilities(data, spec)?,
        WeightSource::SuppliedTrueProbabilities => {
            let table = true_probabilities
                .ok_or_else(|| EstimateError::Invalid("true probabilities requested but not supplied".into()))?;
            if table.len() != data.n() {
                return Err(EstimateError::Invalid(format!(
                    "true probability table has {} rows for {} subjects",
                    table.len(),
                    data.n()
                )));
            }
            data.ice_free_mask(k_total)
                .iter()
                .zip(table)
                .map(|(&keep, row)| keep.then(|| row.clone()))
                .collect()
        }
    };

    let mut weights = Vec::with_capacity(data.n());
    for (i, p) in probs.into_iter().enumerate() {
        let Some(p) = p else {
            weights.push(None);
            continue;
        };
        if p.len() != k_total {
            return Err(EstimateError::Invalid(format!("subject {i}: expected {k_total} probabilities, got {}", p.len())));
        }
        let mut w = RANDOMISATION_FACTOR;
        for (k, &q) in p.iter().enumerate() {
            if !(q >= POSITIVITY_FLOOR) || q > 1.0 {
                return Err(EstimateError::Positivity {
                    subject: i,
                    k: k + 1,
                    probability: q,
                });
            }
            w /= q;
        }
        weights.push(Some(w));
    }

    if let Some(t) = spec.truncation {
        let cap = match t {
            Truncation::Cap(c) => c,
            Truncation::Quantile(q) => {
                let mut ws: Vec<f64> = weights.iter().flatten().copied().collect();
                if ws.is_empty() {
                    return Err(EstimateError::EmptyStratum("weighted subjects".into()));
                }
                ws.sort_by(f64::total_cmp);
                crate::stats::quantile_sorted(&ws, q)
            }
        };
        for w in weights.iter_mut().flatten() {
            *w = w.min(cap);
        }
    }
    Ok(weights)
}

/// Hájek estimator `Σ W Y / Σ W` per arm over the weighted subjects.
pub fn weighted_arm_means(data: &TrialDataset, weights: &[Option<f64>]) -> Result<EstimateResult, EstimateError> {
    let mut num = [0.0; 2];
    let mut den = [0.0; 2];
    let mut used = [0usize; 2];
    for (s, w) in data.subjects().iter().zip(weights) {
        let (Some(w), Some(y)) = (w, s.y) else { continue };
        let a = s.arm();
        num[a] += w * y;
        den[a] += w;
        used[a] += 1;
    }
    for arm in 0..2 {
        if used[arm] == 0 || !(den[arm] > 0.0) {
            return Err(EstimateError::EmptyStratum(format!("ICE-free weighted subjects in arm {arm}")));
        }
    }
    Ok(EstimateResult::new(num[1] / den[1], num[0] / den[0], used))
}

pub fn ipw_estimate(
    data: &TrialDataset,
    spec: &IpwSpec,
    true_probabilities: Option<&[Vec<f64>]>,
) -> Result<EstimateResult, EstimateError> {
    let w = compute_weights(data, spec, true_probabilities)?;
    weighted_arm_means(data, &w)
}
