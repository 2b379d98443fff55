//! Multiple imputation of post-ICE data and the naive complete-case estimator.

use rand::RngCore;
use rand_distr::{ChiSquared, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{EstimateResult, Subject, TrialDataset};
use crate::glm::{self, Design, FittedLinearModel};
use crate::model::{group_label, in_group, variable_name, ArmPooling, EstimateError, HistoryLayout};
use crate::rng::{derive_seed, std_normal, stream, DOMAIN_IMPUTE};

pub const DEFAULT_IMPUTATIONS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiSpec {
    pub m: usize,
    pub pooling: ArmPooling,
    pub seed: u64,
}

impl MiSpec {
    pub fn new(m: usize, pooling: ArmPooling, seed: u64) -> Result<Self, EstimateError> {
        if m < 2 {
            return Err(EstimateError::Invalid(format!("number of imputations must be at least 2, got {m}")));
        }
        Ok(MiSpec { m, pooling, seed })
    }
}

/// Removes every `L` and `Y` recorded after a subject's first ICE, and the
/// later ICE indicators, leaving monotone missingness.
pub fn delete_post_ice(data: &TrialDataset) -> TrialDataset {
    let subjects = data
        .subjects()
        .iter()
        .map(|s| {
            let mut s = s.clone();
            if let Some(k_star) = s.first_ice() {
                for j in k_star..s.l.len() {
                    s.l[j] = None;
                    s.ice[j] = None;
                }
                s.y = None;
            }
            s
        })
        .collect();
    TrialDataset::new(data.schema().clone(), subjects).expect("deleting a suffix keeps the record monotone")
}

/// One imputation model: component `component` of visit `visit`, regressed
/// on the arm (if pooled), the full history before `visit` and the earlier
/// components of the same visit.
struct ImputationModel {
    group: Option<bool>,
    visit: usize,
    component: usize,
    layout: HistoryLayout,
    fit: FittedLinearModel<f64>,
    chi: ChiSquared<f64>,
}

fn predictor_row(layout: &HistoryLayout, s: &Subject, visit: usize, component: usize, k_total: usize) -> Option<Vec<f64>> {
    let mut row = layout.observed_row(s)?;
    if visit <= k_total {
        row.extend_from_slice(&s.covariates(visit)?[..component]);
    }
    Some(row)
}

fn value_at(s: &Subject, visit: usize, component: usize, k_total: usize) -> Option<f64> {
    if visit == k_total + 1 {
        s.y
    } else {
        s.covariates(visit).map(|v| v[component])
    }
}

fn fit_imputation_model(
    data: &TrialDataset,
    pooling: ArmPooling,
    group: Option<bool>,
    visit: usize,
    component: usize,
) -> Result<ImputationModel, EstimateError> {
    let k_total = data.k();
    let layout = HistoryLayout {
        include_a0: pooling == ArmPooling::Pooled,
        past_ice: 0,
        l_through: visit - 1,
        dims: data.dims().to_vec(),
    };
    let mut names = layout.names();
    if visit <= k_total {
        names.extend((1..=component).map(|c| format!("l{visit}_{c}")));
    }
    let context = format!(
        "imputation model for {} ({})",
        variable_name(visit, component, k_total, data.dims()),
        group_label(group)
    );
    let mut design = Design::with_intercept(&names);
    let mut y = Vec::new();
    for s in data.subjects().iter().filter(|s| in_group(s, group)) {
        let (Some(v), Some(row)) = (value_at(s, visit, component, k_total), predictor_row(&layout, s, visit, component, k_total)) else {
            continue;
        };
        design.push_row(&row).expect("layout width");
        y.push(v);
    }
    let needed = names.len() + 1 + 2;
    if y.is_empty() {
        return Err(EstimateError::EmptyStratum(context));
    }
    if y.len() < needed {
        return Err(EstimateError::TooFewRows {
            context,
            rows: y.len(),
            needed,
        });
    }
    let fit = glm::ols_fit(&design, &y).map_err(|source| EstimateError::Fit {
        context: context.clone(),
        source,
    })?;
    let chi = ChiSquared::new(fit.residual_df() as f64).map_err(|e| EstimateError::Invalid(format!("{context}: {e}")))?;
    Ok(ImputationModel {
        group,
        visit,
        component,
        layout,
        fit,
        chi,
    })
}

impl ImputationModel {
    /// Posterior draw `(β*, σ*)` under the noninformative prior:
    /// `σ*² = RSS / χ²_df`, `β* = β̂ + σ* M z` with `M Mᵀ = (XᵀX)⁻¹`.
    fn draw_parameters(&self, rng: &mut dyn RngCore) -> (Vec<f64>, f64) {
        let df = self.fit.residual_df() as f64;
        let rss = self.fit.residual_variance * df;
        let chi2: f64 = self.chi.sample(rng);
        let sigma = (rss / chi2).sqrt();
        let p = self.fit.n_coefficients();
        let z: Vec<f64> = (0..p).map(|_| std_normal(rng)).collect();
        let root = self.fit.unscaled_covariance_root();
        let beta = (0..p)
            .map(|i| self.fit.coefficients[i] + sigma * glm::dot(&root[i * p..(i + 1) * p], &z))
            .collect();
        (beta, sigma)
    }
}

fn fit_all_models(data: &TrialDataset, pooling: ArmPooling) -> Result<Vec<ImputationModel>, EstimateError> {
    let k_total = data.k();
    let mut models = Vec::new();
    for visit in 1..=k_total + 1 {
        let ncomp = if visit == k_total + 1 { 1 } else { data.dims()[visit] };
        for group in pooling.groups() {
            for c in 0..ncomp {
                models.push(fit_imputation_model(data, pooling, group, visit, c)?);
            }
        }
    }
    Ok(models)
}

fn needs_imputation(s: &Subject, visit: usize, k_total: usize) -> bool {
    if visit == k_total + 1 {
        s.y.is_none()
    } else {
        s.l[visit - 1].is_none()
    }
}

fn impute_once(data: &TrialDataset, models: &[ImputationModel], rng: &mut dyn RngCore) -> TrialDataset {
    let k_total = data.k();
    let dims = data.dims();
    let mut subjects: Vec<Subject> = data.subjects().to_vec();
    // Flags fixed before filling so that later components/visits see the imputed values.
    let missing: Vec<Vec<bool>> = subjects
        .iter()
        .map(|s| (1..=k_total + 1).map(|v| needs_imputation(s, v, k_total)).collect())
        .collect();
    for model in models {
        let (beta, sigma) = model.draw_parameters(rng);
        for (s, miss) in subjects.iter_mut().zip(&missing) {
            if !in_group(s, model.group) || !miss[model.visit - 1] {
                continue;
            }
            if model.visit <= k_total && model.component == 0 {
                s.l[model.visit - 1] = Some(vec![0.0; dims[model.visit]]);
            }
            let row = predictor_row(&model.layout, s, model.visit, model.component, k_total)
                .expect("earlier values are observed or already imputed");
            let mean = beta[0] + glm::dot(&beta[1..], &row);
            let value = mean + sigma * std_normal(rng);
            if model.visit == k_total + 1 {
                s.y = Some(value);
            } else {
                s.l[model.visit - 1].as_mut().unwrap()[model.component] = value;
            }
        }
    }
    for s in &mut subjects {
        for a in &mut s.ice {
            a.get_or_insert(false);
        }
    }
    TrialDataset::new(data.schema().clone(), subjects).expect("completed records are fully observed")
}

/// Draws `spec.m` completed datasets from monotone data by sequential normal
/// linear regression with proper parameter draws. Imputation `t` uses the
/// stream `(derive_seed(spec.seed, DOMAIN_IMPUTE), t)`.
///
/// Missing ICE indicators in the completed datasets are set to 0: the imputed
/// values describe the course without the event.
pub fn impute_sequential(data: &TrialDataset, spec: &MiSpec) -> Result<Vec<TrialDataset>, EstimateError> {
    let models = fit_all_models(data, spec.pooling)?;
    let base = derive_seed(spec.seed, DOMAIN_IMPUTE);
    Ok((0..spec.m)
        .into_par_iter()
        .map(|t| impute_once(data, &models, &mut stream(base, t as u64)))
        .collect())
}

fn all_subject_arm_means(data: &TrialDataset) -> Result<EstimateResult, EstimateError> {
    let mut sums = [0.0; 2];
    let mut counts = [0usize; 2];
    for s in data.subjects() {
        let y = s.y.ok_or_else(|| EstimateError::Invalid("completed dataset has a missing outcome".into()))?;
        sums[s.arm()] += y;
        counts[s.arm()] += 1;
    }
    for arm in 0..2 {
        if counts[arm] == 0 {
            return Err(EstimateError::EmptyStratum(format!("arm {arm}")));
        }
    }
    Ok(EstimateResult::new(sums[1] / counts[1] as f64, sums[0] / counts[0] as f64, counts))
}

/// Average over imputations of the per-imputation arm means.
pub fn mi_estimate(data: &TrialDataset, spec: &MiSpec) -> Result<EstimateResult, EstimateError> {
    let monotone = delete_post_ice(data);
    let completed = impute_sequential(&monotone, spec)?;
    let per: Vec<EstimateResult> = completed.iter().map(all_subject_arm_means).collect::<Result<_, _>>()?;
    let m = per.len() as f64;
    let treated = per.iter().map(|r| r.mean_treated).sum::<f64>() / m;
    let control = per.iter().map(|r| r.mean_control).sum::<f64>() / m;
    Ok(EstimateResult::new(treated, control, per[0].n_used))
}

/// Arm means of `Y` among subjects ICE-free at every visit.
pub fn naive_estimate(data: &TrialDataset) -> Result<EstimateResult, EstimateError> {
    let k = data.k();
    let mut sums = [0.0; 2];
    let mut counts = [0usize; 2];
    for s in data.subjects().iter().filter(|s| s.ice_free_through(k)) {
        if let Some(y) = s.y {
            sums[s.arm()] += y;
            counts[s.arm()] += 1;
        }
    }
    for arm in 0..2 {
        if counts[arm] == 0 {
            return Err(EstimateError::EmptyStratum(format!("ICE-free subjects in arm {arm}")));
        }
    }
    Ok(EstimateResult::new(sums[1] / counts[1] as f64, sums[0] / counts[0] as f64, counts))
}
