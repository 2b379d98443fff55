//! Parametric G-formula estimators of `E(Y^{a0, no ICE})`.
//!
//! All models are linear in the main effects of the history, so the
//! sequential integration collapses to plugging predicted conditional means
//! into the next model.

use serde::{Deserialize, Serialize};

use crate::data::{EstimateResult, TrialDataset};
use crate::glm::FittedLinearModel;
use crate::model::{collect_linear, group_label, in_group, target_value, variable_name, ArmPooling, EstimateError, FitPopulation, HistoryLayout};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GFormulaSpec {
    pub population: FitPopulation,
    pub pooling: ArmPooling,
}

impl GFormulaSpec {
    pub fn new(population: FitPopulation, pooling: ArmPooling) -> Self {
        GFormulaSpec { population, pooling }
    }
}

fn layout_for(spec: &GFormulaSpec, data: &TrialDataset, visit: usize) -> HistoryLayout {
    HistoryLayout {
        include_a0: spec.pooling == ArmPooling::Pooled,
        past_ice: match spec.population {
            FitPopulation::AllData => visit - 1,
            FitPopulation::IceFree => 0,
        },
        l_through: visit - 1,
        dims: data.dims().to_vec(),
    }
}

/// Fits the model for component `component` of the variable at `visit`
/// (`K + 1` is the outcome) within `group`.
fn fit_visit_model(
    data: &TrialDataset,
    spec: &GFormulaSpec,
    group: Option<bool>,
    visit: usize,
    component: usize,
) -> Result<FittedLinearModel<f64>, EstimateError> {
    let k_total = data.k();
    let layout = layout_for(spec, data, visit);
    let context = format!(
        "{} model at time {visit} ({})",
        variable_name(visit, component, k_total, data.dims()),
        group_label(group)
    );
    let population = spec.population;
    collect_linear(
        data,
        &layout,
        |s| in_group(s, group) && (population == FitPopulation::AllData || s.ice_free_through(visit - 1)),
        |s| target_value(s, visit, component, k_total),
        &context,
    )
}

fn arm_means(sums: [f64; 2], counts: [usize; 2]) -> Result<EstimateResult, EstimateError> {
    for arm in 0..2 {
        if counts[arm] == 0 {
            return Err(EstimateError::EmptyStratum(format!("arm {arm}")));
        }
    }
    Ok(EstimateResult::new(
        sums[1] / counts[1] as f64,
        sums[0] / counts[0] as f64,
        counts,
    ))
}

/// Sequential G-formula for any `K`.
///
/// Fits `L_1, …, L_K` and `Y` models per `spec`, then for every subject
/// predicts `L̂_k` with ICEs set to 0 and earlier covariates replaced by
/// their predictions, predicts `Ŷ`, and averages `Ŷ` within each arm.
pub fn gformula_sequential(data: &TrialDataset, spec: &GFormulaSpec) -> Result<EstimateResult, EstimateError> {
    let k_total = data.k();
    let dims = data.dims();
    let mut sums = [0.0; 2];
    let mut counts = [0usize; 2];
    for group in spec.pooling.groups() {
        // models[visit - 1][component]
        let mut models: Vec<Vec<FittedLinearModel<f64>>> = Vec::with_capacity(k_total + 1);
        for visit in 1..=k_total + 1 {
            let ncomp = if visit == k_total + 1 { 1 } else { dims[visit] };
            let fitted = (0..ncomp)
                .map(|c| fit_visit_model(data, spec, group, visit, c))
                .collect::<Result<Vec<_>, _>>()?;
            models.push(fitted);
        }
        for s in data.subjects().iter().filter(|s| in_group(s, group)) {
            let mut history: Vec<Vec<f64>> = vec![s.l0.clone()];
            for visit in 1..=k_total + 1 {
                let layout = layout_for(spec, data, visit);
                let row = layout.row(s.a0, |_| false, |k| history[k].clone());
                let pred: Vec<f64> = models[visit - 1]
                    .iter()
                    .map(|m| m.predict(&row).expect("layout matches model"))
                    .collect();
                history.push(pred);
            }
            let arm = s.arm();
            sums[arm] += history[k_total + 1][0];
            counts[arm] += 1;
        }
    }
    arm_means(sums, counts)
}

/// Single-ICE G-formula: fit the outcome model per `spec` and average its
/// predictions at `A1 = 0` over each arm's observed `(L0, L1)`.
pub fn gformula_single(data: &TrialDataset, spec: &GFormulaSpec) -> Result<EstimateResult, EstimateError> {
    if data.k() != 1 {
        return Err(EstimateError::Invalid(format!("single-timepoint G-formula needs K = 1, data has K = {}", data.k())));
    }
    let mut sums = [0.0; 2];
    let mut counts = [0usize; 2];
    for group in spec.pooling.groups() {
        let model = fit_visit_model(data, spec, group, 2, 0)?;
        let layout = layout_for(spec, data, 2);
        for (i, s) in data.subjects().iter().enumerate().filter(|(_, s)| in_group(s, group)) {
            let l1 = s.covariates(1).ok_or_else(|| {
                EstimateError::Invalid(format!("subject {i} has L1 missing; the single-timepoint estimator averages observed L1"))
            })?;
            let row = layout.row(s.a0, |_| false, |k| if k == 0 { s.l0.clone() } else { l1.to_vec() });
            sums[s.arm()] += model.predict(&row).expect("layout matches model");
            counts[s.arm()] += 1;
        }
    }
    arm_means(sums, counts)
}

/// Two-ICE G-formula in closed form, per arm among the ICE-free.
///
/// With `E(Y | L0, L1, L2) = β30 + β31 L0 + β32 L1 + β33 L2` fitted on
/// `A1 = A2 = 0` and `E(L2 | L0, L1) = β20 + β21 L0 + β22 L1` on `A1 = 0`,
/// the arm mean is the collapsed linear predictor
/// `β30 + β33 β20 + (β31 + β33 β21) L0 + (β32 + β33 β22) L1`
/// averaged over the arm's empirical `(L0, L1)`.
pub fn gformula_two_timepoint_closed_form(data: &TrialDataset) -> Result<EstimateResult, EstimateError> {
    if data.k() != 2 {
        return Err(EstimateError::Invalid(format!("two-timepoint closed form needs K = 2, data has K = {}", data.k())));
    }
    let spec = GFormulaSpec::new(FitPopulation::IceFree, ArmPooling::PerArm);
    let dims = data.dims();
    let (p0, p1, p2) = (dims[0], dims[1], dims[2]);
    let mut means = [0.0; 2];
    let mut counts = [0usize; 2];
    for arm in [false, true] {
        let group = Some(arm);
        let l2_models = (0..p2)
            .map(|c| fit_visit_model(data, &spec, group, 2, c))
            .collect::<Result<Vec<_>, _>>()?;
        let y_model = fit_visit_model(data, &spec, group, 3, 0)?;
        // Coefficient layout: intercept, L0 components, L1 components[, L2 components].
        let b3 = &y_model.coefficients;
        let mut intercept = b3[0];
        let mut slopes: Vec<f64> = b3[1..1 + p0 + p1].to_vec();
        for (c, m) in l2_models.iter().enumerate() {
            let b33 = b3[1 + p0 + p1 + c];
            intercept += b33 * m.coefficients[0];
            for (s, b2) in slopes.iter_mut().zip(&m.coefficients[1..]) {
                *s += b33 * b2;
            }
        }
        let mut mean_history = vec![0.0; p0 + p1];
        let mut n = 0usize;
        for (i, s) in data.subjects().iter().enumerate().filter(|(_, s)| s.a0 == arm) {
            let l1 = s
                .covariates(1)
                .ok_or_else(|| EstimateError::Invalid(format!("subject {i} has L1 missing")))?;
            for (acc, v) in mean_history.iter_mut().zip(s.l0.iter().chain(l1)) {
                *acc += v;
            }
            n += 1;
        }
        if n == 0 {
            return Err(EstimateError::EmptyStratum(format!("arm {}", u8::from(arm))));
        }
        let a = usize::from(arm);
        means[a] = intercept + slopes.iter().zip(&mean_history).map(|(b, m)| b * m / n as f64).sum::<f64>();
        counts[a] = n;
    }
    Ok(EstimateResult::new(means[1], means[0], counts))
}
