//! Replicated simulation studies, bootstrap standard errors and the
//! box-plot summaries derived from them.

use std::fmt;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{EstimateResult, TrialDataset};
use crate::gformula::{gformula_sequential, GFormulaSpec};
use crate::ipw::{ipw_estimate, IpwSpec, Truncation};
use crate::mi::{mi_estimate, naive_estimate, MiSpec, DEFAULT_IMPUTATIONS};
use crate::model::{ArmPooling, EstimateError, FitPopulation};
use crate::rng::{derive_seed, stream, DOMAIN_BOOTSTRAP, DOMAIN_ESTIMATE, DOMAIN_SIMULATE};
use crate::sim::{oracle_contrast, simulate, true_contrast, true_ice_free_probabilities, DgpParams, IceMechanism, SimError, ORACLE_DRAWS};
use crate::stats::{mean, quantile_sorted, sample_sd};

/// One entry of the estimator registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    Naive,
    GFormula(FitPopulation, ArmPooling),
    Ipw(FitPopulation, ArmPooling),
    /// Hájek IPW with the data-generating ICE probabilities.
    IpwTrue,
    Mi(ArmPooling),
}

const POPULATIONS: [FitPopulation; 2] = [FitPopulation::AllData, FitPopulation::IceFree];
const POOLINGS: [ArmPooling; 2] = [ArmPooling::Pooled, ArmPooling::PerArm];

impl EstimatorKind {
    /// Every registered estimator in canonical order.
    pub fn registry() -> Vec<EstimatorKind> {
        let mut v = vec![EstimatorKind::Naive];
        for pop in POPULATIONS {
            for pool in POOLINGS {
                v.push(EstimatorKind::GFormula(pop, pool));
            }
        }
        for pop in POPULATIONS {
            for pool in POOLINGS {
                v.push(EstimatorKind::Ipw(pop, pool));
            }
        }
        v.push(EstimatorKind::Mi(ArmPooling::Pooled));
        v.push(EstimatorKind::Mi(ArmPooling::PerArm));
        v.push(EstimatorKind::IpwTrue);
        v
    }

    /// The eleven methods compared in the simulation study (registry minus `ipw-true`).
    pub fn study_methods() -> Vec<EstimatorKind> {
        Self::registry().into_iter().filter(|k| *k != EstimatorKind::IpwTrue).collect()
    }

    pub fn registry_names() -> Vec<String> {
        Self::registry().iter().map(|k| k.to_string()).collect()
    }

    pub fn parse(name: &str) -> Result<EstimatorKind, String> {
        let name = name.trim();
        if name == "ipmw" {
            return Ok(EstimatorKind::Ipw(FitPopulation::IceFree, ArmPooling::PerArm));
        }
        Self::registry().into_iter().find(|k| k.to_string() == name).ok_or_else(|| {
            format!("unknown estimator '{name}'; valid names: {} (alias: ipmw)", Self::registry_names().join(", "))
        })
    }

    pub fn uses_fitted_ice_model(self) -> bool {
        matches!(self, EstimatorKind::Ipw(..))
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimatorKind::Naive => f.write_str("naive"),
            EstimatorKind::GFormula(pop, pool) => write!(f, "gformula-{}-{}", pop.as_str(), pool.as_str()),
            EstimatorKind::Ipw(pop, pool) => write!(f, "ipw-{}-{}", pop.as_str(), pool.as_str()),
            EstimatorKind::IpwTrue => f.write_str("ipw-true"),
            EstimatorKind::Mi(pool) => write!(f, "mi-{}", pool.as_str()),
        }
    }
}

/// Settings an estimator may need beyond the data.
#[derive(Debug, Clone)]
pub struct EstimatorContext<'a> {
    /// Source of the true ICE probabilities for `ipw-true`.
    pub dgp: Option<&'a DgpParams>,
    /// Explicit true probabilities for `ipw-true`; takes precedence over `dgp`.
    pub true_probabilities: Option<&'a [Vec<f64>]>,
    pub mi_m: usize,
    pub seed: u64,
    pub truncation: Option<Truncation>,
}

impl Default for EstimatorContext<'_> {
    fn default() -> Self {
        EstimatorContext {
            dgp: None,
            true_probabilities: None,
            mi_m: DEFAULT_IMPUTATIONS,
            seed: 0,
            truncation: None,
        }
    }
}

pub fn run_estimator(kind: EstimatorKind, data: &TrialDataset, ctx: &EstimatorContext<'_>) -> Result<EstimateResult, EstimateError> {
    match kind {
        EstimatorKind::Naive => naive_estimate(data),
        EstimatorKind::GFormula(pop, pool) => gformula_sequential(data, &GFormulaSpec::new(pop, pool)),
        EstimatorKind::Ipw(pop, pool) => {
            let mut spec = IpwSpec::fitted(pop, pool);
            spec.truncation = ctx.truncation;
            ipw_estimate(data, &spec, None)
        }
        EstimatorKind::IpwTrue => {
            let mut spec = IpwSpec::true_weights();
            spec.truncation = ctx.truncation;
            match (ctx.true_probabilities, ctx.dgp) {
                (Some(p), _) => ipw_estimate(data, &spec, Some(p)),
                (None, Some(dgp)) => {
                    let p = true_ice_free_probabilities(dgp, data).map_err(|e| EstimateError::Invalid(e.to_string()))?;
                    ipw_estimate(data, &spec, Some(&p))
                }
                (None, None) => Err(EstimateError::Invalid("ipw-true needs the true ICE probabilities".into())),
            }
        }
        EstimatorKind::Mi(pool) => mi_estimate(data, &MiSpec::new(ctx.mi_m, pool, ctx.seed)?),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthMode {
    /// Closed form when the DGP admits one, otherwise the oracle.
    #[default]
    Auto,
    Analytic,
    MonteCarloOracle,
}

fn default_mi_m() -> usize {
    DEFAULT_IMPUTATIONS
}

fn default_oracle_draws() -> u64 {
    ORACLE_DRAWS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    #[serde(default)]
    pub dgp: DgpParams,
    pub replicates: usize,
    pub estimators: Vec<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub truth_mode: TruthMode,
    #[serde(default = "default_mi_m")]
    pub mi_m: usize,
    #[serde(default = "default_oracle_draws")]
    pub oracle_draws: u64,
}

impl StudyConfig {
    pub fn new(dgp: DgpParams, replicates: usize, estimators: &[EstimatorKind], seed: u64) -> Self {
        StudyConfig {
            dgp,
            replicates,
            estimators: estimators.iter().map(|k| k.to_string()).collect(),
            seed,
            truth_mode: TruthMode::Auto,
            mi_m: DEFAULT_IMPUTATIONS,
            oracle_draws: ORACLE_DRAWS,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, StudyError> {
        serde_json::from_str(text).map_err(|e| StudyError::Config(e.to_string()))
    }

    /// Parsed estimator list; rejects an empty list, unknown names and `R < 2`.
    pub fn estimator_kinds(&self) -> Result<Vec<EstimatorKind>, StudyError> {
        if self.replicates < 2 {
            return Err(StudyError::Config(format!("need at least 2 replicates, got {}", self.replicates)));
        }
        if self.estimators.is_empty() {
            return Err(StudyError::Config("estimator list is empty".into()));
        }
        if self.mi_m < 2 {
            return Err(StudyError::Config(format!("mi_m must be at least 2, got {}", self.mi_m)));
        }
        let mut kinds = Vec::new();
        for name in &self.estimators {
            let k = EstimatorKind::parse(name).map_err(StudyError::Config)?;
            if kinds.contains(&k) {
                return Err(StudyError::Config(format!("estimator '{name}' listed twice")));
            }
            kinds.push(k);
        }
        Ok(kinds)
    }

    /// Seed of the dataset simulated for replicate `r`.
    pub fn replicate_seed(&self, r: usize) -> u64 {
        derive_seed(derive_seed(self.seed, DOMAIN_SIMULATE), r as u64)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StudyError {
    #[error("invalid study configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error("unstable bootstrap: {failed} of {total} resamples failed (first error: {first_error})")]
    UnstableBootstrap { failed: usize, total: usize, first_error: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Target quantities of every estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    MeanControl,
    MeanTreated,
    Contrast,
}

impl Target {
    pub const ALL: [Target; 3] = [Target::MeanControl, Target::MeanTreated, Target::Contrast];

    pub fn as_str(self) -> &'static str {
        match self {
            Target::MeanControl => "mean_control",
            Target::MeanTreated => "mean_treated",
            Target::Contrast => "contrast",
        }
    }

    fn of(self, r: &EstimateResult) -> f64 {
        match self {
            Target::MeanControl => r.mean_control,
            Target::MeanTreated => r.mean_treated,
            Target::Contrast => r.contrast,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub mean_control: f64,
    pub mean_treated: f64,
    pub contrast: f64,
    pub source: TruthSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthSource {
    Analytic,
    Oracle,
}

impl TruthSource {
    pub fn as_str(self) -> &'static str {
        match self {
            TruthSource::Analytic => "analytic",
            TruthSource::Oracle => "oracle",
        }
    }
}

impl Truth {
    fn of(&self, t: Target) -> f64 {
        match t {
            Target::MeanControl => self.mean_control,
            Target::MeanTreated => self.mean_treated,
            Target::Contrast => self.contrast,
        }
    }
}

/// Truth for bias computations under `mode`.
pub fn resolve_truth(config: &StudyConfig) -> Result<Truth, StudyError> {
    let analytic = || -> Result<Truth, SimError> {
        let c = true_contrast(&config.dgp)?;
        // Under no ICE every L has mean 0 in the control arm, so E(Y^{0,0̄}) = 0.
        Ok(Truth {
            mean_control: 0.0,
            mean_treated: c,
            contrast: c,
            source: TruthSource::Analytic,
        })
    };
    let oracle = || -> Result<Truth, SimError> {
        let o = oracle_contrast(&config.dgp, config.oracle_draws, config.seed)?;
        Ok(Truth {
            mean_control: o.mean_control,
            mean_treated: o.mean_treated,
            contrast: o.contrast,
            source: TruthSource::Oracle,
        })
    };
    Ok(match config.truth_mode {
        TruthMode::Analytic => analytic()?,
        TruthMode::MonteCarloOracle => oracle()?,
        TruthMode::Auto => match analytic() {
            Ok(t) => t,
            Err(SimError::NoAnalyticTruth(_)) => oracle()?,
            Err(e) => return Err(e.into()),
        },
    })
}

/// One estimator applied to one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub estimator: String,
    pub result: Option<EstimateResult>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "snake_case")]
pub enum EstimatorStatus {
    Ok,
    /// Not run because the first replicate showed the method cannot be
    /// applied to this data-generating process.
    Excluded(String),
    /// Failed on every replicate.
    Unusable(String),
}

impl EstimatorStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, EstimatorStatus::Ok)
    }

    pub fn label(&self) -> &'static str {
        match self {
            EstimatorStatus::Ok => "ok",
            EstimatorStatus::Excluded(_) => "excluded",
            EstimatorStatus::Unusable(_) => "unusable",
        }
    }

    pub fn reason(&self) -> &str {
        match self {
            EstimatorStatus::Ok => "",
            EstimatorStatus::Excluded(r) | EstimatorStatus::Unusable(r) => r,
        }
    }
}

/// Distribution summary of one estimator's estimates for one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSummary {
    pub target: Target,
    pub n_ok: usize,
    pub mean: f64,
    pub truth: f64,
    pub bias: f64,
    pub sd: f64,
    /// `sd / sqrt(n_ok)`.
    pub mc_se: f64,
    pub mse: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub n_outside: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: String,
    pub status: EstimatorStatus,
    pub n_failed: usize,
    /// Empty unless at least one replicate succeeded.
    pub targets: Vec<TargetSummary>,
}

impl EstimatorSummary {
    pub fn target(&self, t: Target) -> Option<&TargetSummary> {
        self.targets.iter().find(|s| s.target == t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub truth: Truth,
    pub replicates: usize,
    pub estimators: Vec<EstimatorSummary>,
}

impl StudySummary {
    pub fn estimator(&self, name: &str) -> Option<&EstimatorSummary> {
        self.estimators.iter().find(|e| e.estimator == name)
    }

    pub fn any_unusable(&self) -> bool {
        self.estimators.iter().any(|e| matches!(e.status, EstimatorStatus::Unusable(_)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyOutput {
    pub summary: StudySummary,
    pub records: Vec<ReplicateRecord>,
}

/// Sample statistics with linear-interpolation quartiles and 1.5 IQR whiskers.
pub fn describe(values: &[f64], truth: f64, target: Target) -> TargetSummary {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&sorted, 0.25);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let m = mean(values);
    let sd = sample_sd(values);
    TargetSummary {
        target,
        n_ok: values.len(),
        mean: m,
        truth,
        bias: m - truth,
        sd,
        mc_se: sd / (values.len() as f64).sqrt(),
        mse: values.iter().map(|v| (v - truth) * (v - truth)).sum::<f64>() / values.len() as f64,
        q1,
        median: quantile_sorted(&sorted, 0.5),
        q3,
        whisker_low: lo,
        whisker_high: hi,
        n_outside: values.iter().filter(|&&v| v < lo || v > hi).count(),
    }
}

/// Aggregates long-format records (in the given estimator order).
pub fn summarize(records: &[ReplicateRecord], estimators: &[String], excluded: &[(String, String)], truth: Truth, replicates: usize) -> StudySummary {
    let estimators = estimators
        .iter()
        .map(|name| {
            if let Some((_, why)) = excluded.iter().find(|(e, _)| e == name) {
                return EstimatorSummary {
                    estimator: name.clone(),
                    status: EstimatorStatus::Excluded(why.clone()),
                    n_failed: replicates,
                    targets: Vec::new(),
                };
            }
            let mine: Vec<&ReplicateRecord> = records.iter().filter(|r| &r.estimator == name).collect();
            let ok: Vec<&EstimateResult> = mine.iter().filter_map(|r| r.result.as_ref()).collect();
            let n_failed = mine.len() - ok.len();
            if ok.is_empty() {
                let first = mine.iter().find_map(|r| r.error.clone()).unwrap_or_else(|| "no replicates".into());
                return EstimatorSummary {
                    estimator: name.clone(),
                    status: EstimatorStatus::Unusable(first),
                    n_failed,
                    targets: Vec::new(),
                };
            }
            let targets = Target::ALL
                .iter()
                .map(|&t| {
                    let v: Vec<f64> = ok.iter().map(|r| t.of(r)).collect();
                    describe(&v, truth.of(t), t)
                })
                .collect();
            EstimatorSummary {
                estimator: name.clone(),
                status: EstimatorStatus::Ok,
                n_failed,
                targets,
            }
        })
        .collect();
    StudySummary {
        truth,
        replicates,
        estimators,
    }
}

fn estimator_seed(dataset_seed: u64) -> u64 {
    derive_seed(dataset_seed, DOMAIN_ESTIMATE)
}

/// Runs every estimator on `R` simulated datasets. Estimation failures are
/// recorded and the study continues.
///
/// Under the deterministic ICE mechanism, fitted-weight IPW is tried on the
/// first replicate only; if it fails there it is excluded with that reason.
pub fn run_study(config: &StudyConfig) -> Result<StudyOutput, StudyError> {
    let kinds = config.estimator_kinds()?;
    config.dgp.validate()?;
    let truth = resolve_truth(config)?;

    let mut active = kinds.clone();
    let mut excluded = Vec::new();
    if config.dgp.regime == IceMechanism::Deterministic {
        let seed0 = config.replicate_seed(0);
        let data0 = simulate(&config.dgp, seed0)?;
        let ctx = EstimatorContext {
            dgp: Some(&config.dgp),
            mi_m: config.mi_m,
            seed: estimator_seed(seed0),
            ..EstimatorContext::default()
        };
        for &k in kinds.iter().filter(|k| k.uses_fitted_ice_model()) {
            if let Err(e) = run_estimator(k, &data0, &ctx) {
                log::info!("{k} excluded under deterministic ICE: {e}");
                excluded.push((k.to_string(), format!("deterministic ICE; weight model fails on replicate 0: {e}")));
                active.retain(|a| *a != k);
            }
        }
    }

    let per_replicate: Vec<Vec<ReplicateRecord>> = (0..config.replicates)
        .into_par_iter()
        .map(|r| -> Result<Vec<ReplicateRecord>, StudyError> {
            let seed = config.replicate_seed(r);
            let data = simulate(&config.dgp, seed)?;
            let ctx = EstimatorContext {
                dgp: Some(&config.dgp),
                mi_m: config.mi_m,
                seed: estimator_seed(seed),
                ..EstimatorContext::default()
            };
            Ok(active
                .iter()
                .map(|&k| {
                    let out = run_estimator(k, &data, &ctx);
                    ReplicateRecord {
                        replicate: r,
                        estimator: k.to_string(),
                        error: out.as_ref().err().map(|e| e.to_string()),
                        result: out.ok(),
                    }
                })
                .collect())
        })
        .collect::<Result<_, _>>()?;
    let records: Vec<ReplicateRecord> = per_replicate.into_iter().flatten().collect();
    let names: Vec<String> = kinds.iter().map(|k| k.to_string()).collect();
    let summary = summarize(&records, &names, &excluded, truth, config.replicates);
    Ok(StudyOutput { summary, records })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Writes `long.csv`, `summary.csv` and `boxplot.csv` into `dir`.
pub fn write_study_outputs(output: &StudyOutput, dir: &Path) -> Result<(), StudyError> {
    std::fs::create_dir_all(dir)?;
    write_long(&output.records, std::fs::File::create(dir.join("long.csv"))?)?;
    write_summary(&output.summary, std::fs::File::create(dir.join("summary.csv"))?)?;
    emit_boxplot_data(&output.summary, &dir.join("boxplot.csv"))
}

pub fn write_long<W: Write>(records: &[ReplicateRecord], w: W) -> Result<(), StudyError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["replicate", "estimator", "mean_control", "mean_treated", "contrast", "error"])?;
    for r in records {
        let res = r.result.as_ref();
        out.write_record([
            r.replicate.to_string(),
            r.estimator.clone(),
            fmt_opt(res.map(|x| x.mean_control)),
            fmt_opt(res.map(|x| x.mean_treated)),
            fmt_opt(res.map(|x| x.contrast)),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_summary<W: Write>(summary: &StudySummary, w: W) -> Result<(), StudyError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "estimator", "status", "reason", "target", "n_ok", "n_failed", "truth", "truth_source", "mean", "bias", "sd", "mc_se", "mse",
    ])?;
    for e in &summary.estimators {
        if e.targets.is_empty() {
            out.write_record([
                e.estimator.as_str(),
                e.status.label(),
                e.status.reason(),
                "",
                "0",
                &e.n_failed.to_string(),
                "",
                summary.truth.source.as_str(),
                "",
                "",
                "",
                "",
                "",
            ])?;
            continue;
        }
        for t in &e.targets {
            out.write_record([
                e.estimator.clone(),
                e.status.label().to_string(),
                e.status.reason().to_string(),
                t.target.as_str().to_string(),
                t.n_ok.to_string(),
                e.n_failed.to_string(),
                t.truth.to_string(),
                summary.truth.source.as_str().to_string(),
                t.mean.to_string(),
                t.bias.to_string(),
                t.sd.to_string(),
                t.mc_se.to_string(),
                t.mse.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Quartiles, whiskers and out-of-whisker counts per estimator and target.
pub fn emit_boxplot_data(summary: &StudySummary, path: &Path) -> Result<(), StudyError> {
    let mut out = csv::Writer::from_path(path)?;
    out.write_record(["estimator", "target", "q1", "median", "q3", "whisker_low", "whisker_high", "n_outside", "n_ok"])?;
    for e in &summary.estimators {
        for t in &e.targets {
            out.write_record([
                e.estimator.clone(),
                t.target.as_str().to_string(),
                t.q1.to_string(),
                t.median.to_string(),
                t.q3.to_string(),
                t.whisker_low.to_string(),
                t.whisker_high.to_string(),
                t.n_outside.to_string(),
                t.n_ok.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub const MIN_BOOTSTRAP: usize = 100;
/// Largest tolerated share of failed resamples.
pub const MAX_BOOTSTRAP_FAILURE: f64 = 0.2;

/// Point estimate on `data` with a within-arm stratified bootstrap SE and
/// 2.5/97.5 percentile interval for the contrast. Resample `b` draws from
/// stream `(derive_seed(seed, DOMAIN_BOOTSTRAP), b)`.
pub fn bootstrap(data: &TrialDataset, kind: EstimatorKind, ctx: &EstimatorContext<'_>, b: usize, seed: u64) -> Result<EstimateResult, StudyError> {
    if b < MIN_BOOTSTRAP {
        return Err(StudyError::Config(format!("bootstrap needs at least {MIN_BOOTSTRAP} resamples, got {b}")));
    }
    if ctx.true_probabilities.is_some() {
        return Err(StudyError::Config("bootstrap cannot resample a fixed probability table; supply the DGP instead".into()));
    }
    let mut point = run_estimator(kind, data, ctx)?;
    let arms: [Vec<usize>; 2] = [false, true].map(|a| (0..data.n()).filter(|&i| data.subjects()[i].a0 == a).collect());
    let base = derive_seed(seed, DOMAIN_BOOTSTRAP);
    let outcomes: Vec<Result<f64, EstimateError>> = (0..b)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(base, r as u64);
            let mut idx = Vec::with_capacity(data.n());
            for arm in &arms {
                for _ in 0..arm.len() {
                    idx.push(arm[rng.random_range(0..arm.len())]);
                }
            }
            let resample = data.select(&idx);
            let rctx = EstimatorContext {
                seed: derive_seed(ctx.seed, r as u64),
                ..ctx.clone()
            };
            run_estimator(kind, &resample, &rctx).map(|e| e.contrast)
        })
        .collect();
    let failed = outcomes.iter().filter(|o| o.is_err()).count();
    if failed as f64 > MAX_BOOTSTRAP_FAILURE * b as f64 {
        let first_error = outcomes.iter().find_map(|o| o.as_ref().err().map(|e| e.to_string())).unwrap_or_default();
        return Err(StudyError::UnstableBootstrap { failed, total: b, first_error });
    }
    let mut contrasts: Vec<f64> = outcomes.into_iter().filter_map(Result::ok).collect();
    if failed > 0 {
        log::warn!("bootstrap: {failed} of {b} resamples failed and were dropped");
    }
    point.se = Some(sample_sd(&contrasts));
    contrasts.sort_by(f64::total_cmp);
    point.ci_lower = Some(quantile_sorted(&contrasts, 0.025));
    point.ci_upper = Some(quantile_sorted(&contrasts, 0.975));
    Ok(point)
}
