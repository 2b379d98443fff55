//! Data-generating process for longitudinal trials with a recurrent binary
//! ICE, plus truth oracles for the no-ICE contrast.
//!
//! Subject `i` of a dataset with seed `s` draws everything from
//! `stream(s, i)` in this order: arm uniform, `L0`, then per visit `L_k` and
//! the ICE uniform, then `Y`. The ICE uniform is consumed even when the ICE
//! is deterministic or forced, so all regimes share draws column by column.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Mutex, OnceLock};

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Regime, Schema, Subject, TrialDataset};
use crate::glm::expit;
use crate::rng::{derive_seed, open_uniform, std_normal, stream, DOMAIN_ORACLE};

/// Model receiving the quadratic baseline term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MisspecTarget {
    Outcome,
    LModel,
    IceModel,
    All,
}

/// How the ICE arises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum IceMechanism {
    Probabilistic,
    /// `A_k = 1` exactly when `L_k` reaches the threshold.
    Deterministic,
    /// Probabilistic ICE with `q·L0²` added to the targeted model(s), where
    /// `q` is `quad_treated` in the treated arm and `quad_control` otherwise.
    Misspecified(MisspecTarget),
}

impl IceMechanism {
    pub const NAMES: [&'static str; 6] = ["prob", "det", "miss:outcome", "miss:l", "miss:ice", "miss:all"];

    fn quad_in(self, model: MisspecTarget) -> bool {
        matches!(self, IceMechanism::Misspecified(t) if t == model || t == MisspecTarget::All)
    }
}

impl fmt::Display for IceMechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IceMechanism::Probabilistic => "prob",
            IceMechanism::Deterministic => "det",
            IceMechanism::Misspecified(MisspecTarget::Outcome) => "miss:outcome",
            IceMechanism::Misspecified(MisspecTarget::LModel) => "miss:l",
            IceMechanism::Misspecified(MisspecTarget::IceModel) => "miss:ice",
            IceMechanism::Misspecified(MisspecTarget::All) => "miss:all",
        })
    }
}

impl FromStr for IceMechanism {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "prob" | "probabilistic" => IceMechanism::Probabilistic,
            "det" | "deterministic" => IceMechanism::Deterministic,
            "miss:outcome" | "miss:y" => IceMechanism::Misspecified(MisspecTarget::Outcome),
            "miss:l" => IceMechanism::Misspecified(MisspecTarget::LModel),
            "miss:ice" | "miss:a" => IceMechanism::Misspecified(MisspecTarget::IceModel),
            "miss:all" => IceMechanism::Misspecified(MisspecTarget::All),
            other => return Err(format!("unknown regime '{other}'; expected one of {}", Self::NAMES.join(", "))),
        })
    }
}

impl TryFrom<String> for IceMechanism {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<IceMechanism> for String {
    fn from(m: IceMechanism) -> String {
        m.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DgpParams {
    pub n: usize,
    pub k: usize,
    pub coef_l_on_past_l: f64,
    pub coef_l_on_past_a: f64,
    pub ice_intercept: f64,
    pub coef_ice_on_l: f64,
    pub coef_ice_on_past_a: f64,
    pub coef_y_on_l: f64,
    pub coef_y_on_a0: f64,
    pub coef_y_on_ice: f64,
    pub noise_sd: f64,
    pub p_treat: f64,
    pub regime: IceMechanism,
    pub threshold: f64,
    pub quad_treated: f64,
    pub quad_control: f64,
    /// Visits whose `L_k` / ICE models receive the quadratic term.
    pub quad_visits: QuadVisits,
}

/// Visits at which a misspecified `L` or ICE model carries the quadratic term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadVisits {
    /// Only the last visit `K`.
    #[default]
    Last,
    /// Every visit `1..=K`.
    Every,
}

impl Default for DgpParams {
    fn default() -> Self {
        DgpParams {
            n: 500,
            k: 5,
            coef_l_on_past_l: 0.3,
            coef_l_on_past_a: 0.2,
            ice_intercept: -3.0,
            coef_ice_on_l: 0.2,
            coef_ice_on_past_a: 0.4,
            coef_y_on_l: 0.2,
            coef_y_on_a0: 0.5,
            coef_y_on_ice: 0.3,
            noise_sd: 1.0,
            p_treat: 0.5,
            regime: IceMechanism::Probabilistic,
            threshold: 1.5,
            quad_treated: 2.0,
            quad_control: -0.5,
            quad_visits: QuadVisits::Last,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid DGP parameters: {0}")]
    InvalidParams(String),
    #[error("no closed-form truth for regime {0}; use the Monte-Carlo oracle")]
    NoAnalyticTruth(IceMechanism),
    #[error("regime has {got} ICE values, DGP has K = {expected}")]
    RegimeLength { expected: usize, got: usize },
}

impl DgpParams {
    pub fn with_regime(regime: IceMechanism) -> Self {
        DgpParams {
            regime,
            ..DgpParams::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidParams(m));
        if self.k < 1 {
            return bad("K must be at least 1".into());
        }
        if !(self.p_treat > 0.0 && self.p_treat < 1.0) {
            return bad(format!("p_treat must lie in (0, 1), got {}", self.p_treat));
        }
        if !(self.noise_sd > 0.0) || !self.noise_sd.is_finite() {
            return bad(format!("noise_sd must be positive, got {}", self.noise_sd));
        }
        let coefs = [
            self.coef_l_on_past_l,
            self.coef_l_on_past_a,
            self.ice_intercept,
            self.coef_ice_on_l,
            self.coef_ice_on_past_a,
            self.coef_y_on_l,
            self.coef_y_on_a0,
            self.coef_y_on_ice,
            self.threshold,
            self.quad_treated,
            self.quad_control,
        ];
        if coefs.iter().any(|c| !c.is_finite()) {
            return bad("coefficients must be finite".into());
        }
        Ok(())
    }

    fn quad(&self, a0: bool, l0: f64) -> f64 {
        (if a0 { self.quad_treated } else { self.quad_control }) * l0 * l0
    }

    fn quad_at(&self, k: usize) -> bool {
        self.quad_visits == QuadVisits::Every || k == self.k
    }

    fn ice_linear_predictor(&self, k: usize, a0: bool, l0: f64, sum_l: f64, sum_a: f64) -> f64 {
        let mut eta = self.ice_intercept + self.coef_ice_on_l * sum_l + self.coef_ice_on_past_a * sum_a;
        if self.regime.quad_in(MisspecTarget::IceModel) && self.quad_at(k) {
            eta += self.quad(a0, l0);
        }
        eta
    }
}

/// One subject's draws; `force` overrides the arm and every ICE.
fn draw_subject(p: &DgpParams, rng: &mut dyn RngCore, force: Option<&Regime>) -> Subject {
    let u_arm = open_uniform(rng);
    let a0 = force.map_or(u_arm < p.p_treat, |r| r.a0);
    let l0 = p.noise_sd * std_normal(rng);
    let quad = p.quad(a0, l0);
    let mut sum_l = l0;
    let mut sum_a = f64::from(u8::from(a0));
    let mut sum_ice = 0.0;
    let mut l = Vec::with_capacity(p.k);
    let mut ice = Vec::with_capacity(p.k);
    for k in 1..=p.k {
        let mut mean = p.coef_l_on_past_l * sum_l + p.coef_l_on_past_a * sum_a;
        if p.regime.quad_in(MisspecTarget::LModel) && p.quad_at(k) {
            mean += quad;
        }
        let lk = mean + p.noise_sd * std_normal(rng);
        sum_l += lk;
        let u = open_uniform(rng);
        let natural = match p.regime {
            IceMechanism::Deterministic => lk >= p.threshold,
            _ => u < expit(p.ice_linear_predictor(k, a0, l0, sum_l, sum_a)),
        };
        let ak = force.map_or(natural, |r| r.ice[k - 1]);
        let ak_f = f64::from(u8::from(ak));
        sum_a += ak_f;
        sum_ice += ak_f;
        l.push(Some(vec![lk]));
        ice.push(Some(ak));
    }
    let mut mean_y = p.coef_y_on_l * sum_l + p.coef_y_on_a0 * f64::from(u8::from(a0)) + p.coef_y_on_ice * sum_ice;
    if p.regime.quad_in(MisspecTarget::Outcome) {
        mean_y += quad;
    }
    let y = mean_y + p.noise_sd * std_normal(rng);
    Subject {
        a0,
        l0: vec![l0],
        l,
        ice,
        y: Some(y),
    }
}

fn simulate_with(p: &DgpParams, seed: u64, force: Option<&Regime>) -> Result<TrialDataset, SimError> {
    p.validate()?;
    if let Some(r) = force {
        if r.ice.len() != p.k {
            return Err(SimError::RegimeLength {
                expected: p.k,
                got: r.ice.len(),
            });
        }
    }
    let subjects: Vec<Subject> = (0..p.n)
        .into_par_iter()
        .map(|i| draw_subject(p, &mut stream(seed, i as u64), force))
        .collect();
    Ok(TrialDataset::new(Schema::scalar(p.k), subjects).expect("simulated records are complete"))
}

/// Draws `params.n` subjects with every variable observed.
pub fn simulate(params: &DgpParams, seed: u64) -> Result<TrialDataset, SimError> {
    simulate_with(params, seed, None)
}

/// Same draws as [`simulate`] with the arm and ICEs set by `regime`.
pub fn simulate_under_regime(params: &DgpParams, regime: &Regime, seed: u64) -> Result<TrialDataset, SimError> {
    simulate_with(params, seed, Some(regime))
}

/// Analytic `E(Y^{1,0̄}) − E(Y^{0,0̄})` from mean propagation:
/// `d_k = c_LA + c_LL Σ_{j<k} d_j`, contrast `= c_YA0 + c_YL Σ_k d_k`.
///
/// The ICE model never enters the no-ICE distribution, so misspecifying only
/// that model keeps the closed form; a quadratic term in the `L` or `Y`
/// model does not.
pub fn true_contrast(params: &DgpParams) -> Result<f64, SimError> {
    params.validate()?;
    match params.regime {
        IceMechanism::Misspecified(MisspecTarget::Outcome | MisspecTarget::LModel | MisspecTarget::All) => {
            return Err(SimError::NoAnalyticTruth(params.regime));
        }
        _ => {}
    }
    Ok(contrast_recursion(params, params.k))
}

fn contrast_recursion(p: &DgpParams, k: usize) -> f64 {
    let mut sum_d = 0.0;
    for _ in 1..=k {
        let d = p.coef_l_on_past_a + p.coef_l_on_past_l * sum_d;
        sum_d += d;
    }
    p.coef_y_on_a0 + p.coef_y_on_l * sum_d
}

/// True `P(A_k = 0 | history)` at each subject's observed history,
/// `out[i][k-1]`, for as many visits as the history is observed.
pub fn true_ice_free_probabilities(params: &DgpParams, data: &TrialDataset) -> Result<Vec<Vec<f64>>, SimError> {
    params.validate()?;
    if data.k() != params.k || data.dims().iter().any(|&d| d != 1) {
        return Err(SimError::InvalidParams("dataset layout does not match the DGP".into()));
    }
    Ok(data
        .subjects()
        .iter()
        .map(|s| {
            let l0 = s.l0[0];
            let mut sum_l = l0;
            let mut sum_a = f64::from(u8::from(s.a0));
            let mut out = Vec::with_capacity(params.k);
            for k in 1..=params.k {
                let Some(lk) = s.covariates(k) else { break };
                sum_l += lk[0];
                let p0 = match params.regime {
                    IceMechanism::Deterministic => f64::from(u8::from(lk[0] < params.threshold)),
                    _ => 1.0 - expit(params.ice_linear_predictor(k, s.a0, l0, sum_l, sum_a)),
                };
                out.push(p0);
                match s.ice[k - 1] {
                    Some(a) => sum_a += f64::from(u8::from(a)),
                    None => break,
                }
            }
            out
        })
        .collect())
}

/// Monte-Carlo estimate of the no-ICE arm means from paired draws that share
/// every random number except the forced arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleEstimate {
    pub mean_treated: f64,
    pub mean_control: f64,
    pub contrast: f64,
    /// Standard error of `contrast`.
    pub se: f64,
    pub draws: u64,
}

pub const ORACLE_DRAWS: u64 = 10_000_000;
const ORACLE_CHUNK: u64 = 1 << 16;

type OracleKey = (String, u64, u64);

fn oracle_cache() -> &'static Mutex<HashMap<OracleKey, OracleEstimate>> {
    static CACHE: OnceLock<Mutex<HashMap<OracleKey, OracleEstimate>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Interventional oracle; results are memoised per `(params, draws, seed)`
/// for the life of the process. Chunk `c` of draws uses stream
/// `(derive_seed(seed, DOMAIN_ORACLE), c)`, so the value does not depend on
/// the number of threads.
pub fn oracle_contrast(params: &DgpParams, draws: u64, seed: u64) -> Result<OracleEstimate, SimError> {
    params.validate()?;
    if draws < 2 {
        return Err(SimError::InvalidParams("oracle needs at least 2 draws".into()));
    }
    let key = (serde_json::to_string(params).expect("params serialise"), draws, seed);
    if let Some(hit) = oracle_cache().lock().unwrap().get(&key) {
        return Ok(*hit);
    }
    let base = derive_seed(seed, DOMAIN_ORACLE);
    let treated = Regime::no_ice(true, params.k);
    let control = Regime::no_ice(false, params.k);
    let chunks = draws.div_ceil(ORACLE_CHUNK);
    let partial: Vec<[f64; 4]> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(base, c);
            let len = ORACLE_CHUNK.min(draws - c * ORACLE_CHUNK);
            let mut acc = [0.0; 4];
            for _ in 0..len {
                let mut twin = rng.clone();
                let y1 = draw_subject(params, &mut rng, Some(&treated)).y.unwrap();
                let y0 = draw_subject(params, &mut twin, Some(&control)).y.unwrap();
                let d = y1 - y0;
                acc[0] += y1;
                acc[1] += y0;
                acc[2] += d;
                acc[3] += d * d;
            }
            acc
        })
        .collect();
    let mut total = [0.0; 4];
    for p in &partial {
        for j in 0..4 {
            total[j] += p[j];
        }
    }
    let n = draws as f64;
    let mean_d = total[2] / n;
    let var_d = (total[3] - n * mean_d * mean_d) / (n - 1.0);
    let est = OracleEstimate {
        mean_treated: total[0] / n,
        mean_control: total[1] / n,
        contrast: mean_d,
        se: (var_d.max(0.0) / n).sqrt(),
        draws,
    };
    oracle_cache().lock().unwrap().insert(key, est);
    Ok(est)
}
