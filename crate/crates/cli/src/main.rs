use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use hypothetica::graph::{check_mar_hypothetical, check_sequential_exchangeability, parse_history, read_graph, CausalGraph, IdentifiabilityReport, Role};
use hypothetica::ipw::Truncation;
use hypothetica::model::{ArmPooling, FitPopulation};
use hypothetica::sim::{simulate, DgpParams, IceMechanism, QuadVisits};
use hypothetica::study::{bootstrap, run_estimator, run_study, write_study_outputs, EstimatorContext, EstimatorKind, StudyConfig};
use hypothetica::{read_csv, write_csv, EstimateResult};

#[derive(Parser, Debug)]
#[command(name = "hypothetica", version, about = "Hypothetical-estimand estimators for longitudinal trials with intercurrent events")]
struct Cli {
    /// Master random seed.
    #[arg(long, global = true, env = "HYPOTHETICA_SEED", default_value_t = 1)]
    seed: u64,
    /// Worker threads (default: all cores). Results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Only log warnings and errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a trial dataset and write it as CSV.
    Simulate(SimulateArgs),
    /// Estimate the no-ICE potential-outcome means from a dataset.
    Estimate(EstimateArgs),
    /// Run a replicated simulation study from a JSON configuration.
    Study(StudyArgs),
    /// Check MAR / sequential exchangeability on a causal graph.
    CheckDag(CheckDagArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// prob, det, miss:outcome, miss:l, miss:ice or miss:all.
    #[arg(long, default_value = "prob", value_parser = parse_regime)]
    regime: IceMechanism,
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Visits receiving the quadratic term under miss:l / miss:ice.
    #[arg(long, value_enum, default_value_t = QuadVisitsArg::Last)]
    quad_visits: QuadVisitsArg,
    /// Output CSV (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum QuadVisitsArg {
    Last,
    Every,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum PopulationArg {
    All,
    Icefree,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ArmsArg {
    Pooled,
    #[value(alias = "perarm")]
    Separate,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    /// Dataset CSV.
    #[arg(long)]
    data: PathBuf,
    /// Registry name (e.g. gformula-icefree-perarm) or a family
    /// (gformula, ipw, mi) completed by --population / --arms.
    #[arg(long, value_parser = parse_method)]
    method: MethodArg,
    #[arg(long, value_enum, default_value_t = PopulationArg::Icefree)]
    population: PopulationArg,
    #[arg(long, value_enum, default_value_t = ArmsArg::Separate)]
    arms: ArmsArg,
    /// Number of imputations for mi.
    #[arg(long, default_value_t = 10)]
    m: usize,
    /// CSV of true P(no ICE at visit k | history), columns p1..pK, for ipw-true.
    #[arg(long)]
    true_probs: Option<PathBuf>,
    /// Simulation regime whose true ICE model supplies ipw-true probabilities.
    #[arg(long, value_parser = parse_regime, conflicts_with = "true_probs")]
    dgp_regime: Option<IceMechanism>,
    /// Cap IPW weights at this quantile of the weights (e.g. 0.99).
    #[arg(long)]
    truncate: Option<f64>,
    /// Bootstrap resamples for SE and percentile CI (at least 100).
    #[arg(long)]
    bootstrap: Option<usize>,
    /// Also write the result as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct StudyArgs {
    /// Study configuration JSON.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "results")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct CheckDagArgs {
    /// Graph file (`node NAME ROLE` and `edge FROM -> TO` lines).
    #[arg(long)]
    graph: PathBuf,
    /// ICE nodes in temporal order (default: nodes with role `ice`).
    #[arg(long, value_delimiter = ',')]
    ice: Vec<String>,
    #[arg(long)]
    outcome: Option<String>,
    /// Measured history per ICE node, e.g. "A1:L0,L1;A2:L0,L1,L2"
    /// (default: covariates that are not descendants of the ICE node).
    #[arg(long)]
    history: Option<String>,
    /// Nodes removed from every history.
    #[arg(long, value_delimiter = ',')]
    unmeasured: Vec<String>,
    /// Also check sequential exchangeability over treatment and ICE nodes.
    #[arg(long)]
    exchangeability: bool,
}

#[derive(Clone, Debug)]
enum MethodArg {
    Exact(EstimatorKind),
    Family(Family),
}

#[derive(Clone, Copy, Debug)]
enum Family {
    GFormula,
    Ipw,
    Mi,
}

fn parse_regime(s: &str) -> Result<IceMechanism, String> {
    s.parse()
}

fn parse_method(s: &str) -> Result<MethodArg, String> {
    match s {
        "gformula" => Ok(MethodArg::Family(Family::GFormula)),
        "ipw" => Ok(MethodArg::Family(Family::Ipw)),
        "mi" => Ok(MethodArg::Family(Family::Mi)),
        other => EstimatorKind::parse(other).map(MethodArg::Exact),
    }
}

impl EstimateArgs {
    fn kind(&self) -> EstimatorKind {
        let pop = match self.population {
            PopulationArg::All => FitPopulation::AllData,
            PopulationArg::Icefree => FitPopulation::IceFree,
        };
        let pool = match self.arms {
            ArmsArg::Pooled => ArmPooling::Pooled,
            ArmsArg::Separate => ArmPooling::PerArm,
        };
        match self.method {
            MethodArg::Exact(k) => k,
            MethodArg::Family(Family::GFormula) => EstimatorKind::GFormula(pop, pool),
            MethodArg::Family(Family::Ipw) => EstimatorKind::Ipw(pop, pool),
            MethodArg::Family(Family::Mi) => EstimatorKind::Mi(pool),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.quiet { log::LevelFilter::Warn } else { log::LevelFilter::Info })
        .parse_env("HYPOTHETICA_LOG")
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(t) = cli.threads {
        if t == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(&cli, a),
        Command::Estimate(a) => cmd_estimate(&cli, a),
        Command::Study(a) => cmd_study(&cli, a),
        Command::CheckDag(a) => cmd_check_dag(a),
    }
}

fn log_config(value: serde_json::Value) {
    log::info!("configuration: {value}");
}

fn cmd_simulate(cli: &Cli, a: &SimulateArgs) -> Result<ExitCode> {
    let params = DgpParams {
        n: a.n,
        k: a.k,
        regime: a.regime,
        quad_visits: match a.quad_visits {
            QuadVisitsArg::Last => QuadVisits::Last,
            QuadVisitsArg::Every => QuadVisits::Every,
        },
        ..DgpParams::default()
    };
    log_config(json!({"command": "simulate", "seed": cli.seed, "threads": cli.threads, "dgp": params, "out": a.out}));
    let data = simulate(&params, cli.seed)?;
    match &a.out {
        Some(p) => write_csv(&data, p).with_context(|| format!("writing {}", p.display()))?,
        None => hypothetica::data::write_csv_to(&data, std::io::stdout().lock())?,
    }
    Ok(ExitCode::SUCCESS)
}

fn read_probability_table(path: &Path, k: usize) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row: Vec<f64> = rec
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .with_context(|| format!("{}: row {} is not numeric", path.display(), i + 1))?;
        if row.len() != k {
            bail!("{}: row {} has {} columns, expected {k}", path.display(), i + 1, row.len());
        }
        rows.push(row);
    }
    Ok(rows)
}

fn fmt_num(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"))
}

fn print_result(name: &str, r: &EstimateResult) {
    let header = ["estimator", "n_control", "n_treated", "mean_control", "mean_treated", "contrast", "se", "ci_lower", "ci_upper"];
    let row = [
        name.to_string(),
        r.n_used[0].to_string(),
        r.n_used[1].to_string(),
        fmt_num(Some(r.mean_control)),
        fmt_num(Some(r.mean_treated)),
        fmt_num(Some(r.contrast)),
        fmt_num(r.se),
        fmt_num(r.ci_lower),
        fmt_num(r.ci_upper),
    ];
    let widths: Vec<usize> = header.iter().zip(&row).map(|(h, v)| h.len().max(v.len())).collect();
    let line = |cells: Vec<String>| {
        cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect::<Vec<_>>()
            .join("  ")
    };
    println!("{}", line(header.iter().map(|s| s.to_string()).collect()));
    println!("{}", line(row.to_vec()));
}

fn write_result_csv(path: &Path, name: &str, r: &EstimateResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
    w.write_record(["estimator", "n_control", "n_treated", "mean_control", "mean_treated", "contrast", "se", "ci_lower", "ci_upper"])?;
    w.write_record([
        name.to_string(),
        r.n_used[0].to_string(),
        r.n_used[1].to_string(),
        r.mean_control.to_string(),
        r.mean_treated.to_string(),
        r.contrast.to_string(),
        opt(r.se),
        opt(r.ci_lower),
        opt(r.ci_upper),
    ])?;
    w.flush()?;
    Ok(())
}

fn cmd_estimate(cli: &Cli, a: &EstimateArgs) -> Result<ExitCode> {
    let kind = a.kind();
    let data = read_csv(&a.data).with_context(|| format!("reading {}", a.data.display()))?;
    if let Some(q) = a.truncate {
        if !(q > 0.0 && q < 1.0) {
            bail!("--truncate must lie in (0, 1), got {q}");
        }
    }
    log_config(json!({
        "command": "estimate", "seed": cli.seed, "threads": cli.threads, "data": a.data,
        "n": data.n(), "k": data.k(), "method": kind.to_string(), "m": a.m,
        "true_probs": a.true_probs, "dgp_regime": a.dgp_regime.map(|r| r.to_string()),
        "truncate": a.truncate, "bootstrap": a.bootstrap, "out": a.out,
    }));
    let table = match &a.true_probs {
        Some(p) => Some(read_probability_table(p, data.k())?),
        None => None,
    };
    let dgp = a.dgp_regime.map(|regime| DgpParams {
        n: data.n(),
        k: data.k(),
        regime,
        ..DgpParams::default()
    });
    let ctx = EstimatorContext {
        dgp: dgp.as_ref(),
        true_probabilities: table.as_deref(),
        mi_m: a.m,
        seed: cli.seed,
        truncation: a.truncate.map(Truncation::Quantile),
    };
    let result = match a.bootstrap {
        Some(b) => bootstrap(&data, kind, &ctx, b, cli.seed)?,
        None => run_estimator(kind, &data, &ctx)?,
    };
    let name = kind.to_string();
    print_result(&name, &result);
    if let Some(p) = &a.out {
        write_result_csv(p, &name, &result)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_study(cli: &Cli, a: &StudyArgs) -> Result<ExitCode> {
    let text = std::fs::read_to_string(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    let mut config = StudyConfig::from_json(&text)?;
    // An explicit --seed or HYPOTHETICA_SEED wins over a seed absent from the file.
    let file_has_seed = serde_json::from_str::<serde_json::Value>(&text)
        .ok()
        .and_then(|v| v.get("seed").cloned())
        .is_some();
    if !file_has_seed {
        config.seed = cli.seed;
    }
    config.estimator_kinds()?;
    log_config(json!({"command": "study", "threads": cli.threads, "config": config, "out_dir": a.out_dir}));
    let out = run_study(&config)?;
    write_study_outputs(&out, &a.out_dir)?;
    let s = &out.summary;
    println!("truth ({}): contrast {:.6}", s.truth.source.as_str(), s.truth.contrast);
    let width = s.estimators.iter().map(|e| e.estimator.len()).max().unwrap_or(9).max(9);
    println!("{:<width$}  {:>9}  {:>10}  {:>10}  {:>10}  {:>10}  {:>6}", "estimator", "status", "mean", "bias", "mc_se", "sd", "failed");
    for e in &s.estimators {
        match e.target(hypothetica::study::Target::Contrast) {
            Some(t) => println!(
                "{:<width$}  {:>9}  {:>10.6}  {:>10.6}  {:>10.6}  {:>10.6}  {:>6}",
                e.estimator,
                e.status.label(),
                t.mean,
                t.bias,
                t.mc_se,
                t.sd,
                e.n_failed
            ),
            None => println!("{:<width$}  {:>9}  {}", e.estimator, e.status.label(), e.status.reason()),
        }
    }
    if s.any_unusable() {
        log::error!("at least one estimator failed on every replicate");
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn default_history(g: &CausalGraph, ice: &[String], unmeasured: &[String]) -> Result<HashMap<String, Vec<String>>> {
    let mut out = HashMap::new();
    for a in ice {
        let id = g.id(a)?;
        let desc = g.descendants_mask(&[id]);
        let hist: Vec<String> = (0..g.len())
            .filter(|&v| g.role(v) == Role::Covariate && !desc[v])
            .map(|v| g.name(v).to_string())
            .filter(|n| !unmeasured.contains(n))
            .collect();
        out.insert(a.clone(), hist);
    }
    Ok(out)
}

fn nodes_with_role(g: &CausalGraph, role: Role) -> Result<Vec<String>> {
    Ok(g.topological_order()?
        .into_iter()
        .filter(|&v| g.role(v) == role)
        .map(|v| g.name(v).to_string())
        .collect())
}

fn print_report(title: &str, report: &IdentifiabilityReport) {
    println!("{title}");
    for c in &report.conditions {
        if c.holds {
            println!("PASS  {}", c.statement());
        } else {
            println!("FAIL  {}", c.statement());
            if let (Some(t), Some(w)) = (&c.failing_target, &c.witness) {
                println!("      open path to {t}: {w}");
            }
        }
    }
}

fn cmd_check_dag(a: &CheckDagArgs) -> Result<ExitCode> {
    let g = read_graph(&a.graph).with_context(|| format!("reading {}", a.graph.display()))?;
    let ice = if a.ice.is_empty() { nodes_with_role(&g, Role::Ice)? } else { a.ice.clone() };
    if ice.is_empty() {
        bail!("no ICE nodes given and none tagged `ice` in the graph");
    }
    let outcome = match &a.outcome {
        Some(o) => o.clone(),
        None => {
            let ys = nodes_with_role(&g, Role::Outcome)?;
            match ys.as_slice() {
                [y] => y.clone(),
                _ => bail!("pass --outcome: the graph tags {} outcome nodes", ys.len()),
            }
        }
    };
    let mut history = match &a.history {
        Some(h) => parse_history(h)?,
        None => default_history(&g, &ice, &a.unmeasured)?,
    };
    for list in history.values_mut() {
        list.retain(|n| !a.unmeasured.contains(n));
    }
    log_config(json!({"command": "check-dag", "graph": a.graph, "ice": ice, "outcome": outcome, "history": history, "unmeasured": a.unmeasured}));
    let mar = check_mar_hypothetical(&g, &ice, &history, &outcome)?;
    print_report("MAR under the no-ICE regime:", &mar);
    let mut ok = mar.holds();
    if a.exchangeability {
        let mut treat = nodes_with_role(&g, Role::Treatment)?;
        treat.extend(ice.iter().cloned());
        let mut hist = history.clone();
        for t in &treat {
            hist.entry(t.clone()).or_default();
        }
        let ex = check_sequential_exchangeability(&g, &treat, &hist, &outcome)?;
        print_report("Sequential exchangeability:", &ex);
        ok &= ex.holds();
    }
    std::io::stdout().flush()?;
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
