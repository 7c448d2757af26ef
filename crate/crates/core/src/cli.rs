//! Command-line front end. Each subcommand reads a [`RunConfig`], applies its
//! flags on top, runs, and writes its outputs plus a `manifest.json` into the
//! output directory.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::eda::{self, EdaError};
use crate::nhpp::CovariateSet;
use crate::pedigree::{self, FamilySet, PedigreeError, PedigreeFormat};
use crate::predict::{self, PenetranceQuery, PredictError, RiskScenario};
use crate::sampler::{self, PosteriorSamples, SamplerError};
use crate::simulate::{self, SimError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Eda(#[from] EdaError),
    #[error(transparent)]
    Pedigree(#[from] PedigreeError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 for bad invocations and unusable inputs, 1 for failures during a run.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Validation(_) | CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "mpcpen", version)]
#[command(about = "Penetrance estimation for multiple primary cancers from pedigree data")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the sampler on a pedigree file.
    Fit(FitArgs),
    /// Simulate ascertained families.
    Simulate(SimulateArgs),
    /// Posterior penetrance curves for covariate profiles.
    Penetrance(PenetranceArgs),
    /// Risk score for one individual.
    Predict(PredictArgs),
    /// Repeated k-fold cross-validation of risk scores.
    Validate(ValidateArgs),
    /// Gap-time Kaplan-Meier curves and Kendall's tau.
    Eda(EdaArgs),
    /// Compare fitted models by DIC.
    Dic(DicArgs),
}

#[derive(Args, Debug, Default)]
pub struct ModelArgs {
    /// Covariate preset (M1..M5) or list such as `G,S,D,GxD`.
    #[arg(long)]
    pub covariates: Option<String>,
    /// Bernstein degree of the baseline.
    #[arg(long)]
    pub degree: Option<usize>,
    /// Fit without the family frailty.
    #[arg(long)]
    pub no_frailty: bool,
    /// Drop the ascertainment correction.
    #[arg(long)]
    pub no_correction: bool,
    /// Carrier allele frequency used by the ascertainment correction.
    #[arg(long)]
    pub psi_a: Option<f64>,
}

#[derive(Args, Debug, Default)]
pub struct ChainArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub thinning: Option<usize>,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[arg(long)]
    pub pedigree: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub chain: ChainArgs,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub n_families: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Frailty precision of the simulated families.
    #[arg(long)]
    pub phi: Option<f64>,
    #[arg(long)]
    pub no_frailty: bool,
}

#[derive(Args, Debug)]
pub struct PenetranceArgs {
    /// Posterior CSV written by `fit`.
    #[arg(long)]
    pub posterior: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Profile such as `G=1,S=0,k=1,T1=20`; repeatable.
    #[arg(long = "query")]
    pub queries: Vec<String>,
    #[arg(long)]
    pub level: Option<f64>,
    #[arg(long)]
    pub grid_max: Option<f64>,
    #[arg(long)]
    pub grid_step: Option<f64>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum ScenarioArg {
    First,
    Next,
}

impl From<ScenarioArg> for RiskScenario {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::First => RiskScenario::FirstCancer,
            ScenarioArg::Next => RiskScenario::NextCancer,
        }
    }
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub posterior: PathBuf,
    #[arg(long)]
    pub pedigree: PathBuf,
    #[arg(long)]
    pub family: String,
    #[arg(long)]
    pub individual: String,
    #[arg(long, value_enum, default_value_t = ScenarioArg::First)]
    pub scenario: ScenarioArg,
    /// Window length in years.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Directory for `risk.json` and the manifest; stdout only when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    #[arg(long)]
    pub pedigree: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub splits: Option<usize>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub chain: ChainArgs,
}

#[derive(Args, Debug)]
pub struct EdaArgs {
    #[arg(long)]
    pub pedigree: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub include_probands: bool,
}

#[derive(Args, Debug)]
pub struct DicArgs {
    /// Pedigree the posteriors were fitted to.
    #[arg(long)]
    pub pedigree: PathBuf,
    /// Posterior CSVs to compare.
    #[arg(required = true)]
    pub posteriors: Vec<PathBuf>,
    #[arg(long)]
    pub no_correction: bool,
    #[arg(long)]
    pub psi_a: Option<f64>,
    /// Directory for `dic.csv` and the manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: Option<u64>,
    config: &'a RunConfig,
    inputs: Vec<String>,
    runtime_secs: f64,
    details: serde_json::Value,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn require_file(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("input file `{}` does not exist", path.display())))
    }
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w).and_then(|_| w.flush()).map_err(io_err(path))
}

fn read_pedigree(path: &Path, t_max: f64) -> Result<FamilySet, CliError> {
    require_file(path)?;
    let file = File::open(path).map_err(io_err(path))?;
    let format = PedigreeFormat {
        t_max,
        ..PedigreeFormat::default()
    };
    pedigree::parse_pedigree(BufReader::new(file), &format)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn read_posterior(path: &Path) -> Result<PosteriorSamples, CliError> {
    require_file(path)?;
    let file = File::open(path).map_err(io_err(path))?;
    let samples = sampler::read_samples_csv(BufReader::new(file))
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    if samples.is_empty() {
        return Err(CliError::Validation(format!("{}: no posterior draws", path.display())));
    }
    Ok(samples)
}

/// Reports every family that cannot be fitted; probands only matter when the
/// ascertainment correction is on.
fn check_families(fs: &FamilySet, need_proband: bool) -> Result<(), CliError> {
    let mut bad = 0;
    for (id, report) in fs.validate() {
        if !report.is_peelable() || (need_proband && !report.is_empty()) {
            eprintln!("family `{id}`: {report}");
            bad += 1;
        }
    }
    if bad > 0 {
        return Err(CliError::Validation(format!("{bad} families failed validation")));
    }
    Ok(())
}

fn apply_model(cfg: &mut RunConfig, args: &ModelArgs) -> Result<(), CliError> {
    if let Some(c) = &args.covariates {
        cfg.model.covariates = c
            .parse::<CovariateSet>()
            .map_err(|e| CliError::Usage(format!("--covariates: {e}")))?;
    }
    if let Some(d) = args.degree {
        cfg.model.degree = d;
    }
    if args.no_frailty {
        cfg.chain.frailty = false;
    }
    if args.no_correction {
        cfg.ascertainment.correction = false;
    }
    if let Some(p) = args.psi_a {
        cfg.ascertainment.psi_a = p;
    }
    Ok(())
}

fn apply_chain(cfg: &mut RunConfig, args: &ChainArgs) -> Result<(), CliError> {
    let c = &mut cfg.chain;
    c.seed = args.seed.unwrap_or(c.seed);
    c.iterations = args.iterations.unwrap_or(c.iterations);
    c.burn_in = args.burn_in.unwrap_or(c.burn_in);
    c.thinning = args.thinning.unwrap_or(c.thinning);
    c.check().map_err(|e| CliError::Usage(e.to_string()))?;
    cfg.prior.check().map_err(|e| CliError::Usage(e.to_string()))
}

/// Parses `G=1,S=0,k=1,T1=20`. `k` defaults to 0 and `T1` is required when
/// `k=1`.
pub fn parse_query(text: &str, w_grid: Vec<f64>) -> Result<PenetranceQuery, String> {
    let (mut g, mut s, mut k, mut t1) = (None, None, 0usize, None);
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| format!("`{part}` is not key=value"))?;
        let flag = |v: &str| match v.trim() {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(format!("`{key}` must be 0 or 1, got `{other}`")),
        };
        match key.trim() {
            "G" => g = Some(flag(value)?),
            "S" => s = Some(flag(value)?),
            "k" => {
                k = value
                    .trim()
                    .parse()
                    .map_err(|_| format!("bad history count `{value}`"))?
            }
            "T1" => {
                t1 = Some(
                    value
                        .trim()
                        .parse::<f64>()
                        .map_err(|_| format!("bad age `{value}`"))?,
                )
            }
            other => return Err(format!("unknown query key `{other}`")),
        }
    }
    let t_k = match (k, t1) {
        (0, None) => 0.0,
        (0, Some(_)) => return Err("T1 given with k=0".into()),
        (1, Some(t)) => t,
        (1, None) => return Err("k=1 needs T1".into()),
        _ => return Err(format!("k must be 0 or 1, got {k}")),
    };
    Ok(PenetranceQuery {
        carrier: g.ok_or("query needs G")?,
        male: s.ok_or("query needs S")?,
        history: k,
        t_k,
        w_grid,
    })
}

fn grid(max: f64, step: f64) -> Result<Vec<f64>, CliError> {
    if !(step > 0.0 && max >= 0.0 && max.is_finite()) {
        return Err(CliError::Usage("grid needs step > 0 and max >= 0".into()));
    }
    let n = (max / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| i as f64 * step).collect())
}

struct Outcome {
    seed: Option<u64>,
    out: Option<PathBuf>,
    inputs: Vec<PathBuf>,
    details: serde_json::Value,
}

fn cmd_fit(cfg: &mut RunConfig, args: &FitArgs) -> Result<Outcome, CliError> {
    apply_model(cfg, &args.model)?;
    apply_chain(cfg, &args.chain)?;
    let fs = read_pedigree(&args.pedigree, cfg.model.t_max)?;
    check_families(&fs, cfg.ascertainment.correction)?;
    prepare_out(&args.out)?;
    let samples = sampler::run_chain(&fs, &cfg.spec(), &cfg.chain, &cfg.prior, &cfg.settings())?;
    let path = args.out.join("posterior.csv");
    sampler::write_samples_csv(&samples, create(&path)?)?;
    for s in sampler::summarize(&samples) {
        log::info!(
            "{}: median {:.4} [{:.4}, {:.4}], ESS {:.0}",
            s.name,
            s.median,
            s.lower,
            s.upper,
            s.ess
        );
    }
    Ok(Outcome {
        seed: Some(cfg.chain.seed),
        out: Some(args.out.clone()),
        inputs: vec![args.pedigree.clone()],
        details: json!({
            "families": fs.len(),
            "individuals": fs.n_individuals(),
            "draws": samples.len(),
            "acceptance": samples.acceptance,
            "summary": sampler::summarize(&samples),
        }),
    })
}

fn cmd_simulate(cfg: &mut RunConfig, args: &SimulateArgs) -> Result<Outcome, CliError> {
    let sim = &mut cfg.simulate;
    sim.n_families = args.n_families.unwrap_or(sim.n_families);
    sim.seed = args.seed.unwrap_or(sim.seed);
    if args.phi.is_some() {
        sim.phi = args.phi;
    }
    if args.no_frailty {
        sim.phi = None;
    }
    sim.t_max = cfg.model.t_max;
    sim.check().map_err(|e| CliError::Usage(e.to_string()))?;
    prepare_out(&args.out)?;
    let (fs, truth) = simulate::simulate_dataset(sim)?;
    pedigree::write_pedigree(&fs, create(&args.out.join("pedigree.csv"))?)?;
    write_json(&args.out.join("truth.json"), &truth)?;
    let carriers = truth
        .families
        .iter()
        .flat_map(|f| &f.carriers)
        .filter(|(_, c)| *c)
        .count();
    Ok(Outcome {
        seed: Some(sim.seed),
        out: Some(args.out.clone()),
        inputs: Vec::new(),
        details: json!({
            "families": fs.len(),
            "individuals": fs.n_individuals(),
            "carriers": carriers,
        }),
    })
}

fn cmd_penetrance(cfg: &mut RunConfig, args: &PenetranceArgs) -> Result<Outcome, CliError> {
    let pen = &mut cfg.penetrance;
    if !args.queries.is_empty() {
        pen.queries = args.queries.clone();
    }
    pen.level = args.level.unwrap_or(pen.level);
    pen.grid_max = args.grid_max.unwrap_or(pen.grid_max);
    pen.grid_step = args.grid_step.unwrap_or(pen.grid_step);
    if !(pen.level > 0.0 && pen.level < 1.0) {
        return Err(CliError::Usage(format!("level must be in (0, 1), got {}", pen.level)));
    }
    let w_grid = grid(pen.grid_max, pen.grid_step)?;
    let queries = pen
        .queries
        .iter()
        .map(|q| parse_query(q, w_grid.clone()).map_err(|e| CliError::Usage(format!("`{q}`: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    for q in &queries {
        q.check(cfg.model.t_max)?;
    }
    let samples = read_posterior(&args.posterior)?;
    prepare_out(&args.out)?;
    let mut files = Vec::new();
    for (i, q) in queries.iter().enumerate() {
        let curve = predict::penetrance_curve(q, &samples, cfg.model.t_max, pen.level)?;
        let name = format!("penetrance_{}.csv", i + 1);
        predict::write_curve_csv(&curve, create(&args.out.join(&name))?)?;
        files.push(json!({ "query": pen.queries[i], "file": name }));
    }
    Ok(Outcome {
        seed: None,
        out: Some(args.out.clone()),
        inputs: vec![args.posterior.clone()],
        details: json!({ "draws": samples.len(), "curves": files }),
    })
}

fn cmd_predict(cfg: &mut RunConfig, args: &PredictArgs) -> Result<Outcome, CliError> {
    let horizon = args.horizon.unwrap_or(cfg.validate.horizon);
    cfg.validate.horizon = horizon;
    if !(horizon > 0.0) {
        return Err(CliError::Usage("horizon must be positive".into()));
    }
    let samples = read_posterior(&args.posterior)?;
    let fs = read_pedigree(&args.pedigree, cfg.model.t_max)?;
    let ind = fs
        .families
        .iter()
        .find(|f| f.id == args.family)
        .and_then(|f| f.members.iter().find(|m| m.id == args.individual))
        .ok_or_else(|| {
            CliError::Usage(format!(
                "individual `{}` not found in family `{}`",
                args.individual, args.family
            ))
        })?;
    let scenario = RiskScenario::from(args.scenario);
    let window = predict::risk_window(ind, scenario, horizon).ok_or_else(|| {
        CliError::Validation(format!(
            "individual `{}` has no observable {horizon}-year window for this scenario",
            ind.id
        ))
    })?;
    let risk = predict::five_year_risk(ind, &window, &samples, cfg.model.t_max)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let report = json!({
        "family": args.family,
        "individual": args.individual,
        "scenario": scenario,
        "window_start": window.start,
        "window_end": window.end,
        "outcome": window.outcome,
        "risk": risk,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    if let Some(out) = &args.out {
        prepare_out(out)?;
        write_json(&out.join("risk.json"), &report)?;
    }
    Ok(Outcome {
        seed: None,
        out: args.out.clone(),
        inputs: vec![args.posterior.clone(), args.pedigree.clone()],
        details: report,
    })
}

fn cmd_validate(cfg: &mut RunConfig, args: &ValidateArgs) -> Result<Outcome, CliError> {
    apply_model(cfg, &args.model)?;
    apply_chain(cfg, &args.chain)?;
    let cv = &mut cfg.validate;
    cv.folds = args.folds.unwrap_or(cv.folds);
    cv.splits = args.splits.unwrap_or(cv.splits);
    cv.horizon = args.horizon.unwrap_or(cv.horizon);
    let fs = read_pedigree(&args.pedigree, cfg.model.t_max)?;
    if cfg.validate.folds == 0 || cfg.validate.folds > fs.len() {
        return Err(CliError::Usage(format!(
            "{} folds requested for {} families",
            cfg.validate.folds,
            fs.len()
        )));
    }
    check_families(&fs, cfg.ascertainment.correction)?;
    prepare_out(&args.out)?;
    let report = predict::cross_validate(&fs, &cfg.validate, &cfg.fit_setup())?;
    let mut rows = Vec::new();
    for s in &report.splits {
        for (tag, set) in [("first", &s.first_cancer), ("next", &s.next_cancer)] {
            match predict::roc_auc(&set.scores, &set.labels) {
                Ok(roc) => {
                    let path = args.out.join(format!("roc_{tag}_{}.csv", s.split + 1));
                    predict::write_roc_csv(&roc, create(&path)?)?;
                }
                Err(e) => log::warn!("split {}: no ROC for `{tag}`: {e}", s.split + 1),
            }
        }
        rows.push(json!({
            "split": s.split + 1,
            "auc_first": s.first_cancer.auc(),
            "auc_next": s.next_cancer.auc(),
            "n_first": s.first_cancer.labels.len(),
            "n_next": s.next_cancer.labels.len(),
            "excluded_first": s.first_cancer.excluded,
            "excluded_next": s.next_cancer.excluded,
        }));
    }
    let summary = json!({
        "median_auc_first": report.median_auc(RiskScenario::FirstCancer),
        "median_auc_next": report.median_auc(RiskScenario::NextCancer),
        "splits": rows,
    });
    write_json(&args.out.join("auc_summary.json"), &summary)?;
    Ok(Outcome {
        seed: Some(cfg.validate.seed),
        out: Some(args.out.clone()),
        inputs: vec![args.pedigree.clone()],
        details: json!({
            "median_auc_first": summary["median_auc_first"],
            "median_auc_next": summary["median_auc_next"],
        }),
    })
}

fn cmd_eda(cfg: &mut RunConfig, args: &EdaArgs) -> Result<Outcome, CliError> {
    cfg.eda.include_probands |= args.include_probands;
    let fs = read_pedigree(&args.pedigree, cfg.model.t_max)?;
    prepare_out(&args.out)?;
    let report = eda::analyze(&fs, !cfg.eda.include_probands)?;
    if report.tau.is_none() {
        log::warn!("no orderable pairs of gap times; tau is undefined");
    }
    let tau = json!({
        "n_subjects": report.n_subjects,
        "include_probands": cfg.eda.include_probands,
        "tau": report.tau.map(|t| t.tau),
        "se": report.tau.map(|t| t.se),
        "orderable_pairs": report.tau.map_or(0, |t| t.orderable),
        "dropped_pairs": report.tau.map_or(0, |t| t.dropped),
    });
    write_json(&args.out.join("tau.json"), &tau)?;
    eda::write_km_csv(&report.km_first, create(&args.out.join("km_first.csv"))?)?;
    eda::write_km_csv(&report.km_second, create(&args.out.join("km_second.csv"))?)?;
    Ok(Outcome {
        seed: None,
        out: Some(args.out.clone()),
        inputs: vec![args.pedigree.clone()],
        details: tau,
    })
}

fn cmd_dic(cfg: &mut RunConfig, args: &DicArgs) -> Result<Outcome, CliError> {
    if args.no_correction {
        cfg.ascertainment.correction = false;
    }
    if let Some(p) = args.psi_a {
        cfg.ascertainment.psi_a = p;
    }
    let fs = read_pedigree(&args.pedigree, cfg.model.t_max)?;
    let mut rows = Vec::new();
    for path in &args.posteriors {
        let samples = read_posterior(path)?;
        let report = sampler::dic(&samples, &fs, &cfg.settings())?;
        let label = path
            .parent()
            .and_then(|p| p.file_name())
            .filter(|_| path.file_name().is_some_and(|f| f == "posterior.csv"))
            .unwrap_or(path.as_os_str())
            .to_string_lossy()
            .into_owned();
        rows.push((label, samples.covariates.to_string(), samples.frailty, report));
    }
    rows.sort_by(|a, b| a.3.dic.total_cmp(&b.3.dic));
    println!(
        "{:<24} {:<16} {:>7} {:>12} {:>12} {:>12} {:>10}",
        "model", "covariates", "frailty", "DIC", "mean_dev", "dev_at_mean", "p_D"
    );
    for (label, cov, frailty, r) in &rows {
        println!(
            "{label:<24} {cov:<16} {frailty:>7} {:>12.3} {:>12.3} {:>12.3} {:>10.3}",
            r.dic, r.mean_deviance, r.deviance_at_mean, r.p_d
        );
    }
    if let Some(out) = &args.out {
        prepare_out(out)?;
        let path = out.join("dic.csv");
        let mut w = csv::Writer::from_writer(create(&path)?);
        let csv_err = |e: csv::Error| CliError::Validation(format!("{}: {e}", path.display()));
        w.write_record(["model", "covariates", "frailty", "dic", "mean_deviance", "deviance_at_mean", "p_d"])
            .map_err(csv_err)?;
        for (label, cov, frailty, r) in &rows {
            w.write_record(&[
                label.clone(),
                cov.clone(),
                frailty.to_string(),
                r.dic.to_string(),
                r.mean_deviance.to_string(),
                r.deviance_at_mean.to_string(),
                r.p_d.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(io_err(&path))?;
    }
    let table: Vec<_> = rows
        .iter()
        .map(|(label, cov, frailty, r)| json!({ "model": label, "covariates": cov, "frailty": frailty, "dic": r }))
        .collect();
    let mut inputs = vec![args.pedigree.clone()];
    inputs.extend(args.posteriors.iter().cloned());
    Ok(Outcome {
        seed: None,
        out: args.out.clone(),
        inputs,
        details: json!({ "models": table }),
    })
}

/// Runs a parsed command line; map errors to exit codes with [`CliError::exit_code`].
pub fn run(cli: Cli) -> Result<(), CliError> {
    let start = Instant::now();
    let mut cfg = match &cli.config {
        Some(path) => {
            require_file(path)?;
            RunConfig::load(path)?
        }
        None => RunConfig::default(),
    };
    if cli.workers.is_some() {
        cfg.workers = cli.workers;
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.workers {
        if n == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
    let (name, outcome) = pool.install(|| match &cli.command {
        Command::Fit(a) => ("fit", cmd_fit(&mut cfg, a)),
        Command::Simulate(a) => ("simulate", cmd_simulate(&mut cfg, a)),
        Command::Penetrance(a) => ("penetrance", cmd_penetrance(&mut cfg, a)),
        Command::Predict(a) => ("predict", cmd_predict(&mut cfg, a)),
        Command::Validate(a) => ("validate", cmd_validate(&mut cfg, a)),
        Command::Eda(a) => ("eda", cmd_eda(&mut cfg, a)),
        Command::Dic(a) => ("dic", cmd_dic(&mut cfg, a)),
    });
    let outcome = outcome?;
    if let Some(out) = &outcome.out {
        let manifest = Manifest {
            command: name,
            version: env!("CARGO_PKG_VERSION"),
            seed: outcome.seed,
            config: &cfg,
            inputs: outcome.inputs.iter().map(|p| p.display().to_string()).collect(),
            runtime_secs: start.elapsed().as_secs_f64(),
            details: outcome.details,
        };
        write_json(&out.join("manifest.json"), &manifest)?;
    }
    Ok(())
}
