//! Random-walk Metropolis-Hastings within Gibbs.
//!
//! One sweep updates each regression coefficient (Gaussian steps), each
//! baseline weight (log-normal steps), each family frailty and the frailty
//! precision φ (both log-normal). Log-normal proposals carry the Jacobian
//! term `ln(new / old)` in the acceptance ratio.

use std::io::{Read, Write};
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};
use thiserror::Error;

use crate::likelihood::{LikelihoodError, LikelihoodModel, LikelihoodSettings, PredictorTable};
use crate::nhpp::{Covariate, CovariateSet, ModelError, ModelParams, DEFAULT_DEGREE};
use crate::pedigree::FamilySet;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error(transparent)]
    Likelihood(#[from] LikelihoodError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("burn-in ({burn_in}) must be smaller than the number of iterations ({iterations})")]
    BurnIn { burn_in: usize, iterations: usize },
    #[error("thinning must be at least 1")]
    Thinning,
    #[error("`{0}` must be positive and finite")]
    NonPositive(&'static str),
    #[error("log-likelihood of family `{family}` is not finite at the initial values")]
    NonFiniteInitial { family: String },
    #[error("posterior sample is empty")]
    Empty,
    #[error("malformed posterior sample file: {0}")]
    Format(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorConfig {
    pub beta_sd: f64,
    pub gamma_shape: f64,
    pub gamma_rate: f64,
    pub phi_shape: f64,
    pub phi_rate: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            beta_sd: 100.0,
            gamma_shape: 0.01,
            gamma_rate: 0.01,
            phi_shape: 0.01,
            phi_rate: 0.01,
        }
    }
}

impl PriorConfig {
    pub fn check(&self) -> Result<(), SamplerError> {
        for (name, v) in [
            ("beta_sd", self.beta_sd),
            ("gamma_shape", self.gamma_shape),
            ("gamma_rate", self.gamma_rate),
            ("phi_shape", self.phi_shape),
            ("phi_rate", self.phi_rate),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SamplerError::NonPositive(name));
            }
        }
        Ok(())
    }
}

/// Random-walk scales: Gaussian sd for β, log-scale sd for the rest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepSizes {
    pub beta: f64,
    pub gamma: f64,
    pub phi: f64,
    pub xi: f64,
}

impl Default for StepSizes {
    fn default() -> Self {
        StepSizes {
            beta: 0.1,
            gamma: 0.3,
            phi: 0.3,
            xi: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub steps: StepSizes,
    pub seed: u64,
    pub frailty: bool,
    /// Adds a joint (φ, ξ) move each sweep; see [`rescale_frailties`].
    pub frailty_rescale: bool,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            iterations: 100_000,
            burn_in: 5_000,
            thinning: 1,
            steps: StepSizes::default(),
            seed: 1,
            frailty: true,
            frailty_rescale: true,
        }
    }
}

impl ChainConfig {
    pub fn check(&self) -> Result<(), SamplerError> {
        if self.burn_in >= self.iterations {
            return Err(SamplerError::BurnIn {
                burn_in: self.burn_in,
                iterations: self.iterations,
            });
        }
        if self.thinning == 0 {
            return Err(SamplerError::Thinning);
        }
        let s = &self.steps;
        for (name, v) in [
            ("steps.beta", s.beta),
            ("steps.gamma", s.gamma),
            ("steps.phi", s.phi),
            ("steps.xi", s.xi),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SamplerError::NonPositive(name));
            }
        }
        Ok(())
    }

    /// Number of draws a run keeps.
    pub fn n_retained(&self) -> usize {
        (self.iterations - self.burn_in) / self.thinning
    }
}

/// Covariates and baseline degree of the fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub covariates: CovariateSet,
    pub degree: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            covariates: CovariateSet::preset(4).expect("preset exists"),
            degree: DEFAULT_DEGREE,
        }
    }
}

/// One retained state of the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub phi: Option<f64>,
    pub xi: Option<Vec<f64>>,
    pub loglik: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockStats {
    pub block: String,
    pub proposed: u64,
    pub accepted: u64,
}

impl BlockStats {
    fn new(block: impl Into<String>) -> Self {
        BlockStats {
            block: block.into(),
            proposed: 0,
            accepted: 0,
        }
    }

    fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += u64::from(accepted);
    }

    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSamples {
    pub covariates: CovariateSet,
    pub degree: usize,
    pub family_ids: Vec<String>,
    pub frailty: bool,
    pub draws: Vec<Draw>,
    /// Post-burn-in acceptance counts per block; empty when read back from CSV.
    pub acceptance: Vec<BlockStats>,
}

impl PosteriorSamples {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Parameter vector of draw `k`.
    pub fn params(&self, k: usize) -> ModelParams {
        let d = &self.draws[k];
        ModelParams {
            covariates: self.covariates.clone(),
            beta: d.beta.clone(),
            gamma: d.gamma.clone(),
            phi: d.phi,
        }
    }

    /// Column names, in CSV order.
    pub fn column_names(&self) -> Vec<String> {
        let mut names = vec!["draw".to_string(), "loglik".to_string()];
        names.extend(self.covariates.terms().iter().map(|c| format!("beta_{}", c.name())));
        names.extend((1..=self.degree).map(|m| format!("gamma_{m}")));
        if self.frailty {
            names.push("phi".into());
            names.extend(self.family_ids.iter().map(|f| format!("xi_{f}")));
        }
        names
    }

    fn row(&self, k: usize) -> Vec<f64> {
        let d = &self.draws[k];
        let mut row = vec![d.loglik];
        row.extend(&d.beta);
        row.extend(&d.gamma);
        if let (Some(phi), Some(xi)) = (d.phi, &d.xi) {
            row.push(phi);
            row.extend(xi);
        }
        row
    }

    /// Trace of a named column (`loglik`, `beta_G`, `gamma_2`, `phi`, `xi_<family>`).
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.column_names().iter().position(|c| c == name)?;
        if idx == 0 {
            return Some((0..self.len()).map(|k| k as f64).collect());
        }
        Some((0..self.len()).map(|k| self.row(k)[idx - 1]).collect())
    }

    /// Posterior means of all parameters (frailties included).
    pub fn posterior_mean(&self) -> Result<(ModelParams, Option<Vec<f64>>), SamplerError> {
        if self.is_empty() {
            return Err(SamplerError::Empty);
        }
        let n = self.len() as f64;
        let mean = |get: &dyn Fn(&Draw) -> &[f64], len: usize| -> Vec<f64> {
            let mut acc = vec![0.0; len];
            for d in &self.draws {
                for (a, v) in acc.iter_mut().zip(get(d)) {
                    *a += v;
                }
            }
            acc.iter().map(|a| a / n).collect()
        };
        let beta = mean(&|d| &d.beta, self.covariates.len());
        let gamma = mean(&|d| &d.gamma, self.degree);
        let (phi, xi) = if self.frailty {
            let phi = self.draws.iter().map(|d| d.phi.unwrap_or(1.0)).sum::<f64>() / n;
            let xi = mean(&|d| d.xi.as_deref().unwrap_or(&[]), self.family_ids.len());
            (Some(phi), Some(xi))
        } else {
            (None, None)
        };
        Ok((
            ModelParams {
                covariates: self.covariates.clone(),
                beta,
                gamma,
                phi,
            },
            xi,
        ))
    }
}

/// Normal log-density.
fn normal_lpdf(x: f64, sd: f64) -> f64 {
    -0.5 * (x / sd).powi(2) - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// Gamma(shape, rate) log-density; `x` is floored at the smallest positive
/// double so that shapes below one stay finite at the boundary.
fn gamma_lpdf(x: f64, shape: f64, rate: f64) -> f64 {
    if x < 0.0 {
        return f64::NEG_INFINITY;
    }
    let x = x.max(f64::MIN_POSITIVE);
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

/// Log prior density of the parameters; the φ term is included when
/// `params.phi` is set.
pub fn log_prior(params: &ModelParams, prior: &PriorConfig) -> f64 {
    let beta: f64 = params.beta.iter().map(|&b| normal_lpdf(b, prior.beta_sd)).sum();
    let gamma: f64 = params
        .gamma
        .iter()
        .map(|&g| gamma_lpdf(g, prior.gamma_shape, prior.gamma_rate))
        .sum();
    let phi = params
        .phi
        .map_or(0.0, |p| gamma_lpdf(p, prior.phi_shape, prior.phi_rate));
    beta + gamma + phi
}

/// Proposal-density correction for a log-normal random walk: `proposed / old`.
pub fn lognormal_adjustment(old: f64, proposed: f64) -> Result<f64, SamplerError> {
    if !(old > 0.0) || !(proposed > 0.0) {
        return Err(SamplerError::NonPositive("log-normal proposal state"));
    }
    Ok(proposed / old)
}

/// Unnormalized log posterior of φ given the frailties:
/// `(Iφ + a - 1) ln φ - bφ + (φ - 1) Σ ln ξ - φ Σ ξ - I ln Γ(φ)`.
pub fn phi_log_posterior(phi: f64, xi: &[f64], prior: &PriorConfig) -> Result<f64, SamplerError> {
    if !(phi > 0.0 && phi.is_finite()) {
        return Err(SamplerError::NonPositive("phi"));
    }
    let i = xi.len() as f64;
    let sum_log: f64 = xi.iter().map(|x| x.ln()).sum();
    let sum: f64 = xi.iter().sum();
    Ok((i * phi + prior.phi_shape - 1.0) * phi.ln() - prior.phi_rate * phi
        + (phi - 1.0) * sum_log
        - phi * sum
        - i * ln_gamma(phi))
}

/// Trigamma function: recurrence up to 10, then the asymptotic series.
fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let x2 = 1.0 / (x * x);
    acc + 1.0 / x
        + x2 / 2.0
        + x2 / x * (1.0 / 6.0 - x2 * (1.0 / 30.0 - x2 * (1.0 / 42.0 - x2 / 30.0)))
}

/// Mean and sd of `ln ξ` for `ξ ~ Gamma(φ, φ)`.
fn log_frailty_moments(phi: f64) -> (f64, f64) {
    (digamma(phi) - phi.ln(), trigamma(phi).sqrt())
}

/// Moves log-frailties from their standardized position under `Gamma(φ, φ)`
/// to the same position under `Gamma(φ', φ')`. Returns the new frailties and
/// the log Jacobian of the map.
pub fn rescale_frailties(xi: &[f64], phi: f64, phi_new: f64) -> (Vec<f64>, f64) {
    let (mu, sd) = log_frailty_moments(phi);
    let (mu_new, sd_new) = log_frailty_moments(phi_new);
    let ratio = sd_new / sd;
    let mut log_jacobian = xi.len() as f64 * ratio.ln();
    let moved = xi
        .iter()
        .map(|&x| {
            let y = (mu_new + ratio * (x.ln() - mu)).exp();
            log_jacobian += (y / x).ln();
            y
        })
        .collect();
    (moved, log_jacobian)
}

/// Accepts with probability `min(1, exp(log_ratio))`; NaN and `-inf` reject.
pub fn metropolis_accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio.is_nan() {
        return false;
    }
    if log_ratio >= 0.0 {
        return true;
    }
    let u: f64 = rng.random();
    u.ln() < log_ratio
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Proposal {
    /// `x + sd * z`.
    Gaussian,
    /// `x * exp(sd * z)`, for positive parameters.
    LogNormal,
}

impl Proposal {
    /// Draws a proposal and returns it with the log proposal-density correction.
    pub fn propose<R: Rng + ?Sized>(self, current: f64, sd: f64, rng: &mut R) -> (f64, f64) {
        let z: f64 = StandardNormal.sample(rng);
        match self {
            Proposal::Gaussian => (current + sd * z, 0.0),
            Proposal::LogNormal => {
                let proposed = current * (sd * z).exp();
                (proposed, (proposed / current).ln())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub value: f64,
    pub log_target: f64,
    pub accepted: bool,
}

/// One scalar Metropolis-Hastings step. `log_target` evaluates the
/// unnormalized log posterior at a candidate value.
pub fn mh_step<R, F>(
    current: f64,
    current_log_target: f64,
    proposal: Proposal,
    sd: f64,
    mut log_target: F,
    rng: &mut R,
) -> StepOutcome
where
    R: Rng + ?Sized,
    F: FnMut(f64) -> f64,
{
    let (proposed, log_adj) = proposal.propose(current, sd, rng);
    let target = log_target(proposed);
    let accepted = metropolis_accept(target - current_log_target + log_adj, rng);
    if accepted {
        StepOutcome {
            value: proposed,
            log_target: target,
            accepted,
        }
    } else {
        StepOutcome {
            value: current,
            log_target: current_log_target,
            accepted,
        }
    }
}

/// Mutable chain state plus the likelihood caches that go with it.
struct ChainState<'a> {
    model: &'a LikelihoodModel,
    params: ModelParams,
    xi: Vec<f64>,
    baseline: crate::likelihood::BaselineCache,
    table: PredictorTable,
    fam_ll: Vec<f64>,
}

impl ChainState<'_> {
    fn total(&self) -> f64 {
        self.fam_ll.iter().sum()
    }
}

/// Runs one chain on a compiled model.
pub fn run_chain_on(
    model: &LikelihoodModel,
    chain: &ChainConfig,
    prior: &PriorConfig,
) -> Result<PosteriorSamples, SamplerError> {
    chain.check()?;
    prior.check()?;
    let n_fam = model.n_families();
    let covariates = model.covariates().clone();
    let params = ModelParams::initial(covariates.clone(), model.degree(), chain.frailty);
    let baseline = model.baseline(&params.gamma);
    let table = PredictorTable::new(&covariates, &params.beta);
    let xi = vec![1.0; n_fam];
    let fam_ll = model.family_logliks(&baseline, &table, &xi);
    if let Some(i) = fam_ll.iter().position(|v| !v.is_finite()) {
        return Err(SamplerError::NonFiniteInitial {
            family: model.family_id(i).to_string(),
        });
    }
    let mut s = ChainState {
        model,
        params,
        xi,
        baseline,
        table,
        fam_ll,
    };

    let mut stats: Vec<BlockStats> = covariates
        .terms()
        .iter()
        .map(|c| BlockStats::new(format!("beta_{}", c.name())))
        .chain((1..=model.degree()).map(|m| BlockStats::new(format!("gamma_{m}"))))
        .collect();
    if chain.frailty {
        stats.push(BlockStats::new("xi"));
        stats.push(BlockStats::new("phi"));
        if chain.frailty_rescale {
            stats.push(BlockStats::new("phi_xi"));
        }
    }
    let n_beta = covariates.len();
    let n_gamma = model.degree();

    let mut rng = ChaCha8Rng::seed_from_u64(chain.seed);
    let mut draws = Vec::with_capacity(chain.n_retained());
    let started = Instant::now();
    let report_every = (chain.iterations / 10).max(1);

    for it in 0..chain.iterations {
        let counting = it >= chain.burn_in;
        let record = |block: usize, accepted: bool, stats: &mut Vec<BlockStats>| {
            if counting {
                stats[block].record(accepted);
            }
        };

        for j in 0..n_beta {
            let (proposed, _) = Proposal::Gaussian.propose(s.params.beta[j], chain.steps.beta, &mut rng);
            let mut beta = s.params.beta.clone();
            beta[j] = proposed;
            let table = PredictorTable::new(&covariates, &beta);
            let fam_ll = model.family_logliks(&s.baseline, &table, &s.xi);
            let new_total: f64 = fam_ll.iter().sum();
            let log_ratio = new_total - s.total()
                + normal_lpdf(proposed, prior.beta_sd)
                - normal_lpdf(s.params.beta[j], prior.beta_sd);
            let accepted = metropolis_accept(log_ratio, &mut rng);
            if accepted {
                s.params.beta = beta;
                s.table = table;
                s.fam_ll = fam_ll;
            }
            record(j, accepted, &mut stats);
        }

        for m in 0..n_gamma {
            let old = s.params.gamma[m];
            let (proposed, log_adj) = Proposal::LogNormal.propose(old, chain.steps.gamma, &mut rng);
            let mut gamma = s.params.gamma.clone();
            gamma[m] = proposed;
            let baseline = model.baseline(&gamma);
            let fam_ll = model.family_logliks(&baseline, &s.table, &s.xi);
            let new_total: f64 = fam_ll.iter().sum();
            let log_ratio = new_total - s.total()
                + gamma_lpdf(proposed, prior.gamma_shape, prior.gamma_rate)
                - gamma_lpdf(old, prior.gamma_shape, prior.gamma_rate)
                + log_adj;
            let accepted = metropolis_accept(log_ratio, &mut rng);
            if accepted {
                s.params.gamma = gamma;
                s.baseline = baseline;
                s.fam_ll = fam_ll;
            }
            record(n_beta + m, accepted, &mut stats);
        }

        if chain.frailty {
            let phi = s.params.phi.expect("frailty mode has phi");
            for i in 0..n_fam {
                let old = s.xi[i];
                let current = s.fam_ll[i] + (phi - 1.0) * old.ln() - phi * old;
                let mut fam_new = f64::NAN;
                let out = mh_step(
                    old,
                    current,
                    Proposal::LogNormal,
                    chain.steps.xi,
                    |x| {
                        fam_new = s.model.family_loglik(i, &s.baseline, &s.table, x);
                        fam_new + (phi - 1.0) * x.ln() - phi * x
                    },
                    &mut rng,
                );
                if out.accepted {
                    s.xi[i] = out.value;
                    s.fam_ll[i] = fam_new;
                }
                record(n_beta + n_gamma, out.accepted, &mut stats);
            }
            let xi = &s.xi;
            let current = phi_log_posterior(phi, xi, prior)?;
            let out = mh_step(
                phi,
                current,
                Proposal::LogNormal,
                chain.steps.phi,
                |p| phi_log_posterior(p, xi, prior).unwrap_or(f64::NEG_INFINITY),
                &mut rng,
            );
            s.params.phi = Some(out.value);
            record(n_beta + n_gamma + 1, out.accepted, &mut stats);

            if chain.frailty_rescale {
                let phi = out.value;
                let (phi_new, log_adj) = Proposal::LogNormal.propose(phi, chain.steps.phi, &mut rng);
                let (xi_new, log_jacobian) = rescale_frailties(&s.xi, phi, phi_new);
                let fam_ll = model.family_logliks(&s.baseline, &s.table, &xi_new);
                let log_ratio = fam_ll.iter().sum::<f64>() - s.total()
                    + phi_log_posterior(phi_new, &xi_new, prior).unwrap_or(f64::NEG_INFINITY)
                    - out.log_target
                    + log_adj
                    + log_jacobian;
                let accepted = metropolis_accept(log_ratio, &mut rng);
                if accepted {
                    s.params.phi = Some(phi_new);
                    s.xi = xi_new;
                    s.fam_ll = fam_ll;
                }
                record(n_beta + n_gamma + 2, accepted, &mut stats);
            }
        }

        if counting && (it - chain.burn_in + 1) % chain.thinning == 0 {
            draws.push(Draw {
                beta: s.params.beta.clone(),
                gamma: s.params.gamma.clone(),
                phi: s.params.phi,
                xi: chain.frailty.then(|| s.xi.clone()),
                loglik: s.total(),
            });
        }
        if (it + 1) % report_every == 0 {
            log::info!(
                "iteration {}/{} loglik {:.3} ({:.1}s)",
                it + 1,
                chain.iterations,
                s.total(),
                started.elapsed().as_secs_f64()
            );
        }
    }

    Ok(PosteriorSamples {
        covariates,
        degree: model.degree(),
        family_ids: (0..n_fam).map(|i| model.family_id(i).to_string()).collect(),
        frailty: chain.frailty,
        draws,
        acceptance: stats,
    })
}

/// Compiles `fs` and runs one chain.
pub fn run_chain(
    fs: &FamilySet,
    spec: &ModelSpec,
    chain: &ChainConfig,
    prior: &PriorConfig,
    settings: &LikelihoodSettings,
) -> Result<PosteriorSamples, SamplerError> {
    let model = LikelihoodModel::new(fs, spec.covariates.clone(), spec.degree, *settings)?;
    run_chain_on(&model, chain, prior)
}

/// Independent chains with seeds `chain.seed`, `chain.seed + 1`, ...
pub fn run_chains(
    model: &LikelihoodModel,
    chain: &ChainConfig,
    prior: &PriorConfig,
    n_chains: usize,
) -> Result<Vec<PosteriorSamples>, SamplerError> {
    (0..n_chains)
        .into_par_iter()
        .map(|k| {
            let cfg = ChainConfig {
                seed: chain.seed.wrapping_add(k as u64),
                ..chain.clone()
            };
            run_chain_on(model, &cfg, prior)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DicReport {
    pub dic: f64,
    pub mean_deviance: f64,
    pub deviance_at_mean: f64,
    pub p_d: f64,
}

/// DIC with the plug-in deviance at the posterior means of every parameter,
/// frailties included.
pub fn dic_on(samples: &PosteriorSamples, model: &LikelihoodModel) -> Result<DicReport, SamplerError> {
    if samples.is_empty() {
        return Err(SamplerError::Empty);
    }
    let mean_deviance =
        samples.draws.iter().map(|d| -2.0 * d.loglik).sum::<f64>() / samples.len() as f64;
    let (params, xi) = samples.posterior_mean()?;
    let deviance_at_mean = -2.0 * model.total(&params, xi.as_deref())?;
    let p_d = mean_deviance - deviance_at_mean;
    Ok(DicReport {
        dic: mean_deviance + p_d,
        mean_deviance,
        deviance_at_mean,
        p_d,
    })
}

pub fn dic(
    samples: &PosteriorSamples,
    fs: &FamilySet,
    settings: &LikelihoodSettings,
) -> Result<DicReport, SamplerError> {
    let model = LikelihoodModel::new(fs, samples.covariates.clone(), samples.degree, *settings)?;
    dic_on(samples, &model)
}

/// Sample quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
    pub ess: f64,
}

/// Mean, sd, median, central 95% interval and ESS of one trace.
pub fn summarize_trace(name: &str, trace: &[f64]) -> ParameterSummary {
    let n = trace.len() as f64;
    let mean = trace.iter().sum::<f64>() / n;
    let var = trace.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let mut sorted = trace.to_vec();
    sorted.sort_by(f64::total_cmp);
    ParameterSummary {
        name: name.to_string(),
        mean,
        sd: var.sqrt(),
        median: quantile(&sorted, 0.5),
        lower: quantile(&sorted, 0.025),
        upper: quantile(&sorted, 0.975),
        ess: effective_sample_size(trace),
    }
}

/// Summaries of β, γ and φ (frailties are left out).
pub fn summarize(samples: &PosteriorSamples) -> Vec<ParameterSummary> {
    let mut names: Vec<String> = samples
        .covariates
        .terms()
        .iter()
        .map(|c| format!("beta_{}", c.name()))
        .chain((1..=samples.degree).map(|m| format!("gamma_{m}")))
        .collect();
    if samples.frailty {
        names.push("phi".into());
    }
    names
        .iter()
        .filter_map(|n| samples.column(n).map(|t| summarize_trace(n, &t)))
        .collect()
}

fn autocovariance(x: &[f64], lag: usize, mean: f64) -> f64 {
    let n = x.len();
    (0..n - lag).map(|i| (x[i] - mean) * (x[i + lag] - mean)).sum::<f64>() / n as f64
}

/// Effective sample size with Geyer's initial positive sequence truncation.
pub fn effective_sample_size(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let c0 = autocovariance(x, 0, mean);
    if c0 <= 0.0 {
        return n as f64;
    }
    let mut sum = 0.0;
    let mut lag = 1;
    while lag + 1 < n {
        let pair = (autocovariance(x, lag, mean) + autocovariance(x, lag + 1, mean)) / c0;
        if pair <= 0.0 {
            break;
        }
        sum += pair;
        lag += 2;
    }
    let tau = -1.0 + 2.0 * (1.0 + sum);
    n as f64 / tau.max(1.0 / n as f64)
}

/// Split-R̂ over chains of equal length; each chain is halved first.
pub fn split_rhat(chains: &[&[f64]]) -> f64 {
    let half = chains.iter().map(|c| c.len() / 2).min().unwrap_or(0);
    if half < 2 {
        return f64::NAN;
    }
    let parts: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| [&c[..half], &c[c.len() - half..]])
        .collect();
    let m = parts.len() as f64;
    let n = half as f64;
    let means: Vec<f64> = parts.iter().map(|p| p.iter().sum::<f64>() / n).collect();
    let grand = means.iter().sum::<f64>() / m;
    let b = n / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let w = parts
        .iter()
        .zip(&means)
        .map(|(p, mu)| p.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1.0))
        .sum::<f64>()
        / m;
    let var = (n - 1.0) / n * w + b / n;
    (var / w).sqrt()
}

/// Writes one row per retained draw with named columns.
pub fn write_samples_csv<W: Write>(samples: &PosteriorSamples, sink: W) -> Result<(), SamplerError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(samples.column_names())?;
    for k in 0..samples.len() {
        let mut record = vec![k.to_string()];
        record.extend(samples.row(k).iter().map(|v| v.to_string()));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a file written by [`write_samples_csv`].
pub fn read_samples_csv<R: Read>(source: R) -> Result<PosteriorSamples, SamplerError> {
    let mut r = csv::Reader::from_reader(source);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.len() < 2 || header[0] != "draw" || header[1] != "loglik" {
        return Err(SamplerError::Format("expected `draw,loglik,...` header".into()));
    }
    let mut terms = Vec::new();
    let mut degree = 0;
    let mut frailty = false;
    let mut family_ids = Vec::new();
    for name in &header[2..] {
        if let Some(c) = name.strip_prefix("beta_") {
            let c: Covariate = c
                .parse()
                .map_err(|_| SamplerError::Format(format!("unknown column `{name}`")))?;
            terms.push(c);
        } else if name.starts_with("gamma_") {
            degree += 1;
        } else if name == "phi" {
            frailty = true;
        } else if let Some(f) = name.strip_prefix("xi_") {
            family_ids.push(f.to_string());
        } else {
            return Err(SamplerError::Format(format!("unknown column `{name}`")));
        }
    }
    let covariates = CovariateSet::new(terms)?;
    let p = covariates.len();
    let mut draws = Vec::new();
    for record in r.records() {
        let record = record?;
        let values = record
            .iter()
            .skip(1)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| SamplerError::Format(format!("bad number `{v}`")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if values.len() != header.len() - 1 {
            return Err(SamplerError::Format("row length differs from header".into()));
        }
        let beta = values[1..1 + p].to_vec();
        let gamma = values[1 + p..1 + p + degree].to_vec();
        let (phi, xi) = if frailty {
            (
                Some(values[1 + p + degree]),
                Some(values[2 + p + degree..].to_vec()),
            )
        } else {
            (None, None)
        };
        draws.push(Draw {
            beta,
            gamma,
            phi,
            xi,
            loglik: values[0],
        });
    }
    Ok(PosteriorSamples {
        covariates,
        degree,
        family_ids,
        frailty,
        draws,
        acceptance: Vec::new(),
    })
}
