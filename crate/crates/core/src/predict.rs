//! Penetrance, risk scores and their cross-validated discrimination.
//!
//! With a Gamma(φ, φ) frailty integrated out, the probability of the next
//! onset within `w` years of the `k`-th is `1 - (φ / (φ + Λ))^φ`, where `Λ`
//! is the integrated intensity over the window with `ξ = 1`.

use std::io::Write;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::likelihood::{LikelihoodError, LikelihoodSettings};
use crate::nhpp::{cumulative_intensity, CovariateSchedule, ModelError, ModelParams};
use crate::pedigree::{normalize_age, AgeRangeError, FamilySet, Individual, Sex};
use crate::sampler::{quantile, run_chain, ChainConfig, ModelSpec, PosteriorSamples, PriorConfig, SamplerError};

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("invalid penetrance query: {0}")]
    Query(String),
    #[error("posterior sample is empty")]
    EmptySamples,
    #[error("individual `{0}` has no observed genotype")]
    MissingGenotype(String),
    #[error("individual `{0}` is a proband and cannot be scored")]
    Proband(String),
    #[error("ROC needs at least one positive and one negative label")]
    SingleClass,
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("{folds} folds requested for {families} families")]
    TooManyFolds { folds: usize, families: usize },
    #[error(transparent)]
    Age(#[from] AgeRangeError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Likelihood(#[from] LikelihoodError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Default penetrance grid: 0 to 50 years in 1-year steps.
pub fn default_grid() -> Vec<f64> {
    (0..=50).map(f64::from).collect()
}

/// Probability of an onset given integrated intensity `cum`, with the frailty
/// integrated out when `phi` is set.
pub fn frailty_penetrance(phi: Option<f64>, cum: f64) -> f64 {
    match phi {
        Some(phi) => -(-phi * (cum / phi).ln_1p()).exp_m1(),
        None => -(-cum).exp_m1(),
    }
}

/// `Pr(onset in (a, b] | none by a)` where `cum_a`, `cum_b` integrate the
/// intensity from the start of the gap to `a` and `b`.
pub fn conditional_penetrance(phi: Option<f64>, cum_a: f64, cum_b: f64) -> f64 {
    match phi {
        Some(phi) => -(-phi * ((cum_b - cum_a) / (phi + cum_a)).ln_1p()).exp_m1(),
        None => -(-(cum_b - cum_a)).exp_m1(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenetranceQuery {
    pub carrier: bool,
    pub male: bool,
    /// Number of previous onsets (0 or 1).
    pub history: usize,
    /// Age at the previous onset in years; 0 when `history` is 0.
    pub t_k: f64,
    /// Gap times in years.
    pub w_grid: Vec<f64>,
}

impl PenetranceQuery {
    pub fn check(&self, t_max: f64) -> Result<(), PredictError> {
        if self.history > 1 {
            return Err(PredictError::Query("history must be 0 or 1".into()));
        }
        if !(self.t_k >= 0.0) || (self.history == 0 && self.t_k != 0.0) {
            return Err(PredictError::Query(format!("bad previous-onset age {}", self.t_k)));
        }
        if self.w_grid.iter().any(|w| !(*w >= 0.0))
            || self.w_grid.windows(2).any(|p| p[1] < p[0])
        {
            return Err(PredictError::Query("grid must be nonnegative and ascending".into()));
        }
        let last = self.w_grid.last().copied().unwrap_or(0.0);
        if self.t_k + last > t_max {
            return Err(PredictError::Query(format!(
                "window ends at {} beyond t_max {t_max}",
                self.t_k + last
            )));
        }
        Ok(())
    }

    fn schedule(&self, t_max: f64) -> Result<CovariateSchedule, PredictError> {
        let first = if self.history == 1 {
            Some(normalize_age(self.t_k, t_max)?)
        } else {
            None
        };
        Ok(CovariateSchedule::new(self.carrier, self.male, first))
    }
}

/// Penetrance of the next onset within `w` years of `query.t_k`.
pub fn penetrance_point(
    query: &PenetranceQuery,
    w: f64,
    params: &ModelParams,
    t_max: f64,
) -> Result<f64, PredictError> {
    let sched = query.schedule(t_max)?;
    let a = normalize_age(query.t_k, t_max)?;
    let b = normalize_age(query.t_k + w, t_max)?;
    let cum = cumulative_intensity(a, b, &sched, 1.0, params)?;
    Ok(frailty_penetrance(params.phi, cum))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenetranceCurve {
    pub w: Vec<f64>,
    pub median: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Pointwise posterior median and equal-tailed band (`level`, e.g. 0.95).
pub fn penetrance_curve(
    query: &PenetranceQuery,
    samples: &PosteriorSamples,
    t_max: f64,
    level: f64,
) -> Result<PenetranceCurve, PredictError> {
    if samples.is_empty() {
        return Err(PredictError::EmptySamples);
    }
    query.check(t_max)?;
    let per_draw = (0..samples.len())
        .into_par_iter()
        .map(|k| {
            let params = samples.params(k);
            query
                .w_grid
                .iter()
                .map(|&w| penetrance_point(query, w, &params, t_max))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    let tail = (1.0 - level) / 2.0;
    let mut curve = PenetranceCurve {
        w: query.w_grid.clone(),
        median: Vec::new(),
        lower: Vec::new(),
        upper: Vec::new(),
    };
    for j in 0..query.w_grid.len() {
        let mut col: Vec<f64> = per_draw.iter().map(|d| d[j]).collect();
        col.sort_by(f64::total_cmp);
        curve.median.push(quantile(&col, 0.5));
        curve.lower.push(quantile(&col, tail));
        curve.upper.push(quantile(&col, 1.0 - tail));
    }
    Ok(curve)
}

pub fn write_curve_csv<W: Write>(curve: &PenetranceCurve, sink: W) -> Result<(), PredictError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["w", "median", "lower", "upper"])?;
    for j in 0..curve.w.len() {
        w.write_record(&[
            curve.w[j].to_string(),
            curve.median[j].to_string(),
            curve.lower[j].to_string(),
            curve.upper[j].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Which onset a risk score predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RiskScenario {
    /// Affected versus unaffected: risk of a first onset.
    FirstCancer,
    /// Multiple versus single primary: risk of a second onset after the first.
    NextCancer,
}

/// Evaluation window for one individual, in years.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskWindow {
    pub start: f64,
    pub end: f64,
    /// Previous-onset count and age at the window start.
    pub history: usize,
    pub t_k: f64,
    /// Whether the predicted onset happened at the window end.
    pub outcome: bool,
}

/// Rolls back `horizon` years from the onset or censoring age. Positives are
/// clipped at the start of the gap; negatives are only eligible if the full
/// window is observed. Returns `None` for individuals the scenario excludes.
pub fn risk_window(ind: &Individual, scenario: RiskScenario, horizon: f64) -> Option<RiskWindow> {
    match scenario {
        RiskScenario::FirstCancer => match ind.first_onset() {
            Some(t1) => Some(RiskWindow {
                start: (t1 - horizon).max(0.0),
                end: t1,
                history: 0,
                t_k: 0.0,
                outcome: true,
            }),
            None => (ind.censor_age >= horizon).then(|| RiskWindow {
                start: ind.censor_age - horizon,
                end: ind.censor_age,
                history: 0,
                t_k: 0.0,
                outcome: false,
            }),
        },
        RiskScenario::NextCancer => {
            let t1 = ind.first_onset()?;
            match ind.onset_ages.get(1) {
                Some(&t2) => Some(RiskWindow {
                    start: (t2 - horizon).max(t1),
                    end: t2,
                    history: 1,
                    t_k: t1,
                    outcome: true,
                }),
                None => (ind.censor_age - horizon >= t1).then(|| RiskWindow {
                    start: ind.censor_age - horizon,
                    end: ind.censor_age,
                    history: 1,
                    t_k: t1,
                    outcome: false,
                }),
            }
        }
    }
}

/// Conditional risk over `window` for one parameter draw.
pub fn window_risk(
    carrier: bool,
    sex: Sex,
    window: &RiskWindow,
    params: &ModelParams,
    t_max: f64,
) -> Result<f64, PredictError> {
    let first = if window.history == 1 {
        Some(normalize_age(window.t_k, t_max)?)
    } else {
        None
    };
    let sched = CovariateSchedule::new(carrier, sex == Sex::Male, first);
    let origin = normalize_age(window.t_k, t_max)?;
    let a = normalize_age(window.start, t_max)?;
    let b = normalize_age(window.end, t_max)?;
    let cum_a = cumulative_intensity(origin, a, &sched, 1.0, params)?;
    let cum_b = cum_a + cumulative_intensity(a, b, &sched, 1.0, params)?;
    Ok(conditional_penetrance(params.phi, cum_a, cum_b))
}

/// Posterior-median risk for `ind` over `window`, using its observed genotype.
pub fn five_year_risk(
    ind: &Individual,
    window: &RiskWindow,
    samples: &PosteriorSamples,
    t_max: f64,
) -> Result<f64, PredictError> {
    if ind.is_proband {
        return Err(PredictError::Proband(ind.id.clone()));
    }
    let carrier = ind
        .genotype
        .carrier()
        .ok_or_else(|| PredictError::MissingGenotype(ind.id.clone()))?;
    if samples.is_empty() {
        return Err(PredictError::EmptySamples);
    }
    let mut risks = (0..samples.len())
        .map(|k| window_risk(carrier, ind.sex, window, &samples.params(k), t_max))
        .collect::<Result<Vec<_>, _>>()?;
    risks.sort_by(f64::total_cmp);
    Ok(quantile(&risks, 0.5))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
    pub auc: f64,
}

/// Empirical ROC by threshold sweep; AUC by the trapezoid rule, which counts
/// tied scores half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<RocCurve, PredictError> {
    if scores.len() != labels.len() {
        return Err(PredictError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(PredictError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut fpr = vec![0.0];
    let mut tpr = vec![0.0];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let x = fp as f64 / neg as f64;
        let y = tp as f64 / pos as f64;
        auc += (x - fpr.last().unwrap()) * (y + tpr.last().unwrap()) / 2.0;
        fpr.push(x);
        tpr.push(y);
    }
    Ok(RocCurve { fpr, tpr, auc })
}

pub fn write_roc_csv<W: Write>(roc: &RocCurve, sink: W) -> Result<(), PredictError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["fpr", "tpr"])?;
    for (x, y) in roc.fpr.iter().zip(&roc.tpr) {
        w.write_record(&[x.to_string(), y.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvConfig {
    pub folds: usize,
    pub splits: usize,
    pub seed: u64,
    /// Risk window length in years.
    pub horizon: f64,
    /// Posterior draws used per score, evenly thinned (0 keeps all).
    pub score_draws: usize,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            folds: 10,
            splits: 25,
            seed: 1,
            horizon: 5.0,
            score_draws: 500,
        }
    }
}

/// Everything a cross-validation fit needs besides the data.
#[derive(Debug, Clone, PartialEq)]
pub struct FitSetup {
    pub spec: ModelSpec,
    pub chain: ChainConfig,
    pub prior: PriorConfig,
    pub settings: LikelihoodSettings,
}

/// Scores and labels of one scenario, pooled over folds.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoredSet {
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
    /// Genotyped non-probands left out because the window was not fully observed.
    pub excluded: usize,
}

impl ScoredSet {
    pub fn auc(&self) -> Option<f64> {
        roc_auc(&self.scores, &self.labels).ok().map(|r| r.auc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub split: usize,
    pub first_cancer: ScoredSet,
    pub next_cancer: ScoredSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub splits: Vec<SplitResult>,
}

impl CvReport {
    fn median_of(values: Vec<f64>) -> Option<f64> {
        let mut v = values;
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        Some(quantile(&v, 0.5))
    }

    pub fn median_auc(&self, scenario: RiskScenario) -> Option<f64> {
        Self::median_of(
            self.splits
                .iter()
                .filter_map(|s| match scenario {
                    RiskScenario::FirstCancer => s.first_cancer.auc(),
                    RiskScenario::NextCancer => s.next_cancer.auc(),
                })
                .collect(),
        )
    }
}

fn thin(samples: &PosteriorSamples, keep: usize) -> PosteriorSamples {
    if keep == 0 || samples.len() <= keep {
        return samples.clone();
    }
    let step = samples.len() as f64 / keep as f64;
    let draws = (0..keep)
        .map(|k| samples.draws[(k as f64 * step) as usize].clone())
        .collect();
    PosteriorSamples {
        draws,
        ..samples.clone()
    }
}

/// Random family partition for one split.
pub fn fold_assignment(n_families: usize, folds: usize, seed: u64, split: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(split as u64);
    let mut order: Vec<usize> = (0..n_families).collect();
    order.shuffle(&mut rng);
    let mut fold = vec![0; n_families];
    for (pos, &fam) in order.iter().enumerate() {
        fold[fam] = pos % folds;
    }
    fold
}

/// Scores the genotyped non-probands of `test` under both scenarios.
pub fn score_families(
    test: &FamilySet,
    samples: &PosteriorSamples,
    horizon: f64,
) -> Result<(ScoredSet, ScoredSet), PredictError> {
    let mut first = ScoredSet::default();
    let mut next = ScoredSet::default();
    for ind in test.families.iter().flat_map(|f| &f.members) {
        if ind.is_proband || !ind.genotype.is_observed() {
            continue;
        }
        for (scenario, set) in [
            (RiskScenario::FirstCancer, &mut first),
            (RiskScenario::NextCancer, &mut next),
        ] {
            match risk_window(ind, scenario, horizon) {
                Some(window) => {
                    set.scores.push(five_year_risk(ind, &window, samples, test.t_max)?);
                    set.labels.push(window.outcome);
                }
                None if scenario == RiskScenario::FirstCancer || ind.first_onset().is_some() => {
                    set.excluded += 1
                }
                None => {}
            }
        }
    }
    Ok((first, next))
}

/// Family-level k-fold cross-validation repeated over random splits.
pub fn cross_validate(
    fs: &FamilySet,
    cv: &CvConfig,
    fit: &FitSetup,
) -> Result<CvReport, PredictError> {
    if cv.folds == 0 || cv.folds > fs.len() {
        return Err(PredictError::TooManyFolds {
            folds: cv.folds,
            families: fs.len(),
        });
    }
    if cv.folds == 1 {
        log::warn!("one fold: training and test families coincide");
    }
    let splits = (0..cv.splits)
        .into_par_iter()
        .map(|split| {
            let assignment = fold_assignment(fs.len(), cv.folds, cv.seed, split);
            let mut first = ScoredSet::default();
            let mut next = ScoredSet::default();
            for fold in 0..cv.folds {
                let test: Vec<usize> = (0..fs.len()).filter(|&i| assignment[i] == fold).collect();
                let train: Vec<usize> = if cv.folds == 1 {
                    test.clone()
                } else {
                    (0..fs.len()).filter(|&i| assignment[i] != fold).collect()
                };
                let chain = ChainConfig {
                    seed: fit
                        .chain
                        .seed
                        .wrapping_add((split * cv.folds + fold) as u64),
                    ..fit.chain.clone()
                };
                let samples = run_chain(
                    &fs.subset(&train),
                    &fit.spec,
                    &chain,
                    &fit.prior,
                    &fit.settings,
                )?;
                let samples = thin(&samples, cv.score_draws);
                let (f, n) = score_families(&fs.subset(&test), &samples, cv.horizon)?;
                for (acc, part) in [(&mut first, f), (&mut next, n)] {
                    acc.scores.extend(part.scores);
                    acc.labels.extend(part.labels);
                    acc.excluded += part.excluded;
                }
            }
            log::info!(
                "split {split}: AUC first {:?}, next {:?}",
                first.auc(),
                next.auc()
            );
            Ok(SplitResult {
                split,
                first_cancer: first,
                next_cancer: next,
            })
        })
        .collect::<Result<Vec<_>, PredictError>>()?;
    Ok(CvReport { splits })
}
