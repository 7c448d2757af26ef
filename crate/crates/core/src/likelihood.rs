//! Ascertainment-corrected familywise likelihood.
//!
//! Each family contributes `log Pr(h | g_obs, ξ) - log Pr(A = 1 | ξ)`: the
//! numerator peels over missing genotypes with member likelihoods from the
//! intensity model, the denominator is the proband's first-onset density
//! marginalized over carrier status at population prevalence.
//!
//! Two evaluation routes are provided. The free functions
//! ([`individual_loglik`], [`family_loglik_acj`], [`total_loglik`]) work
//! straight from the pedigree through [`crate::nhpp`]. [`LikelihoodModel`]
//! compiles a family set once (normalized times, Bernstein bases at every
//! event and censoring time, peeling plans, genotype marginals) and is what
//! the sampler calls in its inner loop.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mendelian::{
    carrier_prevalence, founder_prior, log_sum_exp, GenotypeDist, GenotypeError, PeelingError,
    PeelingPlan,
};
use crate::nhpp::{
    cumulative_intensity, intensity, BernsteinBasis, CovariateSchedule, CovariateSet,
    FrailtyVector, ModelError, ModelParams,
};
use crate::pedigree::{normalize_age, AgeRangeError, Family, FamilySet, Individual, Sex};

/// Population mutant allele frequency used by default.
pub const DEFAULT_PSI_A: f64 = 0.0006;

#[derive(Debug, Error)]
pub enum LikelihoodError {
    #[error(transparent)]
    Peeling(#[from] PeelingError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Age(#[from] AgeRangeError),
    #[error(transparent)]
    Genotype(#[from] GenotypeError),
    #[error("family `{0}` needs exactly one proband for ascertainment correction")]
    Proband(String),
    #[error("proband `{0}` has no onset")]
    UnaffectedProband(String),
    #[error("{got} frailties supplied for {expected} families")]
    FrailtyLength { expected: usize, got: usize },
    #[error("model has degree {model}, parameters have {params} baseline weights")]
    DegreeMismatch { model: usize, params: usize },
    #[error("observed genotypes in family `{0}` are impossible under Mendelian inheritance")]
    InconsistentGenotypes(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AscertainmentConfig {
    pub psi_a: f64,
    pub correction: bool,
}

impl Default for AscertainmentConfig {
    fn default() -> Self {
        AscertainmentConfig {
            psi_a: DEFAULT_PSI_A,
            correction: true,
        }
    }
}

/// What to do with onsets after the second.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruncationPolicy {
    /// Treat the individual as censored at the second onset.
    #[default]
    Truncate,
    /// Keep every onset; the history covariate stays at 1.
    KeepSaturated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodSettings {
    pub t_max: f64,
    pub truncation: TruncationPolicy,
    pub ascertainment: AscertainmentConfig,
}

impl Default for LikelihoodSettings {
    fn default() -> Self {
        LikelihoodSettings {
            t_max: crate::pedigree::DEFAULT_T_MAX,
            truncation: TruncationPolicy::default(),
            ascertainment: AscertainmentConfig::default(),
        }
    }
}

/// Normalized onset times and censoring time after applying the truncation policy.
pub fn effective_history(
    ind: &Individual,
    t_max: f64,
    policy: TruncationPolicy,
) -> Result<(Vec<f64>, f64), AgeRangeError> {
    let events = ind
        .onset_ages
        .iter()
        .map(|&a| normalize_age(a, t_max))
        .collect::<Result<Vec<_>, _>>()?;
    let v = normalize_age(ind.censor_age, t_max)?;
    Ok(match policy {
        TruncationPolicy::Truncate if events.len() >= 2 => (events[..2].to_vec(), events[1]),
        _ => (events, v),
    })
}

/// Log-likelihood of one individual's onset history for carrier status
/// `carrier`: log intensities at the onsets minus the integrated intensity
/// up to the censoring age.
pub fn individual_loglik(
    ind: &Individual,
    carrier: bool,
    xi: f64,
    params: &ModelParams,
    settings: &LikelihoodSettings,
) -> Result<f64, LikelihoodError> {
    let (events, v) = effective_history(ind, settings.t_max, settings.truncation)?;
    let sched = CovariateSchedule::new(carrier, ind.sex == Sex::Male, events.first().copied());
    let mut ll = 0.0;
    let mut prev = 0.0;
    for &t in &events {
        ll += intensity(t, &sched, xi, params).ln();
        ll -= cumulative_intensity(prev, t, &sched, xi, params)?;
        prev = t;
    }
    ll -= cumulative_intensity(prev, v.max(prev), &sched, xi, params)?;
    Ok(ll)
}

fn two_point_prior(psi_a: f64) -> Result<[f64; 2], GenotypeError> {
    let p1 = carrier_prevalence(psi_a)?;
    Ok([1.0 - p1, p1])
}

/// `log Pr(A = 1 | ξ)`: the proband's first-onset density, marginalized over
/// carrier status with the population prevalence.
pub fn ascertainment_logprob(
    proband: &Individual,
    xi: f64,
    params: &ModelParams,
    settings: &LikelihoodSettings,
) -> Result<f64, LikelihoodError> {
    let t1 = proband
        .first_onset()
        .ok_or_else(|| LikelihoodError::UnaffectedProband(proband.id.clone()))?;
    let t1 = normalize_age(t1, settings.t_max)?;
    let prior = two_point_prior(settings.ascertainment.psi_a)?;
    let male = proband.sex == Sex::Male;
    let mut terms = [0.0; 2];
    for (k, carrier) in [false, true].into_iter().enumerate() {
        let sched = CovariateSchedule::new(carrier, male, Some(t1));
        let dens = intensity(t1, &sched, xi, params).ln()
            - cumulative_intensity(0.0, t1, &sched, xi, params)?;
        terms[k] = dens + prior[k].ln();
    }
    Ok(log_sum_exp(&terms))
}

fn unique_proband(f: &Family) -> Result<&Individual, LikelihoodError> {
    let mut it = f.members.iter().filter(|m| m.is_proband);
    match (it.next(), it.next()) {
        (Some(p), None) => Ok(p),
        _ => Err(LikelihoodError::Proband(f.id.clone())),
    }
}

/// Ascertainment-corrected familywise log-likelihood via the reference route.
pub fn family_loglik_acj(
    f: &Family,
    xi: f64,
    params: &ModelParams,
    settings: &LikelihoodSettings,
) -> Result<f64, LikelihoodError> {
    let prior = founder_prior(settings.ascertainment.psi_a)?;
    let plan = PeelingPlan::new(f)?;
    let marginal = plan.log_genotype_marginal(&prior);
    if marginal == f64::NEG_INFINITY {
        return Err(LikelihoodError::InconsistentGenotypes(f.id.clone()));
    }
    let rows = f
        .members
        .iter()
        .map(|m| {
            let wild = individual_loglik(m, false, xi, params, settings)?;
            let carrier = individual_loglik(m, true, xi, params, settings)?;
            Ok([wild, carrier, carrier])
        })
        .collect::<Result<Vec<_>, LikelihoodError>>()?;
    let mut ll = plan.log_conditional(&rows, &prior, marginal);
    if settings.ascertainment.correction {
        ll -= ascertainment_logprob(unique_proband(f)?, xi, params, settings)?;
    }
    Ok(ll)
}

/// Sum of [`family_loglik_acj`] over families; `ξ ≡ 1` when `frailties` is `None`.
pub fn total_loglik(
    fs: &FamilySet,
    frailties: Option<&FrailtyVector>,
    params: &ModelParams,
    settings: &LikelihoodSettings,
) -> Result<f64, LikelihoodError> {
    if let Some(x) = frailties {
        if x.0.len() != fs.len() {
            return Err(LikelihoodError::FrailtyLength {
                expected: fs.len(),
                got: x.0.len(),
            });
        }
    }
    let settings = LikelihoodSettings {
        t_max: fs.t_max,
        ..*settings
    };
    fs.families
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let xi = frailties.map_or(1.0, |x| x.0[i]);
            family_loglik_acj(f, xi, params, &settings)
        })
        .sum()
}

/// One member with its Bernstein bases precomputed at every time the
/// likelihood touches.
#[derive(Debug, Clone)]
struct CompiledMember {
    male: bool,
    n_events: usize,
    /// Distribution-function basis at `t_1`, then at `v` (`M` values each).
    cdf_first: Vec<f64>,
    cdf_censor: Vec<f64>,
    /// Density basis at each onset, flattened `n_events * M`.
    pdf_events: Vec<f64>,
}

#[derive(Debug, Clone)]
struct CompiledFamily {
    id: String,
    plan: PeelingPlan,
    members: Vec<CompiledMember>,
    proband: Option<usize>,
    log_marginal: f64,
}

/// Baseline quantities of one member that depend on γ only.
#[derive(Debug, Clone, Copy, Default)]
pub struct MemberBaseline {
    /// `ln λ0(t_1)`, zero when unaffected.
    log_rate_first: f64,
    /// `Σ_{k>=2} ln λ0(t_k)`.
    log_rate_rest: f64,
    /// `Λ0(min(t_1, v))`.
    cum_before: f64,
    /// `Λ0(v) - Λ0(t_1)`, zero when unaffected.
    cum_after: f64,
}

/// `exp`-free linear predictors indexed `[carrier][male][history]`.
#[derive(Debug, Clone, Copy)]
pub struct PredictorTable {
    lp: [[[f64; 2]; 2]; 2],
    rate: [[[f64; 2]; 2]; 2],
}

impl PredictorTable {
    pub fn new(covariates: &CovariateSet, beta: &[f64]) -> Self {
        let mut lp = [[[0.0; 2]; 2]; 2];
        let mut rate = [[[1.0; 2]; 2]; 2];
        for g in 0..2 {
            for s in 0..2 {
                for d in 0..2 {
                    let v = covariates.linear_predictor(beta, g as f64, s as f64, d as f64);
                    lp[g][s][d] = v;
                    rate[g][s][d] = v.exp();
                }
            }
        }
        PredictorTable { lp, rate }
    }
}

/// γ-dependent member quantities for every family, in model order.
#[derive(Debug, Clone)]
pub struct BaselineCache(Vec<Vec<MemberBaseline>>);

/// A family set compiled for repeated likelihood evaluation.
#[derive(Debug, Clone)]
pub struct LikelihoodModel {
    families: Vec<CompiledFamily>,
    covariates: CovariateSet,
    degree: usize,
    settings: LikelihoodSettings,
    prior: GenotypeDist,
    log_prevalence: [f64; 2],
}

impl LikelihoodModel {
    pub fn new(
        fs: &FamilySet,
        covariates: CovariateSet,
        degree: usize,
        settings: LikelihoodSettings,
    ) -> Result<Self, LikelihoodError> {
        if degree == 0 {
            return Err(ModelError::EmptyBaseline.into());
        }
        let settings = LikelihoodSettings {
            t_max: fs.t_max,
            ..settings
        };
        let prior = founder_prior(settings.ascertainment.psi_a)?;
        let two = two_point_prior(settings.ascertainment.psi_a)?;
        let basis = BernsteinBasis::new(degree);
        let families = fs
            .families
            .iter()
            .map(|f| {
                let plan = PeelingPlan::new(f)?;
                let log_marginal = plan.log_genotype_marginal(&prior);
                if log_marginal == f64::NEG_INFINITY {
                    return Err(LikelihoodError::InconsistentGenotypes(f.id.clone()));
                }
                let proband = if settings.ascertainment.correction {
                    let p = unique_proband(f)?;
                    if p.onset_ages.is_empty() {
                        return Err(LikelihoodError::UnaffectedProband(p.id.clone()));
                    }
                    f.proband_index()
                } else {
                    None
                };
                let members = f
                    .members
                    .iter()
                    .map(|m| {
                        let (events, v) = effective_history(m, settings.t_max, settings.truncation)?;
                        let first = events.first().copied().unwrap_or(v);
                        Ok(CompiledMember {
                            male: m.sex == Sex::Male,
                            n_events: events.len(),
                            cdf_first: basis.cdfs(first),
                            cdf_censor: basis.cdfs(v.max(first)),
                            pdf_events: events.iter().flat_map(|&t| basis.densities(t)).collect(),
                        })
                    })
                    .collect::<Result<Vec<_>, LikelihoodError>>()?;
                Ok(CompiledFamily {
                    id: f.id.clone(),
                    plan,
                    members,
                    proband,
                    log_marginal,
                })
            })
            .collect::<Result<Vec<_>, LikelihoodError>>()?;
        Ok(LikelihoodModel {
            families,
            covariates,
            degree,
            settings,
            prior,
            log_prevalence: [two[0].ln(), two[1].ln()],
        })
    }

    pub fn n_families(&self) -> usize {
        self.families.len()
    }

    pub fn family_id(&self, i: usize) -> &str {
        &self.families[i].id
    }

    pub fn covariates(&self) -> &CovariateSet {
        &self.covariates
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn settings(&self) -> &LikelihoodSettings {
        &self.settings
    }

    pub fn baseline(&self, gamma: &[f64]) -> BaselineCache {
        assert_eq!(gamma.len(), self.degree);
        let dot = |a: &[f64]| -> f64 { a.iter().zip(gamma).map(|(x, y)| x * y).sum() };
        BaselineCache(
            self.families
                .iter()
                .map(|f| {
                    f.members
                        .iter()
                        .map(|m| {
                            let m_deg = self.degree;
                            let mut log_rate_first = 0.0;
                            let mut log_rate_rest = 0.0;
                            for k in 0..m.n_events {
                                let r = dot(&m.pdf_events[k * m_deg..(k + 1) * m_deg]).ln();
                                if k == 0 {
                                    log_rate_first = r;
                                } else {
                                    log_rate_rest += r;
                                }
                            }
                            let first = dot(&m.cdf_first);
                            let censor = dot(&m.cdf_censor);
                            if m.n_events == 0 {
                                MemberBaseline {
                                    cum_before: censor,
                                    ..Default::default()
                                }
                            } else {
                                MemberBaseline {
                                    log_rate_first,
                                    log_rate_rest,
                                    cum_before: first,
                                    cum_after: (censor - first).max(0.0),
                                }
                            }
                        })
                        .collect()
                })
                .collect(),
        )
    }

    fn member_loglik(
        m: &CompiledMember,
        base: &MemberBaseline,
        table: &PredictorTable,
        carrier: usize,
        log_xi: f64,
        xi: f64,
    ) -> f64 {
        let s = usize::from(m.male);
        let lp = &table.lp[carrier][s];
        let rate = &table.rate[carrier][s];
        let mut ll = -xi * (rate[0] * base.cum_before + rate[1] * base.cum_after);
        if m.n_events > 0 {
            let k = m.n_events as f64;
            ll += k * log_xi + base.log_rate_first + lp[0] + base.log_rate_rest + (k - 1.0) * lp[1];
        }
        ll
    }

    /// ACJ log-likelihood of family `i`.
    pub fn family_loglik(
        &self,
        i: usize,
        baseline: &BaselineCache,
        table: &PredictorTable,
        xi: f64,
    ) -> f64 {
        let f = &self.families[i];
        let base = &baseline.0[i];
        let log_xi = xi.ln();
        let rows: Vec<[f64; 3]> = f
            .members
            .iter()
            .zip(base)
            .map(|(m, b)| {
                let wild = Self::member_loglik(m, b, table, 0, log_xi, xi);
                let carrier = Self::member_loglik(m, b, table, 1, log_xi, xi);
                [wild, carrier, carrier]
            })
            .collect();
        let mut ll = f.plan.log_joint(&rows, &self.prior) - f.log_marginal;
        if let Some(p) = f.proband {
            let m = &f.members[p];
            let b = &base[p];
            let s = usize::from(m.male);
            let dens = |g: usize| {
                log_xi + b.log_rate_first + table.lp[g][s][0]
                    - xi * table.rate[g][s][0] * b.cum_before
            };
            ll -= log_sum_exp(&[
                dens(0) + self.log_prevalence[0],
                dens(1) + self.log_prevalence[1],
            ]);
        }
        ll
    }

    /// Per-family log-likelihoods, in family order.
    pub fn family_logliks(
        &self,
        baseline: &BaselineCache,
        table: &PredictorTable,
        xi: &[f64],
    ) -> Vec<f64> {
        let eval = |i: usize| self.family_loglik(i, baseline, table, xi[i]);
        if rayon::current_num_threads() > 1 && self.families.len() >= 16 {
            (0..self.families.len()).into_par_iter().map(eval).collect()
        } else {
            (0..self.families.len()).map(eval).collect()
        }
    }

    /// Total log-likelihood for parameters and frailties (`ξ ≡ 1` if `None`).
    pub fn total(
        &self,
        params: &ModelParams,
        frailties: Option<&[f64]>,
    ) -> Result<f64, LikelihoodError> {
        params.check()?;
        if params.degree() != self.degree {
            return Err(LikelihoodError::DegreeMismatch {
                model: self.degree,
                params: params.degree(),
            });
        }
        let ones;
        let xi = match frailties {
            Some(x) if x.len() != self.n_families() => {
                return Err(LikelihoodError::FrailtyLength {
                    expected: self.n_families(),
                    got: x.len(),
                })
            }
            Some(x) => x,
            None => {
                ones = vec![1.0; self.n_families()];
                &ones
            }
        };
        let baseline = self.baseline(&params.gamma);
        let table = PredictorTable::new(&self.covariates, &params.beta);
        Ok(self.family_logliks(&baseline, &table, xi).iter().sum())
    }
}
