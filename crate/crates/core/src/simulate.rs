//! Synthetic ascertained family data.
//!
//! Each family is built on a fixed 30-member, three-generation template:
//!
//! ```text
//!            father ── mother
//!                  │
//!   ┌─────────┬────┴────┬─────────┬─────────┐
//! proband   sib 1     sib 2     sib 3     sib 4      (each with a spouse)
//!  4 kids   4 kids    4 kids    3 kids    3 kids
//! ```
//!
//! The family frailty is drawn first, then the proband by rejection until at
//! least one onset is observed; carrier status then propagates to blood relatives and every
//! member's two gap times are exponential with the family's shared frailty.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pedigree::{
    Family, FamilySet, GenotypeObs, Individual, PedigreeError, Sex, DEFAULT_T_MAX,
};

/// Number of members in the simulation template.
pub const FAMILY_SIZE: usize = 30;

const SIBLINGS: usize = 4;
/// Children of the proband, then of each sibling.
const CHILDREN: [usize; SIBLINGS + 1] = [4, 4, 4, 3, 3];

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation setting `{field}` = {value}")]
    Invalid { field: &'static str, value: f64 },
    #[error("no proband with an observed onset after {0} attempts")]
    Rejection(u64),
    #[error(transparent)]
    Pedigree(#[from] PedigreeError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n_families: usize,
    pub proband_carrier_prob: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Constant baseline rate per year.
    pub baseline_rate: f64,
    /// Frailty precision; `None` simulates without frailty.
    pub phi: Option<f64>,
    pub censor_rate: f64,
    pub genotype_missing_frac: f64,
    pub t_max: f64,
    pub seed: u64,
    /// Cap on proband rejection attempts per family.
    pub max_attempts: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_families: 100,
            proband_carrier_prob: 0.001,
            beta1: 6.0,
            beta2: 1.0,
            baseline_rate: 0.0005,
            phi: Some(1.0),
            censor_rate: 0.5,
            genotype_missing_frac: 0.7,
            t_max: DEFAULT_T_MAX,
            seed: 1,
            max_attempts: 100_000_000,
        }
    }
}

impl SimConfig {
    pub fn check(&self) -> Result<(), SimError> {
        let prob = |field, value: f64| {
            if (0.0..=1.0).contains(&value) {
                Ok(())
            } else {
                Err(SimError::Invalid { field, value })
            }
        };
        let positive = |field, value: f64| {
            if value > 0.0 && !value.is_nan() {
                Ok(())
            } else {
                Err(SimError::Invalid { field, value })
            }
        };
        prob("proband_carrier_prob", self.proband_carrier_prob)?;
        prob("genotype_missing_frac", self.genotype_missing_frac)?;
        positive("baseline_rate", self.baseline_rate)?;
        positive("censor_rate", self.censor_rate)?;
        positive("t_max", self.t_max)?;
        if let Some(phi) = self.phi {
            positive("phi", phi)?;
        }
        for (field, value) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !value.is_finite() {
                return Err(SimError::Invalid { field, value });
            }
        }
        Ok(())
    }
}

/// Outcome of one member's simulated follow-up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemberHistory {
    pub w1: f64,
    pub w2: f64,
    pub censor: f64,
    /// Observed onset ages (zero, one or two).
    pub n_events: usize,
}

impl MemberHistory {
    pub fn onset_ages(&self) -> Vec<f64> {
        let mut ages = Vec::with_capacity(2);
        if self.n_events >= 1 {
            ages.push(self.w1);
        }
        if self.n_events >= 2 {
            ages.push(self.w1 + self.w2);
        }
        ages
    }
}

/// Draws the two gap times and censoring age for one member.
pub fn simulate_member_gaps<R: Rng + ?Sized>(
    carrier: bool,
    xi: f64,
    cfg: &SimConfig,
    rng: &mut R,
) -> MemberHistory {
    let g = if carrier { 1.0 } else { 0.0 };
    let rate1 = xi * cfg.baseline_rate * (cfg.beta1 * g).exp();
    let rate2 = xi * cfg.baseline_rate * (cfg.beta1 * g + cfg.beta2).exp();
    let w1 = Exp::new(rate1).expect("positive rate").sample(rng);
    let w2 = Exp::new(rate2).expect("positive rate").sample(rng);
    let censor = Exp::new(cfg.censor_rate)
        .expect("positive rate")
        .sample(rng)
        .min(cfg.t_max);
    let t2 = w1 + w2;
    let n_events = if w1 >= censor {
        0
    } else if t2 >= censor || t2 <= w1 {
        1
    } else {
        2
    };
    MemberHistory {
        w1,
        w2,
        censor,
        n_events,
    }
}

/// True genotypes and frailty of one simulated family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyTruth {
    pub family: String,
    pub xi: f64,
    pub carriers: Vec<(String, bool)>,
    pub proband_attempts: u64,
}

/// Scoring record written next to a simulated pedigree file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    pub config: SimConfig,
    pub families: Vec<FamilyTruth>,
}

fn frailty<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> f64 {
    match cfg.phi {
        Some(phi) => Gamma::new(phi, 1.0 / phi).expect("positive shape").sample(rng),
        None => 1.0,
    }
}

fn random_sex<R: Rng + ?Sized>(rng: &mut R) -> Sex {
    if rng.random_bool(0.5) {
        Sex::Male
    } else {
        Sex::Female
    }
}

fn opposite(sex: Sex) -> Sex {
    match sex {
        Sex::Male => Sex::Female,
        Sex::Female => Sex::Male,
    }
}

/// Simulates one ascertained family with identifier `id`.
pub fn simulate_family<R: Rng + ?Sized>(
    id: &str,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<(Family, FamilyTruth), SimError> {
    // The frailty is fixed before ascertainment; genotype and follow-up are
    // redrawn until the proband has an onset.
    let xi = frailty(cfg, rng);
    let mut attempts = 0;
    let (proband_carrier, proband_history) = loop {
        if attempts == cfg.max_attempts {
            return Err(SimError::Rejection(attempts));
        }
        attempts += 1;
        let carrier = rng.random_bool(cfg.proband_carrier_prob);
        let h = simulate_member_gaps(carrier, xi, cfg, rng);
        if h.n_events > 0 {
            break (carrier, h);
        }
    };

    // (id, father, mother, sex, carrier, is_proband)
    type Slot = (String, Option<String>, Option<String>, Sex, bool, bool);
    let mut slots: Vec<Slot> = Vec::with_capacity(FAMILY_SIZE);
    let carrier_parent = if proband_carrier {
        Some(*[0usize, 1].choose(rng).expect("two parents"))
    } else {
        None
    };
    slots.push(("father".into(), None, None, Sex::Male, carrier_parent == Some(0), false));
    slots.push(("mother".into(), None, None, Sex::Female, carrier_parent == Some(1), false));
    let parents = || (Some("father".to_string()), Some("mother".to_string()));
    let mut blood = Vec::with_capacity(SIBLINGS + 1);
    let proband_sex = random_sex(rng);
    let (f, m) = parents();
    slots.push(("proband".into(), f, m, proband_sex, proband_carrier, true));
    blood.push(("proband".to_string(), proband_sex, proband_carrier));
    for s in 1..=SIBLINGS {
        let sex = random_sex(rng);
        let carrier = proband_carrier && rng.random_bool(0.5);
        let (f, m) = parents();
        let sid = format!("sib{s}");
        slots.push((sid.clone(), f, m, sex, carrier, false));
        blood.push((sid, sex, carrier));
    }
    for (k, (bid, bsex, bcarrier)) in blood.iter().enumerate() {
        let spouse = format!("spouse_{bid}");
        slots.push((spouse.clone(), None, None, opposite(*bsex), false, false));
        let (father, mother) = match bsex {
            Sex::Male => (bid.clone(), spouse),
            Sex::Female => (spouse, bid.clone()),
        };
        for c in 1..=CHILDREN[k] {
            let carrier = *bcarrier && rng.random_bool(0.5);
            slots.push((
                format!("{bid}_child{c}"),
                Some(father.clone()),
                Some(mother.clone()),
                random_sex(rng),
                carrier,
                false,
            ));
        }
    }
    debug_assert_eq!(slots.len(), FAMILY_SIZE);

    let mut members = Vec::with_capacity(FAMILY_SIZE);
    let mut carriers = Vec::with_capacity(FAMILY_SIZE);
    for (mid, father, mother, sex, carrier, is_proband) in slots {
        let history = if is_proband {
            proband_history
        } else {
            simulate_member_gaps(carrier, xi, cfg, rng)
        };
        let masked = !is_proband && rng.random_bool(cfg.genotype_missing_frac);
        let genotype = match (masked, carrier) {
            (true, _) => GenotypeObs::Missing,
            (false, true) => GenotypeObs::Carrier,
            (false, false) => GenotypeObs::Wildtype,
        };
        let ind = Individual::new(
            mid.clone(),
            father,
            mother,
            sex,
            genotype,
            history.onset_ages(),
            history.censor,
            is_proband,
        )
        .map_err(|source| PedigreeError::Individual { line: 0, source })?;
        members.push(ind);
        carriers.push((mid, carrier));
    }
    let family = Family::new(id, members);
    let truth = FamilyTruth {
        family: id.to_string(),
        xi,
        carriers,
        proband_attempts: attempts,
    };
    Ok((family, truth))
}

/// Identifier of the `i`-th simulated family.
pub fn family_name(i: usize) -> String {
    format!("fam{:04}", i + 1)
}

/// RNG for family `i`: the master seed with its own stream.
pub fn family_rng(seed: u64, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    rng
}

/// Simulates `cfg.n_families` independent families from `cfg.seed`.
pub fn simulate_dataset(cfg: &SimConfig) -> Result<(FamilySet, SimTruth), SimError> {
    cfg.check()?;
    let mut families = Vec::with_capacity(cfg.n_families);
    let mut truths = Vec::with_capacity(cfg.n_families);
    for i in 0..cfg.n_families {
        let mut rng = family_rng(cfg.seed, i);
        let (family, truth) = simulate_family(&family_name(i), cfg, &mut rng)?;
        families.push(family);
        truths.push(truth);
    }
    let fs = FamilySet::new(families, cfg.t_max)?;
    Ok((
        fs,
        SimTruth {
            config: cfg.clone(),
            families: truths,
        },
    ))
}
