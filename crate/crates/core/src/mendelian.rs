//! Single-locus genotype probabilities and Elston-Stewart peeling.
//!
//! Genotypes live in the three-state allele space (`aa`, `Aa`, `AA`) and are
//! collapsed to the carrier indicator only where member likelihoods are
//! attached. A loop-free pedigree is treated as a tree over individuals and
//! matings (one node per father/mother pair), and the sum over missing
//! genotypes is collected towards a root individual, so the cost is linear in
//! family size.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pedigree::{validate_family, Family, GenotypeObs, ValidationReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Genotype {
    /// `aa`
    Wildtype,
    /// `Aa`
    Heterozygous,
    /// `AA`
    Homozygous,
}

impl Genotype {
    pub const ALL: [Genotype; 3] = [
        Genotype::Wildtype,
        Genotype::Heterozygous,
        Genotype::Homozygous,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Genotype {
        Self::ALL[i]
    }

    pub fn is_carrier(self) -> bool {
        self != Genotype::Wildtype
    }

    /// Probability of transmitting the mutant allele.
    fn mutant_transmission(self) -> f64 {
        match self {
            Genotype::Wildtype => 0.0,
            Genotype::Heterozygous => 0.5,
            Genotype::Homozygous => 1.0,
        }
    }

    /// Whether the genotype is compatible with an observed carrier status.
    pub fn consistent_with(self, obs: GenotypeObs) -> bool {
        match obs.carrier() {
            None => true,
            Some(c) => c == self.is_carrier(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GenotypeError {
    #[error("allele frequency {0} outside [0, 1]")]
    AlleleFrequency(f64),
}

/// A distribution over the three genotypes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenotypeDist(pub [f64; 3]);

impl GenotypeDist {
    pub fn prob(&self, g: Genotype) -> f64 {
        self.0[g.index()]
    }

    pub fn carrier_prob(&self) -> f64 {
        self.0[1] + self.0[2]
    }
}

/// Hardy-Weinberg genotype frequencies for mutant allele frequency `psi`.
pub fn founder_prior(psi: f64) -> Result<GenotypeDist, GenotypeError> {
    if !(0.0..=1.0).contains(&psi) {
        return Err(GenotypeError::AlleleFrequency(psi));
    }
    let q = 1.0 - psi;
    Ok(GenotypeDist([q * q, 2.0 * psi * q, psi * psi]))
}

/// Carrier prevalence `1 - (1 - psi)^2` implied by [`founder_prior`].
pub fn carrier_prevalence(psi: f64) -> Result<f64, GenotypeError> {
    founder_prior(psi).map(|d| d.carrier_prob())
}

/// Mendelian probability of `child` given the parental genotypes.
pub fn transmission_prob(child: Genotype, father: Genotype, mother: Genotype) -> f64 {
    let pf = father.mutant_transmission();
    let pm = mother.mutant_transmission();
    match child {
        Genotype::Wildtype => (1.0 - pf) * (1.0 - pm),
        Genotype::Heterozygous => pf * (1.0 - pm) + (1.0 - pf) * pm,
        Genotype::Homozygous => pf * pm,
    }
}

/// `TRANSMISSION[father][mother][child]`
fn transmission_table() -> [[[f64; 3]; 3]; 3] {
    let mut t = [[[0.0; 3]; 3]; 3];
    for f in Genotype::ALL {
        for m in Genotype::ALL {
            for c in Genotype::ALL {
                t[f.index()][m.index()][c.index()] = transmission_prob(c, f, m);
            }
        }
    }
    t
}

#[derive(Debug, Error)]
pub enum PeelingError {
    #[error("family `{family}` cannot be peeled: {report}")]
    Structure {
        family: String,
        report: ValidationReport,
    },
    #[error("family `{family}` has {missing} missing genotypes; enumeration is capped at {cap}")]
    TooLarge {
        family: String,
        missing: usize,
        cap: usize,
    },
    #[error("family `{0}`: observed genotypes are impossible under Mendelian inheritance")]
    InconsistentGenotypes(String),
    #[error("member log-likelihood table has {got} rows, family has {expected} members")]
    LengthMismatch { expected: usize, got: usize },
}

/// Maximum number of missing genotypes [`brute_force_family_loglik`] accepts.
pub const BRUTE_FORCE_CAP: usize = 12;

/// Log-probabilities over genotypes. Messages stay in the log domain so that
/// states many orders of magnitude apart survive until a later factor decides
/// between them.
type LogVec = [f64; 3];

const LOG_ZERO: LogVec = [f64::NEG_INFINITY; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Father,
    Mother,
    Child(usize),
}

#[derive(Debug, Clone)]
struct Mating {
    father: usize,
    mother: usize,
    children: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
enum Step {
    /// Combine an individual's local factor with messages from its subtree.
    Person(usize),
    /// Send a mating's message to the member that links it to the root.
    Mating { mating: usize, towards: Role },
}

/// Precomputed traversal for one family. Building a plan validates the
/// structure once; evaluating it is allocation-light and can be repeated
/// with different member likelihoods.
#[derive(Debug, Clone)]
pub struct PeelingPlan {
    family_id: String,
    n: usize,
    founder: Vec<bool>,
    /// Genotypes allowed by the observed carrier status, per member.
    support: Vec<[bool; 3]>,
    matings: Vec<Mating>,
    /// Matings each member takes part in (as parent or child).
    member_matings: Vec<Vec<usize>>,
    /// Mating through which each member connects towards its root, if any.
    up_link: Vec<Option<usize>>,
    schedule: Vec<Step>,
    roots: Vec<usize>,
    /// `ln T(g_child | g_father, g_mother)`.
    log_table: [[[f64; 3]; 3]; 3],
}

impl PeelingPlan {
    /// Builds a plan rooted at the proband (or the first member when there is
    /// none). Fails for loops, cycles and unresolved references.
    pub fn new(family: &Family) -> Result<Self, PeelingError> {
        let report = validate_family(family);
        if !report.is_peelable() {
            return Err(PeelingError::Structure {
                family: family.id.clone(),
                report,
            });
        }
        let n = family.len();
        let index: HashMap<&str, usize> = family
            .members
            .iter()
            .enumerate()
            .map(|(i, m)| (m.id.as_str(), i))
            .collect();

        let mut matings: Vec<Mating> = Vec::new();
        let mut mating_of: HashMap<(usize, usize), usize> = HashMap::new();
        let mut member_matings = vec![Vec::new(); n];
        for (i, m) in family.members.iter().enumerate() {
            if let (Some(fa), Some(mo)) = (&m.father, &m.mother) {
                let key = (index[fa.as_str()], index[mo.as_str()]);
                let id = *mating_of.entry(key).or_insert_with(|| {
                    matings.push(Mating {
                        father: key.0,
                        mother: key.1,
                        children: Vec::new(),
                    });
                    let id = matings.len() - 1;
                    member_matings[key.0].push(id);
                    member_matings[key.1].push(id);
                    id
                });
                matings[id].children.push(i);
                member_matings[i].push(id);
            }
        }

        let mut plan = PeelingPlan {
            family_id: family.id.clone(),
            n,
            founder: family.members.iter().map(|m| m.is_founder()).collect(),
            support: family
                .members
                .iter()
                .map(|m| Genotype::ALL.map(|g| g.consistent_with(m.genotype)))
                .collect(),
            matings,
            member_matings,
            up_link: vec![None; n],
            schedule: Vec::new(),
            roots: Vec::new(),
            log_table: transmission_table().map(|a| a.map(|b| b.map(f64::ln))),
        };
        plan.build_schedule(family.proband_index().unwrap_or(0));
        Ok(plan)
    }

    /// Depth-first traversal from each root; the schedule is the reverse
    /// pre-order, so every node comes after all nodes beneath it.
    fn build_schedule(&mut self, first_root: usize) {
        let mut seen_person = vec![false; self.n];
        let mut seen_mating = vec![false; self.matings.len()];
        let mut preorder = Vec::new();
        let starts = std::iter::once(first_root).chain(0..self.n);
        for root in starts {
            if self.n == 0 || seen_person[root] {
                continue;
            }
            self.roots.push(root);
            seen_person[root] = true;
            let mut stack = vec![Step::Person(root)];
            while let Some(step) = stack.pop() {
                preorder.push(step);
                match step {
                    Step::Person(p) => {
                        for &m in &self.member_matings[p] {
                            if seen_mating[m] {
                                continue;
                            }
                            seen_mating[m] = true;
                            let towards = self.role_in(m, p);
                            stack.push(Step::Mating { mating: m, towards });
                        }
                    }
                    Step::Mating { mating, .. } => {
                        let mating_ref = &self.matings[mating];
                        let members = [mating_ref.father, mating_ref.mother]
                            .into_iter()
                            .chain(mating_ref.children.iter().copied())
                            .collect::<Vec<_>>();
                        for q in members {
                            if !seen_person[q] {
                                seen_person[q] = true;
                                self.up_link[q] = Some(mating);
                                stack.push(Step::Person(q));
                            }
                        }
                    }
                }
            }
        }
        preorder.reverse();
        self.schedule = preorder;
    }

    fn role_in(&self, mating: usize, person: usize) -> Role {
        let m = &self.matings[mating];
        if m.father == person {
            Role::Father
        } else if m.mother == person {
            Role::Mother
        } else {
            let k = m
                .children
                .iter()
                .position(|&c| c == person)
                .expect("person belongs to mating");
            Role::Child(k)
        }
    }

    pub fn family_id(&self) -> &str {
        &self.family_id
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `log Pr(histories, observed genotypes)`: the sum over all genotype
    /// configurations consistent with the observations, weighted by founder
    /// priors and Mendelian transmission. `member_loglik[j][g]` is member
    /// `j`'s log-likelihood under genotype index `g`.
    pub fn log_joint(&self, member_loglik: &[[f64; 3]], prior: &GenotypeDist) -> f64 {
        assert_eq!(member_loglik.len(), self.n, "one likelihood row per member");
        let mut person_up = vec![LOG_ZERO; self.n];
        let mut mating_up = vec![LOG_ZERO; self.matings.len()];

        for &step in &self.schedule {
            match step {
                Step::Person(p) => {
                    let ll = &member_loglik[p];
                    let mut acc = LOG_ZERO;
                    for g in 0..3 {
                        if self.support[p][g] {
                            let base = if self.founder[p] { prior.0[g].ln() } else { 0.0 };
                            acc[g] = base + ll[g];
                        }
                    }
                    for &m in &self.member_matings[p] {
                        if Some(m) == self.up_link[p] {
                            continue;
                        }
                        for g in 0..3 {
                            acc[g] += mating_up[m][g];
                        }
                    }
                    person_up[p] = acc;
                }
                Step::Mating { mating, towards } => {
                    mating_up[mating] = self.mating_message(mating, towards, &person_up);
                }
            }
        }
        self.roots.iter().map(|&r| log_sum_exp(&person_up[r])).sum::<f64>()
    }

    /// Sums a mating's factor over every member except `towards`.
    fn mating_message(&self, mating: usize, towards: Role, up: &[LogVec]) -> LogVec {
        let m = &self.matings[mating];
        let t = &self.log_table;
        // log of the product over children (except an excluded one) of
        // sum_gc T(gc | gf, gm) * up_c(gc), for each of the 9 parent pairs.
        let mut pair = [[0.0f64; 3]; 3];
        for (k, &c) in m.children.iter().enumerate() {
            if towards == Role::Child(k) {
                continue;
            }
            let uc = &up[c];
            for gf in 0..3 {
                for gm in 0..3 {
                    let tr = &t[gf][gm];
                    pair[gf][gm] += log_sum_exp(&[tr[0] + uc[0], tr[1] + uc[1], tr[2] + uc[2]]);
                }
            }
        }

        let mut out = LOG_ZERO;
        match towards {
            Role::Father => {
                let um = &up[m.mother];
                for gf in 0..3 {
                    out[gf] = log_sum_exp(&[0, 1, 2].map(|gm| um[gm] + pair[gf][gm]));
                }
            }
            Role::Mother => {
                let uf = &up[m.father];
                for gm in 0..3 {
                    out[gm] = log_sum_exp(&[0, 1, 2].map(|gf| uf[gf] + pair[gf][gm]));
                }
            }
            Role::Child(_) => {
                let (uf, um) = (&up[m.father], &up[m.mother]);
                let mut terms = [[f64::NEG_INFINITY; 9]; 3];
                for gf in 0..3 {
                    for gm in 0..3 {
                        let w = uf[gf] + um[gm] + pair[gf][gm];
                        for gc in 0..3 {
                            terms[gc][3 * gf + gm] = w + t[gf][gm][gc];
                        }
                    }
                }
                for gc in 0..3 {
                    out[gc] = log_sum_exp(&terms[gc]);
                }
            }
        }
        out
    }

    /// `log Pr(observed genotypes)`: [`Self::log_joint`] with every member
    /// likelihood set to one. Depends only on the allele frequency.
    pub fn log_genotype_marginal(&self, prior: &GenotypeDist) -> f64 {
        self.log_joint(&vec![[0.0; 3]; self.n], prior)
    }

    /// `log Pr(histories | observed genotypes)` given a precomputed marginal.
    pub fn log_conditional(
        &self,
        member_loglik: &[[f64; 3]],
        prior: &GenotypeDist,
        log_marginal: f64,
    ) -> f64 {
        self.log_joint(member_loglik, prior) - log_marginal
    }
}

fn loglik_table<F>(family: &Family, member_loglik: F) -> Vec<[f64; 3]>
where
    F: Fn(usize, Genotype) -> f64,
{
    (0..family.len())
        .map(|j| Genotype::ALL.map(|g| member_loglik(j, g)))
        .collect()
}

/// `log Pr(h, g_obs)` by peeling; `member_loglik(j, g)` is the log-likelihood
/// of member `j`'s history under genotype `g`.
pub fn peel_family<F>(
    family: &Family,
    member_loglik: F,
    prior: &GenotypeDist,
) -> Result<f64, PeelingError>
where
    F: Fn(usize, Genotype) -> f64,
{
    let plan = PeelingPlan::new(family)?;
    Ok(plan.log_joint(&loglik_table(family, member_loglik), prior))
}

/// `log Pr(h | g_obs)`: the joint divided by the genotype marginal.
pub fn conditional_family_loglik<F>(
    family: &Family,
    member_loglik: F,
    prior: &GenotypeDist,
) -> Result<f64, PeelingError>
where
    F: Fn(usize, Genotype) -> f64,
{
    let plan = PeelingPlan::new(family)?;
    let marginal = plan.log_genotype_marginal(prior);
    if marginal == f64::NEG_INFINITY {
        return Err(PeelingError::InconsistentGenotypes(family.id.clone()));
    }
    Ok(plan.log_conditional(&loglik_table(family, member_loglik), prior, marginal))
}

/// Explicit enumeration over every genotype configuration consistent with the
/// observations. Exponential in the number of missing genotypes; kept as the
/// reference the peeling recursion is checked against.
pub fn brute_force_family_loglik<F>(
    family: &Family,
    member_loglik: F,
    prior: &GenotypeDist,
) -> Result<f64, PeelingError>
where
    F: Fn(usize, Genotype) -> f64,
{
    let missing = family
        .members
        .iter()
        .filter(|m| m.genotype == GenotypeObs::Missing)
        .count();
    if missing > BRUTE_FORCE_CAP {
        return Err(PeelingError::TooLarge {
            family: family.id.clone(),
            missing,
            cap: BRUTE_FORCE_CAP,
        });
    }
    let report = validate_family(family);
    if report.violations.iter().any(|v| {
        matches!(
            v,
            crate::pedigree::Violation::Cycle(_)
                | crate::pedigree::Violation::UnknownParent { .. }
                | crate::pedigree::Violation::DuplicateId(_)
        )
    }) {
        return Err(PeelingError::Structure {
            family: family.id.clone(),
            report,
        });
    }

    let n = family.len();
    let lik = loglik_table(family, member_loglik);
    let parents: Vec<Option<(usize, usize)>> = family
        .members
        .iter()
        .map(|m| match (&m.father, &m.mother) {
            (Some(f), Some(mo)) => family.index_of(f).zip(family.index_of(mo)),
            _ => None,
        })
        .collect();
    let support: Vec<Vec<Genotype>> = family
        .members
        .iter()
        .map(|m| {
            Genotype::ALL
                .into_iter()
                .filter(|g| g.consistent_with(m.genotype))
                .collect()
        })
        .collect();

    let mut counter = vec![0usize; n];
    let mut terms = Vec::new();
    loop {
        let config: Vec<Genotype> = (0..n).map(|j| support[j][counter[j]]).collect();
        let mut logp = 0.0;
        for j in 0..n {
            let g = config[j];
            let weight = match parents[j] {
                None => prior.prob(g),
                Some((f, m)) => transmission_prob(g, config[f], config[m]),
            };
            logp += weight.ln() + lik[j][g.index()];
        }
        if logp > f64::NEG_INFINITY {
            terms.push(logp);
        }
        // Odometer increment.
        let mut j = 0;
        loop {
            if j == n {
                return Ok(log_sum_exp(&terms));
            }
            counter[j] += 1;
            if counter[j] < support[j].len() {
                break;
            }
            counter[j] = 0;
            j += 1;
        }
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
