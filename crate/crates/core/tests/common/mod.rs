//! Shared helpers: random loop-free pedigrees and an enumeration oracle for
//! familywise likelihoods written independently of the library's peeler.

#![allow(dead_code)]

use mpcpen::mendelian::Genotype;
use mpcpen::pedigree::{Family, GenotypeObs, Individual, Sex};
use rand::seq::SliceRandom;
use rand::Rng;

/// Random onset history within `[0, 90]` years.
pub fn random_history<R: Rng>(rng: &mut R, force_affected: bool) -> (Vec<f64>, f64) {
    let k = if force_affected {
        rng.random_range(1..=3)
    } else {
        rng.random_range(0..=3)
    };
    let mut ages: Vec<f64> = (0..k).map(|_| rng.random_range(1.0..80.0)).collect();
    ages.sort_by(f64::total_cmp);
    ages.dedup();
    let last = ages.last().copied().unwrap_or(0.0);
    let censor = rng.random_range(last..90.0);
    (ages, censor)
}

fn founder_genotype<R: Rng>(rng: &mut R, psi: f64) -> Genotype {
    match (rng.random_bool(psi), rng.random_bool(psi)) {
        (false, false) => Genotype::Wildtype,
        (true, true) => Genotype::Homozygous,
        _ => Genotype::Heterozygous,
    }
}

fn transmit<R: Rng>(rng: &mut R, parent: Genotype) -> bool {
    match parent {
        Genotype::Wildtype => false,
        Genotype::Heterozygous => rng.random_bool(0.5),
        Genotype::Homozygous => true,
    }
}

struct Draft {
    id: String,
    father: Option<usize>,
    mother: Option<usize>,
    sex: Sex,
    genotype: Genotype,
}

/// A random pedigree without marriage or inbreeding loops: a founder couple
/// whose descendants marry unrelated founders. Genotypes follow Mendelian
/// transmission with allele frequency `psi`; each is hidden with probability
/// `missing` but no more than `max_missing` are hidden. Members come out in
/// random order and exactly one affected member is the proband.
pub fn random_family<R: Rng>(
    rng: &mut R,
    id: &str,
    max_size: usize,
    psi: f64,
    missing: f64,
    max_missing: usize,
) -> Family {
    let max_size = max_size.max(3);
    let mut people = vec![
        Draft {
            id: "f0".into(),
            father: None,
            mother: None,
            sex: Sex::Male,
            genotype: founder_genotype(rng, psi),
        },
        Draft {
            id: "m0".into(),
            father: None,
            mother: None,
            sex: Sex::Female,
            genotype: founder_genotype(rng, psi),
        },
    ];
    let mut couples = vec![(0usize, 1usize)];
    let target = rng.random_range(3..=max_size);
    while people.len() < target {
        let (f, m) = couples[rng.random_range(0..couples.len())];
        let sex = if rng.random_bool(0.5) { Sex::Male } else { Sex::Female };
        let a = transmit(rng, people[f].genotype);
        let b = transmit(rng, people[m].genotype);
        let genotype = match (a, b) {
            (false, false) => Genotype::Wildtype,
            (true, true) => Genotype::Homozygous,
            _ => Genotype::Heterozygous,
        };
        let child = people.len();
        people.push(Draft {
            id: format!("c{child}"),
            father: Some(f),
            mother: Some(m),
            sex,
            genotype,
        });
        if people.len() + 2 <= target && rng.random_bool(0.4) {
            let spouse = people.len();
            people.push(Draft {
                id: format!("s{spouse}"),
                father: None,
                mother: None,
                sex: if sex == Sex::Male { Sex::Female } else { Sex::Male },
                genotype: founder_genotype(rng, psi),
            });
            couples.push(if sex == Sex::Male {
                (child, spouse)
            } else {
                (spouse, child)
            });
        }
    }

    let proband = rng.random_range(0..people.len());
    let mut hidden = 0;
    let mut members: Vec<Individual> = people
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let obs = if hidden < max_missing && rng.random_bool(missing) {
                hidden += 1;
                GenotypeObs::Missing
            } else if d.genotype.is_carrier() {
                GenotypeObs::Carrier
            } else {
                GenotypeObs::Wildtype
            };
            let (ages, censor) = random_history(rng, i == proband);
            Individual::new(
                d.id.clone(),
                d.father.map(|p| people[p].id.clone()),
                d.mother.map(|p| people[p].id.clone()),
                d.sex,
                obs,
                ages,
                censor,
                i == proband,
            )
            .expect("valid individual")
        })
        .collect();
    members.shuffle(rng);
    Family::new(id, members)
}

/// Random per-member log-likelihood rows.
pub fn random_table<R: Rng>(rng: &mut R, n: usize) -> Vec<[f64; 3]> {
    (0..n)
        .map(|_| {
            let w = rng.random_range(-8.0..0.0);
            let c = rng.random_range(-8.0..0.0);
            [w, c, c + rng.random_range(-1.0..1.0)]
        })
        .collect()
}

fn hwe(psi: f64) -> [f64; 3] {
    [(1.0 - psi).powi(2), 2.0 * psi * (1.0 - psi), psi * psi]
}

fn transmission(child: usize, father: usize, mother: usize) -> f64 {
    let p = |g: usize| g as f64 / 2.0;
    let (a, b) = (p(father), p(mother));
    match child {
        0 => (1.0 - a) * (1.0 - b),
        1 => a * (1.0 - b) + (1.0 - a) * b,
        _ => a * b,
    }
}

/// `log Σ_g Π founders HWE(g) Π children T(g | parents) Π exp(table)`
/// over every genotype assignment consistent with the observations.
pub fn enumerate_log_joint(family: &Family, table: &[[f64; 3]], psi: f64) -> f64 {
    let n = family.members.len();
    let index = |id: &Option<String>| {
        id.as_ref()
            .map(|p| family.members.iter().position(|m| &m.id == p).expect("parent present"))
    };
    let parents: Vec<(Option<usize>, Option<usize>)> = family
        .members
        .iter()
        .map(|m| (index(&m.father), index(&m.mother)))
        .collect();
    let choices: Vec<Vec<usize>> = family
        .members
        .iter()
        .map(|m| match m.genotype {
            GenotypeObs::Wildtype => vec![0],
            GenotypeObs::Carrier => vec![1, 2],
            GenotypeObs::Missing => vec![0, 1, 2],
        })
        .collect();
    let prior = hwe(psi);
    let mut pos = vec![0usize; n];
    let mut terms = Vec::new();
    loop {
        let g: Vec<usize> = (0..n).map(|j| choices[j][pos[j]]).collect();
        let mut log_p = 0.0;
        for j in 0..n {
            log_p += match parents[j] {
                (Some(f), Some(m)) => transmission(g[j], g[f], g[m]).ln(),
                _ => prior[g[j]].ln(),
            };
            log_p += table[j][g[j]];
        }
        terms.push(log_p);
        let mut j = 0;
        while j < n {
            pos[j] += 1;
            if pos[j] < choices[j].len() {
                break;
            }
            pos[j] = 0;
            j += 1;
        }
        if j == n {
            break;
        }
    }
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Number of genotype assignments [`enumerate_log_joint`] visits.
pub fn n_configurations(family: &Family) -> usize {
    family
        .members
        .iter()
        .map(|m| match m.genotype {
            GenotypeObs::Wildtype => 1,
            GenotypeObs::Carrier => 2,
            GenotypeObs::Missing => 3,
        })
        .product()
}

/// Single-member families with observed wildtype genotype and homogeneous
/// Poisson onsets at `rate` per unit normalized time (t_max = 100). With no
/// covariates, degree 1, no frailty and no ascertainment correction the
/// posterior of γ₁ under a Gamma(a, b) prior is Gamma(a + ΣK, b + Σv).
/// Returns the data with ΣK and Σv.
pub fn poisson_toy<R: Rng>(rng: &mut R, n: usize, rate: f64) -> (mpcpen::pedigree::FamilySet, usize, f64) {
    let (mut events, mut exposure) = (0, 0.0);
    let families = (0..n)
        .map(|i| {
            let v: f64 = rng.random_range(0.2..0.9);
            let mut t = 0.0;
            let mut ages = Vec::new();
            loop {
                let u: f64 = rng.random();
                t += -(1.0 - u).ln() / rate;
                if t >= v {
                    break;
                }
                ages.push(t * 100.0);
            }
            events += ages.len();
            exposure += v;
            let sex = if i % 2 == 0 { Sex::Male } else { Sex::Female };
            let ind = Individual::founder(format!("p{i}"), sex, GenotypeObs::Wildtype, ages, v * 100.0)
                .expect("valid individual");
            Family::new(format!("fam{i}"), vec![ind])
        })
        .collect();
    let fs = mpcpen::pedigree::FamilySet::new(families, 100.0).expect("valid family set");
    (fs, events, exposure)
}
