mod common;

use mpcpen::likelihood::{
    family_loglik_acj, total_loglik, AscertainmentConfig, LikelihoodModel, LikelihoodSettings,
    PredictorTable, TruncationPolicy,
};
use mpcpen::mendelian::{founder_prior, peel_family, Genotype};
use mpcpen::nhpp::{cumulative_baseline, CovariateSet, FrailtyVector, ModelParams};
use mpcpen::pedigree::{parse_pedigree, pedigree_to_string, FamilySet, PedigreeFormat};
use mpcpen::predict::{conditional_penetrance, frailty_penetrance, roc_auc};
use mpcpen::simulate::{simulate_dataset, SimConfig};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_params<R: Rng>(rng: &mut R, covariates: CovariateSet, degree: usize, frailty: bool) -> ModelParams {
    let beta = (0..covariates.len()).map(|_| rng.random_range(-2.0..3.0)).collect();
    let gamma = (0..degree).map(|_| rng.random_range(0.01..2.0)).collect();
    let phi = frailty.then(|| rng.random_range(0.2..5.0));
    ModelParams::new(covariates, beta, gamma, phi).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn peeling_matches_enumeration(seed in any::<u64>(), psi in 0.01f64..0.4) {
        let mut r = rng(seed);
        let fam = common::random_family(&mut r, "f", 14, 0.2, 0.5, 8);
        let table = common::random_table(&mut r, fam.len());
        let prior = founder_prior(psi).unwrap();
        let peeled = peel_family(&fam, |j, g| table[j][g.index()], &prior).unwrap();
        let oracle = common::enumerate_log_joint(&fam, &table, psi);
        prop_assert!((peeled - oracle).abs() < 1e-10, "peel {peeled} oracle {oracle}");
    }

    #[test]
    fn peeling_matches_enumeration_for_wide_rows(seed in any::<u64>(), spread in 100.0f64..3000.0) {
        let mut r = rng(seed);
        let fam = common::random_family(&mut r, "f", 12, 0.3, 0.5, 8);
        let table: Vec<[f64; 3]> = (0..fam.len())
            .map(|_| {
                let w = r.random_range(-spread..0.0);
                let c = r.random_range(-spread..0.0);
                [w, c, c]
            })
            .collect();
        let prior = founder_prior(0.05).unwrap();
        let peeled = peel_family(&fam, |j, g| table[j][g.index()], &prior).unwrap();
        let oracle = common::enumerate_log_joint(&fam, &table, 0.05);
        prop_assert!((peeled - oracle).abs() < 1e-10 * (1.0 + oracle.abs()), "peel {peeled} oracle {oracle}");
    }

    #[test]
    fn peeling_ignores_member_order(seed in any::<u64>()) {
        let mut r = rng(seed);
        let fam = common::random_family(&mut r, "f", 20, 0.2, 0.6, 20);
        let table = common::random_table(&mut r, fam.len());
        let prior = founder_prior(0.1).unwrap();
        let base = peel_family(&fam, |j, g| table[j][g.index()], &prior).unwrap();
        let mut order: Vec<usize> = (0..fam.len()).collect();
        order.shuffle(&mut r);
        let mut shuffled = fam.clone();
        shuffled.members = order.iter().map(|&j| fam.members[j].clone()).collect();
        let moved = peel_family(&shuffled, |j, g| table[order[j]][g.index()], &prior).unwrap();
        prop_assert!((base - moved).abs() < 1e-10);
    }

    #[test]
    fn pedigree_round_trip(seed in any::<u64>(), n in 1usize..6) {
        let mut r = rng(seed);
        let families = (0..n)
            .map(|i| common::random_family(&mut r, &format!("fam{i}"), 12, 0.2, 0.5, 12))
            .collect();
        let fs = FamilySet::new(families, 100.0).unwrap();
        let text = pedigree_to_string(&fs);
        let back = parse_pedigree(text.as_bytes(), &PedigreeFormat::default()).unwrap();
        prop_assert_eq!(back, fs);
    }

    #[test]
    fn fast_likelihood_matches_reference(seed in any::<u64>(), preset in 1usize..=5, degree in 1usize..=6) {
        let mut r = rng(seed);
        let families: Vec<_> = (0..3)
            .map(|i| common::random_family(&mut r, &format!("fam{i}"), 10, 0.2, 0.5, 10))
            .collect();
        let fs = FamilySet::new(families, 100.0).unwrap();
        let cov = CovariateSet::preset(preset).unwrap();
        let params = random_params(&mut r, cov.clone(), degree, true);
        let xi: Vec<f64> = (0..fs.len()).map(|_| r.random_range(0.3..3.0)).collect();
        for truncation in [TruncationPolicy::Truncate, TruncationPolicy::KeepSaturated] {
            for correction in [true, false] {
                let settings = LikelihoodSettings {
                    t_max: 100.0,
                    truncation,
                    ascertainment: AscertainmentConfig { psi_a: 0.01, correction },
                };
                let model = LikelihoodModel::new(&fs, cov.clone(), degree, settings).unwrap();
                let baseline = model.baseline(&params.gamma);
                let table = PredictorTable::new(&cov, &params.beta);
                for (i, f) in fs.families.iter().enumerate() {
                    let fast = model.family_loglik(i, &baseline, &table, xi[i]);
                    let slow = family_loglik_acj(f, xi[i], &params, &settings).unwrap();
                    prop_assert!((fast - slow).abs() < 1e-8 * (1.0 + slow.abs()), "{fast} vs {slow}");
                }
                let total = model.total(&params, Some(&xi)).unwrap();
                let reference = total_loglik(&fs, Some(&FrailtyVector(xi.clone())), &params, &settings).unwrap();
                prop_assert!((total - reference).abs() < 1e-8 * (1.0 + reference.abs()));
            }
        }
    }

    #[test]
    fn simulated_families_validate(seed in 0u64..1000, phi in prop::option::of(0.5f64..4.0)) {
        let cfg = SimConfig { n_families: 3, seed, phi, ..SimConfig::default() };
        let (fs, truth) = simulate_dataset(&cfg).unwrap();
        prop_assert_eq!(fs.len(), 3);
        for (f, t) in fs.families.iter().zip(&truth.families) {
            prop_assert_eq!(&f.id, &t.family);
            prop_assert_eq!(f.len(), 30);
            let p = f.proband().unwrap();
            prop_assert!(!p.onset_ages.is_empty());
            for m in &f.members {
                prop_assert!(m.check().is_ok());
            }
        }
        for (_, report) in fs.validate() {
            prop_assert!(report.is_empty(), "{report}");
        }
        let text = pedigree_to_string(&fs);
        prop_assert_eq!(parse_pedigree(text.as_bytes(), &PedigreeFormat::default()).unwrap(), fs);
    }

    #[test]
    fn penetrance_is_monotone_cdf(phi in prop::option::of(0.05f64..50.0), a in 0.0f64..5.0, steps in prop::collection::vec(0.0f64..2.0, 1..30)) {
        let mut cum = a;
        let mut prev = conditional_penetrance(phi, a, a);
        prop_assert_eq!(prev, 0.0);
        for s in steps {
            cum += s;
            let p = conditional_penetrance(phi, a, cum);
            prop_assert!((0.0..=1.0).contains(&p));
            prop_assert!(p >= prev);
            prev = p;
        }
        prop_assert_eq!(conditional_penetrance(phi, 0.0, cum), frailty_penetrance(phi, cum));
    }

    #[test]
    fn auc_equals_mann_whitney(
        seed in any::<u64>(),
        n in 2usize..60,
        ties in 1u32..20,
    ) {
        let mut r = rng(seed);
        let mut labels: Vec<bool> = (0..n).map(|_| r.random_bool(0.4)).collect();
        labels[0] = true;
        labels[1] = false;
        let scores: Vec<f64> = (0..n).map(|_| f64::from(r.random_range(0..ties))).collect();
        let auc = roc_auc(&scores, &labels).unwrap().auc;
        let (mut num, mut pairs) = (0.0, 0.0);
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li && !lj {
                    pairs += 1.0;
                    num += if scores[i] > scores[j] { 1.0 } else if scores[i] == scores[j] { 0.5 } else { 0.0 };
                }
            }
        }
        prop_assert!((auc - num / pairs).abs() < 1e-12);
    }

    #[test]
    fn cumulative_baseline_monotone(gamma in prop::collection::vec(0.0f64..3.0, 1..8)) {
        let mut prev = 0.0;
        for i in 0..=200 {
            let t = i as f64 / 200.0;
            let c = cumulative_baseline(t, &gamma);
            prop_assert!(c >= prev - 1e-15);
            prev = c;
        }
        let total: f64 = gamma.iter().sum();
        prop_assert!((prev - total).abs() < 1e-12 * (1.0 + total));
    }
}

#[test]
fn homozygous_rows_are_used() {
    // A carrier row that differs between the two carrier genotypes still
    // matches enumeration.
    let mut r = rng(5);
    let fam = common::random_family(&mut r, "f", 8, 0.4, 0.9, 8);
    let mut table = common::random_table(&mut r, fam.len());
    for row in &mut table {
        row[Genotype::Homozygous.index()] -= 3.0;
    }
    let prior = founder_prior(0.3).unwrap();
    let peeled = peel_family(&fam, |j, g| table[j][g.index()], &prior).unwrap();
    assert!((peeled - common::enumerate_log_joint(&fam, &table, 0.3)).abs() < 1e-10);
}
