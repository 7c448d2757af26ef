//! Bayesian penetrance estimation for multiple primary cancers from
//! family-based cohort data.
//!
//! The onset process is a non-homogeneous Poisson process whose intensity
//! combines a Bernstein-polynomial baseline, covariate effects (germline
//! carrier status, sex, cancer history and their interactions) and an
//! optional gamma-distributed family frailty. Likelihoods are peeled over
//! unobserved genotypes and corrected for proband-based ascertainment.

pub mod likelihood;
pub mod mendelian;
pub mod nhpp;
pub mod pedigree;
pub mod sampler;
pub mod simulate;
pub mod eda;
pub mod predict;
pub mod config;
pub mod cli;
