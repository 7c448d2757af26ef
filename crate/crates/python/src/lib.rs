//! Python bindings: pedigree I/O, simulation, fitting, penetrance curves,
//! DIC and the exploratory gap-time statistics.

use std::collections::HashMap;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use mpcpen::eda;
use mpcpen::likelihood::{AscertainmentConfig, LikelihoodSettings, TruncationPolicy, DEFAULT_PSI_A};
use mpcpen::nhpp::CovariateSet;
use mpcpen::pedigree::{self, PedigreeFormat, DEFAULT_T_MAX};
use mpcpen::predict::{self, PenetranceQuery};
use mpcpen::sampler::{self, ChainConfig, ModelSpec, PriorConfig};
use mpcpen::simulate::{self as sim, SimConfig};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn settings(t_max: f64, correction: bool, psi_a: f64, keep_saturated: bool) -> LikelihoodSettings {
    LikelihoodSettings {
        t_max,
        truncation: if keep_saturated {
            TruncationPolicy::KeepSaturated
        } else {
            TruncationPolicy::Truncate
        },
        ascertainment: AscertainmentConfig { psi_a, correction },
    }
}

/// Families parsed from (or written to) the pedigree CSV format.
#[pyclass(module = "mpcpen", frozen)]
struct FamilySet {
    inner: pedigree::FamilySet,
}

#[pymethods]
impl FamilySet {
    /// Parses pedigree CSV text.
    #[staticmethod]
    #[pyo3(signature = (text, t_max = DEFAULT_T_MAX))]
    fn from_csv(text: &str, t_max: f64) -> PyResult<Self> {
        let format = PedigreeFormat {
            t_max,
            ..PedigreeFormat::default()
        };
        let inner = pedigree::parse_pedigree(text.as_bytes(), &format).map_err(value_err)?;
        Ok(FamilySet { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (path, t_max = DEFAULT_T_MAX))]
    fn read(path: &str, t_max: f64) -> PyResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        Self::from_csv(&text, t_max)
    }

    fn to_csv(&self) -> String {
        pedigree::pedigree_to_string(&self.inner)
    }

    #[getter]
    fn family_ids(&self) -> Vec<String> {
        self.inner.families.iter().map(|f| f.id.clone()).collect()
    }

    #[getter]
    fn n_individuals(&self) -> usize {
        self.inner.n_individuals()
    }

    #[getter]
    fn t_max(&self) -> f64 {
        self.inner.t_max
    }

    /// `(family_id, message)` for every family with a structural problem.
    fn validate(&self) -> Vec<(String, String)> {
        self.inner
            .validate()
            .into_iter()
            .filter(|(_, r)| !r.is_empty())
            .map(|(id, r)| (id, r.to_string()))
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "FamilySet({} families, {} individuals)",
            self.inner.len(),
            self.inner.n_individuals()
        )
    }
}

/// Retained draws of one chain.
#[pyclass(module = "mpcpen", frozen)]
struct Posterior {
    inner: sampler::PosteriorSamples,
}

#[pymethods]
impl Posterior {
    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        let file = std::fs::File::open(path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        let inner = sampler::read_samples_csv(std::io::BufReader::new(file)).map_err(value_err)?;
        Ok(Posterior { inner })
    }

    fn write(&self, path: &str) -> PyResult<()> {
        let file = std::fs::File::create(path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        sampler::write_samples_csv(&self.inner, std::io::BufWriter::new(file)).map_err(value_err)
    }

    #[getter]
    fn columns(&self) -> Vec<String> {
        self.inner.column_names()
    }

    fn column(&self, name: &str) -> PyResult<Vec<f64>> {
        self.inner
            .column(name)
            .ok_or_else(|| PyValueError::new_err(format!("no column `{name}`")))
    }

    /// Block name to acceptance rate (empty for posteriors read from disk).
    fn acceptance(&self) -> HashMap<String, f64> {
        self.inner
            .acceptance
            .iter()
            .map(|b| (b.block.clone(), b.rate()))
            .collect()
    }

    /// Parameter name to mean, sd, median, 95% interval bounds and ESS.
    fn summary(&self) -> HashMap<String, HashMap<String, f64>> {
        sampler::summarize(&self.inner)
            .into_iter()
            .map(|s| {
                let stats = HashMap::from([
                    ("mean".to_string(), s.mean),
                    ("sd".to_string(), s.sd),
                    ("median".to_string(), s.median),
                    ("lower".to_string(), s.lower),
                    ("upper".to_string(), s.upper),
                    ("ess".to_string(), s.ess),
                ]);
                (s.name, stats)
            })
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Posterior({} draws, covariates {}, degree {}, frailty {})",
            self.inner.len(),
            self.inner.covariates,
            self.inner.degree,
            self.inner.frailty
        )
    }
}

/// Simulates ascertained families; returns the data and the true per-family
/// frailties.
#[pyfunction]
#[pyo3(signature = (n_families = 100, seed = 1, phi = Some(1.0), beta1 = 6.0, beta2 = 1.0, baseline_rate = 0.0005, censor_rate = 0.5))]
fn simulate(
    py: Python<'_>,
    n_families: usize,
    seed: u64,
    phi: Option<f64>,
    beta1: f64,
    beta2: f64,
    baseline_rate: f64,
    censor_rate: f64,
) -> PyResult<(FamilySet, Vec<f64>)> {
    let cfg = SimConfig {
        n_families,
        seed,
        phi,
        beta1,
        beta2,
        baseline_rate,
        censor_rate,
        ..SimConfig::default()
    };
    cfg.check().map_err(value_err)?;
    let (fs, truth) = py
        .detach(|| sim::simulate_dataset(&cfg))
        .map_err(value_err)?;
    let xi = truth.families.iter().map(|f| f.xi).collect();
    Ok((FamilySet { inner: fs }, xi))
}

/// Runs one Metropolis-within-Gibbs chain.
#[pyfunction]
#[pyo3(signature = (
    families, covariates = "M4", degree = 5, iterations = 10_000, burn_in = 1_000,
    thinning = 1, seed = 1, frailty = true, correction = true, psi_a = DEFAULT_PSI_A,
    keep_saturated = false
))]
#[allow(clippy::too_many_arguments)]
fn fit(
    py: Python<'_>,
    families: &FamilySet,
    covariates: &str,
    degree: usize,
    iterations: usize,
    burn_in: usize,
    thinning: usize,
    seed: u64,
    frailty: bool,
    correction: bool,
    psi_a: f64,
    keep_saturated: bool,
) -> PyResult<Posterior> {
    let spec = ModelSpec {
        covariates: covariates.parse::<CovariateSet>().map_err(value_err)?,
        degree,
    };
    let chain = ChainConfig {
        iterations,
        burn_in,
        thinning,
        seed,
        frailty,
        ..ChainConfig::default()
    };
    let settings = settings(families.inner.t_max, correction, psi_a, keep_saturated);
    let inner = py
        .detach(|| {
            sampler::run_chain(&families.inner, &spec, &chain, &PriorConfig::default(), &settings)
        })
        .map_err(value_err)?;
    Ok(Posterior { inner })
}

/// Posterior median and equal-tailed band of the next-onset penetrance.
#[pyfunction]
#[pyo3(signature = (posterior, carrier, male, history = 0, t_k = 0.0, grid = None, level = 0.95, t_max = DEFAULT_T_MAX))]
#[allow(clippy::too_many_arguments)]
fn penetrance_curve(
    py: Python<'_>,
    posterior: &Posterior,
    carrier: bool,
    male: bool,
    history: usize,
    t_k: f64,
    grid: Option<Vec<f64>>,
    level: f64,
    t_max: f64,
) -> PyResult<HashMap<String, Vec<f64>>> {
    let query = PenetranceQuery {
        carrier,
        male,
        history,
        t_k,
        w_grid: grid.unwrap_or_else(predict::default_grid),
    };
    let curve = py
        .detach(|| predict::penetrance_curve(&query, &posterior.inner, t_max, level))
        .map_err(value_err)?;
    Ok(HashMap::from([
        ("w".to_string(), curve.w),
        ("median".to_string(), curve.median),
        ("lower".to_string(), curve.lower),
        ("upper".to_string(), curve.upper),
    ]))
}

/// `1 - (1 + Λ/φ)^(-φ)`; `phi=None` gives `1 - exp(-Λ)`.
#[pyfunction]
#[pyo3(signature = (cumulative, phi = None))]
fn frailty_penetrance(cumulative: f64, phi: Option<f64>) -> f64 {
    predict::frailty_penetrance(phi, cumulative)
}

/// Penetrance over `(a, b]` given no onset by `a`, from cumulative
/// intensities at `a` and `b` measured from the last onset.
#[pyfunction]
#[pyo3(signature = (cum_a, cum_b, phi = None))]
fn conditional_penetrance(cum_a: f64, cum_b: f64, phi: Option<f64>) -> f64 {
    predict::conditional_penetrance(phi, cum_a, cum_b)
}

/// Deviance information criterion of a posterior on its data.
#[pyfunction]
#[pyo3(signature = (posterior, families, correction = true, psi_a = DEFAULT_PSI_A, keep_saturated = false))]
fn dic(
    posterior: &Posterior,
    families: &FamilySet,
    correction: bool,
    psi_a: f64,
    keep_saturated: bool,
) -> PyResult<HashMap<String, f64>> {
    let s = settings(families.inner.t_max, correction, psi_a, keep_saturated);
    let r = sampler::dic(&posterior.inner, &families.inner, &s).map_err(value_err)?;
    Ok(HashMap::from([
        ("dic".to_string(), r.dic),
        ("mean_deviance".to_string(), r.mean_deviance),
        ("deviance_at_mean".to_string(), r.deviance_at_mean),
        ("p_d".to_string(), r.p_d),
    ]))
}

/// IPCW Kendall's τ between the first two gap times, with jackknife SE.
#[pyfunction]
#[pyo3(signature = (families, include_probands = false))]
fn kendall_tau(families: &FamilySet, include_probands: bool) -> PyResult<HashMap<String, f64>> {
    let pairs = eda::gap_pairs(&families.inner, !include_probands);
    let t = eda::ipcw_kendall_tau(&pairs).map_err(value_err)?;
    Ok(HashMap::from([
        ("tau".to_string(), t.tau),
        ("se".to_string(), t.se),
        ("orderable".to_string(), t.orderable as f64),
        ("n_subjects".to_string(), pairs.len() as f64),
    ]))
}

/// Area under the ROC curve (ties count one half).
#[pyfunction]
fn roc_auc(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<f64> {
    predict::roc_auc(&scores, &labels)
        .map(|r| r.auc)
        .map_err(value_err)
}

#[pymodule(name = "mpcpen")]
fn mpcpen_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<FamilySet>()?;
    m.add_class::<Posterior>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(penetrance_curve, m)?)?;
    m.add_function(wrap_pyfunction!(frailty_penetrance, m)?)?;
    m.add_function(wrap_pyfunction!(conditional_penetrance, m)?)?;
    m.add_function(wrap_pyfunction!(dic, m)?)?;
    m.add_function(wrap_pyfunction!(kendall_tau, m)?)?;
    m.add_function(wrap_pyfunction!(roc_auc, m)?)?;
    Ok(())
}
