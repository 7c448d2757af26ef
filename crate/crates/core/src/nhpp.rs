//! Non-homogeneous Poisson intensity with a Bernstein-polynomial baseline.
//!
//! Time is on the unit interval. The cumulative baseline is
//! `Λ0(t) = Σ_m γ_m F(t; m, M-m+1)` with `F` the beta distribution function,
//! so `γ_m >= 0` makes it monotone, and the baseline intensity is the matching
//! mixture of beta densities. The cancer-history covariate `D(t)` switches
//! from 0 to 1 strictly after the first onset, which keeps the cumulative
//! intensity piecewise closed-form.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_DEGREE: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("unknown covariate `{0}`")]
    UnknownCovariate(String),
    #[error("covariate `{0}` listed twice")]
    DuplicateCovariate(String),
    #[error("beta has {got} coefficients, covariate set needs {expected}")]
    BetaLength { expected: usize, got: usize },
    #[error("Bernstein degree must be at least 1")]
    EmptyBaseline,
    #[error("baseline weight gamma_{index} = {value} must be finite and non-negative")]
    NegativeWeight { index: usize, value: f64 },
    #[error("frailty precision phi = {0} must be positive and finite")]
    InvalidPhi(f64),
    #[error("coefficient {index} is not finite")]
    NonFiniteBeta { index: usize },
    #[error("interval [{a}, {b}] is reversed")]
    ReversedInterval { a: f64, b: f64 },
}

/// One term of the covariate vector `X(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Covariate {
    /// Carrier indicator.
    G,
    /// Sex (1 = male).
    S,
    /// Cancer history, 1 strictly after the first onset.
    D,
    GxS,
    GxD,
    SxD,
}

impl Covariate {
    pub fn name(self) -> &'static str {
        match self {
            Covariate::G => "G",
            Covariate::S => "S",
            Covariate::D => "D",
            Covariate::GxS => "GxS",
            Covariate::GxD => "GxD",
            Covariate::SxD => "SxD",
        }
    }

    pub fn value(self, g: f64, s: f64, d: f64) -> f64 {
        match self {
            Covariate::G => g,
            Covariate::S => s,
            Covariate::D => d,
            Covariate::GxS => g * s,
            Covariate::GxD => g * d,
            Covariate::SxD => s * d,
        }
    }
}

impl FromStr for Covariate {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| if c == '*' || c == '×' { 'x' } else { c })
            .collect::<String>()
            .to_ascii_uppercase();
        Ok(match norm.as_str() {
            "G" => Covariate::G,
            "S" => Covariate::S,
            "D" | "D(T)" => Covariate::D,
            "GXS" => Covariate::GxS,
            "GXD" | "GXD(T)" => Covariate::GxD,
            "SXD" | "SXD(T)" => Covariate::SxD,
            _ => return Err(ModelError::UnknownCovariate(s.to_string())),
        })
    }
}

/// Ordered covariate list. `M1`–`M5` are the named candidate models; any
/// comma-separated list of terms is also accepted (e.g. `G,D`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CovariateSet(Vec<Covariate>);

impl CovariateSet {
    pub fn new(terms: Vec<Covariate>) -> Result<Self, ModelError> {
        for (i, t) in terms.iter().enumerate() {
            if terms[..i].contains(t) {
                return Err(ModelError::DuplicateCovariate(t.name().into()));
            }
        }
        Ok(CovariateSet(terms))
    }

    pub fn empty() -> Self {
        CovariateSet(Vec::new())
    }

    /// `M1`..`M5`.
    pub fn preset(k: usize) -> Option<Self> {
        use Covariate::*;
        let terms = match k {
            1 => vec![G, S, D],
            2 => vec![G, S, D, GxS],
            3 => vec![G, S, D, GxD],
            4 => vec![G, S, D, GxS, GxD],
            5 => vec![G, S, D, GxS, GxD, SxD],
            _ => return None,
        };
        Some(CovariateSet(terms))
    }

    pub fn terms(&self) -> &[Covariate] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, c: Covariate) -> bool {
        self.0.contains(&c)
    }

    pub fn position(&self, c: Covariate) -> Option<usize> {
        self.0.iter().position(|&t| t == c)
    }

    /// Covariate vector for carrier `g`, sex `s` and history `d` (all 0/1).
    pub fn vector(&self, g: f64, s: f64, d: f64) -> Vec<f64> {
        self.0.iter().map(|c| c.value(g, s, d)).collect()
    }

    /// `βᵀX` without materializing `X`.
    pub fn linear_predictor(&self, beta: &[f64], g: f64, s: f64, d: f64) -> f64 {
        self.0
            .iter()
            .zip(beta)
            .map(|(c, b)| b * c.value(g, s, d))
            .sum()
    }
}

impl FromStr for CovariateSet {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if t.is_empty() || t.eq_ignore_ascii_case("none") {
            return Ok(CovariateSet::empty());
        }
        if let Some(k) = t
            .strip_prefix(['M', 'm'])
            .and_then(|k| k.parse::<usize>().ok())
        {
            return CovariateSet::preset(k).ok_or_else(|| ModelError::UnknownCovariate(s.into()));
        }
        let inner = t.trim_start_matches('{').trim_end_matches('}');
        let terms = inner
            .split(',')
            .map(str::parse)
            .collect::<Result<Vec<Covariate>, _>>()?;
        CovariateSet::new(terms)
    }
}

impl TryFrom<String> for CovariateSet {
    type Error = ModelError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<CovariateSet> for String {
    fn from(c: CovariateSet) -> String {
        c.to_string()
    }
}

impl fmt::Display for CovariateSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.0.iter().map(|c| c.name()).collect();
        if names.is_empty() {
            write!(f, "none")
        } else {
            write!(f, "{}", names.join(","))
        }
    }
}

/// θ = (β, γ, φ). `phi` is `None` in the no-frailty model; the Bernstein
/// degree is `gamma.len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub covariates: CovariateSet,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub phi: Option<f64>,
}

impl ModelParams {
    pub fn new(
        covariates: CovariateSet,
        beta: Vec<f64>,
        gamma: Vec<f64>,
        phi: Option<f64>,
    ) -> Result<Self, ModelError> {
        let p = ModelParams {
            covariates,
            beta,
            gamma,
            phi,
        };
        p.check()?;
        Ok(p)
    }

    /// The sampler's starting point: β = 0, γ_m = 1/M, φ = 1.
    pub fn initial(covariates: CovariateSet, degree: usize, frailty: bool) -> Self {
        let k = covariates.len();
        ModelParams {
            covariates,
            beta: vec![0.0; k],
            gamma: vec![1.0 / degree.max(1) as f64; degree],
            phi: frailty.then_some(1.0),
        }
    }

    pub fn check(&self) -> Result<(), ModelError> {
        if self.beta.len() != self.covariates.len() {
            return Err(ModelError::BetaLength {
                expected: self.covariates.len(),
                got: self.beta.len(),
            });
        }
        if let Some(index) = self.beta.iter().position(|b| !b.is_finite()) {
            return Err(ModelError::NonFiniteBeta { index });
        }
        if self.gamma.is_empty() {
            return Err(ModelError::EmptyBaseline);
        }
        for (index, &value) in self.gamma.iter().enumerate() {
            if !(value.is_finite() && value >= 0.0) {
                return Err(ModelError::NegativeWeight { index, value });
            }
        }
        if let Some(phi) = self.phi {
            if !(phi.is_finite() && phi > 0.0) {
                return Err(ModelError::InvalidPhi(phi));
            }
        }
        Ok(())
    }

    pub fn degree(&self) -> usize {
        self.gamma.len()
    }

    pub fn beta_of(&self, c: Covariate) -> f64 {
        self.covariates.position(c).map_or(0.0, |i| self.beta[i])
    }
}

/// Positive family frailties, one per family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrailtyVector(pub Vec<f64>);

impl FrailtyVector {
    pub fn ones(n: usize) -> Self {
        FrailtyVector(vec![1.0; n])
    }

    pub fn new(xi: Vec<f64>) -> Result<Self, ModelError> {
        if let Some(&bad) = xi.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
            return Err(ModelError::InvalidPhi(bad));
        }
        Ok(FrailtyVector(xi))
    }
}

/// Fixed covariate path of one individual. `first_onset` is the normalized age
/// of the first cancer, or +∞ for someone never affected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovariateSchedule {
    pub carrier: bool,
    pub male: bool,
    pub first_onset: f64,
}

impl CovariateSchedule {
    pub fn new(carrier: bool, male: bool, first_onset: Option<f64>) -> Self {
        CovariateSchedule {
            carrier,
            male,
            first_onset: first_onset.unwrap_or(f64::INFINITY),
        }
    }

    pub fn history_at(&self, t: f64) -> f64 {
        if t > self.first_onset {
            1.0
        } else {
            0.0
        }
    }

    fn g(&self) -> f64 {
        if self.carrier {
            1.0
        } else {
            0.0
        }
    }

    fn s(&self) -> f64 {
        if self.male {
            1.0
        } else {
            0.0
        }
    }

    fn linear_predictor(&self, params: &ModelParams, d: f64) -> f64 {
        params
            .covariates
            .linear_predictor(&params.beta, self.g(), self.s(), d)
    }
}

pub fn covariates_at(sched: &CovariateSchedule, t: f64, set: &CovariateSet) -> Vec<f64> {
    set.vector(sched.g(), sched.s(), sched.history_at(t))
}

/// Bernstein basis of degree `M`: beta densities and distribution functions
/// with integer parameters `(m, M-m+1)`, `m = 1..=M`.
#[derive(Debug, Clone)]
pub struct BernsteinBasis {
    degree: usize,
    /// `binom[j] = C(M, j)`
    binom: Vec<f64>,
}

impl BernsteinBasis {
    pub fn new(degree: usize) -> Self {
        let mut binom = vec![1.0; degree + 1];
        for j in 1..=degree {
            binom[j] = binom[j - 1] * (degree + 1 - j) as f64 / j as f64;
        }
        BernsteinBasis { degree, binom }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Bernstein basis polynomials `C(M, j) t^j (1-t)^(M-j)` for `j = 0..=M`.
    fn polynomials(&self, t: f64, degree: usize, binom: &[f64]) -> Vec<f64> {
        let t = t.clamp(0.0, 1.0);
        let u = 1.0 - t;
        (0..=degree)
            .map(|j| binom[j] * t.powi(j as i32) * u.powi((degree - j) as i32))
            .collect()
    }

    /// `F(t; m, M-m+1)` for `m = 1..=M`, i.e. the upper tails
    /// `Σ_{j>=m} b_{j,M}(t)`. The lower-tail complement is used when it is the
    /// shorter, better-conditioned sum.
    pub fn cdfs(&self, t: f64) -> Vec<f64> {
        let m_deg = self.degree;
        if t <= 0.0 {
            return vec![0.0; m_deg];
        }
        if t >= 1.0 {
            return vec![1.0; m_deg];
        }
        let b = self.polynomials(t, m_deg, &self.binom);
        let mut out = vec![0.0; m_deg];
        if t <= 0.5 {
            let mut tail = 0.0;
            for m in (1..=m_deg).rev() {
                tail += b[m];
                out[m - 1] = tail;
            }
        } else {
            let mut head = 0.0;
            for m in 1..=m_deg {
                head += b[m - 1];
                out[m - 1] = 1.0 - head;
            }
        }
        out
    }

    /// Beta densities `f(t; m, M-m+1) = M b_{m-1,M-1}(t)` for `m = 1..=M`.
    pub fn densities(&self, t: f64) -> Vec<f64> {
        let m_deg = self.degree;
        let lower = BernsteinBasis::new(m_deg - 1);
        let b = self.polynomials(t, m_deg - 1, &lower.binom);
        b.into_iter().map(|v| v * m_deg as f64).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `λ0(t) = Σ_m γ_m f(t; m, M-m+1)`.
pub fn baseline_intensity(t: f64, gamma: &[f64]) -> f64 {
    if gamma.is_empty() {
        return 0.0;
    }
    dot(gamma, &BernsteinBasis::new(gamma.len()).densities(t))
}

/// `Λ0(t) = Σ_m γ_m F(t; m, M-m+1)`.
pub fn cumulative_baseline(t: f64, gamma: &[f64]) -> f64 {
    if gamma.is_empty() {
        return 0.0;
    }
    dot(gamma, &BernsteinBasis::new(gamma.len()).cdfs(t))
}

/// `λ(t | X(t), ξ) = ξ λ0(t) exp(βᵀX(t))`.
pub fn intensity(t: f64, sched: &CovariateSchedule, xi: f64, params: &ModelParams) -> f64 {
    let d = sched.history_at(t);
    xi * baseline_intensity(t, &params.gamma) * sched.linear_predictor(params, d).exp()
}

/// `∫_a^b λ(u | X(u), ξ) du`, exact: the interval is split at the first onset
/// and `exp(βᵀX)` is constant on each piece.
pub fn cumulative_intensity(
    a: f64,
    b: f64,
    sched: &CovariateSchedule,
    xi: f64,
    params: &ModelParams,
) -> Result<f64, ModelError> {
    if a > b {
        return Err(ModelError::ReversedInterval { a, b });
    }
    if a == b {
        return Ok(0.0);
    }
    let basis = BernsteinBasis::new(params.gamma.len());
    let big_lambda = |t: f64| dot(&params.gamma, &basis.cdfs(t));
    let before = sched.linear_predictor(params, 0.0).exp();
    let after = sched.linear_predictor(params, 1.0).exp();
    let t1 = sched.first_onset;
    let total = if b <= t1 {
        before * (big_lambda(b) - big_lambda(a))
    } else if a >= t1 {
        after * (big_lambda(b) - big_lambda(a))
    } else {
        let mid = big_lambda(t1);
        before * (mid - big_lambda(a)) + after * (big_lambda(b) - mid)
    };
    Ok(xi * total)
}
