//! Gap-time diagnostics: Kaplan-Meier curves and an inverse
//! probability-of-censoring weighted Kendall's τ between the first and second
//! gap times, which are subject to induced dependent censoring.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pedigree::FamilySet;

#[derive(Debug, Error)]
pub enum EdaError {
    #[error("{times} times but {events} event indicators")]
    LengthMismatch { times: usize, events: usize },
    #[error("negative or non-finite time {0}")]
    InvalidTime(f64),
    #[error("need at least two subjects, got {0}")]
    TooFew(usize),
    #[error("no orderable pairs")]
    NoOrderablePairs,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Product-limit estimate as a right-continuous step function. Empty when
/// there are no event times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KaplanMeier {
    /// Distinct event times, ascending.
    pub times: Vec<f64>,
    pub at_risk: Vec<usize>,
    pub events: Vec<usize>,
    /// Survival just after each event time.
    pub survival: Vec<f64>,
    /// Greenwood variance just after each event time (0 once survival hits 0).
    pub variance: Vec<f64>,
}

impl KaplanMeier {
    /// `S(t)`: 1 before the first event time, the last value beyond the last.
    pub fn survival_at(&self, t: f64) -> f64 {
        match self.times.partition_point(|&s| s <= t) {
            0 => 1.0,
            k => self.survival[k - 1],
        }
    }

    pub fn variance_at(&self, t: f64) -> f64 {
        match self.times.partition_point(|&s| s <= t) {
            0 => 0.0,
            k => self.variance[k - 1],
        }
    }
}

pub fn km_estimator(times: &[f64], events: &[bool]) -> Result<KaplanMeier, EdaError> {
    if times.len() != events.len() {
        return Err(EdaError::LengthMismatch {
            times: times.len(),
            events: events.len(),
        });
    }
    if let Some(&t) = times.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
        return Err(EdaError::InvalidTime(t));
    }
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let mut km = KaplanMeier {
        times: Vec::new(),
        at_risk: Vec::new(),
        events: Vec::new(),
        survival: Vec::new(),
        variance: Vec::new(),
    };
    let mut n = times.len();
    let mut s = 1.0;
    let mut greenwood = 0.0;
    let mut i = 0;
    while i < order.len() {
        let t = times[order[i]];
        let (mut d, mut c) = (0, 0);
        while i < order.len() && times[order[i]] == t {
            if events[order[i]] {
                d += 1;
            } else {
                c += 1;
            }
            i += 1;
        }
        if d > 0 {
            s *= 1.0 - d as f64 / n as f64;
            if n > d {
                greenwood += d as f64 / (n as f64 * (n - d) as f64);
            }
            km.times.push(t);
            km.at_risk.push(n);
            km.events.push(d);
            km.survival.push(s);
            km.variance.push(if s > 0.0 { s * s * greenwood } else { 0.0 });
        }
        n -= d + c;
    }
    Ok(km)
}

pub fn write_km_csv<W: Write>(km: &KaplanMeier, sink: W) -> Result<(), EdaError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["time", "at_risk", "events", "survival", "variance"])?;
    for k in 0..km.times.len() {
        w.write_record(&[
            km.times[k].to_string(),
            km.at_risk[k].to_string(),
            km.events[k].to_string(),
            km.survival[k].to_string(),
            km.variance[k].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Observed first and second gap times of one subject.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapPair {
    pub x: f64,
    pub y: f64,
    pub delta_x: bool,
    pub delta_y: bool,
}

/// Gap pairs of every non-proband (or everyone, if `exclude_probands` is false).
pub fn gap_pairs(fs: &FamilySet, exclude_probands: bool) -> Vec<GapPair> {
    fs.families
        .iter()
        .flat_map(|f| &f.members)
        .filter(|m| !(exclude_probands && m.is_proband))
        .map(|m| match (m.onset_ages.first(), m.onset_ages.get(1)) {
            (None, _) => GapPair {
                x: m.censor_age,
                y: 0.0,
                delta_x: false,
                delta_y: false,
            },
            (Some(&t1), None) => GapPair {
                x: t1,
                y: m.censor_age - t1,
                delta_x: true,
                delta_y: false,
            },
            (Some(&t1), Some(&t2)) => GapPair {
                x: t1,
                y: t2 - t1,
                delta_x: true,
                delta_y: true,
            },
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauEstimate {
    pub tau: f64,
    pub se: f64,
    pub orderable: usize,
    /// Orderable pairs dropped because a censoring weight was zero.
    pub dropped: usize,
}

struct TauParts {
    tau: f64,
    orderable: usize,
    dropped: usize,
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn tau_point(pairs: &[GapPair]) -> Result<TauParts, EdaError> {
    let totals: Vec<f64> = pairs.iter().map(|p| p.x + p.y).collect();
    let censored: Vec<bool> = pairs.iter().map(|p| !p.delta_y).collect();
    let g = km_estimator(&totals, &censored)?;
    let (mut num, mut den) = (0.0, 0.0);
    let (mut orderable, mut dropped) = (0, 0);
    for i in 0..pairs.len() {
        let a = &pairs[i];
        if !a.delta_x {
            continue;
        }
        for b in &pairs[i + 1..] {
            if !b.delta_x {
                continue;
            }
            // The smaller second gap must be an event; at a tie an event
            // counts as coming first.
            let y_min = a.y.min(b.y);
            let observed = (a.y == y_min && a.delta_y) || (b.y == y_min && b.delta_y);
            if !observed {
                continue;
            }
            orderable += 1;
            let p = g.survival_at(a.x + y_min) * g.survival_at(b.x + y_min);
            if !(p > 0.0) {
                dropped += 1;
                continue;
            }
            num += sign((a.x - b.x) * (a.y - b.y)) / p;
            den += 1.0 / p;
        }
    }
    if den == 0.0 {
        return Err(EdaError::NoOrderablePairs);
    }
    Ok(TauParts {
        tau: num / den,
        orderable,
        dropped,
    })
}

/// IPCW Kendall's τ with a delete-one-subject jackknife standard error.
pub fn ipcw_kendall_tau(pairs: &[GapPair]) -> Result<TauEstimate, EdaError> {
    if pairs.len() < 2 {
        return Err(EdaError::TooFew(pairs.len()));
    }
    for p in pairs {
        for t in [p.x, p.y] {
            if !(t.is_finite() && t >= 0.0) {
                return Err(EdaError::InvalidTime(t));
            }
        }
    }
    let full = tau_point(pairs)?;
    if full.dropped > 0 {
        log::warn!("{} orderable pairs dropped for zero censoring weight", full.dropped);
    }
    let replicates: Vec<f64> = (0..pairs.len())
        .into_par_iter()
        .filter_map(|k| {
            let rest: Vec<GapPair> = pairs
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != k)
                .map(|(_, p)| *p)
                .collect();
            tau_point(&rest).ok().map(|r| r.tau)
        })
        .collect();
    let n = replicates.len() as f64;
    let se = if replicates.len() < 2 {
        f64::NAN
    } else {
        let mean = replicates.iter().sum::<f64>() / n;
        ((n - 1.0) / n * replicates.iter().map(|t| (t - mean).powi(2)).sum::<f64>()).sqrt()
    };
    Ok(TauEstimate {
        tau: full.tau,
        se,
        orderable: full.orderable,
        dropped: full.dropped,
    })
}

/// Classical Kendall's τ-a on complete data.
pub fn classical_kendall_tau(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            s += sign((x[i] - x[j]) * (y[i] - y[j]));
        }
    }
    s / (n * (n - 1) / 2) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdaReport {
    pub n_subjects: usize,
    /// `None` when no pair of subjects is orderable.
    pub tau: Option<TauEstimate>,
    pub km_first: KaplanMeier,
    pub km_second: KaplanMeier,
}

/// Gap-time KM curves and IPCW τ for a family set.
pub fn analyze(fs: &FamilySet, exclude_probands: bool) -> Result<EdaReport, EdaError> {
    let pairs = gap_pairs(fs, exclude_probands);
    let x: Vec<f64> = pairs.iter().map(|p| p.x).collect();
    let dx: Vec<bool> = pairs.iter().map(|p| p.delta_x).collect();
    let second: Vec<&GapPair> = pairs.iter().filter(|p| p.delta_x).collect();
    let y: Vec<f64> = second.iter().map(|p| p.y).collect();
    let dy: Vec<bool> = second.iter().map(|p| p.delta_y).collect();
    Ok(EdaReport {
        n_subjects: pairs.len(),
        tau: match ipcw_kendall_tau(&pairs) {
            Ok(t) => Some(t),
            Err(EdaError::NoOrderablePairs | EdaError::TooFew(_)) => None,
            Err(e) => return Err(e),
        },
        km_first: km_estimator(&x, &dx)?,
        km_second: km_estimator(&y, &dy)?,
    })
}
