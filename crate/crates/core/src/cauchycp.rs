//! Change-point Cox likelihood-ratio tests combined by the Cauchy rule.

use std::f64::consts::PI;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coxfit::{fit_cox, likelihood_ratio_test, CoxData, FitOptions};
use crate::error::{Error, Result};
use crate::survdata::{event_time_percentiles, split_at_changepoint, Dataset};

/// Below this the tangent is replaced by its pole expansion `1/(πp)`.
const P_FLOOR: f64 = 1e-15;

/// `0.5 − atan(Σ wᵢ tan(π(0.5 − pᵢ)))/π`. Weights default to uniform and are
/// normalized when given.
pub fn cauchy_combine(pvals: &[f64], weights: Option<&[f64]>) -> Result<f64> {
    if pvals.is_empty() {
        return Err(Error::invalid("no p-values to combine"));
    }
    if let Some(p) = pvals.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::invalid(format!("p-value {p} outside [0, 1]")));
    }
    let w: Vec<f64> = match weights {
        None => vec![1.0 / pvals.len() as f64; pvals.len()],
        Some(w) => {
            if w.len() != pvals.len() {
                return Err(Error::invalid("weights and p-values differ in length"));
            }
            if w.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::invalid("weights must be positive"));
            }
            let total: f64 = w.iter().sum();
            w.iter().map(|v| v / total).collect()
        }
    };
    let stat: f64 = pvals.iter().zip(&w).map(|(&p, &wi)| wi * cauchy_transform(p)).sum();
    let p = if stat > 1e15 {
        // upper tail of the standard Cauchy: 1/(π s)
        1.0 / (PI * stat)
    } else {
        0.5 - stat.atan() / PI
    };
    Ok(p.clamp(0.0, 1.0))
}

fn cauchy_transform(p: f64) -> f64 {
    if p < P_FLOOR {
        1.0 / (PI * p.max(f64::MIN_POSITIVE))
    } else {
        (PI * (0.5 - p.min(1.0 - P_FLOOR))).tan()
    }
}

/// Candidate change points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ChangePointSpec {
    /// `0` plus the 25th, 50th and 75th event-time percentiles.
    #[default]
    Default,
    /// `0` plus the given event-time percentiles (probabilities in (0, 1)).
    Percentiles(Vec<f64>),
    /// Explicit times; `0` denotes the proportional-hazards model.
    Times(Vec<f64>),
}

impl ChangePointSpec {
    pub fn resolve(&self, data: &Dataset) -> Result<Vec<f64>> {
        match self {
            ChangePointSpec::Default => Self::Percentiles(vec![0.25, 0.5, 0.75]).resolve(data),
            ChangePointSpec::Percentiles(probs) => {
                let mut t = vec![0.0];
                t.extend(event_time_percentiles(data, probs)?);
                Ok(t)
            }
            ChangePointSpec::Times(t) => {
                if t.is_empty() {
                    return Err(Error::invalid("empty change-point list"));
                }
                if let Some(bad) = t.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                    return Err(Error::invalid(format!("change point {bad} must be finite and >= 0")));
                }
                Ok(t.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub t: f64,
    pub p: f64,
    pub hr_early: f64,
    pub hr_late: f64,
    pub df: u32,
    pub statistic: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauchyCpResult {
    pub p_value: f64,
    pub per_point: Vec<PointResult>,
    pub most_informative: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl CauchyCpResult {
    pub fn best(&self) -> &PointResult {
        &self.per_point[self.most_informative]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct CauchyCpOptions {
    pub changepoints: ChangePointSpec,
    /// Per-change-point weights, normalized over the points that survive.
    pub weights: Option<Vec<f64>>,
    pub fit: FitOptions,
}

pub fn cauchycp_test(data: &Dataset, changepoints: &ChangePointSpec) -> Result<CauchyCpResult> {
    cauchycp_test_with(data, &CauchyCpOptions { changepoints: changepoints.clone(), ..Default::default() })
}

pub fn cauchycp_test_with(data: &Dataset, opts: &CauchyCpOptions) -> Result<CauchyCpResult> {
    if data.n_events() == 0 {
        return Err(Error::NoEvents);
    }
    let mut warnings = Vec::new();
    let mut note = |msg: String| {
        warn!("{msg}");
        warnings.push(msg);
    };

    let data = drop_constant_covariates(data, &mut note)?;
    let requested = opts.changepoints.resolve(&data)?;
    if let Some(w) = &opts.weights {
        if w.len() != requested.len() {
            return Err(Error::invalid(format!(
                "{} weights given for {} change points",
                w.len(),
                requested.len()
            )));
        }
    }

    let last_event = data
        .records()
        .iter()
        .filter(|r| r.event)
        .map(|r| r.time)
        .fold(f64::NEG_INFINITY, f64::max);
    let first_event = data
        .records()
        .iter()
        .filter(|r| r.event)
        .map(|r| r.time)
        .fold(f64::INFINITY, f64::min);

    let mut points: Vec<(f64, f64)> = Vec::new();
    for (k, &t) in requested.iter().enumerate() {
        let w = opts.weights.as_ref().map_or(1.0, |w| w[k]);
        if points.iter().any(|(s, _)| *s == t) {
            note(format!("duplicate change point {t} ignored"));
        } else if t > 0.0 && t >= last_event {
            note(format!("change point {t} is at or beyond the last event time {last_event}; dropped"));
        } else if t > 0.0 && t < first_event {
            note(format!("change point {t} precedes the first event time {first_event}; dropped"));
        } else {
            points.push((t, w));
        }
    }
    if points.is_empty() {
        return Err(Error::FitFailure("no usable change points".into()));
    }

    // splitting leaves the covariate-only likelihood unchanged, so one null fit serves all points
    let null_loglik = if data.n_covariates() == 0 {
        None
    } else {
        Some(fit_cox(&split_at_changepoint(&data, 0.0)?.null_design(), &opts.fit)?.loglik)
    };

    let fits: Vec<Result<PointResult>> =
        points.par_iter().map(|&(t, _)| fit_point(&data, t, null_loglik, &opts.fit)).collect();

    let mut per_point = Vec::new();
    let mut weights = Vec::new();
    let mut failures = Vec::new();
    for ((t, w), fit) in points.iter().zip(fits) {
        match fit {
            Ok(pr) => {
                if !pr.converged {
                    note(format!("change point {t}: monotone likelihood, coefficients capped"));
                }
                per_point.push(pr);
                weights.push(*w);
            }
            Err(e) => {
                note(format!("change point {t} dropped: {e}"));
                failures.push(format!("t = {t}: {e}"));
            }
        }
    }
    if per_point.is_empty() {
        return Err(Error::FitFailure(failures.join("; ")));
    }

    let pvals: Vec<f64> = per_point.iter().map(|r| r.p).collect();
    let p_value = cauchy_combine(&pvals, opts.weights.as_ref().map(|_| weights.as_slice()))?;
    let most_informative = argmin_p(&per_point);
    Ok(CauchyCpResult { p_value, per_point, most_informative, warnings })
}

fn argmin_p(points: &[PointResult]) -> usize {
    let mut best = 0;
    for (i, r) in points.iter().enumerate().skip(1) {
        let b = &points[best];
        if r.p < b.p || (r.p == b.p && r.t < b.t) {
            best = i;
        }
    }
    best
}

fn fit_point(data: &Dataset, t: f64, null_loglik: Option<f64>, opts: &FitOptions) -> Result<PointResult> {
    let episodes = split_at_changepoint(data, t)?;
    let design: CoxData = episodes.full_design();
    let fit = fit_cox(&design, opts)?;
    let df = if episodes.is_split() { 2 } else { 1 };
    let null = null_loglik.unwrap_or(fit.loglik_null);
    let lrt = likelihood_ratio_test(&fit, null, df)?;
    let hr_early = fit.beta[0].exp();
    let hr_late = if episodes.is_split() { fit.beta[1].exp() } else { hr_early };
    Ok(PointResult { t, p: lrt.p_value, hr_early, hr_late, df, statistic: lrt.statistic, converged: fit.converged })
}

fn drop_constant_covariates(data: &Dataset, note: &mut impl FnMut(String)) -> Result<Dataset> {
    let k = data.n_covariates();
    if k == 0 {
        return Ok(data.clone());
    }
    let recs = data.records();
    let keep: Vec<usize> = (0..k)
        .filter(|&j| {
            let first = recs[0].covariates[j];
            let varies = recs.iter().any(|r| r.covariates[j] != first);
            if !varies {
                note(format!("covariate `{}` is constant and was dropped", data.covariate_names()[j]));
            }
            varies
        })
        .collect();
    if keep.len() == k {
        return Ok(data.clone());
    }
    let records = recs
        .iter()
        .map(|r| r.clone().with_covariates(keep.iter().map(|&j| r.covariates[j]).collect()))
        .collect();
    let names = keep.iter().map(|&j| data.covariate_names()[j].clone()).collect();
    Dataset::with_names(records, names)
}
