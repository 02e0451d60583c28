//! Right-censored survival data: subject records, counting-process episodes,
//! step functions, Kaplan–Meier estimation and event-time percentiles.

mod csvio;
mod km;

pub use csvio::{read_csv, read_csv_from, write_csv, write_csv_to};
pub use km::{kaplan_meier, km_table, KmTable};

use serde::{Deserialize, Serialize};

use crate::coxfit::CoxData;
use crate::error::{Error, Result};

/// One subject: follow-up time, event flag, variable of interest and baseline covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub time: f64,
    pub event: bool,
    pub x: f64,
    #[serde(default)]
    pub covariates: Vec<f64>,
}

impl SubjectRecord {
    pub fn new(time: f64, event: bool, x: f64) -> Self {
        Self { time, event, x, covariates: Vec::new() }
    }

    pub fn with_covariates(mut self, covariates: Vec<f64>) -> Self {
        self.covariates = covariates;
        self
    }
}

/// A validated collection of subject records sharing one covariate layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    records: Vec<SubjectRecord>,
    covariate_names: Vec<String>,
}

impl Dataset {
    pub fn new(records: Vec<SubjectRecord>) -> Result<Self> {
        let p = records.first().map_or(0, |r| r.covariates.len());
        let names = (1..=p).map(|i| format!("z{i}")).collect();
        Self::with_names(records, names)
    }

    pub fn with_names(records: Vec<SubjectRecord>, covariate_names: Vec<String>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let p = covariate_names.len();
        for (index, r) in records.iter().enumerate() {
            if !r.time.is_finite() || r.time < 0.0 {
                return Err(Error::InvalidRecord {
                    index,
                    reason: format!("time must be finite and nonnegative, got {}", r.time),
                });
            }
            if !r.x.is_finite() {
                return Err(Error::InvalidRecord { index, reason: "x is not finite".into() });
            }
            if r.covariates.len() != p {
                return Err(Error::InvalidRecord {
                    index,
                    reason: format!("expected {p} covariates, found {}", r.covariates.len()),
                });
            }
            if r.covariates.iter().any(|z| !z.is_finite()) {
                return Err(Error::InvalidRecord { index, reason: "covariate is not finite".into() });
            }
        }
        Ok(Self { records, covariate_names })
    }

    pub fn records(&self) -> &[SubjectRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn n_events(&self) -> usize {
        self.records.iter().filter(|r| r.event).count()
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.time).collect()
    }

    pub fn events(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.event).collect()
    }

    /// Same subjects with the variable of interest replaced.
    pub fn with_x(&self, x: &[f64]) -> Result<Self> {
        if x.len() != self.len() {
            return Err(Error::invalid(format!(
                "marker has {} values for {} subjects",
                x.len(),
                self.len()
            )));
        }
        let records = self
            .records
            .iter()
            .zip(x)
            .map(|(r, &v)| SubjectRecord { x: v, ..r.clone() })
            .collect();
        Self::with_names(records, self.covariate_names.clone())
    }

    /// Copy with an extra covariate column appended.
    pub fn with_extra_covariate(&self, name: &str, values: &[f64]) -> Result<Self> {
        if values.len() != self.len() {
            return Err(Error::invalid("covariate length does not match dataset"));
        }
        let records = self
            .records
            .iter()
            .zip(values)
            .map(|(r, &v)| {
                let mut r = r.clone();
                r.covariates.push(v);
                r
            })
            .collect();
        let mut names = self.covariate_names.clone();
        names.push(name.to_string());
        Self::with_names(records, names)
    }

    /// Splits the records by the two distinct values of `x`, returning
    /// `(control, treatment)` with the larger value as treatment.
    pub fn arms(&self) -> Result<(Vec<&SubjectRecord>, Vec<&SubjectRecord>)> {
        let mut levels: Vec<f64> = self.records.iter().map(|r| r.x).collect();
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        if levels.len() != 2 {
            return Err(Error::invalid(format!(
                "two-arm comparison needs exactly two distinct x values, found {}",
                levels.len()
            )));
        }
        let hi = levels[1];
        let (trt, ctl): (Vec<_>, Vec<_>) = self.records.iter().partition(|r| r.x == hi);
        Ok((ctl, trt))
    }
}

/// Counting-process row produced by splitting follow-up at a change point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub start: f64,
    pub stop: f64,
    pub event: bool,
    pub x_early: f64,
    pub x_late: f64,
    pub covariates: Vec<f64>,
    pub subject_id: usize,
}

/// Episode rows for one change point. With `change_point == 0` the rows carry the
/// unsplit proportional-hazards design (a single `x` column, stored in `x_early`).
#[derive(Debug, Clone, PartialEq)]
pub struct Episodes {
    pub change_point: f64,
    pub rows: Vec<EpisodeRow>,
    covariate_names: Vec<String>,
}

impl Episodes {
    pub fn is_split(&self) -> bool {
        self.change_point > 0.0
    }

    pub fn total_exposure(&self) -> f64 {
        self.rows.iter().map(|r| r.stop - r.start).sum()
    }

    /// Design for the full model: `[x]` or `[x_early, x_late]`, then the covariates.
    pub fn full_design(&self) -> CoxData {
        let mut names: Vec<String> = if self.is_split() {
            vec!["x_early".into(), "x_late".into()]
        } else {
            vec!["x".into()]
        };
        names.extend(self.covariate_names.iter().cloned());
        let split = self.is_split();
        let mut columns = Vec::with_capacity(self.rows.len() * names.len());
        for r in &self.rows {
            columns.push(r.x_early);
            if split {
                columns.push(r.x_late);
            }
            columns.extend_from_slice(&r.covariates);
        }
        self.design(names, columns)
    }

    /// Design for the null model: covariates only.
    pub fn null_design(&self) -> CoxData {
        let names = self.covariate_names.clone();
        let columns = self.rows.iter().flat_map(|r| r.covariates.iter().copied()).collect();
        self.design(names, columns)
    }

    fn design(&self, names: Vec<String>, columns: Vec<f64>) -> CoxData {
        CoxData::new_unchecked(
            self.rows.iter().map(|r| r.start).collect(),
            self.rows.iter().map(|r| r.stop).collect(),
            self.rows.iter().map(|r| r.event).collect(),
            columns,
            names,
        )
    }
}

/// Splits each subject's follow-up at `t_c`.
///
/// A subject whose time does not exceed `t_c` contributes a single early row; a
/// subject observed past `t_c` contributes `(0, t_c]` and `(t_c, time]`, the event
/// flag sitting on the second row. `t_c == 0` leaves every subject unsplit.
pub fn split_at_changepoint(data: &Dataset, t_c: f64) -> Result<Episodes> {
    if !t_c.is_finite() || t_c < 0.0 {
        return Err(Error::invalid(format!("change point must be finite and >= 0, got {t_c}")));
    }
    let mut rows = Vec::with_capacity(data.len() * 2);
    for (id, r) in data.records().iter().enumerate() {
        if r.time <= 0.0 {
            return Err(Error::InvalidRecord {
                index: id,
                reason: "zero follow-up time gives an empty risk interval".into(),
            });
        }
        if t_c == 0.0 || r.time <= t_c {
            rows.push(EpisodeRow {
                start: 0.0,
                stop: r.time,
                event: r.event,
                x_early: r.x,
                x_late: 0.0,
                covariates: r.covariates.clone(),
                subject_id: id,
            });
        } else {
            rows.push(EpisodeRow {
                start: 0.0,
                stop: t_c,
                event: false,
                x_early: r.x,
                x_late: 0.0,
                covariates: r.covariates.clone(),
                subject_id: id,
            });
            rows.push(EpisodeRow {
                start: t_c,
                stop: r.time,
                event: r.event,
                x_early: 0.0,
                x_late: r.x,
                covariates: r.covariates.clone(),
                subject_id: id,
            });
        }
    }
    Ok(Episodes { change_point: t_c, rows, covariate_names: data.covariate_names().to_vec() })
}

/// Right-continuous piecewise-constant function: `values[i]` on `[cuts[i-1], cuts[i])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    cuts: Vec<f64>,
    values: Vec<f64>,
}

impl StepFunction {
    pub fn new(cuts: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.len() != cuts.len() + 1 {
            return Err(Error::invalid(format!(
                "step function needs {} values for {} cuts, got {}",
                cuts.len() + 1,
                cuts.len(),
                values.len()
            )));
        }
        if cuts.iter().any(|c| !c.is_finite()) || cuts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("step function cuts must be finite and strictly increasing"));
        }
        Ok(Self { cuts, values })
    }

    pub fn constant(value: f64) -> Self {
        Self { cuts: Vec::new(), values: vec![value] }
    }

    pub fn cuts(&self) -> &[f64] {
        &self.cuts
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn piece(&self, t: f64) -> usize {
        self.cuts.partition_point(|&c| c <= t)
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.values[self.piece(t)]
    }

    /// Value just before `t`.
    pub fn left_limit(&self, t: f64) -> f64 {
        self.values[self.cuts.partition_point(|&c| c < t)]
    }
}

/// Empirical quantiles of the uncensored event times, interpolating linearly
/// between order statistics (position `1 + (n - 1) p`).
pub fn event_time_percentiles(data: &Dataset, probs: &[f64]) -> Result<Vec<f64>> {
    let mut ev: Vec<f64> = data.records().iter().filter(|r| r.event).map(|r| r.time).collect();
    if ev.is_empty() {
        return Err(Error::NoEvents);
    }
    if probs.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
        return Err(Error::invalid("percentile probabilities must lie in (0, 1)"));
    }
    if probs.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid("percentile probabilities must be sorted ascending"));
    }
    ev.sort_by(f64::total_cmp);
    Ok(probs.iter().map(|&p| interpolated_quantile(&ev, p)).collect())
}

/// Linear-interpolation quantile of sorted data.
pub(crate) fn interpolated_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
