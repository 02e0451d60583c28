use super::{StepFunction, SubjectRecord};
use crate::error::{Error, Result};

/// Product-limit table at the distinct event times.
#[derive(Debug, Clone, PartialEq)]
pub struct KmTable {
    pub times: Vec<f64>,
    pub at_risk: Vec<f64>,
    pub events: Vec<f64>,
    /// Ŝ just after each time in `times`.
    pub surv: Vec<f64>,
}

impl KmTable {
    pub fn to_step(&self) -> StepFunction {
        let mut values = Vec::with_capacity(self.surv.len() + 1);
        values.push(1.0);
        values.extend_from_slice(&self.surv);
        StepFunction::new(self.times.clone(), values).expect("event times are strictly increasing")
    }

    /// Ŝ(t), right-continuous.
    pub fn at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            1.0
        } else {
            self.surv[k - 1]
        }
    }

    /// Ŝ(t−).
    pub fn left_limit(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s < t);
        if k == 0 {
            1.0
        } else {
            self.surv[k - 1]
        }
    }
}

/// Product-limit estimator over raw `(time, event)` pairs. Pass inverted flags for
/// the censoring distribution.
pub fn km_table(times: &[f64], events: &[bool]) -> KmTable {
    let mut idx: Vec<usize> = (0..times.len()).collect();
    idx.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let mut out = KmTable { times: vec![], at_risk: vec![], events: vec![], surv: vec![] };
    let mut s = 1.0;
    let mut remaining = times.len();
    let mut i = 0;
    while i < idx.len() {
        let t = times[idx[i]];
        let mut j = i;
        let mut d = 0usize;
        while j < idx.len() && times[idx[j]] == t {
            if events[idx[j]] {
                d += 1;
            }
            j += 1;
        }
        if d > 0 {
            s *= 1.0 - d as f64 / remaining as f64;
            out.times.push(t);
            out.at_risk.push(remaining as f64);
            out.events.push(d as f64);
            out.surv.push(s);
        }
        remaining -= j - i;
        i = j;
    }
    out
}

pub fn kaplan_meier(records: &[SubjectRecord]) -> Result<StepFunction> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let times: Vec<f64> = records.iter().map(|r| r.time).collect();
    let events: Vec<bool> = records.iter().map(|r| r.event).collect();
    Ok(km_table(&times, &events).to_step())
}
