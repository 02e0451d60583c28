//! Cox partial likelihood on counting-process data, Newton–Raphson fitting and
//! likelihood-ratio tests.

mod likelihood;

pub use likelihood::{partial_loglik, LikEval};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numstats::{cholesky, chisq_sf, solve_factored, Matrix};

/// Handling of tied event times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TieMethod {
    #[default]
    Efron,
    Breslow,
}

/// Counting-process design: `(start, stop]` intervals, event flags at `stop`, and a
/// row-major covariate matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CoxData {
    pub(crate) start: Vec<f64>,
    pub(crate) stop: Vec<f64>,
    pub(crate) event: Vec<bool>,
    pub(crate) x: Vec<f64>,
    pub(crate) names: Vec<String>,
    /// Row indices by descending stop and descending start.
    pub(crate) by_stop: Vec<usize>,
    pub(crate) by_start: Vec<usize>,
    /// Column-centred copy of `x`.
    pub(crate) xc: Vec<f64>,
}

impl CoxData {
    pub fn new(
        start: Vec<f64>,
        stop: Vec<f64>,
        event: Vec<bool>,
        x: Vec<f64>,
        names: Vec<String>,
    ) -> Result<Self> {
        let n = stop.len();
        if start.len() != n || event.len() != n || x.len() != n * names.len() {
            return Err(Error::invalid("counting-process columns have inconsistent lengths"));
        }
        for i in 0..n {
            if !(start[i].is_finite() && stop[i].is_finite()) || start[i] < 0.0 || start[i] >= stop[i] {
                return Err(Error::InvalidRecord {
                    index: i,
                    reason: format!("interval ({}, {}] is not a valid risk interval", start[i], stop[i]),
                });
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("design matrix contains non-finite values"));
        }
        Ok(Self::new_unchecked(start, stop, event, x, names))
    }

    pub(crate) fn new_unchecked(
        start: Vec<f64>,
        stop: Vec<f64>,
        event: Vec<bool>,
        x: Vec<f64>,
        names: Vec<String>,
    ) -> Self {
        let descending = |key: &[f64]| {
            let mut idx: Vec<usize> = (0..key.len()).collect();
            idx.sort_by(|&a, &b| key[b].total_cmp(&key[a]));
            idx
        };
        let by_stop = descending(&stop);
        let by_start = descending(&start);
        let n = stop.len();
        let p = names.len();
        let mut mean = vec![0.0; p];
        for row in x.chunks(p.max(1)).take(n) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v / n as f64;
            }
        }
        let xc = x.iter().enumerate().map(|(k, v)| v - mean[k % p]).collect();
        Self { start, stop, event, x, names, by_stop, by_start, xc }
    }

    /// Right-censored data with a single entry time of zero.
    pub fn right_censored(time: &[f64], event: &[bool], columns: &[Vec<f64>], names: Vec<String>) -> Result<Self> {
        let n = time.len();
        let p = columns.len();
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::invalid("covariate column length does not match times"));
        }
        let mut x = Vec::with_capacity(n * p);
        for i in 0..n {
            for c in columns {
                x.push(c[i]);
            }
        }
        Self::new(vec![0.0; n], time.to_vec(), event.to_vec(), x, names)
    }

    pub fn n_rows(&self) -> usize {
        self.stop.len()
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_events(&self) -> usize {
        self.event.iter().filter(|e| **e).count()
    }

    /// Copy keeping only the listed columns.
    pub fn select_columns(&self, keep: &[usize]) -> Self {
        let p = self.n_cols();
        let mut x = Vec::with_capacity(self.n_rows() * keep.len());
        for row in self.x.chunks(p.max(1)).take(self.n_rows()) {
            for &k in keep {
                x.push(row[k]);
            }
        }
        let names = keep.iter().map(|&k| self.names[k].clone()).collect();
        Self::new_unchecked(self.start.clone(), self.stop.clone(), self.event.clone(), x, names)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Relative change in log-likelihood at which iteration stops.
    pub tolerance: f64,
    pub max_iter: usize,
    pub ties: TieMethod,
    /// Coefficients are clipped to `[-beta_cap, beta_cap]` (monotone likelihood guard).
    pub beta_cap: f64,
    pub max_halvings: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { tolerance: 1e-9, max_iter: 50, ties: TieMethod::Efron, beta_cap: 15.0, max_halvings: 20 }
    }
}

/// Fitted Cox model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxFit {
    pub names: Vec<String>,
    pub beta: Vec<f64>,
    pub loglik: f64,
    /// Log-likelihood of the comparison model. [`fit_cox`] sets it to the value at
    /// `beta = 0`; [`fit_nested`] replaces it with the profiled reduced-model fit.
    pub loglik_null: f64,
    pub score: Vec<f64>,
    pub hessian: Matrix,
    pub iterations: usize,
    pub converged: bool,
    /// Some coefficient reached the cap: the likelihood is monotone in that direction.
    pub monotone: bool,
}

impl CoxFit {
    pub fn hazard_ratios(&self) -> Vec<f64> {
        self.beta.iter().map(|b| b.exp()).collect()
    }
}

/// Newton–Raphson with step halving, started at zero.
pub fn fit_cox(data: &CoxData, opts: &FitOptions) -> Result<CoxFit> {
    let p = data.n_cols();
    let mut beta = vec![0.0; p];
    let mut cur = partial_loglik(data, &beta, opts.ties)?;
    let loglik_zero = cur.value;
    if p == 0 {
        return Ok(CoxFit {
            names: vec![],
            beta,
            loglik: cur.value,
            loglik_null: cur.value,
            score: vec![],
            hessian: Matrix::zeros(0),
            iterations: 0,
            converged: true,
            monotone: false,
        });
    }

    if let Err(Error::NotPositiveDefinite { pivot }) = cholesky(&cur.hessian.scaled(-1.0)) {
        return Err(Error::RankDeficient { column: data.names[pivot].clone() });
    }

    let mut converged = false;
    let mut monotone = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let info = cur.hessian.scaled(-1.0);
        let l = match cholesky(&info) {
            Ok(l) => l,
            Err(_) => {
                // information collapsed along a diverging direction
                monotone = true;
                break;
            }
        };
        let step = solve_factored(&l, &cur.gradient);
        let decrement: f64 = step.iter().zip(&cur.gradient).map(|(s, g)| s * g).sum();

        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let cand: Vec<f64> = beta
                .iter()
                .zip(&step)
                .map(|(b, s)| (b + scale * s).clamp(-opts.beta_cap, opts.beta_cap))
                .collect();
            let ev = partial_loglik(data, &cand, opts.ties)?;
            if ev.value.is_finite() && ev.value >= cur.value - 1e-12 * cur.value.abs().max(1.0) {
                accepted = Some((cand, ev));
                break;
            }
            scale *= 0.5;
        }
        let Some((cand, ev)) = accepted else {
            // no ascent along the Newton direction: already at the optimum numerically
            converged = decrement.abs() < 1e-8;
            break;
        };
        let change = (ev.value - cur.value).abs() / cur.value.abs().max(1e-300);
        beta = cand;
        cur = ev;
        if beta.iter().any(|b| b.abs() >= opts.beta_cap) {
            monotone = true;
            break;
        }
        if change < opts.tolerance && decrement < 1e-6 {
            converged = true;
            break;
        }
    }
    if monotone {
        warn!(
            "monotone partial likelihood: coefficients capped at ±{} ({})",
            opts.beta_cap,
            data.names.join(",")
        );
        converged = false;
    }
    Ok(CoxFit {
        names: data.names.clone(),
        beta,
        loglik: cur.value,
        loglik_null: loglik_zero,
        score: cur.gradient,
        hessian: cur.hessian,
        iterations,
        converged,
        monotone,
    })
}

/// Fits the full model and the reduced model without the `tested` columns, storing
/// the reduced maximum in `loglik_null`.
pub fn fit_nested(data: &CoxData, tested: &[usize], opts: &FitOptions) -> Result<CoxFit> {
    let mut full = fit_cox(data, opts)?;
    let keep: Vec<usize> = (0..data.n_cols()).filter(|c| !tested.contains(c)).collect();
    let reduced = fit_cox(&data.select_columns(&keep), opts)?;
    full.loglik_null = reduced.loglik;
    Ok(full)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrtResult {
    pub statistic: f64,
    pub df: u32,
    pub p_value: f64,
}

pub fn likelihood_ratio_test(full: &CoxFit, null_loglik: f64, df: u32) -> Result<LrtResult> {
    if df == 0 {
        return Err(Error::invalid("likelihood-ratio degrees of freedom must be positive"));
    }
    let raw = 2.0 * (full.loglik - null_loglik);
    if raw < -1e-6 * (1.0 + null_loglik.abs()) {
        warn!("full model log-likelihood {} below null {}", full.loglik, null_loglik);
    }
    let statistic = raw.max(0.0);
    Ok(LrtResult { statistic, df, p_value: chisq_sf(statistic, df)? })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let mut c = b - g * (b - a);
        let mut d = a + g * (b - a);
        while (b - a).abs() > 1e-12 {
            if f(c) > f(d) {
                b = d;
            } else {
                a = c;
            }
            c = b - g * (b - a);
            d = a + g * (b - a);
        }
        0.5 * (a + b)
    }

    fn fixture10() -> CoxData {
        let time = [2.0, 3.0, 3.0, 5.0, 6.0, 7.0, 9.0, 10.0, 12.0, 15.0];
        let event = [true, true, false, true, true, false, true, true, false, true];
        let x = vec![0.5, 1.2, -0.3, 0.8, -1.0, 0.1, -0.4, 1.5, -0.9, 0.0];
        CoxData::right_censored(&time, &event, &[x], vec!["x".into()]).unwrap()
    }

    #[test]
    fn one_parameter_fit_matches_golden_section() {
        let d = fixture10();
        let fit = fit_cox(&d, &FitOptions::default()).unwrap();
        assert!(fit.converged);
        let oracle = golden_max(|b| partial_loglik(&d, &[b], TieMethod::Efron).unwrap().value, -10.0, 10.0);
        assert!((fit.beta[0] - oracle).abs() < 1e-6, "{} vs {oracle}", fit.beta[0]);
    }

    #[test]
    fn lrt_closed_forms() {
        let mut fit = fit_cox(&fixture10(), &FitOptions::default()).unwrap();
        fit.loglik = -10.0;
        let r = likelihood_ratio_test(&fit, -10.0, 3).unwrap();
        assert_eq!(r.p_value, 1.0);
        fit.loglik = -10.0 + 5.991464547107979 / 2.0;
        let r = likelihood_ratio_test(&fit, -10.0, 2).unwrap();
        assert!((r.p_value - 0.05).abs() < 1e-12);
        fit.loglik = -10.0 + 3.841458820694124 / 2.0;
        let r = likelihood_ratio_test(&fit, -10.0, 1).unwrap();
        let oracle = 2.0 * crate::numstats::norm_cdf(-(3.841458820694124f64).sqrt());
        assert!((r.p_value - oracle).abs() < 1e-12 && (r.p_value - 0.05).abs() < 1e-9);
        assert!(likelihood_ratio_test(&fit, -10.0, 0).is_err());
    }

    #[test]
    fn rank_deficiency_names_column() {
        let time = [1.0, 2.0, 3.0, 4.0];
        let event = [true, true, true, false];
        let a = vec![1.0, 0.0, 1.0, 0.0];
        let b = vec![2.0, 2.0, 2.0, 2.0];
        let d = CoxData::right_censored(&time, &event, &[a, b], vec!["a".into(), "const".into()]).unwrap();
        match fit_cox(&d, &FitOptions::default()) {
            Err(Error::RankDeficient { column }) => assert_eq!(column, "const"),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn monotone_likelihood_is_capped() {
        // every event in the x = 1 group before any x = 0 event
        let time = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let event = [true; 6];
        let x = vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0];
        let d = CoxData::right_censored(&time, &event, &[x], vec!["x".into()]).unwrap();
        let fit = fit_cox(&d, &FitOptions::default()).unwrap();
        assert!(!fit.converged);
        assert!(fit.monotone);
        assert!(fit.beta[0] > 0.0 && fit.beta[0] <= 15.0);
        assert!(fit.loglik > fit.loglik_null);
    }

    #[test]
    fn empty_model() {
        let time = [1.0, 2.0];
        let d = CoxData::right_censored(&time, &[true, true], &[], vec![]).unwrap();
        let fit = fit_cox(&d, &FitOptions::default()).unwrap();
        assert!((fit.loglik + 2f64.ln()).abs() < 1e-15);
    }
}
