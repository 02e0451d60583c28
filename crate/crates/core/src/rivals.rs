//! Comparator two-sample tests: Fleming–Harrington weighted logrank, MaxCombo,
//! RMST difference and the Pepe–Fleming weighted Kaplan–Meier test.
//!
//! Arms are taken from [`Dataset::arms`]; every statistic is oriented as
//! treatment minus control and every p-value is two-sided.

use std::collections::BTreeMap;
use std::sync::Once;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numstats::{cholesky, mvn_rect_prob, two_sided_p, CorrMatrix, Matrix, RngStream};
use crate::survdata::{km_table, Dataset, SubjectRecord};

/// Generic test outcome shared by the comparator methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub method: String,
    pub statistic: f64,
    pub p_value: f64,
    #[serde(default)]
    pub estimates: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WlrStat {
    pub rho: f64,
    pub gamma: f64,
    pub numerator: f64,
    pub variance: f64,
    pub z: f64,
}

impl WlrStat {
    pub fn p_value(&self) -> f64 {
        two_sided_p(self.z)
    }
}

/// FH(ρ, γ) pairs in MaxCombo order.
pub const MAXCOMBO_WEIGHTS: [(f64, f64); 4] = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxComboResult {
    pub z_vector: [f64; 4],
    pub corr: Matrix,
    pub p_value: f64,
    /// Shrinkage toward the identity applied to `corr` before integration.
    pub regularization: f64,
}

impl MaxComboResult {
    pub fn to_test_result(&self) -> TestResult {
        let stat = self.z_vector.iter().fold(0.0f64, |m, z| m.max(z.abs()));
        let mut est = BTreeMap::new();
        for (k, &(r, g)) in MAXCOMBO_WEIGHTS.iter().enumerate() {
            est.insert(format!("z_fh{}{}", r as u8, g as u8), self.z_vector[k]);
        }
        est.insert("regularization".into(), self.regularization);
        TestResult { method: "maxcombo".into(), statistic: stat, p_value: self.p_value, estimates: est }
    }
}

/// Per distinct event time: pooled KM left limit, observed minus expected in the
/// treatment arm, and hypergeometric variance.
struct LogrankTable {
    s_left: Vec<f64>,
    o_minus_e: Vec<f64>,
    var: Vec<f64>,
}

fn two_arms(data: &Dataset) -> Result<(Vec<&SubjectRecord>, Vec<&SubjectRecord>)> {
    let (ctl, trt) = data.arms()?;
    if ctl.is_empty() || trt.is_empty() {
        return Err(Error::invalid("two-sample test needs both arms"));
    }
    Ok((ctl, trt))
}

fn logrank_table(data: &Dataset) -> Result<LogrankTable> {
    let (ctl, trt) = two_arms(data)?;
    let mut obs: Vec<(f64, bool, bool)> = trt
        .iter()
        .map(|r| (r.time, r.event, true))
        .chain(ctl.iter().map(|r| (r.time, r.event, false)))
        .collect();
    obs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut n = obs.len() as f64;
    let mut n1 = trt.len() as f64;
    let mut s = 1.0;
    let mut table = LogrankTable { s_left: vec![], o_minus_e: vec![], var: vec![] };
    let mut i = 0;
    while i < obs.len() {
        let t = obs[i].0;
        let (mut d, mut d1, mut leave, mut leave1) = (0.0, 0.0, 0.0, 0.0);
        while i < obs.len() && obs[i].0 == t {
            let (_, e, treated) = obs[i];
            leave += 1.0;
            if treated {
                leave1 += 1.0;
            }
            if e {
                d += 1.0;
                if treated {
                    d1 += 1.0;
                }
            }
            i += 1;
        }
        if d > 0.0 {
            let p1 = n1 / n;
            let v = if n > 1.0 { d * p1 * (1.0 - p1) * (n - d) / (n - 1.0) } else { 0.0 };
            table.s_left.push(s);
            table.o_minus_e.push(d1 - d * p1);
            table.var.push(v);
            s *= 1.0 - d / n;
        }
        n -= leave;
        n1 -= leave1;
    }
    if table.s_left.is_empty() {
        return Err(Error::NoEvents);
    }
    Ok(table)
}

fn fh_weight(s: f64, rho: f64, gamma: f64) -> f64 {
    // 0^0 = 1 so FH(0, 0) is the plain logrank
    let a = if rho == 0.0 { 1.0 } else { s.powf(rho) };
    let b = if gamma == 0.0 { 1.0 } else { (1.0 - s).powf(gamma) };
    a * b
}

fn wlr_from_table(t: &LogrankTable, rho: f64, gamma: f64) -> WlrStat {
    let mut num = 0.0;
    let mut var = 0.0;
    for k in 0..t.s_left.len() {
        let w = fh_weight(t.s_left[k], rho, gamma);
        num += w * t.o_minus_e[k];
        var += w * w * t.var[k];
    }
    let z = if var > 0.0 { num / var.sqrt() } else { 0.0 };
    WlrStat { rho, gamma, numerator: num, variance: var, z }
}

/// Fleming–Harrington weighted logrank with weight `Ŝ(t−)^ρ (1 − Ŝ(t−))^γ`.
pub fn weighted_logrank(data: &Dataset, rho: f64, gamma: f64) -> Result<WlrStat> {
    if !(rho >= 0.0 && gamma >= 0.0 && rho.is_finite() && gamma.is_finite()) {
        return Err(Error::invalid("FH exponents must be finite and nonnegative"));
    }
    Ok(wlr_from_table(&logrank_table(data)?, rho, gamma))
}

pub fn logrank_test(data: &Dataset) -> Result<TestResult> {
    let w = weighted_logrank(data, 0.0, 0.0)?;
    let mut est = BTreeMap::new();
    est.insert("o_minus_e".into(), w.numerator);
    est.insert("variance".into(), w.variance);
    Ok(TestResult { method: "logrank".into(), statistic: w.z, p_value: w.p_value(), estimates: est })
}

static REGULARIZATION_NOTICE: Once = Once::new();

/// Max-|z| combination of FH(0,0), FH(1,0), FH(1,1), FH(0,1).
pub fn maxcombo(data: &Dataset, seed: RngStream) -> Result<MaxComboResult> {
    let table = logrank_table(data)?;
    if table.s_left.len() < 2 && table.var.iter().sum::<f64>() <= 0.0 {
        return Err(Error::invalid("MaxCombo needs at least two informative event times"));
    }
    let stats: Vec<WlrStat> = MAXCOMBO_WEIGHTS.iter().map(|&(r, g)| wlr_from_table(&table, r, g)).collect();
    let z_vector = [stats[0].z, stats[1].z, stats[2].z, stats[3].z];

    let mut corr = Matrix::zeros(4);
    for j in 0..4 {
        for k in 0..4 {
            let (rj, gj) = MAXCOMBO_WEIGHTS[j];
            let (rk, gk) = MAXCOMBO_WEIGHTS[k];
            let c: f64 = (0..table.var.len())
                .map(|i| fh_weight(table.s_left[i], rj, gj) * fh_weight(table.s_left[i], rk, gk) * table.var[i])
                .sum();
            let denom = (stats[j].variance * stats[k].variance).sqrt();
            corr[(j, k)] = if j == k { 1.0 } else if denom > 0.0 { c / denom } else { 0.0 };
        }
    }

    // components with no information cannot contribute to the maximum
    let live: Vec<usize> = (0..4).filter(|&j| stats[j].variance > 0.0).collect();
    if live.is_empty() {
        return Err(Error::invalid("all weighted logrank variances are zero"));
    }
    let m = live.iter().fold(0.0f64, |a, &j| a.max(z_vector[j].abs()));

    let mut sub = Matrix::zeros(live.len());
    for (a, &j) in live.iter().enumerate() {
        for (b, &k) in live.iter().enumerate() {
            sub[(a, b)] = corr[(j, k)];
        }
    }
    let mut regularization = 0.0;
    if cholesky(&sub).is_err() {
        let mut fixed = None;
        for lam in [1e-8, 1e-6, 1e-4] {
            let shrunk = shrink(&sub, lam);
            if cholesky(&shrunk).is_ok() {
                fixed = Some((lam, shrunk));
                break;
            }
        }
        let (lam, shrunk) =
            fixed.ok_or_else(|| Error::invalid("FH correlation matrix not positive definite after shrinkage"))?;
        REGULARIZATION_NOTICE.call_once(|| {
            warn!("FH correlation matrix is singular; shrinking toward the identity by {lam:e}");
        });
        regularization = lam;
        sub = shrunk;
    }

    let p_value = if m == 0.0 {
        1.0
    } else {
        let lo = vec![-m; live.len()];
        let hi = vec![m; live.len()];
        let inside = mvn_rect_prob(&lo, &hi, &CorrMatrix::new(sub)?, seed)?;
        (1.0 - inside).clamp(0.0, 1.0)
    };
    Ok(MaxComboResult { z_vector, corr, p_value, regularization })
}

fn shrink(m: &Matrix, lam: f64) -> Matrix {
    let n = m.dim();
    let mut out = m.scaled(1.0 - lam);
    for i in 0..n {
        out[(i, i)] = 1.0;
    }
    out
}

/// Restricted mean survival time of one arm up to `tau` with its variance.
fn rmst_arm(arm: &[&SubjectRecord], tau: f64) -> (f64, f64) {
    let times: Vec<f64> = arm.iter().map(|r| r.time).collect();
    let events: Vec<bool> = arm.iter().map(|r| r.event).collect();
    let km = km_table(&times, &events);
    // knots: 0, event times < tau, tau; S constant on each piece
    let mut knots = vec![0.0];
    let mut idx = Vec::new();
    for (k, &t) in km.times.iter().enumerate() {
        if t < tau {
            knots.push(t);
            idx.push(k);
        }
    }
    knots.push(tau);
    let mut s_piece = vec![1.0];
    s_piece.extend(idx.iter().map(|&k| km.surv[k]));
    let areas: Vec<f64> = (0..s_piece.len()).map(|j| s_piece[j] * (knots[j + 1] - knots[j])).collect();
    let total: f64 = areas.iter().sum();

    let mut var = 0.0;
    let mut tail = total;
    for (pos, &k) in idx.iter().enumerate() {
        // A = ∫_{t_k}^{tau} S, the area after this jump
        tail -= areas[pos];
        let (n, d) = (km.at_risk[k], km.events[k]);
        if n > d {
            var += tail * tail * d / (n * (n - d));
        }
    }
    (total, var)
}

/// Difference in restricted mean survival (treatment − control). `tau` defaults to
/// the smaller of the two arms' largest observed times.
pub fn rmst_test(data: &Dataset, tau: Option<f64>) -> Result<TestResult> {
    let (ctl, trt) = two_arms(data)?;
    let max_of = |a: &[&SubjectRecord]| a.iter().map(|r| r.time).fold(f64::NEG_INFINITY, f64::max);
    let limit = max_of(&ctl).min(max_of(&trt));
    let tau = tau.unwrap_or(limit);
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::invalid(format!("tau must be positive, got {tau}")));
    }
    if tau > limit {
        return Err(Error::invalid(format!("tau {tau} exceeds the largest observed time {limit} of an arm")));
    }
    let (r1, v1) = rmst_arm(&trt, tau);
    let (r0, v0) = rmst_arm(&ctl, tau);
    let diff = r1 - r0;
    let se = (v1 + v0).sqrt();
    let z = if se > 0.0 { diff / se } else { 0.0 };
    let mut est = BTreeMap::new();
    est.insert("tau".into(), tau);
    est.insert("rmst_treatment".into(), r1);
    est.insert("rmst_control".into(), r0);
    est.insert("difference".into(), diff);
    est.insert("se".into(), se);
    Ok(TestResult { method: "rmst".into(), statistic: z, p_value: two_sided_p(z), estimates: est })
}

/// Pepe–Fleming weighted Kaplan–Meier test.
pub fn wkm_test(data: &Dataset) -> Result<TestResult> {
    let (ctl, trt) = two_arms(data)?;
    if data.n_events() == 0 {
        return Err(Error::NoEvents);
    }
    let n1 = trt.len() as f64;
    let n0 = ctl.len() as f64;
    let n = n1 + n0;
    let split = |a: &[&SubjectRecord]| -> (Vec<f64>, Vec<bool>, Vec<bool>) {
        (a.iter().map(|r| r.time).collect(), a.iter().map(|r| r.event).collect(), a.iter().map(|r| !r.event).collect())
    };
    let (t1, e1, c1) = split(&trt);
    let (t0, e0, c0) = split(&ctl);
    let s1 = km_table(&t1, &e1);
    let s0 = km_table(&t0, &e0);
    let g1 = km_table(&t1, &c1);
    let g0 = km_table(&t0, &c0);
    let all_t: Vec<f64> = t1.iter().chain(&t0).copied().collect();
    let all_e: Vec<bool> = e1.iter().chain(&e0).copied().collect();
    let pooled = km_table(&all_t, &all_e);

    let max1 = t1.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let max0 = t0.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let end = max1.min(max0);

    let weight = |c1: f64, c0: f64| {
        let den = (n1 / n) * c1 + (n0 / n) * c0;
        if den > 0.0 {
            c1 * c0 / den
        } else {
            0.0
        }
    };

    // every function involved is constant between consecutive observed times
    let mut grid: Vec<f64> = all_t.iter().copied().filter(|&t| t < end).collect();
    grid.push(0.0);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid.push(end);

    let pieces = grid.len() - 1;
    let mut integral = 0.0;
    let mut ws = vec![0.0; pieces];
    for j in 0..pieces {
        let a = grid[j];
        let len = grid[j + 1] - a;
        let w = weight(g1.at(a), g0.at(a));
        integral += w * (s1.at(a) - s0.at(a)) * len;
        ws[j] = w * pooled.at(a) * len;
    }
    let statistic_raw = (n1 * n0 / n).sqrt() * integral;

    // variance: ∫ A(t)² dΛ(t) / (S(t−) ŵ(t)), A(t) = ∫_t^end ŵ S du
    let mut suffix = vec![0.0; pieces + 1];
    for j in (0..pieces).rev() {
        suffix[j] = suffix[j + 1] + ws[j];
    }
    let mut var = 0.0;
    for (k, &t) in pooled.times.iter().enumerate() {
        if t >= end {
            break;
        }
        let j = grid.partition_point(|&g| g < t);
        let a = suffix[j];
        let w = weight(g1.left_limit(t), g0.left_limit(t));
        let s_left = pooled.left_limit(t);
        if w > 0.0 && s_left > 0.0 {
            var += a * a * (pooled.events[k] / pooled.at_risk[k]) / (s_left * w);
        }
    }
    let se = var.sqrt();
    let z = if se > 0.0 { statistic_raw / se } else { 0.0 };
    let mut est = BTreeMap::new();
    est.insert("integral".into(), integral);
    est.insert("statistic".into(), statistic_raw);
    est.insert("se".into(), se);
    est.insert("end".into(), end);
    Ok(TestResult { method: "wkm".into(), statistic: z, p_value: two_sided_p(z), estimates: est })
}
