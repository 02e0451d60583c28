//! Type-I error, power, timing and many-marker studies.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cauchycp::{cauchycp_test, ChangePointSpec};
use crate::coxfit::{fit_cox, likelihood_ratio_test, FitOptions};
use crate::error::{Error, Result};
use crate::numstats::{chisq1_upper_quantile, exp1, stable_hash, RngStream};
use crate::rivals::{logrank_test, maxcombo, rmst_test, wkm_test, TestResult};
use crate::simgen::{simulate_trial, HrConfig, ScenarioSpec};
use crate::survdata::{interpolated_quantile, split_at_changepoint, Dataset, SubjectRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    CauchyCp,
    MaxCombo,
    Rmst,
    Wkm,
    CoxPh,
    Logrank,
}

impl Method {
    pub const ALL: [Method; 6] =
        [Method::CauchyCp, Method::MaxCombo, Method::Rmst, Method::Wkm, Method::CoxPh, Method::Logrank];

    /// The type-I comparison set.
    pub const TYPE1: [Method; 4] = [Method::CauchyCp, Method::MaxCombo, Method::Rmst, Method::Wkm];

    /// The power comparison set, with Cox PH as benchmark.
    pub const POWER: [Method; 5] = [Method::CauchyCp, Method::MaxCombo, Method::Rmst, Method::Wkm, Method::CoxPh];

    pub fn name(self) -> &'static str {
        match self {
            Method::CauchyCp => "cauchycp",
            Method::MaxCombo => "maxcombo",
            Method::Rmst => "rmst",
            Method::Wkm => "wkm",
            Method::CoxPh => "coxph",
            Method::Logrank => "logrank",
        }
    }

    pub fn parse_list(s: &str) -> Result<Vec<Method>> {
        s.split(',').filter(|t| !t.trim().is_empty()).map(|t| t.trim().parse()).collect()
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.iter().copied().find(|m| m.name().eq_ignore_ascii_case(s)).ok_or_else(|| {
            let valid: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
            Error::invalid(format!("unknown method `{s}`; valid methods: {}", valid.join(", ")))
        })
    }
}

/// Tag mixed into a replicate's stream for the MaxCombo integration seed.
const MVN_TAG: u64 = 0x6d76_6e00;

/// Runs one method. `seed` only matters for MaxCombo.
pub fn run_method(method: Method, data: &Dataset, seed: RngStream) -> Result<TestResult> {
    match method {
        Method::CauchyCp => {
            let r = cauchycp_test(data, &ChangePointSpec::Default)?;
            let best = r.best();
            let mut est = std::collections::BTreeMap::new();
            est.insert("best_t".into(), best.t);
            est.insert("best_hr_early".into(), best.hr_early);
            est.insert("best_hr_late".into(), best.hr_late);
            Ok(TestResult { method: method.name().into(), statistic: best.statistic, p_value: r.p_value, estimates: est })
        }
        Method::MaxCombo => Ok(maxcombo(data, seed.derive(MVN_TAG))?.to_test_result()),
        Method::Rmst => rmst_test(data, None),
        Method::Wkm => wkm_test(data),
        Method::Logrank => logrank_test(data),
        Method::CoxPh => {
            let design = split_at_changepoint(data, 0.0)?.full_design();
            let fit = fit_cox(&design, &FitOptions::default())?;
            let lrt = likelihood_ratio_test(&fit, fit.loglik_null, 1)?;
            let mut est = std::collections::BTreeMap::new();
            est.insert("hr".into(), fit.beta[0].exp());
            Ok(TestResult { method: method.name().into(), statistic: lrt.statistic, p_value: lrt.p_value, estimates: est })
        }
    }
}

/// Rejection-rate estimate with its binomial Monte Carlo standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub scenario: String,
    pub n_total: usize,
    pub method: Method,
    pub alpha: f64,
    pub estimate: f64,
    pub mc_se: f64,
    /// Replicates with a usable p-value.
    pub n_reps: usize,
    pub n_failed: usize,
}

impl StudyResult {
    fn new(scenario: String, n_total: usize, method: Method, alpha: f64, pvals: &[Option<f64>]) -> Self {
        let ok: Vec<f64> = pvals.iter().flatten().copied().collect();
        let n = ok.len();
        let rejections = ok.iter().filter(|&&p| p <= alpha).count();
        let estimate = if n == 0 { f64::NAN } else { rejections as f64 / n as f64 };
        let mc_se = (estimate * (1.0 - estimate) / n as f64).sqrt();
        Self { scenario, n_total, method, alpha, estimate, mc_se, n_reps: n, n_failed: pvals.len() - n }
    }

    /// Whether `target` lies within `k` Monte Carlo standard errors of the estimate.
    /// A zero SE (estimate 0 or 1) is replaced by the SE at the target.
    pub fn within(&self, target: f64, k: f64) -> bool {
        let se = if self.mc_se > 0.0 { self.mc_se } else { (target * (1.0 - target) / self.n_reps as f64).sqrt() };
        (self.estimate - target).abs() <= k * se
    }
}

#[derive(Debug, Clone)]
pub struct StudyOptions {
    pub methods: Vec<Method>,
    pub lambda_c: f64,
    pub censor_rate: f64,
    pub allocation: (u32, u32),
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self { methods: Method::TYPE1.to_vec(), lambda_c: 0.1, censor_rate: 0.1, allocation: (1, 1) }
    }
}

/// p-values of every method on every replicate, `out[rep][method]`.
pub fn replicate_pvalues(
    hr: &HrConfig,
    n_total: usize,
    n_reps: usize,
    seed: u64,
    opts: &StudyOptions,
) -> Result<Vec<Vec<Option<f64>>>> {
    let base = scenario_stream(seed, hr, n_total);
    let template = ScenarioSpec {
        n_total,
        allocation: opts.allocation,
        lambda_c: opts.lambda_c,
        hr_profile: crate::simgen::hr_profile(hr)?,
        censor_rate: opts.censor_rate,
        seed: base,
    };
    (0..n_reps as u64)
        .into_par_iter()
        .map(|rep| {
            let stream = base.with_stream(rep);
            let data = simulate_trial(&ScenarioSpec { seed: stream, ..template.clone() })?;
            Ok(opts.methods.iter().map(|&m| run_method(m, &data, stream).ok().map(|r| r.p_value)).collect())
        })
        .collect()
}

fn scenario_stream(seed: u64, hr: &HrConfig, n_total: usize) -> RngStream {
    let key = format!("{}|{}", hr.label(), n_total);
    RngStream::new(seed, 0).derive(stable_hash(key.as_bytes()))
}

fn tabulate(
    label: &str,
    n_total: usize,
    methods: &[Method],
    alphas: &[f64],
    pv: &[Vec<Option<f64>>],
) -> Vec<StudyResult> {
    let mut out = Vec::new();
    for (k, &m) in methods.iter().enumerate() {
        let col: Vec<Option<f64>> = pv.iter().map(|row| row[k]).collect();
        for &a in alphas {
            out.push(StudyResult::new(label.to_string(), n_total, m, a, &col));
        }
    }
    out
}

/// Rejection rates under HR ≡ 1.
pub fn type1_error_study(
    n_list: &[usize],
    alpha_list: &[f64],
    n_reps: usize,
    seed: u64,
    opts: &StudyOptions,
) -> Result<Vec<StudyResult>> {
    let null = HrConfig::null();
    let mut out = Vec::new();
    for &n in n_list {
        let pv = replicate_pvalues(&null, n, n_reps, seed, opts)?;
        out.extend(tabulate("null", n, &opts.methods, alpha_list, &pv));
    }
    Ok(out)
}

pub fn power_study(
    grid: &[HrConfig],
    n_list: &[usize],
    alpha: f64,
    n_reps: usize,
    seed: u64,
    opts: &StudyOptions,
) -> Result<Vec<StudyResult>> {
    let mut out = Vec::new();
    for hr in grid {
        for &n in n_list {
            let pv = replicate_pvalues(hr, n, n_reps, seed, opts)?;
            out.extend(tabulate(&hr.label(), n, &opts.methods, &[alpha], &pv));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingResult {
    pub n_total: usize,
    pub method: Method,
    pub mean_seconds: f64,
    pub sd_seconds: f64,
    pub n_runs: usize,
}

/// Mean wall time per call on null datasets; every method sees the same datasets.
pub fn timing_study(n_list: &[usize], n_runs: usize, methods: &[Method], seed: u64) -> Result<Vec<TimingResult>> {
    if n_runs < 2 {
        return Err(Error::invalid("timing needs at least two runs"));
    }
    let mut out = Vec::new();
    for &n in n_list {
        let base = scenario_stream(seed, &HrConfig::null(), n);
        let data: Vec<Dataset> = (0..n_runs as u64)
            .map(|r| simulate_trial(&ScenarioSpec::standard(n, &HrConfig::null(), base.with_stream(r))?))
            .collect::<Result<_>>()?;
        for &m in methods {
            // warm-up outside the measurement
            let _ = run_method(m, &data[0], base);
            let mut secs = Vec::with_capacity(n_runs);
            for (r, d) in data.iter().enumerate() {
                let t0 = Instant::now();
                let _ = std::hint::black_box(run_method(m, d, base.with_stream(r as u64)));
                secs.push(t0.elapsed().as_secs_f64());
            }
            let mean = secs.iter().sum::<f64>() / n_runs as f64;
            let var = secs.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n_runs - 1) as f64;
            out.push(TimingResult { n_total: n, method: m, mean_seconds: mean, sd_seconds: var.sqrt(), n_runs });
        }
    }
    Ok(out)
}

/// `λ_p = q(pval_p) / q(p)` with `q` the upper χ²₁ quantile and `pval_p` the
/// empirical `p`-quantile of the p-values.
pub fn genomic_inflation(pvals: &[f64], p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("percentile {p} outside (0, 1)")));
    }
    if pvals.is_empty() {
        return Err(Error::invalid("no p-values"));
    }
    let mut sorted = pvals.to_vec();
    sorted.sort_by(f64::total_cmp);
    let observed = interpolated_quantile(&sorted, p);
    Ok(chisq1_upper_quantile(observed) / chisq1_upper_quantile(p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRow {
    pub marker: String,
    pub method: Method,
    pub p_value: Option<f64>,
    pub statistic: Option<f64>,
    /// `ok`, `monomorphic`, or `error: ...`.
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchResult {
    pub rows: Vec<BatchRow>,
    /// `(method, λ_0.5)` over markers that produced a p-value.
    pub inflation: Vec<(Method, f64)>,
}

/// Tests every marker column as the variable of interest against shared outcome
/// data. CauchyCP adjusts for the dataset's covariates; the two-sample methods
/// ignore them.
pub fn batch_test(base: &Dataset, markers: &[(String, Vec<f64>)], methods: &[Method], seed: u64) -> Result<BatchResult> {
    let per_marker: Vec<Vec<BatchRow>> = markers
        .par_iter()
        .map(|(id, x)| -> Result<Vec<BatchRow>> {
            let stream = RngStream::new(seed, stable_hash(id.as_bytes()));
            let first = x.first().copied().unwrap_or(0.0);
            if x.iter().all(|&v| v == first) {
                return Ok(methods
                    .iter()
                    .map(|&m| BatchRow {
                        marker: id.clone(),
                        method: m,
                        p_value: None,
                        statistic: None,
                        status: "monomorphic".into(),
                    })
                    .collect());
            }
            let data = base.with_x(x)?;
            Ok(methods
                .iter()
                .map(|&m| match run_method(m, &data, stream) {
                    Ok(r) => BatchRow {
                        marker: id.clone(),
                        method: m,
                        p_value: Some(r.p_value),
                        statistic: Some(r.statistic),
                        status: "ok".into(),
                    },
                    Err(e) => BatchRow {
                        marker: id.clone(),
                        method: m,
                        p_value: None,
                        statistic: None,
                        status: format!("error: {e}"),
                    },
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let rows: Vec<BatchRow> = per_marker.into_iter().flatten().collect();
    let mut inflation = Vec::new();
    for &m in methods {
        let ps: Vec<f64> = rows.iter().filter(|r| r.method == m).filter_map(|r| r.p_value).collect();
        if !ps.is_empty() {
            inflation.push((m, genomic_inflation(&ps, 0.5)?));
        }
    }
    Ok(BatchResult { rows, inflation })
}

/// Marker matrix CSV: a header of marker ids, one row per subject.
pub fn read_marker_matrix<R: std::io::Read>(reader: R) -> Result<Vec<(String, Vec<f64>)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(reader);
    let ids: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?
        .iter()
        .map(str::to_string)
        .collect();
    if ids.is_empty() || ids.iter().all(|s| s.is_empty()) {
        return Err(Error::EmptyDataset);
    }
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); ids.len()];
    for row in rdr.records() {
        let row = row.map_err(|e| Error::Parse { line: e.position().map_or(0, |p| p.line()), message: e.to_string() })?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != ids.len() {
            return Err(Error::Parse { line, message: format!("expected {} fields, found {}", ids.len(), row.len()) });
        }
        for (k, v) in row.iter().enumerate() {
            cols[k].push(v.parse().map_err(|_| Error::Parse {
                line,
                message: format!("marker `{}`: cannot parse `{v}` as a number", ids[k]),
            })?);
        }
    }
    Ok(ids.into_iter().zip(cols).collect())
}

/// Null marker study: exponential outcomes depending only on `n_cov` standard
/// normal covariates, and Binomial(2, maf) markers independent of everything.
pub fn simulate_marker_study(
    n_subjects: usize,
    n_cov: usize,
    n_markers: usize,
    seed: u64,
) -> Result<(Dataset, Vec<(String, Vec<f64>)>)> {
    let mut rng = RngStream::new(seed, u64::MAX).rng();
    let mut records = Vec::with_capacity(n_subjects);
    for _ in 0..n_subjects {
        let z: Vec<f64> = (0..n_cov).map(|_| normal(&mut rng)).collect();
        let lp: f64 = z.iter().enumerate().map(|(k, v)| 0.3 * v / (k + 1) as f64).sum();
        let t = exp1(&mut rng) / (0.1 * lp.exp());
        let c = exp1(&mut rng) / 0.05;
        records.push(SubjectRecord::new(t.min(c), t <= c, 0.0).with_covariates(z));
    }
    let base = Dataset::new(records)?;
    let markers = (0..n_markers)
        .into_par_iter()
        .map(|k| {
            let id = format!("m{k}");
            let mut r = RngStream::new(seed, stable_hash(id.as_bytes())).rng();
            let maf = 0.05 + 0.45 * r.random::<f64>();
            let x = (0..n_subjects).map(|_| (r.random::<f64>() < maf) as u8 as f64 + (r.random::<f64>() < maf) as u8 as f64).collect();
            (id, x)
        })
        .collect();
    Ok((base, markers))
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    crate::numstats::norm_quantile(crate::numstats::open01(rng))
}

/// Tidy CSV: one row per scenario × N × method × alpha.
pub fn write_study_csv<W: Write>(rows: &[StudyResult], mut w: W) -> Result<()> {
    writeln!(w, "scenario,n_total,method,alpha,estimate,mc_se,n_reps,n_failed")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.scenario, r.n_total, r.method, r.alpha, r.estimate, r.mc_se, r.n_reps, r.n_failed
        )?;
    }
    Ok(())
}

pub fn write_timing_csv<W: Write>(rows: &[TimingResult], mut w: W) -> Result<()> {
    writeln!(w, "n_total,method,mean_seconds,sd_seconds,n_runs")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{}", r.n_total, r.method, r.mean_seconds, r.sd_seconds, r.n_runs)?;
    }
    Ok(())
}

pub fn write_batch_csv<W: Write>(res: &BatchResult, mut w: W) -> Result<()> {
    writeln!(w, "marker,method,p_value,statistic,status")?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for r in &res.rows {
        let status = if r.status.contains([',', '"']) { format!("\"{}\"", r.status.replace('"', "'")) } else { r.status.clone() };
        writeln!(w, "{},{},{},{},{}", r.marker, r.method, opt(r.p_value), opt(r.statistic), status)?;
    }
    Ok(())
}
