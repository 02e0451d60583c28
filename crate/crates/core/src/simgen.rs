//! Piecewise-exponential two-arm trial simulation.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numstats::{exp1, RngStream};
use crate::survdata::{Dataset, StepFunction, SubjectRecord};

/// Shape of the treatment hazard-ratio profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HrShape {
    /// Equal steps from `h_l` to `h_r`.
    One,
    /// Rise from `h_l` to `max(h_l, h_r) + 0.2`, then fall to `h_r`.
    Two,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HrConfig {
    pub config: HrShape,
    /// Number of change points; cuts sit at `8i/(p+1)`.
    pub p: usize,
    pub h_l: f64,
    pub h_r: f64,
}

impl HrConfig {
    pub fn one(p: usize, h_l: f64, h_r: f64) -> Self {
        Self { config: HrShape::One, p, h_l, h_r }
    }

    pub fn two(p: usize, h_l: f64, h_r: f64) -> Self {
        Self { config: HrShape::Two, p, h_l, h_r }
    }

    /// Hazard ratio 1 throughout.
    pub fn null() -> Self {
        Self::one(1, 1.0, 1.0)
    }

    pub fn label(&self) -> String {
        let shape = match self.config {
            HrShape::One => "one",
            HrShape::Two => "two",
        };
        format!("{shape}_p{}_hl{}_hr{}", self.p, self.h_l, self.h_r)
    }
}

/// Treatment-arm hazard ratio `h_T(t)` as a step function.
pub fn hr_profile(cfg: &HrConfig) -> Result<StepFunction> {
    let p = cfg.p;
    if p == 0 {
        return Err(Error::invalid("number of change points must be at least 1"));
    }
    if !(cfg.h_l > 0.0 && cfg.h_r > 0.0 && cfg.h_l.is_finite() && cfg.h_r.is_finite()) {
        return Err(Error::invalid("hazard ratios must be positive and finite"));
    }
    let cuts: Vec<f64> = (1..=p).map(|i| 8.0 * i as f64 / (p + 1) as f64).collect();
    let pf = p as f64;
    let mut values: Vec<f64> = match cfg.config {
        HrShape::One => {
            let d = (cfg.h_r - cfg.h_l) / pf;
            (0..=p).map(|k| cfg.h_l + k as f64 * d).collect()
        }
        HrShape::Two => {
            if p % 2 != 0 {
                return Err(Error::invalid(format!("configuration two needs an even p, got {p}")));
            }
            let top = cfg.h_l.max(cfg.h_r) + 0.2;
            let up = 2.0 * (top - cfg.h_l) / pf;
            let down = 2.0 * (top - cfg.h_r) / pf;
            let half = p / 2;
            (1..=p + 1)
                .map(|i| {
                    if i <= half + 1 {
                        cfg.h_l + (i - 1) as f64 * up
                    } else {
                        top - (i - half - 1) as f64 * down
                    }
                })
                .collect()
        }
    };
    values[p] = cfg.h_r;
    StepFunction::new(cuts, values)
}

/// Draws from the distribution with piecewise-constant hazard `rates` by inverting
/// the cumulative hazard at an Exp(1) variate.
pub fn piecewise_exp_sample<R: Rng + ?Sized>(rates: &StepFunction, rng: &mut R) -> Result<f64> {
    if rates.values().iter().any(|r| !(*r > 0.0 && r.is_finite())) {
        return Err(Error::invalid("hazard rates must be positive and finite"));
    }
    Ok(invert_cumhaz(rates, exp1(rng)))
}

fn invert_cumhaz(rates: &StepFunction, mut e: f64) -> f64 {
    let cuts = rates.cuts();
    let vals = rates.values();
    let mut start = 0.0;
    for (k, &c) in cuts.iter().enumerate() {
        if c <= start {
            continue;
        }
        let mass = vals[k] * (c - start);
        if e < mass {
            return start + e / vals[k];
        }
        e -= mass;
        start = c;
    }
    start + e / vals[cuts.len()]
}

/// One simulated trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub n_total: usize,
    /// Treatment : control.
    pub allocation: (u32, u32),
    pub lambda_c: f64,
    pub hr_profile: StepFunction,
    pub censor_rate: f64,
    pub seed: RngStream,
}

impl ScenarioSpec {
    /// 1:1 allocation, control hazard 0.1, Exp(0.1) censoring.
    pub fn standard(n_total: usize, hr: &HrConfig, seed: RngStream) -> Result<Self> {
        Ok(Self {
            n_total,
            allocation: (1, 1),
            lambda_c: 0.1,
            hr_profile: hr_profile(hr)?,
            censor_rate: 0.1,
            seed,
        })
    }

    pub fn arm_sizes(&self) -> (usize, usize) {
        let (a, b) = self.allocation;
        let trt = (self.n_total as u64 * a as u64).div_ceil((a + b) as u64) as usize;
        (trt, self.n_total - trt)
    }

    fn validate(&self) -> Result<()> {
        if self.n_total < 2 {
            return Err(Error::invalid("a trial needs at least two subjects"));
        }
        if self.allocation.0 == 0 || self.allocation.1 == 0 {
            return Err(Error::invalid("allocation ratio entries must be positive"));
        }
        if !(self.lambda_c > 0.0 && self.censor_rate > 0.0) {
            return Err(Error::invalid("control hazard and censoring rate must be positive"));
        }
        if self.hr_profile.values().iter().any(|v| !(*v > 0.0)) {
            return Err(Error::invalid("hazard-ratio profile must be positive"));
        }
        Ok(())
    }
}

/// Treatment subjects come first (`x = 1`), then controls (`x = 0`).
pub fn simulate_trial(spec: &ScenarioSpec) -> Result<Dataset> {
    spec.validate()?;
    let (n_trt, n_ctl) = spec.arm_sizes();
    let trt_rates = StepFunction::new(
        spec.hr_profile.cuts().to_vec(),
        spec.hr_profile.values().iter().map(|h| h * spec.lambda_c).collect(),
    )?;
    let ctl_rates = StepFunction::constant(spec.lambda_c);
    let mut rng = spec.seed.rng();
    let mut records = Vec::with_capacity(spec.n_total);
    for (rates, n, x) in [(&trt_rates, n_trt, 1.0), (&ctl_rates, n_ctl, 0.0)] {
        for _ in 0..n {
            let t = invert_cumhaz(rates, exp1(&mut rng));
            let c = exp1(&mut rng) / spec.censor_rate;
            records.push(SubjectRecord::new(t.min(c), t <= c, x));
        }
    }
    Dataset::new(records)
}

/// Study configuration file (TOML).
///
/// ```toml
/// seed = 20240901
/// n_reps = 10000
/// n_list = [100, 200]
/// alpha_list = [0.05, 0.01]
/// methods = ["cauchycp", "maxcombo", "rmst", "wkm"]
///
/// [[hr]]
/// config = "one"
/// p = 1
/// h_l = 0.6
/// h_r = 1.6
/// ```
///
/// Omitted keys take the standard values (`lambda_c = 0.1`, `censor_rate = 0.1`,
/// 1:1 allocation, `alpha_list = [0.05]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: Option<u64>,
    #[serde(default = "default_reps")]
    pub n_reps: usize,
    pub n_list: Vec<usize>,
    #[serde(default = "default_alphas")]
    pub alpha_list: Vec<f64>,
    #[serde(default)]
    pub methods: Vec<String>,
    #[serde(default = "default_rate")]
    pub lambda_c: f64,
    #[serde(default = "default_rate")]
    pub censor_rate: f64,
    #[serde(default = "default_allocation")]
    pub allocation: (u32, u32),
    #[serde(default)]
    pub hr: Vec<HrConfig>,
    /// Repetitions per N for timing runs.
    #[serde(default = "default_runs")]
    pub n_runs: usize,
}

fn default_reps() -> usize {
    1000
}
fn default_alphas() -> Vec<f64> {
    vec![0.05]
}
fn default_rate() -> f64 {
    0.1
}
fn default_allocation() -> (u32, u32) {
    (1, 1)
}
fn default_runs() -> usize {
    100
}

impl ScenarioConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<()> {
        if self.n_list.is_empty() || self.n_list.iter().any(|&n| n < 2) {
            return Err(Error::Config("n_list must hold sample sizes of at least 2".into()));
        }
        if self.alpha_list.iter().any(|a| !(*a > 0.0 && *a <= 1.0)) {
            return Err(Error::Config("alpha values must lie in (0, 1]".into()));
        }
        if !(self.lambda_c > 0.0 && self.censor_rate > 0.0) {
            return Err(Error::Config("rates must be positive".into()));
        }
        for h in &self.hr {
            hr_profile(h).map_err(|e| Error::Config(format!("hr entry {}: {e}", h.label())))?;
        }
        Ok(())
    }

    pub fn scenario(&self, n_total: usize, hr: &HrConfig, seed: RngStream) -> Result<ScenarioSpec> {
        Ok(ScenarioSpec {
            n_total,
            allocation: self.allocation,
            lambda_c: self.lambda_c,
            hr_profile: hr_profile(hr)?,
            censor_rate: self.censor_rate,
            seed,
        })
    }
}
