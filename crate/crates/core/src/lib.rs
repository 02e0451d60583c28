//! Change-point Cox regression omnibus testing for survival data under
//! non-proportional hazards.
//!
//! The crate is organised bottom-up:
//!
//! * [`numstats`]: normal/chi-square tails, Cholesky solves, MVN rectangle
//!   probabilities and reproducible random streams.
//! * [`survdata`]: subject records, counting-process splitting, Kaplan–Meier.
//! * [`coxfit`]: Cox partial likelihood (Efron/Breslow), Newton–Raphson, LRT.
//! * [`cauchycp`]: per-change-point likelihood-ratio tests combined with the
//!   Cauchy combination rule.
//! * [`rivals`]: Fleming–Harrington weighted logrank, MaxCombo, RMST and WKM.
//! * [`simgen`]: piecewise-exponential trial simulation.
//! * [`bench`]: type-I error, power, timing and batch-marker studies.

pub mod bench;
pub mod cauchycp;
pub mod coxfit;
pub mod error;
pub mod numstats;
pub mod rivals;
pub mod simgen;
pub mod survdata;

pub use cauchycp::{cauchy_combine, cauchycp_test, CauchyCpResult, ChangePointSpec, PointResult};
pub use coxfit::{fit_cox, likelihood_ratio_test, partial_loglik, CoxData, CoxFit, FitOptions, LrtResult, TieMethod};
pub use error::{Error, Result};
pub use numstats::{CorrMatrix, RngStream};
pub use survdata::{Dataset, EpisodeRow, StepFunction, SubjectRecord};
pub use rivals::{MaxComboResult, TestResult, WlrStat};
pub use simgen::{HrConfig, HrShape, ScenarioSpec};
pub use bench::{Method, StudyResult};

