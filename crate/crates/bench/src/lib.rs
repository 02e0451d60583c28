//! Fixtures shared by the criterion benchmarks.

use std::path::Path;

use cauchycp_core::simgen::simulate_trial;
use cauchycp_core::survdata::read_csv;
use cauchycp_core::{Dataset, HrConfig, RngStream, ScenarioSpec};

pub const SIZES: [usize; 3] = [200, 500, 1000];

/// The bundled gastric dataset.
pub fn gastric() -> Dataset {
    read_csv(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/gastric.csv")).expect("bundled dataset")
}

/// A null trial of `n` subjects.
pub fn null_trial(n: usize, rep: u64) -> Dataset {
    let spec = ScenarioSpec::standard(n, &HrConfig::null(), RngStream::new(1, n as u64).with_stream(rep)).expect("spec");
    simulate_trial(&spec).expect("simulation")
}
