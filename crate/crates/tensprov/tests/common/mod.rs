//! Shared helpers for integration tests.

pub mod oracle;

use std::path::{Path, PathBuf};

use tensprov::graph::Pipeline;
use tensprov::spec::{run_spec, PipelineSpec, RunSummary};

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn fixture_path(name: &str) -> PathBuf {
    fixture_dir().join(name)
}

/// Load and run one of the checked-in pipeline specs.
pub fn run_fixture(name: &str) -> (Pipeline, RunSummary) {
    let text = std::fs::read_to_string(fixture_path(name)).expect("fixture spec");
    let spec = PipelineSpec::from_json(&text).expect("valid fixture spec");
    run_spec(&spec, &fixture_dir()).expect("fixture run")
}
