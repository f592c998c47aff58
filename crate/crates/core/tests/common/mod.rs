//! Helpers shared by the integration and acceptance tests.
#![allow(dead_code)]

pub mod cinterp;
pub mod oracle;

use nnhls::model::{build_ir, parse_model, NetworkModel, QuantConfig, TypedIr};

pub const MLP3_MODEL: &str = include_str!("../fixtures/mlp3.json");
pub const MLP3_CONFIG: &str = include_str!("../fixtures/mlp3_config.json");

pub fn mlp3() -> (NetworkModel, QuantConfig, TypedIr) {
    let m = parse_model(MLP3_MODEL).expect("fixture model");
    let c = QuantConfig::parse(MLP3_CONFIG).expect("fixture config");
    let ir = build_ir(&m, &c).expect("fixture builds");
    (m, c, ir)
}

/// Directory holding the checked-in golden bundle.
pub fn golden_dir() -> std::path::PathBuf {
    // valid from any crate directory in the workspace
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden")
}
