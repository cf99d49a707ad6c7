//! Shared fixtures for the benchmarks.

use fint_core::SystemSpec;

/// Load `specs/<name>.json` from the workspace root.
pub fn fixture(name: &str) -> SystemSpec {
    let path = format!("{}/../../specs/{name}.json", env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"));
    SystemSpec::from_json(&text).unwrap_or_else(|e| panic!("{path}: {e}"))
}
