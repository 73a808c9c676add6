//! Fixtures shared by the benchmarks.

use std::path::{Path, PathBuf};

use fbmc_core::grid::load_grid_with;
use fbmc_core::GridModel;

pub fn bundled_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/test_network")
}

/// The bundled network limited to its first `hours` hours.
pub fn bundled_network(hours: usize) -> GridModel {
    load_grid_with(bundled_dir(), |c| c.hours = Some(hours)).expect("bundled network loads")
}
