//! Flow-based market coupling simulator comparing standard and advanced
//! hybrid coupling of NTC borders.

pub mod capacity;
pub mod config;
pub mod dispatch;
pub mod grid;
pub mod lp;
pub mod sensitivity;
pub mod study;

pub use config::ScenarioConfig;
pub use grid::{derive_virtual_zones, load_grid, save_grid, GridError, GridModel, ZoneKind};
pub use sensitivity::{Sensitivities, Setup};
