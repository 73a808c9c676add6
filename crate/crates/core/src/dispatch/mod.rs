//! The zonal market models (D-2 base case, D-1 coupling under SHC and AHC)
//! and the nodal congestion-management model (D-0).

mod audit;
mod congestion;
mod costs;
mod market;

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use audit::{audit_d0, audit_market, AuditReport};
pub use congestion::{solve_d0, CongestionHour, CongestionSolution, RedispatchPenalties};
pub use costs::{account_costs, CostReport};
pub use market::{
    market_injection, solve_d1_ahc, solve_d1_shc, solve_d2, solve_market, MarketHour, MarketProblem,
    MarketSolution,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    D2,
    D1Shc,
    D1Ahc,
    D0,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::D2 => "D-2",
            Stage::D1Shc => "D-1 SHC",
            Stage::D1Ahc => "D-1 AHC",
            Stage::D0 => "D-0",
        })
    }
}

#[derive(Debug, Error)]
pub enum DispatchError {
    #[error("{stage}: hour {hour} is infeasible")]
    Infeasible { stage: Stage, hour: usize },
    #[error("{stage}: hour {hour} is unbounded")]
    Unbounded { stage: Stage, hour: usize },
    #[error("{stage}: solver failed in hour {hour}")]
    Solver { stage: Stage, hour: usize },
    #[error("{stage}: {msg}")]
    Input { stage: Stage, msg: String },
    #[error("writing LP file {path}: {source}")]
    Export {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl DispatchError {
    pub(crate) fn from_status(stage: Stage, hour: usize, status: crate::lp::LpStatus) -> Self {
        use crate::lp::LpStatus;
        match status {
            LpStatus::Infeasible => Self::Infeasible { stage, hour: hour + 1 },
            LpStatus::Unbounded => Self::Unbounded { stage, hour: hour + 1 },
            _ => Self::Solver { stage, hour: hour + 1 },
        }
    }
}

/// Writes the LP of one hour when an export directory is set.
pub(crate) fn export_lp(
    dir: Option<&std::path::Path>,
    stage: Stage,
    hour: usize,
    model: &crate::lp::LpModel,
) -> Result<(), DispatchError> {
    let Some(dir) = dir else {
        return Ok(());
    };
    let tag = match stage {
        Stage::D2 => "d2",
        Stage::D1Shc => "d1_shc",
        Stage::D1Ahc => "d1_ahc",
        Stage::D0 => "d0",
    };
    let path = dir.join(format!("{tag}_h{:04}.lp", hour + 1));
    std::fs::create_dir_all(dir)
        .and_then(|_| std::fs::write(&path, model.to_lp_format()))
        .map_err(|source| DispatchError::Export { path, source })
}
