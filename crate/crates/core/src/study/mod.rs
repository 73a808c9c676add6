//! The paired experiment: one D-2 base case feeding a standard and an
//! advanced hybrid coupling branch, each followed by congestion management.

mod domain;
mod forecast;
mod report;
mod uaf;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::capacity::{capacity_params, CapacityParams, D2Reference, RamRules};
use crate::dispatch::{
    account_costs, audit_d0, audit_market, solve_d0, solve_market, AuditReport, CongestionSolution,
    CostReport, DispatchError, MarketProblem, MarketSolution, Stage,
};
use crate::grid::{derive_virtual_zones, GridError, GridModel};
use crate::sensitivity::{SensitivityError, Sensitivities, Setup};

pub use domain::{domain_half_planes, domain_projection, intersect_half_planes, HalfPlane, Polygon, DOMAIN_BOX};
pub use forecast::perturb_res;
pub use report::{write_report, DomainSummary, SetupSummary, StudyReport};
pub use uaf::{distance_to_borders, fuaf_deviation, spearman, uaf_sensitivity, FuafDeviation};

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("grid: {0}")]
    Grid(#[from] GridError),
    #[error("sensitivities: {0}")]
    Sensitivity(#[from] SensitivityError),
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
    #[error("capacity: {0}")]
    Capacity(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Grid with forecast and virtual zones, plus everything derived from it.
#[derive(Clone, Debug)]
pub struct PreparedGrid {
    pub grid: GridModel,
    pub sens: Sensitivities,
}

/// Draws the D-2 forecast, adds the virtual zones and computes sensitivities.
pub fn prepare(grid: GridModel) -> Result<PreparedGrid, StudyError> {
    let forecast = perturb_res(&grid, &grid.config);
    let grid = derive_virtual_zones(grid.with_res_forecast(forecast)?)?;
    let sens = Sensitivities::compute(&grid)?;
    Ok(PreparedGrid { grid, sens })
}

/// SHA-256 of the canonical JSON form of a D-2 reference.
pub fn reference_hash(reference: &D2Reference) -> String {
    let bytes = serde_json::to_vec(reference).expect("reference serialises");
    hex::encode(Sha256::digest(&bytes))
}

/// Capacity calculation for both setups from one D-2 result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacityPair {
    pub reference: D2Reference,
    pub reference_hash: String,
    /// Parameters on the SHC CNEC set.
    pub shc: CapacityParams,
    /// Parameters on the AHC CNEC set.
    pub ahc: CapacityParams,
}

impl CapacityPair {
    pub fn get(&self, setup: Setup) -> &CapacityParams {
        match setup {
            Setup::Shc => &self.shc,
            Setup::Ahc => &self.ahc,
        }
    }
}

pub fn run_capacity(p: &PreparedGrid, d2: &MarketSolution, shc_uses_ahc_cnecs: bool) -> CapacityPair {
    let reference = d2.reference(&p.grid);
    let rules = RamRules::from_grid(&p.grid);
    let shc_set = if shc_uses_ahc_cnecs {
        &p.sens.cnecs_ahc
    } else {
        &p.sens.cnecs_shc
    };
    CapacityPair {
        reference_hash: reference_hash(&reference),
        shc: capacity_params(&p.grid, &p.sens, shc_set, &reference, rules),
        ahc: capacity_params(&p.grid, &p.sens, &p.sens.cnecs_ahc, &reference, rules),
        reference,
    }
}

/// One hybrid-coupling branch of the study.
#[derive(Clone, Debug)]
pub struct Branch {
    pub setup: Setup,
    /// Hash of the D-2 reference this branch consumed.
    pub reference_hash: String,
    pub d1: MarketSolution,
    pub d0: CongestionSolution,
    pub costs: CostReport,
    pub audit_d1: AuditReport,
    pub audit_d0: AuditReport,
}

pub fn stage_of(setup: Setup) -> Stage {
    match setup {
        Setup::Shc => Stage::D1Shc,
        Setup::Ahc => Stage::D1Ahc,
    }
}

pub fn run_d1(
    p: &PreparedGrid,
    cap: &CapacityPair,
    setup: Setup,
    hours: &[usize],
    lp_dir: Option<PathBuf>,
) -> Result<MarketSolution, StudyError> {
    let mut pb = MarketProblem::new(stage_of(setup), hours.to_vec(), Some(cap.get(setup)));
    pb.lp_dir = lp_dir;
    Ok(solve_market(&p.grid, &pb)?)
}

pub fn run_branch(
    p: &PreparedGrid,
    cap: &CapacityPair,
    setup: Setup,
    hours: &[usize],
    lp_dir: Option<PathBuf>,
) -> Result<Branch, StudyError> {
    let d1 = run_d1(p, cap, setup, hours, lp_dir.clone())?;
    let d0 = solve_d0(&p.grid, &p.sens.cm_set, &p.sens.ptdf, &d1, lp_dir.as_deref())?;
    Ok(Branch {
        setup,
        reference_hash: reference_hash(&cap.reference),
        costs: account_costs(&p.grid, &d1, &d0),
        audit_d1: audit_market(&p.grid, &d1, Some(cap.get(setup))),
        audit_d0: audit_d0(&p.grid, &p.sens.cm_set, &p.sens.ptdf, &d1, &d0),
        d1,
        d0,
    })
}

#[derive(Clone, Debug, Default)]
pub struct StudyOptions {
    /// Zero-based hours; defaults to the configured range.
    pub hours: Option<Vec<usize>>,
    pub lp_dir: Option<PathBuf>,
    /// Monitors the AHC CNEC set in the SHC branch too.
    pub shc_uses_ahc_cnecs: bool,
}

/// Everything produced by one paired run.
#[derive(Clone, Debug)]
pub struct StudyRun {
    pub prepared: PreparedGrid,
    pub hours: Vec<usize>,
    pub d2: MarketSolution,
    pub audit_d2: AuditReport,
    pub capacity: CapacityPair,
    pub shc: Branch,
    pub ahc: Branch,
}

impl StudyRun {
    pub fn branch(&self, setup: Setup) -> &Branch {
        match setup {
            Setup::Shc => &self.shc,
            Setup::Ahc => &self.ahc,
        }
    }
}

/// D-2, capacity calculation, then both D-1/D-0 branches on the same inputs.
pub fn run_paired_study(grid: GridModel, opts: &StudyOptions) -> Result<StudyRun, StudyError> {
    let prepared = prepare(grid)?;
    let hours = opts
        .hours
        .clone()
        .unwrap_or_else(|| prepared.grid.config.hour_range(prepared.grid.horizon()).collect());
    if hours.is_empty() {
        return Err(StudyError::Capacity("no hours selected".into()));
    }
    let mut pb = MarketProblem::new(Stage::D2, hours.clone(), None);
    pb.lp_dir = opts.lp_dir.clone();
    let d2 = solve_market(&prepared.grid, &pb)?;
    let audit_d2 = audit_market(&prepared.grid, &d2, None);
    let capacity = run_capacity(&prepared, &d2, opts.shc_uses_ahc_cnecs);
    log::info!(
        "capacity calculation: {} SHC / {} AHC CNECs",
        capacity.shc.cnecs.len(),
        capacity.ahc.cnecs.len()
    );
    let shc = run_branch(&prepared, &capacity, Setup::Shc, &hours, opts.lp_dir.clone())?;
    let ahc = run_branch(&prepared, &capacity, Setup::Ahc, &hours, opts.lp_dir.clone())?;
    Ok(StudyRun {
        prepared,
        hours,
        d2,
        audit_d2,
        capacity,
        shc,
        ahc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::testing::ring_with_border;

    #[test]
    fn branches_share_the_d2_reference() {
        let run = run_paired_study(ring_with_border(3), &StudyOptions::default()).unwrap();
        assert_eq!(run.shc.reference_hash, run.ahc.reference_hash);
        assert_eq!(run.hours, vec![0, 1, 2]);
        for b in [&run.shc, &run.ahc] {
            assert!(b.audit_d1.passes(1e-6), "{:?}", b.audit_d1);
            assert!(b.audit_d0.passes(1e-6), "{:?}", b.audit_d0);
        }
    }

    #[test]
    fn no_border_trade_makes_setups_identical() {
        let mut g = ring_with_border(4);
        for b in &mut g.borders {
            b.ntc.iter_mut().for_each(|v| *v = 0.0);
        }
        let opts = StudyOptions {
            shc_uses_ahc_cnecs: true,
            ..StudyOptions::default()
        };
        let run = run_paired_study(g, &opts).unwrap();
        assert!(run.capacity.reference.ex.iter().flatten().all(|e| *e == 0.0));
        let (s, a) = (&run.shc.costs, &run.ahc.costs);
        assert!((s.total - a.total).abs() < 1e-6 * s.total.abs().max(1.0));
        assert!((s.fb_total - a.fb_total).abs() < 1e-6 * s.fb_total.abs().max(1.0));
        for (hs, ha) in run.shc.d1.hours.iter().zip(&run.ahc.d1.hours) {
            for (x, y) in hs.g.iter().zip(&ha.g) {
                assert!((x - y).abs() < 1e-6);
            }
        }
    }
}
