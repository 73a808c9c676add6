//! DC sensitivities and critical network element selection.

mod cnec;
mod gsk;
mod lodf;
mod ptdf;

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::grid::GridModel;

pub use cnec::{
    congestion_management_set, expand, select_cnecs, select_cnes, worst_contingencies, zone_spread,
    Cnec, CnecSet,
};
pub use gsk::{build_gsk, zonal_ptdf, Gsk, Setup};
pub use lodf::{lodf, LodfTable};
pub use ptdf::{nodal_ptdf, NodalPtdf};

#[derive(Debug, Error)]
pub enum SensitivityError {
    #[error("network is not connected")]
    Disconnected,
    #[error("reduced susceptance matrix is singular")]
    Singular,
    #[error("zone {0} has no plant nodes for its GSK")]
    NoPlantNodes(String),
}

/// Everything derived from the network alone, shared by both setups.
#[derive(Clone, Debug)]
pub struct Sensitivities {
    pub ptdf: NodalPtdf,
    pub lodf: LodfTable,
    pub gsk_shc: Gsk,
    pub gsk_ahc: Gsk,
    pub cnecs_shc: CnecSet,
    pub cnecs_ahc: CnecSet,
    /// Lines monitored during congestion management.
    pub cm_set: CnecSet,
}

impl Sensitivities {
    /// Expects virtual zones to be derived already; without them both
    /// setups coincide.
    pub fn compute(grid: &GridModel) -> Result<Self, SensitivityError> {
        let cfg = &grid.config;
        let ptdf = nodal_ptdf(grid)?;
        let lodf = lodf(grid, &ptdf);
        let gsk_shc = build_gsk(grid, Setup::Shc)?;
        let gsk_ahc = build_gsk(grid, Setup::Ahc)?;
        let k_mc = cfg.contingencies.market_coupling;
        let cnecs_shc = select_cnecs(grid, &ptdf, &lodf, &gsk_shc, cfg.threshold, k_mc);
        let cnecs_ahc = select_cnecs(grid, &ptdf, &lodf, &gsk_ahc, cfg.threshold, k_mc);
        let cm_set = congestion_management_set(grid, &lodf, cfg.contingencies.congestion_management);
        Ok(Self {
            ptdf,
            lodf,
            gsk_shc,
            gsk_ahc,
            cnecs_shc,
            cnecs_ahc,
            cm_set,
        })
    }

    pub fn gsk(&self, setup: Setup) -> &Gsk {
        match setup {
            Setup::Shc => &self.gsk_shc,
            Setup::Ahc => &self.gsk_ahc,
        }
    }

    pub fn cnecs(&self, setup: Setup) -> &CnecSet {
        match setup {
            Setup::Shc => &self.cnecs_shc,
            Setup::Ahc => &self.cnecs_ahc,
        }
    }

    /// Writes PTDF, LODF and CNEC tables as CSV for inspection.
    pub fn dump(&self, grid: &GridModel, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        let mut f = fs::File::create(dir.join("ptdf.csv"))?;
        write!(f, "line")?;
        for n in &grid.nodes {
            write!(f, ",{}", n.id)?;
        }
        writeln!(f)?;
        for (l, line) in grid.lines.iter().enumerate() {
            write!(f, "{}", line.id)?;
            for v in self.ptdf.matrix.row(l).iter() {
                write!(f, ",{v}")?;
            }
            writeln!(f)?;
        }

        let mut f = fs::File::create(dir.join("lodf.csv"))?;
        write!(f, "monitored")?;
        for l in &grid.lines {
            write!(f, ",{}", l.id)?;
        }
        writeln!(f)?;
        for (l, line) in grid.lines.iter().enumerate() {
            write!(f, "{}", line.id)?;
            for v in self.lodf.matrix.row(l).iter() {
                if v.is_nan() {
                    write!(f, ",split")?;
                } else {
                    write!(f, ",{v}")?;
                }
            }
            writeln!(f)?;
        }

        for (name, set) in [
            ("cnecs_shc.csv", &self.cnecs_shc),
            ("cnecs_ahc.csv", &self.cnecs_ahc),
            ("cnecs_cm.csv", &self.cm_set),
        ] {
            let mut f = fs::File::create(dir.join(name))?;
            writeln!(f, "line,contingency,lodf")?;
            for (i, e) in set.entries.iter().enumerate() {
                let (l, c) = set.label(grid, i);
                writeln!(f, "{l},{c},{}", e.lodf)?;
            }
        }
        Ok(())
    }
}
