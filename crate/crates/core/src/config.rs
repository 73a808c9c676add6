//! Scenario parameters shared by every stage of a study.
//!
//! Values are read from the `config.json` that sits next to the grid CSVs and
//! may be overridden from the command line. Every field has a default, so an
//! empty JSON object is a valid configuration.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Which hybrid-coupling branches receive the CCR-specific RAM floor.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FloorScope {
    /// Floor the final RAMs of both setups.
    #[default]
    Both,
    /// Floor only the standard hybrid coupling RAMs.
    ShcOnly,
}

/// How virtual zone net positions are fixed when projecting AHC domains.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainVbzMode {
    #[default]
    Zero,
    /// Use the D-2 forecast exchanges of the mapped borders.
    Forecast,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContingencyCounts {
    /// Worst outages attached to each CNE during market coupling.
    pub market_coupling: usize,
    /// Worst outages attached to each line during congestion management.
    pub congestion_management: usize,
}

impl Default for ContingencyCounts {
    fn default() -> Self {
        Self {
            market_coupling: 5,
            congestion_management: 2,
        }
    }
}

/// Penalty terms steering the congestion-management LP, in EUR/MWh.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Penalties {
    pub redispatch_base_fb: f64,
    pub redispatch_base_non_fb: f64,
    /// Multiplier on variable costs for redispatch (remuneration above bid).
    pub redispatch_markup: f64,
    /// Curtailment penalty after market coupling.
    pub curtailment_d0: f64,
    /// Curtailment penalty in the D-2 base case and the market coupling.
    pub curtailment_market: f64,
}

impl Default for Penalties {
    fn default() -> Self {
        Self {
            redispatch_base_fb: 100.0,
            redispatch_base_non_fb: 500.0,
            redispatch_markup: 1.2,
            curtailment_d0: 1500.0,
            curtailment_market: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetPositionBounds {
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub sigma_fb: f64,
    pub sigma_non_fb: f64,
    /// First simulated hour (1-indexed).
    pub first_hour: usize,
    /// Number of simulated hours; `None` runs to the end of the horizon.
    pub hours: Option<usize>,
    /// Minimum zone-to-zone PTDF spread for a line to become a CNE.
    pub threshold: f64,
    pub minram_factor: f64,
    pub core_floor: f64,
    pub floor_scope: FloorScope,
    /// FRM as a fraction of fmax for lines without an explicit value.
    pub frm_default: f64,
    pub contingencies: ContingencyCounts,
    pub penalties: Penalties,
    /// NTC overrides per border id (MW, all hours).
    pub ntc_overrides: BTreeMap<String, f64>,
    /// Optional external-constraint bounds on virtual zone net positions,
    /// keyed by border id.
    pub vbz_bounds: BTreeMap<String, NetPositionBounds>,
    /// When set, zonal balances get a slack priced at this value (EUR/MWh)
    /// instead of reporting the hour as infeasible.
    pub balance_slack_penalty: Option<f64>,
    /// Hours (1-indexed) for which flow-based domains are projected.
    pub domain_hours: Vec<usize>,
    pub domain_vbz: DomainVbzMode,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            sigma_fb: 0.2,
            sigma_non_fb: 0.3,
            first_hour: 1,
            hours: None,
            threshold: 0.05,
            minram_factor: 0.7,
            core_floor: 0.2,
            floor_scope: FloorScope::Both,
            frm_default: 0.05,
            contingencies: ContingencyCounts::default(),
            penalties: Penalties::default(),
            ntc_overrides: BTreeMap::new(),
            vbz_bounds: BTreeMap::new(),
            balance_slack_penalty: None,
            domain_hours: Vec::new(),
            domain_vbz: DomainVbzMode::Zero,
        }
    }
}

impl ScenarioConfig {
    /// Checks ranges that every downstream stage relies on.
    pub fn validate(&self) -> Result<(), String> {
        if !(self.sigma_fb >= 0.0 && self.sigma_non_fb >= 0.0) {
            return Err("standard deviations must be non-negative".into());
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(format!("threshold {} outside (0, 1)", self.threshold));
        }
        if !(0.0 < self.core_floor
            && self.core_floor < self.minram_factor
            && self.minram_factor <= 1.0)
        {
            return Err(format!(
                "require 0 < core_floor ({}) < minram_factor ({}) <= 1",
                self.core_floor, self.minram_factor
            ));
        }
        if !(0.0..1.0).contains(&self.frm_default) {
            return Err(format!("frm_default {} outside [0, 1)", self.frm_default));
        }
        if self.first_hour == 0 {
            return Err("hours are 1-indexed".into());
        }
        if self.hours == Some(0) {
            return Err("hour range is empty".into());
        }
        if self.penalties.curtailment_d0 < 0.0 || self.penalties.curtailment_market < 0.0 {
            return Err("curtailment penalties must be non-negative".into());
        }
        for (border, b) in &self.vbz_bounds {
            if b.min > b.max {
                return Err(format!("vbz bounds for {border}: min > max"));
            }
        }
        Ok(())
    }

    /// Zero-based hour indices covered by this scenario on a given horizon.
    pub fn hour_range(&self, horizon: usize) -> std::ops::Range<usize> {
        let start = (self.first_hour - 1).min(horizon);
        let end = match self.hours {
            Some(n) => (start + n).min(horizon),
            None => horizon,
        };
        start..end
    }
}
