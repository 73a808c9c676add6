use serde::{Deserialize, Serialize};

use super::{CongestionSolution, MarketSolution};
use crate::grid::{GridModel, ZoneKind};
use crate::sensitivity::Setup;

/// Reported costs of one hour (EUR). Penalties are not included.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HourCost {
    pub hour: usize,
    /// D-1 generation cost per zone.
    pub generation: Vec<f64>,
    pub redispatch_up: f64,
    pub redispatch_down: f64,
    pub curtailment: f64,
}

impl HourCost {
    pub fn congestion_management(&self) -> f64 {
        self.redispatch_up + self.redispatch_down + self.curtailment
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub setup: Setup,
    pub hours: Vec<HourCost>,
    /// Generation cost per zone over all hours.
    pub generation_by_zone: Vec<f64>,
    pub generation_fb: f64,
    pub generation_non_fb: f64,
    pub congestion_management: f64,
    /// FB generation plus congestion management.
    pub fb_total: f64,
    /// Generation in all zones plus congestion management.
    pub total: f64,
}

/// Generation and congestion-management cost of a D-1/D-0 pair. Upward
/// redispatch is paid at the marked-up variable cost, downward redispatch
/// refunds the variable cost, curtailment is paid at the non-negative
/// zonal D-1 price.
pub fn account_costs(grid: &GridModel, d1: &MarketSolution, d0: &CongestionSolution) -> CostReport {
    let markup = grid.config.penalties.redispatch_markup;
    let mut hours = Vec::with_capacity(d0.hours.len());
    for h0 in &d0.hours {
        let h1 = d1.hour(h0.hour).expect("D-0 hour has a D-1 result");
        let mut hc = HourCost {
            hour: h0.hour,
            generation: h1.cg.clone(),
            ..Default::default()
        };
        for (p, plant) in grid.plants.iter().enumerate() {
            hc.redispatch_up += h0.rd_pos[p] * markup * plant.c_var;
            hc.redispatch_down -= h0.rd_neg[p] * plant.c_var;
        }
        for (n, node) in grid.nodes.iter().enumerate() {
            if h0.curt[n] != 0.0 {
                hc.curtailment += h0.curt[n] * h1.price[node.zone].max(0.0);
            }
        }
        hours.push(hc);
    }
    let mut by_zone = vec![0.0; grid.zones.len()];
    for hc in &hours {
        for (z, v) in hc.generation.iter().enumerate() {
            by_zone[z] += v;
        }
    }
    let sum_kind = |kind: ZoneKind| -> f64 {
        grid.zones_of(kind).iter().map(|&z| by_zone[z]).sum()
    };
    let generation_fb = sum_kind(ZoneKind::Fb);
    let generation_non_fb = sum_kind(ZoneKind::NonFb);
    let cm: f64 = hours.iter().map(HourCost::congestion_management).sum();
    CostReport {
        setup: d0.setup,
        hours,
        generation_by_zone: by_zone,
        generation_fb,
        generation_non_fb,
        congestion_management: cm,
        fb_total: generation_fb + cm,
        total: generation_fb + generation_non_fb + cm,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispatch::{CongestionHour, MarketHour, Stage};
    use crate::grid::testing::ring_with_border;

    fn pair(rd_pos: Vec<f64>, rd_neg: Vec<f64>, curt: Vec<f64>, price: f64) -> (MarketSolution, CongestionSolution) {
        let d1 = MarketSolution {
            stage: Stage::D1Shc,
            np_zones: vec![0, 1],
            hours: vec![MarketHour {
                hour: 0,
                g: vec![0.0; 5],
                curt: vec![0.0; 5],
                ex: vec![0.0],
                np: vec![0.0; 2],
                price: vec![price, price, 20.0],
                cg: vec![100.0, 200.0, 50.0],
                cc: vec![0.0; 3],
                slack: vec![0.0; 3],
                objective: 350.0,
            }],
        };
        let d0 = CongestionSolution {
            setup: Setup::Shc,
            hours: vec![CongestionHour {
                hour: 0,
                rd_pos,
                rd_neg,
                curt,
                inj: vec![0.0; 5],
                flows: Vec::new(),
                nodal_price: vec![0.0; 5],
                objective: 0.0,
            }],
        };
        (d1, d0)
    }

    #[test]
    fn nothing_to_redispatch_costs_nothing() {
        let g = ring_with_border(1);
        let (d1, d0) = pair(vec![0.0; 5], vec![0.0; 5], vec![0.0; 5], 30.0);
        let r = account_costs(&g, &d1, &d0);
        assert_eq!(r.congestion_management, 0.0);
        assert_eq!(r.fb_total, 300.0);
        assert_eq!(r.total, 350.0);
    }

    #[test]
    fn downward_redispatch_refunds_variable_cost() {
        let mut g = ring_with_border(1);
        g.plants[2].c_var = 50.0;
        let mut neg = vec![0.0; 5];
        neg[2] = 10.0;
        let (d1, d0) = pair(vec![0.0; 5], neg, vec![0.0; 5], 30.0);
        assert_eq!(account_costs(&g, &d1, &d0).hours[0].redispatch_down, -500.0);
    }

    #[test]
    fn upward_redispatch_pays_markup() {
        let g = ring_with_border(1);
        let mut pos = vec![0.0; 5];
        pos[0] = 5.0;
        let (d1, d0) = pair(pos, vec![0.0; 5], vec![0.0; 5], 30.0);
        assert!((account_costs(&g, &d1, &d0).congestion_management - 5.0 * 1.2 * 10.0).abs() < 1e-12);
    }

    #[test]
    fn curtailment_is_paid_at_non_negative_price() {
        let g = ring_with_border(1);
        let mut curt = vec![0.0; 5];
        curt[1] = 4.0;
        let (d1, d0) = pair(vec![0.0; 5], vec![0.0; 5], curt.clone(), -15.0);
        assert_eq!(account_costs(&g, &d1, &d0).hours[0].curtailment, 0.0);
        let (d1, d0) = pair(vec![0.0; 5], vec![0.0; 5], curt, 30.0);
        assert_eq!(account_costs(&g, &d1, &d0).hours[0].curtailment, 120.0);
    }
}
