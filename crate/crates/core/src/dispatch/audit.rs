//! Post-solve residual checks, recomputed from the reported values rather
//! than taken from the solver.

use serde::{Deserialize, Serialize};

use super::{CongestionSolution, MarketSolution, Stage};
use crate::capacity::CapacityParams;
use crate::grid::{GridModel, ZoneKind};
use crate::sensitivity::{CnecSet, NodalPtdf, Setup};

/// Largest violation per constraint family (zero when satisfied).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub balance: f64,
    /// |Σ NP| for market stages, |Σ INJ| for D-0.
    pub position_sum: f64,
    pub flow_limits: f64,
    pub variable_bounds: f64,
    /// |NP_vbz - EX| under AHC.
    pub vbz_identity: f64,
}

impl AuditReport {
    pub fn worst(&self) -> f64 {
        [
            self.balance,
            self.position_sum,
            self.flow_limits,
            self.variable_bounds,
            self.vbz_identity,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.worst() <= tol
    }

    fn merge(&mut self, o: AuditReport) {
        self.balance = self.balance.max(o.balance);
        self.position_sum = self.position_sum.max(o.position_sum);
        self.flow_limits = self.flow_limits.max(o.flow_limits);
        self.variable_bounds = self.variable_bounds.max(o.variable_bounds);
        self.vbz_identity = self.vbz_identity.max(o.vbz_identity);
    }
}

fn outside(v: f64, lo: f64, hi: f64) -> f64 {
    (lo - v).max(v - hi).max(0.0)
}

/// Checks zonal balances, net-position sum, NTC and capacity bounds and, for
/// the D-1 stages, every flow-based constraint of `cp`.
pub fn audit_market(grid: &GridModel, sol: &MarketSolution, cp: Option<&CapacityParams>) -> AuditReport {
    let mut report = AuditReport::default();
    let setup = match sol.stage {
        Stage::D1Shc => Some(Setup::Shc),
        Stage::D1Ahc => Some(Setup::Ahc),
        _ => None,
    };
    for h in &sol.hours {
        let t = h.hour;
        let res = if sol.stage == Stage::D2 {
            &grid.series.res_d2[t]
        } else {
            &grid.series.res[t]
        };
        let mut r = AuditReport::default();
        for z in grid.physical_zones() {
            let mut lhs: f64 = grid.map.zone_plants[z].iter().map(|&p| h.g[p]).sum();
            let mut rhs = 0.0;
            for &n in &grid.map.zone_nodes[z] {
                lhs -= h.curt[n];
                rhs += grid.series.demand[t][n] - res[n];
            }
            match grid.zones[z].kind {
                ZoneKind::Fb => {
                    if sol.stage != Stage::D1Ahc {
                        lhs += grid.map.zone_borders[z].iter().map(|&b| h.ex[b]).sum::<f64>();
                    }
                    lhs -= sol.np_of(h, z).unwrap_or(0.0);
                }
                ZoneKind::NonFb => {
                    if let Some(b) = grid.map.non_fb_border[z] {
                        lhs -= h.ex[b];
                    }
                }
                ZoneKind::Virtual => {}
            }
            lhs += h.slack[z];
            r.balance = r.balance.max((lhs - rhs).abs());
        }
        r.position_sum = h.np.iter().sum::<f64>().abs();
        for (p, plant) in grid.plants.iter().enumerate() {
            r.variable_bounds = r.variable_bounds.max(outside(h.g[p], 0.0, plant.g_max));
        }
        for (&curt, &avail) in h.curt.iter().zip(res) {
            r.variable_bounds = r.variable_bounds.max(outside(curt, 0.0, avail.max(0.0)));
        }
        for (b, border) in grid.borders.iter().enumerate() {
            r.variable_bounds = r
                .variable_bounds
                .max(outside(h.ex[b], -border.ntc[t], border.ntc[t]));
        }
        if sol.stage == Stage::D1Ahc {
            for &vz in &grid.virtual_zones() {
                if let (Some(b), Some(np)) = (grid.zones[vz].attached_border, sol.np_of(h, vz)) {
                    r.vbz_identity = r.vbz_identity.max((np - h.ex[b]).abs());
                }
            }
        }
        if let (Some(setup), Some(cp)) = (setup, cp) {
            if let Some(hp) = cp.position(t) {
                let ptdf = cp.zonal_ptdf(setup);
                let rams = cp.rams(setup);
                for j in 0..cp.cnecs.len() {
                    let flow: f64 = cp
                        .zones(setup)
                        .iter()
                        .enumerate()
                        .map(|(c, &z)| ptdf[(j, c)] * sol.np_of(h, z).unwrap_or(0.0))
                        .sum();
                    r.flow_limits = r
                        .flow_limits
                        .max(outside(flow, rams.neg[hp][j], rams.pos[hp][j]));
                }
            } else {
                r.flow_limits = f64::INFINITY;
            }
        }
        report.merge(r);
    }
    report
}

/// Checks nodal balances, Σ INJ = 0, redispatch and curtailment bounds and
/// |F| ≤ fmax − frm on every entry of the congestion-management set.
pub fn audit_d0(
    grid: &GridModel,
    cm: &CnecSet,
    ptdf: &NodalPtdf,
    d1: &MarketSolution,
    d0: &CongestionSolution,
) -> AuditReport {
    let rows = cm.nodal_rows(ptdf);
    let mut report = AuditReport::default();
    for h in &d0.hours {
        let t = h.hour;
        let Some(h1) = d1.hour(t) else {
            report.balance = f64::INFINITY;
            continue;
        };
        let res = &grid.series.res[t];
        let mut r = AuditReport::default();
        let demand = &grid.series.demand[t];
        for (n, &avail) in res.iter().enumerate() {
            let mut supply = avail - h1.curt[n] - h.curt[n] - demand[n];
            for &p in &grid.map.node_plants[n] {
                supply += h1.g[p] + h.rd_pos[p] - h.rd_neg[p];
            }
            r.balance = r.balance.max((supply - h.inj[n]).abs());
            r.variable_bounds = r
                .variable_bounds
                .max(outside(h.curt[n], 0.0, (avail - h1.curt[n]).max(0.0)));
        }
        for (p, plant) in grid.plants.iter().enumerate() {
            let (up, down) = if plant.redispatchable {
                ((plant.g_max - h1.g[p]).max(0.0), h1.g[p].max(0.0))
            } else {
                (0.0, 0.0)
            };
            r.variable_bounds = r
                .variable_bounds
                .max(outside(h.rd_pos[p], 0.0, up))
                .max(outside(h.rd_neg[p], 0.0, down));
        }
        r.position_sum = h.inj.iter().sum::<f64>().abs();
        for (j, e) in cm.entries.iter().enumerate() {
            let flow: f64 = (0..grid.nodes.len()).map(|n| rows[(j, n)] * h.inj[n]).sum();
            let line = &grid.lines[e.line];
            let cap = line.fmax - line.frm;
            r.flow_limits = r.flow_limits.max(outside(flow, -cap, cap));
        }
        report.merge(r);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispatch::{solve_d0, solve_d2};
    use crate::grid::testing::ring_with_border;
    use crate::sensitivity::{congestion_management_set, lodf, nodal_ptdf};

    #[test]
    fn solved_market_passes_and_tampering_is_caught() {
        let g = ring_with_border(2);
        let mut sol = solve_d2(&g, &[0, 1]).unwrap();
        assert!(audit_market(&g, &sol, None).passes(1e-6));
        sol.hours[1].g[0] += 1.0;
        let r = audit_market(&g, &sol, None);
        assert!((r.balance - 1.0).abs() < 1e-9);
        sol.hours[1].ex[0] = 400.0;
        assert!(audit_market(&g, &sol, None).variable_bounds >= 100.0 - 1e-9);
    }

    #[test]
    fn solved_congestion_passes() {
        let g = ring_with_border(1);
        let mut d1 = solve_d2(&g, &[0]).unwrap();
        d1.stage = Stage::D1Shc;
        let p = nodal_ptdf(&g).unwrap();
        let cm = congestion_management_set(&g, &lodf(&g, &p), 2);
        let mut d0 = solve_d0(&g, &cm, &p, &d1, None).unwrap();
        assert!(audit_d0(&g, &cm, &p, &d1, &d0).passes(1e-6));
        d0.hours[0].inj[0] += 2.0;
        assert!(audit_d0(&g, &cm, &p, &d1, &d0).position_sum >= 2.0 - 1e-9);
    }
}
