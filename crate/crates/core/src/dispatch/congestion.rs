use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{export_lp, DispatchError, MarketSolution, Stage};
use crate::grid::{GridModel, ZoneKind};
use crate::lp::{LpModel, Var};
use crate::sensitivity::{CnecSet, Setup};

/// LP cost coefficients of the congestion-management model, per plant.
#[derive(Clone, Debug, PartialEq)]
pub struct RedispatchPenalties {
    pub pos: Vec<f64>,
    pub neg: Vec<f64>,
    pub curtailment: f64,
}

impl RedispatchPenalties {
    pub fn from_grid(grid: &GridModel) -> Self {
        let p = &grid.config.penalties;
        let top = grid
            .plants
            .iter()
            .map(|pl| p.redispatch_markup * pl.c_var)
            .fold(0.0, f64::max);
        let base = |node: usize| match grid.zone_kind_of_node(node) {
            ZoneKind::Fb => p.redispatch_base_fb,
            _ => p.redispatch_base_non_fb,
        };
        Self {
            pos: grid
                .plants
                .iter()
                .map(|pl| base(pl.node) + p.redispatch_markup * pl.c_var)
                .collect(),
            neg: grid
                .plants
                .iter()
                .map(|pl| base(pl.node) + top - p.redispatch_markup * pl.c_var)
                .collect(),
            curtailment: p.curtailment_d0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CongestionHour {
    pub hour: usize,
    /// Upward redispatch per plant (zero for plants that cannot redispatch).
    pub rd_pos: Vec<f64>,
    pub rd_neg: Vec<f64>,
    /// Curtailment on top of the market result, per node.
    pub curt: Vec<f64>,
    pub inj: Vec<f64>,
    /// Flow on every monitored line/outage pair of the congestion set.
    pub flows: Vec<f64>,
    /// Balance duals per node.
    pub nodal_price: Vec<f64>,
    /// LP objective, penalties included.
    pub objective: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CongestionSolution {
    /// Market setup whose result was redispatched.
    pub setup: Setup,
    pub hours: Vec<CongestionHour>,
}

impl CongestionSolution {
    pub fn hour(&self, t: usize) -> Option<&CongestionHour> {
        self.hours.iter().find(|h| h.hour == t)
    }
}

struct Ctx<'a> {
    grid: &'a GridModel,
    cm: &'a CnecSet,
    rows: &'a DMatrix<f64>,
    pen: &'a RedispatchPenalties,
    lp_dir: Option<&'a Path>,
}

fn solve_hour(ctx: &Ctx, d1: &super::MarketHour) -> Result<CongestionHour, DispatchError> {
    let grid = ctx.grid;
    let t = d1.hour;
    let res = &grid.series.res[t];
    let demand = &grid.series.demand[t];
    let mut lp = LpModel::new();

    let mut rd: Vec<Option<(Var, Var)>> = vec![None; grid.plants.len()];
    for (p, plant) in grid.plants.iter().enumerate() {
        if plant.redispatchable {
            let g1 = d1.g[p];
            let up = lp.add_var(
                format!("RDPOS_{}", plant.id),
                0.0,
                (plant.g_max - g1).max(0.0),
                ctx.pen.pos[p],
            );
            let down = lp.add_var(format!("RDNEG_{}", plant.id), 0.0, g1.max(0.0), ctx.pen.neg[p]);
            rd[p] = Some((up, down));
        }
    }
    let mut curt = vec![None; grid.nodes.len()];
    let mut inj = Vec::with_capacity(grid.nodes.len());
    let mut balance = Vec::with_capacity(grid.nodes.len());
    for (n, node) in grid.nodes.iter().enumerate() {
        let left = res[n] - d1.curt[n];
        if left > 0.0 {
            curt[n] = Some(lp.add_var(format!("CURT_{}", node.id), 0.0, left, ctx.pen.curtailment));
        }
        let v = lp.add_var(format!("INJ_{}", node.id), f64::NEG_INFINITY, f64::INFINITY, 0.0);
        inj.push(v);
        let mut terms = vec![(v, 1.0)];
        let mut rhs = left - demand[n];
        for &p in &grid.map.node_plants[n] {
            rhs += d1.g[p];
            if let Some((up, down)) = rd[p] {
                terms.push((up, -1.0));
                terms.push((down, 1.0));
            }
        }
        if let Some(c) = curt[n] {
            terms.push((c, 1.0));
        }
        balance.push(lp.add_eq(format!("balance_{}", node.id), &terms, rhs));
    }
    let sum: Vec<(Var, f64)> = inj.iter().map(|&v| (v, 1.0)).collect();
    lp.add_eq("inj_sum", &sum, 0.0);
    for (j, e) in ctx.cm.entries.iter().enumerate() {
        let line = &grid.lines[e.line];
        let cap = line.fmax - line.frm;
        let terms: Vec<(Var, f64)> = (0..grid.nodes.len())
            .filter(|&n| ctx.rows[(j, n)].abs() > 1e-12)
            .map(|n| (inj[n], ctx.rows[(j, n)]))
            .collect();
        lp.add_range(format!("flow_{j}"), &terms, -cap, cap);
    }

    export_lp(ctx.lp_dir, Stage::D0, t, &lp)?;
    let sol = lp.solve();
    if !sol.is_optimal() {
        return Err(DispatchError::from_status(Stage::D0, t, sol.status));
    }
    let inj_v: Vec<f64> = inj.iter().map(|&v| sol.value(v)).collect();
    let flows = (ctx.rows * nalgebra::DVector::from_column_slice(&inj_v))
        .iter()
        .copied()
        .collect();
    Ok(CongestionHour {
        hour: t,
        rd_pos: rd.iter().map(|r| r.map_or(0.0, |(u, _)| sol.value(u).max(0.0))).collect(),
        rd_neg: rd.iter().map(|r| r.map_or(0.0, |(_, d)| sol.value(d).max(0.0))).collect(),
        curt: curt.iter().map(|c| c.map_or(0.0, |v| sol.value(v).max(0.0))).collect(),
        inj: inj_v,
        flows,
        nodal_price: balance.iter().map(|&c| sol.dual(c)).collect(),
        objective: sol.objective,
    })
}

/// Redispatch and curtailment that make a D-1 result secure on the
/// congestion-management set.
pub fn solve_d0(
    grid: &GridModel,
    cm: &CnecSet,
    ptdf: &crate::sensitivity::NodalPtdf,
    d1: &MarketSolution,
    lp_dir: Option<&Path>,
) -> Result<CongestionSolution, DispatchError> {
    let setup = match d1.stage {
        Stage::D1Shc => Setup::Shc,
        Stage::D1Ahc => Setup::Ahc,
        other => {
            return Err(DispatchError::Input {
                stage: Stage::D0,
                msg: format!("expects a D-1 result, got {other}"),
            })
        }
    };
    let rows = cm.nodal_rows(ptdf);
    let pen = RedispatchPenalties::from_grid(grid);
    let ctx = Ctx {
        grid,
        cm,
        rows: &rows,
        pen: &pen,
        lp_dir,
    };
    let hours = d1
        .hours
        .par_iter()
        .map(|h| solve_hour(&ctx, h))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CongestionSolution { setup, hours })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispatch::{solve_market, MarketProblem};
    use crate::grid::testing::*;
    use crate::grid::{Border, ExogenousSeries};
    use crate::sensitivity::{congestion_management_set, expand, lodf, nodal_ptdf};
    use crate::ScenarioConfig;

    /// Three nodes in one zone: cheap plant at n1, expensive plant at n3,
    /// all demand at n3. Line l13 is the weak link.
    fn three_node(fmax_13: f64) -> GridModel {
        let nodes = vec![node("n1", 0, true), node("n2", 0, false), node("n3", 0, false)];
        let lines = vec![
            line("l12", 0, 1, 1.0, 1000.0),
            line("l23", 1, 2, 1.0, 1000.0),
            line("l13", 0, 2, 1.0, fmax_13),
        ];
        let zones = vec![zone("A", ZoneKind::Fb)];
        let plants = vec![plant("cheap", 0, 500.0, 10.0), plant("dear", 2, 500.0, 40.0)];
        let mut series = ExogenousSeries::zeros(1, 3);
        series.demand[0] = vec![0.0, 0.0, 300.0];
        let borders: Vec<Border> = Vec::new();
        GridModel::new(nodes, lines, zones, borders, plants, series, ScenarioConfig::default()).unwrap()
    }

    fn d1_without_limits(g: &GridModel) -> MarketSolution {
        let mut sol = solve_market(g, &MarketProblem::new(Stage::D2, vec![0], None)).unwrap();
        sol.stage = Stage::D1Shc;
        sol
    }

    fn base_case_only(g: &GridModel) -> CnecSet {
        let p = nodal_ptdf(g).unwrap();
        let all: Vec<usize> = (0..g.lines.len()).collect();
        expand(g, &lodf(g, &p), &all, 0)
    }

    #[test]
    fn penalties_follow_the_markup_rule() {
        let g = ring_with_border(1);
        let pen = RedispatchPenalties::from_grid(&g);
        // highest marked-up cost: pB2 at 70 * 1.2 = 84
        assert!((pen.pos[0] - (100.0 + 12.0)).abs() < 1e-12);
        assert!((pen.neg[0] - (100.0 + 84.0 - 12.0)).abs() < 1e-12);
        assert!((pen.pos[4] - (500.0 + 24.0)).abs() < 1e-12);
        assert!((pen.neg[3] - 100.0).abs() < 1e-12);
        assert_eq!(pen.curtailment, 1500.0);
    }

    #[test]
    fn secure_market_result_needs_no_redispatch() {
        let g = three_node(1000.0);
        let d1 = d1_without_limits(&g);
        let p = nodal_ptdf(&g).unwrap();
        let cm = base_case_only(&g);
        let d0 = solve_d0(&g, &cm, &p, &d1, None).unwrap();
        let h = &d0.hours[0];
        assert!(h.rd_pos.iter().chain(&h.rd_neg).chain(&h.curt).all(|v| v.abs() < 1e-9));
        assert!(h.objective.abs() < 1e-9);
    }

    #[test]
    fn overload_activates_a_balanced_redispatch_pair() {
        // 300 MW from n1 to n3: 2/3 over l13 (200 MW), 1/3 over n2.
        let g = three_node(150.0);
        let d1 = d1_without_limits(&g);
        assert!((d1.hours[0].g[0] - 300.0).abs() < 1e-9);
        let p = nodal_ptdf(&g).unwrap();
        let cm = base_case_only(&g);
        let d0 = solve_d0(&g, &cm, &p, &d1, None).unwrap();
        let h = &d0.hours[0];
        // l13 capped at fmax - frm = 135 MW, so the transfer drops to 202.5 MW
        let frm = g.lines[2].frm;
        let shift = 300.0 - 1.5 * (150.0 - frm);
        assert!((h.rd_neg[0] - shift).abs() < 1e-6, "{:?}", h.rd_neg);
        assert!((h.rd_pos[1] - shift).abs() < 1e-6, "{:?}", h.rd_pos);
        assert!((h.rd_pos[0]).abs() < 1e-9 && h.rd_neg[1].abs() < 1e-9);
        assert!(h.inj.iter().sum::<f64>().abs() < 1e-9);
        let l13 = cm.entries.iter().position(|e| e.line == 2).unwrap();
        assert!((h.flows[l13] - (150.0 - frm)).abs() < 1e-6);
    }

    #[test]
    fn prefers_cheap_negative_redispatch_over_curtailment() {
        // wind and the cheap plant share n1; curtailing 1500/MWh is never chosen
        let mut g = three_node(150.0);
        g.series.res[0][0] = 100.0;
        g.series.res_d2[0][0] = 100.0;
        let d1 = d1_without_limits(&g);
        let p = nodal_ptdf(&g).unwrap();
        let d0 = solve_d0(&g, &base_case_only(&g), &p, &d1, None).unwrap();
        assert!(d0.hours[0].curt.iter().all(|v| v.abs() < 1e-9));
        assert!(d0.hours[0].rd_neg[0] > 1.0);
    }

    #[test]
    fn curtails_when_no_plant_can_go_down() {
        let mut g = three_node(150.0);
        g.series.res[0][0] = 300.0;
        g.series.res_d2[0][0] = 300.0;
        let d1 = d1_without_limits(&g);
        assert!(d1.hours[0].g[0].abs() < 1e-9);
        let p = nodal_ptdf(&g).unwrap();
        let d0 = solve_d0(&g, &base_case_only(&g), &p, &d1, None).unwrap();
        let h = &d0.hours[0];
        assert!(h.curt[0] > 1.0);
        assert!((h.curt[0] - h.rd_pos[1]).abs() < 1e-6);
    }

    #[test]
    fn contingency_rows_are_enforced() {
        let g = ring_with_border(1);
        let d1 = {
            let mut s = solve_market(&g, &MarketProblem::new(Stage::D2, vec![0], None)).unwrap();
            s.stage = Stage::D1Ahc;
            s
        };
        let p = nodal_ptdf(&g).unwrap();
        let cm = congestion_management_set(&g, &lodf(&g, &p), 2);
        let d0 = solve_d0(&g, &cm, &p, &d1, None).unwrap();
        assert_eq!(d0.setup, Setup::Ahc);
        for (j, e) in cm.entries.iter().enumerate() {
            let l = &g.lines[e.line];
            assert!(d0.hours[0].flows[j].abs() <= l.fmax - l.frm + 1e-6);
        }
    }

    #[test]
    fn rejects_non_market_stage() {
        let g = three_node(1000.0);
        let d2 = solve_market(&g, &MarketProblem::new(Stage::D2, vec![0], None)).unwrap();
        let p = nodal_ptdf(&g).unwrap();
        assert!(solve_d0(&g, &base_case_only(&g), &p, &d2, None).is_err());
    }
}
