use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{export_lp, DispatchError, Stage};
use crate::capacity::{CapacityParams, D2Reference};
use crate::grid::{GridModel, ZoneKind};
use crate::lp::{Con, LpModel, Var};
use crate::sensitivity::Setup;

/// Result of one hour of a zonal market model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketHour {
    /// Zero-based hour index.
    pub hour: usize,
    /// Generation per plant.
    pub g: Vec<f64>,
    /// Curtailment per node.
    pub curt: Vec<f64>,
    /// Export of each border's non-FB zone.
    pub ex: Vec<f64>,
    /// Net positions, ordered as `MarketSolution::np_zones`.
    pub np: Vec<f64>,
    /// Balance duals per zone (EUR/MWh); zero for virtual zones.
    pub price: Vec<f64>,
    pub cg: Vec<f64>,
    pub cc: Vec<f64>,
    /// Unserved (+) or dumped (-) energy per zone when balance slack is on.
    pub slack: Vec<f64>,
    pub objective: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketSolution {
    pub stage: Stage,
    pub np_zones: Vec<usize>,
    pub hours: Vec<MarketHour>,
}

impl MarketSolution {
    pub fn objective(&self) -> f64 {
        self.hours.iter().map(|h| h.objective).sum()
    }

    pub fn hour(&self, t: usize) -> Option<&MarketHour> {
        self.hours.iter().find(|h| h.hour == t)
    }

    pub fn hour_indices(&self) -> Vec<usize> {
        self.hours.iter().map(|h| h.hour).collect()
    }

    /// Net position of a zone in one hour, if the model has one.
    pub fn np_of(&self, h: &MarketHour, zone: usize) -> Option<f64> {
        self.np_zones.iter().position(|&z| z == zone).map(|c| h.np[c])
    }

    /// Capacity-calculation view of a D-2 solution. Border exchanges are
    /// injected at their FB-side end nodes by weight.
    pub fn reference(&self, grid: &GridModel) -> D2Reference {
        let fb = grid.fb_zones();
        let mut out = D2Reference {
            hours: self.hour_indices(),
            injection: Vec::with_capacity(self.hours.len()),
            np_fb: Vec::with_capacity(self.hours.len()),
            ex: Vec::with_capacity(self.hours.len()),
        };
        for h in &self.hours {
            let t = h.hour;
            let mut inj = vec![0.0; grid.nodes.len()];
            for (n, node) in grid.nodes.iter().enumerate() {
                if grid.zones[node.zone].kind != ZoneKind::Fb {
                    continue;
                }
                let gen: f64 = grid.map.node_plants[n].iter().map(|&p| h.g[p]).sum();
                inj[n] = gen + grid.series.res_d2[t][n] - h.curt[n] - grid.series.demand[t][n];
            }
            for (b, border) in grid.borders.iter().enumerate() {
                for &(n, w) in &border.end_nodes {
                    inj[n] += w * h.ex[b];
                }
            }
            out.injection.push(inj);
            out.np_fb.push(fb.iter().map(|&z| self.np_of(h, z).unwrap_or(0.0)).collect());
            out.ex.push(h.ex.clone());
        }
        out
    }
}

/// Physical nodal injection of a market result (generation plus
/// renewables minus curtailment and demand) for the given renewables.
pub fn market_injection(grid: &GridModel, h: &MarketHour, res: &[f64]) -> Vec<f64> {
    (0..grid.nodes.len())
        .map(|n| {
            let gen: f64 = grid.map.node_plants[n].iter().map(|&p| h.g[p]).sum();
            gen + res[n] - h.curt[n] - grid.series.demand[h.hour][n]
        })
        .collect()
}

/// One zonal market run.
#[derive(Clone, Debug)]
pub struct MarketProblem<'a> {
    pub stage: Stage,
    /// Zero-based hour indices.
    pub hours: Vec<usize>,
    /// Flow-based parameters; required for the D-1 stages.
    pub capacity: Option<&'a CapacityParams>,
    /// Fixed border exchanges per entry of `hours`.
    pub pinned_ex: Option<&'a [Vec<f64>]>,
    /// Overrides the configured virtual-zone net-position bounds.
    pub ignore_vbz_bounds: bool,
    pub lp_dir: Option<PathBuf>,
}

impl<'a> MarketProblem<'a> {
    pub fn new(stage: Stage, hours: Vec<usize>, capacity: Option<&'a CapacityParams>) -> Self {
        Self {
            stage,
            hours,
            capacity,
            pinned_ex: None,
            ignore_vbz_bounds: false,
            lp_dir: None,
        }
    }

    fn setup(&self) -> Option<Setup> {
        match self.stage {
            Stage::D1Shc => Some(Setup::Shc),
            Stage::D1Ahc => Some(Setup::Ahc),
            _ => None,
        }
    }
}

struct HourModel {
    lp: LpModel,
    g: Vec<Var>,
    curt: Vec<Option<Var>>,
    ex: Vec<Var>,
    np: Vec<Var>,
    balance: Vec<Option<Con>>,
    slack: Vec<Option<(Var, Var)>>,
}

fn build_hour(
    grid: &GridModel,
    pb: &MarketProblem,
    np_zones: &[usize],
    pos: usize,
    t: usize,
) -> Result<HourModel, DispatchError> {
    let cfg = &grid.config;
    let stage = pb.stage;
    let res = if stage == Stage::D2 {
        &grid.series.res_d2[t]
    } else {
        &grid.series.res[t]
    };
    let demand = &grid.series.demand[t];
    let mut lp = LpModel::new();

    let g: Vec<Var> = grid
        .plants
        .iter()
        .map(|p| lp.add_var(format!("G_{}", p.id), 0.0, p.g_max, p.c_var))
        .collect();
    let curt: Vec<Option<Var>> = grid
        .nodes
        .iter()
        .enumerate()
        .map(|(n, node)| {
            (res[n] > 0.0).then(|| {
                lp.add_var(
                    format!("CURT_{}", node.id),
                    0.0,
                    res[n],
                    cfg.penalties.curtailment_market,
                )
            })
        })
        .collect();
    let ex: Vec<Var> = grid
        .borders
        .iter()
        .enumerate()
        .map(|(b, border)| {
            let (lo, hi) = match pb.pinned_ex {
                Some(pinned) => (pinned[pos][b], pinned[pos][b]),
                None => (-border.ntc[t], border.ntc[t]),
            };
            lp.add_var(format!("EX_{}", border.id), lo, hi, 0.0)
        })
        .collect();
    let np: Vec<Var> = np_zones
        .iter()
        .map(|&z| {
            let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
            if let (Some(b), false) = (grid.zones[z].attached_border, pb.ignore_vbz_bounds) {
                if let Some(bounds) = cfg.vbz_bounds.get(&grid.borders[b].id) {
                    lo = bounds.min;
                    hi = bounds.max;
                }
            }
            lp.add_var(format!("NP_{}", grid.zones[z].id), lo, hi, 0.0)
        })
        .collect();

    let mut balance = vec![None; grid.zones.len()];
    let mut slack = vec![None; grid.zones.len()];
    for z in grid.physical_zones() {
        let kind = grid.zones[z].kind;
        let mut terms: Vec<(Var, f64)> = Vec::new();
        let mut rhs = 0.0;
        for &n in &grid.map.zone_nodes[z] {
            rhs += demand[n] - res[n];
            if let Some(c) = curt[n] {
                terms.push((c, -1.0));
            }
        }
        for &p in &grid.map.zone_plants[z] {
            terms.push((g[p], 1.0));
        }
        match kind {
            ZoneKind::Fb => {
                if stage != Stage::D1Ahc {
                    for &b in &grid.map.zone_borders[z] {
                        terms.push((ex[b], 1.0));
                    }
                }
                let c = np_zones.iter().position(|&x| x == z).expect("FB zone has a net position");
                terms.push((np[c], -1.0));
            }
            ZoneKind::NonFb => {
                if let Some(b) = grid.map.non_fb_border[z] {
                    terms.push((ex[b], -1.0));
                }
            }
            ZoneKind::Virtual => unreachable!(),
        }
        if let Some(price) = cfg.balance_slack_penalty {
            let id = &grid.zones[z].id;
            let up = lp.add_var(format!("UNSERVED_{id}"), 0.0, f64::INFINITY, price);
            let down = lp.add_var(format!("DUMPED_{id}"), 0.0, f64::INFINITY, price);
            terms.push((up, 1.0));
            terms.push((down, -1.0));
            slack[z] = Some((up, down));
        }
        balance[z] = Some(lp.add_eq(format!("balance_{}", grid.zones[z].id), &terms, rhs));
    }

    let np_terms: Vec<(Var, f64)> = np.iter().map(|&v| (v, 1.0)).collect();
    lp.add_eq("np_sum", &np_terms, 0.0);

    if stage == Stage::D1Ahc {
        for (c, &z) in np_zones.iter().enumerate() {
            if let Some(b) = grid.zones[z].attached_border {
                lp.add_eq(
                    format!("vbz_{}", grid.zones[z].id),
                    &[(np[c], 1.0), (ex[b], -1.0)],
                    0.0,
                );
            }
        }
    }

    if let Some(setup) = pb.setup() {
        let cp = pb.capacity.ok_or_else(|| DispatchError::Input {
            stage,
            msg: "missing capacity parameters".into(),
        })?;
        let h = cp.position(t).ok_or_else(|| DispatchError::Input {
            stage,
            msg: format!("no capacity parameters for hour {}", t + 1),
        })?;
        let ptdf = cp.zonal_ptdf(setup);
        if cp.zones(setup) != np_zones {
            return Err(DispatchError::Input {
                stage,
                msg: "capacity zones do not match the market zones".into(),
            });
        }
        let rams = cp.rams(setup);
        for j in 0..cp.cnecs.len() {
            let terms: Vec<(Var, f64)> = (0..np.len())
                .filter(|&c| ptdf[(j, c)] != 0.0)
                .map(|c| (np[c], ptdf[(j, c)]))
                .collect();
            lp.add_range(format!("cnec_{j}"), &terms, rams.neg[h][j], rams.pos[h][j]);
        }
    }

    Ok(HourModel {
        lp,
        g,
        curt,
        ex,
        np,
        balance,
        slack,
    })
}

fn solve_hour(
    grid: &GridModel,
    pb: &MarketProblem,
    np_zones: &[usize],
    pos: usize,
    t: usize,
) -> Result<MarketHour, DispatchError> {
    let m = build_hour(grid, pb, np_zones, pos, t)?;
    export_lp(pb.lp_dir.as_deref(), pb.stage, t, &m.lp)?;
    let sol = m.lp.solve();
    if !sol.is_optimal() {
        return Err(DispatchError::from_status(pb.stage, t, sol.status));
    }
    let g: Vec<f64> = m.g.iter().map(|&v| sol.value(v)).collect();
    let curt: Vec<f64> = m
        .curt
        .iter()
        .map(|c| c.map_or(0.0, |v| sol.value(v).max(0.0)))
        .collect();
    let mut cg = vec![0.0; grid.zones.len()];
    let mut cc = vec![0.0; grid.zones.len()];
    for (p, plant) in grid.plants.iter().enumerate() {
        cg[grid.nodes[plant.node].zone] += g[p] * plant.c_var;
    }
    for (n, node) in grid.nodes.iter().enumerate() {
        cc[node.zone] += curt[n] * grid.config.penalties.curtailment_market;
    }
    Ok(MarketHour {
        hour: t,
        g,
        curt,
        ex: m.ex.iter().map(|&v| sol.value(v)).collect(),
        np: m.np.iter().map(|&v| sol.value(v)).collect(),
        price: m.balance.iter().map(|c| c.map_or(0.0, |c| sol.dual(c))).collect(),
        cg,
        cc,
        slack: m
            .slack
            .iter()
            .map(|s| s.map_or(0.0, |(u, d)| sol.value(u) - sol.value(d)))
            .collect(),
        objective: sol.objective,
    })
}

/// Solves every hour independently (in parallel) and merges by hour index.
pub fn solve_market(grid: &GridModel, pb: &MarketProblem) -> Result<MarketSolution, DispatchError> {
    let np_zones = match pb.stage {
        Stage::D1Ahc => grid.ahc_zones(),
        Stage::D0 => {
            return Err(DispatchError::Input {
                stage: pb.stage,
                msg: "not a market stage".into(),
            })
        }
        _ => grid.fb_zones(),
    };
    if let Some(pinned) = pb.pinned_ex {
        if pinned.len() != pb.hours.len() {
            return Err(DispatchError::Input {
                stage: pb.stage,
                msg: "pinned exchanges do not cover the hours".into(),
            });
        }
    }
    let hours = pb
        .hours
        .par_iter()
        .enumerate()
        .map(|(pos, &t)| solve_hour(grid, pb, &np_zones, pos, t))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MarketSolution {
        stage: pb.stage,
        np_zones,
        hours,
    })
}

/// Base case on the D-2 renewable forecast.
pub fn solve_d2(grid: &GridModel, hours: &[usize]) -> Result<MarketSolution, DispatchError> {
    solve_market(grid, &MarketProblem::new(Stage::D2, hours.to_vec(), None))
}

pub fn solve_d1_shc(
    grid: &GridModel,
    cp: &CapacityParams,
    hours: &[usize],
) -> Result<MarketSolution, DispatchError> {
    solve_market(grid, &MarketProblem::new(Stage::D1Shc, hours.to_vec(), Some(cp)))
}

pub fn solve_d1_ahc(
    grid: &GridModel,
    cp: &CapacityParams,
    hours: &[usize],
) -> Result<MarketSolution, DispatchError> {
    solve_market(grid, &MarketProblem::new(Stage::D1Ahc, hours.to_vec(), Some(cp)))
}
