//! Physical and market topology of the test system.
//!
//! A [`GridModel`] is built once (from CSV via [`load_grid`] or directly via
//! [`GridModel::new`]), validated, and then shared read-only by every stage.
//! Entities are addressed by dense indices; string ids are kept for I/O and
//! error messages.

mod io;
pub mod synthetic;
pub mod topology;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ScenarioConfig;

pub use io::{load_grid, load_grid_with, save_grid};

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid directory {0} not found")]
    MissingDir(std::path::PathBuf),
    #[error("missing input file {0}")]
    MissingFile(std::path::PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: std::path::PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: std::path::PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{file}: {msg}")]
    Schema { file: String, msg: String },
    #[error("{0}")]
    Invariant(String),
}

pub(crate) fn invariant(msg: impl Into<String>) -> GridError {
    GridError::Invariant(msg.into())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZoneKind {
    /// Physical zone inside the flow-based region.
    Fb,
    /// Zone coupled to the flow-based region through an NTC border.
    NonFb,
    /// Virtual bidding zone at the FB-side end of an NTC border (AHC only).
    Virtual,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub id: String,
    pub zone: usize,
    pub is_slack: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Line {
    pub id: String,
    pub from: usize,
    pub to: usize,
    /// Per-unit susceptance; flows are `susceptance * (theta_from - theta_to)`.
    pub susceptance: f64,
    pub fmax: f64,
    pub frm: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Zone {
    pub id: String,
    pub kind: ZoneKind,
    /// Set for virtual zones only.
    pub attached_border: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Border {
    pub id: String,
    pub non_fb_zone: usize,
    /// FB-side end nodes and their GSK weights (sum to one).
    pub end_nodes: Vec<(usize, f64)>,
    /// NTC in MW, one entry per hour of the horizon.
    pub ntc: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Plant {
    pub id: String,
    pub node: usize,
    pub g_max: f64,
    pub c_var: f64,
    pub redispatchable: bool,
}

/// Hourly exogenous data, indexed `[hour][node]` with zero-based hours.
#[derive(Clone, Debug, PartialEq)]
pub struct ExogenousSeries {
    pub demand: Vec<Vec<f64>>,
    pub res: Vec<Vec<f64>>,
    pub res_d2: Vec<Vec<f64>>,
}

impl ExogenousSeries {
    pub fn zeros(horizon: usize, nodes: usize) -> Self {
        let z = vec![vec![0.0; nodes]; horizon];
        Self {
            demand: z.clone(),
            res: z.clone(),
            res_d2: z,
        }
    }

    pub fn horizon(&self) -> usize {
        self.demand.len()
    }
}

/// Lookup tables derived from entity membership fields.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Mappings {
    /// mn(z): nodes of each zone. Virtual zones list their border end nodes.
    pub zone_nodes: Vec<Vec<usize>>,
    /// mp(z)
    pub zone_plants: Vec<Vec<usize>>,
    /// mp(n)
    pub node_plants: Vec<Vec<usize>>,
    /// mprd(n)
    pub node_rd_plants: Vec<Vec<usize>>,
    /// mz(z): borders whose FB end lies in zone z.
    pub zone_borders: Vec<Vec<usize>>,
    /// FB zone hosting the end nodes of each border.
    pub border_fb_zone: Vec<usize>,
    /// Border of each non-FB zone.
    pub non_fb_border: Vec<Option<usize>>,
    /// Virtual zone created for each border, if derived.
    pub border_vbz: Vec<Option<usize>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridModel {
    pub nodes: Vec<Node>,
    pub lines: Vec<Line>,
    pub zones: Vec<Zone>,
    pub borders: Vec<Border>,
    pub plants: Vec<Plant>,
    pub series: ExogenousSeries,
    pub config: ScenarioConfig,
    pub map: Mappings,
    slack: usize,
    node_index: HashMap<String, usize>,
    line_index: HashMap<String, usize>,
    zone_index: HashMap<String, usize>,
}

impl GridModel {
    /// Validates the entities and builds all mappings.
    pub fn new(
        nodes: Vec<Node>,
        lines: Vec<Line>,
        zones: Vec<Zone>,
        borders: Vec<Border>,
        plants: Vec<Plant>,
        series: ExogenousSeries,
        config: ScenarioConfig,
    ) -> Result<Self, GridError> {
        config.validate().map_err(invariant)?;
        let node_index = unique_index(nodes.iter().map(|n| &n.id), "node")?;
        let line_index = unique_index(lines.iter().map(|l| &l.id), "line")?;
        let zone_index = unique_index(zones.iter().map(|z| &z.id), "zone")?;
        unique_index(borders.iter().map(|b| &b.id), "border")?;
        unique_index(plants.iter().map(|p| &p.id), "plant")?;

        let slacks: Vec<usize> = (0..nodes.len()).filter(|&i| nodes[i].is_slack).collect();
        let slack = match slacks.as_slice() {
            [s] => *s,
            [] => return Err(invariant("no slack node")),
            _ => return Err(invariant("multiple slack nodes")),
        };

        for n in &nodes {
            let zone = zones
                .get(n.zone)
                .ok_or_else(|| invariant(format!("node {} references an unknown zone", n.id)))?;
            if zone.kind == ZoneKind::Virtual {
                return Err(invariant(format!(
                    "node {} is assigned to virtual zone {}",
                    n.id, zone.id
                )));
            }
        }
        if zones[nodes[slack].zone].kind != ZoneKind::Fb {
            return Err(invariant("slack node must lie in a flow-based zone"));
        }

        for l in &lines {
            if l.from >= nodes.len() || l.to >= nodes.len() {
                return Err(invariant(format!("line {} references an unknown node", l.id)));
            }
            if l.from == l.to {
                return Err(invariant(format!("line {} is a self-loop", l.id)));
            }
            if !(l.fmax > 0.0 && l.fmax.is_finite()) {
                return Err(invariant(format!("line {}: fmax must be positive", l.id)));
            }
            if !(l.frm >= 0.0 && l.frm < l.fmax) {
                return Err(invariant(format!("line {}: require 0 <= frm < fmax", l.id)));
            }
            if !(l.susceptance > 0.0 && l.susceptance.is_finite()) {
                return Err(invariant(format!("line {}: susceptance must be positive", l.id)));
            }
        }

        for p in &plants {
            if p.node >= nodes.len() {
                return Err(invariant(format!("plant {} references an unknown node", p.id)));
            }
            if !(p.g_max > 0.0 && p.g_max.is_finite()) {
                return Err(invariant(format!("plant {}: g_max must be positive", p.id)));
            }
            if !(p.c_var >= 0.0 && p.c_var.is_finite()) {
                return Err(invariant(format!("plant {}: c_var must be non-negative", p.id)));
            }
        }

        let horizon = series.horizon();
        if horizon == 0 {
            return Err(invariant("time series are empty"));
        }
        for (name, s) in [
            ("demand", &series.demand),
            ("res", &series.res),
            ("res_d2", &series.res_d2),
        ] {
            if s.len() != horizon {
                return Err(invariant(format!("{name} series horizon differs from demand")));
            }
            for row in s {
                if row.len() != nodes.len() {
                    return Err(invariant(format!("{name} series has wrong node count")));
                }
                if row.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                    return Err(invariant(format!("{name} series has negative values")));
                }
            }
        }

        // Borders
        let mut non_fb_border = vec![None; zones.len()];
        let mut border_fb_zone = Vec::with_capacity(borders.len());
        for (bi, b) in borders.iter().enumerate() {
            let zone = zones
                .get(b.non_fb_zone)
                .ok_or_else(|| invariant(format!("border {} references an unknown zone", b.id)))?;
            if zone.kind != ZoneKind::NonFb {
                return Err(invariant(format!(
                    "border {}: zone {} is not a non-FB zone",
                    b.id, zone.id
                )));
            }
            if non_fb_border[b.non_fb_zone].replace(bi).is_some() {
                return Err(invariant(format!(
                    "non-FB zone {} has more than one border",
                    zone.id
                )));
            }
            if b.end_nodes.is_empty() {
                return Err(invariant(format!("border {} has no end nodes", b.id)));
            }
            let mut fb_zone = None;
            let mut wsum = 0.0;
            for &(n, w) in &b.end_nodes {
                let node = nodes
                    .get(n)
                    .ok_or_else(|| invariant(format!("border {} references an unknown node", b.id)))?;
                if zones[node.zone].kind != ZoneKind::Fb {
                    return Err(invariant(format!(
                        "border {}: end node {} is not in a flow-based zone",
                        b.id, node.id
                    )));
                }
                if *fb_zone.get_or_insert(node.zone) != node.zone {
                    return Err(invariant(format!(
                        "border {}: end nodes span several flow-based zones",
                        b.id
                    )));
                }
                if w.is_nan() || w < 0.0 {
                    return Err(invariant(format!("border {}: negative GSK weight", b.id)));
                }
                wsum += w;
            }
            if (wsum - 1.0).abs() > 1e-9 {
                return Err(invariant(format!(
                    "border {}: end-node weights sum to {wsum}, expected 1",
                    b.id
                )));
            }
            if b.ntc.len() != horizon {
                return Err(invariant(format!("border {}: NTC series has wrong length", b.id)));
            }
            if b.ntc.iter().any(|v| v.is_nan() || *v < 0.0) {
                return Err(invariant(format!("border {}: negative NTC", b.id)));
            }
            border_fb_zone.push(fb_zone.expect("non-empty end nodes"));
        }

        // Virtual zones
        let mut border_vbz = vec![None; borders.len()];
        for (zi, z) in zones.iter().enumerate() {
            match (z.kind, z.attached_border) {
                (ZoneKind::Virtual, Some(b)) => {
                    if b >= borders.len() {
                        return Err(invariant(format!("virtual zone {} has unknown border", z.id)));
                    }
                    if border_vbz[b].replace(zi).is_some() {
                        return Err(invariant(format!(
                            "border {} has more than one virtual zone",
                            borders[b].id
                        )));
                    }
                }
                (ZoneKind::Virtual, None) => {
                    return Err(invariant(format!(
                        "virtual zone {} must have exactly one attached border",
                        z.id
                    )))
                }
                (_, Some(_)) => {
                    return Err(invariant(format!(
                        "zone {} is not virtual but has an attached border",
                        z.id
                    )))
                }
                _ => {}
            }
        }

        let mut zone_nodes = vec![Vec::new(); zones.len()];
        for (i, n) in nodes.iter().enumerate() {
            zone_nodes[n.zone].push(i);
        }
        for (b, vz) in border_vbz.iter().enumerate() {
            if let Some(vz) = vz {
                zone_nodes[*vz] = borders[b].end_nodes.iter().map(|&(n, _)| n).collect();
            }
        }
        let mut node_plants = vec![Vec::new(); nodes.len()];
        let mut node_rd_plants = vec![Vec::new(); nodes.len()];
        let mut zone_plants = vec![Vec::new(); zones.len()];
        for (i, p) in plants.iter().enumerate() {
            node_plants[p.node].push(i);
            if p.redispatchable {
                node_rd_plants[p.node].push(i);
            }
            zone_plants[nodes[p.node].zone].push(i);
        }
        let mut zone_borders = vec![Vec::new(); zones.len()];
        for (b, &z) in border_fb_zone.iter().enumerate() {
            zone_borders[z].push(b);
        }

        let grid = Self {
            map: Mappings {
                zone_nodes,
                zone_plants,
                node_plants,
                node_rd_plants,
                zone_borders,
                border_fb_zone,
                non_fb_border,
                border_vbz,
            },
            nodes,
            lines,
            zones,
            borders,
            plants,
            series,
            config,
            slack,
            node_index,
            line_index,
            zone_index,
        };
        grid.check_topology()?;
        Ok(grid)
    }

    fn check_topology(&self) -> Result<(), GridError> {
        let fb_nodes: Vec<bool> = self
            .nodes
            .iter()
            .map(|n| self.zones[n.zone].kind == ZoneKind::Fb)
            .collect();
        if !topology::is_connected(self, &fb_nodes, None) {
            return Err(invariant("the flow-based part of the grid is not connected"));
        }
        let all = vec![true; self.nodes.len()];
        if !topology::is_connected(self, &all, None) {
            return Err(invariant("the grid is not connected"));
        }
        // A non-FB zone may touch the FB area only at its own border end nodes.
        for l in &self.lines {
            let (zf, zt) = (self.nodes[l.from].zone, self.nodes[l.to].zone);
            if zf == zt {
                continue;
            }
            for (own, other_node) in [(zf, l.to), (zt, l.from)] {
                if self.zones[own].kind != ZoneKind::NonFb {
                    continue;
                }
                let border = self.map.non_fb_border[own].ok_or_else(|| {
                    invariant(format!(
                        "line {} connects non-FB zone {} which has no border",
                        l.id, self.zones[own].id
                    ))
                })?;
                if !self.borders[border].end_nodes.iter().any(|&(n, _)| n == other_node) {
                    return Err(invariant(format!(
                        "line {} connects non-FB zone {} outside its border end nodes",
                        l.id, self.zones[own].id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn slack(&self) -> usize {
        self.slack
    }

    pub fn horizon(&self) -> usize {
        self.series.horizon()
    }

    pub fn node_by_id(&self, id: &str) -> Option<usize> {
        self.node_index.get(id).copied()
    }

    pub fn line_by_id(&self, id: &str) -> Option<usize> {
        self.line_index.get(id).copied()
    }

    pub fn zone_by_id(&self, id: &str) -> Option<usize> {
        self.zone_index.get(id).copied()
    }

    pub fn zone_kind_of_node(&self, n: usize) -> ZoneKind {
        self.zones[self.nodes[n].zone].kind
    }

    /// Zones of the given kind, in index order.
    pub fn zones_of(&self, kind: ZoneKind) -> Vec<usize> {
        (0..self.zones.len())
            .filter(|&z| self.zones[z].kind == kind)
            .collect()
    }

    pub fn fb_zones(&self) -> Vec<usize> {
        self.zones_of(ZoneKind::Fb)
    }

    pub fn non_fb_zones(&self) -> Vec<usize> {
        self.zones_of(ZoneKind::NonFb)
    }

    pub fn virtual_zones(&self) -> Vec<usize> {
        self.zones_of(ZoneKind::Virtual)
    }

    /// Z^FB_AHC: physical FB zones followed by virtual zones.
    pub fn ahc_zones(&self) -> Vec<usize> {
        let mut z = self.fb_zones();
        z.extend(self.virtual_zones());
        z
    }

    /// Physical zones (FB and non-FB) in index order.
    pub fn physical_zones(&self) -> Vec<usize> {
        (0..self.zones.len())
            .filter(|&z| self.zones[z].kind != ZoneKind::Virtual)
            .collect()
    }

    /// Lines with both endpoints inside FB zones.
    pub fn fb_lines(&self) -> Vec<usize> {
        (0..self.lines.len())
            .filter(|&l| {
                let line = &self.lines[l];
                self.zone_kind_of_node(line.from) == ZoneKind::Fb
                    && self.zone_kind_of_node(line.to) == ZoneKind::Fb
            })
            .collect()
    }

    /// Non-FB zone mapped to a virtual zone (mvbz).
    pub fn vbz_non_fb_zones(&self, vz: usize) -> Vec<usize> {
        match self.zones[vz].attached_border {
            Some(b) if self.zones[vz].kind == ZoneKind::Virtual => {
                vec![self.borders[b].non_fb_zone]
            }
            _ => Vec::new(),
        }
    }

    /// Demand of a zone; zero for virtual zones.
    pub fn zone_demand(&self, z: usize, t: usize) -> f64 {
        self.zone_sum(z, &self.series.demand[t])
    }

    /// Available renewables of a zone; zero for virtual zones.
    pub fn zone_res(&self, z: usize, t: usize) -> f64 {
        self.zone_sum(z, &self.series.res[t])
    }

    pub fn zone_g_max(&self, z: usize) -> f64 {
        self.map.zone_plants[z]
            .iter()
            .map(|&p| self.plants[p].g_max)
            .sum()
    }

    fn zone_sum(&self, z: usize, per_node: &[f64]) -> f64 {
        if self.zones[z].kind == ZoneKind::Virtual {
            return 0.0;
        }
        self.map.zone_nodes[z].iter().map(|&n| per_node[n]).sum()
    }

    /// Net NTC of a non-FB zone's border in hour `t`.
    pub fn ntc_of_zone(&self, z: usize, t: usize) -> f64 {
        self.map.non_fb_border[z]
            .map(|b| self.borders[b].ntc[t])
            .unwrap_or(0.0)
    }

    /// Replaces the D-2 renewable forecast.
    pub fn with_res_forecast(mut self, res_d2: Vec<Vec<f64>>) -> Result<Self, GridError> {
        if res_d2.len() != self.horizon() || res_d2.iter().any(|r| r.len() != self.nodes.len()) {
            return Err(invariant("forecast has wrong shape"));
        }
        if res_d2.iter().flatten().any(|v| v.is_nan() || *v < 0.0) {
            return Err(invariant("forecast has negative values"));
        }
        self.series.res_d2 = res_d2;
        Ok(self)
    }

    /// Rebuilds a model from parts, re-running validation.
    pub fn rebuild(self) -> Result<Self, GridError> {
        Self::new(
            self.nodes,
            self.lines,
            self.zones,
            self.borders,
            self.plants,
            self.series,
            self.config,
        )
    }
}

fn unique_index<'a>(
    ids: impl Iterator<Item = &'a String>,
    what: &str,
) -> Result<HashMap<String, usize>, GridError> {
    let mut map = HashMap::new();
    for (i, id) in ids.enumerate() {
        if map.insert(id.clone(), i).is_some() {
            return Err(invariant(format!("duplicate {what} id {id}")));
        }
    }
    Ok(map)
}

/// Adds one virtual bidding zone per NTC border, placed on the border's
/// FB-side end nodes. Borders that already carry a virtual zone are skipped.
pub fn derive_virtual_zones(grid: GridModel) -> Result<GridModel, GridError> {
    if grid.borders.iter().any(|b| b.end_nodes.is_empty()) {
        return Err(invariant("border with empty end nodes"));
    }
    let mut grid = grid;
    for b in 0..grid.borders.len() {
        if grid.map.border_vbz[b].is_some() {
            continue;
        }
        let id = format!("VBZ_{}", grid.borders[b].id);
        grid.zones.push(Zone {
            id,
            kind: ZoneKind::Virtual,
            attached_border: Some(b),
        });
    }
    grid.rebuild()
}

#[cfg(test)]
pub(crate) mod testing {
    //! Small hand-built grids shared by unit tests across the crate.
    use super::*;

    pub fn node(id: &str, zone: usize, slack: bool) -> Node {
        Node {
            id: id.into(),
            zone,
            is_slack: slack,
        }
    }

    pub fn line(id: &str, from: usize, to: usize, b: f64, fmax: f64) -> Line {
        Line {
            id: id.into(),
            from,
            to,
            susceptance: b,
            fmax,
            frm: 0.0,
        }
    }

    pub fn zone(id: &str, kind: ZoneKind) -> Zone {
        Zone {
            id: id.into(),
            kind,
            attached_border: None,
        }
    }

    pub fn plant(id: &str, node: usize, g_max: f64, c_var: f64) -> Plant {
        Plant {
            id: id.into(),
            node,
            g_max,
            c_var,
            redispatchable: true,
        }
    }

    /// Two FB zones (A: n1 slack, n2; B: n3, n4) in a ring, plus non-FB zone X
    /// (node n5) attached to n4 through border BX.
    pub fn ring_with_border(hours: usize) -> GridModel {
        let nodes = vec![
            node("n1", 0, true),
            node("n2", 0, false),
            node("n3", 1, false),
            node("n4", 1, false),
            node("n5", 2, false),
        ];
        let lines = vec![
            line("l12", 0, 1, 1.0, 500.0),
            line("l23", 1, 2, 2.0, 500.0),
            line("l34", 2, 3, 1.0, 500.0),
            line("l41", 3, 0, 1.5, 500.0),
            line("l13", 0, 2, 1.0, 500.0),
            line("l45", 3, 4, 1.0, 5000.0),
        ];
        let zones = vec![
            zone("A", ZoneKind::Fb),
            zone("B", ZoneKind::Fb),
            zone("X", ZoneKind::NonFb),
        ];
        let borders = vec![Border {
            id: "BX".into(),
            non_fb_zone: 2,
            end_nodes: vec![(3, 1.0)],
            ntc: vec![300.0; hours],
        }];
        let plants = vec![
            plant("pA1", 0, 400.0, 10.0),
            plant("pA2", 1, 400.0, 30.0),
            plant("pB1", 2, 400.0, 50.0),
            plant("pB2", 3, 400.0, 70.0),
            plant("pX", 4, 600.0, 20.0),
        ];
        let mut series = ExogenousSeries::zeros(hours, 5);
        for t in 0..hours {
            series.demand[t] = vec![50.0, 100.0, 150.0, 100.0, 200.0];
        }
        GridModel::new(
            nodes,
            lines,
            zones,
            borders,
            plants,
            series,
            ScenarioConfig::default(),
        )
        .unwrap()
    }
}
