//! CSV/JSON input directory reader and writer.
//!
//! Layout of a grid directory:
//!
//! | file          | columns                                        |
//! |---------------|------------------------------------------------|
//! | `nodes.csv`   | `id,zone,is_slack`                             |
//! | `zones.csv`   | `id,kind,attached_border` (`kind`: fb, non_fb, virtual) |
//! | `lines.csv`   | `id,from,to,susceptance,fmax,frm` (`frm` may be empty) |
//! | `borders.csv` | `id,non_fb_zone,end_node,weight,ntc_mw` (one row per end node) |
//! | `plants.csv`  | `id,node,g_max,c_var,redispatchable`           |
//! | `demand.csv`, `res.csv` | `hour,node,value` (missing entries are zero) |
//! | `res_d2.csv`  | optional D-2 forecast, same layout as `res.csv` |
//! | `ntc.csv`     | optional `hour,border,value` NTC overrides      |
//! | `config.json` | optional [`ScenarioConfig`]                     |
//!
//! Hours are 1-indexed in every file.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize};

use super::{Border, ExogenousSeries, GridError, GridModel, Line, Node, Plant, Zone, ZoneKind};
use crate::config::ScenarioConfig;

#[derive(Debug, Deserialize, Serialize)]
struct NodeRow {
    id: String,
    zone: String,
    #[serde(deserialize_with = "flag")]
    is_slack: bool,
}

#[derive(Debug, Deserialize, Serialize)]
struct ZoneRow {
    id: String,
    kind: ZoneKind,
    #[serde(default)]
    attached_border: Option<String>,
}

#[derive(Debug, Deserialize, Serialize)]
struct LineRow {
    id: String,
    from: String,
    to: String,
    susceptance: f64,
    fmax: f64,
    #[serde(default)]
    frm: Option<f64>,
}

#[derive(Debug, Deserialize, Serialize)]
struct BorderRow {
    id: String,
    non_fb_zone: String,
    end_node: String,
    weight: f64,
    ntc_mw: f64,
}

#[derive(Debug, Deserialize, Serialize)]
struct PlantRow {
    id: String,
    node: String,
    g_max: f64,
    c_var: f64,
    #[serde(deserialize_with = "flag")]
    redispatchable: bool,
}

#[derive(Debug, Deserialize, Serialize)]
struct SeriesRow {
    hour: usize,
    node: String,
    value: f64,
}

#[derive(Debug, Deserialize, Serialize)]
struct NtcRow {
    hour: usize,
    border: String,
    value: f64,
}

fn flag<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
    let s = String::deserialize(d)?;
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" | "" => Ok(false),
        other => Err(serde::de::Error::custom(format!("invalid flag {other:?}"))),
    }
}

fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, GridError> {
    if !path.is_file() {
        return Err(GridError::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|source| GridError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
    reader
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|source| GridError::Csv {
            path: path.to_path_buf(),
            source,
        })
}

fn schema(file: &str, msg: impl Into<String>) -> GridError {
    GridError::Schema {
        file: file.to_string(),
        msg: msg.into(),
    }
}

fn lookup(
    index: &HashMap<String, usize>,
    id: &str,
    file: &str,
    what: &str,
    owner: &str,
) -> Result<usize, GridError> {
    index
        .get(id)
        .copied()
        .ok_or_else(|| schema(file, format!("{owner} references unknown {what} {id}")))
}

/// Reads and validates a grid directory.
pub fn load_grid(dir: impl AsRef<Path>) -> Result<GridModel, GridError> {
    load_grid_with(dir, |_| {})
}

/// Like [`load_grid`], with config overrides applied before any
/// config-dependent default (such as line FRMs) is resolved.
pub fn load_grid_with(
    dir: impl AsRef<Path>,
    adjust: impl FnOnce(&mut ScenarioConfig),
) -> Result<GridModel, GridError> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(GridError::MissingDir(dir.to_path_buf()));
    }
    let mut config = read_config(&dir.join("config.json"))?;
    adjust(&mut config);

    let zone_rows: Vec<ZoneRow> = read_rows(&dir.join("zones.csv"))?;
    let node_rows: Vec<NodeRow> = read_rows(&dir.join("nodes.csv"))?;
    let line_rows: Vec<LineRow> = read_rows(&dir.join("lines.csv"))?;
    let border_rows: Vec<BorderRow> = read_rows(&dir.join("borders.csv"))?;
    let plant_rows: Vec<PlantRow> = read_rows(&dir.join("plants.csv"))?;
    let demand_rows: Vec<SeriesRow> = read_rows(&dir.join("demand.csv"))?;
    let res_rows: Vec<SeriesRow> = read_rows(&dir.join("res.csv"))?;
    let res_d2_path = dir.join("res_d2.csv");
    let res_d2_rows: Option<Vec<SeriesRow>> = if res_d2_path.is_file() {
        Some(read_rows(&res_d2_path)?)
    } else {
        None
    };
    let ntc_path = dir.join("ntc.csv");
    let ntc_rows: Vec<NtcRow> = if ntc_path.is_file() {
        read_rows(&ntc_path)?
    } else {
        Vec::new()
    };

    let zone_index: HashMap<String, usize> = zone_rows
        .iter()
        .enumerate()
        .map(|(i, z)| (z.id.clone(), i))
        .collect();
    let node_index: HashMap<String, usize> = node_rows
        .iter()
        .enumerate()
        .map(|(i, n)| (n.id.clone(), i))
        .collect();

    let nodes = node_rows
        .iter()
        .map(|r| {
            Ok(Node {
                id: r.id.clone(),
                zone: lookup(&zone_index, &r.zone, "nodes.csv", "zone", &format!("node {}", r.id))?,
                is_slack: r.is_slack,
            })
        })
        .collect::<Result<Vec<_>, GridError>>()?;

    let lines = line_rows
        .iter()
        .map(|r| {
            let owner = format!("line {}", r.id);
            Ok(Line {
                id: r.id.clone(),
                from: lookup(&node_index, &r.from, "lines.csv", "node", &owner)?,
                to: lookup(&node_index, &r.to, "lines.csv", "node", &owner)?,
                susceptance: r.susceptance,
                fmax: r.fmax,
                frm: r.frm.unwrap_or(config.frm_default * r.fmax),
            })
        })
        .collect::<Result<Vec<_>, GridError>>()?;

    let plants = plant_rows
        .iter()
        .map(|r| {
            Ok(Plant {
                id: r.id.clone(),
                node: lookup(&node_index, &r.node, "plants.csv", "node", &format!("plant {}", r.id))?,
                g_max: r.g_max,
                c_var: r.c_var,
                redispatchable: r.redispatchable,
            })
        })
        .collect::<Result<Vec<_>, GridError>>()?;

    let horizon = demand_rows
        .iter()
        .chain(&res_rows)
        .chain(res_d2_rows.iter().flatten())
        .map(|r| r.hour)
        .max()
        .unwrap_or(0);
    if horizon == 0 {
        return Err(schema("demand.csv", "no hourly data"));
    }
    let demand = fill_series(&demand_rows, horizon, &node_index, "demand.csv")?;
    let res = fill_series(&res_rows, horizon, &node_index, "res.csv")?;
    let res_d2 = match &res_d2_rows {
        Some(rows) => fill_series(rows, horizon, &node_index, "res_d2.csv")?,
        None => res.clone(),
    };

    // Borders keep their first-appearance order.
    let mut borders: Vec<Border> = Vec::new();
    let mut border_index: HashMap<String, usize> = HashMap::new();
    for r in &border_rows {
        let owner = format!("border {}", r.id);
        let end = lookup(&node_index, &r.end_node, "borders.csv", "node", &owner)?;
        let zone = lookup(&zone_index, &r.non_fb_zone, "borders.csv", "zone", &owner)?;
        match border_index.get(&r.id) {
            Some(&b) => {
                let border = &mut borders[b];
                if border.non_fb_zone != zone || border.ntc[0] != r.ntc_mw {
                    return Err(schema(
                        "borders.csv",
                        format!("rows of border {} disagree on zone or NTC", r.id),
                    ));
                }
                border.end_nodes.push((end, r.weight));
            }
            None => {
                border_index.insert(r.id.clone(), borders.len());
                borders.push(Border {
                    id: r.id.clone(),
                    non_fb_zone: zone,
                    end_nodes: vec![(end, r.weight)],
                    ntc: vec![r.ntc_mw; horizon],
                });
            }
        }
    }
    for r in &ntc_rows {
        let b = lookup(&border_index, &r.border, "ntc.csv", "border", "ntc row")?;
        if r.hour == 0 || r.hour > horizon {
            return Err(schema("ntc.csv", format!("hour {} outside horizon", r.hour)));
        }
        borders[b].ntc[r.hour - 1] = r.value;
    }
    for (id, &value) in &config.ntc_overrides {
        let b = lookup(&border_index, id, "config.json", "border", "ntc_overrides")?;
        borders[b].ntc = vec![value; horizon];
    }
    for id in config.vbz_bounds.keys() {
        lookup(&border_index, id, "config.json", "border", "vbz_bounds")?;
    }

    let zones = zone_rows
        .iter()
        .map(|r| {
            let attached_border = match &r.attached_border {
                Some(b) if !b.is_empty() => Some(lookup(
                    &border_index,
                    b,
                    "zones.csv",
                    "border",
                    &format!("zone {}", r.id),
                )?),
                _ => None,
            };
            Ok(Zone {
                id: r.id.clone(),
                kind: r.kind,
                attached_border,
            })
        })
        .collect::<Result<Vec<_>, GridError>>()?;

    GridModel::new(
        nodes,
        lines,
        zones,
        borders,
        plants,
        ExogenousSeries {
            demand,
            res,
            res_d2,
        },
        config,
    )
}

fn read_config(path: &Path) -> Result<ScenarioConfig, GridError> {
    if !path.is_file() {
        return Ok(ScenarioConfig::default());
    }
    let text = fs::read_to_string(path).map_err(|source| GridError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| GridError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn fill_series(
    rows: &[SeriesRow],
    horizon: usize,
    node_index: &HashMap<String, usize>,
    file: &str,
) -> Result<Vec<Vec<f64>>, GridError> {
    let mut out = vec![vec![0.0; node_index.len()]; horizon];
    let mut seen = HashSet::new();
    for r in rows {
        if r.hour == 0 {
            return Err(schema(file, "hours are 1-indexed"));
        }
        let n = lookup(node_index, &r.node, file, "node", &format!("hour {}", r.hour))?;
        if !seen.insert((r.hour, n)) {
            return Err(schema(file, format!("duplicate entry for hour {} node {}", r.hour, r.node)));
        }
        if !(r.value >= 0.0 && r.value.is_finite()) {
            return Err(schema(
                file,
                format!("negative value at hour {} node {}", r.hour, r.node),
            ));
        }
        out[r.hour - 1][n] = r.value;
    }
    Ok(out)
}

fn write_rows<T: Serialize>(path: PathBuf, rows: impl IntoIterator<Item = T>) -> Result<(), GridError> {
    let mut w = csv::Writer::from_path(&path).map_err(|source| GridError::Csv {
        path: path.clone(),
        source,
    })?;
    for r in rows {
        w.serialize(r).map_err(|source| GridError::Csv {
            path: path.clone(),
            source,
        })?;
    }
    w.flush().map_err(|source| GridError::Io { path, source })
}

fn series_rows<'a>(grid: &'a GridModel, s: &'a [Vec<f64>]) -> impl Iterator<Item = SeriesRow> + 'a {
    s.iter().enumerate().flat_map(move |(t, row)| {
        row.iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(move |(n, &value)| SeriesRow {
                hour: t + 1,
                node: grid.nodes[n].id.clone(),
                value,
            })
    })
}

/// Writes a grid directory readable by [`load_grid`].
pub fn save_grid(grid: &GridModel, dir: impl AsRef<Path>) -> Result<(), GridError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|source| GridError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    write_rows(
        dir.join("zones.csv"),
        grid.zones.iter().map(|z| ZoneRow {
            id: z.id.clone(),
            kind: z.kind,
            attached_border: z.attached_border.map(|b| grid.borders[b].id.clone()),
        }),
    )?;
    write_rows(
        dir.join("nodes.csv"),
        grid.nodes.iter().map(|n| NodeRow {
            id: n.id.clone(),
            zone: grid.zones[n.zone].id.clone(),
            is_slack: n.is_slack,
        }),
    )?;
    write_rows(
        dir.join("lines.csv"),
        grid.lines.iter().map(|l| LineRow {
            id: l.id.clone(),
            from: grid.nodes[l.from].id.clone(),
            to: grid.nodes[l.to].id.clone(),
            susceptance: l.susceptance,
            fmax: l.fmax,
            // empty when it is the configured default share
            frm: (l.frm != grid.config.frm_default * l.fmax).then_some(l.frm),
        }),
    )?;
    write_rows(
        dir.join("borders.csv"),
        grid.borders.iter().flat_map(|b| {
            b.end_nodes.iter().map(move |&(n, weight)| BorderRow {
                id: b.id.clone(),
                non_fb_zone: grid.zones[b.non_fb_zone].id.clone(),
                end_node: grid.nodes[n].id.clone(),
                weight,
                ntc_mw: b.ntc[0],
            })
        }),
    )?;
    write_rows(
        dir.join("plants.csv"),
        grid.plants.iter().map(|p| PlantRow {
            id: p.id.clone(),
            node: grid.nodes[p.node].id.clone(),
            g_max: p.g_max,
            c_var: p.c_var,
            redispatchable: p.redispatchable,
        }),
    )?;
    write_rows(dir.join("demand.csv"), series_rows(grid, &grid.series.demand))?;
    write_rows(dir.join("res.csv"), series_rows(grid, &grid.series.res))?;
    if grid.series.res_d2 != grid.series.res {
        write_rows(dir.join("res_d2.csv"), series_rows(grid, &grid.series.res_d2))?;
    }
    let ntc_changes: Vec<NtcRow> = grid
        .borders
        .iter()
        .flat_map(|b| {
            b.ntc
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != b.ntc[0])
                .map(|(t, &value)| NtcRow {
                    hour: t + 1,
                    border: b.id.clone(),
                    value,
                })
        })
        .collect();
    if !ntc_changes.is_empty() {
        write_rows(dir.join("ntc.csv"), ntc_changes)?;
    }
    let config_path = dir.join("config.json");
    let mut text = serde_json::to_string_pretty(&grid.config).map_err(|source| GridError::Json {
        path: config_path.clone(),
        source,
    })?;
    text.push('\n');
    fs::write(&config_path, text).map_err(|source| GridError::Io {
        path: config_path,
        source,
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::derive_virtual_zones;
    use crate::grid::testing::ring_with_border;

    #[test]
    fn round_trip_is_identity() {
        let mut g = ring_with_border(3);
        g.series.res[1][2] = 42.5;
        g.series.res_d2[1][2] = 40.0;
        g.borders[0].ntc[2] = 123.0;
        let g = derive_virtual_zones(g.rebuild().unwrap()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_grid(&g, dir.path()).unwrap();
        let back = load_grid(dir.path()).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn missing_directory_names_path() {
        let err = load_grid("/definitely/not/here").unwrap_err();
        assert!(err.to_string().contains("/definitely/not/here"));
    }

    #[test]
    fn unknown_plant_node_is_reported() {
        let g = ring_with_border(1);
        let dir = tempfile::tempdir().unwrap();
        save_grid(&g, dir.path()).unwrap();
        let plants = fs::read_to_string(dir.path().join("plants.csv")).unwrap();
        fs::write(
            dir.path().join("plants.csv"),
            format!("{plants}pZ,nowhere,10,1,true\n"),
        )
        .unwrap();
        let err = load_grid(dir.path()).unwrap_err();
        assert!(err.to_string().contains("plant pZ"), "{err}");
    }

    #[test]
    fn two_slacks_in_file() {
        let g = ring_with_border(1);
        let dir = tempfile::tempdir().unwrap();
        save_grid(&g, dir.path()).unwrap();
        let nodes = fs::read_to_string(dir.path().join("nodes.csv"))
            .unwrap()
            .replace("n2,A,false", "n2,A,true");
        fs::write(dir.path().join("nodes.csv"), nodes).unwrap();
        let err = load_grid(dir.path()).unwrap_err();
        assert!(err.to_string().contains("multiple slack nodes"));
    }

    #[test]
    fn missing_frm_uses_default_fraction() {
        let g = ring_with_border(1);
        let dir = tempfile::tempdir().unwrap();
        save_grid(&g, dir.path()).unwrap();
        let lines = fs::read_to_string(dir.path().join("lines.csv")).unwrap();
        let stripped: String = lines
            .lines()
            .enumerate()
            .map(|(i, l)| {
                if i == 0 {
                    format!("{l}\n")
                } else {
                    let mut parts: Vec<&str> = l.split(',').collect();
                    parts[5] = "";
                    format!("{}\n", parts.join(","))
                }
            })
            .collect();
        fs::write(dir.path().join("lines.csv"), stripped).unwrap();
        let back = load_grid(dir.path()).unwrap();
        assert!((back.lines[0].frm - 0.05 * back.lines[0].fmax).abs() < 1e-12);
    }
}
