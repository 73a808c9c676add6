use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{distance_to_borders, domain_projection, fuaf_deviation, spearman, Branch, StudyError, StudyRun};
use crate::capacity::write_capacity_csv;
use crate::config::DomainVbzMode;
use crate::dispatch::{market_injection, AuditReport};
use crate::grid::{GridModel, ZoneKind};
use crate::sensitivity::{CnecSet, Setup};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSummary {
    pub nodes: usize,
    pub lines: usize,
    pub fb_zones: usize,
    pub non_fb_zones: usize,
    pub virtual_zones: usize,
    pub cnes_shc: usize,
    pub cnes_ahc: usize,
    pub cnecs_shc: usize,
    pub cnecs_ahc: usize,
    pub congestion_management_entries: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetupSummary {
    pub d1_objective: f64,
    pub generation_by_zone: BTreeMap<String, f64>,
    pub generation_fb: f64,
    pub generation_non_fb: f64,
    pub congestion_management: f64,
    pub fb_total: f64,
    pub total: f64,
    pub redispatch_up_mwh: f64,
    pub redispatch_down_mwh: f64,
    pub curtailment_d0_mwh: f64,
    /// Highest |n-1 flow| / (fmax - frm) of the D-1 result.
    pub max_loading_d1: f64,
    pub max_loading_d0: f64,
    /// Lines above fmax - frm under some outage before congestion management.
    pub overloaded_lines_d1: usize,
    pub audit_d1: AuditReport,
    pub audit_d0: AuditReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationSummary {
    pub cnecs: usize,
    pub mean_abs: f64,
    pub max_abs: f64,
    /// Rank correlation of the per-CNEC spread with the hop distance to the
    /// nearest border end node (negative when spread concentrates near borders).
    pub spread_vs_distance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSummary {
    pub setup: Setup,
    pub hour: usize,
    pub vertices: usize,
    pub unbounded: bool,
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub seed: u64,
    pub first_hour: usize,
    pub hours: usize,
    pub network: NetworkSummary,
    pub reference_hash: String,
    /// Both branches consumed the same D-2 reference.
    pub paired: bool,
    pub audit_d2: AuditReport,
    pub shc: SetupSummary,
    pub ahc: SetupSummary,
    pub ahc_fb_cost_not_higher: bool,
    pub ahc_total_cost_not_higher: bool,
    pub fuaf_deviation: DeviationSummary,
    pub domains: Vec<DomainSummary>,
}

/// Max |flow| / capacity per line over all hours and monitored outages.
fn line_loadings(grid: &GridModel, cm: &CnecSet, flows: impl Iterator<Item = Vec<f64>>) -> Vec<f64> {
    let mut max = vec![0.0f64; grid.lines.len()];
    for f in flows {
        for (j, e) in cm.entries.iter().enumerate() {
            let line = &grid.lines[e.line];
            max[e.line] = max[e.line].max(f[j].abs() / (line.fmax - line.frm));
        }
    }
    max
}

struct BranchFlows {
    d1: Vec<f64>,
    d0: Vec<f64>,
}

fn branch_flows(run: &StudyRun, b: &Branch) -> BranchFlows {
    let grid = &run.prepared.grid;
    let rows = run.prepared.sens.cm_set.nodal_rows(&run.prepared.sens.ptdf);
    let d1 = b.d1.hours.iter().map(|h| {
        let inj = market_injection(grid, h, &grid.series.res[h.hour]);
        (&rows * nalgebra::DVector::from_column_slice(&inj)).iter().copied().collect()
    });
    BranchFlows {
        d1: line_loadings(grid, &run.prepared.sens.cm_set, d1),
        d0: line_loadings(
            grid,
            &run.prepared.sens.cm_set,
            b.d0.hours.iter().map(|h| h.flows.clone()),
        ),
    }
}

fn setup_summary(run: &StudyRun, b: &Branch, flows: &BranchFlows) -> SetupSummary {
    let grid = &run.prepared.grid;
    let c = &b.costs;
    let sum = |f: &dyn Fn(&crate::dispatch::CongestionHour) -> f64| b.d0.hours.iter().map(f).sum::<f64>();
    SetupSummary {
        d1_objective: b.d1.objective(),
        generation_by_zone: grid
            .physical_zones()
            .into_iter()
            .map(|z| (grid.zones[z].id.clone(), c.generation_by_zone[z]))
            .collect(),
        generation_fb: c.generation_fb,
        generation_non_fb: c.generation_non_fb,
        congestion_management: c.congestion_management,
        fb_total: c.fb_total,
        total: c.total,
        redispatch_up_mwh: sum(&|h| h.rd_pos.iter().sum()),
        redispatch_down_mwh: sum(&|h| h.rd_neg.iter().sum()),
        curtailment_d0_mwh: sum(&|h| h.curt.iter().sum()),
        max_loading_d1: flows.d1.iter().copied().fold(0.0, f64::max),
        max_loading_d0: flows.d0.iter().copied().fold(0.0, f64::max),
        overloaded_lines_d1: flows.d1.iter().filter(|&&v| v > 1.0 + 1e-9).count(),
        audit_d1: b.audit_d1,
        audit_d0: b.audit_d0,
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StudyError + '_ {
    move |source| StudyError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_csv(path: &Path, header: &str, rows: impl IntoIterator<Item = String>) -> Result<(), StudyError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let go = || -> std::io::Result<()> {
        writeln!(w, "{header}")?;
        for r in rows {
            writeln!(w, "{r}")?;
        }
        w.flush()
    };
    go().map_err(io_err(path))
}

/// Writes summary.json and all tables into `dir` and returns the summary.
pub fn write_report(run: &StudyRun, dir: &Path) -> Result<StudyReport, StudyError> {
    let grid = &run.prepared.grid;
    let sens = &run.prepared.sens;
    let cap = &run.capacity;
    fs::create_dir_all(dir.join("domains")).map_err(io_err(dir))?;

    let flows_shc = branch_flows(run, &run.shc);
    let flows_ahc = branch_flows(run, &run.ahc);

    // results per setup
    let mut rows = Vec::new();
    for b in [&run.shc, &run.ahc] {
        let label = b.setup.label();
        for z in grid.physical_zones() {
            let kind = if grid.zones[z].kind == ZoneKind::Fb { "fb" } else { "non_fb" };
            rows.push(format!(
                "{label},generation,{},{kind},{}",
                grid.zones[z].id, b.costs.generation_by_zone[z]
            ));
        }
        rows.push(format!("{label},congestion_management,,fb,{}", b.costs.congestion_management));
        rows.push(format!("{label},fb_total,,fb,{}", b.costs.fb_total));
        rows.push(format!("{label},total,,all,{}", b.costs.total));
    }
    write_csv(&dir.join("fig_results.csv"), "setup,item,zone,region,cost_eur", rows)?;

    // UAF forecast error on the SHC branch
    let dev = fuaf_deviation(grid, &sens.ptdf, &cap.shc, &run.shc.d1);
    let dist = distance_to_borders(grid, &cap.shc);
    let mut rows = Vec::new();
    for (j, vals) in dev.values.iter().enumerate() {
        let (l, c) = cap.shc.cnecs.label(grid, j);
        for (k, v) in vals.iter().enumerate() {
            rows.push(format!("{l},{c},{},{},{v}", dist[j], dev.hours[k] + 1));
        }
    }
    write_csv(&dir.join("fig_fuaf_dev.csv"), "line,contingency,hops_to_border,hour,deviation", rows)?;
    let max_abs = dev.max_abs();
    let all_abs: Vec<f64> = dev.values.iter().flatten().map(|v| v.abs()).collect();
    let fuaf_summary = DeviationSummary {
        cnecs: dev.values.len(),
        mean_abs: if all_abs.is_empty() {
            0.0
        } else {
            all_abs.iter().sum::<f64>() / all_abs.len() as f64
        },
        max_abs: max_abs.iter().copied().fold(0.0, f64::max),
        spread_vs_distance: if dist.len() > 1 {
            spearman(&dev.spread(), &dist.iter().map(|&d| d as f64).collect::<Vec<_>>())
        } else {
            None
        },
    };

    // exchanges against renewable feed-in
    let mut rows = Vec::new();
    for (k, h2) in run.d2.hours.iter().enumerate() {
        let t = h2.hour;
        let res_total: f64 = grid.series.res[t].iter().sum();
        for (b, border) in grid.borders.iter().enumerate() {
            let (s, a) = (run.shc.d1.hours[k].ex[b], run.ahc.d1.hours[k].ex[b]);
            let res_zone = grid.zone_res(border.non_fb_zone, t);
            rows.push(format!(
                "{},{},{},{s},{a},{},{res_total},{res_zone}",
                t + 1,
                border.id,
                h2.ex[b],
                a - s
            ));
        }
    }
    write_csv(
        &dir.join("fig_exchange_delta.csv"),
        "hour,border,ex_d2,ex_shc,ex_ahc,delta_ahc_minus_shc,res_total,res_non_fb_zone",
        rows,
    )?;

    let rows = grid.lines.iter().enumerate().map(|(l, line)| {
        format!(
            "{},{},{},{},{},{},{}",
            line.id,
            line.fmax,
            line.fmax - line.frm,
            flows_shc.d1[l],
            flows_ahc.d1[l],
            flows_shc.d0[l],
            flows_ahc.d0[l]
        )
    });
    write_csv(
        &dir.join("fig_max_flows.csv"),
        "line,fmax,capacity,loading_d1_shc,loading_d1_ahc,loading_d0_shc,loading_d0_ahc",
        rows,
    )?;

    // dispatch tables
    let mut prices = Vec::new();
    let mut dispatch = Vec::new();
    let mut d0_flows = Vec::new();
    for b in [&run.shc, &run.ahc] {
        let label = b.setup.label();
        for (k, h) in b.d1.hours.iter().enumerate() {
            let t = h.hour;
            for z in grid.physical_zones() {
                let np = b.d1.np_of(h, z).map_or(String::new(), |v| v.to_string());
                prices.push(format!("{label},{},{},{},{np}", t + 1, grid.zones[z].id, h.price[z]));
            }
            for &z in &grid.virtual_zones() {
                let np = b.d1.np_of(h, z).map_or(String::new(), |v| v.to_string());
                prices.push(format!("{label},{},{},,{np}", t + 1, grid.zones[z].id));
            }
            let h0 = &b.d0.hours[k];
            for (p, plant) in grid.plants.iter().enumerate() {
                dispatch.push(format!(
                    "{label},{},{},{},{},{},{}",
                    t + 1,
                    plant.id,
                    run.d2.hours[k].g[p],
                    h.g[p],
                    h0.rd_pos[p],
                    h0.rd_neg[p]
                ));
            }
            for (j, e) in sens.cm_set.entries.iter().enumerate() {
                let (l, c) = sens.cm_set.label(grid, j);
                let fmax = grid.lines[e.line].fmax;
                d0_flows.push(format!(
                    "{label},{},{l},{c},{},{}",
                    t + 1,
                    h0.flows[j],
                    100.0 * h0.flows[j].abs() / fmax
                ));
            }
        }
    }
    write_csv(&dir.join("prices.csv"), "setup,hour,zone,price,net_position", prices)?;
    write_csv(&dir.join("dispatch.csv"), "setup,hour,plant,g_d2,g_d1,rd_pos,rd_neg", dispatch)?;
    write_csv(&dir.join("d0_flows.csv"), "setup,hour,line,contingency,flow,loading_pct", d0_flows)?;
    for (setup, cp) in [(Setup::Shc, &cap.shc), (Setup::Ahc, &cap.ahc)] {
        let path = dir.join(format!("capacity_{}.csv", setup.label()));
        write_capacity_csv(grid, cp, &path).map_err(io_err(&path))?;
    }

    // domains
    let mut domain_hours: Vec<usize> = grid
        .config
        .domain_hours
        .iter()
        .filter_map(|&h| h.checked_sub(1))
        .filter(|h| run.hours.contains(h))
        .collect();
    if domain_hours.is_empty() {
        domain_hours.push(run.hours[0]);
    }
    let mut domains = Vec::new();
    for &t in &domain_hours {
        for (setup, cp) in [(Setup::Shc, &cap.shc), (Setup::Ahc, &cap.ahc)] {
            let Some(h) = cp.position(t) else { continue };
            let vbz: Vec<f64> = grid
                .virtual_zones()
                .iter()
                .map(|&vz| match grid.config.domain_vbz {
                    DomainVbzMode::Zero => 0.0,
                    DomainVbzMode::Forecast => grid.zones[vz]
                        .attached_border
                        .map_or(0.0, |b| cap.reference.ex[h][b]),
                })
                .collect();
            let Some(poly) = domain_projection(cp, setup, h, &vbz) else { continue };
            let file = format!("domains/{}_h{:04}.csv", setup.label(), t + 1);
            write_csv(
                &dir.join(&file),
                "ex_1_2,ex_1_3",
                poly.vertices.iter().map(|v| format!("{},{}", v[0], v[1])),
            )?;
            domains.push(DomainSummary {
                setup,
                hour: t + 1,
                vertices: poly.vertices.len(),
                unbounded: poly.unbounded,
                file,
            });
        }
    }

    let report = StudyReport {
        seed: grid.config.seed,
        first_hour: run.hours[0] + 1,
        hours: run.hours.len(),
        network: NetworkSummary {
            nodes: grid.nodes.len(),
            lines: grid.lines.len(),
            fb_zones: grid.fb_zones().len(),
            non_fb_zones: grid.non_fb_zones().len(),
            virtual_zones: grid.virtual_zones().len(),
            cnes_shc: cap.shc.cnecs.cnes.len(),
            cnes_ahc: cap.ahc.cnecs.cnes.len(),
            cnecs_shc: cap.shc.cnecs.len(),
            cnecs_ahc: cap.ahc.cnecs.len(),
            congestion_management_entries: sens.cm_set.len(),
        },
        reference_hash: cap.reference_hash.clone(),
        paired: run.shc.reference_hash == run.ahc.reference_hash
            && run.shc.reference_hash == cap.reference_hash,
        audit_d2: run.audit_d2,
        shc: setup_summary(run, &run.shc, &flows_shc),
        ahc: setup_summary(run, &run.ahc, &flows_ahc),
        ahc_fb_cost_not_higher: run.ahc.costs.fb_total <= run.shc.costs.fb_total,
        ahc_total_cost_not_higher: run.ahc.costs.total <= run.shc.costs.total,
        fuaf_deviation: fuaf_summary,
        domains,
    };
    let path = dir.join("summary.json");
    let mut text = serde_json::to_string_pretty(&report).expect("report serialises");
    text.push('\n');
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::testing::ring_with_border;
    use crate::study::{run_paired_study, StudyOptions};

    #[test]
    fn report_is_written_and_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let run = run_paired_study(ring_with_border(3), &StudyOptions::default()).unwrap();
        let a = write_report(&run, &dir.path().join("a")).unwrap();
        let run2 = run_paired_study(ring_with_border(3), &StudyOptions::default()).unwrap();
        write_report(&run2, &dir.path().join("b")).unwrap();
        assert!(a.paired);
        for f in [
            "summary.json",
            "fig_results.csv",
            "fig_fuaf_dev.csv",
            "fig_exchange_delta.csv",
            "fig_max_flows.csv",
            "prices.csv",
            "dispatch.csv",
            "d0_flows.csv",
        ] {
            let x = fs::read(dir.path().join("a").join(f)).unwrap();
            let y = fs::read(dir.path().join("b").join(f)).unwrap();
            assert_eq!(x, y, "{f}");
        }
    }
}
