//! Stage execution with on-disk artifacts under `<out>/artifacts`.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use fbmc_core::capacity::write_capacity_csv;
use fbmc_core::dispatch::{
    account_costs, audit_d0, audit_market, solve_d0, solve_market, DispatchError, MarketProblem,
    MarketSolution, Stage,
};
use fbmc_core::grid::load_grid_with;
use fbmc_core::study::{
    prepare, run_capacity, run_d1, run_paired_study, write_report, CapacityPair, PreparedGrid,
    StudyError, StudyOptions,
};
use fbmc_core::{ScenarioConfig, Setup};

use crate::{SetupArg, StageArg};

/// Tolerance of the post-solve constraint audit.
const AUDIT_TOL: f64 = 1e-6;

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String, anyhow::Error),
    Solver(String, anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Data(..) => 3,
            Failure::Solver(..) => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(msg) => write!(f, "error: {msg}"),
            Failure::Data(stage, e) => write!(f, "error [{stage}]: {e:#}"),
            Failure::Solver(stage, e) => write!(f, "error [{stage}]: solver: {e:#}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunPlan {
    pub grid: PathBuf,
    pub out: PathBuf,
    pub stage: StageArg,
    pub setup: SetupArg,
    pub seed: Option<u64>,
    pub hours: Option<usize>,
    pub first_hour: Option<usize>,
    pub threshold: Option<f64>,
    pub minram: Option<f64>,
    pub core_floor: Option<f64>,
    pub frm_default: Option<f64>,
    pub curt_penalty: Option<f64>,
    pub export_lp: bool,
    pub dump_sensitivities: bool,
}

impl RunPlan {
    fn apply(&self, cfg: &mut ScenarioConfig) {
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.hours {
            cfg.hours = Some(v);
        }
        if let Some(v) = self.first_hour {
            cfg.first_hour = v;
        }
        if let Some(v) = self.threshold {
            cfg.threshold = v;
        }
        if let Some(v) = self.minram {
            cfg.minram_factor = v;
        }
        if let Some(v) = self.core_floor {
            cfg.core_floor = v;
        }
        if let Some(v) = self.frm_default {
            cfg.frm_default = v;
        }
        if let Some(v) = self.curt_penalty {
            cfg.penalties.curtailment_d0 = v;
        }
    }

    fn artifacts(&self) -> PathBuf {
        self.out.join("artifacts")
    }

    fn lp_dir(&self) -> Option<PathBuf> {
        self.export_lp.then(|| self.out.join("lp"))
    }

    fn setups(&self) -> Vec<Setup> {
        match self.setup {
            SetupArg::Shc => vec![Setup::Shc],
            SetupArg::Ahc => vec![Setup::Ahc],
            SetupArg::Both => vec![Setup::Shc, Setup::Ahc],
        }
    }
}

fn stage_tag(stage: StageArg) -> &'static str {
    match stage {
        StageArg::D2 => "d2",
        StageArg::Capacity => "capacity",
        StageArg::D1Shc => "d1-shc",
        StageArg::D1Ahc => "d1-ahc",
        StageArg::D0 => "d0",
        StageArg::FullStudy => "full-study",
    }
}

fn study_failure(stage: &str, e: StudyError) -> Failure {
    match e {
        StudyError::Dispatch(
            d @ (DispatchError::Infeasible { .. } | DispatchError::Unbounded { .. } | DispatchError::Solver { .. }),
        ) => Failure::Solver(stage.into(), d.into()),
        other => Failure::Data(stage.into(), other.into()),
    }
}

fn io_failure(stage: &str, path: &Path, e: impl Into<anyhow::Error>) -> Failure {
    Failure::Data(stage.into(), e.into().context(path.display().to_string()))
}

fn write_json<T: Serialize>(stage: &str, path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_failure(stage, path, e))?;
    text.push('\n');
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io_failure(stage, dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| io_failure(stage, path, e))
}

/// Reads an artifact written by an earlier stage.
fn read_artifact<T: DeserializeOwned>(stage: &str, path: &Path, producer: &str) -> Result<T, Failure> {
    if !path.is_file() {
        return Err(Failure::Usage(format!(
            "stage {stage} needs {} (run --stage {producer} first)",
            path.display()
        )));
    }
    let bytes = std::fs::read(path).map_err(|e| io_failure(stage, path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| io_failure(stage, path, e))
}

/// D-2 artifact, tagged with what it was computed for.
#[derive(Serialize, Deserialize)]
struct D2Artifact {
    seed: u64,
    hours: Vec<usize>,
    solution: MarketSolution,
}

fn check_audit(stage: &str, what: &str, worst: f64) {
    if worst > AUDIT_TOL {
        log::warn!("[{stage}] {what} audit: largest residual {worst:e}");
    } else {
        log::info!("[{stage}] {what} audit: largest residual {worst:e}");
    }
}

fn load(plan: &RunPlan, stage: &str) -> Result<(PreparedGrid, Vec<usize>), Failure> {
    let mut probe = ScenarioConfig::default();
    plan.apply(&mut probe);
    probe.validate().map_err(Failure::Usage)?;
    let grid = load_grid_with(&plan.grid, |cfg| plan.apply(cfg)).map_err(|e| Failure::Data(stage.into(), e.into()))?;
    let prepared = prepare(grid).map_err(|e| study_failure(stage, e))?;
    let hours: Vec<usize> = prepared
        .grid
        .config
        .hour_range(prepared.grid.horizon())
        .collect();
    if hours.is_empty() {
        return Err(Failure::Usage(format!(
            "hour range starts after the grid horizon of {} hours",
            prepared.grid.horizon()
        )));
    }
    if plan.dump_sensitivities {
        let dir = plan.out.join("sensitivities");
        prepared
            .sens
            .dump(&prepared.grid, &dir)
            .map_err(|e| io_failure(stage, &dir, e))?;
    }
    Ok((prepared, hours))
}

pub fn execute(plan: &RunPlan) -> Result<(), Failure> {
    let tag = stage_tag(plan.stage);
    let (prepared, hours) = load(plan, tag)?;
    let grid = &prepared.grid;
    let art = plan.artifacts();
    let seed = grid.config.seed;
    let stale = |what: &str| {
        Failure::Usage(format!(
            "{what} was produced for another seed or hour range; rerun the earlier stages"
        ))
    };

    match plan.stage {
        StageArg::D2 => {
            let mut pb = MarketProblem::new(Stage::D2, hours.clone(), None);
            pb.lp_dir = plan.lp_dir();
            let solution = solve_market(grid, &pb).map_err(|e| study_failure(tag, e.into()))?;
            check_audit(tag, "D-2", audit_market(grid, &solution, None).worst());
            write_json(tag, &art.join("d2.json"), &D2Artifact { seed, hours, solution })?;
        }
        StageArg::Capacity => {
            let d2: D2Artifact = read_artifact(tag, &art.join("d2.json"), "d2")?;
            if d2.seed != seed || d2.hours != hours {
                return Err(stale("d2.json"));
            }
            let pair = run_capacity(&prepared, &d2.solution, false);
            for (setup, cp) in [(Setup::Shc, &pair.shc), (Setup::Ahc, &pair.ahc)] {
                let path = plan.out.join(format!("capacity_{}.csv", setup.label()));
                write_capacity_csv(grid, cp, &path).map_err(|e| io_failure(tag, &path, e))?;
            }
            println!(
                "CNEs: {} SHC, {} AHC; CNECs: {} SHC, {} AHC",
                pair.shc.cnecs.cnes.len(),
                pair.ahc.cnecs.cnes.len(),
                pair.shc.cnecs.len(),
                pair.ahc.cnecs.len()
            );
            write_json(tag, &art.join("capacity.json"), &pair)?;
        }
        StageArg::D1Shc | StageArg::D1Ahc => {
            let setup = if plan.stage == StageArg::D1Shc { Setup::Shc } else { Setup::Ahc };
            let pair: CapacityPair = read_artifact(tag, &art.join("capacity.json"), "capacity")?;
            if pair.shc.hours != hours {
                return Err(stale("capacity.json"));
            }
            let d1 = run_d1(&prepared, &pair, setup, &hours, plan.lp_dir()).map_err(|e| study_failure(tag, e))?;
            check_audit(tag, "D-1", audit_market(grid, &d1, Some(pair.get(setup))).worst());
            println!("{} D-1 objective: {:.2} EUR", setup.label(), d1.objective());
            write_json(tag, &art.join(format!("d1_{}.json", setup.label().to_lowercase())), &d1)?;
        }
        StageArg::D0 => {
            for setup in plan.setups() {
                let name = setup.label().to_lowercase();
                let producer = if setup == Setup::Shc { "d1-shc" } else { "d1-ahc" };
                let d1: MarketSolution = read_artifact(tag, &art.join(format!("d1_{name}.json")), producer)?;
                if d1.hour_indices() != hours {
                    return Err(stale(&format!("d1_{name}.json")));
                }
                let d0 = solve_d0(grid, &prepared.sens.cm_set, &prepared.sens.ptdf, &d1, plan.lp_dir().as_deref())
                    .map_err(|e| study_failure(tag, e.into()))?;
                check_audit(
                    tag,
                    "D-0",
                    audit_d0(grid, &prepared.sens.cm_set, &prepared.sens.ptdf, &d1, &d0).worst(),
                );
                let costs = account_costs(grid, &d1, &d0);
                println!(
                    "{}: FB cost {:.2} EUR (CM {:.2}), total {:.2} EUR",
                    setup.label(),
                    costs.fb_total,
                    costs.congestion_management,
                    costs.total
                );
                write_json(tag, &art.join(format!("d0_{name}.json")), &d0)?;
                write_json(tag, &art.join(format!("costs_{name}.json")), &costs)?;
            }
        }
        StageArg::FullStudy => {
            drop(prepared);
            let grid = load_grid_with(&plan.grid, |cfg| plan.apply(cfg))
                .map_err(|e| Failure::Data(tag.into(), e.into()))?;
            let opts = StudyOptions {
                hours: Some(hours.clone()),
                lp_dir: plan.lp_dir(),
                shc_uses_ahc_cnecs: false,
            };
            let run = run_paired_study(grid, &opts).map_err(|e| study_failure(tag, e))?;
            let report = write_report(&run, &plan.out).map_err(|e| study_failure(tag, e))?;
            for b in [&run.shc, &run.ahc] {
                check_audit(tag, &format!("{} D-1", b.setup.label()), b.audit_d1.worst());
                check_audit(tag, &format!("{} D-0", b.setup.label()), b.audit_d0.worst());
            }
            write_json(
                tag,
                &art.join("d2.json"),
                &D2Artifact {
                    seed,
                    hours,
                    solution: run.d2.clone(),
                },
            )?;
            write_json(tag, &art.join("capacity.json"), &run.capacity)?;
            for b in [&run.shc, &run.ahc] {
                let name = b.setup.label().to_lowercase();
                write_json(tag, &art.join(format!("d1_{name}.json")), &b.d1)?;
                write_json(tag, &art.join(format!("d0_{name}.json")), &b.d0)?;
                write_json(tag, &art.join(format!("costs_{name}.json")), &b.costs)?;
            }
            if !report.ahc_fb_cost_not_higher || !report.ahc_total_cost_not_higher {
                log::warn!("AHC is not cheaper than SHC on this grid; see fig_results.csv");
            }
            println!(
                "SHC: FB {:.2} EUR, total {:.2} EUR | AHC: FB {:.2} EUR, total {:.2} EUR",
                report.shc.fb_total, report.shc.total, report.ahc.fb_total, report.ahc.total
            );
            println!("summary: {}", plan.out.join("summary.json").display());
        }
    }
    Ok(())
}
