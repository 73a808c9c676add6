//! Flow-based parameters from the D-2 base case: zero-balance flows,
//! unscheduled allocated flows and the remaining available margins of both
//! hybrid coupling setups.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::FloorScope;
use crate::grid::GridModel;
use crate::sensitivity::{CnecSet, Sensitivities, Setup};

/// The parts of a D-2 solution that capacity calculation consumes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct D2Reference {
    /// Zero-based hour indices.
    pub hours: Vec<usize>,
    /// Net nodal injection `[h][node]`. Border exchanges enter at their
    /// FB-side end nodes; nodes of non-FB zones carry nothing.
    pub injection: Vec<Vec<f64>>,
    /// Net position of each physical FB zone, in `grid.fb_zones()` order.
    pub np_fb: Vec<Vec<f64>>,
    /// Export of each border's non-FB zone into the FB area.
    pub ex: Vec<Vec<f64>>,
}

/// Margins of one setup, `[h][cnec]`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Rams {
    /// Before the minimum-RAM adjustment.
    pub init_pos: Vec<Vec<f64>>,
    pub init_neg: Vec<Vec<f64>>,
    /// Offered to the market coupling.
    pub pos: Vec<Vec<f64>>,
    pub neg: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacityParams {
    pub cnecs: CnecSet,
    pub hours: Vec<usize>,
    /// Zonal PTDF over physical FB zones (`cnec` x zone).
    pub ptdf_fb: DMatrix<f64>,
    /// Zonal PTDF over physical and virtual FB zones.
    pub ptdf_ahc: DMatrix<f64>,
    pub zones_fb: Vec<usize>,
    pub zones_ahc: Vec<usize>,
    pub fmax: Vec<f64>,
    pub frm: Vec<f64>,
    pub f_ref: Vec<Vec<f64>>,
    pub f0_fb: Vec<Vec<f64>>,
    pub f0_all: Vec<Vec<f64>>,
    pub fuaf: Vec<Vec<f64>>,
    pub amr_pos: Vec<Vec<f64>>,
    pub amr_neg: Vec<Vec<f64>>,
    pub shc: Rams,
    pub ahc: Rams,
}

impl CapacityParams {
    pub fn rams(&self, setup: Setup) -> &Rams {
        match setup {
            Setup::Shc => &self.shc,
            Setup::Ahc => &self.ahc,
        }
    }

    pub fn zonal_ptdf(&self, setup: Setup) -> &DMatrix<f64> {
        match setup {
            Setup::Shc => &self.ptdf_fb,
            Setup::Ahc => &self.ptdf_ahc,
        }
    }

    pub fn zones(&self, setup: Setup) -> &[usize] {
        match setup {
            Setup::Shc => &self.zones_fb,
            Setup::Ahc => &self.zones_ahc,
        }
    }

    /// Unscheduled allocated flow as seen by a setup: the D-2 value under
    /// SHC, zero under AHC where border trade is part of the CCR.
    pub fn uaf(&self, setup: Setup, h: usize, j: usize) -> f64 {
        match setup {
            Setup::Shc => self.fuaf[h][j],
            Setup::Ahc => 0.0,
        }
    }

    pub fn position(&self, hour: usize) -> Option<usize> {
        self.hours.iter().position(|&t| t == hour)
    }

    /// Keeps only the CNECs whose monitored line is in `lines`.
    pub fn restrict_to(&self, lines: &[usize]) -> CapacityParams {
        let keep: Vec<usize> = (0..self.cnecs.len())
            .filter(|&j| lines.contains(&self.cnecs.entries[j].line))
            .collect();
        let pick_rows = |m: &DMatrix<f64>| DMatrix::from_fn(keep.len(), m.ncols(), |i, c| m[(keep[i], c)]);
        let pick = |v: &[Vec<f64>]| -> Vec<Vec<f64>> {
            v.iter().map(|row| keep.iter().map(|&j| row[j]).collect()).collect()
        };
        let pick_rams = |r: &Rams| Rams {
            init_pos: pick(&r.init_pos),
            init_neg: pick(&r.init_neg),
            pos: pick(&r.pos),
            neg: pick(&r.neg),
        };
        let mut cnes: Vec<usize> = self.cnecs.cnes.iter().copied().filter(|l| lines.contains(l)).collect();
        cnes.dedup();
        CapacityParams {
            cnecs: CnecSet {
                cnes,
                entries: keep.iter().map(|&j| self.cnecs.entries[j]).collect(),
            },
            hours: self.hours.clone(),
            ptdf_fb: pick_rows(&self.ptdf_fb),
            ptdf_ahc: pick_rows(&self.ptdf_ahc),
            zones_fb: self.zones_fb.clone(),
            zones_ahc: self.zones_ahc.clone(),
            fmax: keep.iter().map(|&j| self.fmax[j]).collect(),
            frm: keep.iter().map(|&j| self.frm[j]).collect(),
            f_ref: pick(&self.f_ref),
            f0_fb: pick(&self.f0_fb),
            f0_all: pick(&self.f0_all),
            fuaf: pick(&self.fuaf),
            amr_pos: pick(&self.amr_pos),
            amr_neg: pick(&self.amr_neg),
            shc: pick_rams(&self.shc),
            ahc: pick_rams(&self.ahc),
        }
    }
}

/// Reference, zero-balance and unscheduled allocated flows, `[h][cnec]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ZeroBalanceFlows {
    pub f_ref: Vec<Vec<f64>>,
    pub f0_fb: Vec<Vec<f64>>,
    pub f0_all: Vec<Vec<f64>>,
    pub fuaf: Vec<Vec<f64>>,
}

/// Sensitivity of every CNEC to each border's end-node injection.
pub fn border_ptdf(grid: &GridModel, rows: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(rows.nrows(), grid.borders.len(), |j, b| {
        grid.borders[b]
            .end_nodes
            .iter()
            .map(|&(n, w)| w * rows[(j, n)])
            .sum()
    })
}

/// Removes FB trade (`f0_fb`) or all trade (`f0_all`) from the reference flows.
pub fn zero_balance_flows(
    grid: &GridModel,
    rows: &DMatrix<f64>,
    ptdf_fb: &DMatrix<f64>,
    d2: &D2Reference,
) -> ZeroBalanceFlows {
    let fb_zones = grid.fb_zones();
    let ptdf_border = border_ptdf(grid, rows);
    let per_hour: Vec<[Vec<f64>; 4]> = (0..d2.hours.len())
        .into_par_iter()
        .map(|h| {
            let inj = nalgebra::DVector::from_column_slice(&d2.injection[h]);
            let f_ref = rows * inj;
            let np = nalgebra::DVector::from_column_slice(&d2.np_fb[h]);
            // net position without border imports, per FB zone
            let mut np_global = np.clone();
            for (b, &ex) in d2.ex[h].iter().enumerate() {
                let z = grid.map.border_fb_zone[b];
                let c = fb_zones.iter().position(|&f| f == z).expect("border end in FB zone");
                np_global[c] -= ex;
            }
            let ex = nalgebra::DVector::from_column_slice(&d2.ex[h]);
            let f0_fb = &f_ref - ptdf_fb * &np;
            let f0_all = &f_ref - ptdf_fb * &np_global - &ptdf_border * &ex;
            let fuaf = &f0_fb - &f0_all;
            [f_ref, f0_fb, f0_all, fuaf].map(|v| v.iter().copied().collect())
        })
        .collect();
    let mut out = ZeroBalanceFlows {
        f_ref: Vec::new(),
        f0_fb: Vec::new(),
        f0_all: Vec::new(),
        fuaf: Vec::new(),
    };
    for [a, b, c, d] in per_hour {
        out.f_ref.push(a);
        out.f0_fb.push(b);
        out.f0_all.push(c);
        out.fuaf.push(d);
    }
    out
}

/// Minimum-RAM settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RamRules {
    pub minram_factor: f64,
    pub core_floor: f64,
    pub floor_scope: FloorScope,
}

impl RamRules {
    pub fn from_grid(grid: &GridModel) -> Self {
        Self {
            minram_factor: grid.config.minram_factor,
            core_floor: grid.config.core_floor,
            floor_scope: grid.config.floor_scope,
        }
    }
}

/// Upward adjustment for the minimum RAM; depends on `f0_all` only.
pub fn amr_pos(fmax: f64, frm: f64, f0_all: f64, factor: f64) -> f64 {
    (factor * fmax + frm + f0_all - fmax).max(0.0)
}

pub fn amr_neg(fmax: f64, frm: f64, f0_all: f64, factor: f64) -> f64 {
    (-factor * fmax - frm + f0_all + fmax).min(0.0)
}

/// Initial margins, AMR and floored final margins for both setups.
#[allow(clippy::type_complexity)]
pub fn compute_rams(
    flows: &ZeroBalanceFlows,
    fmax: &[f64],
    frm: &[f64],
    rules: RamRules,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Rams, Rams) {
    let hours = flows.f0_all.len();
    let mut amr_p = Vec::with_capacity(hours);
    let mut amr_n = Vec::with_capacity(hours);
    let mut shc = Rams::default();
    let mut ahc = Rams::default();
    for h in 0..hours {
        let n = fmax.len();
        let (mut ap, mut an) = (vec![0.0; n], vec![0.0; n]);
        let mut s = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        let mut a = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for j in 0..n {
            let cap = fmax[j] - frm[j];
            let floor = rules.core_floor * fmax[j];
            ap[j] = amr_pos(fmax[j], frm[j], flows.f0_all[h][j], rules.minram_factor);
            an[j] = amr_neg(fmax[j], frm[j], flows.f0_all[h][j], rules.minram_factor);
            s[0][j] = cap - flows.f0_fb[h][j];
            s[1][j] = -cap - flows.f0_fb[h][j];
            a[0][j] = cap - flows.f0_all[h][j];
            a[1][j] = -cap - flows.f0_all[h][j];
            s[2][j] = (s[0][j] + ap[j]).max(floor);
            s[3][j] = (s[1][j] + an[j]).min(-floor);
            a[2][j] = a[0][j] + ap[j];
            a[3][j] = a[1][j] + an[j];
            if rules.floor_scope == FloorScope::Both {
                a[2][j] = a[2][j].max(floor);
                a[3][j] = a[3][j].min(-floor);
            }
        }
        amr_p.push(ap);
        amr_n.push(an);
        for (r, v) in [(&mut shc, s), (&mut ahc, a)] {
            let [ip, ineg, p, ng] = v;
            r.init_pos.push(ip);
            r.init_neg.push(ineg);
            r.pos.push(p);
            r.neg.push(ng);
        }
    }
    (amr_p, amr_n, shc, ahc)
}

/// Full capacity calculation for one CNEC set.
pub fn capacity_params(
    grid: &GridModel,
    sens: &Sensitivities,
    cnecs: &CnecSet,
    d2: &D2Reference,
    rules: RamRules,
) -> CapacityParams {
    let rows = cnecs.nodal_rows(&sens.ptdf);
    let ptdf_fb = sens.gsk_shc.zonal(&rows);
    let ptdf_ahc = sens.gsk_ahc.zonal(&rows);
    let flows = zero_balance_flows(grid, &rows, &ptdf_fb, d2);
    let fmax: Vec<f64> = cnecs.entries.iter().map(|e| grid.lines[e.line].fmax).collect();
    let frm: Vec<f64> = cnecs.entries.iter().map(|e| grid.lines[e.line].frm).collect();
    let (amr_pos, amr_neg, shc, ahc) = compute_rams(&flows, &fmax, &frm, rules);
    CapacityParams {
        cnecs: cnecs.clone(),
        hours: d2.hours.clone(),
        ptdf_fb,
        ptdf_ahc,
        zones_fb: sens.gsk_shc.zones.clone(),
        zones_ahc: sens.gsk_ahc.zones.clone(),
        fmax,
        frm,
        f_ref: flows.f_ref,
        f0_fb: flows.f0_fb,
        f0_all: flows.f0_all,
        fuaf: flows.fuaf,
        amr_pos,
        amr_neg,
        shc,
        ahc,
    }
}

/// Algebraic consistency of a capacity calculation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AmrReport {
    /// max |fuaf - (f0_fb - f0_all)|
    pub fuaf_identity: f64,
    /// max |(ram_AHC - ram_SHC) - fuaf| before floors, both directions.
    pub ram_shift: f64,
    /// max |AMR derived in the SHC branch - AMR derived in the AHC branch|.
    pub amr_between_setups: f64,
    /// Worst shortfall of `ram + uaf` below `minram_factor * fmax`.
    pub minram_shortfall: f64,
    /// Worst shortfall of final margins below the core floor.
    pub floor_shortfall: f64,
}

impl AmrReport {
    pub fn passes(&self, tol_identity: f64, tol_rules: f64) -> bool {
        self.fuaf_identity <= tol_identity
            && self.ram_shift <= tol_identity
            && self.amr_between_setups <= tol_identity
            && self.minram_shortfall <= tol_rules
            && self.floor_shortfall <= tol_rules
    }
}

/// Recomputes the AMR through each setup's own route (the minimum-RAM
/// target minus that setup's uaf and initial margin) and checks the
/// identities and rules on every CNEC and hour.
pub fn amr_invariance_check(cp: &CapacityParams, rules: RamRules) -> AmrReport {
    let mut r = AmrReport::default();
    let m = rules.minram_factor;
    for h in 0..cp.hours.len() {
        for j in 0..cp.cnecs.len() {
            let fmax = cp.fmax[j];
            r.fuaf_identity = r
                .fuaf_identity
                .max((cp.fuaf[h][j] - (cp.f0_fb[h][j] - cp.f0_all[h][j])).abs());
            let shift_pos = cp.ahc.init_pos[h][j] - cp.shc.init_pos[h][j];
            let shift_neg = cp.ahc.init_neg[h][j] - cp.shc.init_neg[h][j];
            r.ram_shift = r
                .ram_shift
                .max((shift_pos - cp.fuaf[h][j]).abs())
                .max((shift_neg - cp.fuaf[h][j]).abs());
            let shc_route = (m * fmax - cp.fuaf[h][j] - cp.shc.init_pos[h][j]).max(0.0);
            let ahc_route = (m * fmax - cp.ahc.init_pos[h][j]).max(0.0);
            let shc_route_neg = (-m * fmax - cp.fuaf[h][j] - cp.shc.init_neg[h][j]).min(0.0);
            let ahc_route_neg = (-m * fmax - cp.ahc.init_neg[h][j]).min(0.0);
            r.amr_between_setups = r
                .amr_between_setups
                .max((shc_route - ahc_route).abs())
                .max((shc_route_neg - ahc_route_neg).abs())
                .max((shc_route - cp.amr_pos[h][j]).abs())
                .max((shc_route_neg - cp.amr_neg[h][j]).abs());
            for setup in [Setup::Shc, Setup::Ahc] {
                let rams = cp.rams(setup);
                let uaf = cp.uaf(setup, h, j);
                r.minram_shortfall = r
                    .minram_shortfall
                    .max(m * fmax - (rams.pos[h][j] + uaf))
                    .max((rams.neg[h][j] + uaf) + m * fmax);
                let floored = setup == Setup::Shc || rules.floor_scope == FloorScope::Both;
                if floored {
                    r.floor_shortfall = r
                        .floor_shortfall
                        .max(rules.core_floor * fmax - rams.pos[h][j])
                        .max(rams.neg[h][j] + rules.core_floor * fmax);
                }
            }
        }
    }
    r
}

/// Per-hour CSV of all capacity parameters.
pub fn write_capacity_csv(grid: &GridModel, cp: &CapacityParams, path: &Path) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        f,
        "hour,line,contingency,f_ref,f0_fb,f0_all,fuaf,ram_pos_shc,ram_neg_shc,ram_pos_ahc,ram_neg_ahc,amr_pos,amr_neg"
    )?;
    for (h, &t) in cp.hours.iter().enumerate() {
        for j in 0..cp.cnecs.len() {
            let (l, c) = cp.cnecs.label(grid, j);
            writeln!(
                f,
                "{},{l},{c},{},{},{},{},{},{},{},{},{},{}",
                t + 1,
                cp.f_ref[h][j],
                cp.f0_fb[h][j],
                cp.f0_all[h][j],
                cp.fuaf[h][j],
                cp.shc.pos[h][j],
                cp.shc.neg[h][j],
                cp.ahc.pos[h][j],
                cp.ahc.neg[h][j],
                cp.amr_pos[h][j],
                cp.amr_neg[h][j],
            )?;
        }
    }
    f.flush()
}
