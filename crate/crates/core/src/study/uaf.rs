use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::capacity::{border_ptdf, CapacityParams};
use crate::dispatch::MarketSolution;
use crate::grid::{topology, GridModel};
use crate::sensitivity::NodalPtdf;

/// Flow on each CNEC per MW of exchange on each border, net of the share
/// the FB zone's GSK would have carried: `ptdf(end node) - ptdf(zone)`.
pub fn uaf_sensitivity(grid: &GridModel, ptdf: &NodalPtdf, cp: &CapacityParams) -> DMatrix<f64> {
    let rows = cp.cnecs.nodal_rows(ptdf);
    let mut u = border_ptdf(grid, &rows);
    for b in 0..grid.borders.len() {
        let zone = grid.map.border_fb_zone[b];
        let c = cp
            .zones_fb
            .iter()
            .position(|&z| z == zone)
            .expect("border ends in an FB zone");
        for j in 0..u.nrows() {
            u[(j, b)] -= cp.ptdf_fb[(j, c)];
        }
    }
    u
}

/// UAF forecast error of the D-1 result, per CNEC and hour, as a share of fmax.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FuafDeviation {
    pub hours: Vec<usize>,
    /// `[cnec][hour]`
    pub values: Vec<Vec<f64>>,
}

impl FuafDeviation {
    /// Largest absolute deviation per CNEC.
    pub fn max_abs(&self) -> Vec<f64> {
        self.values
            .iter()
            .map(|v| v.iter().fold(0.0, |m: f64, x| m.max(x.abs())))
            .collect()
    }

    /// Standard deviation per CNEC.
    pub fn spread(&self) -> Vec<f64> {
        self.values
            .iter()
            .map(|v| {
                let n = v.len().max(1) as f64;
                let mean = v.iter().sum::<f64>() / n;
                (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
            })
            .collect()
    }
}

/// Exchange-induced flow after market coupling minus the D-2 UAF.
pub fn fuaf_deviation(
    grid: &GridModel,
    ptdf: &NodalPtdf,
    cp: &CapacityParams,
    d1: &MarketSolution,
) -> FuafDeviation {
    let u = uaf_sensitivity(grid, ptdf, cp);
    let mut values = vec![Vec::with_capacity(d1.hours.len()); cp.cnecs.len()];
    let mut hours = Vec::with_capacity(d1.hours.len());
    for h in &d1.hours {
        let Some(hp) = cp.position(h.hour) else { continue };
        hours.push(h.hour);
        for (j, out) in values.iter_mut().enumerate() {
            let realised: f64 = (0..grid.borders.len()).map(|b| u[(j, b)] * h.ex[b]).sum();
            out.push((realised - cp.fuaf[hp][j]) / cp.fmax[j]);
        }
    }
    FuafDeviation { hours, values }
}

/// Hops from each CNEC's monitored line to the nearest border end node.
pub fn distance_to_borders(grid: &GridModel, cp: &CapacityParams) -> Vec<usize> {
    let ends: Vec<usize> = grid
        .borders
        .iter()
        .flat_map(|b| b.end_nodes.iter().map(|&(n, _)| n))
        .collect();
    let hops = topology::hop_distances(grid, &ends);
    cp.cnecs
        .entries
        .iter()
        .map(|e| {
            let l = &grid.lines[e.line];
            hops[l.from].min(hops[l.to])
        })
        .collect()
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties; `None` when one
/// side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len());
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let (mut va, mut vb) = (0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    (va > 0.0 && vb > 0.0).then(|| cov / (va * vb).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capacity::{capacity_params, D2Reference, RamRules};
    use crate::dispatch::{MarketHour, Stage};
    use crate::grid::derive_virtual_zones;
    use crate::grid::testing::ring_with_border;
    use crate::sensitivity::Sensitivities;

    fn setup(ex_d2: f64) -> (GridModel, Sensitivities, CapacityParams) {
        let g = derive_virtual_zones(ring_with_border(1)).unwrap();
        let s = Sensitivities::compute(&g).unwrap();
        let mut injection = vec![0.0; 5];
        injection[3] = ex_d2;
        injection[0] = -ex_d2;
        let d2 = D2Reference {
            hours: vec![0],
            injection: vec![injection],
            np_fb: vec![vec![-ex_d2, ex_d2]],
            ex: vec![vec![ex_d2]],
        };
        let cp = capacity_params(&g, &s, &s.cnecs_ahc, &d2, RamRules::from_grid(&g));
        (g, s, cp)
    }

    fn d1_with_exchange(ex: f64) -> MarketSolution {
        MarketSolution {
            stage: Stage::D1Shc,
            np_zones: vec![0, 1],
            hours: vec![MarketHour {
                hour: 0,
                g: vec![0.0; 5],
                curt: vec![0.0; 5],
                ex: vec![ex],
                np: vec![0.0; 2],
                price: vec![0.0; 3],
                cg: vec![0.0; 3],
                cc: vec![0.0; 3],
                slack: vec![0.0; 3],
                objective: 0.0,
            }],
        }
    }

    #[test]
    fn perfect_forecast_has_no_deviation() {
        let (g, s, cp) = setup(120.0);
        let dev = fuaf_deviation(&g, &s.ptdf, &cp, &d1_with_exchange(120.0));
        assert!(dev.values.iter().flatten().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn single_border_deviation_is_sensitivity_times_error() {
        let (g, s, cp) = setup(100.0);
        let dev = fuaf_deviation(&g, &s.ptdf, &cp, &d1_with_exchange(250.0));
        // hand computation: flow change of 150 MW injected at n4 and spread
        // over zone B by its flat GSK (n3, n4 with half each)
        for (j, e) in cp.cnecs.entries.iter().enumerate() {
            let row = |n: usize| {
                s.ptdf.matrix[(e.line, n)]
                    + e.contingency.map_or(0.0, |c| e.lodf * s.ptdf.matrix[(c, n)])
            };
            let expected = (row(3) - 0.5 * (row(2) + row(3))) * 150.0 / cp.fmax[j];
            assert!((dev.values[j][0] - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn spearman_examples() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&[1.0, 1.0], &[1.0, 2.0]), None);
        assert_eq!(ranks(&[5.0, 1.0, 5.0]), vec![2.5, 1.0, 2.5]);
    }
}
