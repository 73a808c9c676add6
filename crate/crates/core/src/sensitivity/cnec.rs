use std::cmp::Ordering;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Gsk, LodfTable, NodalPtdf};
use crate::grid::GridModel;

/// A monitored line, optionally under the outage of another line.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cnec {
    pub line: usize,
    pub contingency: Option<usize>,
    /// LODF of the monitored line for the outage (0 for the base case).
    pub lodf: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CnecSet {
    /// Monitored lines, ascending.
    pub cnes: Vec<usize>,
    /// Base case first, then contingencies, per monitored line.
    pub entries: Vec<Cnec>,
}

impl CnecSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Effective nodal PTDF of every entry: `row(l) + lodf * row(c)`.
    pub fn nodal_rows(&self, ptdf: &NodalPtdf) -> DMatrix<f64> {
        let mut rows = DMatrix::<f64>::zeros(self.entries.len(), ptdf.matrix.ncols());
        for (i, e) in self.entries.iter().enumerate() {
            let mut row = rows.row_mut(i);
            row.copy_from(&ptdf.matrix.row(e.line));
            if let Some(c) = e.contingency {
                row += ptdf.matrix.row(c) * e.lodf;
            }
        }
        rows
    }

    /// Effective values of a per-line quantity (for example flows).
    pub fn effective(&self, per_line: &[f64]) -> Vec<f64> {
        self.entries
            .iter()
            .map(|e| match e.contingency {
                Some(c) => per_line[e.line] + e.lodf * per_line[c],
                None => per_line[e.line],
            })
            .collect()
    }

    pub fn label(&self, grid: &GridModel, i: usize) -> (String, String) {
        let e = &self.entries[i];
        (
            grid.lines[e.line].id.clone(),
            e.contingency
                .map(|c| grid.lines[c].id.clone())
                .unwrap_or_default(),
        )
    }
}

/// Largest zone-to-zone PTDF difference of one row.
pub fn zone_spread(row: impl IntoIterator<Item = f64>) -> f64 {
    let (lo, hi) = row
        .into_iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo.is_finite() {
        hi - lo
    } else {
        0.0
    }
}

/// FB-internal lines whose base-case zone-to-zone PTDF reaches `threshold`.
pub fn select_cnes(grid: &GridModel, ptdf: &NodalPtdf, gsk: &Gsk, threshold: f64) -> Vec<usize> {
    grid.fb_lines()
        .into_iter()
        .filter(|&l| {
            let row = ptdf.matrix.row(l) * &gsk.matrix;
            zone_spread(row.iter().copied()) >= threshold
        })
        .collect()
}

/// The `k` outages with the largest |LODF| on `line`. Bridges and the line
/// itself never qualify; ties go to the smaller line id.
pub fn worst_contingencies(grid: &GridModel, lodf: &LodfTable, line: usize, k: usize) -> Vec<usize> {
    let mut candidates: Vec<(usize, f64)> = (0..grid.lines.len())
        .filter(|&c| c != line)
        .filter_map(|c| lodf.get(line, c).map(|v| (c, v.abs())))
        .collect();
    candidates.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then_with(|| grid.lines[a.0].id.cmp(&grid.lines[b.0].id))
    });
    candidates.into_iter().take(k).map(|(c, _)| c).collect()
}

/// Base case plus `k` worst outages for each monitored line.
pub fn expand(grid: &GridModel, lodf: &LodfTable, lines: &[usize], k: usize) -> CnecSet {
    let mut cnes = lines.to_vec();
    cnes.sort_unstable();
    cnes.dedup();
    let mut entries = Vec::with_capacity(cnes.len() * (k + 1));
    for &l in &cnes {
        entries.push(Cnec {
            line: l,
            contingency: None,
            lodf: 0.0,
        });
        for c in worst_contingencies(grid, lodf, l, k) {
            entries.push(Cnec {
                line: l,
                contingency: Some(c),
                lodf: lodf.matrix[(l, c)],
            });
        }
    }
    CnecSet { cnes, entries }
}

/// Market-coupling CNEC set for one GSK.
pub fn select_cnecs(
    grid: &GridModel,
    ptdf: &NodalPtdf,
    lodf: &LodfTable,
    gsk: &Gsk,
    threshold: f64,
    k: usize,
) -> CnecSet {
    expand(grid, lodf, &select_cnes(grid, ptdf, gsk, threshold), k)
}

/// Every line with its `k` worst outages, as monitored in congestion management.
pub fn congestion_management_set(grid: &GridModel, lodf: &LodfTable, k: usize) -> CnecSet {
    let all: Vec<usize> = (0..grid.lines.len()).collect();
    expand(grid, lodf, &all, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::derive_virtual_zones;
    use crate::grid::testing::*;
    use crate::sensitivity::{build_gsk, lodf, nodal_ptdf, Setup};

    #[test]
    fn spread_is_max_minus_min() {
        assert_eq!(zone_spread([0.1, -0.2, 0.05]), 0.30000000000000004);
        assert_eq!(zone_spread([]), 0.0);
    }

    #[test]
    fn contingency_rows_combine_ptdf_rows() {
        let g = derive_virtual_zones(ring_with_border(1)).unwrap();
        let p = nodal_ptdf(&g).unwrap();
        let t = lodf(&g, &p);
        let set = congestion_management_set(&g, &t, 2);
        assert_eq!(set.len(), 3 * g.lines.len());
        let rows = set.nodal_rows(&p);
        for (i, e) in set.entries.iter().enumerate() {
            for n in 0..g.nodes.len() {
                let expected = p.matrix[(e.line, n)]
                    + e.contingency.map_or(0.0, |c| t.matrix[(e.line, c)] * p.matrix[(c, n)]);
                assert!((rows[(i, n)] - expected).abs() < 1e-10);
            }
            assert_ne!(e.contingency, Some(e.line));
            assert_ne!(e.contingency, g.line_by_id("l45"));
        }
    }

    #[test]
    fn ahc_selection_contains_shc_selection() {
        let g = derive_virtual_zones(ring_with_border(1)).unwrap();
        let p = nodal_ptdf(&g).unwrap();
        let shc = select_cnes(&g, &p, &build_gsk(&g, Setup::Shc).unwrap(), 0.05);
        let ahc = select_cnes(&g, &p, &build_gsk(&g, Setup::Ahc).unwrap(), 0.05);
        assert!(shc.iter().all(|l| ahc.contains(l)));
        assert!(!ahc.contains(&g.line_by_id("l45").unwrap()));
    }

    #[test]
    fn ties_break_by_line_id() {
        let g = ring_with_border(1);
        let p = nodal_ptdf(&g).unwrap();
        let mut t = lodf(&g, &p);
        let l12 = g.line_by_id("l12").unwrap();
        for c in 0..g.lines.len() {
            if c != l12 && !t.splitting[c] {
                t.matrix[(l12, c)] = 0.3;
            }
        }
        let worst = worst_contingencies(&g, &t, l12, 2);
        let ids: Vec<&str> = worst.iter().map(|&c| g.lines[c].id.as_str()).collect();
        assert_eq!(ids, vec!["l13", "l23"]);
    }
}
