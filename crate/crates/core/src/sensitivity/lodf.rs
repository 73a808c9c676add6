use nalgebra::DMatrix;

use super::NodalPtdf;
use crate::grid::{topology, GridModel};

/// Line outage distribution factors, rows = monitored lines, cols = outages.
///
/// Columns of outages that split the network are NaN and flagged in
/// `splitting`.
#[derive(Clone, Debug)]
pub struct LodfTable {
    pub matrix: DMatrix<f64>,
    pub splitting: Vec<bool>,
}

impl LodfTable {
    pub fn get(&self, monitored: usize, outage: usize) -> Option<f64> {
        (!self.splitting[outage]).then(|| self.matrix[(monitored, outage)])
    }

    /// Flows after `outage` fails, given pre-outage flows.
    pub fn post_outage(&self, flows: &[f64], outage: usize) -> Option<Vec<f64>> {
        if self.splitting[outage] {
            return None;
        }
        Some(
            flows
                .iter()
                .enumerate()
                .map(|(l, f)| f + self.matrix[(l, outage)] * flows[outage])
                .collect(),
        )
    }
}

pub fn lodf(grid: &GridModel, ptdf: &NodalPtdf) -> LodfTable {
    let n_lines = grid.lines.len();
    let splitting = topology::bridges(grid);
    let mut matrix = DMatrix::<f64>::zeros(n_lines, n_lines);
    for (k, outage) in grid.lines.iter().enumerate() {
        let own = ptdf.transfer(k, outage.from, outage.to);
        let denom = 1.0 - own;
        if splitting[k] || denom.abs() < 1e-10 {
            matrix.column_mut(k).fill(f64::NAN);
            continue;
        }
        for l in 0..n_lines {
            matrix[(l, k)] = if l == k {
                -1.0
            } else {
                ptdf.transfer(l, outage.from, outage.to) / denom
            };
        }
    }
    let splitting = (0..n_lines).map(|k| matrix[(0, k)].is_nan()).collect();
    LodfTable { matrix, splitting }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::testing::*;
    use crate::sensitivity::nodal_ptdf;

    fn without_line(grid: &GridModel, k: usize) -> GridModel {
        let mut g = grid.clone();
        g.lines.remove(k);
        g.rebuild().unwrap()
    }

    #[test]
    fn self_outage_is_minus_one_and_bridge_flagged() {
        let g = ring_with_border(1);
        let p = nodal_ptdf(&g).unwrap();
        let t = lodf(&g, &p);
        let l45 = g.line_by_id("l45").unwrap();
        for k in 0..g.lines.len() {
            if k == l45 {
                assert!(t.splitting[k]);
                assert!(t.get(0, k).is_none());
            } else {
                assert_eq!(t.get(k, k), Some(-1.0));
            }
        }
    }

    #[test]
    fn matches_ptdf_on_reduced_grid() {
        let g = ring_with_border(1);
        let p = nodal_ptdf(&g).unwrap();
        let t = lodf(&g, &p);
        let inj = [120.0, -40.0, 75.0, -200.0, 45.0];
        let f = p.flows(&inj);
        for k in 0..g.lines.len() {
            let Some(post) = t.post_outage(&f, k) else {
                continue;
            };
            let reduced = without_line(&g, k);
            let fr = nodal_ptdf(&reduced).unwrap().flows(&inj);
            assert!(post[k].abs() < 1e-9);
            let kept = post.iter().enumerate().filter(|&(l, _)| l != k);
            for ((l, a), b) in kept.zip(&fr) {
                assert!((a - b).abs() < 1e-8, "outage {k} line {l}");
            }
        }
    }
}
