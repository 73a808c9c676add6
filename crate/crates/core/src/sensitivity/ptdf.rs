use nalgebra::{DMatrix, DVector};

use super::SensitivityError;
use crate::grid::GridModel;

/// Line-by-node DC sensitivities with respect to the slack node.
#[derive(Clone, Debug, PartialEq)]
pub struct NodalPtdf {
    /// Rows are lines, columns are nodes.
    pub matrix: DMatrix<f64>,
    pub slack: usize,
}

impl NodalPtdf {
    /// Flows caused by a nodal injection vector (the slack absorbs the balance).
    pub fn flows(&self, injection: &[f64]) -> Vec<f64> {
        let inj = DVector::from_column_slice(injection);
        (&self.matrix * inj).iter().copied().collect()
    }

    pub fn row(&self, line: usize) -> Vec<f64> {
        self.matrix.row(line).iter().copied().collect()
    }

    /// Sensitivity of every line to a transfer from node `a` to node `b`.
    pub fn transfer(&self, line: usize, a: usize, b: usize) -> f64 {
        self.matrix[(line, a)] - self.matrix[(line, b)]
    }

    /// Weighted combination of node columns, e.g. a border's end nodes.
    pub fn weighted_column(&self, weights: &[(usize, f64)]) -> Vec<f64> {
        (0..self.matrix.nrows())
            .map(|l| weights.iter().map(|&(n, w)| w * self.matrix[(l, n)]).sum())
            .collect()
    }
}

/// Builds the nodal PTDF from a DC load flow with the slack angle fixed.
pub fn nodal_ptdf(grid: &GridModel) -> Result<NodalPtdf, SensitivityError> {
    let n = grid.nodes.len();
    let slack = grid.slack();
    if !crate::grid::topology::is_connected(grid, &vec![true; n], None) {
        return Err(SensitivityError::Disconnected);
    }
    // reduced position of every non-slack node
    let pos: Vec<Option<usize>> = (0..n)
        .scan(0, |next, i| {
            Some(if i == slack {
                None
            } else {
                *next += 1;
                Some(*next - 1)
            })
        })
        .collect();
    let m = n - 1;
    let mut b = DMatrix::<f64>::zeros(m, m);
    for line in &grid.lines {
        let (f, t, s) = (pos[line.from], pos[line.to], line.susceptance);
        if let Some(i) = f {
            b[(i, i)] += s;
        }
        if let Some(j) = t {
            b[(j, j)] += s;
        }
        if let (Some(i), Some(j)) = (f, t) {
            b[(i, j)] -= s;
            b[(j, i)] -= s;
        }
    }
    let x = b.lu().try_inverse().ok_or(SensitivityError::Singular)?;
    let angle = |row: Option<usize>, col: Option<usize>| match (row, col) {
        (Some(r), Some(c)) => x[(r, c)],
        _ => 0.0,
    };
    let mut matrix = DMatrix::<f64>::zeros(grid.lines.len(), n);
    for (l, line) in grid.lines.iter().enumerate() {
        for node in 0..n {
            let p = pos[node];
            matrix[(l, node)] = line.susceptance * (angle(pos[line.from], p) - angle(pos[line.to], p));
        }
    }
    Ok(NodalPtdf { matrix, slack })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ScenarioConfig;
    use crate::grid::testing::*;
    use crate::grid::{ExogenousSeries, GridModel, ZoneKind};

    #[test]
    fn single_line_two_nodes() {
        let g = GridModel::new(
            vec![node("a", 0, false), node("b", 0, true)],
            vec![line("ab", 0, 1, 1.0, 100.0)],
            vec![zone("Z", ZoneKind::Fb)],
            vec![],
            vec![plant("p", 0, 10.0, 1.0)],
            ExogenousSeries::zeros(1, 2),
            ScenarioConfig::default(),
        )
        .unwrap();
        let p = nodal_ptdf(&g).unwrap();
        assert_eq!(p.row(0), vec![1.0, 0.0]);
    }

    #[test]
    fn slack_column_is_zero() {
        let g = ring_with_border(1);
        let p = nodal_ptdf(&g).unwrap();
        assert!(p.matrix.column(g.slack()).iter().all(|v| *v == 0.0));
        assert!(p.matrix.iter().all(|v| v.abs() <= 1.0 + 1e-12));
    }

    #[test]
    fn radial_line_carries_full_injection() {
        let g = ring_with_border(1);
        let p = nodal_ptdf(&g).unwrap();
        let l45 = g.line_by_id("l45").unwrap();
        // injection at n5 must leave over l45 (n4 -> n5 direction is negative)
        assert!((p.matrix[(l45, 4)] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn flows_conserve_at_every_node() {
        let g = ring_with_border(1);
        let p = nodal_ptdf(&g).unwrap();
        let inj = [30.0, -10.0, 25.0, -60.0, 15.0];
        let f = p.flows(&inj);
        let slack_inj = -inj.iter().sum::<f64>();
        for (n, &own) in inj.iter().enumerate() {
            let mut net = 0.0;
            for (l, line) in g.lines.iter().enumerate() {
                if line.from == n {
                    net += f[l];
                }
                if line.to == n {
                    net -= f[l];
                }
            }
            let expected = own + if n == g.slack() { slack_inj } else { 0.0 };
            assert!((net - expected).abs() < 1e-9, "node {n}: {net} vs {expected}");
        }
    }
}
