use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{NodalPtdf, SensitivityError};
use crate::grid::GridModel;

/// Hybrid coupling setup.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setup {
    Shc,
    Ahc,
}

impl Setup {
    pub fn label(self) -> &'static str {
        match self {
            Setup::Shc => "SHC",
            Setup::Ahc => "AHC",
        }
    }
}

/// Generation shift keys, rows = nodes, one column per zone in `zones`.
#[derive(Clone, Debug, PartialEq)]
pub struct Gsk {
    pub matrix: DMatrix<f64>,
    pub zones: Vec<usize>,
}

impl Gsk {
    /// Zonal PTDF for the given nodal PTDF rows (`rows` x nodes).
    pub fn zonal(&self, rows: &DMatrix<f64>) -> DMatrix<f64> {
        rows * &self.matrix
    }

    pub fn column_of(&self, zone: usize) -> Option<usize> {
        self.zones.iter().position(|&z| z == zone)
    }
}

/// Flat GSK over plant nodes of each physical FB zone. The AHC variant adds
/// one column per virtual zone weighted by the border end nodes.
pub fn build_gsk(grid: &GridModel, setup: Setup) -> Result<Gsk, SensitivityError> {
    let zones = match setup {
        Setup::Shc => grid.fb_zones(),
        Setup::Ahc => grid.ahc_zones(),
    };
    let mut matrix = DMatrix::<f64>::zeros(grid.nodes.len(), zones.len());
    for (c, &z) in zones.iter().enumerate() {
        match grid.zones[z].attached_border {
            Some(b) => {
                for &(n, w) in &grid.borders[b].end_nodes {
                    matrix[(n, c)] += w;
                }
            }
            None => {
                let plant_nodes: Vec<usize> = grid.map.zone_nodes[z]
                    .iter()
                    .copied()
                    .filter(|&n| !grid.map.node_plants[n].is_empty())
                    .collect();
                if plant_nodes.is_empty() {
                    return Err(SensitivityError::NoPlantNodes(grid.zones[z].id.clone()));
                }
                let w = 1.0 / plant_nodes.len() as f64;
                for n in plant_nodes {
                    matrix[(n, c)] = w;
                }
            }
        }
    }
    Ok(Gsk { matrix, zones })
}

/// Zonal PTDF of every line for the zones of `gsk`.
pub fn zonal_ptdf(ptdf: &NodalPtdf, gsk: &Gsk) -> DMatrix<f64> {
    gsk.zonal(&ptdf.matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::derive_virtual_zones;
    use crate::grid::testing::*;

    #[test]
    fn flat_weights_over_plant_nodes() {
        let g = ring_with_border(1);
        let gsk = build_gsk(&g, Setup::Shc).unwrap();
        assert_eq!(gsk.zones, vec![0, 1]);
        assert_eq!(gsk.matrix[(0, 0)], 0.5);
        assert_eq!(gsk.matrix[(1, 0)], 0.5);
        assert_eq!(gsk.matrix[(2, 1)], 0.5);
        for c in 0..2 {
            assert!((gsk.matrix.column(c).sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn four_plant_nodes_get_quarter_weight() {
        let mut g = ring_with_border(1);
        // merge n3, n4 into A and reuse B as the non-FB zone holding n5
        g.nodes[2].zone = 0;
        g.nodes[3].zone = 0;
        g.zones[1].kind = crate::grid::ZoneKind::NonFb;
        g.nodes[4].zone = 1;
        g.zones.truncate(2);
        g.borders[0].non_fb_zone = 1;
        let g = g.rebuild().unwrap();
        let gsk = build_gsk(&g, Setup::Shc).unwrap();
        for n in 0..4 {
            assert_eq!(gsk.matrix[(n, 0)], 0.25);
        }
    }

    #[test]
    fn ahc_adds_single_node_vbz_column() {
        let g = derive_virtual_zones(ring_with_border(1)).unwrap();
        let shc = build_gsk(&g, Setup::Shc).unwrap();
        let ahc = build_gsk(&g, Setup::Ahc).unwrap();
        assert_eq!(ahc.zones.len(), shc.zones.len() + 1);
        let col = ahc.matrix.column(2);
        assert_eq!(col[3], 1.0);
        assert_eq!(col.sum(), 1.0);
    }

    #[test]
    fn zone_without_plants_is_rejected() {
        let mut g = ring_with_border(1);
        g.plants.retain(|p| p.node >= 2);
        let g = g.rebuild().unwrap();
        let err = build_gsk(&g, Setup::Shc).unwrap_err();
        assert!(err.to_string().contains('A'));
    }
}
