use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fbmc_core::grid::load_grid_with;
use fbmc_core::sensitivity::{build_gsk, nodal_ptdf};
use fbmc_core::study::{domain_projection, run_paired_study, write_report, StudyOptions};
use fbmc_core::{derive_virtual_zones, GridModel, Setup, ZoneKind};

fn bundled(hours: usize) -> GridModel {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/test_network");
    load_grid_with(dir, |c| c.hours = Some(hours)).expect("bundled network loads")
}

#[test]
fn zones_and_borders() {
    let g = bundled(1);
    assert_eq!(g.fb_zones().len(), 3);
    assert_eq!(g.non_fb_zones().len(), 3);
    assert_eq!(g.borders.len(), 3);
    assert!(g.lines.len() > 150);
    for b in &g.borders {
        assert_eq!(b.end_nodes.len(), 1);
        assert_eq!(b.end_nodes[0].1, 1.0);
    }

    let g = derive_virtual_zones(g).unwrap();
    assert_eq!(g.zones_of(ZoneKind::Virtual).len(), 3);
    assert_eq!(g.ahc_zones().len(), 6);
    let shc = build_gsk(&g, Setup::Shc).unwrap();
    let ahc = build_gsk(&g, Setup::Ahc).unwrap();
    assert_eq!(ahc.matrix.ncols(), shc.matrix.ncols() + 3);
}

/// Solves B·theta = P with the slack angle fixed at zero.
fn dc_flows(g: &GridModel, injection: &[f64]) -> Vec<f64> {
    let n = g.nodes.len();
    let slack = g.slack();
    let mut b = DMatrix::zeros(n, n);
    for l in &g.lines {
        b[(l.from, l.from)] += l.susceptance;
        b[(l.to, l.to)] += l.susceptance;
        b[(l.from, l.to)] -= l.susceptance;
        b[(l.to, l.from)] -= l.susceptance;
    }
    let keep: Vec<usize> = (0..n).filter(|&i| i != slack).collect();
    let reduced = DMatrix::from_fn(keep.len(), keep.len(), |i, j| b[(keep[i], keep[j])]);
    let rhs = DVector::from_iterator(keep.len(), keep.iter().map(|&i| injection[i]));
    let solved = reduced.lu().solve(&rhs).expect("connected grid");
    let mut theta = vec![0.0; n];
    for (i, &node) in keep.iter().enumerate() {
        theta[node] = solved[i];
    }
    g.lines
        .iter()
        .map(|l| l.susceptance * (theta[l.from] - theta[l.to]))
        .collect()
}

#[test]
fn ptdf_flows_match_a_direct_dc_solve() {
    let g = bundled(1);
    let ptdf = nodal_ptdf(&g).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..3 {
        let mut inj: Vec<f64> = (0..g.nodes.len()).map(|_| rng.gen_range(-300.0..300.0)).collect();
        let total: f64 = inj.iter().sum();
        inj[g.slack()] -= total;
        let expected = dc_flows(&g, &inj);
        for (a, b) in ptdf.flows(&inj).iter().zip(&expected) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }
}

#[test]
fn domain_vertices_satisfy_every_cnec() {
    let run = run_paired_study(bundled(24), &StudyOptions::default()).unwrap();
    let h = 8;
    for setup in [Setup::Shc, Setup::Ahc] {
        let cp = run.capacity.get(setup);
        let vbz: Vec<f64> = run.capacity.reference.ex[h].clone();
        let poly = domain_projection(cp, setup, h, &vbz).unwrap();
        assert!(poly.vertices.len() >= 3, "{setup:?} domain is empty");
        let ptdf = cp.zonal_ptdf(setup);
        let rams = cp.rams(setup);
        for v in &poly.vertices {
            let mut np = vec![v[0] + v[1], -v[0], -v[1]];
            if setup == Setup::Ahc {
                np[0] -= vbz.iter().sum::<f64>();
                np.extend_from_slice(&vbz);
            }
            for j in 0..cp.cnecs.len() {
                let flow: f64 = (0..np.len()).map(|c| ptdf[(j, c)] * np[c]).sum();
                assert!(flow <= rams.pos[h][j] + 1e-6, "{setup:?} vertex {v:?} cnec {j}");
                assert!(flow >= rams.neg[h][j] - 1e-6, "{setup:?} vertex {v:?} cnec {j}");
            }
        }
    }
}

#[test]
fn forecast_deviation_concentrates_near_borders() {
    let run = run_paired_study(bundled(168), &StudyOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let report = write_report(&run, dir.path()).unwrap();
    let rho = report.fuaf_deviation.spread_vs_distance.expect("enough CNECs");
    assert!(rho < 0.0, "spread grows away from the borders: {rho}");
    assert!(report.paired);
}
