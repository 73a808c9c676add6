//! Flow-based domains projected onto the exchange plane of three FB zones.

use serde::{Deserialize, Serialize};

use crate::capacity::CapacityParams;
use crate::sensitivity::Setup;

/// Half-plane `a · p <= b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfPlane {
    pub a: [f64; 2],
    pub b: f64,
}

impl HalfPlane {
    pub fn slack(&self, p: [f64; 2]) -> f64 {
        self.b - self.a[0] * p[0] - self.a[1] * p[1]
    }
}

/// Counter-clockwise vertices of a feasible region. Unbounded regions are
/// cut at `±DOMAIN_BOX` MW on both axes and flagged.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub vertices: Vec<[f64; 2]>,
    pub unbounded: bool,
}

impl Polygon {
    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }
}

pub const DOMAIN_BOX: f64 = 1e6;

fn clip(poly: &[[f64; 2]], h: &HalfPlane, tol: f64) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
        let (sp, sq) = (h.slack(p), h.slack(q));
        if sp >= -tol {
            out.push(p);
        }
        if (sp >= -tol) != (sq >= -tol) {
            let t = sp / (sp - sq);
            out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
        }
    }
    out
}

/// Intersection of half-planes by successive clipping of a large box.
pub fn intersect_half_planes(planes: &[HalfPlane], tol: f64) -> Polygon {
    let bx = DOMAIN_BOX;
    let mut poly = vec![[-bx, -bx], [bx, -bx], [bx, bx], [-bx, bx]];
    for h in planes {
        if h.a[0].abs() + h.a[1].abs() < 1e-12 {
            if h.b < -tol {
                return Polygon::default();
            }
            continue;
        }
        poly = clip(&poly, h, tol);
        if poly.is_empty() {
            return Polygon::default();
        }
    }
    let mut vertices: Vec<[f64; 2]> = Vec::with_capacity(poly.len());
    for p in poly {
        let dup = vertices
            .last()
            .is_some_and(|q| (p[0] - q[0]).abs() <= tol && (p[1] - q[1]).abs() <= tol);
        if !dup {
            vertices.push(p);
        }
    }
    while vertices.len() > 1 {
        let (f, l) = (vertices[0], vertices[vertices.len() - 1]);
        if (f[0] - l[0]).abs() <= tol && (f[1] - l[1]).abs() <= tol {
            vertices.pop();
        } else {
            break;
        }
    }
    let unbounded = vertices
        .iter()
        .any(|p| p[0].abs() >= bx * (1.0 - 1e-9) || p[1].abs() >= bx * (1.0 - 1e-9));
    Polygon { vertices, unbounded }
}

/// FB constraints of one hour in the (EX 1→2, EX 1→3) plane of the first
/// three physical FB zones, with virtual net positions fixed to `vbz_np`.
///
/// Returns `None` unless the setup has exactly three physical zones.
pub fn domain_half_planes(cp: &CapacityParams, setup: Setup, h: usize, vbz_np: &[f64]) -> Option<Vec<HalfPlane>> {
    if cp.zones_fb.len() != 3 {
        return None;
    }
    let ptdf = cp.zonal_ptdf(setup);
    let n_phys = cp.zones_fb.len();
    let fixed: f64 = match setup {
        Setup::Shc => 0.0,
        Setup::Ahc => vbz_np.iter().sum(),
    };
    let rams = cp.rams(setup);
    let mut out = Vec::with_capacity(2 * cp.cnecs.len());
    for j in 0..cp.cnecs.len() {
        let (p1, p2, p3) = (ptdf[(j, 0)], ptdf[(j, 1)], ptdf[(j, 2)]);
        // NP1 = x + y - Σ NP_vbz, NP2 = -x, NP3 = -y
        let mut k = -p1 * fixed;
        if setup == Setup::Ahc {
            for (c, v) in vbz_np.iter().enumerate() {
                k += ptdf[(j, n_phys + c)] * v;
            }
        }
        let a = [p1 - p2, p1 - p3];
        out.push(HalfPlane { a, b: rams.pos[h][j] - k });
        out.push(HalfPlane {
            a: [-a[0], -a[1]],
            b: k - rams.neg[h][j],
        });
    }
    Some(out)
}

pub fn domain_projection(cp: &CapacityParams, setup: Setup, h: usize, vbz_np: &[f64]) -> Option<Polygon> {
    domain_half_planes(cp, setup, h, vbz_np).map(|planes| intersect_half_planes(&planes, 1e-9))
}
