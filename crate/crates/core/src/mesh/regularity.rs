//! Shape-regularity metrics: edge-length ratio and the radius of the largest
//! disc contained in the polygon kernel (the set of points that see the
//! whole cell), both relative to the cell diameter.

use serde::Serialize;

use super::PolygonalMesh;
use crate::geometry::{self, Point};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellRegularity {
    pub edge_ratio: f64,
    pub star_radius_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularityReport {
    pub min_edge_ratio: f64,
    pub min_star_radius_ratio: f64,
    pub gamma: f64,
    pub passes: bool,
}

/// Intersection of the inner half-planes of all edges of a CCW polygon.
/// Empty when the polygon is not star-shaped.
pub fn polygon_kernel(poly: &[Point]) -> Vec<Point> {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in poly {
        for c in 0..2 {
            lo[c] = lo[c].min(p[c]);
            hi[c] = hi[c].max(p[c]);
        }
    }
    let mut kernel = vec![[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]];
    let n = poly.len();
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        let t = geometry::sub(b, a);
        // inner side of a CCW edge is to the left: outward normal (t_y, -t_x)
        let normal = [t[1], -t[0]];
        kernel = geometry::clip_halfplane(&kernel, normal, geometry::dot(normal, a));
        if kernel.len() < 3 {
            return Vec::new();
        }
    }
    kernel
}

/// Largest disc inside the kernel: maximise `r` subject to
/// `dist(c, line_i) >= r` on the inner side of every edge line. The optimum
/// of this 3-variable LP sits on a vertex defined by three active
/// constraints, so all triples are enumerated.
fn kernel_inradius(poly: &[Point]) -> f64 {
    let n = poly.len();
    let rows: Vec<([f64; 2], f64)> = (0..n)
        .filter_map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            let t = geometry::sub(b, a);
            let len = t[0].hypot(t[1]);
            if len == 0.0 {
                return None;
            }
            let nrm = [t[1] / len, -t[0] / len];
            Some((nrm, geometry::dot(nrm, a)))
        })
        .collect();
    let feasible = |c: Point, r: f64| rows.iter().all(|(nrm, off)| geometry::dot(*nrm, c) + r <= off + 1e-12 * (1.0 + off.abs()));
    let mut best: f64 = 0.0;
    for i in 0..rows.len() {
        for j in (i + 1)..rows.len() {
            for k in (j + 1)..rows.len() {
                let m = nalgebra::Matrix3::new(
                    rows[i].0[0], rows[i].0[1], 1.0,
                    rows[j].0[0], rows[j].0[1], 1.0,
                    rows[k].0[0], rows[k].0[1], 1.0,
                );
                let Some(inv) = m.try_inverse() else { continue };
                let sol = inv * nalgebra::Vector3::new(rows[i].1, rows[j].1, rows[k].1);
                if sol[2] > best && feasible([sol[0], sol[1]], sol[2]) {
                    best = sol[2];
                }
            }
        }
    }
    best
}

pub fn cell_regularity(poly: &[Point]) -> CellRegularity {
    let h = geometry::diameter(poly);
    let n = poly.len();
    let min_edge = (0..n).map(|i| geometry::dist(poly[i], poly[(i + 1) % n])).fold(f64::INFINITY, f64::min);
    CellRegularity {
        edge_ratio: min_edge / h,
        star_radius_ratio: kernel_inradius(poly) / h,
    }
}

pub fn check_regularity(mesh: &PolygonalMesh, gamma: f64) -> RegularityReport {
    let (mut e, mut s) = (f64::INFINITY, f64::INFINITY);
    for c in 0..mesh.num_cells() {
        let r = cell_regularity(&mesh.cell_polygon(c));
        e = e.min(r.edge_ratio);
        s = s.min(r.star_radius_ratio);
    }
    RegularityReport {
        min_edge_ratio: e,
        min_star_radius_ratio: s,
        gamma,
        passes: e >= gamma && s >= gamma,
    }
}
