//! Gauss rules on segments, triangles and polygons.
//!
//! Polygons are split into triangles (a fan from the centroid when every fan
//! triangle is positively oriented, ear clipping otherwise) and each
//! triangle gets a positive-weight rule of the requested exactness.

use crate::error::{Error, Result};
use crate::geometry::{self, Point};

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    pub exactness: usize,
}

impl QuadratureRule {
    pub fn integrate(&self, f: impl Fn(Point) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(&p, w)| w * f(p)).sum()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Rule on a straight edge. `params` holds the arc-length fraction of each point.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeRule {
    pub points: Vec<Point>,
    pub params: Vec<f64>,
    pub weights: Vec<f64>,
    pub exactness: usize,
}

impl EdgeRule {
    pub fn integrate(&self, f: impl Fn(Point) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(&p, w)| w * f(p)).sum()
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` (Newton on `P_n`).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pnm1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        // recompute the derivative at the converged node
        let (mut p0, mut p1) = (1.0, z);
        for k in 2..=n {
            let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
            p0 = p1;
            p1 = p2;
        }
        if n > 1 {
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// Mapped Gauss–Legendre rule on the segment `a -> b`.
pub fn edge_quadrature(a: Point, b: Point, exactness: usize) -> EdgeRule {
    let n = exactness / 2 + 1;
    let (x, w) = gauss_legendre(n);
    let len = geometry::dist(a, b);
    let params: Vec<f64> = x.iter().map(|t| 0.5 * (t + 1.0)).collect();
    EdgeRule {
        points: params.iter().map(|&s| [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]).collect(),
        params,
        weights: w.iter().map(|wi| 0.5 * len * wi).collect(),
        exactness: 2 * n - 1,
    }
}

/// Reference rule on the unit triangle in barycentric form `(l1, l2, l3)`,
/// weights summing to one.
fn triangle_reference(exactness: usize) -> (Vec<[f64; 3]>, Vec<f64>, usize) {
    match exactness {
        0 | 1 => (vec![[1.0 / 3.0; 3]], vec![1.0], 1),
        2 => {
            let (a, b) = (1.0 / 6.0, 2.0 / 3.0);
            (vec![[b, a, a], [a, b, a], [a, a, b]], vec![1.0 / 3.0; 3], 2)
        }
        3..=5 => {
            // Radon's seven-point rule
            let s = 15f64.sqrt();
            let (a1, a2) = ((6.0 - s) / 21.0, (6.0 + s) / 21.0);
            let (w1, w2) = ((155.0 - s) / 1200.0, (155.0 + s) / 1200.0);
            let (b1, b2) = (1.0 - 2.0 * a1, 1.0 - 2.0 * a2);
            (
                vec![
                    [1.0 / 3.0; 3],
                    [b1, a1, a1],
                    [a1, b1, a1],
                    [a1, a1, b1],
                    [b2, a2, a2],
                    [a2, b2, a2],
                    [a2, a2, b2],
                ],
                vec![9.0 / 40.0, w1, w1, w1, w2, w2, w2],
                5,
            )
        }
        d => {
            // collapsed tensor Gauss rule: x = u, y = v (1 - u), Jacobian (1 - u)
            let nu = (d + 2).div_ceil(2);
            let nv = (d + 1).div_ceil(2);
            let (xu, wu) = gauss_legendre(nu);
            let (xv, wv) = gauss_legendre(nv);
            let mut pts = Vec::with_capacity(nu * nv);
            let mut wts = Vec::with_capacity(nu * nv);
            for (ui, wui) in xu.iter().zip(&wu) {
                let u = 0.5 * (ui + 1.0);
                for (vi, wvi) in xv.iter().zip(&wv) {
                    let v = 0.5 * (vi + 1.0);
                    let (x, y) = (u, v * (1.0 - u));
                    pts.push([1.0 - x - y, x, y]);
                    // reference area 1/2 normalised to weight sum 1
                    wts.push(0.25 * wui * wvi * (1.0 - u) * 2.0);
                }
            }
            (pts, wts, (2 * nu - 2).min(2 * nv - 1))
        }
    }
}

/// Gauss rule on the triangle `(a, b, c)`, exact for polynomials of degree `exactness`.
pub fn triangle_quadrature(a: Point, b: Point, c: Point, exactness: usize) -> QuadratureRule {
    let (bary, w, exact) = triangle_reference(exactness);
    let area = 0.5 * geometry::cross(geometry::sub(b, a), geometry::sub(c, a));
    QuadratureRule {
        points: bary
            .iter()
            .map(|l| [l[0] * a[0] + l[1] * b[0] + l[2] * c[0], l[0] * a[1] + l[1] * b[1] + l[2] * c[1]])
            .collect(),
        weights: w.iter().map(|wi| wi * area).collect(),
        exactness: exact,
    }
}

/// Split a simple CCW polygon into positively oriented triangles.
pub fn triangulate(poly: &[Point]) -> Result<Vec<[Point; 3]>> {
    let area = geometry::signed_area(poly);
    if poly.len() < 3 || area <= 0.0 {
        return Err(Error::Geometry("polygon is degenerate or clockwise".into()));
    }
    if poly.len() == 3 {
        return Ok(vec![[poly[0], poly[1], poly[2]]]);
    }
    let c = geometry::centroid(poly);
    let n = poly.len();
    let fan: Vec<[Point; 3]> = (0..n).map(|i| [c, poly[i], poly[(i + 1) % n]]).collect();
    let min_fan = 1e-12 * area;
    if fan.iter().all(|t| geometry::signed_area(t) > min_fan) {
        return Ok(fan);
    }
    let tris = geometry::ear_clip(poly).ok_or_else(|| Error::Geometry("ear clipping failed".into()))?;
    Ok(tris.into_iter().map(|[i, j, k]| [poly[i], poly[j], poly[k]]).collect())
}

/// Positive-weight rule on a simple polygon exact up to `exactness`.
pub fn polygon_quadrature(poly: &[Point], exactness: usize) -> Result<QuadratureRule> {
    let mut rule = QuadratureRule { points: Vec::new(), weights: Vec::new(), exactness };
    for [a, b, c] in triangulate(poly)? {
        let t = triangle_quadrature(a, b, c, exactness);
        rule.exactness = t.exactness;
        rule.points.extend(t.points);
        rule.weights.extend(t.weights);
    }
    Ok(rule)
}
