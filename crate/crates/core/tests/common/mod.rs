//! Randomized cell corpus and dense element oracles shared by the
//! integration tests.
#![allow(dead_code)]

pub mod dense;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use platevem::element::ElementGeometry;
use platevem::geometry::Point;
use platevem::mesh::{generate_distorted_grid, generate_nonconvex_grid, generate_voronoi, BoundarySpec, Bounds};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Shape-regularity floor (edge ratio and kernel inradius ratio) of corpus cells.
pub const CORPUS_GAMMA: f64 = 0.15;

fn regular(poly: &[Point]) -> bool {
    let r = platevem::mesh::regularity::cell_regularity(poly);
    r.edge_ratio >= CORPUS_GAMMA && r.star_radius_ratio >= CORPUS_GAMMA
}

fn shoelace(p: &[Point]) -> f64 {
    let n = p.len();
    // about the vertex mean, so small cells far from the origin keep their digits
    let (mx, my) = (p.iter().map(|q| q[0]).sum::<f64>() / n as f64, p.iter().map(|q| q[1]).sum::<f64>() / n as f64);
    let r: Vec<[f64; 2]> = p.iter().map(|q| [q[0] - mx, q[1] - my]).collect();
    0.5 * (0..n).map(|i| r[i][0] * r[(i + 1) % n][1] - r[(i + 1) % n][0] * r[i][1]).sum::<f64>()
}

fn with_scales(cell: usize, poly: Vec<Point>, jitter: bool, rng: &mut ChaCha8Rng) -> ElementGeometry {
    let h = platevem::geometry::diameter(&poly);
    let scales = poly.iter().map(|_| if jitter { h * rng.random_range(0.6..1.4) } else { h }).collect();
    ElementGeometry::new(cell, poly, scales).unwrap()
}

/// At least 200 cells with shape regularity `CORPUS_GAMMA`: random convex polygons, random star-shaped
/// non-convex polygons, and cells of distorted, chevron and Voronoi meshes,
/// placed at random offsets and sizes. Isolated cells get vertex scales
/// jittered around the diameter, which exercises arbitrary DoF scalings.
pub fn corpus(seed: u64) -> Vec<ElementGeometry> {
    build_corpus(seed, true)
}

/// The same cells with the vertex scales their own mesh would assign:
/// `h_E` for an isolated cell, incident-diameter means for mesh cells.
pub fn mesh_scaled_corpus(seed: u64) -> Vec<ElementGeometry> {
    build_corpus(seed, false)
}

fn build_corpus(seed: u64, jitter: bool) -> Vec<ElementGeometry> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let place = |poly: Vec<Point>, rng: &mut ChaCha8Rng| -> Vec<Point> {
        let s = 10f64.powf(rng.random_range(-2.0..0.5));
        let o = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        poly.into_iter().map(|p| [o[0] + s * p[0], o[1] + s * p[1]]).collect()
    };
    // convex: sorted angles on an ellipse
    while out.len() < 80 {
        let n = rng.random_range(3..=9);
        let (a, b) = (rng.random_range(0.5..1.5), rng.random_range(0.5..1.5));
        let mut ang: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
        ang.sort_by(f64::total_cmp);
        let poly: Vec<Point> = ang.iter().map(|t| [a * t.cos(), b * t.sin()]).collect();
        let min_gap = (0..n).map(|i| platevem::geometry::dist(poly[i], poly[(i + 1) % n])).fold(f64::INFINITY, f64::min);
        if min_gap < 0.1 || shoelace(&poly) < 0.2 || !regular(&poly) {
            continue;
        }
        let poly = place(poly, &mut rng);
        out.push(with_scales(out.len(), poly, jitter, &mut rng));
    }
    // non-convex, star-shaped about the origin
    while out.len() < 160 {
        let n = rng.random_range(5..=10);
        let poly: Vec<Point> = (0..n)
            .map(|i| {
                let t = std::f64::consts::TAU * (i as f64 + rng.random_range(-0.2..0.2)) / n as f64;
                let r = rng.random_range(0.35..1.0);
                [r * t.cos(), r * t.sin()]
            })
            .collect();
        if !regular(&poly) {
            continue;
        }
        let poly = place(poly, &mut rng);
        out.push(with_scales(out.len(), poly, jitter, &mut rng));
    }
    let b = Bounds::unit_square();
    let spec = BoundarySpec::AllClamped;
    let meshes = [
        generate_distorted_grid(6, b, 0.3, seed, &spec).unwrap(),
        generate_nonconvex_grid(4, b, &spec).unwrap(),
        generate_voronoi(60, b, 3, seed + 1, &spec).unwrap(),
    ];
    for m in &meshes {
        let scales = m.vertex_scales();
        for c in 0..m.num_cells() {
            if !regular(&m.cell_polygon(c)) {
                continue;
            }
            let mut g = ElementGeometry::from_mesh(m, c, &scales).unwrap();
            g.cell = out.len();
            out.push(g);
        }
    }
    assert!(out.len() >= 200, "corpus has only {} cells", out.len());
    out
}

/// Independent evaluation of virtual element quantities.
pub struct Oracle<'a> {
    pub geom: &'a ElementGeometry,
    pub sigma: f64,
    pub area: f64,
    center: Point,
    h: f64,
}

const EXP: [(i32, i32); 6] = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)];

/// 5-point Gauss–Legendre on [0, 1].
fn gauss5() -> [(f64, f64); 5] {
    let a = (5.0 - 2.0 * (10.0f64 / 7.0).sqrt()).sqrt() / 3.0;
    let b = (5.0 + 2.0 * (10.0f64 / 7.0).sqrt()).sqrt() / 3.0;
    let wa = (322.0 + 13.0 * 70f64.sqrt()) / 900.0;
    let wb = (322.0 - 13.0 * 70f64.sqrt()) / 900.0;
    [(-b, wb), (-a, wa), (0.0, 128.0 / 225.0), (a, wa), (b, wb)].map(|(x, w)| (0.5 * (x + 1.0), 0.5 * w))
}

impl<'a> Oracle<'a> {
    pub fn new(geom: &'a ElementGeometry, sigma: f64) -> Self {
        let area = shoelace(&geom.vertices);
        Oracle { geom, sigma, area, center: geom.centroid, h: geom.diameter }
    }

    /// Value, gradient and Hessian of monomial `a` at `p`.
    pub fn mono(&self, a: usize, p: Point) -> (f64, [f64; 2], Matrix2<f64>) {
        let (ex, ey) = EXP[a];
        let (x, y) = ((p[0] - self.center[0]) / self.h, (p[1] - self.center[1]) / self.h);
        let pw = |b: f64, e: i32| if e < 0 { 0.0 } else { b.powi(e) };
        let v = pw(x, ex) * pw(y, ey);
        let gx = ex as f64 * pw(x, ex - 1) * pw(y, ey) / self.h;
        let gy = ey as f64 * pw(x, ex) * pw(y, ey - 1) / self.h;
        let h2 = self.h * self.h;
        let hxx = (ex * (ex - 1)) as f64 * pw(x, ex - 2) * pw(y, ey) / h2;
        let hxy = (ex * ey) as f64 * pw(x, ex - 1) * pw(y, ey - 1) / h2;
        let hyy = (ey * (ey - 1)) as f64 * pw(x, ex) * pw(y, ey - 2) / h2;
        (v, [gx, gy], Matrix2::new(hxx, hxy, hxy, hyy))
    }

    pub fn moment_tensor(&self, hess: Matrix2<f64>) -> Matrix2<f64> {
        hess * (1.0 - self.sigma) + Matrix2::identity() * (self.sigma * hess.trace())
    }

    /// DoFs of monomial `a` (value and scaled gradient at each vertex).
    pub fn dofs_of(&self, a: usize) -> DVector<f64> {
        let g = self.geom;
        let mut d = DVector::zeros(3 * g.vertices.len());
        for (i, &v) in g.vertices.iter().enumerate() {
            let (val, grad, _) = self.mono(a, v);
            d[3 * i] = val;
            d[3 * i + 1] = g.scales[i] * grad[0];
            d[3 * i + 2] = g.scales[i] * grad[1];
        }
        d
    }

    fn vertex_data(&self, d: &DVector<f64>, i: usize) -> (f64, Vector2<f64>) {
        let s = self.geom.scales[i];
        (d[3 * i], Vector2::new(d[3 * i + 1] / s, d[3 * i + 2] / s))
    }

    /// Edge samples `(weight, point, value, gradient, outward normal)` of a
    /// virtual function, using the Bernstein form of the cubic trace and the
    /// linear normal derivative.
    pub fn edge_samples(&self, d: &DVector<f64>) -> Vec<(f64, Point, f64, Vector2<f64>, Vector2<f64>)> {
        let g = self.geom;
        let n = g.vertices.len();
        let mut out = Vec::new();
        for i in 0..n {
            let j = (i + 1) % n;
            let (a, b) = (g.vertices[i], g.vertices[j]);
            let e = Vector2::new(b[0] - a[0], b[1] - a[1]);
            let len = e.norm();
            let t = e / len;
            let nrm = Vector2::new(t[1], -t[0]);
            let (va, ga) = self.vertex_data(d, i);
            let (vb, gb) = self.vertex_data(d, j);
            let c = [va, va + len / 3.0 * t.dot(&ga), vb - len / 3.0 * t.dot(&gb), vb];
            for (s, w) in gauss5() {
                let r = 1.0 - s;
                let val = c[0] * r * r * r + 3.0 * c[1] * s * r * r + 3.0 * c[2] * s * s * r + c[3] * s * s * s;
                let dval = 3.0 * ((c[1] - c[0]) * r * r + 2.0 * (c[2] - c[1]) * s * r + (c[3] - c[2]) * s * s) / len;
                let dn = r * nrm.dot(&ga) + s * nrm.dot(&gb);
                let grad = t * dval + nrm * dn;
                out.push((w * len, [a[0] + s * e[0], a[1] + s * e[1]], val, grad, nrm));
            }
        }
        out
    }

    /// `A(v, m_b)` by one integration by parts: `int_dE (Q n) . grad v`.
    pub fn energy_against(&self, d: &DVector<f64>, b: usize) -> f64 {
        let q = self.moment_tensor(self.mono(b, self.center).2);
        self.edge_samples(d).iter().map(|(w, _, _, grad, n)| w * (q * n).dot(grad)).sum()
    }

    /// Energy projection by the full saddle-point system with three
    /// Lagrange multipliers for the vertex-mean constraints.
    pub fn pidelta(&self, d: &DVector<f64>) -> DVector<f64> {
        let g = self.geom;
        let nv = g.vertices.len() as f64;
        let mut kkt = DMatrix::zeros(9, 9);
        let mut rhs = DVector::zeros(9);
        for a in 0..6 {
            let ha = self.mono(a, self.center).2;
            for b in 0..6 {
                let qb = self.moment_tensor(self.mono(b, self.center).2);
                kkt[(b, a)] = self.area * ha.component_mul(&qb).sum();
            }
            rhs[a] = self.energy_against(d, a);
        }
        for (i, &v) in g.vertices.iter().enumerate() {
            let (val, grad) = self.vertex_data(d, i);
            rhs[6] += val / nv;
            rhs[7] += grad[0] / nv;
            rhs[8] += grad[1] / nv;
            for a in 0..6 {
                let (m, mg, _) = self.mono(a, v);
                for (r, c) in [(6, m), (7, mg[0]), (8, mg[1])] {
                    kkt[(r, a)] += c / nv;
                    kkt[(a, r)] += c / nv;
                }
            }
        }
        let sol = kkt.lu().solve(&rhs).expect("saddle-point system is regular");
        sol.rows(0, 6).into_owned()
    }

    pub fn eval_poly(&self, c: &DVector<f64>, p: Point) -> f64 {
        (0..6).map(|a| c[a] * self.mono(a, p).0).sum()
    }

    fn cell_integral(&self, f: impl Fn(Point) -> f64) -> f64 {
        platevem::quadrature::polygon_quadrature(&self.geom.vertices, 8).unwrap().integrate(f)
    }

    /// `(m_a, v)`: the enhanced space matches `P_2` moments of the energy projection.
    pub fn l2_against(&self, d: &DVector<f64>, a: usize) -> f64 {
        let pi = self.pidelta(d);
        self.cell_integral(|p| self.mono(a, p).0 * self.eval_poly(&pi, p))
    }

    /// `(D_x m_a, D_x v) = -(D_xx m_a, v) + int_dE D_x m_a v n_x`.
    pub fn axial_against(&self, d: &DVector<f64>, a: usize) -> f64 {
        let pi = self.pidelta(d);
        let dxx = self.mono(a, self.center).2[(0, 0)];
        let volume = -dxx * self.cell_integral(|p| self.eval_poly(&pi, p));
        let boundary: f64 =
            self.edge_samples(d).iter().map(|(w, p, val, _, n)| w * self.mono(a, *p).1[0] * val * n[0]).sum();
        volume + boundary
    }
}
