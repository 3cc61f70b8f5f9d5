//! Lowest-order (`k = 2`) C1 virtual element kernel.
//!
//! Local DoFs are ordered vertex by vertex as `[v, h_V dv/dx, h_V dv/dy]`,
//! where `h_V` is the vertex scale (mean diameter of the incident cells).
//! On every edge a virtual function has a cubic Hermite trace and a linear
//! normal derivative, so all element integrals needed below reduce to
//! boundary data.

use nalgebra::{DMatrix, DVector, Matrix2};

use crate::error::{Error, Result};
use crate::geometry::{self, Point};
use crate::mesh::PolygonalMesh;
use crate::polybasis::{poly_dim, ScaledMonomialBasis};
use crate::quadrature::{self, polygon_quadrature, QuadratureRule};

/// Polynomial degree of the element.
pub const DEGREE: usize = 2;
/// Dimension of `P_2`.
pub const NP: usize = poly_dim(DEGREE);
/// Dimension of `P_1`.
pub const NP1: usize = poly_dim(DEGREE - 1);
/// Exactness of the cell quadrature (`2k + 2`).
pub const CELL_EXACTNESS: usize = 2 * DEGREE + 2;

/// Slot of a vertex DoF.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slot {
    Value = 0,
    Dx = 1,
    Dy = 2,
}

impl Slot {
    pub const ALL: [Slot; 3] = [Slot::Value, Slot::Dx, Slot::Dy];
}

/// Local DoF layout. Only vertex slots exist for `k = 2`; edge and interior
/// moment counts are kept so the layout can describe higher orders.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DofLayout {
    pub n_vertices: usize,
    pub edge_value_moments: usize,
    pub edge_normal_moments: usize,
    pub interior_moments: usize,
}

impl DofLayout {
    pub fn new(n_vertices: usize, degree: usize) -> Result<Self> {
        if degree != DEGREE {
            return Err(Error::InvalidArgument(format!("only degree {DEGREE} elements are implemented, got {degree}")));
        }
        Ok(DofLayout {
            n_vertices,
            edge_value_moments: degree.saturating_sub(3),
            edge_normal_moments: degree.saturating_sub(2),
            interior_moments: degree.saturating_sub(2) * degree.saturating_sub(3) / 2,
        })
    }

    pub fn len(&self) -> usize {
        3 * self.n_vertices
            + self.n_vertices * (self.edge_value_moments + self.edge_normal_moments)
            + self.interior_moments
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, vertex: usize, slot: Slot) -> usize {
        3 * vertex + slot as usize
    }
}

/// Geometry of one cell together with its vertex scales and quadrature.
#[derive(Debug, Clone)]
pub struct ElementGeometry {
    pub cell: usize,
    pub vertices: Vec<Point>,
    pub scales: Vec<f64>,
    pub centroid: Point,
    pub diameter: f64,
    pub area: f64,
    pub basis: ScaledMonomialBasis,
    pub quadrature: QuadratureRule,
}

impl ElementGeometry {
    pub fn new(cell: usize, vertices: Vec<Point>, scales: Vec<f64>) -> Result<Self> {
        let err = |message: String| Error::ElementKernel { cell, message };
        if vertices.len() < 3 || scales.len() != vertices.len() {
            return Err(err(format!("{} vertices with {} scales", vertices.len(), scales.len())));
        }
        if scales.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(err("vertex scales must be positive".into()));
        }
        let area = geometry::signed_area(&vertices);
        if !(area > 0.0) {
            return Err(err(format!("non-positive area {area}")));
        }
        let centroid = geometry::centroid(&vertices);
        let diameter = geometry::diameter(&vertices);
        let quadrature = polygon_quadrature(&vertices, CELL_EXACTNESS).map_err(|e| err(e.to_string()))?;
        Ok(ElementGeometry {
            cell,
            basis: ScaledMonomialBasis::new(centroid, diameter, DEGREE),
            vertices,
            scales,
            centroid,
            diameter,
            area,
            quadrature,
        })
    }

    /// Cell `c` of a mesh with the given per-vertex scales.
    pub fn from_mesh(mesh: &PolygonalMesh, c: usize, vertex_scales: &[f64]) -> Result<Self> {
        let cell = &mesh.cells()[c];
        Self::new(c, mesh.cell_polygon(c), cell.vertices.iter().map(|&v| vertex_scales[v]).collect())
    }

    /// Geometry with every vertex scale set to the cell diameter.
    pub fn standalone(vertices: Vec<Point>) -> Result<Self> {
        let h = geometry::diameter(&vertices);
        let n = vertices.len();
        Self::new(0, vertices, vec![h; n])
    }

    pub fn layout(&self) -> DofLayout {
        DofLayout::new(self.vertices.len(), DEGREE).expect("degree is fixed")
    }

    pub fn n_dofs(&self) -> usize {
        3 * self.vertices.len()
    }

    /// Edges as `(start vertex, end vertex, unit tangent, outward unit normal, length)`.
    fn edges(&self) -> impl Iterator<Item = (usize, usize, Point, Point, f64)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| {
            let j = (i + 1) % n;
            let d = geometry::sub(self.vertices[j], self.vertices[i]);
            let len = d[0].hypot(d[1]);
            let t = [d[0] / len, d[1] / len];
            (i, j, t, [t[1], -t[0]], len)
        })
    }

    /// DoF row of the directional derivative `w . grad v` at local vertex `i`.
    fn directional_row(&self, i: usize, w: Point, row: &mut [f64], factor: f64) {
        row[3 * i + 1] += factor * w[0] / self.scales[i];
        row[3 * i + 2] += factor * w[1] / self.scales[i];
    }

    /// DoF row of the cubic Hermite trace at arc fraction `s` on edge `i -> j`.
    fn trace_row(&self, i: usize, j: usize, t: Point, len: f64, s: f64) -> Vec<f64> {
        let mut row = vec![0.0; self.n_dofs()];
        let (s2, s3) = (s * s, s * s * s);
        row[3 * i] += 2.0 * s3 - 3.0 * s2 + 1.0;
        row[3 * j] += -2.0 * s3 + 3.0 * s2;
        self.directional_row(i, t, &mut row, len * (s3 - 2.0 * s2 + s));
        self.directional_row(j, t, &mut row, len * (s3 - s2));
        row
    }
}

/// Projector coefficients of the local DoF basis functions.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorSet {
    /// `NP x N_dof`: energy projection in the scaled monomial basis.
    pub p_delta: DMatrix<f64>,
    /// `NP x N_dof`: L2 projection onto `P_2`.
    pub p_l2: DMatrix<f64>,
    /// `NP1 x N_dof`: L2 projection of `D_x` onto `P_1`.
    pub p_dx: DMatrix<f64>,
    /// `N_dof x NP`: DoFs of every monomial.
    pub dof_of_poly: DMatrix<f64>,
    /// `NP x NP`: L2 Gram matrix of the monomials.
    pub gram: DMatrix<f64>,
    /// `NP x NP`: plate-energy Gram matrix of the monomials.
    pub energy_gram: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalMatrices {
    pub k: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub ax: DMatrix<f64>,
}

/// Constant moment tensor `Q(q) = (1 - sigma) hess q + sigma (lap q) I` of each monomial.
fn moment_tensors(geom: &ElementGeometry, sigma: f64) -> Vec<Matrix2<f64>> {
    let hess = geom.basis.eval(geom.centroid, 2);
    (0..NP)
        .map(|a| {
            let (xx, xy, yy) = (hess[(0, a)], hess[(1, a)], hess[(2, a)]);
            Matrix2::new(xx, xy, xy, yy) * (1.0 - sigma) + Matrix2::identity() * (sigma * (xx + yy))
        })
        .collect()
}

fn hessians(geom: &ElementGeometry) -> Vec<Matrix2<f64>> {
    let hess = geom.basis.eval(geom.centroid, 2);
    (0..NP).map(|a| Matrix2::new(hess[(0, a)], hess[(1, a)], hess[(1, a)], hess[(2, a)])).collect()
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("Poisson ratio must lie in (0, 1), got {sigma}")))
    }
}

/// `A(m_a, m_b)` for all pairs of monomials.
pub fn energy_gram(geom: &ElementGeometry, sigma: f64) -> DMatrix<f64> {
    let q = moment_tensors(geom, sigma);
    let h = hessians(geom);
    DMatrix::from_fn(NP, NP, |a, b| geom.area * h[a].component_mul(&q[b]).sum())
}

/// L2 Gram matrix `int m_a m_b` up to the given dimension.
fn l2_gram(geom: &ElementGeometry, dim: usize) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(dim, dim);
    for (&p, &w) in geom.quadrature.points.iter().zip(&geom.quadrature.weights) {
        let m = geom.basis.values(p);
        for a in 0..dim {
            for b in 0..dim {
                g[(a, b)] += w * m[a] * m[b];
            }
        }
    }
    g
}

/// DoFs of every monomial.
pub fn dof_of_poly(geom: &ElementGeometry) -> DMatrix<f64> {
    let n = geom.vertices.len();
    let mut d = DMatrix::zeros(3 * n, NP);
    for (i, &v) in geom.vertices.iter().enumerate() {
        let vals = geom.basis.eval(v, 0);
        let grads = geom.basis.eval(v, 1);
        for a in 0..NP {
            d[(3 * i, a)] = vals[(0, a)];
            d[(3 * i + 1, a)] = geom.scales[i] * grads[(0, a)];
            d[(3 * i + 2, a)] = geom.scales[i] * grads[(1, a)];
        }
    }
    d
}

/// `A(phi_j, m_b)` for every DoF basis function, evaluated from edge data:
/// `sum_e (n.Qn) int_e d_n v + (t.Qn) (v(end) - v(start))`.
fn energy_rhs(geom: &ElementGeometry, sigma: f64) -> DMatrix<f64> {
    let q = moment_tensors(geom, sigma);
    let mut b = DMatrix::zeros(NP, geom.n_dofs());
    for (i, j, t, n, len) in geom.edges() {
        let (tv, nv) = (nalgebra::Vector2::new(t[0], t[1]), nalgebra::Vector2::new(n[0], n[1]));
        for beta in 0..NP {
            let qn = q[beta] * nv;
            let (cn, ct) = (nv.dot(&qn), tv.dot(&qn));
            let mut row = vec![0.0; geom.n_dofs()];
            // the normal derivative is linear along the edge
            geom.directional_row(i, n, &mut row, 0.5 * len * cn);
            geom.directional_row(j, n, &mut row, 0.5 * len * cn);
            row[3 * j] += ct;
            row[3 * i] -= ct;
            for (c, v) in row.into_iter().enumerate() {
                b[(beta, c)] += v;
            }
        }
    }
    b
}

fn solve_small(m: &DMatrix<f64>, rhs: &DMatrix<f64>, cell: usize, what: &str) -> Result<DMatrix<f64>> {
    let scale = m.amax();
    let lu = m.clone().full_piv_lu();
    let pivot_ratio = {
        let u = lu.u();
        let d = u.diagonal();
        d.iter().fold(f64::INFINITY, |acc, v| acc.min(v.abs())) / scale
    };
    if !(pivot_ratio > 1e-13) {
        return Err(Error::ElementKernel { cell, message: format!("{what} is singular (pivot ratio {pivot_ratio:e})") });
    }
    lu.solve(rhs).ok_or_else(|| Error::ElementKernel { cell, message: format!("{what} is singular") })
}

/// Energy projection: rows `|b| >= 2` of the system hold `A(., m_b)`; the
/// rows of the kernel `{1, x, y}` are replaced by vertex-mean constraints
/// on the value and the (diameter-scaled) gradient.
pub fn build_pidelta(geom: &ElementGeometry, sigma: f64) -> Result<DMatrix<f64>> {
    check_sigma(sigma)?;
    let n = geom.vertices.len();
    let nd = geom.n_dofs();
    let mut g = energy_gram(geom, sigma).transpose();
    let mut b = energy_rhs(geom, sigma);
    let h = geom.diameter;
    let inv_n = 1.0 / n as f64;
    for r in 0..3 {
        for a in 0..NP {
            g[(r, a)] = 0.0;
        }
        for c in 0..nd {
            b[(r, c)] = 0.0;
        }
    }
    for (i, &v) in geom.vertices.iter().enumerate() {
        let vals = geom.basis.eval(v, 0);
        let grads = geom.basis.eval(v, 1);
        for a in 0..NP {
            g[(0, a)] += inv_n * vals[(0, a)];
            g[(1, a)] += inv_n * h * grads[(0, a)];
            g[(2, a)] += inv_n * h * grads[(1, a)];
        }
        b[(0, 3 * i)] += inv_n;
        b[(1, 3 * i + 1)] += inv_n * h / geom.scales[i];
        b[(2, 3 * i + 2)] += inv_n * h / geom.scales[i];
    }
    solve_small(&g, &b, geom.cell, "energy projection system")
}

/// L2 projections `Pi^2` and `Pi^1 D_x` given the energy projection.
///
/// The enhanced space makes every `P_2` moment of a basis function equal to
/// that of its energy projection. `D_x` uses integration by parts:
/// `int D_x phi q = -int phi D_x q + int_dE phi n_x q`.
pub fn build_l2_projectors(geom: &ElementGeometry, p_delta: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let gram = l2_gram(geom, NP);
    let moments = &gram * p_delta;
    let p_l2 = solve_small(&gram, &moments, geom.cell, "L2 Gram matrix")?;

    let nd = geom.n_dofs();
    let mut rhs = DMatrix::zeros(NP1, nd);
    // D_x m_(1,0) = m_0 / h; the other P_1 monomials have zero x-derivative
    for c in 0..nd {
        rhs[(1, c)] -= moments[(0, c)] / geom.diameter;
    }
    let rule = quadrature::gauss_legendre(3);
    for (i, j, t, n, len) in geom.edges() {
        for (x, w) in rule.0.iter().zip(&rule.1) {
            let s = 0.5 * (x + 1.0);
            let p = [
                geom.vertices[i][0] + s * len * t[0],
                geom.vertices[i][1] + s * len * t[1],
            ];
            let m = geom.basis.values(p);
            let row = geom.trace_row(i, j, t, len, s);
            let wt = 0.5 * w * len * n[0];
            for beta in 0..NP1 {
                for (c, v) in row.iter().enumerate() {
                    rhs[(beta, c)] += wt * m[beta] * v;
                }
            }
        }
    }
    let gram1 = gram.view((0, 0), (NP1, NP1)).into_owned();
    let p_dx = solve_small(&gram1, &rhs, geom.cell, "P1 Gram matrix")?;
    Ok((p_l2, p_dx))
}

pub fn build_projectors(geom: &ElementGeometry, sigma: f64) -> Result<ProjectorSet> {
    let p_delta = build_pidelta(geom, sigma)?;
    let (p_l2, p_dx) = build_l2_projectors(geom, &p_delta)?;
    Ok(ProjectorSet {
        dof_of_poly: dof_of_poly(geom),
        gram: l2_gram(geom, NP),
        energy_gram: energy_gram(geom, sigma),
        p_delta,
        p_l2,
        p_dx,
    })
}

/// `I - D P`: the part of a DoF vector not reproduced by the projection.
fn remainder(proj: &ProjectorSet, p: &DMatrix<f64>) -> DMatrix<f64> {
    let nd = p.ncols();
    DMatrix::identity(nd, nd) - &proj.dof_of_poly * p
}

/// Consistency term of the plate stiffness.
pub fn stiffness_consistency(proj: &ProjectorSet) -> DMatrix<f64> {
    proj.p_delta.transpose() * &proj.energy_gram * &proj.p_delta
}

/// Plate stiffness: consistency plus dofi-dofi stabilization scaled by
/// `trace(consistency) / N_dof`.
pub fn build_local_stiffness(proj: &ProjectorSet) -> DMatrix<f64> {
    let kc = stiffness_consistency(proj);
    let tau = kc.trace() / kc.nrows() as f64;
    let r = remainder(proj, &proj.p_delta);
    let k = kc + r.transpose() * r * tau;
    symmetrize(k)
}

/// Mass matrix with dofi-dofi stabilization scaled by the cell area.
pub fn build_local_mass(geom: &ElementGeometry, proj: &ProjectorSet) -> DMatrix<f64> {
    let mc = proj.p_l2.transpose() * &proj.gram * &proj.p_l2;
    let r = remainder(proj, &proj.p_l2);
    symmetrize(mc + r.transpose() * r * geom.area)
}

/// Axial matrix `(Pi^1 D_x u, Pi^1 D_x v)` with no stabilization.
pub fn build_local_ax(proj: &ProjectorSet) -> DMatrix<f64> {
    let gram1 = proj.gram.view((0, 0), (NP1, NP1));
    symmetrize(proj.p_dx.transpose() * gram1 * &proj.p_dx)
}

pub fn build_local_matrices(geom: &ElementGeometry, proj: &ProjectorSet) -> LocalMatrices {
    LocalMatrices {
        k: build_local_stiffness(proj),
        m: build_local_mass(geom, proj),
        ax: build_local_ax(proj),
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Weighted values of `Pi^2 phi_i` at the cell quadrature points
/// (`n_points x N_dof`); the load vector is its transpose applied to samples of `g`.
pub fn load_operator(geom: &ElementGeometry, proj: &ProjectorSet) -> DMatrix<f64> {
    let q = &geom.quadrature;
    let mut out = DMatrix::zeros(q.len(), geom.n_dofs());
    for (r, (&p, &w)) in q.points.iter().zip(&q.weights).enumerate() {
        let m = DVector::from_vec(geom.basis.values(p));
        let row = proj.p_l2.tr_mul(&m) * w;
        out.set_row(r, &row.transpose());
    }
    out
}

/// `F_i = int_E g Pi^2 phi_i` by cell quadrature.
pub fn build_local_load(geom: &ElementGeometry, proj: &ProjectorSet, g: impl Fn(Point) -> f64) -> Result<DVector<f64>> {
    let samples = sample(geom, g)?;
    Ok(load_operator(geom, proj).tr_mul(&samples))
}

/// Samples of `g` at the cell quadrature points.
pub fn sample(geom: &ElementGeometry, g: impl Fn(Point) -> f64) -> Result<DVector<f64>> {
    let mut out = DVector::zeros(geom.quadrature.len());
    for (k, &p) in geom.quadrature.points.iter().enumerate() {
        let v = g(p);
        if !v.is_finite() {
            return Err(Error::Evaluation { x: p[0], y: p[1] });
        }
        out[k] = v;
    }
    Ok(out)
}

/// DoF vector of a function given its value and gradient.
pub fn interpolate_local(geom: &ElementGeometry, f: impl Fn(Point) -> (f64, [f64; 2])) -> DVector<f64> {
    let mut d = DVector::zeros(geom.n_dofs());
    for (i, &v) in geom.vertices.iter().enumerate() {
        let (val, grad) = f(v);
        d[3 * i] = val;
        d[3 * i + 1] = geom.scales[i] * grad[0];
        d[3 * i + 2] = geom.scales[i] * grad[1];
    }
    d
}
