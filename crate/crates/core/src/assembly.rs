//! Global DoF numbering, essential boundary conditions and sparse assembly.
//!
//! Global DoF `3 v + s` is slot `s` of vertex `v`. Fixed DoFs carry zero
//! essential data and are eliminated; every assembled matrix and vector
//! lives on the free DoFs only.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::element::{self, ElementGeometry, LocalMatrices, ProjectorSet, Slot};
use crate::error::{Error, Result};
use crate::geometry::{self, Point};
use crate::mesh::{BoundaryTag, PolygonalMesh};
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    /// Every boundary vertex has value and gradient fixed to zero.
    Clamped,
    /// Simply supported edges fix the value and tangential derivative;
    /// free edges impose nothing.
    BridgeMixed,
    /// No essential conditions (patch tests, local checks).
    Unconstrained,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    n_vertices: usize,
    free_of: Vec<Option<usize>>,
    free_to_global: Vec<usize>,
}

impl DofMap {
    pub fn global(vertex: usize, slot: Slot) -> usize {
        3 * vertex + slot as usize
    }

    pub fn n_total(&self) -> usize {
        3 * self.n_vertices
    }

    pub fn n_free(&self) -> usize {
        self.free_to_global.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    /// Free index of a global DoF, `None` when it is fixed.
    pub fn free_index(&self, global: usize) -> Option<usize> {
        self.free_of[global]
    }

    pub fn is_fixed(&self, global: usize) -> bool {
        self.free_of[global].is_none()
    }

    pub fn free_to_global(&self) -> &[usize] {
        &self.free_to_global
    }

    /// Full DoF vector with zeros on fixed slots.
    pub fn expand(&self, free: &DVector<f64>) -> DVector<f64> {
        let mut full = DVector::zeros(self.n_total());
        for (k, &g) in self.free_to_global.iter().enumerate() {
            full[g] = free[k];
        }
        full
    }

    pub fn restrict(&self, full: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.n_free(), self.free_to_global.iter().map(|&g| full[g]))
    }
}

pub fn build_dof_map(mesh: &PolygonalMesh, kind: ProblemKind) -> Result<DofMap> {
    let nv = mesh.num_vertices();
    let mut fixed = vec![false; 3 * nv];
    let scale = mesh.h();
    for e in mesh.boundary_edges() {
        let [a, b] = e.vertices;
        match (kind, e.tag) {
            (ProblemKind::Unconstrained, _) => {}
            (_, BoundaryTag::Interior) => {
                return Err(Error::Config(format!("boundary edge {a}-{b} carries no boundary condition")));
            }
            (ProblemKind::Clamped, BoundaryTag::Clamped) => {
                for v in [a, b] {
                    for s in Slot::ALL {
                        fixed[DofMap::global(v, s)] = true;
                    }
                }
            }
            (ProblemKind::BridgeMixed, BoundaryTag::SimplySupported) => {
                let t = geometry::sub(mesh.position(b), mesh.position(a));
                let slot = if t[0].abs() <= 1e-12 * scale {
                    Slot::Dy
                } else if t[1].abs() <= 1e-12 * scale {
                    Slot::Dx
                } else {
                    return Err(Error::Config(format!("simply supported edge {a}-{b} is not axis-aligned")));
                };
                for v in [a, b] {
                    fixed[DofMap::global(v, Slot::Value)] = true;
                    fixed[DofMap::global(v, slot)] = true;
                }
            }
            (ProblemKind::BridgeMixed, BoundaryTag::Free) => {}
            (kind, tag) => {
                return Err(Error::Config(format!("boundary tag {} is not allowed for a {kind:?} problem", tag.as_str())));
            }
        }
    }
    let mut free_of = vec![None; 3 * nv];
    let mut free_to_global = Vec::new();
    for (g, &f) in fixed.iter().enumerate() {
        if !f {
            free_of[g] = Some(free_to_global.len());
            free_to_global.push(g);
        }
    }
    Ok(DofMap { n_vertices: nv, free_of, free_to_global })
}

/// Per-cell data kept after assembly.
#[derive(Debug, Clone)]
pub struct ElementData {
    pub geometry: ElementGeometry,
    pub projectors: ProjectorSet,
    pub matrices: LocalMatrices,
    /// Quadrature-weighted `Pi^2 phi_i` values, see [`element::load_operator`].
    pub load_operator: DMatrix<f64>,
    /// Global DoF of each local DoF.
    pub global_dofs: Vec<usize>,
    /// Damping factor `delta(centroid)`.
    pub delta: f64,
}

#[derive(Debug, Clone)]
pub struct GlobalSystem {
    pub mesh: PolygonalMesh,
    pub dof_map: DofMap,
    pub sigma: f64,
    pub vertex_scales: Vec<f64>,
    pub elements: Vec<ElementData>,
    pub m: SparseMatrix,
    pub m_delta: SparseMatrix,
    pub a: SparseMatrix,
    pub ax: SparseMatrix,
}

fn scatter(elements: &[ElementData], dof_map: &DofMap, pick: impl Fn(&ElementData) -> (&DMatrix<f64>, f64)) -> SparseMatrix {
    let mut triplets = Vec::new();
    for el in elements {
        let (local, factor) = pick(el);
        for (i, &gi) in el.global_dofs.iter().enumerate() {
            let Some(fi) = dof_map.free_index(gi) else { continue };
            for (j, &gj) in el.global_dofs.iter().enumerate() {
                if let Some(fj) = dof_map.free_index(gj) {
                    triplets.push((fi, fj, factor * local[(i, j)]));
                }
            }
        }
    }
    let n = dof_map.n_free();
    SparseMatrix::from_triplets(n, n, &triplets).expect("free indices are in range")
}

/// Local kernels in parallel, then a sequential scatter in cell order so the
/// result does not depend on the thread count.
pub fn assemble(mesh: &PolygonalMesh, dof_map: &DofMap, sigma: f64, delta: impl Fn(Point) -> f64 + Sync) -> Result<GlobalSystem> {
    if dof_map.n_vertices() != mesh.num_vertices() {
        return Err(Error::Dimension("DoF map does not belong to this mesh".into()));
    }
    let scales = mesh.vertex_scales();
    let elements = (0..mesh.num_cells())
        .into_par_iter()
        .map(|c| -> Result<ElementData> {
            let geometry = ElementGeometry::from_mesh(mesh, c, &scales)?;
            let projectors = element::build_projectors(&geometry, sigma)?;
            let matrices = element::build_local_matrices(&geometry, &projectors);
            let load_operator = element::load_operator(&geometry, &projectors);
            let global_dofs = mesh.cells()[c]
                .vertices
                .iter()
                .flat_map(|&v| Slot::ALL.map(|s| DofMap::global(v, s)))
                .collect();
            let d = delta(geometry.centroid);
            if !d.is_finite() {
                return Err(Error::Evaluation { x: geometry.centroid[0], y: geometry.centroid[1] });
            }
            Ok(ElementData { delta: d, geometry, projectors, matrices, load_operator, global_dofs })
        })
        .collect::<Result<Vec<_>>>()?;
    let m = scatter(&elements, dof_map, |e| (&e.matrices.m, 1.0));
    let m_delta = scatter(&elements, dof_map, |e| (&e.matrices.m, e.delta));
    let a = scatter(&elements, dof_map, |e| (&e.matrices.k, 1.0));
    let ax = scatter(&elements, dof_map, |e| (&e.matrices.ax, 1.0));
    Ok(GlobalSystem {
        mesh: mesh.clone(),
        dof_map: dof_map.clone(),
        sigma,
        vertex_scales: scales,
        elements,
        m,
        m_delta,
        a,
        ax,
    })
}

impl GlobalSystem {
    pub fn n_free(&self) -> usize {
        self.dof_map.n_free()
    }

    /// Local DoF vector of element `el` from a free-DoF vector.
    pub fn local_dofs(&self, el: &ElementData, free: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            el.global_dofs.len(),
            el.global_dofs.iter().map(|&g| self.dof_map.free_index(g).map_or(0.0, |k| free[k])),
        )
    }

    /// Load vector `(Pi^2 g, phi_i)` on the free DoFs.
    pub fn assemble_load(&self, g: impl Fn(Point) -> f64 + Sync) -> Result<DVector<f64>> {
        let locals = self
            .elements
            .par_iter()
            .map(|el| element::sample(&el.geometry, &g).map(|s| el.load_operator.tr_mul(&s)))
            .collect::<Result<Vec<_>>>()?;
        let mut f = DVector::zeros(self.n_free());
        for (el, fl) in self.elements.iter().zip(&locals) {
            for (i, &gi) in el.global_dofs.iter().enumerate() {
                if let Some(k) = self.dof_map.free_index(gi) {
                    f[k] += fl[i];
                }
            }
        }
        Ok(f)
    }

    /// Interpolant of `u` (value and gradient) on the free DoFs. Fixed slots
    /// must agree with the zero essential data.
    pub fn interpolate(&self, u: impl Fn(Point) -> (f64, [f64; 2])) -> Result<DVector<f64>> {
        let mut full = DVector::zeros(self.dof_map.n_total());
        for v in 0..self.mesh.num_vertices() {
            let p = self.mesh.position(v);
            let (val, grad) = u(p);
            let h = self.vertex_scales[v];
            for (s, x) in [(Slot::Value, val), (Slot::Dx, h * grad[0]), (Slot::Dy, h * grad[1])] {
                let g = DofMap::global(v, s);
                if !x.is_finite() {
                    return Err(Error::Evaluation { x: p[0], y: p[1] });
                }
                if self.dof_map.is_fixed(g) && x.abs() > 1e-8 {
                    return Err(Error::DataIncompatibility(format!(
                        "essential slot {s:?} of vertex {v} at ({}, {}) has value {x:e}",
                        p[0], p[1]
                    )));
                }
                full[g] = x;
            }
        }
        Ok(self.dof_map.restrict(&full))
    }
}
