//! Polygonal meshes of the plate domain with boundary classification.
//!
//! A [`PolygonalMesh`] is immutable once built. Every constructor funnels
//! through [`PolygonalMesh::from_polygons`], which derives per-cell geometry,
//! builds the edge table with cell adjacency, applies the boundary tags and
//! checks the tiling invariants.

mod generate;
mod io;
pub mod regularity;
mod voronoi;

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, Point};

pub use generate::{
    generate_distorted_grid, generate_nonconvex_grid, generate_regular_polygon_grid, generate_square_grid,
};
pub use io::{read_mesh, write_mesh, MeshFile};
pub use regularity::{check_regularity, polygon_kernel, CellRegularity, RegularityReport};
pub use voronoi::generate_voronoi;

/// Relative tolerance of the tiling check (sum of cell areas vs. domain area).
pub const TILING_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryTag {
    SimplySupported,
    Free,
    Clamped,
    Interior,
}

impl BoundaryTag {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundaryTag::SimplySupported => "simply_supported",
            BoundaryTag::Free => "free",
            BoundaryTag::Clamped => "clamped",
            BoundaryTag::Interior => "interior",
        }
    }

    /// Precedence when a vertex touches edges of several kinds: essential
    /// conditions win.
    fn rank(self) -> u8 {
        match self {
            BoundaryTag::Interior => 0,
            BoundaryTag::Free => 1,
            BoundaryTag::SimplySupported => 2,
            BoundaryTag::Clamped => 3,
        }
    }
}

impl fmt::Display for BoundaryTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

impl Bounds {
    pub fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Result<Self> {
        let b = Bounds { xmin, ymin, xmax, ymax };
        if !(xmin.is_finite() && ymin.is_finite() && xmax.is_finite() && ymax.is_finite()) || xmax <= xmin || ymax <= ymin {
            return Err(Error::InvalidArgument(format!("degenerate bounds {b:?}")));
        }
        Ok(b)
    }

    pub fn unit_square() -> Self {
        Bounds { xmin: 0.0, ymin: 0.0, xmax: 1.0, ymax: 1.0 }
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn corners(&self) -> [Point; 4] {
        [
            [self.xmin, self.ymin],
            [self.xmax, self.ymin],
            [self.xmax, self.ymax],
            [self.xmin, self.ymax],
        ]
    }

    fn as_array(&self) -> [f64; 4] {
        [self.xmin, self.ymin, self.xmax, self.ymax]
    }
}

pub type TagFn = dyn Fn(Point, &Bounds) -> BoundaryTag + Send + Sync;

/// How generators tag boundary edges, evaluated at edge midpoints.
#[derive(Clone, Default)]
pub enum BoundarySpec {
    #[default]
    AllClamped,
    /// Simply supported on the short sides `x = xmin, xmax`, free on `y = ymin, ymax`.
    Bridge,
    Custom(Arc<TagFn>),
}

impl fmt::Debug for BoundarySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundarySpec::AllClamped => f.write_str("AllClamped"),
            BoundarySpec::Bridge => f.write_str("Bridge"),
            BoundarySpec::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl BoundarySpec {
    pub fn tag(&self, midpoint: Point, bounds: &Bounds) -> BoundaryTag {
        match self {
            BoundarySpec::AllClamped => BoundaryTag::Clamped,
            BoundarySpec::Bridge => {
                let tol = 1e-9 * bounds.width();
                if (midpoint[0] - bounds.xmin).abs() <= tol || (midpoint[0] - bounds.xmax).abs() <= tol {
                    BoundaryTag::SimplySupported
                } else {
                    BoundaryTag::Free
                }
            }
            BoundarySpec::Custom(f) => f(midpoint, bounds),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    pub id: usize,
    pub position: Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    /// Counter-clockwise vertex ids.
    pub vertices: Vec<usize>,
    pub diameter: f64,
    pub centroid: Point,
    pub area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub vertices: [usize; 2],
    /// First entry is the cell traversing the edge as `v0 -> v1`.
    pub cells: [Option<usize>; 2],
    pub tag: BoundaryTag,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.cells[1].is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolygonalMesh {
    vertices: Vec<Vertex>,
    cells: Vec<Cell>,
    edges: Vec<Edge>,
    bounds: Bounds,
}

impl PolygonalMesh {
    /// Build a mesh from raw polygons, tagging boundary edges with `tag_of`
    /// (called with the edge endpoints and midpoint). Cells must already be
    /// counter-clockwise.
    pub fn from_polygons<F>(positions: Vec<Point>, cells: Vec<Vec<usize>>, bounds: Bounds, mut tag_of: F) -> Result<Self>
    where
        F: FnMut([usize; 2], Point) -> Option<BoundaryTag>,
    {
        let nv = positions.len();
        for (i, p) in positions.iter().enumerate() {
            if !(p[0].is_finite() && p[1].is_finite()) {
                return Err(Error::Validation(format!("vertex {i} has non-finite position")));
            }
        }
        let mut used = vec![false; nv];
        let mut built = Vec::with_capacity(cells.len());
        for (c, ids) in cells.into_iter().enumerate() {
            if ids.len() < 3 {
                return Err(Error::Validation(format!("cell {c} has {} vertices", ids.len())));
            }
            if let Some(&bad) = ids.iter().find(|&&v| v >= nv) {
                return Err(Error::Validation(format!("cell {c} references vertex {bad} but only {nv} vertices exist")));
            }
            let poly: Vec<Point> = ids.iter().map(|&v| positions[v]).collect();
            if !geometry::is_simple(&poly) {
                return Err(Error::Validation(format!("cell {c} is not a simple polygon")));
            }
            let area = geometry::signed_area(&poly);
            if area <= 0.0 {
                return Err(Error::Validation(format!("cell {c} is not counter-clockwise (signed area {area:e})")));
            }
            for &v in &ids {
                used[v] = true;
            }
            built.push(Cell {
                diameter: geometry::diameter(&poly),
                centroid: geometry::centroid(&poly),
                area,
                vertices: ids,
            });
        }
        if let Some(v) = used.iter().position(|u| !u) {
            return Err(Error::Validation(format!("vertex {v} is not used by any cell")));
        }

        let mut lookup: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges: Vec<Edge> = Vec::new();
        for (c, cell) in built.iter().enumerate() {
            let n = cell.vertices.len();
            for i in 0..n {
                let (a, b) = (cell.vertices[i], cell.vertices[(i + 1) % n]);
                let key = (a.min(b), a.max(b));
                match lookup.get(&key) {
                    None => {
                        lookup.insert(key, edges.len());
                        edges.push(Edge { vertices: [a, b], cells: [Some(c), None], tag: BoundaryTag::Interior });
                    }
                    Some(&e) => {
                        let edge = &mut edges[e];
                        if edge.cells[1].is_some() {
                            return Err(Error::Validation(format!("edge ({a}, {b}) is shared by more than two cells")));
                        }
                        if edge.vertices != [b, a] {
                            return Err(Error::Validation(format!(
                                "cells {} and {c} traverse edge ({a}, {b}) in the same direction",
                                edge.cells[0].unwrap()
                            )));
                        }
                        edge.cells[1] = Some(c);
                    }
                }
            }
        }
        for edge in edges.iter_mut().filter(|e| e.is_boundary()) {
            let [a, b] = edge.vertices;
            let mid = [0.5 * (positions[a][0] + positions[b][0]), 0.5 * (positions[a][1] + positions[b][1])];
            match tag_of(edge.vertices, mid) {
                Some(BoundaryTag::Interior) | None => {
                    return Err(Error::Validation(format!("boundary edge ({a}, {b}) carries no boundary tag")));
                }
                Some(tag) => edge.tag = tag,
            }
        }

        let total: f64 = built.iter().map(|c| c.area).sum();
        let rel = (total - bounds.area()).abs() / bounds.area();
        if rel > TILING_TOL {
            return Err(Error::Validation(format!(
                "cells do not tile the domain: area sum {total} vs domain {} (relative gap {rel:e})",
                bounds.area()
            )));
        }

        let vertices = positions.into_iter().enumerate().map(|(id, position)| Vertex { id, position }).collect();
        Ok(PolygonalMesh { vertices, cells: built, edges, bounds })
    }

    /// Same as [`from_polygons`](Self::from_polygons) with a midpoint tagging rule.
    pub fn with_boundary_spec(positions: Vec<Point>, cells: Vec<Vec<usize>>, bounds: Bounds, spec: &BoundarySpec) -> Result<Self> {
        PolygonalMesh::from_polygons(positions, cells, bounds, |_, mid| Some(spec.tag(mid, &bounds)))
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn position(&self, v: usize) -> Point {
        self.vertices[v].position
    }

    pub fn cell_polygon(&self, c: usize) -> Vec<Point> {
        self.cells[c].vertices.iter().map(|&v| self.vertices[v].position).collect()
    }

    /// Mesh size: the largest cell diameter.
    pub fn h(&self) -> f64 {
        self.cells.iter().map(|c| c.diameter).fold(0.0, f64::max)
    }

    /// Per-vertex length scale: mean diameter of the cells touching the vertex.
    pub fn vertex_scales(&self) -> Vec<f64> {
        let mut sum = vec![0.0; self.vertices.len()];
        let mut count = vec![0usize; self.vertices.len()];
        for cell in &self.cells {
            for &v in &cell.vertices {
                sum[v] += cell.diameter;
                count[v] += 1;
            }
        }
        sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect()
    }

    /// Boundary classification of every vertex. A vertex touching several
    /// boundary kinds takes the most restrictive one (clamped, then simply
    /// supported, then free).
    pub fn vertex_tags(&self) -> Vec<BoundaryTag> {
        let mut tags = vec![BoundaryTag::Interior; self.vertices.len()];
        for edge in self.edges.iter().filter(|e| e.is_boundary()) {
            for &v in &edge.vertices {
                if edge.tag.rank() > tags[v].rank() {
                    tags[v] = edge.tag;
                }
            }
        }
        tags
    }

    pub fn boundary_edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(|e| e.is_boundary())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_vertex() {
        let pos = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]];
        let err = PolygonalMesh::from_polygons(pos, vec![vec![0, 1, 3]], Bounds::unit_square(), |_, _| Some(BoundaryTag::Clamped))
            .unwrap_err();
        assert!(matches!(err, Error::Validation(m) if m.contains("vertex 3")));
    }

    #[test]
    fn rejects_gap_in_tiling() {
        let pos = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]];
        let err = PolygonalMesh::from_polygons(pos, vec![vec![0, 1, 2]], Bounds::unit_square(), |_, _| Some(BoundaryTag::Clamped))
            .unwrap_err();
        assert!(matches!(err, Error::Validation(m) if m.contains("tile")));
    }

    #[test]
    fn corner_vertex_takes_essential_tag() {
        let mesh = generate_square_grid(2, Bounds::new(0.0, -0.1, 1.0, 0.1).unwrap(), &BoundarySpec::Bridge).unwrap();
        let tags = mesh.vertex_tags();
        // vertex 0 is the corner (xmin, ymin)
        assert_eq!(tags[0], BoundaryTag::SimplySupported);
        // vertex 1 is the bottom midpoint
        assert_eq!(tags[1], BoundaryTag::Free);
        assert_eq!(tags[4], BoundaryTag::Interior);
    }

    #[test]
    fn vertex_scales_average_incident_diameters() {
        let mesh = generate_square_grid(2, Bounds::unit_square(), &BoundarySpec::AllClamped).unwrap();
        let hs = mesh.vertex_scales();
        let d = 0.5 * 2f64.sqrt();
        assert!(hs.iter().all(|h| (h - d).abs() < 1e-15));
    }
}
