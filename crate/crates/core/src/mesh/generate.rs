use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{voronoi, BoundarySpec, Bounds, PolygonalMesh};
use crate::error::{Error, Result};
use crate::geometry::{self, Point};

fn grid_points(n: usize, bounds: &Bounds) -> Vec<Point> {
    let (dx, dy) = (bounds.width() / n as f64, bounds.height() / n as f64);
    let mut pts = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            let x = if i == n { bounds.xmax } else { bounds.xmin + i as f64 * dx };
            let y = if j == n { bounds.ymax } else { bounds.ymin + j as f64 * dy };
            pts.push([x, y]);
        }
    }
    pts
}

fn grid_cells(n: usize) -> Vec<Vec<usize>> {
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut cells = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            cells.push(vec![id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    cells
}

/// `n x n` axis-aligned quadrilaterals. Vertices are numbered row by row
/// from `(xmin, ymin)`.
pub fn generate_square_grid(n: usize, bounds: Bounds, boundary: &BoundarySpec) -> Result<PolygonalMesh> {
    if n == 0 {
        return Err(Error::InvalidArgument("grid needs at least one subdivision".into()));
    }
    let bounds = Bounds::new(bounds.xmin, bounds.ymin, bounds.xmax, bounds.ymax)?;
    PolygonalMesh::with_boundary_spec(grid_points(n, &bounds), grid_cells(n), bounds, boundary)
}

/// Square grid whose interior vertices are moved by up to `amplitude` cell
/// widths in each direction, drawn from a ChaCha8 stream seeded by `seed`.
pub fn generate_distorted_grid(n: usize, bounds: Bounds, amplitude: f64, seed: u64, boundary: &BoundarySpec) -> Result<PolygonalMesh> {
    if n == 0 {
        return Err(Error::InvalidArgument("grid needs at least one subdivision".into()));
    }
    if !(0.0..0.5).contains(&amplitude) {
        return Err(Error::InvalidArgument(format!("distortion amplitude {amplitude} outside [0, 0.5)")));
    }
    let bounds = Bounds::new(bounds.xmin, bounds.ymin, bounds.xmax, bounds.ymax)?;
    let (dx, dy) = (bounds.width() / n as f64, bounds.height() / n as f64);
    let mut pts = grid_points(n, &bounds);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for j in 1..n {
        for i in 1..n {
            let p = &mut pts[j * (n + 1) + i];
            let (ox, oy): (f64, f64) = (rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0));
            p[0] += amplitude * ox * dx;
            p[1] += amplitude * oy * dy;
        }
    }
    let cells = grid_cells(n);
    for (c, ids) in cells.iter().enumerate() {
        let poly: Vec<Point> = ids.iter().map(|&v| pts[v]).collect();
        if !geometry::is_simple(&poly) || geometry::signed_area(&poly) <= 0.0 {
            return Err(Error::GenerationFailed(format!("cell {c} self-intersects for seed {seed}")));
        }
    }
    PolygonalMesh::with_boundary_spec(pts, cells, bounds, boundary)
}

/// Depth of the zig-zag that splits each grid square, as a fraction of the
/// square height.
const CHEVRON_DEPTH: f64 = 0.25;

/// Every grid square is cut by the zig-zag `(0, 1/2) -> (1/3, 1/2 - d) ->
/// (2/3, 1/2 + d) -> (1, 1/2)` (local coordinates) into two hexagons, each
/// with exactly one reflex vertex. Side midpoints are shared with the
/// neighbouring squares so the tiling is conforming.
pub fn generate_nonconvex_grid(n: usize, bounds: Bounds, boundary: &BoundarySpec) -> Result<PolygonalMesh> {
    if n == 0 {
        return Err(Error::InvalidArgument("grid needs at least one subdivision".into()));
    }
    let bounds = Bounds::new(bounds.xmin, bounds.ymin, bounds.xmax, bounds.ymax)?;
    let (dx, dy) = (bounds.width() / n as f64, bounds.height() / n as f64);
    let mut pts = grid_points(n, &bounds);
    let corner = |i: usize, j: usize| j * (n + 1) + i;
    let mid_base = pts.len();
    for j in 0..n {
        for i in 0..=n {
            let x = if i == n { bounds.xmax } else { bounds.xmin + i as f64 * dx };
            pts.push([x, bounds.ymin + (j as f64 + 0.5) * dy]);
        }
    }
    let mid = |i: usize, j: usize| mid_base + j * (n + 1) + i;
    let inner_base = pts.len();
    for j in 0..n {
        for i in 0..n {
            let (x0, y0) = (bounds.xmin + i as f64 * dx, bounds.ymin + j as f64 * dy);
            pts.push([x0 + dx / 3.0, y0 + (0.5 - CHEVRON_DEPTH) * dy]);
            pts.push([x0 + 2.0 * dx / 3.0, y0 + (0.5 + CHEVRON_DEPTH) * dy]);
        }
    }
    let inner = |i: usize, j: usize, k: usize| inner_base + 2 * (j * n + i) + k;
    let mut cells = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (p1, p2) = (inner(i, j, 0), inner(i, j, 1));
            cells.push(vec![corner(i, j), corner(i + 1, j), mid(i + 1, j), p2, p1, mid(i, j)]);
            cells.push(vec![mid(i, j), p1, p2, mid(i + 1, j), corner(i + 1, j + 1), corner(i, j + 1)]);
        }
    }
    PolygonalMesh::with_boundary_spec(pts, cells, bounds, boundary)
}

/// Hexagon-dominant tiling: the clipped Voronoi diagram of a triangular
/// lattice with `n` sites per row. Rows sit on the top and bottom sides and
/// even rows put sites on the left and right sides, so boundary cells are
/// half and quarter hexagons.
pub fn generate_regular_polygon_grid(n: usize, bounds: Bounds, boundary: &BoundarySpec) -> Result<PolygonalMesh> {
    if n == 0 {
        return Err(Error::InvalidArgument("grid needs at least one subdivision".into()));
    }
    let bounds = Bounds::new(bounds.xmin, bounds.ymin, bounds.xmax, bounds.ymax)?;
    let s = bounds.width() / n as f64;
    let rows = ((bounds.height() / (s * 3f64.sqrt() / 2.0)).round() as usize).max(1);
    let dy = bounds.height() / rows as f64;
    let mut seeds = Vec::new();
    for j in 0..=rows {
        let y = if j == rows { bounds.ymax } else { bounds.ymin + j as f64 * dy };
        if j % 2 == 0 {
            for i in 0..=n {
                let x = if i == n { bounds.xmax } else { bounds.xmin + i as f64 * s };
                seeds.push([x, y]);
            }
        } else {
            for i in 0..n {
                seeds.push([bounds.xmin + (i as f64 + 0.5) * s, y]);
            }
        }
    }
    let polys = voronoi::clipped_cells(&seeds, &bounds)?;
    voronoi::weld_into_mesh(polys, bounds, boundary)
}
