//! Clipped Voronoi diagrams by half-plane intersection, Lloyd smoothing and
//! vertex welding into a conforming mesh.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BoundarySpec, Bounds, PolygonalMesh};
use crate::error::{Error, Result};
use crate::geometry::{self, Point};

const MAX_RETRIES: usize = 8;

/// Voronoi cell of every seed, clipped to the rectangle. Cells come back
/// counter-clockwise in seed order.
pub(crate) fn clipped_cells(seeds: &[Point], bounds: &Bounds) -> Result<Vec<Vec<Point>>> {
    let scale = bounds.width().hypot(bounds.height());
    let mut cells = Vec::with_capacity(seeds.len());
    for (i, &s) in seeds.iter().enumerate() {
        let mut order: Vec<(f64, usize)> = seeds
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(j, &q)| (geometry::dist(s, q), j))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut poly = bounds.corners().to_vec();
        for &(d, j) in &order {
            if d <= 1e-12 * scale {
                return Err(Error::GenerationFailed(format!("seeds {i} and {j} coincide")));
            }
            let reach = poly.iter().map(|&p| geometry::dist(s, p)).fold(0.0, f64::max);
            if d > 2.0 * reach {
                break;
            }
            let q = seeds[j];
            let normal = geometry::sub(q, s);
            let offset = 0.5 * (geometry::dot(normal, q) + geometry::dot(normal, s));
            poly = geometry::clip_halfplane(&poly, normal, offset);
            if poly.len() < 3 {
                return Err(Error::GenerationFailed(format!("Voronoi cell of seed {i} vanished")));
            }
        }
        cells.push(poly);
    }
    Ok(cells)
}

/// Merge coincident vertices of independently computed cells, snap points
/// to the rectangle sides and build the mesh.
pub(crate) fn weld_into_mesh(polys: Vec<Vec<Point>>, bounds: Bounds, boundary: &BoundarySpec) -> Result<PolygonalMesh> {
    let scale = bounds.width().hypot(bounds.height());
    let tol = 1e-9 * scale;
    let snap = |mut p: Point| {
        for (c, lo, hi) in [(0, bounds.xmin, bounds.xmax), (1, bounds.ymin, bounds.ymax)] {
            if (p[c] - lo).abs() <= tol {
                p[c] = lo;
            } else if (p[c] - hi).abs() <= tol {
                p[c] = hi;
            }
        }
        p
    };
    let key = |p: Point| ((p[0] / tol).floor() as i64, (p[1] / tol).floor() as i64);
    let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    let mut positions: Vec<Point> = Vec::new();
    let mut cells = Vec::with_capacity(polys.len());
    for poly in polys {
        let mut ids: Vec<usize> = Vec::with_capacity(poly.len());
        for p in poly {
            let p = snap(p);
            let (kx, ky) = key(p);
            let mut found = None;
            'search: for ox in -1..=1 {
                for oy in -1..=1 {
                    if let Some(list) = buckets.get(&(kx + ox, ky + oy)) {
                        for &v in list {
                            if geometry::dist(positions[v], p) <= tol {
                                found = Some(v);
                                break 'search;
                            }
                        }
                    }
                }
            }
            let v = found.unwrap_or_else(|| {
                positions.push(p);
                buckets.entry((kx, ky)).or_default().push(positions.len() - 1);
                positions.len() - 1
            });
            if ids.last() != Some(&v) {
                ids.push(v);
            }
        }
        while ids.len() > 1 && ids.first() == ids.last() {
            ids.pop();
        }
        if ids.len() >= 3 {
            cells.push(ids);
        }
    }
    PolygonalMesh::with_boundary_spec(positions, cells, bounds, boundary)
}

/// Voronoi mesh of `n_seeds` uniformly drawn sites after `lloyd_iterations`
/// centroid relocations. Coincident seeds trigger a deterministic re-draw of
/// the offending site, up to a bounded number of retries.
pub fn generate_voronoi(n_seeds: usize, bounds: Bounds, lloyd_iterations: usize, seed: u64, boundary: &BoundarySpec) -> Result<PolygonalMesh> {
    if n_seeds == 0 {
        return Err(Error::InvalidArgument("Voronoi mesh needs at least one seed".into()));
    }
    let bounds = Bounds::new(bounds.xmin, bounds.ymin, bounds.xmax, bounds.ymax)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |rng: &mut ChaCha8Rng| -> Point {
        [rng.random_range(bounds.xmin..bounds.xmax), rng.random_range(bounds.ymin..bounds.ymax)]
    };
    let mut seeds: Vec<Point> = (0..n_seeds).map(|_| draw(&mut rng)).collect();
    voronoi_from_seeds(&mut seeds, &bounds, lloyd_iterations, &mut rng, &mut draw, boundary)
}

fn voronoi_from_seeds(
    seeds: &mut [Point],
    bounds: &Bounds,
    lloyd_iterations: usize,
    rng: &mut ChaCha8Rng,
    draw: &mut impl FnMut(&mut ChaCha8Rng) -> Point,
    boundary: &BoundarySpec,
) -> Result<PolygonalMesh> {
    let mut retries = 0;
    let mut cells = loop {
        match clipped_cells(seeds, bounds) {
            Ok(c) => break c,
            Err(Error::GenerationFailed(msg)) if retries < MAX_RETRIES => {
                retries += 1;
                log::debug!("re-drawing Voronoi seeds: {msg}");
                redraw_coincident(seeds, bounds, rng, draw);
            }
            Err(e) => return Err(e),
        }
    };
    for _ in 0..lloyd_iterations {
        for (s, poly) in seeds.iter_mut().zip(&cells) {
            *s = geometry::centroid(poly);
        }
        cells = clipped_cells(seeds, bounds)?;
    }
    weld_into_mesh(cells, *bounds, boundary)
}

fn redraw_coincident(seeds: &mut [Point], bounds: &Bounds, rng: &mut ChaCha8Rng, draw: &mut impl FnMut(&mut ChaCha8Rng) -> Point) {
    let tol = 1e-12 * bounds.width().hypot(bounds.height());
    for i in 0..seeds.len() {
        if (0..i).any(|j| geometry::dist(seeds[i], seeds[j]) <= tol) {
            seeds[i] = draw(rng);
        }
    }
}
