//! JSON mesh files.
//!
//! ```json
//! {
//!   "vertices": [[x, y], ...],
//!   "cells": [[v0, v1, v2, ...], ...],
//!   "boundary": [{"edge": [v0, v1], "tag": "simply_supported" | "free" | "clamped"}, ...],
//!   "bounds": [xmin, ymin, xmax, ymax]
//! }
//! ```
//!
//! Cells are counter-clockwise. Coordinates are written with the shortest
//! representation that round-trips to the same `f64`.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{BoundaryTag, Bounds, PolygonalMesh};
use crate::error::{Error, Result};
use crate::geometry::{self, Point};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryRecord {
    pub edge: [usize; 2],
    pub tag: BoundaryTag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshFile {
    pub vertices: Vec<[f64; 2]>,
    pub cells: Vec<Vec<usize>>,
    pub boundary: Vec<BoundaryRecord>,
    pub bounds: [f64; 4],
}

impl From<&PolygonalMesh> for MeshFile {
    fn from(mesh: &PolygonalMesh) -> Self {
        MeshFile {
            vertices: mesh.vertices().iter().map(|v| v.position).collect(),
            cells: mesh.cells().iter().map(|c| c.vertices.clone()).collect(),
            boundary: mesh
                .boundary_edges()
                .map(|e| BoundaryRecord { edge: e.vertices, tag: e.tag })
                .collect(),
            bounds: mesh.bounds().as_array(),
        }
    }
}

pub fn write_mesh(mesh: &PolygonalMesh, path: impl AsRef<Path>) -> Result<()> {
    let text = serde_json::to_string(&MeshFile::from(mesh)).expect("mesh serialisation is infallible");
    std::fs::write(path, text)?;
    Ok(())
}

fn parse_err(record: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Parse { record: record.into(), message: message.into() }
}

fn field<'a>(root: &'a Value, key: &str) -> Result<&'a Vec<Value>> {
    root.get(key)
        .ok_or_else(|| parse_err(key, "missing key"))?
        .as_array()
        .ok_or_else(|| parse_err(key, "expected an array"))
}

fn as_f64(v: &Value, record: &str) -> Result<f64> {
    v.as_f64().ok_or_else(|| parse_err(record, format!("expected a number, found {v}")))
}

fn as_index(v: &Value, record: &str) -> Result<usize> {
    v.as_u64()
        .map(|x| x as usize)
        .ok_or_else(|| parse_err(record, format!("expected a vertex index, found {v}")))
}

impl MeshFile {
    /// Parse with record-level diagnostics (`vertices[12]`, `boundary[3].tag`, ...).
    pub fn parse(text: &str) -> Result<Self> {
        let root: Value = serde_json::from_str(text).map_err(|e| parse_err("document", e.to_string()))?;
        let mut vertices = Vec::new();
        for (i, v) in field(&root, "vertices")?.iter().enumerate() {
            let rec = format!("vertices[{i}]");
            match v.as_array().map(|a| a.as_slice()) {
                Some([x, y]) => vertices.push([as_f64(x, &rec)?, as_f64(y, &rec)?]),
                _ => return Err(parse_err(rec, "expected [x, y]")),
            }
        }
        let mut cells = Vec::new();
        for (i, c) in field(&root, "cells")?.iter().enumerate() {
            let rec = format!("cells[{i}]");
            let ids = c.as_array().ok_or_else(|| parse_err(&rec, "expected an array of vertex ids"))?;
            cells.push(ids.iter().map(|v| as_index(v, &rec)).collect::<Result<Vec<_>>>()?);
        }
        let mut boundary = Vec::new();
        for (i, b) in field(&root, "boundary")?.iter().enumerate() {
            let rec = format!("boundary[{i}]");
            let edge = match b.get("edge").and_then(Value::as_array).map(|a| a.as_slice()) {
                Some([a, b]) => [as_index(a, &rec)?, as_index(b, &rec)?],
                _ => return Err(parse_err(format!("{rec}.edge"), "expected [v0, v1]")),
            };
            let tag = match b.get("tag").and_then(Value::as_str) {
                Some("simply_supported") => BoundaryTag::SimplySupported,
                Some("free") => BoundaryTag::Free,
                Some("clamped") => BoundaryTag::Clamped,
                other => {
                    return Err(parse_err(
                        format!("{rec}.tag"),
                        format!("expected \"simply_supported\", \"free\" or \"clamped\", found {other:?}"),
                    ))
                }
            };
            boundary.push(BoundaryRecord { edge, tag });
        }
        let bounds = match field(&root, "bounds")?.as_slice() {
            [a, b, c, d] => [as_f64(a, "bounds")?, as_f64(b, "bounds")?, as_f64(c, "bounds")?, as_f64(d, "bounds")?],
            _ => return Err(parse_err("bounds", "expected [xmin, ymin, xmax, ymax]")),
        };
        Ok(MeshFile { vertices, cells, boundary, bounds })
    }

    /// Validate and build the mesh. Clockwise cells are reversed with a warning.
    pub fn into_mesh(self) -> Result<PolygonalMesh> {
        let [xmin, ymin, xmax, ymax] = self.bounds;
        let bounds = Bounds::new(xmin, ymin, xmax, ymax).map_err(|e| Error::Validation(e.to_string()))?;
        let nv = self.vertices.len();
        let mut cells = self.cells;
        for (c, ids) in cells.iter_mut().enumerate() {
            if let Some(&bad) = ids.iter().find(|&&v| v >= nv) {
                return Err(Error::Validation(format!("cell {c} references vertex {bad} but only {nv} vertices exist")));
            }
            let poly: Vec<Point> = ids.iter().map(|&v| self.vertices[v]).collect();
            if ids.len() >= 3 && geometry::signed_area(&poly) < 0.0 {
                log::warn!("cell {c} is clockwise; reorienting");
                ids.reverse();
            }
        }
        let mut tags = HashMap::new();
        for (i, rec) in self.boundary.iter().enumerate() {
            let [a, b] = rec.edge;
            if a >= nv || b >= nv {
                return Err(Error::Validation(format!("boundary[{i}] references a vertex outside 0..{nv}")));
            }
            tags.insert((a.min(b), a.max(b)), rec.tag);
        }
        let n_records = tags.len();
        let mut matched = 0usize;
        let mesh = PolygonalMesh::from_polygons(self.vertices, cells, bounds, |[a, b], _| {
            let t = tags.get(&(a.min(b), a.max(b))).copied();
            matched += t.is_some() as usize;
            t
        })?;
        if matched != n_records {
            return Err(Error::Validation(format!(
                "{} boundary records name edges that are not on the boundary",
                n_records - matched
            )));
        }
        Ok(mesh)
    }
}

pub fn read_mesh(path: impl AsRef<Path>) -> Result<PolygonalMesh> {
    let text = std::fs::read_to_string(path)?;
    MeshFile::parse(&text)?.into_mesh()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_nonconvex_grid, generate_voronoi, BoundarySpec};

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for mesh in [
            generate_nonconvex_grid(3, Bounds::unit_square(), &BoundarySpec::Bridge).unwrap(),
            generate_voronoi(30, Bounds::new(-1.0, 0.0, 2.0, 0.5).unwrap(), 2, 5, &BoundarySpec::AllClamped).unwrap(),
        ] {
            let p = dir.path().join("m.json");
            write_mesh(&mesh, &p).unwrap();
            assert_eq!(read_mesh(&p).unwrap(), mesh);
        }
    }

    #[test]
    fn out_of_range_vertex_is_a_validation_error() {
        let text = r#"{"vertices":[[0,0],[1,0],[1,1],[0,1]],"cells":[[0,1,2,4]],
            "boundary":[],"bounds":[0,0,1,1]}"#;
        let err = MeshFile::parse(text).unwrap().into_mesh().unwrap_err();
        assert!(matches!(err, Error::Validation(m) if m.contains("vertex 4")));
    }

    #[test]
    fn malformed_record_is_named() {
        let text = r#"{"vertices":[[0,0],[1,0,3]],"cells":[],"boundary":[],"bounds":[0,0,1,1]}"#;
        match MeshFile::parse(text).unwrap_err() {
            Error::Parse { record, .. } => assert_eq!(record, "vertices[1]"),
            e => panic!("unexpected {e}"),
        }
        let text = r#"{"vertices":[],"cells":[],"boundary":[{"edge":[0,1],"tag":"hinged"}],"bounds":[0,0,1,1]}"#;
        match MeshFile::parse(text).unwrap_err() {
            Error::Parse { record, .. } => assert_eq!(record, "boundary[0].tag"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn clockwise_cell_is_reoriented() {
        let text = r#"{"vertices":[[0,0],[1,0],[1,1],[0,1]],"cells":[[0,3,2,1]],
            "boundary":[{"edge":[0,1],"tag":"clamped"},{"edge":[1,2],"tag":"clamped"},
                        {"edge":[2,3],"tag":"clamped"},{"edge":[3,0],"tag":"clamped"}],
            "bounds":[0,0,1,1]}"#;
        let mesh = MeshFile::parse(text).unwrap().into_mesh().unwrap();
        assert_eq!(mesh.cells()[0].vertices, vec![1, 2, 3, 0]);
        assert!(mesh.cells()[0].area > 0.0);
    }

    #[test]
    fn missing_boundary_tag_is_rejected() {
        let text = r#"{"vertices":[[0,0],[1,0],[1,1],[0,1]],"cells":[[0,1,2,3]],
            "boundary":[{"edge":[0,1],"tag":"clamped"}],"bounds":[0,0,1,1]}"#;
        assert!(matches!(MeshFile::parse(text).unwrap().into_mesh(), Err(Error::Validation(_))));
    }
}
