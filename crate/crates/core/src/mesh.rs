//! Triangle meshes with per-vertex normals and a per-corner uv atlas.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};

const NORMAL_UNIT_TOL: f64 = 1e-4;
const UV_RANGE_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct TexturedMesh {
    pub vertices: Vec<Point3<f64>>,
    /// One unit normal per vertex.
    pub normals: Vec<Vector3<f64>>,
    pub faces: Vec<[usize; 3]>,
    /// uv coordinates per face corner, in `[0,1]^2`.
    pub face_uvs: Vec<[[f64; 2]; 3]>,
}

impl TexturedMesh {
    pub fn empty() -> Self {
        TexturedMesh {
            vertices: Vec::new(),
            normals: Vec::new(),
            faces: Vec::new(),
            face_uvs: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.normals.len() != self.vertices.len() {
            return Err(Error::Validation(format!(
                "mesh has {} vertices but {} normals",
                self.vertices.len(),
                self.normals.len()
            )));
        }
        if self.face_uvs.len() != self.faces.len() {
            return Err(Error::Validation(format!(
                "mesh has {} faces but {} uv triples",
                self.faces.len(),
                self.face_uvs.len()
            )));
        }
        for (fi, face) in self.faces.iter().enumerate() {
            for &vi in face {
                if vi >= self.vertices.len() {
                    return Err(Error::Validation(format!(
                        "face {fi} references vertex {vi} of {}",
                        self.vertices.len()
                    )));
                }
            }
        }
        for (ni, n) in self.normals.iter().enumerate() {
            if (n.norm() - 1.0).abs() > NORMAL_UNIT_TOL {
                return Err(Error::Validation(format!(
                    "normal {ni} has length {:.6}, expected unit",
                    n.norm()
                )));
            }
        }
        for (fi, uvs) in self.face_uvs.iter().enumerate() {
            for uv in uvs {
                if uv[0] < -UV_RANGE_TOL
                    || uv[0] > 1.0 + UV_RANGE_TOL
                    || uv[1] < -UV_RANGE_TOL
                    || uv[1] > 1.0 + UV_RANGE_TOL
                {
                    return Err(Error::Validation(format!(
                        "face {fi} uv ({}, {}) outside [0,1]",
                        uv[0], uv[1]
                    )));
                }
            }
        }
        Ok(())
    }

    /// Naive per-triangle uv atlas: each face gets its own cell in a square
    /// grid. Only meant for synthetic inputs that lack a parametrization;
    /// charts are discontinuous across every edge.
    pub fn assign_triangle_atlas(&mut self) {
        let n = self.faces.len();
        if n == 0 {
            self.face_uvs.clear();
            return;
        }
        let cols = (n as f64).sqrt().ceil() as usize;
        let rows = n.div_ceil(cols);
        let cw = 1.0 / cols as f64;
        let ch = 1.0 / rows as f64;
        // Inset so bilinear lookups never cross into the neighbor cell.
        let inset = 0.1;
        self.face_uvs = (0..n)
            .map(|i| {
                let r = i / cols;
                let c = i % cols;
                let x0 = c as f64 * cw + inset * cw;
                let y0 = r as f64 * ch + inset * ch;
                let x1 = (c as f64 + 1.0) * cw - inset * cw;
                let y1 = (r as f64 + 1.0) * ch - inset * ch;
                [[x0, y0], [x1, y0], [x0, y1]]
            })
            .collect();
    }
}

/// Parse a Wavefront-style text mesh (`v`, `vn`, `vt`, `f i/ti/ni`).
///
/// Normals are resolved to one per vertex; faces whose corners disagree on a
/// vertex normal are rejected. `vt` coordinates are stored per corner.
pub fn load_mesh(path: &Path) -> Result<TexturedMesh> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut positions: Vec<Point3<f64>> = Vec::new();
    let mut uv_pool: Vec<[f64; 2]> = Vec::new();
    let mut normal_pool: Vec<Vector3<f64>> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    let mut face_uvs: Vec<[[f64; 2]; 3]> = Vec::new();
    let mut vertex_normals: Vec<Option<usize>> = Vec::new();

    let bad = |line_no: usize, msg: &str| Error::parse(path, format!("line {line_no}: {msg}"));

    for (ln, line) in text.lines().enumerate() {
        let line_no = ln + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let tag = parts.next().unwrap();
        match tag {
            "v" | "vn" => {
                let mut xyz = [0.0f64; 3];
                for v in &mut xyz {
                    *v = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| bad(line_no, "expected three numbers"))?;
                }
                if tag == "v" {
                    positions.push(Point3::new(xyz[0], xyz[1], xyz[2]));
                    vertex_normals.push(None);
                } else {
                    normal_pool.push(Vector3::new(xyz[0], xyz[1], xyz[2]));
                }
            }
            "vt" => {
                let u: f64 = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad(line_no, "expected two numbers"))?;
                let v: f64 = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad(line_no, "expected two numbers"))?;
                uv_pool.push([u, v]);
            }
            "f" => {
                let mut corners = Vec::with_capacity(3);
                for spec in parts {
                    let mut it = spec.split('/');
                    let vi: usize = it
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| bad(line_no, "bad face corner"))?;
                    let ti: usize = it
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| bad(line_no, "face corner needs a uv index"))?;
                    let ni: usize = it
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| bad(line_no, "face corner needs a normal index"))?;
                    corners.push((vi - 1, ti - 1, ni - 1));
                }
                if corners.len() != 3 {
                    return Err(bad(line_no, "only triangles are supported"));
                }
                let mut face = [0usize; 3];
                let mut uvs = [[0.0f64; 2]; 3];
                for (k, &(vi, ti, ni)) in corners.iter().enumerate() {
                    if vi >= positions.len() {
                        return Err(bad(line_no, "vertex index out of range"));
                    }
                    let uv = *uv_pool
                        .get(ti)
                        .ok_or_else(|| bad(line_no, "uv index out of range"))?;
                    let n = *normal_pool
                        .get(ni)
                        .ok_or_else(|| bad(line_no, "normal index out of range"))?;
                    match vertex_normals[vi] {
                        None => vertex_normals[vi] = Some(ni),
                        Some(prev) if prev == ni => {}
                        Some(prev) => {
                            if (normal_pool[prev] - n).norm() > 1e-6 {
                                return Err(bad(
                                    line_no,
                                    "vertex referenced with conflicting normals \
                                     (one normal per vertex is required)",
                                ));
                            }
                        }
                    }
                    face[k] = vi;
                    uvs[k] = uv;
                }
                faces.push(face);
                face_uvs.push(uvs);
            }
            // mtllib/usemtl/o/g/s lines are tolerated and ignored.
            _ => {}
        }
    }

    let normals = vertex_normals
        .iter()
        .enumerate()
        .map(|(vi, ni)| match ni {
            Some(ni) => Ok(normal_pool[*ni]),
            None => {
                if faces.iter().any(|f| f.contains(&vi)) {
                    Err(Error::parse(path, format!("vertex {vi} has no normal")))
                } else {
                    // Unreferenced vertex: keep a placeholder unit normal.
                    Ok(Vector3::new(0.0, 0.0, 1.0))
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let mesh = TexturedMesh {
        vertices: positions,
        normals,
        faces,
        face_uvs,
    };
    mesh.validate()?;
    Ok(mesh)
}

/// Write a mesh in the format read by [`load_mesh`]. Floats are written with
/// shortest round-trip precision so geometry survives a save/load bit-exactly.
pub fn save_mesh(mesh: &TexturedMesh, path: &Path) -> Result<()> {
    let mut out = String::new();
    for v in &mesh.vertices {
        writeln!(out, "v {} {} {}", v.x, v.y, v.z).unwrap();
    }
    for n in &mesh.normals {
        writeln!(out, "vn {} {} {}", n.x, n.y, n.z).unwrap();
    }
    for uvs in &mesh.face_uvs {
        for uv in uvs {
            writeln!(out, "vt {} {}", uv[0], uv[1]).unwrap();
        }
    }
    for (fi, face) in mesh.faces.iter().enumerate() {
        let t0 = fi * 3 + 1;
        writeln!(
            out,
            "f {}/{}/{} {}/{}/{} {}/{}/{}",
            face[0] + 1,
            t0,
            face[0] + 1,
            face[1] + 1,
            t0 + 1,
            face[1] + 1,
            face[2] + 1,
            t0 + 2,
            face[2] + 1,
        )
        .unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
