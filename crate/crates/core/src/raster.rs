//! Deterministic software rasterization of the mesh into per-pose g-buffers.
//!
//! Conventions: pixel centers at (x+0.5, y+0.5), camera x right / y down /
//! z forward, top-left fill rule for edge ties, z-buffered with
//! perspective-correct attribute interpolation. Back-facing fragments
//! (interpolated normal pointing away from the viewer) are culled.

use std::path::Path;

use nalgebra::{Matrix3, Matrix4, Vector3};

use crate::config::{Config, ViewDirection};
use crate::container::{Container, PlaneData};
use crate::error::{Error, Result};
use crate::mesh::TexturedMesh;
use crate::scene::{invert_pose, CameraIntrinsics};

const NEAR_PLANE: f64 = 1e-3;
const MIN_SCREEN_AREA: f64 = 1e-12;

/// Per-pose rasterized attribute buffers. Wherever `coverage` is 0 the other
/// channels are 0; wherever it is 1, `depth` is positive camera-space z in
/// meters and `cos_angle` is the cosine of the normal-to-view angle.
#[derive(Clone, Debug, PartialEq)]
pub struct GBuffer {
    pub height: usize,
    pub width: usize,
    pub uv_u: Vec<f32>,
    pub uv_v: Vec<f32>,
    pub depth: Vec<f32>,
    pub cos_angle: Vec<f32>,
    pub coverage: Vec<u8>,
}

impl GBuffer {
    pub fn new(height: usize, width: usize) -> Self {
        GBuffer {
            height,
            width,
            uv_u: vec![0.0; height * width],
            uv_v: vec![0.0; height * width],
            depth: vec![0.0; height * width],
            cos_angle: vec![0.0; height * width],
            coverage: vec![0; height * width],
        }
    }

    #[inline]
    pub fn idx(&self, y: usize, x: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn covered(&self, y: usize, x: usize) -> bool {
        self.coverage[self.idx(y, x)] != 0
    }

    #[inline]
    pub fn uv(&self, y: usize, x: usize) -> [f64; 2] {
        let i = self.idx(y, x);
        [self.uv_u[i] as f64, self.uv_v[i] as f64]
    }

    #[inline]
    pub fn depth_at(&self, y: usize, x: usize) -> f64 {
        self.depth[self.idx(y, x)] as f64
    }

    #[inline]
    pub fn cos_at(&self, y: usize, x: usize) -> f64 {
        self.cos_angle[self.idx(y, x)] as f64
    }

    pub fn coverage_count(&self) -> usize {
        self.coverage.iter().filter(|&&c| c != 0).count()
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new();
        let h = self.height as u32;
        let w = self.width as u32;
        let mut uv = Vec::with_capacity(self.uv_u.len() * 2);
        for i in 0..self.uv_u.len() {
            uv.push(self.uv_u[i]);
            uv.push(self.uv_v[i]);
        }
        c.insert("uv", vec![h, w, 2], PlaneData::F32(uv));
        c.insert("depth", vec![h, w], PlaneData::F32(self.depth.clone()));
        c.insert(
            "cos_angle",
            vec![h, w],
            PlaneData::F32(self.cos_angle.clone()),
        );
        c.insert(
            "coverage",
            vec![h, w],
            PlaneData::F32(self.coverage.iter().map(|&b| b as f32).collect()),
        );
        c
    }

    pub fn from_container(c: &Container, path: &Path) -> Result<GBuffer> {
        let plane = c
            .get("depth")
            .ok_or_else(|| Error::parse(path, "missing depth plane"))?;
        if plane.dims.len() != 2 {
            return Err(Error::parse(path, "depth plane must be 2-d"));
        }
        let (h, w) = (plane.dims[0] as usize, plane.dims[1] as usize);
        let depth = c.require_f32("depth", path)?.to_vec();
        let cos_angle = c.require_f32("cos_angle", path)?.to_vec();
        let uv = c.require_f32("uv", path)?;
        let coverage: Vec<u8> = c
            .require_f32("coverage", path)?
            .iter()
            .map(|&v| (v != 0.0) as u8)
            .collect();
        if uv.len() != h * w * 2 || depth.len() != h * w || cos_angle.len() != h * w {
            return Err(Error::parse(path, "plane sizes disagree"));
        }
        let mut uv_u = Vec::with_capacity(h * w);
        let mut uv_v = Vec::with_capacity(h * w);
        for px in uv.chunks_exact(2) {
            uv_u.push(px[0]);
            uv_v.push(px[1]);
        }
        Ok(GBuffer {
            height: h,
            width: w,
            uv_u,
            uv_v,
            depth,
            cos_angle,
            coverage,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().write(path)
    }

    pub fn load(path: &Path) -> Result<GBuffer> {
        GBuffer::from_container(&Container::read(path)?, path)
    }
}

/// The same pose rasterized at each configured pyramid height.
#[derive(Clone, Debug)]
pub struct RenderPyramid {
    pub levels: Vec<GBuffer>,
    pub heights: Vec<usize>,
}

/// One g-buffer per configured pyramid height, identical pose.
pub fn build_render_pyramid(
    mesh: &TexturedMesh,
    pose: &Matrix4<f64>,
    intrinsics: &CameraIntrinsics,
    heights: &[usize],
    config: &Config,
) -> RenderPyramid {
    let levels = heights
        .iter()
        .map(|&h| rasterize_gbuffer(mesh, pose, intrinsics, h, config.view_direction))
        .collect();
    RenderPyramid {
        levels,
        heights: heights.to_vec(),
    }
}

#[derive(Clone, Copy)]
struct ClipVertex {
    /// Camera-space position.
    pos: Vector3<f64>,
    uv: [f64; 2],
    /// Camera-space normal (not renormalized after interpolation yet).
    normal: Vector3<f64>,
}

fn lerp_vertex(a: &ClipVertex, b: &ClipVertex, t: f64) -> ClipVertex {
    ClipVertex {
        pos: a.pos + (b.pos - a.pos) * t,
        uv: [
            a.uv[0] + (b.uv[0] - a.uv[0]) * t,
            a.uv[1] + (b.uv[1] - a.uv[1]) * t,
        ],
        normal: a.normal + (b.normal - a.normal) * t,
    }
}

/// Clip a triangle against z >= NEAR_PLANE; returns 0, 3 or 4 vertices.
fn clip_near(tri: &[ClipVertex; 3]) -> Vec<ClipVertex> {
    let mut out = Vec::with_capacity(4);
    for i in 0..3 {
        let a = &tri[i];
        let b = &tri[(i + 1) % 3];
        let a_in = a.pos.z >= NEAR_PLANE;
        let b_in = b.pos.z >= NEAR_PLANE;
        if a_in {
            out.push(*a);
        }
        if a_in != b_in {
            let t = (NEAR_PLANE - a.pos.z) / (b.pos.z - a.pos.z);
            out.push(lerp_vertex(a, b, t));
        }
    }
    out
}

/// Edge ties covered by the top-left rule. `e` is an edge vector of a
/// positively-oriented triangle (inside where the edge function is >= 0).
#[inline]
fn edge_accepts_ties(e: [f64; 2]) -> bool {
    e[1] < 0.0 || (e[1] == 0.0 && e[0] > 0.0)
}

/// Rasterize a g-buffer at the given image height; the width follows the
/// aspect ratio of the intrinsics image and the intrinsics are rescaled
/// proportionally. Degenerate (zero screen area) triangles are skipped.
pub fn rasterize_gbuffer(
    mesh: &TexturedMesh,
    pose: &Matrix4<f64>,
    intrinsics: &CameraIntrinsics,
    height: usize,
    view_direction: ViewDirection,
) -> GBuffer {
    assert!(height > 0, "rasterization height must be positive");
    let intr = intrinsics.rescaled_to_height(height);
    let mut gb = GBuffer::new(height, intr.width);
    let mut zbuf = vec![f64::INFINITY; height * intr.width];

    let view = invert_pose(pose);
    let rot: Matrix3<f64> = view.fixed_view::<3, 3>(0, 0).into_owned();
    let trans = Vector3::new(view[(0, 3)], view[(1, 3)], view[(2, 3)]);

    for (face, uvs) in mesh.faces.iter().zip(&mesh.face_uvs) {
        let tri = [
            ClipVertex {
                pos: rot * mesh.vertices[face[0]].coords + trans,
                uv: uvs[0],
                normal: rot * mesh.normals[face[0]],
            },
            ClipVertex {
                pos: rot * mesh.vertices[face[1]].coords + trans,
                uv: uvs[1],
                normal: rot * mesh.normals[face[1]],
            },
            ClipVertex {
                pos: rot * mesh.vertices[face[2]].coords + trans,
                uv: uvs[2],
                normal: rot * mesh.normals[face[2]],
            },
        ];
        let poly = clip_near(&tri);
        if poly.len() < 3 {
            continue;
        }
        for k in 1..poly.len() - 1 {
            raster_triangle(
                &mut gb,
                &mut zbuf,
                &[poly[0], poly[k], poly[k + 1]],
                &intr,
                view_direction,
            );
        }
    }
    gb
}

fn raster_triangle(
    gb: &mut GBuffer,
    zbuf: &mut [f64],
    tri: &[ClipVertex; 3],
    intr: &CameraIntrinsics,
    view_direction: ViewDirection,
) {
    // Project to continuous pixel coordinates.
    let mut pts = [[0.0f64; 2]; 3];
    for (i, v) in tri.iter().enumerate() {
        pts[i] = [
            intr.fx * v.pos.x / v.pos.z + intr.cx,
            intr.fy * v.pos.y / v.pos.z + intr.cy,
        ];
    }
    let signed_area = (pts[1][0] - pts[0][0]) * (pts[2][1] - pts[0][1])
        - (pts[1][1] - pts[0][1]) * (pts[2][0] - pts[0][0]);
    if signed_area.abs() < MIN_SCREEN_AREA {
        return; // degenerate on screen
    }
    // Reorder so the signed area is positive and E >= 0 means inside.
    let order: [usize; 3] = if signed_area > 0.0 { [0, 1, 2] } else { [0, 2, 1] };
    let v = [tri[order[0]], tri[order[1]], tri[order[2]]];
    let p = [pts[order[0]], pts[order[1]], pts[order[2]]];
    let area = signed_area.abs();

    // Edge i runs opposite vertex i, so E_i / area is vertex i's barycentric.
    let edges: [([f64; 2], [f64; 2]); 3] = [
        (p[1], [p[2][0] - p[1][0], p[2][1] - p[1][1]]),
        (p[2], [p[0][0] - p[2][0], p[0][1] - p[2][1]]),
        (p[0], [p[1][0] - p[0][0], p[1][1] - p[0][1]]),
    ];

    let min_x = p.iter().map(|q| q[0]).fold(f64::INFINITY, f64::min);
    let max_x = p.iter().map(|q| q[0]).fold(f64::NEG_INFINITY, f64::max);
    let min_y = p.iter().map(|q| q[1]).fold(f64::INFINITY, f64::min);
    let max_y = p.iter().map(|q| q[1]).fold(f64::NEG_INFINITY, f64::max);
    let x_lo = (min_x - 0.5).floor().max(0.0) as usize;
    let x_hi = ((max_x - 0.5).ceil() as isize).min(gb.width as isize - 1);
    let y_lo = (min_y - 0.5).floor().max(0.0) as usize;
    let y_hi = ((max_y - 0.5).ceil() as isize).min(gb.height as isize - 1);
    if x_hi < 0 || y_hi < 0 {
        return;
    }

    let inv_z = [1.0 / v[0].pos.z, 1.0 / v[1].pos.z, 1.0 / v[2].pos.z];

    for py in y_lo..=y_hi as usize {
        let cy = py as f64 + 0.5;
        'pixel: for px in x_lo..=x_hi as usize {
            let cx = px as f64 + 0.5;
            let mut e = [0.0f64; 3];
            for i in 0..3 {
                let (start, ev) = edges[i];
                let val = ev[0] * (cy - start[1]) - ev[1] * (cx - start[0]);
                if val < 0.0 || (val == 0.0 && !edge_accepts_ties(ev)) {
                    continue 'pixel;
                }
                e[i] = val;
            }
            let b = [e[0] / area, e[1] / area, e[2] / area];
            let denom = b[0] * inv_z[0] + b[1] * inv_z[1] + b[2] * inv_z[2];
            let z = 1.0 / denom;
            let pi = gb.idx(py, px);
            if z >= zbuf[pi] {
                continue;
            }
            // Perspective-correct weights for uv and normal.
            let w = [b[0] * inv_z[0] * z, b[1] * inv_z[1] * z, b[2] * inv_z[2] * z];
            let normal = v[0].normal * w[0] + v[1].normal * w[1] + v[2].normal * w[2];
            let Some(normal) = normal.try_normalize(1e-12) else {
                continue;
            };
            let cos = match view_direction {
                ViewDirection::Ray => {
                    // Surface point from the pixel ray and interpolated depth;
                    // the camera sits at the camera-space origin.
                    let pc = Vector3::new(
                        (cx - intr.cx) / intr.fx * z,
                        (cy - intr.cy) / intr.fy * z,
                        z,
                    );
                    normal.dot(&(-pc.normalize()))
                }
                ViewDirection::Axis => -normal.z,
            };
            if cos <= 0.0 {
                continue; // back-facing fragment
            }
            let u = (v[0].uv[0] * w[0] + v[1].uv[0] * w[1] + v[2].uv[0] * w[2]).clamp(0.0, 1.0);
            let vv = (v[0].uv[1] * w[0] + v[1].uv[1] * w[1] + v[2].uv[1] * w[2]).clamp(0.0, 1.0);
            zbuf[pi] = z;
            gb.uv_u[pi] = u as f32;
            gb.uv_v[pi] = vv as f32;
            gb.depth[pi] = z as f32;
            gb.cos_angle[pi] = cos.min(1.0) as f32;
            gb.coverage[pi] = 1;
        }
    }
}
