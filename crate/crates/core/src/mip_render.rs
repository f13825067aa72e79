//! Final textured rendering with a mip chain and trilinear filtering.
//!
//! The mip level comes from analytic screen-space uv derivatives of the
//! perspective-correct interpolation, so renders are deterministic and do
//! not depend on neighboring pixels.

use nalgebra::{Matrix3, Matrix4, Vector3};

use crate::img::{split_coord, Image};
use crate::mesh::TexturedMesh;
use crate::scene::{invert_pose, CameraIntrinsics};

const NEAR_PLANE: f64 = 1e-3;
const MIN_SCREEN_AREA: f64 = 1e-12;

/// Successive 2x2 box downsampling until 1x1. Odd dimensions are handled by
/// edge clamping, so non-power-of-two textures work without padding errors.
pub fn build_mip_chain(base: &Image) -> Vec<Image> {
    let mut chain = vec![base.clone()];
    while chain.last().unwrap().height > 1 || chain.last().unwrap().width > 1 {
        chain.push(chain.last().unwrap().halve());
    }
    chain
}

fn sample_level(level: &Image, u: f64, v: f64) -> [f64; 3] {
    let x = u * level.width as f64 - 0.5;
    let y = v * level.height as f64 - 0.5;
    let (y0, y1, wy) = split_coord(y, level.height);
    let (x0, x1, wx) = split_coord(x, level.width);
    let p00 = level.get(y0, x0);
    let p01 = level.get(y0, x1);
    let p10 = level.get(y1, x0);
    let p11 = level.get(y1, x1);
    let mut out = [0.0; 3];
    for c in 0..3 {
        let top = p00[c] * (1.0 - wx) + p01[c] * wx;
        let bot = p10[c] * (1.0 - wx) + p11[c] * wx;
        out[c] = top * (1.0 - wy) + bot * wy;
    }
    out
}

fn sample_trilinear(chain: &[Image], u: f64, v: f64, lod: f64) -> [f64; 3] {
    let lod = lod.clamp(0.0, (chain.len() - 1) as f64);
    let l0 = lod.floor() as usize;
    let l1 = (l0 + 1).min(chain.len() - 1);
    let t = lod - l0 as f64;
    let a = sample_level(&chain[l0], u, v);
    if t == 0.0 || l0 == l1 {
        return a;
    }
    let b = sample_level(&chain[l1], u, v);
    [
        a[0] * (1.0 - t) + b[0] * t,
        a[1] * (1.0 - t) + b[1] * t,
        a[2] * (1.0 - t) + b[2] * t,
    ]
}

#[derive(Clone, Copy)]
struct RenderVertex {
    pos: Vector3<f64>,
    uv: [f64; 2],
}

fn clip_near(tri: &[RenderVertex; 3]) -> Vec<RenderVertex> {
    let mut out = Vec::with_capacity(4);
    for i in 0..3 {
        let a = tri[i];
        let b = tri[(i + 1) % 3];
        let a_in = a.pos.z >= NEAR_PLANE;
        let b_in = b.pos.z >= NEAR_PLANE;
        if a_in {
            out.push(a);
        }
        if a_in != b_in {
            let t = (NEAR_PLANE - a.pos.z) / (b.pos.z - a.pos.z);
            out.push(RenderVertex {
                pos: a.pos + (b.pos - a.pos) * t,
                uv: [
                    a.uv[0] + (b.uv[0] - a.uv[0]) * t,
                    a.uv[1] + (b.uv[1] - a.uv[1]) * t,
                ],
            });
        }
    }
    out
}

#[inline]
fn edge_accepts_ties(e: [f64; 2]) -> bool {
    e[1] < 0.0 || (e[1] == 0.0 && e[0] > 0.0)
}

/// Render the mesh with a flat texture image; uncovered pixels are set to
/// `background`. Mip level selection uses the texel footprint of the larger
/// of the two screen axis derivatives.
pub fn render_textured(
    mesh: &TexturedMesh,
    texture: &Image,
    pose: &Matrix4<f64>,
    intrinsics: &CameraIntrinsics,
    height: usize,
    background: [f64; 3],
) -> Image {
    let chain = build_mip_chain(texture);
    let intr = intrinsics.rescaled_to_height(height);
    let mut img = Image::constant(height, intr.width, background);
    let mut zbuf = vec![f64::INFINITY; height * intr.width];

    let view = invert_pose(pose);
    let rot: Matrix3<f64> = view.fixed_view::<3, 3>(0, 0).into_owned();
    let trans = Vector3::new(view[(0, 3)], view[(1, 3)], view[(2, 3)]);
    let (tw, th) = (texture.width as f64, texture.height as f64);

    for (face, uvs) in mesh.faces.iter().zip(&mesh.face_uvs) {
        let tri = [
            RenderVertex {
                pos: rot * mesh.vertices[face[0]].coords + trans,
                uv: uvs[0],
            },
            RenderVertex {
                pos: rot * mesh.vertices[face[1]].coords + trans,
                uv: uvs[1],
            },
            RenderVertex {
                pos: rot * mesh.vertices[face[2]].coords + trans,
                uv: uvs[2],
            },
        ];
        let poly = clip_near(&tri);
        if poly.len() < 3 {
            continue;
        }
        for k in 1..poly.len() - 1 {
            shade_triangle(
                &mut img,
                &mut zbuf,
                &[poly[0], poly[k], poly[k + 1]],
                &intr,
                &chain,
                tw,
                th,
            );
        }
    }
    img
}

fn shade_triangle(
    img: &mut Image,
    zbuf: &mut [f64],
    tri: &[RenderVertex; 3],
    intr: &CameraIntrinsics,
    chain: &[Image],
    tw: f64,
    th: f64,
) {
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
        return;
    }
    let order: [usize; 3] = if signed_area > 0.0 { [0, 1, 2] } else { [0, 2, 1] };
    let v = [tri[order[0]], tri[order[1]], tri[order[2]]];
    let p = [pts[order[0]], pts[order[1]], pts[order[2]]];
    let area = signed_area.abs();

    let edges: [([f64; 2], [f64; 2]); 3] = [
        (p[1], [p[2][0] - p[1][0], p[2][1] - p[1][1]]),
        (p[2], [p[0][0] - p[2][0], p[0][1] - p[2][1]]),
        (p[0], [p[1][0] - p[0][0], p[1][1] - p[0][1]]),
    ];
    // Barycentric gradients: d(E_i)/dx = -e_iy, d(E_i)/dy = e_ix.
    let grad_b: [[f64; 2]; 3] = [
        [-edges[0].1[1] / area, edges[0].1[0] / area],
        [-edges[1].1[1] / area, edges[1].1[0] / area],
        [-edges[2].1[1] / area, edges[2].1[0] / area],
    ];

    let inv_z = [1.0 / v[0].pos.z, 1.0 / v[1].pos.z, 1.0 / v[2].pos.z];
    // Affine screen-space coefficients of 1/z and uv/z.
    let grad_invz = [
        grad_b[0][0] * inv_z[0] + grad_b[1][0] * inv_z[1] + grad_b[2][0] * inv_z[2],
        grad_b[0][1] * inv_z[0] + grad_b[1][1] * inv_z[1] + grad_b[2][1] * inv_z[2],
    ];
    let uvz = [
        [v[0].uv[0] * inv_z[0], v[0].uv[1] * inv_z[0]],
        [v[1].uv[0] * inv_z[1], v[1].uv[1] * inv_z[1]],
        [v[2].uv[0] * inv_z[2], v[2].uv[1] * inv_z[2]],
    ];
    let grad_uvz = [
        [
            grad_b[0][0] * uvz[0][0] + grad_b[1][0] * uvz[1][0] + grad_b[2][0] * uvz[2][0],
            grad_b[0][1] * uvz[0][0] + grad_b[1][1] * uvz[1][0] + grad_b[2][1] * uvz[2][0],
        ],
        [
            grad_b[0][0] * uvz[0][1] + grad_b[1][0] * uvz[1][1] + grad_b[2][0] * uvz[2][1],
            grad_b[0][1] * uvz[0][1] + grad_b[1][1] * uvz[1][1] + grad_b[2][1] * uvz[2][1],
        ],
    ];

    let min_x = p.iter().map(|q| q[0]).fold(f64::INFINITY, f64::min);
    let max_x = p.iter().map(|q| q[0]).fold(f64::NEG_INFINITY, f64::max);
    let min_y = p.iter().map(|q| q[1]).fold(f64::INFINITY, f64::min);
    let max_y = p.iter().map(|q| q[1]).fold(f64::NEG_INFINITY, f64::max);
    let x_lo = (min_x - 0.5).floor().max(0.0) as usize;
    let x_hi = ((max_x - 0.5).ceil() as isize).min(img.width as isize - 1);
    let y_lo = (min_y - 0.5).floor().max(0.0) as usize;
    let y_hi = ((max_y - 0.5).ceil() as isize).min(img.height as isize - 1);
    if x_hi < 0 || y_hi < 0 {
        return;
    }

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
            let invz = b[0] * inv_z[0] + b[1] * inv_z[1] + b[2] * inv_z[2];
            let z = 1.0 / invz;
            let pi = py * img.width + px;
            if z >= zbuf[pi] {
                continue;
            }
            let uvz_here = [
                b[0] * uvz[0][0] + b[1] * uvz[1][0] + b[2] * uvz[2][0],
                b[0] * uvz[0][1] + b[1] * uvz[1][1] + b[2] * uvz[2][1],
            ];
            let u = uvz_here[0] * z;
            let vv = uvz_here[1] * z;
            // d(uv)/dscreen by the quotient rule on (uv/z) / (1/z).
            let du_dx = (grad_uvz[0][0] - u * grad_invz[0]) * z;
            let du_dy = (grad_uvz[0][1] - u * grad_invz[1]) * z;
            let dv_dx = (grad_uvz[1][0] - vv * grad_invz[0]) * z;
            let dv_dy = (grad_uvz[1][1] - vv * grad_invz[1]) * z;
            let fx = ((du_dx * tw) * (du_dx * tw) + (dv_dx * th) * (dv_dx * th)).sqrt();
            let fy = ((du_dy * tw) * (du_dy * tw) + (dv_dy * th) * (dv_dy * th)).sqrt();
            let rho = fx.max(fy).max(1e-12);
            let lod = rho.log2().max(0.0);
            let rgb = sample_trilinear(chain, u.clamp(0.0, 1.0), vv.clamp(0.0, 1.0), lod);
            zbuf[pi] = z;
            img.set(py, px, rgb);
        }
    }
}
