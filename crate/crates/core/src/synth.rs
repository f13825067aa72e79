//! Procedural fixtures: quad and corridor scenes, the red-circles style
//! image, and camera trajectories. Used by the test suite and exposed on the
//! command line so the full pipeline can be exercised without real scans.

use nalgebra::{Matrix4, Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{Config, ViewDirection};
use crate::img::{Image, Plane};
use crate::mesh::TexturedMesh;
use crate::raster::rasterize_gbuffer;
use crate::scene::{CameraIntrinsics, Frame, Scene};

/// Fronto-parallel quad in the plane z = `z`, spanning `[-half, half]^2`,
/// normal facing the origin, uv covering the full unit square.
pub fn quad_mesh_at(z: f64, half: f64) -> TexturedMesh {
    TexturedMesh {
        vertices: vec![
            Point3::new(-half, -half, z),
            Point3::new(half, -half, z),
            Point3::new(half, half, z),
            Point3::new(-half, half, z),
        ],
        normals: vec![Vector3::new(0.0, 0.0, -1.0); 4],
        faces: vec![[0, 1, 2], [0, 2, 3]],
        face_uvs: vec![
            [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]],
            [[0.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
        ],
    }
}

/// Camera-to-world pose at `position`, yawed around +y by `yaw` radians.
/// Zero yaw looks down +z with x right and y down.
pub fn pose_looking(position: Point3<f64>, yaw: f64) -> Matrix4<f64> {
    let right = Vector3::new(yaw.cos(), 0.0, -yaw.sin());
    let down = Vector3::new(0.0, 1.0, 0.0);
    let forward = Vector3::new(yaw.sin(), 0.0, yaw.cos());
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 1>(0, 0).copy_from(&right);
    m.fixed_view_mut::<3, 1>(0, 1).copy_from(&down);
    m.fixed_view_mut::<3, 1>(0, 2).copy_from(&forward);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&position.coords);
    m
}

/// Smooth low-frequency color field used as frame content for fixtures.
pub fn gradient_image(height: usize, width: usize) -> Image {
    Image::from_fn(height, width, |y, x| {
        let u = (x as f64 + 0.5) / width as f64;
        let v = (y as f64 + 0.5) / height as f64;
        [
            0.25 + 0.5 * u,
            0.25 + 0.5 * v,
            0.5 + 0.25 * (std::f64::consts::PI * (u + v)).sin(),
        ]
    })
}

/// Single fronto-parallel quad observed by one or more identity-pose frames.
/// The frame rgb is `content` resized to the view; depth comes from the
/// rasterizer, so it is exact for the mesh.
pub fn quad_scene(
    content: &Image,
    width: usize,
    height: usize,
    n_frames: usize,
) -> Scene {
    // Focal length chosen so the quad more than fills the view.
    let f = width.max(height) as f64 * 0.7;
    let intr = CameraIntrinsics {
        fx: f,
        fy: f,
        cx: width as f64 / 2.0,
        cy: height as f64 / 2.0,
        width,
        height,
    };
    let mesh = quad_mesh_at(2.0, 2.0);
    let rgb = content.resize_bilinear(height, width);
    let mut frames = Vec::new();
    for id in 0..n_frames {
        let pose = Matrix4::identity();
        let gb = rasterize_gbuffer(&mesh, &pose, &intr, height, ViewDirection::Ray);
        let mut depth = Plane::new(height, width);
        for y in 0..height {
            for x in 0..width {
                if gb.covered(y, x) {
                    depth.set(y, x, gb.depth_at(y, x));
                }
            }
        }
        frames.push(Frame {
            id,
            rgb: rgb.clone(),
            depth,
            pose,
        });
    }
    Scene {
        mesh,
        frames,
        intrinsics: intr,
        depth_unit: 0.001,
    }
}

/// Corridor scene: two side walls, floor, ceiling and an end wall, with a
/// camera track moving down the axis under alternating yaw. Wall surfaces
/// are seen between head-on and roughly 70 degrees of obliquity and depths
/// range from under a meter to `length`.
pub struct CorridorParams {
    pub length: f64,
    pub half_width: f64,
    pub half_height: f64,
    pub n_frames: usize,
    pub image_width: usize,
    pub image_height: usize,
}

impl Default for CorridorParams {
    fn default() -> Self {
        CorridorParams {
            length: 9.0,
            half_width: 1.0,
            half_height: 1.0,
            n_frames: 6,
            image_width: 128,
            image_height: 96,
        }
    }
}

pub fn corridor_scene(params: &CorridorParams) -> Scene {
    let CorridorParams {
        length,
        half_width: hw,
        half_height: hh,
        n_frames,
        image_width,
        image_height,
    } = *params;

    let mut vertices = Vec::new();
    let mut normals = Vec::new();
    let mut faces = Vec::new();
    let mut face_uvs = Vec::new();

    // uv atlas: five horizontal bands, one per quad, with small gutters.
    let band = 0.19f64;
    let gap = 0.01f64;
    let mut add_quad = |corners: [Point3<f64>; 4], normal: Vector3<f64>, band_idx: usize, u_span: f64| {
        let v0 = band_idx as f64 * (band + gap) + gap;
        let v1 = v0 + band;
        let u0 = gap;
        let u1 = gap + u_span.min(1.0 - 2.0 * gap);
        let base = vertices.len();
        vertices.extend_from_slice(&corners);
        normals.extend_from_slice(&[normal; 4]);
        faces.push([base, base + 1, base + 2]);
        faces.push([base, base + 2, base + 3]);
        // Corners are ordered to sweep u along the wall length.
        face_uvs.push([[u0, v0], [u1, v0], [u1, v1]]);
        face_uvs.push([[u0, v0], [u1, v1], [u0, v1]]);
    };

    // Left wall x = -hw, normal +x, u along z.
    add_quad(
        [
            Point3::new(-hw, -hh, 0.0),
            Point3::new(-hw, -hh, length),
            Point3::new(-hw, hh, length),
            Point3::new(-hw, hh, 0.0),
        ],
        Vector3::new(1.0, 0.0, 0.0),
        0,
        0.98,
    );
    // Right wall x = +hw, normal -x.
    add_quad(
        [
            Point3::new(hw, -hh, 0.0),
            Point3::new(hw, -hh, length),
            Point3::new(hw, hh, length),
            Point3::new(hw, hh, 0.0),
        ],
        Vector3::new(-1.0, 0.0, 0.0),
        1,
        0.98,
    );
    // Ceiling y = -hh (y points down), normal +y.
    add_quad(
        [
            Point3::new(-hw, -hh, 0.0),
            Point3::new(-hw, -hh, length),
            Point3::new(hw, -hh, length),
            Point3::new(hw, -hh, 0.0),
        ],
        Vector3::new(0.0, 1.0, 0.0),
        2,
        0.98,
    );
    // Floor y = +hh, normal -y.
    add_quad(
        [
            Point3::new(-hw, hh, 0.0),
            Point3::new(-hw, hh, length),
            Point3::new(hw, hh, length),
            Point3::new(hw, hh, 0.0),
        ],
        Vector3::new(0.0, -1.0, 0.0),
        3,
        0.98,
    );
    // End wall z = length, normal -z, square chart.
    add_quad(
        [
            Point3::new(-hw, -hh, length),
            Point3::new(hw, -hh, length),
            Point3::new(hw, hh, length),
            Point3::new(-hw, hh, length),
        ],
        Vector3::new(0.0, 0.0, -1.0),
        4,
        band,
    );

    let mesh = TexturedMesh {
        vertices,
        normals,
        faces,
        face_uvs,
    };

    let f = image_width.max(image_height) as f64 * 0.6;
    let intr = CameraIntrinsics {
        fx: f,
        fy: f,
        cx: image_width as f64 / 2.0,
        cy: image_height as f64 / 2.0,
        width: image_width,
        height: image_height,
    };

    // Track: advance down the corridor, alternating gentle yaw so walls are
    // seen over a range of angles.
    let content = gradient_image(image_height, image_width);
    let mut frames = Vec::new();
    for id in 0..n_frames {
        let t = id as f64 / (n_frames.max(2) - 1) as f64;
        let z = 0.3 + t * (length * 0.6);
        let yaw = 0.35 * if id % 2 == 0 { 1.0 } else { -1.0 } * (0.5 + 0.5 * t);
        let pose = pose_looking(Point3::new(0.0, 0.0, z), yaw);
        let gb = rasterize_gbuffer(&mesh, &pose, &intr, image_height, ViewDirection::Ray);
        let mut depth = Plane::new(image_height, image_width);
        for y in 0..image_height {
            for x in 0..image_width {
                if gb.covered(y, x) {
                    depth.set(y, x, gb.depth_at(y, x));
                }
            }
        }
        frames.push(Frame {
            id,
            rgb: content.clone(),
            depth,
            pose,
        });
    }

    Scene {
        mesh,
        frames,
        intrinsics: intr,
        depth_unit: 0.001,
    }
}

/// Procedurally drawn style image: saturated red disks scattered over a
/// cream background. Disk placement is seeded and collision-free.
pub fn circles_style_image(size: usize, seed: u64) -> Image {
    let mut img = Image::constant(size, size, [0.96, 0.93, 0.86]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut placed: Vec<(f64, f64, f64)> = Vec::new();
    let r_min = size as f64 * 0.045;
    let r_max = size as f64 * 0.085;
    let mut attempts = 0;
    while attempts < 4000 && placed.len() < 60 {
        attempts += 1;
        let r = rng.gen_range(r_min..r_max);
        let cx = rng.gen_range(r..size as f64 - r);
        let cy = rng.gen_range(r..size as f64 - r);
        if placed
            .iter()
            .any(|&(px, py, pr)| ((px - cx).powi(2) + (py - cy).powi(2)).sqrt() < pr + r + 2.0)
        {
            continue;
        }
        placed.push((cx, cy, r));
    }
    for &(cx, cy, r) in &placed {
        let x0 = (cx - r).floor().max(0.0) as usize;
        let x1 = ((cx + r).ceil() as usize).min(size - 1);
        let y0 = (cy - r).floor().max(0.0) as usize;
        let y1 = ((cy + r).ceil() as usize).min(size - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let dx = x as f64 + 0.5 - cx;
                let dy = y as f64 + 0.5 - cy;
                if dx * dx + dy * dy <= r * r {
                    img.set(y, x, [0.85, 0.05, 0.05]);
                }
            }
        }
    }
    img
}

/// Evaluation trajectory reusing the scene's own camera poses.
pub fn scene_trajectory(scene: &Scene) -> Vec<Matrix4<f64>> {
    scene.frames.iter().map(|f| f.pose).collect()
}

/// Default desk-scale configuration for synthetic fixtures: small texture,
/// small pyramid, test feature backend.
pub fn fixture_config() -> Config {
    Config {
        backend: crate::config::FeatureBackend::Test,
        texture_resolution: 128,
        texture_levels: 3,
        pyramid_heights: vec![48, 64, 96],
        theta_l: 3,
        theta_min: 24.0,
        theta_d: 1.0,
        epochs: 2,
        frame_repeats: 2,
        lr0: 0.02,
        lr_decay: 0.5,
        lr_decay_every: 1,
        lambda_content: 1.0,
        lambda_style: 1.0,
        lambda_reg: 1e-3,
        tiny_part_floor: 1,
        ..Config::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::img::rgb_to_hsv;
    use crate::scene::validate_pose;

    #[test]
    fn poses_are_valid_rigid_transforms() {
        for (i, yaw) in [0.0, 0.3, -0.7, 1.2].iter().enumerate() {
            let pose = pose_looking(Point3::new(0.1 * i as f64, 0.0, 1.0), *yaw);
            validate_pose(&pose, "synthetic pose").unwrap();
        }
    }

    #[test]
    fn corridor_scene_is_valid_and_covers_depth_range() {
        let scene = corridor_scene(&CorridorParams::default());
        scene.mesh.validate().unwrap();
        assert_eq!(scene.frames.len(), 6);
        let mut min_d = f64::INFINITY;
        let mut max_d = 0.0f64;
        for f in &scene.frames {
            for &d in &f.depth.data {
                if d > 0.0 {
                    min_d = min_d.min(d);
                    max_d = max_d.max(d);
                }
            }
        }
        assert!(min_d < 1.0, "min depth {min_d}");
        assert!(max_d > 6.0, "max depth {max_d}");
    }

    #[test]
    fn corridor_walls_span_oblique_angles() {
        let scene = corridor_scene(&CorridorParams::default());
        let gb = rasterize_gbuffer(
            &scene.mesh,
            &scene.frames[0].pose,
            &scene.intrinsics,
            scene.intrinsics.height,
            ViewDirection::Ray,
        );
        let mut min_cos = 1.0f64;
        let mut max_cos = 0.0f64;
        for y in 0..gb.height {
            for x in 0..gb.width {
                if gb.covered(y, x) {
                    min_cos = min_cos.min(gb.cos_at(y, x));
                    max_cos = max_cos.max(gb.cos_at(y, x));
                }
            }
        }
        // Head-on (~1.0) down to beyond 70 degrees (cos < 0.34).
        assert!(max_cos > 0.95, "max cos {max_cos}");
        assert!(min_cos < 0.34, "min cos {min_cos}");
    }

    #[test]
    fn circles_style_is_red_on_non_red_background() {
        let img = circles_style_image(256, 0);
        let mut red = 0usize;
        for y in 0..256 {
            for x in 0..256 {
                let [h, s, v] = rgb_to_hsv(img.get(y, x));
                if (h <= 0.08 || h >= 0.88) && s >= 0.6 && v >= 0.6 {
                    red += 1;
                }
            }
        }
        let frac = red as f64 / (256.0 * 256.0);
        assert!(frac > 0.15 && frac < 0.75, "red fraction {frac}");
        // Deterministic for a fixed seed.
        let again = circles_style_image(256, 0);
        assert_eq!(img, again);
    }

    #[test]
    fn quad_scene_depth_matches_plane() {
        let content = gradient_image(32, 32);
        let scene = quad_scene(&content, 32, 32, 1);
        let d = &scene.frames[0].depth;
        assert!((d.get(16, 16) - 2.0).abs() < 1e-5);
    }
}
