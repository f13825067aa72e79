//! Scene loading and validation: mesh, posed RGB-D frames, intrinsics.
//!
//! On-disk layout of a scene directory:
//!
//! ```text
//! mesh.obj               positions, per-corner uv, normals
//! intrinsics.txt         "fx fy cx cy" on one line, pixels
//! frames/{id}.rgb.png    8-bit color
//! frames/{id}.depth.png  16-bit, meters = stored * depth_unit, 0 = invalid
//! frames/{id}.pose.txt   4x4 row-major camera-to-world transform
//! ```
//!
//! Depth maps are converted to meters at load; poses are camera-to-world
//! rigid transforms (x right, y down, z forward).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::Matrix4;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::img::{Image, Plane};
use crate::mesh::{load_mesh, save_mesh, TexturedMesh};

const ROTATION_ORTHO_TOL: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Resolution of the images these intrinsics describe.
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    /// Intrinsics proportionally rescaled to a new image height; the width
    /// preserves the aspect ratio.
    pub fn rescaled_to_height(&self, height: usize) -> CameraIntrinsics {
        let s = height as f64 / self.height as f64;
        let width = (height as f64 * self.width as f64 / self.height as f64).round() as usize;
        CameraIntrinsics {
            fx: self.fx * s,
            fy: self.fy * s,
            cx: self.cx * s,
            cy: self.cy * s,
            width,
            height,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Frame {
    pub id: usize,
    /// H x W x 3 in [0,1].
    pub rgb: Image,
    /// H x W, meters, 0 = invalid.
    pub depth: Plane,
    /// Camera-to-world rigid transform.
    pub pose: Matrix4<f64>,
}

#[derive(Clone, Debug)]
pub struct Scene {
    pub mesh: TexturedMesh,
    pub frames: Vec<Frame>,
    pub intrinsics: CameraIntrinsics,
    /// Meters per stored depth unit of the source files.
    pub depth_unit: f64,
}

/// Check that the rotation block of a camera-to-world pose is orthonormal.
pub fn validate_pose(pose: &Matrix4<f64>, what: &str) -> Result<()> {
    let r = pose.fixed_view::<3, 3>(0, 0);
    let gram = r * r.transpose();
    let mut max_dev = 0.0f64;
    for i in 0..3 {
        for j in 0..3 {
            let target = if i == j { 1.0 } else { 0.0 };
            max_dev = max_dev.max((gram[(i, j)] - target).abs());
        }
    }
    if max_dev > ROTATION_ORTHO_TOL {
        return Err(Error::Validation(format!(
            "{what}: rotation block deviates from orthonormal by {max_dev:.2e}"
        )));
    }
    let bottom = [pose[(3, 0)], pose[(3, 1)], pose[(3, 2)], pose[(3, 3)]];
    if bottom != [0.0, 0.0, 0.0, 1.0] {
        return Err(Error::Validation(format!(
            "{what}: bottom row must be [0 0 0 1]"
        )));
    }
    Ok(())
}

/// Rigid inverse of a validated camera-to-world pose (world-to-camera).
pub fn invert_pose(pose: &Matrix4<f64>) -> Matrix4<f64> {
    let r = pose.fixed_view::<3, 3>(0, 0);
    let t = pose.fixed_view::<3, 1>(0, 3);
    let rt = r.transpose();
    let ti = -rt * t;
    let mut out = Matrix4::identity();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&rt);
    out.fixed_view_mut::<3, 1>(0, 3).copy_from(&ti);
    out
}

fn parse_floats(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let vals: Vec<f64> = text
        .split_whitespace()
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Error::parse(path, format!("`{s}` is not a number")))
        })
        .collect::<Result<_>>()?;
    if vals.len() != expected {
        return Err(Error::parse(
            path,
            format!("expected {expected} numbers, found {}", vals.len()),
        ));
    }
    Ok(vals)
}

fn load_depth_png(path: &Path, depth_unit: f64) -> Result<Plane> {
    let img = image::open(path)
        .map_err(|e| Error::parse(path, format!("png decode: {e}")))?
        .to_luma16();
    let (w, h) = img.dimensions();
    let mut out = Plane::new(h as usize, w as usize);
    for (x, y, p) in img.enumerate_pixels() {
        out.set(y as usize, x as usize, p.0[0] as f64 * depth_unit);
    }
    Ok(out)
}

fn save_depth_png(depth: &Plane, depth_unit: f64, path: &Path) -> Result<()> {
    let mut buf =
        image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::new(depth.width as u32, depth.height as u32);
    for y in 0..depth.height {
        for x in 0..depth.width {
            let stored = (depth.get(y, x) / depth_unit).round().clamp(0.0, 65535.0) as u16;
            buf.put_pixel(x as u32, y as u32, image::Luma([stored]));
        }
    }
    buf.save(path)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))
}

/// Load and validate a scene directory. Frame ids come from the file names
/// under `frames/` and are returned in ascending order.
pub fn load_scene(root: &Path, config: &Config) -> Result<Scene> {
    let mesh_path = root.join("mesh.obj");
    if !mesh_path.exists() {
        return Err(Error::io(
            &mesh_path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "missing mesh file"),
        ));
    }
    let mesh = load_mesh(&mesh_path)?;

    let intr_path = root.join("intrinsics.txt");
    let intr_vals = parse_floats(&intr_path, 4)?;

    let frames_dir = root.join("frames");
    let mut ids: Vec<usize> = Vec::new();
    let entries = std::fs::read_dir(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(&frames_dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(stem) = name.strip_suffix(".rgb.png") {
            let id: usize = stem
                .parse()
                .map_err(|_| Error::parse(entry.path(), "frame file name is not an integer id"))?;
            ids.push(id);
        }
    }
    ids.sort_unstable();
    if ids.is_empty() {
        return Err(Error::Validation(format!(
            "no frames found under {}",
            frames_dir.display()
        )));
    }

    let mut frames = Vec::with_capacity(ids.len());
    for id in ids {
        let rgb_path = frames_dir.join(format!("{id}.rgb.png"));
        let depth_path = frames_dir.join(format!("{id}.depth.png"));
        let pose_path = frames_dir.join(format!("{id}.pose.txt"));
        for p in [&depth_path, &pose_path] {
            if !p.exists() {
                return Err(Error::io(
                    p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "missing frame file"),
                ));
            }
        }
        let rgb = Image::load_png(&rgb_path)?;
        let depth = load_depth_png(&depth_path, config.depth_unit)?;
        let pose_vals = parse_floats(&pose_path, 16)?;
        let pose = Matrix4::from_row_slice(&pose_vals);
        validate_pose(&pose, &format!("frame {id} pose"))?;
        if depth.height != rgb.height || depth.width != rgb.width {
            return Err(Error::Validation(format!(
                "frame {id}: rgb is {}x{} but depth is {}x{}",
                rgb.height, rgb.width, depth.height, depth.width
            )));
        }
        frames.push(Frame {
            id,
            rgb,
            depth,
            pose,
        });
    }

    let (h0, w0) = (frames[0].rgb.height, frames[0].rgb.width);
    for f in &frames {
        if f.rgb.height != h0 || f.rgb.width != w0 {
            return Err(Error::Validation(format!(
                "frame {} resolution {}x{} differs from frame {} ({}x{})",
                f.id, f.rgb.height, f.rgb.width, frames[0].id, h0, w0
            )));
        }
    }

    let intrinsics = CameraIntrinsics {
        fx: intr_vals[0],
        fy: intr_vals[1],
        cx: intr_vals[2],
        cy: intr_vals[3],
        width: w0,
        height: h0,
    };

    Ok(Scene {
        mesh,
        frames,
        intrinsics,
        depth_unit: config.depth_unit,
    })
}

/// Write a scene directory readable by [`load_scene`]. Geometry and poses
/// round-trip bit-exactly; images are quantized by their file formats.
pub fn save_scene(scene: &Scene, root: &Path) -> Result<()> {
    std::fs::create_dir_all(root.join("frames")).map_err(|e| Error::io(root, e))?;
    save_mesh(&scene.mesh, &root.join("mesh.obj"))?;
    let intr = &scene.intrinsics;
    std::fs::write(
        root.join("intrinsics.txt"),
        format!("{} {} {} {}\n", intr.fx, intr.fy, intr.cx, intr.cy),
    )
    .map_err(|e| Error::io(root.join("intrinsics.txt"), e))?;
    for frame in &scene.frames {
        let base: PathBuf = root.join("frames");
        frame
            .rgb
            .save_png8(&base.join(format!("{}.rgb.png", frame.id)))?;
        save_depth_png(
            &frame.depth,
            scene.depth_unit,
            &base.join(format!("{}.depth.png", frame.id)),
        )?;
        let mut pose_text = String::new();
        for r in 0..4 {
            let row: Vec<String> = (0..4).map(|c| frame.pose[(r, c)].to_string()).collect();
            writeln!(pose_text, "{}", row.join(" ")).unwrap();
        }
        std::fs::write(base.join(format!("{}.pose.txt", frame.id)), pose_text)
            .map_err(|e| Error::io(base, e))?;
    }
    Ok(())
}

/// Variance of the 3x3 discrete Laplacian response over the Rec. 601
/// grayscale image. Higher means sharper; constant images score 0.
pub fn blur_score(rgb: &Image) -> f64 {
    let gray = rgb.luminance();
    if gray.height < 3 || gray.width < 3 {
        return 0.0;
    }
    let mut responses = Vec::with_capacity((gray.height - 2) * (gray.width - 2));
    for y in 1..gray.height - 1 {
        for x in 1..gray.width - 1 {
            let lap = gray.get(y - 1, x) + gray.get(y + 1, x) + gray.get(y, x - 1)
                + gray.get(y, x + 1)
                - 4.0 * gray.get(y, x);
            responses.push(lap);
        }
    }
    let n = responses.len() as f64;
    let mean = responses.iter().sum::<f64>() / n;
    responses.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n
}

/// Keep frames whose [`blur_score`] reaches `threshold`, preserving order.
/// Refuses to return an empty scene.
pub fn filter_frames(scene: Scene, threshold: f64) -> Result<Scene> {
    let Scene {
        mesh,
        frames,
        intrinsics,
        depth_unit,
    } = scene;
    let kept: Vec<Frame> = frames
        .into_iter()
        .filter(|f| blur_score(&f.rgb) >= threshold)
        .collect();
    if kept.is_empty() {
        return Err(Error::Validation(format!(
            "blur threshold {threshold} removed every frame; lower it"
        )));
    }
    Ok(Scene {
        mesh,
        frames: kept,
        intrinsics,
        depth_unit,
    })
}
