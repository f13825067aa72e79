//! Quantitative evaluation: reprojection-error view consistency and the
//! circle/ellipse 3D-awareness metrics.

pub mod ellipse;

use serde::{Deserialize, Serialize};

use nalgebra::{Matrix4, Vector3};

use crate::error::{Error, Result};
use crate::img::{sample_bilinear_rgb, Image, Mask};
use crate::raster::GBuffer;
use crate::scene::{invert_pose, CameraIntrinsics, Frame, Scene};

pub use ellipse::{segment_ellipses, EllipseRecord, WorldEllipse};

/// Occlusion gate for warping validity: computed and stored target depth
/// must agree within this distance (meters).
pub const DEPTH_CONSISTENCY_TOL: f64 = 0.05;

/// Warp the target frame into the source view: every source pixel is
/// back-projected with the source depth, transformed into the target camera
/// and bilinearly sampled from the target rgb. A pixel is valid when both
/// depths exist, the projection lands in bounds and the depths agree within
/// [`DEPTH_CONSISTENCY_TOL`] (occlusion gate).
pub fn reproject(
    target: &Frame,
    source: &Frame,
    intrinsics: &CameraIntrinsics,
) -> (Image, Mask) {
    let (h, w) = (source.rgb.height, source.rgb.width);
    let mut warped = Image::new(h, w);
    let mut valid = Mask::new(h, w);
    let src_to_world = source.pose;
    let world_to_tgt = invert_pose(&target.pose);
    let m: Matrix4<f64> = world_to_tgt * src_to_world;
    for y in 0..h {
        for x in 0..w {
            let ds = source.depth.get(y, x);
            if ds <= 0.0 {
                continue;
            }
            let pc = Vector3::new(
                ((x as f64 + 0.5) - intrinsics.cx) / intrinsics.fx * ds,
                ((y as f64 + 0.5) - intrinsics.cy) / intrinsics.fy * ds,
                ds,
            );
            let pt = m.fixed_view::<3, 3>(0, 0) * pc + m.fixed_view::<3, 1>(0, 3);
            if pt.z <= 0.0 {
                continue;
            }
            let u = intrinsics.fx * pt.x / pt.z + intrinsics.cx;
            let v = intrinsics.fy * pt.y / pt.z + intrinsics.cy;
            if u < 0.0 || u > w as f64 || v < 0.0 || v > h as f64 {
                continue;
            }
            // Nearest target pixel for the depth gate, bilinear for color.
            let tx = (u - 0.5).round().clamp(0.0, w as f64 - 1.0) as usize;
            let ty = (v - 0.5).round().clamp(0.0, h as f64 - 1.0) as usize;
            let dt = target.depth.get(ty, tx);
            if dt <= 0.0 || (pt.z - dt).abs() > DEPTH_CONSISTENCY_TOL {
                continue;
            }
            warped.set(y, x, sample_bilinear_rgb(&target.rgb, v - 0.5, u - 0.5));
            valid.set(y, x, true);
        }
    }
    (warped, valid)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PairRecord {
    pub offset: usize,
    pub source_id: usize,
    pub target_id: usize,
    pub l1: f64,
    pub valid_fraction: f64,
}

/// Mean reprojection L1 per offset, over all (source, source+offset) pairs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub pairs: Vec<PairRecord>,
    pub offsets: Vec<usize>,
    /// Mean L1 per offset (None when no pair fits in the trajectory).
    pub means: Vec<Option<f64>>,
}

impl ConsistencyReport {
    pub fn mean_for(&self, offset: usize) -> Option<f64> {
        self.offsets
            .iter()
            .position(|&o| o == offset)
            .and_then(|i| self.means[i])
    }

    /// Mean for offset 2 (the conventional short-range gap).
    pub fn short_range(&self) -> Option<f64> {
        self.mean_for(2)
    }

    /// Mean for offset 20 (the conventional long-range gap).
    pub fn long_range(&self) -> Option<f64> {
        self.mean_for(20)
    }

    pub fn summary(&self) -> String {
        let mut out = String::from("reprojection error (L1, [0,1] rgb)\n");
        for (i, &o) in self.offsets.iter().enumerate() {
            match self.means[i] {
                Some(m) => out.push_str(&format!("  offset {o:>3}: {m:.6}\n")),
                None => out.push_str(&format!("  offset {o:>3}: n/a (trajectory too short)\n")),
            }
        }
        out
    }
}

/// L1 distance in normalized rgb between each source frame and the
/// reprojected target frame `offset` steps later, averaged over valid
/// pixels and over pairs. `rendered` replaces the frames' rgb (depth and
/// poses still come from the scene); pass the original frames' rgb to
/// evaluate the captured footage itself.
pub fn reprojection_error(
    rendered: &[Image],
    scene: &Scene,
    offsets: &[usize],
) -> Result<ConsistencyReport> {
    if rendered.len() != scene.frames.len() {
        return Err(Error::Eval(format!(
            "{} rendered frames for {} scene poses",
            rendered.len(),
            scene.frames.len()
        )));
    }
    let frames: Vec<Frame> = scene
        .frames
        .iter()
        .zip(rendered)
        .map(|(f, img)| Frame {
            id: f.id,
            rgb: img.clone(),
            depth: f.depth.clone(),
            pose: f.pose,
        })
        .collect();
    let mut pairs = Vec::new();
    let mut means = Vec::new();
    for &offset in offsets {
        let mut pair_values = Vec::new();
        for i in 0..frames.len() {
            let j = i + offset;
            if j >= frames.len() {
                continue; // pair extends beyond the trajectory
            }
            let (warped, valid) = reproject(&frames[j], &frames[i], &scene.intrinsics);
            let mut acc = 0.0;
            let mut n = 0usize;
            for y in 0..valid.height {
                for x in 0..valid.width {
                    if !valid.get(y, x) {
                        continue;
                    }
                    let a = frames[i].rgb.get(y, x);
                    let b = warped.get(y, x);
                    acc += (a[0] - b[0]).abs() + (a[1] - b[1]).abs() + (a[2] - b[2]).abs();
                    n += 1;
                }
            }
            if n == 0 {
                continue;
            }
            let l1 = acc / (3.0 * n as f64);
            pairs.push(PairRecord {
                offset,
                source_id: frames[i].id,
                target_id: frames[j].id,
                l1,
                valid_fraction: n as f64 / (valid.height * valid.width) as f64,
            });
            pair_values.push(l1);
        }
        means.push(if pair_values.is_empty() {
            None
        } else {
            Some(pair_values.iter().sum::<f64>() / pair_values.len() as f64)
        });
    }
    Ok(ConsistencyReport {
        pairs,
        offsets: offsets.to_vec(),
        means,
    })
}

/// Two-pass Pearson correlation. Degenerate (constant) inputs report 0 with
/// the flag set.
pub fn pearson(xs: &[f64], ys: &[f64]) -> (f64, bool) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 2 {
        return (0.0, true);
    }
    let const_x = xs.windows(2).all(|w| w[0] == w[1]);
    let const_y = ys.windows(2).all(|w| w[0] == w[1]);
    if const_x || const_y {
        return (0.0, true);
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for i in 0..n {
        let dx = xs[i] - mx;
        let dy = ys[i] - my;
        cov += dx * dy;
        vx += dx * dx;
        vy += dy * dy;
    }
    if vx == 0.0 || vy == 0.0 {
        return (0.0, true);
    }
    (cov / (vx * vy).sqrt(), false)
}

/// Depth/size correlations and world stretch over a set of lifted ellipses.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AwarenessReport {
    /// Signed Pearson correlation of center depth with the pixel radius.
    pub corr_2d: f64,
    /// Signed Pearson correlation of center depth with the world radius.
    pub corr_3d: f64,
    /// Arithmetic mean of the world-space stretch.
    pub stretch: f64,
    pub ellipse_count: usize,
    pub degenerate_2d: bool,
    pub degenerate_3d: bool,
    /// Set when fewer than 8 records back the statistics.
    pub low_confidence: bool,
}

impl AwarenessReport {
    pub fn summary(&self) -> String {
        let mut out = String::from("circle statistics over rendered trajectory\n");
        out.push_str(&format!(
            "  corr 2d (depth vs pixel radius): {:+.4} (|r| = {:.4}){}\n",
            self.corr_2d,
            self.corr_2d.abs(),
            if self.degenerate_2d { " [degenerate]" } else { "" }
        ));
        out.push_str(&format!(
            "  corr 3d (depth vs world radius): {:+.4} (|r| = {:.4}){}\n",
            self.corr_3d,
            self.corr_3d.abs(),
            if self.degenerate_3d { " [degenerate]" } else { "" }
        ));
        out.push_str(&format!("  mean world stretch: {:.4}\n", self.stretch));
        out.push_str(&format!(
            "  ellipses: {}{}\n",
            self.ellipse_count,
            if self.low_confidence {
                " [low confidence: fewer than 8 records]"
            } else {
                ""
            }
        ));
        out
    }
}

/// Pearson correlations corr(depth, r_p) and corr(depth, r_w) plus mean
/// world stretch. Records without world fields are ignored.
pub fn awareness_metrics(records: &[EllipseRecord]) -> AwarenessReport {
    let lifted: Vec<&EllipseRecord> = records.iter().filter(|r| r.world.is_some()).collect();
    let depths: Vec<f64> = lifted
        .iter()
        .map(|r| r.world.as_ref().unwrap().center_depth)
        .collect();
    let r_p: Vec<f64> = lifted.iter().map(|r| r.r_p).collect();
    let r_w: Vec<f64> = lifted
        .iter()
        .map(|r| r.world.as_ref().unwrap().r_w)
        .collect();
    let s_w: Vec<f64> = lifted
        .iter()
        .map(|r| r.world.as_ref().unwrap().s_w)
        .collect();
    let (corr_2d, degenerate_2d) = pearson(&depths, &r_p);
    let (corr_3d, degenerate_3d) = pearson(&depths, &r_w);
    let stretch = if s_w.is_empty() {
        0.0
    } else {
        s_w.iter().sum::<f64>() / s_w.len() as f64
    };
    AwarenessReport {
        corr_2d,
        corr_3d,
        stretch,
        ellipse_count: lifted.len(),
        degenerate_2d,
        degenerate_3d,
        low_confidence: lifted.len() < 8,
    }
}

/// Back-project the axis endpoints of each detected ellipse at the center's
/// depth, filling the world-space fields. Records whose center falls on an
/// uncovered pixel are dropped.
pub fn lift_ellipses(
    records: &[EllipseRecord],
    gbuffer: &GBuffer,
    _pose: &Matrix4<f64>,
    intrinsics: &CameraIntrinsics,
) -> Vec<EllipseRecord> {
    let intr = intrinsics.rescaled_to_height(gbuffer.height);
    let mut out = Vec::new();
    for rec in records {
        let px = (rec.center[0] - 0.5).round().clamp(0.0, (gbuffer.width - 1) as f64) as usize;
        let py = (rec.center[1] - 0.5).round().clamp(0.0, (gbuffer.height - 1) as f64) as usize;
        if !gbuffer.covered(py, px) {
            continue;
        }
        let d = gbuffer.depth_at(py, px);
        if d <= 0.0 {
            continue;
        }
        // Rigid transforms preserve distances, so endpoint-to-center world
        // distances can be measured in camera space.
        let back = |u: f64, v: f64| -> Vector3<f64> {
            Vector3::new((u - intr.cx) / intr.fx * d, (v - intr.cy) / intr.fy * d, d)
        };
        let c = back(rec.center[0], rec.center[1]);
        let h_w = (back(rec.center[0] + rec.h_p, rec.center[1]) - c).norm();
        let v_w = (back(rec.center[0], rec.center[1] + rec.v_p) - c).norm();
        let r_w = (h_w + v_w) / 2.0;
        let s_w = (h_w / v_w).max(v_w / h_w);
        let mut lifted = rec.clone();
        lifted.world = Some(WorldEllipse {
            h_w,
            v_w,
            r_w,
            s_w,
            center_depth: d,
        });
        out.push(lifted);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ViewDirection;
    use crate::img::Plane;
    use crate::raster::rasterize_gbuffer;
    use crate::synth;
    use nalgebra::Point3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn plane_scene(n: usize) -> Scene {
        let content = synth::gradient_image(32, 40);
        let mut scene = synth::quad_scene(&content, 40, 32, n);
        // Give frames distinct, structured rgb so reprojection is non-trivial.
        for (i, f) in scene.frames.iter_mut().enumerate() {
            f.rgb = Image::from_fn(32, 40, |y, x| {
                let v = ((x * 7 + y * 3 + i) % 13) as f64 / 13.0;
                [v, 1.0 - v, 0.5 * v]
            });
        }
        scene
    }

    #[test]
    fn identity_pose_reprojection_is_exact() {
        let scene = plane_scene(2);
        let (warped, valid) = reproject(&scene.frames[1], &scene.frames[0], &scene.intrinsics);
        assert!(valid.count() > 0);
        for y in 0..32 {
            for x in 0..40 {
                if valid.get(y, x) {
                    let a = warped.get(y, x);
                    let b = scene.frames[1].rgb.get(y, x);
                    for c in 0..3 {
                        assert!((a[c] - b[c]).abs() < 1e-3);
                    }
                }
            }
        }
    }

    #[test]
    fn pure_translation_shifts_by_fx_t_over_d() {
        // Fronto-parallel plane at depth 2, camera translated along x by t:
        // the warp is a uniform pixel shift of fx * t / d.
        let mut scene = plane_scene(2);
        let t = 0.25;
        scene.frames[1].pose[(0, 3)] = t;
        // Re-rasterize depth for the translated pose (same plane, depth
        // unchanged for a fronto-parallel plane).
        let shift = scene.intrinsics.fx * t / 2.0;
        let (warped, valid) = reproject(&scene.frames[1], &scene.frames[0], &scene.intrinsics);
        let mut checked = 0;
        for y in 2..30 {
            for x in 2..38 {
                if !valid.get(y, x) {
                    continue;
                }
                // Source pixel x corresponds to target pixel x - shift.
                let xs = x as f64 + 0.5 - shift;
                if xs < 1.0 || xs > 39.0 {
                    continue;
                }
                let expected = sample_bilinear_rgb(&scene.frames[1].rgb, y as f64, xs - 0.5);
                let got = warped.get(y, x);
                for c in 0..3 {
                    assert!(
                        (got[c] - expected[c]).abs() < 1e-6,
                        "pixel ({y},{x}): {got:?} vs {expected:?}"
                    );
                }
                checked += 1;
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn occluded_pixels_marked_invalid() {
        let mut scene = plane_scene(2);
        // Pretend the target sees nearer geometry at half the image: depth
        // consistency must fail there.
        for y in 0..32 {
            for x in 0..20 {
                scene.frames[1].depth.set(y, x, 1.0);
            }
        }
        let (_, valid) = reproject(&scene.frames[1], &scene.frames[0], &scene.intrinsics);
        for y in 0..32 {
            for x in 0..18 {
                assert!(!valid.get(y, x), "pixel ({y},{x}) should be occluded");
            }
            for x in 22..40 {
                assert!(valid.get(y, x));
            }
        }
    }

    #[test]
    fn missing_depth_pixels_are_invalid() {
        let mut scene = plane_scene(2);
        scene.frames[0].depth.set(5, 5, 0.0);
        let (_, valid) = reproject(&scene.frames[1], &scene.frames[0], &scene.intrinsics);
        assert!(!valid.get(5, 5));
    }

    #[test]
    fn constant_color_trajectory_has_zero_error() {
        let scene = plane_scene(4);
        let rendered: Vec<Image> = (0..4).map(|_| Image::constant(32, 40, [0.3, 0.6, 0.9])).collect();
        let report = reprojection_error(&rendered, &scene, &[2]).unwrap();
        assert!(report.mean_for(2).unwrap() < 1e-12);
    }

    #[test]
    fn independent_random_frames_approach_one_third() {
        let scene = plane_scene(6);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let rendered: Vec<Image> = (0..6)
            .map(|_| {
                let mut img = Image::new(32, 40);
                for v in &mut img.data {
                    *v = rng.gen_range(0.0..1.0);
                }
                img
            })
            .collect();
        let report = reprojection_error(&rendered, &scene, &[2]).unwrap();
        let mean = report.mean_for(2).unwrap();
        assert!((mean - 1.0 / 3.0).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn offset_beyond_trajectory_is_skipped() {
        let scene = plane_scene(3);
        let rendered: Vec<Image> = (0..3).map(|_| Image::constant(32, 40, [0.5; 3])).collect();
        let report = reprojection_error(&rendered, &scene, &[2, 20]).unwrap();
        assert!(report.mean_for(2).is_some());
        assert!(report.mean_for(20).is_none());
        assert!(report.long_range().is_none());
    }

    #[test]
    fn reprojection_symmetric_on_static_fixture() {
        let mut scene = plane_scene(2);
        scene.frames[1].pose[(0, 3)] = 0.1;
        let rendered: Vec<Image> = scene.frames.iter().map(|f| f.rgb.clone()).collect();
        let fwd = reprojection_error(&rendered, &scene, &[1]).unwrap();
        // Swap the two frames (poses and images) and measure again.
        let mut swapped = scene.clone();
        swapped.frames.swap(0, 1);
        for (i, f) in swapped.frames.iter_mut().enumerate() {
            f.id = i;
        }
        let rendered_swapped: Vec<Image> =
            swapped.frames.iter().map(|f| f.rgb.clone()).collect();
        let bwd = reprojection_error(&rendered_swapped, &swapped, &[1]).unwrap();
        let a = fwd.mean_for(1).unwrap();
        let b = bwd.mean_for(1).unwrap();
        assert!((a - b).abs() < 1e-3, "{a} vs {b}");
    }

    #[test]
    fn pearson_examples_and_oracle() {
        // r_p proportional to 1/depth: perfect anticorrelation of rank, and
        // for these values nearly perfect linear anticorrelation; use exact
        // linear relation for the -1 check.
        let depths: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        let sizes: Vec<f64> = depths.iter().map(|d| 100.0 - 5.0 * d).collect();
        let (r, deg) = pearson(&depths, &sizes);
        assert!(!deg);
        assert!((r + 1.0).abs() < 1e-6, "r = {r}");

        // Constant series degenerate.
        let (r, deg) = pearson(&depths, &vec![3.0; 10]);
        assert_eq!(r, 0.0);
        assert!(deg);

        // Randomized oracle: raw-moment single-pass formula.
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..100 {
            let n = rng.gen_range(3..30);
            let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let ys: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let (r, deg) = pearson(&xs, &ys);
            assert!(!deg);
            let nf = n as f64;
            let sx: f64 = xs.iter().sum();
            let sy: f64 = ys.iter().sum();
            let sxy: f64 = xs.iter().zip(&ys).map(|(a, b)| a * b).sum();
            let sxx: f64 = xs.iter().map(|a| a * a).sum();
            let syy: f64 = ys.iter().map(|a| a * a).sum();
            let want = (sxy - sx * sy / nf)
                / ((sxx - sx * sx / nf).sqrt() * (syy - sy * sy / nf).sqrt());
            assert!((r - want).abs() < 1e-9, "{r} vs {want}");
        }
    }

    #[test]
    fn awareness_metrics_flags() {
        let rec = |r_p: f64, depth: f64, r_w: f64| EllipseRecord {
            center: [10.0, 10.0],
            h_p: r_p,
            v_p: r_p,
            r_p,
            s_p: 1.0,
            world: Some(WorldEllipse {
                h_w: r_w,
                v_w: r_w,
                r_w,
                s_w: 1.2,
                center_depth: depth,
            }),
        };
        // r_w constant -> corr_3d degenerate-flagged 0. The pixel radius
        // follows 1/depth, a monotone but nonlinear relation, so Pearson is
        // strongly negative without reaching -1 (the -1 case is covered by
        // the linear fixture in pearson_examples_and_oracle).
        let records: Vec<EllipseRecord> = (1..=10)
            .map(|i| rec(60.0 / i as f64, i as f64, 0.5))
            .collect();
        let report = awareness_metrics(&records);
        assert_eq!(report.corr_3d, 0.0);
        assert!(report.degenerate_3d);
        assert!(report.corr_2d < -0.75, "corr_2d = {}", report.corr_2d);
        assert!(!report.low_confidence);
        assert!((report.stretch - 1.2).abs() < 1e-12);

        // Fewer than 8 records -> low confidence.
        let report = awareness_metrics(&records[..5]);
        assert!(report.low_confidence);
    }

    #[test]
    fn lift_ellipses_pinhole_similar_triangles() {
        // Fronto-parallel plane at 1 m: a circle of pixel radius fx * 0.1
        // lifts to a world radius of 0.1 m.
        let mesh = synth::quad_mesh_at(1.0, 4.0);
        let intr = CameraIntrinsics {
            fx: 100.0,
            fy: 100.0,
            cx: 50.0,
            cy: 50.0,
            width: 100,
            height: 100,
        };
        let gb = rasterize_gbuffer(
            &mesh,
            &Matrix4::identity(),
            &intr,
            100,
            ViewDirection::Ray,
        );
        let rec = EllipseRecord {
            center: [50.0, 50.0],
            h_p: 10.0,
            v_p: 10.0,
            r_p: 10.0,
            s_p: 1.0,
            world: None,
        };
        let lifted = lift_ellipses(&[rec.clone()], &gb, &Matrix4::identity(), &intr);
        assert_eq!(lifted.len(), 1);
        let w = lifted[0].world.as_ref().unwrap();
        assert!((w.r_w - 0.1).abs() / 0.1 < 0.02, "r_w = {}", w.r_w);
        assert!((w.s_w - 1.0).abs() < 0.02);

        // Same circle at doubled depth doubles the world radius.
        let mesh2 = synth::quad_mesh_at(2.0, 8.0);
        let gb2 = rasterize_gbuffer(
            &mesh2,
            &Matrix4::identity(),
            &intr,
            100,
            ViewDirection::Ray,
        );
        let lifted2 = lift_ellipses(&[rec.clone()], &gb2, &Matrix4::identity(), &intr);
        let w2 = lifted2[0].world.as_ref().unwrap();
        assert!((w2.r_w / w.r_w - 2.0).abs() < 0.02);

        // Uncovered center drops the record.
        let gb_empty = {
            let mut g = GBuffer::new(100, 100);
            g.width = 100;
            g
        };
        let dropped = lift_ellipses(&[rec], &gb_empty, &Matrix4::identity(), &intr);
        assert!(dropped.is_empty());
    }

    #[test]
    fn lift_scales_linearly_with_depth_for_fixed_pixel_radius() {
        let intr = CameraIntrinsics {
            fx: 80.0,
            fy: 80.0,
            cx: 40.0,
            cy: 40.0,
            width: 80,
            height: 80,
        };
        let rec = EllipseRecord {
            center: [40.0, 40.0],
            h_p: 8.0,
            v_p: 8.0,
            r_p: 8.0,
            s_p: 1.0,
            world: None,
        };
        let mut radii = Vec::new();
        for depth in [1.0, 2.0, 3.0] {
            let mesh = synth::quad_mesh_at(depth, depth * 4.0);
            let gb = rasterize_gbuffer(&mesh, &Matrix4::identity(), &intr, 80, ViewDirection::Ray);
            let lifted = lift_ellipses(&[rec.clone()], &gb, &Matrix4::identity(), &intr);
            radii.push(lifted[0].world.as_ref().unwrap().r_w);
        }
        assert!((radii[1] / radii[0] - 2.0).abs() < 1e-3);
        assert!((radii[2] / radii[0] - 3.0).abs() < 1e-3);
        let _ = Point3::new(0.0, 0.0, 0.0);
        let _ = Plane::new(1, 1);
    }
}
