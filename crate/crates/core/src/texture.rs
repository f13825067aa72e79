//! The optimization variable: a Laplacian-pyramid texture with
//! differentiable bilinear sampling and detail regularization.
//!
//! Level 0 is the finest detail grid at full resolution; each following
//! level halves the resolution; the last level is the low-resolution base.
//! The flat texture is the sum of all levels bilinearly upsampled to full
//! resolution. Values are unclamped during optimization and clamped to
//! [0,1] only at export.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container::{Container, PlaneData};
use crate::error::{Error, Result};
use crate::img::{Image, Mask};
use crate::raster::GBuffer;

#[derive(Clone, Debug, PartialEq)]
pub struct LaplacianTexture {
    pub resolution: usize,
    /// levels[k] has side resolution >> k, interleaved rgb.
    pub levels: Vec<Vec<f64>>,
}

/// Per-texel gradient accumulator matching a texture's layout.
#[derive(Clone, Debug)]
pub struct TextureGrads {
    pub levels: Vec<Vec<f64>>,
    pub touched: Vec<Vec<bool>>,
}

pub fn level_resolution(resolution: usize, level: usize) -> usize {
    resolution >> level
}

/// uv (half-texel centers, edge clamped) to the four bilinear taps of a
/// square grid: (y, x, weight).
#[inline]
pub fn bilinear_taps(u: f64, v: f64, size: usize) -> [(usize, usize, f64); 4] {
    let hi = size as isize - 1;
    let x = u * size as f64 - 0.5;
    let y = v * size as f64 - 0.5;
    let xf = x.floor();
    let yf = y.floor();
    let fx = x - xf;
    let fy = y - yf;
    let x0 = (xf as isize).clamp(0, hi) as usize;
    let x1 = (xf as isize + 1).clamp(0, hi) as usize;
    let y0 = (yf as isize).clamp(0, hi) as usize;
    let y1 = (yf as isize + 1).clamp(0, hi) as usize;
    [
        (y0, x0, (1.0 - fy) * (1.0 - fx)),
        (y0, x1, (1.0 - fy) * fx),
        (y1, x0, fy * (1.0 - fx)),
        (y1, x1, fy * fx),
    ]
}

impl LaplacianTexture {
    /// Base level set to `init_color`, detail levels zero.
    pub fn init(resolution: usize, levels: usize, init_color: [f64; 3]) -> Result<Self> {
        if levels == 0 {
            return Err(Error::Config("texture needs at least one level".into()));
        }
        let div = 1usize << (levels - 1);
        if resolution == 0 || resolution % div != 0 {
            return Err(Error::Config(format!(
                "texture resolution {resolution} is not divisible by 2^(levels-1) = {div}"
            )));
        }
        let mut out = Vec::with_capacity(levels);
        for k in 0..levels {
            let s = level_resolution(resolution, k);
            let mut grid = vec![0.0f64; s * s * 3];
            if k == levels - 1 {
                for px in grid.chunks_exact_mut(3) {
                    px.copy_from_slice(&init_color);
                }
            }
            out.push(grid);
        }
        Ok(LaplacianTexture {
            resolution,
            levels: out,
        })
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn level_size(&self, k: usize) -> usize {
        level_resolution(self.resolution, k)
    }

    #[inline]
    fn level_texel(&self, k: usize, y: usize, x: usize) -> [f64; 3] {
        let s = self.level_size(k);
        let i = (y * s + x) * 3;
        let g = &self.levels[k];
        [g[i], g[i + 1], g[i + 2]]
    }

    /// Sum of all levels sampled at a single uv position.
    pub fn sample_uv(&self, u: f64, v: f64) -> [f64; 3] {
        let mut acc = [0.0f64; 3];
        for k in 0..self.levels.len() {
            let s = self.level_size(k);
            for (ty, tx, w) in bilinear_taps(u, v, s) {
                if w == 0.0 {
                    continue;
                }
                let t = self.level_texel(k, ty, tx);
                acc[0] += w * t[0];
                acc[1] += w * t[1];
                acc[2] += w * t[2];
            }
        }
        acc
    }

    /// Flat full-resolution texture: every level bilinearly upsampled and
    /// summed. Unclamped.
    pub fn composite(&self) -> Image {
        let r = self.resolution;
        let mut img = Image::new(r, r);
        for y in 0..r {
            let v = (y as f64 + 0.5) / r as f64;
            for x in 0..r {
                let u = (x as f64 + 0.5) / r as f64;
                img.set(y, x, self.sample_uv(u, v));
            }
        }
        img
    }

    /// Sample the texture through a g-buffer's uv map. Uncovered pixels are
    /// zero; the returned mask is the g-buffer coverage.
    pub fn sample(&self, gb: &GBuffer) -> (Image, Mask) {
        let mut img = Image::new(gb.height, gb.width);
        let mut mask = Mask::new(gb.height, gb.width);
        for y in 0..gb.height {
            for x in 0..gb.width {
                if !gb.covered(y, x) {
                    continue;
                }
                let [u, v] = gb.uv(y, x);
                img.set(y, x, self.sample_uv(u, v));
                mask.set(y, x, true);
            }
        }
        (img, mask)
    }

    /// Scatter a per-pixel image gradient back to every contributing texel:
    /// each texel receives its bilinear weight times the pixel gradient.
    pub fn sample_backward(&self, gb: &GBuffer, dimg: &Image, grads: &mut TextureGrads) {
        assert_eq!((dimg.height, dimg.width), (gb.height, gb.width));
        for y in 0..gb.height {
            for x in 0..gb.width {
                if !gb.covered(y, x) {
                    continue;
                }
                let g = dimg.get(y, x);
                if g == [0.0, 0.0, 0.0] {
                    continue;
                }
                let [u, v] = gb.uv(y, x);
                for k in 0..self.levels.len() {
                    let s = self.level_size(k);
                    for (ty, tx, w) in bilinear_taps(u, v, s) {
                        if w == 0.0 {
                            continue;
                        }
                        let i = (ty * s + tx) * 3;
                        grads.levels[k][i] += w * g[0];
                        grads.levels[k][i + 1] += w * g[1];
                        grads.levels[k][i + 2] += w * g[2];
                        grads.touched[k][i] = true;
                        grads.touched[k][i + 1] = true;
                        grads.touched[k][i + 2] = true;
                    }
                }
            }
        }
    }

    /// Mean squared texel value summed over detail levels (base unpenalized).
    pub fn reg_loss(&self) -> f64 {
        let n = self.levels.len();
        let mut total = 0.0;
        for k in 0..n.saturating_sub(1) {
            let grid = &self.levels[k];
            let sum_sq: f64 = grid.iter().map(|t| t * t).sum();
            total += sum_sq / grid.len() as f64;
        }
        total
    }

    /// Accumulate `lambda * d(reg_loss)/d(texel)` into the gradient buffers.
    pub fn reg_backward(&self, lambda: f64, grads: &mut TextureGrads) {
        let n = self.levels.len();
        for k in 0..n.saturating_sub(1) {
            let grid = &self.levels[k];
            let scale = 2.0 * lambda / grid.len() as f64;
            for (i, &t) in grid.iter().enumerate() {
                if t != 0.0 {
                    let g = scale * t;
                    grads.levels[k][i] += g;
                    grads.touched[k][i] = true;
                }
            }
        }
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new();
        c.insert(
            "resolution",
            vec![1],
            PlaneData::F64(vec![self.resolution as f64]),
        );
        for (k, grid) in self.levels.iter().enumerate() {
            let s = self.level_size(k) as u32;
            c.insert(
                &format!("level{k}"),
                vec![s, s, 3],
                PlaneData::F64(grid.clone()),
            );
        }
        c
    }

    pub fn from_container(c: &Container, path: &Path) -> Result<Self> {
        let resolution = c.require_f64("resolution", path)?[0] as usize;
        let mut levels = Vec::new();
        for k in 0.. {
            match c.get(&format!("level{k}")) {
                Some(plane) => match &plane.data {
                    PlaneData::F64(v) => levels.push(v.clone()),
                    _ => return Err(Error::parse(path, format!("level{k} must be f64"))),
                },
                None => break,
            }
        }
        if levels.is_empty() {
            return Err(Error::parse(path, "texture has no levels"));
        }
        let tex = LaplacianTexture { resolution, levels };
        for (k, grid) in tex.levels.iter().enumerate() {
            let s = tex.level_size(k);
            if grid.len() != s * s * 3 {
                return Err(Error::parse(path, format!("level{k} has wrong size")));
            }
        }
        Ok(tex)
    }
}

impl TextureGrads {
    pub fn zeros_like(tex: &LaplacianTexture) -> Self {
        TextureGrads {
            levels: tex.levels.iter().map(|g| vec![0.0; g.len()]).collect(),
            touched: tex.levels.iter().map(|g| vec![false; g.len()]).collect(),
        }
    }

    pub fn clear(&mut self) {
        for g in &mut self.levels {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        for t in &mut self.touched {
            t.iter_mut().for_each(|v| *v = false);
        }
    }
}

/// Sidecar metadata written next to an exported texture image.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TextureMeta {
    pub resolution: usize,
    pub levels: usize,
    pub config_hash: String,
}

/// Export the composited texture as a 16-bit PNG plus a metadata sidecar
/// (`<path>.json`). Values are clamped to [0,1] here only.
pub fn export_texture(
    texture: &LaplacianTexture,
    path: &Path,
    config_hash: &str,
) -> Result<()> {
    let flat = texture.composite();
    flat.save_png16(path)?;
    let meta = TextureMeta {
        resolution: texture.resolution,
        levels: texture.level_count(),
        config_hash: config_hash.to_string(),
    };
    let sidecar = path.with_extension("json");
    let text = serde_json::to_string_pretty(&meta).expect("meta serializes");
    std::fs::write(&sidecar, text).map_err(|e| Error::io(sidecar, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ViewDirection;
    use crate::raster::rasterize_gbuffer;
    use crate::scene::CameraIntrinsics;
    use crate::synth;
    use nalgebra::Matrix4;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn init_gray_composites_to_gray_everywhere() {
        let tex = LaplacianTexture::init(16, 3, [0.5, 0.5, 0.5]).unwrap();
        let flat = tex.composite();
        for v in &flat.data {
            assert!((v - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn level_shapes_follow_halving() {
        // Published layout: 4096 with 4 layers gives 4096/2048/1024/512.
        assert_eq!(level_resolution(4096, 0), 4096);
        assert_eq!(level_resolution(4096, 1), 2048);
        assert_eq!(level_resolution(4096, 2), 1024);
        assert_eq!(level_resolution(4096, 3), 512);
        let tex = LaplacianTexture::init(64, 4, [0.0; 3]).unwrap();
        let sizes: Vec<usize> = (0..4).map(|k| tex.level_size(k)).collect();
        assert_eq!(sizes, vec![64, 32, 16, 8]);
        assert_eq!(tex.levels[3].len(), 8 * 8 * 3);
    }

    #[test]
    fn indivisible_resolution_is_rejected() {
        assert!(LaplacianTexture::init(10, 3, [0.0; 3]).is_err());
    }

    #[test]
    fn one_hot_finest_level_composites_to_one_hot() {
        let mut tex = LaplacianTexture::init(8, 2, [0.0; 3]).unwrap();
        let s = tex.level_size(0);
        tex.levels[0][(3 * s + 5) * 3] = 1.0; // red at (3,5)
        let flat = tex.composite();
        for y in 0..8 {
            for x in 0..8 {
                let want = if (y, x) == (3, 5) { 1.0 } else { 0.0 };
                assert!((flat.get(y, x)[0] - want).abs() < 1e-12, "({y},{x})");
            }
        }
    }

    #[test]
    fn composite_matches_upsample_and_sum_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut tex = LaplacianTexture::init(16, 3, [0.3, 0.6, 0.9]).unwrap();
        for level in &mut tex.levels {
            for v in level.iter_mut() {
                *v += rng.gen_range(-0.5..0.5);
            }
        }
        // Oracle: upsample each level independently with explicit
        // half-texel-centered bilinear interpolation and sum the images.
        let r = tex.resolution;
        let mut oracle = Image::new(r, r);
        for (k, grid) in tex.levels.iter().enumerate() {
            let s = tex.level_size(k);
            for y in 0..r {
                for x in 0..r {
                    let sy = (y as f64 + 0.5) / r as f64 * s as f64 - 0.5;
                    let sx = (x as f64 + 0.5) / r as f64 * s as f64 - 0.5;
                    let y0 = (sy.floor() as isize).clamp(0, s as isize - 1) as usize;
                    let y1 = (sy.floor() as isize + 1).clamp(0, s as isize - 1) as usize;
                    let x0 = (sx.floor() as isize).clamp(0, s as isize - 1) as usize;
                    let x1 = (sx.floor() as isize + 1).clamp(0, s as isize - 1) as usize;
                    let fy = sy - sy.floor();
                    let fx = sx - sx.floor();
                    let mut px = [0.0; 3];
                    for c in 0..3 {
                        let t = |yy: usize, xx: usize| grid[(yy * s + xx) * 3 + c];
                        let top = t(y0, x0) * (1.0 - fx) + t(y0, x1) * fx;
                        let bot = t(y1, x0) * (1.0 - fx) + t(y1, x1) * fx;
                        px[c] = top * (1.0 - fy) + bot * fy;
                    }
                    oracle.add(y, x, px);
                }
            }
        }
        let flat = tex.composite();
        for i in 0..flat.data.len() {
            assert!((flat.data[i] - oracle.data[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn sample_at_texel_center_returns_texel() {
        let mut tex = LaplacianTexture::init(4, 1, [0.0; 3]).unwrap();
        tex.levels[0][(1 * 4 + 2) * 3 + 1] = 0.7; // green at (1,2)
        let got = tex.sample_uv((2.0 + 0.5) / 4.0, (1.0 + 0.5) / 4.0);
        assert!((got[1] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn sample_midway_between_texels_averages() {
        let mut tex = LaplacianTexture::init(4, 1, [0.0; 3]).unwrap();
        tex.levels[0][(1 * 4 + 1) * 3] = 0.4;
        tex.levels[0][(1 * 4 + 2) * 3] = 0.8;
        // Midway horizontally between texels (1,1) and (1,2).
        let got = tex.sample_uv(2.0 / 4.0, 1.5 / 4.0);
        assert!((got[0] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn sample_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut tex = LaplacianTexture::init(8, 1, [0.0; 3]).unwrap();
        for v in &mut tex.levels[0] {
            *v = rng.gen_range(0.0..1.0);
        }
        let mesh = synth::quad_mesh_at(2.0, 2.0);
        let intr = CameraIntrinsics {
            fx: 10.0,
            fy: 10.0,
            cx: 8.0,
            cy: 8.0,
            width: 16,
            height: 16,
        };
        let gb = rasterize_gbuffer(&mesh, &Matrix4::identity(), &intr, 16, ViewDirection::Ray);
        // Scalar head: weighted sum of the sampled image with fixed random
        // weights, so d(head)/d(image) is those weights.
        let (img0, _) = tex.sample(&gb);
        let mut weights = Image::new(16, 16);
        for v in &mut weights.data {
            *v = rng.gen_range(-1.0..1.0);
        }
        let head = |img: &Image| -> f64 {
            img.data.iter().zip(&weights.data).map(|(a, b)| a * b).sum()
        };
        let _ = head(&img0);
        let mut grads = TextureGrads::zeros_like(&tex);
        tex.sample_backward(&gb, &weights, &mut grads);
        let eps = 1e-3;
        let mut max_rel = 0.0f64;
        for i in 0..tex.levels[0].len() {
            let mut tp = tex.clone();
            tp.levels[0][i] += eps;
            let mut tm = tex.clone();
            tm.levels[0][i] -= eps;
            let (ip, _) = tp.sample(&gb);
            let (im, _) = tm.sample(&gb);
            let fd = (head(&ip) - head(&im)) / (2.0 * eps);
            let an = grads.levels[0][i];
            let denom = an.abs().max(fd.abs()).max(1e-8);
            max_rel = max_rel.max((an - fd).abs() / denom);
        }
        assert!(max_rel < 1e-3, "max relative error {max_rel}");
    }

    #[test]
    fn gradient_is_independent_of_texel_values() {
        // Bilinear weights only: doubling the texture must not change grads.
        let mut tex = LaplacianTexture::init(8, 2, [0.2; 3]).unwrap();
        let mesh = synth::quad_mesh_at(2.0, 2.0);
        let intr = CameraIntrinsics {
            fx: 10.0,
            fy: 10.0,
            cx: 8.0,
            cy: 8.0,
            width: 16,
            height: 16,
        };
        let gb = rasterize_gbuffer(&mesh, &Matrix4::identity(), &intr, 16, ViewDirection::Ray);
        let upstream = Image::constant(16, 16, [1.0, -0.5, 0.25]);
        let mut g1 = TextureGrads::zeros_like(&tex);
        tex.sample_backward(&gb, &upstream, &mut g1);
        for level in &mut tex.levels {
            for v in level.iter_mut() {
                *v *= 2.0;
            }
        }
        let mut g2 = TextureGrads::zeros_like(&tex);
        tex.sample_backward(&gb, &upstream, &mut g2);
        assert_eq!(g1.levels, g2.levels);
    }

    #[test]
    fn pyramid_sampling_consistent_with_flat_texture_at_texel_centers() {
        // Build a pyramid whose composite equals a known flat texture, then
        // check sample() agrees with single-level sampling of that flat
        // texture at texel-center uvs.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut pyr = LaplacianTexture::init(8, 3, [0.0; 3]).unwrap();
        for level in &mut pyr.levels {
            for v in level.iter_mut() {
                *v = rng.gen_range(0.0..0.25);
            }
        }
        let flat_img = pyr.composite();
        let mut flat = LaplacianTexture::init(8, 1, [0.0; 3]).unwrap();
        flat.levels[0].copy_from_slice(&flat_img.data);
        for y in 0..8 {
            for x in 0..8 {
                let u = (x as f64 + 0.5) / 8.0;
                let v = (y as f64 + 0.5) / 8.0;
                let a = pyr.sample_uv(u, v);
                let b = flat.sample_uv(u, v);
                for c in 0..3 {
                    assert!((a[c] - b[c]).abs() < 1e-5);
                }
            }
        }
    }

    #[test]
    fn reg_loss_examples() {
        // Zero details -> 0.
        let tex = LaplacianTexture::init(8, 2, [0.9; 3]).unwrap();
        assert_eq!(tex.reg_loss(), 0.0);

        // One texel set to 2 in all channels on a detail level with M
        // positions contributes 4*3/(3M) = 4/M.
        let mut tex = LaplacianTexture::init(8, 2, [0.0; 3]).unwrap();
        let s = tex.level_size(0);
        let m = (s * s) as f64;
        let i = (2 * s + 3) * 3;
        tex.levels[0][i] = 2.0;
        tex.levels[0][i + 1] = 2.0;
        tex.levels[0][i + 2] = 2.0;
        assert!((tex.reg_loss() - 4.0 / m).abs() < 1e-12);

        // Shrinking any detail texel towards zero decreases the loss.
        let before = tex.reg_loss();
        tex.levels[0][i] = 1.0;
        assert!(tex.reg_loss() < before);

        // Single-level texture has no detail levels at all.
        let tex = LaplacianTexture::init(8, 1, [0.7; 3]).unwrap();
        assert_eq!(tex.reg_loss(), 0.0);
    }

    #[test]
    fn reg_loss_nonnegative_zero_iff_details_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut tex = LaplacianTexture::init(8, 3, [0.5; 3]).unwrap();
        assert_eq!(tex.reg_loss(), 0.0);
        tex.levels[1][7] = rng.gen_range(0.1..1.0);
        assert!(tex.reg_loss() > 0.0);
    }

    #[test]
    fn container_roundtrip_preserves_texture() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut tex = LaplacianTexture::init(8, 2, [0.1; 3]).unwrap();
        for level in &mut tex.levels {
            for v in level.iter_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tex.bin");
        tex.to_container().write(&path).unwrap();
        let back = LaplacianTexture::from_container(&Container::read(&path).unwrap(), &path).unwrap();
        assert_eq!(tex, back);
    }

    #[test]
    fn export_writes_png_and_sidecar() {
        let tex = LaplacianTexture::init(8, 2, [0.25, 0.5, 0.75]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("texture.png");
        export_texture(&tex, &path, "deadbeef").unwrap();
        assert!(path.exists());
        let meta: TextureMeta =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("texture.json")).unwrap())
                .unwrap();
        assert_eq!(meta.resolution, 8);
        assert_eq!(meta.levels, 2);
        assert_eq!(meta.config_hash, "deadbeef");
        let img = Image::load_png16(&path).unwrap();
        assert!((img.get(3, 3)[0] - 0.25).abs() < 1e-4);
    }
}
