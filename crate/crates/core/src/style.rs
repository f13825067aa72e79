//! Depth-level render parts, angle filtering, style targets and the
//! weighted part-based multi-resolution content/style losses.
//!
//! Per pixel the optimal image height is R = theta_min * depth / theta_d.
//! R is mapped to the nearest pyramid layer (ties break toward the lower
//! resolution), the index map is smoothed with a 3x3 minimum filter, and
//! the resulting per-level membership masks split every loss into parts.

use crate::config::Config;
use crate::error::{Error, Result};
use crate::features::{
    downsample_mask, gram_sq_distance, masked_gram, masked_gram_backward, Encoding,
    FeatureExtractor, FeatureMap, GramMatrix, TapGrads, STYLE_TAP_COUNT,
};
use crate::img::{Image, Mask, Plane};
use crate::raster::{GBuffer, RenderPyramid};

/// Assignment maps for one pyramid level, at that level's resolution.
#[derive(Clone, Debug)]
pub struct LevelAssignment {
    pub height: usize,
    pub width: usize,
    /// Optimal image height per pixel (0 where uncovered).
    pub r: Plane,
    /// Nearest / second-nearest layer indices, -1 where uncovered.
    pub nearest: Vec<i32>,
    pub second: Vec<i32>,
    /// Blend weight toward the nearest layer, in [0,1].
    pub blend: Plane,
    /// Nearest indices after 3x3 min-erosion (-1 where uncovered).
    pub eroded: Vec<i32>,
    /// Membership of this level: eroded index equals this level's index.
    pub mask: Mask,
    pub covered: Mask,
}

/// Per-pixel depth-level assignment for every pyramid level.
#[derive(Clone, Debug)]
pub struct DepthLevelAssignment {
    pub levels: Vec<LevelAssignment>,
    pub heights: Vec<f64>,
}

/// 3x3 minimum filter over level indices; entries < 0 are uncovered and are
/// excluded from each window (and stay uncovered themselves).
pub fn erode_level_indices(indices: &[i32], height: usize, width: usize) -> Vec<i32> {
    let mut out = vec![-1i32; indices.len()];
    for y in 0..height {
        for x in 0..width {
            let c = indices[y * width + x];
            if c < 0 {
                continue;
            }
            let mut m = c;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let yy = y as i64 + dy;
                    let xx = x as i64 + dx;
                    if yy < 0 || yy >= height as i64 || xx < 0 || xx >= width as i64 {
                        continue;
                    }
                    let v = indices[yy as usize * width + xx as usize];
                    if v >= 0 && v < m {
                        m = v;
                    }
                }
            }
            out[y * width + x] = m;
        }
    }
    out
}

/// Nearest and second-nearest layer by |R - height| with ties broken toward
/// the lower resolution, plus the blend weight toward the nearest layer.
fn assign_pixel(r: f64, heights: &[f64]) -> (usize, usize, f64) {
    let mut nearest = 0usize;
    for (i, &h) in heights.iter().enumerate() {
        if (r - h).abs() < (r - heights[nearest]).abs() {
            nearest = i;
        }
    }
    let mut second = usize::MAX;
    for (i, &h) in heights.iter().enumerate() {
        if i == nearest {
            continue;
        }
        if second == usize::MAX || (r - h).abs() < (r - heights[second]).abs() {
            second = i;
        }
    }
    if second == usize::MAX {
        // Single-layer pyramid: everything blends fully into that layer.
        return (nearest, nearest, 1.0);
    }
    let r_clamped = r.clamp(heights[0], *heights.last().unwrap());
    let gap = (heights[nearest] - heights[second]).abs();
    let blend = (1.0 - (r_clamped - heights[nearest]).abs() / gap).clamp(0.0, 1.0);
    (nearest, second, blend)
}

/// Eq. R = theta_min * d / theta_d evaluated per covered pixel of every
/// pyramid level, mapped to layer indices and eroded. Covered pixels with
/// zero depth are treated as uncovered.
pub fn compute_depth_levels(pyramid: &RenderPyramid, config: &Config) -> DepthLevelAssignment {
    let heights: Vec<f64> = pyramid.heights.iter().map(|&h| h as f64).collect();
    let levels = pyramid
        .levels
        .iter()
        .enumerate()
        .map(|(li, gb)| {
            let (h, w) = (gb.height, gb.width);
            let mut r = Plane::new(h, w);
            let mut nearest = vec![-1i32; h * w];
            let mut second = vec![-1i32; h * w];
            let mut blend = Plane::new(h, w);
            let mut covered = Mask::new(h, w);
            for y in 0..h {
                for x in 0..w {
                    let i = y * w + x;
                    let d = gb.depth_at(y, x);
                    if !gb.covered(y, x) || d <= 0.0 {
                        continue;
                    }
                    covered.set(y, x, true);
                    let rv = config.theta_min * d / config.theta_d;
                    let (n, s, b) = assign_pixel(rv, &heights);
                    r.set(y, x, rv);
                    nearest[i] = n as i32;
                    second[i] = s as i32;
                    blend.set(y, x, b);
                }
            }
            let eroded = erode_level_indices(&nearest, h, w);
            let mut mask = Mask::new(h, w);
            for i in 0..h * w {
                if eroded[i] == li as i32 {
                    mask.data[i] = 1;
                }
            }
            LevelAssignment {
                height: h,
                width: w,
                r,
                nearest,
                second,
                blend,
                eroded,
                mask,
                covered,
            }
        })
        .collect();
    DepthLevelAssignment { levels, heights }
}

impl DepthLevelAssignment {
    /// Mean eroded level index over covered pixels of the highest-resolution
    /// level grid. Used to compare assignments across theta_d values.
    pub fn mean_assigned_level(&self) -> f64 {
        let finest = self.levels.last().expect("at least one level");
        let mut sum = 0.0;
        let mut n = 0usize;
        for &e in &finest.eroded {
            if e >= 0 {
                sum += e as f64;
                n += 1;
            }
        }
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }
}

/// mask = coverage AND cos_angle >= cos(theta_a).
pub fn angle_mask(gb: &GBuffer, theta_a_deg: f64) -> Mask {
    let cos_thr = theta_a_deg.to_radians().cos();
    let mut mask = Mask::new(gb.height, gb.width);
    for y in 0..gb.height {
        for x in 0..gb.width {
            if gb.covered(y, x) && gb.cos_at(y, x) >= cos_thr {
                mask.set(y, x, true);
            }
        }
    }
    mask
}

/// Style Gram targets from the coarse (high-resolution) and fine
/// (low-resolution) style images, computed once with full masks.
#[derive(Clone, Debug)]
pub struct StyleTargets {
    pub coarse: Vec<GramMatrix>,
    pub fine: Vec<GramMatrix>,
    pub fine_size: (usize, usize),
    pub coarse_size: (usize, usize),
    pub warning: Option<String>,
}

/// Halve the style image until the next halving would drop the smaller side
/// below `fine_min`; the coarse image is `coarse_up` halvings fewer, capped
/// at the original resolution.
pub fn fine_coarse_images(
    style: &Image,
    fine_min: usize,
    coarse_up: usize,
) -> (Image, Image, Option<String>) {
    if style.height.min(style.width) < fine_min {
        let warning = format!(
            "style image {}x{} is smaller than the fine target size {}; using it as-is",
            style.height, style.width, fine_min
        );
        return (style.clone(), style.clone(), Some(warning));
    }
    let mut chain = vec![style.clone()];
    while chain.last().unwrap().height.min(chain.last().unwrap().width) / 2 >= fine_min {
        chain.push(chain.last().unwrap().halve());
    }
    let fine_idx = chain.len() - 1;
    let coarse_idx = fine_idx.saturating_sub(coarse_up);
    (chain[fine_idx].clone(), chain[coarse_idx].clone(), None)
}

pub fn build_style_targets(
    style: &Image,
    extractor: &FeatureExtractor,
    config: &Config,
) -> Result<StyleTargets> {
    let (fine, coarse, warning) =
        fine_coarse_images(style, config.style_fine_min, config.style_coarse_up);
    let grams = |img: &Image| -> Result<Vec<GramMatrix>> {
        let enc = extractor.extract(img)?;
        Ok(enc
            .stack
            .style
            .iter()
            .map(|t| masked_gram(t, &Mask::ones(t.height, t.width)))
            .collect())
    };
    Ok(StyleTargets {
        coarse: grams(&coarse)?,
        fine: grams(&fine)?,
        fine_size: (fine.height, fine.width),
        coarse_size: (coarse.height, coarse.width),
        warning,
    })
}

/// Normalized per-level weights (Eq. w_l = v_l / t_l, renormalized to 1).
#[derive(Clone, Debug)]
pub struct LevelWeights {
    pub w_hat: Vec<f64>,
    pub skipped: Vec<bool>,
}

/// Weight each level by its visible fraction; levels whose membership mask
/// at the deepest style tap has fewer than `tiny_floor` positions are
/// skipped and the rest renormalized. Errors when every level is empty.
pub fn level_weights(
    assignment: &DepthLevelAssignment,
    tiny_floor: usize,
) -> Result<LevelWeights> {
    let n = assignment.levels.len();
    let mut w = vec![0.0f64; n];
    let mut skipped = vec![false; n];
    for (l, level) in assignment.levels.iter().enumerate() {
        let t = (level.height * level.width) as f64;
        let v = level.mask.count() as f64;
        w[l] = v / t;
        let th = (level.height / crate::features::DEEPEST_TAP_STRIDE).max(1);
        let tw = (level.width / crate::features::DEEPEST_TAP_STRIDE).max(1);
        let deep = downsample_mask(&level.mask, th, tw);
        if deep.count() < tiny_floor {
            skipped[l] = true;
            w[l] = 0.0;
        }
    }
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(Error::Validation(
            "every depth level is empty for this pose (no visible geometry)".into(),
        ));
    }
    Ok(LevelWeights {
        w_hat: w.iter().map(|x| x / total).collect(),
        skipped,
    })
}

/// Per-tap masks for one level: coarse uses the membership mask, fine
/// additionally intersects the angle mask (intersection happens at level
/// resolution, then majority-downsampling to each tap).
fn tap_masks(
    level: &LevelAssignment,
    angle: &Mask,
    extractor: &FeatureExtractor,
) -> (Vec<Mask>, Vec<Mask>) {
    let fine_px = level.mask.intersect(angle);
    let mut coarse = Vec::with_capacity(STYLE_TAP_COUNT);
    let mut fine = Vec::with_capacity(STYLE_TAP_COUNT);
    for k in 0..STYLE_TAP_COUNT {
        let (th, tw) = extractor.style_tap_dims(level.height, level.width, k);
        coarse.push(downsample_mask(&level.mask, th.max(1), tw.max(1)));
        fine.push(downsample_mask(&fine_px, th.max(1), tw.max(1)));
    }
    (coarse, fine)
}

/// Content-tap features of the content frame resized to each level's
/// resolution. Computed once per frame and reused across repeats.
pub fn content_targets(
    frame_rgb: &Image,
    level_dims: &[(usize, usize)],
    extractor: &FeatureExtractor,
) -> Result<Vec<FeatureMap>> {
    level_dims
        .iter()
        .map(|&(h, w)| {
            let resized = frame_rgb.resize_bilinear(h, w);
            Ok(extractor.extract(&resized)?.stack.content)
        })
        .collect()
}

/// Everything the optimizer needs from one pose: loss values and the
/// gradient of (lambda_c * content + lambda_s * style) per level image.
pub struct PoseEval {
    pub content: f64,
    pub style: f64,
    pub image_grads: Vec<Image>,
}

struct LevelTerms {
    content: f64,
    style: f64,
    tap_grads: TapGrads,
}

/// Loss terms and tap gradients for a single level's encoding.
fn level_terms(
    enc: &Encoding,
    level: &LevelAssignment,
    angle: &Mask,
    targets: &StyleTargets,
    content_target: &FeatureMap,
    w_hat: f64,
    extractor: &FeatureExtractor,
    lambda_content: f64,
    lambda_style: f64,
    with_grads: bool,
) -> LevelTerms {
    let (coarse_masks, fine_masks) = tap_masks(level, angle, extractor);
    let mut style_val = 0.0;
    let mut tap_grads = TapGrads::default();
    for k in 0..STYLE_TAP_COUNT {
        let tap = &enc.stack.style[k];
        let g_c = masked_gram(tap, &coarse_masks[k]);
        let g_f = masked_gram(tap, &fine_masks[k]);
        style_val += gram_sq_distance(&targets.coarse[k], &g_c);
        style_val += gram_sq_distance(&targets.fine[k], &g_f);
        if with_grads {
            // d/dG ||T - G||^2 = 2 (G - T); weight by w_hat and lambda_s.
            let scale = 2.0 * w_hat * lambda_style;
            let mut up_c = GramMatrix::zeros(g_c.channels);
            up_c.pixel_count = g_c.pixel_count;
            for i in 0..up_c.data.len() {
                up_c.data[i] = scale * (g_c.data[i] - targets.coarse[k].data[i]);
            }
            let mut up_f = GramMatrix::zeros(g_f.channels);
            up_f.pixel_count = g_f.pixel_count;
            for i in 0..up_f.data.len() {
                up_f.data[i] = scale * (g_f.data[i] - targets.fine[k].data[i]);
            }
            let mut grad = masked_gram_backward(tap, &coarse_masks[k], &up_c);
            let grad_f = masked_gram_backward(tap, &fine_masks[k], &up_f);
            for (a, b) in grad.data.iter_mut().zip(&grad_f.data) {
                *a += b;
            }
            tap_grads.style[k] = Some(grad);
        }
    }

    // Content: masked feature MSE at the content tap.
    let tap = &enc.stack.content;
    let (ch, cw) = (tap.height, tap.width);
    let cmask = downsample_mask(&level.mask, ch.max(1), cw.max(1));
    let m = cmask.count();
    let mut content_val = 0.0;
    if m > 0 {
        let norm = 1.0 / m as f64;
        let mut grad = if with_grads {
            Some(FeatureMap::zeros(tap.channels, ch, cw))
        } else {
            None
        };
        for c in 0..tap.channels {
            let a = tap.plane(c);
            let b = content_target.plane(c);
            for (i, &mk) in cmask.data.iter().enumerate() {
                if mk == 0 {
                    continue;
                }
                let d = a[i] - b[i];
                content_val += d * d * norm;
                if let Some(g) = &mut grad {
                    g.plane_mut(c)[i] = 2.0 * norm * d * w_hat * lambda_content;
                }
            }
        }
        tap_grads.content = grad;
    }

    LevelTerms {
        content: content_val,
        style: style_val,
        tap_grads,
    }
}

/// Part-based multi-resolution style loss over the sampled level images.
pub fn style_loss(
    level_images: &[Image],
    assignment: &DepthLevelAssignment,
    angle_masks: &[Mask],
    targets: &StyleTargets,
    weights: &LevelWeights,
    extractor: &FeatureExtractor,
) -> Result<f64> {
    let mut total = 0.0;
    for (l, img) in level_images.iter().enumerate() {
        let w = weights.w_hat[l];
        if w == 0.0 {
            continue;
        }
        let enc = extractor.extract(img)?;
        let (coarse_masks, fine_masks) = tap_masks(&assignment.levels[l], &angle_masks[l], extractor);
        let mut lvl = 0.0;
        for k in 0..STYLE_TAP_COUNT {
            let tap = &enc.stack.style[k];
            lvl += gram_sq_distance(&targets.coarse[k], &masked_gram(tap, &coarse_masks[k]));
            lvl += gram_sq_distance(&targets.fine[k], &masked_gram(tap, &fine_masks[k]));
        }
        total += w * lvl;
    }
    Ok(total)
}

/// Part-based content loss: masked feature MSE at the content tap, with the
/// frame resized to each level's resolution.
pub fn content_loss(
    level_images: &[Image],
    content_frame: &Image,
    assignment: &DepthLevelAssignment,
    weights: &LevelWeights,
    extractor: &FeatureExtractor,
) -> Result<f64> {
    let dims: Vec<(usize, usize)> = level_images.iter().map(|i| (i.height, i.width)).collect();
    let ctargets = content_targets(content_frame, &dims, extractor)?;
    let mut total = 0.0;
    for (l, img) in level_images.iter().enumerate() {
        let w = weights.w_hat[l];
        if w == 0.0 {
            continue;
        }
        let enc = extractor.extract(img)?;
        let tap = &enc.stack.content;
        let cmask = downsample_mask(
            &assignment.levels[l].mask,
            tap.height.max(1),
            tap.width.max(1),
        );
        let m = cmask.count();
        if m == 0 {
            continue;
        }
        let norm = 1.0 / m as f64;
        let mut lvl = 0.0;
        for c in 0..tap.channels {
            let a = tap.plane(c);
            let b = ctargets[l].plane(c);
            for (i, &mk) in cmask.data.iter().enumerate() {
                if mk != 0 {
                    let d = a[i] - b[i];
                    lvl += d * d;
                }
            }
        }
        total += w * lvl * norm;
    }
    Ok(total)
}

/// Fused loss + gradient evaluation for one pose. `content_taps` are the
/// precomputed per-level content-tap features of the frame.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_pose(
    level_images: &[Image],
    content_taps: &[FeatureMap],
    assignment: &DepthLevelAssignment,
    angle_masks: &[Mask],
    targets: &StyleTargets,
    weights: &LevelWeights,
    extractor: &FeatureExtractor,
    lambda_content: f64,
    lambda_style: f64,
) -> Result<PoseEval> {
    let mut content = 0.0;
    let mut style = 0.0;
    let mut image_grads = Vec::with_capacity(level_images.len());
    for (l, img) in level_images.iter().enumerate() {
        let w = weights.w_hat[l];
        if w == 0.0 {
            image_grads.push(Image::new(img.height, img.width));
            continue;
        }
        let enc = extractor.extract(img)?;
        let terms = level_terms(
            &enc,
            &assignment.levels[l],
            &angle_masks[l],
            targets,
            &content_taps[l],
            w,
            extractor,
            lambda_content,
            lambda_style,
            true,
        );
        content += w * terms.content;
        style += w * terms.style;
        image_grads.push(extractor.backprop(&enc, &terms.tap_grads));
    }
    Ok(PoseEval {
        content,
        style,
        image_grads,
    })
}
