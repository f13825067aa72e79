//! Per-pixel gradient scaling by angle weight and trilinear depth-blend
//! weight before backpropagation to the texture.
//!
//! Each pixel's loss gradient is split into the contribution of its nearest
//! pyramid layer (g1) and its second-nearest layer (g2); the blended
//! gradient is g1 * w_d * w_a + g2 * (1 - w_d) * w_a, where w_d is the
//! weight toward the nearest layer and w_a = cos(angle).
//!
//! Printed as-is, the source formula w_d = |R - L1| / |L1 - L2| is zero
//! exactly where the nearest layer should dominate (R = L1) while the
//! blended gradient multiplies the nearest term by w_d. The default here is
//! the continuous, nearest-dominant reading (w_d = 1 at R = L1); the
//! literal convention stays selectable through `blend_convention = "strict"`
//! for reproduction experiments.

use crate::config::BlendConvention;
use crate::img::{Image, Plane};
use crate::raster::GBuffer;
use crate::style::LevelAssignment;

/// w_a = cos(angle), zero outside coverage (identity on the stored cosine).
pub fn angle_weight(gb: &GBuffer) -> Plane {
    let mut w = Plane::new(gb.height, gb.width);
    for y in 0..gb.height {
        for x in 0..gb.width {
            if gb.covered(y, x) {
                w.set(y, x, gb.cos_at(y, x));
            }
        }
    }
    w
}

/// The per-pixel blend weight toward the nearest layer (1 when R equals the
/// nearest layer's height, clamped into the pyramid's height range).
pub fn depth_blend_weight(level: &LevelAssignment) -> Plane {
    level.blend.clone()
}

/// Per-pixel gradients split by which layer's loss term produced them.
#[derive(Clone, Debug)]
pub struct PixelGradientPair {
    pub g1: Image,
    pub g2: Image,
}

impl PixelGradientPair {
    /// Split one level's raw image gradient: pixels whose nearest layer is
    /// `level_idx` feed g1, pixels whose second-nearest layer is `level_idx`
    /// feed g2. Anything else (pixels moved into this level's part purely by
    /// erosion) contributes to neither term.
    pub fn split(raw: &Image, level: &LevelAssignment, level_idx: usize) -> Self {
        let mut g1 = Image::new(raw.height, raw.width);
        let mut g2 = Image::new(raw.height, raw.width);
        for y in 0..raw.height {
            for x in 0..raw.width {
                let i = y * raw.width + x;
                if level.nearest[i] == level_idx as i32 {
                    g1.set(y, x, raw.get(y, x));
                } else if level.second[i] == level_idx as i32 {
                    g2.set(y, x, raw.get(y, x));
                }
            }
        }
        PixelGradientPair { g1, g2 }
    }
}

/// Linear interpolation of the per-pixel gradients, scaled by the angle
/// weight. With the strict convention the two factors swap.
pub fn blend_gradients(
    pair: &PixelGradientPair,
    w_d: &Plane,
    w_a: &Plane,
    convention: BlendConvention,
) -> Image {
    let (h, w) = (pair.g1.height, pair.g1.width);
    assert_eq!((pair.g2.height, pair.g2.width), (h, w));
    assert_eq!((w_d.height, w_d.width), (h, w));
    assert_eq!((w_a.height, w_a.width), (h, w));
    let mut out = Image::new(h, w);
    for y in 0..h {
        for x in 0..w {
            let wd = match convention {
                BlendConvention::NearestDominant => w_d.get(y, x),
                BlendConvention::Strict => 1.0 - w_d.get(y, x),
            };
            let wa = w_a.get(y, x);
            let a = pair.g1.get(y, x);
            let b = pair.g2.get(y, x);
            out.set(
                y,
                x,
                [
                    (a[0] * wd + b[0] * (1.0 - wd)) * wa,
                    (a[1] * wd + b[1] * (1.0 - wd)) * wa,
                    (a[2] * wd + b[2] * (1.0 - wd)) * wa,
                ],
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn angle_weight_values() {
        // alpha = 0 -> 1.0, alpha = 60 -> 0.5, alpha = 90 -> 0.0; zero
        // outside coverage.
        let mut gb = GBuffer::new(1, 4);
        gb.coverage = vec![1, 1, 1, 0];
        gb.cos_angle = vec![1.0, 0.5, 0.0, 0.8];
        let w = angle_weight(&gb);
        assert_eq!(w.data, vec![1.0, 0.5, 0.0, 0.0]);
    }

    fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Image {
        let mut img = Image::new(h, w);
        for v in &mut img.data {
            *v = rng.gen_range(-1.0..1.0);
        }
        img
    }

    #[test]
    fn blend_degenerate_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g1 = random_image(&mut rng, 3, 4);
        let g2 = random_image(&mut rng, 3, 4);
        let pair = PixelGradientPair {
            g1: g1.clone(),
            g2: g2.clone(),
        };
        let wa = Plane::from_fn(3, 4, |y, x| 0.1 + 0.2 * (y + x) as f64 % 1.0);

        // w_d = 1 everywhere -> g1 * w_a.
        let out = blend_gradients(
            &pair,
            &Plane::constant(3, 4, 1.0),
            &wa,
            BlendConvention::NearestDominant,
        );
        for y in 0..3 {
            for x in 0..4 {
                for c in 0..3 {
                    assert!((out.get(y, x)[c] - g1.get(y, x)[c] * wa.get(y, x)).abs() < 1e-15);
                }
            }
        }

        // w_a = 0 everywhere -> zero gradient.
        let out = blend_gradients(
            &pair,
            &Plane::constant(3, 4, 0.3),
            &Plane::new(3, 4),
            BlendConvention::NearestDominant,
        );
        assert!(out.data.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn blend_matches_elementwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let g1 = random_image(&mut rng, 4, 5);
            let g2 = random_image(&mut rng, 4, 5);
            let wd = Plane::from_fn(4, 5, |_, _| rng.gen_range(0.0..1.0));
            let wa = Plane::from_fn(4, 5, |_, _| rng.gen_range(0.0..1.0));
            let pair = PixelGradientPair {
                g1: g1.clone(),
                g2: g2.clone(),
            };
            let out = blend_gradients(&pair, &wd, &wa, BlendConvention::NearestDominant);
            for y in 0..4 {
                for x in 0..5 {
                    for c in 0..3 {
                        let want = (g1.get(y, x)[c] * wd.get(y, x)
                            + g2.get(y, x)[c] * (1.0 - wd.get(y, x)))
                            * wa.get(y, x);
                        assert!((out.get(y, x)[c] - want).abs() < 1e-7);
                    }
                }
            }
            // Strict convention swaps the two factors.
            let strict = blend_gradients(&pair, &wd, &wa, BlendConvention::Strict);
            for y in 0..4 {
                for x in 0..5 {
                    for c in 0..3 {
                        let want = (g1.get(y, x)[c] * (1.0 - wd.get(y, x))
                            + g2.get(y, x)[c] * wd.get(y, x))
                            * wa.get(y, x);
                        assert!((strict.get(y, x)[c] - want).abs() < 1e-7);
                    }
                }
            }
        }
    }

    #[test]
    fn blended_norm_never_exceeds_max_input_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g1 = random_image(&mut rng, 4, 4);
        let g2 = random_image(&mut rng, 4, 4);
        let wd = Plane::from_fn(4, 4, |_, _| rng.gen_range(0.0..1.0));
        let wa = Plane::from_fn(4, 4, |_, _| rng.gen_range(0.0..1.0));
        let pair = PixelGradientPair {
            g1: g1.clone(),
            g2: g2.clone(),
        };
        let out = blend_gradients(&pair, &wd, &wa, BlendConvention::NearestDominant);
        let norm = |p: [f64; 3]| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        for y in 0..4 {
            for x in 0..4 {
                let bound = norm(g1.get(y, x)).max(norm(g2.get(y, x)));
                assert!(norm(out.get(y, x)) <= bound + 1e-12);
            }
        }
        // The convex weights always sum to one: w_d + (1 - w_d) = 1.
        for y in 0..4 {
            for x in 0..4 {
                let wd_v = wd.get(y, x);
                assert!((wd_v + (1.0 - wd_v) - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn blend_is_continuous_across_the_midpoint() {
        // As R crosses the midpoint between two layers the nearest/second
        // roles swap but the blended gradient varies continuously: at the
        // midpoint both orderings give the same 0.5/0.5 mix.
        let g_near = Image::constant(1, 1, [1.0, 0.0, 0.0]);
        let g_far = Image::constant(1, 1, [0.0, 1.0, 0.0]);
        let wa = Plane::constant(1, 1, 1.0);
        // Just below the midpoint: nearest = layer A with blend .501
        let pair_a = PixelGradientPair {
            g1: g_near.clone(),
            g2: g_far.clone(),
        };
        let lo = blend_gradients(
            &pair_a,
            &Plane::constant(1, 1, 0.501),
            &wa,
            BlendConvention::NearestDominant,
        );
        // Just above: roles swap, blend toward the other layer .501
        let pair_b = PixelGradientPair {
            g1: g_far.clone(),
            g2: g_near.clone(),
        };
        let hi = blend_gradients(
            &pair_b,
            &Plane::constant(1, 1, 0.501),
            &wa,
            BlendConvention::NearestDominant,
        );
        for c in 0..3 {
            assert!((lo.get(0, 0)[c] - hi.get(0, 0)[c]).abs() < 3e-3);
        }
    }
}
