//! Pluggable pretrained feature extraction and masked Gram statistics.
//!
//! One sequential trunk serves both backends: a deterministic small CNN
//! seeded from the config (test backend, softplus activations so gradients
//! are smooth everywhere) and a VGG-style classifier loaded from a weight
//! file (production backend, relu + maxpool). Both expose the same taps:
//! five style taps at the first activation of each stage (strides 1, 2, 4,
//! 8, 16) and one content tap at the fourth stage's second activation
//! (stride 8).

pub mod cnn;
mod vgg;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use cnn::{ConvParams, FeatureMap};
pub use vgg::write_weight_file;

use crate::error::{Error, Result};
use crate::img::{Image, Mask};

pub const STYLE_TAP_COUNT: usize = 5;
/// Spatial stride of the deepest style tap relative to the input.
pub const DEEPEST_TAP_STRIDE: usize = 16;
/// Smallest accepted input side: the deepest tap must keep at least one
/// position.
pub const MIN_INPUT_SIDE: usize = 16;

#[derive(Clone, Copy, Debug)]
pub(crate) enum LayerOp {
    Conv(usize),
    Relu,
    Softplus,
    AvgPool,
    MaxPool,
    StyleTap(usize),
    ContentTap,
}

/// Activations at the six tap layers.
#[derive(Clone, Debug)]
pub struct FeatureStack {
    pub style: Vec<FeatureMap>,
    pub content: FeatureMap,
}

/// A forward pass with everything needed for the backward walk.
pub struct Encoding {
    pub stack: FeatureStack,
    /// Input to each op, in op order.
    inputs: Vec<FeatureMap>,
}

/// Upstream gradients arriving at the taps.
#[derive(Clone, Debug, Default)]
pub struct TapGrads {
    pub style: [Option<FeatureMap>; STYLE_TAP_COUNT],
    pub content: Option<FeatureMap>,
}

#[derive(Debug)]
pub struct FeatureExtractor {
    ops: Vec<LayerOp>,
    convs: Vec<ConvParams>,
    mean: [f64; 3],
    std: [f64; 3],
    name: String,
}

impl FeatureExtractor {
    /// Deterministic test backend. Weights derive from `seed` alone.
    pub fn test_backend(seed: u64) -> FeatureExtractor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x5eed));
        let channels = [16usize, 24, 32, 40, 48];
        let specs: [(usize, usize); 6] = [
            (3, channels[0]),
            (channels[0], channels[1]),
            (channels[1], channels[2]),
            (channels[2], channels[3]),
            (channels[3], channels[3]), // fourth stage, second activation
            (channels[3], channels[4]),
        ];
        let convs = specs
            .iter()
            .map(|&(ic, oc)| {
                let bound = (6.0 / (ic as f64 * 9.0)).sqrt();
                ConvParams {
                    in_ch: ic,
                    out_ch: oc,
                    weight: (0..oc * ic * 9)
                        .map(|_| rng.gen_range(-bound..bound))
                        .collect(),
                    bias: vec![0.0; oc],
                }
            })
            .collect();
        use LayerOp::*;
        let ops = vec![
            Conv(0),
            Softplus,
            StyleTap(0),
            AvgPool,
            Conv(1),
            Softplus,
            StyleTap(1),
            AvgPool,
            Conv(2),
            Softplus,
            StyleTap(2),
            AvgPool,
            Conv(3),
            Softplus,
            StyleTap(3),
            Conv(4),
            Softplus,
            ContentTap,
            AvgPool,
            Conv(5),
            Softplus,
            StyleTap(4),
        ];
        FeatureExtractor {
            ops,
            convs,
            mean: [0.5; 3],
            std: [0.5; 3],
            name: "test".to_string(),
        }
    }

    pub(crate) fn from_parts(
        ops: Vec<LayerOp>,
        convs: Vec<ConvParams>,
        mean: [f64; 3],
        std: [f64; 3],
        name: String,
    ) -> FeatureExtractor {
        FeatureExtractor {
            ops,
            convs,
            mean,
            std,
            name,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn min_input_side(&self) -> usize {
        MIN_INPUT_SIDE
    }

    /// Spatial dims of style tap `k` for an input of the given size.
    pub fn style_tap_dims(&self, h: usize, w: usize, k: usize) -> (usize, usize) {
        let s = 1usize << k;
        (h / s, w / s)
    }

    /// Spatial dims of the content tap (stride 8).
    pub fn content_tap_dims(&self, h: usize, w: usize) -> (usize, usize) {
        (h / 8, w / 8)
    }

    pub fn extract(&self, image: &Image) -> Result<Encoding> {
        if image.height.min(image.width) < MIN_INPUT_SIDE {
            return Err(Error::Features(format!(
                "input {}x{} is smaller than the receptive stride requirement ({}) \
                 of the deepest tap",
                image.height, image.width, MIN_INPUT_SIDE
            )));
        }
        let mut x = FeatureMap::from_image_normalized(image, self.mean, self.std);
        let mut inputs = Vec::with_capacity(self.ops.len());
        let mut style: Vec<Option<FeatureMap>> = vec![None; STYLE_TAP_COUNT];
        let mut content: Option<FeatureMap> = None;
        for op in &self.ops {
            inputs.push(x.clone());
            x = match *op {
                LayerOp::Conv(i) => cnn::conv3x3_forward(&x, &self.convs[i]),
                LayerOp::Relu => cnn::relu_forward(&x),
                LayerOp::Softplus => cnn::softplus_forward(&x),
                LayerOp::AvgPool => cnn::avgpool_forward(&x),
                LayerOp::MaxPool => cnn::maxpool_forward(&x),
                LayerOp::StyleTap(k) => {
                    style[k] = Some(x.clone());
                    x
                }
                LayerOp::ContentTap => {
                    content = Some(x.clone());
                    x
                }
            };
        }
        let style: Vec<FeatureMap> = style
            .into_iter()
            .map(|t| t.expect("all style taps present"))
            .collect();
        let content = content.expect("content tap present");
        Ok(Encoding {
            stack: FeatureStack { style, content },
            inputs,
        })
    }

    /// Backpropagate tap gradients to the input image (d loss / d pixel).
    pub fn backprop(&self, enc: &Encoding, grads: &TapGrads) -> Image {
        let mut g: Option<FeatureMap> = None;
        for (i, op) in self.ops.iter().enumerate().rev() {
            let input = &enc.inputs[i];
            g = Some(match *op {
                LayerOp::StyleTap(k) => {
                    let mut acc = g.unwrap_or_else(|| {
                        FeatureMap::zeros(input.channels, input.height, input.width)
                    });
                    if let Some(tg) = &grads.style[k] {
                        for (a, b) in acc.data.iter_mut().zip(&tg.data) {
                            *a += b;
                        }
                    }
                    acc
                }
                LayerOp::ContentTap => {
                    let mut acc = g.unwrap_or_else(|| {
                        FeatureMap::zeros(input.channels, input.height, input.width)
                    });
                    if let Some(tg) = &grads.content {
                        for (a, b) in acc.data.iter_mut().zip(&tg.data) {
                            *a += b;
                        }
                    }
                    acc
                }
                LayerOp::Conv(ci) => {
                    cnn::conv3x3_backward_input(&g.expect("gradient flows"), &self.convs[ci])
                }
                LayerOp::Relu => cnn::relu_backward(input, &g.expect("gradient flows")),
                LayerOp::Softplus => cnn::softplus_backward(input, &g.expect("gradient flows")),
                LayerOp::AvgPool => {
                    cnn::avgpool_backward(&g.expect("gradient flows"), input.height, input.width)
                }
                LayerOp::MaxPool => cnn::maxpool_backward(input, &g.expect("gradient flows")),
            });
        }
        g.expect("network has ops").to_image_grad(self.std)
    }
}

/// C x C channel Gram matrix accumulated over masked positions and divided
/// by the masked-position count (zero matrix when the mask is empty).
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix {
    pub channels: usize,
    pub data: Vec<f64>,
    pub pixel_count: usize,
}

impl GramMatrix {
    pub fn zeros(channels: usize) -> Self {
        GramMatrix {
            channels,
            data: vec![0.0; channels * channels],
            pixel_count: 0,
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.channels + j]
    }
}

fn masked_offsets(mask: &Mask) -> Vec<usize> {
    let mut offs = Vec::new();
    for (i, &m) in mask.data.iter().enumerate() {
        if m != 0 {
            offs.push(i);
        }
    }
    offs
}

/// G = (1/max(1,m)) sum over masked positions of f f^T.
pub fn masked_gram(f: &FeatureMap, mask: &Mask) -> GramMatrix {
    assert_eq!(
        (f.height, f.width),
        (mask.height, mask.width),
        "mask must be at feature-map resolution"
    );
    let offs = masked_offsets(mask);
    let m = offs.len();
    let c = f.channels;
    let mut g = GramMatrix::zeros(c);
    g.pixel_count = m;
    if m == 0 {
        return g;
    }
    let norm = 1.0 / m as f64;
    for i in 0..c {
        let pi = f.plane(i);
        for j in i..c {
            let pj = f.plane(j);
            let mut acc = 0.0;
            for &o in &offs {
                acc += pi[o] * pj[o];
            }
            acc *= norm;
            g.data[i * c + j] = acc;
            g.data[j * c + i] = acc;
        }
    }
    g
}

/// Gradient of a masked Gram matrix with respect to the features:
/// d/df_i(p) = mask(p)/m * sum_j (U_ij + U_ji) f_j(p).
pub fn masked_gram_backward(f: &FeatureMap, mask: &Mask, upstream: &GramMatrix) -> FeatureMap {
    assert_eq!(f.channels, upstream.channels);
    let offs = masked_offsets(mask);
    let mut out = FeatureMap::zeros(f.channels, f.height, f.width);
    let m = offs.len();
    if m == 0 {
        return out;
    }
    let norm = 1.0 / m as f64;
    let c = f.channels;
    for i in 0..c {
        for j in 0..c {
            let u = (upstream.get(i, j) + upstream.get(j, i)) * norm;
            if u == 0.0 {
                continue;
            }
            let pj: Vec<f64> = offs.iter().map(|&o| f.plane(j)[o]).collect();
            let pi = out.plane_mut(i);
            for (k, &o) in offs.iter().enumerate() {
                pi[o] += u * pj[k];
            }
        }
    }
    out
}

/// Squared Frobenius distance between two Gram matrices.
pub fn gram_sq_distance(a: &GramMatrix, b: &GramMatrix) -> f64 {
    assert_eq!(a.channels, b.channels);
    a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

/// Block-majority downsampling of a binary map; ties count as 1. Block
/// bounds are proportional, so non-integral ratios are handled.
pub fn downsample_mask(mask: &Mask, th: usize, tw: usize) -> Mask {
    assert!(th <= mask.height && tw <= mask.width && th > 0 && tw > 0);
    let mut out = Mask::new(th, tw);
    for ty in 0..th {
        let y0 = ty * mask.height / th;
        let y1 = ((ty + 1) * mask.height / th).max(y0 + 1);
        for tx in 0..tw {
            let x0 = tx * mask.width / tw;
            let x1 = ((tx + 1) * mask.width / tw).max(x0 + 1);
            let mut ones = 0usize;
            let mut total = 0usize;
            for y in y0..y1 {
                for x in x0..x1 {
                    total += 1;
                    ones += mask.get(y, x) as usize;
                }
            }
            out.set(ty, tx, 2 * ones >= total);
        }
    }
    out
}

/// Production backend loader; see `vgg` module docs for the file format.
pub fn load_backend(config: &crate::config::Config) -> Result<FeatureExtractor> {
    match config.backend {
        crate::config::FeatureBackend::Test => Ok(FeatureExtractor::test_backend(config.seed)),
        crate::config::FeatureBackend::Vgg16 => {
            vgg::load_vgg(std::path::Path::new(&config.weights_path), false)
        }
        crate::config::FeatureBackend::Vgg19 => {
            vgg::load_vgg(std::path::Path::new(&config.weights_path), true)
        }
    }
}
