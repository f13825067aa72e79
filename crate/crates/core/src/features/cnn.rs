//! Convolution, activation and pooling primitives with hand-written
//! backward passes. Everything runs in f64; weights are frozen, so only
//! input gradients are implemented.

use rayon::prelude::*;

use crate::img::Image;

/// Channel-major feature map: data[c][y][x] flattened.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        FeatureMap {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    #[inline]
    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    /// Feature vector at one spatial position.
    pub fn vector_at(&self, y: usize, x: usize) -> Vec<f64> {
        let n = self.height * self.width;
        let off = y * self.width + x;
        (0..self.channels).map(|c| self.data[c * n + off]).collect()
    }

    pub fn from_image_normalized(img: &Image, mean: [f64; 3], std: [f64; 3]) -> Self {
        let mut out = FeatureMap::zeros(3, img.height, img.width);
        for c in 0..3 {
            let plane = out.plane_mut(c);
            for y in 0..img.height {
                for x in 0..img.width {
                    plane[y * img.width + x] = (img.get(y, x)[c] - mean[c]) / std[c];
                }
            }
        }
        out
    }

    /// Invert the input normalization on a gradient map (divide by std).
    pub fn to_image_grad(&self, std: [f64; 3]) -> Image {
        assert_eq!(self.channels, 3);
        let mut out = Image::new(self.height, self.width);
        for c in 0..3 {
            let plane = self.plane(c);
            for y in 0..self.height {
                for x in 0..self.width {
                    let i = (y * self.width + x) * 3 + c;
                    out.data[i] = plane[y * self.width + x] / std[c];
                }
            }
        }
        out
    }
}

/// 3x3 convolution weights, `same` padding.
#[derive(Clone, Debug)]
pub struct ConvParams {
    pub in_ch: usize,
    pub out_ch: usize,
    /// [oc][ic][ky][kx]
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvParams {
    #[inline]
    fn w(&self, oc: usize, ic: usize, ky: usize, kx: usize) -> f64 {
        self.weight[((oc * self.in_ch + ic) * 3 + ky) * 3 + kx]
    }
}

pub fn conv3x3_forward(input: &FeatureMap, p: &ConvParams) -> FeatureMap {
    assert_eq!(input.channels, p.in_ch);
    let (h, w) = (input.height, input.width);
    let mut out = FeatureMap::zeros(p.out_ch, h, w);
    let planes: Vec<&mut [f64]> = {
        // Split the output into per-channel slices for parallel fill.
        let n = h * w;
        let mut rest = out.data.as_mut_slice();
        let mut v = Vec::with_capacity(p.out_ch);
        for _ in 0..p.out_ch {
            let (head, tail) = rest.split_at_mut(n);
            v.push(head);
            rest = tail;
        }
        v
    };
    planes.into_par_iter().enumerate().for_each(|(oc, plane)| {
        plane.iter_mut().for_each(|v| *v = p.bias[oc]);
        for ic in 0..p.in_ch {
            let src = input.plane(ic);
            for ky in 0..3usize {
                for kx in 0..3usize {
                    let wv = p.w(oc, ic, ky, kx);
                    if wv == 0.0 {
                        continue;
                    }
                    let dy = ky as isize - 1;
                    let dx = kx as isize - 1;
                    for y in 0..h as isize {
                        let sy = y + dy;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let dst_row = &mut plane[(y as usize) * w..(y as usize + 1) * w];
                        let src_row = &src[(sy as usize) * w..(sy as usize + 1) * w];
                        // x + dx must stay in range: x in [max(0,-dx), w - max(0,dx)).
                        let x_lo = (-dx).max(0) as usize;
                        let x_hi = (w as isize - dx.max(0)) as usize;
                        for x in x_lo..x_hi {
                            dst_row[x] += wv * src_row[(x as isize + dx) as usize];
                        }
                    }
                }
            }
        }
    });
    out
}

/// Gradient of a 3x3 same-padded convolution with respect to its input.
pub fn conv3x3_backward_input(grad_out: &FeatureMap, p: &ConvParams) -> FeatureMap {
    assert_eq!(grad_out.channels, p.out_ch);
    let (h, w) = (grad_out.height, grad_out.width);
    let mut out = FeatureMap::zeros(p.in_ch, h, w);
    let planes: Vec<&mut [f64]> = {
        let n = h * w;
        let mut rest = out.data.as_mut_slice();
        let mut v = Vec::with_capacity(p.in_ch);
        for _ in 0..p.in_ch {
            let (head, tail) = rest.split_at_mut(n);
            v.push(head);
            rest = tail;
        }
        v
    };
    planes.into_par_iter().enumerate().for_each(|(ic, plane)| {
        for oc in 0..p.out_ch {
            let src = grad_out.plane(oc);
            for ky in 0..3usize {
                for kx in 0..3usize {
                    let wv = p.w(oc, ic, ky, kx);
                    if wv == 0.0 {
                        continue;
                    }
                    // Forward reads input at (y+ky-1, x+kx-1); its transpose
                    // scatters grad_out at (y, x) into input, i.e. input
                    // (iy, ix) accumulates grad_out (iy-ky+1, ix-kx+1) * w.
                    let dy = 1 - ky as isize;
                    let dx = 1 - kx as isize;
                    for y in 0..h as isize {
                        let sy = y + dy;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let dst_row = &mut plane[(y as usize) * w..(y as usize + 1) * w];
                        let src_row = &src[(sy as usize) * w..(sy as usize + 1) * w];
                        let x_lo = (-dx).max(0) as usize;
                        let x_hi = (w as isize - dx.max(0)) as usize;
                        for x in x_lo..x_hi {
                            dst_row[x] += wv * src_row[(x as isize + dx) as usize];
                        }
                    }
                }
            }
        }
    });
    out
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus_forward(input: &FeatureMap) -> FeatureMap {
    let mut out = input.clone();
    out.data.iter_mut().for_each(|v| *v = softplus(*v));
    out
}

pub fn softplus_backward(pre: &FeatureMap, grad_out: &FeatureMap) -> FeatureMap {
    let mut out = grad_out.clone();
    for (g, x) in out.data.iter_mut().zip(&pre.data) {
        *g *= sigmoid(*x);
    }
    out
}

pub fn relu_forward(input: &FeatureMap) -> FeatureMap {
    let mut out = input.clone();
    out.data.iter_mut().for_each(|v| *v = v.max(0.0));
    out
}

pub fn relu_backward(pre: &FeatureMap, grad_out: &FeatureMap) -> FeatureMap {
    let mut out = grad_out.clone();
    for (g, x) in out.data.iter_mut().zip(&pre.data) {
        if *x <= 0.0 {
            *g = 0.0;
        }
    }
    out
}

/// 2x2 stride-2 pooling output size (odd trailing row/column dropped).
pub fn pooled_dims(h: usize, w: usize) -> (usize, usize) {
    (h / 2, w / 2)
}

pub fn avgpool_forward(input: &FeatureMap) -> FeatureMap {
    let (oh, ow) = pooled_dims(input.height, input.width);
    let mut out = FeatureMap::zeros(input.channels, oh, ow);
    for c in 0..input.channels {
        let src = input.plane(c);
        let dst = out.plane_mut(c);
        for y in 0..oh {
            for x in 0..ow {
                let i = 2 * y * input.width + 2 * x;
                dst[y * ow + x] = 0.25
                    * (src[i] + src[i + 1] + src[i + input.width] + src[i + input.width + 1]);
            }
        }
    }
    out
}

pub fn avgpool_backward(grad_out: &FeatureMap, in_h: usize, in_w: usize) -> FeatureMap {
    let mut out = FeatureMap::zeros(grad_out.channels, in_h, in_w);
    for c in 0..grad_out.channels {
        let (oh, ow) = (grad_out.height, grad_out.width);
        let src = grad_out.plane(c);
        let dst = out.plane_mut(c);
        for y in 0..oh {
            for x in 0..ow {
                let g = 0.25 * src[y * ow + x];
                let i = 2 * y * in_w + 2 * x;
                dst[i] += g;
                dst[i + 1] += g;
                dst[i + in_w] += g;
                dst[i + in_w + 1] += g;
            }
        }
    }
    out
}

pub fn maxpool_forward(input: &FeatureMap) -> FeatureMap {
    let (oh, ow) = pooled_dims(input.height, input.width);
    let mut out = FeatureMap::zeros(input.channels, oh, ow);
    for c in 0..input.channels {
        let src = input.plane(c);
        let dst = out.plane_mut(c);
        for y in 0..oh {
            for x in 0..ow {
                let i = 2 * y * input.width + 2 * x;
                let m = src[i]
                    .max(src[i + 1])
                    .max(src[i + input.width])
                    .max(src[i + input.width + 1]);
                dst[y * ow + x] = m;
            }
        }
    }
    out
}

/// Routes the gradient to the first maximum in scan order (deterministic
/// tie break).
pub fn maxpool_backward(input: &FeatureMap, grad_out: &FeatureMap) -> FeatureMap {
    let mut out = FeatureMap::zeros(input.channels, input.height, input.width);
    let (oh, ow) = (grad_out.height, grad_out.width);
    for c in 0..input.channels {
        let src = input.plane(c);
        let g = grad_out.plane(c);
        let dst = out.plane_mut(c);
        for y in 0..oh {
            for x in 0..ow {
                let i = 2 * y * input.width + 2 * x;
                let idx = [i, i + 1, i + input.width, i + input.width + 1];
                let mut best = idx[0];
                for &j in &idx[1..] {
                    if src[j] > src[best] {
                        best = j;
                    }
                }
                dst[best] += g[y * ow + x];
            }
        }
    }
    out
}
