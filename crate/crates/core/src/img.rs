//! Image and plane buffers used throughout the pipeline.
//!
//! All color math happens on `f64` values in `[0, 1]` (only clamped at
//! export); single-channel maps use [`Plane`], binary maps use [`Mask`].

use std::path::Path;

use crate::error::{Error, Result};

/// RGB image, row-major, interleaved channels, values nominally in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize) -> Self {
        Image {
            height,
            width,
            data: vec![0.0; height * width * 3],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        let mut img = Image::new(height, width);
        for y in 0..height {
            for x in 0..width {
                img.set(y, x, f(y, x));
            }
        }
        img
    }

    pub fn constant(height: usize, width: usize, rgb: [f64; 3]) -> Self {
        Image::from_fn(height, width, |_, _| rgb)
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, rgb: [f64; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i] = rgb[0];
        self.data[i + 1] = rgb[1];
        self.data[i + 2] = rgb[2];
    }

    #[inline]
    pub fn add(&mut self, y: usize, x: usize, rgb: [f64; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i] += rgb[0];
        self.data[i + 1] += rgb[1];
        self.data[i + 2] += rgb[2];
    }

    /// Rec. 601 luminance.
    pub fn luminance(&self) -> Plane {
        let mut p = Plane::new(self.height, self.width);
        for y in 0..self.height {
            for x in 0..self.width {
                let [r, g, b] = self.get(y, x);
                p.set(y, x, 0.299 * r + 0.587 * g + 0.114 * b);
            }
        }
        p
    }

    /// Bilinear resize with half-pixel center alignment and edge clamping.
    pub fn resize_bilinear(&self, height: usize, width: usize) -> Image {
        if height == self.height && width == self.width {
            return self.clone();
        }
        let mut out = Image::new(height, width);
        for y in 0..height {
            let sy = (y as f64 + 0.5) * self.height as f64 / height as f64 - 0.5;
            for x in 0..width {
                let sx = (x as f64 + 0.5) * self.width as f64 / width as f64 - 0.5;
                out.set(y, x, sample_bilinear_rgb(self, sy, sx));
            }
        }
        out
    }

    /// Exact 2x downsample: each output pixel is the mean of a 2x2 block.
    /// Odd trailing rows/columns are folded in by edge clamping.
    pub fn halve(&self) -> Image {
        let h = (self.height + 1) / 2;
        let w = (self.width + 1) / 2;
        let mut out = Image::new(h, w);
        for y in 0..h {
            let y0 = 2 * y;
            let y1 = (2 * y + 1).min(self.height - 1);
            for x in 0..w {
                let x0 = 2 * x;
                let x1 = (2 * x + 1).min(self.width - 1);
                let mut acc = [0.0; 3];
                for (yy, xx) in [(y0, x0), (y0, x1), (y1, x0), (y1, x1)] {
                    let p = self.get(yy, xx);
                    acc[0] += p[0];
                    acc[1] += p[1];
                    acc[2] += p[2];
                }
                out.set(y, x, [acc[0] / 4.0, acc[1] / 4.0, acc[2] / 4.0]);
            }
        }
        out
    }

    pub fn load_png(path: &Path) -> Result<Image> {
        let img = image::open(path)
            .map_err(|e| Error::parse(path, format!("png decode: {e}")))?
            .to_rgb8();
        let (w, h) = img.dimensions();
        let mut out = Image::new(h as usize, w as usize);
        for (x, y, p) in img.enumerate_pixels() {
            out.set(
                y as usize,
                x as usize,
                [
                    p.0[0] as f64 / 255.0,
                    p.0[1] as f64 / 255.0,
                    p.0[2] as f64 / 255.0,
                ],
            );
        }
        Ok(out)
    }

    pub fn save_png8(&self, path: &Path) -> Result<()> {
        let mut buf = image::RgbImage::new(self.width as u32, self.height as u32);
        for y in 0..self.height {
            for x in 0..self.width {
                let p = self.get(y, x);
                buf.put_pixel(
                    x as u32,
                    y as u32,
                    image::Rgb([quantize(p[0], 255.0), quantize(p[1], 255.0), quantize(p[2], 255.0)]),
                );
            }
        }
        buf.save(path)
            .map_err(|e| Error::io(path, std::io::Error::other(e)))
    }

    pub fn save_png16(&self, path: &Path) -> Result<()> {
        let mut buf = image::ImageBuffer::<image::Rgb<u16>, Vec<u16>>::new(
            self.width as u32,
            self.height as u32,
        );
        for y in 0..self.height {
            for x in 0..self.width {
                let p = self.get(y, x);
                let q = |v: f64| (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
                buf.put_pixel(
                    x as u32,
                    y as u32,
                    image::Rgb([q(p[0]), q(p[1]), q(p[2])]),
                );
            }
        }
        buf.save(path)
            .map_err(|e| Error::io(path, std::io::Error::other(e)))
    }

    pub fn load_png16(path: &Path) -> Result<Image> {
        let img = image::open(path)
            .map_err(|e| Error::parse(path, format!("png decode: {e}")))?
            .to_rgb16();
        let (w, h) = img.dimensions();
        let mut out = Image::new(h as usize, w as usize);
        for (x, y, p) in img.enumerate_pixels() {
            out.set(
                y as usize,
                x as usize,
                [
                    p.0[0] as f64 / 65535.0,
                    p.0[1] as f64 / 65535.0,
                    p.0[2] as f64 / 65535.0,
                ],
            );
        }
        Ok(out)
    }
}

fn quantize(v: f64, scale: f64) -> u8 {
    (v.clamp(0.0, 1.0) * scale).round() as u8
}

/// Clamped bilinear lookup at continuous position (y, x) in pixel units.
pub fn sample_bilinear_rgb(img: &Image, y: f64, x: f64) -> [f64; 3] {
    let (y0, y1, wy) = split_coord(y, img.height);
    let (x0, x1, wx) = split_coord(x, img.width);
    let p00 = img.get(y0, x0);
    let p01 = img.get(y0, x1);
    let p10 = img.get(y1, x0);
    let p11 = img.get(y1, x1);
    let mut out = [0.0; 3];
    for c in 0..3 {
        let top = p00[c] * (1.0 - wx) + p01[c] * wx;
        let bot = p10[c] * (1.0 - wx) + p11[c] * wx;
        out[c] = top * (1.0 - wy) + bot * wy;
    }
    out
}

/// Decompose a continuous coordinate into (floor index, neighbor, fraction),
/// with both indices clamped into `[0, n-1]`.
#[inline]
pub fn split_coord(v: f64, n: usize) -> (usize, usize, f64) {
    let hi = n as isize - 1;
    let f = v.floor();
    let frac = v - f;
    let i0 = (f as isize).clamp(0, hi) as usize;
    let i1 = (f as isize + 1).clamp(0, hi) as usize;
    (i0, i1, frac)
}

/// Single-channel f64 map.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn new(height: usize, width: usize) -> Self {
        Plane {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut p = Plane::new(height, width);
        for y in 0..height {
            for x in 0..width {
                p.set(y, x, f(y, x));
            }
        }
        p
    }

    pub fn constant(height: usize, width: usize, v: f64) -> Self {
        Plane {
            height,
            width,
            data: vec![v; height * width],
        }
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }
}

/// Binary map (0/1).
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
}

impl Mask {
    pub fn new(height: usize, width: usize) -> Self {
        Mask {
            height,
            width,
            data: vec![0; height * width],
        }
    }

    pub fn ones(height: usize, width: usize) -> Self {
        Mask {
            height,
            width,
            data: vec![1; height * width],
        }
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x] != 0
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: bool) {
        self.data[y * self.width + x] = v as u8;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    /// Elementwise AND with another mask of the same shape.
    pub fn intersect(&self, other: &Mask) -> Mask {
        assert_eq!((self.height, self.width), (other.height, other.width));
        Mask {
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a & b)
                .collect(),
        }
    }
}

/// RGB ([0,1]) to HSV with H in [0,1).
pub fn rgb_to_hsv(rgb: [f64; 3]) -> [f64; 3] {
    let [r, g, b] = rgb;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let v = max;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h = if delta <= 0.0 {
        0.0
    } else if max == r {
        ((g - b) / delta).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / delta + 2.0) / 6.0
    } else {
        ((r - g) / delta + 4.0) / 6.0
    };
    [h, s, v]
}
