//! Red-ellipse segmentation: HSV gating, binarization, patch-similarity
//! denoising, contour extraction, convexity filtering and direct
//! least-squares ellipse fitting.
//!
//! Keep ranges (HSV, all in [0,1]): 0.6 <= S <= 1.0, 0.6 <= V <= 1.0 and
//! H <= 0.08 or H >= 0.88. The filtered image is binarized at intensity
//! 0.15, denoised with a patch-similarity filter (patch 3x3, search window
//! 7x7, h = 0.4, re-thresholded at 0.5), contours whose maximum convexity
//! defect exceeds 2 px are dropped, and the remaining contours are fitted
//! with a direct least-squares conic constrained to ellipses. Records with
//! r_p < 10, r_p > 1000 or s_p > 10 are removed.

use serde::{Deserialize, Serialize};

use nalgebra::Matrix3;

use crate::img::{rgb_to_hsv, Image, Mask, Plane};

pub const BINARIZE_INTENSITY: f64 = 0.15;
pub const MAX_CONVEXITY_DEFECT: f64 = 2.0;
pub const MIN_PIXEL_RADIUS: f64 = 10.0;
pub const MAX_PIXEL_RADIUS: f64 = 1000.0;
pub const MAX_PIXEL_STRETCH: f64 = 10.0;
const MIN_CONTOUR_POINTS: usize = 6;
const DENOISE_PATCH: i64 = 1; // 3x3 patch
const DENOISE_SEARCH: i64 = 3; // 7x7 window
const DENOISE_H: f64 = 0.4;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WorldEllipse {
    pub h_w: f64,
    pub v_w: f64,
    pub r_w: f64,
    pub s_w: f64,
    pub center_depth: f64,
}

/// A detected ellipse. `center` is in continuous pixel coordinates
/// (x, y with pixel centers at half-integers); the world fields are filled
/// by `lift_ellipses`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EllipseRecord {
    pub center: [f64; 2],
    /// Horizontal / vertical pixel radii (center to edge along the axes).
    pub h_p: f64,
    pub v_p: f64,
    /// r_p = (h_p + v_p) / 2.
    pub r_p: f64,
    /// s_p = max(h_p/v_p, v_p/h_p).
    pub s_p: f64,
    pub world: Option<WorldEllipse>,
}

fn hsv_keep_mask(image: &Image) -> Mask {
    let mut mask = Mask::new(image.height, image.width);
    for y in 0..image.height {
        for x in 0..image.width {
            let [h, s, v] = rgb_to_hsv(image.get(y, x));
            let hue_ok = h <= 0.08 || h >= 0.88;
            if hue_ok && (0.6..=1.0).contains(&s) && (0.6..=1.0).contains(&v) {
                mask.set(y, x, true);
            }
        }
    }
    mask
}

/// Patch-similarity denoiser on a binary map (values 0/1), followed by
/// re-thresholding at 0.5. Removes isolated speckles while keeping solid
/// regions intact.
fn denoise_binary(mask: &Mask) -> Mask {
    let (h, w) = (mask.height as i64, mask.width as i64);
    let val = |y: i64, x: i64| -> f64 {
        let yy = y.clamp(0, h - 1) as usize;
        let xx = x.clamp(0, w - 1) as usize;
        mask.get(yy, xx) as u8 as f64
    };
    let patch_dist2 = |ay: i64, ax: i64, by: i64, bx: i64| -> f64 {
        let mut acc = 0.0;
        let mut n = 0.0;
        for dy in -DENOISE_PATCH..=DENOISE_PATCH {
            for dx in -DENOISE_PATCH..=DENOISE_PATCH {
                let d = val(ay + dy, ax + dx) - val(by + dy, bx + dx);
                acc += d * d;
                n += 1.0;
            }
        }
        acc / n
    };
    let mut out = Mask::new(mask.height, mask.width);
    let inv_h2 = 1.0 / (DENOISE_H * DENOISE_H);
    for y in 0..h {
        for x in 0..w {
            let mut num = 0.0;
            let mut den = 0.0;
            for dy in -DENOISE_SEARCH..=DENOISE_SEARCH {
                for dx in -DENOISE_SEARCH..=DENOISE_SEARCH {
                    let wgt = (-patch_dist2(y, x, y + dy, x + dx) * inv_h2).exp();
                    num += wgt * val(y + dy, x + dx);
                    den += wgt;
                }
            }
            out.set(y as usize, x as usize, num / den >= 0.5);
        }
    }
    out
}

/// 8-connected component labeling; returns per-component pixel lists.
fn components(mask: &Mask) -> Vec<Vec<(usize, usize)>> {
    let (h, w) = (mask.height, mask.width);
    let mut seen = vec![false; h * w];
    let mut comps = Vec::new();
    for sy in 0..h {
        for sx in 0..w {
            if !mask.get(sy, sx) || seen[sy * w + sx] {
                continue;
            }
            let mut comp = Vec::new();
            let mut stack = vec![(sy, sx)];
            seen[sy * w + sx] = true;
            while let Some((y, x)) = stack.pop() {
                comp.push((y, x));
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let ny = y as i64 + dy;
                        let nx = x as i64 + dx;
                        if ny < 0 || ny >= h as i64 || nx < 0 || nx >= w as i64 {
                            continue;
                        }
                        let (ny, nx) = (ny as usize, nx as usize);
                        if mask.get(ny, nx) && !seen[ny * w + nx] {
                            seen[ny * w + nx] = true;
                            stack.push((ny, nx));
                        }
                    }
                }
            }
            comps.push(comp);
        }
    }
    comps
}

/// Boundary pixels of a component (any 4-neighbor outside the mask),
/// returned as continuous pixel-center coordinates (x, y).
fn boundary_points(comp: &[(usize, usize)], mask: &Mask) -> Vec<[f64; 2]> {
    let (h, w) = (mask.height as i64, mask.width as i64);
    let mut pts = Vec::new();
    for &(y, x) in comp {
        let mut edge = false;
        for (dy, dx) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
            let ny = y as i64 + dy;
            let nx = x as i64 + dx;
            if ny < 0 || ny >= h || nx < 0 || nx >= w || !mask.get(ny as usize, nx as usize) {
                edge = true;
                break;
            }
        }
        if edge {
            pts.push([x as f64 + 0.5, y as f64 + 0.5]);
        }
    }
    pts
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Andrew monotone-chain convex hull.
fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    if len2 == 0.0 {
        return (ap[0] * ap[0] + ap[1] * ap[1]).sqrt();
    }
    let t = ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0);
    let d = [p[0] - a[0] - t * ab[0], p[1] - a[1] - t * ab[1]];
    (d[0] * d[0] + d[1] * d[1]).sqrt()
}

/// Maximum distance of any contour point from the convex hull boundary
/// (depth of the deepest concavity).
fn max_convexity_defect(points: &[[f64; 2]], hull: &[[f64; 2]]) -> f64 {
    if hull.len() < 3 {
        return 0.0;
    }
    let mut max_d = 0.0f64;
    for &p in points {
        let mut min_edge = f64::INFINITY;
        for i in 0..hull.len() {
            let a = hull[i];
            let b = hull[(i + 1) % hull.len()];
            min_edge = min_edge.min(point_segment_distance(p, a, b));
        }
        max_d = max_d.max(min_edge);
    }
    max_d
}

/// Real roots of x^3 + a x^2 + b x + c = 0.
fn cubic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    // Depressed cubic t^3 + p t + q with x = t - a/3.
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    let shift = -a / 3.0;
    let disc = (q / 2.0) * (q / 2.0) + (p / 3.0) * (p / 3.0) * (p / 3.0);
    let mut roots = Vec::new();
    if disc > 1e-18 {
        let s = disc.sqrt();
        let u = (-q / 2.0 + s).cbrt();
        let v = (-q / 2.0 - s).cbrt();
        roots.push(u + v + shift);
    } else if p.abs() < 1e-18 {
        roots.push(shift + (-q).cbrt());
    } else {
        let r = (-p / 3.0).sqrt();
        let phi = (3.0 * q / (2.0 * p * r)).clamp(-1.0, 1.0).acos();
        for k in 0..3 {
            roots.push(2.0 * r * ((phi - 2.0 * std::f64::consts::PI * k as f64) / 3.0).cos() + shift);
        }
    }
    roots
}

/// Null-space direction of a (near-)singular 3x3 matrix via the largest
/// cross product of its rows.
fn null_direction(m: &Matrix3<f64>) -> Option<[f64; 3]> {
    let rows = [
        [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
        [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
        [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
    ];
    let cr = |a: [f64; 3], b: [f64; 3]| {
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    };
    let candidates = [cr(rows[0], rows[1]), cr(rows[1], rows[2]), cr(rows[0], rows[2])];
    let mut best: Option<[f64; 3]> = None;
    let mut best_norm = 0.0;
    for c in candidates {
        let n = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
        if n > best_norm {
            best_norm = n;
            best = Some([c[0] / n, c[1] / n, c[2] / n]);
        }
    }
    if best_norm < 1e-12 {
        None
    } else {
        best
    }
}

/// Direct least-squares conic fit constrained to ellipses (stable
/// formulation). Returns (center_x, center_y, h_p, v_p) in the input
/// coordinate frame, or None for degenerate inputs.
fn fit_ellipse(points: &[[f64; 2]]) -> Option<(f64, f64, f64, f64)> {
    if points.len() < MIN_CONTOUR_POINTS {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let my = points.iter().map(|p| p[1]).sum::<f64>() / n;

    // Scatter matrices of the centered design [x^2, xy, y^2 | x, y, 1].
    let mut s1 = Matrix3::<f64>::zeros();
    let mut s2 = Matrix3::<f64>::zeros();
    let mut s3 = Matrix3::<f64>::zeros();
    for p in points {
        let x = p[0] - mx;
        let y = p[1] - my;
        let d1 = [x * x, x * y, y * y];
        let d2 = [x, y, 1.0];
        for i in 0..3 {
            for j in 0..3 {
                s1[(i, j)] += d1[i] * d1[j];
                s2[(i, j)] += d1[i] * d2[j];
                s3[(i, j)] += d2[i] * d2[j];
            }
        }
    }
    let s3_inv = s3.try_inverse()?;
    let t = -s3_inv * s2.transpose();
    let m_full = s1 + s2 * t;
    // Reduced matrix: inv(C1) * M with C1 = [[0,0,2],[0,-1,0],[2,0,0]].
    let mut m = Matrix3::<f64>::zeros();
    for j in 0..3 {
        m[(0, j)] = m_full[(2, j)] / 2.0;
        m[(1, j)] = -m_full[(1, j)];
        m[(2, j)] = m_full[(0, j)] / 2.0;
    }
    // Characteristic polynomial coefficients of m.
    let tr = m.trace();
    let minors = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]
        + m[(0, 0)] * m[(2, 2)]
        - m[(0, 2)] * m[(2, 0)]
        + m[(1, 1)] * m[(2, 2)]
        - m[(1, 2)] * m[(2, 1)];
    let det = m.determinant();
    let mut best: Option<[f64; 3]> = None;
    for lambda in cubic_roots(-tr, minors, -det) {
        let shifted = m - Matrix3::identity() * lambda;
        if let Some(v) = null_direction(&shifted) {
            let (a, b, c) = (v[0], v[1], v[2]);
            if 4.0 * a * c - b * b > 0.0 {
                best = Some(v);
                break;
            }
        }
    }
    let a1 = best?;
    let a2 = t * nalgebra::Vector3::new(a1[0], a1[1], a1[2]);
    let (a, b, c) = (a1[0], a1[1], a1[2]);
    let (d, e, f) = (a2[0], a2[1], a2[2]);

    // Center of the conic in centered coordinates.
    let den = 4.0 * a * c - b * b;
    let cx = (b * e - 2.0 * c * d) / den;
    let cy = (b * d - 2.0 * a * e) / den;
    // Conic value at the center gives the scale term g:
    // a u^2 + b uv + c v^2 = g over centered offsets (u, v).
    let g = -(a * cx * cx + b * cx * cy + c * cy * cy + d * cx + e * cy + f);
    if g / a <= 0.0 || g / c <= 0.0 {
        return None;
    }
    // Radii along the image axes: v = 0 gives u = sqrt(g/a), and vice versa.
    let h_p = (g / a).sqrt();
    let v_p = (g / c).sqrt();
    Some((cx + mx, cy + my, h_p, v_p))
}

/// Full segmentation pipeline; returns pixel-space records only.
pub fn segment_ellipses(image: &Image) -> Vec<EllipseRecord> {
    let keep = hsv_keep_mask(image);
    // Binarize the filtered image at the intensity threshold.
    let mut binary = Mask::new(image.height, image.width);
    for y in 0..image.height {
        for x in 0..image.width {
            if !keep.get(y, x) {
                continue;
            }
            let [r, g, b] = image.get(y, x);
            if (r + g + b) / 3.0 >= BINARIZE_INTENSITY {
                binary.set(y, x, true);
            }
        }
    }
    let denoised = denoise_binary(&binary);

    let mut records = Vec::new();
    for comp in components(&denoised) {
        let boundary = boundary_points(&comp, &denoised);
        if boundary.len() < MIN_CONTOUR_POINTS {
            continue;
        }
        let hull = convex_hull(&boundary);
        if max_convexity_defect(&boundary, &hull) > MAX_CONVEXITY_DEFECT {
            continue;
        }
        let Some((cx, cy, h_p, v_p)) = fit_ellipse(&boundary) else {
            continue;
        };
        let r_p = (h_p + v_p) / 2.0;
        let s_p = (h_p / v_p).max(v_p / h_p);
        if r_p < MIN_PIXEL_RADIUS || r_p > MAX_PIXEL_RADIUS || s_p > MAX_PIXEL_STRETCH {
            continue;
        }
        records.push(EllipseRecord {
            center: [cx, cy],
            h_p,
            v_p,
            r_p,
            s_p,
            world: None,
        });
    }
    records
}

/// Test/fixture helper: fill an axis-aligned ellipse into an image.
pub fn draw_ellipse(img: &mut Image, cx: f64, cy: f64, rx: f64, ry: f64, color: [f64; 3]) {
    let x0 = ((cx - rx).floor().max(0.0)) as usize;
    let x1 = ((cx + rx).ceil().min(img.width as f64 - 1.0)) as usize;
    let y0 = ((cy - ry).floor().max(0.0)) as usize;
    let y1 = ((cy + ry).ceil().min(img.height as f64 - 1.0)) as usize;
    for y in y0..=y1 {
        for x in x0..=x1 {
            let dx = (x as f64 + 0.5 - cx) / rx;
            let dy = (y as f64 + 0.5 - cy) / ry;
            if dx * dx + dy * dy <= 1.0 {
                img.set(y, x, color);
            }
        }
    }
}

/// A `Plane` visualization of the keep mask; exposed for diagnostics.
pub fn keep_mask_debug(image: &Image) -> Plane {
    let m = hsv_keep_mask(image);
    Plane::from_fn(m.height, m.width, |y, x| m.get(y, x) as u8 as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn white(h: usize, w: usize) -> Image {
        Image::constant(h, w, [1.0, 1.0, 1.0])
    }

    #[test]
    fn red_disk_detected_with_accurate_radius() {
        let mut img = white(200, 200);
        draw_ellipse(&mut img, 100.0, 100.0, 50.0, 50.0, [1.0, 0.0, 0.0]);
        let recs = segment_ellipses(&img);
        assert_eq!(recs.len(), 1);
        let r = &recs[0];
        assert!((r.r_p - 50.0).abs() / 50.0 < 0.05, "r_p = {}", r.r_p);
        assert!(r.s_p <= 1.1, "s_p = {}", r.s_p);
        assert!((r.center[0] - 100.0).abs() < 1.5);
        assert!((r.center[1] - 100.0).abs() < 1.5);
    }

    #[test]
    fn drawn_ellipse_stretch_recovered() {
        let mut img = white(200, 200);
        draw_ellipse(&mut img, 100.0, 100.0, 40.0, 20.0, [0.9, 0.05, 0.05]);
        let recs = segment_ellipses(&img);
        assert_eq!(recs.len(), 1);
        let r = &recs[0];
        assert!((r.s_p - 2.0).abs() / 2.0 < 0.05, "s_p = {}", r.s_p);
        assert!((r.h_p - 40.0).abs() / 40.0 < 0.05, "h_p = {}", r.h_p);
        assert!((r.v_p - 20.0).abs() / 20.0 < 0.05, "v_p = {}", r.v_p);
    }

    #[test]
    fn blue_disk_is_rejected_by_hue_gate() {
        let mut img = white(120, 120);
        draw_ellipse(&mut img, 60.0, 60.0, 30.0, 30.0, [0.0, 0.0, 1.0]);
        assert!(segment_ellipses(&img).is_empty());
    }

    #[test]
    fn dark_or_desaturated_red_is_rejected() {
        // V below 0.6.
        let mut img = white(120, 120);
        draw_ellipse(&mut img, 60.0, 60.0, 30.0, 30.0, [0.5, 0.0, 0.0]);
        assert!(segment_ellipses(&img).is_empty());
        // S below 0.6 (washed out pink).
        let mut img = white(120, 120);
        draw_ellipse(&mut img, 60.0, 60.0, 30.0, 30.0, [1.0, 0.6, 0.6]);
        assert!(segment_ellipses(&img).is_empty());
    }

    #[test]
    fn tiny_and_extreme_records_filtered() {
        // Radius below 10 px is dropped by the post-filter.
        let mut img = white(100, 100);
        draw_ellipse(&mut img, 50.0, 50.0, 6.0, 6.0, [1.0, 0.0, 0.0]);
        assert!(segment_ellipses(&img).is_empty());
        // Stretch above 10 is dropped as well.
        let mut img = white(400, 400);
        draw_ellipse(&mut img, 200.0, 200.0, 180.0, 12.0, [1.0, 0.0, 0.0]);
        assert!(segment_ellipses(&img).is_empty());
    }

    #[test]
    fn concave_shape_filtered_by_convexity() {
        // A thick red L: union of two bars with a deep concavity.
        let mut img = white(160, 160);
        for y in 40..120 {
            for x in 40..60 {
                img.set(y, x, [1.0, 0.0, 0.0]);
            }
        }
        for y in 100..120 {
            for x in 40..120 {
                img.set(y, x, [1.0, 0.0, 0.0]);
            }
        }
        assert!(segment_ellipses(&img).is_empty());
    }

    #[test]
    fn isolated_speckles_are_denoised_away() {
        let mut img = white(100, 100);
        for (y, x) in [(10, 10), (20, 80), (55, 33), (80, 70)] {
            img.set(y, x, [1.0, 0.0, 0.0]);
        }
        assert!(segment_ellipses(&img).is_empty());
    }

    #[test]
    fn segmentation_is_translation_equivariant() {
        let mut a = white(220, 220);
        draw_ellipse(&mut a, 90.0, 80.0, 35.0, 25.0, [1.0, 0.0, 0.0]);
        let mut b = white(220, 220);
        draw_ellipse(&mut b, 90.0 + 13.0, 80.0 + 7.0, 35.0, 25.0, [1.0, 0.0, 0.0]);
        let ra = segment_ellipses(&a);
        let rb = segment_ellipses(&b);
        assert_eq!(ra.len(), 1);
        assert_eq!(rb.len(), 1);
        assert!((rb[0].center[0] - ra[0].center[0] - 13.0).abs() < 1.0);
        assert!((rb[0].center[1] - ra[0].center[1] - 7.0).abs() < 1.0);
    }

    #[test]
    fn two_disks_give_two_records() {
        let mut img = white(240, 240);
        draw_ellipse(&mut img, 60.0, 70.0, 28.0, 28.0, [1.0, 0.0, 0.0]);
        draw_ellipse(&mut img, 170.0, 160.0, 40.0, 40.0, [0.95, 0.02, 0.02]);
        let mut recs = segment_ellipses(&img);
        recs.sort_by(|a, b| a.r_p.partial_cmp(&b.r_p).unwrap());
        assert_eq!(recs.len(), 2);
        assert!((recs[0].r_p - 28.0).abs() / 28.0 < 0.05);
        assert!((recs[1].r_p - 40.0).abs() / 40.0 < 0.05);
    }

    #[test]
    fn post_filter_invariant_holds() {
        let mut img = white(300, 300);
        draw_ellipse(&mut img, 80.0, 80.0, 30.0, 22.0, [1.0, 0.0, 0.0]);
        draw_ellipse(&mut img, 200.0, 210.0, 55.0, 50.0, [0.9, 0.0, 0.1]);
        for r in segment_ellipses(&img) {
            assert!((r.r_p - (r.h_p + r.v_p) / 2.0).abs() < 1e-9);
            assert!((r.s_p - (r.h_p / r.v_p).max(r.v_p / r.h_p)).abs() < 1e-9);
            assert!((MIN_PIXEL_RADIUS..=MAX_PIXEL_RADIUS).contains(&r.r_p));
            assert!(r.s_p >= 1.0 && r.s_p <= MAX_PIXEL_STRETCH);
        }
    }

    #[test]
    fn cubic_solver_finds_known_roots() {
        // (x-1)(x-2)(x-3) = x^3 - 6x^2 + 11x - 6.
        let mut roots = cubic_roots(-6.0, 11.0, -6.0);
        roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(roots.len(), 3);
        for (r, want) in roots.iter().zip([1.0, 2.0, 3.0]) {
            assert!((r - want).abs() < 1e-9);
        }
        // One real root: x^3 + x + 1.
        let roots = cubic_roots(0.0, 1.0, 1.0);
        assert_eq!(roots.len(), 1);
        let r = roots[0];
        assert!((r * r * r + r + 1.0).abs() < 1e-9);
    }

    #[test]
    fn fit_ellipse_recovers_synthetic_conic() {
        // Dense samples of an axis-aligned ellipse.
        let mut pts = Vec::new();
        for i in 0..64 {
            let t = i as f64 / 64.0 * std::f64::consts::TAU;
            pts.push([30.0 + 12.0 * t.cos(), 40.0 + 5.0 * t.sin()]);
        }
        let (cx, cy, h, v) = fit_ellipse(&pts).unwrap();
        assert!((cx - 30.0).abs() < 1e-6);
        assert!((cy - 40.0).abs() < 1e-6);
        assert!((h - 12.0).abs() < 1e-6);
        assert!((v - 5.0).abs() < 1e-6);
    }
}
