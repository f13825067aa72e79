//! VGG-style production backend loaded from a local weight file.
//!
//! The weight file is a standard container (see `container` module) holding
//! one `conv{i}.weight` plane with dims [out, in, 3, 3] and one
//! `conv{i}.bias` plane with dims [out] per trunk convolution, in trunk
//! order, plus an `arch` bytes plane naming the variant ("vgg16" or
//! "vgg19"). Planes may be f32 or f64. Only the trunk up to the deepest
//! style tap is needed: 13 convolutions for vgg19, 11 for vgg16.
//!
//! Input normalization uses the ImageNet statistics these classifiers were
//! trained with (mean 0.485/0.456/0.406, std 0.229/0.224/0.225).

use std::path::Path;

use super::cnn::ConvParams;
use super::{FeatureExtractor, LayerOp};
use crate::container::{Container, PlaneData};
use crate::error::{Error, Result};

pub const IMAGENET_MEAN: [f64; 3] = [0.485, 0.456, 0.406];
pub const IMAGENET_STD: [f64; 3] = [0.229, 0.224, 0.225];

/// Convolutions per stage for the trunk up to relu5_1 inclusive.
fn stage_convs(vgg19: bool) -> [usize; 5] {
    if vgg19 {
        [2, 2, 4, 4, 1]
    } else {
        [2, 2, 3, 3, 1]
    }
}

const STAGE_CHANNELS: [usize; 5] = [64, 128, 256, 512, 512];

/// Expected (in, out) channel pairs for each trunk conv, in order.
pub fn trunk_conv_shapes(vgg19: bool) -> Vec<(usize, usize)> {
    let mut shapes = Vec::new();
    let mut in_ch = 3;
    for (stage, &n) in stage_convs(vgg19).iter().enumerate() {
        for _ in 0..n {
            shapes.push((in_ch, STAGE_CHANNELS[stage]));
            in_ch = STAGE_CHANNELS[stage];
        }
    }
    shapes
}

fn build_ops(vgg19: bool) -> Vec<LayerOp> {
    let mut ops = Vec::new();
    let mut conv_idx = 0;
    for (stage, &n) in stage_convs(vgg19).iter().enumerate() {
        for j in 0..n {
            ops.push(LayerOp::Conv(conv_idx));
            conv_idx += 1;
            ops.push(LayerOp::Relu);
            if j == 0 {
                ops.push(LayerOp::StyleTap(stage));
            }
            if stage == 3 && j == 1 {
                ops.push(LayerOp::ContentTap);
            }
        }
        if stage < 4 {
            ops.push(LayerOp::MaxPool);
        }
    }
    ops
}

fn plane_as_f64(data: &PlaneData) -> Vec<f64> {
    match data {
        PlaneData::F32(v) => v.iter().map(|&x| x as f64).collect(),
        PlaneData::F64(v) => v.clone(),
        PlaneData::Bytes(_) => Vec::new(),
    }
}

pub fn load_vgg(path: &Path, vgg19: bool) -> Result<FeatureExtractor> {
    if !path.exists() {
        return Err(Error::Features(format!(
            "pretrained weight file not found at `{}`; set `weights_path` in the \
             config or switch `backend` to \"test\"",
            path.display()
        )));
    }
    let c = Container::read(path)?;
    let want_arch = if vgg19 { "vgg19" } else { "vgg16" };
    let arch = String::from_utf8(c.require_bytes("arch", path)?.to_vec())
        .map_err(|_| Error::parse(path, "arch plane is not utf-8"))?;
    if arch != want_arch {
        return Err(Error::Features(format!(
            "weight file declares architecture `{arch}` but config requests `{want_arch}`"
        )));
    }
    let shapes = trunk_conv_shapes(vgg19);
    let mut convs = Vec::with_capacity(shapes.len());
    for (i, &(ic, oc)) in shapes.iter().enumerate() {
        let wname = format!("conv{i}.weight");
        let bname = format!("conv{i}.bias");
        let wplane = c
            .get(&wname)
            .ok_or_else(|| Error::parse(path, format!("missing plane `{wname}`")))?;
        let bplane = c
            .get(&bname)
            .ok_or_else(|| Error::parse(path, format!("missing plane `{bname}`")))?;
        let dims: Vec<usize> = wplane.dims.iter().map(|&d| d as usize).collect();
        if dims != vec![oc, ic, 3, 3] {
            return Err(Error::parse(
                path,
                format!("`{wname}` has dims {dims:?}, expected [{oc}, {ic}, 3, 3]"),
            ));
        }
        let weight = plane_as_f64(&wplane.data);
        let bias = plane_as_f64(&bplane.data);
        if bias.len() != oc {
            return Err(Error::parse(path, format!("`{bname}` has wrong length")));
        }
        convs.push(ConvParams {
            in_ch: ic,
            out_ch: oc,
            weight,
            bias,
        });
    }
    Ok(FeatureExtractor::from_parts(
        build_ops(vgg19),
        convs,
        IMAGENET_MEAN,
        IMAGENET_STD,
        want_arch.to_string(),
    ))
}

/// Write a weight file in the format read by [`load_vgg`]. Exposed so tests
/// and external converters can produce compatible files.
pub fn write_weight_file(path: &Path, arch: &str, convs: &[ConvParams]) -> Result<()> {
    let mut c = Container::new();
    c.insert(
        "arch",
        vec![arch.len() as u32],
        PlaneData::Bytes(arch.as_bytes().to_vec()),
    );
    for (i, conv) in convs.iter().enumerate() {
        c.insert(
            &format!("conv{i}.weight"),
            vec![conv.out_ch as u32, conv.in_ch as u32, 3, 3],
            PlaneData::F32(conv.weight.iter().map(|&v| v as f32).collect()),
        );
        c.insert(
            &format!("conv{i}.bias"),
            vec![conv.out_ch as u32],
            PlaneData::F32(conv.bias.iter().map(|&v| v as f32).collect()),
        );
    }
    c.write(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::img::Image;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_trunk(vgg19: bool, seed: u64) -> Vec<ConvParams> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        trunk_conv_shapes(vgg19)
            .iter()
            .map(|&(ic, oc)| {
                let bound = (2.0 / (ic as f64 * 9.0)).sqrt();
                ConvParams {
                    in_ch: ic,
                    out_ch: oc,
                    weight: (0..oc * ic * 9)
                        .map(|_| rng.gen_range(-bound..bound))
                        .collect(),
                    bias: vec![0.01; oc],
                }
            })
            .collect()
    }

    #[test]
    fn trunk_shapes_match_both_variants() {
        assert_eq!(trunk_conv_shapes(true).len(), 13);
        assert_eq!(trunk_conv_shapes(false).len(), 11);
        assert_eq!(trunk_conv_shapes(true)[0], (3, 64));
        assert_eq!(*trunk_conv_shapes(true).last().unwrap(), (512, 512));
    }

    #[test]
    fn vgg_weight_file_roundtrip_and_tap_shapes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vgg19.weights");
        write_weight_file(&path, "vgg19", &random_trunk(true, 3)).unwrap();
        let ex = load_vgg(&path, true).unwrap();
        assert_eq!(ex.name(), "vgg19");
        let img = Image::constant(32, 32, [0.3, 0.5, 0.7]);
        let enc = ex.extract(&img).unwrap();
        let dims: Vec<(usize, usize, usize)> = enc
            .stack
            .style
            .iter()
            .map(|t| (t.channels, t.height, t.width))
            .collect();
        assert_eq!(
            dims,
            vec![
                (64, 32, 32),
                (128, 16, 16),
                (256, 8, 8),
                (512, 4, 4),
                (512, 2, 2)
            ]
        );
        assert_eq!(enc.stack.content.channels, 512);
        // Deterministic across calls.
        let enc2 = ex.extract(&img).unwrap();
        assert_eq!(enc.stack.style[4].data, enc2.stack.style[4].data);
    }

    #[test]
    fn missing_weight_file_is_a_clear_error() {
        let err = load_vgg(Path::new("/nonexistent/weights.bin"), true).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("/nonexistent/weights.bin"));
        assert!(msg.contains("weights_path"));
    }

    #[test]
    fn architecture_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.bin");
        write_weight_file(&path, "vgg16", &random_trunk(false, 4)).unwrap();
        assert!(load_vgg(&path, true).is_err());
        assert!(load_vgg(&path, false).is_ok());
    }
}
