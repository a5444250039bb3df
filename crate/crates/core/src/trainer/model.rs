//! The view-compensation network and its hand-written backward pass.
//!
//! Compensator (quarter-view stack in, complement stack out):
//!
//! ```text
//! conv3x3 -> leaky -> avgpool2 -> conv3x3 -> leaky -> avgpool2
//!   -> SCTM -> upsample-conv -> leaky -> upsample-conv -> leaky -> conv1x1
//! ```
//!
//! Image path (quarter-view DAS image in, `y0` out):
//!
//! ```text
//! conv3x3 -> leaky -> rgc x B -> conv1x1
//! ```

use indexmap::IndexMap;
use rand::Rng;

use super::config::{TrainConfig, Widths};
use crate::das::{superpose, DasImage, PositionWiseStack};
use crate::error::{Error, Result};
use crate::io::checkpoint::NamedTensor;
use crate::nn::{
    conv2d_backward, conv2d_forward, leaky_backward, leaky_forward, pool2d, pool2d_backward,
    rgc_backward, rgc_forward, sctm_backward, sctm_forward, upsample_conv_backward,
    upsample_conv_forward, ConvSpec, PoolKind, PoolOutput, PoolSpec, RgcWeights, SctmWeights,
    Tensor4,
};
use crate::seeded_rng;

const ARCH_TENSOR: &str = "meta.arch";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Architecture {
    pub grid: usize,
    pub input_channels: usize,
    pub output_channels: usize,
    pub widths: Widths,
    pub residual_sign: f64,
}

impl Architecture {
    pub fn from_config(config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        Ok(Architecture {
            grid: config.grid,
            input_channels: config.input_channels,
            output_channels: config.output_channels(),
            widths: config.widths,
            residual_sign: config.residual_sign,
        })
    }

    pub fn bottleneck_side(&self) -> usize {
        self.grid / 4
    }

    fn enc1(&self) -> ConvSpec {
        ConvSpec::same(self.input_channels, self.widths.encoder1, 3)
    }

    fn enc2(&self) -> ConvSpec {
        ConvSpec::same(self.widths.encoder1, self.widths.encoder2, 3)
    }

    fn dec1(&self) -> ConvSpec {
        ConvSpec::same(self.widths.encoder2, self.widths.encoder2, 3)
    }

    fn dec2(&self) -> ConvSpec {
        ConvSpec::same(self.widths.encoder2, self.widths.encoder1, 3)
    }

    fn comp_head(&self) -> ConvSpec {
        ConvSpec::same(self.widths.encoder1, self.output_channels, 1)
    }

    fn stem(&self) -> ConvSpec {
        ConvSpec::same(1, self.widths.image_features, 3)
    }

    fn image_head(&self) -> ConvSpec {
        ConvSpec::same(self.widths.image_features, 1, 1)
    }

    /// Parameter names and shapes in storage order.
    fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let conv = |prefix: &str, s: ConvSpec| {
            [
                (
                    format!("{prefix}.w"),
                    vec![s.out_channels, s.in_channels, s.kernel, s.kernel],
                ),
                (format!("{prefix}.b"), vec![s.out_channels]),
            ]
        };
        let (m, n) = (self.widths.encoder2, self.bottleneck_side());
        let (f, hd) = (self.widths.image_features, self.widths.rgc_hidden);
        let mut out = Vec::new();
        out.extend(conv("comp.enc1", self.enc1()));
        out.extend(conv("comp.enc2", self.enc2()));
        out.push(("comp.sctm.w_max".to_string(), vec![m, n, n]));
        out.push(("comp.sctm.w_avg".to_string(), vec![m, n, n]));
        out.extend(conv("comp.dec1", self.dec1()));
        out.extend(conv("comp.dec2", self.dec2()));
        out.extend(conv("comp.head", self.comp_head()));
        out.extend(conv("image.stem", self.stem()));
        for i in 0..self.widths.rgc_blocks {
            out.push((format!("image.rgc{i}.key"), vec![f]));
            out.push((format!("image.rgc{i}.w1"), vec![hd, f]));
            out.push((format!("image.rgc{i}.b1"), vec![hd]));
            out.push((format!("image.rgc{i}.w2"), vec![f, hd]));
            out.push((format!("image.rgc{i}.b2"), vec![f]));
        }
        out.extend(conv("image.head", self.image_head()));
        out
    }

    fn to_values(self) -> Vec<f64> {
        let w = self.widths;
        [
            self.grid,
            self.input_channels,
            self.output_channels,
            w.encoder1,
            w.encoder2,
            w.image_features,
            w.rgc_blocks,
            w.rgc_hidden,
        ]
        .iter()
        .map(|&v| v as f64)
        .chain(std::iter::once(self.residual_sign))
        .collect()
    }

    fn from_values(v: &[f64]) -> Option<Self> {
        if v.len() != 9 || v[..8].iter().any(|x| *x < 0.0 || x.fract() != 0.0) {
            return None;
        }
        let u = |i: usize| v[i] as usize;
        Some(Architecture {
            grid: u(0),
            input_channels: u(1),
            output_channels: u(2),
            widths: Widths {
                encoder1: u(3),
                encoder2: u(4),
                image_features: u(5),
                rgc_blocks: u(6),
                rgc_hidden: u(7),
            },
            residual_sign: v[8],
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

/// Named parameter tensors in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub arch: Architecture,
    pub tensors: IndexMap<String, Param>,
}

/// One gradient vector per parameter tensor, in the model's order.
pub type Gradients = Vec<Vec<f64>>;

impl ModelParams {
    pub fn get(&self, name: &str) -> &[f64] {
        &self.tensors[name].data
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.values().map(|p| p.data.len()).sum()
    }

    pub fn sctm_parameter_count(&self) -> usize {
        self.get("comp.sctm.w_max").len() + self.get("comp.sctm.w_avg").len()
    }

    pub fn zero_gradients(&self) -> Gradients {
        self.tensors
            .values()
            .map(|p| vec![0.0; p.data.len()])
            .collect()
    }

    pub fn to_named_tensors(&self) -> Vec<NamedTensor> {
        let arch = self.arch.to_values();
        std::iter::once(NamedTensor {
            name: ARCH_TENSOR.to_string(),
            dims: vec![arch.len()],
            data: arch,
        })
        .chain(self.tensors.iter().map(|(name, p)| NamedTensor {
            name: name.clone(),
            dims: p.dims.clone(),
            data: p.data.clone(),
        }))
        .collect()
    }

    pub fn from_named_tensors(tensors: Vec<NamedTensor>) -> Result<Self> {
        let bad = |m: String| Error::InvalidParameter(format!("checkpoint: {m}"));
        let mut iter = tensors.into_iter();
        let first = iter.next().ok_or_else(|| bad("no tensors".into()))?;
        if first.name != ARCH_TENSOR {
            return Err(bad(format!(
                "first tensor is {:?}, expected {ARCH_TENSOR}",
                first.name
            )));
        }
        let arch = Architecture::from_values(&first.data)
            .ok_or_else(|| bad("malformed architecture record".into()))?;
        let mut tensors = IndexMap::new();
        let layout = arch.layout();
        for (name, dims) in &layout {
            let t = iter
                .next()
                .ok_or_else(|| bad(format!("missing tensor {name}")))?;
            if &t.name != name || &t.dims != dims {
                return Err(bad(format!(
                    "found {} {:?}, expected {name} {dims:?}",
                    t.name, t.dims
                )));
            }
            tensors.insert(
                t.name,
                Param {
                    dims: t.dims,
                    data: t.data,
                },
            );
        }
        if let Some(extra) = iter.next() {
            return Err(bad(format!("unexpected tensor {}", extra.name)));
        }
        Ok(ModelParams { arch, tensors })
    }

    fn rgc(&self, i: usize) -> RgcWeights<'_> {
        RgcWeights {
            channels: self.arch.widths.image_features,
            hidden: self.arch.widths.rgc_hidden,
            key: self.get(&format!("image.rgc{i}.key")),
            w1: self.get(&format!("image.rgc{i}.w1")),
            b1: self.get(&format!("image.rgc{i}.b1")),
            w2: self.get(&format!("image.rgc{i}.w2")),
            b2: self.get(&format!("image.rgc{i}.b2")),
        }
    }

    fn sctm(&self) -> SctmWeights<'_> {
        SctmWeights {
            channels: self.arch.widths.encoder2,
            side: self.arch.bottleneck_side(),
            w_max: self.get("comp.sctm.w_max"),
            w_avg: self.get("comp.sctm.w_avg"),
        }
    }

    fn conv(&self, prefix: &str, spec: &ConvSpec, input: &Tensor4) -> Result<Tensor4> {
        conv2d_forward(
            input,
            spec,
            self.get(&format!("{prefix}.w")),
            self.get(&format!("{prefix}.b")),
        )
    }
}

/// Deterministic initialization: weights uniform in `+-sqrt(1 / fan_in)`,
/// biases zero, SCTM fusion weights near 0.5.
pub fn build_model(config: &TrainConfig, seed: u64) -> Result<ModelParams> {
    let arch = Architecture::from_config(config)?;
    let mut rng = seeded_rng(seed);
    let mut tensors = IndexMap::new();
    for (name, dims) in arch.layout() {
        let len: usize = dims.iter().product();
        let data: Vec<f64> =
            if name.ends_with(".b") || name.ends_with(".b1") || name.ends_with(".b2") {
                vec![0.0; len]
            } else if name.starts_with("comp.sctm") {
                (0..len)
                    .map(|_| 0.5 + rng.random_range(-0.05..0.05))
                    .collect()
            } else {
                let fan_in: usize = if dims.len() == 1 {
                    dims[0]
                } else {
                    dims[1..].iter().product()
                };
                let bound = (1.0 / fan_in as f64).sqrt();
                (0..len).map(|_| rng.random_range(-bound..bound)).collect()
            };
        tensors.insert(name, Param { dims, data });
    }
    Ok(ModelParams { arch, tensors })
}

/// Outputs of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceBundle {
    /// Generated complement channels.
    pub g_out: PositionWiseStack,
    pub y0: DasImage,
    pub y_hat: DasImage,
    pub sum_g: DasImage,
}

fn avg2() -> PoolSpec {
    PoolSpec::new(PoolKind::Avg, 2, 2)
}

/// Intermediate activations kept for the backward pass.
pub(crate) struct Trace {
    x: Tensor4,
    z1: Tensor4,
    h1: Tensor4,
    p1: PoolOutput,
    z2: Tensor4,
    h2: Tensor4,
    p2: PoolOutput,
    s: Tensor4,
    z3: Tensor4,
    h3: Tensor4,
    z4: Tensor4,
    h4: Tensor4,
    xi: Tensor4,
    z5: Tensor4,
    /// Inputs of each rgc block, then the final block output.
    r: Vec<Tensor4>,
}

/// Forward pass on raw tensors `[1, in, H, W]` and `[1, 1, H, W]`; returns
/// the compensator output, `y0`, and the trace.
pub(crate) fn forward_traced(
    model: &ModelParams,
    x: Tensor4,
    xi: Tensor4,
) -> Result<(Tensor4, Tensor4, Trace)> {
    let a = &model.arch;
    let z1 = model.conv("comp.enc1", &a.enc1(), &x)?;
    let h1 = leaky_forward(&z1);
    let p1 = pool2d(&h1, &avg2())?;
    let z2 = model.conv("comp.enc2", &a.enc2(), &p1.output)?;
    let h2 = leaky_forward(&z2);
    let p2 = pool2d(&h2, &avg2())?;
    let s = sctm_forward(&p2.output, model.sctm())?;
    let z3 = upsample_conv_forward(
        &s,
        &a.dec1(),
        model.get("comp.dec1.w"),
        model.get("comp.dec1.b"),
    )?;
    let h3 = leaky_forward(&z3);
    let z4 = upsample_conv_forward(
        &h3,
        &a.dec2(),
        model.get("comp.dec2.w"),
        model.get("comp.dec2.b"),
    )?;
    let h4 = leaky_forward(&z4);
    let g = model.conv("comp.head", &a.comp_head(), &h4)?;

    let z5 = model.conv("image.stem", &a.stem(), &xi)?;
    let mut r = vec![leaky_forward(&z5)];
    for i in 0..a.widths.rgc_blocks {
        let next = rgc_forward(r.last().unwrap(), model.rgc(i))?;
        r.push(next);
    }
    let y0 = model.conv("image.head", &a.image_head(), r.last().unwrap())?;
    let trace = Trace {
        x,
        z1,
        h1,
        p1,
        z2,
        h2,
        p2,
        s,
        z3,
        h3,
        z4,
        h4,
        xi,
        z5,
        r,
    };
    Ok((g, y0, trace))
}

/// Parameter gradients given `dL/dg` and `dL/dy0`.
pub(crate) fn backward(
    model: &ModelParams,
    t: &Trace,
    d_g: &Tensor4,
    d_y0: &Tensor4,
) -> Result<Gradients> {
    let a = &model.arch;
    let mut grads = model.zero_gradients();
    let mut put = |name: &str, g: Vec<f64>| {
        let idx = model.tensors.get_index_of(name).expect("known parameter");
        grads[idx] = g;
    };

    let gh = conv2d_backward(&t.h4, &a.comp_head(), model.get("comp.head.w"), d_g)?;
    put("comp.head.w", gh.weight);
    put("comp.head.b", gh.bias);
    let d_z4 = leaky_backward(&t.z4, &gh.input);
    let gd2 = upsample_conv_backward(&t.h3, &a.dec2(), model.get("comp.dec2.w"), &d_z4)?;
    put("comp.dec2.w", gd2.weight);
    put("comp.dec2.b", gd2.bias);
    let d_z3 = leaky_backward(&t.z3, &gd2.input);
    let gd1 = upsample_conv_backward(&t.s, &a.dec1(), model.get("comp.dec1.w"), &d_z3)?;
    put("comp.dec1.w", gd1.weight);
    put("comp.dec1.b", gd1.bias);
    let gs = sctm_backward(&t.p2.output, model.sctm(), &gd1.input)?;
    put("comp.sctm.w_max", gs.w_max);
    put("comp.sctm.w_avg", gs.w_avg);
    let d_h2 = pool2d_backward(t.h2.shape, &avg2(), &t.p2, &gs.input)?;
    let d_z2 = leaky_backward(&t.z2, &d_h2);
    let ge2 = conv2d_backward(&t.p1.output, &a.enc2(), model.get("comp.enc2.w"), &d_z2)?;
    put("comp.enc2.w", ge2.weight);
    put("comp.enc2.b", ge2.bias);
    let d_h1 = pool2d_backward(t.h1.shape, &avg2(), &t.p1, &ge2.input)?;
    let d_z1 = leaky_backward(&t.z1, &d_h1);
    let ge1 = conv2d_backward(&t.x, &a.enc1(), model.get("comp.enc1.w"), &d_z1)?;
    put("comp.enc1.w", ge1.weight);
    put("comp.enc1.b", ge1.bias);

    let ghead = conv2d_backward(
        t.r.last().unwrap(),
        &a.image_head(),
        model.get("image.head.w"),
        d_y0,
    )?;
    put("image.head.w", ghead.weight);
    put("image.head.b", ghead.bias);
    let mut d_r = ghead.input;
    for i in (0..a.widths.rgc_blocks).rev() {
        let g = rgc_backward(&t.r[i], model.rgc(i), &d_r)?;
        put(&format!("image.rgc{i}.key"), g.key);
        put(&format!("image.rgc{i}.w1"), g.w1);
        put(&format!("image.rgc{i}.b1"), g.b1);
        put(&format!("image.rgc{i}.w2"), g.w2);
        put(&format!("image.rgc{i}.b2"), g.b2);
        d_r = g.input;
    }
    let d_z5 = leaky_backward(&t.z5, &d_r);
    let gstem = conv2d_backward(&t.xi, &a.stem(), model.get("image.stem.w"), &d_z5)?;
    put("image.stem.w", gstem.weight);
    put("image.stem.b", gstem.bias);
    Ok(grads)
}

pub(crate) fn input_tensors(
    model: &ModelParams,
    x: &PositionWiseStack,
    x_image: &DasImage,
) -> Result<(Tensor4, Tensor4)> {
    let a = &model.arch;
    if x.channels() != a.input_channels {
        return Err(Error::ShapeMismatch(format!(
            "model expects {} input channels, stack has {}",
            a.input_channels,
            x.channels()
        )));
    }
    if x.grid.height != a.grid || x.grid.width != a.grid {
        return Err(Error::ShapeMismatch(format!(
            "model expects a {0}x{0} grid, stack is {1}x{2}",
            a.grid, x.grid.height, x.grid.width
        )));
    }
    if x_image.height != a.grid || x_image.width != a.grid {
        return Err(Error::ShapeMismatch(format!(
            "model expects a {0}x{0} image, got {1}x{2}",
            a.grid, x_image.height, x_image.width
        )));
    }
    Ok((
        Tensor4::new([1, a.input_channels, a.grid, a.grid], x.data.clone())?,
        Tensor4::new([1, 1, a.grid, a.grid], x_image.values.clone())?,
    ))
}

/// Complement channel ids following the input view, wrapping around the ring.
pub(crate) fn output_channel_ids(model: &ModelParams, x: &PositionWiseStack) -> Vec<usize> {
    let a = &model.arch;
    let total = a.input_channels + a.output_channels;
    let mut ids: Vec<usize> = (0..total).filter(|c| !x.channel_ids.contains(c)).collect();
    ids.truncate(a.output_channels);
    ids
}

pub(crate) fn assemble_bundle(
    model: &ModelParams,
    x: &PositionWiseStack,
    g: Tensor4,
    y0: Tensor4,
) -> Result<InferenceBundle> {
    let g_out = PositionWiseStack::new(g.data, output_channel_ids(model, x), x.grid)?;
    let sum_g = superpose(&g_out);
    let n = model.arch.grid;
    let sign = model.arch.residual_sign;
    let y_hat = y0
        .data
        .iter()
        .zip(&sum_g.values)
        .map(|(a, b)| a - sign * b)
        .collect();
    Ok(InferenceBundle {
        y_hat: DasImage::new(n, n, y_hat)?,
        y0: DasImage::new(n, n, y0.data)?,
        sum_g,
        g_out,
    })
}

pub fn forward_pass(
    model: &ModelParams,
    x: &PositionWiseStack,
    x_image: &DasImage,
) -> Result<InferenceBundle> {
    let (xt, xi) = input_tensors(model, x, x_image)?;
    let (g, y0, _) = forward_traced(model, xt, xi)?;
    assemble_bundle(model, x, g, y0)
}
