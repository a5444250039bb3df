//! Training of the view-compensation network.
//!
//! Per sample the compensator output `g` is compared with the true
//! complement stack (response and overlay losses), the image-path output
//! `y0` with the full-view image (texture loss), and the combined result
//! `y_hat = y0 - sign * sum(g)` with the full-view image (rec loss). The
//! total is the weighted sum of the four. Batches average per-sample
//! gradients, computed in parallel and reduced in sample order.

mod config;
mod data;
mod model;
mod optim;

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

pub use config::{TrainConfig, Widths};
pub use data::{load_phantom, load_split, prepare_sample, Sample};
pub use model::{
    build_model, forward_pass, Architecture, Gradients, InferenceBundle, ModelParams, Param,
};
pub use optim::Adam;

use crate::das::DasImage;
use crate::error::{Error, Result};
use crate::loss::{
    overall_loss, overlay_loss, rec_loss, response_loss, texture_loss, LossParts, OverlayMode,
    VectorizedStack,
};
use crate::nn::Tensor4;
use crate::postproc::{threshold_separate, Polarity, ThresholdConfig};

/// Epoch means of the total and of each component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub total: f64,
    pub parts: LossParts,
}

pub struct TrainOutcome {
    pub model: ModelParams,
    pub log: Vec<EpochLog>,
}

/// Loss components, weighted total and parameter gradients for one sample.
pub struct SampleEval {
    pub parts: LossParts,
    pub total: f64,
    pub grads: Gradients,
}

pub fn sample_gradient(
    model: &ModelParams,
    sample: &Sample,
    config: &TrainConfig,
) -> Result<SampleEval> {
    let arch = &model.arch;
    let (xt, xi) = model::input_tensors(model, &sample.x, &sample.x_image)?;
    let (g, y0t, trace) = model::forward_traced(model, xt, xi)?;
    let n = arch.grid * arch.grid;
    let rows = arch.output_channels;
    if sample.target.channels() != rows {
        return Err(Error::ShapeMismatch(format!(
            "target stack has {} channels, model emits {rows}",
            sample.target.channels()
        )));
    }
    let w = &config.weights;
    let sign = arch.residual_sign;

    let gen = VectorizedStack {
        rows,
        cols: n,
        matrix: g.data,
    };
    let target = VectorizedStack::from_stack(&sample.target);
    let mut parts = LossParts::default();
    let mut d_g = vec![0.0; rows * n];
    if config.enable_response {
        let l = response_loss(&gen, &target)?;
        parts.response = l.value;
        d_g.iter_mut()
            .zip(&l.gradient)
            .for_each(|(d, v)| *d += w.lambda_re * v);
    }
    if config.enable_overlay {
        let l = overlay_loss(&gen, &target, OverlayMode::ClosedForm)?;
        parts.overlay = l.value;
        d_g.iter_mut()
            .zip(&l.gradient)
            .for_each(|(d, v)| *d += w.lambda_ov * v);
    }

    let mut sum_g = vec![0.0; n];
    for row in gen.matrix.chunks_exact(n) {
        sum_g.iter_mut().zip(row).for_each(|(s, v)| *s += v);
    }
    let y0 = DasImage::new(arch.grid, arch.grid, y0t.data)?;
    let y_hat = DasImage::new(
        arch.grid,
        arch.grid,
        y0.values
            .iter()
            .zip(&sum_g)
            .map(|(a, b)| a - sign * b)
            .collect(),
    )?;
    let tex = texture_loss(&y0, &sample.y)?;
    let rec = rec_loss(&y_hat, &sample.y)?;
    parts.texture = tex.value;
    parts.rec = rec.value;

    // y_hat depends on y0 directly and on every generated channel through
    // the superposition.
    let d_y0: Vec<f64> = tex
        .gradient
        .iter()
        .zip(&rec.gradient)
        .map(|(t, r)| w.lambda_tex * t + w.lambda_rec * r)
        .collect();
    for row in d_g.chunks_exact_mut(n) {
        row.iter_mut()
            .zip(&rec.gradient)
            .for_each(|(d, r)| *d -= sign * w.lambda_rec * r);
    }
    let grads = model::backward(
        model,
        &trace,
        &Tensor4::new([1, rows, arch.grid, arch.grid], d_g)?,
        &Tensor4::new([1, 1, arch.grid, arch.grid], d_y0)?,
    )?;
    Ok(SampleEval {
        total: overall_loss(&parts, w),
        parts,
        grads,
    })
}

fn check_finite(parts: &LossParts, epoch: usize) -> Result<()> {
    let named = [
        ("response", parts.response),
        ("overlay", parts.overlay),
        ("texture", parts.texture),
        ("rec", parts.rec),
    ];
    for (component, v) in named {
        if !v.is_finite() {
            return Err(Error::NonFiniteLoss { component, epoch });
        }
    }
    Ok(())
}

/// Train on prepared samples in fixed order.
pub fn train_samples(
    mut model: ModelParams,
    samples: &[Sample],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::Dataset("no training samples".into()));
    }
    let mut opt = Adam::new(
        &model,
        config.lr,
        config.beta1,
        config.beta2,
        config.epsilon,
    );
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let mut sums = LossParts::default();
        let mut total = 0.0;
        for batch in samples.chunks(config.batch) {
            let evals: Vec<SampleEval> = batch
                .par_iter()
                .map(|s| sample_gradient(&model, s, config))
                .collect::<Result<_>>()?;
            let mut grads = model.zero_gradients();
            let inv = 1.0 / batch.len() as f64;
            for e in &evals {
                check_finite(&e.parts, epoch)?;
                sums.response += e.parts.response;
                sums.overlay += e.parts.overlay;
                sums.texture += e.parts.texture;
                sums.rec += e.parts.rec;
                total += e.total;
                for (acc, g) in grads.iter_mut().zip(&e.grads) {
                    acc.iter_mut().zip(g).for_each(|(a, v)| *a += inv * v);
                }
            }
            opt.step(&mut model, &grads);
        }
        let inv = 1.0 / samples.len() as f64;
        log.push(EpochLog {
            epoch,
            total: total * inv,
            parts: LossParts {
                response: sums.response * inv,
                overlay: sums.overlay * inv,
                texture: sums.texture * inv,
                rec: sums.rec * inv,
            },
        });
    }
    Ok(TrainOutcome { model, log })
}

pub const LOSS_LOG_HEADER: &str = "epoch,total,response,overlay,texture,rec";

pub fn format_loss_log(log: &[EpochLog]) -> String {
    let mut out = String::from(LOSS_LOG_HEADER);
    out.push('\n');
    for e in log {
        let p = e.parts;
        writeln!(
            out,
            "{},{},{},{},{},{}",
            e.epoch, e.total, p.response, p.overlay, p.texture, p.rec
        )
        .unwrap();
    }
    out
}

pub fn parse_loss_log(text: &str) -> Result<Vec<EpochLog>> {
    let mut lines = text.lines();
    if lines.next() != Some(LOSS_LOG_HEADER) {
        return Err(Error::Dataset("loss log lacks the expected header".into()));
    }
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            let num = |i: usize| -> Result<f64> {
                f.get(i)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Dataset(format!("bad loss log line {line:?}")))
            };
            Ok(EpochLog {
                epoch: num(0)? as usize,
                total: num(1)?,
                parts: LossParts {
                    response: num(2)?,
                    overlay: num(3)?,
                    texture: num(4)?,
                    rec: num(5)?,
                },
            })
        })
        .collect()
}

/// Threshold settings matching the residual sign: with subtraction the
/// compensator carries the object negated.
pub fn threshold_config(config: &TrainConfig) -> Result<ThresholdConfig> {
    let polarity = if config.residual_sign > 0.0 {
        Polarity::NegativeObject
    } else {
        Polarity::PositiveObject
    };
    ThresholdConfig::new(config.tau_fraction, polarity)
}

/// `sum_g` thresholded into an object estimate.
pub fn processed_output(bundle: &InferenceBundle, config: &TrainConfig) -> Result<DasImage> {
    threshold_separate(&bundle.sum_g, &threshold_config(config)?)
}

#[derive(Debug, Clone)]
pub struct AblationCase {
    pub name: &'static str,
    pub enable_response: bool,
    pub enable_overlay: bool,
    pub bundle: InferenceBundle,
    pub object_mean: f64,
    pub background_mean: f64,
    pub final_loss: f64,
}

pub struct Ablation {
    pub cases: Vec<AblationCase>,
    pub report: String,
}

pub const ABLATION_CASES: [(&str, bool, bool); 4] = [
    ("none", false, false),
    ("overlay", false, true),
    ("response", true, false),
    ("both", true, true),
];

fn masked_mean(values: &[f64], mask: &[bool], keep: bool) -> f64 {
    let (sum, count) = values
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m == keep)
        .fold((0.0, 0usize), |(s, c), (v, _)| (s + v, c + 1));
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

/// Train four models from the same initialization, differing only in
/// which delay-data losses are enabled, and evaluate each on the first
/// test sample.
pub fn ablate(train: &[Sample], test: &[Sample], config: &TrainConfig) -> Result<Ablation> {
    let probe = test
        .first()
        .ok_or_else(|| Error::Dataset("ablation needs at least one test sample".into()))?;
    let support = probe.p0.support();
    let mut cases = Vec::new();
    let mut report = String::from("# ablation: mean of sum_g over object support and background\n");
    for (name, enable_response, enable_overlay) in ABLATION_CASES {
        let cfg = TrainConfig {
            enable_response,
            enable_overlay,
            ..config.clone()
        };
        let init = build_model(&cfg, cfg.seed)?;
        let out = train_samples(init, train, &cfg)?;
        let bundle = forward_pass(&out.model, &probe.x, &probe.x_image)?;
        let object_mean = masked_mean(&bundle.sum_g.values, &support, true);
        let background_mean = masked_mean(&bundle.sum_g.values, &support, false);
        let final_loss = out.log.last().map_or(f64::NAN, |e| e.total);
        writeln!(
            report,
            "\n[case {name}]\nenable_response = {enable_response}\nenable_overlay = {enable_overlay}\n\
             object_mean = {object_mean:.9e}\nbackground_mean = {background_mean:.9e}\n\
             object_sign = {}\nfinal_loss = {final_loss:.9e}",
            if object_mean < 0.0 { "negative" } else { "non-negative" }
        )
        .unwrap();
        cases.push(AblationCase {
            name,
            enable_response,
            enable_overlay,
            bundle,
            object_mean,
            background_mean,
            final_loss,
        });
    }
    Ok(Ablation { cases, report })
}

pub fn write_loss_log(path: &Path, log: &[EpochLog]) -> Result<()> {
    std::fs::write(path, format_loss_log(log)).map_err(|e| Error::io(path, e))
}
