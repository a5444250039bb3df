//! Residual global-context block.
//!
//! A 1x1 key projection gives one attention logit per position; a spatial
//! softmax turns the logits into pooling weights shared by every channel.
//! The pooled context vector passes through a two-layer 1x1 transform
//! (leaky rectifier in between) and is added back at every position:
//!
//! `out[c, p] = x[c, p] + (W2 leaky(W1 ctx + b1) + b2)[c]`

use super::activation::{leaky_relu, LEAKY_SLOPE};
use super::Tensor4;
use crate::error::{Error, Result};

/// Borrowed block parameters. `w1` is `hidden x channels`, `w2` is
/// `channels x hidden`.
#[derive(Debug, Clone, Copy)]
pub struct RgcWeights<'a> {
    pub channels: usize,
    pub hidden: usize,
    pub key: &'a [f64],
    pub w1: &'a [f64],
    pub b1: &'a [f64],
    pub w2: &'a [f64],
    pub b2: &'a [f64],
}

impl RgcWeights<'_> {
    fn check(&self, input: &Tensor4) -> Result<()> {
        let (c, h) = (self.channels, self.hidden);
        if self.key.len() != c
            || self.w1.len() != h * c
            || self.b1.len() != h
            || self.w2.len() != c * h
            || self.b2.len() != c
        {
            return Err(Error::ShapeMismatch(format!(
                "global-context parameters do not match {c} channels / {h} hidden"
            )));
        }
        if input.channels() != c {
            return Err(Error::ShapeMismatch(format!(
                "global-context block expects {c} channels, got {}",
                input.channels()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RgcGrads {
    pub input: Tensor4,
    pub key: Vec<f64>,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

struct Context {
    attention: Vec<f64>,
    context: Vec<f64>,
    pre_hidden: Vec<f64>,
    hidden: Vec<f64>,
    transform: Vec<f64>,
}

fn context(input: &Tensor4, b: usize, w: &RgcWeights<'_>) -> Context {
    let (c, p) = (w.channels, input.plane_len());
    let mut logits = vec![0.0; p];
    for ch in 0..c {
        let k = w.key[ch];
        for (l, x) in logits.iter_mut().zip(input.plane(b, ch)) {
            *l += k * x;
        }
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut attention: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = attention.iter().sum();
    attention.iter_mut().for_each(|a| *a /= total);

    let ctx: Vec<f64> = (0..c)
        .map(|ch| {
            input
                .plane(b, ch)
                .iter()
                .zip(&attention)
                .map(|(x, a)| x * a)
                .sum()
        })
        .collect();
    let pre_hidden: Vec<f64> = (0..w.hidden)
        .map(|j| w.b1[j] + (0..c).map(|ch| w.w1[j * c + ch] * ctx[ch]).sum::<f64>())
        .collect();
    let hidden: Vec<f64> = pre_hidden.iter().map(|&z| leaky_relu(z)).collect();
    let transform: Vec<f64> = (0..c)
        .map(|ch| {
            w.b2[ch]
                + (0..w.hidden)
                    .map(|j| w.w2[ch * w.hidden + j] * hidden[j])
                    .sum::<f64>()
        })
        .collect();
    Context {
        attention,
        context: ctx,
        pre_hidden,
        hidden,
        transform,
    }
}

pub fn rgc_forward(input: &Tensor4, weights: RgcWeights<'_>) -> Result<Tensor4> {
    weights.check(input)?;
    let mut out = input.clone();
    for b in 0..input.batch() {
        let ctx = context(input, b, &weights);
        for ch in 0..weights.channels {
            let t = ctx.transform[ch];
            out.plane_mut(b, ch).iter_mut().for_each(|v| *v += t);
        }
    }
    Ok(out)
}

pub fn rgc_backward(
    input: &Tensor4,
    weights: RgcWeights<'_>,
    grad_out: &Tensor4,
) -> Result<RgcGrads> {
    weights.check(input)?;
    if grad_out.shape != input.shape {
        return Err(Error::ShapeMismatch(
            "global-context output gradient shape".into(),
        ));
    }
    let (c, hd) = (weights.channels, weights.hidden);
    let mut g = RgcGrads {
        input: grad_out.clone(),
        key: vec![0.0; c],
        w1: vec![0.0; hd * c],
        b1: vec![0.0; hd],
        w2: vec![0.0; c * hd],
        b2: vec![0.0; c],
    };
    for b in 0..input.batch() {
        let ctx = context(input, b, &weights);
        let d_t: Vec<f64> = (0..c)
            .map(|ch| grad_out.plane(b, ch).iter().sum())
            .collect();
        let mut d_hidden = vec![0.0; hd];
        for ch in 0..c {
            g.b2[ch] += d_t[ch];
            for j in 0..hd {
                g.w2[ch * hd + j] += d_t[ch] * ctx.hidden[j];
                d_hidden[j] += weights.w2[ch * hd + j] * d_t[ch];
            }
        }
        let mut d_ctx = vec![0.0; c];
        for j in 0..hd {
            let dz = if ctx.pre_hidden[j] >= 0.0 {
                d_hidden[j]
            } else {
                LEAKY_SLOPE * d_hidden[j]
            };
            g.b1[j] += dz;
            for ch in 0..c {
                g.w1[j * c + ch] += dz * ctx.context[ch];
                d_ctx[ch] += weights.w1[j * c + ch] * dz;
            }
        }
        // ctx[c] = sum_p a[p] x[c, p]
        let p = input.plane_len();
        let mut d_att = vec![0.0; p];
        for ch in 0..c {
            let x = input.plane(b, ch);
            for (i, da) in d_att.iter_mut().enumerate() {
                *da += d_ctx[ch] * x[i];
            }
            let gi = g.input.plane_mut(b, ch);
            for (gv, a) in gi.iter_mut().zip(&ctx.attention) {
                *gv += a * d_ctx[ch];
            }
        }
        // softmax
        let dot: f64 = d_att.iter().zip(&ctx.attention).map(|(d, a)| d * a).sum();
        let d_logit: Vec<f64> = d_att
            .iter()
            .zip(&ctx.attention)
            .map(|(d, a)| a * (d - dot))
            .collect();
        for ch in 0..c {
            let x = input.plane(b, ch);
            g.key[ch] += d_logit.iter().zip(x).map(|(d, x)| d * x).sum::<f64>();
            let k = weights.key[ch];
            let gi = g.input.plane_mut(b, ch);
            for (gv, d) in gi.iter_mut().zip(&d_logit) {
                *gv += k * d;
            }
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{numeric_gradient, random_vec, rel_err};

    struct Owned {
        c: usize,
        h: usize,
        parts: [Vec<f64>; 5],
    }

    impl Owned {
        fn random(c: usize, h: usize, seed: u64) -> Self {
            Owned {
                c,
                h,
                parts: [
                    random_vec(c, seed),
                    random_vec(h * c, seed + 1),
                    random_vec(h, seed + 2),
                    random_vec(c * h, seed + 3),
                    random_vec(c, seed + 4),
                ],
            }
        }

        fn view(&self) -> RgcWeights<'_> {
            RgcWeights {
                channels: self.c,
                hidden: self.h,
                key: &self.parts[0],
                w1: &self.parts[1],
                b1: &self.parts[2],
                w2: &self.parts[3],
                b2: &self.parts[4],
            }
        }
    }

    #[test]
    fn zero_transform_is_identity() {
        let mut p = Owned::random(3, 2, 1);
        for part in &mut p.parts[1..] {
            part.iter_mut().for_each(|v| *v = 0.0);
        }
        let x = Tensor4::new([2, 3, 4, 4], random_vec(96, 7)).unwrap();
        assert_eq!(rgc_forward(&x, p.view()).unwrap(), x);
    }

    #[test]
    fn single_pixel_context_is_the_pixel() {
        let p = Owned::random(3, 2, 2);
        let x = Tensor4::new([1, 3, 1, 1], vec![0.3, -0.7, 1.1]).unwrap();
        let ctx = context(&x, 0, &p.view());
        assert_eq!(ctx.attention, vec![1.0]);
        assert_eq!(ctx.context, vec![0.3, -0.7, 1.1]);
    }

    #[test]
    fn wrong_channel_count() {
        let p = Owned::random(3, 2, 2);
        assert!(rgc_forward(&Tensor4::zeros([1, 2, 2, 2]), p.view()).is_err());
    }

    #[test]
    fn gradients_match_differences() {
        for seed in 0..5 {
            let shape = [1, 3, 4, 4];
            let x = Tensor4::new(shape, random_vec(48, seed * 17)).unwrap();
            let p = Owned::random(3, 2, seed * 17 + 1);
            let r = random_vec(48, seed * 17 + 9);
            let g = rgc_backward(&x, p.view(), &Tensor4::new(shape, r.clone()).unwrap()).unwrap();
            let eval = |x: &Tensor4, p: &Owned| -> f64 {
                rgc_forward(x, p.view())
                    .unwrap()
                    .data
                    .iter()
                    .zip(&r)
                    .map(|(a, b)| a * b)
                    .sum()
            };
            let nx = numeric_gradient(&x.data, |v| {
                eval(&Tensor4::new(shape, v.to_vec()).unwrap(), &p)
            });
            assert!(rel_err(&g.input.data, &nx) <= 1e-4);
            let analytic = [&g.key, &g.w1, &g.b1, &g.w2, &g.b2];
            for (k, a) in analytic.iter().enumerate() {
                let num = numeric_gradient(&p.parts[k], |v| {
                    let mut q = Owned {
                        c: p.c,
                        h: p.h,
                        parts: p.parts.clone(),
                    };
                    q.parts[k] = v.to_vec();
                    eval(&x, &q)
                });
                assert!(rel_err(a, &num) <= 1e-4, "part {k} seed {seed}");
            }
        }
    }
}
