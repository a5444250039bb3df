//! Nearest-neighbour 2x upsampling followed by a same-padded convolution.

use super::conv::{conv2d_backward, conv2d_forward, ConvGrads, ConvSpec};
use super::Tensor4;
use crate::error::Result;

pub fn upsample2x(input: &Tensor4) -> Tensor4 {
    let (h, w) = (input.height(), input.width());
    let mut out = Tensor4::zeros([input.batch(), input.channels(), 2 * h, 2 * w]);
    for b in 0..input.batch() {
        for c in 0..input.channels() {
            let src = input.plane(b, c);
            let dst = out.plane_mut(b, c);
            for y in 0..2 * h {
                for x in 0..2 * w {
                    dst[y * 2 * w + x] = src[(y / 2) * w + x / 2];
                }
            }
        }
    }
    out
}

/// Adjoint of [`upsample2x`]: sums each 2x2 block.
pub fn upsample2x_backward(grad_out: &Tensor4) -> Tensor4 {
    let (h, w) = (grad_out.height() / 2, grad_out.width() / 2);
    let mut out = Tensor4::zeros([grad_out.batch(), grad_out.channels(), h, w]);
    for b in 0..grad_out.batch() {
        for c in 0..grad_out.channels() {
            let src = grad_out.plane(b, c);
            let dst = out.plane_mut(b, c);
            for y in 0..2 * h {
                for x in 0..2 * w {
                    dst[(y / 2) * w + x / 2] += src[y * 2 * w + x];
                }
            }
        }
    }
    out
}

pub fn upsample_conv_forward(
    input: &Tensor4,
    spec: &ConvSpec,
    weight: &[f64],
    bias: &[f64],
) -> Result<Tensor4> {
    conv2d_forward(&upsample2x(input), spec, weight, bias)
}

pub fn upsample_conv_backward(
    input: &Tensor4,
    spec: &ConvSpec,
    weight: &[f64],
    grad_out: &Tensor4,
) -> Result<ConvGrads> {
    let mut g = conv2d_backward(&upsample2x(input), spec, weight, grad_out)?;
    g.input = upsample2x_backward(&g.input);
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{numeric_gradient, random_vec, rel_err};

    #[test]
    fn single_pixel_identity() {
        let x = Tensor4::new([1, 1, 1, 1], vec![1.0]).unwrap();
        let y = upsample_conv_forward(&x, &ConvSpec::same(1, 1, 1), &[1.0], &[0.0]).unwrap();
        assert_eq!(y.shape, [1, 1, 2, 2]);
        assert_eq!(y.data, vec![1.0; 4]);
    }

    #[test]
    fn doubles_spatial_shape() {
        let x = Tensor4::zeros([2, 3, 5, 7]);
        let spec = ConvSpec::same(3, 4, 3);
        let y = upsample_conv_forward(&x, &spec, &vec![0.0; spec.weight_len()], &[0.0; 4]).unwrap();
        assert_eq!(y.shape, [2, 4, 10, 14]);
    }

    #[test]
    fn gradients_match_differences() {
        let spec = ConvSpec::same(2, 3, 3);
        for seed in 0..5 {
            let shape = [1, 2, 3, 4];
            let x = Tensor4::new(shape, random_vec(24, seed)).unwrap();
            let w = random_vec(spec.weight_len(), seed + 1);
            let b = random_vec(3, seed + 2);
            let r = random_vec(3 * 6 * 8, seed + 3);
            let eval = |x: &Tensor4, w: &[f64], b: &[f64]| -> f64 {
                upsample_conv_forward(x, &spec, w, b)
                    .unwrap()
                    .data
                    .iter()
                    .zip(&r)
                    .map(|(a, b)| a * b)
                    .sum()
            };
            let g = upsample_conv_backward(
                &x,
                &spec,
                &w,
                &Tensor4::new([1, 3, 6, 8], r.clone()).unwrap(),
            )
            .unwrap();
            let nx = numeric_gradient(&x.data, |v| {
                eval(&Tensor4::new(shape, v.to_vec()).unwrap(), &w, &b)
            });
            let nw = numeric_gradient(&w, |v| eval(&x, v, &b));
            let nb = numeric_gradient(&b, |v| eval(&x, &w, v));
            assert!(rel_err(&g.input.data, &nx) <= 1e-4);
            assert!(rel_err(&g.weight, &nw) <= 1e-4);
            assert!(rel_err(&g.bias, &nb) <= 1e-4);
        }
    }
}
