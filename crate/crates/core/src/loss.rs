//! Losses on delayed-data stacks and images, each returning its value and
//! its gradient with respect to the generated argument.
//!
//! * response: squared distance between channel Gram matrices, scaled by
//!   `1 / (4 N^2 M^2)`.
//! * overlay: squared distance between all pairwise channel sums
//!   `O[n, n', m] = F[n, m] + F[n', m]`, scaled by `1 / (4 N^4 M^2)`.
//! * texture / rec: squared Frobenius distance between images.
//!
//! The overlay loss is evaluated in closed form. With `D = F - F_target`,
//! `sum_{n,n'} (D[n,m] + D[n',m])^2 = 2 N sum_n D[n,m]^2 + 2 (sum_n D[n,m])^2`,
//! so the `N x N x M` tensor is never built. The materialized path is kept
//! for cross-checking on small inputs.

use crate::das::{DasImage, PositionWiseStack};
use crate::error::{Error, Result};

/// `N x M` matrix, one flattened channel per row.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorizedStack {
    pub rows: usize,
    pub cols: usize,
    pub matrix: Vec<f64>,
}

impl VectorizedStack {
    pub fn new(rows: usize, cols: usize, matrix: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || matrix.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {rows}x{cols} stack",
                matrix.len()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite stack value".into()));
        }
        Ok(VectorizedStack { rows, cols, matrix })
    }

    pub fn from_stack(stack: &PositionWiseStack) -> Self {
        VectorizedStack {
            rows: stack.channels(),
            cols: stack.grid.len(),
            matrix: stack.data.clone(),
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.matrix[i * self.cols..(i + 1) * self.cols]
    }

    fn check_same(&self, other: &VectorizedStack) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }
}

/// Symmetric `N x N` matrix of channel inner products.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub size: usize,
    pub matrix: Vec<f64>,
}

impl GramMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.size + j]
    }
}

pub fn gram(stack: &VectorizedStack) -> GramMatrix {
    let n = stack.rows;
    let mut matrix = vec![0.0; n * n];
    for i in 0..n {
        let fi = stack.row(i);
        for j in i..n {
            let v: f64 = fi.iter().zip(stack.row(j)).map(|(a, b)| a * b).sum();
            matrix[i * n + j] = v;
            matrix[j * n + i] = v;
        }
    }
    GramMatrix { size: n, matrix }
}

/// A scalar loss and its gradient, shaped like the generated input.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub gradient: Vec<f64>,
}

pub fn response_loss(generated: &VectorizedStack, target: &VectorizedStack) -> Result<LossValue> {
    generated.check_same(target)?;
    let (n, m) = (generated.rows, generated.cols);
    let g = gram(generated);
    let a = gram(target);
    let diff: Vec<f64> = g.matrix.iter().zip(&a.matrix).map(|(x, y)| x - y).collect();
    let scale = 1.0 / (4.0 * (n * n) as f64 * (m as f64).powi(2));
    let value = scale * diff.iter().map(|d| d * d).sum::<f64>();
    // dL/dF = 4 * scale * (G - A) F, using the symmetry of G - A.
    let mut gradient = vec![0.0; n * m];
    for i in 0..n {
        let out = &mut gradient[i * m..(i + 1) * m];
        for j in 0..n {
            let e = 4.0 * scale * diff[i * n + j];
            if e == 0.0 {
                continue;
            }
            for (o, f) in out.iter_mut().zip(generated.row(j)) {
                *o += e * f;
            }
        }
    }
    Ok(LossValue { value, gradient })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverlayMode {
    ClosedForm,
    Materialized,
}

/// Largest `N * N * M` the materialized overlay path accepts.
pub const MATERIALIZED_BUDGET: usize = 1_000_000;

pub fn overlay_loss(
    generated: &VectorizedStack,
    target: &VectorizedStack,
    mode: OverlayMode,
) -> Result<LossValue> {
    generated.check_same(target)?;
    match mode {
        OverlayMode::ClosedForm => Ok(overlay_closed_form(generated, target)),
        OverlayMode::Materialized => overlay_materialized(generated, target),
    }
}

fn overlay_scale(n: usize, m: usize) -> f64 {
    1.0 / (4.0 * (n as f64).powi(4) * (m as f64).powi(2))
}

fn overlay_closed_form(generated: &VectorizedStack, target: &VectorizedStack) -> LossValue {
    let (n, m) = (generated.rows, generated.cols);
    let scale = overlay_scale(n, m);
    let nf = n as f64;
    let d: Vec<f64> = generated
        .matrix
        .iter()
        .zip(&target.matrix)
        .map(|(a, b)| a - b)
        .collect();
    let mut col_sum = vec![0.0; m];
    let mut sq_sum = 0.0;
    for row in d.chunks_exact(m) {
        for (s, &v) in col_sum.iter_mut().zip(row) {
            *s += v;
            sq_sum += v * v;
        }
    }
    let sum_sq_cols: f64 = col_sum.iter().map(|s| s * s).sum();
    let value = scale * (2.0 * nf * sq_sum + 2.0 * sum_sq_cols);
    let gradient = d
        .iter()
        .enumerate()
        .map(|(i, &v)| scale * (4.0 * nf * v + 4.0 * col_sum[i % m]))
        .collect();
    LossValue { value, gradient }
}

/// `O[n, n', m] = F[n, m] + F[n', m]`, laid out `(n, n', m)`.
pub fn overlay_tensor(stack: &VectorizedStack) -> Vec<f64> {
    let (n, m) = (stack.rows, stack.cols);
    let mut out = Vec::with_capacity(n * n * m);
    for a in 0..n {
        for b in 0..n {
            out.extend(stack.row(a).iter().zip(stack.row(b)).map(|(x, y)| x + y));
        }
    }
    out
}

fn overlay_materialized(
    generated: &VectorizedStack,
    target: &VectorizedStack,
) -> Result<LossValue> {
    let (n, m) = (generated.rows, generated.cols);
    if n * n * m > MATERIALIZED_BUDGET {
        return Err(Error::InvalidParameter(format!(
            "materialized overlay needs {} entries, budget is {MATERIALIZED_BUDGET}",
            n * n * m
        )));
    }
    let scale = overlay_scale(n, m);
    let o = overlay_tensor(generated);
    let p = overlay_tensor(target);
    let mut value = 0.0;
    let mut gradient = vec![0.0; n * m];
    for a in 0..n {
        for b in 0..n {
            for k in 0..m {
                let idx = (a * n + b) * m + k;
                let e = o[idx] - p[idx];
                value += e * e;
                gradient[a * m + k] += 2.0 * scale * e;
                gradient[b * m + k] += 2.0 * scale * e;
            }
        }
    }
    Ok(LossValue {
        value: scale * value,
        gradient,
    })
}

fn frobenius(test: &DasImage, reference: &DasImage) -> Result<LossValue> {
    if !test.same_shape(reference) {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            test.height, test.width, reference.height, reference.width
        )));
    }
    let mut value = 0.0;
    let gradient = test
        .values
        .iter()
        .zip(&reference.values)
        .map(|(a, b)| {
            let d = a - b;
            value += d * d;
            2.0 * d
        })
        .collect();
    Ok(LossValue { value, gradient })
}

/// `||y - y0||_F^2`, gradient with respect to `y0`.
pub fn texture_loss(y0: &DasImage, y: &DasImage) -> Result<LossValue> {
    frobenius(y0, y)
}

/// `||y - y_hat||_F^2`, gradient with respect to `y_hat`.
pub fn rec_loss(y_hat: &DasImage, y: &DasImage) -> Result<LossValue> {
    frobenius(y_hat, y)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_re: f64,
    pub lambda_ov: f64,
    pub lambda_tex: f64,
    pub lambda_rec: f64,
}

impl LossWeights {
    /// Weights used for the synthetic vessel experiments.
    pub const SYNTHETIC: LossWeights = LossWeights {
        lambda_re: 130.0,
        lambda_ov: 0.02,
        lambda_tex: 42.0,
        lambda_rec: 60.0,
    };

    /// Weights used for the in-vivo experiments.
    pub const IN_VIVO: LossWeights = LossWeights {
        lambda_re: 250.0,
        lambda_ov: 0.6,
        lambda_tex: 30.0,
        lambda_rec: 40.0,
    };

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.lambda_re,
            self.lambda_ov,
            self.lambda_tex,
            self.lambda_rec,
        ];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "loss weights must be finite and non-negative: {all:?}"
            )));
        }
        Ok(())
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights::SYNTHETIC
    }
}

/// The four loss components in fixed order: response, overlay, texture, rec.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub response: f64,
    pub overlay: f64,
    pub texture: f64,
    pub rec: f64,
}

pub fn overall_loss(parts: &LossParts, weights: &LossWeights) -> f64 {
    weights.lambda_re * parts.response
        + weights.lambda_ov * parts.overlay
        + weights.lambda_tex * parts.texture
        + weights.lambda_rec * parts.rec
}
