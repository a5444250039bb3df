use super::Tensor4;

/// Slope applied to negative inputs.
pub const LEAKY_SLOPE: f64 = 0.1;

pub fn leaky_relu(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

pub fn leaky_forward(input: &Tensor4) -> Tensor4 {
    input.map(leaky_relu)
}

/// Gradient through the rectifier, given the pre-activation input.
pub fn leaky_backward(input: &Tensor4, grad_out: &Tensor4) -> Tensor4 {
    Tensor4 {
        shape: input.shape,
        data: input
            .data
            .iter()
            .zip(&grad_out.data)
            .map(|(&x, &g)| if x >= 0.0 { g } else { LEAKY_SLOPE * g })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_on_non_negative_inputs() {
        for x in [0.0, 1e-12, 0.5, 3.0, 1e9] {
            assert_eq!(leaky_relu(x), x);
        }
        assert_eq!(leaky_relu(-2.0), -0.2);
        let t = Tensor4::new([1, 1, 1, 3], vec![-1.0, 0.0, 2.0]).unwrap();
        let g = leaky_backward(&t, &Tensor4::new([1, 1, 1, 3], vec![1.0; 3]).unwrap());
        assert_eq!(g.data, vec![0.1, 1.0, 1.0]);
    }
}
