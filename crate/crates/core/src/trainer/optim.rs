use super::model::{Gradients, ModelParams};

/// Adaptive-moment descent with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: i32,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    pub fn new(model: &ModelParams, lr: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            epsilon,
            step: 0,
            m: model.zero_gradients(),
            v: model.zero_gradients(),
        }
    }

    pub fn step(&mut self, model: &mut ModelParams, grads: &Gradients) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (k, param) in model.tensors.values_mut().enumerate() {
            let (m, v, g) = (&mut self.m[k], &mut self.v[k], &grads[k]);
            for i in 0..g.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                param.data[i] -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::build_model;
    use crate::trainer::TrainConfig;

    #[test]
    fn first_step_moves_by_lr() {
        let cfg = TrainConfig {
            grid: 8,
            total_channels: 4,
            input_channels: 1,
            ..TrainConfig::default()
        };
        let mut model = build_model(&cfg, 0).unwrap();
        let before = model.clone();
        let mut grads = model.zero_gradients();
        grads[0][0] = 3.0;
        grads[0][1] = -1e-3;
        let mut opt = Adam::new(&model, 0.01, 0.9, 0.999, 1e-8);
        opt.step(&mut model, &grads);
        let name = model.tensors.get_index(0).unwrap().0.clone();
        let (a, b) = (&model.tensors[&name].data, &before.tensors[&name].data);
        assert!((b[0] - a[0] - 0.01).abs() < 1e-9);
        assert!((a[1] - b[1] - 0.01).abs() < 1e-6);
        assert_eq!(a[2], b[2]);
    }

    #[test]
    fn zero_learning_rate_is_inert() {
        let cfg = TrainConfig {
            grid: 8,
            total_channels: 4,
            input_channels: 1,
            ..TrainConfig::default()
        };
        let mut model = build_model(&cfg, 0).unwrap();
        let before = model.clone();
        let grads: Gradients = model
            .zero_gradients()
            .into_iter()
            .map(|g| vec![1.0; g.len()])
            .collect();
        let mut opt = Adam::new(&model, 0.0, 0.9, 0.999, 1e-8);
        for _ in 0..3 {
            opt.step(&mut model, &grads);
        }
        assert_eq!(model, before);
    }
}
