use rand::Rng;

use super::{bce_with_logit, sigmoid, xavier};
use crate::features::{flat_len, ModelInput};

/// `sigmoid(w . flatten(x) + b)`; `params` holds `w` then `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub n_features: usize,
    pub n_static: usize,
    pub params: Vec<f64>,
}

impl LogisticModel {
    pub fn zeros(n_features: usize, n_static: usize) -> Self {
        Self {
            n_features,
            n_static,
            params: vec![0.0; flat_len(n_features, n_static) + 1],
        }
    }

    pub fn init<R: Rng>(n_features: usize, n_static: usize, rng: &mut R) -> Self {
        let mut m = Self::zeros(n_features, n_static);
        let d = m.input_dim();
        xavier(rng, d, 1, &mut m.params[..d]);
        m
    }

    pub fn input_dim(&self) -> usize {
        flat_len(self.n_features, self.n_static)
    }

    pub fn weights(&self) -> &[f64] {
        &self.params[..self.input_dim()]
    }

    pub fn bias(&self) -> f64 {
        self.params[self.input_dim()]
    }

    pub fn logit(&self, x: &ModelInput) -> f64 {
        let w = self.weights();
        let (wh, ws) = w.split_at(x.hourly.len());
        let dot_h: f64 = wh.iter().zip(&x.hourly).map(|(a, b)| a * b).sum();
        let dot_s: f64 = ws.iter().zip(&x.static_values).map(|(a, b)| a * b).sum();
        dot_h + dot_s + self.bias()
    }

    pub fn predict(&self, x: &ModelInput) -> f64 {
        sigmoid(self.logit(x))
    }

    pub fn loss(&self, batch: &[&ModelInput], weights: &[f64], l2: f64, grad: Option<&mut [f64]>) -> f64 {
        let d = self.input_dim();
        let n = batch.len() as f64;
        let reg: f64 = self.weights().iter().map(|w| w * w).sum::<f64>() * l2;
        let mut data = 0.0;
        let mut g = grad;
        if let Some(g) = g.as_deref_mut() {
            g.fill(0.0);
        }
        for (x, &c) in batch.iter().zip(weights) {
            let z = self.logit(x);
            data += c * bce_with_logit(z, x.label);
            if let Some(g) = g.as_deref_mut() {
                let dz = c * (sigmoid(z) - x.label as u8 as f64) / n;
                let (gh, rest) = g[..d].split_at_mut(x.hourly.len());
                for (gi, xi) in gh.iter_mut().zip(&x.hourly) {
                    *gi += dz * xi;
                }
                for (gi, xi) in rest.iter_mut().zip(&x.static_values) {
                    *gi += dz * xi;
                }
                g[d] += dz;
            }
        }
        if let Some(g) = g {
            for (gi, w) in g[..d].iter_mut().zip(self.weights()) {
                *gi += 2.0 * l2 * w;
            }
        }
        data / n + reg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_model_predicts_half() {
        let m = LogisticModel::zeros(2, 3);
        let x = ModelInput::new(2, vec![1.7; 144], vec![3.0, -1.0, 2.0], 0, true);
        assert_eq!(m.predict(&x), 0.5);
        assert_eq!(m.params.len(), 144 + 3 + 1);
    }

    #[test]
    fn logit_is_dot_with_flattened_input() {
        let mut m = LogisticModel::zeros(1, 1);
        for (i, p) in m.params.iter_mut().enumerate() {
            *p = (i as f64 * 0.37).sin();
        }
        let x = ModelInput::new(1, (0..72).map(|i| i as f64 / 10.0).collect(), vec![2.0], 0, false);
        let flat = x.flatten();
        let expected: f64 = flat.iter().zip(m.weights()).map(|(a, b)| a * b).sum::<f64>() + m.bias();
        assert!((m.logit(&x) - expected).abs() < 1e-12);
    }
}
