use serde::{Deserialize, Serialize};

use super::{ModelInput, StaticKind};
use crate::cohort::WINDOW_HOURS;

/// Per-channel z-scoring fitted on the training split.
///
/// Value channels use mean/std over non-pad rows; flag channels are left
/// alone; dt channels are divided by 24. Numeric statics are z-scored too.
/// A zero standard deviation leaves the channel untouched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub n_features: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub static_mean: Vec<f64>,
    pub static_std: Vec<f64>,
    pub static_numeric: Vec<bool>,
}

fn population_std(sum_sq_dev: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        (sum_sq_dev / n as f64).sqrt()
    }
}

impl Standardizer {
    pub fn fit(train: &[ModelInput], static_numeric: &[bool]) -> Self {
        let f = train.first().map_or(0, |x| x.n_features);
        let s = static_numeric.len();
        let mut sum = vec![0.0; f];
        let mut n = 0usize;
        let mut s_sum = vec![0.0; s];
        for x in train {
            for h in x.pad_hours..WINDOW_HOURS {
                for (acc, v) in sum.iter_mut().zip(&x.step(h)[..f]) {
                    *acc += v;
                }
                n += 1;
            }
            for (acc, v) in s_sum.iter_mut().zip(&x.static_values) {
                *acc += v;
            }
        }
        let mean: Vec<f64> = sum.iter().map(|v| if n > 0 { v / n as f64 } else { 0.0 }).collect();
        let s_mean: Vec<f64> = s_sum
            .iter()
            .map(|v| if train.is_empty() { 0.0 } else { v / train.len() as f64 })
            .collect();
        let mut sq = vec![0.0; f];
        let mut s_sq = vec![0.0; s];
        for x in train {
            for h in x.pad_hours..WINDOW_HOURS {
                for ((acc, v), m) in sq.iter_mut().zip(&x.step(h)[..f]).zip(&mean) {
                    *acc += (v - m) * (v - m);
                }
            }
            for ((acc, v), m) in s_sq.iter_mut().zip(&x.static_values).zip(&s_mean) {
                *acc += (v - m) * (v - m);
            }
        }
        let std = sq.iter().map(|&q| population_std(q, n)).collect();
        let static_std = s_sq.iter().map(|&q| population_std(q, train.len())).collect();
        Self {
            n_features: f,
            mean,
            std,
            static_mean: s_mean,
            static_std,
            static_numeric: static_numeric.to_vec(),
        }
    }

    pub fn apply(&self, x: &mut ModelInput) {
        let f = self.n_features;
        let w = 3 * f;
        for h in 0..WINDOW_HOURS {
            let row = &mut x.hourly[h * w..(h + 1) * w];
            if h >= x.pad_hours {
                for j in 0..f {
                    if self.std[j] > 0.0 {
                        row[j] = (row[j] - self.mean[j]) / self.std[j];
                    }
                }
            }
            for dt in &mut row[2 * f..] {
                *dt /= WINDOW_HOURS as f64;
            }
        }
        for (i, v) in x.static_values.iter_mut().enumerate() {
            if self.static_numeric.get(i).copied().unwrap_or(false) && self.static_std[i] > 0.0 {
                *v = (*v - self.static_mean[i]) / self.static_std[i];
            }
        }
    }
}

/// Everything fitted on the training split and replayed on other splits.
///
/// One-hot columns never set in training are zeroed everywhere, which is
/// the fixed-width equivalent of freezing the vocabulary at training time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessing {
    pub standardizer: Standardizer,
    pub dead_static_columns: Vec<usize>,
}

impl Preprocessing {
    pub fn fit(train: &[ModelInput], static_kinds: &[StaticKind]) -> Self {
        let numeric: Vec<bool> = static_kinds.iter().map(|k| *k == StaticKind::Numeric).collect();
        let dead_static_columns = static_kinds
            .iter()
            .enumerate()
            .filter(|&(i, k)| {
                *k == StaticKind::OneHot && train.iter().all(|x| x.static_values[i] == 0.0)
            })
            .map(|(i, _)| i)
            .collect();
        Self {
            standardizer: Standardizer::fit(train, &numeric),
            dead_static_columns,
        }
    }

    pub fn apply(&self, x: &mut ModelInput) {
        for &i in &self.dead_static_columns {
            x.static_values[i] = 0.0;
        }
        self.standardizer.apply(x);
    }
}
