use crate::cohort::WINDOW_HOURS;

/// Model-ready sample: 24 rows of `[values F | flags F | dt F]` plus statics.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub n_features: usize,
    pub hourly: Vec<f64>,
    pub static_values: Vec<f64>,
    pub pad_hours: usize,
    pub label: bool,
}

impl ModelInput {
    pub fn new(n_features: usize, hourly: Vec<f64>, static_values: Vec<f64>, pad_hours: usize, label: bool) -> Self {
        assert_eq!(hourly.len(), WINDOW_HOURS * 3 * n_features, "hourly block must be 24 x 3F");
        Self {
            n_features,
            hourly,
            static_values,
            pad_hours,
            label,
        }
    }

    pub fn step_width(&self) -> usize {
        3 * self.n_features
    }

    /// One hour's `[values | flags | dt]` row.
    pub fn step(&self, hour: usize) -> &[f64] {
        let w = self.step_width();
        &self.hourly[hour * w..(hour + 1) * w]
    }

    pub fn flat_len(&self) -> usize {
        flat_len(self.n_features, self.static_values.len())
    }

    /// Hour-major hourly block followed by the static vector.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.flat_len());
        out.extend_from_slice(&self.hourly);
        out.extend_from_slice(&self.static_values);
        out
    }

    pub fn unflatten(flat: &[f64], n_features: usize, n_static: usize, pad_hours: usize, label: bool) -> Self {
        assert_eq!(flat.len(), flat_len(n_features, n_static));
        let split = WINDOW_HOURS * 3 * n_features;
        Self::new(n_features, flat[..split].to_vec(), flat[split..].to_vec(), pad_hours, label)
    }
}

pub fn flat_len(n_features: usize, n_static: usize) -> usize {
    WINDOW_HOURS * 3 * n_features + n_static
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lengths() {
        assert_eq!(flat_len(1, 1), 73);
        assert_eq!(flat_len(6, 1), 433);
    }

    #[test]
    fn flatten_round_trip() {
        let hourly: Vec<f64> = (0..24 * 6).map(f64::from).collect();
        let x = ModelInput::new(2, hourly, vec![7.0, 8.0], 3, true);
        let flat = x.flatten();
        assert_eq!(flat.len(), 24 * 6 + 2);
        assert_eq!(flat[6], x.step(1)[0]);
        assert_eq!(ModelInput::unflatten(&flat, 2, 2, 3, true), x);
    }
}
