use serde::Serialize;

use super::Model;
use crate::features::ModelInput;

pub const FD_EPSILON: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradCheckReport {
    /// Max over parameters of `|g_bp - g_fd| / max(1e-8, |g_bp| + |g_fd|)`
    /// with a plain central difference at `FD_EPSILON`.
    pub max_rel_error: f64,
    /// Same measure against the Richardson extrapolation of the central
    /// differences at `FD_EPSILON` and `FD_EPSILON / 2`, which cancels the
    /// second-order truncation term. Batch-norm over sparsely active ReLUs
    /// can make the loss curved enough that the plain estimate is off by
    /// more than 1e-4 even when backprop is exact.
    pub max_rel_error_richardson: f64,
    pub checked: usize,
    /// Parameters whose perturbation switched a ReLU on or off.
    pub skipped_kinks: usize,
    pub grads_finite: bool,
}

fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
}

/// Compare backprop gradients of the training loss on `batch` with
/// central finite differences (unit sample weights).
pub fn gradient_check(model: &Model, batch: &[ModelInput], l2: f64) -> GradCheckReport {
    let refs: Vec<&ModelInput> = batch.iter().collect();
    let weights = vec![1.0; batch.len()];
    let mut grad = vec![0.0; model.params().len()];
    model.loss(&refs, &weights, l2, Some(&mut grad));

    let pattern = |m: &Model| match m {
        Model::Rnn(r) => r.relu_pattern(&refs),
        Model::Logistic(_) => Vec::new(),
    };
    let base_pattern = pattern(model);

    let mut probe = model.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_rel_error_richardson: 0.0,
        checked: 0,
        skipped_kinks: 0,
        grads_finite: grad.iter().all(|g| g.is_finite()),
    };
    for i in 0..grad.len() {
        let orig = probe.params()[i];
        let mut kink = false;
        let mut central = |step: f64| {
            probe.params_mut()[i] = orig + step;
            let plus = probe.loss(&refs, &weights, l2, None);
            kink |= pattern(&probe) != base_pattern;
            probe.params_mut()[i] = orig - step;
            let minus = probe.loss(&refs, &weights, l2, None);
            kink |= pattern(&probe) != base_pattern;
            probe.params_mut()[i] = orig;
            (plus - minus) / (2.0 * step)
        };
        let fd = central(FD_EPSILON);
        let fd_half = central(FD_EPSILON / 2.0);
        if kink {
            report.skipped_kinks += 1;
            continue;
        }
        let richardson = (4.0 * fd_half - fd) / 3.0;
        report.max_rel_error = report.max_rel_error.max(rel_error(grad[i], fd));
        report.max_rel_error_richardson = report.max_rel_error_richardson.max(rel_error(grad[i], richardson));
        report.checked += 1;
    }
    report
}
