use rand::Rng;
use rayon::prelude::*;

use super::{bce_with_logit, sigmoid, xavier};
use crate::cohort::WINDOW_HOURS;
use crate::features::ModelInput;

pub const MLP_DEPTH: usize = 4;
pub const MLP_WIDTH: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq)]
struct LayerOffsets {
    n_in: usize,
    gamma: usize,
    beta: usize,
    w: usize,
    b: usize,
    /// Offset of this layer's slot in the running-statistics buffers.
    stat: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Layout {
    d_in: usize,
    hidden: usize,
    w_xh: usize,
    w_hh: usize,
    b_h: usize,
    rnn_end: usize,
    layers: [LayerOffsets; MLP_DEPTH],
    head_w: usize,
    head_b: usize,
    total: usize,
    n_stats: usize,
}

impl Layout {
    fn new(n_features: usize, n_static: usize, hidden: usize) -> Self {
        let d_in = 3 * n_features;
        let w_xh = 0;
        let w_hh = w_xh + hidden * d_in;
        let b_h = w_hh + hidden * hidden;
        let rnn_end = b_h + hidden;
        let mut at = rnn_end;
        let mut stat = 0;
        let layers = std::array::from_fn(|k| {
            let n_in = if k == 0 { n_static } else { MLP_WIDTH };
            let l = LayerOffsets {
                n_in,
                gamma: at,
                beta: at + n_in,
                w: at + 2 * n_in,
                b: at + 2 * n_in + MLP_WIDTH * n_in,
                stat,
            };
            at = l.b + MLP_WIDTH;
            stat += n_in;
            l
        });
        let head_w = at;
        let head_b = head_w + hidden + MLP_WIDTH;
        Self {
            d_in,
            hidden,
            w_xh,
            w_hh,
            b_h,
            rnn_end,
            layers,
            head_w,
            head_b,
            total: head_b + 1,
            n_stats: stat,
        }
    }

    /// Ranges of weight matrices subject to L2.
    fn l2_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut r = vec![self.w_xh..self.b_h];
        for l in &self.layers {
            r.push(l.w..l.b);
        }
        r.push(self.head_w..self.head_b);
        r
    }
}

/// Elman RNN over the 24 hourly steps, a 4 x 32 BN-Linear-ReLU MLP over
/// the statics, and a linear head on their concatenation.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnModel {
    pub n_features: usize,
    pub n_static: usize,
    pub hidden: usize,
    pub params: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub bn_momentum: f64,
    pub bn_eps: f64,
    layout: Layout,
}

/// Batch statistics observed in one training-mode forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub unbiased_var: Vec<f64>,
}

struct LayerCache {
    mean: Vec<f64>,
    var: Vec<f64>,
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
}

struct MlpCache {
    layers: Vec<LayerCache>,
    out: Vec<f64>,
}

impl RnnModel {
    pub fn zeros(n_features: usize, n_static: usize, hidden: usize, bn_momentum: f64, bn_eps: f64) -> Self {
        let layout = Layout::new(n_features, n_static, hidden);
        let mut params = vec![0.0; layout.total];
        for l in &layout.layers {
            params[l.gamma..l.beta].fill(1.0);
        }
        Self {
            n_features,
            n_static,
            hidden,
            params,
            running_mean: vec![0.0; layout.n_stats],
            running_var: vec![1.0; layout.n_stats],
            bn_momentum,
            bn_eps,
            layout,
        }
    }

    pub fn init<R: Rng>(
        n_features: usize,
        n_static: usize,
        hidden: usize,
        bn_momentum: f64,
        bn_eps: f64,
        rng: &mut R,
    ) -> Self {
        let mut m = Self::zeros(n_features, n_static, hidden, bn_momentum, bn_eps);
        let lay = m.layout;
        xavier(rng, lay.d_in, hidden, &mut m.params[lay.w_xh..lay.w_hh]);
        xavier(rng, hidden, hidden, &mut m.params[lay.w_hh..lay.b_h]);
        for l in &lay.layers {
            xavier(rng, l.n_in, MLP_WIDTH, &mut m.params[l.w..l.b]);
        }
        xavier(rng, hidden + MLP_WIDTH, 1, &mut m.params[lay.head_w..lay.head_b]);
        m
    }

    /// Rebuild from stored parameters and buffers.
    pub fn from_parts(
        n_features: usize,
        n_static: usize,
        hidden: usize,
        bn_momentum: f64,
        bn_eps: f64,
        params: Vec<f64>,
        running_mean: Vec<f64>,
        running_var: Vec<f64>,
    ) -> Option<Self> {
        let layout = Layout::new(n_features, n_static, hidden);
        (params.len() == layout.total
            && running_mean.len() == layout.n_stats
            && running_var.len() == layout.n_stats)
            .then_some(Self {
                n_features,
                n_static,
                hidden,
                params,
                running_mean,
                running_var,
                bn_momentum,
                bn_eps,
                layout,
            })
    }

    pub fn n_params(&self) -> usize {
        self.layout.total
    }

    /// Named parameter blocks with their flat ranges.
    pub fn blocks(&self) -> Vec<(String, std::ops::Range<usize>)> {
        let l = &self.layout;
        let mut out = vec![
            ("rnn.w_xh".to_string(), l.w_xh..l.w_hh),
            ("rnn.w_hh".to_string(), l.w_hh..l.b_h),
            ("rnn.b_h".to_string(), l.b_h..l.rnn_end),
        ];
        for (k, x) in l.layers.iter().enumerate() {
            out.push((format!("mlp{k}.bn_gamma"), x.gamma..x.beta));
            out.push((format!("mlp{k}.bn_beta"), x.beta..x.w));
            out.push((format!("mlp{k}.weight"), x.w..x.b));
            out.push((format!("mlp{k}.bias"), x.b..x.b + MLP_WIDTH));
        }
        out.push(("head.weight".to_string(), l.head_w..l.head_b));
        out.push(("head.bias".to_string(), l.head_b..l.total));
        out
    }

    /// Hidden states h_0..h_24 (h_0 = 0), flattened.
    fn rnn_forward(&self, x: &ModelInput) -> Vec<f64> {
        let lay = &self.layout;
        let (h, d) = (lay.hidden, lay.d_in);
        let p = &self.params;
        let w_xh = &p[lay.w_xh..lay.w_hh];
        let w_hh = &p[lay.w_hh..lay.b_h];
        let b_h = &p[lay.b_h..lay.rnn_end];
        let mut hs = vec![0.0; (WINDOW_HOURS + 1) * h];
        for t in 0..WINDOW_HOURS {
            let xt = x.step(t);
            let (prev, next) = hs.split_at_mut((t + 1) * h);
            let prev = &prev[t * h..];
            let next = &mut next[..h];
            for i in 0..h {
                let mut acc = b_h[i];
                let wx = &w_xh[i * d..(i + 1) * d];
                for j in 0..d {
                    acc += wx[j] * xt[j];
                }
                let wh = &w_hh[i * h..(i + 1) * h];
                for j in 0..h {
                    acc += wh[j] * prev[j];
                }
                next[i] = acc.tanh();
            }
        }
        hs
    }

    /// Backprop through time; returns the gradient of the RNN block.
    fn rnn_backward(&self, x: &ModelInput, hs: &[f64], dh_final: &[f64]) -> Vec<f64> {
        let lay = &self.layout;
        let (h, d) = (lay.hidden, lay.d_in);
        let w_hh = &self.params[lay.w_hh..lay.b_h];
        let mut g = vec![0.0; lay.rnn_end];
        let mut dh = dh_final.to_vec();
        let mut dpre = vec![0.0; h];
        for t in (0..WINDOW_HOURS).rev() {
            let ht = &hs[(t + 1) * h..(t + 2) * h];
            let hprev = &hs[t * h..(t + 1) * h];
            let xt = x.step(t);
            for i in 0..h {
                dpre[i] = dh[i] * (1.0 - ht[i] * ht[i]);
            }
            let (gx, rest) = g.split_at_mut(lay.w_hh);
            let (gh, gb) = rest.split_at_mut(h * h);
            for i in 0..h {
                let di = dpre[i];
                if di == 0.0 {
                    continue;
                }
                let row = &mut gx[i * d..(i + 1) * d];
                for j in 0..d {
                    row[j] += di * xt[j];
                }
                let row = &mut gh[i * h..(i + 1) * h];
                for j in 0..h {
                    row[j] += di * hprev[j];
                }
                gb[i] += di;
            }
            for j in 0..h {
                let mut acc = 0.0;
                for i in 0..h {
                    acc += w_hh[i * h + j] * dpre[i];
                }
                dh[j] = acc;
            }
        }
        g
    }

    fn mlp_forward(&self, statics: &[f64], batch: usize, train: bool) -> MlpCache {
        let p = &self.params;
        let mut a = statics.to_vec();
        let mut layers = Vec::with_capacity(MLP_DEPTH);
        for l in &self.layout.layers {
            let n = l.n_in;
            let (mean, var): (Vec<f64>, Vec<f64>) = if train {
                let mut mean = vec![0.0; n];
                for b in 0..batch {
                    for j in 0..n {
                        mean[j] += a[b * n + j];
                    }
                }
                mean.iter_mut().for_each(|m| *m /= batch as f64);
                let mut var = vec![0.0; n];
                for b in 0..batch {
                    for j in 0..n {
                        let c = a[b * n + j] - mean[j];
                        var[j] += c * c;
                    }
                }
                var.iter_mut().for_each(|v| *v /= batch as f64);
                (mean, var)
            } else {
                (
                    self.running_mean[l.stat..l.stat + n].to_vec(),
                    self.running_var[l.stat..l.stat + n].to_vec(),
                )
            };
            let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.bn_eps).sqrt()).collect();
            let gamma = &p[l.gamma..l.beta];
            let beta = &p[l.beta..l.w];
            let w = &p[l.w..l.b];
            let bias = &p[l.b..l.b + MLP_WIDTH];
            let mut xhat = vec![0.0; batch * n];
            let mut y = vec![0.0; batch * n];
            let mut z = vec![0.0; batch * MLP_WIDTH];
            let mut out = vec![0.0; batch * MLP_WIDTH];
            for b in 0..batch {
                for j in 0..n {
                    let xh = (a[b * n + j] - mean[j]) * inv_std[j];
                    xhat[b * n + j] = xh;
                    y[b * n + j] = gamma[j] * xh + beta[j];
                }
                let yb = &y[b * n..(b + 1) * n];
                for o in 0..MLP_WIDTH {
                    let wo = &w[o * n..(o + 1) * n];
                    let mut acc = bias[o];
                    for j in 0..n {
                        acc += wo[j] * yb[j];
                    }
                    z[b * MLP_WIDTH + o] = acc;
                    out[b * MLP_WIDTH + o] = acc.max(0.0);
                }
            }
            layers.push(LayerCache {
                mean,
                var,
                xhat,
                inv_std,
                y,
                z,
            });
            a = out;
        }
        MlpCache { layers, out: a }
    }

    fn batch_stats(cache: &MlpCache, batch: usize) -> BatchStats {
        let scale = if batch > 1 { batch as f64 / (batch - 1) as f64 } else { 0.0 };
        BatchStats {
            mean: cache.layers.iter().flat_map(|c| c.mean.iter().copied()).collect(),
            unbiased_var: cache
                .layers
                .iter()
                .flat_map(|c| c.var.iter().map(move |v| v * scale))
                .collect(),
        }
    }

    /// Exponential moving update of the BN running statistics.
    pub fn update_running_stats(&mut self, stats: &BatchStats) {
        let m = self.bn_momentum;
        for (r, s) in self.running_mean.iter_mut().zip(&stats.mean) {
            *r = (1.0 - m) * *r + m * s;
        }
        for (r, s) in self.running_var.iter_mut().zip(&stats.unbiased_var) {
            *r = (1.0 - m) * *r + m * s;
        }
    }

    fn head_logit(&self, h_final: &[f64], mlp_out: &[f64]) -> f64 {
        let lay = &self.layout;
        let hw = &self.params[lay.head_w..lay.head_b];
        let mut z = self.params[lay.head_b];
        for (w, v) in hw.iter().zip(h_final.iter().chain(mlp_out)) {
            z += w * v;
        }
        z
    }

    /// Inference-mode probability (running BN statistics).
    pub fn predict(&self, x: &ModelInput) -> f64 {
        let hs = self.rnn_forward(x);
        let h = self.hidden;
        let mlp = self.mlp_forward(&x.static_values, 1, false);
        sigmoid(self.head_logit(&hs[WINDOW_HOURS * h..], &mlp.out))
    }

    /// ReLU on/off pattern of a training-mode pass, for finite-difference checks.
    pub fn relu_pattern(&self, batch: &[&ModelInput]) -> Vec<bool> {
        let statics: Vec<f64> = batch.iter().flat_map(|x| x.static_values.iter().copied()).collect();
        let cache = self.mlp_forward(&statics, batch.len(), true);
        cache.layers.iter().flat_map(|c| c.z.iter().map(|&v| v > 0.0)).collect()
    }

    /// Training-mode loss; fills `grad` when given. Also returns the batch
    /// statistics so the caller can update the running buffers.
    pub fn loss(
        &self,
        batch: &[&ModelInput],
        weights: &[f64],
        l2: f64,
        grad: Option<&mut [f64]>,
    ) -> (f64, BatchStats) {
        let lay = self.layout;
        let h = lay.hidden;
        let bsz = batch.len();
        let n = bsz as f64;
        let statics: Vec<f64> = batch.iter().flat_map(|x| x.static_values.iter().copied()).collect();
        let hs: Vec<Vec<f64>> = batch.par_iter().map(|x| self.rnn_forward(x)).collect();
        let mlp = self.mlp_forward(&statics, bsz, true);
        let stats = Self::batch_stats(&mlp, bsz);

        let mut data = 0.0;
        let mut dz = vec![0.0; bsz];
        for b in 0..bsz {
            let z = self.head_logit(&hs[b][WINDOW_HOURS * h..], &mlp.out[b * MLP_WIDTH..(b + 1) * MLP_WIDTH]);
            data += weights[b] * bce_with_logit(z, batch[b].label);
            dz[b] = weights[b] * (sigmoid(z) - batch[b].label as u8 as f64) / n;
        }
        let reg: f64 = lay
            .l2_ranges()
            .into_iter()
            .map(|r| self.params[r].iter().map(|w| w * w).sum::<f64>())
            .sum::<f64>()
            * l2;
        let loss = data / n + reg;

        let Some(g) = grad else {
            return (loss, stats);
        };
        g.fill(0.0);
        let p = &self.params;
        let head = &p[lay.head_w..lay.head_b];

        // Head.
        for b in 0..bsz {
            let feats = hs[b][WINDOW_HOURS * h..]
                .iter()
                .chain(&mlp.out[b * MLP_WIDTH..(b + 1) * MLP_WIDTH]);
            for (gi, v) in g[lay.head_w..lay.head_b].iter_mut().zip(feats) {
                *gi += dz[b] * v;
            }
            g[lay.head_b] += dz[b];
        }

        // Recurrent block, one sample per task, summed in batch order.
        let per_sample: Vec<Vec<f64>> = (0..bsz)
            .into_par_iter()
            .map(|b| {
                let dh: Vec<f64> = head[..h].iter().map(|w| dz[b] * w).collect();
                self.rnn_backward(batch[b], &hs[b], &dh)
            })
            .collect();
        for gs in &per_sample {
            for (gi, v) in g[..lay.rnn_end].iter_mut().zip(gs) {
                *gi += v;
            }
        }

        // Static MLP, last layer first.
        let dz_ref = &dz;
        let mut da: Vec<f64> = (0..bsz)
            .flat_map(|b| head[h..].iter().map(move |w| dz_ref[b] * w))
            .collect();
        for (l, c) in lay.layers.iter().zip(&mlp.layers).rev() {
            let ni = l.n_in;
            let w = &p[l.w..l.b];
            let gamma = &p[l.gamma..l.beta];
            let mut dy = vec![0.0; bsz * ni];
            for b in 0..bsz {
                for o in 0..MLP_WIDTH {
                    let k = b * MLP_WIDTH + o;
                    if c.z[k] <= 0.0 {
                        continue;
                    }
                    let d = da[k];
                    g[l.b + o] += d;
                    let yb = &c.y[b * ni..(b + 1) * ni];
                    let gw = &mut g[l.w + o * ni..l.w + (o + 1) * ni];
                    for j in 0..ni {
                        gw[j] += d * yb[j];
                    }
                    let wo = &w[o * ni..(o + 1) * ni];
                    for j in 0..ni {
                        dy[b * ni + j] += d * wo[j];
                    }
                }
            }
            let mut sum_dxhat = vec![0.0; ni];
            let mut sum_dxhat_xhat = vec![0.0; ni];
            for b in 0..bsz {
                for j in 0..ni {
                    let k = b * ni + j;
                    g[l.gamma + j] += dy[k] * c.xhat[k];
                    g[l.beta + j] += dy[k];
                    let dxh = dy[k] * gamma[j];
                    sum_dxhat[j] += dxh;
                    sum_dxhat_xhat[j] += dxh * c.xhat[k];
                }
            }
            let mut da_prev = vec![0.0; bsz * ni];
            for b in 0..bsz {
                for j in 0..ni {
                    let k = b * ni + j;
                    let dxh = dy[k] * gamma[j];
                    da_prev[k] = c.inv_std[j] / n * (n * dxh - sum_dxhat[j] - c.xhat[k] * sum_dxhat_xhat[j]);
                }
            }
            da = da_prev;
        }

        for r in lay.l2_ranges() {
            for i in r {
                g[i] += 2.0 * l2 * p[i];
            }
        }
        (loss, stats)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tanh_step(w_x: &[f64], w_h: &[f64], b: &[f64], x: &[f64], h: &[f64]) -> Vec<f64> {
        let n = b.len();
        (0..n)
            .map(|i| {
                let mut a = b[i];
                for (j, xj) in x.iter().enumerate() {
                    a += w_x[i * x.len() + j] * xj;
                }
                for (j, hj) in h.iter().enumerate() {
                    a += w_h[i * n + j] * hj;
                }
                a.tanh()
            })
            .collect()
    }

    #[test]
    fn zero_head_predicts_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut m = RnnModel::init(2, 1, 8, 0.1, 1e-5, &mut rng);
        let l = m.layout;
        m.params[l.w_hh..l.b_h].fill(0.0);
        m.params[l.head_w..l.total].fill(0.0);
        let x = ModelInput::new(2, vec![0.3; 144], vec![1.0], 0, true);
        assert_eq!(m.predict(&x), 0.5);
    }

    /// Straight-line recomputation of a tiny model's forward pass.
    #[test]
    fn tiny_model_matches_hand_rolled_forward() {
        let (f, s, hid) = (1usize, 1usize, 2usize);
        let mut m = RnnModel::zeros(f, s, hid, 0.1, 1e-5);
        for (i, p) in m.params.iter_mut().enumerate() {
            *p = ((i as f64) * 0.61).sin() * 0.5;
        }
        for (i, v) in m.running_mean.iter_mut().enumerate() {
            *v = (i as f64 * 0.3).cos() * 0.2;
        }
        for (i, v) in m.running_var.iter_mut().enumerate() {
            *v = 0.5 + (i as f64 * 0.7).sin().abs();
        }
        let hourly: Vec<f64> = (0..72).map(|i| ((i * 7 % 11) as f64 - 5.0) / 4.0).collect();
        let x = ModelInput::new(f, hourly.clone(), vec![0.8], 0, false);

        let p = &m.params;
        let w_x = &p[0..6];
        let w_h = &p[6..10];
        let b_h = &p[10..12];
        let mut h = vec![0.0, 0.0];
        for t in 0..24 {
            h = tanh_step(w_x, w_h, b_h, &hourly[t * 3..t * 3 + 3], &h);
        }
        let mut a = vec![0.8];
        let mut at = 12;
        let mut stat = 0;
        for k in 0..4 {
            let n_in = if k == 0 { 1 } else { 32 };
            let gamma = &p[at..at + n_in];
            let beta = &p[at + n_in..at + 2 * n_in];
            let w = &p[at + 2 * n_in..at + 2 * n_in + 32 * n_in];
            let b = &p[at + 2 * n_in + 32 * n_in..at + 2 * n_in + 32 * n_in + 32];
            let y: Vec<f64> = (0..n_in)
                .map(|j| {
                    let xh = (a[j] - m.running_mean[stat + j]) / (m.running_var[stat + j] + 1e-5).sqrt();
                    gamma[j] * xh + beta[j]
                })
                .collect();
            a = (0..32)
                .map(|o| {
                    let mut z = b[o];
                    for j in 0..n_in {
                        z += w[o * n_in + j] * y[j];
                    }
                    z.max(0.0)
                })
                .collect();
            at += 2 * n_in + 32 * n_in + 32;
            stat += n_in;
        }
        let hw = &p[at..at + 34];
        let mut z = p[at + 34];
        for (wi, v) in hw.iter().zip(h.iter().chain(&a)) {
            z += wi * v;
        }
        let expected = 1.0 / (1.0 + (-z).exp());
        assert!((m.predict(&x) - expected).abs() < 1e-12);
        assert_eq!(m.n_params(), at + 35);
    }

    #[test]
    fn running_stats_use_unbiased_variance() {
        let mut m = RnnModel::zeros(1, 1, 2, 0.1, 1e-5);
        let xs: Vec<ModelInput> = [1.0, 3.0]
            .iter()
            .map(|&s| ModelInput::new(1, vec![0.0; 72], vec![s], 0, false))
            .collect();
        let refs: Vec<&ModelInput> = xs.iter().collect();
        let (_, stats) = m.loss(&refs, &[1.0, 1.0], 0.0, None);
        assert_eq!(stats.mean[0], 2.0);
        assert_eq!(stats.unbiased_var[0], 2.0);
        m.update_running_stats(&stats);
        assert!((m.running_mean[0] - 0.2).abs() < 1e-15);
        assert!((m.running_var[0] - 1.1).abs() < 1e-15);
    }
}
