use serde::Serialize;

use super::config::{BaselineRule, SofaConfig};
use super::sofa::SofaSeries;
use super::soi::SuspicionOfInfection;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SepsisOnset {
    pub onset_time: f64,
    pub soi: SuspicionOfInfection,
    pub sofa_delta: i32,
}

/// SOFA increase at each hour relative to the configured reference.
pub fn sofa_deltas(sofa: &SofaSeries, cfg: &SofaConfig) -> Vec<i32> {
    let t = sofa.totals();
    match cfg.baseline {
        BaselineRule::FirstHour => {
            let b = sofa.baseline() as i32;
            t.iter().map(|&x| x as i32 - b).collect()
        }
        BaselineRule::RollingMin => (0..t.len())
            .map(|h| {
                let lo = h.saturating_sub(cfg.rolling_min_hours.max(1));
                let reference = t[lo..h.max(1)].iter().min().copied().unwrap_or(t[0]);
                t[h] as i32 - reference as i32
            })
            .collect(),
    }
}

/// Earliest hour inside any SOI window whose SOFA increase reaches
/// `cfg.delta`. Ties between SOIs go to the first in `sois`.
pub fn label_sepsis3(
    sofa: &SofaSeries,
    sois: &[SuspicionOfInfection],
    cfg: &SofaConfig,
) -> Option<SepsisOnset> {
    let deltas = sofa_deltas(sofa, cfg);
    let qualifying: Vec<usize> = (0..deltas.len())
        .filter(|&h| deltas[h] >= cfg.delta as i32)
        .collect();
    let mut best: Option<(usize, &SuspicionOfInfection)> = None;
    for soi in sois {
        let lo = soi.soi_time - cfg.window_pre_h;
        let hi = soi.soi_time + cfg.window_post_h;
        let i = qualifying.partition_point(|&h| (h as f64) < lo);
        let Some(&h) = qualifying.get(i) else { continue };
        if h as f64 <= hi && best.is_none_or(|(b, _)| h < b) {
            best = Some((h, soi));
        }
    }
    best.map(|(h, soi)| SepsisOnset {
        onset_time: h as f64,
        soi: *soi,
        sofa_delta: deltas[h],
    })
}
