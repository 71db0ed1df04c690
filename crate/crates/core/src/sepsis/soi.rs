use serde::Serialize;

use super::config::SoiConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SuspicionOfInfection {
    pub soi_time: f64,
    pub antibiotic_time: f64,
    pub culture_time: f64,
}

impl SuspicionOfInfection {
    fn pair(abx: f64, culture: f64, cfg: &SoiConfig) -> Option<Self> {
        let ok = if abx <= culture {
            culture - abx <= cfg.culture_window_h
        } else {
            abx - culture <= cfg.abx_window_h
        };
        ok.then(|| Self {
            soi_time: abx.min(culture),
            antibiotic_time: abx,
            culture_time: culture,
        })
    }

    pub fn shifted(self, hours: f64) -> Self {
        Self {
            soi_time: self.soi_time + hours,
            antibiotic_time: self.antibiotic_time + hours,
            culture_time: self.culture_time + hours,
        }
    }
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// All concomitant antibiotic/culture pairs, ordered by SOI time with
/// at most one entry per clock hour of SOI time.
pub fn detect_soi(
    antibiotic_times: &[f64],
    culture_times: &[f64],
    cfg: &SoiConfig,
) -> Vec<SuspicionOfInfection> {
    let abx = sorted(antibiotic_times);
    let cult = sorted(culture_times);
    let mut out = Vec::new();
    for &a in &abx {
        let lo = cult.partition_point(|&c| c < a);
        for &c in cult[lo..].iter().take_while(|&&c| c - a <= cfg.culture_window_h) {
            out.extend(SuspicionOfInfection::pair(a, c, cfg));
        }
    }
    for &c in &cult {
        let lo = abx.partition_point(|&a| a <= c);
        for &a in abx[lo..].iter().take_while(|&&a| a - c <= cfg.abx_window_h) {
            out.extend(SuspicionOfInfection::pair(a, c, cfg));
        }
    }
    merge_same_hour(out)
}

pub(crate) fn merge_same_hour(mut v: Vec<SuspicionOfInfection>) -> Vec<SuspicionOfInfection> {
    v.sort_by(|x, y| {
        x.soi_time
            .total_cmp(&y.soi_time)
            .then(x.antibiotic_time.total_cmp(&y.antibiotic_time))
            .then(x.culture_time.total_cmp(&y.culture_time))
    });
    v.dedup_by(|later, kept| later.soi_time.floor() == kept.soi_time.floor());
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(abx: &[f64], cult: &[f64], cfg: &SoiConfig) -> Vec<SuspicionOfInfection> {
        let mut all = Vec::new();
        for &a in abx {
            for &c in cult {
                let hit = (a <= c && c - a <= cfg.culture_window_h)
                    || (c < a && a - c <= cfg.abx_window_h);
                if hit {
                    all.push(SuspicionOfInfection {
                        soi_time: a.min(c),
                        antibiotic_time: a,
                        culture_time: c,
                    });
                }
            }
        }
        merge_same_hour(all)
    }

    #[test]
    fn worked_cases() {
        let cfg = SoiConfig::default();
        let s = detect_soi(&[10.0], &[12.0], &cfg);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].soi_time, 10.0);
        let s = detect_soi(&[50.0], &[10.0], &cfg);
        assert_eq!(s[0].soi_time, 10.0);
        assert!(detect_soi(&[5.0], &[], &cfg).is_empty());
        assert!(detect_soi(&[10.0], &[34.5], &cfg).is_empty());
        assert!(detect_soi(&[82.5], &[10.0], &cfg).is_empty());
    }

    #[test]
    fn window_edges_are_inclusive() {
        let cfg = SoiConfig::default();
        assert_eq!(detect_soi(&[10.0], &[34.0], &cfg).len(), 1);
        assert_eq!(detect_soi(&[82.0], &[10.0], &cfg).len(), 1);
    }

    #[test]
    fn same_hour_duplicates_merge() {
        let cfg = SoiConfig::default();
        let s = detect_soi(&[10.2, 10.7], &[11.0], &cfg);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].antibiotic_time, 10.2);
    }

    #[test]
    fn matches_pairwise_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..2000 {
            let cfg = SoiConfig {
                abx_window_h: rng.random_range(0.0..100.0),
                culture_window_h: rng.random_range(0.0..50.0),
            };
            let na = rng.random_range(0..6);
            let nc = rng.random_range(0..6);
            let abx: Vec<f64> = (0..na).map(|_| rng.random_range(0..800) as f64 / 4.0).collect();
            let cult: Vec<f64> = (0..nc).map(|_| rng.random_range(0..800) as f64 / 4.0).collect();
            assert_eq!(detect_soi(&abx, &cult, &cfg), brute(&abx, &cult, &cfg));
        }
    }
}
