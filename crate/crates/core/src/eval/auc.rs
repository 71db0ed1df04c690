#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AucError {
    #[error("AUC is undefined: {positives} positives and {negatives} negatives")]
    SingleClass { positives: usize, negatives: usize },
    #[error("scores and labels differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("score {0} is not finite")]
    NonFinite(usize),
}

/// Mann-Whitney AUC with half credit for ties, via midranks.
///
/// The numerator is accumulated as an exact integer (twice the U statistic)
/// so the result equals the pairwise count divided by `n_pos * n_neg`.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64, AucError> {
    if scores.len() != labels.len() {
        return Err(AucError::LengthMismatch(scores.len(), labels.len()));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(AucError::NonFinite(i));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(AucError::SingleClass {
            positives: n_pos,
            negatives: n_neg,
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum over positives of doubled midranks (1-based).
    let mut doubled_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let doubled_midrank = (i + 1 + j) as u128;
        let pos_in_group = order[i..j].iter().filter(|&&k| labels[k]).count() as u128;
        doubled_rank_sum += doubled_midrank * pos_in_group;
        i = j;
    }
    let np = n_pos as u128;
    let doubled_u = doubled_rank_sum - np * (np + 1);
    Ok(doubled_u as f64 / (2 * np * n_neg as u128) as f64)
}

#[cfg(test)]
pub(crate) fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut doubled: u128 = 0;
    let (mut np, mut nn) = (0u128, 0u128);
    for (i, &li) in labels.iter().enumerate() {
        if li {
            np += 1;
        } else {
            nn += 1;
        }
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            if scores[i] > scores[j] {
                doubled += 2;
            } else if scores[i] == scores[j] {
                doubled += 1;
            }
        }
    }
    doubled as f64 / (2 * np * nn) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn worked_cases() {
        assert_eq!(auc(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap(), 1.0);
        assert_eq!(auc(&[0.3; 6], &[true, false, true, false, false, true]).unwrap(), 0.5);
        let s = [0.9, 0.4, 0.6, 0.2];
        let l = [true, false, true, false];
        assert_eq!(auc(&s, &l).unwrap(), pairwise_auc(&s, &l));
        assert!(matches!(auc(&[0.1, 0.2], &[true, true]), Err(AucError::SingleClass { .. })));
    }

    #[test]
    fn matches_pairwise_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..300 {
            let n = rng.random_range(2..120);
            let levels = rng.random_range(1..10);
            let s: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 / 3.0).collect();
            let mut l: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
            l[0] = true;
            l[1] = false;
            assert_eq!(auc(&s, &l).unwrap(), pairwise_auc(&s, &l));
            let flipped: Vec<bool> = l.iter().map(|x| !x).collect();
            assert!((auc(&s, &l).unwrap() + auc(&s, &flipped).unwrap() - 1.0).abs() < 1e-12);
            let warped: Vec<f64> = s.iter().map(|x| (3.0 * x).exp() - 7.0).collect();
            assert_eq!(auc(&warped, &l).unwrap(), auc(&s, &l).unwrap());
        }
    }
}
