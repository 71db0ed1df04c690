use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng::{self, tags};
use crate::types::{PatientId, StayId, YearBucket};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    YearAgnostic,
    YearBucket,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::YearAgnostic => "year_agnostic",
            Regime::YearBucket => "year_bucket",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regime {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "year_agnostic" => Ok(Regime::YearAgnostic),
            "year_bucket" => Ok(Regime::YearBucket),
            other => Err(format!("unknown regime {other:?} (expected year_agnostic or year_bucket)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.70,
            val: 0.15,
            test: 0.15,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<(), SplitError> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|p| !p.is_finite() || *p < 0.0) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(SplitError::Ratios(*self));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Assignment {
    Train,
    Val,
    Test(YearBucket),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitMember {
    pub stay_id: StayId,
    pub patient_id: PatientId,
    pub year_bucket: YearBucket,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SplitError {
    #[error("split ratios must be non-negative and sum to 1, got {0:?}")]
    Ratios(SplitRatios),
    #[error("year bucket {0} has no stays")]
    EmptyBucket(&'static str),
    #[error("no stays to split")]
    Empty,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitPlan {
    pub regime: Regime,
    pub seed: u64,
    pub assignments: BTreeMap<StayId, Assignment>,
}

impl SplitPlan {
    pub fn get(&self, stay_id: StayId) -> Option<Assignment> {
        self.assignments.get(&stay_id).copied()
    }

    pub fn stays(&self, which: Assignment) -> Vec<StayId> {
        self.assignments
            .iter()
            .filter(|(_, a)| **a == which)
            .map(|(s, _)| *s)
            .collect()
    }

    pub fn count(&self, which: Assignment) -> usize {
        self.assignments.values().filter(|a| **a == which).count()
    }

    /// Test buckets that received at least one stay, in bucket order.
    pub fn test_buckets(&self) -> Vec<YearBucket> {
        let set: BTreeSet<YearBucket> = self
            .assignments
            .values()
            .filter_map(|a| match a {
                Assignment::Test(b) => Some(*b),
                _ => None,
            })
            .collect();
        set.into_iter().collect()
    }
}

/// Shuffle patients and cut into (train, val, test) by rounded ratio counts.
fn partition(mut patients: Vec<PatientId>, ratios: &SplitRatios, seed: u64) -> [Vec<PatientId>; 3] {
    patients.sort_unstable();
    patients.shuffle(&mut rng::stream(seed, tags::SPLIT, 0));
    let n = patients.len() as f64;
    let n_train = (n * ratios.train).round() as usize;
    let n_val = ((n * ratios.val).round() as usize).min(patients.len() - n_train);
    let test = patients.split_off(n_train + n_val);
    let val = patients.split_off(n_train);
    [patients, val, test]
}

pub fn make_split(members: &[SplitMember], regime: Regime, ratios: &SplitRatios, seed: u64) -> Result<SplitPlan, SplitError> {
    ratios.validate()?;
    if members.is_empty() {
        return Err(SplitError::Empty);
    }
    let mut buckets_of: BTreeMap<PatientId, BTreeSet<YearBucket>> = BTreeMap::new();
    for m in members {
        buckets_of.entry(m.patient_id).or_default().insert(m.year_bucket);
    }

    let mut assignments = BTreeMap::new();
    match regime {
        Regime::YearAgnostic => {
            let [train, val, _] = partition(buckets_of.keys().copied().collect(), ratios, seed);
            let train: BTreeSet<_> = train.into_iter().collect();
            let val: BTreeSet<_> = val.into_iter().collect();
            for m in members {
                let a = if train.contains(&m.patient_id) {
                    Assignment::Train
                } else if val.contains(&m.patient_id) {
                    Assignment::Val
                } else {
                    Assignment::Test(m.year_bucket)
                };
                assignments.insert(m.stay_id, a);
            }
        }
        Regime::YearBucket => {
            for b in YearBucket::ALL {
                if !members.iter().any(|m| m.year_bucket == b) {
                    return Err(SplitError::EmptyBucket(b.as_str()));
                }
            }
            // Only patients seen exclusively in the first bucket may train.
            let pool: Vec<PatientId> = buckets_of
                .iter()
                .filter(|(_, bs)| bs.len() == 1 && bs.contains(&YearBucket::Y2008))
                .map(|(p, _)| *p)
                .collect();
            let [train, val, _] = partition(pool, ratios, seed);
            let train: BTreeSet<_> = train.into_iter().collect();
            let val: BTreeSet<_> = val.into_iter().collect();
            for m in members {
                let a = if m.year_bucket != YearBucket::Y2008 {
                    Assignment::Test(m.year_bucket)
                } else if train.contains(&m.patient_id) {
                    Assignment::Train
                } else if val.contains(&m.patient_id) {
                    Assignment::Val
                } else {
                    Assignment::Test(YearBucket::Y2008)
                };
                assignments.insert(m.stay_id, a);
            }
        }
    }
    Ok(SplitPlan {
        regime,
        seed,
        assignments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn members(n: usize, bucket: impl Fn(usize) -> YearBucket) -> Vec<SplitMember> {
        (0..n)
            .map(|i| SplitMember {
                stay_id: StayId(1000 + i as i64),
                patient_id: PatientId(1 + i as i64),
                year_bucket: bucket(i),
            })
            .collect()
    }

    #[test]
    fn year_agnostic_sizes() {
        let m = members(100, |i| YearBucket::ALL[i % 4]);
        let plan = make_split(&m, Regime::YearAgnostic, &SplitRatios::default(), 7).unwrap();
        assert_eq!(plan.count(Assignment::Train), 70);
        assert_eq!(plan.count(Assignment::Val), 15);
        let test: usize = YearBucket::ALL.iter().map(|b| plan.count(Assignment::Test(*b))).sum();
        assert_eq!(test, 15);
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let m = members(200, |i| YearBucket::ALL[i % 4]);
        let r = SplitRatios::default();
        let a = make_split(&m, Regime::YearBucket, &r, 3).unwrap();
        assert_eq!(a, make_split(&m, Regime::YearBucket, &r, 3).unwrap());
        assert_ne!(a.assignments, make_split(&m, Regime::YearBucket, &r, 4).unwrap().assignments);
    }

    #[test]
    fn empty_bucket_is_an_error() {
        let m = members(30, |i| YearBucket::ALL[i % 3]);
        assert_eq!(
            make_split(&m, Regime::YearBucket, &SplitRatios::default(), 1),
            Err(SplitError::EmptyBucket("2017-2019"))
        );
        assert!(make_split(&m, Regime::YearAgnostic, &SplitRatios::default(), 1).is_ok());
    }

    #[test]
    fn bad_ratios() {
        let r = SplitRatios {
            train: 0.8,
            val: 0.15,
            test: 0.15,
        };
        assert!(matches!(
            make_split(&members(10, |_| YearBucket::Y2008), Regime::YearAgnostic, &r, 0),
            Err(SplitError::Ratios(_))
        ));
    }

    #[test]
    fn multi_bucket_patient_never_trains_in_year_bucket() {
        let mut m = members(40, |i| YearBucket::ALL[i % 4]);
        m.push(SplitMember {
            stay_id: StayId(1),
            patient_id: PatientId(2),
            year_bucket: YearBucket::Y2008,
        });
        let plan = make_split(&m, Regime::YearBucket, &SplitRatios::default(), 0).unwrap();
        assert_eq!(plan.get(StayId(1)), Some(Assignment::Test(YearBucket::Y2008)));
    }

    proptest! {
        #[test]
        fn patient_level_and_no_leak(
            spec in prop::collection::vec((0i64..60, 0usize..4), 4..200),
            seed in any::<u64>(),
            agnostic in any::<bool>(),
        ) {
            let mut m: Vec<SplitMember> = spec
                .iter()
                .enumerate()
                .map(|(i, &(p, b))| SplitMember { stay_id: StayId(i as i64), patient_id: PatientId(p), year_bucket: YearBucket::ALL[b] })
                .collect();
            for (i, b) in YearBucket::ALL.into_iter().enumerate() {
                m.push(SplitMember { stay_id: StayId(10_000 + i as i64), patient_id: PatientId(10_000 + i as i64), year_bucket: b });
            }
            let regime = if agnostic { Regime::YearAgnostic } else { Regime::YearBucket };
            let plan = make_split(&m, regime, &SplitRatios::default(), seed).unwrap();
            prop_assert_eq!(plan.assignments.len(), m.len());
            let mut role: BTreeMap<PatientId, u8> = BTreeMap::new();
            for s in &m {
                let a = plan.get(s.stay_id).unwrap();
                let class = match a {
                    Assignment::Train => 0,
                    Assignment::Val => 1,
                    Assignment::Test(b) => {
                        prop_assert_eq!(b, s.year_bucket);
                        2
                    }
                };
                if regime == Regime::YearBucket && class < 2 {
                    prop_assert_eq!(s.year_bucket, YearBucket::Y2008);
                }
                if let Some(prev) = role.insert(s.patient_id, class) {
                    prop_assert_eq!(prev, class);
                }
            }
        }
    }
}
