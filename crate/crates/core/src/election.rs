//! Approval profiles and the vote distributions they induce.
//!
//! Everything here is exact. A [`VoteDistribution`] is the frequency vector of
//! a profile; only its support is stored.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::combinatorics::{CandidateSet, MAX_CANDIDATES};
use crate::error::{param, Result};
use crate::rational::{lcm_of_denominators, Rational, RationalJson};

/// One approval set per voter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApprovalProfile {
    m: usize,
    ballots: Vec<CandidateSet>,
}

impl ApprovalProfile {
    pub fn new(m: usize, ballots: Vec<CandidateSet>) -> Result<Self> {
        if m == 0 || m > MAX_CANDIDATES {
            return param(format!("candidate count {m} out of range"));
        }
        if ballots.is_empty() {
            return param("a profile needs at least one voter");
        }
        if let Some(b) = ballots.iter().find(|b| !b.fits(m)) {
            return param(format!("ballot {b} uses candidates beyond m={m}"));
        }
        Ok(ApprovalProfile { m, ballots })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn ballots(&self) -> &[CandidateSet] {
        &self.ballots
    }

    pub fn voters(&self) -> usize {
        self.ballots.len()
    }

    /// Every voter repeated `times` times.
    pub fn replicate(&self, times: usize) -> Result<Self> {
        if times == 0 {
            return param("replication factor must be positive");
        }
        let ballots = self
            .ballots
            .iter()
            .flat_map(|b| std::iter::repeat(*b).take(times))
            .collect();
        ApprovalProfile::new(self.m, ballots)
    }
}

/// A probability vector over ballots with exact rational weights.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteDistribution {
    m: usize,
    weights: BTreeMap<CandidateSet, Rational>,
}

impl VoteDistribution {
    /// Validates nonnegativity, exact unit mass, and candidate range.
    /// Zero weights are dropped; repeated ballots are merged.
    pub fn new<I>(m: usize, weights: I) -> Result<Self>
    where
        I: IntoIterator<Item = (CandidateSet, Rational)>,
    {
        if m == 0 || m > MAX_CANDIDATES {
            return param(format!("candidate count {m} out of range"));
        }
        let mut map: BTreeMap<CandidateSet, Rational> = BTreeMap::new();
        for (ballot, w) in weights {
            if !ballot.fits(m) {
                return param(format!("ballot {ballot} uses candidates beyond m={m}"));
            }
            if w.is_negative() {
                return param(format!("negative weight {w} on {ballot}"));
            }
            *map.entry(ballot).or_insert_with(Rational::zero) += w;
        }
        map.retain(|_, w| !w.is_zero());
        let total: Rational = map.values().cloned().sum();
        if !total.is_one() {
            return param(format!("weights sum to {total}, not 1"));
        }
        Ok(VoteDistribution { m, weights: map })
    }

    /// All mass on a single ballot.
    pub fn point(m: usize, ballot: CandidateSet) -> Result<Self> {
        VoteDistribution::new(m, [(ballot, Rational::one())])
    }

    /// Equal weight on each listed ballot (duplicates accumulate).
    pub fn uniform(m: usize, ballots: &[CandidateSet]) -> Result<Self> {
        if ballots.is_empty() {
            return param("uniform distribution over no ballots");
        }
        let w = Rational::new(BigInt::one(), BigInt::from(ballots.len()));
        VoteDistribution::new(m, ballots.iter().map(|b| (*b, w.clone())))
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn weight(&self, ballot: CandidateSet) -> Rational {
        self.weights.get(&ballot).cloned().unwrap_or_else(Rational::zero)
    }

    /// Ballots with positive weight, in mask order.
    pub fn support(&self) -> impl Iterator<Item = (CandidateSet, &Rational)> + '_ {
        self.weights.iter().map(|(b, w)| (*b, w))
    }

    pub fn support_len(&self) -> usize {
        self.weights.len()
    }

    /// Dense float vector indexed by ballot mask (length `2^m`).
    pub fn to_dense_f64(&self) -> Vec<f64> {
        let mut out = vec![0.0; 1usize << self.m];
        for (b, w) in &self.weights {
            out[b.mask() as usize] = w.to_f64().unwrap_or(f64::NAN);
        }
        out
    }

    /// Ballot frequencies of a profile.
    pub fn from_profile(profile: &ApprovalProfile) -> Result<Self> {
        let n = BigInt::from(profile.voters());
        let mut counts: BTreeMap<CandidateSet, usize> = BTreeMap::new();
        for b in profile.ballots() {
            *counts.entry(*b).or_default() += 1;
        }
        VoteDistribution::new(
            profile.m(),
            counts
                .into_iter()
                .map(|(b, c)| (b, Rational::new(BigInt::from(c), n.clone()))),
        )
    }

    /// The smallest profile with this distribution: `n` is the LCM of the
    /// weight denominators. Ballots are listed in mask order.
    pub fn to_profile(&self) -> Result<ApprovalProfile> {
        let n = lcm_of_denominators(self.weights.values());
        let n_r = Rational::from_integer(n);
        let mut ballots = Vec::new();
        for (b, w) in &self.weights {
            let count = (w * &n_r).to_integer();
            let count = count
                .to_usize()
                .ok_or_else(|| crate::Error::Parameter(format!("profile too large: {count} copies")))?;
            ballots.extend(std::iter::repeat(*b).take(count));
        }
        ApprovalProfile::new(self.m, ballots)
    }

    pub fn to_json(&self) -> InstanceJson {
        InstanceJson {
            m: self.m,
            weights: self
                .weights
                .iter()
                .map(|(b, w)| WeightJson {
                    ballot: *b,
                    weight: RationalJson::from(w),
                })
                .collect(),
        }
    }

    pub fn from_json(json: &InstanceJson) -> Result<Self> {
        let weights = json
            .weights
            .iter()
            .map(|w| Ok((w.ballot, w.weight.to_rational()?)))
            .collect::<Result<Vec<_>>>()?;
        VoteDistribution::new(json.m, weights)
    }
}

/// On-disk instance: `{"m": 5, "weights": [{"ballot": [1,3], "num": "1", "den": "3"}]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceJson {
    pub m: usize,
    pub weights: Vec<WeightJson>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightJson {
    pub ballot: CandidateSet,
    #[serde(flatten)]
    pub weight: RationalJson,
}

impl Serialize for VoteDistribution {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

impl<'de> Deserialize<'de> for VoteDistribution {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let json = InstanceJson::deserialize(d)?;
        VoteDistribution::from_json(&json).map_err(serde::de::Error::custom)
    }
}

/// Named example instances used throughout the docs and tests.
pub mod examples {
    use super::*;
    use crate::rational::ratio;

    fn set(labels: &[usize]) -> CandidateSet {
        CandidateSet::from_labels(labels)
    }

    /// The six-voter, five-candidate running example.
    pub fn running_example_profile() -> ApprovalProfile {
        ApprovalProfile::new(
            5,
            vec![
                set(&[1, 2, 3]),
                set(&[2, 4]),
                set(&[2, 4]),
                set(&[2, 5]),
                set(&[2, 5]),
                set(&[4, 5]),
            ],
        )
        .expect("valid profile")
    }

    /// Frequencies of [`running_example_profile`].
    pub fn running_example() -> VoteDistribution {
        VoteDistribution::new(
            5,
            [
                (set(&[2, 4]), ratio(1, 3)),
                (set(&[2, 5]), ratio(1, 3)),
                (set(&[1, 2, 3]), ratio(1, 6)),
                (set(&[4, 5]), ratio(1, 6)),
            ],
        )
        .expect("valid distribution")
    }

    /// m=5, k=3: `{c1,c2,c3}` is Droop core-stable but not weakly priceable.
    pub fn weak_counterexample() -> VoteDistribution {
        VoteDistribution::uniform(5, &[set(&[2, 4]), set(&[2, 5]), set(&[4, 5]), set(&[1, 2, 5])])
            .expect("valid distribution")
    }

    /// m=4, k=2: `{c1,c2}` is Droop core-stable and weakly priceable but not
    /// Lindahl priceable.
    pub fn lindahl_counterexample() -> VoteDistribution {
        VoteDistribution::uniform(4, &[set(&[3, 4]), set(&[1, 3, 4]), set(&[1, 2, 3, 4])])
            .expect("valid distribution")
    }

    /// Five voters over `{a, b, d}` (indices 0, 1, 2): one approves `a`, four
    /// approve `{b, d}`. `{a, b}` is Lindahl priceable but not priceable in the
    /// payment-function sense.
    pub fn payment_counterexample_profile() -> ApprovalProfile {
        let a = set(&[1]);
        let bd = set(&[2, 3]);
        ApprovalProfile::new(3, vec![a, bd, bd, bd, bd]).expect("valid profile")
    }
}

#[cfg(test)]
mod tests {
    use super::examples::*;
    use super::*;
    use crate::rational::ratio;
    use proptest::prelude::*;

    #[test]
    fn running_example_frequencies() {
        let x = VoteDistribution::from_profile(&running_example_profile()).unwrap();
        assert_eq!(x, running_example());
        assert_eq!(x.weight(CandidateSet::from_labels(&[2, 4])), ratio(1, 3));
        assert_eq!(x.weight(CandidateSet::from_labels(&[1, 2, 3])), ratio(1, 6));
        assert_eq!(x.weight(CandidateSet::from_labels(&[1])), ratio(0, 1));
    }

    #[test]
    fn single_voter() {
        let b = CandidateSet::from_labels(&[1, 2]);
        let x = VoteDistribution::from_profile(&ApprovalProfile::new(3, vec![b]).unwrap()).unwrap();
        assert_eq!(x.weight(b), ratio(1, 1));
        assert_eq!(x.to_profile().unwrap().voters(), 1);
    }

    #[test]
    fn replication_leaves_distribution_unchanged() {
        let p = running_example_profile();
        let x = VoteDistribution::from_profile(&p).unwrap();
        let x3 = VoteDistribution::from_profile(&p.replicate(3).unwrap()).unwrap();
        assert_eq!(x, x3);
    }

    #[test]
    fn minimal_profile() {
        let p = running_example().to_profile().unwrap();
        assert_eq!(p.voters(), 6);
        let mut expected = running_example_profile().ballots().to_vec();
        let mut got = p.ballots().to_vec();
        expected.sort();
        got.sort();
        assert_eq!(got, expected);

        let quarters = VoteDistribution::uniform(
            3,
            &[
                CandidateSet::from_labels(&[1]),
                CandidateSet::from_labels(&[2]),
                CandidateSet::from_labels(&[3]),
                CandidateSet::from_labels(&[1, 2]),
            ],
        )
        .unwrap();
        assert_eq!(quarters.to_profile().unwrap().voters(), 4);
    }

    #[test]
    fn rejects_bad_input() {
        let b = CandidateSet::from_labels(&[1]);
        assert!(VoteDistribution::new(2, [(b, ratio(1, 2))]).is_err());
        assert!(VoteDistribution::new(2, [(b, ratio(3, 2)), (CandidateSet::from_labels(&[2]), ratio(-1, 2))]).is_err());
        assert!(VoteDistribution::new(2, [(CandidateSet::from_labels(&[3]), ratio(1, 1))]).is_err());
        assert!(ApprovalProfile::new(3, vec![]).is_err());
    }

    #[test]
    fn json_format() {
        let x = running_example();
        let text = serde_json::to_string(&x).unwrap();
        assert!(text.starts_with(r#"{"m":5,"weights":[{"ballot":[0,1,2],"num":"1","den":"6"},{"ballot":[1,3],"num":"1","den":"3"}"#), "{text}");
        let back: VoteDistribution = serde_json::from_str(&text).unwrap();
        assert_eq!(back, x);
    }

    fn arb_profile() -> impl Strategy<Value = ApprovalProfile> {
        (1usize..=5).prop_flat_map(|m| {
            prop::collection::vec(0u64..(1 << m), 1..12).prop_map(move |masks| {
                ApprovalProfile::new(m, masks.into_iter().map(CandidateSet::from_mask).collect()).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn round_trip_is_exact(p in arb_profile()) {
            let x = VoteDistribution::from_profile(&p).unwrap();
            let back = VoteDistribution::from_profile(&x.to_profile().unwrap()).unwrap();
            prop_assert_eq!(&back, &x);
            prop_assert!(x.to_profile().unwrap().voters() <= p.voters());
        }

        #[test]
        fn replication_invariance(p in arb_profile(), c in 1usize..5) {
            let x = VoteDistribution::from_profile(&p).unwrap();
            prop_assert_eq!(VoteDistribution::from_profile(&p.replicate(c).unwrap()).unwrap(), x);
        }
    }
}
