#![allow(dead_code)]

use core_forge::combinatorics::CommitteeSpace;
use core_forge::duality::DeviationFunction;
use core_forge::rational::ratio;
use core_forge::{CandidateSet, VoteDistribution};
use rand::seq::SliceRandom;
use rand::Rng;

/// A distribution on `m` candidates whose weights have denominator at most `max_den`.
pub fn random_distribution(rng: &mut impl Rng, m: usize, max_den: i64) -> VoteDistribution {
    let den = rng.gen_range(1..=max_den);
    let mut weights = Vec::new();
    for _ in 0..den {
        let ballot = CandidateSet::from_mask(rng.gen_range(0..1u64 << m));
        weights.push((ballot, ratio(1, den)));
    }
    VoteDistribution::new(m, weights).unwrap()
}

pub fn random_subset(rng: &mut impl Rng, m: usize, size: usize) -> CandidateSet {
    let mut all: Vec<usize> = (0..m).collect();
    all.shuffle(rng);
    CandidateSet::from_indices(all[..size].iter().copied()).unwrap()
}

pub fn random_deviation(rng: &mut impl Rng, space: &CommitteeSpace) -> CandidateSet {
    let size = rng.gen_range(1..=space.k());
    random_subset(rng, space.m(), size)
}

pub fn random_deviation_function(rng: &mut impl Rng, space: CommitteeSpace) -> DeviationFunction {
    let devs = (0..space.committee_count()).map(|_| random_deviation(rng, &space)).collect();
    DeviationFunction::new(space, devs).unwrap()
}

/// Singleton everywhere, except possibly one committee with a larger deviation.
pub fn random_singleton_conforming(rng: &mut impl Rng, space: CommitteeSpace) -> DeviationFunction {
    let special = if rng.gen_bool(0.5) {
        Some(rng.gen_range(0..space.committee_count()))
    } else {
        None
    };
    let devs = (0..space.committee_count())
        .map(|i| {
            if Some(i) == special {
                random_deviation(rng, &space)
            } else {
                CandidateSet::singleton(rng.gen_range(0..space.m()))
            }
        })
        .collect();
    DeviationFunction::new(space, devs).unwrap()
}
