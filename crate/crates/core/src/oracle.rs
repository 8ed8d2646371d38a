//! Exact, enumeration-based decisions about core stability.
//!
//! These routines never touch floating point. They serve as ground truth
//! for the optimization encodings in [`milp`](crate::milp) and
//! [`duality`](crate::duality).

use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::combinatorics::{improves, CandidateSet, CommitteeSpace};
use crate::duality::DeviationFunction;
use crate::election::VoteDistribution;
use crate::error::{param, Result};
use crate::rational::{self, Rational};

/// Entitlement threshold for a deviating coalition.
///
/// `Hare` charges `|W'|/k` per deviation and requires strict inequality for
/// stability; `Droop` charges `|W'|/(k+1)` and tolerates equality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Quota {
    #[default]
    Hare,
    Droop,
}

impl Quota {
    pub fn denominator(self, k: usize) -> usize {
        match self {
            Quota::Hare => k,
            Quota::Droop => k + 1,
        }
    }

    /// `size / denominator(k)` as an exact rational.
    pub fn cost(self, size: usize, k: usize) -> Rational {
        rational::ratio(size as i64, self.denominator(k) as i64)
    }

    /// Whether an excess value is compatible with stability under this quota.
    pub fn tolerates(self, excess: &Rational) -> bool {
        match self {
            Quota::Hare => excess.is_negative(),
            Quota::Droop => !excess.is_positive(),
        }
    }
}

impl fmt::Display for Quota {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Quota::Hare => "hare",
            Quota::Droop => "droop",
        })
    }
}

impl std::str::FromStr for Quota {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hare" => Ok(Quota::Hare),
            "droop" => Ok(Quota::Droop),
            other => param(format!("unknown quota {other:?} (expected hare or droop)")),
        }
    }
}

fn check_sizes(x: &VoteDistribution, w: CandidateSet, k: usize) -> Result<CommitteeSpace> {
    let space = CommitteeSpace::new(x.m(), k)?;
    if !space.is_committee(w) {
        return param(format!("{w} is not a {k}-committee over {} candidates", x.m()));
    }
    Ok(space)
}

/// Mass of voters who strictly prefer `alt` to `current`.
pub fn support(x: &VoteDistribution, current: CandidateSet, alt: CandidateSet) -> Rational {
    x.support()
        .filter(|(b, _)| improves(*b, current, alt))
        .map(|(_, w)| w.clone())
        .sum()
}

fn excess_unchecked(x: &VoteDistribution, w: CandidateSet, alt: CandidateSet, k: usize, quota: Quota) -> Rational {
    support(x, w, alt) - quota.cost(alt.len(), k)
}

/// Supporter mass of `alt` against `w` minus the price of `alt`.
pub fn deviation_excess(
    x: &VoteDistribution,
    w: CandidateSet,
    alt: CandidateSet,
    k: usize,
    quota: Quota,
) -> Result<Rational> {
    let space = check_sizes(x, w, k)?;
    if !space.is_deviation(alt) {
        return param(format!("{alt} is not a deviation of size 1..={k}"));
    }
    Ok(excess_unchecked(x, w, alt, k, quota))
}

/// Outcome of checking one committee against every deviation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub committee: CandidateSet,
    pub quota: Quota,
    pub stable: bool,
    /// The most profitable deviation. Ties go to the larger deviation (it has
    /// the larger supporter mass), then to the earlier one in enumeration order.
    pub worst_deviation: CandidateSet,
    #[serde(with = "rational::object")]
    pub worst_excess: Rational,
    /// Every deviation attaining `worst_excess`.
    pub maximizers: Vec<CandidateSet>,
}

/// Evaluates every deviation against `w`.
pub fn stability_report(x: &VoteDistribution, w: CandidateSet, k: usize, quota: Quota) -> Result<StabilityReport> {
    let space = check_sizes(x, w, k)?;
    let (worst_excess, maximizers) = worst_deviations(x, &space, w, quota);
    let worst_deviation = *maximizers
        .iter()
        .max_by_key(|d| (d.len(), std::cmp::Reverse(space.deviation_id(**d).unwrap_or(usize::MAX))))
        .expect("at least one deviation");
    Ok(StabilityReport {
        committee: w,
        quota,
        stable: quota.tolerates(&worst_excess),
        worst_deviation,
        worst_excess,
        maximizers,
    })
}

/// Core stability (Hare) or Droop core stability of `w` for `x`.
pub fn is_stable(x: &VoteDistribution, w: CandidateSet, k: usize, quota: Quota) -> Result<bool> {
    let space = check_sizes(x, w, k)?;
    Ok(space
        .deviations()
        .into_iter()
        .all(|d| quota.tolerates(&excess_unchecked(x, w, d, k, quota))))
}

fn worst_deviations(
    x: &VoteDistribution,
    space: &CommitteeSpace,
    w: CandidateSet,
    quota: Quota,
) -> (Rational, Vec<CandidateSet>) {
    let mut best: Option<Rational> = None;
    let mut arg = Vec::new();
    for d in space.deviations() {
        let e = excess_unchecked(x, w, d, space.k(), quota);
        match &best {
            Some(b) if &e < b => {}
            Some(b) if &e == b => arg.push(d),
            _ => {
                best = Some(e);
                arg = vec![d];
            }
        }
    }
    (best.expect("deviation set is nonempty"), arg)
}

/// Per-committee entry of a [`LeastCoreReport`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitteeExcess {
    pub committee: CandidateSet,
    pub worst_deviation: CandidateSet,
    #[serde(with = "rational::object")]
    pub excess: Rational,
}

/// Value of the sizewise-least core of a distribution and the committees attaining it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeastCoreReport {
    pub quota: Quota,
    #[serde(with = "rational::object")]
    pub value: Rational,
    /// Committee ids (lexicographic positions) attaining the minimum.
    pub witnesses: Vec<usize>,
    /// Indexed by committee id.
    pub per_committee: Vec<CommitteeExcess>,
}

/// Min over committees of the max excess over deviations, by full enumeration.
///
/// Under the Hare quota the value is negative exactly when the core of `x` is
/// nonempty; under Droop, nonpositive exactly when the Droop core is nonempty.
pub fn least_core(x: &VoteDistribution, k: usize, quota: Quota) -> Result<LeastCoreReport> {
    let space = CommitteeSpace::new(x.m(), k)?;
    let mut per_committee = Vec::with_capacity(space.committee_count());
    for w in space.committees() {
        let (excess, maximizers) = worst_deviations(x, &space, w, quota);
        per_committee.push(CommitteeExcess {
            committee: w,
            worst_deviation: maximizers[0],
            excess,
        });
    }
    let value = per_committee
        .iter()
        .map(|c| c.excess.clone())
        .min()
        .expect("at least one committee");
    let witnesses = per_committee
        .iter()
        .enumerate()
        .filter(|(_, c)| c.excess == value)
        .map(|(i, _)| i)
        .collect();
    Ok(LeastCoreReport {
        quota,
        value,
        witnesses,
        per_committee,
    })
}

/// What a lottery over committees is tested against.
#[derive(Debug, Clone)]
pub enum LotteryTarget<'a> {
    /// A deviation chosen as a function of the drawn committee.
    Function(&'a DeviationFunction),
    /// A deviation drawn independently of the committee.
    Distribution(&'a [(CandidateSet, Rational)]),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BallotLoad {
    pub ballot: CandidateSet,
    /// Probability that a voter with this ballot strictly prefers the deviation.
    #[serde(with = "rational::object")]
    pub probability: Rational,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LotteryReport {
    pub quota: Quota,
    /// Expected deviation size divided by the quota denominator.
    #[serde(with = "rational::object")]
    pub bound: Rational,
    /// One entry per ballot, in mask order.
    pub ballots: Vec<BallotLoad>,
    pub holds: bool,
}

impl LotteryReport {
    pub fn max_probability(&self) -> Rational {
        self.ballots
            .iter()
            .map(|b| b.probability.clone())
            .max()
            .unwrap_or_else(Rational::zero)
    }
}

fn check_lottery(
    entries: &[(CandidateSet, Rational)],
    valid: impl Fn(CandidateSet) -> bool,
    what: &str,
) -> Result<()> {
    let mut total = Rational::zero();
    for (set, p) in entries {
        if !valid(*set) {
            return param(format!("{what} has an entry of the wrong size: {set}"));
        }
        if p.is_negative() {
            return param(format!("{what} has negative weight {p} on {set}"));
        }
        total += p;
    }
    if !total.is_one() {
        return param(format!("{what} weights sum to {total}, not 1"));
    }
    Ok(())
}

/// For each ballot `A`, compares `Pr[|W ∩ A| < |D ∩ A|]` under the lottery
/// with `E[|D|] / denominator`, using `<` for Hare and `<=` for Droop.
pub fn check_stable_lottery(
    lottery: &[(CandidateSet, Rational)],
    target: LotteryTarget<'_>,
    m: usize,
    k: usize,
    quota: Quota,
) -> Result<LotteryReport> {
    let space = CommitteeSpace::new(m, k)?;
    check_lottery(lottery, |w| space.is_committee(w), "committee lottery")?;
    if let Some((w, _)) = lottery.iter().find(|(w, _)| !space.is_committee(*w)) {
        return param(format!("{w} is not a {k}-committee"));
    }

    let denom = Rational::from_integer(BigInt::from(quota.denominator(k)));
    let (expected_size, pairs): (Rational, Vec<(CandidateSet, CandidateSet, Rational)>) = match target {
        LotteryTarget::Function(d) => {
            if d.space() != space {
                return param("deviation function is over a different committee space");
            }
            let mut e = Rational::zero();
            let mut pairs = Vec::new();
            for (w, p) in lottery {
                let dev = d.get(*w)?;
                e += p * Rational::from_integer(BigInt::from(dev.len()));
                pairs.push((*w, dev, p.clone()));
            }
            (e, pairs)
        }
        LotteryTarget::Distribution(r) => {
            check_lottery(r, |d| space.is_deviation(d), "deviation distribution")?;
            if let Some((d, _)) = r.iter().find(|(d, _)| !space.is_deviation(*d)) {
                return param(format!("{d} is not a deviation"));
            }
            let e = r
                .iter()
                .map(|(d, p)| p * Rational::from_integer(BigInt::from(d.len())))
                .sum();
            let mut pairs = Vec::new();
            for (w, p) in lottery {
                for (d, pd) in r {
                    pairs.push((*w, *d, p * pd));
                }
            }
            (e, pairs)
        }
    };
    let bound = expected_size / denom;

    let mut holds = true;
    let mut ballots = Vec::with_capacity(space.ballot_count());
    for a in space.ballots() {
        let probability: Rational = pairs
            .iter()
            .filter(|(w, d, _)| improves(a, *w, *d))
            .map(|(_, _, p)| p.clone())
            .sum();
        let ok = match quota {
            Quota::Hare => probability < bound,
            Quota::Droop => probability <= bound,
        };
        holds &= ok;
        ballots.push(BallotLoad {
            ballot: a,
            probability,
            holds: ok,
        });
    }
    Ok(LotteryReport {
        quota,
        bound,
        ballots,
        holds,
    })
}

/// Bounds every least-core value lies in.
pub fn value_range() -> (Rational, Rational) {
    (-Rational::one(), Rational::one())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::election::examples::*;
    use crate::rational::ratio;

    fn set(l: &[usize]) -> CandidateSet {
        CandidateSet::from_labels(l)
    }

    #[test]
    fn running_example_excess() {
        let x = running_example();
        let e = deviation_excess(&x, set(&[1, 3, 5]), set(&[2, 5]), 3, Quota::Hare).unwrap();
        assert_eq!(e, ratio(0, 1));
        let e = deviation_excess(&x, set(&[1, 3, 4, 5]), set(&[2, 4, 5]), 4, Quota::Droop).unwrap();
        assert_eq!(e, ratio(1, 15));
        // Subsets of the committee only pay their price.
        let e = deviation_excess(&x, set(&[1, 3, 5]), set(&[1, 5]), 3, Quota::Hare).unwrap();
        assert_eq!(e, ratio(-2, 3));
    }

    #[test]
    fn excess_rejects_bad_sizes() {
        let x = running_example();
        assert!(deviation_excess(&x, set(&[1, 3]), set(&[2]), 3, Quota::Hare).is_err());
        assert!(deviation_excess(&x, set(&[1, 3, 5]), set(&[1, 2, 3, 4]), 3, Quota::Hare).is_err());
        assert!(deviation_excess(&x, set(&[1, 3, 5]), CandidateSet::EMPTY, 3, Quota::Hare).is_err());
    }

    #[test]
    fn running_example_stability() {
        let x = running_example();
        assert!(is_stable(&x, set(&[2, 4, 5]), 3, Quota::Hare).unwrap());
        assert!(!is_stable(&x, set(&[1, 3, 5]), 3, Quota::Hare).unwrap());
        let r = stability_report(&x, set(&[1, 3, 5]), 3, Quota::Hare).unwrap();
        assert!(!r.stable);
        assert_eq!(r.worst_deviation, set(&[2, 5]));
        assert_eq!(r.worst_excess, ratio(0, 1));
        assert!(r.maximizers.contains(&set(&[2])));
    }

    #[test]
    fn counterexamples_are_droop_stable() {
        assert!(is_stable(&weak_counterexample(), set(&[1, 2, 3]), 3, Quota::Droop).unwrap());
        assert!(is_stable(&lindahl_counterexample(), set(&[1, 2]), 2, Quota::Droop).unwrap());
    }

    #[test]
    fn point_mass_least_core() {
        for (m, k) in [(3, 1), (4, 2), (5, 3), (5, 2)] {
            let a = CandidateSet::prefix(k);
            let x = VoteDistribution::point(m, a).unwrap();
            let r = least_core(&x, k, Quota::Hare).unwrap();
            assert_eq!(r.value, ratio(-1, k as i64));
            let space = CommitteeSpace::new(m, k).unwrap();
            assert_eq!(r.witnesses, vec![space.committee_id(a).unwrap()]);
        }
    }

    #[test]
    fn lower_bound_distribution_value() {
        for m in 2..=6 {
            for k in 1..m {
                let b: Vec<_> = (0..=k).map(CandidateSet::singleton).collect();
                let x = VoteDistribution::uniform(m, &b).unwrap();
                let r = least_core(&x, k, Quota::Hare).unwrap();
                assert_eq!(r.value, ratio(-1, (k * (k + 1)) as i64), "m={m} k={k}");
                let r = least_core(&x, k, Quota::Droop).unwrap();
                assert_eq!(r.value, ratio(0, 1));
            }
        }
    }

    #[test]
    fn running_example_least_core_is_negative() {
        let r = least_core(&running_example(), 3, Quota::Hare).unwrap();
        assert!(r.value.is_negative());
        let star = CommitteeSpace::new(5, 3).unwrap().committee_id(set(&[2, 4, 5])).unwrap();
        assert!(r.per_committee[star].excess.is_negative());
        assert!(r.value <= r.per_committee[star].excess);
    }

    #[test]
    fn lottery_validation() {
        let d = DeviationFunction::from_fn(CommitteeSpace::new(3, 1).unwrap(), |w| {
            CandidateSet::singleton((w.first().unwrap() + 1) % 3)
        })
        .unwrap();
        let bad = [(set(&[1]), ratio(1, 2))];
        assert!(check_stable_lottery(&bad, LotteryTarget::Function(&d), 3, 1, Quota::Hare).is_err());
        let good = [(set(&[1]), ratio(1, 1))];
        let r = check_stable_lottery(&good, LotteryTarget::Function(&d), 3, 1, Quota::Hare).unwrap();
        assert_eq!(r.ballots.len(), 8);
        // D({c1}) = {c2}: only ballots containing c2 but not c1 are attracted.
        assert_eq!(r.max_probability(), ratio(1, 1));
        assert!(!r.holds);
    }

    #[test]
    fn lottery_with_self_contained_deviation_is_free() {
        let space = CommitteeSpace::new(4, 2).unwrap();
        let d = DeviationFunction::from_fn(space, |w| CandidateSet::singleton(w.first().unwrap())).unwrap();
        let q = [(set(&[1, 2]), ratio(1, 1))];
        let r = check_stable_lottery(&q, LotteryTarget::Function(&d), 4, 2, Quota::Hare).unwrap();
        assert!(r.ballots.iter().all(|b| b.probability.is_zero()));
        assert!(r.holds);
    }
}
