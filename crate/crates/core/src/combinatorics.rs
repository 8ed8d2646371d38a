//! Candidate subsets as bit masks, committee and deviation enumeration, and
//! the improvement indicator.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{param, Result};

/// Largest supported candidate count (one machine word of bits).
pub const MAX_CANDIDATES: usize = 64;

/// A subset of candidates `{0, .., m-1}` stored as a bit mask.
///
/// The candidate count is carried by the surrounding context
/// ([`CommitteeSpace`], [`VoteDistribution`](crate::VoteDistribution)); use
/// [`CandidateSet::fits`] to check a set against it.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct CandidateSet(u64);

impl CandidateSet {
    pub const EMPTY: CandidateSet = CandidateSet(0);

    pub const fn from_mask(mask: u64) -> Self {
        CandidateSet(mask)
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(indices: I) -> Result<Self> {
        let mut mask = 0u64;
        for i in indices {
            if i >= MAX_CANDIDATES {
                return param(format!("candidate index {i} exceeds {MAX_CANDIDATES}"));
            }
            mask |= 1 << i;
        }
        Ok(CandidateSet(mask))
    }

    /// Builds a set from 1-based candidate labels, `c1` being index 0.
    ///
    /// Handy for transcribing hand-written examples.
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut mask = 0u64;
        for &l in labels {
            assert!((1..=MAX_CANDIDATES).contains(&l), "label c{l} out of range");
            mask |= 1 << (l - 1);
        }
        CandidateSet(mask)
    }

    /// The first `n` candidates.
    pub fn prefix(n: usize) -> Self {
        assert!(n <= MAX_CANDIDATES);
        if n == MAX_CANDIDATES {
            CandidateSet(u64::MAX)
        } else {
            CandidateSet((1u64 << n) - 1)
        }
    }

    pub fn singleton(i: usize) -> Self {
        assert!(i < MAX_CANDIDATES);
        CandidateSet(1 << i)
    }

    pub const fn mask(self) -> u64 {
        self.0
    }

    pub const fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub const fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub const fn contains(self, i: usize) -> bool {
        i < MAX_CANDIDATES && self.0 & (1 << i) != 0
    }

    pub const fn is_subset(self, other: CandidateSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub const fn intersection(self, other: CandidateSet) -> CandidateSet {
        CandidateSet(self.0 & other.0)
    }

    pub const fn union(self, other: CandidateSet) -> CandidateSet {
        CandidateSet(self.0 | other.0)
    }

    pub const fn difference(self, other: CandidateSet) -> CandidateSet {
        CandidateSet(self.0 & !other.0)
    }

    pub fn with(self, i: usize) -> CandidateSet {
        CandidateSet(self.0 | (1 << i))
    }

    /// True when every member is below `m`.
    pub fn fits(self, m: usize) -> bool {
        m >= MAX_CANDIDATES || self.0 >> m == 0
    }

    /// Member indices in increasing order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut rest = self.0;
        std::iter::from_fn(move || {
            if rest == 0 {
                None
            } else {
                let i = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(i)
            }
        })
    }

    pub fn indices(self) -> Vec<usize> {
        self.iter().collect()
    }

    /// Underscore-joined indices, used in variable names (`x_0_2`).
    pub fn joined(self) -> String {
        self.iter()
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join("_")
    }

    /// Smallest member, if any.
    pub fn first(self) -> Option<usize> {
        (self.0 != 0).then(|| self.0.trailing_zeros() as usize)
    }
}

/// Sets print with 1-based labels: `{c1,c3}`.
impl fmt::Display for CandidateSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (n, i) in self.iter().enumerate() {
            if n > 0 {
                f.write_str(",")?;
            }
            write!(f, "c{}", i + 1)?;
        }
        f.write_str("}")
    }
}

impl fmt::Debug for CandidateSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl Serialize for CandidateSet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.indices().serialize(s)
    }
}

impl<'de> Deserialize<'de> for CandidateSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let idx = Vec::<usize>::deserialize(d)?;
        CandidateSet::from_indices(idx).map_err(serde::de::Error::custom)
    }
}

/// Binomial coefficient; saturates instead of overflowing.
pub fn binomial(n: usize, r: usize) -> u128 {
    if r > n {
        return 0;
    }
    let r = r.min(n - r);
    let mut acc: u128 = 1;
    for i in 0..r {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

/// The committee sizes in play: `m` candidates, committees of size `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CommitteeSpace {
    m: usize,
    k: usize,
}

impl CommitteeSpace {
    pub fn new(m: usize, k: usize) -> Result<Self> {
        if k == 0 || k >= m {
            return param(format!("need 0 < k < m, got m={m}, k={k}"));
        }
        if m > MAX_CANDIDATES {
            return param(format!("m={m} exceeds {MAX_CANDIDATES} candidates"));
        }
        Ok(CommitteeSpace { m, k })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// `|M_k| = C(m, k)`.
    pub fn committee_count(&self) -> usize {
        binomial(self.m, self.k) as usize
    }

    /// `|M_{<=k}|`, the number of nonempty subsets of size at most `k`.
    pub fn deviation_count(&self) -> usize {
        (1..=self.k).map(|l| binomial(self.m, l) as usize).sum()
    }

    pub fn ballot_count(&self) -> usize {
        1usize << self.m
    }

    pub fn committees(&self) -> Vec<CandidateSet> {
        subsets_of_size(self.m, self.k)
    }

    pub fn deviations(&self) -> Vec<CandidateSet> {
        (1..=self.k).flat_map(|l| subsets_of_size(self.m, l)).collect()
    }

    /// Every subset of the candidates, by mask value.
    pub fn ballots(&self) -> impl Iterator<Item = CandidateSet> {
        (0..1u64 << self.m).map(CandidateSet)
    }

    pub fn is_committee(&self, w: CandidateSet) -> bool {
        w.fits(self.m) && w.len() == self.k
    }

    pub fn is_deviation(&self, d: CandidateSet) -> bool {
        d.fits(self.m) && (1..=self.k).contains(&d.len())
    }

    /// Position of `w` in [`committees`](Self::committees).
    pub fn committee_id(&self, w: CandidateSet) -> Result<usize> {
        if !self.is_committee(w) {
            return param(format!("{w} is not a {}-committee over {} candidates", self.k, self.m));
        }
        Ok(lex_rank(self.m, w))
    }

    /// Position of `d` in [`deviations`](Self::deviations).
    pub fn deviation_id(&self, d: CandidateSet) -> Result<usize> {
        if !self.is_deviation(d) {
            return param(format!("{d} is not a deviation for k={}", self.k));
        }
        let offset: usize = (1..d.len()).map(|l| binomial(self.m, l) as usize).sum();
        Ok(offset + lex_rank(self.m, d))
    }
}

/// Size-`r` subsets of `{0..m-1}` in lexicographic order of their sorted
/// index lists.
pub fn subsets_of_size(m: usize, r: usize) -> Vec<CandidateSet> {
    if r > m {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(binomial(m, r) as usize);
    let mut idx: Vec<usize> = (0..r).collect();
    loop {
        out.push(CandidateSet(idx.iter().fold(0u64, |acc, &i| acc | 1 << i)));
        // Rightmost position that can still move right.
        let Some(pos) = (0..r).rev().find(|&p| idx[p] < m - r + p) else {
            break;
        };
        idx[pos] += 1;
        for p in pos + 1..r {
            idx[p] = idx[p - 1] + 1;
        }
    }
    out
}

fn lex_rank(m: usize, set: CandidateSet) -> usize {
    let r = set.len();
    let mut rank = 0u128;
    let mut next = 0usize;
    for (pos, a) in set.iter().enumerate() {
        for v in next..a {
            rank += binomial(m - 1 - v, r - 1 - pos);
        }
        next = a + 1;
    }
    rank as usize
}

/// Whether a voter with approval set `ballot` strictly prefers `alt` to `current`.
#[inline]
pub fn improves(ballot: CandidateSet, current: CandidateSet, alt: CandidateSet) -> bool {
    ballot.intersection(alt).len() > ballot.intersection(current).len()
}
