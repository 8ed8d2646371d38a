//! Dual programs indexed by deviation functions, and the explicit
//! certificates that bound them.
//!
//! Fixing which deviation each committee faces turns the search program into
//! an LP in `(x, mu)`. Its dual has one variable per committee (`q`, a lottery
//! over committees) plus a ballot-load bound `u`. Any feasible `(q, u)`
//! upper-bounds the best least-core value reachable with that deviation
//! function, and the bound is checked here with exact rationals.

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::combinatorics::{improves, CandidateSet, CommitteeSpace};
use crate::error::{param, Error, Result};
use crate::model::{Constraint, ObjectiveSense, OptModel, RowSense};
use crate::oracle::Quota;
use crate::rational::{self, Rational};
use crate::solver::{self, BackendConfig};

/// One deviation per `k`-committee, indexed by committee id.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DeviationFunction {
    space: CommitteeSpace,
    deviations: Vec<CandidateSet>,
}

impl DeviationFunction {
    pub fn new(space: CommitteeSpace, deviations: Vec<CandidateSet>) -> Result<Self> {
        if deviations.len() != space.committee_count() {
            return param(format!(
                "deviation function covers {} committees, expected {}",
                deviations.len(),
                space.committee_count()
            ));
        }
        if let Some(d) = deviations.iter().find(|d| !space.is_deviation(**d)) {
            return param(format!("{d} is not a deviation of size 1..={}", space.k()));
        }
        Ok(DeviationFunction { space, deviations })
    }

    pub fn from_fn(space: CommitteeSpace, f: impl Fn(CandidateSet) -> CandidateSet) -> Result<Self> {
        let devs = space.committees().into_iter().map(f).collect();
        DeviationFunction::new(space, devs)
    }

    pub fn space(&self) -> CommitteeSpace {
        self.space
    }

    pub fn get(&self, w: CandidateSet) -> Result<CandidateSet> {
        Ok(self.deviations[self.space.committee_id(w)?])
    }

    pub fn by_id(&self, id: usize) -> CandidateSet {
        self.deviations[id]
    }

    pub fn deviations(&self) -> &[CandidateSet] {
        &self.deviations
    }

    /// `(committee, deviation)` pairs in committee-id order.
    pub fn pairs(&self) -> impl Iterator<Item = (CandidateSet, CandidateSet)> + '_ {
        self.space.committees().into_iter().zip(self.deviations.iter().copied())
    }

    /// Committee ids whose deviation has more than one candidate.
    pub fn non_singletons(&self) -> Vec<usize> {
        (0..self.deviations.len())
            .filter(|&i| self.deviations[i].len() > 1)
            .collect()
    }

    pub fn to_json(&self) -> DeviationFunctionJson {
        DeviationFunctionJson {
            m: self.space.m(),
            k: self.space.k(),
            deviations: self.deviations.clone(),
        }
    }

    pub fn from_json(json: &DeviationFunctionJson) -> Result<Self> {
        DeviationFunction::new(CommitteeSpace::new(json.m, json.k)?, json.deviations.clone())
    }
}

/// `{"m": 4, "k": 3, "deviations": [[3], [2], [1, 2], [0]]}`, one entry per committee id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviationFunctionJson {
    pub m: usize,
    pub k: usize,
    pub deviations: Vec<CandidateSet>,
}

/// A lottery `q` over committee ids together with a ballot-load bound `u`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DualCertificate {
    /// Sparse, sorted by committee id, positive entries only.
    pub q: Vec<(usize, Rational)>,
    pub u: Rational,
}

impl DualCertificate {
    /// Merges repeated ids and drops zeros.
    pub fn new(entries: impl IntoIterator<Item = (usize, Rational)>, u: Rational) -> Self {
        let mut map = std::collections::BTreeMap::<usize, Rational>::new();
        for (id, p) in entries {
            *map.entry(id).or_insert_with(Rational::zero) += p;
        }
        DualCertificate {
            q: map.into_iter().filter(|(_, p)| !p.is_zero()).collect(),
            u,
        }
    }

    pub fn weight(&self, id: usize) -> Rational {
        self.q
            .iter()
            .find(|(i, _)| *i == id)
            .map(|(_, p)| p.clone())
            .unwrap_or_else(Rational::zero)
    }

    /// The lottery with committee sets instead of ids.
    pub fn lottery(&self, space: &CommitteeSpace) -> Vec<(CandidateSet, Rational)> {
        let committees = space.committees();
        self.q.iter().map(|(i, p)| (committees[*i], p.clone())).collect()
    }
}

#[derive(Serialize, Deserialize)]
struct CertificateJson {
    q: Vec<(usize, String, String)>,
    u: (String, String),
}

impl Serialize for DualCertificate {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        CertificateJson {
            q: self
                .q
                .iter()
                .map(|(i, p)| (*i, p.numer().to_string(), p.denom().to_string()))
                .collect(),
            u: (self.u.numer().to_string(), self.u.denom().to_string()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DualCertificate {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error as _;
        let json = CertificateJson::deserialize(d)?;
        let mut q = Vec::with_capacity(json.q.len());
        for (i, n, den) in json.q {
            q.push((i, rational::parse_pair(&n, &den).map_err(D::Error::custom)?));
        }
        let u = rational::parse_pair(&json.u.0, &json.u.1).map_err(D::Error::custom)?;
        // Keep the file's entries verbatim so verification sees what was written.
        Ok(DualCertificate { q, u })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CertificateError {
    #[error("malformed certificate: {0}")]
    Malformed(String),
    #[error("ballot {ballot} has load {load} > u = {u}")]
    Infeasible {
        ballot: CandidateSet,
        load: Rational,
        u: Rational,
    },
}

impl From<CertificateError> for Error {
    fn from(e: CertificateError) -> Self {
        Error::Integrity(e.to_string())
    }
}

/// Mass the lottery places on committees that a voter with `ballot` would
/// abandon for their assigned deviation.
pub fn ballot_load(cert_q: &[(usize, Rational)], committees: &[CandidateSet], d: &DeviationFunction, ballot: CandidateSet) -> Rational {
    cert_q
        .iter()
        .filter(|(i, _)| improves(ballot, committees[*i], d.by_id(*i)))
        .map(|(_, p)| p.clone())
        .sum()
}

/// Checks every ballot constraint exactly and returns the certificate's
/// objective `u - Σ q[W]·|D(W)|/denominator`.
pub fn verify_certificate(cert: &DualCertificate, d: &DeviationFunction, quota: Quota) -> Result<Rational, CertificateError> {
    let space = d.space();
    let committees = space.committees();
    let mut total = Rational::zero();
    for (i, p) in &cert.q {
        if *i >= committees.len() {
            return Err(CertificateError::Malformed(format!("committee id {i} out of range")));
        }
        if p.is_negative() {
            return Err(CertificateError::Malformed(format!("negative weight on committee {i}")));
        }
        total += p;
    }
    if !total.is_one() {
        return Err(CertificateError::Malformed(format!("q sums to {total}, not 1")));
    }
    for a in space.ballots() {
        let load = ballot_load(&cert.q, &committees, d, a);
        if load > cert.u {
            return Err(CertificateError::Infeasible {
                ballot: a,
                load,
                u: cert.u.clone(),
            });
        }
    }
    Ok(certificate_objective(cert, d, quota))
}

/// `u - Σ q[W]·|D(W)|/denominator`, without feasibility checks.
pub fn certificate_objective(cert: &DualCertificate, d: &DeviationFunction, quota: Quota) -> Rational {
    let k = d.space().k();
    let spent: Rational = cert
        .q
        .iter()
        .map(|(i, p)| p * quota.cost(d.by_id(*i).len(), k))
        .sum();
    &cert.u - spent
}

/// Largest ballot load of a lottery; the smallest feasible `u`.
pub fn max_ballot_load(q: &[(usize, Rational)], d: &DeviationFunction) -> Rational {
    let committees = d.space().committees();
    d.space()
        .ballots()
        .map(|a| ballot_load(q, &committees, d, a))
        .max()
        .unwrap_or_else(Rational::zero)
}

/// The dual program for a fixed deviation function: minimize
/// `u - Σ_W |D(W)|/denominator · q[W]` over lotteries `q` subject to one
/// load constraint per ballot.
pub fn build_dlp(d: &DeviationFunction, quota: Quota) -> OptModel {
    let space = d.space();
    let k = space.k();
    let denom = quota.denominator(k) as f64;
    let name = match quota {
        Quota::Hare => "dlp",
        Quota::Droop => "drdlp",
    };
    let mut model = OptModel::new(format!("{name}_m{}_k{k}", space.m()));
    let committees = space.committees();
    let q: Vec<_> = (0..committees.len())
        .map(|i| model.add_continuous(format!("q_{i}"), 0.0, f64::INFINITY))
        .collect();
    let u = model.add_continuous("u", f64::NEG_INFINITY, f64::INFINITY);
    model.add_constraint(Constraint::linear(
        "lottery",
        q.iter().map(|v| (*v, 1.0)).collect(),
        RowSense::Eq,
        1.0,
    ));
    for a in space.ballots() {
        let mut terms: Vec<_> = committees
            .iter()
            .enumerate()
            .filter(|(i, w)| improves(a, **w, d.by_id(*i)))
            .map(|(i, _)| (q[i], 1.0))
            .collect();
        terms.push((u, -1.0));
        model.add_constraint(Constraint::linear(format!("load_{}", a.mask()), terms, RowSense::Le, 0.0));
    }
    let mut objective = vec![(u, 1.0)];
    objective.extend(
        q.iter()
            .enumerate()
            .map(|(i, v)| (*v, -(d.by_id(i).len() as f64) / denom)),
    );
    model.set_objective(ObjectiveSense::Minimize, objective);
    model
}

/// The search program with its selector binaries fixed to `d`: maximize `mu`
/// over distributions `x` such that every committee's assigned deviation
/// has excess at least `mu`.
pub fn build_fixed_deviation_lp(d: &DeviationFunction, quota: Quota) -> OptModel {
    let space = d.space();
    let k = space.k();
    let denom = quota.denominator(k) as f64;
    let mut model = OptModel::new(format!("lp_y_m{}_k{k}_{quota}", space.m()));
    let x: Vec<_> = space
        .ballots()
        .map(|a| model.add_continuous(format!("x_{}", a.joined()), 0.0, f64::INFINITY))
        .collect();
    let mu = model.add_continuous("mu", f64::NEG_INFINITY, f64::INFINITY);
    model.add_constraint(Constraint::linear(
        "simplex",
        x.iter().map(|v| (*v, 1.0)).collect(),
        RowSense::Eq,
        1.0,
    ));
    for (i, (w, dev)) in d.pairs().enumerate() {
        let mut terms = vec![(mu, 1.0)];
        terms.extend(
            space
                .ballots()
                .filter(|a| improves(*a, w, dev))
                .map(|a| (x[a.mask() as usize], -1.0)),
        );
        model.add_constraint(Constraint::linear(
            format!("excess_{i}"),
            terms,
            RowSense::Le,
            -(dev.len() as f64) / denom,
        ));
    }
    model.set_objective(ObjectiveSense::Maximize, vec![(mu, 1.0)]);
    model
}

fn solve_lp(model: &OptModel, cfg: &BackendConfig) -> Result<f64> {
    solver::solve(model, cfg).optimal_objective()
}

/// Optimal value of [`build_dlp`].
pub fn solve_dlp(d: &DeviationFunction, quota: Quota, cfg: &BackendConfig) -> Result<f64> {
    solve_lp(&build_dlp(d, quota), cfg)
}

/// Optimal value of [`build_fixed_deviation_lp`].
pub fn solve_fixed_deviation_lp(d: &DeviationFunction, quota: Quota, cfg: &BackendConfig) -> Result<f64> {
    solve_lp(&build_fixed_deviation_lp(d, quota), cfg)
}

/// Smallest-index completion of `required` to a `k`-committee.
fn complete(required: CandidateSet, m: usize, k: usize) -> CandidateSet {
    debug_assert!(required.len() <= k);
    let mut w = required;
    for c in 0..m {
        if w.len() == k {
            break;
        }
        w = w.with(c);
    }
    w
}

/// Certificate for deviation functions that are singleton everywhere except
/// on at most one committee `W*` with `t = |D(W*)|`.
///
/// Builds the chain `W_1 = W*`, then `W_i ⊇ D(W_1) ∪ .. ∪ D(W_{i-1})` for
/// `i = 2..=k+2-t`, puts `1/(k+2-t)` on each link and sets `u = 1/(k+2-t)`.
/// Each ballot is attracted by at most one link, so the objective is
/// `-1/(k(k+2-t))` under Hare and `-(1-t)/((k+1)(k+2-t))`, never positive, under Droop.
pub fn certificate_singleton(d: &DeviationFunction) -> Result<DualCertificate> {
    let space = d.space();
    let (m, k) = (space.m(), space.k());
    let special = d.non_singletons();
    if special.len() > 1 {
        return param(format!(
            "{} committees have non-singleton deviations; at most one is allowed",
            special.len()
        ));
    }
    let start = special.first().copied().unwrap_or(0);
    let t = d.by_id(start).len();
    let links = k + 2 - t;
    let share = Rational::new(BigInt::one(), BigInt::from(links));

    let mut chain = vec![start];
    let mut covered = d.by_id(start);
    for _ in 1..links {
        let w = complete(covered, m, k);
        let id = space.committee_id(w)?;
        chain.push(id);
        covered = covered.union(d.by_id(id));
    }
    Ok(DualCertificate::new(
        chain.into_iter().map(|id| (id, share.clone())),
        share.clone(),
    ))
}

/// Which branch of the `k = m-1` construction applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KPlusOneCase {
    /// Some committee's deviation lies inside it; all mass goes there.
    SelfContained { committee: usize },
    /// Every committee's deviation contains its missing candidate; a covering chain of this length.
    Chain { length: usize },
}

/// Certificate for `k = m - 1` and an arbitrary deviation function.
///
/// Committees are named by the one candidate they leave out. If some
/// `D(C∖{c_j})` avoids `c_j`, the point mass on that committee with `u = 0`
/// works. Otherwise, committees are picked greedily by smallest uncovered
/// missing candidate until the chosen deviations cover every candidate; the
/// uniform lottery on them with `u = 1/T` is feasible.
pub fn certificate_kplusone(d: &DeviationFunction) -> Result<(DualCertificate, KPlusOneCase)> {
    let space = d.space();
    let (m, k) = (space.m(), space.k());
    if k + 1 != m {
        return param(format!("this construction needs k = m - 1, got m={m}, k={k}"));
    }
    let all = CandidateSet::prefix(m);
    let leave_out = |j: usize| space.committee_id(all.difference(CandidateSet::singleton(j)));

    for j in 0..m {
        let id = leave_out(j)?;
        if !d.by_id(id).contains(j) {
            let cert = DualCertificate::new([(id, Rational::one())], Rational::zero());
            return Ok((cert, KPlusOneCase::SelfContained { committee: id }));
        }
    }

    let mut chain = Vec::new();
    let mut covered = CandidateSet::EMPTY;
    while covered != all {
        let j = all
            .difference(covered)
            .first()
            .expect("uncovered candidate exists");
        let id = leave_out(j)?;
        chain.push(id);
        covered = covered.union(d.by_id(id));
    }
    let length = chain.len();
    let share = Rational::new(BigInt::one(), BigInt::from(length));
    let cert = DualCertificate::new(chain.into_iter().map(|id| (id, share.clone())), share.clone());
    Ok((cert, KPlusOneCase::Chain { length }))
}

/// The all-singleton deviation function used by the constructive lower
/// bound: each committee deviates to the smallest member of the first `k+1`
/// candidates it misses.
pub fn lower_bound_deviations(space: CommitteeSpace) -> DeviationFunction {
    let block = CandidateSet::prefix(space.k() + 1);
    DeviationFunction::from_fn(space, |w| {
        CandidateSet::singleton(block.difference(w).first().expect("|B| > |W|"))
    })
    .expect("singletons are valid deviations")
}
