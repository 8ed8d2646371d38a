//! Weak, Lindahl and payment-function priceability of a committee for a
//! vote distribution, with exact price systems, exact infeasibility
//! certificates, and a search for committees that are stable but not
//! priceable.
//!
//! A price system charges each ballot class `A` a price `p[A,c]` per
//! candidate. Every candidate collects at most `1/k` in total, and every
//! "improving set" `T` of a ballot must cost more than its unit budget.
//! Weak priceability only asks this of `T = (A ∩ W) + d` for `d ∈ A \ W`;
//! Lindahl priceability asks it of every `T` with `|A ∩ T| > |A ∩ W|`, and
//! it suffices to check the sets `T ⊆ A` of size `|A ∩ W| + 1`.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::combinatorics::{improves, subsets_of_size, CandidateSet, CommitteeSpace};
use crate::election::{examples, VoteDistribution};
use crate::error::{param, Error, Result};
use crate::model::{Constraint, ObjectiveSense, OptModel, RowSense, VarId};
use crate::oracle::{is_stable, stability_report, Quota, StabilityReport};
use crate::rational::{self, Rational, RationalJson, DEFAULT_DENOMINATOR_CAP};
use crate::solver::{self, BackendConfig, SolveStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriceKind {
    Weak,
    Lindahl,
}

impl fmt::Display for PriceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PriceKind::Weak => "weak",
            PriceKind::Lindahl => "lindahl",
        })
    }
}

impl FromStr for PriceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "weak" => Ok(PriceKind::Weak),
            "lindahl" => Ok(PriceKind::Lindahl),
            other => param(format!("unknown priceability kind {other:?}")),
        }
    }
}

/// Prices charged to an off-support ballot for every candidate.
pub fn off_support_price() -> Rational {
    rational::ratio(11, 10)
}

/// Improving sets a ballot must not be able to afford.
pub fn tsets(ballot: CandidateSet, w: CandidateSet, kind: PriceKind) -> Vec<CandidateSet> {
    let kept = ballot.intersection(w);
    match kind {
        PriceKind::Weak => ballot.difference(w).iter().map(|d| kept.with(d)).collect(),
        PriceKind::Lindahl => {
            if ballot.is_subset(w) {
                return Vec::new();
            }
            let members = ballot.indices();
            subsets_of_size(members.len(), kept.len() + 1)
                .into_iter()
                .map(|s| CandidateSet::from_indices(s.iter().map(|i| members[i])).expect("subset of a ballot"))
                .collect()
        }
    }
}

/// Every `T ⊆ {c1..cm}` with `|A ∩ T| > |A ∩ W|`, without the minimality
/// reduction. Exponential; meant for cross-checks on small `m`.
pub fn tsets_unreduced(ballot: CandidateSet, w: CandidateSet, m: usize) -> Vec<CandidateSet> {
    let need = ballot.intersection(w).len();
    (0u64..1 << m)
        .map(CandidateSet::from_mask)
        .filter(|t| ballot.intersection(*t).len() > need)
        .collect()
}

fn check_committee(x: &VoteDistribution, w: CandidateSet, k: usize) -> Result<CommitteeSpace> {
    let space = CommitteeSpace::new(x.m(), k)?;
    if !space.is_committee(w) {
        return param(format!("{w} is not a {k}-committee over {} candidates", x.m()));
    }
    Ok(space)
}

/// Label of a price variable, `p[{c2,c4},c2]`.
pub fn price_label(ballot: CandidateSet, c: usize) -> String {
    format!("p[{ballot},c{}]", c + 1)
}

/// A price system on the support of `x`. Off-support ballots pay
/// [`off_support_price`] for every candidate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PriceSystem {
    pub kind: PriceKind,
    /// `(ballot, candidate) -> price`; missing support entries are zero.
    pub prices: BTreeMap<(CandidateSet, usize), Rational>,
}

impl PriceSystem {
    pub fn price(&self, x: &VoteDistribution, ballot: CandidateSet, c: usize) -> Rational {
        if x.weight(ballot).is_zero() {
            return off_support_price();
        }
        self.prices.get(&(ballot, c)).cloned().unwrap_or_else(Rational::zero)
    }
}

#[derive(Serialize, Deserialize)]
struct PriceEntryJson {
    ballot: CandidateSet,
    candidate: usize,
    #[serde(flatten)]
    price: RationalJson,
}

#[derive(Serialize, Deserialize)]
struct PriceSystemJson {
    kind: PriceKind,
    off_support: RationalJson,
    prices: Vec<PriceEntryJson>,
}

impl Serialize for PriceSystem {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        PriceSystemJson {
            kind: self.kind,
            off_support: RationalJson::from(&off_support_price()),
            prices: self
                .prices
                .iter()
                .map(|((a, c), p)| PriceEntryJson {
                    ballot: *a,
                    candidate: *c,
                    price: p.into(),
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PriceSystem {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error as _;
        let json = PriceSystemJson::deserialize(d)?;
        let mut prices = BTreeMap::new();
        for e in json.prices {
            prices.insert((e.ballot, e.candidate), e.price.to_rational().map_err(D::Error::custom)?);
        }
        Ok(PriceSystem { kind: json.kind, prices })
    }
}

/// Checks both price-system conditions exactly, over all `2^m` ballots.
pub fn verify_price_system(ps: &PriceSystem, x: &VoteDistribution, w: CandidateSet, k: usize) -> Result<(), String> {
    let space = check_committee(x, w, k).map_err(|e| e.to_string())?;
    let cap = rational::ratio(1, k as i64);
    for ((a, c), p) in &ps.prices {
        if p.is_negative() {
            return Err(format!("{} is negative", price_label(*a, *c)));
        }
    }
    for c in 0..space.m() {
        let load: Rational = x.support().map(|(a, xa)| xa * ps.price(x, a, c)).sum();
        if load > cap {
            return Err(format!("candidate c{} collects {load} > 1/{k}", c + 1));
        }
    }
    for a in space.ballots() {
        for t in tsets(a, w, ps.kind) {
            let cost: Rational = t.iter().map(|c| ps.price(x, a, c)).sum();
            if cost <= Rational::one() {
                return Err(format!("ballot {a} can afford {t} at total price {cost}"));
            }
        }
    }
    Ok(())
}

/// Multipliers proving that no price system exists: `t` on the per-candidate
/// revenue caps and `g` (summing to one) on the affordability constraints.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InfeasibilityCertificate {
    /// Indexed by candidate.
    pub t: Vec<Rational>,
    /// `(ballot, improving set) -> multiplier`.
    pub g: BTreeMap<(CandidateSet, CandidateSet), Rational>,
}

impl InfeasibilityCertificate {
    /// Smallest `t` compatible with `g`: `t[c] = max_A Σ_{T ∋ c} g[A,T] / x[A]`.
    pub fn from_multipliers(
        m: usize,
        x: &VoteDistribution,
        g: BTreeMap<(CandidateSet, CandidateSet), Rational>,
    ) -> Option<Self> {
        let mut t = vec![Rational::zero(); m];
        let mut per_pair: BTreeMap<(CandidateSet, usize), Rational> = BTreeMap::new();
        for ((a, set), v) in &g {
            for c in set.iter() {
                *per_pair.entry((*a, c)).or_insert_with(Rational::zero) += v;
            }
        }
        for ((a, c), need) in per_pair {
            if need.is_zero() {
                continue;
            }
            let xa = x.weight(a);
            if xa.is_zero() {
                return None;
            }
            let v = need / xa;
            if v > t[c] {
                t[c] = v;
            }
        }
        Some(InfeasibilityCertificate { t, g })
    }

    pub fn value(&self, k: usize) -> Rational {
        self.t.iter().sum::<Rational>() / Rational::from_integer(BigInt::from(k))
    }
}

#[derive(Serialize, Deserialize)]
struct MultiplierJson {
    ballot: CandidateSet,
    set: CandidateSet,
    #[serde(flatten)]
    value: RationalJson,
}

#[derive(Serialize, Deserialize)]
struct CertificateJson {
    t: Vec<RationalJson>,
    g: Vec<MultiplierJson>,
}

impl Serialize for InfeasibilityCertificate {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        CertificateJson {
            t: self.t.iter().map(RationalJson::from).collect(),
            g: self
                .g
                .iter()
                .map(|((a, set), v)| MultiplierJson {
                    ballot: *a,
                    set: *set,
                    value: v.into(),
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for InfeasibilityCertificate {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error as _;
        let json = CertificateJson::deserialize(d)?;
        let t = json
            .t
            .iter()
            .map(|r| r.to_rational().map_err(D::Error::custom))
            .collect::<Result<_, _>>()?;
        let mut g = BTreeMap::new();
        for e in json.g {
            g.insert((e.ballot, e.set), e.value.to_rational().map_err(D::Error::custom)?);
        }
        Ok(InfeasibilityCertificate { t, g })
    }
}

/// Checks the dual constraints exactly and that the value is at most one.
pub fn verify_infeasibility(
    cert: &InfeasibilityCertificate,
    x: &VoteDistribution,
    w: CandidateSet,
    k: usize,
    kind: PriceKind,
) -> Result<(), String> {
    let space = check_committee(x, w, k).map_err(|e| e.to_string())?;
    if cert.t.len() != space.m() {
        return Err(format!("t has {} entries, expected {}", cert.t.len(), space.m()));
    }
    if let Some(c) = cert.t.iter().position(|v| v.is_negative()) {
        return Err(format!("t[c{}] is negative", c + 1));
    }
    let mut total = Rational::zero();
    let mut need: BTreeMap<(CandidateSet, usize), Rational> = BTreeMap::new();
    for ((a, set), v) in &cert.g {
        if v.is_negative() {
            return Err(format!("multiplier on ({a}, {set}) is negative"));
        }
        if !a.fits(space.m()) || !tsets(*a, w, kind).contains(set) {
            return Err(format!("{set} is not an improving set of ballot {a}"));
        }
        total += v;
        for c in set.iter() {
            *need.entry((*a, c)).or_insert_with(Rational::zero) += v;
        }
    }
    if !total.is_one() {
        return Err(format!("multipliers sum to {total}, not 1"));
    }
    for ((a, c), v) in need {
        let have = &cert.t[c] * x.weight(a);
        if have < v {
            return Err(format!("t[c{}]·x[{a}] = {have} < {v}", c + 1));
        }
    }
    let value = cert.value(k);
    if value > Rational::one() {
        return Err(format!("certificate value {value} exceeds 1"));
    }
    Ok(())
}

/// The price LP: maximize `eps` subject to the revenue caps and
/// `Σ_{c ∈ T} p[A,c] >= eps` for every support ballot `A` and improving set `T`.
#[derive(Debug, Clone)]
pub struct PriceLp {
    pub model: OptModel,
    pub epsilon: VarId,
    pub prices: Vec<((CandidateSet, usize), VarId)>,
    pub rows: Vec<(CandidateSet, CandidateSet)>,
}

fn build_price_lp(
    x: &VoteDistribution,
    k: usize,
    family: impl Fn(CandidateSet) -> Vec<CandidateSet>,
    price_candidates: impl Fn(CandidateSet) -> CandidateSet,
    name: &str,
) -> PriceLp {
    let m = x.m();
    let mut model = OptModel::new(name);
    let mut index = BTreeMap::new();
    let mut prices = Vec::new();
    for (a, _) in x.support() {
        for c in price_candidates(a).iter() {
            let v = model.add_continuous(format!("p_{}_{c}", a.mask()), 0.0, f64::INFINITY);
            index.insert((a, c), v);
            prices.push(((a, c), v));
        }
    }
    let epsilon = model.add_continuous("eps", f64::NEG_INFINITY, f64::INFINITY);
    for c in 0..m {
        let terms: Vec<_> = x
            .support()
            .filter_map(|(a, xa)| index.get(&(a, c)).map(|v| (*v, rational::to_f64(xa))))
            .collect();
        if !terms.is_empty() {
            model.add_constraint(Constraint::linear(format!("revenue_{c}"), terms, RowSense::Le, 1.0 / k as f64));
        }
    }
    let mut rows = Vec::new();
    for (a, _) in x.support() {
        for t in family(a) {
            let mut terms: Vec<_> = t.iter().filter_map(|c| index.get(&(a, c)).map(|v| (*v, 1.0))).collect();
            terms.push((epsilon, -1.0));
            model.add_constraint(Constraint::linear(
                format!("afford_{}_{}", a.mask(), t.mask()),
                terms,
                RowSense::Ge,
                0.0,
            ));
            rows.push((a, t));
        }
    }
    model.set_objective(ObjectiveSense::Maximize, vec![(epsilon, 1.0)]);
    PriceLp {
        model,
        epsilon,
        prices,
        rows,
    }
}

/// Price LP with prices only on approved candidates and the reduced
/// improving-set family.
pub fn build_linlp(x: &VoteDistribution, w: CandidateSet, k: usize, kind: PriceKind) -> Result<PriceLp> {
    check_committee(x, w, k)?;
    Ok(build_price_lp(x, k, |a| tsets(a, w, kind), |a| a, &format!("linlp_{kind}")))
}

/// Price LP with a price on every candidate and every improving set.
pub fn build_linlp_unreduced(x: &VoteDistribution, w: CandidateSet, k: usize) -> Result<PriceLp> {
    check_committee(x, w, k)?;
    let m = x.m();
    Ok(build_price_lp(
        x,
        k,
        |a| tsets_unreduced(a, w, m),
        |_| CandidateSet::prefix(m),
        "linlp_unreduced",
    ))
}

/// The dual of the price LP: minimize `Σ t / k` over `t >= 0` and a
/// distribution `g` on `(ballot, improving set)` pairs with
/// `t[c]·x[A] >= Σ_{T ∋ c} g[A,T]`.
#[derive(Debug, Clone)]
pub struct DualPriceLp {
    pub model: OptModel,
    pub t: Vec<VarId>,
    pub g: Vec<((CandidateSet, CandidateSet), VarId)>,
}

pub fn build_lindlp(x: &VoteDistribution, w: CandidateSet, k: usize, kind: PriceKind) -> Result<DualPriceLp> {
    check_committee(x, w, k)?;
    let m = x.m();
    let mut model = OptModel::new(format!("lindlp_{kind}"));
    let t: Vec<_> = (0..m)
        .map(|c| model.add_continuous(format!("t_{c}"), 0.0, f64::INFINITY))
        .collect();
    let mut g = Vec::new();
    for (a, _) in x.support() {
        for set in tsets(a, w, kind) {
            let v = model.add_continuous(format!("g_{}_{}", a.mask(), set.mask()), 0.0, f64::INFINITY);
            g.push(((a, set), v));
        }
    }
    model.add_constraint(Constraint::linear(
        "normalize",
        g.iter().map(|(_, v)| (*v, 1.0)).collect(),
        RowSense::Eq,
        1.0,
    ));
    for (a, xa) in x.support() {
        for c in a.iter() {
            let mut terms: Vec<_> = g
                .iter()
                .filter(|((b, set), _)| *b == a && set.contains(c))
                .map(|(_, v)| (*v, -1.0))
                .collect();
            if terms.is_empty() {
                continue;
            }
            terms.push((t[c], rational::to_f64(xa)));
            model.add_constraint(Constraint::linear(
                format!("cover_{}_{c}", a.mask()),
                terms,
                RowSense::Ge,
                0.0,
            ));
        }
    }
    model.set_objective(
        ObjectiveSense::Minimize,
        t.iter().map(|v| (*v, 1.0 / k as f64)).collect(),
    );
    Ok(DualPriceLp { model, t, g })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum PriceabilityOutcome {
    Priceable { prices: PriceSystem },
    NotPriceable { certificate: InfeasibilityCertificate },
    /// Neither a price system nor a certificate survived exact re-checking.
    Undecided { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceabilityReport {
    pub kind: PriceKind,
    pub committee: CandidateSet,
    pub k: usize,
    /// Optimal value of the price LP; `None` when no constraint applies.
    pub lp_value: Option<f64>,
    pub outcome: PriceabilityOutcome,
}

impl PriceabilityReport {
    pub fn is_priceable(&self) -> Option<bool> {
        match self.outcome {
            PriceabilityOutcome::Priceable { .. } => Some(true),
            PriceabilityOutcome::NotPriceable { .. } => Some(false),
            PriceabilityOutcome::Undecided { .. } => None,
        }
    }
}

fn exact_price_system(
    lp: &PriceLp,
    values: &[f64],
    x: &VoteDistribution,
    w: CandidateSet,
    k: usize,
    kind: PriceKind,
) -> Option<PriceSystem> {
    let mut prices = BTreeMap::new();
    for ((a, c), v) in &lp.prices {
        let p = rational::rationalize(values[v.0].max(0.0), DEFAULT_DENOMINATOR_CAP);
        if !p.is_zero() {
            prices.insert((*a, *c), p);
        }
    }
    // Scale so the busiest candidate collects exactly 1/k.
    let cap = rational::ratio(1, k as i64);
    let busiest = (0..x.m())
        .map(|c| {
            prices
                .iter()
                .filter(|((_, d), _)| *d == c)
                .map(|((a, _), p)| x.weight(*a) * p)
                .sum::<Rational>()
        })
        .max()?;
    if busiest.is_zero() {
        return None;
    }
    let scale = cap / busiest;
    for p in prices.values_mut() {
        *p = &*p * &scale;
    }
    let ps = PriceSystem { kind, prices };
    verify_price_system(&ps, x, w, k).ok().map(|_| ps)
}

fn exact_certificate(
    cfg: &BackendConfig,
    x: &VoteDistribution,
    w: CandidateSet,
    k: usize,
    kind: PriceKind,
) -> Option<InfeasibilityCertificate> {
    let dual = build_lindlp(x, w, k, kind).ok()?;
    let sol = solver::solve(&dual.model, cfg);
    if !sol.status.is_optimal() {
        return None;
    }
    let raw: Vec<f64> = dual.g.iter().map(|(_, v)| sol.values[v.0]).collect();
    let exact = rational::rationalize_simplex(&raw, DEFAULT_DENOMINATOR_CAP)?;
    let g = dual
        .g
        .iter()
        .zip(exact)
        .filter(|(_, v)| !v.is_zero())
        .map(|((key, _), v)| (*key, v))
        .collect();
    let cert = InfeasibilityCertificate::from_multipliers(x.m(), x, g)?;
    verify_infeasibility(&cert, x, w, k, kind).ok().map(|_| cert)
}

/// Decides weak or Lindahl priceability. The answer is always backed by an
/// exactly verified price system or certificate, or reported as undecided.
pub fn check_priceable(
    x: &VoteDistribution,
    w: CandidateSet,
    k: usize,
    kind: PriceKind,
    cfg: &BackendConfig,
) -> Result<PriceabilityReport> {
    check_committee(x, w, k)?;
    let report = |lp_value, outcome| PriceabilityReport {
        kind,
        committee: w,
        k,
        lp_value,
        outcome,
    };
    let lp = build_linlp(x, w, k, kind)?;
    if lp.rows.is_empty() {
        let prices = PriceSystem {
            kind,
            prices: BTreeMap::new(),
        };
        verify_price_system(&prices, x, w, k).map_err(Error::Integrity)?;
        return Ok(report(None, PriceabilityOutcome::Priceable { prices }));
    }
    let sol = solver::solve(&lp.model, cfg);
    let eps = match (&sol.status, sol.objective) {
        (SolveStatus::Optimal, Some(v)) => v,
        (status, _) => {
            return Ok(report(
                None,
                PriceabilityOutcome::Undecided {
                    reason: format!("price LP did not solve: {status:?}"),
                },
            ))
        }
    };
    let try_prices = || exact_price_system(&lp, &sol.values, x, w, k, kind);
    let try_cert = || exact_certificate(cfg, x, w, k, kind);
    let outcome = if eps > 1.0 {
        try_prices()
            .map(|prices| PriceabilityOutcome::Priceable { prices })
            .or_else(|| try_cert().map(|certificate| PriceabilityOutcome::NotPriceable { certificate }))
    } else {
        try_cert()
            .map(|certificate| PriceabilityOutcome::NotPriceable { certificate })
            .or_else(|| try_prices().map(|prices| PriceabilityOutcome::Priceable { prices }))
    };
    let outcome = outcome.unwrap_or_else(|| PriceabilityOutcome::Undecided {
        reason: format!("price LP value {eps} could not be confirmed either way"),
    });
    Ok(report(Some(eps), outcome))
}

/// A uniform candidate price `r` and per-ballot payments for payment-function
/// priceability. `r` is in units of `n/k`, so everyone paying their own
/// committee evenly gives `r = 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PetersPayment {
    pub r: Rational,
    /// `(ballot, elected candidate) -> payment` per voter of that ballot.
    pub payments: BTreeMap<(CandidateSet, usize), Rational>,
}

impl PetersPayment {
    pub fn payment(&self, ballot: CandidateSet, c: usize) -> Rational {
        self.payments.get(&(ballot, c)).cloned().unwrap_or_else(Rational::zero)
    }
}

#[derive(Serialize, Deserialize)]
struct PaymentJson {
    r: RationalJson,
    payments: Vec<PriceEntryJson>,
}

impl Serialize for PetersPayment {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        PaymentJson {
            r: (&self.r).into(),
            payments: self
                .payments
                .iter()
                .map(|((a, c), p)| PriceEntryJson {
                    ballot: *a,
                    candidate: *c,
                    price: p.into(),
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PetersPayment {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error as _;
        let json = PaymentJson::deserialize(d)?;
        let mut payments = BTreeMap::new();
        for e in json.payments {
            payments.insert((e.ballot, e.candidate), e.price.to_rational().map_err(D::Error::custom)?);
        }
        Ok(PetersPayment {
            r: json.r.to_rational().map_err(D::Error::custom)?,
            payments,
        })
    }
}

/// Checks the five payment conditions exactly.
pub fn verify_peters(pay: &PetersPayment, x: &VoteDistribution, w: CandidateSet, k: usize) -> Result<(), String> {
    let space = check_committee(x, w, k).map_err(|e| e.to_string())?;
    if !pay.r.is_positive() {
        return Err(format!("price r = {} is not positive", pay.r));
    }
    // Per unit of voter mass.
    let r = &pay.r / Rational::from_integer(BigInt::from(k));
    for ((a, c), f) in &pay.payments {
        if f.is_negative() || *f > Rational::one() {
            return Err(format!("payment of {a} to c{} is outside [0, 1]", c + 1));
        }
        if !a.contains(*c) {
            return Err(format!("{a} pays c{} without approving it", c + 1));
        }
        if !w.contains(*c) && !f.is_zero() {
            return Err(format!("unelected c{} receives a payment", c + 1));
        }
        if x.weight(*a).is_zero() && !f.is_zero() {
            return Err(format!("{a} is not in the support"));
        }
    }
    for (a, _) in x.support() {
        let spent: Rational = a.iter().map(|c| pay.payment(a, c)).sum();
        if spent > Rational::one() {
            return Err(format!("{a} spends {spent} > 1"));
        }
    }
    for c in 0..space.m() {
        if w.contains(c) {
            let revenue: Rational = x.support().map(|(a, xa)| xa * pay.payment(a, c)).sum();
            if revenue != r {
                return Err(format!("c{} collects {revenue}, price is {r}", c + 1));
            }
        } else {
            let left: Rational = x
                .support()
                .filter(|(a, _)| a.contains(c))
                .map(|(a, xa)| {
                    let spent: Rational = a.intersection(w).iter().map(|d| pay.payment(a, d)).sum();
                    xa * (Rational::one() - spent)
                })
                .sum();
            if left > r {
                return Err(format!("supporters of c{} keep {left} > {r}", c + 1));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum PetersOutcome {
    Priceable { payment: PetersPayment },
    NotPriceable { reason: String },
    Undecided { reason: String },
}

impl PetersOutcome {
    pub fn is_priceable(&self) -> Option<bool> {
        match self {
            PetersOutcome::Priceable { .. } => Some(true),
            PetersOutcome::NotPriceable { .. } => Some(false),
            PetersOutcome::Undecided { .. } => None,
        }
    }
}

/// Decides payment-function priceability by maximizing the price `r` over
/// class-uniform payments.
pub fn check_peters_priceable(x: &VoteDistribution, w: CandidateSet, k: usize, cfg: &BackendConfig) -> Result<PetersOutcome> {
    let space = check_committee(x, w, k)?;
    let mut model = OptModel::new("peters");
    let r = model.add_continuous("r", 0.0, f64::INFINITY);
    let mut f = BTreeMap::new();
    for (a, _) in x.support() {
        let mut budget = Vec::new();
        for c in a.intersection(w).iter() {
            let v = model.add_continuous(format!("f_{}_{c}", a.mask()), 0.0, 1.0);
            f.insert((a, c), v);
            budget.push((v, 1.0));
        }
        if !budget.is_empty() {
            model.add_constraint(Constraint::linear(format!("budget_{}", a.mask()), budget, RowSense::Le, 1.0));
        }
    }
    for c in 0..space.m() {
        if w.contains(c) {
            let mut terms: Vec<_> = x
                .support()
                .filter_map(|(a, xa)| f.get(&(a, c)).map(|v| (*v, rational::to_f64(xa))))
                .collect();
            terms.push((r, -1.0));
            model.add_constraint(Constraint::linear(format!("price_{c}"), terms, RowSense::Eq, 0.0));
        } else {
            let mut terms = vec![(r, -1.0)];
            let mut approvers = 0.0;
            for (a, xa) in x.support().filter(|(a, _)| a.contains(c)) {
                let xa = rational::to_f64(xa);
                approvers += xa;
                terms.extend(a.intersection(w).iter().map(|d| (f[&(a, d)], -xa)));
            }
            model.add_constraint(Constraint::linear(format!("residual_{c}"), terms, RowSense::Le, -approvers));
        }
    }
    model.set_objective(ObjectiveSense::Maximize, vec![(r, 1.0)]);
    let sol = solver::solve(&model, cfg);
    let best = match (&sol.status, sol.objective) {
        (SolveStatus::Infeasible, _) => {
            return Ok(PetersOutcome::NotPriceable {
                reason: "no payment system satisfies the residual-budget caps".into(),
            })
        }
        (SolveStatus::Optimal, Some(v)) => v,
        (status, _) => {
            return Ok(PetersOutcome::Undecided {
                reason: format!("payment LP did not solve: {status:?}"),
            })
        }
    };
    if best <= 1e-9 {
        return Ok(PetersOutcome::NotPriceable {
            reason: "the only feasible price is 0".into(),
        });
    }
    // Rationalize, then pin every elected candidate's revenue to the smallest one.
    let mut payments: BTreeMap<(CandidateSet, usize), Rational> = f
        .iter()
        .map(|(key, v)| (*key, rational::rationalize(sol.values[v.0].clamp(0.0, 1.0), DEFAULT_DENOMINATOR_CAP)))
        .collect();
    let revenue = |payments: &BTreeMap<(CandidateSet, usize), Rational>, c: usize| -> Rational {
        x.support()
            .map(|(a, xa)| xa * payments.get(&(a, c)).cloned().unwrap_or_else(Rational::zero))
            .sum()
    };
    let target = w.iter().map(|c| revenue(&payments, c)).min().expect("nonempty committee");
    if target.is_positive() {
        for c in w.iter() {
            let scale = &target / revenue(&payments, c);
            for ((_, d), p) in payments.iter_mut() {
                if *d == c {
                    *p = &*p * &scale;
                }
            }
        }
        payments.retain(|_, p| !p.is_zero());
        let payment = PetersPayment {
            r: target * Rational::from_integer(BigInt::from(k)),
            payments,
        };
        if verify_peters(&payment, x, w, k).is_ok() {
            return Ok(PetersOutcome::Priceable { payment });
        }
    }
    Ok(PetersOutcome::Undecided {
        reason: format!("payment LP reached r = {best} but no exact payment system was confirmed"),
    })
}

/// Renders a verified certificate as a contradiction proof, one inequality
/// per line. Multipliers are scaled so the largest `t` is one.
pub fn render_proof(
    cert: &InfeasibilityCertificate,
    x: &VoteDistribution,
    w: CandidateSet,
    k: usize,
    kind: PriceKind,
) -> Result<String> {
    verify_infeasibility(cert, x, w, k, kind).map_err(|e| Error::Integrity(format!("refusing to render: {e}")))?;
    let max_t = cert.t.iter().max().cloned().unwrap_or_else(Rational::zero);
    let scale = if max_t.is_positive() {
        Rational::one() / max_t
    } else {
        Rational::one()
    };
    let cap = rational::ratio(1, k as i64);

    // Price variables the affordability rows mention, with their total multiplier.
    let mut used: BTreeMap<(CandidateSet, usize), Rational> = BTreeMap::new();
    for ((a, set), v) in &cert.g {
        for c in set.iter() {
            *used.entry((*a, c)).or_insert_with(Rational::zero) += v * &scale;
        }
    }

    let mut out = String::new();
    let adjective = match kind {
        PriceKind::Weak => "weakly",
        PriceKind::Lindahl => "Lindahl",
    };
    writeln!(out, "Suppose {w} is {adjective} priceable with prices p[A,c] >= 0.").unwrap();
    writeln!(out, "Revenue caps, each multiplied by t[c]:").unwrap();
    let mut residual = Rational::zero();
    let mut coefficients: BTreeMap<(CandidateSet, usize), Rational> = BTreeMap::new();
    for (c, t) in cert.t.iter().enumerate() {
        let t = t * &scale;
        if t.is_zero() {
            continue;
        }
        let terms: Vec<_> = used
            .keys()
            .filter(|(_, d)| *d == c)
            .map(|(a, _)| {
                let coef = x.weight(*a);
                *coefficients.entry((*a, c)).or_insert_with(Rational::zero) += &t * &coef;
                format!("{coef} {}", price_label(*a, c))
            })
            .collect();
        writeln!(out, "  {t} * ( {} <= {cap} )", terms.join(" + ")).unwrap();
        residual += &t * &cap;
    }
    writeln!(out, "Affordability constraints, each multiplied by -g[A,T]:").unwrap();
    for ((a, set), v) in &cert.g {
        let v = v * &scale;
        let terms: Vec<_> = set.iter().map(|c| price_label(*a, c)).collect();
        writeln!(out, "  -{v} * ( {} > 1 )", terms.join(" + ")).unwrap();
        residual -= &v;
        for c in set.iter() {
            *coefficients.entry((*a, c)).or_insert_with(Rational::zero) -= &v;
        }
    }
    let leftover: Vec<_> = coefficients
        .iter()
        .filter(|(_, v)| !v.is_zero())
        .map(|((a, c), v)| format!("{v} {}", price_label(*a, *c)))
        .collect();
    if leftover.is_empty() {
        writeln!(out, "Adding everything up gives the contradiction 0 < {residual}.").unwrap();
    } else {
        writeln!(
            out,
            "Adding everything up gives the contradiction 0 <= {} < {residual}.",
            leftover.join(" + ")
        )
        .unwrap();
    }
    Ok(out)
}

/// Everything `render_proof` needs, as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofBundle {
    pub instance: VoteDistribution,
    pub committee: CandidateSet,
    pub k: usize,
    pub kind: PriceKind,
    pub certificate: InfeasibilityCertificate,
}

impl ProofBundle {
    pub fn render(&self) -> Result<String> {
        render_proof(&self.certificate, &self.instance, self.committee, self.k, self.kind)
    }
}

/// Searching for a committee `{c1..ck}` that is stable under `quota` but not
/// priceable: minimize the worst excess over distributions that admit an
/// infeasibility certificate. The certificate rows are bilinear in `(t, x)`.
pub fn build_linqip(m: usize, k: usize, quota: Quota, kind: PriceKind) -> Result<OptModel> {
    let space = CommitteeSpace::new(m, k)?;
    let w = CandidateSet::prefix(k);
    let denom = quota.denominator(k) as f64;
    let mut model = OptModel::new(format!("linqip_m{m}_k{k}_{quota}_{kind}"));
    let x: Vec<_> = space
        .ballots()
        .map(|a| model.add_continuous(format!("x_{}", a.joined()), 0.0, f64::INFINITY))
        .collect();
    let mu = model.add_continuous("mu", f64::NEG_INFINITY, f64::INFINITY);
    let t: Vec<_> = (0..m)
        .map(|c| model.add_continuous(format!("t_{c}"), 0.0, f64::INFINITY))
        .collect();
    let mut g = Vec::new();
    for a in space.ballots() {
        for set in tsets(a, w, kind) {
            let v = model.add_continuous(format!("g_{}_{}", a.mask(), set.mask()), 0.0, f64::INFINITY);
            g.push((a, set, v));
        }
    }
    model.add_constraint(Constraint::linear(
        "simplex",
        x.iter().map(|v| (*v, 1.0)).collect(),
        RowSense::Eq,
        1.0,
    ));
    model.add_constraint(Constraint::linear(
        "dual_value",
        t.iter().map(|v| (*v, 1.0 / k as f64)).collect(),
        RowSense::Le,
        1.0,
    ));
    model.add_constraint(Constraint::linear(
        "normalize",
        g.iter().map(|(_, _, v)| (*v, 1.0)).collect(),
        RowSense::Eq,
        1.0,
    ));
    for a in space.ballots() {
        for c in a.iter() {
            let terms: Vec<_> = g
                .iter()
                .filter(|(b, set, _)| *b == a && set.contains(c))
                .map(|(_, _, v)| (*v, -1.0))
                .collect();
            let mut row = Constraint::linear(format!("cover_{}_{c}", a.mask()), terms, RowSense::Ge, 0.0);
            row.bilinear.push((t[c], x[a.mask() as usize], 1.0));
            model.add_constraint(row);
        }
    }
    for (i, d) in space.deviations().into_iter().enumerate() {
        let mut terms = vec![(mu, 1.0)];
        terms.extend(
            space
                .ballots()
                .filter(|a| improves(*a, w, d))
                .map(|a| (x[a.mask() as usize], -1.0)),
        );
        model.add_constraint(Constraint::linear(
            format!("excess_{i}"),
            terms,
            RowSense::Ge,
            -(d.len() as f64) / denom,
        ));
    }
    model.set_objective(ObjectiveSense::Minimize, vec![(mu, 1.0)]);
    Ok(model)
}

/// Known distributions for which `{c1..ck}` is Droop-stable but not priceable.
pub fn known_candidates(m: usize, k: usize) -> Vec<VoteDistribution> {
    match (m, k) {
        (5, 3) => vec![examples::weak_counterexample(), examples::running_example()],
        (4, 2) => vec![examples::lindahl_counterexample()],
        _ => Vec::new(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    /// The bilinear program was solved to global optimality.
    Solver,
    /// Only the supplied candidate distributions were checked.
    VerificationFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub distribution: VoteDistribution,
    pub committee: CandidateSet,
    pub stability: StabilityReport,
    pub certificate: InfeasibilityCertificate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleReport {
    pub mode: SearchMode,
    /// Why the solver path was not taken.
    pub fallback_reason: Option<String>,
    pub candidates_checked: usize,
    pub found: Option<Counterexample>,
}

fn confirm(x: &VoteDistribution, k: usize, quota: Quota, kind: PriceKind, cfg: &BackendConfig) -> Result<Option<Counterexample>> {
    let w = CandidateSet::prefix(k);
    if !is_stable(x, w, k, quota)? {
        return Ok(None);
    }
    let report = check_priceable(x, w, k, kind, cfg)?;
    match report.outcome {
        PriceabilityOutcome::NotPriceable { certificate } => Ok(Some(Counterexample {
            distribution: x.clone(),
            committee: w,
            stability: stability_report(x, w, k, quota)?,
            certificate,
        })),
        _ => Ok(None),
    }
}

/// Looks for a distribution where `{c1..ck}` is stable under `quota` but not
/// `kind`-priceable. With a bilinear-capable backend the search program is
/// solved; otherwise each candidate distribution is verified exactly.
pub fn find_counterexample(
    m: usize,
    k: usize,
    quota: Quota,
    kind: PriceKind,
    candidates: &[VoteDistribution],
    cfg: &BackendConfig,
) -> Result<CounterexampleReport> {
    let model = build_linqip(m, k, quota, kind)?;
    let backend = solver::backend(&cfg.solver)?;
    if backend.supports_bilinear() {
        let sol = solver::solve_on(backend.as_ref(), &model, cfg, None);
        let mut found = None;
        if let (SolveStatus::Optimal, Some(v)) = (&sol.status, sol.objective) {
            let hit = match quota {
                Quota::Hare => v < 0.0,
                Quota::Droop => v <= cfg.tolerance,
            };
            if hit {
                let raw: Vec<f64> = sol.values[..1 << m].to_vec();
                if let Some(exact) = rational::rationalize_simplex(&raw, DEFAULT_DENOMINATOR_CAP) {
                    let x = VoteDistribution::new(
                        m,
                        exact.into_iter().enumerate().map(|(i, p)| (CandidateSet::from_mask(i as u64), p)),
                    )?;
                    found = confirm(&x, k, quota, kind, cfg)?;
                }
            }
        } else {
            return Err(Error::Solver(format!("search program did not solve: {:?}", sol.status)));
        }
        return Ok(CounterexampleReport {
            mode: SearchMode::Solver,
            fallback_reason: None,
            candidates_checked: 0,
            found,
        });
    }
    let mut found = None;
    let mut checked = 0;
    for x in candidates {
        if x.m() != m {
            return param(format!("candidate distribution has m = {}, expected {m}", x.m()));
        }
        checked += 1;
        if let Some(hit) = confirm(x, k, quota, kind, cfg)? {
            found = Some(hit);
            break;
        }
    }
    Ok(CounterexampleReport {
        mode: SearchMode::VerificationFallback,
        fallback_reason: Some(format!(
            "backend {} cannot solve bilinear programs; checked supplied candidates only",
            backend.id()
        )),
        candidates_checked: checked,
        found,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;

    fn set(labels: &[usize]) -> CandidateSet {
        CandidateSet::from_labels(labels)
    }

    #[test]
    fn tset_examples() {
        assert_eq!(tsets(set(&[2, 4]), set(&[1, 2, 3]), PriceKind::Weak), vec![set(&[2, 4])]);
        for kind in [PriceKind::Weak, PriceKind::Lindahl] {
            assert!(tsets(set(&[1, 3]), set(&[1, 2, 3]), kind).is_empty());
        }
        let mut got = tsets(set(&[1, 3, 4]), set(&[1, 2]), PriceKind::Lindahl);
        got.sort();
        let mut want = vec![set(&[1, 3]), set(&[1, 4]), set(&[3, 4])];
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn cor5_prices_accepted() {
        let x = examples::lindahl_counterexample();
        let mut prices = BTreeMap::new();
        let p = ratio(3, 2);
        prices.insert((set(&[3, 4]), 2), p.clone());
        prices.insert((set(&[3, 4]), 3), p.clone());
        prices.insert((set(&[1, 3, 4]), 0), p.clone());
        prices.insert((set(&[1, 2, 3, 4]), 1), p);
        let ps = PriceSystem {
            kind: PriceKind::Weak,
            prices,
        };
        verify_price_system(&ps, &x, set(&[1, 2]), 2).unwrap();
        let lindahl = PriceSystem {
            kind: PriceKind::Lindahl,
            ..ps
        };
        assert!(verify_price_system(&lindahl, &x, set(&[1, 2]), 2).is_err());
    }

    #[test]
    fn hand_certificates_verify() {
        let x = examples::running_example();
        let w = set(&[1, 2, 3]);
        let mut g = BTreeMap::new();
        g.insert((set(&[2, 4]), set(&[2, 4])), ratio(1, 3));
        g.insert((set(&[2, 5]), set(&[2, 5])), ratio(1, 3));
        g.insert((set(&[4, 5]), set(&[4])), ratio(1, 6));
        g.insert((set(&[4, 5]), set(&[5])), ratio(1, 6));
        let cert = InfeasibilityCertificate::from_multipliers(5, &x, g).unwrap();
        assert_eq!(cert.t, vec![ratio(0, 1), ratio(1, 1), ratio(0, 1), ratio(1, 1), ratio(1, 1)]);
        verify_infeasibility(&cert, &x, w, 3, PriceKind::Weak).unwrap();

        let x = examples::lindahl_counterexample();
        let w = set(&[1, 2]);
        let mut g = BTreeMap::new();
        let (a, b) = (ratio(1, 9), ratio(2, 9));
        g.insert((set(&[3, 4]), set(&[3])), b.clone());
        g.insert((set(&[3, 4]), set(&[4])), b.clone());
        g.insert((set(&[1, 3, 4]), set(&[1, 3])), a.clone());
        g.insert((set(&[1, 3, 4]), set(&[1, 4])), a.clone());
        g.insert((set(&[1, 3, 4]), set(&[3, 4])), a);
        g.insert((set(&[1, 2, 3, 4]), set(&[1, 3, 4])), b);
        let cert = InfeasibilityCertificate::from_multipliers(4, &x, g).unwrap();
        verify_infeasibility(&cert, &x, w, 2, PriceKind::Lindahl).unwrap();
        let proof = render_proof(&cert, &x, w, 2, PriceKind::Lindahl).unwrap();
        assert!(proof.contains("-1/6 * ( p[{c1,c3,c4},c1] + p[{c1,c3,c4},c3] > 1 )"), "{proof}");
        assert!(proof.contains("-1/3 * ( p[{c3,c4},c3] > 1 )"), "{proof}");
        assert!(proof.contains("contradiction 0 < 0"), "{proof}");
    }

    #[test]
    fn tampered_certificate_refused() {
        let x = examples::running_example();
        let mut g = BTreeMap::new();
        g.insert((set(&[2, 4]), set(&[2, 4])), ratio(1, 1));
        let mut cert = InfeasibilityCertificate::from_multipliers(5, &x, g).unwrap();
        cert.t[1] = ratio(1, 2);
        assert!(render_proof(&cert, &x, set(&[1, 2, 3]), 3, PriceKind::Weak).is_err());
    }

    #[test]
    fn single_line_proof() {
        // One ballot {c2}, committee {c1}: p[{c2},c2] <= 1 and p[{c2},c2] > 1.
        let x = VoteDistribution::point(2, set(&[2])).unwrap();
        let mut g = BTreeMap::new();
        g.insert((set(&[2]), set(&[2])), ratio(1, 1));
        let cert = InfeasibilityCertificate::from_multipliers(2, &x, g).unwrap();
        let proof = render_proof(&cert, &x, set(&[1]), 1, PriceKind::Weak).unwrap();
        assert!(proof.contains("  1 * ( 1 p[{c2},c2] <= 1 )"), "{proof}");
        assert!(proof.contains("contradiction 0 < 0"));
    }

    #[test]
    fn json_round_trips() {
        let x = examples::running_example();
        let mut g = BTreeMap::new();
        g.insert((set(&[2, 4]), set(&[2, 4])), ratio(1, 1));
        let cert = InfeasibilityCertificate::from_multipliers(5, &x, g).unwrap();
        let bundle = ProofBundle {
            instance: x,
            committee: set(&[1, 2, 3]),
            k: 3,
            kind: PriceKind::Weak,
            certificate: cert,
        };
        let text = serde_json::to_string(&bundle).unwrap();
        let back: ProofBundle = serde_json::from_str(&text).unwrap();
        assert_eq!(back, bundle);
    }

    #[test]
    fn linqip_shape() {
        let model = build_linqip(4, 2, Quota::Droop, PriceKind::Lindahl).unwrap();
        assert!(model.has_bilinear());
        model.validate().unwrap();
        assert!(build_linqip(2, 2, Quota::Hare, PriceKind::Weak).is_err());
        let err = solver::solve(&model, &BackendConfig::default());
        assert!(matches!(err.status, SolveStatus::Error { ref message } if message.contains("bilinear unsupported")));
    }
}
