//! The search program over distributions and deviation selectors, its
//! solution handling, and the constructive lower-bound assignment.
//!
//! Variables are `x_<ballot>` for all `2^m` ballots, a free `mu`, and a
//! binary `y_<committee id>_<deviation id>` for every committee and every
//! deviation that is not a subset of it. Each committee must select at least
//! one deviation, and `mu` is capped by the excess of every selected one.
//! Maximizing `mu` gives the largest sizewise-least-core value any
//! distribution achieves.

use num_bigint::BigInt;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::combinatorics::{binomial, improves, CandidateSet, CommitteeSpace};
use crate::duality::{lower_bound_deviations, DeviationFunction};
use crate::election::VoteDistribution;
use crate::error::{Error, Result};
use crate::model::{Constraint, ObjectiveSense, OptModel, RowSense, VarId};
use crate::oracle::{least_core, LeastCoreReport, Quota};
use crate::rational::{self, Rational, DEFAULT_DENOMINATOR_CAP};
use crate::solver::{self, BackendConfig, SolveStatus};

/// Constant deactivating the excess row of an unselected deviation.
pub const BIG_M: f64 = 3.0;

/// One selector binary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Selector {
    pub committee: usize,
    pub deviation: usize,
    pub var: VarId,
}

/// A built search program together with the variable layout.
#[derive(Debug, Clone)]
pub struct MilpModel {
    pub model: OptModel,
    pub space: CommitteeSpace,
    pub quota: Quota,
    /// Indexed by ballot mask.
    pub x: Vec<VarId>,
    pub mu: VarId,
    pub selectors: Vec<Selector>,
}

/// Number of `(committee, deviation)` pairs that keep a selector.
pub fn kept_pair_count(m: usize, k: usize) -> u128 {
    let per_committee: u128 = (1..=k).map(|l| binomial(m, l) - binomial(k, l)).sum();
    binomial(m, k) * per_committee
}

pub fn build_milp(m: usize, k: usize, quota: Quota) -> Result<MilpModel> {
    build_milp_with_big_m(m, k, quota, BIG_M)
}

/// As [`build_milp`] with a different deactivation constant. Any value of at
/// least 2 leaves the optimum unchanged.
pub fn build_milp_with_big_m(m: usize, k: usize, quota: Quota, big_m: f64) -> Result<MilpModel> {
    let space = CommitteeSpace::new(m, k)?;
    if m > 16 {
        return Err(Error::Parameter(format!("m = {m} is too large to materialize")));
    }
    let denom = quota.denominator(k) as f64;
    let mut model = OptModel::new(format!("milp_m{m}_k{k}_{quota}"));
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

    let deviations = space.deviations();
    let mut selectors = Vec::new();
    for (wi, w) in space.committees().into_iter().enumerate() {
        let mut cover = Vec::new();
        for (di, d) in deviations.iter().enumerate() {
            if d.is_subset(w) {
                continue;
            }
            let y = model.add_binary(format!("y_{wi}_{di}"));
            selectors.push(Selector {
                committee: wi,
                deviation: di,
                var: y,
            });
            cover.push((y, 1.0));

            let mut terms = vec![(mu, 1.0)];
            terms.extend(
                space
                    .ballots()
                    .filter(|a| improves(*a, w, *d))
                    .map(|a| (x[a.mask() as usize], -1.0)),
            );
            terms.push((y, big_m));
            model.add_constraint(Constraint::linear(
                format!("excess_{wi}_{di}"),
                terms,
                RowSense::Le,
                big_m - d.len() as f64 / denom,
            ));
        }
        model.add_constraint(Constraint::linear(format!("cover_{wi}"), cover, RowSense::Ge, 1.0));
    }
    model.set_objective(ObjectiveSense::Maximize, vec![(mu, 1.0)]);
    Ok(MilpModel {
        model,
        space,
        quota,
        x,
        mu,
        selectors,
    })
}

impl MilpModel {
    /// Full primal assignment placing `x`, `mu` and the selectors of `d`.
    pub fn assignment(&self, x: &VoteDistribution, d: &DeviationFunction, mu: &Rational) -> Result<Vec<f64>> {
        let mut values = vec![0.0; self.model.variables.len()];
        for (a, p) in x.support() {
            values[self.x[a.mask() as usize].0] = rational::to_f64(p);
        }
        values[self.mu.0] = rational::to_f64(mu);
        for s in &self.selectors {
            let dev = self.space.deviation_id(d.by_id(s.committee))?;
            if dev == s.deviation {
                values[s.var.0] = 1.0;
            }
        }
        Ok(values)
    }
}

/// Outcome of a search solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpSolution {
    pub m: usize,
    pub k: usize,
    pub quota: Quota,
    pub status: SolveStatus,
    pub mu: Option<f64>,
    pub best_bound: Option<f64>,
    /// Dense, indexed by ballot mask. Empty when no point is available.
    pub x: Vec<f64>,
    /// Selected `(committee id, deviation id)` pairs.
    pub y: Vec<(usize, usize)>,
}

impl MilpSolution {
    pub fn gap(&self) -> Option<f64> {
        Some((self.best_bound? - self.mu?).abs())
    }

    pub fn space(&self) -> Result<CommitteeSpace> {
        CommitteeSpace::new(self.m, self.k)
    }
}

/// Solves a built search program, optionally seeded with the lower-bound
/// assignment.
pub fn solve_search(milp: &MilpModel, cfg: &BackendConfig, warm_start: bool) -> Result<MilpSolution> {
    let start = if warm_start {
        let lb = lower_bound_assignment(milp.space.m(), milp.space.k(), milp.quota)?;
        Some(milp.assignment(&lb.distribution, &lb.deviations, &lb.mu)?)
    } else {
        None
    };
    let sol = solver::solve_with_start(&milp.model, cfg, start.as_deref());
    let has_point = !sol.values.is_empty();
    let x = if has_point {
        milp.x.iter().map(|v| sol.values[v.0]).collect()
    } else {
        Vec::new()
    };
    let y = if has_point {
        milp.selectors
            .iter()
            .filter(|s| sol.values[s.var.0] > 0.5)
            .map(|s| (s.committee, s.deviation))
            .collect()
    } else {
        Vec::new()
    };
    Ok(MilpSolution {
        m: milp.space.m(),
        k: milp.space.k(),
        quota: milp.quota,
        status: sol.status,
        mu: sol.objective,
        best_bound: sol.best_bound,
        x,
        y,
    })
}

fn rationalized_x(sol: &MilpSolution) -> Option<VoteDistribution> {
    if sol.x.is_empty() {
        return None;
    }
    let exact = rational::rationalize_simplex(&sol.x, DEFAULT_DENOMINATOR_CAP)?;
    let weights = exact
        .into_iter()
        .enumerate()
        .map(|(mask, p)| (CandidateSet::from_mask(mask as u64), p));
    VoteDistribution::new(sol.m, weights).ok()
}

/// Reads the deviation function off the selectors. A committee with several
/// selected deviations keeps the one with the largest excess at the
/// rationalized `x`, ties going to the lexicographically smallest index list.
pub fn extract_deviation_function(sol: &MilpSolution) -> Result<DeviationFunction> {
    let space = sol.space()?;
    let x = rationalized_x(sol)
        .ok_or_else(|| Error::Integrity("solution carries no usable distribution".into()))?;
    let deviations = space.deviations();
    let committees = space.committees();
    let mut chosen = Vec::with_capacity(committees.len());
    for (wi, w) in committees.iter().enumerate() {
        let mut best: Option<(Rational, CandidateSet)> = None;
        for &(ci, di) in &sol.y {
            if ci != wi {
                continue;
            }
            let d = *deviations
                .get(di)
                .ok_or_else(|| Error::Integrity(format!("deviation id {di} out of range")))?;
            let excess = crate::oracle::deviation_excess(&x, *w, d, sol.k, sol.quota)?;
            let better = match &best {
                None => true,
                Some((e, b)) => excess > *e || (excess == *e && d.indices() < b.indices()),
            };
            if better {
                best = Some((excess, d));
            }
        }
        match best {
            Some((_, d)) => chosen.push(d),
            None => return Err(Error::Integrity(format!("no deviation selected for committee {w}"))),
        }
    }
    DeviationFunction::new(space, chosen)
}

/// Exact re-check of a search result.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verification {
    pub passed: bool,
    /// Why verification failed, when it did.
    pub reason: Option<String>,
    pub distribution: Option<VoteDistribution>,
    pub report: Option<LeastCoreReport>,
}

/// Rationalizes `x`, computes its exact least-core value and checks it lies
/// within `2·tolerance` of the reported `mu`.
pub fn verify_solution(sol: &MilpSolution, tolerance: f64) -> Result<Verification> {
    let fail = |reason: String, distribution, report| Verification {
        passed: false,
        reason: Some(reason),
        distribution,
        report,
    };
    let Some(mu) = sol.mu else {
        return Ok(fail("solution has no objective value".into(), None, None));
    };
    let Some(x) = rationalized_x(sol) else {
        return Ok(fail("x could not be rationalized".into(), None, None));
    };
    let report = least_core(&x, sol.k, sol.quota)?;
    let diff = (rational::to_f64(&report.value) - mu).abs();
    if diff > 2.0 * tolerance {
        return Ok(fail(
            format!("exact value {} is {diff:e} away from mu = {mu}", report.value),
            Some(x),
            Some(report),
        ));
    }
    Ok(Verification {
        passed: true,
        reason: None,
        distribution: Some(x),
        report: Some(report),
    })
}

/// Distribution, deviation function and objective of the constructive
/// lower bound.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LowerBound {
    pub distribution: VoteDistribution,
    pub deviations: DeviationFunction,
    pub mu: Rational,
}

/// Uniform mass on the singletons of the first `k+1` candidates, each
/// committee deviating to the smallest of those it misses.
pub fn lower_bound_assignment(m: usize, k: usize, quota: Quota) -> Result<LowerBound> {
    let space = CommitteeSpace::new(m, k)?;
    let share = Rational::new(BigInt::one(), BigInt::from(k + 1));
    let distribution = VoteDistribution::new(m, (0..=k).map(|c| (CandidateSet::singleton(c), share.clone())))?;
    let mu = match quota {
        Quota::Hare => -Rational::new(BigInt::one(), BigInt::from(k * (k + 1))),
        Quota::Droop => Rational::zero(),
    };
    Ok(LowerBound {
        distribution,
        deviations: lower_bound_deviations(space),
        mu,
    })
}

/// Result of checking an assignment against the search program's rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentCheck {
    pub feasible: bool,
    /// Whether `mu` equals the largest value feasible for this `(x, y)`.
    pub tight: bool,
    #[serde(with = "rational::object")]
    pub best_mu: Rational,
    pub rows_checked: u64,
    pub first_violation: Option<String>,
}

/// Checks `(x, mu, y = D)` against every row of the search program with
/// exact arithmetic, row by row, without building the model.
pub fn check_assignment(x: &VoteDistribution, d: &DeviationFunction, mu: &Rational, quota: Quota) -> Result<AssignmentCheck> {
    check_assignment_with_big_m(x, d, mu, quota, &rational::int(BIG_M as i64))
}

pub fn check_assignment_with_big_m(
    x: &VoteDistribution,
    d: &DeviationFunction,
    mu: &Rational,
    quota: Quota,
    big_m: &Rational,
) -> Result<AssignmentCheck> {
    let space = d.space();
    if x.m() != space.m() {
        return Err(Error::Parameter("distribution and deviation function disagree on m".into()));
    }
    let k = space.k();
    let support: Vec<_> = x.support().map(|(a, p)| (a, p.clone())).collect();
    let deviations = space.deviations();
    let mut rows_checked = 1u64; // the simplex row holds by construction of x
    let mut first_violation = None;
    let mut best_mu: Option<Rational> = None;

    for (wi, w) in space.committees().into_iter().enumerate() {
        let selected = d.by_id(wi);
        if selected.is_subset(w) {
            first_violation.get_or_insert(format!("cover_{wi}: selected deviation {selected} is inside {w}"));
        }
        rows_checked += 1;
        for (di, dev) in deviations.iter().enumerate() {
            if dev.is_subset(w) {
                continue;
            }
            rows_checked += 1;
            let sigma: Rational = support
                .iter()
                .filter(|(a, _)| improves(*a, w, *dev))
                .map(|(_, p)| p.clone())
                .sum();
            let mut rhs = sigma - quota.cost(dev.len(), k);
            if *dev == selected {
                best_mu = Some(match best_mu {
                    Some(b) if b <= rhs => b,
                    _ => rhs.clone(),
                });
            } else {
                rhs += big_m;
            }
            if *mu > rhs && first_violation.is_none() {
                first_violation = Some(format!("excess_{wi}_{di}: mu = {mu} > {rhs}"));
            }
        }
    }
    let best_mu = best_mu.expect("at least one committee");
    Ok(AssignmentCheck {
        feasible: first_violation.is_none(),
        tight: *mu == best_mu,
        best_mu,
        rows_checked,
        first_violation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;

    #[test]
    fn model_counts() {
        let milp = build_milp(4, 2, Quota::Hare).unwrap();
        assert_eq!(milp.model.num_continuous(), 17);
        assert!(milp.model.num_binaries() <= 60);
        // Each pair drops W itself's subsets: 2 singletons + 1 pair.
        assert_eq!(milp.model.num_binaries(), 6 * (10 - 3));
        milp.model.validate().unwrap();
    }

    #[test]
    fn singleton_committees_only_get_outside_singletons() {
        let milp = build_milp(3, 1, Quota::Hare).unwrap();
        let devs = milp.space.deviations();
        let comms = milp.space.committees();
        assert_eq!(milp.selectors.len(), 6);
        for s in &milp.selectors {
            assert_eq!(devs[s.deviation].len(), 1);
            assert!(!devs[s.deviation].is_subset(comms[s.committee]));
        }
        let names: Vec<_> = milp.model.variables.iter().map(|v| v.name.as_str()).collect();
        assert_eq!(&names[..3], ["x_", "x_0", "x_1"]);
        assert!(names.contains(&"mu"));
        assert!(names.contains(&"y_0_1"));
        assert!(!names.contains(&"y_0_0"));
    }

    #[test]
    fn row_count_matches_pair_recount() {
        for m in 2..=6 {
            for k in 1..m {
                let milp = build_milp(m, k, Quota::Hare).unwrap();
                let space = milp.space;
                let mut pairs = 0usize;
                for w in space.committees() {
                    for d in space.deviations() {
                        if !d.is_subset(w) {
                            pairs += 1;
                        }
                    }
                }
                assert_eq!(pairs as u128, kept_pair_count(m, k));
                assert_eq!(milp.model.constraints.len(), 1 + space.committee_count() + pairs);
            }
        }
    }

    #[test]
    fn invalid_sizes() {
        assert!(build_milp(3, 3, Quota::Hare).is_err());
        assert!(build_milp(3, 0, Quota::Droop).is_err());
    }

    #[test]
    fn lower_bound_values() {
        assert_eq!(lower_bound_assignment(7, 6, Quota::Hare).unwrap().mu, ratio(-1, 42));
        assert_eq!(lower_bound_assignment(5, 4, Quota::Droop).unwrap().mu, ratio(0, 1));
        assert_eq!(lower_bound_assignment(4, 1, Quota::Hare).unwrap().mu, ratio(-1, 2));
    }

    #[test]
    fn lower_bound_is_exactly_feasible_and_tight() {
        for m in 2..=7 {
            for k in 1..m {
                for quota in [Quota::Hare, Quota::Droop] {
                    let lb = lower_bound_assignment(m, k, quota).unwrap();
                    let check = check_assignment(&lb.distribution, &lb.deviations, &lb.mu, quota).unwrap();
                    assert!(check.feasible, "{m} {k} {quota}: {:?}", check.first_violation);
                    assert!(check.tight);
                    let value = least_core(&lb.distribution, k, quota).unwrap().value;
                    assert_eq!(value, lb.mu);
                }
            }
        }
    }

    #[test]
    fn lower_bound_fits_materialized_model() {
        for (m, k) in [(3, 1), (4, 2), (5, 3)] {
            let lb = lower_bound_assignment(m, k, Quota::Hare).unwrap();
            let milp = build_milp(m, k, Quota::Hare).unwrap();
            let values = milp.assignment(&lb.distribution, &lb.deviations, &lb.mu).unwrap();
            assert!(milp.model.max_violation(&values) < 1e-12);
        }
    }

    #[test]
    fn check_assignment_flags_excessive_mu() {
        let lb = lower_bound_assignment(4, 2, Quota::Hare).unwrap();
        let check = check_assignment(&lb.distribution, &lb.deviations, &ratio(0, 1), Quota::Hare).unwrap();
        assert!(!check.feasible);
        assert!(check.first_violation.unwrap().starts_with("excess_"));
    }

    fn synthetic(x: Vec<f64>, y: Vec<(usize, usize)>) -> MilpSolution {
        MilpSolution {
            m: 3,
            k: 1,
            quota: Quota::Hare,
            status: SolveStatus::Optimal,
            mu: Some(-0.5),
            best_bound: Some(-0.5),
            x,
            y,
        }
    }

    #[test]
    fn extraction_tie_rule() {
        // x = 1/2 on {c1}, 1/2 on {c2}; committee {c3} (id 2) selects both {c1} and {c2}.
        let mut x = vec![0.0; 8];
        x[1] = 0.5;
        x[2] = 0.5;
        let sol = synthetic(x.clone(), vec![(0, 1), (1, 0), (2, 1), (2, 0)]);
        let d = extract_deviation_function(&sol).unwrap();
        assert_eq!(d.by_id(2), CandidateSet::singleton(0));

        // Unequal excess: {c2} wins.
        let mut x2 = vec![0.0; 8];
        x2[1] = 0.25;
        x2[2] = 0.75;
        let sol = synthetic(x2, vec![(0, 1), (1, 0), (2, 0), (2, 1)]);
        assert_eq!(extract_deviation_function(&sol).unwrap().by_id(2), CandidateSet::singleton(1));

        let sol = synthetic(x, vec![(0, 1), (1, 0)]);
        assert!(matches!(extract_deviation_function(&sol), Err(Error::Integrity(_))));
    }

    #[test]
    fn verification_detects_mismatch() {
        let mut x = vec![0.0; 8];
        x[1] = 0.5;
        x[2] = 0.5;
        let sol = synthetic(x.clone(), vec![(0, 1), (1, 0), (2, 0)]);
        let v = verify_solution(&sol, 1e-4).unwrap();
        assert!(v.passed, "{:?}", v.reason);
        assert_eq!(v.report.unwrap().value, ratio(-1, 2));

        let mut bad = sol.clone();
        bad.mu = Some(-0.3);
        assert!(!verify_solution(&bad, 1e-4).unwrap().passed);
        bad.x.clear();
        assert!(!verify_solution(&bad, 1e-4).unwrap().passed);
    }

    #[test]
    fn small_search() {
        let milp = build_milp(3, 1, Quota::Hare).unwrap();
        let sol = solve_search(&milp, &BackendConfig::default(), true).unwrap();
        assert!(sol.status.is_optimal());
        assert!((sol.mu.unwrap() + 0.5).abs() < 1e-4);
        let v = verify_solution(&sol, 1e-4).unwrap();
        assert!(v.passed, "{:?}", v.reason);
        let d = extract_deviation_function(&sol).unwrap();
        assert!(d.deviations().iter().all(|c| c.len() == 1));
    }
}
