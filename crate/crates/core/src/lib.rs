//! Exact and MILP-based tools for core stability of approval-based committees.

pub mod combinatorics;
pub mod duality;
pub mod election;
pub mod error;
pub mod milp;
pub mod model;
pub mod oracle;
pub mod priceability;
pub mod rational;
pub mod solver;

pub use combinatorics::{CandidateSet, CommitteeSpace};
pub use election::{ApprovalProfile, VoteDistribution};
pub use error::{Error, Result};
pub use oracle::Quota;
pub use rational::Rational;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/distributions.md")]
    mod distributions {}
    #[doc = include_str!("../../../book/src/search.md")]
    mod search {}
    #[doc = include_str!("../../../book/src/lower-bounds.md")]
    mod lower_bounds {}
    #[doc = include_str!("../../../book/src/duality.md")]
    mod duality {}
    #[doc = include_str!("../../../book/src/priceability.md")]
    mod priceability {}
}
