//! Fixed-confidence best-arm identification.
//!
//! Posteriors and optimal action probabilities live in [`posterior`] and
//! [`action`], transportation costs and allocations in [`transport`] and
//! [`allocation`], the sampling rules in [`rules`], stopping in
//! [`stopping`], and the replicated-experiment harness in [`harness`].

pub mod action;
pub mod allocation;
pub mod bandit;
pub mod error;
pub mod harness;
pub mod posterior;
pub mod rules;
pub mod special;
pub mod stopping;
pub mod transport;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/posteriors.md")]
    mod posteriors {}
    #[doc = include_str!("../../../book/src/allocation.md")]
    mod allocation {}
    #[doc = include_str!("../../../book/src/rules.md")]
    mod rules {}
    #[doc = include_str!("../../../book/src/stopping.md")]
    mod stopping {}
    #[doc = include_str!("../../../book/src/harness.md")]
    mod harness {}
}
