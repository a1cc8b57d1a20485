//! Core engine for resilience problems of unions of conjunctive queries
//! over a binary signature.
//!
//! The crate is organized around one question: given a union of
//! conjunctive digraph queries `μ`, is the problem "delete at most `u`
//! edge copies from a directed multigraph so that `μ` no longer holds"
//! solvable in polynomial time, or NP-complete?  Besides the classifier
//! itself, the crate ships exact desk-scale solvers, a finite-domain
//! valued-CSP toolkit, and machine-checked constructions for the hardness
//! reductions and tractability witnesses that back the classification.
//!
//! Everything in here is pure and deterministic: no IO, no clocks, no
//! hidden randomness.  The companion CLI crate adds file formats and
//! reporting on top.
#![no_std]
#![forbid(unsafe_code)]
#![allow(clippy::type_complexity, clippy::needless_range_loop)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod classify;
pub mod gadgets;
pub mod query;
pub mod resilience;
pub mod structure;
pub mod value;
pub mod vcsp;

pub use value::{Rational, Value};
