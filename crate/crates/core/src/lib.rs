//! A small conditional term rewriter instrumented for debugging.
//!
//! The rewriter reports every rule attempt to three breakpoint handlers.
//! [`session::Session`] implements them: interactive break-rewrite
//! (monitors, near-miss breaks, break commands) and `with-brr-data`
//! provenance collection queried through the `cw-gstack-for-subterm`
//! family. Side state lives in named [`wormhole`] cells so the rewriter
//! itself stays value-pure.
//!
//! The crate is `no_std` (with `alloc`); all I/O goes through
//! [`session::Frontend`].

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod brkpt;
pub mod brr_data;
pub mod matching;
pub mod query;
pub mod rewriter;
pub mod rules;
pub mod session;
pub mod sexpr;
pub mod term;
pub mod wormhole;

pub use rewriter::{FailureReason, Frame, GStack, ProofOutcome, TypeAlist};
pub use rules::{BreakCriteria, RewriteRule, Rune, RuleClass, World};
pub use sexpr::{SExpr, Symbol};
pub use term::{Clause, Substitution, Term};

use alloc::string::String;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    #[error("read error at {0}")]
    Parse(#[from] sexpr::ParseError),
    #[error(transparent)]
    Term(#[from] term::TermError),
    #[error(transparent)]
    Rule(#[from] rules::RuleError),
    #[error(transparent)]
    Wormhole(#[from] wormhole::WormholeError),
    #[error(transparent)]
    BrrData(#[from] brr_data::BrrDataError),
    #[error("{0}")]
    Command(String),
}
