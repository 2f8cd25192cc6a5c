//! Workbench for bisimulation equivalence of first-order grammars.
//!
//! The crate is organized around a canonical store of regular terms
//! ([`term`]), first-order grammars with head-rewriting semantics
//! ([`grammar`]), bounded bisimulation-game solvers with independent
//! oracles ([`eqlevel`]), grammatical constants ([`consts`]), the
//! candidate-basis procedure ([`basis`]), ordinal arithmetic up to w^w
//! with Hardy/Cichon hierarchies ([`ordinal`]), and reductions between
//! pushdown systems and grammars ([`pds`]). [`gen`] builds seeded random
//! models for test corpora.

pub mod basis;
pub mod gen;
pub mod pds;
pub mod consts;
pub mod eqlevel;
pub mod grammar;
pub mod ordinal;
pub mod term;
