//! Regular terms (finite and infinite) over a ranked alphabet, stored with
//! maximal sharing in a canonical interning store.

mod enumerate;
mod store;
mod syntax;

pub use enumerate::{enumerate_terms, enumerate_terms_budgeted, EnumBudget, DEFAULT_ENUM_BUDGET};
pub use store::{
    Label, RankedAlphabet, RawGraph, RawId, Substitution, SymbolId, TermError, TermRef, TermStore,
};
pub use syntax::{parse_term, print_inline, print_lets, term_key};
