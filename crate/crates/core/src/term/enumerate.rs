//! Exhaustive enumeration of regular terms up to a size bound.
//!
//! Terms are generated as rooted deterministic graphs with at most `s`
//! nodes. Node indices follow discovery order (a child is either an index
//! already in use or the next fresh one), which forces connectedness and
//! kills most renumberings of the same graph; the store's canonical
//! interning removes the remaining duplicates (bisimilar graphs).
//!
//! The search space still grows brutally with the size bound and arities,
//! so every partial assignment counts against an explicit step budget.

use std::collections::BTreeSet;

use thiserror::Error;

use super::store::{SymbolId, TermRef, TermStore};
use super::syntax::term_key;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("term enumeration exceeded its budget of {budget} steps")]
pub struct EnumBudget {
    pub budget: u64,
}

pub const DEFAULT_ENUM_BUDGET: u64 = 20_000_000;

/// All terms with size <= `size_bound` and variables among x1..x`max_var`,
/// each exactly once, sorted by canonical key (size, then serialization).
pub fn enumerate_terms(store: &TermStore, max_var: u32, size_bound: u64) -> Vec<TermRef> {
    enumerate_terms_budgeted(store, max_var, size_bound, DEFAULT_ENUM_BUDGET)
        .expect("enumeration too large for the default budget; call the budgeted variant")
}

pub fn enumerate_terms_budgeted(
    store: &TermStore,
    max_var: u32,
    size_bound: u64,
    budget: u64,
) -> Result<Vec<TermRef>, EnumBudget> {
    let mut gen = Gen {
        store,
        max_var,
        budget,
        steps: 0,
        labels: Vec::new(),
        children: Vec::new(),
        found: BTreeSet::new(),
        target: 0,
    };
    for k in 1..=size_bound {
        gen.target = k as usize;
        gen.labels.clear();
        gen.children.clear();
        gen.root(k as usize)?;
    }
    let mut out: Vec<TermRef> = gen.found.into_iter().collect();
    out.sort_by_cached_key(|t| term_key(store, *t));
    Ok(out)
}

#[derive(Clone, Copy)]
enum NodeLabel {
    Var(u32),
    App(SymbolId),
}

const UNSET: usize = usize::MAX;

struct Gen<'a> {
    store: &'a TermStore,
    max_var: u32,
    budget: u64,
    steps: u64,
    labels: Vec<NodeLabel>,
    children: Vec<Vec<usize>>,
    found: BTreeSet<TermRef>,
    target: usize,
}

impl Gen<'_> {
    fn charge(&mut self) -> Result<(), EnumBudget> {
        self.steps += 1;
        if self.steps > self.budget {
            return Err(EnumBudget {
                budget: self.budget,
            });
        }
        Ok(())
    }

    fn root(&mut self, k: usize) -> Result<(), EnumBudget> {
        // Variables are single-node terms; only k = 1 can produce one.
        if k == 1 {
            for v in 1..=self.max_var {
                self.charge()?;
                self.labels.push(NodeLabel::Var(v));
                self.children.push(Vec::new());
                self.materialize();
                self.labels.pop();
                self.children.pop();
            }
        }
        let symbols: Vec<SymbolId> = self.store.alphabet().ids().collect();
        for s in symbols {
            self.charge()?;
            let ar = self.store.alphabet().arity(s);
            self.labels.push(NodeLabel::App(s));
            self.children.push(vec![UNSET; ar]);
            // Child slots of node 0, leftmost first.
            let mut slots: Vec<(usize, usize)> = (0..ar).rev().map(|p| (0, p)).collect();
            self.fill(&mut slots)?;
            self.labels.pop();
            self.children.pop();
        }
        Ok(())
    }

    fn fill(&mut self, slots: &mut Vec<(usize, usize)>) -> Result<(), EnumBudget> {
        self.charge()?;
        let (node, pos) = match slots.pop() {
            Some(s) => s,
            None => {
                if self.labels.len() == self.target {
                    self.materialize();
                }
                return Ok(());
            }
        };
        // Reuse an existing node.
        for t in 0..self.labels.len() {
            self.children[node][pos] = t;
            self.fill(slots)?;
        }
        self.children[node][pos] = UNSET;
        // Or introduce the next fresh node.
        if self.labels.len() < self.target {
            let fresh = self.labels.len();
            for v in 1..=self.max_var {
                self.charge()?;
                self.labels.push(NodeLabel::Var(v));
                self.children.push(Vec::new());
                self.children[node][pos] = fresh;
                self.fill(slots)?;
                self.children[node][pos] = UNSET;
                self.labels.pop();
                self.children.pop();
            }
            let symbols: Vec<SymbolId> = self.store.alphabet().ids().collect();
            for s in symbols {
                self.charge()?;
                let ar = self.store.alphabet().arity(s);
                self.labels.push(NodeLabel::App(s));
                self.children.push(vec![UNSET; ar]);
                self.children[node][pos] = fresh;
                let before = slots.len();
                for p in (0..ar).rev() {
                    slots.push((fresh, p));
                }
                self.fill(slots)?;
                slots.truncate(before);
                self.children[node][pos] = UNSET;
                self.labels.pop();
                self.children.pop();
            }
        }
        slots.push((node, pos));
        Ok(())
    }

    fn materialize(&mut self) {
        use super::store::RawGraph;
        let n = self.labels.len();
        let mut raw = RawGraph::new();
        let holes: Vec<_> = (0..n).map(|_| raw.add_hole()).collect();
        for i in 0..n {
            let real = match self.labels[i] {
                NodeLabel::Var(v) => raw.add_var(v),
                NodeLabel::App(s) => {
                    let kids = self.children[i].iter().map(|&c| holes[c]).collect();
                    raw.add_app(s, kids)
                }
            };
            raw.set_hole(holes[i], real);
        }
        let t = self
            .store
            .intern(&raw, holes[0])
            .expect("generated graphs are well formed");
        self.found.insert(t);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::term::store::{Label, RankedAlphabet, RawGraph};
    use crate::term::syntax::{parse_term, print_inline};
    use std::collections::BTreeSet;

    fn store_of(symbols: &[(&str, usize)]) -> TermStore {
        let mut a = RankedAlphabet::new();
        for (n, ar) in symbols {
            a.add(n, *ar).unwrap();
        }
        TermStore::new(a)
    }

    /// Independent oracle: every function from k nodes to labels and child
    /// vectors, kept when all nodes are reachable from node 0, interned,
    /// deduplicated. No growth restriction, no sharing of logic with Gen.
    fn brute_force(store: &TermStore, max_var: u32, size_bound: u64) -> BTreeSet<TermRef> {
        let mut found = BTreeSet::new();
        for k in 1..=size_bound as usize {
            // Label choices per node: vars then symbols with each possible
            // child vector.
            let mut choices: Vec<(Option<u32>, Option<(usize, Vec<usize>)>)> = Vec::new();
            for v in 1..=max_var {
                choices.push((Some(v), None));
            }
            let syms: Vec<_> = store.alphabet().ids().collect();
            for (si, s) in syms.iter().enumerate() {
                let ar = store.alphabet().arity(*s);
                let mut vecs: Vec<Vec<usize>> = vec![Vec::new()];
                for _ in 0..ar {
                    let mut next = Vec::new();
                    for v in &vecs {
                        for c in 0..k {
                            let mut v2 = v.clone();
                            v2.push(c);
                            next.push(v2);
                        }
                    }
                    vecs = next;
                }
                for v in vecs {
                    choices.push((None, Some((si, v))));
                }
            }
            let mut assignment = vec![0usize; k];
            'outer: loop {
                // Check reachability, then intern.
                let node_choice: Vec<_> = assignment.iter().map(|&a| &choices[a]).collect();
                let mut seen = vec![false; k];
                let mut stack = vec![0usize];
                seen[0] = true;
                while let Some(n) = stack.pop() {
                    if let (_, Some((_, kids))) = node_choice[n] {
                        for &c in kids {
                            if !seen[c] {
                                seen[c] = true;
                                stack.push(c);
                            }
                        }
                    }
                }
                if seen.iter().all(|&b| b) {
                    let mut raw = RawGraph::new();
                    let holes: Vec<_> = (0..k).map(|_| raw.add_hole()).collect();
                    for i in 0..k {
                        let real = match node_choice[i] {
                            (Some(v), _) => raw.add_var(*v),
                            (_, Some((si, kids))) => {
                                let ids = kids.iter().map(|&c| holes[c]).collect();
                                raw.add_app(syms[*si], ids)
                            }
                            _ => unreachable!(),
                        };
                        raw.set_hole(holes[i], real);
                    }
                    found.insert(store.intern(&raw, holes[0]).unwrap());
                }
                // Next assignment (odometer).
                for i in 0..k {
                    assignment[i] += 1;
                    if assignment[i] < choices.len() {
                        continue 'outer;
                    }
                    assignment[i] = 0;
                }
                break;
            }
        }
        found
    }

    #[test]
    fn single_nullary_symbol() {
        let st = store_of(&[("B", 0)]);
        let terms = enumerate_terms(&st, 0, 1);
        assert_eq!(terms.len(), 1);
        assert_eq!(print_inline(&st, terms[0]), "B");
    }

    #[test]
    fn unary_symbol_with_one_variable() {
        let st = store_of(&[("A", 1)]);
        let terms = enumerate_terms(&st, 1, 2);
        let printed: Vec<String> = terms.iter().map(|t| print_inline(&st, *t)).collect();
        assert_eq!(printed, vec!["rec L0 = A(ref L0)", "x1", "A(x1)"]);
        // The cyclic term and x1 sort before A(x1): size 1 before size 2.
        assert_eq!(st.size(terms[0]), 1);
        assert_eq!(st.size(terms[1]), 1);
        assert_eq!(st.size(terms[2]), 2);
    }

    #[test]
    fn matches_brute_force_oracle() {
        let cases: Vec<(Vec<(&str, usize)>, u32, u64)> = vec![
            (vec![("A", 2)], 2, 2),
            (vec![("A", 1), ("B", 0)], 1, 3),
            (vec![("C", 2), ("B", 0)], 1, 2),
            (vec![("F", 1), ("G", 1)], 0, 3),
            (vec![("B", 0), ("K", 0)], 2, 2),
        ];
        for (symbols, j, s) in cases {
            let st = store_of(&symbols);
            let fast: BTreeSet<TermRef> = enumerate_terms(&st, j, s).into_iter().collect();
            let slow = brute_force(&st, j, s);
            assert_eq!(fast, slow, "mismatch for {symbols:?} j={j} s={s}");
        }
    }

    #[test]
    fn outputs_satisfy_the_contract() {
        let st = store_of(&[("C", 2), ("B", 0)]);
        let terms = enumerate_terms(&st, 2, 2);
        let mut seen = BTreeSet::new();
        for t in &terms {
            assert!(st.size(*t) <= 2);
            assert!(st.vars(*t).iter().all(|&v| v <= 2));
            assert!(seen.insert(*t), "duplicate term in enumeration");
        }
        // x1 and x2 present, B present, and the doubly cyclic C term.
        let x1 = parse_term(&st, "x1").unwrap();
        let cc = parse_term(&st, "rec L = C(ref L, ref L)").unwrap();
        assert!(terms.contains(&x1));
        assert!(terms.contains(&cc));
        // Enumeration is stable across calls.
        assert_eq!(terms, enumerate_terms(&st, 2, 2));
    }

    #[test]
    fn budget_is_enforced() {
        let st = store_of(&[("C", 2), ("B", 0)]);
        let err = enumerate_terms_budgeted(&st, 2, 3, 10).unwrap_err();
        assert_eq!(err, EnumBudget { budget: 10 });
    }

    #[test]
    fn nullary_alphabets_enumerate_instantly_at_any_bound() {
        let st = store_of(&[("B", 0), ("K", 0)]);
        let terms = enumerate_terms_budgeted(&st, 1, 50, 10_000).unwrap();
        // Only single-node terms exist; larger graphs are unreachable.
        assert_eq!(terms.len(), 3);
        for t in terms {
            assert!(matches!(st.label(t), Label::Var(_) | Label::App(_)));
            assert_eq!(st.size(t), 1);
        }
    }
}
