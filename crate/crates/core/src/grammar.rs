//! First-order grammars: finitely many ranked nonterminals, a finite action
//! alphabet, and rules `A(x1..xk) -a-> E` with E a finite term over the
//! nonterminals and the variables x1..xk. The semantics is head rewriting:
//! a term whose root is A fires every A-rule, with the root substitution
//! applied to the rule's right-hand side. Variables fire nothing in `Dead`
//! mode and a single fresh-action self-loop in `SelfLoop` mode.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

use crate::term::{
    parse_term, print_inline, Label, RankedAlphabet, SymbolId, TermRef, TermStore,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GrammarError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

fn err<T>(line: usize, msg: impl Into<String>) -> Result<T, GrammarError> {
    Err(GrammarError::Parse {
        line,
        msg: msg.into(),
    })
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct ActionId(pub u32);

#[derive(Clone, Debug)]
pub struct Rule {
    pub head: SymbolId,
    pub action: ActionId,
    pub rhs: TermRef,
}

/// Mode for transitions out of variable-rooted terms.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum VarMode {
    /// Variables are dead: no transitions.
    Dead,
    /// Each variable x_i fires one self-loop under a fresh action a_xi.
    SelfLoop,
}

/// A transition label: a declared action, or the self-loop action of a
/// variable (disjoint from the declared alphabet by construction).
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum StepAction {
    Act(ActionId),
    Loop(u32),
}

pub struct Grammar {
    store: TermStore,
    actions: Vec<String>,
    action_ids: HashMap<String, ActionId>,
    rules: Vec<Rule>,
    rules_by_head: HashMap<SymbolId, Vec<usize>>,
}

impl Grammar {
    pub fn store(&self) -> &TermStore {
        &self.store
    }

    pub fn alphabet(&self) -> &RankedAlphabet {
        self.store.alphabet()
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn rules_for(&self, head: SymbolId) -> &[usize] {
        self.rules_by_head
            .get(&head)
            .map(|v| v.as_slice())
            .unwrap_or(&[])
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    pub fn action_name(&self, a: ActionId) -> &str {
        &self.actions[a.0 as usize]
    }

    pub fn lookup_action(&self, name: &str) -> Option<ActionId> {
        self.action_ids.get(name).copied()
    }

    pub fn step_action_name(&self, a: StepAction) -> String {
        match a {
            StepAction::Act(id) => self.action_name(id).to_string(),
            StepAction::Loop(v) => format!("a_x{v}"),
        }
    }

    /// Grammar size: sum over rules of ar(head) + 1 + size(rhs).
    pub fn size(&self) -> u64 {
        self.rules
            .iter()
            .map(|r| self.alphabet().arity(r.head) as u64 + 1 + self.store.size(r.rhs))
            .sum()
    }

    /// Head-rewriting steps from `e`, in rule order.
    pub fn transitions(&self, e: TermRef, mode: VarMode) -> Vec<(StepAction, TermRef)> {
        match self.store.label(e) {
            Label::Var(i) => match mode {
                VarMode::Dead => Vec::new(),
                VarMode::SelfLoop => vec![(StepAction::Loop(i), e)],
            },
            Label::App(_) => {
                let (head, sigma) = self
                    .store
                    .root_substitution(e)
                    .expect("application root");
                self.rules_for(head)
                    .iter()
                    .map(|&i| {
                        let r = &self.rules[i];
                        (
                            StepAction::Act(r.action),
                            self.store.apply_subst(r.rhs, &sigma),
                        )
                    })
                    .collect()
            }
        }
    }

    /// All terms reachable from `e` by reading exactly `word`. Variables are
    /// dead here: the word ranges over declared actions only.
    pub fn step_word(&self, e: TermRef, word: &[ActionId]) -> BTreeSet<TermRef> {
        let mut current: BTreeSet<TermRef> = BTreeSet::new();
        current.insert(e);
        for &a in word {
            let mut next = BTreeSet::new();
            for t in &current {
                for (act, target) in self.transitions(*t, VarMode::Dead) {
                    if act == StepAction::Act(a) {
                        next.insert(target);
                    }
                }
            }
            current = next;
            if current.is_empty() {
                break;
            }
        }
        current
    }

    /// Canonical text form; `parse_grammar` reads it back identically.
    pub fn serialize(&self) -> String {
        let mut out = String::from("grammar\n");
        for s in self.alphabet().ids() {
            out.push_str(&format!(
                "nonterminal {}/{}\n",
                self.alphabet().name(s),
                self.alphabet().arity(s)
            ));
        }
        for a in &self.actions {
            out.push_str(&format!("action {a}\n"));
        }
        for r in &self.rules {
            let head = self.alphabet().name(r.head);
            let ar = self.alphabet().arity(r.head);
            let lhs = if ar == 0 {
                head.to_string()
            } else {
                let vars: Vec<String> = (1..=ar).map(|i| format!("x{i}")).collect();
                format!("{head}({})", vars.join(","))
            };
            out.push_str(&format!(
                "rule {lhs} -{}-> {}\n",
                self.action_name(r.action),
                print_inline(&self.store, r.rhs)
            ));
        }
        out
    }
}

impl fmt::Debug for Grammar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialize())
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(p) => &line[..p],
        None => line,
    }
}

/// Parses the line-based grammar format: a `grammar` header, then
/// `nonterminal A/3`, `action a`, and `rule A(x1,..) -a-> <term>` lines in
/// any order (declarations are gathered before rules are checked).
pub fn parse_grammar(text: &str) -> Result<Grammar, GrammarError> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, strip_comment(l).trim()))
        .filter(|(_, l)| !l.is_empty())
        .collect();

    let mut it = lines.iter();
    match it.next() {
        Some((_, "grammar")) => {}
        Some((ln, _)) => return err(*ln, "expected 'grammar' header"),
        None => return err(1, "empty grammar file"),
    }

    // First pass: declarations.
    let mut alphabet = RankedAlphabet::new();
    let mut actions: Vec<String> = Vec::new();
    let mut action_ids: HashMap<String, ActionId> = HashMap::new();
    for (ln, line) in it.clone() {
        if let Some(rest) = line.strip_prefix("nonterminal ") {
            let (name, arity) = match rest.rsplit_once('/') {
                Some((n, a)) => (n.trim(), a.trim()),
                None => return err(*ln, "expected 'nonterminal NAME/ARITY'"),
            };
            let arity: usize = match arity.parse() {
                Ok(a) => a,
                Err(_) => return err(*ln, format!("bad arity {arity:?}")),
            };
            if let Err(e) = alphabet.add(name, arity) {
                return err(*ln, e.to_string());
            }
        } else if let Some(rest) = line.strip_prefix("action ") {
            let name = rest.trim();
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return err(*ln, format!("bad action name {name:?}"));
            }
            if action_ids.contains_key(name) {
                return err(*ln, format!("action {name:?} already declared"));
            }
            action_ids.insert(name.to_string(), ActionId(actions.len() as u32));
            actions.push(name.to_string());
        } else if line.starts_with("rule ") || *line == "rule" {
            continue;
        } else {
            return err(*ln, format!("unrecognized line {line:?}"));
        }
    }

    let store = TermStore::new(alphabet);
    let mut rules: Vec<Rule> = Vec::new();
    let mut rules_by_head: HashMap<SymbolId, Vec<usize>> = HashMap::new();

    // Second pass: rules, in file order.
    for (ln, line) in it {
        let Some(rest) = line.strip_prefix("rule ") else {
            continue;
        };
        let arrow = match rest.find("->") {
            Some(p) => p,
            None => return err(*ln, "expected '-action->' arrow"),
        };
        let pre = &rest[..arrow];
        let dash = match pre.rfind('-') {
            Some(p) => p,
            None => return err(*ln, "expected '-action->' arrow"),
        };
        let lhs = pre[..dash].trim();
        let action_name = pre[dash + 1..].trim();
        let rhs_text = rest[arrow + 2..].trim();

        let action = match action_ids.get(action_name) {
            Some(a) => *a,
            None => return err(*ln, format!("undeclared action {action_name:?}")),
        };

        // The left side must literally be A(x1,..,x_ar(A)).
        let (head_name, lhs_vars) = match lhs.find('(') {
            Some(p) => {
                if !lhs.ends_with(')') {
                    return err(*ln, "unterminated '(' in rule head");
                }
                (lhs[..p].trim(), Some(&lhs[p + 1..lhs.len() - 1]))
            }
            None => (lhs, None),
        };
        let head = match store.alphabet().lookup(head_name) {
            Some(s) => s,
            None => return err(*ln, format!("undeclared nonterminal {head_name:?}")),
        };
        let ar = store.alphabet().arity(head);
        let listed: Vec<&str> = match lhs_vars {
            None => Vec::new(),
            Some(v) if v.trim().is_empty() => Vec::new(),
            Some(v) => v.split(',').map(|s| s.trim()).collect(),
        };
        let expected: Vec<String> = (1..=ar).map(|i| format!("x{i}")).collect();
        if listed != expected.iter().map(|s| s.as_str()).collect::<Vec<_>>() {
            return err(
                *ln,
                format!("rule head must be {head_name}({})", expected.join(",")),
            );
        }

        let rhs = match parse_term(&store, rhs_text) {
            Ok(t) => t,
            Err(e) => return err(*ln, e.to_string()),
        };
        if !store.is_finite(rhs) {
            return err(*ln, "rule right-hand side must be a finite term");
        }
        if let Some(&v) = store.vars(rhs).iter().max() {
            if v as usize > ar {
                return err(
                    *ln,
                    format!("variable x{v} exceeds head arity {ar}"),
                );
            }
        }
        rules_by_head.entry(head).or_default().push(rules.len());
        rules.push(Rule { head, action, rhs });
    }

    Ok(Grammar {
        store,
        actions,
        action_ids,
        rules,
        rules_by_head,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn figure_grammar() -> Grammar {
        parse_grammar(
            "grammar\n\
             nonterminal A/3\n\
             nonterminal B/0\n\
             nonterminal C/2\n\
             nonterminal D/2\n\
             action a\n\
             action b\n\
             rule A(x1,x2,x3) -a-> C(x2, D(x2, x1))\n\
             rule A(x1,x2,x3) -b-> x2\n",
        )
        .unwrap()
    }

    #[test]
    fn head_rewriting_matches_worked_example() {
        let g = figure_grammar();
        let st = g.store();
        let e1 = parse_term(st, "A(D(x5, C(x2, B)), x5, B)").unwrap();
        let steps = g.transitions(e1, VarMode::Dead);
        assert_eq!(steps.len(), 2);
        assert_eq!(g.step_action_name(steps[0].0), "a");
        assert_eq!(
            print_inline(st, steps[0].1),
            "C(x5, D(x5, D(x5, C(x2, B))))"
        );
        assert_eq!(g.step_action_name(steps[1].0), "b");
        assert_eq!(print_inline(st, steps[1].1), "x5");
    }

    #[test]
    fn variable_transitions_depend_on_mode() {
        let g = figure_grammar();
        let x3 = parse_term(g.store(), "x3").unwrap();
        assert!(g.transitions(x3, VarMode::Dead).is_empty());
        let loops = g.transitions(x3, VarMode::SelfLoop);
        assert_eq!(loops, vec![(StepAction::Loop(3), x3)]);
        assert_eq!(g.step_action_name(loops[0].0), "a_x3");
    }

    #[test]
    fn rewriting_commutes_with_substitution() {
        let g = figure_grammar();
        let st = g.store();
        let e = parse_term(st, "A(x1, C(x2, B), x3)").unwrap();
        let mut sigma = crate::term::Substitution::new();
        sigma.bind(1, parse_term(st, "B").unwrap());
        sigma.bind(2, parse_term(st, "D(x7, x7)").unwrap());
        let e_sub = st.apply_subst(e, &sigma);
        let direct: Vec<_> = g.transitions(e_sub, VarMode::Dead);
        let lifted: Vec<_> = g
            .transitions(e, VarMode::Dead)
            .into_iter()
            .map(|(a, t)| (a, st.apply_subst(t, &sigma)))
            .collect();
        assert_eq!(direct, lifted);
    }

    #[test]
    fn step_word_follows_words() {
        let g = parse_grammar(
            "grammar\n\
             nonterminal A/1\n\
             nonterminal B/1\n\
             action a\n\
             action b\n\
             rule A(x1) -a-> B(x1)\n\
             rule A(x1) -a-> x1\n\
             rule B(x1) -b-> x1\n",
        )
        .unwrap();
        let st = g.store();
        let a = g.lookup_action("a").unwrap();
        let b = g.lookup_action("b").unwrap();
        let t = parse_term(st, "A(x4)").unwrap();
        let x4 = parse_term(st, "x4").unwrap();
        let bx4 = parse_term(st, "B(x4)").unwrap();

        assert_eq!(g.step_word(t, &[]), [t].into_iter().collect());
        assert_eq!(
            g.step_word(t, &[a]),
            [bx4, x4].into_iter().collect::<BTreeSet<_>>()
        );
        assert_eq!(g.step_word(t, &[a, b]), [x4].into_iter().collect());
        assert!(g.step_word(t, &[b]).is_empty());
    }

    #[test]
    fn grammar_size_per_rule() {
        let g = parse_grammar(
            "grammar\nnonterminal A/1\naction a\nrule A(x1) -a-> x1\n",
        )
        .unwrap();
        assert_eq!(g.size(), 3);

        let empty = parse_grammar("grammar\nnonterminal A/1\naction a\n").unwrap();
        assert_eq!(empty.size(), 0);

        // Shared rhs subterms still count once per rule.
        let g2 = parse_grammar(
            "grammar\n\
             nonterminal A/1\n\
             nonterminal B/2\n\
             action a\n\
             rule A(x1) -a-> B(x1, x1)\n\
             rule A(x1) -a-> B(B(x1, x1), x1)\n",
        )
        .unwrap();
        // Rule 1: 1+1+2; rule 2: 1+1+3.
        assert_eq!(g2.size(), 9);
    }

    #[test]
    fn serialization_round_trips() {
        let g = figure_grammar();
        let text = g.serialize();
        let g2 = parse_grammar(&text).unwrap();
        assert_eq!(text, g2.serialize());
        assert_eq!(g.size(), g2.size());
        assert_eq!(g.actions(), g2.actions());
    }

    #[test]
    fn rejects_malformed_input() {
        let bad = |text: &str| parse_grammar(text).unwrap_err();
        let msg = |e: GrammarError| match e {
            GrammarError::Parse { msg, .. } => msg,
        };
        assert!(msg(bad("nonterminal A/1\n")).contains("header"));
        assert!(msg(bad("grammar\nnonterminal A\n")).contains("ARITY"));
        assert!(msg(bad(
            "grammar\nnonterminal A/1\nrule A(x1) -a-> x1\n"
        ))
        .contains("undeclared action"));
        assert!(msg(bad(
            "grammar\nnonterminal A/1\naction a\nrule A(x1) -a-> x2\n"
        ))
        .contains("exceeds head arity"));
        assert!(msg(bad(
            "grammar\nnonterminal A/1\naction a\nrule A(x2) -a-> x1\n"
        ))
        .contains("rule head"));
        assert!(msg(bad(
            "grammar\nnonterminal A/1\naction a\nrule A(x1) -a-> rec L = A(ref L)\n"
        ))
        .contains("finite"));
        assert!(msg(bad(
            "grammar\nnonterminal A/1\naction a\nrule B(x1) -a-> x1\n"
        ))
        .contains("undeclared nonterminal"));
        // Error carries the offending line number.
        match bad("grammar\nnonterminal A/1\naction a\n\nrule A(x1) -b-> x1\n") {
            GrammarError::Parse { line, .. } => assert_eq!(line, 5),
        }
    }

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let g = parse_grammar(
            "# top\ngrammar\n\n# decl\nnonterminal A/1 # trailing\naction a\nrule A(x1) -a-> x1 # rule\n",
        )
        .unwrap();
        assert_eq!(g.rules().len(), 1);
    }

    #[test]
    fn nullary_rule_heads_accept_both_spellings() {
        let g = parse_grammar(
            "grammar\nnonterminal K/0\naction a\nrule K -a-> K\nrule K() -a-> K\n",
        )
        .unwrap();
        assert_eq!(g.rules().len(), 2);
        let k = parse_term(g.store(), "K").unwrap();
        assert_eq!(g.transitions(k, VarMode::Dead).len(), 2);
    }
}
