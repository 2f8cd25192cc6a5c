//! Pushdown systems and the reductions to and from first-order grammars.
//!
//! A PDS rewrites the top of a stack: rules pY -a-> q gamma with a a
//! visible action or eps. Restricted systems have deterministic eps-rules
//! (no other rule shares the left-hand side), and every such system can
//! be saturated into one whose eps-rules are also popping. Stable
//! configurations enable no eps-rule; bounded weak equivalence is the
//! strong game over stabilized configurations.
//!
//! The PDS-to-grammar translation encodes a configuration p gamma as a
//! term over nonterminals [p] (arity 0) and [p.Y] (arity |Q|), silently
//! popping heads being preprocessed away. The grammar-to-PDS translation
//! stacks root-substitutions of rule right-hand sides.

use std::cell::RefCell;
use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::eqlevel::{EqLevelError, EqLevelResult, Lts, Solver};
use crate::grammar::{parse_grammar, Grammar, GrammarError, StepAction, VarMode};
use crate::term::{print_inline, Label, RawGraph, RawId, SymbolId, TermRef};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PdsError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unknown control state {0:?}")]
    UnknownState(String),
    #[error("unknown stack symbol {0:?}")]
    UnknownStackSymbol(String),
    #[error("silent rule at {state} {symbol} has alternatives; the system is not restricted")]
    NotRestricted { state: String, symbol: String },
    #[error("silent rule at {state} {symbol} is not popping; saturate the system first")]
    NonPoppingSilent { state: String, symbol: String },
    #[error("configuration {config} diverges silently")]
    SilentDivergence { config: String },
    #[error("name {0:?} cannot be embedded in a bracket nonterminal")]
    CannotEmbed(String),
    #[error("translated grammar failed to parse: {0}")]
    Grammar(#[from] GrammarError),
    #[error("game solver failed: {0}")]
    Game(#[from] EqLevelError),
}

fn err<T>(line: usize, msg: impl Into<String>) -> Result<T, PdsError> {
    Err(PdsError::Parse {
        line,
        msg: msg.into(),
    })
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct StateId(pub u32);

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct StackId(pub u32);

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct PdsActionId(pub u32);

/// A rule state top -action-> target push; `action` None is silent.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct PdsRule {
    pub state: StateId,
    pub top: StackId,
    pub action: Option<PdsActionId>,
    pub target: StateId,
    pub push: Vec<StackId>,
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Configuration {
    pub state: StateId,
    pub stack: Vec<StackId>,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct PdsFlags {
    pub real_time: bool,
    pub restricted: bool,
    pub popping_eps: bool,
}

#[derive(Clone, Debug)]
pub struct Pds {
    states: Vec<String>,
    stack_syms: Vec<String>,
    actions: Vec<String>,
    rules: Vec<PdsRule>,
    state_ids: HashMap<String, StateId>,
    stack_ids: HashMap<String, StackId>,
    action_ids: HashMap<String, PdsActionId>,
    rules_by_head: HashMap<(StateId, StackId), Vec<usize>>,
}

impl Pds {
    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn stack_symbols(&self) -> &[String] {
        &self.stack_syms
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    pub fn rules(&self) -> &[PdsRule] {
        &self.rules
    }

    pub fn rules_at(&self, state: StateId, top: StackId) -> &[usize] {
        self.rules_by_head
            .get(&(state, top))
            .map(|v| v.as_slice())
            .unwrap_or(&[])
    }

    pub fn state_name(&self, s: StateId) -> &str {
        &self.states[s.0 as usize]
    }

    pub fn stack_name(&self, y: StackId) -> &str {
        &self.stack_syms[y.0 as usize]
    }

    pub fn action_name(&self, a: PdsActionId) -> &str {
        &self.actions[a.0 as usize]
    }

    pub fn lookup_state(&self, name: &str) -> Option<StateId> {
        self.state_ids.get(name).copied()
    }

    pub fn lookup_stack(&self, name: &str) -> Option<StackId> {
        self.stack_ids.get(name).copied()
    }

    pub fn lookup_action(&self, name: &str) -> Option<PdsActionId> {
        self.action_ids.get(name).copied()
    }

    pub fn classify(&self) -> PdsFlags {
        let mut real_time = true;
        let mut restricted = true;
        let mut popping_eps = true;
        for r in &self.rules {
            if r.action.is_none() {
                real_time = false;
                if !r.push.is_empty() {
                    popping_eps = false;
                }
                if self.rules_at(r.state, r.top).len() > 1 {
                    restricted = false;
                }
            }
        }
        PdsFlags {
            real_time,
            restricted,
            popping_eps,
        }
    }

    /// Head-rewriting steps, in rule order. Empty stack: no moves.
    pub fn transitions(
        &self,
        cfg: &Configuration,
    ) -> Vec<(Option<PdsActionId>, Configuration)> {
        let Some(&top) = cfg.stack.first() else {
            return Vec::new();
        };
        self.rules_at(cfg.state, top)
            .iter()
            .map(|&i| {
                let r = &self.rules[i];
                let mut stack = r.push.clone();
                stack.extend_from_slice(&cfg.stack[1..]);
                (
                    r.action,
                    Configuration {
                        state: r.target,
                        stack,
                    },
                )
            })
            .collect()
    }

    /// Configuration text: state then stack symbols, top first.
    pub fn parse_config(&self, text: &str) -> Result<Configuration, PdsError> {
        let mut toks = text.split_whitespace();
        let state_name = toks.next().unwrap_or("");
        let state = self
            .lookup_state(state_name)
            .ok_or_else(|| PdsError::UnknownState(state_name.to_string()))?;
        let mut stack = Vec::new();
        for t in toks {
            stack.push(
                self.lookup_stack(t)
                    .ok_or_else(|| PdsError::UnknownStackSymbol(t.to_string()))?,
            );
        }
        Ok(Configuration { state, stack })
    }

    pub fn print_config(&self, cfg: &Configuration) -> String {
        let mut out = self.state_name(cfg.state).to_string();
        for &y in &cfg.stack {
            out.push(' ');
            out.push_str(self.stack_name(y));
        }
        out
    }

    /// Canonical text form; `parse_pds` reads it back identically.
    pub fn serialize(&self) -> String {
        let mut out = String::from("pds\n");
        if !self.states.is_empty() {
            out.push_str(&format!("states {}\n", self.states.join(" ")));
        }
        if !self.stack_syms.is_empty() {
            out.push_str(&format!("stack {}\n", self.stack_syms.join(" ")));
        }
        if !self.actions.is_empty() {
            out.push_str(&format!("action {}\n", self.actions.join(" ")));
        }
        for r in &self.rules {
            let act = match r.action {
                Some(a) => self.action_name(a).to_string(),
                None => "eps".to_string(),
            };
            let mut line = format!(
                "rule {} {} -{act}-> {}",
                self.state_name(r.state),
                self.stack_name(r.top),
                self.state_name(r.target)
            );
            for &y in &r.push {
                line.push(' ');
                line.push_str(self.stack_name(y));
            }
            out.push_str(&line);
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for Pds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialize())
    }
}

const RESERVED: &[&str] = &["pds", "states", "stack", "action", "rule", "eps"];

fn plain_token_ok(tok: &str) -> bool {
    !tok.is_empty()
        && !RESERVED.contains(&tok)
        && tok
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '\'')
}

/// Bracket names [q] or [q.Y] pass through from grammar translations.
fn name_token_ok(tok: &str) -> bool {
    if let Some(inner) = tok.strip_prefix('[').and_then(|t| t.strip_suffix(']')) {
        return !inner.is_empty()
            && inner.split('.').count() <= 2
            && inner
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '\'' || c == '.');
    }
    plain_token_ok(tok)
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(p) => &line[..p],
        None => line,
    }
}

/// Parses the line-based PDS format: a `pds` header, then `states p q`,
/// `stack A B`, `action a b` declarations and `rule p A -a-> q B A` lines
/// (actions spelled `eps` are silent). Declarations may repeat and come in
/// any order relative to rules.
pub fn parse_pds(text: &str) -> Result<Pds, PdsError> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, strip_comment(l).trim()))
        .filter(|(_, l)| !l.is_empty())
        .collect();

    let mut it = lines.iter();
    match it.next() {
        Some((_, "pds")) => {}
        Some((ln, _)) => return err(*ln, "expected 'pds' header"),
        None => return err(1, "empty pds file"),
    }

    let mut pds = Pds {
        states: Vec::new(),
        stack_syms: Vec::new(),
        actions: Vec::new(),
        rules: Vec::new(),
        state_ids: HashMap::new(),
        stack_ids: HashMap::new(),
        action_ids: HashMap::new(),
        rules_by_head: HashMap::new(),
    };

    // First pass: declarations.
    for (ln, line) in it.clone() {
        let (kind, rest) = match line.split_once(' ') {
            Some((k, r)) => (k, r),
            None => (*line, ""),
        };
        match kind {
            "states" => {
                for tok in rest.split_whitespace() {
                    if !name_token_ok(tok) {
                        return err(*ln, format!("bad state name {tok:?}"));
                    }
                    if pds.state_ids.contains_key(tok) {
                        return err(*ln, format!("state {tok:?} already declared"));
                    }
                    pds.state_ids
                        .insert(tok.to_string(), StateId(pds.states.len() as u32));
                    pds.states.push(tok.to_string());
                }
            }
            "stack" => {
                for tok in rest.split_whitespace() {
                    if !name_token_ok(tok) {
                        return err(*ln, format!("bad stack symbol {tok:?}"));
                    }
                    if pds.stack_ids.contains_key(tok) {
                        return err(*ln, format!("stack symbol {tok:?} already declared"));
                    }
                    pds.stack_ids
                        .insert(tok.to_string(), StackId(pds.stack_syms.len() as u32));
                    pds.stack_syms.push(tok.to_string());
                }
            }
            "action" => {
                for tok in rest.split_whitespace() {
                    if !plain_token_ok(tok) || tok.contains('\'') {
                        return err(*ln, format!("bad action name {tok:?}"));
                    }
                    if pds.action_ids.contains_key(tok) {
                        return err(*ln, format!("action {tok:?} already declared"));
                    }
                    pds.action_ids
                        .insert(tok.to_string(), PdsActionId(pds.actions.len() as u32));
                    pds.actions.push(tok.to_string());
                }
            }
            "rule" => {}
            _ => return err(*ln, format!("unrecognized line {line:?}")),
        }
    }

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
        let lhs: Vec<&str> = pre[..dash].split_whitespace().collect();
        let action_name = pre[dash + 1..].trim();
        let rhs: Vec<&str> = rest[arrow + 2..].split_whitespace().collect();

        let [state_name, top_name] = lhs.as_slice() else {
            return err(*ln, "rule left side must be 'state symbol'");
        };
        let state = match pds.state_ids.get(*state_name) {
            Some(s) => *s,
            None => return err(*ln, format!("undeclared state {state_name:?}")),
        };
        let top = match pds.stack_ids.get(*top_name) {
            Some(y) => *y,
            None => return err(*ln, format!("undeclared stack symbol {top_name:?}")),
        };
        let action = if action_name == "eps" {
            None
        } else {
            match pds.action_ids.get(action_name) {
                Some(a) => Some(*a),
                None => return err(*ln, format!("undeclared action {action_name:?}")),
            }
        };
        let Some((target_name, push_names)) = rhs.split_first() else {
            return err(*ln, "rule right side must start with a state");
        };
        let target = match pds.state_ids.get(*target_name) {
            Some(s) => *s,
            None => return err(*ln, format!("undeclared state {target_name:?}")),
        };
        let mut push = Vec::new();
        for tok in push_names {
            match pds.stack_ids.get(*tok) {
                Some(y) => push.push(*y),
                None => return err(*ln, format!("undeclared stack symbol {tok:?}")),
            }
        }
        pds.rules_by_head
            .entry((state, top))
            .or_default()
            .push(pds.rules.len());
        pds.rules.push(PdsRule {
            state,
            top,
            action,
            target,
            push,
        });
    }

    Ok(pds)
}

/// What the silent chain from the single-symbol configuration pY does.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Summary {
    /// Pops Y away entirely, ending in this state.
    Pops(StateId),
    /// Reaches a stable configuration with this state and stack (the
    /// stack replaces Y; its head is stable).
    Stable(StateId, Vec<StackId>),
    /// Never stabilizes.
    Diverges,
}

type Summaries = HashMap<(StateId, StackId), Summary>;

/// The silent-chain summary of every head. Requires deterministic
/// eps-rules: the chain is then unique.
pub fn eps_summaries(m: &Pds) -> Result<Summaries, PdsError> {
    for r in &m.rules {
        if r.action.is_none() && m.rules_at(r.state, r.top).len() > 1 {
            return Err(PdsError::NotRestricted {
                state: m.state_name(r.state).to_string(),
                symbol: m.stack_name(r.top).to_string(),
            });
        }
    }
    let mut memo: Summaries = HashMap::new();
    let mut in_progress: HashSet<(StateId, StackId)> = HashSet::new();
    for s in 0..m.states.len() as u32 {
        for y in 0..m.stack_syms.len() as u32 {
            summarize(m, &mut memo, &mut in_progress, StateId(s), StackId(y));
        }
    }
    Ok(memo)
}

fn summarize(
    m: &Pds,
    memo: &mut Summaries,
    in_progress: &mut HashSet<(StateId, StackId)>,
    p: StateId,
    y: StackId,
) -> Summary {
    if let Some(s) = memo.get(&(p, y)) {
        return s.clone();
    }
    if !in_progress.insert((p, y)) {
        // A head repetition: the deterministic chain cycles.
        return Summary::Diverges;
    }
    let eps = m
        .rules_at(p, y)
        .iter()
        .map(|&i| &m.rules[i])
        .find(|r| r.action.is_none());
    let result = match eps {
        None => Summary::Stable(p, vec![y]),
        Some(rule) => {
            let mut state = rule.target;
            let mut out = None;
            for (pos, &w) in rule.push.iter().enumerate() {
                match summarize(m, memo, in_progress, state, w) {
                    Summary::Diverges => {
                        out = Some(Summary::Diverges);
                        break;
                    }
                    Summary::Pops(q) => state = q,
                    Summary::Stable(s, mut stack) => {
                        stack.extend_from_slice(&rule.push[pos + 1..]);
                        out = Some(Summary::Stable(s, stack));
                        break;
                    }
                }
            }
            out.unwrap_or(Summary::Pops(state))
        }
    };
    in_progress.remove(&(p, y));
    memo.insert((p, y), result.clone());
    result
}

/// No silent rule applies: empty stack, or a head without eps-rules.
pub fn is_stable(m: &Pds, cfg: &Configuration) -> bool {
    match cfg.stack.first() {
        None => true,
        Some(&top) => m
            .rules_at(cfg.state, top)
            .iter()
            .all(|&i| m.rules[i].action.is_some()),
    }
}

fn stabilize_with(summaries: &Summaries, cfg: &Configuration) -> Option<Configuration> {
    let mut state = cfg.state;
    let mut pos = 0;
    while pos < cfg.stack.len() {
        match summaries
            .get(&(state, cfg.stack[pos]))
            .expect("summaries cover all heads")
        {
            Summary::Diverges => return None,
            Summary::Pops(q) => {
                state = *q;
                pos += 1;
            }
            Summary::Stable(s, head) => {
                let mut stack = head.clone();
                stack.extend_from_slice(&cfg.stack[pos + 1..]);
                return Some(Configuration { state: *s, stack });
            }
        }
    }
    Some(Configuration {
        state,
        stack: Vec::new(),
    })
}

/// The unique stable configuration reached by exhausting silent steps.
pub fn stabilize(m: &Pds, cfg: &Configuration) -> Result<Configuration, PdsError> {
    let summaries = eps_summaries(m)?;
    stabilize_with(&summaries, cfg).ok_or_else(|| PdsError::SilentDivergence {
        config: m.print_config(cfg),
    })
}

/// Saturates a restricted PDS into one whose eps-rules are deterministic
/// and popping, weakly bisimilar head by head: silently cycling heads
/// lose their rule, chains that pop everything become single popping
/// rules, and chains reaching a stable head inline its visible rules.
pub fn remove_nonpopping_eps(m: &Pds) -> Result<Pds, PdsError> {
    let summaries = eps_summaries(m)?;
    let mut out = m.clone();
    out.rules.clear();
    out.rules_by_head.clear();

    let mut kept: Vec<PdsRule> = m
        .rules
        .iter()
        .filter(|r| r.action.is_some() || r.push.is_empty())
        .cloned()
        .collect();

    let mut added: BTreeSet<PdsRule> = BTreeSet::new();
    for s in 0..m.states.len() as u32 {
        for y in 0..m.stack_syms.len() as u32 {
            let (p, top) = (StateId(s), StackId(y));
            let unstable = m
                .rules_at(p, top)
                .iter()
                .any(|&i| m.rules[i].action.is_none());
            if !unstable {
                continue;
            }
            match &summaries[&(p, top)] {
                Summary::Diverges => {}
                Summary::Pops(q) => {
                    added.insert(PdsRule {
                        state: p,
                        top,
                        action: None,
                        target: *q,
                        push: Vec::new(),
                    });
                }
                Summary::Stable(q, stack) => {
                    let (b, below) = stack.split_first().expect("stable stacks are nonempty");
                    for &i in m.rules_at(*q, *b) {
                        let r = &m.rules[i];
                        if r.action.is_none() {
                            continue;
                        }
                        let mut push = r.push.clone();
                        push.extend_from_slice(below);
                        added.insert(PdsRule {
                            state: p,
                            top,
                            action: r.action,
                            target: r.target,
                            push,
                        });
                    }
                }
            }
        }
    }
    for r in added {
        if !kept.contains(&r) {
            kept.push(r);
        }
    }
    for (i, r) in kept.iter().enumerate() {
        out.rules_by_head.entry((r.state, r.top)).or_default().push(i);
    }
    out.rules = kept;
    debug_assert!({
        let f = out.classify();
        f.restricted && f.popping_eps
    });
    Ok(out)
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
enum HeadKind {
    /// Nonterminal [p.Y] of arity |Q|.
    Stable(SymbolId),
    /// Silently popping head; the chain continues in this state.
    PopsTo(StateId),
}

/// A PDS translated to a grammar over [p] and [p.Y] nonterminals.
pub struct PdsToGrammar {
    pub grammar: Grammar,
    pds: Pds,
    state_syms: Vec<SymbolId>,
    head_kinds: HashMap<(StateId, StackId), HeadKind>,
}

fn bracket_part(name: &str) -> Result<&str, PdsError> {
    if name.is_empty() || name.contains(['[', ']', '.']) {
        return Err(PdsError::CannotEmbed(name.to_string()));
    }
    Ok(name)
}

/// Translates a real-time or popping-restricted PDS into a grammar whose
/// transition system restricted to encoded configurations mirrors the
/// stable part of the PDS.
pub fn pds_to_grammar(m: &Pds) -> Result<PdsToGrammar, PdsError> {
    let flags = m.classify();
    if !flags.restricted {
        let r = m
            .rules
            .iter()
            .find(|r| r.action.is_none() && m.rules_at(r.state, r.top).len() > 1)
            .expect("some eps-rule has alternatives");
        return Err(PdsError::NotRestricted {
            state: m.state_name(r.state).to_string(),
            symbol: m.stack_name(r.top).to_string(),
        });
    }
    if !flags.popping_eps {
        let r = m
            .rules
            .iter()
            .find(|r| r.action.is_none() && !r.push.is_empty())
            .expect("some eps-rule pushes");
        return Err(PdsError::NonPoppingSilent {
            state: m.state_name(r.state).to_string(),
            symbol: m.stack_name(r.top).to_string(),
        });
    }

    let arity = m.states.len();
    let mut head_kinds: HashMap<(StateId, StackId), HeadKind> = HashMap::new();
    let mut text = String::from("grammar\n");
    for name in &m.states {
        text.push_str(&format!("nonterminal [{}]/0\n", bracket_part(name)?));
    }
    for (si, sname) in m.states.iter().enumerate() {
        for (yi, yname) in m.stack_syms.iter().enumerate() {
            let (p, y) = (StateId(si as u32), StackId(yi as u32));
            let eps = m
                .rules_at(p, y)
                .iter()
                .map(|&i| &m.rules[i])
                .find(|r| r.action.is_none());
            match eps {
                Some(r) => {
                    head_kinds.insert((p, y), HeadKind::PopsTo(r.target));
                }
                None => {
                    text.push_str(&format!(
                        "nonterminal [{}.{}]/{arity}\n",
                        bracket_part(sname)?,
                        bracket_part(yname)?
                    ));
                }
            }
        }
    }
    for a in &m.actions {
        text.push_str(&format!("action {a}\n"));
    }

    // Rule right-hand sides share the per-suffix subterms via a let block.
    let vars: Vec<String> = (1..=arity).map(|i| format!("x{i}")).collect();
    for r in &m.rules {
        if r.action.is_none() {
            continue;
        }
        let head = format!(
            "[{}.{}]",
            bracket_part(m.state_name(r.state))?,
            bracket_part(m.stack_name(r.top))?
        );
        let lhs = if arity == 0 {
            head
        } else {
            format!("{head}({})", vars.join(","))
        };
        let mut bindings: Vec<String> = Vec::new();
        let mut exprs: HashMap<(u32, usize), String> = HashMap::new();
        let root = symbolic_term(
            m,
            &head_kinds,
            r.target,
            &r.push,
            0,
            &mut exprs,
            &mut bindings,
        );
        let rhs = if bindings.is_empty() {
            root
        } else {
            format!("{} in {root}", bindings.join(" "))
        };
        text.push_str(&format!(
            "rule {lhs} -{}-> {rhs}\n",
            m.action_name(r.action.expect("visible rule"))
        ));
    }

    let grammar = parse_grammar(&text)?;
    let state_syms = m
        .states
        .iter()
        .map(|name| {
            grammar
                .alphabet()
                .lookup(&format!("[{name}]"))
                .expect("state nonterminal was declared")
        })
        .collect();
    let head_kinds = head_kinds
        .into_iter()
        .map(|(k, v)| (k, v))
        .chain(m.states.iter().enumerate().flat_map(|(si, sname)| {
            let grammar = &grammar;
            m.stack_syms.iter().enumerate().filter_map(move |(yi, yname)| {
                let sym = grammar.alphabet().lookup(&format!("[{sname}.{yname}]"))?;
                Some((
                    (StateId(si as u32), StackId(yi as u32)),
                    HeadKind::Stable(sym),
                ))
            })
        }))
        .collect();
    Ok(PdsToGrammar {
        grammar,
        pds: m.clone(),
        state_syms,
        head_kinds,
    })
}

/// Text of the term for state q_i over the stack suffix push[d..] with a
/// symbolic variable tail: empty suffix is x_i, a popping head chases its
/// silent rule, and a stable head becomes a shared let binding.
fn symbolic_term(
    m: &Pds,
    head_kinds: &HashMap<(StateId, StackId), HeadKind>,
    state: StateId,
    push: &[StackId],
    d: usize,
    exprs: &mut HashMap<(u32, usize), String>,
    bindings: &mut Vec<String>,
) -> String {
    if d == push.len() {
        return format!("x{}", state.0 + 1);
    }
    if let Some(e) = exprs.get(&(state.0, d)) {
        return e.clone();
    }
    // Stable heads are entered into the map only after the grammar text
    // parses; here absence means stable.
    let expr = match head_kinds.get(&(state, push[d])) {
        Some(&HeadKind::PopsTo(q)) => {
            symbolic_term(m, head_kinds, q, push, d + 1, exprs, bindings)
        }
        _ => {
            let children: Vec<String> = (0..m.states.len() as u32)
                .map(|i| {
                    symbolic_term(m, head_kinds, StateId(i), push, d + 1, exprs, bindings)
                })
                .collect();
            let name = format!("n{d}_{}", state.0);
            bindings.push(format!(
                "let {name} = [{}.{}]({})",
                m.state_name(state),
                m.stack_name(push[d]),
                children.join(", ")
            ));
            name
        }
    };
    exprs.insert((state.0, d), expr.clone());
    expr
}

impl PdsToGrammar {
    /// The term encoding of a configuration: bare states become leaf
    /// nonterminals, stable heads branch over all states, popping heads
    /// are chased away.
    pub fn encode(&self, cfg: &Configuration) -> TermRef {
        let mut raw = RawGraph::new();
        let mut memo: HashMap<(u32, usize), RawId> = HashMap::new();
        let root = self.encode_at(cfg.state, &cfg.stack, 0, &mut raw, &mut memo);
        self.grammar
            .store()
            .intern(&raw, root)
            .expect("encoded configurations are well-formed terms")
    }

    fn encode_at(
        &self,
        state: StateId,
        stack: &[StackId],
        d: usize,
        raw: &mut RawGraph,
        memo: &mut HashMap<(u32, usize), RawId>,
    ) -> RawId {
        if let Some(&id) = memo.get(&(state.0, d)) {
            return id;
        }
        let id = if d == stack.len() {
            raw.add_app(self.state_syms[state.0 as usize], Vec::new())
        } else {
            match self.head_kinds[&(state, stack[d])] {
                HeadKind::PopsTo(q) => self.encode_at(q, stack, d + 1, raw, memo),
                HeadKind::Stable(sym) => {
                    let children: Vec<RawId> = (0..self.pds.states.len() as u32)
                        .map(|i| self.encode_at(StateId(i), stack, d + 1, raw, memo))
                        .collect();
                    raw.add_app(sym, children)
                }
            }
        };
        memo.insert((state.0, d), id);
        id
    }

    pub fn pds(&self) -> &Pds {
        &self.pds
    }

    /// Human-readable mapping from PDS names to grammar nonterminals.
    pub fn table(&self) -> String {
        let mut out = String::new();
        for name in &self.pds.states {
            out.push_str(&format!("# {name} -> [{name}]\n"));
        }
        for (si, sname) in self.pds.states.iter().enumerate() {
            for (yi, yname) in self.pds.stack_syms.iter().enumerate() {
                match self.head_kinds[&(StateId(si as u32), StackId(yi as u32))] {
                    HeadKind::Stable(_) => {
                        out.push_str(&format!("# {sname} {yname} -> [{sname}.{yname}]\n"));
                    }
                    HeadKind::PopsTo(q) => {
                        out.push_str(&format!(
                            "# {sname} {yname} -> silent pop to {}\n",
                            self.pds.state_name(q)
                        ));
                    }
                }
            }
        }
        out
    }
}

/// A grammar translated to a PDS whose stack holds nonterminals and
/// root-substitutions of rule right-hand-side subterms.
pub struct GrammarToPds {
    pub pds: Pds,
    /// Substitution images, indexed like their stack symbols follow the
    /// nonterminal symbols.
    sigmas: Vec<Vec<TermRef>>,
    nt_count: usize,
}

pub fn grammar_to_pds(g: &Grammar) -> GrammarToPds {
    let store = g.store();
    let n_states = g.alphabet().max_arity().max(1);

    // Root-substitutions of non-variable subterms of rule right-hand
    // sides, as child vectors, deduplicated.
    let mut sigma_set: BTreeSet<Vec<TermRef>> = BTreeSet::new();
    for r in g.rules() {
        for t in store.subterms(r.rhs) {
            if matches!(store.label(t), Label::App(_)) {
                sigma_set.insert(store.children(t));
            }
        }
    }
    let sigmas: Vec<Vec<TermRef>> = sigma_set.into_iter().collect();
    let sigma_index: HashMap<&Vec<TermRef>, usize> =
        sigmas.iter().enumerate().map(|(i, s)| (s, i)).collect();

    let nt_names: Vec<String> = g
        .alphabet()
        .ids()
        .map(|s| g.alphabet().name(s).to_string())
        .collect();
    let taken: HashSet<&String> = nt_names.iter().collect();
    let sigma_names: Vec<String> = (0..sigmas.len())
        .map(|i| {
            let mut name = format!("s{i}");
            while taken.contains(&name) {
                name.push('\'');
            }
            name
        })
        .collect();

    let mut text = String::from("pds\n");
    text.push_str(&format!(
        "states {}\n",
        (1..=n_states)
            .map(|i| format!("q{i}"))
            .collect::<Vec<_>>()
            .join(" ")
    ));
    if !nt_names.is_empty() || !sigma_names.is_empty() {
        let mut all = nt_names.clone();
        all.extend(sigma_names.iter().cloned());
        text.push_str(&format!("stack {}\n", all.join(" ")));
    }
    if !g.actions().is_empty() {
        text.push_str(&format!("action {}\n", g.actions().join(" ")));
    }

    // Visible rules from grammar rules: pop into a state for a variable
    // right-hand side, push root and root-substitution otherwise.
    for r in g.rules() {
        let head = g.alphabet().name(r.head);
        let act = g.action_name(r.action);
        match store.label(r.rhs) {
            Label::Var(j) => {
                text.push_str(&format!("rule q1 {head} -{act}-> q{j}\n"));
            }
            Label::App(b) => {
                let k = sigma_index[&store.children(r.rhs)];
                text.push_str(&format!(
                    "rule q1 {head} -{act}-> q1 {} {}\n",
                    g.alphabet().name(b),
                    sigma_names[k]
                ));
            }
        }
    }
    // Silent rules resolve one variable through a substitution symbol:
    // a variable image pops, a nonterminal image pushes its own root
    // and root-substitution. Outside the domain the image is the
    // variable itself.
    for (k, sigma) in sigmas.iter().enumerate() {
        for i in 1..=n_states {
            let image = if i <= sigma.len() {
                Some(sigma[i - 1])
            } else {
                None
            };
            match image.map(|t| store.label(t)) {
                None => {
                    text.push_str(&format!("rule q{i} {} -eps-> q{i}\n", sigma_names[k]));
                }
                Some(Label::Var(j)) => {
                    text.push_str(&format!("rule q{i} {} -eps-> q{j}\n", sigma_names[k]));
                }
                Some(Label::App(c)) => {
                    let t = image.expect("application image");
                    let kc = sigma_index[&store.children(t)];
                    text.push_str(&format!(
                        "rule q{i} {} -eps-> q1 {} {}\n",
                        sigma_names[k],
                        g.alphabet().name(c),
                        sigma_names[kc]
                    ));
                }
            }
        }
    }

    let pds = parse_pds(&text).expect("generated pds text is well-formed");
    debug_assert!(pds.classify().restricted);
    GrammarToPds {
        pds,
        sigmas,
        nt_count: nt_names.len(),
    }
}

impl GrammarToPds {
    /// The configuration encoding the grammar state A(x1..x_ar(A)).
    pub fn encode(&self, head: SymbolId) -> Configuration {
        Configuration {
            state: StateId(0),
            stack: vec![StackId(head.0)],
        }
    }

    pub fn is_substitution_symbol(&self, y: StackId) -> bool {
        (y.0 as usize) >= self.nt_count
    }

    /// Human-readable definitions of the substitution stack symbols.
    pub fn table(&self, g: &Grammar) -> String {
        let mut out = String::new();
        for (k, sigma) in self.sigmas.iter().enumerate() {
            let name = self.pds.stack_name(StackId((self.nt_count + k) as u32));
            if sigma.is_empty() {
                out.push_str(&format!("# {name}: identity\n"));
            } else {
                let parts: Vec<String> = sigma
                    .iter()
                    .enumerate()
                    .map(|(i, t)| format!("x{} -> {}", i + 1, print_inline(g.store(), *t)))
                    .collect();
                out.push_str(&format!("# {name}: {}\n", parts.join(", ")));
            }
        }
        out
    }
}

const DEAD: u32 = u32::MAX;

struct ConfigArena {
    list: Vec<Configuration>,
    ids: HashMap<Configuration, u32>,
}

struct WeakSide<'a> {
    m: &'a Pds,
    summaries: Summaries,
    /// Side-local action id to shared action id, merged by name.
    act_merged: Vec<u32>,
    arena: RefCell<ConfigArena>,
}

impl<'a> WeakSide<'a> {
    fn new(m: &'a Pds, merged: &mut HashMap<String, u32>) -> Result<Self, PdsError> {
        let summaries = eps_summaries(m)?;
        let act_merged = m
            .actions
            .iter()
            .map(|name| {
                let next = merged.len() as u32;
                *merged.entry(name.clone()).or_insert(next)
            })
            .collect();
        Ok(WeakSide {
            m,
            summaries,
            act_merged,
            arena: RefCell::new(ConfigArena {
                list: Vec::new(),
                ids: HashMap::new(),
            }),
        })
    }

    fn intern(&self, cfg: Configuration) -> u32 {
        let mut arena = self.arena.borrow_mut();
        if let Some(&id) = arena.ids.get(&cfg) {
            return id;
        }
        let id = arena.list.len() as u32;
        arena.list.push(cfg.clone());
        arena.ids.insert(cfg, id);
        id
    }

    fn stabilized_id(&self, cfg: &Configuration) -> u32 {
        match stabilize_with(&self.summaries, cfg) {
            Some(c) => self.intern(c),
            None => DEAD,
        }
    }

    /// Visible moves of a stable configuration, each target stabilized.
    fn moves_of(&self, id: u32) -> Vec<(u32, u32)> {
        if id == DEAD {
            return Vec::new();
        }
        let cfg = self.arena.borrow().list[id as usize].clone();
        self.m
            .transitions(&cfg)
            .into_iter()
            .map(|(act, target)| {
                let a = act.expect("stable configurations have no silent moves");
                (self.act_merged[a.0 as usize], self.stabilized_id(&target))
            })
            .collect()
    }
}

struct WeakLts<'a> {
    sides: Vec<WeakSide<'a>>,
}

impl<'a> Lts for WeakLts<'a> {
    type State = (u8, u32);
    type Action = u32;
    fn moves(&self, (side, id): (u8, u32)) -> Vec<(u32, (u8, u32))> {
        self.sides[side as usize]
            .moves_of(id)
            .into_iter()
            .map(|(a, t)| (a, (side, t)))
            .collect()
    }
}

fn run_weak_game(
    lts: &WeakLts<'_>,
    s: (u8, u32),
    t: (u8, u32),
    cap: u64,
    memo_budget: u64,
) -> Result<EqLevelResult, PdsError> {
    let mut solver = Solver::new(lts, memo_budget);
    let v = solver.level(s, t, cap)?;
    Ok(if v < cap {
        EqLevelResult::Finite(v)
    } else {
        EqLevelResult::AtLeast(cap)
    })
}

/// Bounded weak equivalence level of two configurations of a restricted
/// PDS: the strong game over stabilized configurations, where a silently
/// diverging configuration acts as a dead state.
pub fn weak_eq_level_bounded(
    m: &Pds,
    c1: &Configuration,
    c2: &Configuration,
    cap: u64,
    memo_budget: u64,
) -> Result<EqLevelResult, PdsError> {
    let mut merged = HashMap::new();
    let lts = WeakLts {
        sides: vec![WeakSide::new(m, &mut merged)?],
    };
    let s = (0u8, lts.sides[0].stabilized_id(c1));
    let t = (0u8, lts.sides[0].stabilized_id(c2));
    run_weak_game(&lts, s, t, cap, memo_budget)
}

/// Bounded weak equivalence across two systems (their disjoint union),
/// actions matched by name.
pub fn weak_eq_level_cross(
    m1: &Pds,
    c1: &Configuration,
    m2: &Pds,
    c2: &Configuration,
    cap: u64,
    memo_budget: u64,
) -> Result<EqLevelResult, PdsError> {
    let mut merged = HashMap::new();
    let lts = WeakLts {
        sides: vec![
            WeakSide::new(m1, &mut merged)?,
            WeakSide::new(m2, &mut merged)?,
        ],
    };
    let s = (0u8, lts.sides[0].stabilized_id(c1));
    let t = (1u8, lts.sides[1].stabilized_id(c2));
    run_weak_game(&lts, s, t, cap, memo_budget)
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
enum GpState {
    G(TermRef),
    P(u32),
}

struct GrammarPdsLts<'a> {
    g: &'a Grammar,
    gram_merged: Vec<u32>,
    side: WeakSide<'a>,
}

impl<'a> Lts for GrammarPdsLts<'a> {
    type State = GpState;
    type Action = u32;
    fn moves(&self, s: GpState) -> Vec<(u32, GpState)> {
        match s {
            GpState::G(t) => self
                .g
                .transitions(t, VarMode::Dead)
                .into_iter()
                .map(|(a, target)| {
                    let StepAction::Act(id) = a else {
                        unreachable!("dead variables fire nothing");
                    };
                    (self.gram_merged[id.0 as usize], GpState::G(target))
                })
                .collect(),
            GpState::P(id) => self
                .side
                .moves_of(id)
                .into_iter()
                .map(|(a, t)| (a, GpState::P(t)))
                .collect(),
        }
    }
}

/// Bounded equivalence level between a grammar term (dead variables) and
/// a PDS configuration under the stabilized weak semantics.
pub fn grammar_pds_eq_level(
    g: &Grammar,
    term: TermRef,
    m: &Pds,
    cfg: &Configuration,
    cap: u64,
    memo_budget: u64,
) -> Result<EqLevelResult, PdsError> {
    let mut merged: HashMap<String, u32> = HashMap::new();
    let gram_merged = g
        .actions()
        .iter()
        .map(|name| {
            let next = merged.len() as u32;
            *merged.entry(name.clone()).or_insert(next)
        })
        .collect();
    let side = WeakSide::new(m, &mut merged)?;
    let start_p = GpState::P(side.stabilized_id(cfg));
    let lts = GrammarPdsLts {
        g,
        gram_merged,
        side,
    };
    let mut solver = Solver::new(&lts, memo_budget);
    let v = solver.level(GpState::G(term), start_p, cap)?;
    Ok(if v < cap {
        EqLevelResult::Finite(v)
    } else {
        EqLevelResult::AtLeast(cap)
    })
}
