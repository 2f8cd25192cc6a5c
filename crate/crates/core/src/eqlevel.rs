//! Bounded equivalence levels via the two-player rewriting game.
//!
//! Level 0 relates everything; E and F are related at level k+1 when every
//! step from one side can be matched by an equally labeled step from the
//! other into a pair related at level k. The equivalence level of (E,F) is
//! the largest such k, possibly infinite. The solver computes
//! min(level, cap) by backward induction with memoization; capping commutes
//! with the min/max structure of the game, so capped subresults stay sound.
//!
//! Three independent oracles keep the solver honest: a stratified
//! refinement over a truncated state space, an exact decision procedure for
//! finite reachable sets, and replayable win certificates.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::hash::Hash;

use thiserror::Error;

use crate::grammar::{Grammar, StepAction, VarMode};
use crate::term::TermRef;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EqLevelError {
    #[error("memo table exceeded {budget} entries")]
    MemoBudget { budget: u64 },
    #[error("state space exceeded {budget} terms")]
    StateBudget { budget: u64 },
    #[error("certificates exist only for finite levels")]
    NotFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EqLevelResult {
    /// Exact level, strictly below the requested cap.
    Finite(u64),
    /// Related at level cap; the true level may be anything from cap up.
    AtLeast(u64),
}

impl EqLevelResult {
    /// min(level, cap), the quantity the solver actually computes.
    pub fn capped(&self) -> u64 {
        match *self {
            EqLevelResult::Finite(k) => k,
            EqLevelResult::AtLeast(cap) => cap,
        }
    }
}

pub const DEFAULT_MEMO_BUDGET: u64 = 1 << 20;

#[derive(Debug, Clone, Copy)]
pub struct GameConfig {
    pub cap: u64,
    pub variable_mode: VarMode,
    pub memo_budget: u64,
}

impl GameConfig {
    /// Self-looping variables are the default: a variable then answers a
    /// private action nobody else has, which yields level 0 against every
    /// other term without special cases.
    pub fn new(cap: u64) -> Self {
        GameConfig {
            cap,
            variable_mode: VarMode::SelfLoop,
            memo_budget: DEFAULT_MEMO_BUDGET,
        }
    }

    pub fn with_mode(mut self, mode: VarMode) -> Self {
        self.variable_mode = mode;
        self
    }

    pub fn with_memo_budget(mut self, budget: u64) -> Self {
        self.memo_budget = budget;
        self
    }
}

/// A deterministic labeled transition system the game runs over.
pub trait Lts {
    type State: Copy + Ord + Eq + Hash + std::fmt::Debug;
    type Action: Copy + Ord + Eq + std::fmt::Debug;
    fn moves(&self, s: Self::State) -> Vec<(Self::Action, Self::State)>;
}

pub struct GrammarLts<'a> {
    pub grammar: &'a Grammar,
    pub mode: VarMode,
}

impl<'a> Lts for GrammarLts<'a> {
    type State = TermRef;
    type Action = StepAction;
    fn moves(&self, s: TermRef) -> Vec<(StepAction, TermRef)> {
        self.grammar.transitions(s, self.mode)
    }
}

#[derive(Clone, Copy)]
enum MemoVal {
    Exact(u64),
    AtLeast(u64),
}

pub struct Solver<'l, L: Lts> {
    lts: &'l L,
    memo: HashMap<(L::State, L::State), MemoVal>,
    memo_budget: u64,
}

impl<'l, L: Lts> Solver<'l, L> {
    pub fn new(lts: &'l L, memo_budget: u64) -> Self {
        Solver {
            lts,
            memo: HashMap::new(),
            memo_budget,
        }
    }

    fn grouped(&self, s: L::State) -> BTreeMap<L::Action, BTreeSet<L::State>> {
        let mut out: BTreeMap<L::Action, BTreeSet<L::State>> = BTreeMap::new();
        for (a, t) in self.lts.moves(s) {
            out.entry(a).or_default().insert(t);
        }
        out
    }

    /// min(level(s,t), cap). Memo entries are write-once per meaning: an
    /// Exact value never changes, an AtLeast bound only grows.
    pub fn level(
        &mut self,
        s: L::State,
        t: L::State,
        cap: u64,
    ) -> Result<u64, EqLevelError> {
        if s == t {
            return Ok(cap);
        }
        let key = if s < t { (s, t) } else { (t, s) };
        match self.memo.get(&key) {
            Some(MemoVal::Exact(v)) => return Ok((*v).min(cap)),
            Some(MemoVal::AtLeast(b)) if *b >= cap => return Ok(cap),
            _ => {}
        }
        if cap == 0 {
            return Ok(0);
        }

        let left = self.grouped(s);
        let right = self.grouped(t);
        let value = if left.keys().ne(right.keys()) {
            0
        } else {
            // Spoiler picks a side, an action and a step; Duplicator picks
            // the best matching reply.
            let mut best: Option<u64> = None;
            'outer: for (mine, theirs) in [(&left, &right), (&right, &left)] {
                for (a, steps) in mine {
                    let replies = &theirs[a];
                    for &s2 in steps {
                        let mut reply_best = 0;
                        for &t2 in replies {
                            let v = self.level(s2, t2, cap - 1)?;
                            reply_best = reply_best.max(v);
                            if reply_best == cap - 1 {
                                break;
                            }
                        }
                        if best.map_or(true, |b| reply_best < b) {
                            best = Some(reply_best);
                        }
                        if best == Some(0) {
                            break 'outer;
                        }
                    }
                }
            }
            match best {
                None => cap, // no step at all: Duplicator wins forever
                Some(b) => 1 + b,
            }
        };

        let entry = if value < cap {
            MemoVal::Exact(value)
        } else {
            match self.memo.get(&key) {
                Some(MemoVal::AtLeast(b)) => MemoVal::AtLeast((*b).max(cap)),
                _ => MemoVal::AtLeast(cap),
            }
        };
        if !self.memo.contains_key(&key)
            && self.memo.len() as u64 >= self.memo_budget
        {
            return Err(EqLevelError::MemoBudget {
                budget: self.memo_budget,
            });
        }
        self.memo.insert(key, entry);
        Ok(value)
    }
}

pub fn eq_level_bounded(
    g: &Grammar,
    e: TermRef,
    f: TermRef,
    cfg: GameConfig,
) -> Result<EqLevelResult, EqLevelError> {
    let lts = GrammarLts {
        grammar: g,
        mode: cfg.variable_mode,
    };
    let mut solver = Solver::new(&lts, cfg.memo_budget);
    let v = solver.level(e, f, cfg.cap)?;
    Ok(if v < cfg.cap {
        EqLevelResult::Finite(v)
    } else {
        EqLevelResult::AtLeast(cfg.cap)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// A winning strategy for the distinguishing player. Each node fixes one
/// step on one side; `replies` holds a subtree for every equally labeled
/// step the opponent has. An empty reply list means the opponent is stuck
/// on that action.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Certificate {
    pub left: TermRef,
    pub right: TermRef,
    pub side: Side,
    pub action: StepAction,
    pub target: TermRef,
    pub replies: Vec<(TermRef, Certificate)>,
}

impl Certificate {
    pub fn depth(&self) -> u64 {
        1 + self
            .replies
            .iter()
            .map(|(_, c)| c.depth())
            .max()
            .unwrap_or(0)
    }
}

pub fn spoiler_certificate(
    g: &Grammar,
    e: TermRef,
    f: TermRef,
    cfg: GameConfig,
) -> Result<Certificate, EqLevelError> {
    let level = match eq_level_bounded(g, e, f, cfg)? {
        EqLevelResult::Finite(k) => k,
        EqLevelResult::AtLeast(_) => return Err(EqLevelError::NotFinite),
    };
    let lts = GrammarLts {
        grammar: g,
        mode: cfg.variable_mode,
    };
    let mut solver = Solver::new(&lts, cfg.memo_budget);
    build_certificate(&lts, &mut solver, e, f, level)
}

fn build_certificate<'l>(
    lts: &'l GrammarLts<'_>,
    solver: &mut Solver<'l, GrammarLts<'l>>,
    e: TermRef,
    f: TermRef,
    level: u64,
) -> Result<Certificate, EqLevelError> {
    let group = |s: TermRef| {
        let mut out: BTreeMap<StepAction, BTreeSet<TermRef>> = BTreeMap::new();
        for (a, t) in lts.moves(s) {
            out.entry(a).or_default().insert(t);
        }
        out
    };
    let left = group(e);
    let right = group(f);

    if level == 0 {
        // Some action is available on exactly one side.
        for (side, mine, theirs) in [
            (Side::Left, &left, &right),
            (Side::Right, &right, &left),
        ] {
            for (a, steps) in mine {
                if !theirs.contains_key(a) {
                    return Ok(Certificate {
                        left: e,
                        right: f,
                        side,
                        action: *a,
                        target: *steps.iter().next().unwrap(),
                        replies: Vec::new(),
                    });
                }
            }
        }
        unreachable!("level 0 on distinct states implies differing actions");
    }

    // Find the first (side, action, step) whose best reply sits at
    // level-1; one exists by definition of the level.
    for (side, mine, theirs) in [
        (Side::Left, &left, &right),
        (Side::Right, &right, &left),
    ] {
        for (a, steps) in mine {
            let replies = &theirs[a];
            'step: for &s2 in steps {
                let mut vals = Vec::with_capacity(replies.len());
                for &t2 in replies {
                    let v = solver.level(s2, t2, level)?;
                    if v >= level {
                        continue 'step; // Duplicator survives too long here
                    }
                    vals.push((t2, v));
                }
                if vals.iter().map(|(_, v)| *v).max() != Some(level - 1) {
                    continue;
                }
                let mut children = Vec::with_capacity(vals.len());
                for (t2, v) in vals {
                    let (cl, cr) = match side {
                        Side::Left => (s2, t2),
                        Side::Right => (t2, s2),
                    };
                    children.push((t2, build_certificate(lts, solver, cl, cr, v)?));
                }
                return Ok(Certificate {
                    left: e,
                    right: f,
                    side,
                    action: *a,
                    target: s2,
                    replies: children,
                });
            }
        }
    }
    unreachable!("a step realizing the level always exists");
}

/// Replays a certificate against the bare game rules: the chosen step must
/// exist, the reply list must cover the opponent's equally labeled steps
/// exactly, and every branch must terminate. Returns the round by which
/// the strategy wins. Independent of the solver.
pub fn verify_certificate(
    g: &Grammar,
    e: TermRef,
    f: TermRef,
    cert: &Certificate,
    mode: VarMode,
) -> Result<u64, String> {
    if cert.left != e || cert.right != f {
        return Err("certificate root does not match the queried pair".into());
    }
    let group = |s: TermRef| {
        let mut out: BTreeMap<StepAction, BTreeSet<TermRef>> = BTreeMap::new();
        for (a, t) in g.transitions(s, mode) {
            out.entry(a).or_default().insert(t);
        }
        out
    };
    let (mine, theirs) = match cert.side {
        Side::Left => (group(cert.left), group(cert.right)),
        Side::Right => (group(cert.right), group(cert.left)),
    };
    let Some(steps) = mine.get(&cert.action) else {
        return Err(format!("side has no {:?} step", cert.action));
    };
    if !steps.contains(&cert.target) {
        return Err("claimed step does not exist".into());
    }
    let expected: BTreeSet<TermRef> = theirs
        .get(&cert.action)
        .cloned()
        .unwrap_or_default();
    let listed: BTreeSet<TermRef> = cert.replies.iter().map(|(t, _)| *t).collect();
    if listed != expected || cert.replies.len() != expected.len() {
        return Err("reply list does not cover the opponent's steps exactly".into());
    }
    let mut worst = 0;
    for (reply, child) in &cert.replies {
        let (cl, cr) = match cert.side {
            Side::Left => (cert.target, *reply),
            Side::Right => (*reply, cert.target),
        };
        let d = verify_certificate(g, cl, cr, child, mode)?;
        worst = worst.max(d);
    }
    Ok(1 + worst)
}

/// Stratified refinement over the set of terms reachable from the seeds in
/// at most k steps. Level 0 is one block; level l+1 refines by matching
/// labeled steps up to level-l blocks. For a state at distance d from the
/// seeds the level-l block is meaningful while l <= k-d (deeper neighbors
/// are all present); the seeds themselves are meaningful at every level.
#[derive(Debug)]
pub struct SimPartitions {
    pub states: Vec<TermRef>,
    levels: Vec<HashMap<TermRef, u32>>,
}

impl SimPartitions {
    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn same_class(&self, level: usize, s: TermRef, t: TermRef) -> bool {
        self.levels[level].get(&s) == self.levels[level].get(&t)
    }

    /// Smallest level separating s and t, or None if all computed levels
    /// keep them together.
    pub fn split_level(&self, s: TermRef, t: TermRef) -> Option<u64> {
        (0..self.levels.len()).find(|&l| !self.same_class(l, s, t)).map(|l| l as u64)
    }

    pub fn blocks(&self, level: usize) -> Vec<Vec<TermRef>> {
        let mut by_id: BTreeMap<u32, Vec<TermRef>> = BTreeMap::new();
        for s in &self.states {
            by_id.entry(self.levels[level][s]).or_default().push(*s);
        }
        by_id.into_values().collect()
    }
}

pub fn sim_k_partition(
    g: &Grammar,
    seeds: &[TermRef],
    k: u64,
    mode: VarMode,
    state_budget: u64,
) -> Result<SimPartitions, EqLevelError> {
    let mut space: BTreeSet<TermRef> = seeds.iter().copied().collect();
    let mut frontier = space.clone();
    for _ in 0..k {
        let mut next = BTreeSet::new();
        for s in &frontier {
            for (_, t) in g.transitions(*s, mode) {
                if space.insert(t) {
                    next.insert(t);
                }
            }
        }
        if space.len() as u64 > state_budget {
            return Err(EqLevelError::StateBudget {
                budget: state_budget,
            });
        }
        frontier = next;
    }
    let states: Vec<TermRef> = space.into_iter().collect();

    let mut levels: Vec<HashMap<TermRef, u32>> = Vec::with_capacity(k as usize + 1);
    levels.push(states.iter().map(|s| (*s, 0)).collect());
    for _ in 0..k {
        let prev = levels.last().unwrap();
        // Signature: previous block plus the labeled steps up to previous
        // blocks; targets outside the space map to a sentinel and only
        // affect states whose validity horizon is already past.
        let mut sig_ids: HashMap<(u32, BTreeSet<(StepAction, Option<u32>)>), u32> =
            HashMap::new();
        let mut next = HashMap::with_capacity(states.len());
        for s in &states {
            let sig: BTreeSet<(StepAction, Option<u32>)> = g
                .transitions(*s, mode)
                .into_iter()
                .map(|(a, t)| (a, prev.get(&t).copied()))
                .collect();
            let key = (prev[s], sig);
            let fresh = sig_ids.len() as u32;
            let id = *sig_ids.entry(key).or_insert(fresh);
            next.insert(*s, id);
        }
        levels.push(next);
    }
    Ok(SimPartitions { states, levels })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FiniteStateOutcome {
    Bisimilar,
    NotBisimilar(u64),
    Inconclusive,
}

/// Exact decision when both reachable term sets close off within budget:
/// full refinement to fixpoint on the finite closure. NotBisimilar carries
/// the exact level.
pub fn finite_state_decide(
    g: &Grammar,
    e: TermRef,
    f: TermRef,
    mode: VarMode,
    state_budget: u64,
) -> FiniteStateOutcome {
    let mut space: BTreeSet<TermRef> = [e, f].into_iter().collect();
    let mut frontier = space.clone();
    while !frontier.is_empty() {
        let mut next = BTreeSet::new();
        for s in &frontier {
            for (_, t) in g.transitions(*s, mode) {
                if space.insert(t) {
                    next.insert(t);
                }
            }
        }
        if space.len() as u64 > state_budget {
            return FiniteStateOutcome::Inconclusive;
        }
        frontier = next;
    }
    let states: Vec<TermRef> = space.into_iter().collect();

    // Refinement only splits, never merges, so an unchanged block count is
    // the fixpoint and the fixpoint is full bisimilarity on this space.
    let mut blocks: HashMap<TermRef, u32> = states.iter().map(|s| (*s, 0)).collect();
    let mut n_blocks = 1usize;
    let mut level = 0u64;
    loop {
        let mut sig_ids: HashMap<(u32, BTreeSet<(StepAction, u32)>), u32> = HashMap::new();
        let mut next = HashMap::with_capacity(states.len());
        for s in &states {
            let sig: BTreeSet<(StepAction, u32)> = g
                .transitions(*s, mode)
                .into_iter()
                .map(|(a, t)| (a, blocks[&t]))
                .collect();
            let key = (blocks[s], sig);
            let fresh = sig_ids.len() as u32;
            let id = *sig_ids.entry(key).or_insert(fresh);
            next.insert(*s, id);
        }
        level += 1;
        if next[&e] != next[&f] {
            return FiniteStateOutcome::NotBisimilar(level - 1);
        }
        if sig_ids.len() == n_blocks {
            return FiniteStateOutcome::Bisimilar;
        }
        n_blocks = sig_ids.len();
        blocks = next;
    }
}
