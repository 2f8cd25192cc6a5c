//! Candidate bases for non-equivalence and the bound computation.
//!
//! An (n,s,g)-candidate basis is a set B of non-equivalent ordered term
//! pairs, each using an initial segment of variables and fitting a size
//! budget s_i, together with the derived sequences
//!
//!   e_i = max { level(E,F) | (E,F) in B, size(E,F) <= s_i }
//!   s_{i-1} = 2 s_i + g + e_i (sinc + g),     s_n = s
//!   E_B = n + 1 + sum_i e_i.
//!
//! `candidate_bound` grows B from the pairs sets until no enumerable pair
//! has a finite level, maintaining those equations as a loop invariant.
//! Termination is witnessed by the ordinal rank
//! w^n |P_n| + ... + w^0 |P_0|, which strictly descends at every loop
//! entry, and each entry's control value N is bounded by a fixed growth
//! function of the previous one.

use std::collections::{BTreeMap, BTreeSet};
use std::collections::HashMap;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

use crate::eqlevel::{
    eq_level_bounded, finite_state_decide, EqLevelError, EqLevelResult,
    FiniteStateOutcome, GameConfig,
};
use crate::grammar::{Grammar, VarMode};
use crate::ordinal::Ordinal;
use crate::term::{
    enumerate_terms_budgeted, print_inline, EnumBudget, TermRef,
    DEFAULT_ENUM_BUDGET,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BasisError {
    #[error("pairs set {i} is infeasible: bound {} exceeds budget {budget}",
            bound.as_ref().map(|b| b.to_string()).unwrap_or_else(|| "beyond materialization".into()))]
    PairsInfeasible {
        i: u64,
        bound: Option<BigUint>,
        budget: u64,
    },
    #[error("size budget s_{i} does not fit a machine word")]
    SizeOverflow { i: u64 },
    #[error("exact oracle inconclusive on a pair; raise the state budget")]
    OracleInconclusive { left: TermRef, right: TermRef },
    #[error("threshold {threshold} exceeds the game budget")]
    ThresholdOverflow { threshold: BigUint },
    #[error("game solver failed: {0}")]
    Game(#[from] EqLevelError),
    #[error("term enumeration failed: {0}")]
    Enumeration(#[from] EnumBudget),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateParams {
    pub n: u64,
    pub s: BigUint,
    pub g: BigUint,
    pub c: BigUint,
}

impl CandidateParams {
    pub fn new(n: u64, s: u64, g: u64, c: u64) -> Self {
        CandidateParams {
            n,
            s: BigUint::from(s),
            g: BigUint::from(g),
            c: BigUint::from(c),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Oracle {
    /// Exact levels via the finite-state decision procedure; aborts when
    /// a reachable set does not close off within the budget.
    Exact { state_budget: u64 },
    /// Levels cut off at the threshold c (E_B size + size^2); answers
    /// beyond it count as infinite.
    Effective,
}

/// Guard on |pairs_i|: refuse when the a-priori bound
/// ((|N|+i) s_i^m)^{s_i} s_i^2 exceeds this many pairs.
pub const DEFAULT_PAIRS_BUDGET: u64 = 1_000_000_000_000_000_000;

#[derive(Debug, Clone, Copy)]
pub struct BasisConfig {
    pub oracle: Oracle,
    pub pairs_budget: u64,
    pub enum_budget: u64,
    pub memo_budget: u64,
    /// The update line subtracts the worklists above the selection index
    /// i; this switch subtracts those above the updated index j instead.
    /// Both keep every invariant; the final basis is unaffected.
    pub subtract_above_j: bool,
}

impl Default for BasisConfig {
    fn default() -> Self {
        BasisConfig {
            oracle: Oracle::Exact {
                state_budget: 50_000,
            },
            pairs_budget: DEFAULT_PAIRS_BUDGET,
            enum_budget: DEFAULT_ENUM_BUDGET,
            memo_budget: crate::eqlevel::DEFAULT_MEMO_BUDGET,
            subtract_above_j: false,
        }
    }
}

/// A-priori bound on |pairs_i|: each pair is a graph with at most s_i
/// vertices labeled by one of |N|+i symbols with at most m ordered
/// children each, plus the choice of the two roots. None when the bound
/// itself cannot be materialized.
pub fn pairs_bound(nonterminals: u64, i: u64, s_i: &BigUint, m: u64) -> Option<BigUint> {
    let s = s_i.to_u64()?;
    let labels = BigUint::from(nonterminals + i);
    let vertex_choices = labels * guarded_pow(&BigUint::from(s), m)?;
    let all = guarded_pow(&vertex_choices, s)?;
    Some(all * s * s)
}

/// base^exp, refusing results beyond 2^20 bits.
fn guarded_pow(base: &BigUint, exp: u64) -> Option<BigUint> {
    if base.is_zero() {
        return Some(if exp == 0 { BigUint::one() } else { BigUint::zero() });
    }
    if base.is_one() {
        return Some(BigUint::one());
    }
    if base.bits().saturating_mul(exp) > 1 << 20 {
        return None;
    }
    Some(num_traits::Pow::pow(base, exp))
}

/// All ordered pairs (E,F) with vars(E,F) = {x1..xj} for some j <= i and
/// size(E,F) <= s_i, in canonical order.
pub fn pairs_set(
    g: &Grammar,
    i: u64,
    s_i: &BigUint,
    cfg: &BasisConfig,
) -> Result<Vec<(TermRef, TermRef)>, BasisError> {
    let bound = pairs_bound(g.alphabet().len() as u64, i, s_i, g.alphabet().max_arity() as u64);
    match &bound {
        Some(b) if *b <= BigUint::from(cfg.pairs_budget) => {}
        _ => {
            return Err(BasisError::PairsInfeasible {
                i,
                bound,
                budget: cfg.pairs_budget,
            })
        }
    }
    let size_bound = s_i.to_u64().ok_or(BasisError::SizeOverflow { i })?;
    let store = g.store();
    let terms = enumerate_terms_budgeted(store, i as u32, size_bound, cfg.enum_budget)?;
    let mut out = Vec::new();
    for &e in &terms {
        for &f in &terms {
            let vars = store.vars_pair(e, f);
            let initial_segment = vars.len() as u32 == vars.last().copied().unwrap_or(0);
            if !initial_segment || vars.len() as u64 > i {
                continue;
            }
            if BigUint::from(store.size_pair(e, f)) <= *s_i {
                out.push((e, f));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LevelOrOmega {
    Level(u64),
    Omega,
}

impl std::fmt::Display for LevelOrOmega {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LevelOrOmega::Level(k) => write!(f, "{k}"),
            LevelOrOmega::Omega => write!(f, "omega"),
        }
    }
}

/// The effective level oracle: answers the exact level when it is at most
/// c (E_B size(E,F) + size(E,F)^2), and omega beyond that threshold.
pub fn eq_level_effective(
    g: &Grammar,
    e_b: &BigUint,
    c: &BigUint,
    e: TermRef,
    f: TermRef,
    memo_budget: u64,
) -> Result<LevelOrOmega, BasisError> {
    let size = BigUint::from(g.store().size_pair(e, f));
    let threshold = c * (e_b * &size + &size * &size);
    let cap = threshold
        .to_u64()
        .and_then(|t| t.checked_add(1))
        .ok_or(BasisError::ThresholdOverflow {
            threshold: threshold.clone(),
        })?;
    let cfg = GameConfig::new(cap).with_memo_budget(memo_budget);
    match eq_level_bounded(g, e, f, cfg)? {
        EqLevelResult::Finite(k) => Ok(LevelOrOmega::Level(k)),
        EqLevelResult::AtLeast(_) => Ok(LevelOrOmega::Omega),
    }
}

#[derive(Debug, Clone)]
pub struct CandidateState {
    pub params: CandidateParams,
    pub sinc: u64,
    pub s_arr: Vec<BigUint>,
    pub e_arr: Vec<u64>,
    /// Worklists in canonical pair order.
    pub p_arr: Vec<Vec<(TermRef, TermRef)>>,
    /// The basis with the stored level of each pair.
    pub basis: BTreeMap<(TermRef, TermRef), u64>,
    pub e_b: BigUint,
}

/// Ordinal rank w^n |P_n| + ... + |P_0|.
pub fn rank(state: &CandidateState) -> Ordinal {
    let terms = state
        .p_arr
        .iter()
        .enumerate()
        .map(|(i, p)| (i as u64, BigUint::from(p.len())))
        .collect();
    Ordinal::from_terms(terms).expect("degrees are distinct by construction")
}

/// Control value N = max{n+1, E_B, max_i s_i, max_i |P_i|}.
pub fn control_value(state: &CandidateState) -> BigUint {
    let mut n = BigUint::from(state.params.n + 1);
    n = n.max(state.e_b.clone());
    for s in &state.s_arr {
        n = n.max(s.clone());
    }
    for p in &state.p_arr {
        n = n.max(BigUint::from(p.len()));
    }
    n
}

/// Checks next <= G(prev) for the growth function
/// G(x) = 2^(2^(2n+6) c^2 g^2 |G|^3 x^4). None when c, g or |G| is zero,
/// where G degenerates and the bound is not claimed.
pub fn control_growth_ok(
    prev: &BigUint,
    next: &BigUint,
    n: u64,
    c: &BigUint,
    g_param: &BigUint,
    grammar_size: u64,
) -> Option<bool> {
    if c.is_zero() || g_param.is_zero() || grammar_size == 0 {
        return None;
    }
    let exponent = (BigUint::one() << (2 * n as usize + 6))
        * c
        * c
        * g_param
        * g_param
        * BigUint::from(grammar_size).pow(3)
        * prev.pow(4);
    Some(le_two_pow(next, &exponent))
}

/// x <= 2^k without materializing 2^k.
fn le_two_pow(x: &BigUint, k: &BigUint) -> bool {
    if x.is_zero() {
        return true;
    }
    let b = BigUint::from(x.bits());
    if b <= *k {
        return true;
    }
    if b == k + 1u32 {
        if let Some(k64) = k.to_u64() {
            return *x == BigUint::one() << k64 as usize;
        }
    }
    false
}

/// Recomputes (s_i), (e_i) and E_B from the basis alone, top-down.
pub fn sequences_from_basis(
    g: &Grammar,
    params: &CandidateParams,
    sinc: u64,
    basis: &BTreeMap<(TermRef, TermRef), u64>,
) -> (Vec<BigUint>, Vec<u64>, BigUint) {
    let n = params.n as usize;
    let store = g.store();
    let mut s_arr = vec![BigUint::zero(); n + 1];
    let mut e_arr = vec![0u64; n + 1];
    s_arr[n] = params.s.clone();
    for i in (0..=n).rev() {
        e_arr[i] = basis
            .iter()
            .filter(|((e, f), _)| BigUint::from(store.size_pair(*e, *f)) <= s_arr[i])
            .map(|(_, lvl)| *lvl)
            .max()
            .unwrap_or(0);
        if i > 0 {
            s_arr[i - 1] = 2u32 * &s_arr[i]
                + &params.g
                + BigUint::from(e_arr[i]) * (BigUint::from(sinc) + &params.g);
        }
    }
    let e_b = BigUint::from(params.n + 1)
        + e_arr.iter().map(|e| BigUint::from(*e)).sum::<BigUint>();
    (s_arr, e_arr, e_b)
}

/// Verifies the candidate-basis equations and membership conditions.
pub fn check_state_invariants(g: &Grammar, st: &CandidateState) -> Result<(), String> {
    let store = g.store();
    let (s_arr, e_arr, e_b) =
        sequences_from_basis(g, &st.params, st.sinc, &st.basis);
    if s_arr != st.s_arr {
        return Err(format!("size budgets drifted: {:?} vs {:?}", st.s_arr, s_arr));
    }
    if e_arr != st.e_arr {
        return Err(format!("level maxima drifted: {:?} vs {:?}", st.e_arr, e_arr));
    }
    if e_b != st.e_b {
        return Err(format!("bound drifted: {} vs {}", st.e_b, e_b));
    }
    for (e, f) in st.basis.keys() {
        let vars = store.vars_pair(*e, *f);
        let j = vars.len() as u64;
        if vars.last().copied().unwrap_or(0) as u64 != j {
            return Err("basis pair variables are not an initial segment".into());
        }
        if j > st.params.n {
            return Err("basis pair uses too many variables".into());
        }
        if BigUint::from(store.size_pair(*e, *f)) > st.s_arr[j as usize] {
            return Err("basis pair exceeds its size budget".into());
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TraceEntry {
    pub iter: u64,
    pub rank: Ordinal,
    pub pair: (TermRef, TermRef),
    pub level: u64,
    pub n_value: BigUint,
}

pub fn format_trace_entry(g: &Grammar, t: &TraceEntry) -> String {
    format!(
        "iter={} rank={} pair={}|{} level={} N={}",
        t.iter,
        t.rank,
        print_inline(g.store(), t.pair.0),
        print_inline(g.store(), t.pair.1),
        t.level,
        t.n_value
    )
}

#[derive(Debug)]
pub struct BasisRun {
    pub state: CandidateState,
    pub e_b: BigUint,
    pub trace: Vec<TraceEntry>,
}

enum Probe {
    Finite(u64),
    /// Infinite under an oracle whose answer can never change.
    OmegaFinal,
    /// Infinite at the recorded bound; must be re-asked if E_B grew.
    OmegaAt(BigUint),
}

fn probe_level(
    g: &Grammar,
    cfg: &BasisConfig,
    e_b: &BigUint,
    c: &BigUint,
    cache: &mut HashMap<(TermRef, TermRef), Probe>,
    e: TermRef,
    f: TermRef,
) -> Result<LevelOrOmega, BasisError> {
    match cache.get(&(e, f)) {
        Some(Probe::Finite(k)) => return Ok(LevelOrOmega::Level(*k)),
        Some(Probe::OmegaFinal) => return Ok(LevelOrOmega::Omega),
        Some(Probe::OmegaAt(b)) if *e_b <= *b => return Ok(LevelOrOmega::Omega),
        _ => {}
    }
    let (answer, entry) = match cfg.oracle {
        Oracle::Exact { state_budget } => {
            match finite_state_decide(g, e, f, VarMode::SelfLoop, state_budget) {
                FiniteStateOutcome::Bisimilar => (LevelOrOmega::Omega, Probe::OmegaFinal),
                FiniteStateOutcome::NotBisimilar(k) => {
                    (LevelOrOmega::Level(k), Probe::Finite(k))
                }
                FiniteStateOutcome::Inconclusive => {
                    return Err(BasisError::OracleInconclusive { left: e, right: f })
                }
            }
        }
        Oracle::Effective => {
            match eq_level_effective(g, e_b, c, e, f, cfg.memo_budget)? {
                LevelOrOmega::Level(k) => (LevelOrOmega::Level(k), Probe::Finite(k)),
                LevelOrOmega::Omega => (LevelOrOmega::Omega, Probe::OmegaAt(e_b.clone())),
            }
        }
    };
    cache.insert((e, f), entry);
    Ok(answer)
}

pub fn candidate_bound(
    g: &Grammar,
    params: &CandidateParams,
    cfg: &BasisConfig,
) -> Result<BasisRun, BasisError> {
    let n = params.n as usize;
    let store = g.store();
    let sinc = g
        .rules()
        .iter()
        .map(|r| r.rhs)
        .collect::<BTreeSet<_>>()
        .iter()
        .map(|t| store.ntsize(*t))
        .max()
        .unwrap_or(0);
    let grammar_size = g.size();

    let mut st = CandidateState {
        params: params.clone(),
        sinc,
        s_arr: vec![BigUint::zero(); n + 1],
        e_arr: vec![0; n + 1],
        p_arr: vec![Vec::new(); n + 1],
        basis: BTreeMap::new(),
        e_b: BigUint::from(params.n + 1),
    };
    st.s_arr[n] = params.s.clone();
    for i in (0..n).rev() {
        st.s_arr[i] = 2u32 * &st.s_arr[i + 1] + &params.g;
    }
    // P_i = pairs_i minus the worklists above, top-down.
    let mut above: BTreeSet<(TermRef, TermRef)> = BTreeSet::new();
    for i in (0..=n).rev() {
        let pairs = pairs_set(g, i as u64, &st.s_arr[i], cfg)?;
        st.p_arr[i] = pairs.into_iter().filter(|p| !above.contains(p)).collect();
        above.extend(st.p_arr[i].iter().copied());
    }

    let mut trace = Vec::new();
    let mut cache: HashMap<(TermRef, TermRef), Probe> = HashMap::new();
    let mut prev_rank: Option<Ordinal> = None;
    let mut prev_n: Option<BigUint> = None;
    let mut iter = 0u64;

    loop {
        debug_assert_eq!(check_state_invariants(g, &st), Ok(()));

        // Highest worklist first, pairs in canonical order.
        let mut selected = None;
        'scan: for i in (0..=n).rev() {
            for (pos, &(e, f)) in st.p_arr[i].iter().enumerate() {
                if let LevelOrOmega::Level(k) =
                    probe_level(g, cfg, &st.e_b, &params.c, &mut cache, e, f)?
                {
                    selected = Some((i, pos, e, f, k));
                    break 'scan;
                }
            }
        }
        let Some((i, pos, e, f, level)) = selected else {
            break;
        };

        let entry_rank = rank(&st);
        let n_value = control_value(&st);
        if let Some(prev) = &prev_rank {
            assert!(
                entry_rank < *prev,
                "rank failed to descend: {prev} then {entry_rank}"
            );
        }
        if let Some(prev) = &prev_n {
            if let Some(ok) = control_growth_ok(
                prev,
                &n_value,
                params.n,
                &params.c,
                &params.g,
                grammar_size,
            ) {
                assert!(ok, "control value {n_value} outgrew its bound from {prev}");
            }
        }
        prev_rank = Some(entry_rank.clone());
        prev_n = Some(n_value.clone());
        trace.push(TraceEntry {
            iter,
            rank: entry_rank,
            pair: (e, f),
            level,
            n_value,
        });
        iter += 1;

        st.p_arr[i].remove(pos);
        st.basis.insert((e, f), level);
        if level > st.e_arr[i] {
            st.e_arr[i] = level;
            for j in (0..i).rev() {
                st.s_arr[j] = 2u32 * &st.s_arr[j + 1]
                    + &params.g
                    + BigUint::from(st.e_arr[j + 1])
                        * (BigUint::from(sinc) + &params.g);
                st.e_arr[j] = st
                    .basis
                    .iter()
                    .filter(|((a, b), _)| {
                        BigUint::from(store.size_pair(*a, *b)) <= st.s_arr[j]
                    })
                    .map(|(_, lvl)| *lvl)
                    .max()
                    .unwrap_or(0);
                let cut_from = if cfg.subtract_above_j { j } else { i };
                let mut cut: BTreeSet<(TermRef, TermRef)> =
                    st.basis.keys().copied().collect();
                for k in cut_from + 1..=n {
                    cut.extend(st.p_arr[k].iter().copied());
                }
                st.p_arr[j] = pairs_set(g, j as u64, &st.s_arr[j], cfg)?
                    .into_iter()
                    .filter(|p| !cut.contains(p))
                    .collect();
            }
            st.e_b = BigUint::from(params.n + 1)
                + st.e_arr.iter().map(|e| BigUint::from(*e)).sum::<BigUint>();
        }
    }

    debug_assert_eq!(check_state_invariants(g, &st), Ok(()));
    Ok(BasisRun {
        e_b: st.e_b.clone(),
        state: st,
        trace,
    })
}

/// Fullness: every enumerable pair outside the basis is bisimilar,
/// checked with the exact oracle.
pub fn is_full(
    g: &Grammar,
    st: &CandidateState,
    state_budget: u64,
    cfg: &BasisConfig,
) -> Result<bool, BasisError> {
    for i in 0..=st.params.n {
        for (e, f) in pairs_set(g, i, &st.s_arr[i as usize], cfg)? {
            if st.basis.contains_key(&(e, f)) {
                continue;
            }
            match finite_state_decide(g, e, f, VarMode::SelfLoop, state_budget) {
                FiniteStateOutcome::Bisimilar => {}
                FiniteStateOutcome::NotBisimilar(_) => return Ok(false),
                FiniteStateOutcome::Inconclusive => {
                    return Err(BasisError::OracleInconclusive { left: e, right: f })
                }
            }
        }
    }
    Ok(true)
}

/// Completeness: every enumerable pair outside the basis has level above
/// the threshold c (E_B size + size^2).
pub fn is_complete(
    g: &Grammar,
    st: &CandidateState,
    cfg: &BasisConfig,
) -> Result<bool, BasisError> {
    for i in 0..=st.params.n {
        for (e, f) in pairs_set(g, i, &st.s_arr[i as usize], cfg)? {
            if st.basis.contains_key(&(e, f)) {
                continue;
            }
            match eq_level_effective(g, &st.e_b, &st.params.c, e, f, cfg.memo_budget)? {
                LevelOrOmega::Omega => {}
                LevelOrOmega::Level(_) => return Ok(false),
            }
        }
    }
    Ok(true)
}
