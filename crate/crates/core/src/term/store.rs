//! Canonical interning store for regular terms.
//!
//! Invariant: two `TermRef`s from the same store are equal iff their
//! unfoldings are equal regular terms. Acyclic nodes are hash-consed on
//! (label, children); strongly connected (cyclic) components are first
//! minimized locally by partition refinement, then deduplicated against the
//! store through a canonical depth-first signature. A cyclic node denotes an
//! infinite term and an acyclic node a finite one, so the two mechanisms can
//! never disagree about a term.

use std::collections::hash_map::Entry;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::RwLock;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TermError {
    #[error("symbol {0:?} already declared")]
    DuplicateSymbol(String),
    #[error("invalid symbol name {0:?}: {1}")]
    BadSymbolName(String, &'static str),
    #[error("unknown symbol {0:?}")]
    UnknownSymbol(String),
    #[error("symbol {name} has arity {arity} but got {given} arguments")]
    ArityMismatch {
        name: String,
        arity: usize,
        given: usize,
    },
    #[error("variable indices start at 1")]
    VarIndexZero,
    #[error("recursive binding resolves to itself with no constructor in between")]
    EmptyRecursion,
    #[error("term syntax error at {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
}

/// Index into a [`RankedAlphabet`].
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct SymbolId(pub u32);

/// Opaque handle to a canonical stored term.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct TermRef(u32);

impl TermRef {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum Label {
    /// Variable x_i, i >= 1.
    Var(u32),
    App(SymbolId),
}

const RESERVED: &[&str] = &["rec", "ref", "let", "in"];

fn symbol_name_ok(name: &str) -> Result<(), TermError> {
    let bad = |m| Err(TermError::BadSymbolName(name.to_string(), m));
    if name.is_empty() {
        return bad("empty");
    }
    if RESERVED.contains(&name) {
        return bad("reserved word");
    }
    let mut rest = name.chars();
    let first = rest.next().unwrap();
    if name.starts_with('[') {
        // Bracketed names come from pushdown translations: [q] or [q.Y].
        if !name.ends_with(']') || name.len() < 3 {
            return bad("unterminated bracket name");
        }
        let inner = &name[1..name.len() - 1];
        if inner.contains(['[', ']']) || inner.split('.').count() > 2 {
            return bad("bracket names hold one optional dot");
        }
        if !inner
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '\'' || c == '.')
        {
            return bad("bracket names are alphanumeric with . _ '");
        }
        return Ok(());
    }
    if !(first.is_ascii_alphabetic() || first == '_') {
        return bad("must start with a letter or underscore");
    }
    if !name
        .chars()
        .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '\'')
    {
        return bad("alphanumeric, underscore and prime only");
    }
    // x<digits> is variable syntax.
    if first == 'x' && name.len() > 1 && rest.all(|c| c.is_ascii_digit()) {
        return bad("collides with variable syntax");
    }
    Ok(())
}

#[derive(Clone, Debug, Default)]
pub struct RankedAlphabet {
    symbols: Vec<(String, usize)>,
    by_name: HashMap<String, SymbolId>,
}

impl RankedAlphabet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, arity: usize) -> Result<SymbolId, TermError> {
        symbol_name_ok(name)?;
        if self.by_name.contains_key(name) {
            return Err(TermError::DuplicateSymbol(name.to_string()));
        }
        let id = SymbolId(self.symbols.len() as u32);
        self.symbols.push((name.to_string(), arity));
        self.by_name.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn lookup(&self, name: &str) -> Option<SymbolId> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, id: SymbolId) -> &str {
        &self.symbols[id.0 as usize].0
    }

    pub fn arity(&self, id: SymbolId) -> usize {
        self.symbols[id.0 as usize].1
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = SymbolId> + '_ {
        (0..self.symbols.len() as u32).map(SymbolId)
    }

    pub fn max_arity(&self) -> usize {
        self.symbols.iter().map(|(_, a)| *a).max().unwrap_or(0)
    }
}

/// Finite-support substitution; identity outside its map.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Substitution {
    map: BTreeMap<u32, TermRef>,
}

impl Substitution {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(&mut self, var: u32, t: TermRef) {
        assert!(var >= 1, "variable indices start at 1");
        self.map.insert(var, t);
    }

    pub fn get(&self, var: u32) -> Option<TermRef> {
        self.map.get(&var).copied()
    }

    pub fn is_identity(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, TermRef)> + '_ {
        self.map.iter().map(|(v, t)| (*v, *t))
    }

    pub fn support(&self) -> impl Iterator<Item = u32> + '_ {
        self.map.keys().copied()
    }
}

/// Mutable graph builder for interning; may contain cycles and references
/// to terms already in a store.
#[derive(Clone, Debug, Default)]
pub struct RawGraph {
    nodes: Vec<RawNode>,
}

#[derive(Clone, Debug)]
pub enum RawNode {
    Var(u32),
    App(SymbolId, Vec<RawId>),
    Existing(TermRef),
    /// Placeholder filled in later (recursive bindings); `None` until set.
    Fwd(Option<RawId>),
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct RawId(u32);

impl RawGraph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, n: RawNode) -> RawId {
        self.nodes.push(n);
        RawId(self.nodes.len() as u32 - 1)
    }

    pub fn add_var(&mut self, index: u32) -> RawId {
        self.push(RawNode::Var(index))
    }

    pub fn add_app(&mut self, sym: SymbolId, children: Vec<RawId>) -> RawId {
        self.push(RawNode::App(sym, children))
    }

    pub fn add_existing(&mut self, t: TermRef) -> RawId {
        self.push(RawNode::Existing(t))
    }

    pub fn add_hole(&mut self) -> RawId {
        self.push(RawNode::Fwd(None))
    }

    pub fn set_hole(&mut self, hole: RawId, target: RawId) {
        match &mut self.nodes[hole.0 as usize] {
            RawNode::Fwd(slot @ None) => *slot = Some(target),
            _ => panic!("set_hole on a non-hole or already-set node"),
        }
    }

    /// Follows forwarding chains; detects unset holes and pure-forward cycles.
    fn resolve(&self, mut id: RawId) -> Result<RawId, TermError> {
        let mut hops = 0usize;
        loop {
            match &self.nodes[id.0 as usize] {
                RawNode::Fwd(Some(next)) => {
                    id = *next;
                    hops += 1;
                    if hops > self.nodes.len() {
                        return Err(TermError::EmptyRecursion);
                    }
                }
                RawNode::Fwd(None) => return Err(TermError::EmptyRecursion),
                _ => return Ok(id),
            }
        }
    }
}

struct Node {
    label: Label,
    children: Vec<TermRef>,
    finite: bool,
    /// None iff not finite.
    height: Option<u64>,
}

#[derive(Default)]
struct StoreInner {
    nodes: Vec<Node>,
    node_table: HashMap<(Label, Vec<TermRef>), TermRef>,
    sig_table: HashMap<Vec<SigItem>, TermRef>,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
enum SigItem {
    Sym(SymbolId),
    Ext(TermRef),
    Int(u32),
}

/// Store of canonical term graphs over one fixed alphabet.
///
/// All methods take `&self`; interning serializes on an internal write
/// lock so concurrent interning of equal terms yields one canonical ref.
pub struct TermStore {
    alphabet: RankedAlphabet,
    inner: RwLock<StoreInner>,
}

impl TermStore {
    pub fn new(alphabet: RankedAlphabet) -> Self {
        TermStore {
            alphabet,
            inner: RwLock::new(StoreInner::default()),
        }
    }

    pub fn alphabet(&self) -> &RankedAlphabet {
        &self.alphabet
    }

    pub fn var(&self, index: u32) -> Result<TermRef, TermError> {
        if index == 0 {
            return Err(TermError::VarIndexZero);
        }
        let mut inner = self.inner.write().unwrap();
        Ok(alloc_simple(&mut inner, Label::Var(index), Vec::new()))
    }

    pub fn app(&self, sym: SymbolId, children: &[TermRef]) -> Result<TermRef, TermError> {
        let arity = self.alphabet.arity(sym);
        if arity != children.len() {
            return Err(TermError::ArityMismatch {
                name: self.alphabet.name(sym).to_string(),
                arity,
                given: children.len(),
            });
        }
        let mut inner = self.inner.write().unwrap();
        Ok(alloc_simple(&mut inner, Label::App(sym), children.to_vec()))
    }

    pub fn label(&self, t: TermRef) -> Label {
        self.inner.read().unwrap().nodes[t.index()].label
    }

    pub fn children(&self, t: TermRef) -> Vec<TermRef> {
        self.inner.read().unwrap().nodes[t.index()].children.clone()
    }

    pub fn is_finite(&self, t: TermRef) -> bool {
        self.inner.read().unwrap().nodes[t.index()].finite
    }

    /// Height of a finite term: edges on the longest root-to-leaf path.
    pub fn height(&self, t: TermRef) -> Option<u64> {
        self.inner.read().unwrap().nodes[t.index()].height
    }

    /// Distinct subterms in depth-first preorder (root first).
    pub fn subterms(&self, t: TermRef) -> Vec<TermRef> {
        let inner = self.inner.read().unwrap();
        reachable(&inner, &[t])
    }

    pub fn subterms_pair(&self, a: TermRef, b: TermRef) -> Vec<TermRef> {
        let inner = self.inner.read().unwrap();
        reachable(&inner, &[a, b])
    }

    /// Number of distinct subterms.
    pub fn size(&self, t: TermRef) -> u64 {
        let inner = self.inner.read().unwrap();
        reachable(&inner, &[t]).len() as u64
    }

    /// Distinct subterms of the pair, counting shared ones once.
    pub fn size_pair(&self, a: TermRef, b: TermRef) -> u64 {
        let inner = self.inner.read().unwrap();
        reachable(&inner, &[a, b]).len() as u64
    }

    /// Distinct subterms whose root is a nonterminal (non-variable).
    pub fn ntsize(&self, t: TermRef) -> u64 {
        let inner = self.inner.read().unwrap();
        reachable(&inner, &[t])
            .iter()
            .filter(|r| matches!(inner.nodes[r.index()].label, Label::App(_)))
            .count() as u64
    }

    pub fn vars(&self, t: TermRef) -> BTreeSet<u32> {
        self.vars_pair_impl(&[t])
    }

    pub fn vars_pair(&self, a: TermRef, b: TermRef) -> BTreeSet<u32> {
        self.vars_pair_impl(&[a, b])
    }

    fn vars_pair_impl(&self, roots: &[TermRef]) -> BTreeSet<u32> {
        let inner = self.inner.read().unwrap();
        reachable(&inner, roots)
            .iter()
            .filter_map(|r| match inner.nodes[r.index()].label {
                Label::Var(i) => Some(i),
                Label::App(_) => None,
            })
            .collect()
    }

    /// Refs are canonical, so equality of terms is equality of refs.
    pub fn term_equal(&self, a: TermRef, b: TermRef) -> bool {
        a == b
    }

    /// Defensive re-canonicalization; asserts idempotence in debug builds.
    pub fn minimize(&self, t: TermRef) -> TermRef {
        let (raw, root) = self.to_raw(t);
        let out = self
            .intern(&raw, root)
            .expect("re-interning a stored term cannot fail");
        debug_assert_eq!(out, t, "stored term was not canonical");
        out
    }

    /// Copies the reachable subgraph of `t` into a fresh raw graph.
    pub fn to_raw(&self, t: TermRef) -> (RawGraph, RawId) {
        let inner = self.inner.read().unwrap();
        let order = reachable(&inner, &[t]);
        let mut raw = RawGraph::new();
        let mut ids: HashMap<TermRef, RawId> = HashMap::new();
        for r in &order {
            let id = match inner.nodes[r.index()].label {
                Label::Var(i) => raw.add_var(i),
                Label::App(s) => raw.add_app(s, Vec::new()),
            };
            ids.insert(*r, id);
        }
        for r in &order {
            if let Label::App(_) = inner.nodes[r.index()].label {
                let kids: Vec<RawId> = inner.nodes[r.index()]
                    .children
                    .iter()
                    .map(|c| ids[c])
                    .collect();
                let RawNode::App(_, slots) = &mut raw.nodes[ids[r].0 as usize] else {
                    unreachable!()
                };
                *slots = kids;
            }
        }
        (raw, ids[&t])
    }

    /// Root substitution of a non-variable term: t = A(x1..xk)sigma.
    /// Identity bindings are dropped so equal substitutions compare equal.
    pub fn root_substitution(&self, t: TermRef) -> Option<(SymbolId, Substitution)> {
        match self.label(t) {
            Label::Var(_) => None,
            Label::App(sym) => {
                let mut sigma = Substitution::new();
                for (i, c) in self.children(t).iter().enumerate() {
                    let var_index = (i + 1) as u32;
                    if self.label(*c) != Label::Var(var_index) {
                        sigma.bind(var_index, *c);
                    }
                }
                Some((sym, sigma))
            }
        }
    }

    pub fn apply_subst(&self, t: TermRef, sigma: &Substitution) -> TermRef {
        if sigma.is_identity() {
            return t;
        }
        let (raw, root) = {
            let inner = self.inner.read().unwrap();
            let order = reachable(&inner, &[t]);
            let mut raw = RawGraph::new();
            let mut ids: HashMap<TermRef, RawId> = HashMap::new();
            for r in &order {
                let id = match inner.nodes[r.index()].label {
                    Label::Var(i) => match sigma.get(i) {
                        Some(rep) => raw.add_existing(rep),
                        None => raw.add_var(i),
                    },
                    Label::App(s) => raw.add_app(s, Vec::new()),
                };
                ids.insert(*r, id);
            }
            for r in &order {
                if let Label::App(_) = inner.nodes[r.index()].label {
                    let kids: Vec<RawId> = inner.nodes[r.index()]
                        .children
                        .iter()
                        .map(|c| ids[c])
                        .collect();
                    let RawNode::App(_, slots) = &mut raw.nodes[ids[r].0 as usize] else {
                        unreachable!()
                    };
                    *slots = kids;
                }
            }
            (raw, ids[&t])
        };
        self.intern(&raw, root)
            .expect("substitution preserves well-formedness")
    }

    /// Interns the term rooted at `root`, canonicalizing on the way in.
    pub fn intern(&self, raw: &RawGraph, root: RawId) -> Result<TermRef, TermError> {
        let mut inner = self.inner.write().unwrap();
        intern_locked(&mut inner, &self.alphabet, raw, root)
    }

    /// Test oracle: compares unfoldings to the given depth, memoized.
    pub fn unfold_equal(&self, a: TermRef, b: TermRef, depth: u64) -> bool {
        let inner = self.inner.read().unwrap();
        let mut memo: HashMap<(TermRef, TermRef, u64), bool> = HashMap::new();
        fn go(
            inner: &StoreInner,
            memo: &mut HashMap<(TermRef, TermRef, u64), bool>,
            a: TermRef,
            b: TermRef,
            depth: u64,
        ) -> bool {
            let na = &inner.nodes[a.index()];
            let nb = &inner.nodes[b.index()];
            if na.label != nb.label {
                return false;
            }
            if depth == 0 || na.children.is_empty() {
                return true;
            }
            let key = (a.min(b), a.max(b), depth);
            if let Some(&v) = memo.get(&key) {
                return v;
            }
            let v = na
                .children
                .iter()
                .zip(nb.children.iter())
                .all(|(x, y)| go(inner, memo, *x, *y, depth - 1));
            memo.insert(key, v);
            v
        }
        go(&inner, &mut memo, a, b, depth)
    }

    /// Total node count (diagnostics only).
    pub fn node_count(&self) -> usize {
        self.inner.read().unwrap().nodes.len()
    }
}

/// Reachable refs in depth-first preorder (deterministic by child order).
fn reachable(inner: &StoreInner, roots: &[TermRef]) -> Vec<TermRef> {
    let mut seen: BTreeSet<TermRef> = BTreeSet::new();
    let mut order = Vec::new();
    let mut stack: Vec<TermRef> = roots.iter().rev().copied().collect();
    while let Some(t) = stack.pop() {
        if !seen.insert(t) {
            continue;
        }
        order.push(t);
        for c in inner.nodes[t.index()].children.iter().rev() {
            stack.push(*c);
        }
    }
    order
}

/// Hash-consing allocation for a node whose children are already canonical.
fn alloc_simple(inner: &mut StoreInner, label: Label, children: Vec<TermRef>) -> TermRef {
    let key = (label, children);
    if let Some(&r) = inner.node_table.get(&key) {
        return r;
    }
    let (label, children) = (key.0, key.1);
    let finite = children.iter().all(|c| inner.nodes[c.index()].finite);
    let height = if finite {
        Some(
            children
                .iter()
                .map(|c| inner.nodes[c.index()].height.unwrap() + 1)
                .max()
                .unwrap_or(0),
        )
    } else {
        None
    };
    let r = TermRef(inner.nodes.len() as u32);
    inner.nodes.push(Node {
        label,
        children: children.clone(),
        finite,
        height,
    });
    inner.node_table.insert((label, children), r);
    r
}

/// Interning works on the union of the raw graph and the stored subgraph
/// reachable from its `Existing` refs. Joint partition refinement computes
/// the minimal quotient (the subterm graph of the interned term), which is
/// what makes the cyclic signatures below independent of how the input
/// happened to be split between new and stored nodes: a guarded equation
/// like x = C(t, x) with t = C(t, t) must resolve x to t.
fn intern_locked(
    inner: &mut StoreInner,
    alphabet: &RankedAlphabet,
    raw: &RawGraph,
    root: RawId,
) -> Result<TermRef, TermError> {
    let root = raw.resolve(root)?;

    // Combined node space: raw nodes first, stored nodes pulled in on demand.
    let mut labels: Vec<Label> = Vec::new();
    let mut children: Vec<Vec<usize>> = Vec::new();
    let mut origin: Vec<Option<TermRef>> = Vec::new();
    let mut raw_idx: HashMap<RawId, usize> = HashMap::new();
    let mut stored_idx: HashMap<TermRef, usize> = HashMap::new();

    enum Pending {
        Raw(RawId),
        Stored(TermRef),
    }
    let mut todo: Vec<Pending> = Vec::new();

    // Allocates a combined slot for a node (children filled by its visit).
    fn slot(
        labels: &mut Vec<Label>,
        children: &mut Vec<Vec<usize>>,
        origin: &mut Vec<Option<TermRef>>,
        label: Label,
        from: Option<TermRef>,
    ) -> usize {
        labels.push(label);
        children.push(Vec::new());
        origin.push(from);
        labels.len() - 1
    }

    // Pass 1: discover all reachable nodes, assigning combined indices.
    let ensure_stored = |t: TermRef,
                             labels: &mut Vec<Label>,
                             children: &mut Vec<Vec<usize>>,
                             origin: &mut Vec<Option<TermRef>>,
                             stored_idx: &mut HashMap<TermRef, usize>,
                             todo: &mut Vec<Pending>|
     -> usize {
        if let Some(&i) = stored_idx.get(&t) {
            return i;
        }
        let i = slot(labels, children, origin, inner.nodes[t.index()].label, Some(t));
        stored_idx.insert(t, i);
        todo.push(Pending::Stored(t));
        i
    };
    let ensure_raw = |id: RawId,
                          labels: &mut Vec<Label>,
                          children: &mut Vec<Vec<usize>>,
                          origin: &mut Vec<Option<TermRef>>,
                          raw_idx: &mut HashMap<RawId, usize>,
                          stored_idx: &mut HashMap<TermRef, usize>,
                          todo: &mut Vec<Pending>|
     -> Result<usize, TermError> {
        let id = raw.resolve(id)?;
        if let RawNode::Existing(t) = &raw.nodes[id.0 as usize] {
            return Ok(ensure_stored(*t, labels, children, origin, stored_idx, todo));
        }
        if let Some(&i) = raw_idx.get(&id) {
            return Ok(i);
        }
        let label = match &raw.nodes[id.0 as usize] {
            RawNode::Var(i) => {
                if *i == 0 {
                    return Err(TermError::VarIndexZero);
                }
                Label::Var(*i)
            }
            RawNode::App(s, kids) => {
                let arity = alphabet.arity(*s);
                if kids.len() != arity {
                    return Err(TermError::ArityMismatch {
                        name: alphabet.name(*s).to_string(),
                        arity,
                        given: kids.len(),
                    });
                }
                Label::App(*s)
            }
            _ => unreachable!("resolved"),
        };
        let i = slot(labels, children, origin, label, None);
        raw_idx.insert(id, i);
        todo.push(Pending::Raw(id));
        Ok(i)
    };

    let root_combined = ensure_raw(
        root,
        &mut labels,
        &mut children,
        &mut origin,
        &mut raw_idx,
        &mut stored_idx,
        &mut todo,
    )?;
    while let Some(p) = todo.pop() {
        match p {
            Pending::Raw(id) => {
                let me = raw_idx[&id];
                if let RawNode::App(_, kids) = &raw.nodes[id.0 as usize] {
                    let mut cs = Vec::with_capacity(kids.len());
                    for k in kids {
                        cs.push(ensure_raw(
                            *k,
                            &mut labels,
                            &mut children,
                            &mut origin,
                            &mut raw_idx,
                            &mut stored_idx,
                            &mut todo,
                        )?);
                    }
                    children[me] = cs;
                }
            }
            Pending::Stored(t) => {
                let me = stored_idx[&t];
                let kids = inner.nodes[t.index()].children.clone();
                let cs: Vec<usize> = kids
                    .into_iter()
                    .map(|c| {
                        ensure_stored(c, &mut labels, &mut children, &mut origin, &mut stored_idx, &mut todo)
                    })
                    .collect();
                children[me] = cs;
            }
        }
    }
    let total = labels.len();

    // Pass 2: refine to the coarsest partition where blocks agree on label
    // and on child blocks pointwise. Fixpoint blocks = distinct subterms.
    let mut block: Vec<u32> = {
        let mut first: HashMap<Label, u32> = HashMap::new();
        labels
            .iter()
            .map(|l| {
                let n = first.len() as u32;
                *first.entry(*l).or_insert(n)
            })
            .collect()
    };
    loop {
        let mut ids: HashMap<(u32, Vec<u32>), u32> = HashMap::new();
        let mut next: Vec<u32> = Vec::with_capacity(total);
        for i in 0..total {
            let key = (block[i], children[i].iter().map(|&c| block[c]).collect());
            let n = ids.len() as u32;
            next.push(*ids.entry(key).or_insert(n));
        }
        if next == block {
            break;
        }
        block = next;
    }
    let block_count = block.iter().map(|b| b + 1).max().unwrap_or(0) as usize;

    // Pass 3: blocks holding a stored node resolve to it. Canonicality of
    // the store means a block never holds two distinct stored refs.
    let mut stored_rep: Vec<Option<TermRef>> = vec![None; block_count];
    for i in 0..total {
        if let Some(t) = origin[i] {
            match stored_rep[block[i] as usize] {
                None => stored_rep[block[i] as usize] = Some(t),
                Some(prev) => assert_eq!(
                    prev, t,
                    "store holds two refs for one term; canonicality broken"
                ),
            }
        }
    }

    // Quotient graph (deterministic representatives: first node of block).
    let mut rep = vec![usize::MAX; block_count];
    for (i, b) in block.iter().enumerate() {
        if rep[*b as usize] == usize::MAX {
            rep[*b as usize] = i;
        }
    }
    let blabel: Vec<Label> = rep.iter().map(|&i| labels[i]).collect();
    let bkids: Vec<Vec<usize>> = rep
        .iter()
        .map(|&i| children[i].iter().map(|&c| block[c] as usize).collect())
        .collect();

    // Pass 4: allocate new blocks bottom-up. Edges between unresolved blocks
    // only; resolved blocks act as leaves.
    let mut resolved: Vec<Option<TermRef>> = stored_rep;
    let pending_edges: Vec<Vec<usize>> = (0..block_count)
        .map(|b| {
            if resolved[b].is_some() {
                Vec::new()
            } else {
                bkids[b]
                    .iter()
                    .copied()
                    .filter(|&c| resolved[c].is_none())
                    .collect()
            }
        })
        .collect();
    let comps = tarjan(block_count, &pending_edges);
    for comp in comps {
        if resolved[comp[0]].is_some() {
            continue;
        }
        let cyclic = comp.len() > 1 || bkids[comp[0]].contains(&comp[0]);
        if !cyclic {
            let b = comp[0];
            let kids: Vec<TermRef> = bkids[b]
                .iter()
                .map(|&c| resolved[c].expect("children processed first"))
                .collect();
            resolved[b] = Some(alloc_simple(inner, blabel[b], kids));
        } else {
            intern_new_component(inner, &blabel, &bkids, &comp, &mut resolved);
        }
    }

    Ok(resolved[block[root_combined] as usize].expect("root resolved"))
}

/// Canonical depth-first signature of a cyclic block within its component.
/// Children outside the component appear as their canonical refs, so equal
/// terms produce equal signatures regardless of input decomposition.
fn component_sig(
    blabel: &[Label],
    bkids: &[Vec<usize>],
    in_comp: &HashMap<usize, ()>,
    resolved: &[Option<TermRef>],
    start: usize,
) -> Vec<SigItem> {
    enum Visit {
        Emit(usize),
        Backref(u32),
        Ext(TermRef),
    }
    let mut out = Vec::new();
    let mut index: HashMap<usize, u32> = HashMap::new();
    index.insert(start, 0);
    let mut stack = vec![Visit::Emit(start)];
    while let Some(v) = stack.pop() {
        match v {
            Visit::Emit(b) => {
                match blabel[b] {
                    Label::App(s) => out.push(SigItem::Sym(s)),
                    Label::Var(_) => unreachable!("variables have no cycles"),
                }
                // Children pushed in reverse so they emit left to right.
                for &c in bkids[b].iter().rev() {
                    if in_comp.contains_key(&c) {
                        match index.get(&c) {
                            Some(&i) => stack.push(Visit::Backref(i)),
                            None => {
                                let i = index.len() as u32;
                                index.insert(c, i);
                                stack.push(Visit::Emit(c));
                                stack.push(Visit::Backref(i));
                            }
                        }
                    } else {
                        stack.push(Visit::Ext(resolved[c].expect("below component")));
                    }
                }
            }
            Visit::Backref(i) => out.push(SigItem::Int(i)),
            Visit::Ext(r) => out.push(SigItem::Ext(r)),
        }
    }
    out
}

fn intern_new_component(
    inner: &mut StoreInner,
    blabel: &[Label],
    bkids: &[Vec<usize>],
    comp: &[usize],
    resolved: &mut Vec<Option<TermRef>>,
) {
    let in_comp: HashMap<usize, ()> = comp.iter().map(|&b| (b, ())).collect();
    let sigs: Vec<Vec<SigItem>> = comp
        .iter()
        .map(|&b| component_sig(blabel, bkids, &in_comp, resolved, b))
        .collect();

    if let Some(&found) = inner.sig_table.get(&sigs[0]) {
        // A cyclic term is stored together with its whole component, so
        // either every block is known or none is.
        for (i, &b) in comp.iter().enumerate() {
            let r = if i == 0 {
                found
            } else {
                *inner
                    .sig_table
                    .get(&sigs[i])
                    .expect("cyclic components are stored atomically")
            };
            resolved[b] = Some(r);
        }
        return;
    }

    let base = inner.nodes.len() as u32;
    for (i, &b) in comp.iter().enumerate() {
        resolved[b] = Some(TermRef(base + i as u32));
    }
    for (i, &b) in comp.iter().enumerate() {
        let children: Vec<TermRef> = bkids[b].iter().map(|&c| resolved[c].unwrap()).collect();
        let label = blabel[b];
        inner.nodes.push(Node {
            label,
            children: children.clone(),
            finite: false,
            height: None,
        });
        let prev = inner.node_table.insert((label, children), TermRef(base + i as u32));
        debug_assert!(prev.is_none(), "new cyclic node collided in node table");
        match inner.sig_table.entry(sigs[i].clone()) {
            Entry::Vacant(e) => {
                e.insert(TermRef(base + i as u32));
            }
            Entry::Occupied(_) => unreachable!("signature lookup above was negative"),
        }
    }
}

/// Iterative Tarjan over indices 0..n; components come out children-first
/// (every edge leaving a component points into an earlier one).
fn tarjan(n: usize, edges: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<usize> = Vec::new();
    let mut next_index = 0usize;
    let mut out: Vec<Vec<usize>> = Vec::new();

    // frame: (node, next child position)
    let mut call: Vec<(usize, usize)> = Vec::new();
    for start in 0..n {
        if index[start] != usize::MAX {
            continue;
        }
        call.push((start, 0));
        index[start] = next_index;
        low[start] = next_index;
        next_index += 1;
        stack.push(start);
        on_stack[start] = true;
        while let Some(&mut (v, ref mut ci)) = call.last_mut() {
            if *ci < edges[v].len() {
                let w = edges[v][*ci];
                *ci += 1;
                if index[w] == usize::MAX {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().unwrap();
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comp.sort_unstable();
                    out.push(comp);
                }
            }
        }
    }
    out
}
