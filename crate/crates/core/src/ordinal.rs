//! Ordinals up to w^w in Cantor normal form, with the norm, fundamental
//! sequences, Hardy/Cichon hierarchy evaluation, a brute-force oracle for
//! the maximal length of controlled descending sequences, and the symbolic
//! bound report assembled from a grammar's constants.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OrdinalError {
    #[error("ordinal syntax error: {0}")]
    Syntax(String),
    #[error("w^w has no Cantor normal form norm")]
    NormOfTop,
    #[error("fundamental sequence undefined: {0} is not a limit ordinal")]
    NotLimit(String),
    #[error("fundamental sequence of w^w at this argument exceeds the supported degree range")]
    DegreeOverflow,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("budget exhausted after {applications} applications of {h_name}")]
pub struct BudgetExceeded {
    pub h_name: String,
    pub applications: u64,
}

/// Ordinal at or below w^w. `Cnf` terms are (degree, coefficient) pairs in
/// strictly descending degree order with nonzero coefficients; the empty
/// list is 0.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum Ordinal {
    OmegaOmega,
    Cnf(Vec<(u64, BigUint)>),
}

impl Ordinal {
    pub fn zero() -> Self {
        Ordinal::Cnf(Vec::new())
    }

    pub fn from_nat(n: BigUint) -> Self {
        if n.is_zero() {
            Ordinal::zero()
        } else {
            Ordinal::Cnf(vec![(0, n)])
        }
    }

    pub fn from_u64(n: u64) -> Self {
        Self::from_nat(BigUint::from(n))
    }

    /// w^k * c, normalized.
    pub fn omega_term(k: u64, c: BigUint) -> Self {
        if c.is_zero() {
            Ordinal::zero()
        } else {
            Ordinal::Cnf(vec![(k, c)])
        }
    }

    /// Builds from (degree, coefficient) pairs in any order; zero
    /// coefficients are dropped, equal degrees rejected.
    pub fn from_terms(mut terms: Vec<(u64, BigUint)>) -> Result<Self, OrdinalError> {
        terms.retain(|(_, c)| !c.is_zero());
        terms.sort_by(|a, b| b.0.cmp(&a.0));
        for w in terms.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(OrdinalError::Syntax(format!(
                    "degree {} appears twice",
                    w[0].0
                )));
            }
        }
        Ok(Ordinal::Cnf(terms))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Ordinal::Cnf(t) if t.is_empty())
    }

    /// Successor ordinals are exactly those with a finite part.
    pub fn is_successor(&self) -> bool {
        matches!(self, Ordinal::Cnf(t) if t.last().is_some_and(|(d, _)| *d == 0))
    }

    pub fn is_limit(&self) -> bool {
        !self.is_zero() && !self.is_successor()
    }

    /// Predecessor of a successor ordinal.
    pub fn pred(&self) -> Option<Ordinal> {
        match self {
            Ordinal::Cnf(terms) if self.is_successor() => {
                let mut t = terms.clone();
                let last = t.last_mut().unwrap();
                last.1 -= 1u32;
                if last.1.is_zero() {
                    t.pop();
                }
                Some(Ordinal::Cnf(t))
            }
            _ => None,
        }
    }

    pub fn degree(&self) -> Option<u64> {
        match self {
            Ordinal::OmegaOmega => None,
            Ordinal::Cnf(t) => Some(t.first().map_or(0, |(d, _)| *d)),
        }
    }

    /// max of the CNF degree and all coefficients.
    pub fn norm(&self) -> Result<BigUint, OrdinalError> {
        match self {
            Ordinal::OmegaOmega => Err(OrdinalError::NormOfTop),
            Ordinal::Cnf(terms) => {
                let mut best = BigUint::from(terms.first().map_or(0, |(d, _)| *d));
                for (_, c) in terms {
                    if *c > best {
                        best = c.clone();
                    }
                }
                Ok(best)
            }
        }
    }

    /// Fundamental sequence member lambda(x): w^w(x) = w^(x+1) and
    /// (beta + w^(k+1))(x) = beta + w^k * (x+1).
    pub fn fund_seq(&self, x: &BigUint) -> Result<Ordinal, OrdinalError> {
        match self {
            Ordinal::OmegaOmega => {
                let deg: u64 = x
                    .try_into()
                    .map_err(|_| OrdinalError::DegreeOverflow)
                    .and_then(|d: u64| d.checked_add(1).ok_or(OrdinalError::DegreeOverflow))?;
                Ok(Ordinal::omega_term(deg, BigUint::one()))
            }
            Ordinal::Cnf(terms) => {
                if !self.is_limit() {
                    return Err(OrdinalError::NotLimit(self.to_string()));
                }
                let mut t = terms.clone();
                let (k, c) = t.pop().unwrap();
                debug_assert!(k >= 1);
                if c > BigUint::one() {
                    t.push((k, c - 1u32));
                }
                t.push((k - 1, x + 1u32));
                Ok(Ordinal::Cnf(t))
            }
        }
    }

    /// Ordinal addition (right summand absorbs smaller left terms).
    pub fn add(&self, rhs: &Ordinal) -> Ordinal {
        match (self, rhs) {
            (_, Ordinal::OmegaOmega) | (Ordinal::OmegaOmega, _) => Ordinal::OmegaOmega,
            (Ordinal::Cnf(a), Ordinal::Cnf(b)) => {
                if b.is_empty() {
                    return self.clone();
                }
                let lead = b[0].0;
                let mut out: Vec<(u64, BigUint)> =
                    a.iter().filter(|(d, _)| *d > lead).cloned().collect();
                let mut b = b.clone();
                if let Some((d, c)) = a.iter().find(|(d, _)| *d == lead) {
                    debug_assert_eq!(*d, lead);
                    b[0].1 += c;
                }
                out.extend(b);
                Ordinal::Cnf(out)
            }
        }
    }

    pub fn parse(text: &str) -> Result<Ordinal, OrdinalError> {
        let text = text.trim();
        if text.is_empty() {
            return Err(OrdinalError::Syntax("empty ordinal".into()));
        }
        if text == "w^w" {
            return Ok(Ordinal::OmegaOmega);
        }
        let mut terms = Vec::new();
        for part in text.split('+') {
            let part = part.trim();
            let (degree, coeff) = parse_term(part)?;
            terms.push((degree, coeff));
        }
        for w in terms.windows(2) {
            if w[0].0 <= w[1].0 {
                return Err(OrdinalError::Syntax(
                    "terms must be in strictly descending degree order".into(),
                ));
            }
        }
        Ordinal::from_terms(terms)
    }
}

fn parse_term(part: &str) -> Result<(u64, BigUint), OrdinalError> {
    let bad = |m: &str| OrdinalError::Syntax(format!("bad term {part:?}: {m}"));
    if let Some(rest) = part.strip_prefix('w') {
        let rest = rest.trim();
        let (deg_text, coeff_text) = match rest.split_once('*') {
            Some((d, c)) => (d.trim(), Some(c.trim())),
            None => (rest, None),
        };
        let degree = if deg_text.is_empty() {
            1
        } else if let Some(d) = deg_text.strip_prefix('^') {
            d.trim()
                .parse::<u64>()
                .map_err(|_| bad("degree is not a number"))?
        } else {
            return Err(bad("expected w, w^k, w*c or w^k*c"));
        };
        if degree == 0 {
            return Err(bad("write finite terms without w"));
        }
        let coeff = match coeff_text {
            Some(c) => c
                .parse::<BigUint>()
                .map_err(|_| bad("coefficient is not a number"))?,
            None => BigUint::one(),
        };
        if coeff.is_zero() {
            return Err(bad("zero coefficient"));
        }
        Ok((degree, coeff))
    } else {
        let n = part
            .parse::<BigUint>()
            .map_err(|_| bad("expected a number"))?;
        Ok((0, n))
    }
}

impl fmt::Display for Ordinal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ordinal::OmegaOmega => write!(f, "w^w"),
            Ordinal::Cnf(terms) => {
                if terms.is_empty() {
                    return write!(f, "0");
                }
                let rendered: Vec<String> = terms
                    .iter()
                    .map(|(d, c)| match d {
                        0 => c.to_string(),
                        1 => format!("w*{c}"),
                        _ => format!("w^{d}*{c}"),
                    })
                    .collect();
                write!(f, "{}", rendered.join("+"))
            }
        }
    }
}

impl PartialOrd for Ordinal {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ordinal {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        use std::cmp::Ordering;
        match (self, other) {
            (Ordinal::OmegaOmega, Ordinal::OmegaOmega) => Ordering::Equal,
            (Ordinal::OmegaOmega, _) => Ordering::Greater,
            (_, Ordinal::OmegaOmega) => Ordering::Less,
            (Ordinal::Cnf(a), Ordinal::Cnf(b)) => {
                for (ta, tb) in a.iter().zip(b.iter()) {
                    let c = ta.0.cmp(&tb.0).then_with(|| ta.1.cmp(&tb.1));
                    if c != Ordering::Equal {
                        return c;
                    }
                }
                a.len().cmp(&b.len())
            }
        }
    }
}

/// Control function: monotone and inflationary by contract. The declared
/// properties are spot-checked by [`ControlFunction::spot_check`] rather
/// than enforced statically.
#[derive(Clone)]
pub struct ControlFunction {
    name: String,
    f: Arc<dyn Fn(&BigUint) -> BigUint + Send + Sync>,
}

impl ControlFunction {
    pub fn new(
        name: impl Into<String>,
        f: impl Fn(&BigUint) -> BigUint + Send + Sync + 'static,
    ) -> Self {
        ControlFunction {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    /// H(x) = x+1.
    pub fn successor() -> Self {
        Self::new("succ", |x| x + 1u32)
    }

    pub fn apply(&self, x: &BigUint) -> BigUint {
        (self.f)(x)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Checks monotonicity and x <= h(x) on sampled inputs.
    pub fn spot_check(&self, samples: &[BigUint]) -> bool {
        let mut sorted = samples.to_vec();
        sorted.sort();
        sorted.windows(2).all(|w| self.apply(&w[0]) <= self.apply(&w[1]))
            && sorted.iter().all(|x| *x <= self.apply(x))
    }
}

impl fmt::Debug for ControlFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ControlFunction({})", self.name)
    }
}

/// Joint result of one hierarchy evaluation: `value` = h^alpha(x) and
/// `steps` = h_alpha(x) (the number of h-applications performed).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HierarchyEval {
    pub value: BigUint,
    pub steps: BigUint,
}

/// Evaluates both hierarchies at once by the tail-recursive unfolding
/// h^(beta+1)(x) = h^beta(h(x)), h^lambda(x) = h^(lambda(x))(x). The budget
/// counts applications of h; limit expansions between two applications are
/// bounded by the current degree and are not charged.
pub fn hardy_cichon(
    h: &ControlFunction,
    alpha: &Ordinal,
    x: &BigUint,
    budget: u64,
) -> Result<HierarchyEval, BudgetExceeded> {
    let mut alpha = alpha.clone();
    let mut x = x.clone();
    let mut steps: u64 = 0;
    loop {
        if alpha.is_zero() {
            return Ok(HierarchyEval {
                value: x,
                steps: BigUint::from(steps),
            });
        }
        if alpha.is_successor() {
            if steps == budget {
                return Err(BudgetExceeded {
                    h_name: h.name().to_string(),
                    applications: steps,
                });
            }
            x = h.apply(&x);
            steps += 1;
            alpha = alpha.pred().unwrap();
        } else {
            // Limit case; fund_seq only fails on absurd arguments (w^w at
            // an x beyond u64), surfaced as a budget-style abort.
            alpha = alpha.fund_seq(&x).map_err(|_| BudgetExceeded {
                h_name: h.name().to_string(),
                applications: steps,
            })?;
        }
    }
}

pub fn hardy(
    h: &ControlFunction,
    alpha: &Ordinal,
    x: &BigUint,
    budget: u64,
) -> Result<BigUint, BudgetExceeded> {
    hardy_cichon(h, alpha, x, budget).map(|r| r.value)
}

pub fn cichon(
    h: &ControlFunction,
    alpha: &Ordinal,
    x: &BigUint,
    budget: u64,
) -> Result<BigUint, BudgetExceeded> {
    hardy_cichon(h, alpha, x, budget).map(|r| r.steps)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DescentError {
    #[error("descent search budget exhausted ({0} states explored)")]
    Budget(u64),
    #[error("norm bound {0} too large for exhaustive search")]
    NormTooLarge(BigUint),
}

/// Exhaustive maximum length of descending sequences alpha_0 > alpha_1 > ...
/// below w^(n+1) with ||alpha_l|| <= h^l(N0). Only meant for tiny n and N0;
/// `state_budget` caps the number of memoized (ordinal, position) states.
pub fn max_controlled_descent(
    n: u64,
    n0: &BigUint,
    h: &ControlFunction,
    state_budget: u64,
) -> Result<BigUint, DescentError> {
    const MAX_NORM: u64 = 1 << 16;
    let mut norms: Vec<BigUint> = vec![n0.clone()]; // norms[l] = h^l(N0)
    let mut memo: HashMap<(Vec<(u64, BigUint)>, u64), BigUint> = HashMap::new();
    let mut states: u64 = 0;

    // All CNF ordinals of degree <= n with norm <= bound, by odometer over
    // the coefficient vector (c_n, ..., c_0).
    fn candidates(n: u64, bound: &BigUint) -> Result<Vec<Ordinal>, DescentError> {
        let bound_u64: u64 = bound
            .try_into()
            .map_err(|_| DescentError::NormTooLarge(bound.clone()))?;
        if bound_u64 > MAX_NORM {
            return Err(DescentError::NormTooLarge(bound.clone()));
        }
        let max_deg = n.min(bound_u64) as usize;
        let mut coeffs = vec![0u64; max_deg + 1];
        let mut out = Vec::new();
        loop {
            let terms: Vec<(u64, BigUint)> = coeffs
                .iter()
                .enumerate()
                .rev()
                .filter(|(_, c)| **c > 0)
                .map(|(d, c)| (d as u64, BigUint::from(*c)))
                .collect();
            out.push(Ordinal::Cnf(terms));
            // odometer increment
            let mut i = 0;
            loop {
                if i > max_deg {
                    return Ok(out);
                }
                if coeffs[i] < bound_u64 {
                    coeffs[i] += 1;
                    break;
                }
                coeffs[i] = 0;
                i += 1;
            }
        }
    }

    fn max_len(
        alpha: &Ordinal,
        pos: u64,
        n: u64,
        h: &ControlFunction,
        norms: &mut Vec<BigUint>,
        memo: &mut HashMap<(Vec<(u64, BigUint)>, u64), BigUint>,
        states: &mut u64,
        state_budget: u64,
    ) -> Result<BigUint, DescentError> {
        let Ordinal::Cnf(terms) = alpha else {
            unreachable!("candidates are CNF ordinals")
        };
        let key = (terms.clone(), pos);
        if let Some(v) = memo.get(&key) {
            return Ok(v.clone());
        }
        *states += 1;
        if *states > state_budget {
            return Err(DescentError::Budget(state_budget));
        }
        while norms.len() as u64 <= pos + 1 {
            let last = norms.last().unwrap();
            let next = h.apply(last);
            norms.push(next);
        }
        let bound = norms[(pos + 1) as usize].clone();
        let mut best = BigUint::one(); // the sequence ending at alpha
        for beta in candidates(n, &bound)? {
            if beta < *alpha {
                let sub = max_len(&beta, pos + 1, n, h, norms, memo, states, state_budget)?;
                let total = sub + 1u32;
                if total > best {
                    best = total;
                }
            }
        }
        memo.insert(key, best.clone());
        Ok(best)
    }

    let mut best = BigUint::zero();
    for alpha in candidates(n, n0)? {
        let len = max_len(
            &alpha,
            0,
            n,
            h,
            &mut norms,
            &mut memo,
            &mut states,
            state_budget,
        )?;
        if len > best {
            best = len;
        }
    }
    Ok(best)
}

/// Symbolic upper-bound report: every expression has the grammar's exact
/// constants substituted, except d which stays a free symbol.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoundReport {
    pub n: BigUint,
    pub grammar_size: BigUint,
    pub class_fixed_n: String,
    pub class_general: String,
    pub rank_domain: String,
    pub n0_bound: String,
    pub control_fn: String,
    pub iteration_bound: String,
    pub eb_bound: String,
    pub final_bound: String,
    pub h_definition: String,
    pub per_pair_bound: String,
}

pub fn bound_report(
    n: &BigUint,
    s: &BigUint,
    g: &BigUint,
    c: &BigUint,
    grammar_size: &BigUint,
) -> BoundReport {
    let n_plus_1 = n + 1u32;
    BoundReport {
        n: n.clone(),
        grammar_size: grammar_size.clone(),
        class_fixed_n: format!("F_{}", n + 4u32),
        class_general: "ACKERMANN = F_w".to_string(),
        rank_domain: format!("w^{n_plus_1}"),
        n0_bound: format!(
            "N0 <= 2^(2^(2*{n}+5) * {s}^2 * {g}^2 * log({grammar_size}))"
        ),
        control_fn: format!(
            "G(x) = 2^(2^(2*{n}+6) * {c}^2 * {g}^2 * {grammar_size}^3 * x^4)"
        ),
        iteration_bound: format!("L <= G_(w^{n_plus_1})(N0)"),
        eb_bound: format!("E_B <= G^L(N0) = G^(w^{n_plus_1})(N0)"),
        final_bound: format!("E_B <= h^(w^w)(h({grammar_size}))"),
        h_definition: "h(x) = H^(w^2*d)(x) for a constant d".to_string(),
        per_pair_bound: format!("el(E,F) <= {c}*(E_B*size(E,F) + size(E,F)^2) whenever el(E,F) < w"),
    }
}
