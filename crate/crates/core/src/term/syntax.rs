//! Concrete syntax for terms.
//!
//! Inline form: `Name(arg, ...)` with variables `x<k>` (k >= 1) and cycles
//! written `rec L = ...` / `ref L`. Nullary symbols may drop their parens.
//!
//! Graph form: a flat block of `let <name> = <rhs>` bindings closed by
//! `in <name>`. Bindings may reference each other in any order (mutual
//! recursion included) and shadow alphabet symbols of the same name.
//! Serialization emits this form with canonical names in depth-first
//! preorder, so equal terms serialize to equal strings.

use std::collections::{BTreeSet, HashMap, HashSet};

use super::store::{Label, RankedAlphabet, RawGraph, RawId, TermError, TermRef, TermStore};

const KEYWORDS: &[&str] = &["rec", "ref", "let", "in"];

#[derive(Debug, PartialEq)]
enum Tok {
    LParen,
    RParen,
    Comma,
    Eq,
    Ident(String),
}

fn tokenize(input: &str) -> Result<Vec<(Tok, usize)>, TermError> {
    let bytes = input.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\r' | '\n' => i += 1,
            '#' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            '(' => {
                toks.push((Tok::LParen, i));
                i += 1;
            }
            ')' => {
                toks.push((Tok::RParen, i));
                i += 1;
            }
            ',' => {
                toks.push((Tok::Comma, i));
                i += 1;
            }
            '=' => {
                toks.push((Tok::Eq, i));
                i += 1;
            }
            '[' => {
                let start = i;
                while i < bytes.len() && bytes[i] != b']' {
                    i += 1;
                }
                if i == bytes.len() {
                    return Err(TermError::Syntax {
                        pos: start,
                        msg: "unterminated '['".to_string(),
                    });
                }
                i += 1;
                toks.push((Tok::Ident(input[start..i].to_string()), start));
            }
            _ if c.is_ascii_alphanumeric() || c == '_' || c == '\'' => {
                let start = i;
                while i < bytes.len() {
                    let c = bytes[i] as char;
                    if c.is_ascii_alphanumeric() || c == '_' || c == '\'' {
                        i += 1;
                    } else {
                        break;
                    }
                }
                toks.push((Tok::Ident(input[start..i].to_string()), start));
            }
            _ => {
                return Err(TermError::Syntax {
                    pos: i,
                    msg: format!("unexpected character {c:?}"),
                })
            }
        }
    }
    Ok(toks)
}

fn parse_var(name: &str) -> Option<Result<u32, &'static str>> {
    let digits = name.strip_prefix('x')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some(match digits.parse::<u32>() {
        Ok(0) => Err("variable indices start at 1"),
        Ok(k) => Ok(k),
        Err(_) => Err("variable index out of range"),
    })
}

struct Parser<'a> {
    alphabet: &'a RankedAlphabet,
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end: usize,
    raw: RawGraph,
    /// (label, hole) pairs for enclosing `rec` binders, innermost last.
    rec_scope: Vec<(String, RawId)>,
    /// `let` binders of the enclosing graph block, if any.
    binders: HashMap<String, RawId>,
    in_let_rhs: bool,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T, TermError> {
        let pos = self
            .toks
            .get(self.pos)
            .map(|(_, p)| *p)
            .unwrap_or(self.end);
        Err(TermError::Syntax {
            pos,
            msg: msg.into(),
        })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn next(&mut self) -> Option<&Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), TermError> {
        match self.toks.get(self.pos) {
            Some((t, _)) if *t == want => {
                self.pos += 1;
                Ok(())
            }
            _ => self.err(format!("expected {what}")),
        }
    }

    fn expect_ident(&mut self, what: &str) -> Result<String, TermError> {
        match self.toks.get(self.pos) {
            Some((Tok::Ident(s), _)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => self.err(format!("expected {what}")),
        }
    }

    fn parse_expr(&mut self) -> Result<RawId, TermError> {
        let name = match self.peek() {
            Some(Tok::Ident(_)) => self.expect_ident("a term")?,
            _ => return self.err("expected a term"),
        };
        match name.as_str() {
            "rec" => {
                let label = self.expect_ident("a recursion label after 'rec'")?;
                if KEYWORDS.contains(&label.as_str()) {
                    return self.err("recursion label cannot be a keyword");
                }
                self.expect(Tok::Eq, "'=' after recursion label")?;
                let hole = self.raw.add_hole();
                self.rec_scope.push((label, hole));
                let body = self.parse_expr()?;
                self.rec_scope.pop();
                self.raw.set_hole(hole, body);
                Ok(body)
            }
            "ref" => {
                let label = self.expect_ident("a recursion label after 'ref'")?;
                match self.rec_scope.iter().rev().find(|(l, _)| *l == label) {
                    Some((_, hole)) => Ok(*hole),
                    None => self.err(format!("no enclosing 'rec {label}'")),
                }
            }
            "let" => {
                if self.in_let_rhs {
                    return self.err("'let' blocks do not nest");
                }
                // The parser position already consumed 'let'; rewind so the
                // block parser sees the full form.
                self.pos -= 1;
                self.parse_let_block()
            }
            "in" => self.err("'in' outside a 'let' block"),
            _ => self.parse_applied(name),
        }
    }

    fn parse_applied(&mut self, name: String) -> Result<RawId, TermError> {
        if let Some(v) = parse_var(&name) {
            return match v {
                Ok(k) => Ok(self.raw.add_var(k)),
                Err(m) => self.err(m),
            };
        }
        // let-binders shadow alphabet symbols.
        if let Some(&hole) = self.binders.get(&name) {
            if self.peek() == Some(&Tok::LParen) {
                return self.err(format!("'{name}' is a let binder and takes no arguments"));
            }
            return Ok(hole);
        }
        let sym = match self.alphabet.lookup(&name) {
            Some(s) => s,
            None => return Err(TermError::UnknownSymbol(name)),
        };
        let arity = self.alphabet.arity(sym);
        let mut kids = Vec::new();
        if self.peek() == Some(&Tok::LParen) {
            self.next();
            if self.peek() != Some(&Tok::RParen) {
                loop {
                    kids.push(self.parse_expr()?);
                    match self.next() {
                        Some(Tok::Comma) => continue,
                        Some(Tok::RParen) => break,
                        _ => {
                            self.pos -= 1;
                            return self.err("expected ',' or ')'");
                        }
                    }
                }
            } else {
                self.next();
            }
        }
        if kids.len() != arity {
            return Err(TermError::ArityMismatch {
                name,
                arity,
                given: kids.len(),
            });
        }
        Ok(self.raw.add_app(sym, kids))
    }

    fn parse_let_block(&mut self) -> Result<RawId, TermError> {
        // Binder names are collected up front so bindings may reference
        // each other in any order.
        let mut scan = self.pos;
        while scan < self.toks.len() {
            match &self.toks[scan].0 {
                Tok::Ident(s) if s == "let" => {
                    match self.toks.get(scan + 1) {
                        Some((Tok::Ident(name), _)) => {
                            if KEYWORDS.contains(&name.as_str()) {
                                self.pos = scan + 1;
                                return self.err("binder name cannot be a keyword");
                            }
                            if parse_var(name).is_some() {
                                self.pos = scan + 1;
                                return self.err("binder name cannot be a variable");
                            }
                            let hole = self.raw.add_hole();
                            if self.binders.insert(name.clone(), hole).is_some() {
                                self.pos = scan + 1;
                                return self.err(format!("duplicate binder '{name}'"));
                            }
                        }
                        _ => {
                            self.pos = scan + 1;
                            return self.err("expected a binder name after 'let'");
                        }
                    }
                    scan += 2;
                }
                Tok::Ident(s) if s == "in" => break,
                _ => scan += 1,
            }
        }

        loop {
            match self.peek() {
                Some(Tok::Ident(s)) if s == "let" => {
                    self.next();
                    let name = self.expect_ident("a binder name")?;
                    self.expect(Tok::Eq, "'=' after binder name")?;
                    self.in_let_rhs = true;
                    let rhs = self.parse_expr()?;
                    self.in_let_rhs = false;
                    let hole = self.binders[&name];
                    self.raw.set_hole(hole, rhs);
                }
                Some(Tok::Ident(s)) if s == "in" => {
                    self.next();
                    let name = self.expect_ident("a binder name after 'in'")?;
                    return match self.binders.get(&name) {
                        Some(&hole) => Ok(hole),
                        None => self.err(format!("'in {name}' names no binder")),
                    };
                }
                _ => return self.err("expected 'let' or 'in'"),
            }
        }
    }
}

/// Parses either concrete form and interns the result.
pub fn parse_term(store: &TermStore, input: &str) -> Result<TermRef, TermError> {
    let toks = tokenize(input)?;
    let mut p = Parser {
        alphabet: store.alphabet(),
        toks,
        pos: 0,
        end: input.len(),
        raw: RawGraph::new(),
        rec_scope: Vec::new(),
        binders: HashMap::new(),
        in_let_rhs: false,
    };
    let root = p.parse_expr()?;
    if p.pos != p.toks.len() {
        return p.err("trailing input after term");
    }
    store.intern(&p.raw, root)
}

/// Single-line form. Shared subterms are re-expanded, so the output can be
/// exponentially larger than the stored graph; intended for small terms.
pub fn print_inline(store: &TermStore, t: TermRef) -> String {
    // Pass 1 finds the nodes that some expansion references back to.
    let mut needs_label: HashSet<TermRef> = HashSet::new();
    {
        let mut path: BTreeSet<TermRef> = BTreeSet::new();
        probe(store, t, &mut path, &mut needs_label);
    }
    let mut out = String::new();
    let mut labels: HashMap<TermRef, usize> = HashMap::new();
    let mut counter = 0usize;
    emit(store, t, &needs_label, &mut labels, &mut counter, &mut out);
    out
}

fn probe(
    store: &TermStore,
    t: TermRef,
    path: &mut BTreeSet<TermRef>,
    needs_label: &mut HashSet<TermRef>,
) {
    if path.contains(&t) {
        needs_label.insert(t);
        return;
    }
    path.insert(t);
    for c in store.children(t) {
        probe(store, c, path, needs_label);
    }
    path.remove(&t);
}

fn emit(
    store: &TermStore,
    t: TermRef,
    needs_label: &HashSet<TermRef>,
    labels: &mut HashMap<TermRef, usize>,
    counter: &mut usize,
    out: &mut String,
) {
    if let Some(l) = labels.get(&t) {
        out.push_str(&format!("ref L{l}"));
        return;
    }
    let labeled = needs_label.contains(&t);
    if labeled {
        let l = *counter;
        *counter += 1;
        out.push_str(&format!("rec L{l} = "));
        labels.insert(t, l);
    }
    match store.label(t) {
        Label::Var(i) => out.push_str(&format!("x{i}")),
        Label::App(s) => {
            out.push_str(store.alphabet().name(s));
            let kids = store.children(t);
            if !kids.is_empty() {
                out.push('(');
                for (i, c) in kids.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    emit(store, *c, needs_label, labels, counter, out);
                }
                out.push(')');
            }
        }
    }
    if labeled {
        labels.remove(&t);
    }
}

/// Binder prefix that no alphabet symbol can be mistaken for.
fn binder_prefix(alphabet: &RankedAlphabet) -> String {
    let mut underscores = 0;
    loop {
        let prefix = format!("t{}", "_".repeat(underscores));
        let clash = alphabet.ids().any(|s| {
            let name = alphabet.name(s);
            name.strip_prefix(&prefix)
                .map(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
                .unwrap_or(false)
        });
        if !clash {
            return prefix;
        }
        underscores += 1;
    }
}

/// Graph serialization: one binding per distinct subterm, preorder names.
/// Equal terms serialize identically; the output parses back to `t`.
pub fn print_lets(store: &TermStore, t: TermRef) -> String {
    let prefix = binder_prefix(store.alphabet());
    let order = store.subterms(t);
    let index: HashMap<TermRef, usize> = order.iter().enumerate().map(|(i, r)| (*r, i)).collect();
    let mut out = String::new();
    for (i, r) in order.iter().enumerate() {
        out.push_str(&format!("let {prefix}{i} = "));
        match store.label(*r) {
            Label::Var(k) => out.push_str(&format!("x{k}")),
            Label::App(s) => {
                out.push_str(store.alphabet().name(s));
                let kids = store.children(*r);
                if !kids.is_empty() {
                    out.push('(');
                    for (j, c) in kids.iter().enumerate() {
                        if j > 0 {
                            out.push_str(", ");
                        }
                        out.push_str(&format!("{prefix}{}", index[c]));
                    }
                    out.push(')');
                }
            }
        }
        out.push('\n');
    }
    out.push_str(&format!("in {prefix}0"));
    out
}

/// Canonical sort key: size first, serialized graph as tie break.
/// Distinct terms never collide because the serialization determines the
/// term graph.
pub fn term_key(store: &TermStore, t: TermRef) -> (u64, String) {
    (store.size(t), print_lets(store, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::term::store::Substitution;

    fn store() -> TermStore {
        let mut a = RankedAlphabet::new();
        a.add("A", 3).unwrap();
        a.add("B", 0).unwrap();
        a.add("C", 2).unwrap();
        a.add("D", 2).unwrap();
        a.add("F", 1).unwrap();
        a.add("G", 1).unwrap();
        TermStore::new(a)
    }

    #[test]
    fn parses_figure_terms() {
        let st = store();
        let e1 = parse_term(&st, "A(D(x5, C(x2, B)), x5, B)").unwrap();
        assert_eq!(st.size(e1), 6);
        assert_eq!(st.height(e1), Some(3));

        let e3 = parse_term(&st, "rec E3 = A(D(x5, C(ref E3, B)), x5, B)").unwrap();
        assert_eq!(st.size(e3), 5);
        assert!(!st.is_finite(e3));

        let mut sigma = Substitution::new();
        sigma.bind(2, e1);
        let e2 = st.apply_subst(e1, &sigma);
        let e2_parsed = parse_term(&st, "A(D(x5, C(A(D(x5, C(x2, B)), x5, B), B)), x5, B)").unwrap();
        assert_eq!(e2, e2_parsed);
        assert_eq!(st.size(e2), 9);
    }

    #[test]
    fn inline_round_trips() {
        let st = store();
        for src in [
            "x1",
            "B",
            "B()",
            "A(x1, x2, x3)",
            "rec E3 = A(D(x5, C(ref E3, B)), x5, B)",
            "rec L = F(G(ref L))",
            "C(rec L = F(ref L), rec M = G(ref M))",
        ] {
            let t = parse_term(&st, src).unwrap();
            let printed = print_inline(&st, t);
            let back = parse_term(&st, &printed).unwrap();
            assert_eq!(back, t, "inline round trip failed for {src}: {printed}");
        }
        let e3 = parse_term(&st, "rec Z = A(D(x5, C(ref Z, B)), x5, B)").unwrap();
        assert_eq!(
            print_inline(&st, e3),
            "rec L0 = A(D(x5, C(ref L0, B)), x5, B)"
        );
    }

    #[test]
    fn lets_round_trip_and_are_canonical() {
        let st = store();
        for src in [
            "x7",
            "A(D(x5, C(x2, B)), x5, B)",
            "rec E3 = A(D(x5, C(ref E3, B)), x5, B)",
            "C(rec L = F(G(ref L)), B)",
        ] {
            let t = parse_term(&st, src).unwrap();
            let printed = print_lets(&st, t);
            let back = parse_term(&st, &printed).unwrap();
            assert_eq!(back, t, "let round trip failed for {src}: {printed}");
        }
        // Same term built two ways serializes identically.
        let a = parse_term(&st, "rec L = F(F(ref L))").unwrap();
        let b = parse_term(&st, "rec L = F(ref L)").unwrap();
        assert_eq!(a, b);
        assert_eq!(print_lets(&st, a), print_lets(&st, b));
        assert_eq!(
            print_lets(&st, b),
            "let t0 = F(t0)\nin t0"
        );
    }

    #[test]
    fn let_block_supports_forward_and_mutual_references() {
        let st = store();
        let t = parse_term(&st, "let r = C(s, s) let s = B in r").unwrap();
        let u = parse_term(&st, "C(B, B)").unwrap();
        assert_eq!(t, u);

        let m = parse_term(&st, "let f = F(g) let g = G(f) in f").unwrap();
        let m2 = parse_term(&st, "rec L = F(G(ref L))").unwrap();
        assert_eq!(m, m2);
    }

    #[test]
    fn binders_shadow_symbols() {
        let st = store();
        let t = parse_term(&st, "let B = C(x1, x2) in B").unwrap();
        let u = parse_term(&st, "C(x1, x2)").unwrap();
        assert_eq!(t, u);
    }

    #[test]
    fn rec_labels_shadow_outer_labels() {
        let st = store();
        let t = parse_term(&st, "rec L = C(rec L = F(ref L), ref L)").unwrap();
        // Inner ref binds to the inner rec: first child is the F loop.
        let inner = parse_term(&st, "rec M = F(ref M)").unwrap();
        assert_eq!(st.children(t)[0], inner);
        assert_eq!(st.children(t)[1], t);
    }

    #[test]
    fn syntax_errors() {
        let st = store();
        let bad = |src: &str| parse_term(&st, src).unwrap_err();
        assert!(matches!(bad("E(x1)"), TermError::UnknownSymbol(_)));
        assert!(matches!(bad("C(x1)"), TermError::ArityMismatch { .. }));
        assert!(matches!(bad("x0"), TermError::Syntax { .. }));
        assert!(matches!(bad("C(x1, x2"), TermError::Syntax { .. }));
        assert!(matches!(bad("ref Q"), TermError::Syntax { .. }));
        assert!(matches!(bad("B B"), TermError::Syntax { .. }));
        assert!(matches!(bad(""), TermError::Syntax { .. }));
        assert!(matches!(
            bad("let a = let b = B in b in a"),
            TermError::Syntax { .. }
        ));
        assert!(matches!(
            bad("let a = B let a = B in a"),
            TermError::Syntax { .. }
        ));
        assert!(matches!(bad("let a = B in c"), TermError::Syntax { .. }));
        assert!(matches!(bad("rec L = ref L"), TermError::EmptyRecursion));
        assert!(matches!(bad("in a"), TermError::Syntax { .. }));
    }

    #[test]
    fn comments_and_whitespace_are_ignored() {
        let st = store();
        let t = parse_term(&st, "# header\nC( x1 , # mid\n  x2 )\n").unwrap();
        let u = parse_term(&st, "C(x1,x2)").unwrap();
        assert_eq!(t, u);
    }

    #[test]
    fn term_key_orders_by_size_then_serialization() {
        let st = store();
        let x1 = parse_term(&st, "x1").unwrap();
        let fx = parse_term(&st, "F(x1)").unwrap();
        let gx = parse_term(&st, "G(x1)").unwrap();
        assert!(term_key(&st, x1) < term_key(&st, fx));
        assert!(term_key(&st, fx) < term_key(&st, gx));
        assert_eq!(term_key(&st, fx), term_key(&st, fx));
    }
}
