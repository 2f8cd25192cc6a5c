//! Seeded random corpora for tests and the command line: grammars,
//! pushdown systems, terms, substitutions, small ordinals. A fixed seed
//! gives identical output; everything goes through the text parsers.

use num_bigint::BigUint;
use rand::Rng;

use crate::grammar::{parse_grammar, Grammar};
use crate::ordinal::Ordinal;
use crate::pds::{parse_pds, Pds};
use crate::term::{parse_term, Substitution, TermRef};

#[derive(Clone, Copy, Debug)]
pub struct GrammarShape {
    pub nonterminals: usize,
    pub max_arity: usize,
    pub actions: usize,
    pub max_rules: usize,
    pub max_height: usize,
}

impl Default for GrammarShape {
    fn default() -> Self {
        GrammarShape {
            nonterminals: 4,
            max_arity: 2,
            actions: 2,
            max_rules: 8,
            max_height: 3,
        }
    }
}

fn nt_name(i: usize) -> String {
    char::from(b'A' + (i % 26) as u8).to_string()
}

fn action_name(i: usize) -> String {
    char::from(b'a' + (i % 26) as u8).to_string()
}

/// A random term over the given (name, arity) alphabet and variables
/// x1..x_vars, as text. Needs a nullary symbol or `vars` positive.
fn term_text(
    rng: &mut impl Rng,
    syms: &[(String, usize)],
    vars: usize,
    height: usize,
) -> String {
    let leaves: Vec<usize> = (0..syms.len()).filter(|&i| syms[i].1 == 0).collect();
    let apps: Vec<usize> = (0..syms.len()).filter(|&i| syms[i].1 > 0).collect();
    assert!(vars > 0 || !leaves.is_empty(), "no leaf available");
    if height == 0 || apps.is_empty() || rng.gen_bool(0.4) {
        if vars > 0 && (leaves.is_empty() || rng.gen_bool(0.6)) {
            return format!("x{}", rng.gen_range(1..=vars));
        }
        return syms[leaves[rng.gen_range(0..leaves.len())]].0.clone();
    }
    let (name, ar) = &syms[apps[rng.gen_range(0..apps.len())]];
    let children: Vec<String> = (0..*ar)
        .map(|_| term_text(rng, syms, vars, height - 1))
        .collect();
    format!("{name}({})", children.join(", "))
}

/// Grammar text with the given shape. At least one nonterminal is
/// nullary so every head has some closed right-hand side available.
pub fn grammar_text(rng: &mut impl Rng, shape: &GrammarShape) -> String {
    let n = shape.nonterminals.max(1);
    let mut arities: Vec<usize> = (0..n)
        .map(|_| rng.gen_range(0..=shape.max_arity))
        .collect();
    if arities.iter().all(|&a| a > 0) {
        arities[n - 1] = 0;
    }
    let syms: Vec<(String, usize)> = (0..n).map(|i| (nt_name(i), arities[i])).collect();

    let mut text = String::from("grammar\n");
    for (name, ar) in &syms {
        text.push_str(&format!("nonterminal {name}/{ar}\n"));
    }
    let n_act = shape.actions.clamp(1, 26);
    for i in 0..n_act {
        text.push_str(&format!("action {}\n", action_name(i)));
    }
    for _ in 0..rng.gen_range(1..=shape.max_rules.max(1)) {
        let h = rng.gen_range(0..n);
        let (head, ar) = &syms[h];
        let lhs = if *ar == 0 {
            head.clone()
        } else {
            let vars: Vec<String> = (1..=*ar).map(|i| format!("x{i}")).collect();
            format!("{head}({})", vars.join(","))
        };
        let act = action_name(rng.gen_range(0..n_act));
        let height = rng.gen_range(0..=shape.max_height);
        let rhs = term_text(rng, &syms, *ar, height);
        text.push_str(&format!("rule {lhs} -{act}-> {rhs}\n"));
    }
    text
}

pub fn random_grammar(rng: &mut impl Rng, shape: &GrammarShape) -> Grammar {
    parse_grammar(&grammar_text(rng, shape)).expect("generated grammar text parses")
}

/// A random term over the grammar's alphabet and x1..vars, interned in
/// its store.
pub fn random_term(rng: &mut impl Rng, g: &Grammar, vars: usize, height: usize) -> TermRef {
    let syms: Vec<(String, usize)> = g
        .alphabet()
        .ids()
        .map(|s| (g.alphabet().name(s).to_string(), g.alphabet().arity(s)))
        .collect();
    let text = term_text(rng, &syms, vars, height);
    parse_term(g.store(), &text).expect("generated term text parses")
}

/// A substitution binding x1..domain to random terms over x1..image_vars.
pub fn random_substitution(
    rng: &mut impl Rng,
    g: &Grammar,
    domain: usize,
    image_vars: usize,
    height: usize,
) -> Substitution {
    let mut sigma = Substitution::new();
    for x in 1..=domain {
        sigma.bind(x as u32, random_term(rng, g, image_vars, height));
    }
    sigma
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum SilentKind {
    /// No silent rules at all.
    None,
    /// Deterministic silent rules that may push.
    Restricted,
    /// Deterministic silent rules with empty push.
    Popping,
}

#[derive(Clone, Copy, Debug)]
pub struct PdsShape {
    pub states: usize,
    pub symbols: usize,
    pub actions: usize,
    pub max_push: usize,
    pub silent: SilentKind,
}

impl Default for PdsShape {
    fn default() -> Self {
        PdsShape {
            states: 3,
            symbols: 3,
            actions: 2,
            max_push: 2,
            silent: SilentKind::None,
        }
    }
}

/// PDS text with the given shape: per head, either one silent rule
/// (where the kind allows) or up to two visible rules.
pub fn pds_text(rng: &mut impl Rng, shape: &PdsShape) -> String {
    let n_states = shape.states.max(1);
    let n_syms = shape.symbols.max(1);
    let n_act = shape.actions.clamp(1, 26);
    let states: Vec<String> = (1..=n_states).map(|i| format!("q{i}")).collect();
    let syms: Vec<String> = (0..n_syms).map(nt_name).collect();
    let mut text = format!(
        "pds\nstates {}\nstack {}\naction {}\n",
        states.join(" "),
        syms.join(" "),
        (0..n_act).map(action_name).collect::<Vec<_>>().join(" ")
    );
    fn push_suffix(rng: &mut impl Rng, syms: &[String], line: &mut String, max: usize) {
        for _ in 0..rng.gen_range(0..=max) {
            line.push(' ');
            line.push_str(&syms[rng.gen_range(0..syms.len())]);
        }
    }
    for s in &states {
        for y in &syms {
            let silent = match shape.silent {
                SilentKind::None => false,
                _ => rng.gen_bool(0.25),
            };
            if silent {
                let t = &states[rng.gen_range(0..n_states)];
                let mut line = format!("rule {s} {y} -eps-> {t}");
                let max = match shape.silent {
                    SilentKind::Popping => 0,
                    _ => shape.max_push,
                };
                push_suffix(rng, &syms, &mut line, max);
                text.push_str(&line);
                text.push('\n');
            } else {
                for _ in 0..rng.gen_range(0..=2) {
                    let act = action_name(rng.gen_range(0..n_act));
                    let t = &states[rng.gen_range(0..n_states)];
                    let mut line = format!("rule {s} {y} -{act}-> {t}");
                    push_suffix(rng, &syms, &mut line, shape.max_push);
                    text.push_str(&line);
                    text.push('\n');
                }
            }
        }
    }
    text
}

pub fn random_pds(rng: &mut impl Rng, shape: &PdsShape) -> Pds {
    parse_pds(&pds_text(rng, shape)).expect("generated pds text parses")
}

/// A random ordinal below w^3 in Cantor normal form, coefficients up to
/// `max_coeff`.
pub fn random_ordinal_below_w3(rng: &mut impl Rng, max_coeff: u64) -> Ordinal {
    let terms: Vec<(u64, BigUint)> = (0..3u64)
        .rev()
        .filter_map(|e| {
            let c = rng.gen_range(0..=max_coeff);
            (c > 0).then_some((e, BigUint::from(c)))
        })
        .collect();
    Ordinal::from_terms(terms).expect("exponents are strictly decreasing")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn same_seed_same_corpus() {
        let shape = GrammarShape::default();
        let a = grammar_text(&mut ChaCha8Rng::seed_from_u64(5), &shape);
        let b = grammar_text(&mut ChaCha8Rng::seed_from_u64(5), &shape);
        assert_eq!(a, b);
        let c = grammar_text(&mut ChaCha8Rng::seed_from_u64(6), &shape);
        assert_ne!(a, c);

        let p = pds_text(&mut ChaCha8Rng::seed_from_u64(5), &PdsShape::default());
        let q = pds_text(&mut ChaCha8Rng::seed_from_u64(5), &PdsShape::default());
        assert_eq!(p, q);
    }

    #[test]
    fn generated_grammars_parse_and_stay_in_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let shape = GrammarShape::default();
        for _ in 0..200 {
            let g = random_grammar(&mut rng, &shape);
            assert!(g.alphabet().len() <= shape.nonterminals);
            assert!(g.alphabet().max_arity() <= shape.max_arity);
            assert!(!g.rules().is_empty());
            let text = g.serialize();
            assert_eq!(parse_grammar(&text).unwrap().serialize(), text);
        }
    }

    #[test]
    fn generated_pds_respect_their_silent_kind() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let rt = random_pds(
                &mut rng,
                &PdsShape {
                    silent: SilentKind::None,
                    ..PdsShape::default()
                },
            );
            assert!(rt.classify().real_time);
            let re = random_pds(
                &mut rng,
                &PdsShape {
                    silent: SilentKind::Restricted,
                    ..PdsShape::default()
                },
            );
            assert!(re.classify().restricted);
            let po = random_pds(
                &mut rng,
                &PdsShape {
                    silent: SilentKind::Popping,
                    ..PdsShape::default()
                },
            );
            let f = po.classify();
            assert!(f.restricted && f.popping_eps);
        }
    }

    #[test]
    fn random_terms_and_substitutions_are_well_formed() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let g = random_grammar(&mut rng, &GrammarShape::default());
        for _ in 0..100 {
            let t = random_term(&mut rng, &g, 2, 3);
            let sigma = random_substitution(&mut rng, &g, 2, 1, 2);
            // Applying a substitution never fails on generated input.
            let _ = g.store().apply_subst(t, &sigma);
        }
    }

    #[test]
    fn ordinals_stay_below_w3() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let w3 = Ordinal::from_terms(vec![(3u64, BigUint::from(1u32))]).unwrap();
        for _ in 0..200 {
            let a = random_ordinal_below_w3(&mut rng, 4);
            assert!(a < w3);
        }
    }
}
