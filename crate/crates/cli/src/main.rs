//! fog: a workbench for first-order grammars and pushdown systems:
//! validation, term measures, transitions, bounded equivalence levels,
//! grammatical constants, candidate bases, cross-formalism translation,
//! ordinal hierarchies, and symbolic bound reports.
//!
//! Exit codes: 0 decided/success, 2 at-least/inconclusive, 3 budget
//! exhausted, 4 input error.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use num_bigint::BigUint;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use fog_core::basis::{
    candidate_bound, format_trace_entry, BasisConfig, BasisError, CandidateParams, Oracle,
    DEFAULT_PAIRS_BUDGET,
};
use fog_core::consts::{compute_constants, ConstError, GrammarConstants};
use fog_core::eqlevel::{
    eq_level_bounded, finite_state_decide, EqLevelError, EqLevelResult, FiniteStateOutcome,
    GameConfig, DEFAULT_MEMO_BUDGET,
};
use fog_core::gen::{
    grammar_text, pds_text, GrammarShape, PdsShape, SilentKind as GenSilentKind,
};
use fog_core::grammar::{parse_grammar, Grammar, GrammarError, VarMode};
use fog_core::ordinal::{
    bound_report, cichon, hardy, max_controlled_descent, BudgetExceeded, ControlFunction,
    DescentError, Ordinal, OrdinalError,
};
use fog_core::pds::{
    grammar_to_pds, parse_pds, pds_to_grammar, remove_nonpopping_eps, weak_eq_level_bounded,
    Pds, PdsError,
};
use fog_core::term::{parse_term, print_inline, TermError, TermRef};

const ENV_BUDGET: &str = "FOG_BUDGET";
const DEFAULT_HIERARCHY_BUDGET: u64 = 10_000_000;
const DEFAULT_STATE_BUDGET: u64 = 100_000;

#[derive(Parser)]
#[command(
    name = "fog",
    version,
    about = "First-order grammar and pushdown-system workbench"
)]
struct Cli {
    /// Emit one JSON object instead of text lines.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    /// Variables are stuck states.
    Dead,
    /// Each variable loops under its own fresh action.
    Selfloop,
}

impl From<Mode> for VarMode {
    fn from(m: Mode) -> VarMode {
        match m {
            Mode::Dead => VarMode::Dead,
            Mode::Selfloop => VarMode::SelfLoop,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleKind {
    Exact,
    Effective,
}

#[derive(Clone, Copy, ValueEnum)]
enum Direction {
    /// Grammar file to pushdown system.
    Gram2pds,
    /// Pushdown system file to grammar (saturating silent rules first
    /// when needed).
    Pds2gram,
    /// Restricted system to one with only popping silent rules.
    Saturate,
}

#[derive(Clone, Copy, ValueEnum)]
enum OrdOp {
    /// h^alpha(x), counting h-applications against the budget.
    Hardy,
    /// h_alpha(x), the number of h-applications hardy performs.
    Cichon,
    /// max{degree, coefficients} of a CNF ordinal.
    Norm,
    /// Fundamental-sequence member lambda(x).
    Fund,
    /// Exhaustive maximal controlled-descent length below w^(n+1).
    Descent,
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    Grammar,
    Pds,
}

#[derive(Clone, Copy, ValueEnum)]
enum SilentFlag {
    None,
    Restricted,
    Popping,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse a grammar or pds file and report its shape.
    Validate { file: PathBuf },
    /// Term measures: size, ntsize, height, variables; pair measures
    /// with a second term.
    Measure {
        file: PathBuf,
        term: String,
        term2: Option<String>,
    },
    /// One-step transitions of a term (grammar) or configuration (pds).
    Step {
        file: PathBuf,
        term: String,
        #[arg(long, value_enum, default_value = "selfloop")]
        mode: Mode,
        /// Comma-separated action word; prints the reachable set instead.
        #[arg(long)]
        word: Option<String>,
    },
    /// Bounded equivalence level of two terms or two configurations.
    El {
        file: PathBuf,
        left: String,
        right: String,
        #[arg(long, default_value_t = 8)]
        cap: u64,
        #[arg(long, value_enum, default_value = "selfloop")]
        mode: Mode,
        /// Memo budget; defaults to $FOG_BUDGET.
        #[arg(long)]
        budget: Option<u64>,
    },
    /// Exact bisimilarity decision when the reachable sets are finite.
    Decide {
        file: PathBuf,
        left: String,
        right: String,
        #[arg(long, value_enum, default_value = "selfloop")]
        mode: Mode,
        /// State budget; defaults to $FOG_BUDGET.
        #[arg(long)]
        budget: Option<u64>,
    },
    /// Grammatical constants; the block ends with the n= line.
    Constants { file: PathBuf },
    /// Candidate-basis construction with ranked descent.
    Basis {
        file: PathBuf,
        #[arg(long)]
        n: u64,
        #[arg(long)]
        s: u64,
        #[arg(long)]
        g: u64,
        #[arg(long)]
        c: u64,
        #[arg(long, value_enum, default_value = "exact")]
        oracle: OracleKind,
        /// Exact-oracle state budget; defaults to $FOG_BUDGET.
        #[arg(long)]
        state_budget: Option<u64>,
        #[arg(long, default_value_t = DEFAULT_PAIRS_BUDGET)]
        pairs_budget: u64,
        /// Write one line per iteration to this file.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        subtract_above_j: bool,
    },
    /// Translate between the grammar and pds formats.
    Translate {
        #[arg(value_enum)]
        direction: Direction,
        file: PathBuf,
    },
    /// Ordinal hierarchy evaluation and CNF utilities.
    Ordinal {
        #[arg(value_enum)]
        op: OrdOp,
        /// CNF text, e.g. "w^2*3+w*1+4".
        #[arg(long)]
        alpha: Option<String>,
        #[arg(long)]
        x: Option<u64>,
        /// Control function; only "succ" is built in.
        #[arg(long, default_value = "succ")]
        h: String,
        /// Application budget; defaults to $FOG_BUDGET.
        #[arg(long)]
        budget: Option<u64>,
        /// Descent: degree bound exponent (limit w^(n+1)).
        #[arg(long)]
        n: Option<u64>,
        /// Descent: starting norm bound N0.
        #[arg(long)]
        n0: Option<u64>,
    },
    /// Symbolic upper-bound report for a grammar.
    Bound { file: PathBuf },
    /// Seeded random grammars and pushdown systems.
    Gen {
        #[arg(value_enum)]
        kind: GenKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        count: u32,
        #[arg(long, default_value_t = 4)]
        nonterminals: usize,
        #[arg(long, default_value_t = 2)]
        max_arity: usize,
        #[arg(long, default_value_t = 2)]
        actions: usize,
        #[arg(long, default_value_t = 8)]
        max_rules: usize,
        #[arg(long, default_value_t = 3)]
        max_height: usize,
        #[arg(long, default_value_t = 3)]
        states: usize,
        #[arg(long, default_value_t = 3)]
        symbols: usize,
        #[arg(long, default_value_t = 2)]
        max_push: usize,
        #[arg(long, value_enum, default_value = "none")]
        silent: SilentFlag,
    },
}

struct CliErr {
    code: u8,
    msg: String,
}

impl CliErr {
    fn input(msg: impl Into<String>) -> Self {
        CliErr {
            code: 4,
            msg: msg.into(),
        }
    }
    fn budget(msg: impl Into<String>) -> Self {
        CliErr {
            code: 3,
            msg: msg.into(),
        }
    }
}

macro_rules! input_err {
    ($($ty:ty),*) => {$(
        impl From<$ty> for CliErr {
            fn from(e: $ty) -> Self {
                CliErr::input(e.to_string())
            }
        }
    )*};
}
input_err!(GrammarError, TermError, OrdinalError);

macro_rules! budget_err {
    ($($ty:ty),*) => {$(
        impl From<$ty> for CliErr {
            fn from(e: $ty) -> Self {
                CliErr::budget(e.to_string())
            }
        }
    )*};
}
budget_err!(ConstError, EqLevelError, BudgetExceeded, DescentError);

impl From<std::io::Error> for CliErr {
    fn from(e: std::io::Error) -> Self {
        CliErr::input(e.to_string())
    }
}

impl From<PdsError> for CliErr {
    fn from(e: PdsError) -> Self {
        let code = match e {
            PdsError::SilentDivergence { .. } => 2,
            PdsError::Game(_) => 3,
            _ => 4,
        };
        CliErr {
            code,
            msg: e.to_string(),
        }
    }
}

impl From<BasisError> for CliErr {
    fn from(e: BasisError) -> Self {
        let code = match e {
            BasisError::OracleInconclusive { .. } => 2,
            _ => 3,
        };
        CliErr {
            code,
            msg: e.to_string(),
        }
    }
}

enum Input {
    Grammar(Grammar),
    Pds(Pds),
}

fn load_input(path: &Path) -> Result<Input, CliErr> {
    let text = fs::read_to_string(path)?;
    let header = text
        .lines()
        .map(|l| match l.find('#') {
            Some(p) => l[..p].trim(),
            None => l.trim(),
        })
        .find(|l| !l.is_empty())
        .unwrap_or("");
    match header {
        "grammar" => Ok(Input::Grammar(parse_grammar(&text)?)),
        "pds" => Ok(Input::Pds(parse_pds(&text)?)),
        other => Err(CliErr::input(format!(
            "{}: expected a 'grammar' or 'pds' header, found {other:?}",
            path.display()
        ))),
    }
}

fn load_grammar(path: &Path) -> Result<Grammar, CliErr> {
    match load_input(path)? {
        Input::Grammar(g) => Ok(g),
        Input::Pds(_) => Err(CliErr::input(format!(
            "{}: this subcommand takes a grammar file",
            path.display()
        ))),
    }
}

/// Term arguments may name a file holding the text; files win.
fn term_arg(s: &str) -> Result<String, CliErr> {
    if Path::new(s).is_file() {
        Ok(fs::read_to_string(s)?.trim().to_string())
    } else {
        Ok(s.to_string())
    }
}

fn env_budget(default: u64) -> u64 {
    std::env::var(ENV_BUDGET)
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(default)
}

fn resolve_budget(flag: Option<u64>, default: u64) -> Result<u64, CliErr> {
    let b = flag.unwrap_or_else(|| env_budget(default));
    if b == 0 {
        return Err(CliErr::input("budget must be positive"));
    }
    Ok(b)
}

fn digits(b: &BigUint) -> usize {
    b.to_str_radix(10).len()
}

/// Text output is key=value lines; json output is one object with the
/// same keys.
struct Report {
    lines: Vec<(String, String)>,
    json: serde_json::Map<String, Value>,
}

impl Report {
    fn new() -> Self {
        Report {
            lines: Vec::new(),
            json: serde_json::Map::new(),
        }
    }
    fn field(&mut self, key: &str, text: impl ToString, json: Value) {
        self.lines.push((key.to_string(), text.to_string()));
        self.json.insert(key.to_string(), json);
    }
    fn str_field(&mut self, key: &str, value: impl ToString) {
        let v = value.to_string();
        self.field(key, v.clone(), Value::String(v));
    }
    fn num_field(&mut self, key: &str, value: u64) {
        self.field(key, value, json!(value));
    }
    fn big_field(&mut self, key: &str, value: &BigUint) {
        self.field(key, value, Value::String(value.to_string()));
        let d = digits(value) as u64;
        self.field(&format!("{key}_digits"), d, json!(d));
    }
    fn print(&self, as_json: bool) {
        if as_json {
            println!("{}", Value::Object(self.json.clone()));
        } else {
            for (k, v) in &self.lines {
                println!("{k}={v}");
            }
        }
    }
}

fn main() -> ExitCode {
    // Die quietly when a pipe reader stops early instead of panicking.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // Help and version requests are not errors.
            if e.use_stderr() {
                eprintln!("{e}");
                return ExitCode::from(4);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    let as_json = cli.json;
    match run(cli.cmd, as_json) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.msg);
            ExitCode::from(e.code)
        }
    }
}

fn run(cmd: Cmd, as_json: bool) -> Result<u8, CliErr> {
    match cmd {
        Cmd::Validate { file } => validate(&file, as_json),
        Cmd::Measure { file, term, term2 } => measure(&file, &term, term2.as_deref(), as_json),
        Cmd::Step {
            file,
            term,
            mode,
            word,
        } => step(&file, &term, mode, word.as_deref(), as_json),
        Cmd::El {
            file,
            left,
            right,
            cap,
            mode,
            budget,
        } => el(&file, &left, &right, cap, mode, budget, as_json),
        Cmd::Decide {
            file,
            left,
            right,
            mode,
            budget,
        } => decide(&file, &left, &right, mode, budget, as_json),
        Cmd::Constants { file } => constants(&file, as_json),
        Cmd::Basis {
            file,
            n,
            s,
            g,
            c,
            oracle,
            state_budget,
            pairs_budget,
            trace,
            subtract_above_j,
        } => basis(
            &file,
            n,
            s,
            g,
            c,
            oracle,
            state_budget,
            pairs_budget,
            trace.as_deref(),
            subtract_above_j,
            as_json,
        ),
        Cmd::Translate { direction, file } => translate(direction, &file, as_json),
        Cmd::Ordinal {
            op,
            alpha,
            x,
            h,
            budget,
            n,
            n0,
        } => ordinal_cmd(op, alpha.as_deref(), x, &h, budget, n, n0, as_json),
        Cmd::Bound { file } => bound(&file, as_json),
        Cmd::Gen {
            kind,
            seed,
            count,
            nonterminals,
            max_arity,
            actions,
            max_rules,
            max_height,
            states,
            symbols,
            max_push,
            silent,
        } => gen_cmd(
            kind,
            seed,
            count,
            GrammarShape {
                nonterminals,
                max_arity,
                actions,
                max_rules,
                max_height,
            },
            PdsShape {
                states,
                symbols,
                actions,
                max_push,
                silent: match silent {
                    SilentFlag::None => GenSilentKind::None,
                    SilentFlag::Restricted => GenSilentKind::Restricted,
                    SilentFlag::Popping => GenSilentKind::Popping,
                },
            },
            as_json,
        ),
    }
}

fn validate(file: &Path, as_json: bool) -> Result<u8, CliErr> {
    let mut r = Report::new();
    match load_input(file)? {
        Input::Grammar(g) => {
            r.str_field("kind", "grammar");
            r.num_field("nonterminals", g.alphabet().len() as u64);
            r.num_field("actions", g.actions().len() as u64);
            r.num_field("rules", g.rules().len() as u64);
            r.num_field("size", g.size());
            r.num_field("max_arity", g.alphabet().max_arity() as u64);
        }
        Input::Pds(m) => {
            let f = m.classify();
            r.str_field("kind", "pds");
            r.num_field("states", m.states().len() as u64);
            r.num_field("stack", m.stack_symbols().len() as u64);
            r.num_field("actions", m.actions().len() as u64);
            r.num_field("rules", m.rules().len() as u64);
            r.field("real_time", f.real_time, json!(f.real_time));
            r.field("restricted", f.restricted, json!(f.restricted));
            r.field("popping_eps", f.popping_eps, json!(f.popping_eps));
        }
    }
    r.print(as_json);
    Ok(0)
}

fn vars_text(vars: &BTreeSet<u32>) -> String {
    vars.iter()
        .map(|v| format!("x{v}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn measure(
    file: &Path,
    term: &str,
    term2: Option<&str>,
    as_json: bool,
) -> Result<u8, CliErr> {
    let g = load_grammar(file)?;
    let store = g.store();
    let e = parse_term(store, &term_arg(term)?)?;
    let mut r = Report::new();
    let height_text = |t: TermRef| match store.height(t) {
        Some(h) => h.to_string(),
        None => "infinite".to_string(),
    };
    match term2 {
        None => {
            r.num_field("size", store.size(e));
            r.num_field("ntsize", store.ntsize(e));
            r.str_field("height", height_text(e));
            r.str_field("vars", vars_text(&store.vars(e)));
        }
        Some(t2) => {
            let f = parse_term(store, &term_arg(t2)?)?;
            r.num_field("size_left", store.size(e));
            r.num_field("size_right", store.size(f));
            r.num_field("size_pair", store.size_pair(e, f));
            r.num_field("ntsize_left", store.ntsize(e));
            r.num_field("ntsize_right", store.ntsize(f));
            r.str_field("height_left", height_text(e));
            r.str_field("height_right", height_text(f));
            r.str_field("vars_pair", vars_text(&store.vars_pair(e, f)));
        }
    }
    r.print(as_json);
    Ok(0)
}

fn step(
    file: &Path,
    term: &str,
    mode: Mode,
    word: Option<&str>,
    as_json: bool,
) -> Result<u8, CliErr> {
    let mut moves: Vec<(String, String)> = Vec::new();
    match load_input(file)? {
        Input::Grammar(g) => {
            let e = parse_term(g.store(), &term_arg(term)?)?;
            match word {
                Some(w) => {
                    let ids = w
                        .split(',')
                        .map(|name| {
                            g.actions()
                                .iter()
                                .position(|a| a == name.trim())
                                .map(|i| fog_core::grammar::ActionId(i as u32))
                                .ok_or_else(|| {
                                    CliErr::input(format!("unknown action {name:?}"))
                                })
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    for t in g.step_word(e, &ids) {
                        moves.push(("result".to_string(), print_inline(g.store(), t)));
                    }
                }
                None => {
                    for (a, t) in g.transitions(e, mode.into()) {
                        moves.push((g.step_action_name(a), print_inline(g.store(), t)));
                    }
                }
            }
        }
        Input::Pds(m) => {
            if word.is_some() {
                return Err(CliErr::input("--word works on grammar files only"));
            }
            let cfg = m.parse_config(&term_arg(term)?)?;
            for (a, c) in m.transitions(&cfg) {
                let name = match a {
                    Some(a) => m.action_name(a).to_string(),
                    None => "eps".to_string(),
                };
                moves.push((name, m.print_config(&c)));
            }
        }
    }
    if as_json {
        let arr: Vec<Value> = moves
            .iter()
            .map(|(a, t)| json!({"action": a, "target": t}))
            .collect();
        println!("{}", json!({ "moves": arr }));
    } else {
        for (a, t) in &moves {
            println!("{a} -> {t}");
        }
    }
    Ok(0)
}

fn level_report(result: EqLevelResult, as_json: bool) -> u8 {
    let mut r = Report::new();
    match result {
        EqLevelResult::Finite(k) => {
            r.str_field("result", "finite");
            r.num_field("level", k);
            r.print(as_json);
            0
        }
        EqLevelResult::AtLeast(cap) => {
            r.str_field("result", "atleast");
            r.num_field("cap", cap);
            r.print(as_json);
            2
        }
    }
}

fn el(
    file: &Path,
    left: &str,
    right: &str,
    cap: u64,
    mode: Mode,
    budget: Option<u64>,
    as_json: bool,
) -> Result<u8, CliErr> {
    let budget = resolve_budget(budget, DEFAULT_MEMO_BUDGET)?;
    let result = match load_input(file)? {
        Input::Grammar(g) => {
            let e = parse_term(g.store(), &term_arg(left)?)?;
            let f = parse_term(g.store(), &term_arg(right)?)?;
            eq_level_bounded(
                &g,
                e,
                f,
                GameConfig::new(cap)
                    .with_mode(mode.into())
                    .with_memo_budget(budget),
            )?
        }
        Input::Pds(m) => {
            let c1 = m.parse_config(&term_arg(left)?)?;
            let c2 = m.parse_config(&term_arg(right)?)?;
            weak_eq_level_bounded(&m, &c1, &c2, cap, budget)?
        }
    };
    Ok(level_report(result, as_json))
}

fn decide(
    file: &Path,
    left: &str,
    right: &str,
    mode: Mode,
    budget: Option<u64>,
    as_json: bool,
) -> Result<u8, CliErr> {
    let budget = resolve_budget(budget, DEFAULT_STATE_BUDGET)?;
    let g = load_grammar(file)?;
    let e = parse_term(g.store(), &term_arg(left)?)?;
    let f = parse_term(g.store(), &term_arg(right)?)?;
    let mut r = Report::new();
    let code = match finite_state_decide(&g, e, f, mode.into(), budget) {
        FiniteStateOutcome::Bisimilar => {
            r.str_field("result", "bisimilar");
            0
        }
        FiniteStateOutcome::NotBisimilar(k) => {
            r.str_field("result", "not_bisimilar");
            r.num_field("level", k);
            0
        }
        FiniteStateOutcome::Inconclusive => {
            r.str_field("result", "inconclusive");
            2
        }
    };
    r.print(as_json);
    Ok(code)
}

fn constants_report(c: &GrammarConstants) -> Report {
    let mut r = Report::new();
    r.num_field("m", c.m);
    r.field("hinc", c.hinc, json!(c.hinc));
    r.num_field("sinc", c.sinc);
    r.big_field("d0", &c.d0);
    r.big_field("d1", &c.d1);
    r.big_field("d2", &c.d2);
    r.big_field("d3", &c.d3);
    r.big_field("d4", &c.d4);
    r.big_field("d5", &c.d5);
    r.big_field("s", &c.s);
    r.big_field("g", &c.g);
    r.big_field("c", &c.c);
    // n closes the block by contract.
    let nd = digits(&c.n) as u64;
    r.field("n_digits", nd, json!(nd));
    r.field("n", &c.n, Value::String(c.n.to_string()));
    r
}

fn constants(file: &Path, as_json: bool) -> Result<u8, CliErr> {
    let g = load_grammar(file)?;
    let c = compute_constants(&g)?;
    constants_report(&c).print(as_json);
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn basis(
    file: &Path,
    n: u64,
    s: u64,
    g: u64,
    c: u64,
    oracle: OracleKind,
    state_budget: Option<u64>,
    pairs_budget: u64,
    trace: Option<&Path>,
    subtract_above_j: bool,
    as_json: bool,
) -> Result<u8, CliErr> {
    let gram = load_grammar(file)?;
    let params = CandidateParams::new(n, s, g, c);
    let cfg = BasisConfig {
        oracle: match oracle {
            OracleKind::Exact => Oracle::Exact {
                state_budget: resolve_budget(state_budget, DEFAULT_STATE_BUDGET)?,
            },
            OracleKind::Effective => Oracle::Effective,
        },
        pairs_budget,
        subtract_above_j,
        ..BasisConfig::default()
    };
    let run = candidate_bound(&gram, &params, &cfg)?;
    if let Some(path) = trace {
        let mut text = String::new();
        for entry in &run.trace {
            text.push_str(&format_trace_entry(&gram, entry));
            text.push('\n');
        }
        fs::write(path, text)?;
    }
    let store = gram.store();
    let mut r = Report::new();
    r.big_field("e_b", &run.e_b);
    r.num_field("iterations", run.trace.len() as u64);
    r.num_field("basis_size", run.state.basis.len() as u64);
    for i in 0..=n as usize {
        r.field(
            &format!("s_{i}"),
            &run.state.s_arr[i],
            Value::String(run.state.s_arr[i].to_string()),
        );
        r.num_field(&format!("e_{i}"), run.state.e_arr[i]);
        r.num_field(&format!("p_{i}"), run.state.p_arr[i].len() as u64);
    }
    r.print(as_json);
    if as_json {
        return Ok(0);
    }
    for ((e, f), level) in &run.state.basis {
        println!(
            "pair={}|{} level={level}",
            print_inline(store, *e),
            print_inline(store, *f)
        );
    }
    Ok(0)
}

fn translate(direction: Direction, file: &Path, as_json: bool) -> Result<u8, CliErr> {
    let (text, table) = match direction {
        Direction::Gram2pds => {
            let g = load_grammar(file)?;
            let t = grammar_to_pds(&g);
            (t.pds.serialize(), t.table(&g))
        }
        Direction::Pds2gram => {
            let m = match load_input(file)? {
                Input::Pds(m) => m,
                Input::Grammar(_) => {
                    return Err(CliErr::input("pds2gram takes a pds file"))
                }
            };
            let flags = m.classify();
            let (m, note) = if flags.restricted && !flags.popping_eps {
                (
                    remove_nonpopping_eps(&m)?,
                    "# non-popping silent rules were saturated away\n",
                )
            } else {
                (m, "")
            };
            let t = pds_to_grammar(&m)?;
            (t.grammar.serialize(), format!("{note}{}", t.table()))
        }
        Direction::Saturate => {
            let m = match load_input(file)? {
                Input::Pds(m) => m,
                Input::Grammar(_) => {
                    return Err(CliErr::input("saturate takes a pds file"))
                }
            };
            (remove_nonpopping_eps(&m)?.serialize(), String::new())
        }
    };
    if as_json {
        println!("{}", json!({"output": text, "table": table}));
    } else {
        print!("{text}{table}");
    }
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn ordinal_cmd(
    op: OrdOp,
    alpha: Option<&str>,
    x: Option<u64>,
    h: &str,
    budget: Option<u64>,
    n: Option<u64>,
    n0: Option<u64>,
    as_json: bool,
) -> Result<u8, CliErr> {
    let control = match h {
        "succ" => ControlFunction::successor(),
        other => {
            return Err(CliErr::input(format!(
                "unknown control function {other:?}; only \"succ\" is built in"
            )))
        }
    };
    let need_alpha = || -> Result<Ordinal, CliErr> {
        Ok(Ordinal::parse(
            alpha.ok_or_else(|| CliErr::input("--alpha is required"))?,
        )?)
    };
    let need_x = || x.ok_or_else(|| CliErr::input("--x is required"));
    let mut r = Report::new();
    match op {
        OrdOp::Hardy | OrdOp::Cichon => {
            let a = need_alpha()?;
            let xv = BigUint::from(need_x()?);
            let b = resolve_budget(budget, DEFAULT_HIERARCHY_BUDGET)?;
            let value = match op {
                OrdOp::Hardy => hardy(&control, &a, &xv, b)?,
                _ => cichon(&control, &a, &xv, b)?,
            };
            r.str_field("alpha", &a);
            r.big_field("value", &value);
        }
        OrdOp::Norm => {
            let a = need_alpha()?;
            r.str_field("alpha", &a);
            r.big_field("value", &a.norm()?);
        }
        OrdOp::Fund => {
            let a = need_alpha()?;
            let xv = BigUint::from(need_x()?);
            r.str_field("alpha", &a);
            r.str_field("value", a.fund_seq(&xv)?);
        }
        OrdOp::Descent => {
            let n = n.ok_or_else(|| CliErr::input("--n is required"))?;
            let n0 = BigUint::from(n0.ok_or_else(|| CliErr::input("--n0 is required"))?);
            let b = resolve_budget(budget, 1 << 20)?;
            let value = max_controlled_descent(n, &n0, &control, b)?;
            r.str_field("limit", format!("w^{}", n + 1));
            r.big_field("value", &value);
        }
    }
    r.print(as_json);
    Ok(0)
}

fn bound(file: &Path, as_json: bool) -> Result<u8, CliErr> {
    let g = load_grammar(file)?;
    let c = compute_constants(&g)?;
    let report = bound_report(
        &c.n,
        &c.s,
        &c.g,
        &c.c,
        &BigUint::from(g.size()),
    );
    let mut r = Report::new();
    r.big_field("n", &report.n);
    r.big_field("grammar_size", &report.grammar_size);
    r.str_field("class_fixed_n", &report.class_fixed_n);
    r.str_field("class_general", &report.class_general);
    r.str_field("rank_domain", &report.rank_domain);
    r.str_field("n0_bound", &report.n0_bound);
    r.str_field("control_fn", &report.control_fn);
    r.str_field("iteration_bound", &report.iteration_bound);
    r.str_field("eb_bound", &report.eb_bound);
    r.str_field("final_bound", &report.final_bound);
    r.str_field("h_definition", &report.h_definition);
    r.str_field("per_pair_bound", &report.per_pair_bound);
    r.print(as_json);
    Ok(0)
}

fn gen_cmd(
    kind: GenKind,
    seed: u64,
    count: u32,
    gshape: GrammarShape,
    pshape: PdsShape,
    as_json: bool,
) -> Result<u8, CliErr> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let items: Vec<String> = (0..count.max(1))
        .map(|_| match kind {
            GenKind::Grammar => grammar_text(&mut rng, &gshape),
            GenKind::Pds => pds_text(&mut rng, &pshape),
        })
        .collect();
    if as_json {
        println!("{}", json!({ "items": items }));
    } else {
        for (i, item) in items.iter().enumerate() {
            if items.len() > 1 {
                println!("# item {i}");
            }
            print!("{item}");
        }
    }
    Ok(0)
}
