//! Two-way machines with 8-tuple instructions: symbol tests (gsm), regular
//! look-around (rla), MSO tests and jumps (mso), and tape-rewriting Hennie
//! machines.
//!
//! An instruction `(p, t, q1, α1, μ1, q0, α0, μ0)` in state `p` evaluates
//! the test `t` at the head and continues with the first branch if it holds,
//! with the second otherwise. Several instructions for one state make the
//! machine nondeterministic: any of them may be chosen.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::graph::{ngr_raw, tape};
use crate::mso::compile::{check_functional, compile_over, CompileError, Compiled};
use crate::mso::dfa::CharDfa;
use crate::mso::formula::{self as f, Formula};
use crate::mso::regex::{self, Regex, RegexError};
use crate::mso::{EvalError, Evaluator, PathMode};
use crate::sym::{self, Alphabet, LEFT, RIGHT};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MachineError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("machine is not deterministic: state `{0}` has several instructions")]
    NotDeterministic(String),
    #[error("operation needs a {0} machine")]
    Kind(&'static str),
    #[error("invalid machine: {0}")]
    Invalid(String),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Regex(#[from] RegexError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MachineKind {
    Gsm,
    Rla,
    Mso,
    Hennie,
}

impl MachineKind {
    pub fn name(self) -> &'static str {
        match self {
            MachineKind::Gsm => "gsm",
            MachineKind::Rla => "rla",
            MachineKind::Mso => "mso",
            MachineKind::Hennie => "hennie",
        }
    }

    pub fn parse(s: &str) -> Option<MachineKind> {
        match s {
            "gsm" => Some(MachineKind::Gsm),
            "rla" => Some(MachineKind::Rla),
            "mso" => Some(MachineKind::Mso),
            "hennie" => Some(MachineKind::Hennie),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Test {
    Sym(char),
    /// Prefix in `left`, symbol, suffix in `right`; automata over `⊢Σ⊣`.
    Rla { left: CharDfa, sym: char, right: CharDfa },
    /// Formula with free `x`.
    Mso(Formula),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Move {
    Step(i8),
    /// Functional formula with free `x` (here) and `y` (target).
    Mso(Formula),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Branch {
    pub state: usize,
    pub out: Vec<char>,
    pub mv: Move,
    /// Hennie machines: symbol written to the current cell.
    pub write: Option<char>,
}

impl Branch {
    pub fn step(state: usize, out: &str, d: i8) -> Branch {
        Branch { state, out: out.chars().collect(), mv: Move::Step(d), write: None }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instruction {
    pub from: usize,
    pub test: Test,
    pub then: Branch,
    pub els: Branch,
}

impl Instruction {
    pub fn branch(&self, taken: bool) -> &Branch {
        if taken {
            &self.then
        } else {
            &self.els
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Machine {
    pub name: String,
    pub kind: MachineKind,
    pub input: Alphabet,
    pub output: Alphabet,
    /// Hennie machines: the tape alphabet, containing the input alphabet.
    pub work: Option<Alphabet>,
    /// Hennie machines: declared visit bound.
    pub visits: Option<usize>,
    pub states: Vec<String>,
    pub initial: usize,
    pub fin: usize,
    pub insts: Vec<Instruction>,
}

/// Findings of [`Machine::validate`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Report {
    pub deterministic: bool,
    pub short_output: bool,
    pub final_is_halting: bool,
    pub rla_normalized: bool,
    /// Instruction index and witness tape for every non-functional jump.
    pub non_functional: Vec<(usize, String)>,
    pub problems: Vec<String>,
}

impl Report {
    pub fn ok(&self) -> bool {
        self.final_is_halting && self.rla_normalized && self.non_functional.is_empty() && self.problems.is_empty()
    }
}

impl Machine {
    pub fn new(name: &str, kind: MachineKind, input: Alphabet, output: Alphabet, states: &[&str], initial: &str, fin: &str) -> Machine {
        let states: Vec<String> = states.iter().map(|s| s.to_string()).collect();
        let idx = |s: &str| states.iter().position(|t| t == s).expect("declared state");
        Machine {
            name: name.into(),
            kind,
            input,
            output,
            work: None,
            visits: None,
            initial: idx(initial),
            fin: idx(fin),
            states,
            insts: Vec::new(),
        }
    }

    pub fn state(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s == name)
    }

    /// Adds a state with a name derived from `base`; returns its index.
    pub fn fresh_state(&mut self, base: &str) -> usize {
        let mut name = base.to_string();
        let mut i = 1;
        while self.state(&name).is_some() {
            name = format!("{base}~{i}");
            i += 1;
        }
        self.states.push(name);
        self.states.len() - 1
    }

    /// Symbols that can appear on the tape, markers included.
    pub fn tape_symbols(&self) -> Vec<char> {
        match &self.work {
            Some(w) => w.with_markers(),
            None => self.input.with_markers(),
        }
    }

    pub fn instructions_from(&self, p: usize) -> impl Iterator<Item = (usize, &Instruction)> {
        self.insts.iter().enumerate().filter(move |(_, i)| i.from == p)
    }

    pub fn is_deterministic(&self) -> bool {
        let mut seen = HashSet::new();
        self.insts.iter().all(|i| seen.insert(i.from))
    }

    /// Problems that make the machine ill-formed: unknown states, symbols
    /// outside the alphabets, tests or moves of the wrong kind.
    pub fn structural_problems(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let tape_syms = self.tape_symbols();
        let n = self.states.len();
        for (k, i) in self.insts.iter().enumerate() {
            if i.from >= n || i.then.state >= n || i.els.state >= n {
                problems.push(format!("instruction {k} mentions an undeclared state"));
            }
            for b in [&i.then, &i.els] {
                if let Some(c) = b.out.iter().find(|c| !self.output.contains(**c)) {
                    problems.push(format!("instruction {k} writes `{c}` outside the output alphabet"));
                }
                match (self.kind, &b.write) {
                    (MachineKind::Hennie, Some(c)) if !tape_syms.contains(c) => {
                        problems.push(format!("instruction {k} rewrites with `{c}` outside the work alphabet"))
                    }
                    (MachineKind::Hennie, _) => {}
                    (_, Some(_)) => problems.push(format!("instruction {k} rewrites the tape")),
                    _ => {}
                }
                let ok = matches!(
                    (self.kind, &b.mv),
                    (MachineKind::Mso, Move::Mso(_)) | (MachineKind::Mso, Move::Step(_)) | (_, Move::Step(-1..=1))
                );
                if !ok {
                    problems.push(format!("instruction {k} has a move not allowed for {} machines", self.kind.name()));
                }
            }
            let test_ok = matches!(
                (self.kind, &i.test),
                (MachineKind::Gsm | MachineKind::Hennie, Test::Sym(_)) | (MachineKind::Rla, Test::Rla { .. }) | (MachineKind::Mso, Test::Mso(_))
            );
            if !test_ok {
                problems.push(format!("instruction {k} has a test not allowed for {} machines", self.kind.name()));
            }
            if let Test::Sym(c) = i.test {
                if !tape_syms.contains(&c) {
                    problems.push(format!("instruction {k} tests `{c}` outside the tape alphabet"));
                }
            }
        }
        if self.kind == MachineKind::Hennie {
            match &self.work {
                Some(w) if self.input.symbols().iter().all(|c| w.contains(*c)) => {}
                _ => problems.push("work alphabet must contain the input alphabet".into()),
            }
        }
        problems
    }

    pub fn validate(&self) -> Report {
        let mut problems = self.structural_problems();
        let syms = self.input.with_markers();
        let shape = tape_language(&self.input);
        let inside = |left: &CharDfa, c: char, right: &CharDfa| -> Result<bool, crate::mso::dfa::DfaError> {
            let d = left.concat_via(c, right)?;
            d.intersect(&shape)?.equivalent(&d)
        };
        let rla_normalized = self.insts.iter().all(|i| match &i.test {
            Test::Rla { left, sym, right } => {
                left.syms == syms && right.syms == syms && inside(left, *sym, right).unwrap_or(false)
            }
            _ => true,
        });
        let mut non_functional = Vec::new();
        for (k, i) in self.insts.iter().enumerate() {
            for b in [&i.then, &i.els] {
                if let Move::Mso(phi) = &b.mv {
                    match check_functional(phi, &self.input) {
                        Ok(r) if !r.functional => {
                            let (t, ..) = r.witness.unwrap();
                            non_functional.push((k, sym::render(&t)));
                        }
                        Ok(_) => {}
                        Err(e) => problems.push(format!("instruction {k}: {e}")),
                    }
                }
            }
        }
        Report {
            deterministic: self.is_deterministic(),
            short_output: self.insts.iter().all(|i| i.then.out.len() <= 1 && i.els.out.len() <= 1),
            final_is_halting: self.insts.iter().all(|i| i.from != self.fin),
            rla_normalized,
            non_functional,
            problems,
        }
    }
}

/// `⊢Σ*⊣` over `[⊢, Σ.., ⊣]`.
pub fn tape_language(sigma: &Alphabet) -> CharDfa {
    let syms = sigma.with_markers();
    let pre = CharDfa::first_then(&syms, LEFT, sigma.symbols());
    pre.concat_via(RIGHT, &CharDfa::epsilon(&syms)).expect("same symbols")
}

fn regex_dfa(re: &str, syms: &[char]) -> Result<CharDfa, RegexError> {
    regex::parse(re)?.to_dfa(syms)
}

/// Restricts an rla test so that `left · sym · right ⊆ ⊢Σ*⊣`.
pub fn normalize_rla(sigma: &Alphabet, left: &CharDfa, sym: char, right: &CharDfa) -> Result<(CharDfa, CharDfa), MachineError> {
    let syms = sigma.with_markers();
    let inner = sigma.symbols();
    let eps = CharDfa::epsilon(&syms);
    let l_shape = if sym == LEFT { eps.clone() } else { CharDfa::first_then(&syms, LEFT, inner) };
    let r_shape = if sym == RIGHT { eps } else { CharDfa::inner_then(&syms, inner, RIGHT) };
    Ok((left.over(&syms).intersect(&l_shape).map_err(bad)?, right.over(&syms).intersect(&r_shape).map_err(bad)?))
}

fn bad(e: impl fmt::Display) -> MachineError {
    MachineError::Invalid(e.to_string())
}

// ---------------------------------------------------------------------------
// Simulation

/// How MSO tests and jumps are evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MsoMode {
    Naive,
    Compiled,
    /// Compiled when the formula has set quantifiers or the input is longer
    /// than 10 symbols.
    Auto,
}

/// One step of a computation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepRecord {
    pub state: usize,
    pub pos: usize,
    pub inst: usize,
    pub taken: bool,
    pub out: Vec<char>,
    pub write: Option<char>,
    pub next_state: usize,
    pub next_pos: usize,
}

/// An accepting computation on `⊢input⊣`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Computation {
    pub input: Vec<char>,
    pub steps: Vec<StepRecord>,
    pub final_pos: usize,
}

impl Computation {
    pub fn output(&self) -> String {
        self.steps.iter().flat_map(|s| s.out.iter()).collect()
    }

    /// Number of configurations at each tape position.
    pub fn visits(&self) -> Vec<usize> {
        let mut v = vec![0; self.input.len() + 2];
        for s in &self.steps {
            v[s.pos] += 1;
        }
        v[self.final_pos] += 1;
        v
    }
}

/// Result of a deterministic run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RunResult {
    Accepted(Computation),
    /// No instruction, a failed move, or a repeated configuration.
    Undefined(&'static str),
}

impl RunResult {
    pub fn output(&self) -> Option<String> {
        match self {
            RunResult::Accepted(c) => Some(c.output()),
            RunResult::Undefined(_) => None,
        }
    }
}

/// Simulator with caches for compiled formulas; reusable across inputs.
pub struct Simulator<'m> {
    pub m: &'m Machine,
    pub mode: MsoMode,
    compiled: RefCell<HashMap<String, Arc<Compiled>>>,
}

/// Test and jump results for one input, filled on demand.
/// Target of a jump from each position, keyed by instruction and branch.
type JumpTables = HashMap<(usize, bool), Arc<Vec<Option<usize>>>>;

struct Tables {
    t: Vec<char>,
    tests: RefCell<HashMap<usize, Arc<Vec<bool>>>>,
    jumps: RefCell<JumpTables>,
}

impl Tables {
    fn new(t: &[char]) -> Tables {
        Tables { t: t.to_vec(), tests: RefCell::default(), jumps: RefCell::default() }
    }
}

struct Successor {
    inst: usize,
    taken: bool,
    next_state: usize,
    next_pos: usize,
}

impl<'m> Simulator<'m> {
    pub fn new(m: &'m Machine) -> Self {
        Simulator { m, mode: MsoMode::Auto, compiled: RefCell::default() }
    }

    pub fn with_mode(m: &'m Machine, mode: MsoMode) -> Self {
        Simulator { m, mode, compiled: RefCell::default() }
    }

    fn use_compiled(&self, phi: &Formula, n: usize) -> bool {
        match self.mode {
            MsoMode::Naive => false,
            MsoMode::Compiled => true,
            MsoMode::Auto => phi.set_quantifiers() > 0 || n > 10,
        }
    }

    fn compiled(&self, phi: &Formula) -> Result<Arc<Compiled>, MachineError> {
        let key = phi.to_string();
        if let Some(c) = self.compiled.borrow().get(&key) {
            return Ok(c.clone());
        }
        let c = Arc::new(compile_over(phi, &self.m.tape_symbols(), crate::graph::Encoding::Node)?);
        self.compiled.borrow_mut().insert(key, c.clone());
        Ok(c)
    }

    fn test_table(&self, phi: &Formula, t: &[char]) -> Result<Vec<bool>, MachineError> {
        if self.use_compiled(phi, t.len() - 2) {
            let c = self.compiled(phi)?;
            Ok((0..t.len()).map(|u| c.accepts(t, &[("x", u)], &[])).collect())
        } else {
            let g = ngr_raw(t);
            let mut e = Evaluator::new(&g, PathMode::Reach);
            (0..t.len()).map(|u| e.holds(phi, &[("x", u)]).map_err(MachineError::from)).collect()
        }
    }

    fn jump_table(&self, phi: &Formula, t: &[char]) -> Result<Vec<Option<usize>>, MachineError> {
        let n = t.len();
        let rel: Vec<Vec<bool>> = if self.use_compiled(phi, n - 2) {
            let c = self.compiled(phi)?;
            (0..n).map(|u| (0..n).map(|v| c.accepts(t, &[("x", u), ("y", v)], &[])).collect()).collect()
        } else {
            let g = ngr_raw(t);
            let mut e = Evaluator::new(&g, PathMode::Reach);
            let mut rows = Vec::with_capacity(n);
            for u in 0..n {
                let mut row = Vec::with_capacity(n);
                for v in 0..n {
                    row.push(e.holds(phi, &[("x", u), ("y", v)])?);
                }
                rows.push(row);
            }
            rows
        };
        // A jump with no target, or with several, is stuck.
        Ok(rel
            .iter()
            .map(|row| {
                let mut hits = row.iter().enumerate().filter(|(_, b)| **b).map(|(v, _)| v);
                match (hits.next(), hits.next()) {
                    (Some(v), None) => Some(v),
                    _ => None,
                }
            })
            .collect())
    }

    fn test(&self, k: usize, t: &[char], pos: usize, tables: &Tables) -> Result<bool, MachineError> {
        Ok(match &self.m.insts[k].test {
            Test::Sym(c) => t[pos] == *c,
            Test::Rla { left, sym, right } => {
                t[pos] == *sym && left.accepts(&t[..pos]) && right.accepts(&t[pos + 1..])
            }
            Test::Mso(phi) => {
                let cached = tables.tests.borrow().get(&k).cloned();
                let row = match cached {
                    Some(r) => r,
                    None => {
                        let r = Arc::new(self.test_table(phi, &tables.t)?);
                        tables.tests.borrow_mut().insert(k, r.clone());
                        r
                    }
                };
                row[pos]
            }
        })
    }

    fn jump(&self, k: usize, taken: bool, phi: &Formula, pos: usize, tables: &Tables) -> Result<Option<usize>, MachineError> {
        let cached = tables.jumps.borrow().get(&(k, taken)).cloned();
        let row = match cached {
            Some(r) => r,
            None => {
                let r = Arc::new(self.jump_table(phi, &tables.t)?);
                tables.jumps.borrow_mut().insert((k, taken), r.clone());
                r
            }
        };
        Ok(row[pos])
    }

    fn successors(&self, state: usize, t: &[char], pos: usize, tables: &Tables) -> Result<Vec<Successor>, MachineError> {
        let mut out = Vec::new();
        for (k, inst) in self.m.instructions_from(state) {
            let taken = self.test(k, t, pos, tables)?;
            let b = inst.branch(taken);
            let next = match &b.mv {
                Move::Step(d) => {
                    let p = pos as i64 + *d as i64;
                    (0..t.len() as i64).contains(&p).then_some(p as usize)
                }
                Move::Mso(phi) => self.jump(k, taken, phi, pos, tables)?,
            };
            if let Some(next_pos) = next {
                out.push(Successor { inst: k, taken, next_state: b.state, next_pos });
            }
        }
        Ok(out)
    }

    fn record(&self, s: &Successor, state: usize, pos: usize) -> StepRecord {
        let b = self.m.insts[s.inst].branch(s.taken);
        StepRecord {
            state,
            pos,
            inst: s.inst,
            taken: s.taken,
            out: b.out.clone(),
            write: b.write,
            next_state: s.next_state,
            next_pos: s.next_pos,
        }
    }

    /// Deterministic simulation from `(q_in, 0)`.
    pub fn run_deterministic(&mut self, w: &str) -> Result<RunResult, MachineError> {
        if let Some(p) = (0..self.m.states.len()).find(|&p| self.m.instructions_from(p).count() > 1) {
            return Err(MachineError::NotDeterministic(self.m.states[p].clone()));
        }
        let input: Vec<char> = w.chars().collect();
        let mut t = tape(&input);
        let tables = Tables::new(&t);
        let hennie = self.m.kind == MachineKind::Hennie;
        let mut seen: HashSet<(usize, usize, Vec<char>)> = HashSet::new();
        let (mut state, mut pos) = (self.m.initial, 0);
        let mut steps = Vec::new();
        let mut visits = vec![0usize; t.len()];
        loop {
            visits[pos] += 1;
            if !hennie {
                // Configurations never repeat, so a cell sees each state at most once.
                debug_assert!(visits[pos] <= self.m.states.len());
            }
            if state == self.m.fin {
                return Ok(RunResult::Accepted(Computation { input, steps, final_pos: pos }));
            }
            let key = (state, pos, if hennie { t.clone() } else { Vec::new() });
            if !seen.insert(key) {
                return Ok(RunResult::Undefined("loop"));
            }
            let succ = self.successors(state, &t, pos, &tables)?;
            let Some(s) = succ.first() else {
                return Ok(RunResult::Undefined("stuck"));
            };
            let rec = self.record(s, state, pos);
            if let Some(c) = rec.write {
                t[pos] = c;
            }
            state = s.next_state;
            pos = s.next_pos;
            steps.push(rec);
        }
    }

    /// Outputs of all accepting computations visiting no cell more than `k`
    /// times.
    pub fn enumerate(&mut self, w: &str, k: usize) -> Result<BTreeSet<String>, MachineError> {
        let mut outs = BTreeSet::new();
        self.for_each_computation(w, k, &mut |c| {
            outs.insert(c.output());
        })?;
        Ok(outs)
    }

    /// All accepting `k`-visiting computations, depth first, branches in
    /// instruction order.
    pub fn computations(&mut self, w: &str, k: usize) -> Result<Vec<Computation>, MachineError> {
        let mut all = Vec::new();
        self.for_each_computation(w, k, &mut |c| all.push(c.clone()))?;
        Ok(all)
    }

    /// Computations that come back to a configuration without writing
    /// output in between are skipped: cutting the cycle out leaves the
    /// output unchanged and visits no cell more often.
    pub fn for_each_computation(&mut self, w: &str, k: usize, visit: &mut dyn FnMut(&Computation)) -> Result<(), MachineError> {
        let input: Vec<char> = w.chars().collect();
        let t = tape(&input);
        let tables = Tables::new(&t);
        let mut s = Search {
            k,
            visits: vec![0; t.len()],
            t,
            c: Computation { input, steps: Vec::new(), final_pos: 0 },
            out_len: 0,
            on_path: HashMap::new(),
            error: None,
        };
        self.dfs(self.m.initial, 0, &mut s, &tables, visit);
        s.error.map_or(Ok(()), Err)
    }

    fn dfs(&self, state: usize, pos: usize, s: &mut Search, tables: &Tables, visit: &mut dyn FnMut(&Computation)) {
        if s.visits[pos] == s.k {
            return;
        }
        let key = (state, pos, if self.m.kind == MachineKind::Hennie { s.t.clone() } else { Vec::new() });
        let seen = s.on_path.entry(key.clone()).or_default();
        if seen.last() == Some(&s.out_len) {
            return;
        }
        seen.push(s.out_len);
        s.visits[pos] += 1;
        if state == self.m.fin {
            s.c.final_pos = pos;
            visit(&s.c);
        } else {
            let succs = match self.successors(state, &s.t, pos, tables) {
                Ok(v) => v,
                Err(e) => {
                    s.error.get_or_insert(e);
                    Vec::new()
                }
            };
            for succ in succs {
                let rec = self.record(&succ, state, pos);
                let old = s.t[pos];
                if let Some(w) = rec.write {
                    s.t[pos] = w;
                }
                s.out_len += rec.out.len();
                s.c.steps.push(rec);
                self.dfs(succ.next_state, succ.next_pos, s, tables, visit);
                let rec = s.c.steps.pop().unwrap();
                s.out_len -= rec.out.len();
                s.t[pos] = old;
            }
        }
        s.visits[pos] -= 1;
        s.on_path.get_mut(&key).unwrap().pop();
    }
}

struct Search {
    k: usize,
    t: Vec<char>,
    visits: Vec<usize>,
    c: Computation,
    out_len: usize,
    on_path: HashMap<(usize, usize, Vec<char>), Vec<usize>>,
    error: Option<MachineError>,
}

impl Machine {
    pub fn run_deterministic(&self, w: &str) -> Result<RunResult, MachineError> {
        Simulator::new(self).run_deterministic(w)
    }

    pub fn run(&self, w: &str) -> Result<Option<String>, MachineError> {
        Ok(self.run_deterministic(w)?.output())
    }

    pub fn enumerate(&self, w: &str, k: usize) -> Result<BTreeSet<String>, MachineError> {
        Simulator::new(self).enumerate(w, k)
    }
}

// ---------------------------------------------------------------------------
// Normal forms

/// Test that holds everywhere, in the machine's own test language.
fn tautology(m: &Machine) -> Test {
    match m.kind {
        MachineKind::Gsm | MachineKind::Hennie => Test::Sym(LEFT),
        MachineKind::Rla => {
            let syms = m.input.with_markers();
            let inner = m.input.symbols();
            Test::Rla {
                left: CharDfa::epsilon(&syms),
                sym: LEFT,
                right: CharDfa::inner_then(&syms, inner, RIGHT),
            }
        }
        MachineKind::Mso => Test::Mso(f::tt()),
    }
}

/// An instruction whose branches coincide, so its test does not matter.
fn unconditional(m: &Machine, from: usize, b: Branch) -> Instruction {
    Instruction { from, test: tautology(m), then: b.clone(), els: b }
}

impl Machine {
    /// Splits outputs longer than one symbol over chains of fresh states
    /// that stay on the cell.
    pub fn normalize_short_output(&self) -> Machine {
        let mut m = self.clone();
        m.insts.clear();
        for inst in &self.insts {
            let mut inst = inst.clone();
            let mut extra = Vec::new();
            for taken in [true, false] {
                let b = if taken { &mut inst.then } else { &mut inst.els };
                if b.out.len() <= 1 {
                    continue;
                }
                let out = b.out.clone();
                let last = Branch { state: b.state, out: vec![*out.last().unwrap()], mv: b.mv.clone(), write: None };
                let mut chain = Vec::new();
                for _ in 1..out.len() {
                    let base = format!("{}.{}", self.states[inst.from], out.len());
                    chain.push(m.fresh_state(&base));
                }
                b.out = vec![out[0]];
                b.state = chain[0];
                b.mv = Move::Step(0);
                for (i, &s) in chain.iter().enumerate() {
                    let br = if i + 1 < chain.len() {
                        Branch { state: chain[i + 1], out: vec![out[i + 1]], mv: Move::Step(0), write: None }
                    } else {
                        last.clone()
                    };
                    extra.push((s, br));
                }
            }
            m.insts.push(inst);
            for (s, b) in extra {
                let u = unconditional(&m, s, b);
                m.insts.push(u);
            }
        }
        m
    }

    /// Makes the initial and final states distinct by moving acceptance to
    /// a fresh state one stay-step later.
    pub fn separate_final_state(&self) -> Machine {
        if self.initial != self.fin {
            return self.clone();
        }
        let mut m = self.clone();
        let f_new = m.fresh_state(&format!("{}f", self.states[self.fin]));
        let old = m.fin;
        m.fin = f_new;
        // Runs stop on entering the final state, so its instructions were dead.
        m.insts.retain(|i| i.from != old);
        let b = Branch { state: f_new, out: vec![], mv: Move::Step(0), write: None };
        let u = unconditional(&m, old, b);
        m.insts.push(u);
        m
    }
}

/// A 5-tuple instruction `(p, σ, q, α, ε)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiveTuple {
    pub from: String,
    pub sym: char,
    pub to: String,
    pub out: String,
    pub mv: i8,
}

impl FiveTuple {
    pub fn new(from: &str, sym: char, to: &str, out: &str, mv: i8) -> Self {
        FiveTuple { from: from.into(), sym, to: to.into(), out: out.into(), mv }
    }
}

/// Builds an 8-tuple gsm. Without `deterministic`, every 5-tuple gets a
/// dummy alternative `(p, ε, 0)`; with it, the alternatives of state `p`
/// are tried in sequence through copies `p^(1) .. p^(k+1)`.
#[allow(clippy::too_many_arguments)]
pub fn to_eight_tuple(
    name: &str,
    input: Alphabet,
    output: Alphabet,
    states: &[&str],
    initial: &str,
    fin: &str,
    tuples: &[FiveTuple],
    deterministic: bool,
) -> Result<Machine, MachineError> {
    let mut m = Machine::new(name, MachineKind::Gsm, input, output, states, initial, fin);
    let st = |m: &Machine, s: &str| m.state(s).ok_or_else(|| MachineError::Invalid(format!("unknown state `{s}`")));
    if !deterministic {
        for t in tuples {
            let p = st(&m, &t.from)?;
            let q = st(&m, &t.to)?;
            m.insts.push(Instruction {
                from: p,
                test: Test::Sym(t.sym),
                then: Branch::step(q, &t.out, t.mv),
                els: Branch::step(p, "", 0),
            });
        }
        return Ok(m);
    }
    let mut groups: BTreeMap<usize, Vec<&FiveTuple>> = BTreeMap::new();
    for t in tuples {
        groups.entry(st(&m, &t.from)?).or_default().push(t);
    }
    for (p, alts) in groups {
        let mut cur = p;
        for (i, t) in alts.iter().enumerate() {
            let next = m.fresh_state(&format!("{}^{}", m.states[p], i + 2));
            let q = st(&m, &t.to)?;
            m.insts.push(Instruction {
                from: cur,
                test: Test::Sym(t.sym),
                then: Branch::step(q, &t.out, t.mv),
                els: Branch::step(next, "", 0),
            });
            cur = next;
        }
    }
    Ok(m)
}

// ---------------------------------------------------------------------------
// Text format

fn perr(line: usize, msg: impl Into<String>) -> MachineError {
    MachineError::Parse { line, msg: msg.into() }
}

/// Splits at the first occurrence of `sep` outside parentheses.
fn split_top(s: &str, sep: &str) -> Option<(String, String)> {
    let mut depth = 0i32;
    let b = s.as_bytes();
    let mut i = 0;
    while i < b.len() {
        match b[i] {
            b'(' => depth += 1,
            b')' => depth -= 1,
            _ => {
                if depth == 0 && s[i..].starts_with(sep) {
                    return Some((s[..i].to_string(), s[i + sep.len()..].to_string()));
                }
            }
        }
        i += 1;
    }
    None
}

fn parse_move(s: &str, line: usize) -> Result<Move, MachineError> {
    let s = s.trim();
    if let Some(rest) = s.strip_prefix("mso") {
        let phi: Formula = rest.trim().parse().map_err(|e: f::FormulaError| perr(line, e.to_string()))?;
        return Ok(Move::Mso(phi));
    }
    match s {
        "-1" => Ok(Move::Step(-1)),
        "0" => Ok(Move::Step(0)),
        "+1" | "1" => Ok(Move::Step(1)),
        _ => Err(perr(line, format!("bad move `{s}`"))),
    }
}

impl Machine {
    fn parse_branch(&self, s: &str, line: usize) -> Result<Branch, MachineError> {
        let s = s.trim();
        let mut parts = s.splitn(3, char::is_whitespace);
        let q = parts.next().unwrap_or("");
        let out = parts.next().ok_or_else(|| perr(line, "branch needs `<state> <out> <move>`"))?;
        let rest = parts.next().ok_or_else(|| perr(line, "branch needs a move"))?.trim();
        let state = self.state(q).ok_or_else(|| perr(line, format!("unknown state `{q}`")))?;
        let out: Vec<char> = if out == "-" { vec![] } else { out.chars().collect() };
        let (mv, write) = if self.kind == MachineKind::Hennie {
            let mut p = rest.split_whitespace();
            let mv = parse_move(p.next().unwrap_or(""), line)?;
            let w = p.next().ok_or_else(|| perr(line, "hennie branch needs a rewrite symbol or `-`"))?;
            let write = if w == "-" { None } else { Some(sym::parse_token(w).map_err(|e| perr(line, e.to_string()))?) };
            if p.next().is_some() {
                return Err(perr(line, "trailing text in branch"));
            }
            (mv, write)
        } else {
            (parse_move(rest, line)?, None)
        };
        Ok(Branch { state, out, mv, write })
    }

    fn parse_test(&self, s: &str, line: usize) -> Result<Test, MachineError> {
        let s = s.trim();
        let (head, rest) = s.split_once(char::is_whitespace).ok_or_else(|| perr(line, "missing test"))?;
        let rest = rest.trim();
        match head {
            "sym" => Ok(Test::Sym(sym::parse_token(rest).map_err(|e| perr(line, e.to_string()))?)),
            "mso" => Ok(Test::Mso(rest.parse().map_err(|e: f::FormulaError| perr(line, e.to_string()))?)),
            "rla" => {
                let p: Vec<&str> = rest.split_whitespace().collect();
                let [l, c, r] = p.as_slice() else {
                    return Err(perr(line, "rla test needs `<regex> <symbol> <regex>`"));
                };
                let syms = self.input.with_markers();
                let c = sym::parse_token(c).map_err(|e| perr(line, e.to_string()))?;
                if !syms.contains(&c) {
                    return Err(perr(line, format!("test symbol `{}` is not on the tape", sym::token(c))));
                }
                let ld = regex_dfa(l, &syms).map_err(|e| perr(line, e.to_string()))?;
                let rd = regex_dfa(r, &syms).map_err(|e| perr(line, e.to_string()))?;
                let (left, right) = normalize_rla(&self.input, &ld, c, &rd)?;
                Ok(Test::Rla { left, sym: c, right })
            }
            _ => Err(perr(line, format!("unknown test `{head}`"))),
        }
    }
}

impl std::str::FromStr for Machine {
    type Err = MachineError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut header: BTreeMap<&str, (usize, String)> = BTreeMap::new();
        let mut insts: Vec<(usize, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('%').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            match key {
                "inst" => insts.push((i + 1, rest.trim().to_string())),
                "machine" | "kind" | "input" | "output" | "work" | "visits" | "states" | "initial" | "final" => {
                    if header.insert(key, (i + 1, rest.trim().to_string())).is_some() {
                        return Err(perr(i + 1, format!("duplicate `{key}` line")));
                    }
                }
                _ => return Err(perr(i + 1, format!("unknown directive `{key}`"))),
            }
        }
        let get = |k: &str| header.get(k).cloned().ok_or_else(|| perr(1, format!("missing `{k}` line")));
        let (_, name) = get("machine")?;
        let (kl, kind) = get("kind")?;
        let kind = MachineKind::parse(&kind).ok_or_else(|| perr(kl, format!("unknown kind `{kind}`")))?;
        let alpha = |k: &str| -> Result<Alphabet, MachineError> {
            let (l, s) = get(k)?;
            let syms: Result<Vec<char>, _> = s.split_whitespace().map(sym::parse_token).collect();
            Alphabet::new(syms.map_err(|e| perr(l, e.to_string()))?).map_err(|e| perr(l, e.to_string()))
        };
        let input = alpha("input")?;
        let output = alpha("output")?;
        let (sl, states) = get("states")?;
        let states: Vec<&str> = states.split_whitespace().collect();
        if states.is_empty() {
            return Err(perr(sl, "no states"));
        }
        let uniq: HashSet<&&str> = states.iter().collect();
        if uniq.len() != states.len() {
            return Err(perr(sl, "duplicate state"));
        }
        let (il, initial) = get("initial")?;
        let (fl, fin) = get("final")?;
        if !states.contains(&initial.as_str()) {
            return Err(perr(il, format!("unknown state `{initial}`")));
        }
        if !states.contains(&fin.as_str()) {
            return Err(perr(fl, format!("unknown state `{fin}`")));
        }
        let mut m = Machine::new(&name, kind, input, output, &states, &initial, &fin);
        if kind == MachineKind::Hennie {
            m.work = Some(alpha("work")?);
            let (vl, v) = get("visits")?;
            m.visits = Some(v.parse().map_err(|_| perr(vl, format!("bad visit bound `{v}`")))?);
        } else if header.contains_key("work") || header.contains_key("visits") {
            return Err(perr(1, "`work` and `visits` are only for hennie machines"));
        }
        for (line, text) in insts {
            let (lhs, rhs) = split_top(&text, "=>").ok_or_else(|| perr(line, "missing `=>`"))?;
            let lhs = lhs.trim();
            let (p, test) = lhs.split_once(char::is_whitespace).ok_or_else(|| perr(line, "missing test"))?;
            let from = m.state(p).ok_or_else(|| perr(line, format!("unknown state `{p}`")))?;
            let test = m.parse_test(test, line)?;
            let (b1, b0) = split_top(&rhs, " / ").ok_or_else(|| perr(line, "missing ` / ` between branches"))?;
            let then = m.parse_branch(&b1, line)?;
            let els = m.parse_branch(&b0, line)?;
            m.insts.push(Instruction { from, test, then, els });
        }
        if let Some(p) = m.structural_problems().first() {
            return Err(MachineError::Invalid(p.clone()));
        }
        if m.insts.iter().any(|i| i.from == m.fin) {
            return Err(MachineError::Invalid("the final state has instructions".into()));
        }
        Ok(m)
    }
}

fn fmt_move(mv: &Move) -> String {
    match mv {
        Move::Step(d) if *d > 0 => format!("+{d}"),
        Move::Step(d) => d.to_string(),
        Move::Mso(phi) => format!("mso {phi}"),
    }
}

impl fmt::Display for Machine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let toks = |a: &Alphabet| a.to_string();
        writeln!(f, "machine {}", self.name)?;
        writeln!(f, "kind {}", self.kind.name())?;
        writeln!(f, "input {}", toks(&self.input))?;
        writeln!(f, "output {}", toks(&self.output))?;
        if let Some(w) = &self.work {
            writeln!(f, "work {}", toks(w))?;
        }
        if let Some(v) = self.visits {
            writeln!(f, "visits {v}")?;
        }
        writeln!(f, "states {}", self.states.join(" "))?;
        writeln!(f, "initial {}", self.states[self.initial])?;
        writeln!(f, "final {}", self.states[self.fin])?;
        for i in &self.insts {
            let test = match &i.test {
                Test::Sym(c) => format!("sym {}", sym::token(*c)),
                Test::Mso(phi) => format!("mso {phi}"),
                Test::Rla { left, sym: c, right } => {
                    format!("rla {} {} {}", Regex::from_dfa(left), sym::token(*c), Regex::from_dfa(right))
                }
            };
            let br = |b: &Branch| {
                let out = if b.out.is_empty() { "-".to_string() } else { b.out.iter().collect() };
                let mut s = format!("{} {} {}", self.states[b.state], out, fmt_move(&b.mv));
                if self.kind == MachineKind::Hennie {
                    s.push(' ');
                    s.push_str(&b.write.map_or("-".to_string(), sym::token));
                }
                s
            };
            writeln!(f, "inst {} {} => {} / {}", self.states[i.from], test, br(&i.then), br(&i.els))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EX21: &str = "\
machine ex21
kind gsm
input a b
output a b
states 0 1 2 3 4 5
initial 0
final 5
inst 0 sym L => 1 - +1 / 0 - 0
inst 1 sym a => 1 a +1 / 2 - 0
inst 2 sym b => 3 - -1 / 5 - 0
inst 3 sym a => 3 b -1 / 4 - +1
inst 4 sym a => 4 - +1 / 1 - +1
";

    #[test]
    fn example_machine_runs() {
        let m: Machine = EX21.parse().unwrap();
        assert_eq!(m.run("aaabbaba").unwrap().as_deref(), Some("aaabbbaba"));
        assert_eq!(m.run("").unwrap().as_deref(), Some(""));
        assert_eq!(m.run("bb").unwrap().as_deref(), Some(""));
        let r = m.validate();
        assert!(r.deterministic && r.short_output && r.ok());
    }

    #[test]
    fn print_parse_round_trip() {
        let m: Machine = EX21.parse().unwrap();
        let back: Machine = m.to_string().parse().unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn long_outputs_are_split() {
        let mut m: Machine = EX21.parse().unwrap();
        m.insts[1].then.out = "ab".chars().collect();
        let n = m.normalize_short_output();
        assert!(n.validate().short_output);
        for w in Alphabet::ab().strings_up_to(4) {
            assert_eq!(m.run(&w).unwrap(), n.run(&w).unwrap());
        }
    }

    #[test]
    fn golden_runs() {
        use crate::fixtures;
        assert_eq!(fixtures::ex22().run("aaabbaba").unwrap().as_deref(), Some("aaabbbaba"));
        let m = fixtures::ex63_det();
        assert_eq!(m.run("aaaaa").unwrap().as_deref(), Some("aaaaacaaaaabaaaaacaaaaabaaaaa"));
        let nd = fixtures::ex63();
        assert_eq!(nd.enumerate("aaabaa", 6).unwrap().into_iter().collect::<Vec<_>>(), vec!["aaaaaabaaaaacaaaaabaaaaacaaaa"]);
        assert_eq!(nd.enumerate("aaabbaa", 6).unwrap().into_iter().collect::<Vec<_>>(), vec!["aaaaaabaaaaaabaaaaacaaaacaaaa"]);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(EX21.replace("kind gsm", "kind foo").parse::<Machine>(), Err(MachineError::Parse { .. })));
        assert!(matches!(
            format!("{EX21}inst 5 sym a => 1 - +1 / 1 - +1\n").parse::<Machine>(),
            Err(MachineError::Invalid(_))
        ));
    }
}
