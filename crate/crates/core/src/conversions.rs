//! Constructive equivalences between the machine models and MSO
//! transductions.
//!
//! gsm → rla → mso → rla convert the tests and moves of a machine in place.
//! [`dgsm_to_mso_pipeline`] builds the computation space of a deterministic
//! gsm and cuts the accepted path out of it; [`mso_to_dgsm_mso`] goes back
//! from a transduction in `gr` form to a machine with MSO jumps.

use std::collections::HashMap;

use thiserror::Error;

use crate::graph::{Encoding, Shape};
use crate::machine::{normalize_rla, Branch, Instruction, Machine, MachineError, MachineKind, Move, Test};
use crate::mso::compile::{compile_over, tape_shape, CompileError};
use crate::mso::dfa::{exactly_once, split_single_occurrence, CharDfa, Dfa, DfaError};
use crate::mso::encode::node_formula;
use crate::mso::formula::{self as f, Formula, Kind, Side};
use crate::sym::{Alphabet, EPS, FIN, INIT, LEFT, RIGHT, UNLAB};
use crate::transduction::{gr_id, gr_id_inv, precompose, MsoTransduction, Pipeline, Step, TransductionError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConvertError {
    #[error("expected a {expected} machine, got {found}")]
    Kind { expected: &'static str, found: &'static str },
    #[error("machine is not deterministic")]
    NotDeterministic,
    #[error("machine is not normalized: {0}")]
    NotNormalized(String),
    #[error("move of instruction {inst} is not functional, witness tape {witness}")]
    NotFunctional { inst: usize, witness: String },
    #[error("transduction has parameters; only deterministic transductions become machines")]
    Params,
    #[error("transduction does not have the expected shape: {0}")]
    Shape(String),
    #[error(transparent)]
    Machine(#[from] MachineError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Dfa(#[from] DfaError),
    #[error(transparent)]
    Transduction(#[from] TransductionError),
}

fn expect_kind(m: &Machine, k: MachineKind) -> Result<(), ConvertError> {
    if m.kind != k {
        return Err(ConvertError::Kind { expected: k.name(), found: m.kind.name() });
    }
    Ok(())
}

/// Closed formula true exactly on the graphs `ngr(⊢w⊣)`, `w ∈ Σ*`, among
/// node-labelled strings.
pub fn tape_domain(sigma: &Alphabet) -> Formula {
    let mut labels = sigma.with_markers();
    labels.sort();
    let unique = |c: char| f::all("x", f::all("y", f::imp(f::and(f::lab(c, "x"), f::lab(c, "y")), f::eq("x", "y"))));
    f::and_all([
        f::all("x", f::or_all(labels.iter().map(|&c| f::lab(c, "x")))),
        f::ex("x", f::lab(LEFT, "x")),
        f::ex("x", f::lab(RIGHT, "x")),
        unique(LEFT),
        unique(RIGHT),
        f::all("x", f::imp(f::lab(LEFT, "x"), f::not(f::ex("y", f::edge(UNLAB, "y", "x"))))),
        f::all("x", f::imp(f::lab(RIGHT, "x"), f::not(f::ex("y", f::edge(UNLAB, "x", "y"))))),
    ])
}

// ---------------------------------------------------------------------------
// gsm → rla → mso

/// The left and right look-around that every position with symbol `c`
/// satisfies.
fn trivial_context(sigma: &Alphabet, c: char) -> (CharDfa, CharDfa) {
    let syms = sigma.with_markers();
    let inner = sigma.symbols();
    let left = if c == LEFT { CharDfa::epsilon(&syms) } else { CharDfa::first_then(&syms, LEFT, inner) };
    let right = if c == RIGHT { CharDfa::epsilon(&syms) } else { CharDfa::inner_then(&syms, inner, RIGHT) };
    (left, right)
}

fn trivial_test(sigma: &Alphabet, c: char) -> Test {
    let (left, right) = trivial_context(sigma, c);
    Test::Rla { left, sym: c, right }
}

/// Symbol tests become look-around tests with trivial contexts.
pub fn gsm_to_rla(m: &Machine) -> Result<Machine, ConvertError> {
    expect_kind(m, MachineKind::Gsm)?;
    let mut out = m.clone();
    out.kind = MachineKind::Rla;
    for i in &mut out.insts {
        if let Test::Sym(c) = i.test {
            i.test = trivial_test(&m.input, c);
        }
    }
    Ok(out)
}

fn step_formula(d: i8) -> Formula {
    match d {
        1 => f::edge(UNLAB, "x", "y"),
        -1 => f::edge(UNLAB, "y", "x"),
        _ => f::eq("x", "y"),
    }
}

/// Formula for a look-around context; `true` when the context is trivial.
fn context_formula(lang: &CharDfa, trivial: &CharDfa, side: Side) -> Result<Formula, ConvertError> {
    if lang.equivalent(trivial)? {
        return Ok(f::tt());
    }
    Ok(f::relativize(&node_formula(lang), side, "x"))
}

/// Look-around tests become relativized formulas, steps become jumps.
pub fn rla_to_mso(m: &Machine) -> Result<Machine, ConvertError> {
    expect_kind(m, MachineKind::Rla)?;
    let mut out = m.clone();
    out.kind = MachineKind::Mso;
    for i in &mut out.insts {
        if let Test::Rla { left, sym, right } = &i.test {
            let (tl, tr) = trivial_context(&m.input, *sym);
            let phi = f::and_all([
                context_formula(left, &tl, Side::Left)?,
                f::lab(*sym, "x"),
                context_formula(right, &tr, Side::Right)?,
            ]);
            i.test = Test::Mso(phi);
        }
        for b in [&mut i.then, &mut i.els] {
            if let Move::Step(d) = b.mv {
                b.mv = Move::Mso(step_formula(d));
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// mso → rla

/// Automaton for a formula over tapes, with each listed variable marking
/// exactly one position. Letters are `sym << vars.len() | mask`.
struct Marked {
    width: usize,
    dfa: Dfa,
}

fn marked(phi: &Formula, syms: &[char], vars: &[&str]) -> Result<Marked, ConvertError> {
    // `path(v,v)` is true; it only forces every listed variable to be free.
    let forced = f::and_all(vars.iter().map(|v| f::path(v, v)).chain([phi.clone()]));
    let c = compile_over(&forced, syms, Encoding::Node)?;
    let names: Vec<&str> = c.vars.iter().map(|v| &**v).collect();
    let mut sorted: Vec<&str> = vars.to_vec();
    sorted.sort();
    if names != sorted {
        return Err(CompileError::Signature(names.iter().map(|s| s.to_string()).collect()).into());
    }
    let width = vars.len();
    let mut dfa = c.dfa.intersect(&tape_shape(syms, width))?;
    for b in 0..width {
        let delta: Vec<bool> = (0..dfa.letters).map(|l| l >> b & 1 == 1).collect();
        dfa = dfa.intersect(&exactly_once(&delta))?;
    }
    Ok(Marked { width, dfa: dfa.minimize() })
}

impl Marked {
    fn bit(&self, names: &[&str], v: &str) -> usize {
        let mut sorted = names.to_vec();
        sorted.sort();
        sorted.iter().position(|n| *n == v).unwrap()
    }

    /// Restriction to unmarked letters, as an automaton over `syms`.
    fn unmarked(&self, d: &Dfa, syms: &[char]) -> CharDfa {
        let trans = d.trans.iter().map(|row| (0..syms.len()).map(|i| row[i << self.width]).collect()).collect();
        CharDfa::new(syms.to_vec(), Dfa { letters: syms.len(), init: d.init, trans, accept: d.accept.clone() }.minimize())
    }

    /// Erases the marks of the given bits; letters carrying other marks are
    /// dropped.
    fn erase(&self, d: &Dfa, syms: &[char], bits: &[usize]) -> CharDfa {
        let free: usize = bits.iter().map(|b| 1 << b).sum();
        let p = d.project(syms.len(), |i| {
            (0..1usize << self.width).filter(|m| m & !free == 0).map(|m| i << self.width | m).collect()
        });
        CharDfa::new(syms.to_vec(), p.minimize())
    }

    /// Pieces `(R_ℓ, σ, R_r)` of the language split at the position marked
    /// with `bit`; the other marks are erased from the sides.
    fn split(&self, d: &Dfa, syms: &[char], bit: usize) -> Result<Vec<(Dfa, char, Dfa)>, ConvertError> {
        let delta: Vec<bool> = (0..d.letters).map(|l| l >> bit & 1 == 1).collect();
        Ok(split_single_occurrence(d, &delta)?
            .into_iter()
            .map(|(l, a, r)| (l, syms[a >> self.width], r))
            .collect())
    }
}

/// Look-around tests whose disjunction is the unary formula `phi(x)`; they
/// exclude each other.
fn unary_tests(phi: &Formula, sigma: &Alphabet) -> Result<Vec<Test>, ConvertError> {
    let syms = sigma.with_markers();
    let mk = marked(phi, &syms, &["x"])?;
    let mut out = Vec::new();
    for (l, c, r) in mk.split(&mk.dfa, &syms, 0)? {
        let (left, right) = normalize_rla(sigma, &mk.unmarked(&l, &syms), c, &mk.unmarked(&r, &syms))?;
        out.push(Test::Rla { left, sym: c, right });
    }
    Ok(out)
}

struct Builder {
    m: Machine,
    dead: Option<usize>,
}

impl Builder {
    fn dead(&mut self) -> usize {
        if let Some(d) = self.dead {
            return d;
        }
        let d = self.m.fresh_state("dead");
        self.dead = Some(d);
        d
    }

    fn stay(state: usize) -> Branch {
        Branch { state, out: vec![], mv: Move::Step(0), write: None }
    }

    /// Tries `tests` one after the other from `from`; the first that holds
    /// takes its own branch, and `otherwise` is taken when none does.
    fn chain(&mut self, from: usize, tests: Vec<(Test, Branch)>, otherwise: Branch) {
        let base = self.m.states[from].clone();
        if tests.is_empty() {
            let t = Test::Rla {
                left: CharDfa::epsilon(&self.m.input.with_markers()),
                sym: LEFT,
                right: trivial_context(&self.m.input, LEFT).1,
            };
            self.m.insts.push(Instruction { from, test: t, then: otherwise.clone(), els: otherwise });
            return;
        }
        let n = tests.len();
        let mut cur = from;
        for (i, (test, then)) in tests.into_iter().enumerate() {
            let els = if i + 1 == n {
                otherwise.clone()
            } else {
                Builder::stay(self.m.fresh_state(&format!("{base}.{}", i + 2)))
            };
            let next = els.state;
            self.m.insts.push(Instruction { from: cur, test, then, els });
            cur = next;
        }
    }
}

/// Rewrites jumps and MSO tests into look-around tests, walking the head to
/// jump targets one cell at a time.
pub fn mso_to_rla(m: &Machine) -> Result<Machine, ConvertError> {
    expect_kind(m, MachineKind::Mso)?;
    let sigma = m.input.clone();
    let syms = sigma.with_markers();
    let mut template = m.clone();
    template.kind = MachineKind::Rla;
    template.insts.clear();
    let mut b = Builder { m: template, dead: None };
    for (k, inst) in m.insts.iter().enumerate() {
        let mut branches = Vec::new();
        for (taken, br) in [(true, &inst.then), (false, &inst.els)] {
            branches.push(jump_branch(&mut b, &sigma, &syms, inst.from, k, taken, br)?);
        }
        let [then, els] = <[Branch; 2]>::try_from(branches).unwrap();
        match &inst.test {
            Test::Mso(phi) => {
                let tests = unary_tests(phi, &sigma)?.into_iter().map(|t| (t, then.clone())).collect();
                b.chain(inst.from, tests, els);
            }
            Test::Sym(c) => b.chain(inst.from, vec![(trivial_test(&sigma, *c), then)], els),
            Test::Rla { .. } => b.m.insts.push(Instruction { from: inst.from, test: inst.test.clone(), then, els }),
        }
    }
    Ok(b.m)
}

/// Simple jumps that are plain steps.
fn as_step(phi: &Formula) -> Option<i8> {
    match phi.kind() {
        Kind::Eq(x, y) if &**x == "x" && &**y == "y" => Some(0),
        Kind::Edge(c, x, y) if *c == UNLAB && &**x == "x" && &**y == "y" => Some(1),
        Kind::Edge(c, x, y) if *c == UNLAB && &**x == "y" && &**y == "x" => Some(-1),
        _ => None,
    }
}

/// The branch that replaces `br`; for a jump it leads into a probe that
/// finds the direction of the target and then walks there.
fn jump_branch(
    b: &mut Builder,
    sigma: &Alphabet,
    syms: &[char],
    from: usize,
    k: usize,
    taken: bool,
    br: &Branch,
) -> Result<Branch, ConvertError> {
    let phi = match &br.mv {
        Move::Step(_) => return Ok(br.clone()),
        Move::Mso(phi) => phi.clone(),
    };
    if let Some(d) = as_step(&phi) {
        return Ok(Branch { mv: Move::Step(d), ..br.clone() });
    }
    let tag = format!("{}.{}{}", b.m.states[from], k, if taken { "t" } else { "e" });
    let probe = b.m.fresh_state(&format!("{tag}.probe"));
    let target = br.state;
    let arrive = Branch { state: target, out: vec![], mv: Move::Step(0), write: None };

    // Target to the right: split at x, then walk tracking the middle part.
    let right = marked(&f::and(f::path_plus("x", "y"), phi.clone()), syms, &["x", "y"])?;
    let (bx, by) = (right.bit(&["x", "y"], "x"), right.bit(&["x", "y"], "y"));
    let mut tests = Vec::new();
    for (i, (l, c, r)) in right.split(&right.dfa, syms, bx)?.into_iter().enumerate() {
        let left = right.unmarked(&l, syms);
        let rest = right.erase(&r, syms, &[by]);
        let (left, rest) = normalize_rla(sigma, &left, c, &rest)?;
        let tag = format!("{tag}.r{i}");
        let mut walk = HashMap::new();
        let w = walk_state(b, &mut walk, &tag, r.init);
        tests.push((Test::Rla { left, sym: c, right: rest }, Branch { state: w, out: vec![], mv: Move::Step(1), write: None }));
        build_walk(b, sigma, syms, &right, &r, by, 1, &mut walk, &tag, &arrive)?;
    }
    // Target here.
    for t in unary_tests(&phi.with(&[("y", "x")]), sigma)? {
        tests.push((t, arrive.clone()));
    }
    // Target to the left: the same on the mirror image.
    let left_m = marked(&f::and(f::path_plus("y", "x"), phi.clone()), syms, &["x", "y"])?;
    let rev = Marked { width: left_m.width, dfa: left_m.dfa.reverse().determinize().minimize() };
    for (i, (l, c, r)) in rev.split(&rev.dfa, syms, bx)?.into_iter().enumerate() {
        // `l` reads the suffix backwards, `r` the rest of the prefix backwards.
        let suffix = rev.unmarked(&l, syms).reversed();
        let prefix = rev.erase(&r, syms, &[by]).reversed();
        let (prefix, suffix) = normalize_rla(sigma, &prefix, c, &suffix)?;
        let tag = format!("{tag}.l{i}");
        let mut walk = HashMap::new();
        let w = walk_state(b, &mut walk, &tag, r.init);
        tests.push((Test::Rla { left: prefix, sym: c, right: suffix }, Branch { state: w, out: vec![], mv: Move::Step(-1), write: None }));
        build_walk(b, sigma, syms, &rev, &r, by, -1, &mut walk, &tag, &arrive)?;
    }
    let dead = b.dead();
    b.chain(probe, tests, Builder::stay(dead));
    Ok(Branch { state: probe, out: br.out.clone(), mv: Move::Step(0), write: None })
}

fn walk_state(b: &mut Builder, seen: &mut HashMap<usize, usize>, tag: &str, s: usize) -> usize {
    *seen.entry(s).or_insert_with(|| b.m.fresh_state(&format!("{tag}.w{s}")))
}

/// Walk states for automaton `d` (read in the walking direction): in state
/// `s` on symbol `τ`, stop if `(τ, y)` leads to a state from which the rest
/// of the tape is accepted, otherwise move on.
#[allow(clippy::too_many_arguments)]
fn build_walk(
    b: &mut Builder,
    sigma: &Alphabet,
    syms: &[char],
    mk: &Marked,
    d: &Dfa,
    by: usize,
    dir: i8,
    seen: &mut HashMap<usize, usize>,
    tag: &str,
    arrive: &Branch,
) -> Result<(), ConvertError> {
    let useful = d.coreachable();
    let mut todo = vec![d.init];
    let mut built = std::collections::HashSet::new();
    while let Some(s) = todo.pop() {
        if !built.insert(s) {
            continue;
        }
        let from = walk_state(b, seen, tag, s);
        let mut tests = Vec::new();
        for (i, &c) in syms.iter().enumerate() {
            let hit = d.trans[s][i << mk.width | 1 << by];
            if useful[hit] {
                let rest = mk.unmarked(&d.from_state(hit), syms);
                let (l, r) = if dir > 0 {
                    (trivial_context(sigma, c).0, rest)
                } else {
                    (rest.reversed(), trivial_context(sigma, c).1)
                };
                let (l, r) = normalize_rla(sigma, &l, c, &r)?;
                if !l.is_empty() && !r.is_empty() {
                    tests.push((Test::Rla { left: l, sym: c, right: r }, arrive.clone()));
                }
            }
            let pass = d.trans[s][i << mk.width];
            if useful[pass] {
                let w = walk_state(b, seen, tag, pass);
                tests.push((trivial_test(sigma, c), Branch { state: w, out: vec![], mv: Move::Step(dir), write: None }));
                todo.push(pass);
            }
        }
        let dead = b.dead();
        b.chain(from, tests, Builder::stay(dead));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Machine → computation space → string

fn normalized_dgsm(m: &Machine) -> Result<(), ConvertError> {
    expect_kind(m, MachineKind::Gsm)?;
    if !m.is_deterministic() {
        return Err(ConvertError::NotDeterministic);
    }
    if m.insts.iter().any(|i| i.then.out.len() > 1 || i.els.out.len() > 1) {
        return Err(ConvertError::NotNormalized("an instruction writes more than one symbol".into()));
    }
    if m.initial == m.fin {
        return Err(ConvertError::NotNormalized("initial and final state coincide".into()));
    }
    Ok(())
}

fn out_symbol(b: &Branch) -> char {
    b.out.first().copied().unwrap_or(EPS)
}

/// `ngr(⊢w⊣) ↦ γ_M(w)`: one copy per state, edges following the
/// instructions, initial and final configurations labelled.
pub fn tau1(m: &Machine) -> Result<MsoTransduction, ConvertError> {
    normalized_dgsm(m)?;
    let tape_syms = m.input.with_markers();
    let mut in_labels = tape_syms.clone();
    in_labels.push(UNLAB);
    let mut edge_syms: Vec<char> = m.output.symbols().to_vec();
    edge_syms.push(EPS);
    let mut out_labels = vec![UNLAB, INIT, FIN];
    out_labels.extend(&edge_syms);
    let mut t = MsoTransduction::new("tau1", m.states.len(), &in_labels, &out_labels);
    t.copies = m.states.clone();
    t.domain = tape_domain(&m.input);
    for q in 0..m.states.len() {
        let init = if q == m.initial { f::lab(LEFT, "x") } else { f::ff() };
        let fin = if q == m.fin { f::tt() } else { f::ff() };
        t.node(q, INIT, init.clone());
        t.node(q, FIN, fin.clone());
        t.node(q, UNLAB, f::and(f::not(init), f::not(fin)));
    }
    // step[ε]^{p,q}_α as the set of symbols under the head.
    let mut steps: HashMap<(usize, usize, char, i8), Vec<char>> = HashMap::new();
    for inst in &m.insts {
        let Test::Sym(sigma) = inst.test else { unreachable!("gsm tests are symbols") };
        for &c in &tape_syms {
            let b = inst.branch(c == sigma);
            let Move::Step(d) = b.mv else { unreachable!("gsm moves are steps") };
            steps.entry((inst.from, b.state, out_symbol(b), d)).or_default().push(c);
        }
    }
    for p in 0..m.states.len() {
        for q in 0..m.states.len() {
            for &a in &edge_syms {
                let step = |d: i8| f::or_all(steps.get(&(p, q, a, d)).into_iter().flatten().map(|&c| f::lab(c, "x")));
                let phi = f::or_all([
                    f::and(f::edge(UNLAB, "x", "y"), step(1)),
                    f::and(f::eq("x", "y"), step(0)),
                    f::and(f::edge(UNLAB, "y", "x"), step(-1)),
                ]);
                t.edge(p, q, a, phi);
            }
        }
    }
    Ok(t)
}

/// Keeps the nodes on the path from the initial to a final node.
pub fn tau2(sigma_out: &Alphabet) -> MsoTransduction {
    let mut edge_syms: Vec<char> = sigma_out.symbols().to_vec();
    edge_syms.push(EPS);
    let mut in_labels = vec![UNLAB, INIT, FIN];
    in_labels.extend(&edge_syms);
    let mut out_labels = vec![UNLAB];
    out_labels.extend(&edge_syms);
    let mut t = MsoTransduction::new("tau2", 1, &in_labels, &out_labels);
    t.domain = f::ex("x", f::ex("y", f::and_all([f::lab(INIT, "x"), f::lab(FIN, "y"), f::path("x", "y")])));
    t.node(
        0,
        UNLAB,
        f::and(
            f::ex("y", f::and(f::lab(INIT, "y"), f::path("y", "x"))),
            f::ex("z", f::and(f::lab(FIN, "z"), f::path("x", "z"))),
        ),
    );
    for &a in &edge_syms {
        t.edge(0, 0, a, f::edge(a, "x", "y"));
    }
    t
}

/// Drops nodes with an outgoing `ε` edge and contracts `ε`-paths to their
/// last node.
pub fn tau3(sigma_out: &Alphabet) -> MsoTransduction {
    let mut in_labels = vec![UNLAB];
    in_labels.extend(sigma_out.symbols());
    in_labels.push(EPS);
    let mut out_labels = vec![UNLAB];
    out_labels.extend(sigma_out.symbols());
    let mut t = MsoTransduction::new("tau3", 1, &in_labels, &out_labels);
    t.node(0, UNLAB, f::not(f::ex("y", f::edge(EPS, "x", "y"))));
    for &a in sigma_out.symbols() {
        t.edge(0, 0, a, f::ex("z", f::and(f::edge(a, "x", "z"), f::path_via(&[EPS], false, "z", "y"))));
    }
    t
}

/// `[τ1, τ2, τ3]`, mapping `ngr(⊢w⊣)` to `egr(M(w))`.
pub fn dgsm_to_mso_pipeline(m: &Machine) -> Result<Pipeline, ConvertError> {
    let mut p = Pipeline::new(&format!("{}.gr", m.name), vec![tau1(m)?, tau2(&m.output), tau3(&m.output)]);
    p.strings = Some((Shape::Tape, Encoding::Edge));
    Ok(p)
}

/// Normalizes a deterministic gsm and prefixes the pipeline with the inverse
/// of `gr(id)`, giving `egr(w) ↦ egr(M(w))`.
pub fn dgsm_to_msoe(m: &Machine) -> Result<Pipeline, ConvertError> {
    expect_kind(m, MachineKind::Gsm)?;
    if !m.is_deterministic() {
        return Err(ConvertError::NotDeterministic);
    }
    let n = m.normalize_short_output().separate_final_state();
    let gr = dgsm_to_mso_pipeline(&n)?;
    let inv = gr_id_inv(&m.input);
    let mut steps: Vec<Step> = inv.steps;
    steps.extend(gr.steps);
    Ok(Pipeline { name: format!("{}.egr", m.name), strings: Some((Shape::Edge, Encoding::Edge)), steps })
}

// ---------------------------------------------------------------------------
// gr form → machine

fn alphabet_without(labels: &[char], drop: &[char]) -> Result<Alphabet, ConvertError> {
    let syms: Vec<char> = labels.iter().copied().filter(|c| !drop.contains(c)).collect();
    Alphabet::new(syms).map_err(|e| ConvertError::Shape(e.to_string()))
}

/// A machine with MSO tests and jumps following a deterministic transduction
/// from `ngr(⊢w⊣)` to edge-labelled strings.
pub fn mso_to_dgsm_mso(t: &MsoTransduction) -> Result<Machine, ConvertError> {
    if !t.params.is_empty() {
        return Err(ConvertError::Params);
    }
    if let Some((i, o)) = t.strings {
        if i != Shape::Tape || o != Encoding::Edge {
            return Err(ConvertError::Shape(format!("expected `strings tape egr`, found `{} {}`", i.name(), o.name())));
        }
    }
    let sigma_in = alphabet_without(&t.input_labels, &[LEFT, RIGHT, UNLAB])?;
    let sigma_out = alphabet_without(&t.output_labels, &[UNLAB])?;
    let copies = t.copies.len();
    let mut names: Vec<String> = t.copies.iter().map(|c| format!("c{c}")).collect();
    names.push("in".into());
    names.push("fin".into());
    let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    let m = Machine::new(&format!("{}.machine", t.name), MachineKind::Mso, sigma_in, sigma_out.clone(), &refs, "in", "fin");
    let (q_in, q_f) = (copies, copies + 1);
    let dom = t.domain.clone();
    let node = |c: usize, v: &str| t.node_formula(c, UNLAB).with(&[("x", v)]);
    let psi = |c1: usize, c2: usize, a: char| -> Option<Formula> {
        let phi = t.edge_formula(c1, c2, a);
        if phi.is_false() {
            return None;
        }
        Some(f::and_all([phi, node(c1, "x"), node(c2, "y"), dom.clone()]))
    };
    let mut b = Builder { m, dead: None };
    b.m.kind = MachineKind::Mso;
    for c1 in 0..copies {
        let mut tests = Vec::new();
        for c2 in 0..copies {
            for &a in sigma_out.symbols() {
                if let Some(p) = psi(c1, c2, a) {
                    let test = Test::Mso(f::ex("y", p.clone()));
                    tests.push((test, Branch { state: c2, out: vec![a], mv: Move::Mso(p), write: None }));
                }
            }
        }
        mso_chain(&mut b, c1, tests, Builder::stay(q_f));
    }
    let mut starts = Vec::new();
    for c2 in 0..copies {
        let inco = f::ex(
            "z",
            f::or_all((0..copies).flat_map(|c1| {
                sigma_out.symbols().iter().filter_map(move |&a| psi(c1, c2, a)).collect::<Vec<_>>()
            }).map(|p| p.with(&[("x", "z")]))),
        );
        let first = f::and_all([node(c2, "y"), f::not(inco), dom.clone()]);
        starts.push((Test::Mso(f::ex("y", first.clone())), Branch { state: c2, out: vec![], mv: Move::Mso(first), write: None }));
    }
    let dead = b.dead();
    mso_chain(&mut b, q_in, starts, Builder::stay(dead));
    Ok(b.m)
}

fn mso_chain(b: &mut Builder, from: usize, tests: Vec<(Test, Branch)>, otherwise: Branch) {
    if tests.is_empty() {
        let i = Instruction { from, test: Test::Mso(f::tt()), then: otherwise.clone(), els: otherwise };
        b.m.insts.push(i);
    } else {
        b.chain(from, tests, otherwise);
    }
}

/// `egr(m) ↦ gr(m) = gr(id) ; egr(m)`, then [`mso_to_dgsm_mso`].
pub fn msoe_to_dgsm(t: &MsoTransduction, sigma_in: &Alphabet) -> Result<Machine, ConvertError> {
    let mut gr = precompose(&gr_id(sigma_in), t)?;
    gr.strings = Some((Shape::Tape, Encoding::Edge));
    mso_to_dgsm_mso(&gr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    use crate::fixtures;

    fn agree(a: &Machine, b: &Machine, max: usize) {
        for w in a.input.strings_up_to(max) {
            assert_eq!(a.run(&w).unwrap(), b.run(&w).unwrap(), "{} vs {} on {w:?}", a.name, b.name);
        }
    }

    #[test]
    fn gsm_rla_mso_rla_round_trip() {
        for m in fixtures::dgsm_corpus() {
            let r = gsm_to_rla(&m).unwrap();
            assert!(r.validate().ok(), "{}", m.name);
            let phi = rla_to_mso(&r).unwrap();
            let back = mso_to_rla(&phi).unwrap();
            assert!(back.is_deterministic());
            agree(&m, &r, 4);
            agree(&m, &phi, 3);
            agree(&m, &back, 4);
        }
    }

    #[test]
    fn jumps_become_walks() {
        let m = fixtures::ex22();
        let r = mso_to_rla(&m).unwrap();
        assert_eq!(r.kind, MachineKind::Rla);
        assert!(r.is_deterministic());
        agree(&m, &r, 5);
        assert_eq!(r.run("aaabbaba").unwrap().as_deref(), Some("aaabbbaba"));
    }

    #[test]
    fn rla_tests_become_formulas() {
        let m = fixtures::ex22();
        let r = mso_to_rla(&m).unwrap();
        let back = rla_to_mso(&r).unwrap();
        agree(&r, &back, 3);
    }

    #[test]
    fn pipeline_matches_machine() {
        for m in fixtures::dgsm_corpus().iter().take(4) {
            let p = dgsm_to_msoe(m).unwrap();
            for w in m.input.strings_up_to(3) {
                let want: BTreeSet<String> = m.run(&w).unwrap().into_iter().collect();
                assert_eq!(p.apply_string(&w).unwrap(), want, "{} on {w:?}", m.name);
            }
        }
    }

    #[test]
    fn pipeline_needs_determinism() {
        assert_eq!(dgsm_to_msoe(&fixtures::guesser()).unwrap_err(), ConvertError::NotDeterministic);
    }

    #[test]
    fn transduction_to_machine() {
        let m = mso_to_dgsm_mso(&fixtures::ex41()).unwrap();
        agree(&fixtures::ex21(), &m, 4);
    }

    #[test]
    fn unguarded_edge_formula_never_fires() {
        // The last block of "ab" gets no edge to the right marker.
        let t = fixtures::ex41_literal();
        assert!(t.apply_string("ab", Shape::Tape, Encoding::Edge).is_err());
        assert_eq!(t.apply_string("aba", Shape::Tape, Encoding::Edge).unwrap(), ["aba".to_string()].into());
    }
}
