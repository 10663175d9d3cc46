//! MSO definable graph transductions, with parameters, and their
//! evaluation-level composition.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::graph::{Encoding, Graph, GraphError, Shape};
use crate::mso::compile::{compile_over, CompileError};
use crate::mso::encode;
use crate::mso::formula::{self as f, Formula, FormulaError, Kind};
use crate::mso::{EvalError, Evaluator, PathMode, Var};
use crate::sym::{self, Alphabet, EPS, LEFT, RIGHT, UNLAB};

/// Parameter valuations are enumerated only up to this many bits.
pub const MAX_PARAM_BITS: usize = 24;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransductionError {
    #[error("{0}")]
    Signature(String),
    #[error("formula for {0} has stray free variables {1:?}")]
    FreeVars(String, Vec<String>),
    #[error("{0} parameter bits exceed the enumeration limit of {MAX_PARAM_BITS}")]
    TooManyValuations(usize),
    #[error("output is not a string: {0}")]
    NotAString(GraphError),
    #[error("ε is mapped to `{0}`, which node-labelled strings cannot represent")]
    NotRepresentable(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Compile(#[from] CompileError),
}

/// An MSO transduction: domain, copy set, node and edge formulas,
/// optionally with set parameters. Missing formulas are false.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MsoTransduction {
    pub name: String,
    pub params: Vec<String>,
    pub copies: Vec<String>,
    pub input_labels: Vec<char>,
    pub output_labels: Vec<char>,
    /// String view of the input and output graphs, when there is one.
    pub strings: Option<(Shape, Encoding)>,
    pub domain: Formula,
    pub nodes: BTreeMap<(usize, char), Formula>,
    pub edges: BTreeMap<(usize, usize, char), Formula>,
}

fn labels(ls: impl IntoIterator<Item = char>) -> Vec<char> {
    let s: BTreeSet<char> = ls.into_iter().collect();
    s.into_iter().collect()
}

impl MsoTransduction {
    pub fn new(name: &str, copies: usize, input_labels: &[char], output_labels: &[char]) -> Self {
        MsoTransduction {
            name: name.to_string(),
            params: Vec::new(),
            copies: (1..=copies).map(|i| i.to_string()).collect(),
            input_labels: labels(input_labels.iter().copied()),
            output_labels: labels(output_labels.iter().copied()),
            strings: None,
            domain: f::tt(),
            nodes: BTreeMap::new(),
            edges: BTreeMap::new(),
        }
    }

    pub fn with_strings(mut self, input: Shape, output: Encoding) -> Self {
        self.strings = Some((input, output));
        self
    }

    /// Sets (or replaces) `φ_σ^c`.
    pub fn node(&mut self, c: usize, label: char, phi: Formula) {
        if phi.is_false() {
            self.nodes.remove(&(c, label));
        } else {
            self.nodes.insert((c, label), phi);
        }
    }

    /// Sets (or replaces) `φ_γ^{c1,c2}`.
    pub fn edge(&mut self, c1: usize, c2: usize, label: char, phi: Formula) {
        if phi.is_false() {
            self.edges.remove(&(c1, c2, label));
        } else {
            self.edges.insert((c1, c2, label), phi);
        }
    }

    pub fn node_formula(&self, c: usize, label: char) -> Formula {
        self.nodes.get(&(c, label)).cloned().unwrap_or_else(f::ff)
    }

    pub fn edge_formula(&self, c1: usize, c2: usize, label: char) -> Formula {
        self.edges.get(&(c1, c2, label)).cloned().unwrap_or_else(f::ff)
    }

    pub fn is_deterministic(&self) -> bool {
        self.params.is_empty()
    }

    /// Output labels used on nodes and on edges.
    pub fn node_labels(&self) -> Vec<char> {
        labels(self.nodes.keys().map(|k| k.1))
    }

    pub fn edge_labels(&self) -> Vec<char> {
        labels(self.edges.keys().map(|k| k.2))
    }

    /// Free-variable discipline and label signature.
    pub fn check(&self) -> Result<(), TransductionError> {
        let allowed = |extra: &[&str], phi: &Formula, what: String| {
            let stray: Vec<String> = phi
                .free_vars()
                .iter()
                .filter(|v| !extra.contains(&&***v) && !self.params.iter().any(|p| **p == ***v))
                .map(|v| v.to_string())
                .collect();
            if stray.is_empty() {
                Ok(())
            } else {
                Err(TransductionError::FreeVars(what, stray))
            }
        };
        allowed(&[], &self.domain, "the domain".into())?;
        for ((c, l), phi) in &self.nodes {
            allowed(&["x"], phi, format!("node {} {}", self.copies[*c], sym::token(*l)))?;
        }
        for ((c, d, l), phi) in &self.edges {
            allowed(&["x", "y"], phi, format!("edge {} {} {}", self.copies[*c], self.copies[*d], sym::token(*l)))?;
        }
        let out: BTreeSet<char> = self.output_labels.iter().copied().collect();
        if let Some(l) = self.node_labels().into_iter().chain(self.edge_labels()).find(|l| !out.contains(l)) {
            return Err(TransductionError::Signature(format!(
                "`{}` produces label `{}` outside its output labels",
                self.name,
                sym::token(l)
            )));
        }
        Ok(())
    }

    fn check_input(&self, g: &Graph) -> Result<(), TransductionError> {
        let ok: BTreeSet<char> = self.input_labels.iter().copied().collect();
        let bad = g.labels().iter().copied().chain(g.edge_labels()).find(|l| !ok.contains(l));
        match bad {
            Some(l) => Err(TransductionError::Signature(format!(
                "input label `{}` is outside the input labels of `{}`",
                sym::token(l),
                self.name
            ))),
            None => Ok(()),
        }
    }

    /// All output graphs, one per parameter valuation satisfying the domain,
    /// canonically renumbered.
    pub fn apply(&self, g: &Graph) -> Result<BTreeSet<Graph>, TransductionError> {
        self.apply_with(g, PathMode::Reach)
    }

    pub fn apply_with(&self, g: &Graph, mode: PathMode) -> Result<BTreeSet<Graph>, TransductionError> {
        self.check_input(g)?;
        let n = g.len();
        let bits = self.params.len() * n;
        if bits > MAX_PARAM_BITS || (!self.params.is_empty() && n > 64) {
            return Err(TransductionError::TooManyValuations(bits));
        }
        let mut ev = Evaluator::new(g, mode);
        let mut out = BTreeSet::new();
        let names: Vec<Var> = self.params.iter().map(|p| f::v(p)).collect();
        for code in 0..(1u64 << bits) {
            // Bit `u * k + i` puts node `u` into parameter `i`.
            let k = self.params.len();
            let mut env: Vec<(Var, crate::mso::eval::Value)> = names
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let set = (0..n).filter(|u| code >> (u * k + i) & 1 == 1).fold(0u64, |m, u| m | 1 << u);
                    (p.clone(), crate::mso::eval::Value::Set(set))
                })
                .collect();
            if !ev.eval(&self.domain, &mut env)? {
                continue;
            }
            out.insert(self.build(&mut ev, &mut env, n)?);
        }
        Ok(out)
    }

    fn build(
        &self,
        ev: &mut Evaluator,
        env: &mut Vec<(Var, crate::mso::eval::Value)>,
        n: usize,
    ) -> Result<Graph, TransductionError> {
        use crate::mso::eval::Value;
        let x = f::v("x");
        let y = f::v("y");
        let mut id: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut out = Graph::new();
        for u in 0..n {
            for c in 0..self.copies.len() {
                let mut hit = None;
                let mut count = 0;
                for ((cc, l), phi) in self.nodes.range((c, '\0')..=(c, char::MAX)) {
                    debug_assert_eq!(*cc, c);
                    env.push((x.clone(), Value::Node(u)));
                    let r = ev.eval(phi, env);
                    env.pop();
                    if r? {
                        count += 1;
                        hit = Some(*l);
                    }
                }
                if count == 1 {
                    id.insert((u, c), out.add_node(hit.unwrap()));
                }
            }
        }
        for ((c1, c2, l), phi) in &self.edges {
            for u in 0..n {
                let Some(&a) = id.get(&(u, *c1)) else { continue };
                for w in 0..n {
                    let Some(&b) = id.get(&(w, *c2)) else { continue };
                    env.push((x.clone(), Value::Node(u)));
                    env.push((y.clone(), Value::Node(w)));
                    let r = ev.eval(phi, env);
                    env.pop();
                    env.pop();
                    if r? {
                        out.add_edge(a, *l, b).expect("nodes exist");
                    }
                }
            }
        }
        Ok(out.canonical())
    }

    /// Runs on the encoding of `w` and decodes every output.
    pub fn apply_string(&self, w: &str, input: Shape, output: Encoding) -> Result<BTreeSet<String>, TransductionError> {
        let w: Vec<char> = w.chars().collect();
        let graphs = self.apply(&input.encode_raw(&w))?;
        graphs
            .iter()
            .map(|g| Shape::from(output).decode(g).map_err(TransductionError::NotAString))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Constructions

/// Copies every node and edge.
pub fn identity(node_labels: &[char], edge_labels: &[char]) -> MsoTransduction {
    let all: Vec<char> = node_labels.iter().chain(edge_labels).copied().collect();
    let mut t = MsoTransduction::new("id", 1, &all, &all);
    for &l in node_labels {
        t.node(0, l, f::lab(l, "x"));
    }
    for &l in edge_labels {
        t.edge(0, 0, l, f::edge(l, "x", "y"));
    }
    t
}

fn star_and(sigma: &Alphabet) -> Vec<char> {
    let mut v = sigma.symbols().to_vec();
    v.push(UNLAB);
    v
}

/// `egr(w) ↦ ngr(w)`: each symbol moves from an edge to its source node.
pub fn ed2nd(sigma: &Alphabet) -> MsoTransduction {
    let mut t = MsoTransduction::new("ed2nd", 1, &star_and(sigma), &star_and(sigma))
        .with_strings(Shape::Edge, Encoding::Node);
    for &c in sigma.symbols() {
        t.node(0, c, f::ex("y", f::edge(c, "x", "y")));
    }
    t.edge(0, 0, UNLAB, f::edge_any(sigma.symbols(), "x", "y"));
    t
}

/// `ngr(w) ↦ egr(w)` for `w ≠ ε`; the last node is copied twice.
pub fn nd2ed(sigma: &Alphabet) -> MsoTransduction {
    let mut t = MsoTransduction::new("nd2ed", 2, &star_and(sigma), &star_and(sigma))
        .with_strings(Shape::Node, Encoding::Edge);
    // ngr(ε) has no node to copy; its output would not be an egr at all.
    t.domain = f::ex("x", f::tt());
    t.node(0, UNLAB, f::tt());
    t.node(1, UNLAB, f::not(f::ex("y", f::edge(UNLAB, "x", "y"))));
    for &c in sigma.symbols() {
        t.edge(0, 0, c, f::and(f::edge(UNLAB, "x", "y"), f::lab(c, "x")));
        t.edge(0, 1, c, f::and(f::eq("x", "y"), f::lab(c, "x")));
    }
    t
}

/// `ngr(⊢w⊣) ↦ egr(w)`.
pub fn gr_id(sigma: &Alphabet) -> MsoTransduction {
    let mut input = sigma.with_markers();
    input.push(UNLAB);
    let mut t = MsoTransduction::new("gr_id", 1, &input, &star_and(sigma)).with_strings(Shape::Tape, Encoding::Edge);
    t.node(0, UNLAB, f::not(f::lab(RIGHT, "x")));
    for &c in sigma.symbols() {
        t.edge(0, 0, c, f::and(f::edge(UNLAB, "x", "y"), f::lab(c, "y")));
    }
    t
}

/// `egr(w) ↦ egr(⊢w⊣)`.
pub fn mark_edge(sigma: &Alphabet) -> MsoTransduction {
    let mut out = sigma.with_markers();
    out.push(UNLAB);
    let mut t = MsoTransduction::new("mark", 3, &star_and(sigma), &out);
    t.node(0, UNLAB, f::not(f::ex("y", f::edge_any(sigma.symbols(), "y", "x"))));
    t.node(1, UNLAB, f::tt());
    t.node(2, UNLAB, f::not(f::ex("y", f::edge_any(sigma.symbols(), "x", "y"))));
    t.edge(0, 1, LEFT, f::eq("x", "y"));
    for &c in sigma.symbols() {
        t.edge(1, 1, c, f::edge(c, "x", "y"));
    }
    t.edge(1, 2, RIGHT, f::eq("x", "y"));
    t
}

/// `ngr(w) ↦ ngr(⊢w⊣)`; undefined on ε, which has no node to hang the
/// markers on.
pub fn mark_node(sigma: &Alphabet) -> MsoTransduction {
    let mut out = sigma.with_markers();
    out.push(UNLAB);
    let mut t = MsoTransduction::new("mark", 3, &star_and(sigma), &out).with_strings(Shape::Node, Encoding::Node);
    t.domain = f::ex("x", f::tt());
    t.node(0, LEFT, f::not(f::ex("y", f::edge(UNLAB, "y", "x"))));
    for &c in sigma.symbols() {
        t.node(1, c, f::lab(c, "x"));
    }
    t.node(2, RIGHT, f::not(f::ex("y", f::edge(UNLAB, "x", "y"))));
    t.edge(0, 1, UNLAB, f::eq("x", "y"));
    t.edge(1, 1, UNLAB, f::edge(UNLAB, "x", "y"));
    t.edge(1, 2, UNLAB, f::eq("x", "y"));
    t
}

/// `egr(w) ↦ ngr(⊢w⊣)`: the inverse of [`gr_id`] as a two-stage pipeline.
pub fn gr_id_inv(sigma: &Alphabet) -> Pipeline {
    // The second stage is ed2nd reading the markers as ordinary labels.
    let mut second = ed2nd(sigma);
    let all = sigma.with_markers();
    for &c in &[LEFT, RIGHT] {
        second.node(0, c, f::ex("y", f::edge(c, "x", "y")));
    }
    second.edge(0, 0, UNLAB, f::edge_any(&all, "x", "y"));
    second.input_labels = labels(all.iter().copied().chain([UNLAB]));
    second.output_labels = second.input_labels.clone();
    second.strings = None;
    let mut first = mark_edge(sigma);
    first.strings = None;
    Pipeline {
        name: "gr_id_inv".into(),
        strings: Some((Shape::Edge, Encoding::Node)),
        steps: vec![Step::Stage(first), Step::Stage(second)],
    }
}

/// Parameter names used for relabellings, one per output symbol.
fn param_for(c: char) -> String {
    format!("X_{c}")
}

fn partition(names: &[String], var: &str) -> Formula {
    f::or_all((0..names.len()).map(|i| {
        f::and_all(
            (0..names.len()).map(|j| if i == j { f::mem(var, &names[j]) } else { f::not(f::mem(var, &names[j])) }),
        )
    }))
}

/// A relabelling of node-labelled strings as a parameterised transduction:
/// `X_τ` collects the positions that become `τ`.
pub fn relabelling_to_mso(rel: &[(char, char)], sigma_in: &Alphabet) -> MsoTransduction {
    let inputs = labels(rel.iter().map(|p| p.0).chain(sigma_in.symbols().iter().copied()));
    let targets = labels(rel.iter().map(|p| p.1));
    let names: Vec<String> = targets.iter().map(|&c| param_for(c)).collect();
    let mut t = MsoTransduction::new(
        "relabel",
        1,
        &inputs.iter().copied().chain([UNLAB]).collect::<Vec<_>>(),
        &targets.iter().copied().chain([UNLAB]).collect::<Vec<_>>(),
    )
    .with_strings(Shape::Node, Encoding::Node);
    t.params = names.clone();
    let consistent = f::and_all(targets.iter().enumerate().map(|(i, &tau)| {
        f::imp(
            f::mem("x", &names[i]),
            f::or_all(rel.iter().filter(|p| p.1 == tau).map(|p| f::lab(p.0, "x"))),
        )
    }));
    t.domain = f::all("x", f::and(partition(&names, "x"), consistent));
    for (i, &tau) in targets.iter().enumerate() {
        t.node(0, tau, f::mem("x", &names[i]));
    }
    t.edge(0, 0, UNLAB, f::edge(UNLAB, "x", "y"));
    t
}

/// The edge-labelled variant: the parameters hold the source node of each
/// relabelled edge; the last node belongs to no parameter.
pub fn edge_relabelling_to_mso(rel: &[(char, char)], sigma_in: &Alphabet) -> MsoTransduction {
    let inputs = labels(rel.iter().map(|p| p.0).chain(sigma_in.symbols().iter().copied()));
    let targets = labels(rel.iter().map(|p| p.1));
    let names: Vec<String> = targets.iter().map(|&c| param_for(c)).collect();
    let mut t = MsoTransduction::new(
        "relabel",
        1,
        &inputs.iter().copied().chain([UNLAB]).collect::<Vec<_>>(),
        &targets.iter().copied().chain([UNLAB]).collect::<Vec<_>>(),
    )
    .with_strings(Shape::Edge, Encoding::Edge);
    t.params = names.clone();
    let has_out = f::ex("y", f::edge_any(&inputs, "x", "y"));
    let consistent = f::and_all(targets.iter().enumerate().map(|(i, &tau)| {
        let sources: Vec<char> = rel.iter().filter(|p| p.1 == tau).map(|p| p.0).collect();
        f::imp(f::mem("x", &names[i]), f::ex("y", f::edge_any(&sources, "x", "y")))
    }));
    let none = f::and_all(names.iter().map(|n| f::not(f::mem("x", n))));
    t.domain = f::all(
        "x",
        f::and(f::imp(has_out.clone(), f::and(partition(&names, "x"), consistent)), f::imp(f::not(has_out), none)),
    );
    t.node(0, UNLAB, f::tt());
    for (i, &tau) in targets.iter().enumerate() {
        t.edge(0, 0, tau, f::and(f::edge_any(&inputs, "x", "y"), f::mem("x", &names[i])));
    }
    t
}

/// Disjoint union: copies are kept apart and every formula is
/// guarded by its own domain.
pub fn union(a: &MsoTransduction, b: &MsoTransduction) -> Result<MsoTransduction, TransductionError> {
    if a.input_labels != b.input_labels || a.output_labels != b.output_labels || a.params != b.params {
        return Err(TransductionError::Signature(format!(
            "`{}` and `{}` have different signatures",
            a.name, b.name
        )));
    }
    let mut t = MsoTransduction {
        name: format!("{}+{}", a.name, b.name),
        params: a.params.clone(),
        copies: Vec::new(),
        input_labels: a.input_labels.clone(),
        output_labels: a.output_labels.clone(),
        strings: a.strings.or(b.strings),
        domain: f::or(a.domain.clone(), b.domain.clone()),
        nodes: BTreeMap::new(),
        edges: BTreeMap::new(),
    };
    for (side, part) in [a, b].into_iter().enumerate() {
        let off = t.copies.len();
        t.copies.extend(part.copies.iter().map(|c| format!("{}.{c}", side + 1)));
        for ((c, l), phi) in &part.nodes {
            t.node(off + c, *l, f::and(phi.clone(), part.domain.clone()));
        }
        for ((c, d, l), phi) in &part.edges {
            t.edge(off + c, off + d, *l, f::and(phi.clone(), part.domain.clone()));
        }
    }
    Ok(t)
}

/// Whether two string transductions have disjoint domains, decided on the
/// automata of their domain formulas.
pub fn domains_disjoint(a: &MsoTransduction, b: &MsoTransduction, syms: &[char], enc: Encoding) -> Result<bool, TransductionError> {
    let both = f::and(a.domain.clone(), b.domain.clone());
    let both = a.params.iter().chain(&b.params).fold(both, |acc, p| f::ex_set(p, acc));
    Ok(compile_over(&both, syms, enc)?.dfa.is_empty())
}

/// Symbolic precomposition with a deterministic one-copy transduction:
/// the result runs `first` and then `second`. Quantifiers of `second` are
/// restricted to the nodes `first` keeps, atoms are replaced by `first`'s
/// formulas.
pub fn precompose(first: &MsoTransduction, second: &MsoTransduction) -> Result<MsoTransduction, TransductionError> {
    if first.copies.len() != 1 || !first.params.is_empty() {
        return Err(TransductionError::Signature(format!(
            "`{}` must be deterministic with a single copy",
            first.name
        )));
    }
    let node_labels = first.node_labels();
    let kept = |x: &str| {
        f::or_all(node_labels.iter().map(|&l| {
            f::and(
                first.node_formula(0, l).with(&[("x", x)]),
                f::and_all(node_labels.iter().filter(|&&m| m != l).map(|&m| f::not(first.node_formula(0, m).with(&[("x", x)])))),
            )
        }))
    };
    let edge_labels = first.edge_labels();
    let tr = |phi: &Formula| translate(&phi.expand_paths(&edge_labels), first, &kept);
    let mut t = MsoTransduction {
        name: format!("{};{}", first.name, second.name),
        params: second.params.clone(),
        copies: second.copies.clone(),
        input_labels: first.input_labels.clone(),
        output_labels: second.output_labels.clone(),
        strings: match (first.strings, second.strings) {
            (Some((i, _)), Some((_, o))) => Some((i, o)),
            _ => None,
        },
        domain: f::and(first.domain.clone(), tr(&second.domain)),
        nodes: BTreeMap::new(),
        edges: BTreeMap::new(),
    };
    for ((c, l), phi) in &second.nodes {
        t.node(*c, *l, f::and(kept("x"), tr(phi)));
    }
    for ((c, d, l), phi) in &second.edges {
        t.edge(*c, *d, *l, f::and_all([kept("x"), kept("y"), tr(phi)]));
    }
    Ok(t)
}

fn translate(phi: &Formula, first: &MsoTransduction, kept: &dyn Fn(&str) -> Formula) -> Formula {
    match phi.kind() {
        Kind::Lab(c, x) => first.node_formula(0, *c).with(&[("x", x)]),
        Kind::Edge(c, x, y) => first.edge_formula(0, 0, *c).with(&[("x", x), ("y", y)]),
        Kind::Not(a) => f::not(translate(a, first, kept)),
        Kind::And(a, b) => f::and(translate(a, first, kept), translate(b, first, kept)),
        Kind::Or(a, b) => f::or(translate(a, first, kept), translate(b, first, kept)),
        Kind::Imp(a, b) => f::imp(translate(a, first, kept), translate(b, first, kept)),
        Kind::Ex(y, a) => f::ex(y, f::and(kept(y), translate(a, first, kept))),
        Kind::All(y, a) => f::all(y, f::imp(kept(y), translate(a, first, kept))),
        Kind::ExS(s, a) => f::ex_set(s, translate(a, first, kept)),
        Kind::AllS(s, a) => f::all_set(s, translate(a, first, kept)),
        Kind::Path { .. } => unreachable!("paths are expanded before translation"),
        _ => phi.clone(),
    }
}

// ---------------------------------------------------------------------------
// Pipelines

/// One step of a pipeline: a transduction, or an evaluation-level union of
/// alternative pipelines.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Step {
    Stage(MsoTransduction),
    Union(Vec<Pipeline>),
}

/// Stages applied left to right; the relation is the relational composition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pipeline {
    pub name: String,
    pub strings: Option<(Shape, Encoding)>,
    pub steps: Vec<Step>,
}

impl Pipeline {
    pub fn new(name: &str, stages: Vec<MsoTransduction>) -> Pipeline {
        let strings = match (stages.first().and_then(|s| s.strings), stages.last().and_then(|s| s.strings)) {
            (Some((i, _)), Some((_, o))) => Some((i, o)),
            _ => None,
        };
        Pipeline { name: name.into(), strings, steps: stages.into_iter().map(Step::Stage).collect() }
    }

    pub fn single(t: MsoTransduction) -> Pipeline {
        Pipeline { name: t.name.clone(), strings: t.strings, steps: vec![Step::Stage(t)] }
    }

    pub fn apply(&self, g: &Graph) -> Result<BTreeSet<Graph>, TransductionError> {
        let mut cur: BTreeSet<Graph> = [g.clone()].into();
        for step in &self.steps {
            let mut next = BTreeSet::new();
            for h in &cur {
                match step {
                    Step::Stage(t) => next.extend(t.apply(h)?),
                    Step::Union(alts) => {
                        for p in alts {
                            next.extend(p.apply(h)?);
                        }
                    }
                }
            }
            cur = next;
        }
        Ok(cur)
    }

    pub fn apply_string(&self, w: &str) -> Result<BTreeSet<String>, TransductionError> {
        let (input, output) = self
            .strings
            .ok_or_else(|| TransductionError::Signature(format!("`{}` declares no string encodings", self.name)))?;
        let w: Vec<char> = w.chars().collect();
        self.apply(&input.encode_raw(&w))?
            .iter()
            .map(|g| Shape::from(output).decode(g).map_err(TransductionError::NotAString))
            .collect()
    }

    /// All stages, depth first.
    pub fn stages(&self) -> Vec<&MsoTransduction> {
        let mut out = Vec::new();
        for s in &self.steps {
            match s {
                Step::Stage(t) => out.push(t),
                Step::Union(ps) => ps.iter().for_each(|p| out.extend(p.stages())),
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Encoding changes of a whole string transduction

/// Node-labelled form of an edge-labelled string transduction `m`:
/// `nd2ed ; m ; ed2nd`, plus `ε ↦ ε` when `m` does so. Fails when `m` maps ε
/// to a nonempty string.
pub fn to_node_form(m: &Pipeline, sigma_in: &Alphabet, sigma_out: &Alphabet) -> Result<Pipeline, TransductionError> {
    let on_empty = m.apply_string("")?;
    if let Some(z) = on_empty.iter().find(|z| !z.is_empty()) {
        return Err(TransductionError::NotRepresentable(z.clone()));
    }
    let mut main = Pipeline::new("", vec![nd2ed(sigma_in)]);
    main.steps.extend(m.steps.iter().cloned());
    main.steps.push(Step::Stage(ed2nd(sigma_out)));
    main.name = format!("ngr({})", m.name);
    main.strings = Some((Shape::Node, Encoding::Node));
    if on_empty.is_empty() {
        return Ok(main);
    }
    let mut eps = MsoTransduction::new("eps", 0, &star_and(sigma_in), &star_and(sigma_out))
        .with_strings(Shape::Node, Encoding::Node);
    eps.domain = f::not(f::ex("x", f::tt()));
    Ok(Pipeline {
        name: main.name.clone(),
        strings: main.strings,
        steps: vec![Step::Union(vec![main, Pipeline::single(eps)])],
    })
}

/// Edge-labelled form of a deterministic node-labelled string transduction
/// `m`: `ed2nd ; m ; nd2ed` for nonempty outputs, united with a one-copy
/// transduction producing `egr(ε)` on the inputs `m` maps to ε. The latter's
/// domain is obtained through automata.
pub fn to_edge_form(m: &MsoTransduction, sigma_in: &Alphabet, sigma_out: &Alphabet) -> Result<Pipeline, TransductionError> {
    if !m.params.is_empty() {
        return Err(TransductionError::Signature(format!("`{}` has parameters", m.name)));
    }
    let mut main = Pipeline::new("", vec![ed2nd(sigma_in), m.clone(), nd2ed(sigma_out)]);
    main.name = format!("egr({})", m.name);
    main.strings = Some((Shape::Edge, Encoding::Edge));
    // ngr(m)(ngr w) = ngr(ε) iff w is in the domain and no copy survives.
    let survives = |c: usize| {
        let ls = m.node_labels();
        f::or_all(ls.iter().map(|&l| {
            f::and(
                m.node_formula(c, l),
                f::and_all(ls.iter().filter(|&&k| k != l).map(|&k| f::not(m.node_formula(c, k)))),
            )
        }))
    };
    let empty_out = f::and(
        m.domain.clone(),
        f::and_all((0..m.copies.len()).map(|c| f::not(f::ex("x", survives(c))))),
    );
    let lang = compile_over(&empty_out, sigma_in.symbols(), Encoding::Node)?.language().expect("closed");
    let mut eps = MsoTransduction::new("eps", 1, &star_and(sigma_in), &star_and(sigma_out))
        .with_strings(Shape::Edge, Encoding::Edge);
    eps.domain = encode::edge_formula(&lang);
    eps.node(0, UNLAB, f::not(f::ex("y", f::edge_any(sigma_in.symbols(), "x", "y"))));
    Ok(Pipeline {
        name: main.name.clone(),
        strings: main.strings,
        steps: vec![Step::Union(vec![main, Pipeline::single(eps)])],
    })
}

// ---------------------------------------------------------------------------
// Text format

fn err(line: usize, msg: impl Into<String>) -> TransductionError {
    TransductionError::Parse { line, msg: msg.into() }
}

fn parse_labels(parts: &[&str], line: usize) -> Result<Vec<char>, TransductionError> {
    parts.iter().map(|p| sym::parse_token(p).map_err(|e| err(line, e.to_string()))).collect()
}

fn parse_formula(text: &str, line: usize) -> Result<Formula, TransductionError> {
    text.parse::<Formula>().map_err(|e: FormulaError| err(line, e.to_string()))
}

/// Splits off the first `n` whitespace-separated words; the rest is returned
/// verbatim.
fn words(line: &str, n: usize) -> Option<(Vec<&str>, &str)> {
    let mut rest = line;
    let mut out = Vec::new();
    for _ in 0..n {
        rest = rest.trim_start();
        let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
        if end == 0 {
            return None;
        }
        out.push(&rest[..end]);
        rest = &rest[end..];
    }
    Some((out, rest.trim()))
}

fn parse_strings(parts: &[&str], line: usize) -> Result<(Shape, Encoding), TransductionError> {
    match parts {
        [i, o] => {
            let i = Shape::parse(i).ok_or_else(|| err(line, format!("unknown input shape `{i}`")))?;
            let o = Encoding::parse(o).ok_or_else(|| err(line, format!("unknown output encoding `{o}`")))?;
            Ok((i, o))
        }
        _ => Err(err(line, "expected `strings <ngr|egr|tape> <ngr|egr>`")),
    }
}

struct Lines<'a> {
    items: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        let items = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('%').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty())
            .collect();
        Lines { items, pos: 0 }
    }

    fn peek(&self) -> Option<(usize, &'a str)> {
        self.items.get(self.pos).copied()
    }

    fn head(&self) -> Option<&'a str> {
        self.peek().map(|(_, l)| l.split_whitespace().next().unwrap_or(""))
    }
}

fn parse_transduction(ls: &mut Lines) -> Result<MsoTransduction, TransductionError> {
    let (n, first) = ls.peek().ok_or_else(|| err(0, "expected `transduction`"))?;
    let name = match first.split_whitespace().collect::<Vec<_>>().as_slice() {
        ["transduction", name] => name.to_string(),
        ["transduction"] => String::new(),
        _ => return Err(err(n, "expected `transduction <name>`")),
    };
    ls.pos += 1;
    let mut t = MsoTransduction::new(&name, 0, &[], &[]);
    let mut copies_seen = false;
    while let Some((line, text)) = ls.peek() {
        let parts: Vec<&str> = text.split_whitespace().collect();
        match parts[0] {
            "transduction" | "branch" | "end" | "union" => break,
            "strings" => t.strings = Some(parse_strings(&parts[1..], line)?),
            "params" => {
                for p in &parts[1..] {
                    if !crate::graph::is_set_var(p) {
                        return Err(err(line, format!("parameter `{p}` must start with an uppercase letter")));
                    }
                }
                t.params = parts[1..].iter().map(|s| s.to_string()).collect();
            }
            "copies" => {
                t.copies = parts[1..].iter().map(|s| s.to_string()).collect();
                copies_seen = true;
            }
            "input-labels" => t.input_labels = labels(parse_labels(&parts[1..], line)?),
            "output-labels" => t.output_labels = labels(parse_labels(&parts[1..], line)?),
            "domain" => t.domain = parse_formula(words(text, 1).unwrap().1, line)?,
            "node" | "edge" => {
                let is_edge = parts[0] == "edge";
                let (w, rest) = words(text, if is_edge { 4 } else { 3 })
                    .ok_or_else(|| err(line, format!("incomplete `{}` line", parts[0])))?;
                if !copies_seen {
                    return Err(err(line, "`copies` must come before formulas"));
                }
                let copy = |s: &str| {
                    t.copies.iter().position(|c| c == s).ok_or_else(|| err(line, format!("unknown copy `{s}`")))
                };
                let phi = parse_formula(rest, line)?;
                if is_edge {
                    let (a, b) = (copy(w[1])?, copy(w[2])?);
                    let l = parse_labels(&w[3..4], line)?[0];
                    t.edge(a, b, l, phi);
                } else {
                    let a = copy(w[1])?;
                    let l = parse_labels(&w[2..3], line)?[0];
                    t.node(a, l, phi);
                }
            }
            other => return Err(err(line, format!("unknown directive `{other}`"))),
        }
        ls.pos += 1;
    }
    if !copies_seen {
        return Err(err(n, "missing `copies` line"));
    }
    t.check().map_err(|e| err(n, e.to_string()))?;
    Ok(t)
}

impl std::str::FromStr for MsoTransduction {
    type Err = TransductionError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut ls = Lines::new(text);
        let t = parse_transduction(&mut ls)?;
        if let Some((line, _)) = ls.peek() {
            return Err(err(line, "trailing content after the transduction"));
        }
        Ok(t)
    }
}

fn parse_pipeline_body(ls: &mut Lines, name: String, strings: Option<(Shape, Encoding)>) -> Result<Pipeline, TransductionError> {
    let mut p = Pipeline { name, strings, steps: Vec::new() };
    while let Some(h) = ls.head() {
        match h {
            "transduction" => p.steps.push(Step::Stage(parse_transduction(ls)?)),
            "union" => {
                let (uline, _) = ls.peek().unwrap();
                ls.pos += 1;
                let mut alts = Vec::new();
                while ls.head() == Some("branch") {
                    ls.pos += 1;
                    alts.push(parse_pipeline_body(ls, String::new(), strings)?);
                }
                if ls.head() != Some("end") {
                    return Err(err(uline, "`union` without matching `end`"));
                }
                ls.pos += 1;
                p.steps.push(Step::Union(alts));
            }
            _ => break,
        }
    }
    Ok(p)
}

impl std::str::FromStr for Pipeline {
    type Err = TransductionError;

    /// Accepts a `pipeline` file or a single `transduction`.
    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut ls = Lines::new(text);
        let p = match ls.head() {
            Some("pipeline") => {
                let (line, first) = ls.peek().unwrap();
                let name = first.split_whitespace().nth(1).unwrap_or("").to_string();
                ls.pos += 1;
                let mut strings = None;
                if ls.head() == Some("strings") {
                    let (l, t) = ls.peek().unwrap();
                    let parts: Vec<&str> = t.split_whitespace().collect();
                    strings = Some(parse_strings(&parts[1..], l)?);
                    ls.pos += 1;
                }
                let p = parse_pipeline_body(&mut ls, name, strings)?;
                if p.steps.is_empty() {
                    return Err(err(line, "empty pipeline"));
                }
                p
            }
            Some("transduction") => Pipeline::single(parse_transduction(&mut ls)?),
            _ => return Err(err(1, "expected `pipeline` or `transduction`")),
        };
        if let Some((line, text)) = ls.peek() {
            return Err(err(line, format!("unexpected `{text}`")));
        }
        Ok(p)
    }
}

fn tokens(ls: &[char]) -> String {
    ls.iter().map(|&c| sym::token(c)).collect::<Vec<_>>().join(" ")
}

impl fmt::Display for MsoTransduction {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(out, "transduction {}", self.name)?;
        if let Some((i, o)) = self.strings {
            writeln!(out, "strings {} {}", i.name(), o.name())?;
        }
        if !self.params.is_empty() {
            writeln!(out, "params {}", self.params.join(" "))?;
        }
        writeln!(out, "copies {}", self.copies.join(" "))?;
        writeln!(out, "input-labels {}", tokens(&self.input_labels))?;
        writeln!(out, "output-labels {}", tokens(&self.output_labels))?;
        if !self.domain.is_true() {
            writeln!(out, "domain {}", self.domain)?;
        }
        for ((c, l), phi) in &self.nodes {
            writeln!(out, "node {} {} {}", self.copies[*c], sym::token(*l), phi)?;
        }
        for ((c, d, l), phi) in &self.edges {
            writeln!(out, "edge {} {} {} {}", self.copies[*c], self.copies[*d], sym::token(*l), phi)?;
        }
        Ok(())
    }
}

impl Pipeline {
    fn write_steps(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.steps {
            match s {
                Step::Stage(t) => write!(out, "{t}")?,
                Step::Union(alts) => {
                    writeln!(out, "union")?;
                    for a in alts {
                        writeln!(out, "branch")?;
                        a.write_steps(out)?;
                    }
                    writeln!(out, "end")?;
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(out, "pipeline {}", self.name)?;
        if let Some((i, o)) = self.strings {
            writeln!(out, "strings {} {}", i.name(), o.name())?;
        }
        self.write_steps(out)
    }
}

/// Labels of a string transduction's edge-labelled output including `ε`,
/// as used by computation spaces.
pub fn with_eps(sigma: &Alphabet) -> Vec<char> {
    let mut v = sigma.symbols().to_vec();
    v.push(EPS);
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{egr_encode, ngr_encode, tape_encode};

    fn ab() -> Alphabet {
        Alphabet::ab()
    }

    #[test]
    fn ed2nd_moves_labels_to_nodes() {
        let out = ed2nd(&ab()).apply(&egr_encode("ab", &ab()).unwrap()).unwrap();
        assert_eq!(out, [ngr_encode("ab", &ab()).unwrap().canonical()].into());
    }

    #[test]
    fn nd2ed_is_undefined_on_empty() {
        assert!(nd2ed(&ab()).apply(&ngr_encode("", &ab()).unwrap()).unwrap().is_empty());
        let back = nd2ed(&ab()).apply_string("abb", Shape::Node, Encoding::Edge).unwrap();
        assert_eq!(back, ["abb".to_string()].into());
    }

    #[test]
    fn gr_id_maps_tape_to_edges() {
        let out = gr_id(&ab()).apply(&tape_encode("ab", &ab()).unwrap()).unwrap();
        assert_eq!(out, [egr_encode("ab", &ab()).unwrap().canonical()].into());
        let inv = gr_id_inv(&ab());
        for w in ["", "a", "abba"] {
            let g = egr_encode(w, &ab()).unwrap();
            assert_eq!(inv.apply(&g).unwrap(), [tape_encode(w, &ab()).unwrap().canonical()].into());
        }
    }

    #[test]
    fn relabelling_enumerates_choices() {
        let t = relabelling_to_mso(&[('a', 'a'), ('a', 'b')], &ab());
        let out = t.apply_string("aa", Shape::Node, Encoding::Node).unwrap();
        assert_eq!(out.len(), 4);
        assert!(t.apply_string("b", Shape::Node, Encoding::Node).unwrap().is_empty());
    }

    #[test]
    fn text_round_trip() {
        let t = nd2ed(&ab());
        let back: MsoTransduction = t.to_string().parse().unwrap();
        assert_eq!(back, t);
        let p = gr_id_inv(&ab());
        let back: Pipeline = p.to_string().parse().unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn precompose_with_gr_id() {
        let id = identity(&[UNLAB], &['a', 'b']).with_strings(Shape::Edge, Encoding::Edge);
        let t = precompose(&gr_id(&ab()), &id).unwrap();
        for w in ["", "a", "ab", "bba"] {
            assert_eq!(t.apply_string(w, Shape::Tape, Encoding::Edge).unwrap(), [w.to_string()].into());
        }
    }
}
