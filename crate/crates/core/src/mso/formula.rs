//! MSO formula syntax: construction, text format, substitution.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use thiserror::Error;

use crate::graph::is_set_var;
use crate::sym;

pub type Var = Arc<str>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormulaError {
    #[error("formula syntax: {0}")]
    Syntax(String),
    #[error("`{0}` is a node variable where a set variable is expected")]
    NotSetVar(String),
    #[error("`{0}` is a set variable where a node variable is expected")]
    NotNodeVar(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Kind {
    True,
    False,
    Lab(char, Var),
    Edge(char, Var, Var),
    Eq(Var, Var),
    In(Var, Var),
    Not(Formula),
    And(Formula, Formula),
    Or(Formula, Formula),
    Imp(Formula, Formula),
    Ex(Var, Formula),
    All(Var, Formula),
    ExS(Var, Formula),
    AllS(Var, Formula),
    /// Reachability along edges; `labels == None` means along every edge.
    Path { labels: Option<Vec<char>>, strict: bool, x: Var, y: Var },
}

#[derive(Debug)]
struct Node {
    kind: Kind,
    free: Vec<Var>,
    set_quants: usize,
}

/// Immutable, cheaply clonable formula tree.
#[derive(Clone, Debug)]
pub struct Formula(Arc<Node>);

impl PartialEq for Formula {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.0.kind == other.0.kind
    }
}
impl Eq for Formula {}
impl Hash for Formula {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.0.kind.hash(state)
    }
}

fn merge(a: &[Var], b: &[Var]) -> Vec<Var> {
    let mut v: Vec<Var> = a.iter().chain(b).cloned().collect();
    v.sort();
    v.dedup();
    v
}

impl Formula {
    fn mk(kind: Kind) -> Formula {
        let (free, set_quants) = match &kind {
            Kind::True | Kind::False => (vec![], 0),
            Kind::Lab(_, x) => (vec![x.clone()], 0),
            Kind::Edge(_, x, y) | Kind::Eq(x, y) | Kind::In(x, y) => {
                (merge(std::slice::from_ref(x), std::slice::from_ref(y)), 0)
            }
            Kind::Path { x, y, .. } => (merge(std::slice::from_ref(x), std::slice::from_ref(y)), 0),
            Kind::Not(f) => (f.0.free.clone(), f.0.set_quants),
            Kind::And(f, g) | Kind::Or(f, g) | Kind::Imp(f, g) => {
                (merge(&f.0.free, &g.0.free), f.0.set_quants + g.0.set_quants)
            }
            Kind::Ex(v, f) | Kind::All(v, f) => {
                (f.0.free.iter().filter(|w| *w != v).cloned().collect(), f.0.set_quants)
            }
            Kind::ExS(v, f) | Kind::AllS(v, f) => {
                (f.0.free.iter().filter(|w| *w != v).cloned().collect(), f.0.set_quants + 1)
            }
        };
        Formula(Arc::new(Node { kind, free, set_quants }))
    }

    pub fn kind(&self) -> &Kind {
        &self.0.kind
    }

    /// Free variables, sorted.
    pub fn free_vars(&self) -> &[Var] {
        &self.0.free
    }

    /// Number of set quantifiers in the tree.
    pub fn set_quantifiers(&self) -> usize {
        self.0.set_quants
    }

    pub fn is_closed(&self) -> bool {
        self.0.free.is_empty()
    }

    pub fn is_true(&self) -> bool {
        matches!(self.0.kind, Kind::True)
    }

    pub fn is_false(&self) -> bool {
        matches!(self.0.kind, Kind::False)
    }

    /// Stable identity of this subtree while it is alive.
    pub fn id(&self) -> usize {
        Arc::as_ptr(&self.0) as usize
    }

    /// Every variable name occurring in the formula, bound or free.
    pub fn all_vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self.kind() {
            Kind::True | Kind::False => {}
            Kind::Lab(_, x) => {
                out.insert(x.clone());
            }
            Kind::Edge(_, x, y) | Kind::Eq(x, y) | Kind::In(x, y) | Kind::Path { x, y, .. } => {
                out.insert(x.clone());
                out.insert(y.clone());
            }
            Kind::Not(f) => f.collect_vars(out),
            Kind::And(f, g) | Kind::Or(f, g) | Kind::Imp(f, g) => {
                f.collect_vars(out);
                g.collect_vars(out);
            }
            Kind::Ex(v, f) | Kind::All(v, f) | Kind::ExS(v, f) | Kind::AllS(v, f) => {
                out.insert(v.clone());
                f.collect_vars(out);
            }
        }
    }

    /// Node and edge labels mentioned by atoms.
    pub fn labels(&self) -> BTreeSet<char> {
        let mut out = BTreeSet::new();
        self.collect_labels(&mut out);
        out
    }

    fn collect_labels(&self, out: &mut BTreeSet<char>) {
        match self.kind() {
            Kind::Lab(c, _) | Kind::Edge(c, _, _) => {
                out.insert(*c);
            }
            Kind::Path { labels: Some(ls), .. } => out.extend(ls.iter().copied()),
            Kind::Not(f) | Kind::Ex(_, f) | Kind::All(_, f) | Kind::ExS(_, f) | Kind::AllS(_, f) => {
                f.collect_labels(out)
            }
            Kind::And(f, g) | Kind::Or(f, g) | Kind::Imp(f, g) => {
                f.collect_labels(out);
                g.collect_labels(out);
            }
            _ => {}
        }
    }

    /// Whether a derived path form occurs.
    pub fn has_path(&self) -> bool {
        match self.kind() {
            Kind::Path { .. } => true,
            Kind::Not(f) | Kind::Ex(_, f) | Kind::All(_, f) | Kind::ExS(_, f) | Kind::AllS(_, f) => {
                f.has_path()
            }
            Kind::And(f, g) | Kind::Or(f, g) | Kind::Imp(f, g) => f.has_path() || g.has_path(),
            _ => false,
        }
    }

    /// Capture-avoiding renaming of free variables.
    pub fn rename(&self, map: &BTreeMap<Var, Var>) -> Formula {
        let relevant: BTreeMap<Var, Var> = map
            .iter()
            .filter(|(k, v)| k != v && self.free_vars().contains(k))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        if relevant.is_empty() {
            return self.clone();
        }
        let mut avoid = self.all_vars();
        avoid.extend(relevant.values().cloned());
        self.rename_in(&relevant, &mut avoid)
    }

    fn rename_in(&self, map: &BTreeMap<Var, Var>, avoid: &mut BTreeSet<Var>) -> Formula {
        let r = |v: &Var| map.get(v).cloned().unwrap_or_else(|| v.clone());
        if !self.free_vars().iter().any(|v| map.contains_key(v)) {
            return self.clone();
        }
        match self.kind() {
            Kind::True | Kind::False => self.clone(),
            Kind::Lab(c, x) => Formula::mk(Kind::Lab(*c, r(x))),
            Kind::Edge(c, x, y) => Formula::mk(Kind::Edge(*c, r(x), r(y))),
            Kind::Eq(x, y) => Formula::mk(Kind::Eq(r(x), r(y))),
            Kind::In(x, y) => Formula::mk(Kind::In(r(x), r(y))),
            Kind::Path { labels, strict, x, y } => Formula::mk(Kind::Path {
                labels: labels.clone(),
                strict: *strict,
                x: r(x),
                y: r(y),
            }),
            Kind::Not(f) => Formula::mk(Kind::Not(f.rename_in(map, avoid))),
            Kind::And(f, g) => Formula::mk(Kind::And(f.rename_in(map, avoid), g.rename_in(map, avoid))),
            Kind::Or(f, g) => Formula::mk(Kind::Or(f.rename_in(map, avoid), g.rename_in(map, avoid))),
            Kind::Imp(f, g) => Formula::mk(Kind::Imp(f.rename_in(map, avoid), g.rename_in(map, avoid))),
            Kind::Ex(v, f) | Kind::All(v, f) | Kind::ExS(v, f) | Kind::AllS(v, f) => {
                let mut inner: BTreeMap<Var, Var> = map.clone();
                inner.remove(v);
                let captures = inner
                    .iter()
                    .any(|(k, t)| t == v && f.free_vars().contains(k));
                let binder = if captures {
                    let nv = fresh(v, avoid);
                    avoid.insert(nv.clone());
                    inner.insert(v.clone(), nv.clone());
                    nv
                } else {
                    v.clone()
                };
                let body = f.rename_in(&inner, avoid);
                Formula::mk(match self.kind() {
                    Kind::Ex(..) => Kind::Ex(binder, body),
                    Kind::All(..) => Kind::All(binder, body),
                    Kind::ExS(..) => Kind::ExS(binder, body),
                    _ => Kind::AllS(binder, body),
                })
            }
        }
    }

    /// Instantiates free variables positionally: `self.with(&[("x","u")])`.
    pub fn with(&self, pairs: &[(&str, &str)]) -> Formula {
        let map: BTreeMap<Var, Var> = pairs.iter().map(|(a, b)| (v(a), v(b))).collect();
        self.rename(&map)
    }

    /// Rebuilds the tree bottom-up, letting `f` replace any subformula.
    pub fn transform(&self, f: &mut dyn FnMut(&Formula) -> Option<Formula>) -> Formula {
        if let Some(r) = f(self) {
            return r;
        }
        match self.kind() {
            Kind::Not(a) => not(a.transform(f)),
            Kind::And(a, b) => and(a.transform(f), b.transform(f)),
            Kind::Or(a, b) => or(a.transform(f), b.transform(f)),
            Kind::Imp(a, b) => imp(a.transform(f), b.transform(f)),
            Kind::Ex(x, a) => ex(x, a.transform(f)),
            Kind::All(x, a) => all(x, a.transform(f)),
            Kind::ExS(x, a) => ex_set(x, a.transform(f)),
            Kind::AllS(x, a) => all_set(x, a.transform(f)),
            _ => self.clone(),
        }
    }

    /// Replaces every derived path form by its second-order definition over
    /// the given edge labels.
    pub fn expand_paths(&self, edge_labels: &[char]) -> Formula {
        self.transform(&mut |g| match g.kind() {
            Kind::Path { labels, strict, x, y } => {
                let ls = labels.clone().unwrap_or_else(|| edge_labels.to_vec());
                Some(path_definition(&ls, *strict, x, y, &g.all_vars()))
            }
            _ => None,
        })
    }
}

/// Makes a variable name.
pub fn v(name: &str) -> Var {
    Arc::from(name)
}

/// A name derived from `base` that is not in `avoid`.
pub fn fresh(base: &str, avoid: &BTreeSet<Var>) -> Var {
    let stem: String = base.trim_end_matches(|c: char| c.is_ascii_digit()).to_string();
    let stem = if stem.is_empty() { base.to_string() } else { stem };
    for i in 1.. {
        let cand: Var = Arc::from(format!("{stem}{i}").as_str());
        if !avoid.contains(&cand) {
            return cand;
        }
    }
    unreachable!()
}

pub fn tt() -> Formula {
    Formula::mk(Kind::True)
}

pub fn ff() -> Formula {
    Formula::mk(Kind::False)
}

pub fn lab(c: char, x: &str) -> Formula {
    Formula::mk(Kind::Lab(c, v(x)))
}

pub fn edge(c: char, x: &str, y: &str) -> Formula {
    Formula::mk(Kind::Edge(c, v(x), v(y)))
}

/// Disjunction of `edge_c(x,y)` over the given labels.
pub fn edge_any(labels: &[char], x: &str, y: &str) -> Formula {
    or_all(labels.iter().map(|&c| edge(c, x, y)))
}

pub fn eq(x: &str, y: &str) -> Formula {
    if x == y {
        return tt();
    }
    Formula::mk(Kind::Eq(v(x), v(y)))
}

pub fn mem(x: &str, set: &str) -> Formula {
    Formula::mk(Kind::In(v(x), v(set)))
}

pub fn not(f: Formula) -> Formula {
    match f.kind() {
        Kind::True => ff(),
        Kind::False => tt(),
        Kind::Not(g) => g.clone(),
        _ => Formula::mk(Kind::Not(f)),
    }
}

pub fn and(f: Formula, g: Formula) -> Formula {
    match (f.kind(), g.kind()) {
        (Kind::False, _) | (_, Kind::False) => ff(),
        (Kind::True, _) => g,
        (_, Kind::True) => f,
        _ => Formula::mk(Kind::And(f, g)),
    }
}

pub fn or(f: Formula, g: Formula) -> Formula {
    match (f.kind(), g.kind()) {
        (Kind::True, _) | (_, Kind::True) => tt(),
        (Kind::False, _) => g,
        (_, Kind::False) => f,
        _ => Formula::mk(Kind::Or(f, g)),
    }
}

pub fn imp(f: Formula, g: Formula) -> Formula {
    match (f.kind(), g.kind()) {
        (Kind::False, _) | (_, Kind::True) => tt(),
        (Kind::True, _) => g,
        (_, Kind::False) => not(f),
        _ => Formula::mk(Kind::Imp(f, g)),
    }
}

pub fn iff(f: Formula, g: Formula) -> Formula {
    and(imp(f.clone(), g.clone()), imp(g, f))
}

/// Right-nested conjunction; `true` when empty.
pub fn and_all(fs: impl IntoIterator<Item = Formula>) -> Formula {
    let fs: Vec<Formula> = fs.into_iter().collect();
    fs.into_iter().rev().fold(None, |acc: Option<Formula>, f| {
        Some(match acc {
            None => f,
            Some(a) => and(f, a),
        })
    })
    .unwrap_or_else(tt)
}

/// Right-nested disjunction; `false` when empty.
pub fn or_all(fs: impl IntoIterator<Item = Formula>) -> Formula {
    let fs: Vec<Formula> = fs.into_iter().collect();
    fs.into_iter().rev().fold(None, |acc: Option<Formula>, f| {
        Some(match acc {
            None => f,
            Some(a) => or(f, a),
        })
    })
    .unwrap_or_else(ff)
}

pub fn ex(x: &str, f: Formula) -> Formula {
    if f.is_false() {
        return ff();
    }
    Formula::mk(Kind::Ex(v(x), f))
}

pub fn all(x: &str, f: Formula) -> Formula {
    if f.is_true() {
        return tt();
    }
    Formula::mk(Kind::All(v(x), f))
}

pub fn ex_set(x: &str, f: Formula) -> Formula {
    if f.is_false() || f.is_true() {
        return f;
    }
    Formula::mk(Kind::ExS(v(x), f))
}

pub fn all_set(x: &str, f: Formula) -> Formula {
    if f.is_false() || f.is_true() {
        return f;
    }
    Formula::mk(Kind::AllS(v(x), f))
}

/// `x ⪯ y` along all edges.
pub fn path(x: &str, y: &str) -> Formula {
    Formula::mk(Kind::Path { labels: None, strict: false, x: v(x), y: v(y) })
}

/// `x ≺ y` along all edges.
pub fn path_plus(x: &str, y: &str) -> Formula {
    Formula::mk(Kind::Path { labels: None, strict: true, x: v(x), y: v(y) })
}

/// Reachability restricted to edges with the given labels.
pub fn path_via(labels: &[char], strict: bool, x: &str, y: &str) -> Formula {
    let mut ls = labels.to_vec();
    ls.sort_unstable();
    ls.dedup();
    Formula::mk(Kind::Path { labels: Some(ls), strict, x: v(x), y: v(y) })
}

/// `∀X[(x∈X ∧ closed(X)) → y∈X]`, plus `x≠y` when strict.
pub fn path_definition(labels: &[char], strict: bool, x: &Var, y: &Var, taken: &BTreeSet<Var>) -> Formula {
    let mut avoid = taken.clone();
    avoid.insert(x.clone());
    avoid.insert(y.clone());
    let set = fresh("P", &avoid);
    avoid.insert(set.clone());
    let z1 = fresh("z", &avoid);
    avoid.insert(z1.clone());
    let z2 = fresh("z", &avoid);
    let closed = all(
        &z1,
        all(
            &z2,
            imp(and(mem(&z1, &set), edge_any(labels, &z1, &z2)), mem(&z2, &set)),
        ),
    );
    let reach = all_set(&set, imp(and(mem(x, &set), closed), mem(y, &set)));
    if strict {
        and(reach, not(eq(x, y)))
    } else {
        reach
    }
}

/// Guarded string-shape formula over the given edge labels: a unique initial
/// node, a unique final node, and a functional edge relation.
pub fn string_shape(edge_labels: &[char]) -> Formula {
    let nonempty = ex("x", tt());
    let initial = ex("x", all("y", and(path("x", "y"), not(path_plus("y", "x")))));
    let last = ex("x", all("y", and(path("y", "x"), not(path_plus("x", "y")))));
    let functional = all(
        "x",
        all(
            "y1",
            all(
                "y2",
                imp(
                    and(edge_any(edge_labels, "x", "y1"), edge_any(edge_labels, "x", "y2")),
                    eq("y1", "y2"),
                ),
            ),
        ),
    );
    and_all([imp(nonempty.clone(), initial), imp(nonempty, last), functional])
}

/// `next_a(x,y)`: the first position after `x` labelled `a`.
pub fn next_sym(a: char, x: &str, y: &str) -> Formula {
    let z = fresh_for(&[x, y], "z");
    and_all([
        path_plus(x, y),
        lab(a, y),
        all(&z, imp(and(path_plus(x, &z), path_plus(&z, y)), not(lab(a, &z)))),
    ])
}

/// `fis_a(x,y)`: the first position of the `a`-segment containing `x`.
pub fn first_in_segment(a: char, x: &str, y: &str) -> Formula {
    let z = fresh_for(&[x, y], "z");
    and_all([
        path(y, x),
        all(&z, imp(and(path(y, &z), path(&z, x)), lab(a, &z))),
        not(ex(&z, and(edge(sym::UNLAB, &z, y), lab(a, &z)))),
    ])
}

fn fresh_for(names: &[&str], base: &str) -> String {
    let avoid: BTreeSet<Var> = names.iter().map(|n| v(n)).collect();
    if !avoid.contains(&v(base)) {
        return base.to_string();
    }
    fresh(base, &avoid).to_string()
}

/// `∀x∀y1∀y2[φ(x,y1) ∧ φ(x,y2) → y1=y2]` for `φ` with free `x`, `y`.
pub fn functionality(phi: &Formula) -> Formula {
    let mut avoid = phi.all_vars();
    avoid.insert(v("x"));
    let y1 = fresh("y", &avoid);
    avoid.insert(y1.clone());
    let y2 = fresh("y", &avoid);
    let a = phi.with(&[("y", &y1)]);
    let b = phi.with(&[("y", &y2)]);
    all("x", all(&y1, all(&y2, imp(and(a, b), eq(&y1, &y2)))))
}

/// Which side of the position a relativized formula talks about.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Restricts all quantifiers of the closed formula `phi` to positions strictly
/// left (or right) of the free variable `x`.
pub fn relativize(phi: &Formula, side: Side, x: &str) -> Formula {
    // Rename bound variables that clash with x first.
    let xv = v(x);
    let phi = if phi.all_vars().contains(&xv) {
        let mut avoid = phi.all_vars();
        avoid.insert(xv.clone());
        let nx = fresh(x, &avoid);
        rename_bound(phi, &xv, &nx)
    } else {
        phi.clone()
    };
    let guard = |y: &str| match side {
        Side::Left => path_plus(y, x),
        Side::Right => path_plus(x, y),
    };
    let mut avoid = phi.all_vars();
    avoid.insert(xv);
    rel(&phi, &guard, &avoid)
}

fn rel(f: &Formula, guard: &dyn Fn(&str) -> Formula, avoid: &BTreeSet<Var>) -> Formula {
    match f.kind() {
        Kind::Not(a) => not(rel(a, guard, avoid)),
        Kind::And(a, b) => and(rel(a, guard, avoid), rel(b, guard, avoid)),
        Kind::Or(a, b) => or(rel(a, guard, avoid), rel(b, guard, avoid)),
        Kind::Imp(a, b) => imp(rel(a, guard, avoid), rel(b, guard, avoid)),
        Kind::Ex(y, a) => ex(y, and(guard(y), rel(a, guard, avoid))),
        Kind::All(y, a) => all(y, imp(guard(y), rel(a, guard, avoid))),
        Kind::ExS(s, a) | Kind::AllS(s, a) => {
            let z = fresh("u", avoid);
            let inside = all(&z, imp(mem(&z, s), guard(&z)));
            match f.kind() {
                Kind::ExS(..) => ex_set(s, and(inside, rel(a, guard, avoid))),
                _ => all_set(s, imp(inside, rel(a, guard, avoid))),
            }
        }
        // On a linear graph a path between two nodes of a prefix (or suffix)
        // never leaves it, so path atoms need no guard.
        _ => f.clone(),
    }
}

fn rename_bound(f: &Formula, from: &Var, to: &Var) -> Formula {
    let re = |a: &Formula| rename_bound(a, from, to);
    let bind = |b: &Var| if b == from { to.clone() } else { b.clone() };
    match f.kind() {
        Kind::Not(a) => not(re(a)),
        Kind::And(a, b) => and(re(a), re(b)),
        Kind::Or(a, b) => or(re(a), re(b)),
        Kind::Imp(a, b) => imp(re(a), re(b)),
        Kind::Ex(y, a) | Kind::All(y, a) | Kind::ExS(y, a) | Kind::AllS(y, a) => {
            let body = if y == from {
                let mut m = BTreeMap::new();
                m.insert(from.clone(), to.clone());
                re(a).rename(&m)
            } else {
                re(a)
            };
            let b = bind(y);
            match f.kind() {
                Kind::Ex(..) => ex(&b, body),
                Kind::All(..) => all(&b, body),
                Kind::ExS(..) => ex_set(&b, body),
                _ => all_set(&b, body),
            }
        }
        _ => f.clone(),
    }
}

// ---------------------------------------------------------------------------
// Text format

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind() {
            Kind::True => write!(f, "true"),
            Kind::False => write!(f, "false"),
            Kind::Lab(c, x) => write!(f, "(lab {} {x})", sym::token(*c)),
            Kind::Edge(c, x, y) => write!(f, "(edge {} {x} {y})", sym::token(*c)),
            Kind::Eq(x, y) => write!(f, "(= {x} {y})"),
            Kind::In(x, y) => write!(f, "(in {x} {y})"),
            Kind::Not(a) => write!(f, "(not {a})"),
            Kind::And(a, b) => write!(f, "(and {a} {b})"),
            Kind::Or(a, b) => write!(f, "(or {a} {b})"),
            Kind::Imp(a, b) => write!(f, "(imp {a} {b})"),
            Kind::Ex(x, a) => write!(f, "(ex {x} {a})"),
            Kind::All(x, a) => write!(f, "(all {x} {a})"),
            Kind::ExS(x, a) => write!(f, "(exS {x} {a})"),
            Kind::AllS(x, a) => write!(f, "(allS {x} {a})"),
            Kind::Path { labels, strict, x, y } => {
                let op = if *strict { "path+" } else { "path" };
                match labels {
                    None => write!(f, "({op} {x} {y})"),
                    Some(ls) => {
                        let ls: Vec<String> = ls.iter().map(|&c| sym::token(c)).collect();
                        write!(f, "({op}-in ({}) {x} {y})", ls.join(" "))
                    }
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Open,
    Close,
    Atom(String),
}

fn tokenize(s: &str) -> Vec<Tok> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in s.chars() {
        if c == '(' || c == ')' || c.is_whitespace() {
            if !cur.is_empty() {
                out.push(Tok::Atom(std::mem::take(&mut cur)));
            }
            if c == '(' {
                out.push(Tok::Open);
            } else if c == ')' {
                out.push(Tok::Close);
            }
        } else {
            cur.push(c);
        }
    }
    if !cur.is_empty() {
        out.push(Tok::Atom(cur));
    }
    out
}

fn valid_ident(s: &str) -> bool {
    let mut cs = s.chars();
    cs.next().is_some_and(|c| c.is_ascii_alphabetic())
        && cs.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '\'')
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn next(&mut self) -> Result<Tok, FormulaError> {
        let t = self
            .toks
            .get(self.pos)
            .cloned()
            .ok_or_else(|| FormulaError::Syntax("unexpected end of formula".into()))?;
        self.pos += 1;
        Ok(t)
    }

    fn atom(&mut self) -> Result<String, FormulaError> {
        match self.next()? {
            Tok::Atom(a) => Ok(a),
            t => Err(FormulaError::Syntax(format!("expected a word, found {t:?}"))),
        }
    }

    fn close(&mut self) -> Result<(), FormulaError> {
        match self.next()? {
            Tok::Close => Ok(()),
            t => Err(FormulaError::Syntax(format!("expected `)`, found {t:?}"))),
        }
    }

    fn node_var(&mut self) -> Result<String, FormulaError> {
        let a = self.atom()?;
        if !valid_ident(&a) {
            return Err(FormulaError::Syntax(format!("bad variable `{a}`")));
        }
        if is_set_var(&a) {
            return Err(FormulaError::NotNodeVar(a));
        }
        Ok(a)
    }

    fn set_var(&mut self) -> Result<String, FormulaError> {
        let a = self.atom()?;
        if !valid_ident(&a) {
            return Err(FormulaError::Syntax(format!("bad variable `{a}`")));
        }
        if !is_set_var(&a) {
            return Err(FormulaError::NotSetVar(a));
        }
        Ok(a)
    }

    fn label(&mut self) -> Result<char, FormulaError> {
        let a = self.atom()?;
        sym::parse_token(&a).map_err(|e| FormulaError::Syntax(e.to_string()))
    }

    fn formula(&mut self) -> Result<Formula, FormulaError> {
        match self.next()? {
            Tok::Atom(a) if a == "true" => Ok(tt()),
            Tok::Atom(a) if a == "false" => Ok(ff()),
            Tok::Atom(a) => Err(FormulaError::Syntax(format!("unexpected `{a}`"))),
            Tok::Close => Err(FormulaError::Syntax("unexpected `)`".into())),
            Tok::Open => {
                let head = self.atom()?;
                let f = match head.as_str() {
                    "lab" => {
                        let c = self.label()?;
                        let x = self.node_var()?;
                        lab(c, &x)
                    }
                    "edge" => {
                        let c = self.label()?;
                        let x = self.node_var()?;
                        let y = self.node_var()?;
                        edge(c, &x, &y)
                    }
                    "=" => {
                        let x = self.node_var()?;
                        let y = self.node_var()?;
                        Formula::mk(Kind::Eq(v(&x), v(&y)))
                    }
                    "in" => {
                        let x = self.node_var()?;
                        let s = self.set_var()?;
                        mem(&x, &s)
                    }
                    "not" => Formula::mk(Kind::Not(self.formula()?)),
                    "and" | "or" => {
                        let mut parts = vec![self.formula()?];
                        while self.toks.get(self.pos) != Some(&Tok::Close) {
                            parts.push(self.formula()?);
                        }
                        let mut it = parts.into_iter().rev();
                        let last = it.next().unwrap();
                        let f = it.fold(last, |acc, p| {
                            if head == "and" {
                                Formula::mk(Kind::And(p, acc))
                            } else {
                                Formula::mk(Kind::Or(p, acc))
                            }
                        });
                        self.close()?;
                        return Ok(f);
                    }
                    "imp" => {
                        let a = self.formula()?;
                        let b = self.formula()?;
                        Formula::mk(Kind::Imp(a, b))
                    }
                    "ex" | "all" => {
                        let x = self.node_var()?;
                        let body = self.formula()?;
                        if head == "ex" {
                            Formula::mk(Kind::Ex(v(&x), body))
                        } else {
                            Formula::mk(Kind::All(v(&x), body))
                        }
                    }
                    "exS" | "allS" => {
                        let x = self.set_var()?;
                        let body = self.formula()?;
                        if head == "exS" {
                            Formula::mk(Kind::ExS(v(&x), body))
                        } else {
                            Formula::mk(Kind::AllS(v(&x), body))
                        }
                    }
                    "path" | "path+" => {
                        let x = self.node_var()?;
                        let y = self.node_var()?;
                        Formula::mk(Kind::Path { labels: None, strict: head == "path+", x: v(&x), y: v(&y) })
                    }
                    "path-in" | "path+-in" => {
                        if self.next()? != Tok::Open {
                            return Err(FormulaError::Syntax("expected label list".into()));
                        }
                        let mut ls = Vec::new();
                        while self.toks.get(self.pos) != Some(&Tok::Close) {
                            ls.push(self.label()?);
                        }
                        self.close()?;
                        let x = self.node_var()?;
                        let y = self.node_var()?;
                        path_via(&ls, head == "path+-in", &x, &y)
                    }
                    other => return Err(FormulaError::Syntax(format!("unknown operator `{other}`"))),
                };
                self.close()?;
                Ok(f)
            }
        }
    }
}

impl std::str::FromStr for Formula {
    type Err = FormulaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut p = Parser { toks: tokenize(s), pos: 0 };
        let f = p.formula()?;
        if p.pos != p.toks.len() {
            return Err(FormulaError::Syntax("trailing input after formula".into()));
        }
        Ok(f)
    }
}

/// Parses a formula, panicking on malformed input. For fixtures and tests.
pub fn parse(s: &str) -> Formula {
    s.parse().unwrap_or_else(|e| panic!("bad formula `{s}`: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn print_parse_round_trip() {
        let texts = [
            "(lab a x)",
            "(edge * x y)",
            "(= x y)",
            "(in x X)",
            "(not (lab b x))",
            "(and (lab a x) (or (lab b y) true))",
            "(imp false (ex y (all z (path x z))))",
            "(exS X (allS Y (in x X)))",
            "(path+ x y)",
            "(path-in (a eps) x y)",
            "(lab L x)",
        ];
        for t in texts {
            let f = parse(t);
            assert_eq!(f.to_string(), t);
        }
    }

    #[test]
    fn parse_errors() {
        assert!("(lab a X)".parse::<Formula>().is_err());
        assert!("(in x y)".parse::<Formula>().is_err());
        assert!("(foo x)".parse::<Formula>().is_err());
        assert!("(lab a x) extra".parse::<Formula>().is_err());
        assert!("(lab a".parse::<Formula>().is_err());
    }

    #[test]
    fn free_variables() {
        let f = parse("(ex y (and (edge * x y) (in y X)))");
        let free: Vec<&str> = f.free_vars().iter().map(|s| &**s).collect();
        assert_eq!(free, vec!["X", "x"]);
        assert!(string_shape(&['*']).is_closed());
        assert_eq!(next_sym('a', "x", "y").free_vars().len(), 2);
    }

    #[test]
    fn rename_avoids_capture() {
        let f = parse("(ex y (edge * x y))");
        let g = f.with(&[("x", "y")]);
        // the bound y must have been renamed away from the new free y
        let free: Vec<&str> = g.free_vars().iter().map(|s| &**s).collect();
        assert_eq!(free, vec!["y"]);
        match g.kind() {
            Kind::Ex(b, body) => {
                assert_ne!(&**b, "y");
                assert_eq!(body.to_string(), format!("(edge * y {b})"));
            }
            _ => panic!(),
        }
    }

    #[test]
    fn smart_constructors_simplify() {
        assert!(and(tt(), lab('a', "x")) == lab('a', "x"));
        assert!(or(ff(), ff()).is_false());
        assert!(not(not(lab('a', "x"))) == lab('a', "x"));
        // a node quantifier over `true` is not trivially true (empty graphs)
        assert!(!ex("x", tt()).is_true());
    }

    #[test]
    fn relativize_keeps_x_free() {
        let f = relativize(&parse("(ex y (lab a y))"), Side::Left, "x");
        assert_eq!(f.to_string(), "(ex y (and (path+ y x) (lab a y)))");
        let g = relativize(&parse("(ex x (lab a x))"), Side::Right, "x");
        let free: Vec<&str> = g.free_vars().iter().map(|s| &**s).collect();
        assert_eq!(free, vec!["x"]);
    }
}
