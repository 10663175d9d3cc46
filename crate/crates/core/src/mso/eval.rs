//! Direct evaluation of formulas on a graph.
//!
//! Set quantifiers enumerate every subset, so they are refused on graphs with
//! more than [`MAX_SET_NODES`] nodes. Results of quantified subformulas are
//! memoized per valuation of their free variables, which keeps nested path
//! predicates affordable.

use std::collections::HashMap;

use thiserror::Error;

use super::formula::{Formula, Kind, Var};
use crate::graph::{is_set_var, Graph, ValuatedGraph};

/// Largest graph on which set quantifiers are enumerated.
pub const MAX_SET_NODES: usize = 14;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("variable `{0}` used with the wrong sort")]
    Sort(String),
    #[error("set quantifier over a graph with {0} nodes (limit {MAX_SET_NODES})")]
    TooLarge(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Value {
    Node(usize),
    Set(u64),
}

/// How the derived path forms are evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PathMode {
    /// Expand to the second-order definition and enumerate sets.
    Expand,
    /// Graph search; same semantics, usable on large graphs.
    Reach,
}

pub struct Evaluator<'g> {
    g: &'g Graph,
    out: Vec<Vec<(char, usize)>>,
    edge_labels: Vec<char>,
    mode: PathMode,
    memo: HashMap<(usize, Vec<Value>), bool>,
    pinned: HashMap<usize, Formula>,
    expansions: HashMap<usize, Formula>,
    reach: HashMap<(Option<Vec<char>>, usize), Vec<bool>>,
}

impl<'g> Evaluator<'g> {
    pub fn new(g: &'g Graph, mode: PathMode) -> Self {
        let mut out = vec![Vec::new(); g.len()];
        for &(s, l, t) in g.edges() {
            out[s].push((l, t));
        }
        Evaluator {
            g,
            out,
            edge_labels: g.edge_labels().into_iter().collect(),
            mode,
            memo: HashMap::new(),
            pinned: HashMap::new(),
            expansions: HashMap::new(),
            reach: HashMap::new(),
        }
    }

    pub fn graph(&self) -> &Graph {
        self.g
    }

    /// Truth of `f` with the given node variables bound.
    pub fn holds(&mut self, f: &Formula, nodes: &[(&str, usize)]) -> Result<bool, EvalError> {
        let mut env: Vec<(Var, Value)> =
            nodes.iter().map(|(n, u)| (Var::from(*n), Value::Node(*u))).collect();
        self.eval(f, &mut env)
    }

    /// Truth of `f` under an explicit environment (later entries shadow earlier).
    pub fn eval(&mut self, f: &Formula, env: &mut Vec<(Var, Value)>) -> Result<bool, EvalError> {
        let g = self.g;
        match f.kind() {
            Kind::True => Ok(true),
            Kind::False => Ok(false),
            Kind::Lab(c, x) => Ok(g.label(node(env, x)?) == *c),
            Kind::Edge(c, x, y) => Ok(g.has_edge(node(env, x)?, *c, node(env, y)?)),
            Kind::Eq(x, y) => Ok(node(env, x)? == node(env, y)?),
            Kind::In(x, s) => Ok(set(env, s)? >> node(env, x)? & 1 == 1),
            Kind::Not(a) => Ok(!self.eval(a, env)?),
            Kind::And(a, b) => Ok(self.eval(a, env)? && self.eval(b, env)?),
            Kind::Or(a, b) => Ok(self.eval(a, env)? || self.eval(b, env)?),
            Kind::Imp(a, b) => Ok(!self.eval(a, env)? || self.eval(b, env)?),
            Kind::Path { labels, strict, x, y } => {
                let (u, w) = (node(env, x)?, node(env, y)?);
                match self.mode {
                    PathMode::Reach => {
                        if *strict && u == w {
                            return Ok(false);
                        }
                        Ok(self.reachable(labels, u)[w])
                    }
                    PathMode::Expand => {
                        let exp = match self.expansions.get(&f.id()) {
                            Some(e) => e.clone(),
                            None => {
                                let e = f.expand_paths(&self.edge_labels);
                                self.pin(f);
                                self.expansions.insert(f.id(), e.clone());
                                e
                            }
                        };
                        self.eval(&exp, env)
                    }
                }
            }
            Kind::Ex(..) | Kind::All(..) | Kind::ExS(..) | Kind::AllS(..) => {
                let key = (f.id(), lookup_all(env, f.free_vars())?);
                if let Some(&r) = self.memo.get(&key) {
                    return Ok(r);
                }
                let r = self.quantify(f, env)?;
                self.pin(f);
                self.memo.insert(key, r);
                Ok(r)
            }
        }
    }

    fn quantify(&mut self, f: &Formula, env: &mut Vec<(Var, Value)>) -> Result<bool, EvalError> {
        let n = self.g.len();
        let (var, body, exists, is_set) = match f.kind() {
            Kind::Ex(v, b) => (v, b, true, false),
            Kind::All(v, b) => (v, b, false, false),
            Kind::ExS(v, b) => (v, b, true, true),
            Kind::AllS(v, b) => (v, b, false, true),
            _ => unreachable!(),
        };
        if is_set && n > MAX_SET_NODES {
            return Err(EvalError::TooLarge(n));
        }
        let count: u64 = if is_set { 1u64 << n } else { n as u64 };
        for i in 0..count {
            let val = if is_set { Value::Set(i) } else { Value::Node(i as usize) };
            env.push((var.clone(), val));
            let r = self.eval(body, env);
            env.pop();
            if r? == exists {
                return Ok(exists);
            }
        }
        Ok(!exists)
    }

    fn pin(&mut self, f: &Formula) {
        self.pinned.entry(f.id()).or_insert_with(|| f.clone());
    }

    fn reachable(&mut self, labels: &Option<Vec<char>>, from: usize) -> &Vec<bool> {
        let key = (labels.clone(), from);
        if !self.reach.contains_key(&key) {
            let mut seen = vec![false; self.g.len()];
            let mut stack = vec![from];
            seen[from] = true;
            while let Some(u) = stack.pop() {
                for &(l, t) in &self.out[u] {
                    let ok = labels.as_ref().is_none_or(|ls| ls.contains(&l));
                    if ok && !seen[t] {
                        seen[t] = true;
                        stack.push(t);
                    }
                }
            }
            self.reach.insert(key.clone(), seen);
        }
        &self.reach[&key]
    }
}

fn lookup(env: &[(Var, Value)], name: &Var) -> Result<Value, EvalError> {
    env.iter()
        .rev()
        .find(|(n, _)| n == name)
        .map(|(_, v)| *v)
        .ok_or_else(|| EvalError::Unbound(name.to_string()))
}

fn lookup_all(env: &[(Var, Value)], names: &[Var]) -> Result<Vec<Value>, EvalError> {
    names.iter().map(|n| lookup(env, n)).collect()
}

fn node(env: &[(Var, Value)], name: &Var) -> Result<usize, EvalError> {
    match lookup(env, name)? {
        Value::Node(u) => Ok(u),
        Value::Set(_) => Err(EvalError::Sort(name.to_string())),
    }
}

fn set(env: &[(Var, Value)], name: &Var) -> Result<u64, EvalError> {
    match lookup(env, name)? {
        Value::Set(s) => Ok(s),
        Value::Node(_) => Err(EvalError::Sort(name.to_string())),
    }
}

/// Builds an environment from a valuated graph.
pub fn env_of(vg: &ValuatedGraph) -> Result<Vec<(Var, Value)>, EvalError> {
    let mut env = Vec::new();
    for (i, name) in vg.vars.iter().enumerate() {
        let members: Vec<usize> = (0..vg.base.len()).filter(|&u| vg.flags[u][i]).collect();
        let value = if is_set_var(name) {
            if vg.base.len() > 64 {
                return Err(EvalError::TooLarge(vg.base.len()));
            }
            Value::Set(members.iter().fold(0u64, |m, &u| m | 1 << u))
        } else {
            match members.as_slice() {
                [u] => Value::Node(*u),
                _ => return Err(EvalError::Sort(name.clone())),
            }
        };
        env.push((Var::from(name.as_str()), value));
    }
    Ok(env)
}

/// `g, ν ⊨ φ` with paths expanded to their second-order definition.
pub fn eval(vg: &ValuatedGraph, phi: &Formula) -> Result<bool, EvalError> {
    let mut env = env_of(vg)?;
    if let Some(v) = phi.free_vars().iter().find(|v| !vg.vars.iter().any(|n| n == &***v)) {
        return Err(EvalError::Unbound(v.to_string()));
    }
    Evaluator::new(&vg.base, PathMode::Expand).eval(phi, &mut env)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::graph::{ngr_encode, valuate, Assigned};
    use crate::mso::formula::{self as f, parse};
    use crate::sym::Alphabet;

    fn at(w: &str, nodes: &[(&str, usize)]) -> ValuatedGraph {
        let g = ngr_encode(w, &Alphabet::ab()).unwrap();
        let nu: BTreeMap<String, Assigned> =
            nodes.iter().map(|(n, u)| (n.to_string(), Assigned::Node(*u))).collect();
        valuate(&g, &nu).unwrap()
    }

    #[test]
    fn first_symbol_is_a() {
        assert!(eval(&at("ababb", &[("x", 0)]), &parse("(lab a x)")).unwrap());
    }

    #[test]
    fn path_from_first_to_last() {
        let vg = at("ababb", &[("x", 0), ("y", 4)]);
        assert!(eval(&vg, &parse("(path x y)")).unwrap());
        assert!(!eval(&vg, &parse("(path y x)")).unwrap());
        assert!(eval(&vg, &parse("(path+ x y)")).unwrap());
    }

    #[test]
    fn string_shape_on_empty_string() {
        let vg = at("", &[]);
        assert!(eval(&vg, &f::string_shape(&['*'])).unwrap());
    }

    #[test]
    fn unbound_variable() {
        assert_eq!(eval(&at("ab", &[]), &parse("(lab a x)")), Err(EvalError::Unbound("x".into())));
    }

    #[test]
    fn modes_agree_on_small_graphs() {
        let g = ngr_encode("abba", &Alphabet::ab()).unwrap();
        let phi = f::next_sym('a', "x", "y");
        let mut a = Evaluator::new(&g, PathMode::Expand);
        let mut b = Evaluator::new(&g, PathMode::Reach);
        for u in 0..4 {
            for w in 0..4 {
                let nodes = [("x", u), ("y", w)];
                assert_eq!(a.holds(&phi, &nodes).unwrap(), b.holds(&phi, &nodes).unwrap());
            }
        }
        assert!(b.holds(&phi, &[("x", 0), ("y", 3)]).unwrap());
    }

    #[test]
    fn large_graphs_refuse_set_quantifiers() {
        let g = ngr_encode(&"a".repeat(15), &Alphabet::ab()).unwrap();
        let mut e = Evaluator::new(&g, PathMode::Expand);
        assert_eq!(e.holds(&parse("(path x y)"), &[("x", 0), ("y", 3)]), Err(EvalError::TooLarge(15)));
        let mut r = Evaluator::new(&g, PathMode::Reach);
        assert!(r.holds(&parse("(path x y)"), &[("x", 0), ("y", 3)]).unwrap());
    }
}
