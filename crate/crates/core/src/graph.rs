//! Labelled graphs and the string encodings `ngr`, `egr` and the marked tape.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::sym::{self, Alphabet, LEFT, RIGHT, UNLAB};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("symbol `{0}` is not in the alphabet")]
    Symbol(char),
    #[error("edge endpoint {0} is not a node")]
    Endpoint(usize),
    #[error("not a string representation: {0}")]
    NotAString(String),
    #[error("variable `{0}` is assigned a node outside the graph")]
    Valuation(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Which string encoding a graph uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Encoding {
    /// Symbols on nodes, unlabelled successor edges.
    Node,
    /// Unlabelled nodes, symbols on edges; never empty.
    Edge,
}

impl Encoding {
    pub fn parse(s: &str) -> Option<Encoding> {
        match s {
            "ngr" | "node" => Some(Encoding::Node),
            "egr" | "edge" => Some(Encoding::Edge),
            _ => None,
        }
    }
}

/// How a string is presented to a graph transduction: an encoding of `w`
/// itself, or the node encoding of the marked tape `⊢w⊣`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Shape {
    Node,
    Edge,
    Tape,
}

impl Shape {
    pub fn parse(s: &str) -> Option<Shape> {
        match s {
            "tape" => Some(Shape::Tape),
            _ => Encoding::parse(s).map(Shape::from),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Shape::Node => "ngr",
            Shape::Edge => "egr",
            Shape::Tape => "tape",
        }
    }

    /// Encodes without checking the symbols.
    pub fn encode_raw(self, w: &[char]) -> Graph {
        match self {
            Shape::Node => ngr_raw(w),
            Shape::Edge => egr_raw(w),
            Shape::Tape => ngr_raw(&tape(w)),
        }
    }

    /// Inverse of [`Shape::encode_raw`].
    pub fn decode(self, g: &Graph) -> Result<String, GraphError> {
        match self {
            Shape::Node => decode(g, Encoding::Node),
            Shape::Edge => decode(g, Encoding::Edge),
            Shape::Tape => {
                let t: Vec<char> = decode(g, Encoding::Node)?.chars().collect();
                match t.as_slice() {
                    [LEFT, inner @ .., RIGHT] if !inner.iter().any(|&c| c == LEFT || c == RIGHT) => {
                        Ok(inner.iter().collect())
                    }
                    _ => Err(GraphError::NotAString("not a marked tape".into())),
                }
            }
        }
    }
}

impl From<Encoding> for Shape {
    fn from(e: Encoding) -> Shape {
        match e {
            Encoding::Node => Shape::Node,
            Encoding::Edge => Shape::Edge,
        }
    }
}

impl Encoding {
    pub fn name(self) -> &'static str {
        Shape::from(self).name()
    }
}

/// A finite graph whose nodes are `0..len()`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Graph {
    labels: Vec<char>,
    edges: BTreeSet<(usize, char, usize)>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn from_parts(
        labels: Vec<char>,
        edges: impl IntoIterator<Item = (usize, char, usize)>,
    ) -> Result<Self, GraphError> {
        let mut g = Graph { labels, edges: BTreeSet::new() };
        for (s, l, t) in edges {
            g.add_edge(s, l, t)?;
        }
        Ok(g)
    }

    pub fn add_node(&mut self, label: char) -> usize {
        self.labels.push(label);
        self.labels.len() - 1
    }

    pub fn add_edge(&mut self, src: usize, label: char, dst: usize) -> Result<(), GraphError> {
        for v in [src, dst] {
            if v >= self.labels.len() {
                return Err(GraphError::Endpoint(v));
            }
        }
        self.edges.insert((src, label, dst));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, v: usize) -> char {
        self.labels[v]
    }

    pub fn labels(&self) -> &[char] {
        &self.labels
    }

    pub fn edges(&self) -> &BTreeSet<(usize, char, usize)> {
        &self.edges
    }

    pub fn has_edge(&self, src: usize, label: char, dst: usize) -> bool {
        self.edges.contains(&(src, label, dst))
    }

    pub fn edge_labels(&self) -> BTreeSet<char> {
        self.edges.iter().map(|e| e.1).collect()
    }

    /// Renumbers nodes by a deterministic traversal: sources first (ordered by
    /// label, then old id), depth-first along edges ordered by label, then any
    /// unreached nodes in old order.
    pub fn canonical(&self) -> Graph {
        let n = self.len();
        let mut indeg = vec![0usize; n];
        let mut out: Vec<Vec<(char, usize)>> = vec![Vec::new(); n];
        for &(s, l, t) in &self.edges {
            indeg[t] += 1;
            out[s].push((l, t));
        }
        for o in &mut out {
            o.sort_by_key(|&(l, t)| (l, self.labels[t], t));
        }
        let mut sources: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        sources.sort_by_key(|&v| (self.labels[v], v));
        let mut order = Vec::with_capacity(n);
        let mut seen = vec![false; n];
        let starts = sources.into_iter().chain(0..n);
        for s in starts {
            if seen[s] {
                continue;
            }
            let mut stack = vec![s];
            while let Some(v) = stack.pop() {
                if seen[v] {
                    continue;
                }
                seen[v] = true;
                order.push(v);
                for &(_, t) in out[v].iter().rev() {
                    if !seen[t] {
                        stack.push(t);
                    }
                }
            }
        }
        let mut new_id = vec![0; n];
        for (i, &v) in order.iter().enumerate() {
            new_id[v] = i;
        }
        Graph {
            labels: order.iter().map(|&v| self.labels[v]).collect(),
            edges: self.edges.iter().map(|&(s, l, t)| (new_id[s], l, new_id[t])).collect(),
        }
    }

    /// Structural equality up to the canonical renumbering.
    pub fn same_shape(&self, other: &Graph) -> bool {
        self.canonical() == other.canonical()
    }

    /// Parses the line-oriented text format.
    pub fn parse(text: &str) -> Result<Graph, GraphError> {
        let mut g = Graph::new();
        let mut ids: BTreeMap<String, usize> = BTreeMap::new();
        let mut header = false;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('%').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| GraphError::Parse { line: i + 1, msg };
            let parts: Vec<&str> = line.split_whitespace().collect();
            match parts.as_slice() {
                ["graph"] => header = true,
                ["node", id, label] => {
                    let c = sym::parse_token(label).map_err(|e| err(e.to_string()))?;
                    if ids.contains_key(*id) {
                        return Err(err(format!("duplicate node `{id}`")));
                    }
                    let v = g.add_node(c);
                    ids.insert(id.to_string(), v);
                }
                ["edge", s, label, t] => {
                    let c = sym::parse_token(label).map_err(|e| err(e.to_string()))?;
                    let s = *ids.get(*s).ok_or_else(|| err(format!("unknown node `{s}`")))?;
                    let t = *ids.get(*t).ok_or_else(|| err(format!("unknown node `{t}`")))?;
                    g.add_edge(s, c, t).map_err(|e| err(e.to_string()))?;
                }
                _ => return Err(err(format!("unrecognised line `{line}`"))),
            }
        }
        if !header {
            return Err(GraphError::Parse { line: 1, msg: "missing `graph` header".into() });
        }
        Ok(g)
    }
}

impl fmt::Display for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "graph")?;
        for (v, &l) in self.labels.iter().enumerate() {
            writeln!(f, "node {v} {}", sym::token(l))?;
        }
        for &(s, l, t) in &self.edges {
            writeln!(f, "edge {s} {} {t}", sym::token(l))?;
        }
        Ok(())
    }
}

fn check_symbols(w: &[char], sigma: &Alphabet) -> Result<(), GraphError> {
    match w.iter().find(|c| !sigma.contains(**c)) {
        Some(&c) => Err(GraphError::Symbol(c)),
        None => Ok(()),
    }
}

/// Node-labelled path of an arbitrary symbol sequence; no alphabet check.
pub fn ngr_raw(w: &[char]) -> Graph {
    let mut g = Graph::new();
    for &c in w {
        g.add_node(c);
    }
    for i in 1..w.len() {
        g.edges.insert((i - 1, UNLAB, i));
    }
    g
}

/// Edge-labelled path of an arbitrary symbol sequence; no alphabet check.
pub fn egr_raw(w: &[char]) -> Graph {
    let mut g = Graph::new();
    for _ in 0..=w.len() {
        g.add_node(UNLAB);
    }
    for (i, &c) in w.iter().enumerate() {
        g.edges.insert((i, c, i + 1));
    }
    g
}

pub fn ngr_encode(w: &str, sigma: &Alphabet) -> Result<Graph, GraphError> {
    let w: Vec<char> = w.chars().collect();
    check_symbols(&w, sigma)?;
    Ok(ngr_raw(&w))
}

pub fn egr_encode(w: &str, sigma: &Alphabet) -> Result<Graph, GraphError> {
    let w: Vec<char> = w.chars().collect();
    check_symbols(&w, sigma)?;
    Ok(egr_raw(&w))
}

/// The marked tape `⊢w⊣` as a node-labelled path.
pub fn tape_encode(w: &str, sigma: &Alphabet) -> Result<Graph, GraphError> {
    let w: Vec<char> = w.chars().collect();
    check_symbols(&w, sigma)?;
    Ok(ngr_raw(&tape(&w)))
}

/// `⊢w⊣` as a symbol vector.
pub fn tape(w: &[char]) -> Vec<char> {
    let mut t = Vec::with_capacity(w.len() + 2);
    t.push(LEFT);
    t.extend_from_slice(w);
    t.push(RIGHT);
    t
}

pub fn encode(w: &str, sigma: &Alphabet, enc: Encoding) -> Result<Graph, GraphError> {
    match enc {
        Encoding::Node => ngr_encode(w, sigma),
        Encoding::Edge => egr_encode(w, sigma),
    }
}

/// Walks a linear graph: returns the node order if every node has in- and
/// out-degree at most one, there is exactly one source and no cycle.
fn linear_order(g: &Graph) -> Result<Vec<usize>, GraphError> {
    let n = g.len();
    let mut succ: Vec<Option<(char, usize)>> = vec![None; n];
    let mut indeg = vec![0usize; n];
    for &(s, l, t) in g.edges() {
        if succ[s].is_some() {
            return Err(GraphError::NotAString(format!("node {s} has two successors")));
        }
        succ[s] = Some((l, t));
        indeg[t] += 1;
    }
    if let Some(v) = (0..n).find(|&v| indeg[v] > 1) {
        return Err(GraphError::NotAString(format!("node {v} has two predecessors")));
    }
    let sources: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    if sources.len() != 1 {
        return Err(GraphError::NotAString(format!("{} sources", sources.len())));
    }
    let mut order = vec![sources[0]];
    let mut cur = sources[0];
    while let Some((_, t)) = succ[cur] {
        order.push(t);
        cur = t;
        if order.len() > n {
            return Err(GraphError::NotAString("cycle".into()));
        }
    }
    if order.len() != n {
        return Err(GraphError::NotAString("graph is not connected".into()));
    }
    Ok(order)
}

/// Inverse of the encodings; fails on anything that is not a string graph.
pub fn decode(g: &Graph, enc: Encoding) -> Result<String, GraphError> {
    match enc {
        Encoding::Node => {
            if g.is_empty() {
                return Ok(String::new());
            }
            if let Some(e) = g.edges().iter().find(|e| e.1 != UNLAB) {
                return Err(GraphError::NotAString(format!("labelled edge `{}`", e.1)));
            }
            if g.labels().contains(&UNLAB) {
                return Err(GraphError::NotAString("unlabelled node".into()));
            }
            let order = linear_order(g)?;
            Ok(order.iter().map(|&v| g.label(v)).collect())
        }
        Encoding::Edge => {
            if g.is_empty() {
                return Err(GraphError::NotAString("empty graph".into()));
            }
            if g.labels().iter().any(|&l| l != UNLAB) {
                return Err(GraphError::NotAString("labelled node".into()));
            }
            if g.edges().iter().any(|e| e.1 == UNLAB) {
                return Err(GraphError::NotAString("unlabelled edge".into()));
            }
            let order = linear_order(g)?;
            let mut w = String::new();
            for pair in order.windows(2) {
                let e = g.edges().iter().find(|e| e.0 == pair[0] && e.2 == pair[1]).unwrap();
                w.push(e.1);
            }
            Ok(w)
        }
    }
}

/// Value assigned to a variable.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Assigned {
    Node(usize),
    Set(BTreeSet<usize>),
}

/// A graph whose nodes additionally carry one flag per variable.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValuatedGraph {
    pub base: Graph,
    /// Variable names, sorted.
    pub vars: Vec<String>,
    /// `flags[v][i]` tells whether node `v` carries variable `vars[i]`.
    pub flags: Vec<Vec<bool>>,
}

impl ValuatedGraph {
    /// Drops the valuation and returns the underlying graph.
    pub fn strip(&self) -> Graph {
        self.base.clone()
    }

    /// Reads the valuation back.
    pub fn assignment(&self) -> BTreeMap<String, Assigned> {
        let mut out = BTreeMap::new();
        for (i, name) in self.vars.iter().enumerate() {
            let members: BTreeSet<usize> =
                (0..self.base.len()).filter(|&v| self.flags[v][i]).collect();
            let value = if is_set_var(name) {
                Assigned::Set(members)
            } else {
                Assigned::Node(*members.iter().next().unwrap_or(&usize::MAX))
            };
            out.insert(name.clone(), value);
        }
        out
    }
}

/// Set variables start with an uppercase letter.
pub fn is_set_var(name: &str) -> bool {
    name.chars().next().is_some_and(|c| c.is_uppercase())
}

pub fn valuate(g: &Graph, nu: &BTreeMap<String, Assigned>) -> Result<ValuatedGraph, GraphError> {
    let vars: Vec<String> = nu.keys().cloned().collect();
    let mut flags = vec![vec![false; vars.len()]; g.len()];
    for (i, (name, value)) in nu.iter().enumerate() {
        let members: Vec<usize> = match value {
            Assigned::Node(v) => vec![*v],
            Assigned::Set(s) => s.iter().copied().collect(),
        };
        if matches!(value, Assigned::Node(_)) == is_set_var(name) {
            return Err(GraphError::Valuation(name.clone()));
        }
        for v in members {
            if v >= g.len() {
                return Err(GraphError::Valuation(name.clone()));
            }
            flags[v][i] = true;
        }
    }
    Ok(ValuatedGraph { base: g.clone(), vars, flags })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ngr_of_ababb() {
        let g = ngr_encode("ababb", &Alphabet::ab()).unwrap();
        assert_eq!(g.labels(), &['a', 'b', 'a', 'b', 'b']);
        let want: BTreeSet<_> = (0..4).map(|i| (i, UNLAB, i + 1)).collect();
        assert_eq!(g.edges(), &want);
        assert!(ngr_encode("", &Alphabet::ab()).unwrap().is_empty());
        assert_eq!(ngr_encode("a", &Alphabet::ab()).unwrap().edges().len(), 0);
    }

    #[test]
    fn egr_shapes() {
        let g = egr_encode("ababb", &Alphabet::ab()).unwrap();
        assert_eq!(g.len(), 6);
        let labels: Vec<char> = g.edges().iter().map(|e| e.1).collect();
        assert_eq!(labels, vec!['a', 'b', 'a', 'b', 'b']);
        let e = egr_encode("", &Alphabet::ab()).unwrap();
        assert_eq!((e.len(), e.edges().len()), (1, 0));
        assert_eq!(decode(&e, Encoding::Edge).unwrap(), "");
        assert_eq!(egr_encode("a", &Alphabet::ab()).unwrap().len(), 2);
    }

    #[test]
    fn tape_shapes() {
        let ab = Alphabet::ab();
        assert_eq!(tape_encode("", &ab).unwrap().labels(), &[LEFT, RIGHT]);
        assert_eq!(tape_encode("ab", &ab).unwrap().labels(), &[LEFT, 'a', 'b', RIGHT]);
        assert_eq!(tape_encode("aaabbaba", &ab).unwrap().len(), 10);
        assert_eq!(ngr_encode("ac", &ab), Err(GraphError::Symbol('c')));
    }

    #[test]
    fn parallel_edges_are_not_a_string() {
        let g = Graph::from_parts(vec![UNLAB, UNLAB], [(0, 'a', 1), (0, 'b', 1)]).unwrap();
        assert!(decode(&g, Encoding::Edge).is_err());
    }

    #[test]
    fn decode_ignores_identifier_order() {
        let g = Graph::from_parts(vec!['b', 'a'], [(1, UNLAB, 0)]).unwrap();
        assert_eq!(decode(&g, Encoding::Node).unwrap(), "ab");
        let cyc = Graph::from_parts(vec!['a', 'b'], [(0, UNLAB, 1), (1, UNLAB, 0)]).unwrap();
        assert!(decode(&cyc, Encoding::Node).is_err());
    }

    #[test]
    fn text_round_trip() {
        let g = tape_encode("ab", &Alphabet::ab()).unwrap();
        let text = g.to_string();
        assert!(text.contains("node 0 L"));
        assert_eq!(Graph::parse(&text).unwrap(), g);
    }

    #[test]
    fn valuation_flags() {
        let g = ngr_encode("ab", &Alphabet::ab()).unwrap();
        let mut nu = BTreeMap::new();
        nu.insert("x".to_string(), Assigned::Node(0));
        nu.insert("y".to_string(), Assigned::Node(0));
        nu.insert("X".to_string(), Assigned::Set([0, 1].into()));
        let vg = valuate(&g, &nu).unwrap();
        assert_eq!(vg.vars, vec!["X", "x", "y"]);
        assert_eq!(vg.flags[0], vec![true, true, true]);
        assert_eq!(vg.flags[1], vec![true, false, false]);
        assert_eq!(vg.strip(), g);
        assert_eq!(vg.assignment(), nu);
        nu.insert("z".to_string(), Assigned::Node(7));
        assert!(valuate(&g, &nu).is_err());
    }

    #[test]
    fn canonical_renumbering() {
        let a = Graph::from_parts(vec!['b', 'a'], [(1, UNLAB, 0)]).unwrap();
        let b = ngr_encode("ab", &Alphabet::ab()).unwrap();
        assert!(a.same_shape(&b));
        assert_eq!(a.canonical(), b);
    }
}
