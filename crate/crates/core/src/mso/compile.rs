//! Compilation of formulas to automata over valuated strings.
//!
//! A valuated string over symbols `syms` and variables `vars` (sorted) is a
//! word whose letters are `sym_index << vars.len() | mask`, bit `i` of the
//! mask telling whether the position carries `vars[i]`. Every subformula is
//! compiled over its own free variables; conjunctions lift both sides to the
//! union first. Node variables are kept well formed (exactly one marked
//! position) at every step, so complement and projection stay sound.
//!
//! Edge-labelled strings are read as their label sequence followed by one
//! [`END`] token, so that the last node also owns a position.

use std::collections::HashMap;

use thiserror::Error;

use super::dfa::{Dfa, DfaError};
use super::formula::{self as f, Formula, Kind, Var};
use crate::graph::{is_set_var, Encoding};
use crate::sym::{Alphabet, END, LEFT, RIGHT, UNLAB};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CompileError {
    #[error("label `{0}` is outside the alphabet")]
    Label(char),
    #[error("free variables {0:?} do not fit the expected signature")]
    Signature(Vec<String>),
    #[error(transparent)]
    Dfa(#[from] DfaError),
}

/// A formula compiled over a fixed symbol list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Compiled {
    /// Position symbols; ends with [`END`] for edge-labelled strings.
    pub syms: Vec<char>,
    /// Free variables, sorted; bit `i` of a letter's mask is `vars[i]`.
    pub vars: Vec<Var>,
    pub enc: Encoding,
    pub dfa: Dfa,
}

impl Compiled {
    pub fn width(&self) -> usize {
        self.vars.len()
    }

    pub fn letter(&self, sym: char, mask: usize) -> Option<usize> {
        self.syms.iter().position(|&c| c == sym).map(|s| s << self.vars.len() | mask)
    }

    /// Positions of the string as read by the automaton.
    pub fn positions(&self, w: &[char]) -> Vec<char> {
        let mut p = w.to_vec();
        if self.enc == Encoding::Edge {
            p.push(END);
        }
        p
    }

    /// Membership of `w` with node variables placed at the given positions
    /// and set variables given as position lists.
    pub fn accepts(&self, w: &[char], nodes: &[(&str, usize)], sets: &[(&str, &[usize])]) -> bool {
        let pos = self.positions(w);
        let mut s = self.dfa.init;
        for (i, &c) in pos.iter().enumerate() {
            let mut mask = 0;
            for (b, v) in self.vars.iter().enumerate() {
                let on = nodes.iter().any(|(n, u)| **v == **n && *u == i)
                    || sets.iter().any(|(n, us)| **v == **n && us.contains(&i));
                if on {
                    mask |= 1 << b;
                }
            }
            match self.letter(c, mask) {
                Some(l) => s = self.dfa.trans[s][l],
                None => return false,
            }
        }
        self.dfa.accept[s]
    }

    /// The language of a closed formula as an automaton over the string
    /// symbols (without the end token).
    pub fn language(&self) -> Option<super::CharDfa> {
        if !self.vars.is_empty() {
            return None;
        }
        match self.enc {
            Encoding::Node => Some(super::CharDfa::new(self.syms.clone(), self.dfa.minimize())),
            Encoding::Edge => {
                let end = self.syms.len() - 1;
                let d = &self.dfa;
                let dfa = Dfa {
                    letters: end,
                    init: d.init,
                    trans: d.trans.iter().map(|row| row[..end].to_vec()).collect(),
                    accept: (0..d.states()).map(|s| d.accept[d.trans[s][end]]).collect(),
                };
                Some(super::CharDfa::new(self.syms[..end].to_vec(), dfa.minimize()))
            }
        }
    }
}

/// Compiles `phi` for strings over `sigma` in the given encoding.
pub fn compile(phi: &Formula, sigma: &Alphabet, enc: Encoding) -> Result<Compiled, CompileError> {
    compile_over(phi, sigma.symbols(), enc)
}

/// Compiles `phi` for strings over an explicit symbol list, which may include
/// the tape markers.
pub fn compile_over(phi: &Formula, syms: &[char], enc: Encoding) -> Result<Compiled, CompileError> {
    for c in phi.labels() {
        if c != UNLAB && c != LEFT && c != RIGHT && !syms.contains(&c) {
            return Err(CompileError::Label(c));
        }
    }
    let mut all = syms.to_vec();
    if enc == Encoding::Edge {
        all.push(END);
    }
    let mut cx = Cx { syms: all, enc, memo: HashMap::new(), pinned: Vec::new() };
    let dfa = cx.go(phi)?;
    let vars = phi.free_vars().to_vec();
    let dfa = if enc == Encoding::Edge { cx.end_only_last(&vars).intersect(&dfa)?.minimize() } else { dfa };
    Ok(Compiled { syms: cx.syms, vars, enc, dfa })
}

struct Cx {
    syms: Vec<char>,
    enc: Encoding,
    memo: HashMap<usize, Dfa>,
    pinned: Vec<Formula>,
}

impl Cx {
    fn letters(&self, width: usize) -> usize {
        self.syms.len() << width
    }

    fn sym(&self, letter: usize, width: usize) -> char {
        self.syms[letter >> width]
    }

    fn go(&mut self, phi: &Formula) -> Result<Dfa, CompileError> {
        if let Some(d) = self.memo.get(&phi.id()) {
            return Ok(d.clone());
        }
        let d = self.build(phi)?;
        self.pinned.push(phi.clone());
        self.memo.insert(phi.id(), d.clone());
        Ok(d)
    }

    fn build(&mut self, phi: &Formula) -> Result<Dfa, CompileError> {
        let vars = phi.free_vars().to_vec();
        let w = vars.len();
        let bit = |x: &Var| 1usize << vars.iter().position(|v| v == x).unwrap();
        Ok(match phi.kind() {
            Kind::True => Dfa::universal(self.letters(0)),
            Kind::False => Dfa::empty(self.letters(0)),
            Kind::Lab(c, x) => {
                let hit = match self.enc {
                    Encoding::Node => Some(*c),
                    Encoding::Edge if *c == UNLAB => None,
                    Encoding::Edge => return Ok(Dfa::empty(self.letters(w))),
                };
                self.one_mark(w, bit(x), |s| hit.is_none_or(|h| h == s))
            }
            Kind::Edge(c, x, y) => {
                let ok = match self.enc {
                    Encoding::Node if *c == UNLAB => None,
                    Encoding::Node => return Ok(Dfa::empty(self.letters(w))),
                    Encoding::Edge => Some(*c),
                };
                self.scan(w, bit(x), bit(y), Scan::Next(ok))
            }
            Kind::Eq(x, y) => self.scan(w, bit(x), bit(y), Scan::Same),
            Kind::In(x, s) => self.one_mark_with(w, bit(x), bit(s)),
            Kind::Path { labels, strict, x, y } => {
                let along: Vec<bool> = self
                    .syms
                    .iter()
                    .map(|&c| match self.enc {
                        Encoding::Node => labels.as_ref().is_none_or(|ls| ls.contains(&UNLAB)),
                        Encoding::Edge => {
                            c != END && labels.as_ref().is_none_or(|ls| ls.contains(&c))
                        }
                    })
                    .collect();
                self.scan(w, bit(x), bit(y), Scan::Path { along, strict: *strict })
            }
            Kind::Not(a) => {
                let d = self.go(a)?;
                self.wf(&vars, &[]).intersect(&d.complement())?.minimize()
            }
            Kind::And(a, b) | Kind::Or(a, b) | Kind::Imp(a, b) => {
                let da = self.go(a)?;
                let db = self.go(b)?;
                let la = self.lift(&da, a.free_vars(), &vars);
                let lb = self.lift(&db, b.free_vars(), &vars);
                let r = match phi.kind() {
                    Kind::And(..) => la.intersect(&lb)?,
                    Kind::Or(..) => la.union(&lb)?,
                    _ => la.complement().union(&lb)?,
                };
                if matches!(phi.kind(), Kind::And(..)) {
                    r.minimize()
                } else {
                    self.wf(&vars, &[]).intersect(&r)?.minimize()
                }
            }
            Kind::Ex(x, a) | Kind::ExS(x, a) => {
                let d = self.go(a)?;
                self.exists(&d, a.free_vars(), x, &vars)?
            }
            Kind::All(x, a) | Kind::AllS(x, a) => {
                // ∀x a  =  ¬∃x ¬a
                let d = self.go(a)?;
                let mut inner = a.free_vars().to_vec();
                if !inner.contains(x) {
                    inner.push(x.clone());
                    inner.sort();
                }
                let lifted = self.lift(&d, a.free_vars(), &inner);
                let neg = self.wf(&inner, &[]).intersect(&lifted.complement())?.minimize();
                let e = self.exists(&neg, &inner, x, &vars)?;
                self.wf(&vars, &[]).intersect(&e.complement())?.minimize()
            }
        })
    }

    /// Projects `x` away from an automaton over `from` (which need not
    /// contain `x` yet).
    fn exists(&self, d: &Dfa, from: &[Var], x: &Var, to: &[Var]) -> Result<Dfa, CompileError> {
        let mut with: Vec<Var> = from.to_vec();
        if !with.contains(x) {
            with.push(x.clone());
            with.sort();
        }
        let lifted = self.lift(d, from, &with);
        let xi = with.iter().position(|v| v == x).unwrap();
        let wt = to.len();
        let ww = with.len();
        // Positions of `to` vars inside `with`.
        let map: Vec<usize> = to.iter().map(|v| with.iter().position(|u| u == v).unwrap()).collect();
        let proj = lifted.project(self.letters(wt), |l| {
            let s = l >> wt;
            let mut m = 0;
            for (i, &j) in map.iter().enumerate() {
                if l >> i & 1 == 1 {
                    m |= 1 << j;
                }
            }
            let base = s << ww | m;
            vec![base, base | 1 << xi]
        });
        Ok(proj.minimize())
    }

    /// Re-reads an automaton over variables `from` as one over `to ⊇ from`,
    /// constraining the new node variables to be well formed.
    fn lift(&self, d: &Dfa, from: &[Var], to: &[Var]) -> Dfa {
        if from == to {
            return d.clone();
        }
        let wf = from.len();
        let wt = to.len();
        let map: Vec<usize> = from.iter().map(|v| to.iter().position(|u| u == v).unwrap()).collect();
        let mapped = d.map_letters(self.letters(wt), |l| {
            let s = l >> wt;
            let mut m = 0;
            for (i, &j) in map.iter().enumerate() {
                if l >> j & 1 == 1 {
                    m |= 1 << i;
                }
            }
            s << wf | m
        });
        let new: Vec<Var> = to.iter().filter(|v| !from.contains(v)).cloned().collect();
        if new.iter().all(|v| is_set_var(v)) {
            return mapped;
        }
        self.wf(to, &new).intersect(&mapped).expect("same alphabet").minimize()
    }

    /// Well-formedness of the node variables of `vars` (restricted to `only`
    /// when nonempty).
    fn wf(&self, vars: &[Var], only: &[Var]) -> Dfa {
        let bits: Vec<usize> = vars
            .iter()
            .enumerate()
            .filter(|(_, v)| !is_set_var(v) && (only.is_empty() || only.contains(v)))
            .map(|(i, _)| i)
            .collect();
        let w = vars.len();
        let k = bits.len();
        let full = (1usize << k) - 1;
        let dead = 1 << k;
        Dfa::build(
            self.letters(w),
            dead + 1,
            0,
            |s, l| {
                if s == dead {
                    return dead;
                }
                let mut seen = 0;
                for (j, &b) in bits.iter().enumerate() {
                    if l >> b & 1 == 1 {
                        seen |= 1 << j;
                    }
                }
                if s & seen != 0 {
                    dead
                } else {
                    s | seen
                }
            },
            |s| s == full,
        )
    }

    /// `x` marked exactly once, on a position whose symbol passes `ok`.
    fn one_mark(&self, w: usize, xb: usize, ok: impl Fn(char) -> bool) -> Dfa {
        Dfa::build(
            self.letters(w),
            3,
            0,
            |s, l| match (s, l & xb != 0) {
                (0, false) => 0,
                (0, true) if ok(self.sym(l, w)) => 1,
                (1, false) => 1,
                _ => 2,
            },
            |s| s == 1,
        )
    }

    /// `x ∈ X` for node `x` (bit `xb`) and set `X` (bit `sb`).
    fn one_mark_with(&self, w: usize, xb: usize, sb: usize) -> Dfa {
        Dfa::build(
            self.letters(w),
            3,
            0,
            |s, l| match (s, l & xb != 0) {
                (0, false) => 0,
                (0, true) if l & sb != 0 => 1,
                (1, false) => 1,
                _ => 2,
            },
            |s| s == 1,
        )
    }

    /// Two node variables at positions `i` (bit `xb`) and `j` (bit `yb`).
    fn scan(&self, w: usize, xb: usize, yb: usize, rel: Scan) -> Dfa {
        // 0: neither seen, 1: x seen, 2: y seen first, 3: done, 4: dead.
        // State 5 is "x seen, y must come next" for Scan::Next.
        Dfa::build(
            self.letters(w),
            6,
            0,
            |s, l| {
                let (bx, by) = (l & xb != 0, l & yb != 0);
                let c = self.sym(l, w);
                match (&rel, s, bx, by) {
                    (_, 4, ..) => 4,
                    (_, 3, false, false) => 3,
                    (_, 3, ..) => 4,
                    (_, 0, false, false) => 0,
                    (Scan::Same, 0, true, true) => 3,
                    (Scan::Same, ..) => 4,
                    (Scan::Next(lab), 0, true, false) => {
                        if lab.is_none_or(|a| a == c) {
                            5
                        } else {
                            4
                        }
                    }
                    (Scan::Next(_), 5, false, true) => 3,
                    (Scan::Next(_), ..) => 4,
                    (Scan::Path { strict, .. }, 0, true, true) => {
                        if *strict {
                            4
                        } else {
                            3
                        }
                    }
                    (Scan::Path { along, .. }, 0, true, false) => {
                        if along[l >> w] {
                            1
                        } else {
                            4
                        }
                    }
                    (Scan::Path { along, .. }, 1, false, false) => {
                        if along[l >> w] {
                            1
                        } else {
                            4
                        }
                    }
                    (Scan::Path { .. }, 1, false, true) => 3,
                    _ => 4,
                }
            },
            |s| s == 3,
        )
        .minimize()
    }

    /// For edge-labelled strings: `END` exactly at the last position.
    fn end_only_last(&self, vars: &[Var]) -> Dfa {
        let w = vars.len();
        let end = self.syms.len() - 1;
        Dfa::build(
            self.letters(w),
            3,
            0,
            |s, l| match (s, l >> w == end) {
                (0, false) => 0,
                (0, true) => 1,
                _ => 2,
            },
            |s| s == 1,
        )
    }
}

enum Scan {
    Same,
    /// `y` is the position right after `x`; optionally `x` carries a label.
    Next(Option<char>),
    Path { along: Vec<bool>, strict: bool },
}

/// Outcome of a functionality check.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Functionality {
    pub functional: bool,
    /// A tape `⊢w⊣` and positions `x`, `y1 ≠ y2` both related to `x`.
    pub witness: Option<(Vec<char>, usize, usize, usize)>,
}

/// Decides whether `phi(x,y)` relates every position of every tape `⊢w⊣` to
/// at most one position.
pub fn check_functional(phi: &Formula, sigma: &Alphabet) -> Result<Functionality, CompileError> {
    if phi.free_vars().iter().any(|v| &**v != "x" && &**v != "y") {
        return Err(CompileError::Signature(phi.free_vars().iter().map(|v| v.to_string()).collect()));
    }
    let mut avoid = phi.all_vars();
    avoid.insert(f::v("x"));
    avoid.insert(f::v("y"));
    let y1 = f::fresh("y", &avoid);
    avoid.insert(y1.clone());
    let y2 = f::fresh("y", &avoid);
    // `path(v,v)` holds everywhere; it only makes sure all three variables
    // are free, so the witness places each of them.
    let bad = f::and_all([
        f::path("x", "x"),
        phi.with(&[("y", &y1)]),
        phi.with(&[("y", &y2)]),
        f::not(f::eq(&y1, &y2)),
    ]);
    let syms = sigma.with_markers();
    let c = compile_over(&bad, &syms, Encoding::Node)?;
    let shape = tape_shape(&syms, c.vars.len());
    let d = c.dfa.intersect(&shape)?;
    let witness = d.witness().map(|word| {
        let w = c.vars.len();
        let tape: Vec<char> = word.iter().map(|&l| syms[l >> w]).collect();
        let at = |name: &str| {
            let b = c.vars.iter().position(|v| &**v == name).unwrap();
            word.iter().position(|&l| l >> b & 1 == 1).unwrap()
        };
        (tape, at("x"), at(&y1), at(&y2))
    });
    Ok(Functionality { functional: witness.is_none(), witness })
}

/// `⊢Σ*⊣` over valuated letters of the given width, symbols `[⊢, Σ.., ⊣]`.
pub fn tape_shape(syms: &[char], width: usize) -> Dfa {
    let last = syms.len() - 1;
    Dfa::build(
        syms.len() << width,
        4,
        0,
        |s, l| {
            let i = l >> width;
            match (s, i) {
                (0, 0) => 1,
                (1, i) if i != 0 && i != last => 1,
                (1, i) if i == last => 2,
                _ => 3,
            }
        },
        |s| s == 2,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mso::formula::parse;

    fn ab() -> Alphabet {
        Alphabet::ab()
    }

    #[test]
    fn true_accepts_everything() {
        let c = compile(&f::tt(), &ab(), Encoding::Node).unwrap();
        assert!(c.accepts(&[], &[], &[]));
        assert!(c.accepts(&['a', 'b'], &[], &[]));
        assert_eq!(c.dfa.minimize().states(), 1);
    }

    #[test]
    fn some_a() {
        let c = compile(&parse("(ex x (lab a x))"), &ab(), Encoding::Node).unwrap();
        assert!(c.accepts(&['b', 'a'], &[], &[]));
        assert!(!c.accepts(&['b', 'b'], &[], &[]));
        assert!(!c.accepts(&[], &[], &[]));
    }

    #[test]
    fn edge_string_reads_labels() {
        let c = compile(&parse("(ex x (ex y (edge a x y)))"), &ab(), Encoding::Edge).unwrap();
        assert!(c.accepts(&['b', 'a'], &[], &[]));
        assert!(!c.accepts(&['b'], &[], &[]));
        let l = c.language().unwrap();
        assert!(l.accepts(&['a']));
        assert!(!l.accepts(&[]));
    }

    #[test]
    fn string_shape_holds_everywhere() {
        let c = compile(&f::string_shape(&[UNLAB]), &ab(), Encoding::Node).unwrap();
        assert!(c.dfa.equivalent(&Dfa::universal(2)).unwrap());
    }

    #[test]
    fn functionality_of_basic_moves() {
        assert!(check_functional(&parse("(edge * x y)"), &ab()).unwrap().functional);
        assert!(check_functional(&parse("(= x y)"), &ab()).unwrap().functional);
        let r = check_functional(&parse("(path x y)"), &ab()).unwrap();
        assert!(!r.functional);
        let (tape, x, y1, y2) = r.witness.unwrap();
        assert_eq!(tape, vec![LEFT, RIGHT]);
        assert_eq!(x, 0);
        assert_ne!(y1, y2);
    }

    #[test]
    fn wrong_signature() {
        assert!(matches!(check_functional(&parse("(edge * x z)"), &ab()), Err(CompileError::Signature(_))));
    }

    #[test]
    fn unknown_label() {
        assert_eq!(compile(&parse("(ex x (lab c x))"), &ab(), Encoding::Node), Err(CompileError::Label('c')));
    }
}
