//! Visiting sequences and tracks of finite-visit computations, the
//! decomposition into a marked relabelling followed by a deterministic
//! replay, Hennie machines, and output rearrangements.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::machine::{Branch, Computation, Machine, MachineError, MachineKind, Move, Simulator, Test};
use crate::sym::{token, LEFT, RIGHT};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TrackError {
    #[error("tracks are defined for gsm and hennie machines, not {0}")]
    Kind(&'static str),
    #[error("computation does not end in the final state")]
    NotAccepting,
    #[error("hennie machine declares no visit bound")]
    NoBound,
    #[error(transparent)]
    Machine(#[from] MachineError),
}

/// Direction of the move before or after a visit; `Star` marks the start
/// and the end of the computation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Dir {
    Star,
    Minus,
    Zero,
    Plus,
}

impl Dir {
    pub fn of(d: i8) -> Dir {
        match d {
            -1 => Dir::Minus,
            0 => Dir::Zero,
            _ => Dir::Plus,
        }
    }

    pub fn delta(self) -> Option<i8> {
        match self {
            Dir::Star => None,
            Dir::Minus => Some(-1),
            Dir::Zero => Some(0),
            Dir::Plus => Some(1),
        }
    }
}

impl fmt::Display for Dir {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dir::Star => "*",
            Dir::Minus => "-1",
            Dir::Zero => "0",
            Dir::Plus => "+1",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Visit {
    pub before: Dir,
    pub state: usize,
    pub after: Dir,
    pub out: Vec<char>,
    /// Hennie machines: the symbol read and the symbol left in the cell.
    pub rewrite: Option<(char, char)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VisitingSequence {
    pub sym: char,
    pub visits: Vec<Visit>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Track {
    pub seqs: Vec<VisitingSequence>,
}

impl Track {
    /// The input string spelled by the track, without markers.
    pub fn input(&self) -> String {
        self.seqs.iter().map(|s| s.sym).filter(|&c| c != LEFT && c != RIGHT).collect()
    }

    /// One line per position: `pos <i> <symbol> : (<before>,<state>,<after>,<out>) …`.
    pub fn render(&self, m: &Machine) -> String {
        let mut s = String::new();
        for (i, seq) in self.seqs.iter().enumerate() {
            s.push_str(&format!("pos {i} {} :", token(seq.sym)));
            for v in &seq.visits {
                let out = if v.out.is_empty() { "-".to_string() } else { v.out.iter().map(|&c| token(c)).collect() };
                s.push_str(&format!(" ({},{},{},{}", v.before, m.states[v.state], v.after, out));
                if let Some((r, w)) = v.rewrite {
                    s.push_str(&format!(",{}>{}", token(r), token(w)));
                }
                s.push(')');
            }
            s.push('\n');
        }
        s
    }
}

fn check_kind(m: &Machine) -> Result<(), TrackError> {
    match m.kind {
        MachineKind::Gsm | MachineKind::Hennie => Ok(()),
        k => Err(TrackError::Kind(k.name())),
    }
}

/// Branches taken from `state` when the cell holds `read`.
fn branches(m: &Machine, state: usize, read: char) -> Vec<&Branch> {
    m.instructions_from(state)
        .map(|(_, i)| match i.test {
            Test::Sym(c) => i.branch(read == c),
            _ => unreachable!("symbol tests only"),
        })
        .collect()
}

fn step_of(b: &Branch) -> i8 {
    match b.mv {
        Move::Step(d) => d,
        Move::Mso(_) => unreachable!("steps only"),
    }
}

/// Targets of the branches that agree with the visit.
fn targets(m: &Machine, v: &Visit, read: char) -> BTreeSet<usize> {
    let hennie = m.kind == MachineKind::Hennie;
    branches(m, v.state, read)
        .into_iter()
        .filter(|b| Some(step_of(b)) == v.after.delta() && b.out == v.out)
        .filter(|b| !hennie || v.rewrite.map(|(_, w)| w) == Some(b.write.unwrap_or(read)))
        .map(|b| b.state)
        .collect()
}

/// Extracts the track of an accepting computation.
pub fn extract_track(m: &Machine, c: &Computation) -> Result<Track, TrackError> {
    check_kind(m)?;
    let last = c.steps.last().map_or(m.initial, |s| s.next_state);
    if last != m.fin {
        return Err(TrackError::NotAccepting);
    }
    let hennie = m.kind == MachineKind::Hennie;
    let mut t = crate::graph::tape(&c.input);
    let mut seqs: Vec<VisitingSequence> = t.iter().map(|&sym| VisitingSequence { sym, visits: vec![] }).collect();
    let mut before = Dir::Star;
    for s in &c.steps {
        let d = s.next_pos as i64 - s.pos as i64;
        let read = t[s.pos];
        let rewrite = hennie.then(|| (read, s.write.unwrap_or(read)));
        if let Some(w) = s.write {
            t[s.pos] = w;
        }
        seqs[s.pos].visits.push(Visit { before, state: s.state, after: Dir::of(d as i8), out: s.out.clone(), rewrite });
        before = Dir::of(d as i8);
    }
    let read = t[c.final_pos];
    seqs[c.final_pos].visits.push(Visit {
        before,
        state: m.fin,
        after: Dir::Star,
        out: vec![],
        rewrite: hennie.then_some((read, read)),
    });
    Ok(Track { seqs })
}

// ---------------------------------------------------------------------------
// Validity

/// A crossing of the boundary between two neighbouring cells, seen from the
/// left cell: it leaves to the right towards one of `Exit`'s states, or it
/// is entered from the right in state `Entry`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Cross {
    Exit(BTreeSet<usize>),
    Entry(usize),
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Place {
    First,
    Inner,
    Last,
}

/// Constraints on a single sequence; returns the crossings on its left and
/// right side, in time order, and the number of final visits.
#[allow(clippy::type_complexity)]
fn local(m: &Machine, k: usize, seq: &VisitingSequence, place: Place) -> Result<(Vec<Cross>, Vec<Cross>, usize), String> {
    let hennie = m.kind == MachineKind::Hennie;
    let vs = &seq.visits;
    if vs.len() > k {
        return Err(format!("{} visits exceed the bound {k}", vs.len()));
    }
    if place == Place::First && vs.first().map(|v| (v.before, v.state)) != Some((Dir::Star, m.initial)) {
        return Err("the first cell must start in the initial state".into());
    }
    let (mut left, mut right, mut finals) = (Vec::new(), Vec::new(), 0);
    let mut read = seq.sym;
    for (j, v) in vs.iter().enumerate() {
        let expected = match j.checked_sub(1).map(|p| vs[p].after) {
            None if place == Place::First => Dir::Star,
            None => Dir::Plus,
            Some(Dir::Plus) => Dir::Minus,
            Some(Dir::Minus) => Dir::Plus,
            Some(Dir::Zero) => Dir::Zero,
            Some(Dir::Star) => return Err("a visit follows the final visit".into()),
        };
        if v.before != expected {
            return Err(format!("visit {j} enters with {} instead of {expected}", v.before));
        }
        if hennie {
            match v.rewrite {
                Some((r, _)) if r == read => {}
                _ => return Err(format!("visit {j} reads the wrong symbol")),
            }
        } else if v.rewrite.is_some() {
            return Err("only hennie visits rewrite".into());
        }
        if (place == Place::First && v.after == Dir::Minus) || (place == Place::Last && v.after == Dir::Plus) {
            return Err(format!("visit {j} leaves the tape"));
        }
        if (v.state == m.fin) != (v.after == Dir::Star) {
            return Err(format!("visit {j}: only the final state ends the computation"));
        }
        if v.before == Dir::Plus {
            left.push(Cross::Entry(v.state));
        }
        if v.before == Dir::Minus {
            right.push(Cross::Entry(v.state));
        }
        if v.after == Dir::Star {
            finals += 1;
            if !v.out.is_empty() || (hennie && v.rewrite.map(|(r, w)| r == w) != Some(true)) {
                return Err("the final visit has no effect".into());
            }
            continue;
        }
        let ts = targets(m, v, read);
        if ts.is_empty() {
            return Err(format!("visit {j} matches no instruction"));
        }
        match v.after {
            Dir::Zero => match vs.get(j + 1) {
                Some(n) if ts.contains(&n.state) => {}
                _ => return Err(format!("stay after visit {j} does not lead to the next visit")),
            },
            Dir::Plus => right.push(Cross::Exit(ts)),
            Dir::Minus => left.push(Cross::Exit(ts)),
            Dir::Star => {}
        }
        if let Some((_, w)) = v.rewrite {
            read = w;
        }
    }
    if vs.last().is_some_and(|v| v.after == Dir::Zero) {
        return Err("the last visit stays".into());
    }
    Ok((left, right, finals))
}

/// Do the right-side crossings of one cell fit the left-side crossings of
/// the next?
fn fits(right: &[Cross], left: &[Cross]) -> bool {
    right.len() == left.len()
        && right.iter().zip(left).all(|(r, l)| match (r, l) {
            (Cross::Exit(ts), Cross::Entry(q)) | (Cross::Entry(q), Cross::Exit(ts)) => ts.contains(q),
            _ => false,
        })
}

/// Checks every constraint on a track; the error names the first violation.
pub fn check_track(t: &Track, m: &Machine, k: usize) -> Result<(), String> {
    check_kind(m).map_err(|e| e.to_string())?;
    let n = t.seqs.len();
    if n < 2 || t.seqs[0].sym != LEFT || t.seqs[n - 1].sym != RIGHT {
        return Err("a track spells a marked tape".into());
    }
    for s in &t.seqs[1..n - 1] {
        if !m.input.contains(s.sym) {
            return Err(format!("`{}` is not an input symbol", s.sym));
        }
    }
    let mut sides = Vec::new();
    let mut finals = 0;
    for (i, s) in t.seqs.iter().enumerate() {
        let place = match i {
            0 => Place::First,
            _ if i == n - 1 => Place::Last,
            _ => Place::Inner,
        };
        let (l, r, f) = local(m, k, s, place).map_err(|e| format!("position {i}: {e}"))?;
        finals += f;
        sides.push((l, r));
    }
    if !sides[0].0.is_empty() || !sides[n - 1].1.is_empty() {
        return Err("crossing beyond the markers".into());
    }
    for i in 0..n - 1 {
        if !fits(&sides[i].1, &sides[i + 1].0) {
            return Err(format!("crossings between positions {i} and {} do not match", i + 1));
        }
    }
    if finals != 1 {
        return Err(format!("{finals} final visits"));
    }
    Ok(())
}

pub fn validate_track(t: &Track, m: &Machine, k: usize) -> bool {
    check_track(t, m, k).is_ok()
}

// ---------------------------------------------------------------------------
// The track automaton

/// States of the track automaton: before the first symbol, between cells
/// (crossings still to be matched, whether the final visit was seen), and
/// after the right marker.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TrackState {
    Start,
    Mid { pending: Vec<Cross>, fin: bool },
    End { fin: bool },
}

/// Deterministic automaton over visiting sequences recognizing the valid
/// `k`-tracks, with states built on demand.
pub struct TrackAutomaton<'m> {
    pub m: &'m Machine,
    pub k: usize,
}

impl<'m> TrackAutomaton<'m> {
    pub fn new(m: &'m Machine, k: usize) -> Self {
        TrackAutomaton { m, k }
    }

    pub fn initial(&self) -> TrackState {
        TrackState::Start
    }

    pub fn step(&self, s: &TrackState, seq: &VisitingSequence) -> Option<TrackState> {
        let (place, pending, fin) = match s {
            TrackState::Start if seq.sym == LEFT => (Place::First, &[][..], false),
            TrackState::Mid { pending, fin } if seq.sym == RIGHT => (Place::Last, &pending[..], *fin),
            TrackState::Mid { pending, fin } if self.m.input.contains(seq.sym) => (Place::Inner, &pending[..], *fin),
            _ => return None,
        };
        let (l, r, f) = local(self.m, self.k, seq, place).ok()?;
        if !fits(pending, &l) || (fin && f > 0) || f > 1 {
            return None;
        }
        let fin = fin || f == 1;
        Some(match place {
            Place::Last => TrackState::End { fin },
            _ => TrackState::Mid { pending: r, fin },
        })
    }

    pub fn accepting(&self, s: &TrackState) -> bool {
        matches!(s, TrackState::End { fin: true })
    }

    pub fn accepts(&self, t: &Track) -> bool {
        let mut s = self.initial();
        for seq in &t.seqs {
            match self.step(&s, seq) {
                Some(n) => s = n,
                None => return false,
            }
        }
        self.accepting(&s)
    }

    /// The automaton restricted to a finite alphabet of sequences, with all
    /// reachable states.
    pub fn materialize(&self, alphabet: Vec<VisitingSequence>) -> TrackNfa {
        let mut states = vec![self.initial()];
        let mut index: HashMap<TrackState, usize> = [(self.initial(), 0)].into();
        let mut trans: Vec<Vec<Vec<usize>>> = Vec::new();
        let mut i = 0;
        while i < states.len() {
            let mut row = vec![Vec::new(); alphabet.len()];
            for (a, seq) in alphabet.iter().enumerate() {
                if let Some(n) = self.step(&states[i], seq) {
                    let next = states.len();
                    let j = *index.entry(n.clone()).or_insert_with(|| {
                        states.push(n);
                        next
                    });
                    row[a].push(j);
                }
            }
            trans.push(row);
            i += 1;
        }
        let accept = states.iter().map(|s| self.accepting(s)).collect();
        TrackNfa { alphabet, trans, accept }
    }
}

/// A track automaton over an explicit list of sequences; state 0 is initial.
pub struct TrackNfa {
    pub alphabet: Vec<VisitingSequence>,
    pub trans: Vec<Vec<Vec<usize>>>,
    pub accept: Vec<bool>,
}

impl TrackNfa {
    pub fn states(&self) -> usize {
        self.trans.len()
    }

    pub fn accepts(&self, t: &Track) -> bool {
        let mut cur: BTreeSet<usize> = [0].into();
        for seq in &t.seqs {
            let Some(a) = self.alphabet.iter().position(|s| s == seq) else { return false };
            cur = cur.iter().flat_map(|&s| self.trans[s][a].iter().copied()).collect();
        }
        cur.iter().any(|&s| self.accept[s])
    }

    /// Is some track accepted at all?
    pub fn is_empty(&self) -> bool {
        let mut seen = vec![false; self.states()];
        let mut todo = vec![0];
        seen[0] = true;
        while let Some(s) = todo.pop() {
            if self.accept[s] {
                return false;
            }
            for &n in self.trans[s].iter().flatten() {
                if !seen[n] {
                    seen[n] = true;
                    todo.push(n);
                }
            }
        }
        true
    }
}

/// `track_automaton(M, k)` over every locally valid sequence on the given
/// cell symbols. Only practical for small machines and bounds.
pub fn track_automaton(m: &Machine, k: usize) -> Result<TrackNfa, TrackError> {
    check_kind(m)?;
    let mut alphabet = Vec::new();
    for c in m.input.with_markers() {
        alphabet.extend(visiting_sequences(m, k, c));
    }
    Ok(TrackAutomaton::new(m, k).materialize(alphabet))
}

/// Every sequence over cell symbol `sym` with at most `k` visits that
/// satisfies the constraints of a single cell.
pub fn visiting_sequences(m: &Machine, k: usize, sym: char) -> Vec<VisitingSequence> {
    let place = match sym {
        LEFT => Place::First,
        RIGHT => Place::Last,
        _ => Place::Inner,
    };
    let all: Vec<usize> = (0..m.states.len()).collect();
    let mut out = BTreeSet::new();
    let g = Gen { m, k, place, sym, pending: &[], guesses: &all };
    g.run(&mut |seq, _, _| {
        out.insert(seq.clone());
    }, true);
    out.into_iter().collect()
}

// ---------------------------------------------------------------------------
// Generating sequences cell by cell

/// A crossing with a known branch: towards state `q`, or entered in `q`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Edge {
    Exit(usize),
    Entry(usize),
}

/// Builds the sequences of one cell whose left-side crossings answer
/// `pending` (the right side of the previous cell). States entered from the
/// right are guessed from `guesses`.
struct Gen<'a> {
    m: &'a Machine,
    k: usize,
    place: Place,
    sym: char,
    pending: &'a [Edge],
    guesses: &'a [usize],
}

#[derive(Clone, Copy)]
enum Next {
    Start,
    FromLeft,
    FromRight,
    Stay(usize),
}

struct Partial {
    visits: Vec<Visit>,
    used: usize,
    right: Vec<Edge>,
    fin: bool,
}

impl Gen<'_> {
    /// Calls `emit(sequence, right crossings, has final visit)`; with
    /// `free` set, left-side crossings are unconstrained.
    fn run(&self, emit: &mut dyn FnMut(&VisitingSequence, &[Edge], bool), free: bool) {
        let mut p = Partial { visits: Vec::new(), used: 0, right: Vec::new(), fin: false };
        self.go(&mut p, Next::Start, self.sym, emit, free);
    }

    fn emit(&self, p: &Partial, emit: &mut dyn FnMut(&VisitingSequence, &[Edge], bool), free: bool) {
        if free || p.used == self.pending.len() {
            emit(&VisitingSequence { sym: self.sym, visits: p.visits.clone() }, &p.right, p.fin);
        }
    }

    fn go(&self, p: &mut Partial, next: Next, read: char, emit: &mut dyn FnMut(&VisitingSequence, &[Edge], bool), free: bool) {
        let all: Vec<usize> = (0..self.m.states.len()).collect();
        let (before, states): (Dir, Vec<usize>) = match next {
            Next::Start if self.place == Place::First => (Dir::Star, vec![self.m.initial]),
            Next::Start | Next::FromLeft => {
                // The cell may be left for good here.
                self.emit(p, emit, free);
                if free {
                    (Dir::Plus, all)
                } else {
                    match self.pending.get(p.used) {
                        Some(&Edge::Exit(q)) => (Dir::Plus, vec![q]),
                        _ => return,
                    }
                }
            }
            Next::FromRight => {
                self.emit(p, emit, free);
                (Dir::Minus, self.guesses.to_vec())
            }
            Next::Stay(q) => (Dir::Zero, vec![q]),
        };
        if p.visits.len() == self.k {
            return;
        }
        let consumed = usize::from(before == Dir::Plus && !free);
        let hennie = self.m.kind == MachineKind::Hennie;
        p.used += consumed;
        for q in states {
            if before == Dir::Minus {
                p.right.push(Edge::Entry(q));
            }
            if q == self.m.fin {
                let rewrite = hennie.then_some((read, read));
                p.visits.push(Visit { before, state: q, after: Dir::Star, out: vec![], rewrite });
                p.fin = true;
                self.emit(p, emit, free);
                p.fin = false;
                p.visits.pop();
            } else {
                let mut seen = HashSet::new();
                for b in branches(self.m, q, read) {
                    let d = step_of(b);
                    let write = b.write.unwrap_or(read);
                    if (d == -1 && self.place == Place::First) || (d == 1 && self.place == Place::Last) {
                        continue;
                    }
                    if !seen.insert((b.state, d, b.out.clone(), write)) {
                        continue;
                    }
                    let rewrite = hennie.then_some((read, write));
                    p.visits.push(Visit { before, state: q, after: Dir::of(d), out: b.out.clone(), rewrite });
                    match d {
                        0 => self.go(p, Next::Stay(b.state), write, emit, free),
                        1 => {
                            p.right.push(Edge::Exit(b.state));
                            self.go(p, Next::FromRight, write, emit, free);
                            p.right.pop();
                        }
                        _ if free => self.go(p, Next::FromLeft, write, emit, free),
                        _ => {
                            if self.pending.get(p.used) == Some(&Edge::Entry(b.state)) {
                                p.used += 1;
                                self.go(p, Next::FromLeft, write, emit, free);
                                p.used -= 1;
                            }
                        }
                    }
                    p.visits.pop();
                }
            }
            if before == Dir::Minus {
                p.right.pop();
            }
        }
        p.used -= consumed;
    }
}

// ---------------------------------------------------------------------------
// Decomposition

/// A relabelling of the marked tape followed by a deterministic machine.
pub trait Relabelling {
    type Target;
    fn images(&self, c: char) -> Vec<Self::Target>;
}

/// A finite relation between tape symbols and target symbols.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MarkedRelabelling<T> {
    pub pairs: Vec<(char, T)>,
}

impl<T: Clone> Relabelling for MarkedRelabelling<T> {
    type Target = T;
    fn images(&self, c: char) -> Vec<T> {
        self.pairs.iter().filter(|(a, _)| *a == c).map(|(_, t)| t.clone()).collect()
    }
}

impl<T: Clone> MarkedRelabelling<T> {
    /// Every positionwise image of `⊢w⊣`.
    pub fn apply(&self, w: &str) -> Vec<Vec<T>> {
        let tape = crate::graph::tape(&w.chars().collect::<Vec<_>>());
        let mut out: Vec<Vec<T>> = vec![vec![]];
        for c in tape {
            let imgs = self.images(c);
            out = out.iter().flat_map(|pre| imgs.iter().map(move |t| {
                let mut v = pre.clone();
                v.push(t.clone());
                v
            })).collect();
        }
        out
    }
}

/// All relabellings of `⊢w⊣` under `rel`, markers included in the result.
pub fn mrel_apply(rel: &[(char, char)], w: &str) -> BTreeSet<String> {
    MarkedRelabelling { pairs: rel.to_vec() }.apply(w).into_iter().map(|v| v.into_iter().collect()).collect()
}

/// The first component of the decomposition: a cell with symbol `σ` is
/// relabelled by any `k`-visiting sequence over `σ`.
pub struct SequenceRelabelling<'m> {
    pub m: &'m Machine,
    pub k: usize,
}

impl Relabelling for SequenceRelabelling<'_> {
    type Target = VisitingSequence;
    fn images(&self, c: char) -> Vec<VisitingSequence> {
        visiting_sequences(self.m, self.k, c)
    }
}

/// The second component: checks track-ness in one left-to-right pass, then
/// returns to the left marker and follows the recorded computation, finding
/// the visit to enter from the crossing number of each move.
pub struct ReplayDgsm<'m> {
    pub check: TrackAutomaton<'m>,
}

impl ReplayDgsm<'_> {
    pub fn run(&self, t: &Track) -> Option<String> {
        if !self.check.accepts(t) {
            return None;
        }
        // Crossing numbers of each visit's entry and exit on either side.
        let sides: Vec<(Vec<usize>, Vec<usize>)> = t
            .seqs
            .iter()
            .map(|s| {
                let (mut l, mut r) = (0, 0);
                let mut numbers = (Vec::new(), Vec::new());
                for v in &s.visits {
                    let entry = match v.before {
                        Dir::Plus => { l += 1; l }
                        Dir::Minus => { r += 1; r }
                        _ => 0,
                    };
                    let exit = match v.after {
                        Dir::Minus => { l += 1; l }
                        Dir::Plus => { r += 1; r }
                        _ => 0,
                    };
                    numbers.0.push(entry);
                    numbers.1.push(exit);
                }
                numbers
            })
            .collect();
        let (mut pos, mut j) = (0usize, 0usize);
        let mut out = String::new();
        loop {
            let v = &t.seqs[pos].visits[j];
            out.extend(&v.out);
            let c = sides[pos].1[j];
            let dir = v.after;
            match dir {
                Dir::Star => return Some(out),
                Dir::Zero => j += 1,
                Dir::Plus | Dir::Minus => {
                    pos = if dir == Dir::Plus { pos + 1 } else { pos - 1 };
                    let from = if dir == Dir::Plus { Dir::Plus } else { Dir::Minus };
                    j = t.seqs[pos]
                        .visits
                        .iter()
                        .enumerate()
                        .position(|(i, u)| u.before == from && sides[pos].0[i] == c)?;
                }
            }
        }
    }
}

pub struct Decomposition<'m> {
    pub relabelling: SequenceRelabelling<'m>,
    pub replay: ReplayDgsm<'m>,
}

/// Splits a `k`-visit gsm or Hennie machine into a relabelling of the tape
/// by visiting sequences and a deterministic replay of the track.
pub fn decompose_finite_visit(m: &Machine, k: usize) -> Result<Decomposition<'_>, TrackError> {
    check_kind(m)?;
    Ok(Decomposition {
        relabelling: SequenceRelabelling { m, k },
        replay: ReplayDgsm { check: TrackAutomaton::new(m, k) },
    })
}

impl Decomposition<'_> {
    /// The tracks of `⊢w⊣` that the replay accepts. Sequences are chosen
    /// cell by cell; a choice is kept only if the remaining cells can still
    /// complete it, and states entered from the right are drawn from the
    /// targets of left moves on the next cell.
    pub fn tracks(&self, w: &str) -> BTreeSet<Track> {
        let m = self.relabelling.m;
        let k = self.relabelling.k;
        let tape = crate::graph::tape(&w.chars().collect::<Vec<_>>());
        let n = tape.len();
        let reads: Vec<char> = m.tape_symbols();
        let guesses: Vec<Vec<usize>> = (0..n)
            .map(|i| {
                let Some(&next) = tape.get(i + 1) else { return vec![] };
                let syms: Vec<char> = if m.kind == MachineKind::Hennie { reads.clone() } else { vec![next] };
                let mut g = BTreeSet::new();
                for p in 0..m.states.len() {
                    for &r in &syms {
                        g.extend(branches(m, p, r).into_iter().filter(|b| step_of(b) == -1).map(|b| b.state));
                    }
                }
                g.into_iter().collect()
            })
            .collect();
        type Key = (usize, Vec<Edge>, bool);
        let mut succ: HashMap<Key, Vec<(VisitingSequence, Key)>> = HashMap::new();
        let mut alive: HashMap<Key, bool> = HashMap::new();
        fn explore(
            key: &Key,
            g: &dyn Fn(&Key) -> Vec<(VisitingSequence, Key)>,
            n: usize,
            succ: &mut HashMap<Key, Vec<(VisitingSequence, Key)>>,
            alive: &mut HashMap<Key, bool>,
        ) -> bool {
            if let Some(&a) = alive.get(key) {
                return a;
            }
            if key.0 == n {
                let a = key.1.is_empty() && key.2;
                alive.insert(key.clone(), a);
                return a;
            }
            let mut keep = Vec::new();
            for (seq, next) in g(key) {
                if explore(&next, g, n, succ, alive) {
                    keep.push((seq, next));
                }
            }
            let a = !keep.is_empty();
            succ.insert(key.clone(), keep);
            alive.insert(key.clone(), a);
            a
        }
        let gen = |key: &Key| -> Vec<(VisitingSequence, Key)> {
            let (i, pending, fin) = key;
            let place = match *i {
                0 => Place::First,
                _ if *i == n - 1 => Place::Last,
                _ => Place::Inner,
            };
            let g = Gen { m, k, place, sym: tape[*i], pending, guesses: &guesses[*i] };
            let mut out = Vec::new();
            g.run(
                &mut |seq, right, f| {
                    if !(f && *fin) {
                        out.push((seq.clone(), (i + 1, right.to_vec(), *fin || f)));
                    }
                },
                false,
            );
            out.sort();
            out.dedup();
            out
        };
        let start: Key = (0, vec![], false);
        let mut found = BTreeSet::new();
        if !explore(&start, &gen, n, &mut succ, &mut alive) {
            return found;
        }
        let mut path = Vec::new();
        fn collect(
            key: &Key,
            n: usize,
            succ: &HashMap<Key, Vec<(VisitingSequence, Key)>>,
            path: &mut Vec<VisitingSequence>,
            found: &mut BTreeSet<Track>,
        ) {
            if key.0 == n {
                found.insert(Track { seqs: path.clone() });
                return;
            }
            for (seq, next) in &succ[key] {
                path.push(seq.clone());
                collect(next, n, succ, path, found);
                path.pop();
            }
        }
        collect(&start, n, &succ, &mut path, &mut found);
        found
    }

    /// Outputs of the composition on `w`.
    pub fn apply(&self, w: &str) -> BTreeSet<String> {
        self.tracks(w).iter().filter_map(|t| self.replay.run(t)).collect()
    }
}

// ---------------------------------------------------------------------------
// Hennie machines and output loops

/// Outputs of the accepting computations within the declared visit bound.
pub fn run_hennie(h: &Machine, w: &str) -> Result<BTreeSet<String>, TrackError> {
    if h.kind != MachineKind::Hennie {
        return Err(TrackError::Kind(h.kind.name()));
    }
    let k = h.visits.ok_or(TrackError::NoBound)?;
    Ok(Simulator::new(h).enumerate(w, k)?)
}

/// Is there a computation on `w` that can still accept and comes back to a
/// configuration after writing output? Then `w` has infinitely many outputs.
pub fn detect_output_loop(m: &Machine, w: &str) -> Result<bool, TrackError> {
    if m.kind != MachineKind::Gsm {
        return Err(TrackError::Kind(m.kind.name()));
    }
    let tape = crate::graph::tape(&w.chars().collect::<Vec<_>>());
    let n = tape.len();
    let id = |q: usize, p: usize| q * n + p;
    let size = m.states.len() * n;
    let mut edges: Vec<Vec<(usize, bool)>> = vec![Vec::new(); size];
    for q in 0..m.states.len() {
        if q == m.fin {
            continue;
        }
        for p in 0..n {
            for b in branches(m, q, tape[p]) {
                let t = p as i64 + step_of(b) as i64;
                if (0..n as i64).contains(&t) {
                    edges[id(q, p)].push((id(b.state, t as usize), !b.out.is_empty()));
                }
            }
        }
    }
    let reach = |from: &[usize], adj: &dyn Fn(usize) -> Vec<usize>| {
        let mut seen = vec![false; size];
        let mut todo = from.to_vec();
        for &s in from {
            seen[s] = true;
        }
        while let Some(s) = todo.pop() {
            for t in adj(s) {
                if !seen[t] {
                    seen[t] = true;
                    todo.push(t);
                }
            }
        }
        seen
    };
    let fwd = reach(&[id(m.initial, 0)], &|s| edges[s].iter().map(|e| e.0).collect());
    let mut rev: Vec<Vec<usize>> = vec![Vec::new(); size];
    for (s, es) in edges.iter().enumerate() {
        for &(t, _) in es {
            rev[t].push(s);
        }
    }
    let finals: Vec<usize> = (0..n).map(|p| id(m.fin, p)).collect();
    let back = reach(&finals, &|s| rev[s].clone());
    let live = |s: usize| fwd[s] && back[s];
    // An output edge inside a cycle of live configurations.
    for s in 0..size {
        for &(t, writes) in &edges[s] {
            if writes && live(s) && live(t) {
                let from_t = reach(&[t], &|u| edges[u].iter().map(|e| e.0).filter(|&v| live(v)).collect());
                if from_t[s] {
                    return Ok(true);
                }
            }
        }
    }
    Ok(false)
}

// ---------------------------------------------------------------------------
// Rearrangements

/// A substitution `[z1, z2, z3 ← …]` on formal output segments; each image
/// lists segment indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Substitution(pub [Vec<usize>; 3]);

impl Substitution {
    pub fn identity() -> Self {
        Substitution([vec![0], vec![1], vec![2]])
    }

    /// `σ_b : [z1, z2, z3 ← ε, z1, z2z3]`.
    pub fn sigma_b() -> Self {
        Substitution([vec![], vec![0], vec![1, 2]])
    }

    /// `self` applied after `other`.
    pub fn then(&self, other: &Substitution) -> Substitution {
        Substitution(other.0.clone().map(|img| img.iter().flat_map(|&z| self.0[z].iter().copied()).collect()))
    }

    /// `x1 σ(z1) x2 σ(z2) x3 σ(z3)`.
    pub fn rearrange(&self, x: &[String; 3], z: &[String; 3]) -> String {
        let mut s = String::new();
        for (i, xi) in x.iter().enumerate() {
            s.push_str(xi);
            for &j in &self.0[i] {
                s.push_str(&z[j]);
            }
        }
        s
    }
}

/// `σ_b` composed `i` times.
pub fn rearrangement_substitution(i: usize) -> Substitution {
    (0..i).fold(Substitution::identity(), |acc, _| Substitution::sigma_b().then(&acc))
}

/// Splits the output of a computation into the maximal pieces written while
/// the head is left of `boundary` and right of it, in order; the first piece
/// is always a left one (possibly empty).
pub fn segment_output(c: &Computation, boundary: usize) -> Vec<String> {
    let mut segs = vec![String::new()];
    for s in &c.steps {
        let left = s.pos < boundary;
        if left != (segs.len() % 2 == 1) {
            segs.push(String::new());
        }
        segs.last_mut().unwrap().extend(&s.out);
    }
    segs
}

/// Output predicted for `w` with `i` copies of `b` inserted at `boundary`
/// (a tape position of `⊢w⊣`), from the computation on `w`; `None` unless
/// that computation crosses the boundary in exactly three tours each way.
pub fn predict_insertion(m: &Machine, w: &str, boundary: usize, i: usize) -> Result<Option<String>, TrackError> {
    let crate::machine::RunResult::Accepted(c) = m.run_deterministic(w)? else { return Ok(None) };
    let mut segs = segment_output(&c, boundary);
    if segs.len() > 6 {
        return Ok(None);
    }
    segs.resize(6, String::new());
    let x = [segs[0].clone(), segs[2].clone(), segs[4].clone()];
    let z = [segs[1].clone(), segs[3].clone(), segs[5].clone()];
    Ok(Some(rearrangement_substitution(i).rearrange(&x, &z)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn visit(m: &Machine, before: Dir, q: &str, after: Dir, out: &str) -> Visit {
        Visit { before, state: m.state(q).unwrap(), after, out: out.chars().collect(), rewrite: None }
    }

    fn accepted(m: &Machine, w: &str) -> Computation {
        match m.run_deterministic(w).unwrap() {
            crate::machine::RunResult::Accepted(c) => c,
            r => panic!("{r:?}"),
        }
    }

    #[test]
    fn running_example_sequences() {
        use Dir::*;
        let m = fixtures::ex21();
        let t = extract_track(&m, &accepted(&m, "aaabbaba")).unwrap();
        let seq = |sym, vs: Vec<Visit>| VisitingSequence { sym, visits: vs };
        let listed = [
            seq(LEFT, vec![visit(&m, Star, "0", Plus, ""), visit(&m, Minus, "3", Plus, "")]),
            seq(LEFT, vec![visit(&m, Star, "0", Plus, "")]),
            seq('a', vec![visit(&m, Plus, "1", Plus, "a"), visit(&m, Minus, "3", Minus, "b"), visit(&m, Plus, "4", Plus, "")]),
            seq('a', vec![visit(&m, Plus, "1", Plus, "a")]),
            seq('b', vec![visit(&m, Plus, "1", Zero, ""), visit(&m, Zero, "2", Minus, ""), visit(&m, Plus, "4", Plus, ""), visit(&m, Minus, "3", Plus, "")]),
            seq('b', vec![visit(&m, Plus, "1", Zero, ""), visit(&m, Zero, "2", Minus, ""), visit(&m, Plus, "4", Plus, "")]),
            seq(RIGHT, vec![visit(&m, Plus, "1", Zero, ""), visit(&m, Zero, "2", Zero, ""), visit(&m, Zero, "5", Star, "")]),
        ];
        // Positions 1-3 repeat the a-sequence, then b, b, a, b0, a0, right.
        let order = [0, 2, 2, 2, 4, 4, 2, 5, 3, 6];
        let want: Vec<VisitingSequence> = order.iter().map(|&i| listed[i].clone()).collect();
        assert_eq!(t.seqs, want);
        assert!(validate_track(&t, &m, 5));
        assert!(TrackAutomaton::new(&m, 5).accepts(&t));
        assert!(!validate_track(&t, &m, 3));
    }

    #[test]
    fn accept_at_left_marker() {
        let m: Machine = "machine stop\nkind gsm\ninput a\noutput a\nstates 0 1\ninitial 0\nfinal 1\ninst 0 sym L => 1 - 0 / 1 - 0\n"
            .parse()
            .unwrap();
        let t = extract_track(&m, &accepted(&m, "a")).unwrap();
        assert_eq!(t.seqs[0].visits.len(), 2);
        assert!(t.seqs[1..].iter().all(|s| s.visits.is_empty()));
        assert!(validate_track(&t, &m, 2));
    }

    #[test]
    fn broken_tracks() {
        let m = fixtures::ex21();
        let k = 6;
        let t = extract_track(&m, &accepted(&m, "aab")).unwrap();
        let auto = TrackAutomaton::new(&m, k);
        let mut swapped = t.clone();
        swapped.seqs[1].visits.swap(0, 1);
        let mut two_finals = t.clone();
        let last = two_finals.seqs.len() - 1;
        let fin = two_finals.seqs[last].visits.last().unwrap().clone();
        two_finals.seqs[0].visits.push(Visit { before: Dir::Minus, ..fin });
        for bad in [swapped, two_finals] {
            assert!(!validate_track(&bad, &m, k));
            assert!(!auto.accepts(&bad));
        }
    }

    #[test]
    fn bound_too_small_gives_no_tracks() {
        let m = fixtures::ex21();
        assert!(track_automaton(&m, 1).unwrap().is_empty());
        assert!(!track_automaton(&m, 3).unwrap().is_empty());
    }

    #[test]
    fn decomposition_replays_the_running_example() {
        let m = fixtures::ex21();
        let d = decompose_finite_visit(&m, 5).unwrap();
        assert_eq!(d.apply("aaabbaba"), ["aaabbbaba".to_string()].into());
        let empty: Machine = "machine none\nkind gsm\ninput a b\noutput a\nstates 0 1\ninitial 0\nfinal 1\n".parse().unwrap();
        assert!(decompose_finite_visit(&empty, 2).unwrap().apply("ab").is_empty());
    }

    #[test]
    fn marked_relabellings() {
        let id = [(LEFT, LEFT), ('a', 'a'), ('b', 'b'), (RIGHT, RIGHT)];
        assert_eq!(mrel_apply(&id, "ab"), ["⊢ab⊣".to_string()].into());
        assert_eq!(mrel_apply(&id, ""), ["⊢⊣".to_string()].into());
        let two = [(LEFT, LEFT), ('a', 'x'), ('a', 'y'), (RIGHT, RIGHT)];
        assert_eq!(mrel_apply(&two, "aa").len(), 4);
        assert!(mrel_apply(&two, "ab").is_empty());
    }

    #[test]
    fn hennie_two_passes() {
        let want: BTreeSet<String> = ["aa#aa", "ab#ab", "ba#ba", "bb#bb"].iter().map(|s| s.to_string()).collect();
        assert_eq!(run_hennie(&fixtures::hennie(), "aa").unwrap(), want);
    }

    #[test]
    fn output_loops() {
        assert!(detect_output_loop(&fixtures::copies(), "aa").unwrap());
        let m = fixtures::ex21();
        for w in m.input.strings_up_to(5) {
            assert!(!detect_output_loop(&m, &w).unwrap());
        }
        let none: Machine = "machine none\nkind gsm\ninput a\noutput a\nstates 0 1\ninitial 0\nfinal 1\n".parse().unwrap();
        assert!(!detect_output_loop(&none, "a").unwrap());
    }

    #[test]
    fn substitutions() {
        assert_eq!(rearrangement_substitution(0), Substitution::identity());
        assert_eq!(rearrangement_substitution(1), Substitution([vec![], vec![0], vec![1, 2]]));
        assert_eq!(rearrangement_substitution(2), Substitution([vec![], vec![], vec![0, 1, 2]]));
        assert_eq!(rearrangement_substitution(5), rearrangement_substitution(2));
        let m = fixtures::ex63_det();
        for i in 0..4 {
            let w = format!("aaa{}aa", "b".repeat(i));
            assert_eq!(predict_insertion(&m, "aaaaa", 4, i).unwrap(), m.run(&w).unwrap(), "{w}");
        }
    }
}
