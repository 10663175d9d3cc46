//! Finite automata over letters `0..letters`, plus a char-labelled wrapper.

use std::collections::{BTreeSet, HashMap, VecDeque};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DfaError {
    #[error("alphabet mismatch: {0} vs {1} letters")]
    AlphabetMismatch(usize, usize),
    #[error("symbol alphabets differ: {0:?} vs {1:?}")]
    SymbolMismatch(Vec<char>, Vec<char>),
    #[error("precondition violated: accepted word {0:?} has {1} marked letters")]
    NotSingleOccurrence(Vec<usize>, usize),
}

/// Complete deterministic automaton.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Dfa {
    pub letters: usize,
    pub init: usize,
    /// `trans[state][letter]`
    pub trans: Vec<Vec<usize>>,
    pub accept: Vec<bool>,
}

impl Dfa {
    /// Builds a complete automaton from a transition function.
    pub fn build(
        letters: usize,
        states: usize,
        init: usize,
        delta: impl Fn(usize, usize) -> usize,
        accept: impl Fn(usize) -> bool,
    ) -> Dfa {
        Dfa {
            letters,
            init,
            trans: (0..states).map(|s| (0..letters).map(|l| delta(s, l)).collect()).collect(),
            accept: (0..states).map(accept).collect(),
        }
    }

    pub fn universal(letters: usize) -> Dfa {
        Dfa::build(letters, 1, 0, |_, _| 0, |_| true)
    }

    pub fn empty(letters: usize) -> Dfa {
        Dfa::build(letters, 1, 0, |_, _| 0, |_| false)
    }

    /// Accepts exactly the empty word.
    pub fn epsilon(letters: usize) -> Dfa {
        Dfa::build(letters, 2, 0, |_, _| 1, |s| s == 0)
    }

    pub fn states(&self) -> usize {
        self.trans.len()
    }

    pub fn run_from(&self, start: usize, word: &[usize]) -> usize {
        word.iter().fold(start, |s, &l| self.trans[s][l])
    }

    pub fn accepts(&self, word: &[usize]) -> bool {
        self.accept[self.run_from(self.init, word)]
    }

    pub fn complement(&self) -> Dfa {
        Dfa { accept: self.accept.iter().map(|a| !a).collect(), ..self.clone() }
    }

    /// Reachable product with the acceptance condition `op`.
    pub fn product(&self, other: &Dfa, op: impl Fn(bool, bool) -> bool) -> Result<Dfa, DfaError> {
        if self.letters != other.letters {
            return Err(DfaError::AlphabetMismatch(self.letters, other.letters));
        }
        let mut ids: HashMap<(usize, usize), usize> = HashMap::new();
        let mut pairs = vec![(self.init, other.init)];
        ids.insert((self.init, other.init), 0);
        let mut trans = Vec::new();
        let mut i = 0;
        while i < pairs.len() {
            let (a, b) = pairs[i];
            let mut row = Vec::with_capacity(self.letters);
            for l in 0..self.letters {
                let p = (self.trans[a][l], other.trans[b][l]);
                let id = *ids.entry(p).or_insert_with(|| {
                    pairs.push(p);
                    pairs.len() - 1
                });
                row.push(id);
            }
            trans.push(row);
            i += 1;
        }
        let accept = pairs.iter().map(|&(a, b)| op(self.accept[a], other.accept[b])).collect();
        Ok(Dfa { letters: self.letters, init: 0, trans, accept })
    }

    pub fn intersect(&self, other: &Dfa) -> Result<Dfa, DfaError> {
        self.product(other, |a, b| a && b)
    }

    pub fn union(&self, other: &Dfa) -> Result<Dfa, DfaError> {
        self.product(other, |a, b| a || b)
    }

    pub fn difference(&self, other: &Dfa) -> Result<Dfa, DfaError> {
        self.product(other, |a, b| a && !b)
    }

    pub fn equivalent(&self, other: &Dfa) -> Result<bool, DfaError> {
        Ok(self.product(other, |a, b| a != b)?.is_empty())
    }

    fn reachable_order(&self) -> Vec<usize> {
        let mut seen = vec![false; self.states()];
        let mut order = vec![self.init];
        seen[self.init] = true;
        let mut i = 0;
        while i < order.len() {
            for &t in &self.trans[order[i]] {
                if !seen[t] {
                    seen[t] = true;
                    order.push(t);
                }
            }
            i += 1;
        }
        order
    }

    /// States from which an accepting state is reachable.
    pub fn coreachable(&self) -> Vec<bool> {
        let n = self.states();
        let mut rev: Vec<Vec<usize>> = vec![Vec::new(); n];
        for s in 0..n {
            for &t in &self.trans[s] {
                rev[t].push(s);
            }
        }
        let mut good = self.accept.clone();
        let mut stack: Vec<usize> = (0..n).filter(|&s| good[s]).collect();
        while let Some(t) = stack.pop() {
            for &s in &rev[t] {
                if !good[s] {
                    good[s] = true;
                    stack.push(s);
                }
            }
        }
        good
    }

    /// Minimal automaton, states numbered in breadth-first order from the
    /// initial state, so equal languages give equal values.
    pub fn minimize(&self) -> Dfa {
        let order = self.reachable_order();
        let mut idx = vec![usize::MAX; self.states()];
        for (i, &s) in order.iter().enumerate() {
            idx[s] = i;
        }
        let n = order.len();
        let trans: Vec<Vec<usize>> =
            order.iter().map(|&s| self.trans[s].iter().map(|&t| idx[t]).collect()).collect();
        let mut class: Vec<usize> = order.iter().map(|&s| self.accept[s] as usize).collect();
        let mut count = class.iter().collect::<BTreeSet<_>>().len();
        loop {
            let mut sigs: HashMap<Vec<usize>, usize> = HashMap::new();
            let mut next = vec![0; n];
            for s in 0..n {
                let mut sig = Vec::with_capacity(self.letters + 1);
                sig.push(class[s]);
                sig.extend(trans[s].iter().map(|&t| class[t]));
                let k = sigs.len();
                next[s] = *sigs.entry(sig).or_insert(k);
            }
            let new_count = sigs.len();
            class = next;
            if new_count == count {
                break;
            }
            count = new_count;
        }
        // Quotient, then renumber breadth-first.
        let mut rep = vec![usize::MAX; count];
        for s in 0..n {
            if rep[class[s]] == usize::MAX {
                rep[class[s]] = s;
            }
        }
        let q = Dfa {
            letters: self.letters,
            init: class[0],
            trans: (0..count).map(|c| trans[rep[c]].iter().map(|&t| class[t]).collect()).collect(),
            accept: (0..count).map(|c| self.accept[order[rep[c]]]).collect(),
        };
        q.renumber()
    }

    fn renumber(&self) -> Dfa {
        let order = self.reachable_order();
        let mut idx = vec![usize::MAX; self.states()];
        for (i, &s) in order.iter().enumerate() {
            idx[s] = i;
        }
        Dfa {
            letters: self.letters,
            init: 0,
            trans: order.iter().map(|&s| self.trans[s].iter().map(|&t| idx[t]).collect()).collect(),
            accept: order.iter().map(|&s| self.accept[s]).collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.witness().is_none()
    }

    /// A shortest accepted word, least in letter order among the shortest.
    pub fn witness(&self) -> Option<Vec<usize>> {
        let mut prev: Vec<Option<(usize, usize)>> = vec![None; self.states()];
        let mut seen = vec![false; self.states()];
        let mut queue = VecDeque::from([self.init]);
        seen[self.init] = true;
        while let Some(s) = queue.pop_front() {
            if self.accept[s] {
                let mut word = Vec::new();
                let mut cur = s;
                while let Some((p, l)) = prev[cur] {
                    word.push(l);
                    cur = p;
                }
                word.reverse();
                return Some(word);
            }
            for l in 0..self.letters {
                let t = self.trans[s][l];
                if !seen[t] {
                    seen[t] = true;
                    prev[t] = Some((s, l));
                    queue.push_back(t);
                }
            }
        }
        None
    }

    /// Same states, new alphabet: letter `l` behaves like old letter `f(l)`.
    pub fn map_letters(&self, letters: usize, f: impl Fn(usize) -> usize) -> Dfa {
        let table: Vec<usize> = (0..letters).map(f).collect();
        Dfa {
            letters,
            init: self.init,
            trans: self.trans.iter().map(|row| table.iter().map(|&l| row[l]).collect()).collect(),
            accept: self.accept.clone(),
        }
    }

    /// Determinized image under a letter-to-letters relation: new letter `l`
    /// may be read as any old letter in `preimages(l)`.
    pub fn project(&self, letters: usize, preimages: impl Fn(usize) -> Vec<usize>) -> Dfa {
        let pre: Vec<Vec<usize>> = (0..letters).map(preimages).collect();
        let nfa = Nfa {
            letters,
            init: vec![self.init],
            trans: self
                .trans
                .iter()
                .map(|row| pre.iter().map(|ls| ls.iter().map(|&l| row[l]).collect()).collect())
                .collect(),
            eps: vec![Vec::new(); self.states()],
            accept: self.accept.clone(),
        };
        nfa.determinize()
    }

    /// Automaton for the reversed language.
    pub fn reverse(&self) -> Nfa {
        let n = self.states();
        let mut trans = vec![vec![Vec::new(); self.letters]; n];
        for s in 0..n {
            for l in 0..self.letters {
                trans[self.trans[s][l]][l].push(s);
            }
        }
        let mut accept = vec![false; n];
        accept[self.init] = true;
        Nfa {
            letters: self.letters,
            init: (0..n).filter(|&s| self.accept[s]).collect(),
            trans,
            eps: vec![Vec::new(); n],
            accept,
        }
    }

    /// Same automaton with a different initial state.
    pub fn from_state(&self, s: usize) -> Dfa {
        Dfa { init: s, ..self.clone() }
    }

    /// Same automaton with a single accepting state.
    pub fn to_state(&self, s: usize) -> Dfa {
        let mut accept = vec![false; self.states()];
        accept[s] = true;
        Dfa { accept, ..self.clone() }
    }
}

/// Nondeterministic automaton with optional ε-moves.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Nfa {
    pub letters: usize,
    pub init: Vec<usize>,
    /// `trans[state][letter]` is a list of successors.
    pub trans: Vec<Vec<Vec<usize>>>,
    pub eps: Vec<Vec<usize>>,
    pub accept: Vec<bool>,
}

impl Nfa {
    pub fn new(letters: usize) -> Nfa {
        Nfa { letters, init: Vec::new(), trans: Vec::new(), eps: Vec::new(), accept: Vec::new() }
    }

    pub fn add_state(&mut self, accepting: bool) -> usize {
        self.trans.push(vec![Vec::new(); self.letters]);
        self.eps.push(Vec::new());
        self.accept.push(accepting);
        self.trans.len() - 1
    }

    pub fn add(&mut self, from: usize, letter: usize, to: usize) {
        self.trans[from][letter].push(to);
    }

    pub fn add_eps(&mut self, from: usize, to: usize) {
        self.eps[from].push(to);
    }

    pub fn states(&self) -> usize {
        self.trans.len()
    }

    fn closure(&self, set: &mut Vec<usize>) {
        let mut seen: BTreeSet<usize> = set.iter().copied().collect();
        let mut stack = set.clone();
        while let Some(s) = stack.pop() {
            for &t in &self.eps[s] {
                if seen.insert(t) {
                    stack.push(t);
                }
            }
        }
        *set = seen.into_iter().collect();
    }

    pub fn accepts(&self, word: &[usize]) -> bool {
        let mut cur = self.init.clone();
        self.closure(&mut cur);
        for &l in word {
            let mut next: Vec<usize> = cur.iter().flat_map(|&s| self.trans[s][l].iter().copied()).collect();
            self.closure(&mut next);
            cur = next;
        }
        cur.iter().any(|&s| self.accept[s])
    }

    /// Subset construction.
    pub fn determinize(&self) -> Dfa {
        let mut start = self.init.clone();
        self.closure(&mut start);
        let mut ids: HashMap<Vec<usize>, usize> = HashMap::new();
        ids.insert(start.clone(), 0);
        let mut sets = vec![start];
        let mut trans = Vec::new();
        let mut i = 0;
        while i < sets.len() {
            let mut row = Vec::with_capacity(self.letters);
            for l in 0..self.letters {
                let mut next: Vec<usize> =
                    sets[i].iter().flat_map(|&s| self.trans[s][l].iter().copied()).collect();
                next.sort_unstable();
                next.dedup();
                self.closure(&mut next);
                let id = match ids.get(&next) {
                    Some(&id) => id,
                    None => {
                        ids.insert(next.clone(), sets.len());
                        sets.push(next);
                        sets.len() - 1
                    }
                };
                row.push(id);
            }
            trans.push(row);
            i += 1;
        }
        let accept = sets.iter().map(|s| s.iter().any(|&q| self.accept[q])).collect();
        Dfa { letters: self.letters, init: 0, trans, accept }
    }

    /// Copies a Dfa's states into this automaton; returns the state offset.
    pub fn embed(&mut self, d: &Dfa) -> usize {
        let off = self.states();
        for s in 0..d.states() {
            self.add_state(d.accept[s]);
        }
        for s in 0..d.states() {
            for l in 0..d.letters {
                self.add(off + s, l, off + d.trans[s][l]);
            }
        }
        off
    }
}

/// Splits a language in which every word has exactly one letter from `delta`
/// into disjoint pieces `R_ℓ · a · R_r`, one per useful `delta`-transition of
/// the minimal automaton.
pub fn split_single_occurrence(a: &Dfa, delta: &[bool]) -> Result<Vec<(Dfa, usize, Dfa)>, DfaError> {
    if delta.len() != a.letters {
        return Err(DfaError::AlphabetMismatch(a.letters, delta.len()));
    }
    let once = exactly_once(delta);
    if let Some(w) = a.difference(&once)?.witness() {
        let count = w.iter().filter(|&&l| delta[l]).count();
        return Err(DfaError::NotSingleOccurrence(w, count));
    }
    let m = a.minimize();
    let useful = m.coreachable();
    let mut out = Vec::new();
    for p in 0..m.states() {
        if !useful[p] {
            continue;
        }
        for l in (0..m.letters).filter(|&l| delta[l]) {
            let q = m.trans[p][l];
            if useful[q] {
                out.push((m.to_state(p).minimize(), l, m.from_state(q).minimize()));
            }
        }
    }
    Ok(out)
}

/// Words with exactly one letter from `delta`.
pub fn exactly_once(delta: &[bool]) -> Dfa {
    Dfa::build(
        delta.len(),
        3,
        0,
        |s, l| match (s, delta[l]) {
            (0, false) => 0,
            (0, true) => 1,
            (1, false) => 1,
            _ => 2,
        },
        |s| s == 1,
    )
}

/// A Dfa whose letters are the given characters, in order.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CharDfa {
    pub syms: Vec<char>,
    pub dfa: Dfa,
}

impl CharDfa {
    pub fn new(syms: Vec<char>, dfa: Dfa) -> CharDfa {
        debug_assert_eq!(syms.len(), dfa.letters);
        CharDfa { syms, dfa }
    }

    pub fn universal(syms: &[char]) -> CharDfa {
        CharDfa::new(syms.to_vec(), Dfa::universal(syms.len()))
    }

    pub fn empty(syms: &[char]) -> CharDfa {
        CharDfa::new(syms.to_vec(), Dfa::empty(syms.len()))
    }

    pub fn epsilon(syms: &[char]) -> CharDfa {
        CharDfa::new(syms.to_vec(), Dfa::epsilon(syms.len()))
    }

    /// `first · (syms)*`, e.g. `⊢Σ*`.
    pub fn starting_with(syms: &[char], first: char) -> CharDfa {
        let f = syms.iter().position(|&c| c == first);
        CharDfa::new(
            syms.to_vec(),
            Dfa::build(syms.len(), 3, 0, |s, l| match s {
                0 if Some(l) == f => 1,
                1 => 1,
                _ => 2,
            }, |s| s == 1),
        )
    }

    /// Words over `inner` (a subset of `syms`) followed by `last`, e.g. `Σ*⊣`.
    pub fn inner_then(syms: &[char], inner: &[char], last: char) -> CharDfa {
        let is_inner: Vec<bool> = syms.iter().map(|c| inner.contains(c)).collect();
        CharDfa::new(
            syms.to_vec(),
            Dfa::build(syms.len(), 3, 0, |s, l| match s {
                0 if syms[l] == last => 1,
                0 if is_inner[l] => 0,
                _ => 2,
            }, |s| s == 1),
        )
    }

    /// `first` followed by words over `inner`, e.g. `⊢Σ*`.
    pub fn first_then(syms: &[char], first: char, inner: &[char]) -> CharDfa {
        let is_inner: Vec<bool> = syms.iter().map(|c| inner.contains(c)).collect();
        CharDfa::new(
            syms.to_vec(),
            Dfa::build(syms.len(), 3, 0, |s, l| match s {
                0 if syms[l] == first => 1,
                1 if is_inner[l] => 1,
                _ => 2,
            }, |s| s == 1),
        )
    }

    pub fn letter(&self, c: char) -> Option<usize> {
        self.syms.iter().position(|&s| s == c)
    }

    pub fn accepts(&self, w: &[char]) -> bool {
        let mut s = self.dfa.init;
        for &c in w {
            match self.letter(c) {
                Some(l) => s = self.dfa.trans[s][l],
                None => return false,
            }
        }
        self.dfa.accept[s]
    }

    fn check(&self, other: &CharDfa) -> Result<(), DfaError> {
        if self.syms != other.syms {
            return Err(DfaError::SymbolMismatch(self.syms.clone(), other.syms.clone()));
        }
        Ok(())
    }

    pub fn intersect(&self, other: &CharDfa) -> Result<CharDfa, DfaError> {
        self.check(other)?;
        Ok(CharDfa::new(self.syms.clone(), self.dfa.intersect(&other.dfa)?.minimize()))
    }

    pub fn union(&self, other: &CharDfa) -> Result<CharDfa, DfaError> {
        self.check(other)?;
        Ok(CharDfa::new(self.syms.clone(), self.dfa.union(&other.dfa)?.minimize()))
    }

    pub fn equivalent(&self, other: &CharDfa) -> Result<bool, DfaError> {
        self.check(other)?;
        self.dfa.equivalent(&other.dfa)
    }

    pub fn minimize(&self) -> CharDfa {
        CharDfa::new(self.syms.clone(), self.dfa.minimize())
    }

    pub fn is_empty(&self) -> bool {
        self.dfa.is_empty()
    }

    /// `L(self) · c · L(other)`.
    pub fn concat_via(&self, c: char, other: &CharDfa) -> Result<CharDfa, DfaError> {
        self.check(other)?;
        let l = self.letter(c).ok_or_else(|| DfaError::SymbolMismatch(self.syms.clone(), vec![c]))?;
        let mut nfa = Nfa::new(self.syms.len());
        let a = nfa.embed(&self.dfa);
        let mut plain = self.dfa.clone();
        plain.accept = vec![false; plain.states()];
        for s in 0..self.dfa.states() {
            nfa.accept[a + s] = false;
        }
        let b = nfa.embed(&other.dfa);
        for s in 0..self.dfa.states() {
            if self.dfa.accept[s] {
                nfa.add(a + s, l, b + other.dfa.init);
            }
        }
        nfa.init = vec![a + self.dfa.init];
        Ok(CharDfa::new(self.syms.clone(), nfa.determinize().minimize()))
    }

    /// The mirror-image language.
    pub fn reversed(&self) -> CharDfa {
        CharDfa::new(self.syms.clone(), self.dfa.reverse().determinize().minimize())
    }

    /// Same language read over a different symbol list; symbols missing from
    /// `self.syms` lead to rejection.
    pub fn over(&self, syms: &[char]) -> CharDfa {
        let n = self.dfa.states();
        let mut trans = Vec::with_capacity(n + 1);
        for s in 0..n {
            trans.push(
                syms.iter()
                    .map(|&c| self.letter(c).map_or(n, |l| self.dfa.trans[s][l]))
                    .collect(),
            );
        }
        trans.push(vec![n; syms.len()]);
        let mut accept = self.dfa.accept.clone();
        accept.push(false);
        CharDfa::new(syms.to_vec(), Dfa { letters: syms.len(), init: self.dfa.init, trans, accept }.minimize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Words over {0,1} ending in 1.
    fn ends_in_one() -> Dfa {
        Dfa::build(2, 2, 0, |_, l| l, |s| s == 1)
    }

    #[test]
    fn complement_is_an_involution() {
        let d = ends_in_one();
        assert_eq!(d.complement().complement(), d);
        assert!(d.complement().accepts(&[]));
        assert!(!d.complement().accepts(&[0, 1]));
    }

    #[test]
    fn determinize_a_star_b() {
        // letters: a=0, b=1
        let mut n = Nfa::new(2);
        let s0 = n.add_state(false);
        let s1 = n.add_state(true);
        n.add(s0, 0, s0);
        n.add(s0, 1, s1);
        n.init = vec![s0];
        let d = n.determinize();
        assert!(d.accepts(&[0, 1]));
        assert!(d.accepts(&[0, 0, 1]));
        assert!(!d.accepts(&[1, 0]));
    }

    #[test]
    fn minimize_merges_equivalent_states() {
        // Three states all equivalent to "ends in 1".
        let d = Dfa::build(2, 4, 0, |s, l| if l == 1 { 1 + s % 2 } else { 3 * (s % 2) }, |s| s == 1 || s == 2);
        let m = d.minimize();
        assert_eq!(m.states(), 2);
        assert!(m.equivalent(&ends_in_one()).unwrap());
        assert_eq!(m, ends_in_one().minimize());
    }

    #[test]
    fn split_0_star_1_0_star() {
        let d = Dfa::build(2, 3, 0, |s, l| match (s, l) {
            (0, 0) => 0,
            (0, 1) => 1,
            (1, 0) => 1,
            _ => 2,
        }, |s| s == 1);
        let pieces = split_single_occurrence(&d, &[false, true]).unwrap();
        assert_eq!(pieces.len(), 1);
        let (l, a, r) = &pieces[0];
        assert_eq!(*a, 1);
        let zeros = Dfa::build(2, 2, 0, |s, l| if s == 0 && l == 0 { 0 } else { 1 }, |s| s == 0);
        assert!(l.equivalent(&zeros).unwrap());
        assert!(r.equivalent(&zeros).unwrap());
    }

    #[test]
    fn split_rejects_double_occurrence() {
        let err = split_single_occurrence(&Dfa::universal(2), &[false, true]).unwrap_err();
        assert!(matches!(err, DfaError::NotSingleOccurrence(ref w, 0) if w.is_empty()));
    }

    #[test]
    fn char_dfa_helpers() {
        let syms = ['⊢', 'a', 'b', '⊣'];
        let pre = CharDfa::first_then(&syms, '⊢', &['a', 'b']);
        assert!(pre.accepts(&['⊢', 'a']));
        assert!(!pre.accepts(&['a']));
        let suf = CharDfa::inner_then(&syms, &['a', 'b'], '⊣');
        assert!(suf.accepts(&['b', '⊣']));
        let both = pre.concat_via('b', &suf).unwrap();
        assert!(both.accepts(&['⊢', 'a', 'b', '⊣']));
        assert!(!both.accepts(&['⊢', 'a', '⊣']));
        assert!(both.reversed().accepts(&['⊣', 'b', 'a', '⊢']));
        let narrow = CharDfa::universal(&['a']);
        let wide = narrow.over(&syms);
        assert!(wide.accepts(&['a', 'a']));
        assert!(!wide.accepts(&['b']));
    }
}
