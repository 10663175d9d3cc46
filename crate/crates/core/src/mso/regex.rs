//! Regular expressions for look-around tests.
//!
//! Grammar: literals, concatenation, `|`, `*`, parentheses; `L` and `R`
//! stand for the tape markers, `()` for the empty word and `[]` for the empty
//! language. Whitespace is ignored.

use std::fmt;

use thiserror::Error;

use super::dfa::{CharDfa, Nfa};
use crate::sym::{LEFT, RIGHT};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RegexError {
    #[error("regex syntax at offset {0}: {1}")]
    Syntax(usize, String),
    #[error("symbol `{0}` is not in the alphabet")]
    Symbol(char),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Regex {
    Empty,
    Eps,
    Sym(char),
    Cat(Vec<Regex>),
    Alt(Vec<Regex>),
    Star(Box<Regex>),
}

pub fn parse(s: &str) -> Result<Regex, RegexError> {
    let chars: Vec<char> = s.chars().filter(|c| !c.is_whitespace()).collect();
    let mut p = P { s: chars, i: 0 };
    let r = p.alt()?;
    if p.i != p.s.len() {
        return Err(RegexError::Syntax(p.i, format!("unexpected `{}`", p.s[p.i])));
    }
    Ok(r)
}

struct P {
    s: Vec<char>,
    i: usize,
}

impl P {
    fn peek(&self) -> Option<char> {
        self.s.get(self.i).copied()
    }

    fn alt(&mut self) -> Result<Regex, RegexError> {
        let mut parts = vec![self.cat()?];
        while self.peek() == Some('|') {
            self.i += 1;
            parts.push(self.cat()?);
        }
        Ok(alt(parts))
    }

    fn cat(&mut self) -> Result<Regex, RegexError> {
        let mut parts = Vec::new();
        while let Some(c) = self.peek() {
            if c == '|' || c == ')' {
                break;
            }
            parts.push(self.star()?);
        }
        if parts.is_empty() {
            return Err(RegexError::Syntax(self.i, "empty alternative (write `()`)".into()));
        }
        Ok(cat(parts))
    }

    fn star(&mut self) -> Result<Regex, RegexError> {
        let mut r = self.atom()?;
        while self.peek() == Some('*') {
            self.i += 1;
            r = star(r);
        }
        Ok(r)
    }

    fn atom(&mut self) -> Result<Regex, RegexError> {
        let at = self.i;
        match self.peek() {
            Some('(') => {
                self.i += 1;
                if self.peek() == Some(')') {
                    self.i += 1;
                    return Ok(Regex::Eps);
                }
                let r = self.alt()?;
                if self.peek() != Some(')') {
                    return Err(RegexError::Syntax(self.i, "missing `)`".into()));
                }
                self.i += 1;
                Ok(r)
            }
            Some('[') => {
                if self.s.get(self.i + 1) == Some(&']') {
                    self.i += 2;
                    Ok(Regex::Empty)
                } else {
                    Err(RegexError::Syntax(at, "expected `[]`".into()))
                }
            }
            Some(c) if c == '*' || c == ']' => Err(RegexError::Syntax(at, format!("unexpected `{c}`"))),
            Some(c) => {
                self.i += 1;
                Ok(Regex::Sym(match c {
                    'L' => LEFT,
                    'R' => RIGHT,
                    c => c,
                }))
            }
            None => Err(RegexError::Syntax(at, "unexpected end".into())),
        }
    }
}

/// Simplifying concatenation.
pub fn cat(parts: Vec<Regex>) -> Regex {
    let mut out = Vec::new();
    for p in parts {
        match p {
            Regex::Empty => return Regex::Empty,
            Regex::Eps => {}
            Regex::Cat(v) => out.extend(v),
            p => out.push(p),
        }
    }
    match out.len() {
        0 => Regex::Eps,
        1 => out.pop().unwrap(),
        _ => Regex::Cat(out),
    }
}

/// Simplifying union.
pub fn alt(parts: Vec<Regex>) -> Regex {
    let mut out: Vec<Regex> = Vec::new();
    for p in parts {
        let items = match p {
            Regex::Empty => vec![],
            Regex::Alt(v) => v,
            p => vec![p],
        };
        for i in items {
            if !out.contains(&i) {
                out.push(i);
            }
        }
    }
    // ε is redundant next to a starred alternative.
    if out.iter().any(|r| matches!(r, Regex::Star(_))) {
        out.retain(|r| *r != Regex::Eps);
    }
    match out.len() {
        0 => Regex::Empty,
        1 => out.pop().unwrap(),
        _ => Regex::Alt(out),
    }
}

/// Simplifying Kleene star.
pub fn star(r: Regex) -> Regex {
    match r {
        Regex::Empty | Regex::Eps => Regex::Eps,
        Regex::Star(_) => r,
        r => Regex::Star(Box::new(r)),
    }
}

impl Regex {
    fn build(&self, nfa: &mut Nfa, syms: &[char]) -> Result<(usize, usize), RegexError> {
        let s = nfa.add_state(false);
        let t = nfa.add_state(false);
        match self {
            Regex::Empty => {}
            Regex::Eps => nfa.add_eps(s, t),
            Regex::Sym(c) => {
                let l = syms.iter().position(|x| x == c).ok_or(RegexError::Symbol(*c))?;
                nfa.add(s, l, t);
            }
            Regex::Cat(v) => {
                let mut cur = s;
                for r in v {
                    let (a, b) = r.build(nfa, syms)?;
                    nfa.add_eps(cur, a);
                    cur = b;
                }
                nfa.add_eps(cur, t);
            }
            Regex::Alt(v) => {
                for r in v {
                    let (a, b) = r.build(nfa, syms)?;
                    nfa.add_eps(s, a);
                    nfa.add_eps(b, t);
                }
            }
            Regex::Star(r) => {
                let (a, b) = r.build(nfa, syms)?;
                nfa.add_eps(s, t);
                nfa.add_eps(s, a);
                nfa.add_eps(b, a);
                nfa.add_eps(b, t);
            }
        }
        Ok((s, t))
    }

    /// Minimal automaton over the given symbol list.
    pub fn to_dfa(&self, syms: &[char]) -> Result<CharDfa, RegexError> {
        let mut nfa = Nfa::new(syms.len());
        let (s, t) = self.build(&mut nfa, syms)?;
        nfa.init = vec![s];
        nfa.accept[t] = true;
        Ok(CharDfa::new(syms.to_vec(), nfa.determinize().minimize()))
    }

    /// An expression for the language of `d`, by state elimination.
    pub fn from_dfa(d: &CharDfa) -> Regex {
        let m = d.minimize();
        let dfa = &m.dfa;
        let good = dfa.coreachable();
        let states: Vec<usize> = (0..dfa.states()).filter(|&s| good[s]).collect();
        if states.is_empty() {
            return Regex::Empty;
        }
        // Nodes: 0 = start, 1 = end, 2.. = states.
        let n = states.len() + 2;
        let mut r = vec![vec![Regex::Empty; n]; n];
        let node = |s: usize| states.iter().position(|&t| t == s).map(|i| i + 2);
        r[0][node(dfa.init).unwrap()] = Regex::Eps;
        for &s in &states {
            let i = node(s).unwrap();
            if dfa.accept[s] {
                r[i][1] = Regex::Eps;
            }
            for (l, &c) in m.syms.iter().enumerate() {
                if let Some(j) = node(dfa.trans[s][l]) {
                    r[i][j] = alt(vec![r[i][j].clone(), Regex::Sym(c)]);
                }
            }
        }
        for k in 2..n {
            let loop_k = star(r[k][k].clone());
            for i in 0..n {
                if i == k || r[i][k] == Regex::Empty {
                    continue;
                }
                for j in 0..n {
                    if j == k || r[k][j] == Regex::Empty {
                        continue;
                    }
                    let via = cat(vec![r[i][k].clone(), loop_k.clone(), r[k][j].clone()]);
                    r[i][j] = alt(vec![r[i][j].clone(), via]);
                }
            }
            for row in r.iter_mut() {
                row[k] = Regex::Empty;
            }
            r[k].fill(Regex::Empty);
        }
        r[0][1].clone()
    }
}

impl fmt::Display for Regex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regex::Empty => write!(f, "[]"),
            Regex::Eps => write!(f, "()"),
            Regex::Sym(c) => write!(f, "{}", match *c {
                LEFT => 'L',
                RIGHT => 'R',
                c => c,
            }),
            Regex::Cat(v) => {
                for r in v {
                    if matches!(r, Regex::Alt(_)) {
                        write!(f, "({r})")?;
                    } else {
                        write!(f, "{r}")?;
                    }
                }
                Ok(())
            }
            Regex::Alt(v) => {
                let parts: Vec<String> = v.iter().map(|r| r.to_string()).collect();
                write!(f, "{}", parts.join("|"))
            }
            Regex::Star(r) => match **r {
                Regex::Sym(_) => write!(f, "{r}*"),
                _ => write!(f, "({r})*"),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SYMS: [char; 4] = [LEFT, 'a', 'b', RIGHT];

    #[test]
    fn parses_markers_and_operators() {
        let d = parse("L(a|b)*").unwrap().to_dfa(&SYMS).unwrap();
        assert!(d.accepts(&[LEFT]));
        assert!(d.accepts(&[LEFT, 'a', 'b']));
        assert!(!d.accepts(&['a']));
        let e = parse("()").unwrap().to_dfa(&SYMS).unwrap();
        assert!(e.accepts(&[]) && !e.accepts(&['a']));
        assert!(parse("[]").unwrap().to_dfa(&SYMS).unwrap().is_empty());
    }

    #[test]
    fn syntax_errors() {
        assert!(parse("a|").is_err());
        assert!(parse("(a").is_err());
        assert!(parse("*a").is_err());
        assert_eq!(parse("c").unwrap().to_dfa(&SYMS), Err(RegexError::Symbol('c')));
    }

    #[test]
    fn state_elimination_round_trip() {
        for re in ["L(a|b)*", "(a|b)*R", "a*ba*", "()", "[]", "(ab|b)*a", "L"] {
            let d = parse(re).unwrap().to_dfa(&SYMS).unwrap();
            let back = parse(&Regex::from_dfa(&d).to_string()).unwrap().to_dfa(&SYMS).unwrap();
            assert!(back.equivalent(&d).unwrap(), "{re} -> {}", Regex::from_dfa(&d));
        }
    }
}
