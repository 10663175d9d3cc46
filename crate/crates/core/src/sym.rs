//! Reserved symbols and the token spelling used by every text format.

use std::fmt;

use thiserror::Error;

/// Left tape marker.
pub const LEFT: char = '⊢';
/// Right tape marker.
pub const RIGHT: char = '⊣';
/// The "unlabel" of nodes and edges.
pub const UNLAB: char = '*';
/// Edge label standing for the empty output in computation spaces.
pub const EPS: char = 'ε';
/// Node label of the initial configuration in a computation space.
pub const INIT: char = '▸';
/// Node label of final configurations in a computation space.
pub const FIN: char = '◂';
/// End-of-string token used when compiling formulas over edge-labelled strings.
pub const END: char = '$';

/// Characters that can never be members of an input or output alphabet.
pub const RESERVED: [char; 10] = [LEFT, RIGHT, UNLAB, EPS, INIT, FIN, END, 'L', 'R', '-'];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SymError {
    #[error("unknown symbol token `{0}`")]
    Unknown(String),
    #[error("symbol `{0}` is reserved")]
    Reserved(char),
    #[error("alphabet must not be empty")]
    Empty,
    #[error("duplicate symbol `{0}` in alphabet")]
    Duplicate(char),
}

/// Renders a symbol as a single whitespace-free token.
pub fn token(c: char) -> String {
    match c {
        LEFT => "L".into(),
        RIGHT => "R".into(),
        EPS => "eps".into(),
        INIT => "init".into(),
        FIN => "fin".into(),
        _ => c.to_string(),
    }
}

/// Inverse of [`token`].
pub fn parse_token(s: &str) -> Result<char, SymError> {
    match s {
        "L" => Ok(LEFT),
        "R" => Ok(RIGHT),
        "eps" => Ok(EPS),
        "init" => Ok(INIT),
        "fin" => Ok(FIN),
        _ => {
            let mut it = s.chars();
            match (it.next(), it.next()) {
                (Some(c), None) if !c.is_whitespace() && c != '(' && c != ')' => Ok(c),
                _ => Err(SymError::Unknown(s.to_string())),
            }
        }
    }
}

/// Renders a string with markers spelled as `L`/`R`, e.g. `LabR`.
pub fn render(w: &[char]) -> String {
    w.iter()
        .map(|&c| match c {
            LEFT => 'L',
            RIGHT => 'R',
            c => c,
        })
        .collect()
}

/// An ordered, duplicate-free set of ordinary symbols.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Alphabet {
    symbols: Vec<char>,
}

impl Alphabet {
    pub fn new(symbols: impl IntoIterator<Item = char>) -> Result<Self, SymError> {
        let mut out: Vec<char> = Vec::new();
        for c in symbols {
            if RESERVED.contains(&c) || c.is_whitespace() || c == '(' || c == ')' {
                return Err(SymError::Reserved(c));
            }
            if out.contains(&c) {
                return Err(SymError::Duplicate(c));
            }
            out.push(c);
        }
        if out.is_empty() {
            return Err(SymError::Empty);
        }
        out.sort_unstable();
        Ok(Alphabet { symbols: out })
    }

    /// Parses `"ab"` or `"a b"` style alphabet descriptions.
    pub fn parse(s: &str) -> Result<Self, SymError> {
        Alphabet::new(s.chars().filter(|c| !c.is_whitespace() && *c != ','))
    }

    pub fn ab() -> Self {
        Alphabet { symbols: vec!['a', 'b'] }
    }

    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    pub fn contains(&self, c: char) -> bool {
        self.symbols.contains(&c)
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// The symbols plus both tape markers, in a fixed order.
    pub fn with_markers(&self) -> Vec<char> {
        let mut v = vec![LEFT];
        v.extend_from_slice(&self.symbols);
        v.push(RIGHT);
        v
    }

    /// All strings of length at most `max_len`, shortest first, then lexicographic.
    pub fn strings_up_to(&self, max_len: usize) -> Vec<String> {
        let mut out = vec![String::new()];
        let mut layer = vec![String::new()];
        for _ in 0..max_len {
            let mut next = Vec::new();
            for w in &layer {
                for &c in &self.symbols {
                    let mut v = w.clone();
                    v.push(c);
                    next.push(v);
                }
            }
            out.extend(next.iter().cloned());
            layer = next;
        }
        out
    }
}

impl fmt::Display for Alphabet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.symbols.iter().map(|&c| token(c)).collect();
        write!(f, "{}", parts.join(" "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_round_trip() {
        for c in [LEFT, RIGHT, EPS, INIT, FIN, UNLAB, 'a', '#'] {
            assert_eq!(parse_token(&token(c)).unwrap(), c);
        }
        assert!(parse_token("ab").is_err());
    }

    #[test]
    fn alphabet_rejects_markers() {
        assert_eq!(Alphabet::parse("aL"), Err(SymError::Reserved('L')));
        assert_eq!(Alphabet::parse(""), Err(SymError::Empty));
        assert_eq!(Alphabet::parse("aa"), Err(SymError::Duplicate('a')));
        assert_eq!(Alphabet::parse("ba").unwrap().symbols(), &['a', 'b']);
    }

    #[test]
    fn enumeration_order() {
        let s = Alphabet::ab().strings_up_to(2);
        assert_eq!(s, vec!["", "a", "b", "aa", "ab", "ba", "bb"]);
    }
}
