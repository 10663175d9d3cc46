//! Automata written back as closed formulas, one set variable per state.
//!
//! `Q_s` collects the positions after which the automaton is in state `s`.
//! States that cannot reach acceptance get no variable: a run through them
//! has no valuation, which is exactly rejection.

use super::dfa::CharDfa;
use super::formula::{self as f, Formula};
use crate::sym::UNLAB;

fn useful_states(d: &CharDfa) -> (CharDfa, Vec<usize>) {
    let m = d.minimize();
    let good = m.dfa.coreachable();
    let states = (0..m.dfa.states()).filter(|&s| good[s]).collect();
    (m, states)
}

fn partition(names: &[String]) -> Formula {
    let cases = (0..names.len()).map(|i| {
        f::and_all(
            (0..names.len()).map(|j| if i == j { f::mem("u", &names[j]) } else { f::not(f::mem("u", &names[j])) }),
        )
    });
    f::all("u", f::or_all(cases))
}

fn quantify(names: &[String], body: Formula) -> Formula {
    names.iter().rev().fold(body, |acc, n| f::ex_set(n, acc))
}

/// Closed formula true on `ngr(w)` iff `w ∈ L(d)`.
pub fn node_formula(d: &CharDfa) -> Formula {
    let (m, states) = useful_states(d);
    if states.is_empty() {
        return f::ff();
    }
    let idx = |s: usize| states.iter().position(|&t| t == s);
    let names: Vec<String> = (0..states.len()).map(|i| format!("Q{i}")).collect();
    let dfa = &m.dfa;
    let after = |s: usize, var: &str| {
        f::or_all(m.syms.iter().enumerate().filter_map(|(l, &c)| {
            idx(dfa.trans[s][l]).map(|t| f::and(f::lab(c, var), f::mem(var, &names[t])))
        }))
    };
    let first = f::all("u", f::imp(f::not(f::ex("v", f::edge(UNLAB, "v", "u"))), after(dfa.init, "u")));
    let step = f::all(
        "u",
        f::all(
            "v",
            f::imp(
                f::edge(UNLAB, "u", "v"),
                f::or_all(states.iter().enumerate().map(|(i, &s)| f::and(f::mem("u", &names[i]), after(s, "v")))),
            ),
        ),
    );
    let last = f::all(
        "u",
        f::imp(
            f::not(f::ex("v", f::edge(UNLAB, "u", "v"))),
            f::or_all(states.iter().enumerate().filter(|(_, &s)| dfa.accept[s]).map(|(i, _)| f::mem("u", &names[i]))),
        ),
    );
    let body = quantify(&names, f::and_all([partition(&names), first, step, last]));
    if dfa.accept[dfa.init] {
        body
    } else {
        f::and(f::ex("u", f::tt()), body)
    }
}

/// Closed formula true on `egr(w)` iff `w ∈ L(d)`.
pub fn edge_formula(d: &CharDfa) -> Formula {
    let (m, states) = useful_states(d);
    let idx = |s: usize| states.iter().position(|&t| t == s);
    let dfa = &m.dfa;
    let Some(init) = idx(dfa.init) else {
        return f::ff();
    };
    let names: Vec<String> = (0..states.len()).map(|i| format!("Q{i}")).collect();
    let first = f::all("u", f::imp(f::not(f::ex("v", f::edge_any(&m.syms, "v", "u"))), f::mem("u", &names[init])));
    let step = f::and_all(m.syms.iter().enumerate().map(|(l, &c)| {
        f::all(
            "u",
            f::all(
                "v",
                f::imp(
                    f::edge(c, "u", "v"),
                    f::or_all(states.iter().enumerate().filter_map(|(i, &s)| {
                        idx(dfa.trans[s][l]).map(|t| f::and(f::mem("u", &names[i]), f::mem("v", &names[t])))
                    })),
                ),
            ),
        )
    }));
    let last = f::all(
        "u",
        f::imp(
            f::not(f::ex("v", f::edge_any(&m.syms, "u", "v"))),
            f::or_all(states.iter().enumerate().filter(|(_, &s)| dfa.accept[s]).map(|(i, _)| f::mem("u", &names[i]))),
        ),
    );
    quantify(&names, f::and_all([partition(&names), first, step, last]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Encoding;
    use crate::mso::compile::compile_over;
    use crate::mso::regex;

    fn check(re: &str, enc: Encoding) {
        let syms = ['a', 'b'];
        let d = regex::parse(re).unwrap().to_dfa(&syms).unwrap();
        let phi = match enc {
            Encoding::Node => node_formula(&d),
            Encoding::Edge => edge_formula(&d),
        };
        let back = compile_over(&phi, &syms, enc).unwrap().language().unwrap();
        assert!(back.equivalent(&d).unwrap(), "{re}");
    }

    #[test]
    fn round_trips_through_the_compiler() {
        for re in ["(a|b)*", "a*b", "()", "[]", "(ab)*", "a(a|b)*b|b"] {
            check(re, Encoding::Node);
            check(re, Encoding::Edge);
        }
    }
}
