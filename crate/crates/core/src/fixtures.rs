//! Example machines and transductions shipped with the crate.

use crate::machine::{to_eight_tuple, FiveTuple, Machine};
use crate::sym::{Alphabet, LEFT, RIGHT};
use crate::transduction::MsoTransduction;

pub const EX21: &str = include_str!("../fixtures/ex21.machine");
pub const EX22: &str = include_str!("../fixtures/ex22.machine");
pub const EX63: &str = include_str!("../fixtures/ex63.machine");
pub const EX41: &str = include_str!("../fixtures/ex41.transduction");
pub const EX41_LITERAL: &str = include_str!("../fixtures/ex41_literal.transduction");
pub const EX51: &str = include_str!("../fixtures/ex51.transduction");
pub const EPS2: &str = include_str!("../fixtures/eps2.transduction");
pub const HENNIE: &str = include_str!("../fixtures/hennie_wsharpw.machine");
pub const GUESSER: &str = include_str!("../fixtures/guesser.machine");
pub const DOUBLER: &str = include_str!("../fixtures/doubler.machine");
pub const APPROX: &str = include_str!("../fixtures/approx.machine");
pub const COPIES: &str = include_str!("../fixtures/copies.machine");

pub const CORPUS: &[(&str, &str)] = &[
    ("identity", include_str!("../fixtures/corpus/identity.machine")),
    ("swap", include_str!("../fixtures/corpus/swap.machine")),
    ("reverse", include_str!("../fixtures/corpus/reverse.machine")),
    ("square", include_str!("../fixtures/corpus/square.machine")),
    ("mirror", include_str!("../fixtures/corpus/mirror.machine")),
    ("erase_b", include_str!("../fixtures/corpus/erase_b.machine")),
    ("ends_in_a", include_str!("../fixtures/corpus/ends_in_a.machine")),
    ("first_power", include_str!("../fixtures/corpus/first_power.machine")),
    ("append_a", include_str!("../fixtures/corpus/append_a.machine")),
    ("bb_loops", include_str!("../fixtures/corpus/bb_loops.machine")),
];

fn machine(text: &str) -> Machine {
    text.parse().unwrap_or_else(|e| panic!("bundled fixture does not parse: {e}"))
}

fn transduction(text: &str) -> MsoTransduction {
    text.parse().unwrap_or_else(|e| panic!("bundled fixture does not parse: {e}"))
}

pub fn ex21() -> Machine {
    machine(EX21)
}

pub fn ex22() -> Machine {
    machine(EX22)
}

/// The rearrangement machine as a file, with dummy alternatives.
pub fn ex63() -> Machine {
    machine(EX63)
}

/// The 5-tuple matrix of the rearrangement machine, row by row.
pub fn ex63_tuples() -> Vec<FiveTuple> {
    let t = FiveTuple::new;
    vec![
        t("1", LEFT, "1", "", 1),
        t("1", 'a', "1", "a", 1),
        t("1", 'b', "2", "", -1),
        t("1", RIGHT, "2", "c", 0),
        t("2", LEFT, "3", "b", 0),
        t("2", 'a', "2", "a", -1),
        t("2", 'b', "4", "", -1),
        t("2", RIGHT, "2", "", -1),
        t("3", LEFT, "3", "", 1),
        t("3", 'a', "3", "a", 1),
        t("3", 'b', "1", "", 1),
        t("3", RIGHT, "4", "c", 0),
        t("4", LEFT, "5", "b", 0),
        t("4", 'a', "4", "a", -1),
        t("4", 'b', "5", "", 1),
        t("4", RIGHT, "4", "", -1),
        t("5", LEFT, "5", "", 1),
        t("5", 'a', "5", "a", 1),
        t("5", 'b', "3", "", 1),
        t("5", RIGHT, "6", "", 0),
    ]
}

fn ex63_with(deterministic: bool) -> Machine {
    let out = Alphabet::new(['a', 'b', 'c']).unwrap();
    to_eight_tuple("ex63", Alphabet::ab(), out, &["1", "2", "3", "4", "5", "6"], "1", "6", &ex63_tuples(), deterministic)
        .expect("matrix states are declared")
}

/// The rearrangement machine made deterministic, alternatives tried in sequence.
pub fn ex63_det() -> Machine {
    ex63_with(true)
}

/// The rearrangement machine built from the matrix with dummy alternatives.
pub fn ex63_dummy() -> Machine {
    ex63_with(false)
}

pub fn ex41() -> MsoTransduction {
    transduction(EX41)
}

/// The running example transduction with the nested edge formulas read
/// without copy guards.
pub fn ex41_literal() -> MsoTransduction {
    transduction(EX41_LITERAL)
}

pub fn ex51() -> MsoTransduction {
    transduction(EX51)
}

pub fn eps2() -> MsoTransduction {
    transduction(EPS2)
}

pub fn hennie() -> Machine {
    machine(HENNIE)
}

pub fn guesser() -> Machine {
    machine(GUESSER)
}

pub fn doubler() -> Machine {
    machine(DOUBLER)
}

pub fn approx() -> Machine {
    machine(APPROX)
}

pub fn copies() -> Machine {
    machine(COPIES)
}

/// Deterministic gsm corpus: the running example, the rearrangement machine
/// and the bundled list.
pub fn dgsm_corpus() -> Vec<Machine> {
    let mut v = vec![ex21(), ex63_det()];
    v.extend(CORPUS.iter().map(|(_, t)| machine(t)));
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_fixtures_parse() {
        for m in dgsm_corpus() {
            assert!(m.is_deterministic(), "{}", m.name);
        }
        ex22();
        hennie();
        guesser();
        doubler();
        approx();
        copies();
        ex41();
        ex41_literal();
        ex51();
        eps2();
    }

    #[test]
    fn matrix_file_matches_construction() {
        assert_eq!(ex63().insts, ex63_dummy().insts);
    }
}
