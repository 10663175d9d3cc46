//! Compiled automata against the naive evaluator.

mod common;

use common::{functionality, moves, node_agreement, suite, words};
use twoway::graph::{egr_raw, ngr_raw, Encoding};
use twoway::mso::formula::{self as f, parse, Formula};
use twoway::mso::{compile_over, Evaluator, PathMode};

#[test]
fn compiled_agrees_with_naive_on_node_strings() {
    for phi in suite() {
        node_agreement(&phi, 6).unwrap();
    }
}

#[test]
fn two_variable_predicates_agree() {
    let syms = ['a', 'b'];
    for phi in [f::next_sym('a', "x", "y"), f::first_in_segment('a', "x", "y"), f::path_plus("x", "y")] {
        let c = compile_over(&phi, &syms, Encoding::Node).unwrap();
        for w in words(5) {
            let g = ngr_raw(&w);
            let mut e = Evaluator::new(&g, PathMode::Expand);
            for u in 0..w.len() {
                for t in 0..w.len() {
                    let naive = e.holds(&phi, &[("x", u), ("y", t)]).unwrap();
                    assert_eq!(c.accepts(&w, &[("x", u), ("y", t)], &[]), naive, "{phi} on {w:?} at {u},{t}");
                }
            }
        }
    }
}

#[test]
fn compiled_agrees_with_naive_on_edge_strings() {
    let syms = ['a', 'b'];
    let suite: Vec<Formula> = [
        "(ex y (edge a x y))",
        "(all x (all y (imp (edge b x y) (ex z (edge a y z)))))",
        "(lab * x)",
        "(ex y (and (path-in (a) x y) (not (= x y))))",
        "(all y (path x y))",
    ]
    .iter()
    .map(|s| parse(s))
    .collect();
    for phi in suite {
        let c = compile_over(&phi, &syms, Encoding::Edge).unwrap();
        for w in words(5) {
            let g = egr_raw(&w);
            let mut e = Evaluator::new(&g, PathMode::Expand);
            if phi.free_vars().is_empty() {
                assert_eq!(c.accepts(&w, &[], &[]), e.holds(&phi, &[]).unwrap(), "{phi} on {w:?}");
            } else {
                for u in 0..=w.len() {
                    let naive = e.holds(&phi, &[("x", u)]).unwrap();
                    assert_eq!(c.accepts(&w, &[("x", u)], &[]), naive, "{phi} on {w:?} at {u}");
                }
            }
        }
    }
}

#[test]
fn functionality_matches_brute_force() {
    for phi in moves() {
        functionality(&phi, 5).unwrap();
    }
}
