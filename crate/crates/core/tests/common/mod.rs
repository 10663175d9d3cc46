//! Shared pieces of the MSO test targets.

use twoway::graph::{ngr_raw, Encoding};
use twoway::mso::formula::{self as f, parse, Formula};
use twoway::mso::{check_functional, compile_over, Evaluator, PathMode};
use twoway::sym::{Alphabet, UNLAB};

pub fn words(max: usize) -> Vec<Vec<char>> {
    Alphabet::ab().strings_up_to(max).into_iter().map(|w| w.chars().collect()).collect()
}

pub fn suite() -> Vec<Formula> {
    let mut v: Vec<Formula> = [
        "true",
        "(lab a x)",
        "(ex x (lab a x))",
        "(all x (lab a x))",
        "(ex y (edge * x y))",
        "(ex y (and (edge * y x) (lab b y)))",
        "(all y (path x y))",
        "(ex y (and (path+ x y) (lab b y)))",
        "(exS X (and (in x X) (all y (all z (imp (and (in y X) (edge * y z)) (not (in z X)))))))",
        "(allS X (imp (in x X) (ex y (in y X))))",
        "(ex y (and (lab a y) (not (path y x))))",
        "(or (lab b x) (ex y (and (= x y) (lab a y))))",
        "(imp (lab a x) (ex y (and (edge * x y) (lab a y))))",
    ]
    .iter()
    .map(|s| parse(s))
    .collect();
    v.push(f::string_shape(&[UNLAB]));
    v.push(f::ex("y", f::next_sym('a', "x", "y")));
    v.push(f::ex("y", f::and(f::first_in_segment('a', "x", "y"), f::not(f::eq("x", "y")))));
    v.push(f::ex("y", f::and(f::next_sym('b', "y", "x"), f::lab('a', "y"))));
    v
}

/// Membership in the compiled automaton equals naive evaluation on every
/// string up to `max` and every valuation of `x`.
pub fn node_agreement(phi: &Formula, max: usize) -> Result<(), String> {
    let c = compile_over(phi, &['a', 'b'], Encoding::Node).map_err(|e| e.to_string())?;
    for w in words(max) {
        let g = ngr_raw(&w);
        let mut e = Evaluator::new(&g, PathMode::Expand);
        let vals: Vec<Option<usize>> =
            if phi.free_vars().is_empty() { vec![None] } else { (0..w.len()).map(Some).collect() };
        for u in vals {
            let nodes: Vec<(&str, usize)> = u.map(|u| ("x", u)).into_iter().collect();
            let naive = e.holds(phi, &nodes).map_err(|e| e.to_string())?;
            if c.accepts(&w, &nodes, &[]) != naive {
                return Err(format!("{phi} on {w:?} at {u:?}: naive says {naive}"));
            }
        }
    }
    Ok(())
}

pub fn moves() -> Vec<Formula> {
    [
        "(edge * x y)",
        "(edge * y x)",
        "(= x y)",
        "(path x y)",
        "(lab R y)",
        "(and (path+ x y) (lab a y))",
    ]
    .iter()
    .map(|s| parse(s))
    .chain([f::next_sym('a', "x", "y"), f::first_in_segment('a', "x", "y")])
    .collect()
}

/// `check_functional` against counting targets on every tape up to `max`.
pub fn functionality(phi: &Formula, max: usize) -> Result<(), String> {
    let verdict = check_functional(phi, &Alphabet::ab()).map_err(|e| e.to_string())?;
    let mut brute = true;
    for w in words(max) {
        let tape = twoway::graph::tape(&w);
        let g = ngr_raw(&tape);
        let mut e = Evaluator::new(&g, PathMode::Reach);
        for u in 0..tape.len() {
            let mut hits = 0;
            for t in 0..tape.len() {
                hits += usize::from(e.holds(phi, &[("x", u), ("y", t)]).map_err(|e| e.to_string())?);
            }
            brute &= hits <= 1;
        }
    }
    if verdict.functional != brute {
        return Err(format!("{phi}: checker says {}, brute force {brute}", verdict.functional));
    }
    if let Some((tape, x, y1, y2)) = verdict.witness {
        let g = ngr_raw(&tape);
        let mut e = Evaluator::new(&g, PathMode::Expand);
        let hit = |e: &mut Evaluator, y| e.holds(phi, &[("x", x), ("y", y)]).unwrap_or(false);
        if y1 == y2 || !hit(&mut e, y1) || !hit(&mut e, y2) {
            return Err(format!("{phi}: bad witness {tape:?} {x} {y1} {y2}"));
        }
    }
    Ok(())
}
