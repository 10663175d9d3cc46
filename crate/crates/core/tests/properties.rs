//! Property tests over random 5-tuple machines and the bundled fixtures.

use std::collections::HashSet;

use proptest::prelude::*;

use twoway::finite_visit::{decompose_finite_visit, detect_output_loop, extract_track, validate_track};
use twoway::fixtures;
use twoway::machine::{to_eight_tuple, FiveTuple, Machine, RunResult};
use twoway::sym::{Alphabet, LEFT, RIGHT};

const NAMES: [&str; 4] = ["1", "2", "3", "4"];

#[derive(Clone, Debug)]
struct Table {
    states: usize,
    fin: usize,
    tuples: Vec<FiveTuple>,
}

/// A nearly total table: most (state, symbol) pairs of a non-final state get
/// a tuple, and moves off the markers are rare. The final state is usually
/// distinct from the initial one.
fn table() -> impl Strategy<Value = Table> {
    (2usize..=4, 0..10u8).prop_flat_map(|(n, pick)| {
        let fin = if pick == 0 { 0 } else { n - 1 };
        let syms = [LEFT, 'a', 'b', RIGHT];
        let rows: Vec<_> = (0..n)
            .filter(|&p| p != fin)
            .flat_map(|p| syms.map(|c| (p, c)))
            .map(|(p, c)| {
                let mv = match c {
                    LEFT => prop::sample::select(vec![1i8, 1, 0]).boxed(),
                    RIGHT => prop::sample::select(vec![-1i8, -1, 0]).boxed(),
                    _ => prop::sample::select(vec![-1i8, 0, 1, 1]).boxed(),
                };
                let out = prop::sample::select(vec!["", "", "a", "b", "ab"]);
                prop::option::weighted(0.85, (0..n, out, mv))
                    .prop_map(move |o| o.map(|(q, out, d)| FiveTuple::new(NAMES[p], c, NAMES[q], out, d)))
            })
            .collect();
        rows.prop_map(move |tuples| Table { states: n, fin, tuples: tuples.into_iter().flatten().collect() })
    })
}

fn build(t: &Table, deterministic: bool) -> Machine {
    to_eight_tuple("random", Alphabet::ab(), Alphabet::ab(), &NAMES[..t.states], "1", NAMES[t.fin], &t.tuples, deterministic)
        .expect("states are declared")
}

/// Direct reading of a 5-tuple table: the first tuple matching the state and
/// the scanned symbol fires.
fn run_table(t: &Table, w: &str) -> Option<String> {
    let tape: Vec<char> = std::iter::once(LEFT).chain(w.chars()).chain(std::iter::once(RIGHT)).collect();
    let (mut q, mut pos) = (NAMES[0], 0usize);
    let mut out = String::new();
    let mut seen = HashSet::new();
    loop {
        if q == NAMES[t.fin] {
            return Some(out);
        }
        if !seen.insert((q, pos)) {
            return None;
        }
        let step = t.tuples.iter().find(|s| s.from == q && s.sym == tape[pos])?;
        let next = pos as i64 + i64::from(step.mv);
        if next < 0 || next >= tape.len() as i64 {
            return None;
        }
        out.push_str(&step.out);
        q = NAMES.iter().find(|&&n| n == step.to).expect("declared");
        pos = next as usize;
    }
}

fn word() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(vec!['a', 'b']), 0..6).prop_map(|v| v.into_iter().collect())
}

fn nondeterministic_fixtures() -> Vec<Machine> {
    vec![fixtures::guesser(), fixtures::doubler(), fixtures::copies(), fixtures::ex63()]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn eight_tuple_form_runs_like_the_table(t in table(), w in word()) {
        prop_assert_eq!(build(&t, true).run(&w).unwrap(), run_table(&t, &w));
    }

    #[test]
    fn output_is_bounded_by_visits(t in table(), w in word()) {
        let m = build(&t, true);
        if let Some(z) = m.run(&w).unwrap() {
            let longest = t.tuples.iter().map(|s| s.out.len()).max().unwrap_or(0);
            prop_assert!(z.len() <= (w.len() + 2) * m.states.len() * longest);
        }
    }

    #[test]
    fn normal_forms_keep_the_function(t in table(), w in word()) {
        let m = build(&t, true);
        let z = m.run(&w).unwrap();
        prop_assert_eq!(&m.normalize_short_output().run(&w).unwrap(), &z);
        let s = m.separate_final_state();
        prop_assert_ne!(s.initial, s.fin);
        prop_assert_eq!(&s.run(&w).unwrap(), &z);
    }

    #[test]
    fn tracks_round_trip(t in table(), w in word()) {
        let m = build(&t, true);
        let k = m.states.len();
        if let RunResult::Accepted(c) = m.run_deterministic(&w).unwrap() {
            let track = extract_track(&m, &c).unwrap();
            prop_assert_eq!(track.input(), w.clone());
            prop_assert!(validate_track(&track, &m, k));
            let d = decompose_finite_visit(&m, k).unwrap();
            prop_assert_eq!(d.replay.run(&track), Some(c.output()));
        }
    }

    #[test]
    fn more_visits_never_lose_outputs(t in table(), w in word(), k in 1usize..5) {
        let m = build(&t, false);
        let small = m.enumerate(&w, k).unwrap();
        let large = m.enumerate(&w, k + 1).unwrap();
        prop_assert!(small.is_subset(&large));
    }

    #[test]
    fn state_count_visits_suffice_without_output_loops(t in table(), w in word()) {
        let m = build(&t, false);
        if !detect_output_loop(&m, &w).unwrap() {
            let q = m.states.len();
            prop_assert_eq!(m.enumerate(&w, q).unwrap(), m.enumerate(&w, q + 2).unwrap());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn fixtures_are_monotone_in_visits(i in 0usize..4, n in 0usize..4, k in 1usize..5) {
        let m = &nondeterministic_fixtures()[i];
        let w: String = m.input.symbols().iter().cycle().take(n).collect();
        let small = m.enumerate(&w, k).unwrap();
        prop_assert!(small.is_subset(&m.enumerate(&w, k + 1).unwrap()));
    }
}
