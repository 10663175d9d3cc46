//! Acceptance checks, one line per criterion.
//!
//! Runs without the libtest harness so the PASS/FAIL lines show up in plain
//! `cargo test` output. Exits nonzero if any criterion fails.

mod common;

use std::collections::BTreeSet;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use twoway::conversions::{dgsm_to_msoe, gsm_to_rla, mso_to_dgsm_mso, mso_to_rla, rla_to_mso};
use twoway::finite_visit::{
    decompose_finite_visit, extract_track, run_hennie, track_automaton, validate_track, Dir, Track, TrackAutomaton,
};
use twoway::fixtures;
use twoway::machine::{Machine, RunResult, Simulator};
use twoway::mso::dfa::exactly_once;
use twoway::mso::{split_single_occurrence, Dfa, Nfa};
use twoway::sym::Alphabet;
use twoway::transduction::{to_node_form, MsoTransduction, Pipeline};

type Check = Result<(), String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn words(sigma: &Alphabet, max: usize) -> Vec<String> {
    sigma.strings_up_to(max)
}

fn visits(m: &Machine) -> usize {
    m.visits.unwrap_or(m.states.len())
}

fn c1_golden_pair() -> Check {
    let w = "aaabbaba";
    let want = Some("aaabbbaba".to_string());
    for m in [fixtures::ex21(), fixtures::ex22()] {
        let got = m.run(w).map_err(|e| e.to_string())?;
        ensure(got == want, || format!("{}: {got:?}", m.name))?;
    }
    Ok(())
}

fn c2_output_table() -> Check {
    let a = |n| "a".repeat(n);
    let table = [
        (a(5), format!("{}c{}b{}c{}b{}", a(5), a(5), a(5), a(5), a(5))),
        ("aaabaa".to_string(), format!("{}b{}c{}b{}c{}", a(6), a(5), a(5), a(5), a(4))),
        ("aaabbaa".to_string(), format!("{}b{}b{}c{}c{}", a(6), a(6), a(5), a(4), a(4))),
        ("aaabbbaa".to_string(), format!("{}b{}b{}c{}c{}", a(6), a(6), a(5), a(4), a(4))),
    ];
    let det = fixtures::ex63_det();
    let dummy = fixtures::ex63();
    for (w, z) in &table {
        let got = det.run(w).map_err(|e| e.to_string())?;
        ensure(got.as_deref() == Some(z.as_str()), || format!("{w}: {got:?}"))?;
        let all = dummy.enumerate(w, dummy.states.len()).map_err(|e| e.to_string())?;
        ensure(all == BTreeSet::from([z.clone()]), || format!("{w}: machine with dummy alternatives gives {all:?}"))?;
    }
    Ok(())
}

fn c3_machines_to_mso() -> Check {
    let corpus = fixtures::dgsm_corpus();
    ensure(corpus.len() >= 10, || format!("corpus has {} machines", corpus.len()))?;
    for m in &corpus {
        let p = dgsm_to_msoe(m).map_err(|e| format!("{}: {e}", m.name))?;
        for w in words(&m.input, 5) {
            let sim: BTreeSet<String> = m.run(&w).map_err(|e| e.to_string())?.into_iter().collect();
            let mso = p.apply_string(&w).map_err(|e| e.to_string())?;
            ensure(sim == mso, || format!("{} on {w:?}: machine {sim:?}, pipeline {mso:?}", m.name))?;
        }
    }
    let back = mso_to_dgsm_mso(&fixtures::ex41()).map_err(|e| e.to_string())?;
    let ex21 = fixtures::ex21();
    for w in words(&Alphabet::ab(), 5) {
        let (x, y) = (back.run(&w).map_err(|e| e.to_string())?, ex21.run(&w).map_err(|e| e.to_string())?);
        ensure(x == y, || format!("ex41 machine on {w:?}: {x:?}, ex21 {y:?}"))?;
    }
    Ok(())
}

fn c4_conversion_chain() -> Check {
    for m in fixtures::dgsm_corpus() {
        let rla = gsm_to_rla(&m).map_err(|e| format!("{}: {e}", m.name))?;
        let mso = rla_to_mso(&rla).map_err(|e| format!("{}: {e}", m.name))?;
        let rla2 = mso_to_rla(&mso).map_err(|e| format!("{}: {e}", m.name))?;
        for w in words(&m.input, 4) {
            let want = m.run(&w).map_err(|e| e.to_string())?;
            for (stage, x) in [("rla", &rla), ("mso", &mso), ("rla2", &rla2)] {
                let got = x.run(&w).map_err(|e| e.to_string())?;
                ensure(got == want, || format!("{} {stage} on {w:?}: {got:?} vs {want:?}", m.name))?;
            }
        }
    }
    Ok(())
}

fn c5_buchi_agreement() -> Check {
    let suite = common::suite();
    ensure(suite.len() >= 15, || format!("suite has {} formulas", suite.len()))?;
    for phi in &suite {
        common::node_agreement(phi, 6)?;
    }
    for phi in common::moves() {
        common::functionality(&phi, 5)?;
    }
    Ok(())
}

/// `l · letter · r` as an automaton.
fn concat(l: &Dfa, letter: usize, r: &Dfa) -> Dfa {
    let mut n = Nfa::new(l.letters);
    let lo = n.embed(l);
    let ro = n.embed(r);
    for s in 0..l.states() {
        n.accept[lo + s] = false;
        if l.accept[s] {
            n.add(lo + s, letter, ro + r.init);
        }
    }
    n.init = vec![lo + l.init];
    n.determinize()
}

fn random_dfa(rng: &mut ChaCha8Rng, letters: usize) -> Dfa {
    let states = rng.gen_range(2..=6);
    let trans: Vec<Vec<usize>> = (0..states).map(|_| (0..letters).map(|_| rng.gen_range(0..states)).collect()).collect();
    let accept: Vec<bool> = (0..states).map(|_| rng.gen_bool(0.5)).collect();
    Dfa::build(letters, states, 0, |s, l| trans[s][l], |s| accept[s])
}

fn c6_splitting() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let delta = [false, false, true, true];
    let mut done = 0;
    let mut tries = 0;
    while done < 12 {
        tries += 1;
        ensure(tries < 10_000, || "could not generate enough nonempty languages".into())?;
        let d = random_dfa(&mut rng, delta.len()).intersect(&exactly_once(&delta)).map_err(|e| e.to_string())?;
        if d.is_empty() {
            continue;
        }
        let pieces = split_single_occurrence(&d, &delta).map_err(|e| e.to_string())?;
        let langs: Vec<Dfa> = pieces.iter().map(|(l, a, r)| concat(l, *a, r)).collect();
        let mut union = Dfa::empty(delta.len());
        for (i, p) in langs.iter().enumerate() {
            for q in &langs[i + 1..] {
                let meet = p.intersect(q).map_err(|e| e.to_string())?;
                ensure(meet.is_empty(), || format!("language {done}: pieces overlap on {:?}", meet.witness()))?;
            }
            union = union.union(p).map_err(|e| e.to_string())?;
        }
        ensure(union.equivalent(&d).map_err(|e| e.to_string())?, || format!("language {done}: union differs"))?;
        done += 1;
    }
    Ok(())
}

fn c7_triangle() -> Check {
    let ex51 = Pipeline::single(fixtures::ex51());
    let (guesser, doubler, hennie) = (fixtures::guesser(), fixtures::doubler(), fixtures::hennie());
    let ab = Alphabet::ab();
    let approx = fixtures::approx();
    for n in 0..=4 {
        let w = "a".repeat(n);
        let target: BTreeSet<String> = words(&ab, n).into_iter().filter(|v| v.len() == n).map(|v| format!("{v}#{v}")).collect();
        let mso = ex51.apply_string(&w).map_err(|e| e.to_string())?;
        let mut composed = BTreeSet::new();
        for mid in guesser.enumerate(&w, visits(&guesser)).map_err(|e| e.to_string())? {
            composed.extend(doubler.enumerate(&mid, visits(&doubler)).map_err(|e| e.to_string())?);
        }
        let h = run_hennie(&hennie, &w).map_err(|e| e.to_string())?;
        ensure(target.len() == 1 << n, || format!("target for n={n} has {} strings", target.len()))?;
        for (who, got) in [("ex51", &mso), ("composition", &composed), ("hennie", &h)] {
            ensure(*got == target, || format!("{who} on a^{n}: {got:?}"))?;
        }
    }
    // The negative side: the single-machine approximation never hits the
    // target sets exactly, whatever the visit bound.
    for k in 1..=8 {
        let mut all_match = true;
        for n in 0..=4 {
            let w = "a".repeat(n);
            let target: BTreeSet<String> =
                words(&ab, n).into_iter().filter(|v| v.len() == n).map(|v| format!("{v}#{v}")).collect();
            all_match &= approx.enumerate(&w, k).map_err(|e| e.to_string())? == target;
        }
        ensure(!all_match, || format!("approx reaches the target with k={k}"))?;
    }
    Ok(())
}

/// Machines whose runs feed the track checks, with their visit bound.
fn track_corpus() -> Vec<(Machine, usize)> {
    let mut v: Vec<(Machine, usize)> = fixtures::dgsm_corpus().into_iter().map(|m| {
        let k = m.states.len();
        (m, k)
    }).collect();
    for m in [fixtures::guesser(), fixtures::doubler(), fixtures::copies(), fixtures::hennie()] {
        let k = visits(&m);
        v.push((m, k));
    }
    v
}

/// One random edit of a track.
fn mutate(t: &Track, m: &Machine, rng: &mut ChaCha8Rng) -> Track {
    let mut t = t.clone();
    let i = rng.gen_range(0..t.seqs.len());
    let seq = &mut t.seqs[i];
    let dirs = [Dir::Star, Dir::Minus, Dir::Zero, Dir::Plus];
    if seq.visits.is_empty() {
        let mut syms = m.tape_symbols();
        syms.retain(|&c| c != seq.sym);
        seq.sym = syms[rng.gen_range(0..syms.len())];
        return t;
    }
    let j = rng.gen_range(0..seq.visits.len());
    match rng.gen_range(0..7) {
        0 => {
            let v = &mut seq.visits[j];
            v.state = (v.state + rng.gen_range(1..m.states.len())) % m.states.len();
        }
        1 => {
            let v = &mut seq.visits[j];
            let d = dirs.iter().copied().filter(|&d| d != v.after).collect::<Vec<_>>();
            v.after = d[rng.gen_range(0..d.len())];
        }
        2 => {
            let v = &mut seq.visits[j];
            let d = dirs.iter().copied().filter(|&d| d != v.before).collect::<Vec<_>>();
            v.before = d[rng.gen_range(0..d.len())];
        }
        3 => {
            let out = m.output.symbols();
            seq.visits[j].out.push(out[rng.gen_range(0..out.len())]);
        }
        4 => {
            seq.visits.remove(j);
        }
        5 => {
            let v = seq.visits[j].clone();
            seq.visits.insert(j, v);
        }
        _ => {
            let mut syms = m.tape_symbols();
            syms.retain(|&c| c != seq.sym);
            seq.sym = syms[rng.gen_range(0..syms.len())];
        }
    }
    t
}

fn c8_tracks() -> Check {
    for (m, k) in track_corpus() {
        let lazy = TrackAutomaton::new(&m, k);
        let nfa = if m.states.len() <= 4 { Some(track_automaton(&m, k).map_err(|e| e.to_string())?) } else { None };
        let d = decompose_finite_visit(&m, k).map_err(|e| e.to_string())?;
        for w in words(&m.input, 4) {
            let mut sim = Simulator::new(&m);
            for c in sim.computations(&w, k).map_err(|e| e.to_string())? {
                let t = extract_track(&m, &c).map_err(|e| format!("{} on {w:?}: {e}", m.name))?;
                ensure(validate_track(&t, &m, k), || format!("{} on {w:?}: track does not validate", m.name))?;
                ensure(lazy.accepts(&t), || format!("{} on {w:?}: automaton rejects the track", m.name))?;
                if let Some(n) = &nfa {
                    ensure(n.accepts(&t), || format!("{} on {w:?}: materialized automaton rejects", m.name))?;
                }
            }
            let want = m.enumerate(&w, k).map_err(|e| e.to_string())?;
            let got = d.apply(&w);
            ensure(got == want, || format!("{} on {w:?}: decomposition {got:?}, enumeration {want:?}", m.name))?;
        }
    }
    // Mutations of deterministic runs. A deterministic machine has at most one
    // valid track per input, so a mutant is valid exactly when it equals the
    // track of the run on its own input.
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let corpus = fixtures::dgsm_corpus();
    let mut rejected = 0;
    let mut tries = 0;
    while rejected < 100 {
        tries += 1;
        ensure(tries < 10_000, || "could not produce 100 invalid mutants".into())?;
        let m = &corpus[rng.gen_range(0..corpus.len())];
        let k = m.states.len();
        let ws = words(&m.input, 4);
        let w = &ws[rng.gen_range(0..ws.len())];
        let RunResult::Accepted(c) = m.run_deterministic(w).map_err(|e| e.to_string())? else {
            continue;
        };
        let t = extract_track(m, &c).map_err(|e| e.to_string())?;
        let bad = mutate(&t, m, &mut rng);
        let own = bad.input();
        let genuine = own.chars().all(|ch| m.input.contains(ch))
            && match m.run_deterministic(&own).map_err(|e| e.to_string())? {
                RunResult::Accepted(c) => extract_track(m, &c).map_err(|e| e.to_string())? == bad,
                RunResult::Undefined(_) => false,
            };
        if genuine {
            continue;
        }
        ensure(!validate_track(&bad, m, k), || format!("{}: validator accepts mutant of {w:?}", m.name))?;
        ensure(!TrackAutomaton::new(m, k).accepts(&bad), || format!("{}: automaton accepts mutant of {w:?}", m.name))?;
        rejected += 1;
    }
    Ok(())
}

fn eps_to_a() -> MsoTransduction {
    "transduction eps_to_a
strings egr egr
copies 1 2
input-labels a b *
output-labels a *
domain (ex x (all y (= y x)))
node 1 * true
node 2 * true
edge 1 2 a true
"
    .parse()
    .expect("literal parses")
}

/// The same map restricted to nonempty inputs, where it sends everything to `a`.
fn nonempty_to_a() -> MsoTransduction {
    "transduction nonempty_to_a
strings egr egr
copies 1 2
input-labels a b *
output-labels a *
domain (ex x (ex y (or (edge a x y) (edge b x y))))
node 1 * (not (ex y (or (edge a y x) (edge b y x))))
node 2 * (not (ex y (or (edge a y x) (edge b y x))))
edge 1 2 a (= x y)
"
    .parse()
    .expect("literal parses")
}

fn c9_empty_input() -> Check {
    let ab = Alphabet::ab();
    let t = Pipeline::single(eps_to_a());
    let on_empty = t.apply_string("").map_err(|e| e.to_string())?;
    ensure(on_empty == BTreeSet::from(["a".to_string()]), || format!("egr form on ε: {on_empty:?}"))?;
    let on_a = t.apply_string("a").map_err(|e| e.to_string())?;
    ensure(on_a.is_empty(), || format!("egr form on a: {on_a:?}"))?;
    ensure(to_node_form(&t, &ab, &ab).is_err(), || "ε ↦ a was accepted in node form".into())?;

    // Node form of the restriction: agrees off ε, but ε leaves the domain.
    let r = Pipeline::single(nonempty_to_a());
    let n = to_node_form(&r, &ab, &ab).map_err(|e| e.to_string())?;
    for w in words(&ab, 3) {
        let (x, y) = (r.apply_string(&w).map_err(|e| e.to_string())?, n.apply_string(&w).map_err(|e| e.to_string())?);
        ensure(x == y, || format!("restriction on {w:?}: egr {x:?}, ngr {y:?}"))?;
        let want = if w.is_empty() { BTreeSet::new() } else { BTreeSet::from(["a".to_string()]) };
        ensure(x == want, || format!("restriction on {w:?}: {x:?}"))?;
    }

    let two = Pipeline::single(fixtures::eps2()).apply_string("").map_err(|e| e.to_string())?;
    ensure(two == BTreeSet::from(["a".to_string(), "b".to_string()]), || format!("eps2 on ε: {two:?}"))
}

fn c10_visit_bound() -> Check {
    let mut corpus = fixtures::dgsm_corpus();
    corpus.push(fixtures::ex22());
    for m in &corpus {
        for w in words(&m.input, 5) {
            if let RunResult::Accepted(c) = m.run_deterministic(&w).map_err(|e| e.to_string())? {
                let most = c.visits().into_iter().max().unwrap_or(0);
                ensure(most <= m.states.len(), || format!("{} on {w:?}: {most} visits", m.name))?;
            }
        }
    }
    Ok(())
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("golden pair", c1_golden_pair),
        ("rearrangement output table", c2_output_table),
        ("machines to MSO and back", c3_machines_to_mso),
        ("gsm -> rla -> mso -> rla", c4_conversion_chain),
        ("compiled formulas agree with evaluation", c5_buchi_agreement),
        ("single-occurrence splitting", c6_splitting),
        ("w#w three ways", c7_triangle),
        ("tracks and decomposition", c8_tracks),
        ("empty input boundary", c9_empty_input),
        ("visit bound of deterministic runs", c10_visit_bound),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let r = check();
        let secs = start.elapsed().as_secs_f64();
        match r {
            Ok(()) => println!("criterion {:2} PASS  {name} ({secs:.1}s)", i + 1),
            Err(e) => {
                failed += 1;
                println!("criterion {:2} FAIL  {name} ({secs:.1}s): {e}", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
