//! Golden tests for the `twoway` binary.

use std::process::Command;

fn fixture(name: &str) -> String {
    format!("{}/../core/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

/// Runs the binary and returns (exit code, stdout, stderr).
fn twoway(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_twoway")).args(args).output().expect("binary runs");
    (
        out.status.code().expect("exited normally"),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

#[test]
fn run_golden_pair() {
    for f in ["ex21.machine", "ex22.machine"] {
        assert_eq!(twoway(&["run", &fixture(f), "aaabbaba"]), (0, "aaabbbaba\n".into(), String::new()));
    }
}

#[test]
fn run_undefined() {
    let (code, out, err) = twoway(&["run", &fixture("corpus/ends_in_a.machine"), "ab"]);
    assert_eq!((code, out.as_str()), (1, "undefined\n"));
    assert!(err.contains("no accepting computation"));
}

#[test]
fn run_refuses_nondeterminism() {
    let (code, _, err) = twoway(&["run", &fixture("guesser.machine"), "a"]);
    assert_eq!(code, 2);
    assert!(err.contains("nondeterministic"));
}

#[test]
fn enumerate_guesses() {
    let (code, out, _) = twoway(&["enumerate", &fixture("guesser.machine"), "aa"]);
    assert_eq!((code, out.as_str()), (0, "aa\nab\nba\nbb\n"));
}

#[test]
fn enumerate_empty_set() {
    let (code, out, _) = twoway(&["enumerate", &fixture("copies.machine"), "ab"]);
    assert_eq!((code, out.as_str()), (1, ""));
}

#[test]
fn compose_and_hennie_agree() {
    let composed = twoway(&["compose", &fixture("guesser.machine"), &fixture("doubler.machine"), "aa"]);
    let hennie = twoway(&["hennie-run", &fixture("hennie_wsharpw.machine"), "aa"]);
    assert_eq!(composed.1, "aa#aa\nab#ab\nba#ba\nbb#bb\n");
    assert_eq!((composed.0, &composed.1), (hennie.0, &hennie.1));
}

#[test]
fn decompose_matches_enumerate() {
    let d = twoway(&["decompose", &fixture("guesser.machine"), "aa"]);
    let e = twoway(&["enumerate", &fixture("guesser.machine"), "aa"]);
    assert_eq!((d.0, d.1), (e.0, e.1));
    assert!(d.2.contains("tracks"));
}

#[test]
fn equiv_finds_least_counterexample() {
    let (code, out, _) = twoway(&["equiv", &fixture("corpus/identity.machine"), &fixture("corpus/erase_b.machine")]);
    assert_eq!(code, 1);
    // Lexicographic, not shortest first.
    assert!(out.starts_with("counterexample \"aaab\"\n"), "{out}");
}

#[test]
fn equiv_of_the_two_examples() {
    let (code, out, _) = twoway(&["equiv", &fixture("ex21.machine"), &fixture("ex22.machine"), "--max-len", "5"]);
    assert_eq!((code, out.as_str()), (0, "equal on 63 inputs up to length 5\n"));
}

#[test]
fn track_of_a_short_run() {
    let (code, out, _) = twoway(&["track", &fixture("ex21.machine"), "ab"]);
    assert_eq!(code, 0);
    assert_eq!(
        out,
        "pos 0 L : (*,0,+1,-) (-1,3,+1,-)\n\
         pos 1 a : (+1,1,+1,a) (-1,3,-1,b) (+1,4,+1,-)\n\
         pos 2 b : (+1,1,0,-) (0,2,-1,-) (+1,4,+1,-)\n\
         pos 3 R : (+1,1,0,-) (0,2,0,-) (0,5,*,-)\n"
    );
}

#[test]
fn compile_formula_describes_the_language() {
    let (code, out, _) = twoway(&["compile-formula", "(ex x (lab a x))"]);
    assert_eq!(code, 0);
    assert_eq!(out, "free: -\nstates: 2\nlanguage: b*a(a|b)*\nshortest: \"a\"\n");
}

#[test]
fn converted_machines_are_equivalent() {
    let dir = std::env::temp_dir().join(format!("twoway-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let ex21 = fixture("ex21.machine");
    let mut prev = ex21.clone();
    for (to, file) in [("gsm-rla", "a.machine"), ("rla-mso", "b.machine"), ("mso-rla", "c.machine")] {
        let out = dir.join(file).to_string_lossy().into_owned();
        assert_eq!(twoway(&["convert", &prev, "--to", to, "-o", &out]).0, 0, "{to}");
        assert_eq!(twoway(&["equiv", &ex21, &out]).0, 0, "{to}");
        prev = out;
    }
    let pipeline = dir.join("p.transduction").to_string_lossy().into_owned();
    assert_eq!(twoway(&["convert", &ex21, "--to", "mso-pipeline", "-o", &pipeline]).0, 0);
    let text = std::fs::read_to_string(&pipeline).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("transduction ")).count(), 3);
    assert_eq!(twoway(&["equiv", &ex21, &pipeline, "--max-len", "3"]).0, 0);
    let back = dir.join("ex41.machine").to_string_lossy().into_owned();
    assert_eq!(twoway(&["convert", &fixture("ex41.transduction"), "--to", "machine", "-o", &back]).0, 0);
    assert_eq!(twoway(&["equiv", &ex21, &back, "--max-len", "3"]).0, 0);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn unsupported_conversion() {
    let (code, _, err) = twoway(&["convert", &fixture("ex21.machine"), "--to", "rla-gsm"]);
    assert_eq!(code, 2);
    assert!(err.contains("unsupported conversion"));
}

#[test]
fn parse_errors_are_usage_errors() {
    let dir = std::env::temp_dir().join(format!("twoway-bad-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let bad = dir.join("bad.machine");
    std::fs::write(&bad, "machine bad\nkind gsm\n").unwrap();
    let (code, _, err) = twoway(&["run", bad.to_str().unwrap(), "a"]);
    assert_eq!(code, 2);
    assert!(err.contains("line 1"), "{err}");
    assert_eq!(twoway(&["run", "/nonexistent/x.machine", "a"]).0, 2);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn equiv_catches_a_mutated_instruction() {
    let text = std::fs::read_to_string(fixture("ex21.machine")).unwrap();
    let mutated = text.replace("inst 3 sym a => 3 b -1", "inst 3 sym a => 3 a -1");
    assert_ne!(text, mutated);
    let path = std::env::temp_dir().join(format!("twoway-mut-{}.machine", std::process::id()));
    std::fs::write(&path, mutated).unwrap();
    let (code, out, _) = twoway(&["equiv", &fixture("ex21.machine"), path.to_str().unwrap()]);
    std::fs::remove_file(&path).unwrap();
    assert_eq!(code, 1);
    assert!(out.starts_with("counterexample \"aaab\"\n"), "{out}");
}

#[test]
fn equiv_on_the_empty_input_only() {
    let (code, out, _) = twoway(&["equiv", &fixture("corpus/identity.machine"), &fixture("corpus/append_a.machine"), "--max-len", "0"]);
    assert_eq!(code, 1);
    assert!(out.starts_with("counterexample \"\"\n"), "{out}");
}
