//! `twoway`: run, compare and convert two-way machines and MSO transductions.
//!
//! Exit codes: 0 on success, 1 for an undefined result or a counterexample,
//! 2 for unreadable input or misuse.

use std::collections::BTreeSet;
use std::fs;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use twoway::conversions;
use twoway::finite_visit::{self, decompose_finite_visit, extract_track};
use twoway::graph::Encoding;
use twoway::machine::{Machine, MachineKind, RunResult, Simulator};
use twoway::mso::regex::Regex;
use twoway::mso::{compile, Formula};
use twoway::sym::Alphabet;
use twoway::transduction::Pipeline;

#[derive(Parser)]
#[command(name = "twoway", version, about = "Two-way string transducers and MSO string transductions")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a deterministic machine.
    Run {
        machine: String,
        input: String,
        /// Check the normal-form conditions first.
        #[arg(long)]
        kind_check: bool,
    },
    /// All outputs of a machine with at most `k` visits per cell.
    Enumerate {
        machine: String,
        input: String,
        #[arg(long)]
        visits: Option<usize>,
    },
    /// Convert a machine or transduction.
    Convert {
        file: String,
        /// gsm-rla, rla-mso, mso-rla, mso-pipeline or machine.
        #[arg(long)]
        to: String,
        #[arg(short, long)]
        output: Option<String>,
    },
    /// Outputs of one file fed into another.
    Compose {
        first: String,
        second: String,
        input: String,
        #[arg(long)]
        visits: Option<usize>,
    },
    /// Compare two specs on every input up to a length.
    Equiv {
        a: String,
        b: String,
        #[arg(long, default_value_t = 4)]
        max_len: usize,
        #[arg(long, default_value = "ab")]
        alphabet: String,
        #[arg(long)]
        visits: Option<usize>,
    },
    /// Tracks of the accepting computations on an input.
    Track {
        machine: String,
        input: String,
        #[arg(long)]
        visits: Option<usize>,
    },
    /// Compile a formula to an automaton and describe it.
    CompileFormula {
        formula: String,
        #[arg(long, default_value = "ab")]
        alphabet: String,
        /// ngr or egr.
        #[arg(long, default_value = "ngr")]
        encoding: String,
    },
    /// Outputs through the relabelling and replay decomposition.
    Decompose {
        machine: String,
        input: String,
        #[arg(long)]
        visits: Option<usize>,
    },
    /// Run a Hennie machine within its declared visit bound.
    HennieRun { machine: String, input: String },
}

/// Failure with an exit code and a message for stderr.
struct Fail(u8, String);

fn usage(msg: impl ToString) -> Fail {
    Fail(2, msg.to_string())
}

type Res<T> = Result<T, Fail>;

enum Source {
    Machine(Machine),
    Pipeline(Pipeline),
}

fn read(path: &str) -> Res<String> {
    fs::read_to_string(path).map_err(|e| usage(format!("{path}: {e}")))
}

fn first_keyword(text: &str) -> Option<&str> {
    text.lines()
        .map(|l| l.split('%').next().unwrap_or("").trim())
        .find(|l| !l.is_empty())
        .and_then(|l| l.split_whitespace().next())
}

fn load(path: &str) -> Res<Source> {
    let text = read(path)?;
    if first_keyword(&text) == Some("machine") {
        return load_machine(path).map(Source::Machine);
    }
    text.parse().map(Source::Pipeline).map_err(|e| usage(format!("{path}: {e}")))
}

fn load_machine(path: &str) -> Res<Machine> {
    read(path)?.parse().map_err(|e| usage(format!("{path}: {e}")))
}

fn default_visits(m: &Machine, k: Option<usize>) -> usize {
    k.or(m.visits).unwrap_or(m.states.len())
}

fn outputs(src: &Source, w: &str, k: Option<usize>) -> Res<BTreeSet<String>> {
    match src {
        Source::Machine(m) if m.is_deterministic() && m.kind != MachineKind::Hennie => {
            Ok(m.run(w).map_err(usage)?.into_iter().collect())
        }
        Source::Machine(m) => m.enumerate(w, default_visits(m, k)).map_err(usage),
        Source::Pipeline(p) => p.apply_string(w).map_err(usage),
    }
}

fn print_set(s: &BTreeSet<String>) -> u8 {
    for o in s {
        println!("{o}");
    }
    u8::from(s.is_empty())
}

fn show(s: &BTreeSet<String>) -> String {
    let items: Vec<String> = s.iter().map(|o| format!("{o:?}")).collect();
    format!("{{{}}}", items.join(", "))
}

fn alphabet(s: &str) -> Res<Alphabet> {
    Alphabet::new(s.chars()).map_err(usage)
}

fn dispatch(cmd: Cmd) -> Res<u8> {
    match cmd {
        Cmd::Run { machine, input, kind_check } => {
            let m = load_machine(&machine)?;
            if kind_check {
                let r = m.validate();
                if !r.ok() {
                    return Err(usage(format!("{machine}: {:?}", r)));
                }
            }
            if !m.is_deterministic() {
                return Err(usage(format!("{machine}: machine is nondeterministic; use `enumerate`")));
            }
            match m.run_deterministic(&input).map_err(usage)? {
                RunResult::Accepted(c) => {
                    println!("{}", c.output());
                    Ok(0)
                }
                RunResult::Undefined(why) => {
                    println!("undefined");
                    eprintln!("no accepting computation ({why})");
                    Ok(1)
                }
            }
        }
        Cmd::Enumerate { machine, input, visits } => {
            let m = load_machine(&machine)?;
            Ok(print_set(&m.enumerate(&input, default_visits(&m, visits)).map_err(usage)?))
        }
        Cmd::Convert { file, to, output } => {
            let text = convert(&file, &to)?;
            match output {
                Some(path) => fs::write(&path, text).map_err(|e| usage(format!("{path}: {e}")))?,
                None => print!("{text}"),
            }
            Ok(0)
        }
        Cmd::Compose { first, second, input, visits } => {
            let (a, b) = (load(&first)?, load(&second)?);
            let mut all = BTreeSet::new();
            for mid in outputs(&a, &input, visits)? {
                all.extend(outputs(&b, &mid, visits)?);
            }
            Ok(print_set(&all))
        }
        Cmd::Equiv { a, b, max_len, alphabet: sigma, visits } => {
            let (sa, sb) = (load(&a)?, load(&b)?);
            let sigma = alphabet(&sigma)?;
            let inputs = sigma.strings_up_to(max_len);
            // Report the lexicographically least differing input.
            let mut found: Option<(String, BTreeSet<String>, BTreeSet<String>)> = None;
            for w in &inputs {
                let (oa, ob) = (outputs(&sa, w, visits)?, outputs(&sb, w, visits)?);
                if oa != ob && found.as_ref().is_none_or(|(v, _, _)| w < v) {
                    found = Some((w.clone(), oa, ob));
                }
            }
            match found {
                None => {
                    println!("equal on {} inputs up to length {max_len}", inputs.len());
                    Ok(0)
                }
                Some((w, oa, ob)) => {
                    println!("counterexample {w:?}");
                    println!("  {a}: {}", show(&oa));
                    println!("  {b}: {}", show(&ob));
                    Ok(1)
                }
            }
        }
        Cmd::Track { machine, input, visits } => {
            let m = load_machine(&machine)?;
            let k = default_visits(&m, visits);
            let mut tracks = BTreeSet::new();
            for c in Simulator::new(&m).computations(&input, k).map_err(usage)? {
                tracks.insert(extract_track(&m, &c).map_err(usage)?);
            }
            for (i, t) in tracks.iter().enumerate() {
                if i > 0 {
                    println!();
                }
                print!("{}", t.render(&m));
            }
            Ok(u8::from(tracks.is_empty()))
        }
        Cmd::CompileFormula { formula, alphabet: sigma, encoding } => {
            let phi: Formula = formula.parse().map_err(usage)?;
            let enc = Encoding::parse(&encoding).ok_or_else(|| usage(format!("unknown encoding `{encoding}`")))?;
            let c = compile(&phi, &alphabet(&sigma)?, enc).map_err(usage)?;
            let vars: Vec<&str> = c.vars.iter().map(|v| &**v).collect();
            println!("free: {}", if vars.is_empty() { "-".to_string() } else { vars.join(" ") });
            println!("states: {}", c.dfa.minimize().states());
            if let Some(lang) = c.language() {
                println!("language: {}", Regex::from_dfa(&lang));
                match lang.dfa.witness() {
                    Some(w) => println!("shortest: {:?}", w.iter().map(|&l| lang.syms[l]).collect::<String>()),
                    None => println!("shortest: none"),
                }
            }
            Ok(0)
        }
        Cmd::Decompose { machine, input, visits } => {
            let m = load_machine(&machine)?;
            let k = default_visits(&m, visits);
            let d = decompose_finite_visit(&m, k).map_err(usage)?;
            let tracks = d.tracks(&input);
            eprintln!("{} tracks", tracks.len());
            let outs: BTreeSet<String> = tracks.iter().filter_map(|t| d.replay.run(t)).collect();
            Ok(print_set(&outs))
        }
        Cmd::HennieRun { machine, input } => {
            let m = load_machine(&machine)?;
            Ok(print_set(&finite_visit::run_hennie(&m, &input).map_err(usage)?))
        }
    }
}

fn convert(file: &str, to: &str) -> Res<String> {
    let text = read(file)?;
    let is_machine = first_keyword(&text) == Some("machine");
    let m = || load_machine(file);
    let conv = |e: conversions::ConvertError| usage(format!("{file}: {e}"));
    Ok(match (to, is_machine) {
        ("gsm-rla", true) => conversions::gsm_to_rla(&m()?).map_err(conv)?.to_string(),
        ("rla-mso", true) => conversions::rla_to_mso(&m()?).map_err(conv)?.to_string(),
        ("mso-rla", true) => conversions::mso_to_rla(&m()?).map_err(conv)?.to_string(),
        ("mso-pipeline", true) => {
            let m = m()?;
            if m.kind != MachineKind::Gsm || !m.is_deterministic() {
                return Err(usage(format!("{file}: --to mso-pipeline expects a deterministic gsm")));
            }
            let n = m.normalize_short_output().separate_final_state();
            conversions::dgsm_to_mso_pipeline(&n).map_err(conv)?.to_string()
        }
        ("machine", false) => {
            let p: Pipeline = text.parse().map_err(|e| usage(format!("{file}: {e}")))?;
            let [t] = p.stages()[..] else {
                return Err(usage(format!("{file}: expected a single transduction")));
            };
            match t.strings.map(|(i, o)| (i.name(), o.name())) {
                Some(("egr", "egr")) => {
                    let sigma = Alphabet::new(t.input_labels.iter().copied().filter(|&c| c != twoway::sym::UNLAB))
                        .map_err(usage)?;
                    conversions::msoe_to_dgsm(t, &sigma).map_err(conv)?.to_string()
                }
                _ => conversions::mso_to_dgsm_mso(t).map_err(conv)?.to_string(),
            }
        }
        ("gsm-rla" | "rla-mso" | "mso-rla" | "mso-pipeline", false) => {
            return Err(usage(format!("--to {to} expects a machine file")));
        }
        ("machine", true) => return Err(usage("--to machine expects a transduction file")),
        _ => {
            return Err(usage(format!(
                "unsupported conversion `{to}`; the constructive directions are gsm-rla, rla-mso, mso-rla, mso-pipeline and machine (transduction to machine); going back from look-around or MSO machines to plain gsm's is not implemented"
            )))
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(code) => ExitCode::from(code),
        Err(Fail(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
