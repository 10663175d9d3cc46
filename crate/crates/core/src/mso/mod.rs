//! Monadic second-order logic on graphs and the automata behind it.

pub mod compile;
pub mod dfa;
pub mod encode;
pub mod eval;
pub mod formula;
pub mod regex;

pub use compile::{check_functional, compile, compile_over, Compiled, Functionality};
pub use dfa::{split_single_occurrence, CharDfa, Dfa, Nfa};
pub use eval::{eval, EvalError, Evaluator, PathMode};
pub use formula::{Formula, FormulaError, Kind, Side, Var};
