//! Two-way string transducers and MSO definable string transductions.

pub mod conversions;
pub mod finite_visit;
pub mod fixtures;
pub mod graph;
pub mod machine;
pub mod mso;
pub mod sym;
pub mod transduction;
