//! Type-aware, concolic fuzzing of smart-contract packages.

pub mod concolic;
pub mod engine;
pub mod lexer;
pub mod model;
pub mod oracles;
pub mod parse;
pub mod stdlib;
pub mod synth;
pub mod txn;
pub mod typegraph;
pub mod verify;
pub mod vm;
