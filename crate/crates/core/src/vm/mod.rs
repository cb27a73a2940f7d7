//! Deterministic execution of transactions over a resettable world state.

pub mod arith;
pub mod coverage;
pub mod interp;
pub mod program;
pub mod shadow;
pub mod state;
pub mod value;

pub use coverage::CoverageMap;
pub use interp::{execute, run_initializers, ExecOptions, ExecResult, ExecTrace, Status, DEFAULT_GAS_LIMIT};
pub use program::Program;
pub use state::{parse_genesis, Object, Owner, WorldState};
pub use value::Value;
