//! Deterministic engine for step-by-step arithmetic in a Turing-machine style
//! text representation: parsing, symbolic executors, a call-stack runtime,
//! corpus generation and exact-match evaluation.

pub mod aligner;
pub mod composers;
pub mod datasetgen;
pub mod digits;
pub mod error;
pub mod evalharness;
pub mod machines;
pub mod oracle;
pub mod prompts;
pub mod repr;
pub mod runtime;

pub use digits::DigitString;
pub use error::{Error, ErrorClass, Result};
pub use repr::{Command, MachineState, Op, Role, Snapshot, StepBlock};
