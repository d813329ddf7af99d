//! Opcode-level signature generation and analytics for disassembled
//! mobile apps: three-level signatures (method, class, application),
//! similarity scoring, permission rollups, repackaging clustering, and
//! a small append-only signature store.

pub mod analytics;
pub mod apitable;
pub mod callgraph;
pub mod error;
pub mod hash;
pub mod ingest;
pub mod ir;
pub mod mutator;
pub mod signature;
pub mod store;
pub mod synth;
pub mod zeroday;

pub use error::{Error, Result};
pub use hash::HashAlg;
