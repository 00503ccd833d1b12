//! RandSolomon: Byzantine fault-tolerant multi-party random number
//! generation, with a deterministic partially synchronous network simulator
//! and a library of Byzantine adversary strategies.

pub mod codec;
pub mod crypto;
