//! Learning heuristic functions for forward search by ranking.
//!
//! The crate covers the whole loop: instance families ([`domains`]), a
//! parametrized best-first engine ([`search`]), ground truth ([`oracle`]),
//! extraction of ranking supervision from optimal plans ([`trace`]), loss
//! functions ([`losses`]), heuristic models ([`models`]), training
//! ([`optim`]), evaluation and reporting ([`harness`]) and named
//! verification cases ([`verify`]).

pub mod domains;
pub mod harness;
pub mod losses;
pub mod models;
pub mod optim;
pub mod oracle;
pub mod search;
pub mod trace;
pub mod verify;

/// Version stamped on every file the crate reads or writes.
pub const FORMAT_VERSION: u32 = 1;
