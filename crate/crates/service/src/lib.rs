//! Operational surface for the advice models: a directory-backed model
//! registry, an in-memory session store with an event log, the `/v1` HTTP
//! API and the `blocks-advice` command line.

pub mod api;
pub mod cli;
pub mod registry;
pub mod store;
