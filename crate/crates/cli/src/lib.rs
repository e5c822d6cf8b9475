//! Batch front-end for `xrsched-core`: experiment documents, scheduler x
//! drop runs with file output, and binary channel traces.

pub mod config;
pub mod experiment;
pub mod output;
pub mod trace;
