//! Std companion to `tourpref-core`: scenario files, traces, the experiment
//! harness and the HTTP service behind the `tourpref` binary.

pub mod harness;
pub mod scenario_file;
pub mod service;
pub mod trace;

pub use tourpref_core as core;
