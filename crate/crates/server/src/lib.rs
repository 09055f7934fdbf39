//! HTTP service and command line over [`penflow_core`].
//!
//! [`api`] serves datasets, clustering sessions and derived views to the
//! studio UI. [`cli`] runs the same engine in batch over one log file and
//! prints [`report`]s.

pub mod api;
pub mod backend;
pub mod cli;
pub mod error;
pub mod report;
pub mod store;
