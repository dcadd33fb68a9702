//! File formats, dataset loading, figure export and the command-line
//! front end for `cipnn-core`.

pub mod checkpoint;
pub mod cli;
pub mod datasets;
pub mod export;
pub mod fetch;
pub mod idx;
pub mod metrics;
pub mod pgm;
pub mod selftest;
pub mod sweep;
