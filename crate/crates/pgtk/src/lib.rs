//! File formats, command-line tools and benchmarking for `pgtk-core`.

pub mod bench;
pub mod cli;
pub mod config;
pub mod container;
pub mod dataset;
pub mod pgm;
pub mod wav;
