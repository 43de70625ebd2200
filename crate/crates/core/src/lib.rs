//! Provenance-aware reachability analysis for native code shipped in
//! Python wheels.
//!
//! The pipeline runs in five stages, each in its own module:
//!
//! 1. [`pkgmeta`] resolves the Python dependency tree from wheel metadata.
//! 2. [`elfscan`] expands every package into a tree of ELF binaries.
//! 3. [`provdb`] and [`upstream`] tag each binary with its provenance.
//! 4. [`xecg`] stitches per-unit call graphs into one cross-ecosystem graph.
//! 5. [`vulnreach`] matches provenance against vulnerability records and
//!    searches the graph for call chains reaching vulnerable symbols.
//!
//! [`pipeline`] wires the stages together; [`synth`] builds the synthetic
//! ELF objects, wheels and OS package archives used by the test-suite.

pub mod diag;
pub mod elfscan;
pub mod pipeline;
pub mod pkgmeta;
pub mod provdb;
pub mod synth;
pub mod upstream;
pub mod versioncmp;
pub mod vulnreach;
pub mod xecg;

pub use diag::{Diagnostic, Diagnostics, Stage};
