//! IO, CLI and spectral companion for `mixflow-core`: JSON schedule and
//! report documents, CSV experiment outputs, experiment manifests, and the
//! dense eigensolve used for the Markov spectral certificate.

pub mod cli;
pub mod json;
pub mod manifest;
pub mod spectral;
