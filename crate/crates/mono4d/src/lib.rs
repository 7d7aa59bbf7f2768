//! File formats, scene manifests, and the command-line front end around
//! [`mono4d_core`].
pub mod cli;
pub mod error;
pub mod formats;
pub mod manifest;
