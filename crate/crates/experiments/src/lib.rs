//! Testcase drivers, configuration and output for the local-sensing
//! chemotaxis solver.

pub mod bessel;
pub mod config;
pub mod initial;
pub mod meshes;
pub mod output;
pub mod testcases;
