//! Optimization over MSO-definable graph problems by dynamic programming on
//! tree decompositions, using extended model-checking games as table entries.

pub mod cli;
pub mod game;
pub mod logic;
pub mod oracle;
pub mod problems;
pub mod solver;
pub mod structure;
pub mod treedec;
