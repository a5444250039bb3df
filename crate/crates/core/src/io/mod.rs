//! File formats: PWD1 tensor containers, PGM export, settings files and
//! MDL1 checkpoints.

pub mod checkpoint;
pub mod config;
pub mod container;
pub mod pgm;
pub mod records;
