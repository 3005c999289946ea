//! Pulse-level simulation of the coupled electron (S = 3/2) and 14N nuclear
//! (I = 1) spins of N@C60: phase kicks, bang-bang decoupling and fast
//! geometric phase gates on the nuclear qubit.

pub mod bangbang;
pub mod config;
pub mod engine;
pub mod model;
pub mod phasegate;
pub mod pulse;
pub mod spin_core;
