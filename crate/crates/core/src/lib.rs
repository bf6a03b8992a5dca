pub mod allocation;
pub mod cli;
pub mod config;
pub mod coupling;
pub mod error;
pub mod exact;
pub mod monotone;
pub mod network;
pub mod qprocess;
pub mod rng;
pub mod stability;
pub mod state;
