pub mod aoi;
pub mod config;
pub mod device;
pub mod dqn;
pub mod energy;
pub mod harness;
pub mod nn;
pub mod policies;
pub mod sink;
pub mod trace;
