pub mod analysis;
pub mod config;
pub mod experiment;
pub mod fock;
pub mod optics;
pub mod sources;
pub mod topology;
