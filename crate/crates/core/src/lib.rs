pub mod config;
pub mod encoder;
pub mod error;
pub mod ga;
pub mod metrics;
pub mod neuron;
pub mod plasticity;
pub mod pong;
pub mod record;
pub mod session;
pub mod synthetic;
