pub mod gridworld;
pub mod metrics;
pub mod tokenizer;
pub mod losses;
pub mod model;
pub mod reasoning;
pub mod dataset;
pub mod cli;
