pub mod corpus;
pub mod judge;
pub mod parser;
pub mod prompts;
pub mod runner;
pub mod sampler;
pub mod scoring;
pub mod stats;

pub(crate) mod textnorm;
