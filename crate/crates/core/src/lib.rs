pub mod annotation;
pub mod engine;
pub mod export;
pub mod graph;
pub mod metrics;
pub mod policy;
pub mod prompt;
pub mod provider;
