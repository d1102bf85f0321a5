pub mod corpus;
pub mod embeddings;
pub mod fsio;
pub mod fusion;
pub mod loss;
pub mod metrics;
pub mod mlp;
pub mod pipeline;
pub mod synthetic;
pub mod trainer;
pub mod transfer;
