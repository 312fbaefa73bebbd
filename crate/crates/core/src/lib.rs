//! Evaluation harness for text-to-SQL systems: benchmark loading, database-aware
//! prompting, sandboxed execution, an agentic generate/verify/select pipeline,
//! metrics and error diagnosis.

pub mod cli;
pub mod context;
pub mod corpus;
pub mod diagnoser;
pub mod executor;
pub mod gateway;
pub mod metrics;
pub mod pipeline;
