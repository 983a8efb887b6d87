//! Reference problems: MCP-constrained sparse classification, trajectory
//! planning under ensemble currents, and small synthetic benchmarks.

pub mod currents;
pub mod dataset;
pub mod logistic;
pub mod mcp;
pub mod synthetic;
pub mod trajectory;
