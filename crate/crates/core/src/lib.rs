//! Recursive tool-grounding runtime for tool-augmented video QA agents.
//!
//! Everything here is `no_std` + `alloc`: the registry and its manifest
//! format, argument schemas, the planner/resolver wire protocol, routing,
//! the executor, the L1-L4 resolver, the round scheduler, the meta-tool
//! pack, a deterministic synthetic video world, and the RL scoring math.
//! File IO, threads, HTTP policies and the CLI live in the `toolground`
//! crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod backend;
pub mod config;
pub mod executor;
pub mod metatools;
pub mod planner;
pub mod protocol;
pub mod registry;
pub mod resolver;
pub mod rl;
pub mod router;
pub mod scheduler;
pub mod schema;
pub mod simenv;
pub mod stats;
pub mod text;
pub mod value;

pub use config::RuntimeConfig;
pub use executor::{FailureKind, Observation};
pub use protocol::{ActionRequest, FinishDirective, PlannerMessage, ResultStore};
pub use registry::{ToolRegistry, ToolSpec};
pub use scheduler::{run_episode, Objective, Trajectory};
pub use simenv::SyntheticWorld;
pub use value::{Record, Value};
