//! Host-side pieces around `toolground-core`: file formats, a threaded
//! batch runner, chat-endpoint policies and scenario configuration.

pub mod chat;
pub mod io;
pub mod runner;
pub mod scenario;

pub use chat::{ChatEndpoint, ChatPlanner, ChatResolver};
pub use runner::ThreadedRunner;
pub use scenario::{run_scenario, ScenarioConfig, ScenarioError, ScenarioFields};
