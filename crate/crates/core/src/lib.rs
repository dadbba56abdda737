//! Personalized instruction handling for mobile agents.
//!
//! The pipeline detects user-specific phrases in an instruction ("my home",
//! "favorite song"), resolves them from a per-profile memory store or by
//! planning an exploration of an installed app, rewrites the instruction into
//! an explicit form and judges the result against a benchmark scenario.
//!
//! Modules map onto pipeline stages:
//!
//! - [`dataset`]: benchmark records, corpus loading and quality metrics
//! - [`llm`]: text-completion backends (scripted mock and HTTP)
//! - [`perception`]: personalized-element detection
//! - [`memory`]: the element/value store and retrieval completion
//! - [`exploration`]: exploration planning and agent report parsing
//! - [`sim`]: deterministic simulated device and success judge
//! - [`orchestrator`]: the end-to-end state machine and run traces
//! - [`evaluation`]: benchmark metrics and report rendering
//! - [`harness`]: gold scripts for harness self-tests

pub mod dataset;
pub mod evaluation;
pub mod exploration;
pub mod harness;
pub mod llm;
pub mod memory;
pub mod orchestrator;
pub mod perception;
pub mod sim;
pub mod text;

pub use dataset::{Corpus, Difficulty, Instruction};
pub use evaluation::MetricsReport;
pub use llm::{LlmBackend, LlmConfig};
pub use memory::{MemoryStore, RetrievalOutcome};
pub use orchestrator::{Orchestrator, RunTrace};
pub use perception::PerceptionResult;
pub use sim::Scenario;
