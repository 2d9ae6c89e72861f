//! Orchestration engine and evaluation harness for automated
//! House-Tree-Person drawing assessment.
//!
//! - [`case`]: identifiers, drawings, radar scores.
//! - [`gateway`]: generation/embedding backends, scripted mocks, batching.
//! - [`eval`]: AI-expert similarity evaluation, descriptive statistics, plot data.
//! - [`pipeline`]: Observer, Interpreter, Zeitgeist and Listener stages.
//! - [`fusion`]: multi-model interpretation fusion and integrated reports.
//! - [`store`], [`config`], [`workflow`]: on-disk case store and runnable commands.

pub mod canonical;
pub mod config;
pub mod case;
pub mod gateway;
pub mod eval;
pub mod export;
pub mod fixtures;
pub mod fusion;
pub mod pipeline;
pub mod prompts;
pub mod store;
pub mod workflow;
