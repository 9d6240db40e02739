//! Core library for `discern`: a harness that samples several
//! chain-of-thought solutions per math problem, asks the model to judge
//! which of them are correct (or incorrect), and selects a final answer by
//! pooling those judgments, alongside self-consistency baselines.
//!
//! Modules follow the data flow: [`dataset`] loads problems, [`backend`]
//! talks to models, [`generation`] samples candidates, [`discrimination`]
//! collects judgments, [`aggregation`] turns votes into answers,
//! [`metrics`] scores them, [`store`] persists traces, and [`pipeline`]
//! wires a full experiment together.

pub mod aggregation;
pub mod backend;
pub mod config;
pub mod dataset;
pub mod discrimination;
pub mod generation;
pub mod metrics;
pub mod normalize;
pub mod pipeline;
pub mod seeds;
pub mod store;
pub mod types;

pub use normalize::normalize_answer;
pub use types::{
    CandidateMeta, CandidatePath, Dataset, GoldAnswer, LabeledSlate, Method, MethodResult,
    ParseStatus, Problem, RunRecord, Verdict, VerdictMode,
};
