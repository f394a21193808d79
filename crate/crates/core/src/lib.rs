//! Task-driven bar-chart design optimisation.
//!
//! Given a small data table and an analytical task (find extremum, retrieve
//! value, compute derived value, compare), search an eight-dimensional design
//! space for the chart that maximises a weighted combination of four
//! perceptual metrics: white-space balance, colour preference, task-area
//! saliency, and text legibility. The search is Bayesian optimisation with a
//! Gaussian-process surrogate and Expected-Improvement acquisition over
//! low-discrepancy candidate pools.

pub mod color;
pub mod error;
pub mod gp;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod objective;
pub mod optim;
pub mod render;
pub mod sobol;

pub use error::{Error, Result, Violation};
pub use model::{
    clamp_to_space, default_params, default_spec, encode, validate, ChartSpec, DataTable,
    DesignParams, LabelRotation, Orientation, ParameterSpace, TaskSpec, TaskType, ENCODED_DIM,
    FIXED_HEIGHT,
};
pub use objective::{combine, Evaluator, MetricBreakdown, ObjectiveWeights};
pub use optim::{run, trace_from_jsonl, trace_to_jsonl, RunConfig, RunOutcome, TraceRecord};
