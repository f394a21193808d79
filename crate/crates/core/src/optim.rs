//! The Bayesian-optimisation run loop: Sobol initial design, surrogate fit,
//! Expected-Improvement suggestion over a fresh Sobol candidate pool, and an
//! append-only trace of every evaluated candidate.

use crate::error::Result;
use crate::gp::{gp_fit, suggest_next, GpConfig, Observation};
use crate::model::{clamp_to_space, ChartSpec, DataTable, DesignParams, ParameterSpace, TaskSpec, FIXED_HEIGHT};
use crate::objective::{Evaluator, MetricBreakdown, ObjectiveWeights};
use crate::sobol::{sobol_points, EncodedPoint};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::time::Instant;

/// Sentinel objective for trials whose evaluation failed; finite so traces
/// stay serialisable, and excluded from surrogate fitting via its flag.
pub const FAILED_TRIAL_TOTAL: f64 = -1.0e300;

#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Total evaluation budget, including the initial design.
    pub budget: usize,
    /// Sobol trials generated for the initial design.
    pub init: usize,
    /// Completed trials required before the surrogate phase may start.
    pub min_complete: usize,
    /// Candidate pool size per suggestion step.
    pub pool_size: usize,
    pub seed: u32,
    pub weights: ObjectiveWeights,
    pub gp: GpConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            budget: 50,
            init: 16,
            min_complete: 5,
            pool_size: 512,
            seed: 0,
            weights: ObjectiveWeights::default(),
            gp: GpConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    pub l_w: f64,
    pub l_c: f64,
    pub l_s: f64,
    pub l_t: f64,
}

/// One line of the JSONL trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub params: DesignParams,
    pub metrics: MetricValues,
    pub total: f64,
    pub best_so_far: f64,
    pub wall_time_s: f64,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub flags: BTreeSet<String>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub best_spec: ChartSpec,
    pub best_breakdown: MetricBreakdown,
    pub best_iter: usize,
    pub trace: Vec<TraceRecord>,
    pub elapsed_s: f64,
}

/// Serialises a trace as JSONL. With `include_timing` off, `wall_time_s` is
/// written as 0 so that reruns with identical inputs produce byte-identical
/// trace files; real timings are surfaced through `RunOutcome::elapsed_s`.
pub fn trace_to_jsonl(trace: &[TraceRecord], include_timing: bool) -> String {
    let mut out = String::new();
    for rec in trace {
        let line = if include_timing {
            serde_json::to_string(rec).expect("trace record serialises")
        } else {
            let mut rec = rec.clone();
            rec.wall_time_s = 0.0;
            serde_json::to_string(&rec).expect("trace record serialises")
        };
        out.push_str(&line);
        out.push('\n');
    }
    out
}

pub fn trace_from_jsonl(data: &str) -> Result<Vec<TraceRecord>> {
    data.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Into::into))
        .collect()
}

/// Derives the per-iteration Sobol pool seed from the run seed.
fn pool_seed(run_seed: u32, iter: usize) -> u32 {
    run_seed
        .wrapping_mul(0x9E37_79B9)
        .wrapping_add(iter as u32)
        .wrapping_mul(0x85EB_CA6B)
        | 1
}

struct Trial {
    point: EncodedPoint,
    params: DesignParams,
    breakdown: Option<MetricBreakdown>,
}

/// Runs the full optimisation: phase 1 evaluates the Sobol initial design,
/// phase 2 alternates surrogate fit, EI suggestion, and evaluation until the
/// budget is exhausted. Deterministic per (inputs, config, seed).
pub fn run(
    table: &DataTable,
    task: &TaskSpec,
    config: &RunConfig,
    evaluator: &Evaluator,
) -> Result<RunOutcome> {
    let space = ParameterSpace::default();
    let dim = space.encoded_dim();
    let started = Instant::now();

    let eval_candidate = |point: &EncodedPoint| -> Result<Trial> {
        let params = clamp_to_space(&point.coords, &space)?;
        let spec = ChartSpec {
            table: table.clone(),
            params: params.clone(),
            task: task.clone(),
            fixed_height: FIXED_HEIGHT,
        };
        let breakdown = evaluator.evaluate(&spec).ok();
        Ok(Trial {
            point: point.clone(),
            params,
            breakdown,
        })
    };

    let mut trace: Vec<TraceRecord> = Vec::with_capacity(config.budget);
    let mut observations: Vec<Observation> = Vec::new();
    let mut best: Option<(usize, f64, DesignParams, MetricBreakdown)> = None;

    let init_count = config.init.min(config.budget);
    let init_points = sobol_points(init_count, dim, config.seed);

    let record = |iter: usize,
                      trial: Trial,
                      wall_time_s: f64,
                      observations: &mut Vec<Observation>,
                      best: &mut Option<(usize, f64, DesignParams, MetricBreakdown)>|
     -> TraceRecord {
        let (metrics, total, flags) = match &trial.breakdown {
            Some(b) => (
                MetricValues {
                    l_w: b.l_w,
                    l_c: b.l_c,
                    l_s: b.l_s,
                    l_t: b.l_t,
                },
                b.total,
                b.flags.clone(),
            ),
            None => {
                let mut flags = BTreeSet::new();
                flags.insert("evaluation_error".to_string());
                (
                    MetricValues {
                        l_w: 0.0,
                        l_c: 0.0,
                        l_s: 0.0,
                        l_t: 0.0,
                    },
                    FAILED_TRIAL_TOTAL,
                    flags,
                )
            }
        };
        if let Some(b) = &trial.breakdown {
            if b.total.is_finite() {
                observations.push(Observation {
                    point: trial.point.clone(),
                    y: b.total,
                    flags: b.flags.clone(),
                });
                if best.as_ref().map_or(true, |(_, t, _, _)| b.total > *t) {
                    *best = Some((iter, b.total, trial.params.clone(), b.clone()));
                }
            }
        }
        let best_so_far = best.as_ref().map_or(FAILED_TRIAL_TOTAL, |(_, t, _, _)| *t);
        TraceRecord {
            iter,
            params: trial.params,
            metrics,
            total,
            best_so_far,
            wall_time_s,
            flags,
        }
    };

    for (iter, point) in init_points.iter().enumerate() {
        let t0 = Instant::now();
        let trial = eval_candidate(point)?;
        let rec = record(
            iter,
            trial,
            t0.elapsed().as_secs_f64(),
            &mut observations,
            &mut best,
        );
        trace.push(rec);
    }

    let mut sobol_cursor = init_count;
    for iter in init_count..config.budget {
        let t0 = Instant::now();
        let point = if observations.len() >= config.min_complete {
            let mut gp_config = config.gp.clone();
            gp_config.seed = pool_seed(config.seed, iter).wrapping_add(0x5151);
            let state = gp_fit(&observations, &gp_config)?;
            suggest_next(&state, config.pool_size, pool_seed(config.seed, iter)).0
        } else {
            // not enough completed trials yet: keep extending the Sobol design
            sobol_cursor += 1;
            sobol_points(sobol_cursor, dim, config.seed)
                .pop()
                .expect("non-empty sobol prefix")
        };
        let trial = eval_candidate(&point)?;
        let rec = record(
            iter,
            trial,
            t0.elapsed().as_secs_f64(),
            &mut observations,
            &mut best,
        );
        trace.push(rec);
    }

    let (best_iter, _, best_params, best_breakdown) = best.ok_or_else(|| {
        crate::error::Error::Surrogate("no trial completed successfully".into())
    })?;
    let best_spec = ChartSpec {
        table: table.clone(),
        params: best_params,
        task: task.clone(),
        fixed_height: FIXED_HEIGHT,
    };
    Ok(RunOutcome {
        best_spec,
        best_breakdown,
        best_iter,
        trace,
        elapsed_s: started.elapsed().as_secs_f64(),
    })
}
