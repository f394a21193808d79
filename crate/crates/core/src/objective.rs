//! Weighted combination of the four perceptual metrics into the scalar
//! objective, plus per-candidate evaluation that renders a spec exactly once
//! and scores all metrics from that single render.

use crate::error::{Error, Result};
use crate::metrics::{
    task_saliency, text_legibility, wave_score, white_space_ratio, wsr_penalty, SaliencyProvider,
    WaveTable, WsrReference, DEFAULT_LEGIBILITY_THRESHOLD_PX, DEFAULT_PYRAMID_FACTORS,
};
use crate::model::ChartSpec;
use crate::render::{render, task_aois, RenderResult};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveWeights {
    pub w_w: f64,
    pub w_c: f64,
    pub w_t: f64,
    pub w_s: f64,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        ObjectiveWeights {
            w_w: 3.0,
            w_c: 1.0,
            w_t: 2.0,
            w_s: 4.0,
        }
    }
}

impl ObjectiveWeights {
    pub fn violations(&self) -> Option<String> {
        let all = [self.w_w, self.w_c, self.w_t, self.w_s];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Some("weights must be finite and non-negative".into());
        }
        if all.iter().all(|w| *w == 0.0) {
            return Some("at least one weight must be positive".into());
        }
        None
    }
}

/// The four metric values and their weighted total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricBreakdown {
    pub l_w: f64,
    pub l_c: f64,
    pub l_s: f64,
    pub l_t: f64,
    pub total: f64,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub flags: BTreeSet<String>,
}

/// Weighted sum per the objective definition.
pub fn combine(weights: &ObjectiveWeights, l_w: f64, l_c: f64, l_t: f64, l_s: f64) -> f64 {
    weights.w_w * l_w + weights.w_c * l_c + weights.w_t * l_t + weights.w_s * l_s
}

/// Bound configuration for evaluating candidates.
#[derive(Debug, Clone)]
pub struct Evaluator {
    pub weights: ObjectiveWeights,
    pub wave: WaveTable,
    pub wsr_reference: WsrReference,
    pub pyramid_factors: Vec<f64>,
    pub legibility_threshold_px: f64,
    pub saliency: SaliencyProvider,
    /// (chart_id, task_id) key for file-backed saliency lookup.
    pub saliency_key: Option<(String, String)>,
}

impl Evaluator {
    pub fn new(wave: WaveTable) -> Self {
        Evaluator {
            weights: ObjectiveWeights::default(),
            wave,
            wsr_reference: WsrReference::default(),
            pyramid_factors: DEFAULT_PYRAMID_FACTORS.to_vec(),
            legibility_threshold_px: DEFAULT_LEGIBILITY_THRESHOLD_PX,
            saliency: SaliencyProvider::Proxy,
            saliency_key: None,
        }
    }

    /// Renders the spec once and computes all four metrics from that render.
    /// Degenerate conditions (zero AOI saliency, layout overflow, clipped
    /// AOIs) contribute their defined fallback values and raise flags; the
    /// optimiser treats flagged evaluations as ordinary observations.
    pub fn evaluate(&self, spec: &ChartSpec) -> Result<MetricBreakdown> {
        self.evaluate_with_render(spec).map(|(b, _)| b)
    }

    pub fn evaluate_with_render(&self, spec: &ChartSpec) -> Result<(MetricBreakdown, RenderResult)> {
        let mut flags = BTreeSet::new();
        let rendered = render(spec);
        if !rendered.overflow.is_empty() {
            flags.insert("render_overflow".to_string());
        }

        let l_w = wsr_penalty(white_space_ratio(&rendered), &self.wsr_reference);

        let l_c = match wave_score(&rendered, &self.wave) {
            Ok(v) => v,
            Err(Error::EmptyForeground) => {
                flags.insert("empty_foreground".to_string());
                0.0
            }
            Err(e) => return Err(e),
        };

        let l_t = text_legibility(&rendered, &self.pyramid_factors, self.legibility_threshold_px)?;

        let map = self.saliency.saliency(
            &rendered,
            self.saliency_key.as_ref().map(|(c, t)| (c.as_str(), t.as_str())),
        )?;
        let aois = task_aois(&rendered, &spec.task, &spec.table)?;
        let (w, h) = (rendered.raster.width, rendered.raster.height);
        let mut clipped = Vec::new();
        for aoi in &aois {
            let c = aoi.clipped(w, h);
            if c != *aoi {
                flags.insert("aoi_clipped".to_string());
            }
            if c.area() > 0 {
                clipped.push(c);
            }
        }
        let l_s = if clipped.is_empty() {
            flags.insert("aoi_outside_canvas".to_string());
            0.0
        } else {
            let (v, degenerate) = task_saliency(&map, &clipped)?;
            if degenerate {
                flags.insert("zero_aoi_saliency".to_string());
            }
            v
        };

        let total = combine(&self.weights, l_w, l_c, l_t, l_s);
        Ok((
            MetricBreakdown {
                l_w,
                l_c,
                l_s,
                l_t,
                total,
                flags,
            },
            rendered,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{default_spec, DataTable, TaskSpec, TaskType};
    use crate::render::RENDER_CALLS;

    fn spec() -> crate::model::ChartSpec {
        let table = DataTable::new(vec![
            ("A".into(), 10.0),
            ("B".into(), 20.0),
            ("C".into(), 5.0),
        ]);
        let task = TaskSpec {
            task_type: TaskType::RV,
            targets: vec!["B".into()],
            question: None,
        };
        default_spec(table, task).unwrap()
    }

    #[test]
    fn combine_matches_hand_arithmetic() {
        let w = ObjectiveWeights::default();
        let total = combine(&w, 0.0, 0.7, 1.0, 0.5);
        assert!((total - 4.7).abs() < 1e-12);
    }

    #[test]
    fn single_nonzero_weight_passes_term_through() {
        let w = ObjectiveWeights {
            w_w: 0.0,
            w_c: 0.0,
            w_t: 1.0,
            w_s: 0.0,
        };
        assert_eq!(combine(&w, -0.3, 0.9, 0.625, 0.4), 0.625);
    }

    #[test]
    fn doubling_one_weight_doubles_its_contribution() {
        let base = ObjectiveWeights::default();
        let mut doubled = base;
        doubled.w_s *= 2.0;
        let (l_w, l_c, l_t, l_s) = (-0.1, 0.6, 0.5, 0.8);
        let a = combine(&base, l_w, l_c, l_t, l_s);
        let b = combine(&doubled, l_w, l_c, l_t, l_s);
        assert_eq!(b - a, base.w_s * l_s);
    }

    #[test]
    fn scaling_all_weights_preserves_ranking() {
        let base = ObjectiveWeights::default();
        let scaled = ObjectiveWeights {
            w_w: base.w_w * 7.5,
            w_c: base.w_c * 7.5,
            w_t: base.w_t * 7.5,
            w_s: base.w_s * 7.5,
        };
        let candidates = [
            (-0.1, 0.6, 0.5, 0.8),
            (0.0, 0.2, 1.0, 0.1),
            (-0.4, 0.9, 0.3, 0.95),
        ];
        let rank = |w: &ObjectiveWeights| {
            let mut idx: Vec<usize> = (0..candidates.len()).collect();
            idx.sort_by(|&a, &b| {
                let ca = candidates[a];
                let cb = candidates[b];
                combine(w, ca.0, ca.1, ca.2, ca.3)
                    .partial_cmp(&combine(w, cb.0, cb.1, cb.2, cb.3))
                    .unwrap()
            });
            idx
        };
        assert_eq!(rank(&base), rank(&scaled));
    }

    #[test]
    fn evaluate_is_deterministic() {
        let evaluator = Evaluator::new(WaveTable::builtin());
        let s = spec();
        let a = evaluator.evaluate(&s).unwrap();
        let b = evaluator.evaluate(&s).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn evaluate_renders_exactly_once() {
        let evaluator = Evaluator::new(WaveTable::builtin());
        let s = spec();
        let before = RENDER_CALLS.with(|c| c.get());
        evaluator.evaluate(&s).unwrap();
        let after = RENDER_CALLS.with(|c| c.get());
        assert_eq!(after - before, 1);
    }

    #[test]
    fn breakdown_total_matches_weights() {
        let evaluator = Evaluator::new(WaveTable::builtin());
        let b = evaluator.evaluate(&spec()).unwrap();
        let expect = combine(&evaluator.weights, b.l_w, b.l_c, b.l_t, b.l_s);
        assert!((b.total - expect).abs() <= f64::EPSILON * expect.abs().max(1.0));
    }

    #[test]
    fn all_zero_weights_rejected() {
        let w = ObjectiveWeights {
            w_w: 0.0,
            w_c: 0.0,
            w_t: 0.0,
            w_s: 0.0,
        };
        assert!(w.violations().is_some());
    }
}
