//! Autoregressive continuation of a patient sequence: draw an event by
//! thinning, append it, re-encode, and repeat.

use rand::Rng;

use super::thinning::{thinning_next, IntensityEval, THINNING_MAX_REJECTS};
use super::{Result, TrainError};
use crate::autodiff::{Graph, ParamStore};
use crate::data::{Event, PatientSequence};
use crate::embed::IntensityGrid;
use crate::model::{encode_history, head_weights, intensities_f64, BoundParams, EncoderContext, HeadWeights};

#[derive(Debug, Clone)]
pub struct RolloutResult {
    /// Predicted events in draw order, with absolute times and vocabulary
    /// type ids.
    pub events: Vec<Event>,
    /// Per-step flag marking draws whose rejection budget ran out.
    pub exhausted: Vec<bool>,
    /// Per-type intensity shares at each predicted time; one column per
    /// step, each summing to one.
    pub grid: IntensityGrid,
}

struct RowEval<'a> {
    head: &'a HeadWeights,
    row: &'a [f64],
    t_origin: f64,
}

impl IntensityEval for RowEval<'_> {
    fn rates(&self, t: f64) -> Vec<f64> {
        intensities_f64(self.head, self.row, t - self.t_origin)
    }
}

/// Rolls the model forward `k` events past the end of `seq`.
///
/// Each step re-encodes the working context (sliding the window forward
/// once it outgrows the model's maximum length), draws the next event by
/// thinning against the final summary position, and appends it. Numeric
/// measurements stay attached throughout; they only ever reach back in
/// time, so the join stays valid as the window slides.
pub fn rollout<R: Rng>(
    store: &ParamStore,
    ctx: EncoderContext<'_>,
    seq: &PatientSequence,
    k: usize,
    oversample: f64,
    rng: &mut R,
) -> Result<RolloutResult> {
    if k == 0 {
        return Err(TrainError::BadConfig("rollout needs at least one step".into()));
    }
    let head = head_weights(store, ctx.config)?;
    let n_types = head.n_types();
    let mut working = seq.clone();
    let mut events = Vec::with_capacity(k);
    let mut exhausted = Vec::with_capacity(k);
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut bin_times = Vec::with_capacity(k);

    for _ in 0..k {
        while working.events.len() > ctx.config.max_len {
            working.events.remove(0);
        }
        let mut graph = Graph::new();
        let bound = BoundParams::bind(&mut graph, store)?;
        let history = encode_history(&mut graph, store, &bound, ctx, &working)?;
        let row = history.row(&graph, history.n_pos() - 1);
        let eval = RowEval { head: &head, row: &row, t_origin: history.t_origin };

        let t_last = working.events.last().expect("encoded sequence has events").t;
        let gaps: Vec<f64> = working.events.windows(2).map(|w| w[1].t - w[0].t).collect();
        let next = thinning_next(&eval, t_last, &gaps, oversample, THINNING_MAX_REJECTS, rng)?;
        let t_new = t_last + next.dt;

        let rates = eval.rates(t_new);
        let total: f64 = rates.iter().sum();
        let column = if total > 0.0 && total.is_finite() {
            rates.iter().map(|r| r / total).collect()
        } else {
            vec![1.0 / n_types as f64; n_types]
        };

        let event = Event { type_id: next.type_index + 1, t: t_new };
        events.push(event.clone());
        exhausted.push(next.exhausted);
        columns.push(column);
        bin_times.push(t_new);
        working.events.push(event);
    }

    let grid = IntensityGrid::from_columns(&columns, bin_times)?;
    Ok(RolloutResult { events, exhausted, grid })
}
