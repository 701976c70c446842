//! Mini-batch likelihood training with Adam, early stopping on validation
//! NLL, and per-epoch backtest metrics.

use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::eval_metrics;
use super::nll::{sequence_nll, MAX_MC_SAMPLES};
use super::rollout::rollout;
use super::{Result, TrainError};
use crate::autodiff::{adam_step, AdamConfig, AdamState, Graph, ParamStore};
use crate::data::{Event, PatientSequence};
use crate::model::{init_params, BoundParams, EncoderContext};
use crate::rng::derive_rng;

/// Sequences per parallel gradient chunk. Fixed rather than derived from
/// the worker count so the reduction order, and therefore every f64 sum,
/// is identical no matter how many threads run.
const GRAD_CHUNK: usize = 16;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub max_epochs: usize,
    /// Monte-Carlo samples per inter-event interval in the NLL.
    pub mc_samples: usize,
    /// Thinning bound safety factor for backtest rollouts.
    pub oversample: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Events each backtest rollout predicts.
    pub rollout_steps: usize,
    /// Validation patients scored by rollout each epoch; zero disables
    /// the backtest columns.
    pub rollout_eval_patients: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 256,
            lr: 1e-3,
            max_epochs: 100,
            mc_samples: 10,
            oversample: 5.0,
            patience: 10,
            rollout_steps: 6,
            rollout_eval_patients: 64,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(TrainError::BadConfig(msg));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1".into());
        }
        if self.mc_samples == 0 || self.mc_samples > MAX_MC_SAMPLES {
            return bad(format!("mc_samples {} must be in 1..={MAX_MC_SAMPLES}", self.mc_samples));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return bad(format!("lr {} must be finite and non-negative", self.lr));
        }
        if !(self.oversample.is_finite() && self.oversample > 0.0) {
            return bad(format!("oversample {} must be positive and finite", self.oversample));
        }
        if self.patience == 0 {
            return bad("patience must be at least 1".into());
        }
        if self.rollout_steps == 0 {
            return bad("rollout_steps must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_nll: f64,
    pub val_nll: f64,
    pub rmse: f64,
    pub accuracy: f64,
    pub diff_ratio: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation NLL.
    pub best: ParamStore,
    pub best_epoch: usize,
    pub best_val_nll: f64,
    pub log: Vec<EpochRow>,
}

pub fn write_epoch_log(path: &Path, rows: &[EpochRow]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(|e| TrainError::Io(e))?;
    Ok(())
}

/// Mean per-event NLL of `store` on `seqs`, with one fixed Monte-Carlo
/// stream per patient. The streams deliberately ignore the epoch so the
/// same parameters always score the same value and epoch-over-epoch
/// comparisons see no resampling noise.
pub fn validation_nll(
    store: &ParamStore,
    ctx: EncoderContext<'_>,
    seqs: &[PatientSequence],
    mc_samples: usize,
    seed: u64,
) -> Result<f64> {
    let mut total = 0.0;
    let mut events = 0usize;
    for seq in seqs {
        let mut rng = derive_rng(seed, &format!("mc-val/{}", seq.patient_id));
        let mut graph = Graph::new();
        let bound = BoundParams::bind(&mut graph, store)?;
        let (loss, n) = sequence_nll(&mut graph, store, &bound, ctx, seq, mc_samples, &mut rng)?;
        total += graph.value(loss)[0];
        events += n;
    }
    if events == 0 {
        return Err(TrainError::BadConfig("validation set has no events".into()));
    }
    Ok(total / events as f64)
}

/// Trains a fresh model on `train_seqs`, scoring `val_seqs` each epoch and
/// keeping the parameters from the best epoch.
///
/// Batches are processed in fixed-size chunks mapped across the rayon
/// pool; each chunk accumulates its gradients privately and the chunks
/// are reduced serially in order, so the result is independent of the
/// worker count. A non-finite batch loss aborts with its location rather
/// than silently poisoning the parameters.
pub fn train(
    cfg: &TrainConfig,
    ctx: EncoderContext<'_>,
    train_seqs: &[PatientSequence],
    val_seqs: &[PatientSequence],
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_seqs.is_empty() || val_seqs.is_empty() {
        return Err(TrainError::BadConfig("training and validation sets must both be non-empty".into()));
    }

    let (mut store, _) = init_params(ctx.config, ctx.vocab, cfg.seed)?;
    let mut adam = AdamState::new(AdamConfig { lr: cfg.lr, ..AdamConfig::default() }, &store);

    let mut best = store.clone();
    let mut best_epoch = 0usize;
    let mut best_val_nll = f64::INFINITY;
    let mut misses = 0usize;
    let mut log = Vec::new();

    for epoch in 1..=cfg.max_epochs {
        let mut order: Vec<usize> = (0..train_seqs.len()).collect();
        order.shuffle(&mut derive_rng(cfg.seed, &format!("train/epoch/{epoch}")));

        let mut epoch_loss = 0.0;
        let mut epoch_events = 0usize;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let (loss, events) = train_batch(cfg, ctx, train_seqs, &mut store, &mut adam, epoch, b + 1, batch)?;
            epoch_loss += loss;
            epoch_events += events;
        }

        let train_nll = epoch_loss / epoch_events as f64;
        let val_nll = validation_nll(&store, ctx, val_seqs, cfg.mc_samples, cfg.seed)?;
        let (rmse, accuracy, diff_ratio) = backtest(cfg, ctx, &store, val_seqs)?;
        log.push(EpochRow { epoch, train_nll, val_nll, rmse, accuracy, diff_ratio });

        if val_nll < best_val_nll {
            best_val_nll = val_nll;
            best_epoch = epoch;
            best = store.clone();
            misses = 0;
        } else {
            misses += 1;
            if misses >= cfg.patience {
                break;
            }
        }
    }

    Ok(TrainOutcome { best, best_epoch, best_val_nll, log })
}

/// One gradient step. Returns the summed batch loss and event count.
fn train_batch(
    cfg: &TrainConfig,
    ctx: EncoderContext<'_>,
    train_seqs: &[PatientSequence],
    store: &mut ParamStore,
    adam: &mut AdamState,
    epoch: usize,
    batch: usize,
    indices: &[usize],
) -> Result<(f64, usize)> {
    struct ChunkOut {
        loss: f64,
        events: usize,
        grads: Vec<Vec<f64>>,
    }

    let snapshot: &ParamStore = store;
    let shapes: Vec<usize> = (0..snapshot.len()).map(|id| snapshot.get(id).values().len()).collect();
    let chunks: Vec<&[usize]> = indices.chunks(GRAD_CHUNK).collect();
    let outs: Vec<Result<ChunkOut>> = chunks
        .par_iter()
        .map(|chunk| {
            let mut out = ChunkOut {
                loss: 0.0,
                events: 0,
                grads: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            };
            for &idx in *chunk {
                let seq = &train_seqs[idx];
                let mut rng = derive_rng(cfg.seed, &format!("mc/{epoch}/{batch}/{}", seq.patient_id));
                let mut graph = Graph::new();
                let bound = BoundParams::bind(&mut graph, snapshot)?;
                let (loss, n) = sequence_nll(&mut graph, snapshot, &bound, ctx, seq, cfg.mc_samples, &mut rng)?;
                out.loss += graph.value(loss)[0];
                out.events += n;
                graph.backward(loss)?;
                for id in 0..snapshot.len() {
                    let var = bound.var(snapshot, snapshot.name(id))?;
                    for (acc, g) in out.grads[id].iter_mut().zip(graph.grad(var)) {
                        *acc += g;
                    }
                }
            }
            Ok(out)
        })
        .collect();

    let mut batch_loss = 0.0;
    let mut batch_events = 0usize;
    let mut acc: Vec<Vec<f64>> = shapes.iter().map(|&n| vec![0.0; n]).collect();
    for out in outs {
        // The graph refuses to build past a non-finite intermediate, so a
        // blown-up model surfaces as a tensor error rather than a NaN sum;
        // both mean the same thing here and deserve the same location tag.
        let out = out.map_err(|e| match e {
            TrainError::Tensor(crate::autodiff::TensorError::NonFinite { .. }) => {
                TrainError::Diverged { epoch, batch }
            }
            other => other,
        })?;
        batch_loss += out.loss;
        batch_events += out.events;
        for (a, g) in acc.iter_mut().zip(&out.grads) {
            for (x, y) in a.iter_mut().zip(g) {
                *x += y;
            }
        }
    }
    if !batch_loss.is_finite() {
        return Err(TrainError::Diverged { epoch, batch });
    }

    let scale = 1.0 / batch_events as f64;
    store.zero_grads();
    for (id, grads) in acc.iter_mut().enumerate() {
        for g in grads.iter_mut() {
            *g *= scale;
        }
        store.get_mut(id).accumulate_grad(grads)?;
    }
    adam_step(store, adam)?;
    Ok((batch_loss, batch_events))
}

/// Rolls the model forward on a prefix of each scored validation patient
/// and averages the positional metrics against the held-out tail. The
/// rollout noise streams depend only on the patient, so epochs are
/// compared under common random numbers.
fn backtest(
    cfg: &TrainConfig,
    ctx: EncoderContext<'_>,
    store: &ParamStore,
    val_seqs: &[PatientSequence],
) -> Result<(f64, f64, f64)> {
    let k = cfg.rollout_steps;
    let mut sums = (0.0, 0.0, 0.0);
    let mut scored = 0usize;
    for seq in val_seqs {
        if scored >= cfg.rollout_eval_patients {
            break;
        }
        if seq.events.len() <= k {
            continue;
        }
        let mut context = seq.clone();
        let target: Vec<Event> = context.events.split_off(context.events.len() - k);
        let t_last = context.events.last().expect("context keeps at least one event").t;
        let mut rng = derive_rng(cfg.seed, &format!("backtest/{}", seq.patient_id));
        let out = rollout(store, ctx, &context, k, cfg.oversample, &mut rng)?;
        let m = eval_metrics(&out.events, &target, t_last)?;
        sums.0 += m.rmse;
        sums.1 += m.accuracy;
        sums.2 += m.diff_ratio;
        scored += 1;
    }
    if scored == 0 {
        return Ok((f64::NAN, f64::NAN, f64::NAN));
    }
    let n = scored as f64;
    Ok((sums.0 / n, sums.1 / n, sums.2 / n))
}
