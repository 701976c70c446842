//! Causal self-attention over a patient sequence, producing one fused
//! summary row per position.

use super::{BoundParams, ConceptMap, ModelConfig, ModelError, Result};
use crate::autodiff::{Graph, ParamStore, Var};
use crate::data::{BucketSpec, PatientSequence, Vocabulary};
use crate::model::timeenc::time_features;

/// Everything that stays fixed while encoding a batch of sequences.
#[derive(Clone, Copy)]
pub struct EncoderContext<'a> {
    pub config: &'a ModelConfig,
    pub vocab: &'a Vocabulary,
    pub concepts: &'a ConceptMap,
    pub buckets: &'a BucketSpec,
}

/// Per-position summaries for one sequence.
///
/// Position 0 is the statics slot at relative time 0; positions `1..=n`
/// are the events. Row `i` of `summary` conditions on positions `0..=i`,
/// so the intensity over `(taus[i], taus[i+1]]` reads row `i`.
#[derive(Debug, Clone)]
pub struct EncodedHistory {
    /// `[n_pos, d_summary]` fused rows: encoder state, concept vector,
    /// carried-forward measurement state.
    pub summary: Var,
    /// Relative time per position; `taus[0] == 0.0`.
    pub taus: Vec<f64>,
    /// Absolute time of the first event; queries subtract this.
    pub t_origin: f64,
}

impl EncodedHistory {
    pub fn n_pos(&self) -> usize {
        self.taus.len()
    }

    /// Copies one summary row off the tape, for tape-free intensity
    /// evaluation during sampling.
    pub fn row(&self, graph: &Graph, position: usize) -> Vec<f64> {
        let d = graph.shape(self.summary)[1];
        graph.value(self.summary)[position * d..(position + 1) * d].to_vec()
    }
}

pub fn encode_history(
    graph: &mut Graph,
    store: &ParamStore,
    bound: &BoundParams,
    ctx: EncoderContext<'_>,
    seq: &PatientSequence,
) -> Result<EncodedHistory> {
    let c = ctx.config;
    if ctx.concepts.width() != c.d_concept {
        return Err(ModelError::ConceptWidth { got: ctx.concepts.width(), expect: c.d_concept });
    }
    if ctx.buckets.n_concepts() != ctx.vocab.n_numeric() {
        return Err(ModelError::BadConfig("bucket spec does not cover the vocabulary's numeric concepts".into()));
    }
    if seq.events.is_empty() {
        return Err(ModelError::EmptySequence);
    }
    if seq.events.len() > c.max_len {
        return Err(ModelError::BadConfig(format!("sequence has {} events, model caps at {}", seq.events.len(), c.max_len)));
    }
    if seq.statics.levels.len() != ctx.vocab.n_static_categories() {
        return Err(ModelError::BadConfig("static profile does not match the vocabulary's categories".into()));
    }
    for (i, e) in seq.events.iter().enumerate() {
        // Simulated continuations may emit static pseudo-types, so the whole
        // typed id space is admissible here, not just the indicative slice.
        if e.type_id == 0 || e.type_id > ctx.vocab.n_types() {
            return Err(ModelError::BadConfig(format!("event type id {} is outside the vocabulary", e.type_id)));
        }
        if i > 0 && e.t < seq.events[i - 1].t {
            return Err(ModelError::TimeOrder(i));
        }
    }

    let n_pos = seq.events.len() + 1;
    let t_origin = seq.events[0].t;
    let mut taus = Vec::with_capacity(n_pos);
    taus.push(0.0);
    taus.extend(seq.events.iter().map(|e| e.t - t_origin));

    // Statics slot: the three level embeddings summed into one row.
    let mut statics_row: Option<Var> = None;
    for (cat, &level) in seq.statics.levels.iter().enumerate() {
        if level >= ctx.vocab.n_levels(cat) {
            return Err(ModelError::BadConfig(format!("level {} is outside static category {:?}", level, ctx.vocab.static_category(cat))));
        }
        let table = bound.var(store, &format!("embed/{}", ctx.vocab.static_category(cat)))?;
        let row = graph.gather_rows(table, &[level])?;
        statics_row = Some(match statics_row {
            Some(acc) => graph.add(acc, row)?,
            None => row,
        });
    }
    let statics_row = statics_row.ok_or(ModelError::BadConfig("vocabulary has no static categories".into()))?;

    let embed_type = bound.var(store, "embed/type")?;
    let type_ids: Vec<usize> = seq.events.iter().map(|e| e.type_id).collect();
    let event_rows = graph.gather_rows(embed_type, &type_ids)?;
    let type_part = graph.concat(0, &[statics_row, event_rows])?;

    let mut time_vals = Vec::with_capacity(n_pos * c.d_time);
    for &tau in &taus {
        time_vals.extend(time_features(tau, c.d_time));
    }
    let time_part = graph.constant_matrix(n_pos, c.d_time, time_vals)?;

    let mut concept_vals = Vec::with_capacity(n_pos * c.d_concept);
    concept_vals.extend(ctx.concepts.static_vector().iter().map(|&x| x as f64));
    for e in &seq.events {
        concept_vals.extend(ctx.concepts.vector(e.type_id).iter().map(|&x| x as f64));
    }
    let concept_part = graph.constant_matrix(n_pos, c.d_concept, concept_vals)?;

    let x = graph.concat(1, &[type_part, time_part, concept_part])?;
    let w_in = bound.var(store, "encoder/w_in")?;
    let b_in = bound.var(store, "encoder/b_in")?;
    let mut state = affine(graph, x, w_in, b_in)?;
    let keep = causal_keep(n_pos);
    for layer in 0..c.n_layers {
        state = attention_block(graph, store, bound, &format!("encoder/l{layer}"), state, c.n_heads, &keep)?;
    }

    let carried = carry_measurements(graph, store, bound, ctx, seq, t_origin, &taus)?;
    let summary = graph.concat(1, &[state, concept_part, carried])?;
    Ok(EncodedHistory { summary, taus, t_origin })
}

/// Encodes the measurement substream and joins it to the event positions
/// by last-value-carried-forward; positions before any observation read a
/// learned null row.
fn carry_measurements(
    graph: &mut Graph,
    store: &ParamStore,
    bound: &BoundParams,
    ctx: EncoderContext<'_>,
    seq: &PatientSequence,
    t_origin: f64,
    taus: &[f64],
) -> Result<Var> {
    let c = ctx.config;
    let null_row = bound.var(store, "sub/null")?;
    if seq.numerics.is_empty() {
        return Ok(graph.repeat_rows(null_row, taus.len())?);
    }

    let n_obs = seq.numerics.len();
    let mut tokens = Vec::with_capacity(n_obs);
    let mut obs_taus = Vec::with_capacity(n_obs);
    for obs in &seq.numerics {
        if obs.concept >= ctx.vocab.n_numeric() {
            return Err(ModelError::BadConfig(format!("numeric concept id {} is outside the vocabulary", obs.concept)));
        }
        tokens.push(ctx.buckets.token(obs.concept, ctx.buckets.bucket(obs.concept, obs.value)));
        obs_taus.push(obs.t - t_origin);
    }

    let sub_embed = bound.var(store, "sub/embed")?;
    let token_rows = graph.gather_rows(sub_embed, &tokens)?;
    let mut time_vals = Vec::with_capacity(n_obs * c.d_time);
    for &tau in &obs_taus {
        time_vals.extend(time_features(tau, c.d_time));
    }
    let time_part = graph.constant_matrix(n_obs, c.d_time, time_vals)?;
    let m = graph.concat(1, &[token_rows, time_part])?;
    let w_in = bound.var(store, "sub/w_in")?;
    let b_in = bound.var(store, "sub/b_in")?;
    let mut state = affine(graph, m, w_in, b_in)?;
    let keep = causal_keep(n_obs);
    for layer in 0..c.n_sub_layers {
        state = attention_block(graph, store, bound, &format!("sub/l{layer}"), state, c.n_sub_heads, &keep)?;
    }

    let extended = graph.concat(0, &[state, null_row])?;
    let assignments: Vec<usize> = taus
        .iter()
        .map(|&tau| {
            let seen = obs_taus.partition_point(|&ot| ot <= tau);
            if seen == 0 {
                n_obs
            } else {
                seen - 1
            }
        })
        .collect();
    Ok(graph.gather_rows(extended, &assignments)?)
}

/// One pre-norm-free transformer block: multi-head causal attention with a
/// residual, then a tanh feed-forward with a residual.
fn attention_block(
    graph: &mut Graph,
    store: &ParamStore,
    bound: &BoundParams,
    prefix: &str,
    state: Var,
    n_heads: usize,
    keep: &[bool],
) -> Result<Var> {
    let d = graph.shape(state)[1];
    let d_head = d / n_heads;
    let scale = 1.0 / (d_head as f64).sqrt();

    let mut heads = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let wq = bound.var(store, &format!("{prefix}/h{h}/wq"))?;
        let wk = bound.var(store, &format!("{prefix}/h{h}/wk"))?;
        let wv = bound.var(store, &format!("{prefix}/h{h}/wv"))?;
        let q = graph.matmul(state, wq)?;
        let k = graph.matmul(state, wk)?;
        let v = graph.matmul(state, wv)?;
        let kt = graph.transpose(k)?;
        let scores = graph.matmul(q, kt)?;
        let scaled = graph.scale(scores, scale)?;
        let masked = graph.masked_fill(scaled, keep, -1e9)?;
        let weights = graph.softmax(masked, 1)?;
        heads.push(graph.matmul(weights, v)?);
    }
    let merged = graph.concat(1, &heads)?;
    let wo = bound.var(store, &format!("{prefix}/wo"))?;
    let bo = bound.var(store, &format!("{prefix}/bo"))?;
    let projected = affine(graph, merged, wo, bo)?;
    let after_attn = graph.add(state, projected)?;

    let w1 = bound.var(store, &format!("{prefix}/w1"))?;
    let b1 = bound.var(store, &format!("{prefix}/b1"))?;
    let w2 = bound.var(store, &format!("{prefix}/w2"))?;
    let b2 = bound.var(store, &format!("{prefix}/b2"))?;
    let hidden = affine(graph, after_attn, w1, b1)?;
    let squashed = graph.tanh(hidden)?;
    let out = affine(graph, squashed, w2, b2)?;
    Ok(graph.add(after_attn, out)?)
}

/// `x W + b` with the bias row broadcast down the rows.
pub(super) fn affine(graph: &mut Graph, x: Var, w: Var, b: Var) -> Result<Var> {
    let xw = graph.matmul(x, w)?;
    let rows = graph.shape(xw)[0];
    let bias = graph.repeat_rows(b, rows)?;
    Ok(graph.add(xw, bias)?)
}

fn causal_keep(n: usize) -> Vec<bool> {
    let mut keep = vec![false; n * n];
    for i in 0..n {
        for j in 0..=i {
            keep[i * n + j] = true;
        }
    }
    keep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Event, FactRow, NumericObs, StaticProfile, Vocabulary};
    use crate::model::init_params;
    use crate::rng::derive_rng;
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn vocab() -> Vocabulary {
        let mk = |c: &str, v: Option<f64>| FactRow { patient_id: "1".into(), interval: 3, concept: c.into(), value: v };
        Vocabulary::from_facts(&[
            mk("dx_a", None),
            mk("dx_b", None),
            mk("dx_c", None),
            mk("lab_x", Some(1.0)),
            mk("gender:f", None),
            mk("gender:m", None),
            mk("race:a", None),
            mk("race:b", None),
            mk("pseudo_age:40s", None),
            mk("pseudo_age:50s", None),
        ])
        .unwrap()
    }

    fn buckets(vocab: &Vocabulary) -> BucketSpec {
        BucketSpec::fit(vocab, &[vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]]).unwrap()
    }

    fn sequence() -> PatientSequence {
        PatientSequence {
            patient_id: "9".into(),
            statics: StaticProfile { levels: vec![0, 1, 0] },
            events: vec![
                Event { type_id: 1, t: 10.0 },
                Event { type_id: 3, t: 12.0 },
                Event { type_id: 2, t: 12.0 },
                Event { type_id: 1, t: 15.0 },
            ],
            numerics: vec![NumericObs { concept: 0, value: 2.5, t: 11.0 }, NumericObs { concept: 0, value: 5.5, t: 14.0 }],
            truncated: false,
        }
    }

    struct Fixture {
        config: ModelConfig,
        vocab: Vocabulary,
        concepts: ConceptMap,
        buckets: BucketSpec,
        store: ParamStore,
    }

    impl Fixture {
        fn new() -> Self {
            let config = ModelConfig::toy();
            let vocab = vocab();
            let concepts = ConceptMap::synthetic(&vocab, config.d_concept);
            let buckets = buckets(&vocab);
            let (store, _) = init_params(&config, &vocab, 42).unwrap();
            Fixture { config, vocab, concepts, buckets, store }
        }

        fn ctx(&self) -> EncoderContext<'_> {
            EncoderContext { config: &self.config, vocab: &self.vocab, concepts: &self.concepts, buckets: &self.buckets }
        }

        fn encode(&self, seq: &PatientSequence) -> (Graph, EncodedHistory) {
            let mut graph = Graph::new();
            let bound = BoundParams::bind(&mut graph, &self.store).unwrap();
            let hist = encode_history(&mut graph, &self.store, &bound, self.ctx(), seq).unwrap();
            (graph, hist)
        }
    }

    #[test]
    fn summary_shape_and_relative_times() {
        let fx = Fixture::new();
        let (graph, hist) = fx.encode(&sequence());
        assert_eq!(hist.n_pos(), 5);
        assert_eq!(graph.shape(hist.summary), &[5, fx.config.d_summary()]);
        assert_eq!(hist.taus, vec![0.0, 0.0, 2.0, 2.0, 5.0]);
        assert_eq!(hist.t_origin, 10.0);
        assert!(graph.value(hist.summary).iter().all(|v| v.is_finite()));
    }

    #[test]
    fn encoding_is_deterministic() {
        let fx = Fixture::new();
        let (ga, ha) = fx.encode(&sequence());
        let (gb, hb) = fx.encode(&sequence());
        assert_eq!(ga.value(ha.summary), gb.value(hb.summary));
    }

    #[test]
    fn later_events_cannot_reach_earlier_rows() {
        let fx = Fixture::new();
        let base = sequence();
        let mut changed = base.clone();
        changed.events[3] = Event { type_id: 2, t: 16.0 };
        let (ga, ha) = fx.encode(&base);
        let (gb, hb) = fx.encode(&changed);
        let d = fx.config.d_summary();
        let a = ga.value(ha.summary);
        let b = gb.value(hb.summary);
        assert_eq!(&a[..4 * d], &b[..4 * d]);
        assert_ne!(&a[4 * d..], &b[4 * d..]);
    }

    #[test]
    fn statics_enter_at_position_zero_and_propagate() {
        let fx = Fixture::new();
        let base = sequence();
        let mut changed = base.clone();
        changed.statics.levels[0] = 1;
        let (ga, ha) = fx.encode(&base);
        let (gb, hb) = fx.encode(&changed);
        let d = fx.config.d_summary();
        let a = ga.value(ha.summary);
        let b = gb.value(hb.summary);
        assert_ne!(&a[..d], &b[..d]);
        assert_ne!(&a[4 * d..], &b[4 * d..]);
    }

    #[test]
    fn measurements_join_by_carry_forward() {
        let fx = Fixture::new();
        let base = sequence();
        let mut without = base.clone();
        without.numerics.clear();
        let (ga, ha) = fx.encode(&base);
        let (gb, hb) = fx.encode(&without);
        let d = fx.config.d_summary();
        let a = ga.value(ha.summary);
        let b = gb.value(hb.summary);
        // Positions 0 and 1 sit at relative time 0, before the first
        // observation at 1.0, so both read the null row.
        assert_eq!(&a[..2 * d], &b[..2 * d]);
        // Positions 2..4 sit at or after it and differ in the carried slice.
        assert_ne!(&a[2 * d..3 * d], &b[2 * d..3 * d]);

        // A same-time observation is visible: obs at 11.0 has relative time
        // 1.0; position 2 (relative 2.0) reads the first obs, position 4
        // (relative 5.0) reads the second.
        let mut moved = base.clone();
        moved.numerics[1].t = 20.0;
        let (gc, hc) = fx.encode(&moved);
        let c = gc.value(hc.summary);
        assert_eq!(&a[2 * d..3 * d], &c[2 * d..3 * d]);
        assert_ne!(&a[4 * d..], &c[4 * d..]);
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let fx = Fixture::new();
        let ctx = fx.ctx();
        let mut graph = Graph::new();
        let bound = BoundParams::bind(&mut graph, &fx.store).unwrap();

        let mut empty = sequence();
        empty.events.clear();
        assert!(matches!(encode_history(&mut graph, &fx.store, &bound, ctx, &empty), Err(ModelError::EmptySequence)));

        let mut disordered = sequence();
        disordered.events[2].t = 1.0;
        assert!(matches!(encode_history(&mut graph, &fx.store, &bound, ctx, &disordered), Err(ModelError::TimeOrder(2))));

        let mut alien = sequence();
        alien.events[0].type_id = 99;
        assert!(matches!(encode_history(&mut graph, &fx.store, &bound, ctx, &alien), Err(ModelError::BadConfig(_))));

        // Static pseudo-types sit at the top of the id space and are
        // legal events: simulated continuations can produce them.
        let mut pseudo = sequence();
        pseudo.events[0].type_id = fx.vocab.n_types();
        assert!(encode_history(&mut graph, &fx.store, &bound, ctx, &pseudo).is_ok());

        let narrow = ConceptMap::synthetic(&fx.vocab, fx.config.d_concept + 1);
        let bad_ctx = EncoderContext { concepts: &narrow, ..ctx };
        assert!(matches!(
            encode_history(&mut graph, &fx.store, &bound, bad_ctx, &sequence()),
            Err(ModelError::ConceptWidth { .. })
        ));
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let fx = Fixture::new();
        let seq = sequence();

        let loss_of = |store: &ParamStore| -> f64 {
            let mut graph = Graph::new();
            let bound = BoundParams::bind(&mut graph, store).unwrap();
            let hist = encode_history(&mut graph, store, &bound, fx.ctx(), &seq).unwrap();
            let total = graph.sum(hist.summary).unwrap();
            graph.value(total)[0]
        };

        let mut graph = Graph::new();
        let bound = BoundParams::bind(&mut graph, &fx.store).unwrap();
        let hist = encode_history(&mut graph, &fx.store, &bound, fx.ctx(), &seq).unwrap();
        let total = graph.sum(hist.summary).unwrap();
        graph.backward(total).unwrap();
        let mut store = fx.store.clone();
        bound.absorb_grads(&graph, &mut store).unwrap();

        let mut rng = derive_rng(7, "encoder-gradcheck");
        let names: Vec<String> = store.iter().map(|(n, _)| n.to_string()).collect();
        let mut worst = 0.0f64;
        for _ in 0..24 {
            let name = names.choose(&mut rng).unwrap().clone();
            let len = store.by_name(&name).unwrap().values().len();
            let coord = rng.gen_range(0..len);
            let analytic = store.by_name(&name).unwrap().grad().unwrap()[coord] as f64;

            let mut probe = fx.store.clone();
            let id = probe.id(&name).unwrap();
            let base = probe.get(id).values()[coord];
            let eps = 1e-3f32;
            probe.get_mut(id).values_mut()[coord] = base + eps;
            let hi_x = probe.get(id).values()[coord] as f64;
            let hi = loss_of(&probe);
            probe.get_mut(id).values_mut()[coord] = base - eps;
            let lo_x = probe.get(id).values()[coord] as f64;
            let lo = loss_of(&probe);
            let numeric = (hi - lo) / (hi_x - lo_x);

            let err = (analytic - numeric).abs() / analytic.abs().max(1.0);
            worst = worst.max(err);
        }
        assert!(worst < 1e-3, "worst relative gradient error {worst}");
    }
}
