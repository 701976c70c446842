//! Intensity head: a position summary plus a query-time encoding maps to
//! one non-negative rate per event type.

use super::encoder::{affine, EncodedHistory};
use super::{BoundParams, ModelConfig, ModelError, Result};
use crate::autodiff::{softplus, Graph, ParamStore, Var};
use crate::model::timeenc::time_features;

/// Rates for a batch of `(position, query time)` pairs, as an
/// `[n_queries, n_types]` tape node. Each query conditions on its
/// position's summary row, so a query at `taus[p] < t <= taus[p+1]`
/// should pass position `p`.
pub fn intensities_at(
    graph: &mut Graph,
    store: &ParamStore,
    bound: &BoundParams,
    config: &ModelConfig,
    history: &EncodedHistory,
    positions: &[usize],
    query_taus: &[f64],
) -> Result<Var> {
    if positions.is_empty() || positions.len() != query_taus.len() {
        return Err(ModelError::BadConfig(format!(
            "query batch pairs {} positions with {} times",
            positions.len(),
            query_taus.len()
        )));
    }
    for (&p, &tau) in positions.iter().zip(query_taus) {
        if p >= history.n_pos() {
            return Err(ModelError::BadConfig(format!("position {p} is outside the {}-position history", history.n_pos())));
        }
        if tau < history.taus[p] {
            return Err(ModelError::QueryBeforeContext { query: tau, context: history.taus[p] });
        }
    }

    let rows = graph.gather_rows(history.summary, positions)?;
    let mut time_vals = Vec::with_capacity(query_taus.len() * config.d_time);
    for &tau in query_taus {
        time_vals.extend(time_features(tau, config.d_time));
    }
    let time_part = graph.constant_matrix(query_taus.len(), config.d_time, time_vals)?;
    let input = graph.concat(1, &[rows, time_part])?;

    let w1 = bound.var(store, "head/w1")?;
    let b1 = bound.var(store, "head/b1")?;
    let w2 = bound.var(store, "head/w2")?;
    let b2 = bound.var(store, "head/b2")?;
    let hidden = affine(graph, input, w1, b1)?;
    let squashed = graph.tanh(hidden)?;
    let raw = affine(graph, squashed, w2, b2)?;
    Ok(graph.softplus(raw)?)
}

/// Rates at a single query time, as a `[1, n_types]` tape node.
pub fn intensity_at(
    graph: &mut Graph,
    store: &ParamStore,
    bound: &BoundParams,
    config: &ModelConfig,
    history: &EncodedHistory,
    position: usize,
    query_tau: f64,
) -> Result<Var> {
    intensities_at(graph, store, bound, config, history, &[position], &[query_tau])
}

/// Head parameters copied out of the store for tape-free evaluation in
/// sampling loops.
#[derive(Debug, Clone)]
pub struct HeadWeights {
    d_time: usize,
    d_hidden: usize,
    n_types: usize,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

impl HeadWeights {
    pub fn n_types(&self) -> usize {
        self.n_types
    }
}

pub fn head_weights(store: &ParamStore, config: &ModelConfig) -> Result<HeadWeights> {
    let tensor = |name: &str| store.by_name(name).ok_or_else(|| ModelError::MissingParam(name.to_string()));
    let w1 = tensor("head/w1")?;
    let b1 = tensor("head/b1")?;
    let w2 = tensor("head/w2")?;
    let b2 = tensor("head/b2")?;
    let d_in = config.d_summary() + config.d_time;
    if w1.shape() != [d_in, config.d_hidden] {
        return Err(ModelError::BadShape { name: "head/w1".into(), got: w1.shape().to_vec(), expect: vec![d_in, config.d_hidden] });
    }
    let n_types = w2.shape()[1];
    if w2.shape() != [config.d_hidden, n_types] || b1.shape() != [1, config.d_hidden] || b2.shape() != [1, n_types] {
        return Err(ModelError::BadShape { name: "head/w2".into(), got: w2.shape().to_vec(), expect: vec![config.d_hidden, n_types] });
    }
    let to_f64 = |t: &crate::autodiff::Tensor| t.values().iter().map(|&x| x as f64).collect();
    Ok(HeadWeights {
        d_time: config.d_time,
        d_hidden: config.d_hidden,
        n_types,
        w1: to_f64(w1),
        b1: to_f64(b1),
        w2: to_f64(w2),
        b2: to_f64(b2),
    })
}

/// Tape-free twin of [`intensities_at`] for one summary row; used inside
/// the thinning sampler where no gradients are needed.
pub fn intensities_f64(head: &HeadWeights, summary_row: &[f64], query_tau: f64) -> Vec<f64> {
    let time = time_features(query_tau, head.d_time);
    let d_in = summary_row.len() + head.d_time;
    debug_assert_eq!(head.w1.len(), d_in * head.d_hidden);

    let mut hidden = head.b1.clone();
    for (k, &x) in summary_row.iter().chain(time.iter()).enumerate() {
        if x == 0.0 {
            continue;
        }
        let wrow = &head.w1[k * head.d_hidden..(k + 1) * head.d_hidden];
        for (h, &w) in hidden.iter_mut().zip(wrow) {
            *h += x * w;
        }
    }
    for h in hidden.iter_mut() {
        *h = h.tanh();
    }

    let mut out = head.b2.clone();
    for (k, &x) in hidden.iter().enumerate() {
        let wrow = &head.w2[k * head.n_types..(k + 1) * head.n_types];
        for (o, &w) in out.iter_mut().zip(wrow) {
            *o += x * w;
        }
    }
    for o in out.iter_mut() {
        *o = softplus(*o);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::ParamStore;
    use crate::data::{BucketSpec, Event, FactRow, NumericObs, PatientSequence, StaticProfile, Vocabulary};
    use crate::model::encoder::{encode_history, EncoderContext};
    use crate::model::{init_params, ConceptMap, ModelConfig};

    struct Fixture {
        config: ModelConfig,
        vocab: Vocabulary,
        concepts: ConceptMap,
        buckets: BucketSpec,
        store: ParamStore,
    }

    fn fixture() -> Fixture {
        let mk = |c: &str, v: Option<f64>| FactRow { patient_id: "1".into(), interval: 3, concept: c.into(), value: v };
        let vocab = Vocabulary::from_facts(&[
            mk("dx_a", None),
            mk("dx_b", None),
            mk("lab_x", Some(1.0)),
            mk("gender:f", None),
            mk("race:a", None),
            mk("pseudo_age:40s", None),
        ])
        .unwrap();
        let config = ModelConfig::toy();
        let concepts = ConceptMap::synthetic(&vocab, config.d_concept);
        let buckets = BucketSpec::fit(&vocab, &[vec![1.0, 2.0, 3.0, 4.0, 5.0]]).unwrap();
        let (store, _) = init_params(&config, &vocab, 11).unwrap();
        Fixture { config, vocab, concepts, buckets, store }
    }

    fn sequence() -> PatientSequence {
        PatientSequence {
            patient_id: "1".into(),
            statics: StaticProfile { levels: vec![0, 0, 0] },
            events: vec![Event { type_id: 1, t: 4.0 }, Event { type_id: 2, t: 6.0 }, Event { type_id: 1, t: 9.0 }],
            numerics: vec![NumericObs { concept: 0, value: 3.5, t: 5.0 }],
            truncated: false,
        }
    }

    fn encode(fx: &Fixture) -> (Graph, BoundParams, EncodedHistory) {
        let mut graph = Graph::new();
        let bound = BoundParams::bind(&mut graph, &fx.store).unwrap();
        let ctx = EncoderContext { config: &fx.config, vocab: &fx.vocab, concepts: &fx.concepts, buckets: &fx.buckets };
        let hist = encode_history(&mut graph, &fx.store, &bound, ctx, &sequence()).unwrap();
        (graph, bound, hist)
    }

    #[test]
    fn rates_are_positive_and_typed() {
        let fx = fixture();
        let (mut graph, bound, hist) = encode(&fx);
        let rates = intensities_at(&mut graph, &fx.store, &bound, &fx.config, &hist, &[0, 1, 3], &[0.0, 1.5, 8.0]).unwrap();
        assert_eq!(graph.shape(rates), &[3, fx.vocab.n_types()]);
        assert!(graph.value(rates).iter().all(|&v| v > 0.0));
    }

    #[test]
    fn queries_cannot_precede_their_context() {
        let fx = fixture();
        let (mut graph, bound, hist) = encode(&fx);
        let err = intensity_at(&mut graph, &fx.store, &bound, &fx.config, &hist, 2, 1.0).unwrap_err();
        assert!(matches!(err, ModelError::QueryBeforeContext { .. }));
        assert!(intensity_at(&mut graph, &fx.store, &bound, &fx.config, &hist, 2, 2.0).is_ok());
    }

    #[test]
    fn tape_free_path_matches_the_tape() {
        let fx = fixture();
        let (mut graph, bound, hist) = encode(&fx);
        let head = head_weights(&fx.store, &fx.config).unwrap();
        assert_eq!(head.n_types(), fx.vocab.n_types());
        for (position, tau) in [(0usize, 0.0f64), (1, 0.7), (2, 3.3), (3, 5.0), (3, 40.0)] {
            let on_tape = intensity_at(&mut graph, &fx.store, &bound, &fx.config, &hist, position, tau).unwrap();
            let row = hist.row(&graph, position);
            let free = intensities_f64(&head, &row, tau);
            for (a, b) in graph.value(on_tape).iter().zip(&free) {
                assert!((a - b).abs() < 1e-9, "tape {a} vs tape-free {b}");
            }
        }
    }

    #[test]
    fn rates_respond_to_query_time() {
        let fx = fixture();
        let (mut graph, bound, hist) = encode(&fx);
        let early = intensity_at(&mut graph, &fx.store, &bound, &fx.config, &hist, 3, 5.0).unwrap();
        let late = intensity_at(&mut graph, &fx.store, &bound, &fx.config, &hist, 3, 9.0).unwrap();
        assert_ne!(graph.value(early), graph.value(late));
    }
}
