//! Sequence negative log-likelihood: a log-intensity term per observed
//! event plus Monte-Carlo survival terms over the gaps between them.

use rand::Rng;

use super::{Result, TrainError};
use crate::autodiff::{Graph, ParamStore, Var};
use crate::data::PatientSequence;
use crate::model::{encode_history, intensities_at, BoundParams, EncoderContext};

pub const MAX_MC_SAMPLES: usize = 50;

/// Builds the NLL of `seq` on `graph` and returns it with the event count.
///
/// Each event contributes the log of its type's intensity at its time,
/// conditioned on everything earlier (the first event conditions on the
/// statics slot alone). Each positive-width gap contributes a survival
/// estimate: `mc_n` stratified-uniform samples of the total intensity,
/// scaled by the gap width. Zero-width gaps between same-quarter events
/// contribute nothing.
pub fn sequence_nll<R: Rng>(
    graph: &mut Graph,
    store: &ParamStore,
    bound: &BoundParams,
    ctx: EncoderContext<'_>,
    seq: &PatientSequence,
    mc_n: usize,
    rng: &mut R,
) -> Result<(Var, usize)> {
    if mc_n == 0 || mc_n > MAX_MC_SAMPLES {
        return Err(TrainError::BadConfig(format!("mc_n {mc_n} must be in 1..={MAX_MC_SAMPLES}")));
    }
    let history = encode_history(graph, store, bound, ctx, seq)?;
    let n = seq.events.len();
    let n_types = ctx.vocab.n_types();

    // Event terms: the i-th event reads position i (statics plus events
    // before it) at its own time.
    let positions: Vec<usize> = (0..n).collect();
    let event_taus: Vec<f64> = history.taus[1..].to_vec();
    let rates = intensities_at(graph, store, bound, ctx.config, &history, &positions, &event_taus)?;
    let mut select = vec![0.0; n * n_types];
    for (i, e) in seq.events.iter().enumerate() {
        select[i * n_types + (e.type_id - 1)] = 1.0;
    }
    let select = graph.constant_matrix(n, n_types, select)?;
    let targeted = graph.mul(rates, select)?;
    let ones = graph.constant_matrix(n_types, 1, vec![1.0; n_types])?;
    let per_event = graph.matmul(targeted, ones)?;
    let logs = graph.log(per_event)?;
    let log_term = graph.sum(logs)?;
    let neg_log = graph.scale(log_term, -1.0)?;

    // Survival terms: stratified samples over each positive-width gap,
    // conditioned on the position that opens the gap.
    let mut mc_positions = Vec::new();
    let mut mc_taus = Vec::new();
    let mut mc_weights = Vec::new();
    for p in 1..n {
        let lo = history.taus[p];
        let hi = history.taus[p + 1];
        let width = hi - lo;
        if width <= 0.0 {
            continue;
        }
        let stride = width / mc_n as f64;
        for j in 0..mc_n {
            let u: f64 = rng.gen();
            mc_positions.push(p);
            mc_taus.push(lo + (j as f64 + u) * stride);
            mc_weights.push(stride);
        }
    }
    if mc_positions.is_empty() {
        return Ok((neg_log, n));
    }
    let mc_rates = intensities_at(graph, store, bound, ctx.config, &history, &mc_positions, &mc_taus)?;
    let ones = graph.constant_matrix(n_types, 1, vec![1.0; n_types])?;
    let totals = graph.matmul(mc_rates, ones)?;
    let m = mc_weights.len();
    let weights = graph.constant_matrix(m, 1, mc_weights)?;
    let weighted = graph.mul(totals, weights)?;
    let survival = graph.sum(weighted)?;
    let loss = graph.add(neg_log, survival)?;
    Ok((loss, n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::softplus;
    use crate::data::{Event, FactRow, PatientSequence, StaticProfile, Vocabulary};
    use crate::data::{BucketSpec, N_BUCKETS};
    use crate::model::{init_params, ConceptMap, ModelConfig, ModelError};
    use crate::rng::derive_rng;
    use approx::assert_relative_eq;
    use rand::seq::SliceRandom;

    struct Fixture {
        config: ModelConfig,
        vocab: Vocabulary,
        concepts: ConceptMap,
        buckets: BucketSpec,
        store: ParamStore,
    }

    impl Fixture {
        /// One indicative type plus three single-level static categories:
        /// the four-type toy.
        fn new() -> Fixture {
            let mk = |c: &str, v: Option<f64>| FactRow { patient_id: "1".into(), interval: 3, concept: c.into(), value: v };
            let vocab = Vocabulary::from_facts(&[
                mk("dx_a", None),
                mk("gender:f", None),
                mk("race:w", None),
                mk("pseudo_age:40s", None),
            ])
            .unwrap();
            let config = ModelConfig::toy();
            let concepts = ConceptMap::synthetic(&vocab, config.d_concept);
            let buckets = BucketSpec::fit(&vocab, &[]).unwrap();
            let (store, _) = init_params(&config, &vocab, 5).unwrap();
            Fixture { config, vocab, concepts, buckets, store }
        }

        fn ctx(&self) -> EncoderContext<'_> {
            EncoderContext { config: &self.config, vocab: &self.vocab, concepts: &self.concepts, buckets: &self.buckets }
        }

        /// Zeroes the head so every intensity is exactly `softplus(b2_k)`.
        fn pin_head(&mut self, b2: &[f32]) {
            for name in ["head/w1", "head/b1", "head/w2"] {
                let id = self.store.id(name).unwrap();
                self.store.get_mut(id).values_mut().fill(0.0);
            }
            let id = self.store.id("head/b2").unwrap();
            self.store.get_mut(id).values_mut().copy_from_slice(b2);
        }

        fn loss(&self, seq: &PatientSequence, mc_n: usize, rng_label: &str) -> f64 {
            let mut rng = derive_rng(23, rng_label);
            let mut graph = Graph::new();
            let bound = BoundParams::bind(&mut graph, &self.store).unwrap();
            let (loss, _) = sequence_nll(&mut graph, &self.store, &bound, self.ctx(), seq, mc_n, &mut rng).unwrap();
            graph.value(loss)[0]
        }
    }

    fn seq_at(times: &[f64]) -> PatientSequence {
        PatientSequence {
            patient_id: "1".into(),
            statics: StaticProfile { levels: vec![0, 0, 0] },
            events: times.iter().map(|&t| Event { type_id: 1, t }).collect(),
            numerics: vec![],
            truncated: false,
        }
    }

    #[test]
    fn constant_intensity_gives_the_closed_form() {
        let mut fx = Fixture::new();
        fx.pin_head(&[0.3, -40.0, -40.0, -40.0]);
        let lam_a = softplus(0.3f32 as f64);
        let lam_tot = lam_a + 3.0 * softplus(-40.0f32 as f64);

        // Four events spanning 7 quarters: -4 log lambda_a + 7 lambda_tot.
        let loss = fx.loss(&seq_at(&[0.0, 1.0, 3.0, 7.0]), 4, "mc");
        assert_relative_eq!(loss, -4.0 * lam_a.ln() + 7.0 * lam_tot, max_relative = 1e-12);

        // Same-quarter ties leave only their log terms behind.
        let loss = fx.loss(&seq_at(&[2.0, 2.0, 2.0]), 4, "mc");
        assert_relative_eq!(loss, -3.0 * lam_a.ln(), max_relative = 1e-12);

        // MC sample count cannot matter for a constant integrand.
        let a = fx.loss(&seq_at(&[0.0, 2.0, 5.0]), 1, "mc-a");
        let b = fx.loss(&seq_at(&[0.0, 2.0, 5.0]), 50, "mc-b");
        assert_relative_eq!(a, b, max_relative = 1e-12);
    }

    #[test]
    fn doubling_samples_cuts_estimator_variance() {
        let fx = Fixture::new();
        let seq = seq_at(&[0.0, 2.0, 3.0, 7.0]);
        let spread = |mc_n: usize| {
            let losses: Vec<f64> = (0..100)
                .map(|i| {
                    let mut rng = derive_rng(i, "mc-variance");
                    let mut graph = Graph::new();
                    let bound = BoundParams::bind(&mut graph, &fx.store).unwrap();
                    let (loss, _) =
                        sequence_nll(&mut graph, &fx.store, &bound, fx.ctx(), &seq, mc_n, &mut rng).unwrap();
                    graph.value(loss)[0]
                })
                .collect();
            let mean = losses.iter().sum::<f64>() / losses.len() as f64;
            losses.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / (losses.len() - 1) as f64
        };
        let coarse = spread(4);
        let fine = spread(8);
        assert!(
            coarse / fine >= 1.5,
            "variance {coarse:.3e} at 4 samples vs {fine:.3e} at 8: stratification should at least halve it"
        );
    }

    #[test]
    fn gradients_match_finite_differences() {
        let fx = Fixture::new();
        let seq = seq_at(&[0.0, 1.0, 1.0, 4.0, 6.0, 11.0]);
        let loss_of = |store: &ParamStore| -> f64 {
            let mut rng = derive_rng(11, "mc-grad");
            let mut graph = Graph::new();
            let bound = BoundParams::bind(&mut graph, store).unwrap();
            let (loss, _) = sequence_nll(&mut graph, store, &bound, fx.ctx(), &seq, 3, &mut rng).unwrap();
            graph.value(loss)[0]
        };

        let mut rng = derive_rng(11, "mc-grad");
        let mut graph = Graph::new();
        let bound = BoundParams::bind(&mut graph, &fx.store).unwrap();
        let (loss, n) = sequence_nll(&mut graph, &fx.store, &bound, fx.ctx(), &seq, 3, &mut rng).unwrap();
        assert_eq!(n, 6);
        graph.backward(loss).unwrap();
        let mut store = fx.store.clone();
        bound.absorb_grads(&graph, &mut store).unwrap();

        let mut pick = derive_rng(7, "nll-gradcheck");
        let names: Vec<String> = store.iter().map(|(n, _)| n.to_string()).collect();
        let mut worst = 0.0f64;
        for _ in 0..30 {
            let name = names.choose(&mut pick).unwrap().clone();
            let len = store.by_name(&name).unwrap().values().len();
            let coord = pick.gen_range(0..len);
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

    #[test]
    fn bad_inputs_are_rejected() {
        let fx = Fixture::new();
        let mut rng = derive_rng(1, "mc");
        let mut graph = Graph::new();
        let bound = BoundParams::bind(&mut graph, &fx.store).unwrap();

        let empty = seq_at(&[]);
        let err = sequence_nll(&mut graph, &fx.store, &bound, fx.ctx(), &empty, 4, &mut rng).unwrap_err();
        assert!(matches!(err, TrainError::Model(ModelError::EmptySequence)));

        let seq = seq_at(&[1.0, 2.0]);
        assert!(matches!(
            sequence_nll(&mut graph, &fx.store, &bound, fx.ctx(), &seq, 0, &mut rng),
            Err(TrainError::BadConfig(_))
        ));
        assert!(matches!(
            sequence_nll(&mut graph, &fx.store, &bound, fx.ctx(), &seq, 51, &mut rng),
            Err(TrainError::BadConfig(_))
        ));
    }
}
