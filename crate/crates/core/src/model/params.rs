//! Canonical parameter names, shapes, and initialization.

use rand::Rng;

use super::{ModelConfig, ModelError, Result};
use crate::autodiff::{Graph, ParamStore, Tensor, Var};
use crate::data::{Vocabulary, N_BUCKETS};
use crate::rng::derive_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Init {
    /// Xavier-uniform weight matrix.
    Matrix,
    /// Zero-initialized bias row.
    Bias,
    /// Uniform(-0.1, 0.1) lookup table.
    Embedding,
}

#[derive(Debug, Clone)]
struct Entry {
    name: String,
    shape: [usize; 2],
    init: Init,
}

/// The full set of parameter names and shapes implied by a config and
/// vocabulary. Checkpoints are validated against this before use.
#[derive(Debug, Clone)]
pub struct ParamLayout {
    entries: Vec<Entry>,
    n_types: usize,
    n_tokens: usize,
}

impl ParamLayout {
    pub fn new(config: &ModelConfig, vocab: &Vocabulary) -> Result<Self> {
        config.validate()?;
        if vocab.n_indicative() == 0 {
            return Err(ModelError::BadConfig("vocabulary has no indicative event types".into()));
        }
        for cat in 0..vocab.n_static_categories() {
            if vocab.n_levels(cat) == 0 {
                return Err(ModelError::BadConfig(format!("static category {:?} has no levels", vocab.static_category(cat))));
            }
        }
        let n_types = vocab.n_types();
        let n_tokens = vocab.n_numeric() * N_BUCKETS + 1;
        let c = config;
        let d_head = c.d_model / c.n_heads;
        let d_sub_head = c.d_sub / c.n_sub_heads;

        let mut entries = Vec::new();
        let mut push = |name: String, shape: [usize; 2], init: Init| entries.push(Entry { name, shape, init });

        push("embed/type".into(), [1 + n_types, c.d_type], Init::Embedding);
        for cat in 0..vocab.n_static_categories() {
            push(format!("embed/{}", vocab.static_category(cat)), [vocab.n_levels(cat), c.d_type], Init::Embedding);
        }

        push("encoder/w_in".into(), [c.d_type + c.d_time + c.d_concept, c.d_model], Init::Matrix);
        push("encoder/b_in".into(), [1, c.d_model], Init::Bias);
        for layer in 0..c.n_layers {
            block(&mut push, &format!("encoder/l{layer}"), c.d_model, c.n_heads, d_head);
        }

        push("sub/embed".into(), [n_tokens, c.d_sub], Init::Embedding);
        push("sub/null".into(), [1, c.d_sub], Init::Embedding);
        push("sub/w_in".into(), [c.d_sub + c.d_time, c.d_sub], Init::Matrix);
        push("sub/b_in".into(), [1, c.d_sub], Init::Bias);
        for layer in 0..c.n_sub_layers {
            block(&mut push, &format!("sub/l{layer}"), c.d_sub, c.n_sub_heads, d_sub_head);
        }

        push("head/w1".into(), [c.d_summary() + c.d_time, c.d_hidden], Init::Matrix);
        push("head/b1".into(), [1, c.d_hidden], Init::Bias);
        push("head/w2".into(), [c.d_hidden, n_types], Init::Matrix);
        push("head/b2".into(), [1, n_types], Init::Bias);

        Ok(ParamLayout { entries, n_types, n_tokens })
    }

    pub fn n_types(&self) -> usize {
        self.n_types
    }

    /// Size of the measurement token space (id 0 reserved, then
    /// `N_BUCKETS` tokens per numeric concept).
    pub fn n_tokens(&self) -> usize {
        self.n_tokens
    }

    pub fn n_params(&self) -> usize {
        self.entries.iter().map(|e| e.shape[0] * e.shape[1]).sum()
    }

    /// Checks that a store holds exactly the expected tensors.
    pub fn validate(&self, store: &ParamStore) -> Result<()> {
        for entry in &self.entries {
            let tensor = store.by_name(&entry.name).ok_or_else(|| ModelError::MissingParam(entry.name.clone()))?;
            if tensor.shape() != entry.shape {
                return Err(ModelError::BadShape {
                    name: entry.name.clone(),
                    got: tensor.shape().to_vec(),
                    expect: entry.shape.to_vec(),
                });
            }
        }
        if store.len() != self.entries.len() {
            let expected: std::collections::BTreeSet<&str> = self.entries.iter().map(|e| e.name.as_str()).collect();
            let extra = store.iter().map(|(n, _)| n).find(|n| !expected.contains(n)).unwrap_or("?");
            return Err(ModelError::BadConfig(format!("checkpoint has unexpected tensor {extra:?}")));
        }
        Ok(())
    }
}

fn block(push: &mut impl FnMut(String, [usize; 2], Init), prefix: &str, d: usize, n_heads: usize, d_head: usize) {
    for h in 0..n_heads {
        push(format!("{prefix}/h{h}/wq"), [d, d_head], Init::Matrix);
        push(format!("{prefix}/h{h}/wk"), [d, d_head], Init::Matrix);
        push(format!("{prefix}/h{h}/wv"), [d, d_head], Init::Matrix);
    }
    push(format!("{prefix}/wo"), [d, d], Init::Matrix);
    push(format!("{prefix}/bo"), [1, d], Init::Bias);
    push(format!("{prefix}/w1"), [d, 2 * d], Init::Matrix);
    push(format!("{prefix}/b1"), [1, 2 * d], Init::Bias);
    push(format!("{prefix}/w2"), [2 * d, d], Init::Matrix);
    push(format!("{prefix}/b2"), [1, d], Init::Bias);
}

/// Fresh trainable parameters in canonical order. Weight matrices get
/// Xavier-uniform draws, biases start at zero, embeddings at
/// Uniform(-0.1, 0.1); the draw order is fixed so a seed pins every value.
pub fn init_params(config: &ModelConfig, vocab: &Vocabulary, seed: u64) -> Result<(ParamStore, ParamLayout)> {
    let layout = ParamLayout::new(config, vocab)?;
    let mut rng = derive_rng(seed, "init");
    let mut store = ParamStore::new();
    for entry in &layout.entries {
        let [rows, cols] = entry.shape;
        let n = rows * cols;
        let values: Vec<f32> = match entry.init {
            Init::Matrix => {
                let limit = (6.0 / (rows + cols) as f64).sqrt() as f32;
                (0..n).map(|_| (rng.gen::<f32>() * 2.0 - 1.0) * limit).collect()
            }
            Init::Bias => vec![0.0; n],
            Init::Embedding => (0..n).map(|_| (rng.gen::<f32>() * 2.0 - 1.0) * 0.1).collect(),
        };
        store.insert(&entry.name, Tensor::param(vec![rows, cols], values)?)?;
    }
    Ok((store, layout))
}

/// Layout for a store loaded from a checkpoint, verifying names and shapes.
pub fn layout_from_store(config: &ModelConfig, vocab: &Vocabulary, store: &ParamStore) -> Result<ParamLayout> {
    let layout = ParamLayout::new(config, vocab)?;
    layout.validate(store)?;
    Ok(layout)
}

/// Every parameter entered once onto a tape, so a forward pass shares one
/// tape node per tensor and the backward pass accumulates cleanly.
#[derive(Debug, Clone)]
pub struct BoundParams {
    vars: Vec<Var>,
}

impl BoundParams {
    pub fn bind(graph: &mut Graph, store: &ParamStore) -> Result<Self> {
        let vars = store.iter().map(|(_, t)| graph.leaf(t)).collect::<std::result::Result<_, _>>()?;
        Ok(BoundParams { vars })
    }

    /// Tape node for a named parameter.
    pub fn var(&self, store: &ParamStore, name: &str) -> Result<Var> {
        store.id(name).map(|id| self.vars[id]).ok_or_else(|| ModelError::MissingParam(name.to_string()))
    }

    /// Adds this tape's leaf gradients into the store (summing across
    /// sequences in a batch); call after `Graph::backward`.
    pub fn absorb_grads(&self, graph: &Graph, store: &mut ParamStore) -> Result<()> {
        for (id, &var) in self.vars.iter().enumerate() {
            store.get_mut(id).accumulate_grad(graph.grad(var))?;
        }
        Ok(())
    }
}
