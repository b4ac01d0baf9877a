//! Entity-embedding rating network.
//!
//! Six categorical inputs (user, movie, two genre slots, two keyword slots)
//! are looked up in four embedding tables, concatenated, passed through a
//! ReLU dense stack and reduced to one linear output: the predicted rating.
//! Genre slots share one table, keyword slots share another. Row 0 of every
//! table is the PAD vector and is held at exactly zero.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::{EncodedExample, VocabSizes, FIRST_TOKEN, PAD};
use crate::error::{Error, Result};
use crate::rng;

const EMBEDDING_INIT_BOUND: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub dim_user: usize,
    pub dim_movie: usize,
    /// Shared by the genre and keyword tables.
    pub dim_cat: usize,
    pub hidden_sizes: Vec<usize>,
    pub rating_min: f64,
    pub rating_max: f64,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub test_frac: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dim_user: 32,
            dim_movie: 32,
            dim_cat: 8,
            hidden_sizes: vec![64, 32],
            rating_min: 0.5,
            rating_max: 5.0,
            learning_rate: 0.001,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 1024,
            epochs: 20,
            seed: 42,
            test_frac: 0.2,
        }
    }
}

impl ModelConfig {
    /// Width of the concatenated embedding input.
    pub fn input_width(&self) -> usize {
        self.dim_user + self.dim_movie + 4 * self.dim_cat
    }

    /// Width of a movie content vector: movie, mean genre, mean keyword.
    pub fn content_width(&self) -> usize {
        self.dim_movie + 2 * self.dim_cat
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Argument(m));
        if self.dim_user == 0 || self.dim_movie == 0 || self.dim_cat == 0 {
            return fail("embedding dimensions must be at least 1".into());
        }
        if let Some(i) = self.hidden_sizes.iter().position(|&h| h == 0) {
            return fail(format!("hidden layer {i} has width 0"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if !self.rating_min.is_finite()
            || !self.rating_max.is_finite()
            || self.rating_min >= self.rating_max
        {
            return fail(format!(
                "rating range [{}, {}] is empty",
                self.rating_min, self.rating_max
            ));
        }
        for (name, beta) in [("beta1", self.adam_beta1), ("beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return fail(format!("adam {name} must be in [0, 1), got {beta}"));
            }
        }
        if self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return fail(format!(
                "adam epsilon must be positive, got {}",
                self.adam_eps
            ));
        }
        if self.batch_size == 0 {
            return fail("batch size must be at least 1".into());
        }
        if !(self.test_frac > 0.0 && self.test_frac < 1.0) {
            return fail(format!(
                "test fraction must be in (0, 1), got {}",
                self.test_frac
            ));
        }
        Ok(())
    }
}

/// Learnable index → vector map, row-major `rows × dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    pub rows: usize,
    pub dim: usize,
    pub weights: Vec<f64>,
}

impl EmbeddingTable {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        EmbeddingTable {
            rows,
            dim,
            weights: vec![0.0; rows * dim],
        }
    }

    pub fn lookup(&self, idx: usize) -> Result<Vec<f64>> {
        self.check(idx)?;
        Ok(self.row(idx).to_vec())
    }

    pub(crate) fn check(&self, idx: usize) -> Result<()> {
        if idx >= self.rows {
            return Err(Error::Index {
                what: "embedding table",
                index: idx,
                len: self.rows,
            });
        }
        Ok(())
    }

    /// Panics when `idx` is out of bounds.
    pub fn row(&self, idx: usize) -> &[f64] {
        &self.weights[idx * self.dim..(idx + 1) * self.dim]
    }

    pub fn row_mut(&mut self, idx: usize) -> &mut [f64] {
        &mut self.weights[idx * self.dim..(idx + 1) * self.dim]
    }

    fn zero_pad(&mut self) {
        if self.rows > PAD {
            self.row_mut(PAD).fill(0.0);
        }
    }
}

/// `y = W x + b` with `W` stored row-major `out_dim × in_dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        DenseLayer {
            in_dim,
            out_dim,
            weight: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    fn apply(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.bias.iter().enumerate().map(|(o, &b)| {
            let row = &self.weight[o * self.in_dim..(o + 1) * self.in_dim];
            b + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>()
        }));
    }
}

/// Storage shared by parameters and their gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensors {
    pub emb_user: EmbeddingTable,
    pub emb_movie: EmbeddingTable,
    pub emb_genre: EmbeddingTable,
    pub emb_keyword: EmbeddingTable,
    pub hidden: Vec<DenseLayer>,
    pub output: DenseLayer,
}

impl Tensors {
    fn zeros(sizes: VocabSizes, config: &ModelConfig) -> Self {
        let mut width = config.input_width();
        let hidden = config
            .hidden_sizes
            .iter()
            .map(|&h| {
                let layer = DenseLayer::zeros(width, h);
                width = h;
                layer
            })
            .collect();
        Tensors {
            emb_user: EmbeddingTable::zeros(sizes.user, config.dim_user),
            emb_movie: EmbeddingTable::zeros(sizes.movie, config.dim_movie),
            emb_genre: EmbeddingTable::zeros(sizes.genre, config.dim_cat),
            emb_keyword: EmbeddingTable::zeros(sizes.keyword, config.dim_cat),
            hidden,
            output: DenseLayer::zeros(width, 1),
        }
    }

    pub fn tables(&self) -> [&EmbeddingTable; 4] {
        [
            &self.emb_user,
            &self.emb_movie,
            &self.emb_genre,
            &self.emb_keyword,
        ]
    }

    fn tables_mut(&mut self) -> [&mut EmbeddingTable; 4] {
        [
            &mut self.emb_user,
            &mut self.emb_movie,
            &mut self.emb_genre,
            &mut self.emb_keyword,
        ]
    }

    /// Every parameter buffer in a fixed order.
    pub fn buffers(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self.tables().iter().map(|t| t.weights.as_slice()).collect();
        for layer in self.hidden.iter().chain(std::iter::once(&self.output)) {
            out.push(&layer.weight);
            out.push(&layer.bias);
        }
        out
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        let Tensors {
            emb_user,
            emb_movie,
            emb_genre,
            emb_keyword,
            hidden,
            output,
        } = self;
        let mut out: Vec<&mut [f64]> = vec![
            &mut emb_user.weights,
            &mut emb_movie.weights,
            &mut emb_genre.weights,
            &mut emb_keyword.weights,
        ];
        for layer in hidden.iter_mut().chain(std::iter::once(output)) {
            out.push(&mut layer.weight);
            out.push(&mut layer.bias);
        }
        out
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill_zero();
        z
    }

    pub fn fill_zero(&mut self) {
        for b in self.buffers_mut() {
            b.fill(0.0);
        }
    }

    pub fn zero_pad_rows(&mut self) {
        for t in self.tables_mut() {
            t.zero_pad();
        }
    }

    pub fn same_shape(&self, other: &Tensors) -> bool {
        let a = self.buffers();
        let b = other.buffers();
        a.len() == b.len()
            && a.iter().zip(&b).all(|(x, y)| x.len() == y.len())
            && self
                .tables()
                .iter()
                .zip(other.tables())
                .all(|(x, y)| x.rows == y.rows && x.dim == y.dim)
            && self
                .hidden
                .iter()
                .chain(std::iter::once(&self.output))
                .zip(other.hidden.iter().chain(std::iter::once(&other.output)))
                .all(|(x, y)| x.in_dim == y.in_dim && x.out_dim == y.out_dim)
    }
}

/// ∂loss/∂parameter, shaped exactly like the model's parameters.
pub type Gradients = Tensors;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub tensors: Tensors,
    pub config: ModelConfig,
}

impl std::ops::Deref for ModelParams {
    type Target = Tensors;
    fn deref(&self) -> &Tensors {
        &self.tensors
    }
}

impl std::ops::DerefMut for ModelParams {
    fn deref_mut(&mut self) -> &mut Tensors {
        &mut self.tensors
    }
}

/// Intermediate activations of one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardCache {
    /// Concatenated embeddings.
    pub input: Vec<f64>,
    /// Pre-activation of each hidden layer.
    pub pre: Vec<Vec<f64>>,
    /// ReLU output of each hidden layer.
    pub act: Vec<Vec<f64>>,
    pub prediction: f64,
}

impl ForwardCache {
    fn last(&self) -> &[f64] {
        self.act.last().unwrap_or(&self.input)
    }
}

/// Squared error.
pub fn loss(prediction: f64, target: f64) -> f64 {
    let d = prediction - target;
    d * d
}

fn slots(x: &EncodedExample) -> [(usize, usize); 6] {
    // (table number, row) in concatenation order
    [
        (0, x.user_idx),
        (1, x.movie_idx),
        (2, x.genre1_idx),
        (2, x.genre2_idx),
        (3, x.kw1_idx),
        (3, x.kw2_idx),
    ]
}

fn init_uniform(buf: &mut [f64], bound: f64, rng: &mut rng::Rng) {
    for w in buf {
        *w = rng.random_range(-bound..bound);
    }
}

impl ModelParams {
    /// Embeddings from U(−0.05, 0.05), dense weights from U(−a, a) with
    /// a = sqrt(6 / (fan_in + fan_out)), zero biases, zero PAD rows.
    pub fn init(sizes: VocabSizes, config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        for (name, n) in [
            ("user", sizes.user),
            ("movie", sizes.movie),
            ("genre", sizes.genre),
            ("keyword", sizes.keyword),
        ] {
            if n < FIRST_TOKEN {
                return Err(Error::Structure(format!(
                    "{name} vocabulary has {n} rows; PAD and UNK need at least 2"
                )));
            }
        }
        let mut tensors = Tensors::zeros(sizes, config);
        let mut rng = rng::seeded(seed);
        for t in tensors.tables_mut() {
            init_uniform(&mut t.weights, EMBEDDING_INIT_BOUND, &mut rng);
        }
        for layer in tensors
            .hidden
            .iter_mut()
            .chain(std::iter::once(&mut tensors.output))
        {
            let bound = (6.0 / (layer.in_dim + layer.out_dim) as f64).sqrt();
            init_uniform(&mut layer.weight, bound, &mut rng);
        }
        tensors.zero_pad_rows();
        Ok(ModelParams {
            tensors,
            config: config.clone(),
        })
    }

    /// Check that table shapes and layer widths agree with the config.
    pub fn validate(&self) -> Result<()> {
        let c = &self.config;
        for (t, dim, name) in [
            (&self.emb_user, c.dim_user, "emb_user"),
            (&self.emb_movie, c.dim_movie, "emb_movie"),
            (&self.emb_genre, c.dim_cat, "emb_genre"),
            (&self.emb_keyword, c.dim_cat, "emb_keyword"),
        ] {
            if t.dim != dim || t.weights.len() != t.rows * t.dim || t.rows < FIRST_TOKEN {
                return Err(Error::Structure(format!("{name} has inconsistent shape")));
            }
        }
        if self.hidden.len() != c.hidden_sizes.len() {
            return Err(Error::Structure(
                "hidden layer count differs from config".into(),
            ));
        }
        let mut width = c.input_width();
        for (i, layer) in self
            .hidden
            .iter()
            .chain(std::iter::once(&self.output))
            .enumerate()
        {
            let expected_out = c.hidden_sizes.get(i).copied().unwrap_or(1);
            if layer.in_dim != width
                || layer.out_dim != expected_out
                || layer.weight.len() != layer.in_dim * layer.out_dim
                || layer.bias.len() != layer.out_dim
            {
                return Err(Error::Structure(format!(
                    "dense layer {i} has inconsistent shape"
                )));
            }
            width = layer.out_dim;
        }
        Ok(())
    }

    fn check_indices(&self, x: &EncodedExample) -> Result<()> {
        let tables = self.tables();
        for (t, idx) in slots(x) {
            tables[t].check(idx)?;
        }
        Ok(())
    }

    pub fn forward(&self, x: &EncodedExample) -> Result<(f64, ForwardCache)> {
        self.check_indices(x)?;
        let tables = self.tables();
        let mut input = Vec::with_capacity(self.config.input_width());
        for (t, idx) in slots(x) {
            input.extend_from_slice(tables[t].row(idx));
        }
        let mut pre = Vec::with_capacity(self.hidden.len());
        let mut act: Vec<Vec<f64>> = Vec::with_capacity(self.hidden.len());
        for layer in &self.hidden {
            let h = act.last().unwrap_or(&input);
            let mut z = Vec::new();
            layer.apply(h, &mut z);
            act.push(z.iter().map(|&v| v.max(0.0)).collect());
            pre.push(z);
        }
        let mut out = Vec::with_capacity(1);
        self.output.apply(act.last().unwrap_or(&input), &mut out);
        let prediction = out[0];
        Ok((
            prediction,
            ForwardCache {
                input,
                pre,
                act,
                prediction,
            },
        ))
    }

    pub fn predict(&self, x: &EncodedExample) -> Result<f64> {
        self.forward(x).map(|(p, _)| p)
    }

    pub fn clamp(&self, raw: f64) -> f64 {
        raw.max(self.config.rating_min).min(self.config.rating_max)
    }

    pub fn predict_clamped(&self, x: &EncodedExample) -> Result<f64> {
        self.predict(x).map(|p| self.clamp(p))
    }

    /// Exact gradient of `loss(forward(x), target)` for one example.
    pub fn backward(&self, x: &EncodedExample, cache: &ForwardCache, target: f64) -> Gradients {
        let mut grads = self.tensors.zeros_like();
        self.accumulate_gradients(x, cache, target, 1.0, &mut grads);
        grads
    }

    /// Add `scale` times the example gradient into `grads`.
    ///
    /// ReLU'(0) is taken as 0. Embedding gradients land only in the rows
    /// `x` indexes, and never in a PAD row.
    pub fn accumulate_gradients(
        &self,
        x: &EncodedExample,
        cache: &ForwardCache,
        target: f64,
        scale: f64,
        grads: &mut Gradients,
    ) {
        let d_pred = 2.0 * (cache.prediction - target) * scale;

        let h_last = cache.last();
        let out = &mut grads.output;
        for (g, h) in out.weight.iter_mut().zip(h_last) {
            *g += d_pred * h;
        }
        out.bias[0] += d_pred;
        let mut upstream: Vec<f64> = self.output.weight.iter().map(|w| d_pred * w).collect();

        for (l, layer) in self.hidden.iter().enumerate().rev() {
            let below = if l == 0 {
                &cache.input
            } else {
                &cache.act[l - 1]
            };
            let d_pre: Vec<f64> = upstream
                .iter()
                .zip(&cache.pre[l])
                .map(|(&d, &z)| if z > 0.0 { d } else { 0.0 })
                .collect();
            let g = &mut grads.hidden[l];
            let mut next = vec![0.0; layer.in_dim];
            for (o, &d) in d_pre.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g.bias[o] += d;
                let row = o * layer.in_dim..(o + 1) * layer.in_dim;
                for ((gw, &h), (&w, n)) in g.weight[row.clone()]
                    .iter_mut()
                    .zip(below)
                    .zip(layer.weight[row].iter().zip(next.iter_mut()))
                {
                    *gw += d * h;
                    *n += d * w;
                }
            }
            upstream = next;
        }

        let mut offset = 0;
        let tables = grads.tables_mut();
        for (t, idx) in slots(x) {
            let dim = tables[t].dim;
            if idx != PAD {
                for (g, d) in tables[t]
                    .row_mut(idx)
                    .iter_mut()
                    .zip(&upstream[offset..offset + dim])
                {
                    *g += d;
                }
            }
            offset += dim;
        }
    }
}

/// Adam moment estimates, shaped like the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub first: Tensors,
    pub second: Tensors,
    /// Updates applied so far.
    pub steps: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros = params.tensors.zeros_like();
        AdamState {
            first: zeros.clone(),
            second: zeros,
            steps: 0,
        }
    }
}

/// One bias-corrected Adam update at 1-based `step`, using the
/// learning rate and moment constants of `params.config`.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &Gradients,
    state: &mut AdamState,
    step: u64,
) -> Result<()> {
    if step == 0 {
        return Err(Error::Argument("adam step count starts at 1".into()));
    }
    if !params.same_shape(grads)
        || !params.same_shape(&state.first)
        || !params.same_shape(&state.second)
    {
        return Err(Error::Structure(
            "gradient or optimizer state shape differs from parameters".into(),
        ));
    }
    let ModelConfig {
        learning_rate: lr,
        adam_beta1: b1,
        adam_beta2: b2,
        adam_eps: eps,
        ..
    } = params.config;
    let t = i32::try_from(step).unwrap_or(i32::MAX);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let AdamState { first, second, .. } = state;
    for (((p, g), m), v) in params
        .tensors
        .buffers_mut()
        .into_iter()
        .zip(grads.buffers())
        .zip(first.buffers_mut())
        .zip(second.buffers_mut())
    {
        for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    params.tensors.zero_pad_rows();
    Ok(())
}
