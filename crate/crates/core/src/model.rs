//! Small differentiable text classifier.
//!
//! Token embeddings are pooled over the unmasked positions (plain mean, or
//! mean of a single-head self-attention block), then passed through a tanh
//! hidden layer (or straight to the output) and a linear head. All
//! parameters live in one flat vector so that clipping, weight decay and
//! checkpointing work on a single slice.

use std::ops::Range;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{Encoded, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    #[default]
    Mean,
    SelfAttention,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// `tanh` hidden layer followed by the linear output projection.
    #[default]
    Mlp,
    /// Output projection applied directly to the pooled embedding; the
    /// logits are then linear in the input embeddings.
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
    pub max_len: usize,
    pub seed: u64,
    #[serde(default)]
    pub pooling: Pooling,
    #[serde(default)]
    pub head: Head,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("vocab_size", self.vocab_size),
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("max_len", self.max_len),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidConfig(format!("{name} must be at least 1")));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidConfig("num_classes must be at least 2".into()));
        }
        Ok(())
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub probabilities: Vec<f64>,
    /// Arg-max class index; ties go to the lowest index.
    pub predicted: usize,
}

impl Prediction {
    fn from_logits(logits: &[f64]) -> Self {
        let probabilities = softmax(logits);
        Prediction {
            predicted: argmax(&probabilities),
            probabilities,
        }
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    embedding: Range<usize>,
    wq: Range<usize>,
    wk: Range<usize>,
    wv: Range<usize>,
    w1: Range<usize>,
    b1: Range<usize>,
    w2: Range<usize>,
    b2: Range<usize>,
    len: usize,
}

impl Layout {
    fn new(c: &ModelConfig) -> Self {
        let mut at = 0;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        let d = c.embed_dim;
        let attn = if c.pooling == Pooling::SelfAttention { d * d } else { 0 };
        let (hidden_w, hidden_b, out_in) = match c.head {
            Head::Mlp => (c.hidden_dim * d, c.hidden_dim, c.hidden_dim),
            Head::Linear => (0, 0, d),
        };
        let embedding = take(c.vocab_size * d);
        let wq = take(attn);
        let wk = take(attn);
        let wv = take(attn);
        let w1 = take(hidden_w);
        let b1 = take(hidden_b);
        let w2 = take(c.num_classes * out_in);
        let b2 = take(c.num_classes);
        Layout {
            embedding,
            wq,
            wk,
            wv,
            w1,
            b1,
            w2,
            b2,
            len: at,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    layout: Layout,
    params: Vec<f64>,
}

/// Intermediate values kept from the forward pass for backpropagation.
struct Trace {
    valid: Vec<usize>,
    q: Vec<Vec<f64>>,
    k: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    attn: Vec<Vec<f64>>,
    pooled: Vec<f64>,
    hidden: Vec<f64>,
    logits: Vec<f64>,
}

fn uniform(rng: &mut ChaCha8Rng, out: &mut [f64], bound: f64) {
    for p in out {
        *p = rng.gen_range(-bound..bound);
    }
}

/// Deterministic initialisation. The output projection starts at zero, so an
/// untrained model predicts the uniform distribution.
pub fn init_model(config: ModelConfig) -> Result<Model> {
    config.validate()?;
    let layout = Layout::new(&config);
    let mut params = vec![0.0; layout.len];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let d = config.embed_dim as f64;
    uniform(&mut rng, &mut params[layout.embedding.clone()], 1.0);
    let attn_bound = (3.0 / d).sqrt();
    for r in [&layout.wq, &layout.wk, &layout.wv] {
        uniform(&mut rng, &mut params[r.clone()], attn_bound);
    }
    let hidden_bound = (6.0 / (d + config.hidden_dim as f64)).sqrt();
    uniform(&mut rng, &mut params[layout.w1.clone()], hidden_bound);
    Ok(Model {
        config,
        layout,
        params,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `x · W` for a `d × d` row-major `W` (`[in][out]`).
fn vec_mat(x: &[f64], w: &[f64], d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d];
    for (i, &xi) in x.iter().enumerate() {
        for (o, acc) in out.iter_mut().enumerate() {
            *acc += xi * w[i * d + o];
        }
    }
    out
}

impl Model {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Output projection, `num_classes × (hidden_dim | embed_dim)` row-major.
    pub fn output_weights_mut(&mut self) -> &mut [f64] {
        &mut self.params[self.layout.w2.clone()]
    }

    pub fn embedding_row(&self, id: usize) -> &[f64] {
        let d = self.config.embed_dim;
        let base = self.layout.embedding.start + id * d;
        &self.params[base..base + d]
    }

    fn check_ids(&self, input: &Encoded) -> Result<()> {
        if input.ids.len() != self.config.max_len {
            return Err(Error::DimensionMismatch(format!(
                "input length {} != max_len {}",
                input.ids.len(),
                self.config.max_len
            )));
        }
        if let Some(&bad) = input.ids.iter().find(|&&id| id >= self.config.vocab_size) {
            return Err(Error::DimensionMismatch(format!(
                "token id {bad} outside vocabulary of size {}",
                self.config.vocab_size
            )));
        }
        Ok(())
    }

    /// Embedding-table lookup, `max_len × embed_dim`.
    pub fn embed(&self, input: &Encoded) -> Result<Matrix> {
        self.check_ids(input)?;
        let d = self.config.embed_dim;
        let mut m = Matrix::zeros(input.ids.len(), d);
        for (pos, &id) in input.ids.iter().enumerate() {
            m.row_mut(pos).copy_from_slice(self.embedding_row(id));
        }
        Ok(m)
    }

    /// A matrix with every row equal to the embedding of `id`.
    pub fn constant_embedding(&self, id: usize) -> Matrix {
        let mut m = Matrix::zeros(self.config.max_len, self.config.embed_dim);
        for pos in 0..m.rows {
            m.row_mut(pos).copy_from_slice(self.embedding_row(id));
        }
        m
    }

    pub fn forward(&self, input: &Encoded) -> Result<Prediction> {
        let x = self.embed(input)?;
        self.forward_from_embeddings(&x, &input.mask())
    }

    pub fn forward_from_embeddings(&self, x: &Matrix, mask: &[bool]) -> Result<Prediction> {
        Ok(Prediction::from_logits(&self.logits_from_embeddings(x, mask)?))
    }

    pub fn logits_from_embeddings(&self, x: &Matrix, mask: &[bool]) -> Result<Vec<f64>> {
        self.check_shape(x, mask)?;
        Ok(self.trace(x, mask).logits)
    }

    /// Gradient of the pre-softmax logit of `target` with respect to every
    /// embedding coordinate. Masked positions receive zero.
    pub fn grad_wrt_embeddings(&self, x: &Matrix, mask: &[bool], target: usize) -> Result<Matrix> {
        self.check_shape(x, mask)?;
        if target >= self.config.num_classes {
            return Err(Error::DimensionMismatch(format!(
                "target class {target} >= num_classes {}",
                self.config.num_classes
            )));
        }
        let trace = self.trace(x, mask);
        let mut dlogits = vec![0.0; self.config.num_classes];
        dlogits[target] = 1.0;
        Ok(self.backward(x, &trace, &dlogits, None))
    }

    fn check_shape(&self, x: &Matrix, mask: &[bool]) -> Result<()> {
        let (l, d) = (self.config.max_len, self.config.embed_dim);
        if x.rows != l || x.cols != d || x.data.len() != l * d {
            return Err(Error::DimensionMismatch(format!(
                "embeddings are {}×{}, expected {l}×{d}",
                x.rows, x.cols
            )));
        }
        if mask.len() != l {
            return Err(Error::DimensionMismatch(format!("mask length {} != {l}", mask.len())));
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::DimensionMismatch("mask selects no positions".into()));
        }
        Ok(())
    }

    fn slice(&self, r: &Range<usize>) -> &[f64] {
        &self.params[r.clone()]
    }

    fn trace(&self, x: &Matrix, mask: &[bool]) -> Trace {
        let d = self.config.embed_dim;
        let valid: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
        let n = valid.len() as f64;
        let mut pooled = vec![0.0; d];
        let (mut q, mut k, mut v, mut attn) = (vec![], vec![], vec![], vec![]);
        match self.config.pooling {
            Pooling::Mean => {
                for &i in &valid {
                    for (p, xi) in pooled.iter_mut().zip(x.row(i)) {
                        *p += xi;
                    }
                }
            }
            Pooling::SelfAttention => {
                let (wq, wk, wv) = (
                    self.slice(&self.layout.wq),
                    self.slice(&self.layout.wk),
                    self.slice(&self.layout.wv),
                );
                q = valid.iter().map(|&i| vec_mat(x.row(i), wq, d)).collect();
                k = valid.iter().map(|&i| vec_mat(x.row(i), wk, d)).collect();
                v = valid.iter().map(|&i| vec_mat(x.row(i), wv, d)).collect();
                let scale = 1.0 / (d as f64).sqrt();
                for qi in &q {
                    let scores: Vec<f64> = k.iter().map(|kj| dot(qi, kj) * scale).collect();
                    let a = softmax(&scores);
                    for (aj, vj) in a.iter().zip(&v) {
                        for (p, vjc) in pooled.iter_mut().zip(vj) {
                            *p += aj * vjc;
                        }
                    }
                    attn.push(a);
                }
            }
        }
        for p in &mut pooled {
            *p /= n;
        }
        let c = self.config.num_classes;
        let w2 = self.slice(&self.layout.w2);
        let b2 = self.slice(&self.layout.b2);
        let hidden = match self.config.head {
            Head::Mlp => {
                let w1 = self.slice(&self.layout.w1);
                let b1 = self.slice(&self.layout.b1);
                (0..self.config.hidden_dim)
                    .map(|h| (dot(&w1[h * d..(h + 1) * d], &pooled) + b1[h]).tanh())
                    .collect()
            }
            Head::Linear => pooled.clone(),
        };
        let width = hidden.len();
        let logits = (0..c)
            .map(|ci| dot(&w2[ci * width..(ci + 1) * width], &hidden) + b2[ci])
            .collect();
        Trace {
            valid,
            q,
            k,
            v,
            attn,
            pooled,
            hidden,
            logits,
        }
    }

    /// Backpropagates `dlogits`; returns the gradient with respect to the
    /// input embeddings and, when `param_grad` is given, accumulates the
    /// gradient of every non-embedding parameter into it.
    fn backward(
        &self,
        x: &Matrix,
        t: &Trace,
        dlogits: &[f64],
        mut param_grad: Option<&mut [f64]>,
    ) -> Matrix {
        let d = self.config.embed_dim;
        let lay = &self.layout;
        let w2 = self.slice(&lay.w2);
        let width = t.hidden.len();

        let mut dhidden = vec![0.0; width];
        for (ci, &g) in dlogits.iter().enumerate() {
            let row = &w2[ci * width..(ci + 1) * width];
            for (dh, w) in dhidden.iter_mut().zip(row) {
                *dh += g * w;
            }
        }
        if let Some(pg) = param_grad.as_deref_mut() {
            for (ci, &g) in dlogits.iter().enumerate() {
                let row = &mut pg[lay.w2.start + ci * width..lay.w2.start + (ci + 1) * width];
                for (r, h) in row.iter_mut().zip(&t.hidden) {
                    *r += g * h;
                }
                pg[lay.b2.start + ci] += g;
            }
        }

        let dpooled = match self.config.head {
            Head::Linear => dhidden,
            Head::Mlp => {
                let w1 = self.slice(&lay.w1);
                let dpre: Vec<f64> = dhidden
                    .iter()
                    .zip(&t.hidden)
                    .map(|(dh, h)| dh * (1.0 - h * h))
                    .collect();
                let mut dp = vec![0.0; d];
                for (h, &g) in dpre.iter().enumerate() {
                    for (dpj, w) in dp.iter_mut().zip(&w1[h * d..(h + 1) * d]) {
                        *dpj += g * w;
                    }
                }
                if let Some(pg) = param_grad.as_deref_mut() {
                    for (h, &g) in dpre.iter().enumerate() {
                        let row = &mut pg[lay.w1.start + h * d..lay.w1.start + (h + 1) * d];
                        for (r, p) in row.iter_mut().zip(&t.pooled) {
                            *r += g * p;
                        }
                        pg[lay.b1.start + h] += g;
                    }
                }
                dp
            }
        };

        let n = t.valid.len() as f64;
        let mut dx = Matrix::zeros(x.rows, x.cols);
        match self.config.pooling {
            Pooling::Mean => {
                for &i in &t.valid {
                    for (o, g) in dx.row_mut(i).iter_mut().zip(&dpooled) {
                        *o = g / n;
                    }
                }
            }
            Pooling::SelfAttention => {
                let m = t.valid.len();
                let scale = 1.0 / (d as f64).sqrt();
                let dz: Vec<f64> = dpooled.iter().map(|g| g / n).collect();
                let mut dq = vec![vec![0.0; d]; m];
                let mut dk = vec![vec![0.0; d]; m];
                let mut dv = vec![vec![0.0; d]; m];
                for i in 0..m {
                    let a = &t.attn[i];
                    let da: Vec<f64> = t.v.iter().map(|vj| dot(&dz, vj)).collect();
                    let mean_da = dot(a, &da);
                    for j in 0..m {
                        for (dvj, g) in dv[j].iter_mut().zip(&dz) {
                            *dvj += a[j] * g;
                        }
                        let ds = a[j] * (da[j] - mean_da) * scale;
                        for c in 0..d {
                            dq[i][c] += ds * t.k[j][c];
                            dk[j][c] += ds * t.q[i][c];
                        }
                    }
                }
                let mats = [(&lay.wq, &dq), (&lay.wk, &dk), (&lay.wv, &dv)];
                for (r, grads) in mats {
                    let w = self.slice(r);
                    for (slot, &i) in t.valid.iter().enumerate() {
                        let g = &grads[slot];
                        let out = dx.row_mut(i);
                        for (inp, o) in out.iter_mut().enumerate() {
                            *o += dot(&w[inp * d..(inp + 1) * d], g);
                        }
                    }
                    if let Some(pg) = param_grad.as_deref_mut() {
                        for (slot, &i) in t.valid.iter().enumerate() {
                            let xi = x.row(i);
                            let g = &grads[slot];
                            for (inp, &xv) in xi.iter().enumerate() {
                                let base = r.start + inp * d;
                                for (o, gv) in g.iter().enumerate() {
                                    pg[base + o] += xv * gv;
                                }
                            }
                        }
                    }
                }
            }
        }
        dx
    }

    /// Weighted cross-entropy over a batch and its gradient with respect to
    /// all parameters. `sample_weights[i]` weights example `i`; the loss is
    /// normalised by the sum of weights.
    pub fn loss_and_grad(
        &self,
        batch: &[(&Encoded, usize)],
        sample_weights: &[f64],
    ) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() || batch.len() != sample_weights.len() {
            return Err(Error::EmptyInput("training batch"));
        }
        let total_w: f64 = sample_weights.iter().sum();
        if !(total_w > 0.0) {
            return Err(Error::Numerical(format!("batch weight sum {total_w}")));
        }
        let d = self.config.embed_dim;
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        for (&(input, target), &w) in batch.iter().zip(sample_weights) {
            let x = self.embed(input)?;
            let mask = input.mask();
            let t = self.trace(&x, &mask);
            let p = softmax(&t.logits);
            loss += w * -p[target].max(crate::training::PROB_FLOOR).ln();
            let scale = w / total_w;
            let dlogits: Vec<f64> = p
                .iter()
                .enumerate()
                .map(|(c, &pc)| scale * (pc - if c == target { 1.0 } else { 0.0 }))
                .collect();
            let dx = self.backward(&x, &t, &dlogits, Some(&mut grad));
            for &pos in &t.valid {
                let base = self.layout.embedding.start + input.ids[pos] * d;
                for (g, dxv) in grad[base..base + d].iter_mut().zip(dx.row(pos)) {
                    *g += dxv;
                }
            }
        }
        let loss = loss / total_w;
        if !loss.is_finite() {
            return Err(Error::Numerical(format!("non-finite loss {loss}")));
        }
        Ok((loss, grad))
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }
}

pub const CHECKPOINT_FORMAT: &str = "e2r-model";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Self-contained model file: architecture, flat parameters, vocabulary and
/// class names.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub task: String,
    pub class_names: Vec<String>,
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn new(model: &Model, vocab: &Vocabulary, task: &str, class_names: Vec<String>) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            task: task.into(),
            class_names,
            config: model.config.clone(),
            vocab: vocab.clone(),
            params: model.params.clone(),
        }
    }

    pub fn into_model(self) -> Result<(Model, Vocabulary, String, Vec<String>)> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        if self.config.vocab_size != self.vocab.size() {
            return Err(Error::DimensionMismatch(format!(
                "checkpoint vocabulary has {} entries, model expects {}",
                self.vocab.size(),
                self.config.vocab_size
            )));
        }
        if self.class_names.len() != self.config.num_classes {
            return Err(Error::DimensionMismatch("class names do not match num_classes".into()));
        }
        let mut model = init_model(self.config)?;
        if model.params.len() != self.params.len() {
            return Err(Error::DimensionMismatch(format!(
                "checkpoint has {} parameters, architecture needs {}",
                self.params.len(),
                model.params.len()
            )));
        }
        model.params = self.params;
        if !model.all_finite() {
            return Err(Error::Numerical("checkpoint contains non-finite parameters".into()));
        }
        Ok((model, self.vocab, self.task, self.class_names))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{CLS, PAD};

    fn config(pooling: Pooling, head: Head) -> ModelConfig {
        ModelConfig {
            vocab_size: 12,
            embed_dim: 4,
            hidden_dim: 5,
            num_classes: 3,
            max_len: 6,
            seed: 11,
            pooling,
            head,
        }
    }

    fn input(ids: &[usize], max_len: usize) -> Encoded {
        let mut all = vec![CLS];
        all.extend_from_slice(ids);
        let true_length = all.len();
        all.resize(max_len, PAD);
        Encoded {
            ids: all,
            true_length,
            words: ids.iter().map(|i| format!("w{i}")).collect(),
        }
    }

    fn randomize(model: &mut Model, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in model.params_mut() {
            *p = rng.gen_range(-1.0..1.0);
        }
    }

    #[test]
    fn untrained_model_is_uniform() {
        for pooling in [Pooling::Mean, Pooling::SelfAttention] {
            let m = init_model(config(pooling, Head::Mlp)).unwrap();
            let p = m.forward(&input(&[3, 4, 5], 6)).unwrap();
            for &pi in &p.probabilities {
                assert!((pi - 1.0 / 3.0).abs() < 1e-15);
            }
            assert_eq!(p.predicted, 0);
        }
    }

    #[test]
    fn init_is_deterministic_and_validated() {
        let a = init_model(config(Pooling::SelfAttention, Head::Mlp)).unwrap();
        let b = init_model(config(Pooling::SelfAttention, Head::Mlp)).unwrap();
        assert_eq!(a.params(), b.params());
        let mut bad = config(Pooling::Mean, Head::Mlp);
        bad.embed_dim = 0;
        assert!(matches!(init_model(bad), Err(Error::InvalidConfig(_))));
        let mut one_class = config(Pooling::Mean, Head::Mlp);
        one_class.num_classes = 1;
        assert!(init_model(one_class).is_err());
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = init_model(config(Pooling::Mean, Head::Mlp)).unwrap();
        assert!(matches!(m.forward(&input(&[12], 6)), Err(Error::DimensionMismatch(_))));
        let x = Matrix::zeros(5, 4);
        assert!(matches!(
            m.forward_from_embeddings(&x, &[true; 5]),
            Err(Error::DimensionMismatch(_))
        ));
        let x = Matrix::zeros(6, 4);
        assert!(m.grad_wrt_embeddings(&x, &[true; 6], 3).is_err());
    }

    #[test]
    fn lookup_path_matches_token_path() {
        for pooling in [Pooling::Mean, Pooling::SelfAttention] {
            let mut m = init_model(config(pooling, Head::Mlp)).unwrap();
            randomize(&mut m, 3);
            let inp = input(&[3, 7, 9], 6);
            let x = m.embed(&inp).unwrap();
            assert_eq!(m.forward(&inp).unwrap(), m.forward_from_embeddings(&x, &inp.mask()).unwrap());
            let zero = m.forward_from_embeddings(&Matrix::zeros(6, 4), &inp.mask()).unwrap();
            assert!(zero.probabilities.iter().all(|p| p.is_finite()));
            let s: f64 = zero.probabilities.iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_head_gives_zero_gradient() {
        let m = init_model(config(Pooling::SelfAttention, Head::Mlp)).unwrap();
        let inp = input(&[3, 4], 6);
        let g = m.grad_wrt_embeddings(&m.embed(&inp).unwrap(), &inp.mask(), 1).unwrap();
        assert!(g.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn padded_positions_get_zero_gradient() {
        for pooling in [Pooling::Mean, Pooling::SelfAttention] {
            let mut m = init_model(config(pooling, Head::Mlp)).unwrap();
            randomize(&mut m, 5);
            let inp = input(&[3, 4], 6);
            let g = m.grad_wrt_embeddings(&m.embed(&inp).unwrap(), &inp.mask(), 2).unwrap();
            for pos in inp.true_length..6 {
                assert!(g.row(pos).iter().all(|&v| v == 0.0));
            }
            assert!(g.row(0).iter().any(|&v| v != 0.0));
        }
    }

    #[test]
    fn parameter_gradient_matches_finite_differences() {
        for (pooling, head) in [
            (Pooling::Mean, Head::Mlp),
            (Pooling::SelfAttention, Head::Mlp),
            (Pooling::SelfAttention, Head::Linear),
        ] {
            let mut m = init_model(config(pooling, head)).unwrap();
            randomize(&mut m, 17);
            let a = input(&[3, 4, 5], 6);
            let b = input(&[6, 3], 6);
            let batch = [(&a, 1usize), (&b, 2usize)];
            let weights = [1.5, 0.5];
            let (_, grad) = m.loss_and_grad(&batch, &weights).unwrap();
            let h = 1e-5;
            for i in 0..m.num_params() {
                let orig = m.params[i];
                m.params[i] = orig + h;
                let (lp, _) = m.loss_and_grad(&batch, &weights).unwrap();
                m.params[i] = orig - h;
                let (lm, _) = m.loss_and_grad(&batch, &weights).unwrap();
                m.params[i] = orig;
                let fd = (lp - lm) / (2.0 * h);
                assert!(
                    (fd - grad[i]).abs() <= 1e-6 * (1.0 + fd.abs()),
                    "{pooling:?}/{head:?} param {i}: fd {fd} vs {}",
                    grad[i]
                );
            }
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = init_model(config(Pooling::SelfAttention, Head::Mlp)).unwrap();
        randomize(&mut m, 9);
        let vocab = crate::text::build_vocab_from_texts(
            ["a b c d e f g h i"].iter().copied(),
            1,
        )
        .unwrap();
        let path = dir.path().join("m.json");
        Checkpoint::new(&m, &vocab, "strategy", vec!["x".into(), "y".into(), "z".into()])
            .save(&path)
            .unwrap();
        let (back, v2, task, names) = Checkpoint::load(&path).unwrap().into_model().unwrap();
        assert_eq!(back, m);
        assert_eq!(v2, vocab);
        assert_eq!(task, "strategy");
        assert_eq!(names.len(), 3);
    }
}
