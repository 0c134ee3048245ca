//! User-level depression detection: a term-window convolution with average
//! pooling per post, a strided convolution merging post vectors into a user
//! vector, dense layers and a two-way softmax.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::stack::{self, DenseTrace};
use crate::corpus::{tokenize, UserLabel, UserRecord, Vocabulary};
use crate::error::{Error, Result};
use crate::nn::{
    avg_pool_all, avg_pool_all_backward, conv1d_backward, conv1d_forward, embed, embed_backward,
    relu_backward_inplace, relu_inplace, softmax, softmax_cross_entropy, uniform, Checkpoint,
    ConvSpec, GradStore, Mode, ParamStore, PoolKind, Tensor2, EMBEDDING_INIT,
};
use crate::seed::SeedStream;
use crate::train::{select_post_indices, SelectionConfig};

pub const MODEL_KIND: &str = "depression";

const EMBEDDING: &str = "embedding";
const POST_CONV: &str = "post_conv";
const MERGE_CONV: &str = "merge_conv";
const OUTPUT: &str = "output";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DepressionConfig {
    pub embed_dim: usize,
    pub post_conv: ConvSpec,
    pub merge_conv: ConvSpec,
    pub dense: Vec<usize>,
    pub dropout: f64,
}

impl Default for DepressionConfig {
    fn default() -> Self {
        Self {
            embed_dim: 50,
            post_conv: ConvSpec {
                window: 3,
                filters: 25,
                stride: 1,
                pool: PoolKind::AvgAll,
                pool_len: 1,
            },
            merge_conv: ConvSpec {
                window: 15,
                filters: 25,
                stride: 15,
                pool: PoolKind::AvgAll,
                pool_len: 1,
            },
            dense: vec![50],
            dropout: 0.0,
        }
    }
}

impl DepressionConfig {
    pub fn validate(&self) -> Result<()> {
        self.post_conv.validate()?;
        self.merge_conv.validate()?;
        if self.embed_dim == 0 || self.dense.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// Cached activations of one post.
#[derive(Debug, Clone, PartialEq)]
struct PostTrace {
    tokens: Vec<u32>,
    pre: Tensor2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepressionTrace {
    posts: Vec<Option<PostTrace>>,
    stacked: Tensor2,
    merge_pre: Tensor2,
    dense: Vec<DenseTrace>,
    head_input: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepressionForward {
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    /// Present only when the forward pass was recorded for backpropagation.
    pub trace: Option<DepressionTrace>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepressionModel {
    pub config: DepressionConfig,
    pub vocab: Vocabulary,
    pub params: ParamStore,
}

impl DepressionModel {
    pub fn new(config: DepressionConfig, vocab: Vocabulary, seeds: SeedStream) -> Result<Self> {
        config.validate()?;
        let mut rng = seeds.child("init.depression").rng();
        let mut params = ParamStore::new();
        let e = config.embed_dim;
        params.insert(EMBEDDING, &[vocab.len(), e], uniform(&mut rng, EMBEDDING_INIT, vocab.len() * e))?;
        init_conv(&mut params, POST_CONV, &config.post_conv, e, &mut rng)?;
        init_conv(&mut params, MERGE_CONV, &config.merge_conv, config.post_conv.filters, &mut rng)?;
        let width = stack::init_stack(&mut params, config.merge_conv.filters, &config.dense, &mut rng)?;
        stack::init_affine(&mut params, OUTPUT, width, 2, &mut rng)?;
        Ok(Self { config, vocab, params })
    }

    pub fn to_checkpoint(&self, seed: u64, step: u64) -> Checkpoint {
        Checkpoint::new(
            MODEL_KIND,
            serde_json::to_value(&self.config).expect("config serializes"),
            Some(self.vocab.clone()),
            &self.params,
            seed,
            step,
        )
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.model_kind != MODEL_KIND {
            return Err(Error::Data(format!("checkpoint holds a {} model", ck.model_kind)));
        }
        let config: DepressionConfig = serde_json::from_value(ck.config.clone())
            .map_err(|e| Error::Data(format!("bad depression config: {e}")))?;
        let vocab = ck
            .vocabulary
            .clone()
            .ok_or_else(|| Error::Data("depression checkpoint without vocabulary".into()))?;
        let model = Self {
            params: ck.params()?,
            config,
            vocab,
        };
        // Shapes must agree with a freshly built model.
        let reference = Self::new(model.config.clone(), model.vocab.clone(), SeedStream::new(0))?;
        if GradStore::zeros_like(&model.params) != GradStore::zeros_like(&reference.params) {
            return Err(Error::Data("checkpoint weights do not match the config".into()));
        }
        Ok(model)
    }

    /// Selected posts of `user`, tokenized with the model vocabulary and cut to `n_term`.
    pub fn prepare_user(&self, user: &UserRecord, selection: &SelectionConfig) -> Vec<Vec<u32>> {
        select_post_indices(user, selection)
            .into_iter()
            .map(|i| {
                let mut t = tokenize(&user.posts[i].text, &self.vocab);
                t.truncate(selection.n_term);
                t
            })
            .collect()
    }

    /// Post vector: embedding lookup → convolution → ReLU → average over windows.
    /// Posts shorter than the window map to the zero vector.
    pub fn encode_post(&self, tokens: &[u32]) -> Result<Vec<f64>> {
        Ok(self.encode_post_traced(tokens)?.0)
    }

    fn encode_post_traced(&self, tokens: &[u32]) -> Result<(Vec<f64>, Option<PostTrace>)> {
        let spec = &self.config.post_conv;
        if tokens.len() < spec.window {
            return Ok((vec![0.0; spec.filters], None));
        }
        let x = embed(self.params.get(EMBEDDING), self.config.embed_dim, tokens)?;
        let pre = conv1d_forward(&x, spec, self.params.get(&stack::weight_name(POST_CONV)), self.params.get(&stack::bias_name(POST_CONV)))?;
        let mut h = pre.clone();
        relu_inplace(h.data_mut());
        Ok((
            avg_pool_all(&h)?,
            Some(PostTrace {
                tokens: tokens.to_vec(),
                pre,
            }),
        ))
    }

    /// User vector from stacked post vectors: zero-pad to a whole number of
    /// merge windows, strided convolution, ReLU, mean over windows.
    pub fn encode_user(&self, post_vectors: &Tensor2) -> Result<Vec<f64>> {
        Ok(self.encode_user_traced(post_vectors.clone())?.0)
    }

    fn encode_user_traced(&self, post_vectors: Tensor2) -> Result<(Vec<f64>, Tensor2, Tensor2)> {
        let spec = &self.config.merge_conv;
        if post_vectors.rows() == 0 {
            return Err(Error::invalid("user has no post vectors"));
        }
        let n = post_vectors.rows();
        let padded_len = if n <= spec.window {
            spec.window
        } else {
            spec.window + (n - spec.window).div_ceil(spec.stride) * spec.stride
        };
        let stacked = post_vectors.pad_rows(padded_len);
        let pre = conv1d_forward(&stacked, spec, self.params.get(&stack::weight_name(MERGE_CONV)), self.params.get(&stack::bias_name(MERGE_CONV)))?;
        let mut h = pre.clone();
        relu_inplace(h.data_mut());
        Ok((avg_pool_all(&h)?, stacked, pre))
    }

    pub fn forward<R: Rng>(&self, posts: &[Vec<u32>], mode: Mode, rng: &mut R, record: bool) -> Result<DepressionForward> {
        if posts.is_empty() {
            return Err(Error::invalid("user has no usable posts"));
        }
        let filters = self.config.post_conv.filters;
        let mut vectors = Tensor2::zeros(posts.len(), filters);
        let mut post_traces = Vec::with_capacity(if record { posts.len() } else { 0 });
        for (i, p) in posts.iter().enumerate() {
            let (v, t) = self.encode_post_traced(p)?;
            vectors.row_mut(i).copy_from_slice(&v);
            if record {
                post_traces.push(t);
            }
        }
        let (user, stacked, merge_pre) = self.encode_user_traced(vectors)?;
        let (head_input, dense) = stack::stack_forward(&self.params, self.config.dense.len(), user, self.config.dropout, mode, rng)?;
        let logits = stack::affine_layer(&self.params, OUTPUT, &head_input)?;
        let probs = softmax(&logits);
        crate::nn::ensure_finite(&probs, "depression model output")?;
        Ok(DepressionForward {
            logits,
            probs,
            trace: record.then_some(DepressionTrace {
                posts: post_traces,
                stacked,
                merge_pre,
                dense,
                head_input,
            }),
        })
    }

    /// Gradient of every parameter given the gradient of the output logits.
    pub fn backward(&self, fwd: &DepressionForward, grad_logits: &[f64]) -> Result<GradStore> {
        let mut grads = GradStore::zeros_like(&self.params);
        self.backward_into(fwd, grad_logits, &mut grads)?;
        Ok(grads)
    }

    pub fn backward_into(&self, fwd: &DepressionForward, grad_logits: &[f64], grads: &mut GradStore) -> Result<()> {
        let trace = fwd.trace.as_ref().ok_or(Error::MissingCache("depression model"))?;
        let grad_posts = self.backward_to_posts(trace, grad_logits, grads)?;

        let spec = &self.config.post_conv;
        let w_name = stack::weight_name(POST_CONV);
        let b_name = stack::bias_name(POST_CONV);
        let embed_dim = self.config.embed_dim;
        let mut gw = vec![0.0; self.params.get(&w_name).len()];
        let mut gb = vec![0.0; spec.filters];
        for (i, t) in trace.posts.iter().enumerate() {
            let Some(t) = t else { continue };
            let g_vec = grad_posts.row(i);
            if g_vec.iter().all(|&g| g == 0.0) {
                continue;
            }
            let mut g = avg_pool_all_backward(t.pre.rows(), g_vec);
            relu_backward_inplace(t.pre.data(), g.data_mut());
            let x = embed(self.params.get(EMBEDDING), embed_dim, &t.tokens)?;
            let gx = conv1d_backward(&x, spec, self.params.get(&w_name), &g, &mut gw, &mut gb, true)?
                .expect("input gradient requested");
            embed_backward(grads.get_mut(EMBEDDING), embed_dim, &t.tokens, &gx);
        }
        add(grads.get_mut(&w_name), &gw);
        add(grads.get_mut(&b_name), &gb);
        grads.mask_frozen(&self.params);
        Ok(())
    }

    /// Backpropagates down to the stacked post vectors, accumulating the
    /// gradients of the merge, dense and output layers on the way.
    fn backward_to_posts(&self, trace: &DepressionTrace, grad_logits: &[f64], grads: &mut GradStore) -> Result<Tensor2> {
        let g_head = stack::affine_layer_backward(&self.params, OUTPUT, &trace.head_input, grad_logits, grads);
        let g_user = stack::stack_backward(&self.params, &trace.dense, g_head, grads);
        let mut g = avg_pool_all_backward(trace.merge_pre.rows(), &g_user);
        relu_backward_inplace(trace.merge_pre.data(), g.data_mut());
        let spec = &self.config.merge_conv;
        let w_name = stack::weight_name(MERGE_CONV);
        let mut gw = vec![0.0; self.params.get(&w_name).len()];
        let mut gb = vec![0.0; spec.filters];
        let g_stacked = conv1d_backward(&trace.stacked, spec, self.params.get(&w_name), &g, &mut gw, &mut gb, true)?
            .expect("input gradient requested");
        add(grads.get_mut(&w_name), &gw);
        add(grads.get_mut(&stack::bias_name(MERGE_CONV)), &gb);
        Ok(g_stacked)
    }

    /// Gradient of the logits with respect to each selected post's vector.
    pub(crate) fn post_vector_gradients(&self, fwd: &DepressionForward, grad_logits: &[f64]) -> Result<(Tensor2, Vec<Option<(Vec<u32>, Tensor2)>>)> {
        let trace = fwd.trace.as_ref().ok_or(Error::MissingCache("depression model"))?;
        let mut scratch = GradStore::zeros_like(&self.params);
        let g = self.backward_to_posts(trace, grad_logits, &mut scratch)?;
        let posts = trace
            .posts
            .iter()
            .map(|t| t.as_ref().map(|t| (t.tokens.clone(), t.pre.clone())))
            .collect();
        Ok((g, posts))
    }

    /// Weighted cross-entropy loss for one user and its parameter gradients.
    pub fn loss_and_grads<R: Rng>(&self, posts: &[Vec<u32>], label: UserLabel, weight: f64, rng: &mut R) -> Result<(f64, GradStore)> {
        let fwd = self.forward(posts, Mode::Train, rng, true)?;
        let (loss, _, g) = softmax_cross_entropy(&fwd.logits, label.index(), weight)?;
        Ok((loss, self.backward(&fwd, &g)?))
    }

    /// `[P(control), P(diagnosed)]` in evaluation mode.
    pub fn classify_tokens(&self, posts: &[Vec<u32>]) -> Result<[f64; 2]> {
        let mut rng = SeedStream::new(0).rng();
        let p = self.forward(posts, Mode::Eval, &mut rng, false)?.probs;
        Ok([p[0], p[1]])
    }

    pub fn classify_user(&self, user: &UserRecord, selection: &SelectionConfig) -> Result<[f64; 2]> {
        let posts = self.prepare_user(user, selection);
        if posts.is_empty() {
            return Err(Error::invalid(format!("user {} has no usable posts", user.user_id)));
        }
        self.classify_tokens(&posts)
    }
}

fn add(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub(crate) fn init_conv<R: Rng>(params: &mut ParamStore, prefix: &str, spec: &ConvSpec, input_dim: usize, rng: &mut R) -> Result<()> {
    let fan_in = spec.window * input_dim;
    let fan_out = spec.window * spec.filters;
    params.insert(
        stack::weight_name(prefix),
        &[spec.filters, spec.window * input_dim],
        crate::nn::glorot_uniform(rng, fan_in, fan_out, spec.weight_len(input_dim)),
    )?;
    params.insert(stack::bias_name(prefix), &[spec.filters], vec![0.0; spec.filters])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> DepressionConfig {
        DepressionConfig {
            embed_dim: 4,
            post_conv: ConvSpec::new(3, 2, 1, PoolKind::AvgAll, 1).unwrap(),
            merge_conv: ConvSpec::new(15, 2, 15, PoolKind::AvgAll, 1).unwrap(),
            dense: vec![3],
            dropout: 0.0,
        }
    }

    fn model() -> DepressionModel {
        let vocab = Vocabulary::from_tokens(["a", "b", "c", "d"]).unwrap();
        DepressionModel::new(small_config(), vocab, SeedStream::new(5)).unwrap()
    }

    #[test]
    fn short_post_is_zero_vector() {
        let m = model();
        assert_eq!(m.encode_post(&[2, 3]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(m.encode_post(&[]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identical_posts_identical_vectors() {
        let m = model();
        assert_eq!(m.encode_post(&[2, 3, 4, 5]).unwrap(), m.encode_post(&[2, 3, 4, 5]).unwrap());
    }

    #[test]
    fn hand_sized_post_encoding() {
        // one-dimensional embeddings, one filter summing the window
        let vocab = Vocabulary::from_tokens(["a", "b", "c", "d"]).unwrap();
        let cfg = DepressionConfig {
            embed_dim: 1,
            post_conv: ConvSpec::new(3, 1, 1, PoolKind::AvgAll, 1).unwrap(),
            merge_conv: ConvSpec::new(15, 1, 15, PoolKind::AvgAll, 1).unwrap(),
            dense: vec![],
            dropout: 0.0,
        };
        let mut m = DepressionModel::new(cfg, vocab, SeedStream::new(0)).unwrap();
        m.params.get_mut(EMBEDDING).copy_from_slice(&[0.0, 0.0, 1.0, -2.0, 3.0, 0.5]);
        m.params.get_mut("post_conv.weight").copy_from_slice(&[1.0, 1.0, 1.0]);
        m.params.get_mut("post_conv.bias").copy_from_slice(&[0.5]);
        // tokens a b c d → embeddings 1, −2, 3, 0.5
        // windows: 1−2+3+0.5 = 2.5 and −2+3+0.5+0.5 = 2.0; mean 2.25
        let v = m.encode_post(&[2, 3, 4, 5]).unwrap();
        assert!((v[0] - 2.25).abs() < 1e-15);
        // a negative window is clipped by ReLU
        m.params.get_mut("post_conv.bias").copy_from_slice(&[-1.75]);
        let v = m.encode_post(&[2, 3, 4, 5]).unwrap();
        assert!((v[0] - 0.125).abs() < 1e-15);
    }

    #[test]
    fn merge_window_arithmetic() {
        let m = model();
        let mut rng = SeedStream::new(0).rng();
        let posts = |n: usize| vec![vec![2u32, 3, 4]; n];
        for (n, windows) in [(1, 1), (15, 1), (16, 2), (30, 2), (31, 3)] {
            let fwd = m.forward(&posts(n), Mode::Eval, &mut rng, true).unwrap();
            assert_eq!(fwd.trace.unwrap().merge_pre.rows(), windows, "{n} posts");
        }
    }

    #[test]
    fn permutation_within_window_with_constant_filters() {
        let mut m = model();
        let w = m.params.get_mut("merge_conv.weight");
        // each filter uses the same weights at every window position
        let per_pos = [0.3, -0.2];
        for f in 0..2 {
            for j in 0..15 {
                w[f * 30 + j * 2..f * 30 + j * 2 + 2].copy_from_slice(&[per_pos[f], per_pos[1 - f]]);
            }
        }
        let a: Vec<Vec<f64>> = (0..15).map(|i| vec![i as f64 * 0.1, 1.0 - i as f64 * 0.05]).collect();
        let mut b = a.clone();
        b.reverse();
        b.swap(0, 7);
        let ua = m.encode_user(&Tensor2::from_rows(&a).unwrap()).unwrap();
        let ub = m.encode_user(&Tensor2::from_rows(&b).unwrap()).unwrap();
        for (x, y) in ua.iter().zip(&ub) {
            assert!((x - y).abs() < 1e-12);
        }
        // position-dependent filters generally break the symmetry
        m.params.get_mut("merge_conv.weight")[0] = 5.0;
        let ub = m.encode_user(&Tensor2::from_rows(&b).unwrap()).unwrap();
        assert!(ua.iter().zip(&ub).any(|(x, y)| (x - y).abs() > 1e-6));
    }

    #[test]
    fn output_is_a_distribution() {
        let m = model();
        let p = m.classify_tokens(&[vec![2, 3, 4, 5], vec![3]]).unwrap();
        assert!((p[0] + p[1] - 1.0).abs() < 1e-9);
        assert!(m.classify_tokens(&[]).is_err());
    }

    #[test]
    fn zero_output_layer_is_uniform() {
        let mut m = model();
        m.params.get_mut("output.weight").iter_mut().for_each(|w| *w = 0.0);
        let p = m.classify_tokens(&[vec![2, 3, 4, 5]]).unwrap();
        assert_eq!(p, [0.5, 0.5]);
    }

    #[test]
    fn backward_requires_trace() {
        let m = model();
        let mut rng = SeedStream::new(0).rng();
        let fwd = m.forward(&[vec![2, 3, 4]], Mode::Eval, &mut rng, false).unwrap();
        assert!(matches!(m.backward(&fwd, &[1.0, -1.0]), Err(Error::MissingCache(_))));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let m = model();
        let mut rng = SeedStream::new(0).rng();
        let fwd = m.forward(&[vec![2, 3, 4, 5]], Mode::Train, &mut rng, true).unwrap();
        assert!(m.backward(&fwd, &[0.0, 0.0]).unwrap().is_zero());
    }

    #[test]
    fn frozen_embedding_gets_zero_gradient() {
        let mut m = model();
        m.params.freeze(EMBEDDING);
        let mut rng = SeedStream::new(0).rng();
        let (_, g) = m.loss_and_grads(&[vec![2, 3, 4, 5]], UserLabel::Diagnosed, 1.0, &mut rng).unwrap();
        assert!(g.get(EMBEDDING).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = model();
        let ck = m.to_checkpoint(5, 0);
        let back = DepressionModel::from_checkpoint(&ck).unwrap();
        assert_eq!(back.config, m.config);
        assert_eq!(back.vocab, m.vocab);
        let mut ck2 = ck.clone();
        ck2.weights.remove("dense0.bias");
        assert!(DepressionModel::from_checkpoint(&ck2).is_err());
    }
}
