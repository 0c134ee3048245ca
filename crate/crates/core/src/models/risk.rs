//! Post-level risk triage over sentence vectors of the target post and its
//! thread context, with four interchangeable output heads.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::depression::init_conv;
use super::metric::{metric_classify, metric_hinge, mse_classify, ordinal_margin};
use super::stack::{self, DenseTrace};
use crate::corpus::{split_sentences, Abbreviations, EncoderConfig, Post, RiskLabel, SentenceEncoder, ThreadInstance};
use crate::error::{Error, Result};
use crate::nn::{
    conv1d_backward, conv1d_forward, glorot_uniform, max_pool, max_pool_backward, relu_backward_inplace, relu_inplace,
    softmax, softmax_cross_entropy, squared_error, Checkpoint, ConvSpec, GradStore, Mode, ParamStore, PoolKind, Tensor2,
};
use crate::seed::SeedStream;

const CONV: &str = "conv";
const OUTPUT: &str = "output";
const CLASSES: &str = "class_embeddings";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskVariant {
    CatCe,
    Mse,
    ClassMetric,
    ClassMetricOrdinal,
}

impl RiskVariant {
    pub const ALL: [RiskVariant; 4] = [
        RiskVariant::CatCe,
        RiskVariant::Mse,
        RiskVariant::ClassMetric,
        RiskVariant::ClassMetricOrdinal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RiskVariant::CatCe => "cat_ce",
            RiskVariant::Mse => "mse",
            RiskVariant::ClassMetric => "class_metric",
            RiskVariant::ClassMetricOrdinal => "class_metric_ordinal",
        }
    }

    pub fn model_kind(self) -> String {
        format!("risk:{}", self.name())
    }

    pub fn is_metric(self) -> bool {
        matches!(self, RiskVariant::ClassMetric | RiskVariant::ClassMetricOrdinal)
    }
}

impl std::fmt::Display for RiskVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for RiskVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.strip_prefix("risk:").unwrap_or(s);
        RiskVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown risk variant {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskConfig {
    pub variant: RiskVariant,
    pub input_dim: usize,
    pub encoder: EncoderConfig,
    pub max_sentences: usize,
    pub conv: ConvSpec,
    pub dense: Vec<usize>,
    pub dropout: f64,
    pub alpha: f64,
    /// Size of the metric representation; defaults to the last dense width.
    pub metric_dim: Option<usize>,
}

impl RiskConfig {
    pub fn for_variant(variant: RiskVariant, input_dim: usize) -> Self {
        let (filters, dense, dropout) = match variant {
            RiskVariant::CatCe => (150, vec![250, 250], 0.3),
            RiskVariant::Mse => (100, vec![250, 250], 0.5),
            RiskVariant::ClassMetric | RiskVariant::ClassMetricOrdinal => (100, vec![150, 150], 0.3),
        };
        Self {
            variant,
            input_dim,
            encoder: EncoderConfig::Hashed {
                dim: input_dim,
                seed: 0,
            },
            max_sentences: 20,
            conv: ConvSpec {
                window: 3,
                filters,
                stride: 1,
                pool: PoolKind::Max,
                pool_len: 3,
            },
            dense,
            dropout,
            alpha: if variant == RiskVariant::ClassMetricOrdinal { 0.5 } else { 1.0 },
            metric_dim: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.conv.validate()?;
        if self.conv.pool != PoolKind::Max {
            return Err(Error::Config("risk towers use max pooling".into()));
        }
        if self.input_dim == 0 || self.dense.contains(&0) || self.metric_dim == Some(0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if self.max_sentences < self.conv.window {
            return Err(Error::Config(format!(
                "max_sentences {} below the conv window {}",
                self.max_sentences, self.conv.window
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("margin {} must be finite and non-negative", self.alpha)));
        }
        Ok(())
    }

    fn tower_rows(&self) -> usize {
        self.conv.out_len(self.max_sentences).div_ceil(self.conv.pool_len)
    }

    fn flat_len(&self) -> usize {
        2 * self.tower_rows() * self.conv.filters
    }

    fn output_dim(&self) -> usize {
        match self.variant {
            RiskVariant::CatCe => RiskLabel::COUNT,
            RiskVariant::Mse => 1,
            _ => self
                .metric_dim
                .unwrap_or_else(|| self.dense.last().copied().unwrap_or(self.flat_len())),
        }
    }
}

/// Sentence vectors of a target post and of its thread context, at most
/// `max_sentences` rows each (the latest ones).
#[derive(Debug, Clone, PartialEq)]
pub struct RiskInput {
    pub target: Tensor2,
    pub context: Tensor2,
}

fn last_sentences(posts: &[&Post], abbreviations: &Abbreviations, n: usize) -> Vec<String> {
    let mut all: Vec<String> = posts
        .iter()
        .flat_map(|p| split_sentences(&p.text, abbreviations))
        .collect();
    let skip = all.len().saturating_sub(n);
    all.drain(..skip);
    all
}

fn encode_rows(sentences: &[String], encoder: &dyn SentenceEncoder, dim: usize) -> Result<Tensor2> {
    if encoder.dim() != dim {
        return Err(Error::Shape(format!(
            "encoder produces {} dims, model expects {dim}",
            encoder.dim()
        )));
    }
    let mut data = Vec::with_capacity(sentences.len() * dim);
    for s in sentences {
        data.extend(encoder.encode(s)?.0);
    }
    Tensor2::new(sentences.len(), dim, data)
}

#[derive(Debug, Clone, PartialEq)]
struct TowerTrace {
    pre: Tensor2,
    argmax: Vec<usize>,
    input: Tensor2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskTrace {
    towers: [TowerTrace; 2],
    dense: Vec<DenseTrace>,
    head_input: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskForward {
    /// Logits, the regression value, or the metric representation.
    pub output: Vec<f64>,
    /// Class probabilities, categorical head only.
    pub probs: Option<Vec<f64>>,
    pub trace: Option<RiskTrace>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskModel {
    pub config: RiskConfig,
    pub params: ParamStore,
}

impl RiskModel {
    pub fn new(config: RiskConfig, seeds: SeedStream) -> Result<Self> {
        config.validate()?;
        let mut rng = seeds.child("init.risk").rng();
        let mut params = ParamStore::new();
        init_conv(&mut params, CONV, &config.conv, config.input_dim, &mut rng)?;
        let width = stack::init_stack(&mut params, config.flat_len(), &config.dense, &mut rng)?;
        let out = config.output_dim();
        stack::init_affine(&mut params, OUTPUT, width, out, &mut rng)?;
        if config.variant.is_metric() {
            params.insert(
                CLASSES,
                &[RiskLabel::COUNT, out],
                glorot_uniform(&mut rng, out, RiskLabel::COUNT, RiskLabel::COUNT * out),
            )?;
        }
        Ok(Self { config, params })
    }

    pub fn variant(&self) -> RiskVariant {
        self.config.variant
    }

    pub fn to_checkpoint(&self, seed: u64, step: u64) -> Checkpoint {
        Checkpoint::new(
            self.config.variant.model_kind(),
            serde_json::to_value(&self.config).expect("config serializes"),
            None,
            &self.params,
            seed,
            step,
        )
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let config: RiskConfig = serde_json::from_value(ck.config.clone())
            .map_err(|e| Error::Data(format!("bad risk config: {e}")))?;
        if ck.model_kind != config.variant.model_kind() {
            return Err(Error::Data(format!(
                "checkpoint kind {} does not match its {} config",
                ck.model_kind, config.variant
            )));
        }
        let reference = Self::new(config.clone(), SeedStream::new(0))?;
        let params = ck.params()?;
        if GradStore::zeros_like(&params) != GradStore::zeros_like(&reference.params) {
            return Err(Error::Data("checkpoint weights do not match the config".into()));
        }
        Ok(Self { config, params })
    }

    pub fn class_embeddings(&self) -> Option<Tensor2> {
        self.config.variant.is_metric().then(|| {
            Tensor2::new(RiskLabel::COUNT, self.config.output_dim(), self.params.get(CLASSES).to_vec())
                .expect("stored with matching shape")
        })
    }

    /// Splits and encodes the target post and its context. An empty context
    /// gives zero rows; a target without sentences is an error.
    pub fn prepare(&self, instance: &ThreadInstance, encoder: &dyn SentenceEncoder, abbreviations: &Abbreviations) -> Result<RiskInput> {
        let n = self.config.max_sentences;
        let target = last_sentences(&[&instance.target], abbreviations, n);
        if target.is_empty() {
            return Err(Error::invalid(format!("target post {} is empty", instance.target.post_id)));
        }
        let context: Vec<&Post> = instance.context.iter().collect();
        let context = last_sentences(&context, abbreviations, n);
        Ok(RiskInput {
            target: encode_rows(&target, encoder, self.config.input_dim)?,
            context: encode_rows(&context, encoder, self.config.input_dim)?,
        })
    }

    fn tower(&self, input: &Tensor2) -> Result<(Vec<f64>, TowerTrace)> {
        if input.cols() != self.config.input_dim {
            return Err(Error::Shape(format!(
                "sentence vectors of {} dims, model expects {}",
                input.cols(),
                self.config.input_dim
            )));
        }
        if input.rows() > self.config.max_sentences {
            return Err(Error::Shape(format!(
                "{} sentences exceed the limit of {}",
                input.rows(),
                self.config.max_sentences
            )));
        }
        let x = input.clone().pad_rows(self.config.max_sentences);
        let pre = conv1d_forward(&x, &self.config.conv, self.params.get("conv.weight"), self.params.get("conv.bias"))?;
        let mut h = pre.clone();
        relu_inplace(h.data_mut());
        let (pooled, argmax) = max_pool(&h, self.config.conv.pool_len)?;
        Ok((pooled.into_data(), TowerTrace { pre, argmax, input: x }))
    }

    pub fn forward<R: Rng>(&self, input: &RiskInput, mode: Mode, rng: &mut R, record: bool) -> Result<RiskForward> {
        let (mut flat, target) = self.tower(&input.target)?;
        let (ctx, context) = self.tower(&input.context)?;
        flat.extend(ctx);
        let (head_input, dense) = stack::stack_forward(&self.params, self.config.dense.len(), flat, self.config.dropout, mode, rng)?;
        let output = stack::affine_layer(&self.params, OUTPUT, &head_input)?;
        crate::nn::ensure_finite(&output, "risk model output")?;
        let probs = (self.config.variant == RiskVariant::CatCe).then(|| softmax(&output));
        Ok(RiskForward {
            output,
            probs,
            trace: record.then_some(RiskTrace {
                towers: [target, context],
                dense,
                head_input,
            }),
        })
    }

    pub fn predict_forward(&self, fwd: &RiskForward) -> RiskLabel {
        match self.config.variant {
            RiskVariant::CatCe => {
                let p = fwd.probs.as_ref().expect("categorical head has probabilities");
                let mut best = 0;
                for (i, v) in p.iter().enumerate() {
                    if *v > p[best] {
                        best = i;
                    }
                }
                RiskLabel::from_index(best).expect("four logits")
            }
            RiskVariant::Mse => mse_classify(fwd.output[0]),
            _ => metric_classify(&fwd.output, &self.class_embeddings().expect("metric variant")),
        }
    }

    pub fn predict(&self, input: &RiskInput) -> Result<RiskLabel> {
        let mut rng = SeedStream::new(0).rng();
        Ok(self.predict_forward(&self.forward(input, Mode::Eval, &mut rng, false)?))
    }

    /// Variant loss for one instance. Metric variants draw their negative
    /// class uniformly among the three wrong labels from `rng`. Returns the
    /// loss and the gradient of the head output; class-embedding gradients
    /// are accumulated into `grads`.
    pub fn head_loss<R: Rng>(&self, fwd: &RiskForward, label: RiskLabel, weight: f64, rng: &mut R, grads: &mut GradStore) -> Result<(f64, Vec<f64>)> {
        let p = label.index();
        match self.config.variant {
            RiskVariant::CatCe => {
                let (loss, _, g) = softmax_cross_entropy(&fwd.output, p, weight)?;
                Ok((loss, g))
            }
            RiskVariant::Mse => {
                let (loss, g) = squared_error(fwd.output[0], p as f64, weight);
                Ok((loss, vec![g]))
            }
            variant => {
                let mut n = rng.gen_range(0..RiskLabel::COUNT - 1);
                if n >= p {
                    n += 1;
                }
                let margin = if variant == RiskVariant::ClassMetricOrdinal {
                    ordinal_margin(p, n, self.config.alpha)
                } else {
                    self.config.alpha
                };
                let classes = self.class_embeddings().expect("metric variant");
                let m = metric_hinge(&fwd.output, &classes, p, n, margin)?;
                let d = classes.cols();
                let gc = grads.get_mut(CLASSES);
                for i in 0..d {
                    gc[p * d + i] += weight * m.grad_positive[i];
                    gc[n * d + i] += weight * m.grad_negative[i];
                }
                Ok((weight * m.loss, m.grad_x.iter().map(|g| weight * g).collect()))
            }
        }
    }

    /// Accumulates parameter gradients given the gradient of the head output.
    pub fn backward_into(&self, fwd: &RiskForward, grad_output: &[f64], grads: &mut GradStore) -> Result<()> {
        let trace = fwd.trace.as_ref().ok_or(Error::MissingCache("risk model"))?;
        let g_head = stack::affine_layer_backward(&self.params, OUTPUT, &trace.head_input, grad_output, grads);
        let g_flat = stack::stack_backward(&self.params, &trace.dense, g_head, grads);
        let rows = self.config.tower_rows();
        let l = self.config.conv.filters;
        let half = rows * l;
        let w = self.params.get("conv.weight");
        let mut gw = vec![0.0; w.len()];
        let mut gb = vec![0.0; l];
        for (t, g) in trace.towers.iter().zip(g_flat.chunks(half)) {
            let g = Tensor2::new(rows, l, g.to_vec())?;
            let mut g = max_pool_backward(t.pre.rows(), &t.argmax, &g);
            relu_backward_inplace(t.pre.data(), g.data_mut());
            conv1d_backward(&t.input, &self.config.conv, w, &g, &mut gw, &mut gb, false)?;
        }
        for (d, s) in grads.get_mut("conv.weight").iter_mut().zip(&gw) {
            *d += s;
        }
        for (d, s) in grads.get_mut("conv.bias").iter_mut().zip(&gb) {
            *d += s;
        }
        grads.mask_frozen(&self.params);
        Ok(())
    }

    /// Training-mode loss and parameter gradients for one instance.
    pub fn loss_and_grads<R: Rng>(&self, input: &RiskInput, label: RiskLabel, weight: f64, rng: &mut R) -> Result<(f64, GradStore)> {
        let fwd = self.forward(input, Mode::Train, rng, true)?;
        let mut grads = GradStore::zeros_like(&self.params);
        let (loss, g) = self.head_loss(&fwd, label, weight, rng, &mut grads)?;
        self.backward_into(&fwd, &g, &mut grads)?;
        Ok((loss, grads))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::HashedEncoder;

    fn tiny(variant: RiskVariant) -> RiskConfig {
        RiskConfig {
            conv: ConvSpec::new(3, 2, 1, PoolKind::Max, 3).unwrap(),
            dense: vec![4],
            dropout: 0.0,
            max_sentences: 6,
            metric_dim: Some(3),
            ..RiskConfig::for_variant(variant, 5)
        }
    }

    fn input(rows: usize, ctx: usize) -> RiskInput {
        let v = |n: usize, s: f64| {
            Tensor2::new(n, 5, (0..n * 5).map(|i| ((i as f64) * 0.37 + s).sin()).collect()).unwrap()
        };
        RiskInput {
            target: v(rows, 0.1),
            context: v(ctx, 1.3),
        }
    }

    #[test]
    fn table_defaults() {
        let c = RiskConfig::for_variant(RiskVariant::CatCe, 8);
        assert_eq!((c.conv.filters, c.dense.clone(), c.dropout), (150, vec![250, 250], 0.3));
        let c = RiskConfig::for_variant(RiskVariant::Mse, 8);
        assert_eq!((c.conv.filters, c.dense.clone(), c.dropout), (100, vec![250, 250], 0.5));
        let c = RiskConfig::for_variant(RiskVariant::ClassMetricOrdinal, 8);
        assert_eq!((c.conv.filters, c.dense.clone(), c.dropout, c.alpha), (100, vec![150, 150], 0.3, 0.5));
        assert_eq!(c.output_dim(), 150);
        assert_eq!(c.tower_rows(), 6);
        assert_eq!(c.max_sentences, 20);
    }

    #[test]
    fn variant_names_round_trip() {
        for v in RiskVariant::ALL {
            assert_eq!(v.name().parse::<RiskVariant>().unwrap(), v);
            assert_eq!(v.model_kind().parse::<RiskVariant>().unwrap(), v);
            assert_eq!(serde_json::to_string(&v).unwrap(), format!("\"{}\"", v.name()));
        }
        assert!("softmax".parse::<RiskVariant>().is_err());
    }

    #[test]
    fn categorical_head_sums_to_one() {
        let m = RiskModel::new(tiny(RiskVariant::CatCe), SeedStream::new(1)).unwrap();
        let mut rng = SeedStream::new(0).rng();
        let f = m.forward(&input(4, 0), Mode::Eval, &mut rng, false).unwrap();
        let s: f64 = f.probs.unwrap().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eval_is_deterministic() {
        for v in RiskVariant::ALL {
            let mut cfg = tiny(v);
            cfg.dropout = 0.5;
            let m = RiskModel::new(cfg, SeedStream::new(1)).unwrap();
            let a = m.forward(&input(5, 3), Mode::Eval, &mut SeedStream::new(1).rng(), false).unwrap();
            let b = m.forward(&input(5, 3), Mode::Eval, &mut SeedStream::new(2).rng(), false).unwrap();
            assert_eq!(a.output, b.output);
        }
    }

    #[test]
    fn hand_sized_forward() {
        let cfg = RiskConfig {
            input_dim: 1,
            conv: ConvSpec::new(3, 1, 1, PoolKind::Max, 3).unwrap(),
            dense: vec![],
            dropout: 0.0,
            max_sentences: 20,
            ..RiskConfig::for_variant(RiskVariant::Mse, 1)
        };
        let mut m = RiskModel::new(cfg, SeedStream::new(0)).unwrap();
        m.params.get_mut("conv.weight").copy_from_slice(&[1.0, 1.0, 1.0]);
        m.params.get_mut("conv.bias").copy_from_slice(&[0.0]);
        let w = m.params.get_mut("output.weight");
        assert_eq!(w.len(), 12);
        w.iter_mut().for_each(|v| *v = 0.0);
        w[0] = 0.5;
        w[6] = 7.0;
        m.params.get_mut("output.bias").copy_from_slice(&[0.1]);
        // target rows 1, 2, 3: windows sum to 6, 5, 3, 0, ...; first pool block is 6
        // empty context pools to zero
        let x = RiskInput {
            target: Tensor2::new(3, 1, vec![1.0, 2.0, 3.0]).unwrap(),
            context: Tensor2::zeros(0, 1),
        };
        let mut rng = SeedStream::new(0).rng();
        let f = m.forward(&x, Mode::Eval, &mut rng, false).unwrap();
        assert!((f.output[0] - 3.1).abs() < 1e-12);
        assert_eq!(m.predict_forward(&f), RiskLabel::Crisis);
    }

    #[test]
    fn prepare_keeps_last_sentences() {
        let m = RiskModel::new(tiny(RiskVariant::CatCe), SeedStream::new(1)).unwrap();
        let enc = HashedEncoder::new(5, 0).unwrap();
        let text: String = (0..9).map(|i| format!("Sentence number {i} here. ")).collect();
        let inst = ThreadInstance {
            target: Post::new("t", "u", "c", 10, text),
            context: vec![],
            label: None,
        };
        let x = m.prepare(&inst, &enc, &Abbreviations::default()).unwrap();
        assert_eq!(x.target.rows(), 6);
        assert_eq!(x.context.rows(), 0);
        assert_eq!(x.target.row(5), enc.encode("Sentence number 8 here.").unwrap().0.as_slice());
        let empty = ThreadInstance {
            target: Post::new("t", "u", "c", 10, "   "),
            ..inst.clone()
        };
        assert!(m.prepare(&empty, &enc, &Abbreviations::default()).is_err());
        let wrong = HashedEncoder::new(7, 0).unwrap();
        assert!(matches!(m.prepare(&inst, &wrong, &Abbreviations::default()), Err(Error::Shape(_))));
    }

    #[test]
    fn too_many_rows_rejected() {
        let m = RiskModel::new(tiny(RiskVariant::Mse), SeedStream::new(1)).unwrap();
        let mut rng = SeedStream::new(0).rng();
        assert!(m.forward(&input(7, 0), Mode::Eval, &mut rng, false).is_err());
    }

    #[test]
    fn metric_negative_never_positive() {
        let m = RiskModel::new(tiny(RiskVariant::ClassMetric), SeedStream::new(3)).unwrap();
        let mut rng = SeedStream::new(9).rng();
        let x = input(4, 2);
        for _ in 0..200 {
            m.loss_and_grads(&x, RiskLabel::Amber, 1.0, &mut rng).unwrap();
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        for v in RiskVariant::ALL {
            let m = RiskModel::new(tiny(v), SeedStream::new(4)).unwrap();
            let ck = m.to_checkpoint(4, 0);
            assert_eq!(ck.model_kind, format!("risk:{}", v.name()));
            let back = RiskModel::from_checkpoint(&ck).unwrap();
            assert_eq!(back.config, m.config);
            let x = input(3, 3);
            assert_eq!(back.predict(&x).unwrap(), m.predict(&x).unwrap());
        }
    }
}
