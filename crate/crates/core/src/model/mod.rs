//! The flat context-aware encoder–decoder.
//!
//! The encoder reads `[context; current utterance]` as one sequence.
//! Context positions are visible to current-utterance queries only in the
//! first layer; every later layer masks them out. Two binary classifier
//! heads share the encoder for the auxiliary dialogue tasks.

mod network;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::rng::DetRng;
use crate::tensor::Tensor;

pub use network::{ForwardTrace, Pass, Segments};

/// Network dimensions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub layers: usize,
    pub hidden: usize,
    pub ff: usize,
    pub heads: usize,
    pub dropout: f64,
    /// Rows of the position table, and so the longest encoder or decoder
    /// sequence.
    pub max_len: usize,
    /// Rows of the turn table; deeper turns share the last row.
    pub max_turns: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            layers: 2,
            hidden: 32,
            ff: 64,
            heads: 4,
            dropout: 0.1,
            max_len: 96,
            max_turns: 64,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.layers == 0 {
            bad.push("layers must be at least 1".to_string());
        }
        if self.heads == 0 || self.hidden % self.heads != 0 {
            bad.push(format!("hidden {} not divisible by heads {}", self.hidden, self.heads));
        }
        if self.ff == 0 {
            bad.push("ff must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            bad.push(format!("dropout {} not in [0, 1)", self.dropout));
        }
        if self.max_len < 3 || self.max_turns == 0 {
            bad.push("max_len must be at least 3 and max_turns at least 1".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Affine {
    pub gain: usize,
    pub bias: usize,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Attention {
    pub query: usize,
    pub key: usize,
    pub value: usize,
    pub out: usize,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct FeedForward {
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct EncoderLayer {
    pub attn_norm: Affine,
    pub attn: Attention,
    pub ff_norm: Affine,
    pub ff: FeedForward,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct DecoderLayer {
    pub self_norm: Affine,
    pub self_attn: Attention,
    pub cross_norm: Affine,
    pub cross_attn: Attention,
    pub ff_norm: Affine,
    pub ff: FeedForward,
}

/// Positions of every tensor inside the model's [`ParamSet`].
#[derive(Clone, Debug)]
pub(crate) struct Layout {
    pub word: usize,
    pub speaker: usize,
    pub turn: usize,
    pub encoder: Vec<EncoderLayer>,
    pub encoder_norm: Affine,
    pub decoder: Vec<DecoderLayer>,
    pub decoder_norm: Affine,
    pub out_weight: usize,
    pub out_bias: usize,
    pub ud_head: usize,
    pub sd_head: usize,
}

/// Which binary classifier to score with.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Head {
    Utterance,
    Speaker,
}

#[derive(Clone, Debug)]
pub struct FlatNct {
    config: ModelConfig,
    vocab_size: usize,
    params: ParamSet,
    layout: Layout,
    positions: Tensor,
}

struct Builder<'r> {
    params: ParamSet,
    rng: &'r mut DetRng,
}

impl Builder<'_> {
    fn xavier(&mut self, name: String, rows: usize, cols: usize) -> usize {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit);
        let data = (0..rows * cols).map(|_| dist.sample(self.rng)).collect();
        self.params.push(name, Tensor::matrix(rows, cols, data))
    }

    fn normal(&mut self, name: &str, rows: usize, cols: usize, std: f64) -> usize {
        let dist = Normal::new(0.0, std).expect("positive std");
        let data = (0..rows * cols).map(|_| dist.sample(self.rng)).collect();
        self.params.push(name, Tensor::matrix(rows, cols, data))
    }

    fn zeros(&mut self, name: &str, rows: usize, cols: usize) -> usize {
        self.params.push(name, Tensor::zeros(&[rows, cols]))
    }

    fn fill(&mut self, name: String, cols: usize, v: f64) -> usize {
        self.params.push(name, Tensor::filled(&[1, cols], v))
    }

    fn norm(&mut self, prefix: &str, d: usize) -> Affine {
        Affine {
            gain: self.fill(format!("{prefix}.gain"), d, 1.0),
            bias: self.fill(format!("{prefix}.bias"), d, 0.0),
        }
    }

    fn attention(&mut self, prefix: &str, d: usize) -> Attention {
        Attention {
            query: self.xavier(format!("{prefix}.query"), d, d),
            key: self.xavier(format!("{prefix}.key"), d, d),
            value: self.xavier(format!("{prefix}.value"), d, d),
            out: self.xavier(format!("{prefix}.out"), d, d),
        }
    }

    fn feed_forward(&mut self, prefix: &str, d: usize, ff: usize) -> FeedForward {
        FeedForward {
            w1: self.xavier(format!("{prefix}.w1"), d, ff),
            b1: self.fill(format!("{prefix}.b1"), ff, 0.0),
            w2: self.xavier(format!("{prefix}.w2"), ff, d),
            b2: self.fill(format!("{prefix}.b2"), d, 0.0),
        }
    }
}

impl FlatNct {
    /// Randomly initialised model.
    pub fn new(config: ModelConfig, vocab_size: usize, rng: &mut DetRng) -> Result<Self> {
        config.validate()?;
        if vocab_size < 6 {
            return Err(Error::Config(format!("vocabulary of {vocab_size} is too small")));
        }
        let d = config.hidden;
        let std = (d as f64).powf(-0.5);
        let mut b = Builder {
            params: ParamSet::new(),
            rng,
        };
        let word = b.normal("embed.word", vocab_size, d, std);
        // Zero so that dialogue inputs start out embedded like sentences.
        let speaker = b.zeros("embed.speaker", 2, d);
        let turn = b.zeros("embed.turn", config.max_turns, d);
        let encoder = (0..config.layers)
            .map(|l| EncoderLayer {
                attn_norm: b.norm(&format!("enc.{l}.attn_norm"), d),
                attn: b.attention(&format!("enc.{l}.attn"), d),
                ff_norm: b.norm(&format!("enc.{l}.ff_norm"), d),
                ff: b.feed_forward(&format!("enc.{l}.ff"), d, config.ff),
            })
            .collect();
        let encoder_norm = b.norm("enc.norm", d);
        let decoder = (0..config.layers)
            .map(|l| DecoderLayer {
                self_norm: b.norm(&format!("dec.{l}.self_norm"), d),
                self_attn: b.attention(&format!("dec.{l}.self_attn"), d),
                cross_norm: b.norm(&format!("dec.{l}.cross_norm"), d),
                cross_attn: b.attention(&format!("dec.{l}.cross_attn"), d),
                ff_norm: b.norm(&format!("dec.{l}.ff_norm"), d),
                ff: b.feed_forward(&format!("dec.{l}.ff"), d, config.ff),
            })
            .collect();
        let decoder_norm = b.norm("dec.norm", d);
        let out_weight = b.xavier("out.weight".into(), vocab_size, d);
        let out_bias = b.fill("out.bias".into(), vocab_size, 0.0);
        let ud_head = b.xavier("ud.weight".into(), 1, 2 * d);
        let sd_head = b.xavier("sd.weight".into(), 1, 2 * d);
        let layout = Layout {
            word,
            speaker,
            turn,
            encoder,
            encoder_norm,
            decoder,
            decoder_norm,
            out_weight,
            out_bias,
            ud_head,
            sd_head,
        };
        Ok(FlatNct {
            positions: sinusoid_table(config.max_len, d),
            config,
            vocab_size,
            params: b.params,
            layout,
        })
    }

    /// Rebuilds a model around loaded parameters, checking names and shapes
    /// against a fresh layout.
    pub fn from_params(config: ModelConfig, vocab_size: usize, params: ParamSet) -> Result<Self> {
        let mut rng = crate::rng::stream(0, &[]);
        let mut model = FlatNct::new(config, vocab_size, &mut rng)?;
        model.params.check_layout(&params, "model parameters")?;
        model.params = params;
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Fixed position encodings, one row per position.
    pub fn position_table(&self) -> &Tensor {
        &self.positions
    }

    #[cfg(test)]
    pub(crate) fn layout(&self) -> &Layout {
        &self.layout
    }

    /// Indices of the parameters owned by the encoder and the embeddings it
    /// reads.
    pub fn encoder_param_indices(&self) -> Vec<usize> {
        self.params
            .names()
            .iter()
            .enumerate()
            .filter(|(_, n)| n.starts_with("enc.") || n.starts_with("embed."))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn head_index(&self, head: Head) -> usize {
        match head {
            Head::Utterance => self.layout.ud_head,
            Head::Speaker => self.layout.sd_head,
        }
    }

    /// Randomises every parameter with `rng`; used by tests that need
    /// non-trivial gains and biases.
    pub fn perturb<R: Rng>(&mut self, rng: &mut R, scale: f64) {
        for t in self.params.tensors_mut() {
            for v in t.data_mut() {
                *v += scale * (rng.gen::<f64>() * 2.0 - 1.0);
            }
        }
    }
}

/// Sinusoidal encodings: even columns `sin(p / 10000^(2i/d))`, odd columns
/// the matching cosine, scaled by `sqrt(2/d)` so rows have about unit norm
/// like the learned tables.
pub fn sinusoid_table(rows: usize, d: usize) -> Tensor {
    let scale = (2.0 / d as f64).sqrt();
    let mut data = Vec::with_capacity(rows * d);
    for p in 0..rows {
        for k in 0..d {
            let rate = 10000f64.powf(-((k / 2 * 2) as f64) / d as f64);
            let angle = p as f64 * rate;
            data.push(scale * if k % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    Tensor::matrix(rows, d, data)
}

#[cfg(test)]
mod tests;
