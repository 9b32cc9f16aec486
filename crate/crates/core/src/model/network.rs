use crate::data::{PairInput, SourceInput};
use crate::error::{Error, Result};
use crate::params::Bound;
use crate::rng::DetRng;
use crate::tensor::{Graph, Mask, Tensor, Var};

use super::{Affine, Attention, FeedForward, FlatNct, Head};

const NORM_EPS: f64 = 1e-5;

/// Per-call switches for a forward pass.
pub struct Pass<'a> {
    rng: Option<&'a mut DetRng>,
    trace: Option<&'a mut ForwardTrace>,
    first_layer_context: bool,
}

impl<'a> Pass<'a> {
    /// Evaluation: no dropout, no tracing.
    pub fn eval() -> Self {
        Pass {
            rng: None,
            trace: None,
            first_layer_context: true,
        }
    }

    /// Training: dropout draws from `rng`.
    pub fn train(rng: &'a mut DetRng) -> Self {
        Pass {
            rng: Some(rng),
            ..Pass::eval()
        }
    }

    /// Evaluation that records intermediate states into `trace`.
    pub fn traced(trace: &'a mut ForwardTrace) -> Self {
        Pass {
            trace: Some(trace),
            ..Pass::eval()
        }
    }

    /// Masks context keys in the first encoder layer as well, cutting the
    /// only path from context to the current utterance.
    pub fn without_context_attention(mut self) -> Self {
        self.first_layer_context = false;
        self
    }
}

/// Intermediate values kept for inspection.
#[derive(Clone, Debug, Default)]
pub struct ForwardTrace {
    /// Packed encoder output of each layer.
    pub encoder_states: Vec<Tensor>,
    /// Attention probabilities indexed `[layer][example][head]`.
    pub encoder_attention: Vec<Vec<Vec<Tensor>>>,
    pub decoder_states: Vec<Tensor>,
}

/// Row ranges of the examples packed into one matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segments {
    pub starts: Vec<usize>,
    pub lens: Vec<usize>,
}

impl Segments {
    pub fn from_lens(lens: Vec<usize>) -> Self {
        let mut starts = Vec::with_capacity(lens.len());
        let mut at = 0;
        for &l in &lens {
            starts.push(at);
            at += l;
        }
        Segments { starts, lens }
    }

    pub fn len(&self) -> usize {
        self.lens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lens.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.lens.iter().sum()
    }
}

fn to_usize(ids: &[u32]) -> Vec<usize> {
    ids.iter().map(|&i| i as usize).collect()
}

/// Keeps `(i, j)` when both sit on the same side of `boundary`.
fn block_mask(len: usize, boundary: usize) -> Mask {
    let keep = (0..len * len)
        .map(|k| (k / len < boundary) == (k % len < boundary))
        .collect();
    Mask::new(len, len, keep)
}

fn causal_mask(len: usize) -> Mask {
    let keep = (0..len * len).map(|k| k % len <= k / len).collect();
    Mask::new(len, len, keep)
}

impl FlatNct {
    fn norm(&self, g: &mut Graph, b: &Bound, x: Var, a: Affine) -> Var {
        g.layer_norm(x, b.var(a.gain), b.var(a.bias), NORM_EPS)
    }

    fn dropout(&self, g: &mut Graph, x: Var, pass: &mut Pass) -> Var {
        g.dropout(x, self.config.dropout, pass.rng.as_deref_mut())
    }

    fn feed_forward(&self, g: &mut Graph, b: &Bound, x: Var, f: FeedForward) -> Var {
        let h = g.matmul(x, b.var(f.w1));
        let h = g.add_row(h, b.var(f.b1));
        let h = g.relu(h);
        let h = g.matmul(h, b.var(f.w2));
        g.add_row(h, b.var(f.b2))
    }

    /// Multi-head attention over packed examples. Example `e` attends from
    /// its query rows to its key rows under `masks[e]`.
    #[allow(clippy::too_many_arguments)]
    fn attention(
        &self,
        g: &mut Graph,
        b: &Bound,
        a: Attention,
        queries: Var,
        q_segs: &Segments,
        keys: Var,
        k_segs: &Segments,
        masks: &[Option<Mask>],
        mut maps: Option<&mut Vec<Vec<Tensor>>>,
    ) -> Result<Var> {
        let heads = self.config.heads;
        let dh = self.config.hidden / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let q = g.matmul(queries, b.var(a.query));
        let k = g.matmul(keys, b.var(a.key));
        let v = g.matmul(keys, b.var(a.value));
        let split = |g: &mut Graph, x: Var| -> Vec<Var> {
            if heads == 1 {
                vec![x]
            } else {
                (0..heads).map(|h| g.slice_cols(x, h * dh, dh)).collect()
            }
        };
        let (qh, kh, vh) = (split(g, q), split(g, k), split(g, v));
        let mut rows = Vec::with_capacity(q_segs.len());
        for e in 0..q_segs.len() {
            let (qs, ql) = (q_segs.starts[e], q_segs.lens[e]);
            let (ks, kl) = (k_segs.starts[e], k_segs.lens[e]);
            let mut outs = Vec::with_capacity(heads);
            let mut example_maps = Vec::new();
            for h in 0..heads {
                let qe = g.slice_rows(qh[h], qs, ql);
                let ke = g.slice_rows(kh[h], ks, kl);
                let ve = g.slice_rows(vh[h], ks, kl);
                let scores = g.matmul_nt(qe, ke);
                let scores = g.scale(scores, scale);
                let p = g.masked_softmax(scores, masks[e].as_ref())?;
                if maps.is_some() {
                    example_maps.push(g.value(p).clone());
                }
                outs.push(g.matmul(p, ve));
            }
            if let Some(m) = maps.as_deref_mut() {
                m.push(example_maps);
            }
            rows.push(if heads == 1 { outs[0] } else { g.concat_cols(&outs) });
        }
        let merged = if rows.len() == 1 { rows[0] } else { g.concat_rows(&rows) };
        Ok(g.matmul(merged, b.var(a.out)))
    }

    /// Sum of word, position, speaker and turn embeddings per position.
    pub fn embed(
        &self,
        g: &mut Graph,
        b: &Bound,
        ids: &[u32],
        positions: &[usize],
        speakers: &[usize],
        turns: &[usize],
    ) -> Result<Var> {
        let l = &self.layout;
        let w = g.embedding(b.var(l.word), &to_usize(ids), "word")?;
        let table = g.constant(self.position_table().clone());
        let p = g.embedding(table, positions, "position")?;
        let s = g.embedding(b.var(l.speaker), speakers, "speaker")?;
        let t = g.embedding(b.var(l.turn), turns, "turn")?;
        let x = g.add(w, p);
        let x = g.add(x, s);
        Ok(g.add(x, t))
    }

    fn embed_sources(&self, g: &mut Graph, b: &Bound, inputs: &[SourceInput]) -> Result<Var> {
        let cat = |f: &dyn Fn(&SourceInput) -> &[usize]| -> Vec<usize> {
            inputs.iter().flat_map(|s| f(s).iter().copied()).collect()
        };
        let ids: Vec<u32> = inputs.iter().flat_map(|s| s.ids.iter().copied()).collect();
        self.embed(
            g,
            b,
            &ids,
            &cat(&|s| &s.positions),
            &cat(&|s| &s.speakers),
            &cat(&|s| &s.turns),
        )
    }

    /// Encoder stack over packed rows. With `boundaries`, example `e` uses
    /// the flat rule: full attention in the first layer, attention confined
    /// to its own side of `boundaries[e]` above it.
    fn encoder(
        &self,
        g: &mut Graph,
        b: &Bound,
        mut x: Var,
        segs: &Segments,
        boundaries: Option<&[usize]>,
        pass: &mut Pass,
    ) -> Result<Var> {
        let blocked: Vec<Option<Mask>> = match boundaries {
            Some(bs) => segs
                .lens
                .iter()
                .zip(bs)
                .map(|(&n, &bd)| (bd > 0).then(|| block_mask(n, bd)))
                .collect(),
            None => vec![None; segs.len()],
        };
        let open: Vec<Option<Mask>> = vec![None; segs.len()];
        x = self.dropout(g, x, pass);
        for (l, layer) in self.layout.encoder.iter().enumerate() {
            let masks = if l == 0 && pass.first_layer_context { &open } else { &blocked };
            let h = self.norm(g, b, x, layer.attn_norm);
            let mut maps = pass.trace.as_ref().map(|_| Vec::new());
            let h = self.attention(g, b, layer.attn, h, segs, h, segs, masks, maps.as_mut())?;
            let h = self.dropout(g, h, pass);
            x = g.add(x, h);
            let h = self.norm(g, b, x, layer.ff_norm);
            let h = self.feed_forward(g, b, h, layer.ff);
            let h = self.dropout(g, h, pass);
            x = g.add(x, h);
            if let Some(t) = pass.trace.as_deref_mut() {
                t.encoder_attention.push(maps.unwrap_or_default());
                t.encoder_states.push(g.value(x).clone());
            }
        }
        Ok(self.norm(g, b, x, self.layout.encoder_norm))
    }

    /// Flat encoding. Returns the packed top-layer states of each example's
    /// current segment (from its boundary separator to `<eos>`).
    pub fn encode_flat(
        &self,
        g: &mut Graph,
        b: &Bound,
        inputs: &[SourceInput],
        pass: &mut Pass,
    ) -> Result<(Var, Segments)> {
        if inputs.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let x = self.embed_sources(g, b, inputs)?;
        let segs = Segments::from_lens(inputs.iter().map(SourceInput::len).collect());
        let bounds: Vec<usize> = inputs.iter().map(|s| s.boundary).collect();
        let h = self.encoder(g, b, x, &segs, Some(&bounds), pass)?;
        let current = Segments::from_lens(inputs.iter().map(SourceInput::current_len).collect());
        if inputs.iter().all(|s| s.boundary == 0) {
            return Ok((h, current));
        }
        let parts: Vec<Var> = (0..inputs.len())
            .map(|e| g.slice_rows(h, segs.starts[e] + bounds[e], current.lens[e]))
            .collect();
        let out = if parts.len() == 1 { parts[0] } else { g.concat_rows(&parts) };
        Ok((out, current))
    }

    /// Full self-attention at every layer over whole sequences.
    pub fn encode_plain(
        &self,
        g: &mut Graph,
        b: &Bound,
        inputs: &[SourceInput],
        pass: &mut Pass,
    ) -> Result<(Var, Segments)> {
        if inputs.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let x = self.embed_sources(g, b, inputs)?;
        let segs = Segments::from_lens(inputs.iter().map(SourceInput::len).collect());
        let h = self.encoder(g, b, x, &segs, None, pass)?;
        Ok((h, segs))
    }

    /// Plain encoding of classifier inputs. Speaker and turn ids are fixed
    /// to 0 so that neither can reveal the label.
    pub fn encode_pairs(
        &self,
        g: &mut Graph,
        b: &Bound,
        pairs: &[PairInput],
        pass: &mut Pass,
    ) -> Result<(Var, Segments)> {
        if pairs.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let ids: Vec<u32> = pairs.iter().flat_map(|p| p.ids.iter().copied()).collect();
        let positions: Vec<usize> = pairs.iter().flat_map(|p| 0..p.len()).collect();
        let zeros = vec![0; ids.len()];
        let x = self.embed(g, b, &ids, &positions, &zeros, &zeros)?;
        let segs = Segments::from_lens(pairs.iter().map(PairInput::len).collect());
        let h = self.encoder(g, b, x, &segs, None, pass)?;
        Ok((h, segs))
    }

    /// Context summary: the state at the first position of a segment.
    pub fn pool_context(g: &mut Graph, states: Var, segment_start: usize) -> Var {
        g.slice_rows(states, segment_start, 1)
    }

    /// Utterance summary: the mean of its token states.
    pub fn pool_utterance(g: &mut Graph, states: Var, start: usize, len: usize) -> Result<Var> {
        if len == 0 {
            return Err(Error::Invalid("cannot pool an empty utterance".into()));
        }
        let rows = g.slice_rows(states, start, len);
        Ok(g.mean_rows(rows))
    }

    /// `sigmoid(w · [candidate; context])` for each row of the stacked
    /// `n × 2d` summaries, as an `n × 1` column.
    pub fn head_probabilities(&self, g: &mut Graph, b: &Bound, head: Head, summaries: Var) -> Var {
        let logits = g.matmul_nt(summaries, b.var(self.head_index(head)));
        g.sigmoid(logits)
    }

    /// Probability of label 1 for one candidate/context summary pair.
    pub fn score(&self, g: &mut Graph, b: &Bound, head: Head, candidate: Var, context: Var) -> Var {
        let joined = g.concat_cols(&[candidate, context]);
        self.head_probabilities(g, b, head, joined)
    }

    /// Label-1 probabilities for classifier inputs, one row per pair.
    pub fn pair_probabilities(
        &self,
        g: &mut Graph,
        b: &Bound,
        head: Head,
        pairs: &[PairInput],
        pass: &mut Pass,
    ) -> Result<Var> {
        let (h, segs) = self.encode_pairs(g, b, pairs, pass)?;
        let mut rows = Vec::with_capacity(pairs.len());
        for (e, p) in pairs.iter().enumerate() {
            let start = segs.starts[e];
            let cand = Self::pool_utterance(
                g,
                h,
                start + p.candidate.start,
                p.candidate.end - p.candidate.start,
            )?;
            let ctx = Self::pool_context(g, h, start);
            rows.push(g.concat_cols(&[cand, ctx]));
        }
        let stacked = if rows.len() == 1 { rows[0] } else { g.concat_rows(&rows) };
        Ok(self.head_probabilities(g, b, head, stacked))
    }

    /// Next-token distributions for every position of every target prefix.
    /// `prefixes[e]` starts with `<eos>` and attends to encoder rows
    /// `memory_segs` of example `e`.
    pub fn decode(
        &self,
        g: &mut Graph,
        b: &Bound,
        prefixes: &[&[u32]],
        memory: Var,
        memory_segs: &Segments,
        pass: &mut Pass,
    ) -> Result<Var> {
        let logits = self.decode_logits(g, b, prefixes, memory, memory_segs, pass)?;
        g.masked_softmax(logits, None)
    }

    pub(crate) fn decode_logits(
        &self,
        g: &mut Graph,
        b: &Bound,
        prefixes: &[&[u32]],
        memory: Var,
        memory_segs: &Segments,
        pass: &mut Pass,
    ) -> Result<Var> {
        let y = self.decode_states(g, b, prefixes, memory, memory_segs, pass)?;
        Ok(self.project(g, b, y))
    }

    /// Output-layer logits of decoder states.
    pub(crate) fn project(&self, g: &mut Graph, b: &Bound, states: Var) -> Var {
        let logits = g.matmul_nt(states, b.var(self.layout.out_weight));
        g.add_row(logits, b.var(self.layout.out_bias))
    }

    /// Normalised top-layer decoder states, one row per prefix position.
    pub(crate) fn decode_states(
        &self,
        g: &mut Graph,
        b: &Bound,
        prefixes: &[&[u32]],
        memory: Var,
        memory_segs: &Segments,
        pass: &mut Pass,
    ) -> Result<Var> {
        if prefixes.is_empty() || prefixes.iter().any(|p| p.is_empty()) {
            return Err(Error::EmptyBatch);
        }
        let l = &self.layout;
        let ids: Vec<usize> = prefixes.iter().flat_map(|p| p.iter().map(|&i| i as usize)).collect();
        let positions: Vec<usize> = prefixes.iter().flat_map(|p| 0..p.len()).collect();
        let w = g.embedding(b.var(l.word), &ids, "word")?;
        let table = g.constant(self.position_table().clone());
        let p = g.embedding(table, &positions, "position")?;
        let mut y = g.add(w, p);
        y = self.dropout(g, y, pass);
        let segs = Segments::from_lens(prefixes.iter().map(|p| p.len()).collect());
        let causal: Vec<Option<Mask>> = segs.lens.iter().map(|&n| Some(causal_mask(n))).collect();
        let open: Vec<Option<Mask>> = vec![None; segs.len()];
        for layer in &l.decoder {
            let h = self.norm(g, b, y, layer.self_norm);
            let h = self.attention(g, b, layer.self_attn, h, &segs, h, &segs, &causal, None)?;
            let h = self.dropout(g, h, pass);
            y = g.add(y, h);
            let h = self.norm(g, b, y, layer.cross_norm);
            let h = self.attention(g, b, layer.cross_attn, h, &segs, memory, memory_segs, &open, None)?;
            let h = self.dropout(g, h, pass);
            y = g.add(y, h);
            let h = self.norm(g, b, y, layer.ff_norm);
            let h = self.feed_forward(g, b, h, layer.ff);
            let h = self.dropout(g, h, pass);
            y = g.add(y, h);
            if let Some(t) = pass.trace.as_deref_mut() {
                t.decoder_states.push(g.value(y).clone());
            }
        }
        Ok(self.norm(g, b, y, l.decoder_norm))
    }
}
