//! Desk-scale sequence-to-sequence parser.
//!
//! Encoder: token embeddings feed a single tanh recurrent cell; the
//! sentence encoding is the mean of the encoder hidden states over the
//! real (unpadded) positions. Decoder: a second tanh recurrent cell whose
//! initial state is the sentence encoding, teacher-forced on
//! `BOS y1 .. yn` and trained to emit `y1 .. yn EOS`. The loss of one
//! example is its mean token cross-entropy; the batch loss is the mean
//! over examples.
//!
//! Batches are processed time-major with padding. Padded encoder steps
//! are masked out of the mean, and padded decoder steps carry no label.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{glorot_uniform, Model};
use crate::error::{Error, Result};
use crate::params::{Layout, ParamVector};
use crate::rng::Stream;
use crate::tasks::Example;
use crate::tensor::{Graph, NodeId, Tensor};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seq2SeqParserSpec {
    pub input_vocab_size: usize,
    pub output_vocab_size: usize,
    #[serde(default = "default_embed")]
    pub embed_dim: usize,
    #[serde(default = "default_hidden")]
    pub hidden_dim: usize,
    #[serde(default = "default_decode")]
    pub max_decode_len: usize,
}

fn default_embed() -> usize {
    32
}
fn default_hidden() -> usize {
    64
}
fn default_decode() -> usize {
    48
}

impl Seq2SeqParserSpec {
    pub fn new(input_vocab_size: usize, output_vocab_size: usize) -> Self {
        Self {
            input_vocab_size,
            output_vocab_size,
            embed_dim: default_embed(),
            hidden_dim: default_hidden(),
            max_decode_len: default_decode(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("input_vocab_size", self.input_vocab_size),
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("max_decode_len", self.max_decode_len),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if self.output_vocab_size <= EOS {
            return Err(Error::Config(
                "output vocabulary must contain PAD, BOS and EOS".into(),
            ));
        }
        Ok(())
    }
}

// Layout order; `Leaves` indexes into this.
const ENC_EMBED: usize = 0;
const ENC_WX: usize = 1;
const ENC_WH: usize = 2;
const ENC_B: usize = 3;
const DEC_EMBED: usize = 4;
const DEC_WX: usize = 5;
const DEC_WH: usize = 6;
const DEC_B: usize = 7;
const OUT_W: usize = 8;
const OUT_B: usize = 9;

#[derive(Debug, Clone)]
pub struct Seq2SeqParser {
    spec: Seq2SeqParserSpec,
    layout: Arc<Layout>,
}

impl Seq2SeqParser {
    pub fn new(spec: Seq2SeqParserSpec) -> Result<Self> {
        spec.validate()?;
        let (vi, vo, e, h) = (
            spec.input_vocab_size,
            spec.output_vocab_size,
            spec.embed_dim,
            spec.hidden_dim,
        );
        let mut layout = Layout::new();
        layout.push("enc.embed", &[vi, e]);
        layout.push("enc.w_x", &[e, h]);
        layout.push("enc.w_h", &[h, h]);
        layout.push("enc.b", &[h]);
        layout.push("dec.embed", &[vo, e]);
        layout.push("dec.w_x", &[e, h]);
        layout.push("dec.w_h", &[h, h]);
        layout.push("dec.b", &[h]);
        layout.push("out.w", &[h, vo]);
        layout.push("out.b", &[vo]);
        Ok(Self {
            spec,
            layout: Arc::new(layout),
        })
    }

    pub fn spec(&self) -> &Seq2SeqParserSpec {
        &self.spec
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn init_params(&self, seed: u64) -> ParamVector {
        let mut rng = Stream::new(seed, "seq2seq-init");
        let mut p = ParamVector::zeros(self.layout.clone());
        for e in self.layout.entries() {
            if e.shape.len() == 2 {
                let block = p.block_mut(&e.name).expect("own layout");
                glorot_uniform(&mut rng, e.shape[0], e.shape[1], block);
            }
        }
        p
    }

    fn leaves(&self, g: &mut Graph, params: &ParamVector) -> Result<Vec<NodeId>> {
        params.check_layout(&ParamVector::zeros(self.layout.clone()))?;
        self.layout
            .entries()
            .iter()
            .map(|e| Ok(g.leaf(params.tensor(&e.name)?)))
            .collect()
    }

    fn check_inputs(&self, inputs: &[Vec<usize>]) -> Result<()> {
        for (i, seq) in inputs.iter().enumerate() {
            if seq.is_empty() {
                return Err(Error::Empty(format!("utterance of example {i}")));
            }
            if let Some(&tok) = seq.iter().find(|&&t| t >= self.spec.input_vocab_size) {
                return Err(Error::OutOfVocab {
                    example: i,
                    token: tok,
                    vocab: self.spec.input_vocab_size,
                });
            }
        }
        Ok(())
    }

    /// Mean-pooled encoder states, `[B, H]`.
    fn encode_graph(&self, g: &mut Graph, leaves: &[NodeId], inputs: &[Vec<usize>]) -> Result<NodeId> {
        let b = inputs.len();
        let h = self.spec.hidden_dim;
        let steps = inputs.iter().map(Vec::len).max().unwrap_or(0);
        let mut indices = Vec::with_capacity(steps * b);
        for t in 0..steps {
            indices.extend(inputs.iter().map(|s| s.get(t).copied().unwrap_or(PAD)));
        }
        let emb = g.embedding(leaves[ENC_EMBED], indices)?;
        let projected = g.matmul(emb, leaves[ENC_WX])?;
        let mut state: Option<NodeId> = None;
        let mut pooled: Option<NodeId> = None;
        for t in 0..steps {
            let x = g.rows(projected, t * b, b)?;
            let mut pre = g.add(x, leaves[ENC_B])?;
            if let Some(prev) = state {
                let rec = g.matmul(prev, leaves[ENC_WH])?;
                pre = g.add(pre, rec)?;
            }
            let hidden = g.tanh(pre)?;
            state = Some(hidden);

            let mut mask = vec![0.0; b * h];
            for (row, seq) in inputs.iter().enumerate() {
                if t < seq.len() {
                    mask[row * h..(row + 1) * h].fill(1.0 / seq.len() as f64);
                }
            }
            let mask = g.leaf(Tensor::matrix(b, h, mask)?);
            let term = g.mul(hidden, mask)?;
            pooled = Some(match pooled {
                Some(acc) => g.add(acc, term)?,
                None => term,
            });
        }
        pooled.ok_or_else(|| Error::Empty("encoder input".into()))
    }

    fn decoder_step(&self, g: &mut Graph, leaves: &[NodeId], x_proj: NodeId, state: NodeId) -> Result<(NodeId, NodeId)> {
        let rec = g.matmul(state, leaves[DEC_WH])?;
        let pre = g.add(x_proj, rec)?;
        let pre = g.add(pre, leaves[DEC_B])?;
        let hidden = g.tanh(pre)?;
        let logits = g.matmul(hidden, leaves[OUT_W])?;
        let logits = g.add(logits, leaves[OUT_B])?;
        Ok((hidden, logits))
    }

    /// Sentence-averaged encoding of one token sequence.
    pub fn encode(&self, params: &ParamVector, utterance: &[usize]) -> Result<Vec<f64>> {
        Ok(self
            .encode_batch(params, &[utterance.to_vec()])?
            .pop()
            .expect("one row"))
    }

    pub fn encode_batch(&self, params: &ParamVector, inputs: &[Vec<usize>]) -> Result<Vec<Vec<f64>>> {
        if inputs.is_empty() {
            return Ok(Vec::new());
        }
        self.check_inputs(inputs)?;
        let mut g = Graph::new();
        let leaves = self.leaves(&mut g, params)?;
        let enc = self.encode_graph(&mut g, &leaves, inputs)?;
        let h = self.spec.hidden_dim;
        Ok(g.value(enc).data().chunks(h).map(<[f64]>::to_vec).collect())
    }

    /// Greedy decoding of one input; EOS is not included in the output.
    pub fn decode_greedy(&self, params: &ParamVector, utterance: &[usize]) -> Result<Vec<usize>> {
        Ok(self
            .decode_greedy_batch(params, &[utterance.to_vec()])?
            .pop()
            .expect("one row"))
    }

    pub fn decode_greedy_batch(&self, params: &ParamVector, inputs: &[Vec<usize>]) -> Result<Vec<Vec<usize>>> {
        if inputs.is_empty() {
            return Ok(Vec::new());
        }
        self.check_inputs(inputs)?;
        let b = inputs.len();
        let vo = self.spec.output_vocab_size;
        let mut g = Graph::new();
        let leaves = self.leaves(&mut g, params)?;
        let mut state = self.encode_graph(&mut g, &leaves, inputs)?;
        let mut outputs = vec![Vec::new(); b];
        let mut done = vec![false; b];
        let mut current = vec![BOS; b];
        for _ in 0..self.spec.max_decode_len {
            let emb = g.embedding(leaves[DEC_EMBED], current.clone())?;
            let x = g.matmul(emb, leaves[DEC_WX])?;
            let (hidden, logits) = self.decoder_step(&mut g, &leaves, x, state)?;
            state = hidden;
            let values = g.value(logits).data();
            for row in 0..b {
                if done[row] {
                    continue;
                }
                let scores = &values[row * vo..(row + 1) * vo];
                let mut best = 0;
                for (tok, &s) in scores.iter().enumerate() {
                    if s > scores[best] {
                        best = tok;
                    }
                }
                if best == EOS {
                    done[row] = true;
                } else {
                    outputs[row].push(best);
                }
                current[row] = best;
            }
            if done.iter().all(|&d| d) {
                break;
            }
        }
        Ok(outputs)
    }

    fn loss_graph(&self, params: &ParamVector, batch: &[Example], want_grad: bool) -> Result<(f64, Option<ParamVector>)> {
        if batch.is_empty() {
            return Err(Error::Empty("batch".into()));
        }
        let inputs: Vec<Vec<usize>> = batch.iter().map(Example::encoder_input).collect();
        self.check_inputs(&inputs)?;
        let vo = self.spec.output_vocab_size;
        for (i, ex) in batch.iter().enumerate() {
            if let Some(&tok) = ex.logical_form.iter().find(|&&t| t >= vo) {
                return Err(Error::OutOfVocab {
                    example: i,
                    token: tok,
                    vocab: vo,
                });
            }
        }

        let b = batch.len();
        let mut g = Graph::new();
        let leaves = self.leaves(&mut g, params)?;
        let mut state = self.encode_graph(&mut g, &leaves, &inputs)?;

        let steps = batch.iter().map(|e| e.logical_form.len() + 1).max().unwrap_or(1);
        let mut dec_in = Vec::with_capacity(steps * b);
        for t in 0..steps {
            dec_in.extend(batch.iter().map(|e| match t {
                0 => BOS,
                _ => e.logical_form.get(t - 1).copied().unwrap_or(PAD),
            }));
        }
        let emb = g.embedding(leaves[DEC_EMBED], dec_in)?;
        let projected = g.matmul(emb, leaves[DEC_WX])?;

        let mut total: Option<NodeId> = None;
        for t in 0..steps {
            let x = g.rows(projected, t * b, b)?;
            let (hidden, logits) = self.decoder_step(&mut g, &leaves, x, state)?;
            state = hidden;
            let mut labels = Vec::with_capacity(b);
            let mut weights = Vec::with_capacity(b);
            for ex in batch {
                let n = ex.logical_form.len();
                labels.push(match t.cmp(&n) {
                    std::cmp::Ordering::Less => Some(ex.logical_form[t]),
                    std::cmp::Ordering::Equal => Some(EOS),
                    std::cmp::Ordering::Greater => None,
                });
                weights.push(1.0 / ((n + 1) * b) as f64);
            }
            let step_loss = g.softmax_cross_entropy(logits, labels, weights)?;
            total = Some(match total {
                Some(acc) => g.add(acc, step_loss)?,
                None => step_loss,
            });
        }
        let total = total.expect("at least one decoder step");
        let loss = g.value(total).data()[0];
        if !want_grad {
            return Ok((loss, None));
        }
        let grads = g.backward(total)?;
        let mut flat = Vec::with_capacity(params.len());
        for &id in &leaves {
            flat.extend_from_slice(grads.get(id).data());
        }
        Ok((loss, Some(params.with_values(flat)?)))
    }
}

impl Model for Seq2SeqParser {
    type Item = Example;

    fn batch_loss(&self, params: &ParamVector, batch: &[Example]) -> Result<(f64, ParamVector)> {
        let (loss, grad) = self.loss_graph(params, batch, true)?;
        Ok((loss, grad.expect("gradient requested")))
    }

    fn batch_value(&self, params: &ParamVector, batch: &[Example]) -> Result<f64> {
        Ok(self.loss_graph(params, batch, false)?.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::grad_check;

    fn ex(pair_id: usize, utterance: Vec<usize>, logical_form: Vec<usize>) -> Example {
        Example {
            pair_id,
            language: "en".into(),
            utterance,
            logical_form,
            context: Vec::new(),
        }
    }

    fn small() -> Seq2SeqParser {
        Seq2SeqParser::new(Seq2SeqParserSpec {
            input_vocab_size: 7,
            output_vocab_size: 6,
            embed_dim: 3,
            hidden_dim: 4,
            max_decode_len: 8,
        })
        .unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(Seq2SeqParser::new(Seq2SeqParserSpec::new(5, 2)).is_err());
        assert!(Seq2SeqParser::new(Seq2SeqParserSpec::new(0, 10)).is_err());
        let mut s = Seq2SeqParserSpec::new(5, 10);
        s.hidden_dim = 0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn init_is_deterministic_and_biases_zero() {
        let m = small();
        let a = m.init_params(1);
        assert_eq!(a, m.init_params(1));
        for name in ["enc.b", "dec.b", "out.b"] {
            assert!(a.block(name).unwrap().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn zero_output_layer_gives_log_vocab_loss() {
        let m = small();
        let mut p = m.init_params(2);
        p.block_mut("out.w").unwrap().fill(0.0);
        let batch = [ex(0, vec![3, 4, 5], vec![3, 4]), ex(1, vec![6], vec![5])];
        let (loss, _) = m.batch_loss(&p, &batch).unwrap();
        assert!((loss - 6f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn duplicating_an_example_keeps_the_mean() {
        let m = small();
        let p = m.init_params(3);
        let e = ex(0, vec![3, 4, 5], vec![3, 4, 3]);
        let (one, g1) = m.batch_loss(&p, std::slice::from_ref(&e)).unwrap();
        let (two, g2) = m.batch_loss(&p, &[e.clone(), e]).unwrap();
        assert!((one - two).abs() < 1e-14);
        assert!(g1.sub(&g2).unwrap().norm_inf() < 1e-14);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = small();
        let p = m.init_params(4);
        let batch = [
            ex(0, vec![3, 4, 5], vec![3, 4]),
            ex(1, vec![6, 1], vec![5, 5, 3]),
            ex(2, vec![2], vec![4]),
        ];
        let err = grad_check(|q| m.batch_loss(q, &batch), &p, 1e-5).unwrap();
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn out_of_vocab_names_the_example() {
        let m = small();
        let p = m.init_params(0);
        let batch = [ex(0, vec![3], vec![3]), ex(1, vec![3, 99], vec![3])];
        match m.batch_loss(&p, &batch) {
            Err(Error::OutOfVocab { example, token, .. }) => {
                assert_eq!((example, token), (1, 99));
            }
            other => panic!("unexpected {other:?}"),
        }
        let batch = [ex(0, vec![3], vec![42])];
        assert!(matches!(
            m.batch_loss(&p, &batch),
            Err(Error::OutOfVocab { example: 0, .. })
        ));
    }

    #[test]
    fn encoding_of_single_token_is_first_hidden_state() {
        let m = small();
        let p = m.init_params(5);
        let enc = m.encode(&p, &[4]).unwrap();
        // h1 = tanh(E[4] W_x + b)
        let e = p.block("enc.embed").unwrap();
        let wx = p.block("enc.w_x").unwrap();
        for (j, &v) in enc.iter().enumerate() {
            let pre: f64 = (0..3).map(|k| e[4 * 3 + k] * wx[k * 4 + j]).sum();
            assert!((v - pre.tanh()).abs() < 1e-15);
        }
        assert!(m.encode(&p, &[]).is_err());
    }

    #[test]
    fn batched_encoding_matches_single() {
        let m = small();
        let p = m.init_params(6);
        let inputs = vec![vec![3, 4, 5, 6], vec![2], vec![6, 5]];
        let batched = m.encode_batch(&p, &inputs).unwrap();
        for (inp, row) in inputs.iter().zip(&batched) {
            let single = m.encode(&p, inp).unwrap();
            for (a, b) in single.iter().zip(row) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn decode_respects_length_cap() {
        let mut spec = small().spec().clone();
        spec.max_decode_len = 1;
        let m = Seq2SeqParser::new(spec).unwrap();
        let p = m.init_params(7);
        let out = m.decode_greedy(&p, &[3, 4]).unwrap();
        assert!(out.len() <= 1);
        assert_eq!(out, m.decode_greedy(&p, &[3, 4]).unwrap());
    }

    #[test]
    fn ties_break_to_lowest_token() {
        let m = small();
        let mut p = m.init_params(8);
        p.block_mut("out.w").unwrap().fill(0.0);
        p.block_mut("out.b").unwrap().fill(0.0);
        // All logits equal: argmax is PAD (0) every step, never EOS.
        let out = m.decode_greedy(&p, &[3]).unwrap();
        assert_eq!(out, vec![PAD; 8]);
    }
}
