//! Temporal convolutional network mapping `(x, y, ε'_eq, lf)` sequences to
//! the scaled nonlocal strain, with input derivatives, training and
//! step-by-step inference.
//!
//! Each residual block is `tanh(conv2(tanh(conv1(x)))) + skip(x)` followed by
//! `tanh`, where both convolutions are causal, dilated and weight-normalized.
//! Block `b` uses dilation `dil * 2^b`. The skip is a 1x1 convolution when the
//! channel count changes and the identity otherwise. A linear head maps the
//! last block's filters to one output per step.

mod checkpoint;
mod incremental;
pub mod tape;
mod train;

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::tensor::SequenceTensor;
use tape::{ConvSpec, NodeId, SeqShape, Tape};

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use incremental::IncrementalTcn;
pub use train::{
    loss_and_gradient, train_adam, train_adam_with, Adam, LossTerms, LossWeights, TrainConfig, TrainOutcome, TrainingData,
};

pub const FEATURE_X: usize = 0;
pub const FEATURE_Y: usize = 1;
pub const FEATURE_EPS: usize = 2;
pub const FEATURE_LF: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid network configuration: {0}")]
    Config(String),
    #[error("non-finite loss at epoch {epoch}: {terms:?}")]
    NonFinite { epoch: usize, terms: LossTerms },
    #[error("missing dataset: {0}")]
    MissingData(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TcnConfig {
    pub n_blocks: usize,
    pub dil: usize,
    pub k_size: usize,
    pub num_filters: usize,
    pub n_features_in: usize,
    pub dropout: f64,
    pub activation: Activation,
}

impl Default for TcnConfig {
    fn default() -> Self {
        TcnConfig { n_blocks: 1, dil: 3, k_size: 12, num_filters: 6, n_features_in: 4, dropout: 0.0, activation: Activation::Tanh }
    }
}

impl TcnConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |m: &str| Err(NnError::Config(m.to_string()));
        if self.n_blocks == 0 {
            return bad("n_blocks must be at least 1");
        }
        if self.dil == 0 || self.k_size == 0 || self.num_filters == 0 {
            return bad("dil, k_size and num_filters must be at least 1");
        }
        if self.n_features_in != 4 {
            return bad("n_features_in must be 4 (x, y, eps_eq, lf)");
        }
        if self.dropout != 0.0 {
            return bad("dropout is not supported; set it to 0");
        }
        if self.n_blocks > 16 {
            return bad("n_blocks above 16 overflows the dilation schedule");
        }
        Ok(())
    }

    pub fn block_dilation(&self, block: usize) -> usize {
        self.dil << block
    }

    /// Steps of history that influence one output.
    pub fn receptive_field(&self) -> usize {
        1 + (0..self.n_blocks).map(|b| 2 * (self.k_size - 1) * self.block_dilation(b)).sum::<usize>()
    }
}

#[derive(Clone, Debug, PartialEq)]
struct BlockLayout {
    c_in: usize,
    dil: usize,
    v1: Range<usize>,
    g1: Range<usize>,
    b1: Range<usize>,
    v2: Range<usize>,
    g2: Range<usize>,
    b2: Range<usize>,
    /// 1x1 skip convolution (weights, bias) when `c_in != num_filters`.
    skip: Option<(Range<usize>, Range<usize>)>,
}

#[derive(Clone, Debug, PartialEq)]
struct Layout {
    blocks: Vec<BlockLayout>,
    head_w: Range<usize>,
    head_b: Range<usize>,
    n_params: usize,
}

impl Layout {
    fn new(config: &TcnConfig) -> Self {
        let mut at = 0;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        let (f, k) = (config.num_filters, config.k_size);
        let mut blocks = Vec::with_capacity(config.n_blocks);
        for b in 0..config.n_blocks {
            let c_in = if b == 0 { config.n_features_in } else { f };
            let v1 = take(f * c_in * k);
            let g1 = take(f);
            let b1 = take(f);
            let v2 = take(f * f * k);
            let g2 = take(f);
            let b2 = take(f);
            let skip = (c_in != f).then(|| (take(f * c_in), take(f)));
            blocks.push(BlockLayout { c_in, dil: config.block_dilation(b), v1, g1, b1, v2, g2, b2, skip });
        }
        let head_w = take(f);
        let head_b = take(1);
        Layout { blocks, head_w, head_b, n_params: at }
    }
}

/// How an input derivative is reduced over the history.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TangentMode {
    /// `∂y_t / ∂in_t`: the input at the output's own step only.
    SameIncrement,
    /// `Σ_{s<=t} ∂y_t / ∂in_s`: the feature moved at every step, as for
    /// the constant-in-time coordinates.
    Total,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TangentRequest {
    pub feature: usize,
    pub mode: TangentMode,
    /// Point rows for which the derivative is needed.
    pub rows: Range<usize>,
}

/// A recorded forward pass.
pub struct Graph {
    pub tape: Tape,
    /// Output node `[steps x 1 x points]`.
    pub output: NodeId,
    /// One node per [`TangentRequest`], `[steps x 1 x rows]`.
    pub tangents: Vec<NodeId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TcnModel {
    pub config: TcnConfig,
    pub params: Vec<f64>,
    layout: Layout,
}

/// Input derivatives of the scaled output, `[steps x points]` like the
/// predictions.
#[derive(Clone, Debug, PartialEq)]
pub struct InputGradients {
    /// Same-increment derivative with respect to the scaled local strain.
    pub d_eps: Vec<f64>,
    /// Total derivatives with respect to the coordinates.
    pub d_x: Vec<f64>,
    pub d_y: Vec<f64>,
}

impl TcnModel {
    /// Random initialization, uniform in `±1/sqrt(fan_in * k)` per layer, with
    /// the weight-norm magnitudes set to the initial row norms.
    pub fn new(config: TcnConfig, seed: u64) -> Result<Self, NnError> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut params = vec![0.0; layout.n_params];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = config.k_size;
        let mut fill = |params: &mut [f64], r: &Range<usize>, bound: f64| {
            for v in &mut params[r.clone()] {
                *v = rng.random_range(-bound..bound);
            }
        };
        for b in &layout.blocks {
            let f = config.num_filters;
            let bound1 = 1.0 / ((b.c_in * k) as f64).sqrt();
            let bound2 = 1.0 / ((f * k) as f64).sqrt();
            fill(&mut params, &b.v1, bound1);
            fill(&mut params, &b.b1, bound1);
            fill(&mut params, &b.v2, bound2);
            fill(&mut params, &b.b2, bound2);
            if let Some((w, bias)) = &b.skip {
                let bound = 1.0 / (b.c_in as f64).sqrt();
                fill(&mut params, w, bound);
                fill(&mut params, bias, bound);
            }
        }
        let bound = 1.0 / (config.num_filters as f64).sqrt();
        fill(&mut params, &layout.head_w, bound);
        fill(&mut params, &layout.head_b, bound);
        let mut model = TcnModel { config, params, layout };
        model.reset_magnitudes();
        Ok(model)
    }

    /// Builds a model from an existing parameter vector.
    pub fn from_params(config: TcnConfig, params: Vec<f64>) -> Result<Self, NnError> {
        config.validate()?;
        let layout = Layout::new(&config);
        if params.len() != layout.n_params {
            return Err(NnError::Shape(format!("{} parameters for a network with {}", params.len(), layout.n_params)));
        }
        Ok(TcnModel { config, params, layout })
    }

    fn reset_magnitudes(&mut self) {
        let (f, k) = (self.config.num_filters, self.config.k_size);
        for b in self.layout.blocks.clone() {
            for (v, g, row) in [(&b.v1, &b.g1, b.c_in * k), (&b.v2, &b.g2, f * k)] {
                for o in 0..f {
                    let start = v.start + o * row;
                    let n = self.params[start..start + row].iter().map(|x| x * x).sum::<f64>().sqrt();
                    self.params[g.start + o] = n;
                }
            }
        }
    }

    pub fn n_params(&self) -> usize {
        self.layout.n_params
    }

    /// Scales every weight-norm direction `v` by `c`; the network function is
    /// unchanged for `c > 0`.
    pub fn rescale_directions(&mut self, c: f64) {
        for b in &self.layout.blocks {
            for r in [&b.v1, &b.v2] {
                for v in &mut self.params[r.clone()] {
                    *v *= c;
                }
            }
        }
    }

    /// Effective convolution weights `[c_out][c_in][k]` of block `b`, layer
    /// `layer` (0 or 1).
    pub fn effective_weights(&self, block: usize, layer: usize) -> Vec<f64> {
        let b = &self.layout.blocks[block];
        let (v, g) = if layer == 0 { (&b.v1, &b.g1) } else { (&b.v2, &b.g2) };
        let row = v.len() / g.len();
        let mut w = self.params[v.clone()].to_vec();
        for (o, chunk) in w.chunks_exact_mut(row).enumerate() {
            let n = chunk.iter().map(|x| x * x).sum::<f64>().sqrt();
            let s = self.params[g.start + o] / n;
            chunk.iter_mut().for_each(|x| *x *= s);
        }
        w
    }

    /// Records the network on `input` (`[steps x 4 x points]`)
    /// together with the requested input tangents.
    pub fn build_graph(&self, input: Vec<f64>, shape: SeqShape, requests: &[TangentRequest]) -> Result<Graph, NnError> {
        if shape.channels != self.config.n_features_in || input.len() != shape.len() {
            return Err(NnError::Shape(format!(
                "input of {} values with shape {:?}; the network takes {} features",
                input.len(),
                shape,
                self.config.n_features_in
            )));
        }
        for r in requests {
            if r.feature >= shape.channels || r.rows.end > shape.points {
                return Err(NnError::Shape(format!("tangent request {r:?} outside input shape {shape:?}")));
            }
        }
        let (f, k) = (self.config.num_filters, self.config.k_size);
        let mut tape = Tape::new();
        let p = &self.params;
        let x0 = tape.constant(input, shape);
        // Tangent seeds: a unit value in the requested feature for the rows.
        let mut dots: Vec<NodeId> = requests
            .iter()
            .map(|r| {
                let s = SeqShape { points: r.rows.len(), ..shape };
                let n = r.rows.len();
                let mut seed = vec![0.0; s.len()];
                for t in 0..shape.steps {
                    let at = (t * shape.channels + r.feature) * n;
                    seed[at..at + n].fill(1.0);
                }
                tape.constant(seed, s)
            })
            .collect();
        let mut x = x0;
        for b in &self.layout.blocks {
            let v1 = tape.param(p, b.v1.clone());
            let g1 = tape.param(p, b.g1.clone());
            let b1 = tape.param(p, b.b1.clone());
            let v2 = tape.param(p, b.v2.clone());
            let g2 = tape.param(p, b.g2.clone());
            let b2 = tape.param(p, b.b2.clone());
            let w1 = tape.weight_norm(v1, g1);
            let w2 = tape.weight_norm(v2, g2);
            let spec1 = ConvSpec { c_in: b.c_in, c_out: f, k_size: k, dil: b.dil, tap0: false };
            let spec2 = ConvSpec { c_in: f, ..spec1 };
            let z1 = tape.conv(x, w1, Some(b1), spec1);
            let h1 = tape.tanh(z1);
            let z2 = tape.conv(h1, w2, Some(b2), spec2);
            let h2 = tape.tanh(z2);
            let skip = match &b.skip {
                Some((ws, bs)) => {
                    let ws = tape.param(p, ws.clone());
                    let bs = tape.param(p, bs.clone());
                    let spec = ConvSpec { c_in: b.c_in, c_out: f, k_size: 1, dil: 1, tap0: false };
                    Some((ws, tape.conv(x, ws, Some(bs), spec), spec))
                }
                None => None,
            };
            let sum = tape.add(h2, skip.map_or(x, |s| s.1));
            let o = tape.tanh(sum);
            for (dot, r) in dots.iter_mut().zip(requests) {
                let tap0 = r.mode == TangentMode::SameIncrement;
                let sub = |tape: &mut Tape, n| if r.rows.len() == shape.points { n } else { tape.select_points(n, r.rows.clone()) };
                let h1s = sub(&mut tape, h1);
                let h2s = sub(&mut tape, h2);
                let os = sub(&mut tape, o);
                let dz1 = tape.conv(*dot, w1, None, ConvSpec { tap0, ..spec1 });
                let dh1 = tape.tanh_tangent(h1s, dz1);
                let dz2 = tape.conv(dh1, w2, None, ConvSpec { tap0, ..spec2 });
                let dh2 = tape.tanh_tangent(h2s, dz2);
                let dskip = match skip {
                    Some((ws, _, spec)) => tape.conv(*dot, ws, None, spec),
                    None => *dot,
                };
                let dsum = tape.add(dh2, dskip);
                *dot = tape.tanh_tangent(os, dsum);
            }
            x = o;
        }
        let hw = tape.param(p, self.layout.head_w.clone());
        let hb = tape.param(p, self.layout.head_b.clone());
        let output = tape.dense(x, hw, Some(hb));
        let tangents = dots.into_iter().map(|d| tape.dense(d, hw, None)).collect();
        Ok(Graph { tape, output, tangents })
    }

    /// Scaled predictions `[steps x points]` for a `[steps x points x 4]`
    /// tensor.
    pub fn forward(&self, seq: &SequenceTensor) -> Result<Vec<f64>, NnError> {
        let (input, shape) = channel_major(seq);
        let g = self.build_graph(input, shape, &[])?;
        Ok(g.tape.value(g.output).to_vec())
    }

    /// Predictions and input derivatives for every point.
    pub fn input_gradients(&self, seq: &SequenceTensor) -> Result<(Vec<f64>, InputGradients), NnError> {
        let (input, shape) = channel_major(seq);
        let all = 0..shape.points;
        let requests = [
            TangentRequest { feature: FEATURE_EPS, mode: TangentMode::SameIncrement, rows: all.clone() },
            TangentRequest { feature: FEATURE_X, mode: TangentMode::Total, rows: all.clone() },
            TangentRequest { feature: FEATURE_Y, mode: TangentMode::Total, rows: all },
        ];
        let g = self.build_graph(input, shape, &requests)?;
        let sm = |id| g.tape.value(id).to_vec();
        Ok((sm(g.output), InputGradients { d_eps: sm(g.tangents[0]), d_x: sm(g.tangents[1]), d_y: sm(g.tangents[2]) }))
    }
}

/// `[steps x points x features]` to the network layout
/// `[steps x features x points]`.
pub fn channel_major(seq: &SequenceTensor) -> (Vec<f64>, SeqShape) {
    let [t_len, p_len, f] = seq.shape();
    let mut out = vec![0.0; seq.data.len()];
    for t in 0..t_len {
        for p in 0..p_len {
            for c in 0..f {
                out[(t * f + c) * p_len + p] = seq.get(t, p, c);
            }
        }
    }
    (out, SeqShape { points: p_len, steps: t_len, channels: f })
}

/// Causal dilated convolution of one sequence `x[len][c_in]` with a kernel
/// `kernel[c_out][c_in][k]`: `F(s) = Σ_i k(i) x[s - dil i]`, zero for
/// negative steps.
pub fn conv1d_causal(x: &[Vec<f64>], kernel: &[Vec<Vec<f64>>], dil: usize) -> Result<Vec<Vec<f64>>, NnError> {
    let c_out = kernel.len();
    let c_in = kernel.first().map_or(0, |k| k.len());
    let k_size = kernel.first().and_then(|k| k.first()).map_or(0, |k| k.len());
    if c_out == 0 || c_in == 0 || k_size == 0 || dil == 0 {
        return Err(NnError::Shape("empty kernel or zero dilation".into()));
    }
    if kernel.iter().any(|o| o.len() != c_in || o.iter().any(|c| c.len() != k_size)) {
        return Err(NnError::Shape("ragged kernel".into()));
    }
    if x.iter().any(|row| row.len() != c_in) {
        return Err(NnError::Shape(format!("input rows must have {c_in} channels")));
    }
    let shape = SeqShape { points: 1, steps: x.len(), channels: c_in };
    let flat_x: Vec<f64> = x.iter().flatten().copied().collect();
    let flat_w: Vec<f64> = kernel.iter().flatten().flatten().copied().collect();
    let mut out = vec![0.0; x.len() * c_out];
    let spec = ConvSpec { c_in, c_out, k_size, dil, tap0: false };
    tape::conv_forward(&flat_x, &flat_w, None, shape, spec, &mut out);
    Ok(out.chunks_exact(c_out).map(|c| c.to_vec()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> TcnConfig {
        TcnConfig { n_blocks: 2, dil: 1, k_size: 3, num_filters: 2, ..Default::default() }
    }

    fn random_seq(t: usize, p: usize, seed: u64) -> SequenceTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = SequenceTensor::zeros(t, p, &["x", "y", "eps", "lf"]);
        for v in s.data.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        s
    }

    #[test]
    fn conv_worked_example() {
        let y = conv1d_causal(&[vec![1.0], vec![2.0], vec![3.0]], &[vec![vec![1.0, 1.0]]], 1).unwrap();
        assert_eq!(y, vec![vec![1.0], vec![3.0], vec![5.0]]);
        let id = conv1d_causal(&[vec![1.0], vec![-2.0]], &[vec![vec![1.0, 0.0, 0.0]]], 2).unwrap();
        assert_eq!(id, vec![vec![1.0], vec![-2.0]]);
        assert!(conv1d_causal(&[vec![1.0, 2.0]], &[vec![vec![1.0]]], 1).is_err());
    }

    #[test]
    fn parameter_count_and_receptive_field() {
        let m = TcnModel::new(TcnConfig::default(), 0).unwrap();
        // conv1 6*4*12 + 12, conv2 6*6*12 + 12, skip 6*4 + 6, head 6 + 1.
        assert_eq!(m.n_params(), 288 + 12 + 432 + 12 + 30 + 7);
        assert_eq!(TcnConfig::default().receptive_field(), 67);
        assert!(TcnConfig { dropout: 0.1, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn zero_input_and_zero_bias_gives_zero_output() {
        let mut m = TcnModel::new(small(), 3).unwrap();
        let l = m.layout.clone();
        for b in &l.blocks {
            for r in [&b.b1, &b.b2] {
                m.params[r.clone()].fill(0.0);
            }
            if let Some((_, bs)) = &b.skip {
                m.params[bs.clone()].fill(0.0);
            }
        }
        m.params[l.head_b.clone()].fill(0.0);
        let y = m.forward(&SequenceTensor::zeros(5, 3, &["x", "y", "eps", "lf"])).unwrap();
        assert!(y.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn causality_and_weight_norm_invariance() {
        let mut m = TcnModel::new(small(), 7).unwrap();
        let seq = random_seq(8, 3, 1);
        let y = m.forward(&seq).unwrap();
        let mut edited = seq.clone();
        for p in 0..3 {
            for f in 0..4 {
                edited.set(6, p, f, 9.0);
                edited.set(7, p, f, -4.0);
            }
        }
        let y2 = m.forward(&edited).unwrap();
        assert_eq!(&y[..6 * 3], &y2[..6 * 3]);
        assert_eq!(&m.forward(&seq.truncated(6)).unwrap()[..18], &y[..18]);
        m.rescale_directions(3.7);
        for (a, b) in m.forward(&seq).unwrap().iter().zip(&y) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn input_gradients_match_finite_differences() {
        let m = TcnModel::new(small(), 11).unwrap();
        let seq = random_seq(6, 2, 5);
        let (y, g) = m.input_gradients(&seq).unwrap();
        assert_eq!(y, m.forward(&seq).unwrap());
        let h = 1e-6;
        for t in 0..6 {
            for p in 0..2 {
                let i = t * 2 + p;
                // Same-increment strain derivative.
                let mut a = seq.clone();
                let mut b = seq.clone();
                a.set(t, p, FEATURE_EPS, seq.get(t, p, FEATURE_EPS) + h);
                b.set(t, p, FEATURE_EPS, seq.get(t, p, FEATURE_EPS) - h);
                let fd = (m.forward(&a).unwrap()[i] - m.forward(&b).unwrap()[i]) / (2.0 * h);
                assert!((fd - g.d_eps[i]).abs() < 1e-7, "{fd} {}", g.d_eps[i]);
                // Coordinate moved at every step.
                let mut a = seq.clone();
                let mut b = seq.clone();
                for s in 0..6 {
                    a.set(s, p, FEATURE_X, seq.get(s, p, FEATURE_X) + h);
                    b.set(s, p, FEATURE_X, seq.get(s, p, FEATURE_X) - h);
                }
                let fd = (m.forward(&a).unwrap()[i] - m.forward(&b).unwrap()[i]) / (2.0 * h);
                assert!((fd - g.d_x[i]).abs() < 1e-7, "{fd} {}", g.d_x[i]);
            }
        }
    }
}
