//! Step-by-step inference with cached activations.
//!
//! During a coupled solve only the newest increment's inputs change between
//! calls. By causality the outputs at that increment equal those of a full
//! forward pass over the zero-padded sequence, so past activations are kept
//! and only the current step is recomputed.

use super::tape::fast_tanh;
use super::{NnError, TcnModel, FEATURE_EPS};

struct BlockCache {
    c_in: usize,
    dil: usize,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
    skip: Option<(Vec<f64>, Vec<f64>)>,
    /// Block input history `[points x capacity x c_in]`.
    x: Vec<f64>,
    /// First-layer activation history `[points x capacity x filters]`.
    h1: Vec<f64>,
}

pub struct IncrementalTcn {
    filters: usize,
    k_size: usize,
    n_points: usize,
    capacity: usize,
    blocks: Vec<BlockCache>,
    head_w: Vec<f64>,
    head_b: f64,
    /// Steps `0..filled` hold valid history.
    filled: usize,
}

/// `out[o] = bias[o] + Σ_c w[o][c][tap] x[c]`.
fn tap_mul(w: &[f64], c_in: usize, k: usize, tap: usize, x: &[f64], out: &mut [f64]) {
    for (o, v) in out.iter_mut().enumerate() {
        let row = &w[o * c_in * k..(o + 1) * c_in * k];
        *v += x.iter().enumerate().map(|(c, xv)| row[c * k + tap] * xv).sum::<f64>();
    }
}

impl IncrementalTcn {
    pub fn new(model: &TcnModel, n_points: usize, capacity: usize) -> Self {
        let f = model.config.num_filters;
        let blocks = model
            .layout
            .blocks
            .iter()
            .enumerate()
            .map(|(i, b)| BlockCache {
                c_in: b.c_in,
                dil: b.dil,
                w1: model.effective_weights(i, 0),
                b1: model.params[b.b1.clone()].to_vec(),
                w2: model.effective_weights(i, 1),
                b2: model.params[b.b2.clone()].to_vec(),
                skip: b.skip.as_ref().map(|(w, bs)| (model.params[w.clone()].to_vec(), model.params[bs.clone()].to_vec())),
                x: vec![0.0; n_points * capacity * b.c_in],
                h1: vec![0.0; n_points * capacity * f],
            })
            .collect();
        IncrementalTcn {
            filters: f,
            k_size: model.config.k_size,
            n_points,
            capacity,
            blocks,
            head_w: model.params[model.layout.head_w.clone()].to_vec(),
            head_b: model.params[model.layout.head_b.start],
            filled: 0,
        }
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Evaluates step `step` (0-based) for scaled inputs `(x, y, ε', lf)` per
    /// point, overwriting any earlier evaluation of that step. Returns the
    /// scaled outputs and their same-step derivatives with respect to `ε'`.
    pub fn evaluate_step(&mut self, step: usize, inputs: &[[f64; 4]]) -> Result<(Vec<f64>, Vec<f64>), NnError> {
        if inputs.len() != self.n_points {
            return Err(NnError::Shape(format!("{} input rows for {} points", inputs.len(), self.n_points)));
        }
        if step >= self.capacity || step > self.filled {
            return Err(NnError::Shape(format!("step {step} with {} filled of capacity {}", self.filled, self.capacity)));
        }
        let (f, k, cap) = (self.filters, self.k_size, self.capacity);
        let mut y = vec![0.0; self.n_points];
        let mut dy = vec![0.0; self.n_points];
        let mut z1 = vec![0.0; f];
        let mut z2 = vec![0.0; f];
        let mut dz1 = vec![0.0; f];
        let mut dz2 = vec![0.0; f];
        let mut xin: Vec<f64> = Vec::with_capacity(f.max(4));
        let mut dxin: Vec<f64> = Vec::with_capacity(f.max(4));
        for p in 0..self.n_points {
            xin.clear();
            xin.extend_from_slice(&inputs[p]);
            dxin.clear();
            dxin.extend((0..4).map(|c| if c == FEATURE_EPS { 1.0 } else { 0.0 }));
            for b in &mut self.blocks {
                let ci = b.c_in;
                let xrow = (p * cap + step) * ci;
                b.x[xrow..xrow + ci].copy_from_slice(&xin);
                z1.copy_from_slice(&b.b1);
                for i in 0..k {
                    let Some(s) = step.checked_sub(b.dil * i) else { break };
                    let at = (p * cap + s) * ci;
                    tap_mul(&b.w1, ci, k, i, &b.x[at..at + ci], &mut z1);
                }
                let hrow = (p * cap + step) * f;
                for (h, z) in b.h1[hrow..hrow + f].iter_mut().zip(&z1) {
                    *h = fast_tanh(*z);
                }
                z2.copy_from_slice(&b.b2);
                for i in 0..k {
                    let Some(s) = step.checked_sub(b.dil * i) else { break };
                    let at = (p * cap + s) * f;
                    tap_mul(&b.w2, f, k, i, &b.h1[at..at + f], &mut z2);
                }
                dz1.fill(0.0);
                tap_mul(&b.w1, ci, k, 0, &dxin, &mut dz1);
                let h1 = &b.h1[hrow..hrow + f];
                let dh1: Vec<f64> = h1.iter().zip(&dz1).map(|(h, d)| (1.0 - h * h) * d).collect();
                dz2.fill(0.0);
                tap_mul(&b.w2, f, k, 0, &dh1, &mut dz2);
                let (skip, dskip) = match &b.skip {
                    Some((ws, bs)) => {
                        let mut s = bs.clone();
                        let mut ds = vec![0.0; f];
                        tap_mul(ws, ci, 1, 0, &xin, &mut s);
                        tap_mul(ws, ci, 1, 0, &dxin, &mut ds);
                        (s, ds)
                    }
                    None => (xin.clone(), dxin.clone()),
                };
                xin.clear();
                dxin.clear();
                for o in 0..f {
                    let h2 = fast_tanh(z2[o]);
                    let dh2 = (1.0 - h2 * h2) * dz2[o];
                    let out = fast_tanh(h2 + skip[o]);
                    xin.push(out);
                    dxin.push((1.0 - out * out) * (dh2 + dskip[o]));
                }
            }
            y[p] = self.head_b + xin.iter().zip(&self.head_w).map(|(a, b)| a * b).sum::<f64>();
            dy[p] = dxin.iter().zip(&self.head_w).map(|(a, b)| a * b).sum::<f64>();
        }
        self.filled = self.filled.max(step + 1);
        Ok((y, dy))
    }
}
