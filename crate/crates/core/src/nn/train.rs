//! Combined data/physics loss and full-batch Adam training.

use serde::{Deserialize, Serialize};

use super::tape::SeqShape;
use super::{channel_major, NnError, TangentMode, TangentRequest, TcnModel, FEATURE_EPS, FEATURE_X, FEATURE_Y};
use crate::scaling::ScalingScheme;
use crate::tensor::SequenceTensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub w_d: f64,
    pub w_p: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { w_d: 1.0, w_p: 0.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), NnError> {
        if !(self.w_d >= 0.0 && self.w_p >= 0.0 && self.w_d + self.w_p > 0.0) {
            return Err(NnError::Config(format!("loss weights must be non-negative with a positive sum, got {self:?}")));
        }
        Ok(())
    }
}

/// Loss value and its parts (each an unweighted ℓ2 norm).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub total: f64,
    pub data: f64,
    pub pde: f64,
    pub bcs: f64,
}

impl LossTerms {
    fn is_finite(&self) -> bool {
        self.total.is_finite() && self.data.is_finite() && self.pde.is_finite() && self.bcs.is_finite()
    }
}

/// Scaled training tensors in the network layout
/// `[steps x features x points]`. Rows `0..n_gauss_points`
/// are Gauss points, the remaining rows boundary nodes.
#[derive(Clone, Debug)]
pub struct TrainingData {
    pub input: Vec<f64>,
    pub shape: SeqShape,
    pub n_gauss_points: usize,
    /// Scaled nonlocal strain at the Gauss points, `[steps x n_gp]`.
    pub targets: Option<Vec<f64>>,
    /// Laplacian of the unscaled nonlocal strain, `[steps x n_gp]`.
    pub laplacian: Option<Vec<f64>>,
    pub boundary_normals: Vec<[f64; 2]>,
    /// Scale factor `a_n` per step.
    pub scale: Vec<f64>,
    pub mask: Vec<bool>,
    /// Gradient parameter `g = l_c² / 2`.
    pub g: f64,
}

fn gp_rows(t: &SequenceTensor, n_gp: usize) -> Vec<f64> {
    let (v, _) = channel_major(&t.select_points(0..n_gp));
    v
}

impl TrainingData {
    /// Scales Dataset A (strain feature) and B with `scheme`.
    pub fn new(
        a: &SequenceTensor,
        b: Option<&SequenceTensor>,
        c: Option<&SequenceTensor>,
        scheme: &ScalingScheme,
        n_gauss_points: usize,
        boundary_normals: Vec<[f64; 2]>,
        g: f64,
    ) -> Result<Self, NnError> {
        let [t_len, p_len, _] = a.shape();
        if p_len != n_gauss_points + boundary_normals.len() {
            return Err(NnError::Shape(format!(
                "Dataset A has {p_len} rows, expected {n_gauss_points} Gauss points + {} boundary nodes",
                boundary_normals.len()
            )));
        }
        for (name, t) in [("B", b), ("C", c)] {
            if let Some(t) = t {
                if t.shape() != [t_len, n_gauss_points, 1] {
                    return Err(NnError::Shape(format!("Dataset {name} has shape {:?}, expected [{t_len}, {n_gauss_points}, 1]", t.shape())));
                }
            }
        }
        if scheme.coeffs.len() < t_len {
            return Err(NnError::Shape(format!("scaling fitted to {} increments, data has {t_len}", scheme.coeffs.len())));
        }
        let scaled = scheme.scale_feature(a, FEATURE_EPS).map_err(|e| NnError::Shape(e.to_string()))?;
        let (input, shape) = channel_major(&scaled);
        let targets = match b {
            Some(b) => Some(gp_rows(&scheme.scale_feature(b, 0).map_err(|e| NnError::Shape(e.to_string()))?, n_gauss_points)),
            None => None,
        };
        Ok(TrainingData {
            input,
            shape,
            n_gauss_points,
            targets,
            laplacian: c.map(|c| gp_rows(c, n_gauss_points)),
            boundary_normals,
            scale: scheme.coeffs.iter().take(t_len).map(|c| c.a).collect(),
            mask: a.mask.clone(),
            g,
        })
    }

    fn n_boundary(&self) -> usize {
        self.shape.points - self.n_gauss_points
    }
}

/// Loss terms and the gradient with respect to `model.params`.
pub fn loss_and_gradient(model: &TcnModel, data: &TrainingData, weights: LossWeights) -> Result<(LossTerms, Vec<f64>), NnError> {
    weights.validate()?;
    if weights.w_d > 0.0 && data.targets.is_none() {
        return Err(NnError::MissingData("Dataset B is required when w_D > 0".into()));
    }
    if weights.w_p > 0.0 && data.laplacian.is_none() {
        return Err(NnError::MissingData("Dataset C is required when w_P > 0".into()));
    }
    let (n_gp, t_len, nf) = (data.n_gauss_points, data.shape.steps, data.shape.channels);
    let n_b = data.n_boundary();
    let boundary = n_gp..data.shape.points;
    let requests: Vec<TangentRequest> = if weights.w_p > 0.0 && n_b > 0 {
        vec![
            TangentRequest { feature: FEATURE_X, mode: TangentMode::Total, rows: boundary.clone() },
            TangentRequest { feature: FEATURE_Y, mode: TangentMode::Total, rows: boundary },
        ]
    } else {
        Vec::new()
    };
    let graph = model.build_graph(data.input.clone(), data.shape, &requests)?;
    let y = graph.tape.value(graph.output);
    let mut seed_y = vec![0.0; y.len()];
    let mut terms = LossTerms::default();

    if weights.w_d > 0.0 {
        let target = data.targets.as_ref().expect("checked above");
        let np = data.shape.points;
        let mut r = vec![0.0; n_gp * t_len];
        for t in (0..t_len).filter(|&t| data.mask[t]) {
            for p in 0..n_gp {
                r[t * n_gp + p] = y[t * np + p] - target[t * n_gp + p];
            }
        }
        terms.data = norm(&r);
        if terms.data > 0.0 {
            add_gp_seed(&mut seed_y, &r, weights.w_d / terms.data, n_gp, np);
        }
    }
    let mut seeds_t: Vec<Vec<f64>> = Vec::new();
    if weights.w_p > 0.0 {
        let lap = data.laplacian.as_ref().expect("checked above");
        let np = data.shape.points;
        let mut r = vec![0.0; n_gp * t_len];
        for t in (0..t_len).filter(|&t| data.mask[t]) {
            for p in 0..n_gp {
                let eps = data.input[(t * nf + FEATURE_EPS) * np + p];
                r[t * n_gp + p] = y[t * np + p] - data.scale[t] * data.g * lap[t * n_gp + p] - eps;
            }
        }
        terms.pde = norm(&r);
        if terms.pde > 0.0 {
            add_gp_seed(&mut seed_y, &r, weights.w_p / terms.pde, n_gp, np);
        }
        if !requests.is_empty() {
            let dx = graph.tape.value(graph.tangents[0]);
            let dy = graph.tape.value(graph.tangents[1]);
            let mut r = vec![0.0; n_b * t_len];
            for t in (0..t_len).filter(|&t| data.mask[t]) {
                for (k, n) in data.boundary_normals.iter().enumerate() {
                    let i = t * n_b + k;
                    r[i] = dx[i] * n[0] + dy[i] * n[1];
                }
            }
            terms.bcs = norm(&r);
            let s = if terms.bcs > 0.0 { weights.w_p / terms.bcs } else { 0.0 };
            let mut sx = vec![0.0; r.len()];
            let mut sy = vec![0.0; r.len()];
            for t in 0..t_len {
                for (k, n) in data.boundary_normals.iter().enumerate() {
                    let i = t * n_b + k;
                    sx[i] = s * r[i] * n[0];
                    sy[i] = s * r[i] * n[1];
                }
            }
            seeds_t.push(sx);
            seeds_t.push(sy);
        }
    }
    terms.total = weights.w_d * terms.data + weights.w_p * (terms.pde + terms.bcs);
    let mut grad = vec![0.0; model.n_params()];
    let mut seeds: Vec<(usize, &[f64])> = vec![(graph.output, &seed_y)];
    for (id, s) in graph.tangents.iter().zip(&seeds_t) {
        seeds.push((*id, s));
    }
    graph.tape.backward(&seeds, &mut grad);
    Ok((terms, grad))
}

/// `seed[t][p] += s * r[t][p]` for the Gauss-point rows of each step.
fn add_gp_seed(seed: &mut [f64], r: &[f64], s: f64, n_gp: usize, np: usize) {
    for (st, rt) in seed.chunks_exact_mut(np).zip(r.chunks_exact(n_gp)) {
        st[..n_gp].iter_mut().zip(rt).for_each(|(a, b)| *a += s * b);
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam { lr, beta1, beta2, eps, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weights: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 1000, lr: 1e-3, beta1: 0.9, beta2: 0.999, adam_eps: 1e-8, weights: LossWeights::default() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    /// Loss at the start of every epoch that ran.
    pub history: Vec<LossTerms>,
    /// Loss of the returned parameters.
    pub final_loss: LossTerms,
    pub stopped_early: bool,
}

pub fn train_adam(model: &mut TcnModel, data: &TrainingData, config: &TrainConfig) -> Result<TrainOutcome, NnError> {
    train_adam_with(model, data, config, |_, _, _| true)
}

/// Adam on the full batch. `observer(epoch, model, loss)` runs after every
/// update with the loss measured before it; returning `false` stops early.
pub fn train_adam_with(
    model: &mut TcnModel,
    data: &TrainingData,
    config: &TrainConfig,
    mut observer: impl FnMut(usize, &TcnModel, &LossTerms) -> bool,
) -> Result<TrainOutcome, NnError> {
    if config.epochs == 0 {
        return Err(NnError::Config("epochs must be at least 1".into()));
    }
    if !(config.lr >= 0.0) {
        return Err(NnError::Config(format!("learning rate must be non-negative, got {}", config.lr)));
    }
    let mut adam = Adam::new(model.n_params(), config.lr, config.beta1, config.beta2, config.adam_eps);
    let mut history = Vec::with_capacity(config.epochs);
    let mut stopped_early = false;
    for epoch in 1..=config.epochs {
        let (terms, grad) = loss_and_gradient(model, data, config.weights)?;
        if !terms.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(NnError::NonFinite { epoch, terms });
        }
        history.push(terms);
        adam.step(&mut model.params, &grad);
        if !observer(epoch, model, &terms) {
            stopped_early = epoch < config.epochs;
            break;
        }
    }
    let (final_loss, _) = loss_and_gradient(model, data, config.weights)?;
    Ok(TrainOutcome { history, final_loss, stopped_early })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::TcnConfig;
    use crate::scaling::{ScalingConfig, ScalingKind};

    /// Two Gauss points and one boundary node over four increments.
    fn tiny_data() -> (SequenceTensor, SequenceTensor, SequenceTensor) {
        let mut a = SequenceTensor::zeros(4, 3, &["x", "y", "eps", "lf"]);
        let mut b = SequenceTensor::zeros(4, 2, &["eps_bar"]);
        let mut c = SequenceTensor::zeros(4, 2, &["lap"]);
        for t in 0..4 {
            for p in 0..3 {
                a.set(t, p, 0, p as f64);
                a.set(t, p, 1, 1.0 - p as f64 * 0.5);
                a.set(t, p, 2, 1e-4 * (t + 1) as f64 * (1.0 + p as f64));
                a.set(t, p, 3, 0.1 * (t + 1) as f64);
            }
            for p in 0..2 {
                b.set(t, p, 0, 1.1e-4 * (t + 1) as f64 * (1.0 + 0.5 * p as f64));
                c.set(t, p, 0, -1e-6 * (t + 1) as f64);
            }
        }
        (a, b, c)
    }

    fn data() -> TrainingData {
        let (a, b, c) = tiny_data();
        let scheme = ScalingScheme::fit_tensor(ScalingConfig::new(ScalingKind::ConstantDecimal), &a, FEATURE_EPS, 2).unwrap();
        TrainingData::new(&a, Some(&b), Some(&c), &scheme, 2, vec![[0.6, 0.8]], 8.0).unwrap()
    }

    #[test]
    fn parameter_gradient_matches_finite_differences() {
        let config = TcnConfig { n_blocks: 1, dil: 1, k_size: 2, num_filters: 2, ..Default::default() };
        let model = TcnModel::new(config, 4).unwrap();
        let d = data();
        let w = LossWeights { w_d: 0.9, w_p: 0.1 };
        let (terms, grad) = loss_and_gradient(&model, &d, w).unwrap();
        assert!(terms.bcs > 0.0 && terms.pde > 0.0 && terms.data > 0.0);
        let h = 1e-6;
        for i in 0..model.n_params() {
            let mut a = model.clone();
            let mut b = model.clone();
            a.params[i] += h;
            b.params[i] -= h;
            let fd = (loss_and_gradient(&a, &d, w).unwrap().0.total - loss_and_gradient(&b, &d, w).unwrap().0.total) / (2.0 * h);
            assert!((fd - grad[i]).abs() <= 1e-6 * (1.0 + fd.abs()), "param {i}: fd {fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn weighted_sum_and_missing_data() {
        let model = TcnModel::new(TcnConfig { k_size: 2, num_filters: 2, ..Default::default() }, 1).unwrap();
        let mut d = data();
        let (t, _) = loss_and_gradient(&model, &d, LossWeights { w_d: 0.9, w_p: 0.1 }).unwrap();
        assert!((t.total - (0.9 * t.data + 0.1 * (t.pde + t.bcs))).abs() < 1e-14);
        d.laplacian = None;
        assert!(matches!(loss_and_gradient(&model, &d, LossWeights { w_d: 0.0, w_p: 1.0 }), Err(NnError::MissingData(_))));
        assert!(LossWeights { w_d: 0.0, w_p: 0.0 }.validate().is_err());
    }

    #[test]
    fn zero_learning_rate_and_determinism() {
        let config = TcnConfig { k_size: 2, num_filters: 2, ..Default::default() };
        let d = data();
        let mut m = TcnModel::new(config.clone(), 9).unwrap();
        let before = m.params.clone();
        let out = train_adam(&mut m, &d, &TrainConfig { epochs: 5, lr: 0.0, ..Default::default() }).unwrap();
        assert_eq!(m.params, before);
        assert!(out.history.windows(2).all(|w| w[0] == w[1]));

        let run = || {
            let mut m = TcnModel::new(config.clone(), 9).unwrap();
            train_adam(&mut m, &d, &TrainConfig { epochs: 30, lr: 1e-2, ..Default::default() }).unwrap();
            m.params
        };
        let p1 = run();
        assert_eq!(p1, run());
        assert_ne!(p1, before);
    }

    #[test]
    fn training_reduces_loss() {
        let d = data();
        let mut m = TcnModel::new(TcnConfig { k_size: 2, num_filters: 4, ..Default::default() }, 2).unwrap();
        let out = train_adam(&mut m, &d, &TrainConfig { epochs: 300, lr: 1e-2, ..Default::default() }).unwrap();
        assert!(out.final_loss.total < 0.1 * out.history[0].total, "{:?} -> {:?}", out.history[0], out.final_loss);
    }
}
