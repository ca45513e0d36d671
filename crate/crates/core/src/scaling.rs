//! Affine normalization `T(v) = a v + b` of the local equivalent strain and
//! the matching un-normalization of network outputs and their derivatives.
//!
//! Only the strain feature and the nonlocal-strain targets are scaled;
//! coordinates and loadfactors pass through untouched.

use serde::{Deserialize, Serialize};

use crate::tensor::SequenceTensor;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ScalingError {
    #[error("increment {increment} outside the fitted range of {fitted} increments")]
    OutOfRange { increment: usize, fitted: usize },
    #[error("invalid scaling configuration: {0}")]
    Config(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingKind {
    None,
    /// Constant decimal: `a = 10^k`, `b = 0`.
    #[serde(alias = "cd")]
    ConstantDecimal,
    /// Varying multiplication: `a_n = s_target / max(ε_eq at n)`, `b = 0`.
    #[serde(alias = "vm")]
    VaryingMultiplication,
    /// Min-max onto `[0, new_max]` per increment.
    #[serde(alias = "mm")]
    MinMax,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingConfig {
    pub kind: ScalingKind,
    pub cd_exponent: i32,
    pub vm_target: f64,
    pub mm_new_max: f64,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        ScalingConfig { kind: ScalingKind::ConstantDecimal, cd_exponent: 4, vm_target: 1.0, mm_new_max: 10.0 }
    }
}

impl ScalingConfig {
    pub fn new(kind: ScalingKind) -> Self {
        ScalingConfig { kind, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), ScalingError> {
        if !(self.vm_target > 0.0 && self.vm_target.is_finite()) {
            return Err(ScalingError::Config(format!("vm_target must be positive, got {}", self.vm_target)));
        }
        if !(self.mm_new_max > 0.0 && self.mm_new_max.is_finite()) {
            return Err(ScalingError::Config(format!("mm_new_max must be positive, got {}", self.mm_new_max)));
        }
        if self.cd_exponent.abs() > 300 {
            return Err(ScalingError::Config(format!("cd_exponent {} out of range", self.cd_exponent)));
        }
        Ok(())
    }

    /// Whether the coefficients depend on the strain field of each increment.
    pub fn is_field_dependent(&self) -> bool {
        matches!(self.kind, ScalingKind::VaryingMultiplication | ScalingKind::MinMax)
    }

    /// Coefficients for one increment's strain values. The flag is `true`
    /// when the field is degenerate and the identity was substituted.
    pub fn coefficients(&self, values: &[f64]) -> (Affine, bool) {
        match self.kind {
            ScalingKind::None => (Affine::IDENTITY, false),
            ScalingKind::ConstantDecimal => (Affine { a: 10f64.powi(self.cd_exponent), b: 0.0 }, false),
            ScalingKind::VaryingMultiplication => {
                let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if max > 0.0 && max.is_finite() {
                    (Affine { a: self.vm_target / max, b: 0.0 }, false)
                } else {
                    (Affine::IDENTITY, true)
                }
            }
            ScalingKind::MinMax => {
                let (min, max) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
                let range = max - min;
                if range > 0.0 && range.is_finite() {
                    let a = self.mm_new_max / range;
                    (Affine { a, b: -a * min }, false)
                } else {
                    (Affine::IDENTITY, true)
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub a: f64,
    pub b: f64,
}

impl Affine {
    pub const IDENTITY: Affine = Affine { a: 1.0, b: 0.0 };

    #[inline]
    pub fn scale(&self, v: f64) -> f64 {
        self.a * v + self.b
    }

    #[inline]
    pub fn unscale(&self, v: f64) -> f64 {
        (v - self.b) / self.a
    }

    /// Maps `(∂ε̄'/∂ε', ∂ε̄'/∂x, ∂ε̄'/∂y)` to unscaled derivatives. The strain
    /// derivative is invariant because `a` enters on both sides.
    #[inline]
    pub fn unscale_derivatives(&self, d_eps: f64, d_x: f64, d_y: f64) -> (f64, f64, f64) {
        (d_eps, d_x / self.a, d_y / self.a)
    }
}

/// Per-increment affine coefficients fitted to a strain history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingScheme {
    pub config: ScalingConfig,
    pub coeffs: Vec<Affine>,
}

impl ScalingScheme {
    /// Fits one coefficient pair per increment; `series[n]` holds the local
    /// equivalent strains of increment `n` at the Gauss points.
    pub fn fit(config: ScalingConfig, series: &[Vec<f64>]) -> Result<Self, ScalingError> {
        config.validate()?;
        let coeffs = series
            .iter()
            .enumerate()
            .map(|(n, values)| {
                let (c, degenerate) = config.coefficients(values);
                if degenerate {
                    log::warn!("scaling: increment {} has a degenerate strain field; using the identity", n + 1);
                }
                c
            })
            .collect();
        Ok(ScalingScheme { config, coeffs })
    }

    /// Fits to the strain feature of the first `n_points` rows of a tensor.
    pub fn fit_tensor(config: ScalingConfig, tensor: &SequenceTensor, feature: usize, n_points: usize) -> Result<Self, ScalingError> {
        let series: Vec<Vec<f64>> =
            (0..tensor.increments()).map(|t| (0..n_points).map(|p| tensor.get(t, p, feature)).collect()).collect();
        Self::fit(config, &series)
    }

    pub fn identity(increments: usize) -> Self {
        ScalingScheme { config: ScalingConfig::new(ScalingKind::None), coeffs: vec![Affine::IDENTITY; increments] }
    }

    /// Coefficients of increment `n` (0-based).
    pub fn at(&self, n: usize) -> Result<Affine, ScalingError> {
        self.coeffs.get(n).copied().ok_or(ScalingError::OutOfRange { increment: n, fitted: self.coeffs.len() })
    }

    pub fn scale(&self, n: usize, v: f64) -> Result<f64, ScalingError> {
        Ok(self.at(n)?.scale(v))
    }

    pub fn unscale_prediction(&self, n: usize, v: f64) -> Result<f64, ScalingError> {
        Ok(self.at(n)?.unscale(v))
    }

    pub fn unscale_derivatives(&self, n: usize, d_eps: f64, d_x: f64, d_y: f64) -> Result<(f64, f64, f64), ScalingError> {
        Ok(self.at(n)?.unscale_derivatives(d_eps, d_x, d_y))
    }

    /// Copy of `tensor` with feature `feature` of every row scaled by the
    /// coefficients of its increment. Padded increments stay zero.
    pub fn scale_feature(&self, tensor: &SequenceTensor, feature: usize) -> Result<SequenceTensor, ScalingError> {
        let mut out = tensor.clone();
        for t in 0..tensor.increments() {
            if !tensor.mask[t] {
                continue;
            }
            let c = self.at(t)?;
            for p in 0..tensor.points() {
                out.set(t, p, feature, c.scale(tensor.get(t, p, feature)));
            }
        }
        Ok(out)
    }

    /// Inverse of [`ScalingScheme::scale_feature`].
    pub fn unscale_feature(&self, tensor: &SequenceTensor, feature: usize) -> Result<SequenceTensor, ScalingError> {
        let mut out = tensor.clone();
        for t in 0..tensor.increments() {
            if !tensor.mask[t] {
                continue;
            }
            let c = self.at(t)?;
            for p in 0..tensor.points() {
                out.set(t, p, feature, c.unscale(tensor.get(t, p, feature)));
            }
        }
        Ok(out)
    }
}
