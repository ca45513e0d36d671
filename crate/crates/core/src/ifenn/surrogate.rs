//! Sources of the nonlocal strain at the Gauss points: the trained network,
//! a recorded FEM field, or a closed-form map.

use super::IfennError;
use crate::nn::{Checkpoint, IncrementalTcn};
use crate::scaling::ScalingConfig;

/// Nonlocal strain and its same-point derivative with respect to the local
/// equivalent strain, per Gauss point.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Prediction {
    pub eps_bar: Vec<f64>,
    pub d_eps: Vec<f64>,
}

pub trait NonlocalSurrogate {
    fn name(&self) -> &str;

    /// Predicts the field at 0-based increment `step` (loadfactor `lf`) from
    /// the local equivalent strain at every Gauss point. A later call for the
    /// same step replaces the earlier one in the surrogate's history.
    fn predict(&mut self, step: usize, lf: f64, eps_eq: &[f64]) -> Result<Prediction, IfennError>;
}

/// Trained TCN queried one increment at a time; rows after the current
/// increment are implicitly zero.
pub struct TcnSurrogate {
    net: IncrementalTcn,
    scaling: ScalingConfig,
    coords: Vec<[f64; 2]>,
    warned: bool,
}

impl TcnSurrogate {
    /// `coords` are the Gauss points of the analysis mesh, `capacity` the
    /// number of increments.
    pub fn new(ckpt: &Checkpoint, coords: Vec<[f64; 2]>, capacity: usize) -> Self {
        TcnSurrogate {
            net: IncrementalTcn::new(&ckpt.model, coords.len(), capacity),
            scaling: ckpt.scaling.config.clone(),
            coords,
            warned: false,
        }
    }
}

impl NonlocalSurrogate for TcnSurrogate {
    fn name(&self) -> &str {
        "tcn"
    }

    fn predict(&mut self, step: usize, lf: f64, eps_eq: &[f64]) -> Result<Prediction, IfennError> {
        if eps_eq.len() != self.coords.len() {
            return Err(IfennError::Surrogate(format!("{} strains for {} Gauss points", eps_eq.len(), self.coords.len())));
        }
        // Field-dependent schemes are refitted to the current strain field.
        let (affine, degenerate) = self.scaling.coefficients(eps_eq);
        if degenerate && self.scaling.is_field_dependent() && !self.warned {
            log::warn!("degenerate strain field at increment {}; scaling falls back to the identity", step + 1);
            self.warned = true;
        }
        let inputs: Vec<[f64; 4]> = self.coords.iter().zip(eps_eq).map(|(c, &e)| [c[0], c[1], affine.scale(e), lf]).collect();
        let (y, dy) = self.net.evaluate_step(step, &inputs)?;
        Ok(Prediction { eps_bar: y.iter().map(|&v| affine.unscale(v)).collect(), d_eps: dy })
    }
}

/// Replays a recorded nonlocal field, independent of the current strains.
pub struct ExactField {
    fields: Vec<Vec<f64>>,
}

impl ExactField {
    /// `fields[n]` is the Gauss point field of increment `n + 1`.
    pub fn new(fields: Vec<Vec<f64>>) -> Self {
        ExactField { fields }
    }
}

impl NonlocalSurrogate for ExactField {
    fn name(&self) -> &str {
        "exact"
    }

    fn predict(&mut self, step: usize, _lf: f64, eps_eq: &[f64]) -> Result<Prediction, IfennError> {
        let field = self
            .fields
            .get(step)
            .ok_or_else(|| IfennError::Surrogate(format!("no recorded field for increment {}", step + 1)))?;
        if field.len() != eps_eq.len() {
            return Err(IfennError::Surrogate(format!("recorded field has {} points, mesh has {}", field.len(), eps_eq.len())));
        }
        Ok(Prediction { eps_bar: field.clone(), d_eps: vec![0.0; field.len()] })
    }
}

/// Pointwise map `ε_eq -> (ε̄, dε̄/dε_eq)`.
pub struct Analytic<F: Fn(f64) -> (f64, f64)> {
    map: F,
}

impl<F: Fn(f64) -> (f64, f64)> Analytic<F> {
    pub fn new(map: F) -> Self {
        Analytic { map }
    }
}

impl<F: Fn(f64) -> (f64, f64)> NonlocalSurrogate for Analytic<F> {
    fn name(&self) -> &str {
        "analytic"
    }

    fn predict(&mut self, _step: usize, _lf: f64, eps_eq: &[f64]) -> Result<Prediction, IfennError> {
        let (eps_bar, d_eps) = eps_eq.iter().map(|&e| (self.map)(e)).unzip();
        Ok(Prediction { eps_bar, d_eps })
    }
}
