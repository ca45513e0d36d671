//! Coupled solver in which a surrogate supplies the nonlocal strain at the
//! Gauss points, leaving only the displacements as unknowns.
//!
//! The residual is `R = ∫ Bᵀ (1-d) C ε` with `d = d(max(κ, ε̄^NN))`. The
//! modified Newton tangent is the secant stiffness `K = ∫ Bᵀ (1-d) C B`; the
//! full tangent adds `-∫ Bᵀ C ε (∂d/∂ε̄)(∂ε̄/∂ε_eq)(∂ε_eq/∂ε)ᵀ B`.

mod surrogate;

use serde::{Deserialize, Serialize};

use crate::fem::{
    add_bt, b_columns, strain_at, DofState, FemError, FemStepper, GpFields, GpResponse, IncrementRecord,
    IterationLog, Model, ReducedSystem, Scheme, SolveHistory, SolverConfig,
};
use crate::linalg::LinalgError;
use crate::material::mat_vec;
use crate::mesh::GaussPointData;
use crate::nn::NnError;

pub use surrogate::{Analytic, ExactField, NonlocalSurrogate, Prediction, TcnSurrogate};

#[derive(Debug, thiserror::Error)]
pub enum IfennError {
    #[error("increment {increment} did not converge within {iterations} iterations")]
    NonConvergence { increment: usize, iterations: usize, partial: Box<SolveHistory> },
    #[error("invalid I-FENN configuration: {0}")]
    Config(String),
    #[error("surrogate: {0}")]
    Surrogate(String),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

impl IfennError {
    pub fn partial_history(&self) -> Option<&SolveHistory> {
        match self {
            IfennError::NonConvergence { partial, .. } => Some(partial),
            IfennError::Fem(e) => e.partial_history(),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NrMode {
    Full,
    Modified,
}

/// When the surrogate is queried within an increment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Refresh {
    EveryIteration,
    /// Once per increment at the first iteration; the converged state is
    /// still re-predicted before it is committed.
    FirstIteration,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IfennConfig {
    pub nr_mode: NrMode,
    /// First increment solved with the surrogate; earlier ones use the
    /// monolithic FEM solver.
    pub activation_increment: usize,
    pub refresh: Refresh,
    pub tol: f64,
    pub max_iter: usize,
    pub dlf: f64,
    pub lf_max: f64,
}

impl Default for IfennConfig {
    fn default() -> Self {
        let s = SolverConfig::default();
        IfennConfig {
            nr_mode: NrMode::Modified,
            activation_increment: 1,
            refresh: Refresh::EveryIteration,
            tol: s.tol,
            max_iter: s.max_iter,
            dlf: s.dlf,
            lf_max: s.lf_max,
        }
    }
}

impl IfennConfig {
    pub fn solver(&self) -> SolverConfig {
        SolverConfig { tol: self.tol, max_iter: self.max_iter, dlf: self.dlf, lf_max: self.lf_max, scheme: Scheme::Monolithic }
    }

    pub fn validate(&self) -> Result<(), IfennError> {
        self.solver().validate()?;
        if self.activation_increment == 0 {
            return Err(IfennError::Config("activation_increment must be at least 1".into()));
        }
        Ok(())
    }
}

/// Local equivalent strain at every Gauss point.
pub fn gauss_point_strains(model: &Model, u: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(model.n_gauss_points());
    for e in 0..model.mesh.n_elements() {
        let u_e = model.gather_u(e, u);
        for gp in model.element_gps(e) {
            out.push(model.params.equivalent_strain(&strain_at(gp, &u_e)).0);
        }
    }
    out
}

/// Element residual and tangent (row-major `2m x 2m`, empty when `mode` is
/// `None`) for prescribed Gauss point nonlocal strains.
pub fn ifenn_element(
    model: &Model,
    gps: &[GaussPointData],
    u_e: &[f64],
    eps_bar: &[f64],
    d_eps: &[f64],
    kappa_prev: &[f64],
    mode: Option<NrMode>,
) -> (Vec<f64>, Vec<f64>, Vec<GpResponse>) {
    let nu = u_e.len();
    let mut ru = vec![0.0; nu];
    let mut k = if mode.is_some() { vec![0.0; nu * nu] } else { Vec::new() };
    let mut responses = Vec::with_capacity(gps.len());
    for (q, gp) in gps.iter().enumerate() {
        let strain = strain_at(gp, u_e);
        let (eps_eq, deq) = model.params.equivalent_strain(&strain);
        let damage = model.params.damage(eps_bar[q], kappa_prev[q]);
        let r = GpResponse { strain, eps_eq, deq, eps_bar: eps_bar[q], damage };
        let dv = gp.dv();
        let ce = mat_vec(&model.c, &r.strain);
        let keep = 1.0 - r.damage.d;
        add_bt(gp, &ce, keep * dv, &mut ru);
        if let Some(mode) = mode {
            let m = gp.dn_physical.len();
            for a in 0..m {
                for (ia, col_a) in b_columns(&gp.dn_physical[a]).iter().enumerate() {
                    let row = (2 * a + ia) * nu;
                    for b in 0..m {
                        for (ib, col_b) in b_columns(&gp.dn_physical[b]).iter().enumerate() {
                            let cb = mat_vec(&model.c, col_b);
                            k[row + 2 * b + ib] += keep * dv * (col_a[0] * cb[0] + col_a[1] * cb[1] + col_a[2] * cb[2]);
                        }
                    }
                }
            }
            let s = r.damage.dd * d_eps[q];
            if mode == NrMode::Full && s != 0.0 {
                let mut bt_ce = vec![0.0; nu];
                add_bt(gp, &ce, 1.0, &mut bt_ce);
                let mut bt_deq = vec![0.0; nu];
                add_bt(gp, &r.deq, 1.0, &mut bt_deq);
                for i in 0..nu {
                    for j in 0..nu {
                        k[i * nu + j] -= dv * s * bt_ce[i] * bt_deq[j];
                    }
                }
            }
        }
        responses.push(r);
    }
    (ru, k, responses)
}

/// Global displacement residual and Gauss point responses, calling `sink`
/// with each element tangent when `mode` is set.
pub fn assemble_ifenn(
    model: &Model,
    u: &[f64],
    pred: &Prediction,
    kappa_prev: &[f64],
    mode: Option<NrMode>,
    mut sink: impl FnMut(usize, &[f64]),
) -> (Vec<f64>, Vec<GpResponse>) {
    let q = model.mesh.gauss_per_element();
    let mut ru = vec![0.0; model.n_u_dofs()];
    let mut responses = Vec::with_capacity(model.n_gauss_points());
    for (e, conn) in model.mesh.elements.iter().enumerate() {
        let span = e * q..(e + 1) * q;
        let (re, k, resp) = ifenn_element(
            model,
            model.element_gps(e),
            &model.gather_u(e, u),
            &pred.eps_bar[span.clone()],
            &pred.d_eps[span.clone()],
            &kappa_prev[span],
            mode,
        );
        for (a, &n) in conn.iter().enumerate() {
            ru[2 * n] += re[2 * a];
            ru[2 * n + 1] += re[2 * a + 1];
        }
        if mode.is_some() {
            sink(e, &k);
        }
        responses.extend(resp);
    }
    (ru, responses)
}

/// Dense global tangent over all displacement DOFs; for small meshes and tests.
pub fn ifenn_jacobian_dense(model: &Model, u: &[f64], pred: &Prediction, kappa_prev: &[f64], mode: NrMode) -> Vec<Vec<f64>> {
    let n = model.n_u_dofs();
    let mut j = vec![vec![0.0; n]; n];
    assemble_ifenn(model, u, pred, kappa_prev, Some(mode), |e, k| {
        let dofs = model.element_u_dofs(e);
        let nd = dofs.len();
        for (r, &gr) in dofs.iter().enumerate() {
            for (c, &gc) in dofs.iter().enumerate() {
                j[gr][gc] += k[r * nd + c];
            }
        }
    });
    j
}

/// Relative squared error norm `sqrt(Σ ((pred - true) / true)²)`, skipping
/// points whose true value is below `1e-14` in magnitude.
pub fn rse(predicted: &[f64], truth: &[f64]) -> f64 {
    assert_eq!(predicted.len(), truth.len(), "rse needs matching point counts");
    predicted
        .iter()
        .zip(truth)
        .filter(|(_, t)| t.abs() >= 1e-14)
        .map(|(p, t)| ((p - t) / t).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(not(target_arch = "wasm32"))]
fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = std::time::Instant::now();
    let out = f();
    (out, t.elapsed().as_secs_f64())
}

#[cfg(target_arch = "wasm32")]
fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    (f(), 0.0)
}

/// Outcome of one I-FENN increment.
pub enum IfennStep {
    Converged(Box<IncrementRecord>),
    Failed { iterations: usize },
}

/// Displacement-only system of one model.
pub struct IfennStepper<'m> {
    model: &'m Model,
    system: ReducedSystem,
    mode: NrMode,
}

impl<'m> IfennStepper<'m> {
    pub fn new(model: &'m Model, mode: NrMode) -> Result<Self, IfennError> {
        let dofs: Vec<Vec<usize>> = (0..model.mesh.n_elements()).map(|e| model.element_u_dofs(e)).collect();
        let system = ReducedSystem::new(&dofs, &model.constrained_mask())?;
        Ok(IfennStepper { model, system, mode })
    }

    /// Rows of the linear system solved per iteration.
    pub fn system_rows(&self) -> usize {
        self.system.n_free()
    }

    pub fn label(&self) -> &'static str {
        match self.mode {
            NrMode::Full => "ifenn-full",
            NrMode::Modified => "ifenn-modified",
        }
    }

    /// Advances `state` to loadfactor `lf`. `IterationLog::ratio` holds
    /// `r_u = ‖δu_i‖/‖δu_1‖` and `residual_ratio` holds `r_R = ‖R_i‖/‖R_1‖`.
    pub fn step(
        &self,
        state: &mut DofState,
        increment: usize,
        lf: f64,
        surrogate: &mut dyn NonlocalSurrogate,
        config: &IfennConfig,
    ) -> Result<IfennStep, IfennError> {
        let model = self.model;
        let step = increment - 1;
        model.apply_constraints(&mut state.u, lf);
        let mut log = Vec::new();
        let (mut first_delta, mut first_res) = (0.0, 0.0);
        let mut pred = None;
        for it in 1..=config.max_iter {
            if pred.is_none() || config.refresh == Refresh::EveryIteration {
                pred = Some(surrogate.predict(step, lf, &gauss_point_strains(model, &state.u))?);
            }
            let p = pred.as_ref().expect("predicted above");
            let mut j = self.system.zeros();
            let (ru, _) = assemble_ifenn(model, &state.u, p, &state.kappa, Some(self.mode), |e, k| self.system.add_element(&mut j, e, k));
            let rf: Vec<f64> = self.system.restrict(&ru).into_iter().map(|v| -v).collect();
            let (du, seconds) = timed(|| self.system.solve(&j, &rf));
            let du = du?;
            self.system.add_free(&mut state.u, &du);
            let (delta, res) = (norm(&du), norm(&rf));
            if it == 1 {
                first_delta = delta;
                first_res = res;
            }
            let ratio = if first_delta > 0.0 { delta / first_delta } else { 0.0 };
            let residual_ratio = if first_res > 0.0 { res / first_res } else { 0.0 };
            log.push(IterationLog { iteration: it, ratio, residual_norm: res, residual_ratio, solve_seconds: seconds });
            if !ratio.is_finite() {
                break;
            }
            if (it > 1 || first_delta == 0.0) && ratio <= config.tol {
                return Ok(IfennStep::Converged(Box::new(self.finish(state, increment, lf, surrogate, log)?)));
            }
        }
        Ok(IfennStep::Failed { iterations: log.len() })
    }

    /// Re-predicts at the converged displacements and commits the history.
    fn finish(
        &self,
        state: &mut DofState,
        increment: usize,
        lf: f64,
        surrogate: &mut dyn NonlocalSurrogate,
        log: Vec<IterationLog>,
    ) -> Result<IncrementRecord, IfennError> {
        let model = self.model;
        let pred = surrogate.predict(increment - 1, lf, &gauss_point_strains(model, &state.u))?;
        let (ru, responses) = assemble_ifenn(model, &state.u, &pred, &state.kappa, None, |_, _| {});
        state.kappa = responses.iter().map(|r| r.damage.kappa).collect();
        state.increment = increment;
        state.lf = lf;
        state.eps_bar.clear();
        let last = log.last().copied().expect("at least one iteration");
        Ok(IncrementRecord {
            increment,
            lf,
            reaction: model.reaction(&ru),
            iterations: last.iteration,
            final_ratio: last.ratio,
            converged_residual_norm: norm(&self.system.restrict(&ru)),
            log,
            state: state.clone(),
            gp: GpFields::from_responses(&responses),
        })
    }
}

/// Runs the whole load schedule. Increments before
/// `config.activation_increment` are solved by the monolithic FEM solver and
/// their strains are fed to the surrogate to build its history.
pub fn solve_ifenn(model: &Model, surrogate: &mut dyn NonlocalSurrogate, config: &IfennConfig) -> Result<SolveHistory, IfennError> {
    config.validate()?;
    let solver = config.solver();
    let stepper = IfennStepper::new(model, config.nr_mode)?;
    let mut history = SolveHistory { solver: stepper.label().to_string(), system_rows: stepper.system_rows(), records: Vec::new() };
    let mut state = DofState::zero(model);
    let n_inc = solver.n_increments();
    let warm = (config.activation_increment - 1).min(n_inc);
    if warm > 0 {
        let fem = FemStepper::new(model, Scheme::Monolithic)?;
        let mut warm_history = fem.new_history();
        fem.run(&mut state, &mut warm_history, 1, warm, &solver)?;
        for rec in &warm_history.records {
            surrogate.predict(rec.increment - 1, rec.lf, &rec.gp.eps_eq)?;
        }
        history.records = warm_history.records;
    }
    for n in warm + 1..=n_inc {
        let lf = solver.loadfactor(n);
        match stepper.step(&mut state, n, lf, surrogate, config)? {
            IfennStep::Converged(rec) => {
                log::debug!("{} increment {n} (lf {lf:.4}) converged in {} iterations", stepper.label(), rec.iterations);
                history.records.push(*rec);
            }
            IfennStep::Failed { iterations } => {
                log::warn!("{} increment {n} (lf {lf:.4}) failed after {iterations} iterations", stepper.label());
                return Err(IfennError::NonConvergence { increment: n, iterations, partial: Box::new(history) });
            }
        }
    }
    Ok(history)
}
