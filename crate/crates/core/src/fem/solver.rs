//! Incremental Newton solvers: monolithic (all DOFs at once) and staggered
//! (alternating displacement and nonlocal-strain solves).

use super::{
    monolithic_block, norm, timed, Blocks, DofState, FemError, GpFields, IncrementRecord, IterationLog, Model, ReducedSystem,
    Scheme, SolveHistory, SolverConfig,
};
use crate::linalg::Factorization;

/// Owns the reduced systems (and their symbolic factorizations) of one model
/// so that increments can be advanced one at a time.
pub struct FemStepper<'m> {
    model: &'m Model,
    scheme: Scheme,
    /// Monolithic system, or the displacement system for the staggered scheme.
    primary: ReducedSystem,
    /// Staggered scheme only: the constant nonlocal-strain matrix.
    ee: Option<Factorization>,
}

/// Outcome of one increment.
pub enum StepOutcome {
    Converged(Box<IncrementRecord>),
    Failed { iterations: usize },
}

impl<'m> FemStepper<'m> {
    pub fn new(model: &'m Model, scheme: Scheme) -> Result<Self, FemError> {
        let n_elem = model.mesh.n_elements();
        match scheme {
            Scheme::Monolithic => {
                let dofs: Vec<Vec<usize>> = (0..n_elem).map(|e| model.element_dofs(e)).collect();
                let mut mask = model.constrained_mask();
                mask.extend(std::iter::repeat_n(false, model.n_nodes()));
                Ok(FemStepper { model, scheme, primary: ReducedSystem::new(&dofs, &mask)?, ee: None })
            }
            Scheme::Staggered => {
                let dofs: Vec<Vec<usize>> = (0..n_elem).map(|e| model.element_u_dofs(e)).collect();
                let primary = ReducedSystem::new(&dofs, &model.constrained_mask())?;
                let node_dofs: Vec<Vec<usize>> = model.mesh.elements.clone();
                let ee_sys = ReducedSystem::new(&node_dofs, &vec![false; model.n_nodes()])?;
                let mut jee = ee_sys.zeros();
                let zero = DofState::zero(model);
                model.evaluate(&zero.u, &zero.eps_bar, &zero.kappa, Blocks { uu: false, coupling: false, ee: true }, |e, sys| {
                    ee_sys.add_element(&mut jee, e, &sys.jee)
                });
                let ee = ee_sys.factor(&jee)?;
                Ok(FemStepper { model, scheme, primary, ee: Some(ee) })
            }
        }
    }

    /// Rows of the linear system solved per iteration (the displacement
    /// system for the staggered scheme).
    pub fn system_rows(&self) -> usize {
        self.primary.n_free()
    }

    /// Advances `state` (the previous converged state) to loadfactor `lf`.
    /// On failure `state` holds the last iterate.
    pub fn step(&self, state: &mut DofState, increment: usize, lf: f64, config: &SolverConfig) -> Result<StepOutcome, FemError> {
        let model = self.model;
        let kappa_prev = state.kappa.clone();
        // The first iteration linearizes about the previous converged state
        // and carries the prescribed increment through the full tangent, so
        // proportional elastic loading is solved exactly in one update.
        let mut previous = Some((state.u.clone(), state.eps_bar.clone()));
        model.apply_constraints(&mut state.u, lf);
        let mut log = Vec::new();
        let (mut first_delta, mut first_res) = (0.0, 0.0);
        let n_u = model.n_u_dofs();
        for it in 1..=config.max_iter {
            let (delta_norm, res_norm, seconds) = match self.scheme {
                Scheme::Monolithic => {
                    let mut j = self.primary.zeros();
                    let (ru, re, _) = match previous.take() {
                        Some((u0, e0)) => {
                            let mut jump: Vec<f64> = state.u.iter().zip(&u0).map(|(a, b)| a - b).collect();
                            jump.extend(std::iter::repeat_n(0.0, model.n_nodes()));
                            let mut carried = vec![0.0; jump.len()];
                            let (mut ru, mut re, _) = model.evaluate(&u0, &e0, &kappa_prev, Blocks::ALL, |e, sys| {
                                let local = monolithic_block(sys);
                                self.primary.add_element(&mut j, e, &local);
                                let dofs = model.element_dofs(e);
                                let nd = dofs.len();
                                for (a, &ga) in dofs.iter().enumerate() {
                                    carried[ga] += dofs.iter().enumerate().map(|(b, &gb)| local[a * nd + b] * jump[gb]).sum::<f64>();
                                }
                            });
                            state.u = u0;
                            state.eps_bar = e0;
                            for (r, c) in ru.iter_mut().chain(re.iter_mut()).zip(&carried) {
                                *r += c;
                            }
                            // Constrained rows are dropped by `restrict`; move the
                            // iterate onto the new essential values.
                            model.apply_constraints(&mut state.u, lf);
                            (ru, re, Vec::new())
                        }
                        None => model.evaluate(&state.u, &state.eps_bar, &kappa_prev, Blocks::ALL, |e, sys| {
                            self.primary.add_element(&mut j, e, &monolithic_block(sys))
                        }),
                    };
                    let mut r = ru;
                    r.extend(re);
                    let rf: Vec<f64> = self.primary.restrict(&r).into_iter().map(|v| -v).collect();
                    let (dx, seconds) = timed(|| self.primary.solve(&j, &rf));
                    let dx = dx?;
                    let mut x = std::mem::take(&mut state.u);
                    x.append(&mut state.eps_bar);
                    self.primary.add_free(&mut x, &dx);
                    state.eps_bar = x.split_off(n_u);
                    state.u = x;
                    (norm(&dx), norm(&rf), seconds)
                }
                Scheme::Staggered => {
                    previous = None;
                    let mut j = self.primary.zeros();
                    let (ru, _, _) = model.evaluate(&state.u, &state.eps_bar, &kappa_prev, Blocks { uu: true, coupling: false, ee: false }, |e, sys| {
                        self.primary.add_element(&mut j, e, &sys.juu)
                    });
                    let rf: Vec<f64> = self.primary.restrict(&ru).into_iter().map(|v| -v).collect();
                    let (du, seconds) = timed(|| self.primary.solve(&j, &rf));
                    let du = du?;
                    self.primary.add_free(&mut state.u, &du);
                    let (_, re, _) = model.evaluate(&state.u, &state.eps_bar, &kappa_prev, Blocks::NONE, |_, _| {});
                    let neg: Vec<f64> = re.iter().map(|v| -v).collect();
                    let de = self.ee.as_ref().expect("staggered factorization").solve(&neg)?;
                    for (v, d) in state.eps_bar.iter_mut().zip(&de) {
                        *v += d;
                    }
                    let joint = (norm(&du).powi(2) + norm(&de).powi(2)).sqrt();
                    (joint, norm(&rf), seconds)
                }
            };
            if it == 1 {
                first_delta = delta_norm;
                first_res = res_norm;
            }
            let ratio = if first_delta > 0.0 { delta_norm / first_delta } else { 0.0 };
            let residual_ratio = if first_res > 0.0 { res_norm / first_res } else { 0.0 };
            log.push(IterationLog { iteration: it, ratio, residual_norm: res_norm, residual_ratio, solve_seconds: seconds });
            if !ratio.is_finite() {
                break;
            }
            if (it > 1 || first_delta == 0.0) && ratio < config.tol {
                return Ok(StepOutcome::Converged(Box::new(self.finish(state, &kappa_prev, increment, lf, log))));
            }
        }
        state.kappa = kappa_prev;
        Ok(StepOutcome::Failed { iterations: log.len() })
    }

    fn finish(&self, state: &mut DofState, kappa_prev: &[f64], increment: usize, lf: f64, log: Vec<IterationLog>) -> IncrementRecord {
        let model = self.model;
        let (ru, re, responses) = model.evaluate(&state.u, &state.eps_bar, kappa_prev, Blocks::NONE, |_, _| {});
        let reaction = model.reaction(&ru);
        let mut r = ru;
        if self.scheme == Scheme::Monolithic {
            r.extend(re);
        }
        let converged_residual_norm = norm(&self.primary.restrict(&r));
        state.kappa = responses.iter().map(|g| g.damage.kappa).collect();
        state.increment = increment;
        state.lf = lf;
        let last = log.last().copied().expect("at least one iteration");
        IncrementRecord {
            increment,
            lf,
            reaction,
            iterations: last.iteration,
            final_ratio: last.ratio,
            converged_residual_norm,
            log,
            state: state.clone(),
            gp: GpFields::from_responses(&responses),
        }
    }

    fn label(&self) -> &'static str {
        match self.scheme {
            Scheme::Monolithic => "fem-monolithic",
            Scheme::Staggered => "fem-staggered",
        }
    }

    /// Runs increments `first..=last` from `state`, appending to `history`.
    pub fn run(
        &self,
        state: &mut DofState,
        history: &mut SolveHistory,
        first: usize,
        last: usize,
        config: &SolverConfig,
    ) -> Result<(), FemError> {
        for n in first..=last {
            let lf = config.loadfactor(n);
            match self.step(state, n, lf, config)? {
                StepOutcome::Converged(rec) => {
                    log::debug!("{} increment {n} (lf {lf:.4}) converged in {} iterations", self.label(), rec.iterations);
                    history.records.push(*rec);
                }
                StepOutcome::Failed { iterations } => {
                    log::warn!("{} increment {n} (lf {lf:.4}) failed after {iterations} iterations", self.label());
                    return Err(FemError::NonConvergence { increment: n, iterations, partial: Box::new(std::mem::take(history)) });
                }
            }
        }
        Ok(())
    }

    pub fn new_history(&self) -> SolveHistory {
        SolveHistory { solver: self.label().to_string(), system_rows: self.system_rows(), records: Vec::new() }
    }
}

pub fn solve(model: &Model, config: &SolverConfig) -> Result<SolveHistory, FemError> {
    config.validate()?;
    let stepper = FemStepper::new(model, config.scheme)?;
    let mut state = DofState::zero(model);
    let mut history = stepper.new_history();
    stepper.run(&mut state, &mut history, 1, config.n_increments(), config)?;
    Ok(history)
}

pub fn solve_monolithic(model: &Model, config: &SolverConfig) -> Result<SolveHistory, FemError> {
    solve(model, &SolverConfig { scheme: Scheme::Monolithic, ..config.clone() })
}

pub fn solve_staggered(model: &Model, config: &SolverConfig) -> Result<SolveHistory, FemError> {
    solve(model, &SolverConfig { scheme: Scheme::Staggered, ..config.clone() })
}
