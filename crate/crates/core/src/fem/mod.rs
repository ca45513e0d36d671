//! Coupled displacement / nonlocal-strain finite elements: residuals,
//! tangents, monolithic and staggered Newton solvers, dataset export.

mod assembly;
mod dataset;
mod element;
mod solver;

use serde::{Deserialize, Serialize};

use crate::linalg::LinalgError;
use crate::material::{MaterialError, MaterialParams, Matrix3};
use crate::mesh::{ElementOrder, GaussPointData, Mesh, MeshError};

pub use assembly::ReducedSystem;
pub use dataset::{export_datasets, nodal_equivalent_strain, Datasets, FEATURE_NAMES};
pub(crate) use element::{add_bt, b_columns};
pub use element::{element_system, gp_response, strain_at, Blocks, ElementSystem, GpResponse};
pub use solver::{solve, solve_monolithic, solve_staggered, FemStepper};

#[derive(Debug, thiserror::Error)]
pub enum FemError {
    #[error("increment {increment} did not converge within {iterations} iterations")]
    NonConvergence { increment: usize, iterations: usize, partial: Box<SolveHistory> },
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("invalid boundary condition: {0}")]
    Boundary(String),
    #[error("Dataset C requires quadratic (Q8) elements, the mesh uses {0}")]
    OrderMismatch(ElementOrder),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Material(#[from] MaterialError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

impl FemError {
    /// The converged increments preceding a convergence failure.
    pub fn partial_history(&self) -> Option<&SolveHistory> {
        match self {
            FemError::NonConvergence { partial, .. } => Some(partial),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Monolithic,
    Staggered,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Relative tolerance on the Newton update norm.
    pub tol: f64,
    pub max_iter: usize,
    /// Constant loadfactor step.
    pub dlf: f64,
    pub lf_max: f64,
    pub scheme: Scheme,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { tol: 1e-6, max_iter: 200, dlf: 0.02, lf_max: 0.8, scheme: Scheme::Monolithic }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), FemError> {
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(FemError::Config(format!("tol must lie in (0, 1), got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(FemError::Config("max_iter must be at least 1".into()));
        }
        if !(self.dlf > 0.0) || !(self.lf_max >= self.dlf) {
            return Err(FemError::Config(format!("need 0 < dlf <= lf_max, got dlf {} and lf_max {}", self.dlf, self.lf_max)));
        }
        Ok(())
    }

    pub fn n_increments(&self) -> usize {
        (self.lf_max / self.dlf + 1e-9).floor() as usize
    }

    pub fn loadfactor(&self, increment: usize) -> f64 {
        increment as f64 * self.dlf
    }
}

/// Essential condition on a displacement DOF (`2 * node + component`);
/// the prescribed value at loadfactor `lf` is `lf * value`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub dof: usize,
    pub value: f64,
}

/// Mesh, material and boundary data of one analysis.
#[derive(Clone, Debug)]
pub struct Model {
    pub mesh: Mesh,
    pub gps: Vec<GaussPointData>,
    pub params: MaterialParams,
    pub c: Matrix3,
    pub constraints: Vec<Constraint>,
    /// DOFs whose residuals are summed into the reported reaction.
    pub reaction_dofs: Vec<usize>,
}

impl Model {
    pub fn new(mesh: Mesh, params: MaterialParams, constraints: Vec<Constraint>, reaction_dofs: Vec<usize>) -> Result<Self, FemError> {
        params.validate()?;
        let gps = mesh.integration_points()?;
        let n_u = 2 * mesh.n_nodes();
        let mut seen = vec![false; n_u];
        for c in &constraints {
            if c.dof >= n_u {
                return Err(FemError::Boundary(format!("constrained DOF {} out of range", c.dof)));
            }
            if std::mem::replace(&mut seen[c.dof], true) {
                return Err(FemError::Boundary(format!("DOF {} constrained twice", c.dof)));
            }
        }
        if let Some(d) = reaction_dofs.iter().find(|&&d| d >= n_u) {
            return Err(FemError::Boundary(format!("reaction DOF {d} out of range")));
        }
        let c = params.constitutive_matrix();
        Ok(Model { mesh, gps, params, c, constraints, reaction_dofs })
    }

    pub fn n_nodes(&self) -> usize {
        self.mesh.n_nodes()
    }

    pub fn n_u_dofs(&self) -> usize {
        2 * self.n_nodes()
    }

    /// Displacement plus nonlocal-strain DOFs.
    pub fn n_dofs(&self) -> usize {
        3 * self.n_nodes()
    }

    pub fn n_gauss_points(&self) -> usize {
        self.gps.len()
    }

    pub fn element_gps(&self, e: usize) -> &[GaussPointData] {
        let q = self.mesh.gauss_per_element();
        &self.gps[e * q..(e + 1) * q]
    }

    pub fn element_u_dofs(&self, e: usize) -> Vec<usize> {
        self.mesh.elements[e].iter().flat_map(|&n| [2 * n, 2 * n + 1]).collect()
    }

    /// Displacement DOFs followed by nonlocal-strain DOFs (`2N + node`).
    pub fn element_dofs(&self, e: usize) -> Vec<usize> {
        let mut d = self.element_u_dofs(e);
        let off = self.n_u_dofs();
        d.extend(self.mesh.elements[e].iter().map(|&n| off + n));
        d
    }

    pub fn gather_u(&self, e: usize, u: &[f64]) -> Vec<f64> {
        self.mesh.elements[e].iter().flat_map(|&n| [u[2 * n], u[2 * n + 1]]).collect()
    }

    pub fn gather_nodal(&self, e: usize, v: &[f64]) -> Vec<f64> {
        self.mesh.elements[e].iter().map(|&n| v[n]).collect()
    }

    pub fn constrained_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n_u_dofs()];
        for c in &self.constraints {
            mask[c.dof] = true;
        }
        mask
    }

    pub fn apply_constraints(&self, u: &mut [f64], lf: f64) {
        for c in &self.constraints {
            u[c.dof] = lf * c.value;
        }
    }

    pub fn reaction(&self, ru: &[f64]) -> f64 {
        self.reaction_dofs.iter().map(|&d| ru[d]).sum()
    }

    /// Global residuals `(R^u, R^ε̄)` and Gauss point responses, calling
    /// `sink` with every element system in element order.
    pub fn evaluate(
        &self,
        u: &[f64],
        eps_bar: &[f64],
        kappa: &[f64],
        blocks: Blocks,
        mut sink: impl FnMut(usize, &ElementSystem),
    ) -> (Vec<f64>, Vec<f64>, Vec<GpResponse>) {
        let mut ru = vec![0.0; self.n_u_dofs()];
        let mut re = vec![0.0; self.n_nodes()];
        let mut responses = Vec::with_capacity(self.gps.len());
        let q = self.mesh.gauss_per_element();
        for (e, conn) in self.mesh.elements.iter().enumerate() {
            let (sys, resp) = element_system(
                self.element_gps(e),
                &self.gather_u(e, u),
                &self.gather_nodal(e, eps_bar),
                &kappa[e * q..(e + 1) * q],
                &self.params,
                &self.c,
                blocks,
            );
            for (a, &n) in conn.iter().enumerate() {
                ru[2 * n] += sys.ru[2 * a];
                ru[2 * n + 1] += sys.ru[2 * a + 1];
                re[n] += sys.re[a];
            }
            sink(e, &sys);
            responses.extend(resp);
        }
        (ru, re, responses)
    }

    /// Stacked global residual `[R^u; R^ε̄]`.
    pub fn global_residual(&self, state: &DofState) -> Vec<f64> {
        let (mut ru, re, _) = self.evaluate(&state.u, &state.eps_bar, &state.kappa, Blocks::NONE, |_, _| {});
        ru.extend(re);
        ru
    }

    /// Dense global Jacobian over all DOFs, row-major; for small meshes and tests.
    pub fn global_jacobian_dense(&self, state: &DofState) -> Vec<Vec<f64>> {
        let n = self.n_dofs();
        let mut j = vec![vec![0.0; n]; n];
        self.evaluate(&state.u, &state.eps_bar, &state.kappa, Blocks::ALL, |e, sys| {
            let dofs = self.element_dofs(e);
            let local = monolithic_block(sys);
            let nd = dofs.len();
            for (r, &gr) in dofs.iter().enumerate() {
                for (c, &gc) in dofs.iter().enumerate() {
                    j[gr][gc] += local[r * nd + c];
                }
            }
        });
        j
    }
}

/// Dense `[[J^uu, J^uε̄], [J^ε̄u, J^ε̄ε̄]]` of one element, row-major, in the
/// order of [`Model::element_dofs`].
pub fn monolithic_block(sys: &ElementSystem) -> Vec<f64> {
    let m = sys.re.len();
    let nu = 2 * m;
    let nd = nu + m;
    let mut out = vec![0.0; nd * nd];
    for i in 0..nu {
        out[i * nd..i * nd + nu].copy_from_slice(&sys.juu[i * nu..(i + 1) * nu]);
        out[i * nd + nu..(i + 1) * nd].copy_from_slice(&sys.jue[i * m..(i + 1) * m]);
    }
    for a in 0..m {
        let row = nu + a;
        out[row * nd..row * nd + nu].copy_from_slice(&sys.jeu[a * nu..(a + 1) * nu]);
        out[row * nd + nu..(row + 1) * nd].copy_from_slice(&sys.jee[a * m..(a + 1) * m]);
    }
    out
}

/// Nodal unknowns and Gauss point history after an increment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DofState {
    pub increment: usize,
    pub lf: f64,
    /// Interleaved nodal displacements, mm.
    pub u: Vec<f64>,
    /// Nodal nonlocal equivalent strain (empty when the nonlocal field is not
    /// a nodal unknown).
    pub eps_bar: Vec<f64>,
    /// History variable per Gauss point.
    pub kappa: Vec<f64>,
}

impl DofState {
    pub fn zero(model: &Model) -> Self {
        DofState {
            increment: 0,
            lf: 0.0,
            u: vec![0.0; model.n_u_dofs()],
            eps_bar: vec![0.0; model.n_nodes()],
            kappa: vec![0.0; model.n_gauss_points()],
        }
    }
}

/// One Newton iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    /// `‖δx_i‖ / ‖δx_1‖`.
    pub ratio: f64,
    /// Free-DOF residual norm before the update.
    pub residual_norm: f64,
    /// `‖R_i‖ / ‖R_1‖`.
    pub residual_ratio: f64,
    /// Wall time of the factorization and solve, seconds.
    pub solve_seconds: f64,
}

/// Gauss point fields at a converged increment, in Gauss point order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GpFields {
    pub eps_eq: Vec<f64>,
    pub eps_bar: Vec<f64>,
    pub damage: Vec<f64>,
}

impl GpFields {
    pub fn from_responses(responses: &[GpResponse]) -> Self {
        GpFields {
            eps_eq: responses.iter().map(|r| r.eps_eq).collect(),
            eps_bar: responses.iter().map(|r| r.eps_bar).collect(),
            damage: responses.iter().map(|r| r.damage.d).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IncrementRecord {
    pub increment: usize,
    pub lf: f64,
    pub reaction: f64,
    pub iterations: usize,
    pub final_ratio: f64,
    /// Free-DOF residual norm at the converged state.
    pub converged_residual_norm: f64,
    pub log: Vec<IterationLog>,
    pub state: DofState,
    pub gp: GpFields,
}

/// Converged increments of one analysis.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveHistory {
    pub solver: String,
    /// Rows of the linear system solved per iteration.
    pub system_rows: usize,
    pub records: Vec<IncrementRecord>,
}

impl SolveHistory {
    pub fn reactions(&self) -> Vec<(f64, f64)> {
        self.records.iter().map(|r| (r.lf, r.reaction)).collect()
    }

    pub fn last(&self) -> Option<&IncrementRecord> {
        self.records.last()
    }

    /// Mean wall time per linear solve over all iterations.
    pub fn mean_solve_seconds(&self) -> f64 {
        let (sum, n) = self
            .records
            .iter()
            .flat_map(|r| &r.log)
            .fold((0.0, 0usize), |(s, n), l| (s + l.solve_seconds, n + 1));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Elapsed seconds since `start`; always 0 on targets without a clock.
#[cfg(not(target_arch = "wasm32"))]
pub(crate) fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = std::time::Instant::now();
    let out = f();
    (out, t.elapsed().as_secs_f64())
}

#[cfg(target_arch = "wasm32")]
pub(crate) fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    (f(), 0.0)
}
