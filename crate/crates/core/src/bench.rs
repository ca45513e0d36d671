//! Benchmark problem definitions (single notch tension, double notch
//! tension, single notch shear) and run comparison reports.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::fem::{solve_monolithic, Constraint, FemError, Model, SolveHistory, SolverConfig};
use crate::ifenn::rse;
use crate::material::MaterialParams;
use crate::mesh::{build_structured_mesh, read_mesh_file, Domain, ElementOrder, Mesh, MeshError, Notch};

pub const PROBLEM_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("unknown problem {0:?} (expected snt, dnt or sns)")]
    UnknownProblem(String),
    #[error("problem {problem}: {reason}")]
    Invalid { problem: String, reason: String },
    #[error("problem {problem} has no mesh named {mesh:?}")]
    UnknownMesh { problem: String, mesh: String },
    #[error("mesh {mesh:?} of problem {problem} needs an imported mesh file: {reason}")]
    MeshFileRequired { problem: String, mesh: String, reason: String },
    #[error("runs are on different increment grids: {0}")]
    GridMismatch(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Fem(#[from] FemError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// Reference-size meshes and load schedule.
    Full,
    /// Reduced meshes and increment counts for quick runs.
    Desk,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeshRole {
    /// Generates the training datasets.
    Train,
    /// Analysed with the trained surrogate.
    Test,
    /// Extra resolution for mesh-independence checks.
    Refinement,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshRecipe {
    pub name: String,
    pub role: MeshRole,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elem_size: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<ElementOrder>,
    /// Mesh file, relative to the problem file, for unstructured meshes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dofs {
    X,
    Y,
    Xy,
}

impl Dofs {
    fn components(self) -> &'static [usize] {
        match self {
            Dofs::X => &[0],
            Dofs::Y => &[1],
            Dofs::Xy => &[0, 1],
        }
    }
}

/// Zero displacement on the nodes of a boundary set, optionally restricted
/// to a coordinate range along the edge (x for horizontal edges, y for
/// vertical ones).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Support {
    pub set: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<[f64; 2]>,
    pub dofs: Dofs,
}

/// Prescribed displacement `lf * magnitude` in one direction; the reaction
/// is the sum of the residuals of these DOFs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Load {
    pub set: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<[f64; 2]>,
    pub component: Dofs,
    /// mm at `lf = 1`.
    pub magnitude: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub dlf: f64,
    pub lf_max: f64,
}

/// Load calibration: while the training-mesh run ends with a peak damage
/// below `min_damage`, the load is multiplied by `factor`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    pub min_damage: f64,
    pub factor: f64,
    pub max_rounds: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub version: u32,
    pub name: String,
    pub scale: Scale,
    #[serde(default)]
    pub notes: Vec<String>,
    pub domain: Domain,
    #[serde(default)]
    pub notches: Vec<Notch>,
    pub supports: Vec<Support>,
    pub load: Load,
    pub material: MaterialParams,
    pub meshes: Vec<MeshRecipe>,
    pub schedule: Schedule,
    #[serde(default = "one")]
    pub activation_increment: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<Calibration>,
    /// Directory that relative mesh files resolve against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn one() -> usize {
    1
}

const BUILTIN: [(&str, Scale, &str); 6] = [
    ("snt", Scale::Full, include_str!("../problems/snt_full.json")),
    ("snt", Scale::Desk, include_str!("../problems/snt_desk.json")),
    ("dnt", Scale::Full, include_str!("../problems/dnt_full.json")),
    ("dnt", Scale::Desk, include_str!("../problems/dnt_desk.json")),
    ("sns", Scale::Full, include_str!("../problems/sns_full.json")),
    ("sns", Scale::Desk, include_str!("../problems/sns_desk.json")),
];

/// One of the shipped problem definitions.
pub fn builtin_problem(name: &str, scale: Scale) -> Result<ProblemSpec, BenchError> {
    let (_, _, text) = BUILTIN
        .iter()
        .find(|(n, s, _)| *n == name && *s == scale)
        .ok_or_else(|| BenchError::UnknownProblem(name.to_string()))?;
    let spec: ProblemSpec = serde_json::from_str(text).map_err(|source| BenchError::Json { path: format!("builtin {name}"), source })?;
    spec.validate()?;
    Ok(spec)
}

impl ProblemSpec {
    pub fn from_file(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path).map_err(|source| BenchError::Io { path: path.display().to_string(), source })?;
        let mut spec: ProblemSpec =
            serde_json::from_str(&text).map_err(|source| BenchError::Json { path: path.display().to_string(), source })?;
        spec.base_dir = path.parent().map(Path::to_path_buf);
        spec.validate()?;
        Ok(spec)
    }

    fn invalid(&self, reason: impl Into<String>) -> BenchError {
        BenchError::Invalid { problem: self.name.clone(), reason: reason.into() }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.version != PROBLEM_VERSION {
            return Err(self.invalid(format!("unsupported version {}", self.version)));
        }
        if !(self.schedule.dlf > 0.0 && self.schedule.lf_max >= self.schedule.dlf && self.schedule.lf_max <= 1.0) {
            return Err(self.invalid("schedule needs 0 < dlf <= lf_max <= 1"));
        }
        if self.load.component == Dofs::Xy {
            return Err(self.invalid("the load acts in one direction (x or y)"));
        }
        if !self.load.magnitude.is_finite() || self.load.magnitude == 0.0 {
            return Err(self.invalid("load magnitude must be finite and nonzero"));
        }
        if self.activation_increment == 0 {
            return Err(self.invalid("activation_increment must be at least 1"));
        }
        if self.meshes.is_empty() {
            return Err(self.invalid("at least one mesh recipe is required"));
        }
        for m in &self.meshes {
            let structured = m.elem_size.is_some() && m.order.is_some();
            if structured == m.file.is_some() {
                return Err(self.invalid(format!("mesh {:?} needs either elem_size and order, or file", m.name)));
            }
        }
        if let Some(c) = self.calibration {
            if !(c.factor > 1.0 && c.min_damage > 0.0 && c.min_damage < 1.0) {
                return Err(self.invalid("calibration needs factor > 1 and 0 < min_damage < 1"));
            }
        }
        self.material.validate().map_err(|e| self.invalid(e.to_string()))?;
        Ok(())
    }

    pub fn recipe(&self, name: &str) -> Result<&MeshRecipe, BenchError> {
        self.meshes
            .iter()
            .find(|m| m.name == name)
            .ok_or_else(|| BenchError::UnknownMesh { problem: self.name.clone(), mesh: name.to_string() })
    }

    /// First recipe with the given role.
    pub fn recipe_for(&self, role: MeshRole) -> Result<&MeshRecipe, BenchError> {
        self.meshes
            .iter()
            .find(|m| m.role == role)
            .ok_or_else(|| BenchError::UnknownMesh { problem: self.name.clone(), mesh: format!("<{role:?}>") })
    }

    pub fn build_mesh(&self, recipe: &MeshRecipe) -> Result<Mesh, BenchError> {
        match (&recipe.file, recipe.elem_size, recipe.order) {
            (Some(file), _, _) => {
                let path = match &self.base_dir {
                    Some(dir) => dir.join(file),
                    None => PathBuf::from(file),
                };
                if !path.exists() {
                    return Err(BenchError::MeshFileRequired {
                        problem: self.name.clone(),
                        mesh: recipe.name.clone(),
                        reason: format!("{} not found", path.display()),
                    });
                }
                Ok(read_mesh_file(&path)?)
            }
            (None, Some(h), Some(order)) => Ok(build_structured_mesh(&self.domain, &self.notches, h, order)?),
            _ => Err(self.invalid(format!("mesh {:?} is incomplete", recipe.name))),
        }
    }

    fn set_nodes(&self, mesh: &Mesh, set: &str, range: Option<[f64; 2]>) -> Result<Vec<usize>, BenchError> {
        let bs = mesh.boundary_set(set).ok_or_else(|| self.invalid(format!("mesh has no boundary set {set:?}")))?;
        let Some([lo, hi]) = range else { return Ok(bs.nodes.clone()) };
        // Position along the edge: x for horizontal edges, y for vertical ones.
        let horizontal = bs.normals.first().is_some_and(|n| n[1].abs() > n[0].abs());
        let axis = if horizontal { 0 } else { 1 };
        let tol = 1e-9 * self.domain.width.max(self.domain.height);
        let nodes: Vec<usize> = bs.nodes.iter().copied().filter(|&n| mesh.nodes[n][axis] >= lo - tol && mesh.nodes[n][axis] <= hi + tol).collect();
        if nodes.is_empty() {
            return Err(self.invalid(format!("no nodes of {set:?} lie in [{lo}, {hi}]")));
        }
        Ok(nodes)
    }

    /// FEM model with this problem's supports and load on `mesh`.
    pub fn build_model(&self, mesh: Mesh) -> Result<Model, BenchError> {
        let mut constraints = Vec::new();
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.supports {
            for n in self.set_nodes(&mesh, &s.set, s.range)? {
                for &c in s.dofs.components() {
                    if seen.insert(2 * n + c) {
                        constraints.push(Constraint { dof: 2 * n + c, value: 0.0 });
                    }
                }
            }
        }
        let c = self.load.component.components()[0];
        let mut reaction_dofs = Vec::new();
        for n in self.set_nodes(&mesh, &self.load.set, self.load.range)? {
            let dof = 2 * n + c;
            if !seen.insert(dof) {
                return Err(self.invalid(format!("node {n} is both supported and loaded in the load direction")));
            }
            constraints.push(Constraint { dof, value: self.load.magnitude });
            reaction_dofs.push(dof);
        }
        Ok(Model::new(mesh, self.material, constraints, reaction_dofs)?)
    }

    pub fn model_for(&self, mesh_name: &str) -> Result<Model, BenchError> {
        self.build_model(self.build_mesh(self.recipe(mesh_name)?)?)
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig { dlf: self.schedule.dlf, lf_max: self.schedule.lf_max, ..Default::default() }
    }

    pub fn n_increments(&self) -> usize {
        self.solver_config().n_increments()
    }
}

/// Outcome of a load calibration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationLog {
    pub rounds: Vec<(f64, f64)>,
    pub magnitude: f64,
    pub history: Option<SolveHistory>,
}

/// Runs the monolithic solver on `mesh_name` and scales the load until the
/// final peak damage reaches the calibration target. Returns the adjusted
/// spec, the (magnitude, peak damage) pairs tried and the accepted history.
pub fn calibrate_load(spec: &ProblemSpec, mesh_name: &str) -> Result<(ProblemSpec, CalibrationLog), BenchError> {
    let mut spec = spec.clone();
    let Some(cal) = spec.calibration else {
        return Ok((spec.clone(), CalibrationLog { rounds: vec![], magnitude: spec.load.magnitude, history: None }));
    };
    let mesh = spec.build_mesh(spec.recipe(mesh_name)?)?;
    let mut rounds = Vec::new();
    for round in 0..=cal.max_rounds {
        let model = spec.build_model(mesh.clone())?;
        let history = solve_monolithic(&model, &spec.solver_config())?;
        let peak = history.last().map_or(0.0, |r| r.gp.damage.iter().cloned().fold(0.0, f64::max));
        rounds.push((spec.load.magnitude, peak));
        if peak >= cal.min_damage || round == cal.max_rounds {
            if peak < cal.min_damage {
                log::warn!("{}: peak damage {peak:.3} after {} calibration rounds is below {}", spec.name, cal.max_rounds, cal.min_damage);
            } else if round > 0 {
                log::info!("{}: load magnitude calibrated to {} mm (peak damage {peak:.3})", spec.name, spec.load.magnitude);
            }
            let magnitude = spec.load.magnitude;
            return Ok((spec, CalibrationLog { rounds, magnitude, history: Some(history) }));
        }
        log::info!("{}: peak damage {peak:.3} below {}, scaling the load by {}", spec.name, cal.min_damage, cal.factor);
        spec.load.magnitude *= cal.factor;
    }
    unreachable!("the last round always returns")
}

/// Per-increment comparison of two runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub increment: usize,
    pub lf: f64,
    pub reaction_a: f64,
    pub reaction_b: f64,
    /// `|R_a - R_b| / |R_b|` in percent.
    pub reaction_deviation_pct: f64,
    /// Root-mean-square nonlocal strain over the Gauss points.
    pub eps_bar_rms_a: f64,
    pub eps_bar_rms_b: f64,
    /// `|rms_a - rms_b| / rms_b`.
    pub eps_bar_norm_rse: f64,
    /// Pointwise RSE when both runs share the Gauss points.
    pub eps_bar_field_rse: Option<f64>,
    pub iterations_a: usize,
    pub iterations_b: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub solver_a: String,
    pub solver_b: String,
    pub rows: Vec<ComparisonRow>,
    pub max_reaction_deviation_pct: f64,
    pub max_eps_bar_norm_rse: f64,
    pub total_iterations_a: usize,
    pub total_iterations_b: usize,
}

fn rms(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
    }
}

fn relative(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs()
    }
}

/// Compares run `a` against reference run `b` on the same increment grid.
pub fn compare_runs(a: &SolveHistory, b: &SolveHistory) -> Result<Comparison, BenchError> {
    if a.records.len() != b.records.len() {
        return Err(BenchError::GridMismatch(format!("{} vs {} increments", a.records.len(), b.records.len())));
    }
    let mut rows = Vec::with_capacity(a.records.len());
    for (ra, rb) in a.records.iter().zip(&b.records) {
        if ra.increment != rb.increment || (ra.lf - rb.lf).abs() > 1e-12 {
            return Err(BenchError::GridMismatch(format!("increment {} at lf {} vs increment {} at lf {}", ra.increment, ra.lf, rb.increment, rb.lf)));
        }
        let (na, nb) = (rms(&ra.gp.eps_bar), rms(&rb.gp.eps_bar));
        rows.push(ComparisonRow {
            increment: ra.increment,
            lf: ra.lf,
            reaction_a: ra.reaction,
            reaction_b: rb.reaction,
            reaction_deviation_pct: 100.0 * relative(ra.reaction, rb.reaction),
            eps_bar_rms_a: na,
            eps_bar_rms_b: nb,
            eps_bar_norm_rse: relative(na, nb),
            eps_bar_field_rse: (ra.gp.eps_bar.len() == rb.gp.eps_bar.len()).then(|| rse(&ra.gp.eps_bar, &rb.gp.eps_bar)),
            iterations_a: ra.iterations,
            iterations_b: rb.iterations,
        });
    }
    let max = |f: fn(&ComparisonRow) -> f64| rows.iter().map(f).fold(0.0, f64::max);
    Ok(Comparison {
        solver_a: a.solver.clone(),
        solver_b: b.solver.clone(),
        max_reaction_deviation_pct: max(|r| r.reaction_deviation_pct),
        max_eps_bar_norm_rse: max(|r| r.eps_bar_norm_rse),
        total_iterations_a: rows.iter().map(|r| r.iterations_a).sum(),
        total_iterations_b: rows.iter().map(|r| r.iterations_b).sum(),
        rows,
    })
}

impl Comparison {
    pub fn write_csv(&self, path: &Path) -> Result<(), BenchError> {
        let io = |source| BenchError::Io { path: path.display().to_string(), source };
        let mut w = csv::Writer::from_path(path).map_err(|e| io(e.into()))?;
        for row in &self.rows {
            w.serialize(row).map_err(|e| io(e.into()))?;
        }
        w.flush().map_err(io)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_scale_mesh_counts() {
        let snt = builtin_problem("snt", Scale::Full).unwrap();
        let expected = [("M1-quad", 1281, 400, 3600), ("M2-linear", 1681, 1600, 6400), ("M2-quad", 4961, 1600, 14400), ("M3-quad", 7701, 2500, 22500), ("M4-linear", 6561, 6400, 25600)];
        for (name, nodes, elems, gps) in expected {
            let mesh = snt.build_mesh(snt.recipe(name).unwrap()).unwrap();
            assert_eq!((mesh.n_nodes(), mesh.n_elements(), mesh.n_gauss_points()), (nodes, elems, gps), "{name}");
        }
        let dnt = builtin_problem("dnt", Scale::Full).unwrap();
        for (name, gps) in [("coarse", 3528), ("intermediate", 25088), ("fine", 39200)] {
            assert_eq!(dnt.build_mesh(dnt.recipe(name).unwrap()).unwrap().n_gauss_points(), gps, "{name}");
        }
        let sns = builtin_problem("sns", Scale::Full).unwrap();
        assert!(matches!(sns.model_for("coarse"), Err(BenchError::MeshFileRequired { .. })));
        assert!(matches!(builtin_problem("xyz", Scale::Desk), Err(BenchError::UnknownProblem(_))));
    }

    #[test]
    fn desk_problems_build() {
        let snt = builtin_problem("snt", Scale::Desk).unwrap();
        assert_eq!(snt.n_increments(), 40);
        let train = snt.build_mesh(snt.recipe_for(MeshRole::Train).unwrap()).unwrap();
        assert_eq!((train.n_elements(), train.order), (400, ElementOrder::Quadratic));
        let test = snt.build_mesh(snt.recipe_for(MeshRole::Test).unwrap()).unwrap();
        assert_eq!((test.n_elements(), test.order), (1600, ElementOrder::Linear));
        let model = snt.build_model(train).unwrap();
        // Rollers on 30 <= x <= 100 (15 corner-and-mid-side steps of 2.5 mm
        // plus one), one pin, 41 loaded top nodes.
        assert_eq!(model.constraints.len(), 29 + 1 + 41);
        assert_eq!(model.reaction_dofs.len(), 41);
        for name in ["dnt", "sns"] {
            let spec = builtin_problem(name, Scale::Desk).unwrap();
            for r in &spec.meshes {
                spec.build_model(spec.build_mesh(r).unwrap()).unwrap();
            }
        }
    }

    #[test]
    fn spec_round_trip_and_validation() {
        let spec = builtin_problem("dnt", Scale::Desk).unwrap();
        let json = serde_json::to_string_pretty(&spec).unwrap();
        let back: ProblemSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
        let mut bad = spec.clone();
        bad.schedule.lf_max = 1.5;
        assert!(bad.validate().is_err());
        let mut bad = spec.clone();
        bad.load.component = Dofs::Xy;
        assert!(bad.validate().is_err());
        let mut bad = spec;
        bad.supports.push(Support { set: "top".into(), range: None, dofs: Dofs::Y });
        assert!(bad.model_for("coarse").is_err());
    }

    #[test]
    fn comparing_a_run_with_itself() {
        let spec = builtin_problem("snt", Scale::Desk).unwrap();
        let model = spec.model_for("coarse").unwrap();
        let h = solve_monolithic(&model, &SolverConfig { lf_max: 0.1, ..spec.solver_config() }).unwrap();
        let c = compare_runs(&h, &h).unwrap();
        assert_eq!(c.rows.len(), 5);
        assert_eq!(c.max_reaction_deviation_pct, 0.0);
        assert_eq!(c.max_eps_bar_norm_rse, 0.0);
        assert!(c.rows.iter().all(|r| r.eps_bar_field_rse == Some(0.0)));
        let mut short = h.clone();
        short.records.pop();
        assert!(matches!(compare_runs(&h, &short), Err(BenchError::GridMismatch(_))));
        let dir = tempfile::tempdir().unwrap();
        c.write_csv(&dir.path().join("c.csv")).unwrap();
        let text = std::fs::read_to_string(dir.path().join("c.csv")).unwrap();
        assert!(text.starts_with("increment,lf,reaction_a"));
        assert_eq!(text.lines().count(), 6);
    }
}
