//! Run-configuration files, one JSON document per command. Relative paths
//! inside a configuration resolve against the file's directory.

use std::path::{Path, PathBuf};

use anyhow::Context;
use ifenn_core::bench::{builtin_problem, MeshRole, ProblemSpec, Scale};
use ifenn_core::fem::{Scheme, SolverConfig};
use ifenn_core::ifenn::{IfennConfig, NrMode, Refresh};
use ifenn_core::nn::{TcnConfig, TrainConfig};
use ifenn_core::scaling::ScalingConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::Failure;

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<(T, PathBuf), Failure> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(Failure::Io)?;
    let value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display())).map_err(Failure::Config)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((value, base))
}

pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// A shipped problem by name or a problem file, plus the mesh to use.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSelect {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub file: Option<PathBuf>,
    #[serde(default = "desk")]
    pub scale: Scale,
    /// Mesh recipe name; defaults to the first mesh with the command's role.
    #[serde(default)]
    pub mesh: Option<String>,
}

fn desk() -> Scale {
    Scale::Desk
}

impl ProblemSelect {
    pub fn spec(&self, base: &Path) -> Result<ProblemSpec, Failure> {
        match (&self.name, &self.file) {
            (Some(name), None) => builtin_problem(name, self.scale).map_err(|e| Failure::Config(e.into())),
            (None, Some(file)) => ProblemSpec::from_file(&resolve(base, file)).map_err(|e| match e {
                ifenn_core::bench::BenchError::Io { .. } => Failure::Io(e.into()),
                _ => Failure::Config(e.into()),
            }),
            _ => Err(Failure::config("problem needs exactly one of `name` or `file`")),
        }
    }

    pub fn mesh_name(&self, spec: &ProblemSpec, role: MeshRole) -> Result<String, Failure> {
        match &self.mesh {
            Some(m) => spec.recipe(m).map(|r| r.name.clone()),
            None => spec.recipe_for(role).map(|r| r.name.clone()),
        }
        .map_err(|e| Failure::Config(e.into()))
    }
}

/// Solver settings on top of the problem's load schedule.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverBlock {
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub scheme: Option<Scheme>,
}

impl SolverBlock {
    pub fn apply(&self, spec: &ProblemSpec) -> Result<SolverConfig, Failure> {
        let d = spec.solver_config();
        let c = SolverConfig {
            tol: self.tol.unwrap_or(d.tol),
            max_iter: self.max_iter.unwrap_or(d.max_iter),
            scheme: self.scheme.unwrap_or(d.scheme),
            ..d
        };
        c.validate().map_err(|e| Failure::Config(e.into()))?;
        Ok(c)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    A,
    B,
    C,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    pub problem: ProblemSelect,
    #[serde(default = "ab")]
    pub datasets: Vec<DatasetKind>,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn ab() -> Vec<DatasetKind> {
    vec![DatasetKind::A, DatasetKind::B]
}

/// Index written next to the dataset tensors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetIndex {
    pub problem: String,
    pub scale: Scale,
    pub mesh: String,
    pub mesh_checksum: String,
    pub n_gauss_points: usize,
    pub boundary_nodes: Vec<usize>,
    pub boundary_normals: Vec<[f64; 2]>,
    pub loadfactors: Vec<f64>,
    pub lc: f64,
    pub load_magnitude: f64,
    pub a: String,
    pub b: Option<String>,
    pub c: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRunConfig {
    /// Path to the `datasets.json` index written by `generate`.
    pub datasets: PathBuf,
    #[serde(default)]
    pub tcn: TcnConfig,
    #[serde(default)]
    pub scaling: ScalingConfig,
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Monolithic,
    Staggered,
    Ifenn,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IfennBlock {
    pub nr_mode: Option<NrMode>,
    pub activation_increment: Option<usize>,
    pub refresh: Option<Refresh>,
}

impl IfennBlock {
    pub fn apply(&self, solver: &SolverConfig) -> Result<IfennConfig, Failure> {
        let d = IfennConfig::default();
        let c = IfennConfig {
            nr_mode: self.nr_mode.unwrap_or(d.nr_mode),
            activation_increment: self.activation_increment.unwrap_or(d.activation_increment),
            refresh: self.refresh.unwrap_or(d.refresh),
            tol: solver.tol,
            max_iter: solver.max_iter,
            dlf: solver.dlf,
            lf_max: solver.lf_max,
        };
        c.validate().map_err(|e| Failure::Config(e.into()))?;
        Ok(c)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveRunConfig {
    pub problem: ProblemSelect,
    pub method: Method,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub ifenn: IfennBlock,
    /// Required for `ifenn`.
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    /// 1-based increments whose Gauss point fields are saved.
    #[serde(default)]
    pub snapshots: Vec<usize>,
    /// Dataset index of a run on the same mesh; enables per-increment RSE.
    #[serde(default)]
    pub truth: Option<PathBuf>,
    /// Keep wall-clock times in the outputs (breaks byte-identical reruns).
    #[serde(default)]
    pub record_timings: bool,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

/// Either an explicit grid or a seeded random sample of network sizes.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SweepSpace {
    Grid { dil: Vec<usize>, k_size: Vec<usize>, num_filters: Vec<usize> },
    Random {
        samples: usize,
        #[serde(default = "dil_range")]
        dil: [usize; 2],
        #[serde(default = "k_range")]
        k_size: [usize; 2],
        #[serde(default = "filter_range")]
        num_filters: [usize; 2],
    },
}

fn dil_range() -> [usize; 2] {
    [2, 4]
}

fn k_range() -> [usize; 2] {
    [2, 24]
}

fn filter_range() -> [usize; 2] {
    [2, 12]
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepRunConfig {
    pub datasets: PathBuf,
    pub space: SweepSpace,
    /// Remaining network settings shared by every candidate.
    #[serde(default)]
    pub tcn: TcnConfig,
    #[serde(default)]
    pub scaling: ScalingConfig,
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
}
