use std::path::{Path, PathBuf};

use anyhow::anyhow;
use ifenn_core::bench::{calibrate_load, compare_runs, BenchError, MeshRole, ProblemSpec};
use ifenn_core::fem::{self, export_datasets, FemError, Model, SolveHistory};
use ifenn_core::ifenn::{rse, solve_ifenn, IfennError, TcnSurrogate};
use ifenn_core::nn::{
    read_checkpoint, train_adam_with, write_checkpoint, Checkpoint, LossTerms, NnError, TcnConfig, TcnModel, TrainConfig, TrainingData,
    FEATURE_EPS,
};
use ifenn_core::scaling::{ScalingConfig, ScalingScheme};
use ifenn_core::tensor::{read_tensor, write_tensor, SequenceTensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::config::{
    load, resolve, DatasetIndex, DatasetKind, GenerateConfig, Method, SolveRunConfig, SweepRunConfig, SweepSpace, TrainRunConfig,
};
use crate::output::{compact_history, io, output_dir, read_history, write_csv, write_iterations, write_json, write_reactions};
use crate::{Common, Failure};

fn bench(e: BenchError) -> Failure {
    match e {
        BenchError::Fem(e) => fem(e),
        BenchError::Io { .. } => Failure::Io(e.into()),
        e => Failure::Config(e.into()),
    }
}

fn fem(e: FemError) -> Failure {
    match e {
        FemError::NonConvergence { .. } => Failure::NonConvergence(e.into()),
        e => Failure::Config(e.into()),
    }
}

fn nn(e: NnError) -> Failure {
    match e {
        NnError::NonFinite { .. } => Failure::NonConvergence(e.into()),
        NnError::Io { .. } => Failure::Io(e.into()),
        e => Failure::Config(e.into()),
    }
}

fn ifenn(e: IfennError) -> Failure {
    match e {
        IfennError::Fem(e) => fem(e),
        IfennError::Nn(e) => nn(e),
        IfennError::NonConvergence { .. } => Failure::NonConvergence(e.into()),
        e => Failure::Config(e.into()),
    }
}

fn tensor_err(path: &Path) -> impl FnOnce(ifenn_core::tensor::TensorError) -> Failure + '_ {
    move |e| Failure::Io(anyhow!(e).context(format!("{}", path.display())))
}

// ---------------------------------------------------------------------------
// generate

pub fn generate(args: &Common) -> Result<PathBuf, Failure> {
    let (cfg, base): (GenerateConfig, _) = load(&args.config)?;
    if cfg.datasets.is_empty() {
        return Err(Failure::config("`datasets` is empty"));
    }
    if !cfg.datasets.contains(&DatasetKind::A) {
        return Err(Failure::config("Dataset A is always written; list it in `datasets`"));
    }
    let spec = cfg.problem.spec(&base)?;
    let mesh_name = cfg.problem.mesh_name(&spec, MeshRole::Train)?;
    let solver = cfg.solver.apply(&spec)?;
    let mesh = spec.build_mesh(spec.recipe(&mesh_name).map_err(bench)?).map_err(bench)?;
    let with_c = cfg.datasets.contains(&DatasetKind::C);
    if with_c && mesh.order != ifenn_core::mesh::ElementOrder::Quadratic {
        return Err(Failure::config(format!("Dataset C needs quadratic elements; mesh {mesh_name} is {}", mesh.order)));
    }
    let dir = output_dir(args.out.as_deref(), cfg.output.as_deref(), &base, "runs/generate")?;

    let (spec, calibration) = calibrate_load(&spec, &mesh_name).map_err(bench)?;
    if !calibration.rounds.is_empty() {
        write_json(&dir.join("problem.json"), &spec)?;
    }
    let model = spec.build_model(mesh).map_err(bench)?;
    let history = match calibration.history {
        Some(h) if solver == spec.solver_config() => h,
        _ => match fem::solve(&model, &solver) {
            Ok(h) => h,
            Err(e) => {
                if let Some(partial) = e.partial_history() {
                    write_reactions(&dir.join("reactions.csv"), partial)?;
                }
                return Err(fem(e));
            }
        },
    };
    write_reactions(&dir.join("reactions.csv"), &history)?;

    let ds = export_datasets(&history, &model, with_c).map_err(fem)?;
    let meta = json!({ "problem": spec.name, "mesh": mesh_name });
    let put = |kind: &str, t: &SequenceTensor| -> Result<String, Failure> {
        let file = format!("dataset_{kind}.tensor");
        let path = dir.join(&file);
        write_tensor(&path, kind, t, &ds.mesh_checksum, meta.clone()).map_err(tensor_err(&path))?;
        Ok(file)
    };
    let a = put("a", &ds.a)?;
    let b = if cfg.datasets.contains(&DatasetKind::B) { Some(put("b", &ds.b)?) } else { None };
    let c = match &ds.c {
        Some(c) => Some(put("c", c)?),
        None => None,
    };
    let index = DatasetIndex {
        problem: spec.name.clone(),
        scale: spec.scale,
        mesh: mesh_name,
        mesh_checksum: ds.mesh_checksum.clone(),
        n_gauss_points: ds.n_gauss_points,
        boundary_nodes: ds.boundary_nodes.clone(),
        boundary_normals: ds.boundary_normals.clone(),
        loadfactors: ds.loadfactors.clone(),
        lc: spec.material.lc,
        load_magnitude: spec.load.magnitude,
        a,
        b,
        c,
    };
    write_json(&dir.join("datasets.json"), &index)?;
    log::info!("{} increments, {} Gauss points, {} boundary nodes", index.loadfactors.len(), index.n_gauss_points, index.boundary_nodes.len());
    Ok(dir)
}

// ---------------------------------------------------------------------------
// train

struct Loaded {
    index: DatasetIndex,
    a: SequenceTensor,
    b: Option<SequenceTensor>,
    c: Option<SequenceTensor>,
}

fn load_datasets(path: &Path) -> Result<Loaded, Failure> {
    let (index, dir): (DatasetIndex, _) = load(path)?;
    let read = |file: &str| -> Result<SequenceTensor, Failure> {
        let p = resolve(&dir, Path::new(file));
        let (header, t) = read_tensor(&p).map_err(tensor_err(&p))?;
        if header.mesh_checksum != index.mesh_checksum {
            return Err(Failure::config(format!("{} belongs to a different mesh than {}", p.display(), path.display())));
        }
        Ok(t)
    };
    let a = read(&index.a)?;
    let b = index.b.as_deref().map(read).transpose()?;
    let c = index.c.as_deref().map(read).transpose()?;
    Ok(Loaded { index, a, b, c })
}

struct TrainJob<'a> {
    data: &'a Loaded,
    tcn: TcnConfig,
    scaling: ScalingConfig,
    training: TrainConfig,
    seed: u64,
}

struct TrainResult {
    model: TcnModel,
    scheme: ScalingScheme,
    history: Vec<LossTerms>,
    final_loss: LossTerms,
    rse: Option<Vec<f64>>,
}

fn run_training(job: &TrainJob) -> Result<TrainResult, Failure> {
    let d = job.data;
    job.scaling.validate().map_err(|e| Failure::Config(e.into()))?;
    let n_gp = d.index.n_gauss_points;
    let scheme = ScalingScheme::fit_tensor(job.scaling.clone(), &d.a, FEATURE_EPS, n_gp).map_err(|e| Failure::Config(e.into()))?;
    let g = d.index.lc * d.index.lc / 2.0;
    let data = TrainingData::new(&d.a, d.b.as_ref(), d.c.as_ref(), &scheme, n_gp, d.index.boundary_normals.clone(), g).map_err(nn)?;
    let mut model = TcnModel::new(job.tcn.clone(), job.seed).map_err(nn)?;
    let every = (job.training.epochs / 20).max(1);
    let outcome = train_adam_with(&mut model, &data, &job.training, |epoch, _, loss| {
        if epoch % every == 0 {
            log::debug!("epoch {epoch}: loss {:.4e}", loss.total);
        }
        true
    })
    .map_err(nn)?;
    let rse = match &d.b {
        Some(b) => {
            let scaled = scheme.scale_feature(&d.a, FEATURE_EPS).map_err(|e| Failure::Config(e.into()))?;
            let y = model.forward(&scaled).map_err(nn)?;
            let np = scaled.points();
            let mut out = Vec::with_capacity(scaled.increments());
            for t in 0..scaled.increments() {
                let mut pred = Vec::with_capacity(n_gp);
                for p in 0..n_gp {
                    pred.push(scheme.unscale_prediction(t, y[t * np + p]).map_err(|e| Failure::Config(e.into()))?);
                }
                out.push(rse(&pred, &b.column(t, 0)));
            }
            Some(out)
        }
        None => None,
    };
    Ok(TrainResult { model, scheme, history: outcome.history, final_loss: outcome.final_loss, rse })
}

#[derive(Serialize)]
struct LossRow {
    epoch: usize,
    total: f64,
    data: f64,
    pde: f64,
    bcs: f64,
}

#[derive(Serialize)]
struct RseRow {
    increment: usize,
    lf: f64,
    rse: f64,
}

fn worst(rse: &Option<Vec<f64>>) -> Option<f64> {
    rse.as_ref().map(|v| v.iter().cloned().fold(0.0, f64::max))
}

pub fn train(args: &Common, seed: Option<u64>) -> Result<PathBuf, Failure> {
    let (cfg, base): (TrainRunConfig, _) = load(&args.config)?;
    let index_path = resolve(&base, &cfg.datasets);
    let data = load_datasets(&index_path)?;
    let dir = output_dir(args.out.as_deref(), cfg.output.as_deref(), &base, "runs/train")?;
    let seed = seed.unwrap_or(cfg.seed);
    let job = TrainJob { data: &data, tcn: cfg.tcn.clone(), scaling: cfg.scaling.clone(), training: cfg.training.clone(), seed };
    let r = run_training(&job)?;

    write_csv(
        &dir.join("loss.csv"),
        r.history.iter().enumerate().map(|(i, l)| LossRow { epoch: i + 1, total: l.total, data: l.data, pde: l.pde, bcs: l.bcs }),
    )?;
    if let Some(v) = &r.rse {
        write_rse(&dir.join("rse.csv"), v, &data.index.loadfactors)?;
    }
    let meta = json!({
        "problem": data.index.problem,
        "mesh": data.index.mesh,
        "mesh_checksum": data.index.mesh_checksum,
        "seed": seed,
        "epochs": r.history.len(),
        "final_loss": r.final_loss.total,
    });
    let ckpt_path = dir.join("checkpoint.ckpt");
    write_checkpoint(&ckpt_path, &Checkpoint { model: r.model.clone(), scaling: r.scheme.clone(), meta }).map_err(nn)?;
    write_json(
        &dir.join("summary.json"),
        &json!({
            "seed": seed,
            "n_params": r.model.n_params(),
            "receptive_field": r.model.config.receptive_field(),
            "epochs": r.history.len(),
            "final_loss": r.final_loss,
            "max_rse": worst(&r.rse),
            "tcn": r.model.config,
            "scaling": r.scheme.config,
            "training": cfg.training,
        }),
    )?;
    log::info!("final loss {:.4e}", r.final_loss.total);
    Ok(dir)
}

fn write_rse(path: &Path, values: &[f64], lfs: &[f64]) -> Result<(), Failure> {
    write_csv(path, values.iter().zip(lfs).enumerate().map(|(t, (&rse, &lf))| RseRow { increment: t + 1, lf, rse }))
}

// ---------------------------------------------------------------------------
// solve

fn run_solver(cfg: &SolveRunConfig, base: &Path, spec: &ProblemSpec, model: &Model) -> Result<SolveHistory, (Failure, Option<SolveHistory>)> {
    let solver = cfg.solver.apply(spec).map_err(|f| (f, None))?;
    match cfg.method {
        Method::Monolithic | Method::Staggered => {
            let solver = fem::SolverConfig {
                scheme: if cfg.method == Method::Monolithic { fem::Scheme::Monolithic } else { fem::Scheme::Staggered },
                ..solver
            };
            fem::solve(model, &solver).map_err(|e| {
                let partial = e.partial_history().cloned();
                (fem(e), partial)
            })
        }
        Method::Ifenn => {
            let mut icfg = cfg.ifenn.clone();
            icfg.activation_increment = icfg.activation_increment.or(Some(spec.activation_increment));
            let icfg = icfg.apply(&solver).map_err(|f| (f, None))?;
            let path = cfg.checkpoint.as_ref().ok_or_else(|| (Failure::config("method `ifenn` needs a `checkpoint`"), None))?;
            let ckpt = read_checkpoint(&resolve(base, path)).map_err(|e| (nn(e), None))?;
            let coords = model.gps.iter().map(|g| g.coords).collect();
            let mut surrogate = TcnSurrogate::new(&ckpt, coords, solver.n_increments());
            solve_ifenn(model, &mut surrogate, &icfg).map_err(|e| {
                let partial = e.partial_history().cloned();
                (ifenn(e), partial)
            })
        }
    }
}

fn write_solve_outputs(dir: &Path, cfg: &SolveRunConfig, history: &SolveHistory, truth: Option<&Loaded>, model: &Model) -> Result<(), Failure> {
    write_reactions(&dir.join("reactions.csv"), history)?;
    let compact = compact_history(history, cfg.record_timings);
    write_iterations(&dir.join("iterations.csv"), &compact)?;
    write_json(&dir.join("history.json"), &compact)?;
    if let Some(t) = truth {
        let b = t.b.as_ref().ok_or_else(|| Failure::config("`truth` datasets have no Dataset B"))?;
        let n = history.records.len().min(b.increments());
        let values: Vec<f64> = (0..n).map(|i| rse(&history.records[i].gp.eps_bar, &b.column(i, 0))).collect();
        let lfs: Vec<f64> = history.records.iter().map(|r| r.lf).collect();
        write_rse(&dir.join("rse.csv"), &values, &lfs)?;
    }
    let snaps: Vec<usize> = cfg.snapshots.iter().copied().filter(|&s| s >= 1 && s <= history.records.len()).collect();
    if !snaps.is_empty() {
        let n_gp = model.n_gauss_points();
        let mut t = SequenceTensor::zeros(snaps.len(), n_gp, &["x", "y", "eps_eq", "eps_bar", "damage"]);
        for (k, &s) in snaps.iter().enumerate() {
            let gp = &history.records[s - 1].gp;
            for (p, g) in model.gps.iter().enumerate() {
                for (f, v) in [g.coords[0], g.coords[1], gp.eps_eq[p], gp.eps_bar[p], gp.damage[p]].into_iter().enumerate() {
                    t.set(k, p, f, v);
                }
            }
        }
        let path = dir.join("fields.tensor");
        write_tensor(&path, "fields", &t, &model.mesh.checksum(), json!({ "increments": snaps })).map_err(tensor_err(&path))?;
    }
    Ok(())
}

pub fn solve(args: &Common) -> Result<PathBuf, Failure> {
    let (cfg, base): (SolveRunConfig, _) = load(&args.config)?;
    let spec = cfg.problem.spec(&base)?;
    let role = if cfg.method == Method::Ifenn { MeshRole::Test } else { MeshRole::Train };
    let mesh_name = cfg.problem.mesh_name(&spec, role)?;
    let model = spec.model_for(&mesh_name).map_err(bench)?;
    let truth = match &cfg.truth {
        Some(p) => {
            let t = load_datasets(&resolve(&base, p))?;
            if t.index.mesh_checksum != model.mesh.checksum() {
                return Err(Failure::config(format!("`truth` datasets were generated on mesh {}, not {mesh_name}", t.index.mesh)));
            }
            Some(t)
        }
        None => None,
    };
    let dir = output_dir(args.out.as_deref(), cfg.output.as_deref(), &base, "runs/solve")?;
    let (history, failure) = match run_solver(&cfg, &base, &spec, &model) {
        Ok(h) => (h, None),
        Err((f, Some(partial))) => (partial, Some(f)),
        Err((f, None)) => return Err(f),
    };
    write_solve_outputs(&dir, &cfg, &history, truth.as_ref(), &model)?;
    let peak = history.last().map_or(0.0, |r| r.gp.damage.iter().cloned().fold(0.0, f64::max));
    let mut summary = json!({
        "problem": spec.name,
        "mesh": mesh_name,
        "method": cfg.method,
        "solver": history.solver,
        "system_rows": history.system_rows,
        "increments_planned": cfg.solver.apply(&spec)?.n_increments(),
        "increments_completed": history.records.len(),
        "completed": failure.is_none(),
        "total_iterations": history.records.iter().map(|r| r.iterations).sum::<usize>(),
        "final_reaction": history.last().map(|r| r.reaction),
        "peak_damage": peak,
    });
    if cfg.record_timings {
        summary["mean_solve_seconds"] = json!(history.mean_solve_seconds());
    }
    write_json(&dir.join("summary.json"), &summary)?;
    match failure {
        Some(f) => Err(f),
        None => Ok(dir),
    }
}

// ---------------------------------------------------------------------------
// compare

pub fn compare(run: &Path, reference: &Path, out: Option<&Path>) -> Result<PathBuf, Failure> {
    let a = read_history(run)?;
    let b = read_history(reference)?;
    let cmp = compare_runs(&a, &b).map_err(bench)?;
    let dir = output_dir(out, None, Path::new(""), "runs/compare")?;
    let csv_path = dir.join("comparison.csv");
    cmp.write_csv(&csv_path).map_err(io(&csv_path))?;
    write_json(&dir.join("comparison.json"), &cmp)?;
    log::info!(
        "max reaction deviation {:.3} %, iterations {} vs {}",
        cmp.max_reaction_deviation_pct,
        cmp.total_iterations_a,
        cmp.total_iterations_b
    );
    Ok(dir)
}

// ---------------------------------------------------------------------------
// sweep

#[derive(Serialize)]
struct SweepRow {
    rank: usize,
    candidate: usize,
    dil: usize,
    k_size: usize,
    num_filters: usize,
    n_params: usize,
    receptive_field: usize,
    final_loss: f64,
    max_rse: Option<f64>,
}

fn candidates(space: &SweepSpace, seed: u64) -> Result<Vec<(usize, usize, usize)>, Failure> {
    match space {
        SweepSpace::Grid { dil, k_size, num_filters } => {
            let mut out = Vec::new();
            for &d in dil {
                for &k in k_size {
                    for &f in num_filters {
                        out.push((d, k, f));
                    }
                }
            }
            if out.is_empty() {
                return Err(Failure::config("sweep grid is empty"));
            }
            Ok(out)
        }
        SweepSpace::Random { samples, dil, k_size, num_filters } => {
            for (name, r) in [("dil", dil), ("k_size", k_size), ("num_filters", num_filters)] {
                if r[0] > r[1] {
                    return Err(Failure::config(format!("sweep range {name} is reversed: {r:?}")));
                }
            }
            if *samples == 0 {
                return Err(Failure::config("sweep needs at least one sample"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok((0..*samples)
                .map(|_| (rng.random_range(dil[0]..=dil[1]), rng.random_range(k_size[0]..=k_size[1]), rng.random_range(num_filters[0]..=num_filters[1])))
                .collect())
        }
    }
}

pub fn sweep(args: &Common, seed: Option<u64>) -> Result<PathBuf, Failure> {
    let (cfg, base): (SweepRunConfig, _) = load(&args.config)?;
    let data = load_datasets(&resolve(&base, &cfg.datasets))?;
    let dir = output_dir(args.out.as_deref(), cfg.output.as_deref(), &base, "runs/sweep")?;
    let seed = seed.unwrap_or(cfg.seed);
    let list = candidates(&cfg.space, seed)?;
    let mut rows = Vec::with_capacity(list.len());
    for (i, &(dil, k_size, num_filters)) in list.iter().enumerate() {
        let tcn = TcnConfig { dil, k_size, num_filters, ..cfg.tcn.clone() };
        tcn.validate().map_err(|e| Failure::Config(anyhow!(e).context(format!("sweep candidate {i}"))))?;
        let job = TrainJob { data: &data, tcn, scaling: cfg.scaling.clone(), training: cfg.training.clone(), seed };
        let r = run_training(&job)?;
        log::info!("candidate {i}: dil {dil}, k_size {k_size}, num_filters {num_filters}: loss {:.4e}", r.final_loss.total);
        rows.push(SweepRow {
            rank: 0,
            candidate: i,
            dil,
            k_size,
            num_filters,
            n_params: r.model.n_params(),
            receptive_field: r.model.config.receptive_field(),
            final_loss: r.final_loss.total,
            max_rse: worst(&r.rse),
        });
    }
    rows.sort_by(|a, b| a.final_loss.total_cmp(&b.final_loss).then(a.candidate.cmp(&b.candidate)));
    for (rank, row) in rows.iter_mut().enumerate() {
        row.rank = rank + 1;
    }
    write_csv(&dir.join("sweep.csv"), &rows)?;
    Ok(dir)
}
