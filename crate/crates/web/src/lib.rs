//! Browser bindings. Every export returns a JSON string so the page needs no
//! generated TypeScript types.

use ifenn_core::bench::{builtin_problem, MeshRecipe, MeshRole, Scale};
use ifenn_core::fem::solve_monolithic;
use ifenn_core::mesh::{shape_q8, tabulated_discrepancies, tabulated_q8_second_derivatives, ElementOrder};
use ifenn_core::nn::{TcnConfig, TcnModel, FEATURE_EPS, FEATURE_LF};
use ifenn_core::tensor::SequenceTensor;
use serde_json::json;
use wasm_bindgen::prelude::*;

fn error(msg: impl std::fmt::Display) -> String {
    json!({ "error": msg.to_string() }).to_string()
}

/// Analytic and tabulated Q8 second derivatives at `(xi, eta)`, plus the
/// table entries known to disagree with the analytic basis.
#[wasm_bindgen]
pub fn q8_second_derivatives(xi: f64, eta: f64) -> String {
    if !(-1.0..=1.0).contains(&xi) || !(-1.0..=1.0).contains(&eta) {
        return error("xi and eta must lie in [-1, 1]");
    }
    let discrepancies: Vec<String> = tabulated_discrepancies().iter().map(|d| d.to_string()).collect();
    json!({
        "analytic": shape_q8(xi, eta).d2n,
        "tabulated": tabulated_q8_second_derivatives(xi, eta),
        "discrepancies": discrepancies,
    })
    .to_string()
}

/// Monolithic solve of the single notch tension specimen on a structured
/// mesh. Returns the load-reaction curve and the final element damage.
#[wasm_bindgen]
pub fn solve_single_notch(elem_size: f64, quadratic: bool, increments: usize, lf_max: f64) -> String {
    if !(elem_size >= 2.5 && elem_size <= 25.0) {
        return error("element size must lie in [2.5, 25] mm");
    }
    if increments == 0 || increments > 200 || !(lf_max > 0.0 && lf_max <= 1.0) {
        return error("need 1..200 increments and 0 < lf_max <= 1");
    }
    let mut spec = match builtin_problem("snt", Scale::Desk) {
        Ok(s) => s,
        Err(e) => return error(e),
    };
    let order = if quadratic { ElementOrder::Quadratic } else { ElementOrder::Linear };
    spec.meshes = vec![MeshRecipe { name: "demo".into(), role: MeshRole::Train, elem_size: Some(elem_size), order: Some(order), file: None }];
    spec.schedule.lf_max = lf_max;
    spec.schedule.dlf = lf_max / increments as f64;
    let model = match spec.model_for("demo") {
        Ok(m) => m,
        Err(e) => return error(e),
    };
    let history = match solve_monolithic(&model, &spec.solver_config()) {
        Ok(h) => h,
        Err(e) => return error(e),
    };
    let q = model.mesh.gauss_per_element();
    let last = history.last().expect("at least one increment");
    let elements: Vec<_> = (0..model.mesh.n_elements())
        .map(|e| {
            let gps = model.element_gps(e);
            let cx = gps.iter().map(|g| g.coords[0]).sum::<f64>() / q as f64;
            let cy = gps.iter().map(|g| g.coords[1]).sum::<f64>() / q as f64;
            let d = last.gp.damage[e * q..(e + 1) * q].iter().sum::<f64>() / q as f64;
            [cx, cy, d]
        })
        .collect();
    json!({
        "width": spec.domain.width,
        "height": spec.domain.height,
        "elem_size": elem_size,
        "nodes": model.mesh.n_nodes(),
        "system_rows": history.system_rows,
        "lf": history.records.iter().map(|r| r.lf).collect::<Vec<_>>(),
        "reaction": history.records.iter().map(|r| r.reaction).collect::<Vec<_>>(),
        "iterations": history.records.iter().map(|r| r.iterations).collect::<Vec<_>>(),
        "elements": elements,
    })
    .to_string()
}

/// Causality of a randomly initialised TCN: perturbs the strain input at
/// one increment and reports the output change at every increment.
#[wasm_bindgen]
pub fn tcn_causality(dil: usize, k_size: usize, num_filters: usize, steps: usize, perturb_step: usize, seed: u32) -> String {
    let config = TcnConfig { dil, k_size, num_filters, ..TcnConfig::default() };
    let model = match TcnModel::new(config, seed as u64) {
        Ok(m) => m,
        Err(e) => return error(e),
    };
    if steps == 0 || steps > 500 || perturb_step >= steps {
        return error("need 1..500 increments and a perturbed increment below that");
    }
    let mut seq = SequenceTensor::zeros(steps, 1, &["x", "y", "eps_eq", "lf"]);
    for t in 0..steps {
        let lf = (t + 1) as f64 / steps as f64;
        seq.set(t, 0, 0, 0.5);
        seq.set(t, 0, 1, 0.5);
        seq.set(t, 0, FEATURE_EPS, lf);
        seq.set(t, 0, FEATURE_LF, lf);
    }
    let base = match model.forward(&seq) {
        Ok(y) => y,
        Err(e) => return error(e),
    };
    seq.set(perturb_step, 0, FEATURE_EPS, seq.get(perturb_step, 0, FEATURE_EPS) + 0.1);
    let moved = model.forward(&seq).expect("same shape as the first pass");
    let change: Vec<f64> = base.iter().zip(&moved).map(|(a, b)| (b - a).abs()).collect();
    json!({
        "n_params": model.n_params(),
        "receptive_field": model.config.receptive_field(),
        "output": base,
        "change": change,
    })
    .to_string()
}
