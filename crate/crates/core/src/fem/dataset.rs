//! Training datasets extracted from converged FEM histories.
//!
//! * A: `[T x (n_gp + n_boundary) x 4]` inputs `(x, y, ε_eq, lf)`, Gauss
//!   point rows first, then boundary-node rows.
//! * B: `[T x n_gp x 1]` nonlocal equivalent strain at the Gauss points.
//! * C: `[T x n_gp x 1]` Laplacian of the nodal nonlocal field at the Gauss
//!   points (quadratic elements only).

use super::{strain_at, FemError, Model, SolveHistory};
use crate::mesh::{ElementOrder, GaussPointData};
use crate::tensor::SequenceTensor;

pub const FEATURE_NAMES: [&str; 4] = ["x", "y", "eps_eq", "lf"];

#[derive(Clone, Debug, PartialEq)]
pub struct Datasets {
    pub a: SequenceTensor,
    pub b: SequenceTensor,
    pub c: Option<SequenceTensor>,
    pub n_gauss_points: usize,
    /// Boundary node ids behind the trailing rows of A.
    pub boundary_nodes: Vec<usize>,
    /// Outward unit normals of the boundary rows.
    pub boundary_normals: Vec<[f64; 2]>,
    pub loadfactors: Vec<f64>,
    pub mesh_checksum: String,
}

/// Local equivalent strain at every node, averaged over the elements that
/// share it (each evaluated at the node's natural coordinates).
pub fn nodal_equivalent_strain(model: &Model, u: &[f64]) -> Vec<f64> {
    let mesh = &model.mesh;
    let mut sum = vec![0.0; mesh.n_nodes()];
    let mut count = vec![0usize; mesh.n_nodes()];
    for (e, conn) in mesh.elements.iter().enumerate() {
        let coords: Vec<[f64; 2]> = conn.iter().map(|&n| mesh.nodes[n]).collect();
        let u_e = model.gather_u(e, u);
        for (a, &n) in conn.iter().enumerate() {
            let gp = GaussPointData::evaluate(e, mesh.order, &coords, crate::mesh::NODE_NATURAL_COORDS[a], 0.0);
            let (eq, _) = model.params.equivalent_strain(&strain_at(&gp, &u_e));
            sum[n] += eq;
            count[n] += 1;
        }
    }
    sum.iter().zip(&count).map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 }).collect()
}

/// Builds Datasets A, B and (when `with_c`) C from a converged history.
pub fn export_datasets(history: &SolveHistory, model: &Model, with_c: bool) -> Result<Datasets, FemError> {
    if with_c && model.mesh.order != ElementOrder::Quadratic {
        return Err(FemError::OrderMismatch(model.mesh.order));
    }
    let t_len = history.records.len();
    let n_gp = model.n_gauss_points();
    let boundary = model.mesh.boundary();
    let n_b = boundary.nodes.len();
    let mut a = SequenceTensor::zeros(t_len, n_gp + n_b, &FEATURE_NAMES);
    let mut b = SequenceTensor::zeros(t_len, n_gp, &["eps_bar"]);
    let mut c = with_c.then(|| SequenceTensor::zeros(t_len, n_gp, &["laplacian_eps_bar"]));
    let q = model.mesh.gauss_per_element();
    for (t, rec) in history.records.iter().enumerate() {
        for (p, gp) in model.gps.iter().enumerate() {
            a.set(t, p, 0, gp.coords[0]);
            a.set(t, p, 1, gp.coords[1]);
            a.set(t, p, 2, rec.gp.eps_eq[p]);
            a.set(t, p, 3, rec.lf);
            b.set(t, p, 0, rec.gp.eps_bar[p]);
        }
        let nodal_eq = nodal_equivalent_strain(model, &rec.state.u);
        for (k, &n) in boundary.nodes.iter().enumerate() {
            let row = n_gp + k;
            a.set(t, row, 0, model.mesh.nodes[n][0]);
            a.set(t, row, 1, model.mesh.nodes[n][1]);
            a.set(t, row, 2, nodal_eq[n]);
            a.set(t, row, 3, rec.lf);
        }
        if let Some(c) = c.as_mut() {
            for e in 0..model.mesh.n_elements() {
                let nodal = model.gather_nodal(e, &rec.state.eps_bar);
                for (k, gp) in model.element_gps(e).iter().enumerate() {
                    c.set(t, e * q + k, 0, gp.laplacian(&nodal)?);
                }
            }
        }
    }
    Ok(Datasets {
        a,
        b,
        c,
        n_gauss_points: n_gp,
        boundary_nodes: boundary.nodes.clone(),
        boundary_normals: boundary.normals.clone(),
        loadfactors: history.records.iter().map(|r| r.lf).collect(),
        mesh_checksum: model.mesh.checksum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{DofState, GpFields, IncrementRecord};
    use crate::material::MaterialParams;
    use crate::mesh::{build_structured_mesh, Domain};

    fn model(order: ElementOrder) -> Model {
        let mesh = build_structured_mesh(&Domain::new(0.0, 0.0, 4.0, 4.0), &[], 2.0, order).unwrap();
        Model::new(mesh, MaterialParams::default(), vec![], vec![]).unwrap()
    }

    fn history_with(model: &Model, eps_bar: Vec<f64>) -> SolveHistory {
        let mut state = DofState::zero(model);
        state.eps_bar = eps_bar;
        state.lf = 0.5;
        let record = IncrementRecord {
            increment: 1,
            lf: 0.5,
            reaction: 0.0,
            iterations: 1,
            final_ratio: 0.0,
            converged_residual_norm: 0.0,
            log: vec![],
            state,
            gp: GpFields { eps_eq: vec![0.0; model.n_gauss_points()], eps_bar: vec![0.0; model.n_gauss_points()], damage: vec![] },
        };
        SolveHistory { solver: "test".into(), system_rows: 0, records: vec![record] }
    }

    #[test]
    fn laplacian_of_quadratic_field_is_constant() {
        let m = model(ElementOrder::Quadratic);
        // ε̄ = 1e-4 (x² + 3 y² - x y + 2 x) has Laplacian 8e-4.
        let field: Vec<f64> = m.mesh.nodes.iter().map(|p| 1e-4 * (p[0] * p[0] + 3.0 * p[1] * p[1] - p[0] * p[1] + 2.0 * p[0])).collect();
        let ds = export_datasets(&history_with(&m, field), &m, true).unwrap();
        let c = ds.c.unwrap();
        for p in 0..c.points() {
            assert!((c.get(0, p, 0) - 8e-4).abs() < 1e-15);
        }
        assert_eq!(ds.a.shape(), [1, 36 + m.mesh.boundary().nodes.len(), 4]);
        assert_eq!(ds.a.get(0, 40, 3), 0.5);
    }

    #[test]
    fn dataset_c_needs_quadratic_elements() {
        let m = model(ElementOrder::Linear);
        let h = history_with(&m, vec![0.0; m.n_nodes()]);
        assert!(matches!(export_datasets(&h, &m, true), Err(FemError::OrderMismatch(ElementOrder::Linear))));
        assert!(export_datasets(&h, &m, false).unwrap().c.is_none());
    }

    #[test]
    fn nodal_strain_of_uniform_field() {
        let m = model(ElementOrder::Quadratic);
        let u: Vec<f64> = m.mesh.nodes.iter().flat_map(|p| [2e-4 * p[0], 0.0]).collect();
        for v in nodal_equivalent_strain(&m, &u) {
            assert!((v - 2e-4).abs() < 1e-16);
        }
    }
}
