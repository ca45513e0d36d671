//! Quadrilateral meshes, Gauss point data and the shape-function route to
//! physical second derivatives.

mod file;
mod quadrature;
mod shape;
mod structured;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

pub use file::{read_mesh_file, write_mesh_file, MeshFile, MESH_FILE_VERSION};
pub use quadrature::{gauss_legendre, square_rule};
pub use shape::{
    shape_q4, shape_q8, tabulated_discrepancies, tabulated_q8_second_derivatives, ShapeEval,
    TableDiscrepancy, NODE_NATURAL_COORDS,
};
pub use structured::{build_structured_mesh, Domain, Notch};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MeshError {
    #[error("element size {elem_size} does not divide the domain dimension {length}")]
    NonDivisible { elem_size: f64, length: f64 },
    #[error("notch {index} is not aligned with the element grid: {reason}")]
    MisalignedNotch { index: usize, reason: String },
    #[error("element {element} references node {node}, but the mesh has {n_nodes} nodes")]
    NodeOutOfRange { element: usize, node: usize, n_nodes: usize },
    #[error("element {element} has {found} nodes, expected {expected}")]
    WrongNodeCount { element: usize, found: usize, expected: usize },
    #[error("element {element} has a non-positive Jacobian determinant ({det:e}) at Gauss point {point}")]
    InvertedElement { element: usize, point: usize, det: f64 },
    #[error("unsupported element order {0} (expected 1 or 2)")]
    UnsupportedOrder(u8),
    #[error("unsupported Gauss rule with {0} points per direction")]
    UnsupportedGaussRule(usize),
    #[error("boundary set '{name}' has a non-unit normal at node {node}")]
    BadNormal { name: String, node: usize },
    #[error("singular geometry: the second-derivative system is rank deficient (det {0:e})")]
    SingularGeometry(f64),
    #[error("mesh file: {0}")]
    File(String),
}

/// Polynomial order of the quadrilateral elements.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum ElementOrder {
    /// Four-node bilinear (Q4).
    Linear,
    /// Eight-node serendipity (Q8).
    Quadratic,
}

impl ElementOrder {
    pub fn nodes_per_element(self) -> usize {
        match self {
            ElementOrder::Linear => 4,
            ElementOrder::Quadratic => 8,
        }
    }

    /// Default Gauss points per direction: 2x2 for Q4, 3x3 for Q8.
    pub fn default_gauss_rule(self) -> usize {
        match self {
            ElementOrder::Linear => 2,
            ElementOrder::Quadratic => 3,
        }
    }

    pub fn shape(self, xi: f64, eta: f64) -> ShapeEval {
        match self {
            ElementOrder::Linear => shape_q4(xi, eta),
            ElementOrder::Quadratic => shape_q8(xi, eta),
        }
    }
}

impl TryFrom<u8> for ElementOrder {
    type Error = MeshError;
    fn try_from(v: u8) -> Result<Self, MeshError> {
        match v {
            1 => Ok(ElementOrder::Linear),
            2 => Ok(ElementOrder::Quadratic),
            other => Err(MeshError::UnsupportedOrder(other)),
        }
    }
}

impl From<ElementOrder> for u8 {
    fn from(o: ElementOrder) -> u8 {
        match o {
            ElementOrder::Linear => 1,
            ElementOrder::Quadratic => 2,
        }
    }
}

impl std::fmt::Display for ElementOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ElementOrder::Linear => f.write_str("Q4"),
            ElementOrder::Quadratic => f.write_str("Q8"),
        }
    }
}

/// Named list of boundary nodes with the outward unit normal at each node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundarySet {
    pub name: String,
    pub nodes: Vec<usize>,
    pub normals: Vec<[f64; 2]>,
}

/// Name of the boundary set holding every boundary node (outer edges and
/// notch faces) with its averaged outward normal.
pub const ALL_BOUNDARY: &str = "boundary";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    /// Node coordinates in mm.
    pub nodes: Vec<[f64; 2]>,
    /// Connectivity in local node order (corners counterclockwise, then mid-sides).
    pub elements: Vec<Vec<usize>>,
    pub order: ElementOrder,
    /// Gauss points per direction.
    pub gauss_rule: usize,
    pub boundary_sets: Vec<BoundarySet>,
}

impl Mesh {
    /// Validates connectivity and fills in the generic boundary set when it
    /// is missing.
    pub fn new(
        nodes: Vec<[f64; 2]>,
        elements: Vec<Vec<usize>>,
        order: ElementOrder,
        gauss_rule: usize,
        mut boundary_sets: Vec<BoundarySet>,
    ) -> Result<Self, MeshError> {
        if square_rule(gauss_rule).is_none() {
            return Err(MeshError::UnsupportedGaussRule(gauss_rule));
        }
        let npe = order.nodes_per_element();
        for (e, conn) in elements.iter().enumerate() {
            if conn.len() != npe {
                return Err(MeshError::WrongNodeCount { element: e, found: conn.len(), expected: npe });
            }
            if let Some(&node) = conn.iter().find(|&&n| n >= nodes.len()) {
                return Err(MeshError::NodeOutOfRange { element: e, node, n_nodes: nodes.len() });
            }
        }
        for set in &boundary_sets {
            for (node, nrm) in set.nodes.iter().zip(&set.normals) {
                if ((nrm[0] * nrm[0] + nrm[1] * nrm[1]).sqrt() - 1.0).abs() > 1e-9 || *node >= nodes.len() {
                    return Err(MeshError::BadNormal { name: set.name.clone(), node: *node });
                }
            }
        }
        if !boundary_sets.iter().any(|s| s.name == ALL_BOUNDARY) {
            let generic = detect_boundary(&nodes, &elements, order);
            boundary_sets.push(generic);
        }
        Ok(Mesh { nodes, elements, order, gauss_rule, boundary_sets })
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn gauss_per_element(&self) -> usize {
        self.gauss_rule * self.gauss_rule
    }

    pub fn n_gauss_points(&self) -> usize {
        self.n_elements() * self.gauss_per_element()
    }

    pub fn boundary_set(&self, name: &str) -> Option<&BoundarySet> {
        self.boundary_sets.iter().find(|s| s.name == name)
    }

    /// Every boundary node with its outward normal.
    pub fn boundary(&self) -> &BoundarySet {
        self.boundary_set(ALL_BOUNDARY).expect("mesh always carries the generic boundary set")
    }

    /// Axis-aligned bounding box `([xmin, ymin], [xmax, ymax])`.
    pub fn bounding_box(&self) -> ([f64; 2], [f64; 2]) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &self.nodes {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }

    /// Precomputes shape data at every Gauss point, element-major and
    /// row-major within each element. Fails on inverted or degenerate
    /// elements.
    pub fn integration_points(&self) -> Result<Vec<GaussPointData>, MeshError> {
        if self.order == ElementOrder::Quadratic {
            shape::warn_tabulated_discrepancies();
        }
        let rule = square_rule(self.gauss_rule).ok_or(MeshError::UnsupportedGaussRule(self.gauss_rule))?;
        let mut out = Vec::with_capacity(self.n_gauss_points());
        for (e, conn) in self.elements.iter().enumerate() {
            let coords: Vec<[f64; 2]> = conn.iter().map(|&n| self.nodes[n]).collect();
            for (q, &(natural, weight)) in rule.iter().enumerate() {
                let gp = GaussPointData::evaluate(e, self.order, &coords, natural, weight);
                if !(gp.det_j > 0.0) {
                    return Err(MeshError::InvertedElement { element: e, point: q, det: gp.det_j });
                }
                out.push(gp);
            }
        }
        Ok(out)
    }

    /// SHA-256 of the canonical binary layout (order, rule, coordinates,
    /// connectivity), hex encoded.
    pub fn checksum(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update([u8::from(self.order), self.gauss_rule as u8]);
        for p in &self.nodes {
            h.update(p[0].to_le_bytes());
            h.update(p[1].to_le_bytes());
        }
        for conn in &self.elements {
            for &n in conn {
                h.update((n as u64).to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// Natural coordinates of every (element, local node) incidence of each
    /// node; used to evaluate element fields at nodes.
    pub fn node_incidences(&self) -> Vec<Vec<(usize, [f64; 2])>> {
        let mut out = vec![Vec::new(); self.n_nodes()];
        for (e, conn) in self.elements.iter().enumerate() {
            for (a, &n) in conn.iter().enumerate() {
                out[n].push((e, NODE_NATURAL_COORDS[a]));
            }
        }
        out
    }
}

/// Shape data at one Gauss point.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussPointData {
    pub element: usize,
    pub natural: [f64; 2],
    pub weight: f64,
    /// Physical coordinates in mm.
    pub coords: [f64; 2],
    pub n: Vec<f64>,
    /// `[∂N/∂ξ, ∂N/∂η]` per node.
    pub dn_natural: Vec<[f64; 2]>,
    /// `[∂²N/∂ξ², ∂²N/∂η², ∂²N/∂ξ∂η]` per node.
    pub d2n_natural: Vec<[f64; 3]>,
    /// `[[x_ξ, y_ξ], [x_η, y_η]]`.
    pub jacobian: [[f64; 2]; 2],
    pub inv_jacobian: [[f64; 2]; 2],
    pub det_j: f64,
    /// `[∂N/∂x, ∂N/∂y]` per node.
    pub dn_physical: Vec<[f64; 2]>,
    /// Second derivatives of the geometry map, `[[x_ξξ, x_ηη, x_ξη], [y_ξξ, y_ηη, y_ξη]]`.
    pub coord_hessian: [[f64; 3]; 2],
}

impl GaussPointData {
    /// Evaluates shape data at natural coordinates `natural` of an element
    /// with nodal coordinates `coords`. `weight` is the bare quadrature weight.
    pub fn evaluate(element: usize, order: ElementOrder, coords: &[[f64; 2]], natural: [f64; 2], weight: f64) -> Self {
        let ShapeEval { n, dn, d2n } = order.shape(natural[0], natural[1]);
        let mut jac = [[0.0; 2]; 2];
        let mut hess = [[0.0; 3]; 2];
        let mut xy = [0.0; 2];
        for (a, p) in coords.iter().enumerate() {
            for k in 0..2 {
                xy[k] += n[a] * p[k];
                jac[0][k] += dn[a][0] * p[k];
                jac[1][k] += dn[a][1] * p[k];
                for c in 0..3 {
                    hess[k][c] += d2n[a][c] * p[k];
                }
            }
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let inv = [[jac[1][1] / det, -jac[0][1] / det], [-jac[1][0] / det, jac[0][0] / det]];
        let dn_physical = dn
            .iter()
            .map(|d| [inv[0][0] * d[0] + inv[0][1] * d[1], inv[1][0] * d[0] + inv[1][1] * d[1]])
            .collect();
        GaussPointData {
            element,
            natural,
            weight,
            coords: xy,
            n,
            dn_natural: dn,
            d2n_natural: d2n,
            jacobian: jac,
            inv_jacobian: inv,
            det_j: det,
            dn_physical,
            coord_hessian: hess,
        }
    }

    /// Integration weight including the Jacobian determinant (unit thickness).
    pub fn dv(&self) -> f64 {
        self.weight * self.det_j
    }

    pub fn interpolate(&self, nodal: &[f64]) -> f64 {
        self.n.iter().zip(nodal).map(|(n, v)| n * v).sum()
    }

    /// `[∂f/∂x, ∂f/∂y]` of the interpolated nodal field.
    pub fn gradient(&self, nodal: &[f64]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for (d, v) in self.dn_physical.iter().zip(nodal) {
            g[0] += d[0] * v;
            g[1] += d[1] * v;
        }
        g
    }

    /// `[f_ξξ, f_ηη, f_ξη]` of the interpolated nodal field.
    pub fn natural_second_derivatives(&self, nodal: &[f64]) -> [f64; 3] {
        let mut s = [0.0; 3];
        for (d, v) in self.d2n_natural.iter().zip(nodal) {
            for c in 0..3 {
                s[c] += d[c] * v;
            }
        }
        s
    }

    /// `[f_xx, f_yy, f_xy]` of the interpolated nodal field.
    pub fn hessian(&self, nodal: &[f64]) -> Result<[f64; 3], MeshError> {
        second_derivatives_physical(self, self.gradient(nodal), self.natural_second_derivatives(nodal))
    }

    pub fn laplacian(&self, nodal: &[f64]) -> Result<f64, MeshError> {
        let h = self.hessian(nodal)?;
        Ok(h[0] + h[1])
    }
}

/// Recovers `[f_xx, f_yy, f_xy]` from the physical first derivatives and the
/// natural second derivatives of a scalar field by solving the 3x3 system
/// obtained from differentiating the isoparametric map twice.
pub fn second_derivatives_physical(
    gp: &GaussPointData,
    first: [f64; 2],
    natural_second: [f64; 3],
) -> Result<[f64; 3], MeshError> {
    let [[x_xi, y_xi], [x_eta, y_eta]] = gp.jacobian;
    let a = Matrix3::new(
        x_xi * x_xi,
        y_xi * y_xi,
        2.0 * x_xi * y_xi,
        x_eta * x_eta,
        y_eta * y_eta,
        2.0 * x_eta * y_eta,
        x_xi * x_eta,
        y_xi * y_eta,
        x_xi * y_eta + x_eta * y_xi,
    );
    let [hx, hy] = gp.coord_hessian;
    let rhs = Vector3::from_fn(|c, _| natural_second[c] - first[0] * hx[c] - first[1] * hy[c]);
    let det = a.determinant();
    let scale = a.abs().max().powi(3);
    if !(det.abs() > 1e-13 * scale) {
        return Err(MeshError::SingularGeometry(det));
    }
    let sol = a.lu().solve(&rhs).ok_or(MeshError::SingularGeometry(det))?;
    Ok([sol[0], sol[1], sol[2]])
}

/// Finds boundary edges (edges owned by a single element) and assigns each
/// boundary node the normalized sum of its edges' outward normals. At a slit
/// tip the two face normals cancel; the node then points back along the slit.
fn detect_boundary(nodes: &[[f64; 2]], elements: &[Vec<usize>], order: ElementOrder) -> BoundarySet {
    use std::collections::BTreeMap;
    let mut edges: BTreeMap<(usize, usize), (usize, usize, Option<usize>, usize)> = BTreeMap::new();
    for conn in elements {
        for k in 0..4 {
            let a = conn[k];
            let b = conn[(k + 1) % 4];
            let mid = (order == ElementOrder::Quadratic).then(|| conn[4 + k]);
            let key = (a.min(b), a.max(b));
            edges.entry(key).and_modify(|e| e.3 += 1).or_insert((a, b, mid, 1));
        }
    }
    let mut normal_sum: BTreeMap<usize, [f64; 2]> = BTreeMap::new();
    let mut neighbours: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &(a, b, mid, count) in edges.values() {
        if count != 1 {
            continue;
        }
        let (pa, pb) = (nodes[a], nodes[b]);
        let (dx, dy) = (pb[0] - pa[0], pb[1] - pa[1]);
        let len = (dx * dx + dy * dy).sqrt();
        let nrm = [dy / len, -dx / len];
        for n in [Some(a), Some(b), mid].into_iter().flatten() {
            let s = normal_sum.entry(n).or_insert([0.0; 2]);
            s[0] += nrm[0];
            s[1] += nrm[1];
        }
        neighbours.entry(a).or_default().push(b);
        neighbours.entry(b).or_default().push(a);
    }
    let mut set = BoundarySet { name: ALL_BOUNDARY.to_string(), nodes: Vec::new(), normals: Vec::new() };
    for (node, s) in normal_sum {
        let len = (s[0] * s[0] + s[1] * s[1]).sqrt();
        let nrm = if len > 1e-9 {
            [s[0] / len, s[1] / len]
        } else {
            let p = nodes[node];
            let mut d = [0.0; 2];
            for &m in neighbours.get(&node).map(Vec::as_slice).unwrap_or(&[]) {
                d[0] += nodes[m][0] - p[0];
                d[1] += nodes[m][1] - p[1];
            }
            let l = (d[0] * d[0] + d[1] * d[1]).sqrt();
            if l < 1e-12 {
                continue;
            }
            [d[0] / l, d[1] / l]
        };
        set.nodes.push(node);
        set.normals.push(nrm);
    }
    set
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn square(order: ElementOrder, size: f64) -> Mesh {
        build_structured_mesh(&Domain::new(0.0, 0.0, size, size), &[], size, order).unwrap()
    }

    #[test]
    fn x_squared_on_square_element() {
        let mesh = square(ElementOrder::Quadratic, 2.0);
        let gps = mesh.integration_points().unwrap();
        let conn = &mesh.elements[0];
        let f: Vec<f64> = conn.iter().map(|&n| mesh.nodes[n][0].powi(2)).collect();
        for gp in &gps {
            let h = gp.hessian(&f).unwrap();
            assert_abs_diff_eq!(h[0], 2.0, epsilon = 1e-12);
            assert_abs_diff_eq!(h[1], 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(h[2], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn xy_on_square_element() {
        let mesh = square(ElementOrder::Quadratic, 3.0);
        let gps = mesh.integration_points().unwrap();
        let f: Vec<f64> = mesh.elements[0].iter().map(|&n| mesh.nodes[n][0] * mesh.nodes[n][1]).collect();
        for gp in &gps {
            let h = gp.hessian(&f).unwrap();
            assert_abs_diff_eq!(h[0], 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(h[1], 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(h[2], 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn linear_field_has_zero_hessian_on_any_element() {
        let coords = [[0.0, 0.0], [2.2, 0.3], [2.5, 1.9], [-0.2, 2.1], [1.1, 0.1], [2.4, 1.0], [1.2, 2.2], [-0.1, 1.0]];
        let f: Vec<f64> = coords.iter().map(|p| 3.0 * p[0] - 1.5 * p[1] + 0.7).collect();
        for ([xi, eta], w) in square_rule(3).unwrap() {
            let gp = GaussPointData::evaluate(0, ElementOrder::Quadratic, &coords, [xi, eta], w);
            let g = gp.gradient(&f);
            assert_abs_diff_eq!(g[0], 3.0, epsilon = 1e-12);
            assert_abs_diff_eq!(g[1], -1.5, epsilon = 1e-12);
            for v in gp.hessian(&f).unwrap() {
                assert_abs_diff_eq!(v, 0.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn degenerate_element_is_singular() {
        let coords = [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]];
        let gp = GaussPointData::evaluate(0, ElementOrder::Linear, &coords, [0.0, 0.0], 4.0);
        assert!(matches!(second_derivatives_physical(&gp, [0.0; 2], [0.0; 3]), Err(MeshError::SingularGeometry(_))));
    }

    #[test]
    fn inverted_element_is_rejected() {
        let mesh = Mesh::new(
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            vec![vec![0, 3, 2, 1]],
            ElementOrder::Linear,
            2,
            vec![],
        )
        .unwrap();
        assert!(matches!(mesh.integration_points(), Err(MeshError::InvertedElement { .. })));
    }

    #[test]
    fn connectivity_is_checked() {
        let err = Mesh::new(vec![[0.0, 0.0]; 3], vec![vec![0, 1, 2, 3]], ElementOrder::Linear, 2, vec![]);
        assert!(matches!(err, Err(MeshError::NodeOutOfRange { node: 3, .. })));
    }

    #[test]
    fn boundary_normals_of_single_square() {
        let mesh = square(ElementOrder::Linear, 1.0);
        let b = mesh.boundary();
        assert_eq!(b.nodes.len(), 4);
        let s = 0.5f64.sqrt();
        assert_abs_diff_eq!(b.normals[0][0], -s, epsilon = 1e-12);
        assert_abs_diff_eq!(b.normals[0][1], -s, epsilon = 1e-12);
    }

    type Poly = fn(f64, f64) -> [f64; 6];

    // Value, x, y, xx, yy, xy derivatives of the reproduced monomials.
    const QUADRATICS: [Poly; 6] = [
        |_, _| [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        |x, _| [x, 1.0, 0.0, 0.0, 0.0, 0.0],
        |_, y| [y, 0.0, 1.0, 0.0, 0.0, 0.0],
        |x, y| [x * y, y, x, 0.0, 0.0, 1.0],
        |x, _| [x * x, 2.0 * x, 0.0, 2.0, 0.0, 0.0],
        |_, y| [y * y, 0.0, 2.0 * y, 0.0, 2.0, 0.0],
    ];
    const CUBICS: [Poly; 2] =
        [|x, y| [x * x * y, 2.0 * x * y, x * x, 2.0 * y, 0.0, 2.0 * x], |x, y| [x * y * y, y * y, 2.0 * x * y, 0.0, 2.0 * x, 2.0 * y]];

    fn check_reproduction(coords: &[[f64; 2]], fields: &[Poly]) -> Result<(), String> {
        for f in fields {
            let nodal: Vec<f64> = coords.iter().map(|p| f(p[0], p[1])[0]).collect();
            for ([xi, eta], w) in square_rule(3).unwrap() {
                let gp = GaussPointData::evaluate(0, ElementOrder::Quadratic, coords, [xi, eta], w);
                let exact = f(gp.coords[0], gp.coords[1]);
                let g = gp.gradient(&nodal);
                let h = gp.hessian(&nodal).map_err(|e| e.to_string())?;
                let got = [gp.interpolate(&nodal), g[0], g[1], h[0], h[1], h[2]];
                let scale = exact.iter().fold(1.0f64, |m, v| m.max(v.abs()));
                for (a, b) in got.iter().zip(exact) {
                    if (a - b).abs() > 1e-10 * scale {
                        return Err(format!("{a} vs {b} at ({xi}, {eta})"));
                    }
                }
            }
        }
        Ok(())
    }

    fn reference_q8(scale: [f64; 2], offset: [f64; 2]) -> Vec<[f64; 2]> {
        NODE_NATURAL_COORDS.iter().map(|p| [offset[0] + scale[0] * (p[0] + 1.0), offset[1] + scale[1] * (p[1] + 1.0)]).collect()
    }

    proptest::proptest! {
        #[test]
        fn q8_reproduces_quadratics_under_affine_distortion(
            a in -0.2f64..0.2, b in -0.2f64..0.2, c in -0.2f64..0.2, d in -0.2f64..0.2,
            ox in -5.0f64..5.0, oy in -5.0f64..5.0, s in 0.5f64..4.0,
        ) {
            let coords: Vec<[f64; 2]> = reference_q8([s, s], [0.0, 0.0])
                .iter()
                .map(|p| [ox + p[0] + a * p[0] + b * p[1], oy + p[1] + c * p[0] + d * p[1]])
                .collect();
            proptest::prop_assert!(check_reproduction(&coords, &QUADRATICS).is_ok());
        }

        #[test]
        fn q8_reproduces_cubic_serendipity_terms_on_rectangles(
            sx in 0.3f64..3.0, sy in 0.3f64..3.0, ox in -3.0f64..3.0, oy in -3.0f64..3.0,
        ) {
            let coords = reference_q8([sx, sy], [ox, oy]);
            let all: Vec<Poly> = QUADRATICS.iter().chain(&CUBICS).copied().collect();
            let r = check_reproduction(&coords, &all);
            proptest::prop_assert!(r.is_ok(), "{:?}", r);
        }
    }

    #[test]
    fn element_area_from_quadrature() {
        let mesh = build_structured_mesh(&Domain::new(0.0, 0.0, 10.0, 6.0), &[], 2.0, ElementOrder::Quadratic).unwrap();
        let area: f64 = mesh.integration_points().unwrap().iter().map(GaussPointData::dv).sum();
        assert_abs_diff_eq!(area, 60.0, epsilon = 1e-10);
    }
}
