//! Isoparametric shape functions on the reference square `[-1, 1]^2`.
//!
//! Local node numbering: corners 1-4 counterclockwise from the lower-left
//! corner, then (Q8 only) mid-side nodes 5-8 on the bottom, right, top and
//! left edges. Second-derivative columns are ordered `(ξξ, ηη, ξη)`.

use std::sync::Once;

/// Natural coordinates of the Q8 nodes; the first four are the Q4 nodes.
pub const NODE_NATURAL_COORDS: [[f64; 2]; 8] = [
    [-1.0, -1.0],
    [1.0, -1.0],
    [1.0, 1.0],
    [-1.0, 1.0],
    [0.0, -1.0],
    [1.0, 0.0],
    [0.0, 1.0],
    [-1.0, 0.0],
];

/// Shape function values and derivatives at one point of the reference square.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeEval {
    pub n: Vec<f64>,
    /// `[∂N/∂ξ, ∂N/∂η]` per node.
    pub dn: Vec<[f64; 2]>,
    /// `[∂²N/∂ξ², ∂²N/∂η², ∂²N/∂ξ∂η]` per node.
    pub d2n: Vec<[f64; 3]>,
}

/// Bilinear four-node basis.
pub fn shape_q4(xi: f64, eta: f64) -> ShapeEval {
    let mut n = Vec::with_capacity(4);
    let mut dn = Vec::with_capacity(4);
    let mut d2n = Vec::with_capacity(4);
    for &[xa, ea] in &NODE_NATURAL_COORDS[..4] {
        let fx = 1.0 + xa * xi;
        let fe = 1.0 + ea * eta;
        n.push(0.25 * fx * fe);
        dn.push([0.25 * xa * fe, 0.25 * ea * fx]);
        d2n.push([0.0, 0.0, 0.25 * xa * ea]);
    }
    ShapeEval { n, dn, d2n }
}

/// Eight-node serendipity basis with analytic first and second derivatives.
pub fn shape_q8(xi: f64, eta: f64) -> ShapeEval {
    let mut n = Vec::with_capacity(8);
    let mut dn = Vec::with_capacity(8);
    let mut d2n = Vec::with_capacity(8);
    for &[xa, ea] in &NODE_NATURAL_COORDS[..4] {
        let fx = 1.0 + xa * xi;
        let fe = 1.0 + ea * eta;
        let s = xa * xi + ea * eta - 1.0;
        n.push(0.25 * fx * fe * s);
        dn.push([
            0.25 * xa * fe * (2.0 * xa * xi + ea * eta),
            0.25 * ea * fx * (xa * xi + 2.0 * ea * eta),
        ]);
        d2n.push([
            0.5 * fe,
            0.5 * fx,
            0.25 * xa * ea * (2.0 * xa * xi + 2.0 * ea * eta + 1.0),
        ]);
    }
    for &[xa, ea] in &NODE_NATURAL_COORDS[4..] {
        if xa == 0.0 {
            let fe = 1.0 + ea * eta;
            n.push(0.5 * (1.0 - xi * xi) * fe);
            dn.push([-xi * fe, 0.5 * ea * (1.0 - xi * xi)]);
            d2n.push([-fe, 0.0, -xi * ea]);
        } else {
            let fx = 1.0 + xa * xi;
            n.push(0.5 * fx * (1.0 - eta * eta));
            dn.push([0.5 * xa * (1.0 - eta * eta), -eta * fx]);
            d2n.push([0.0, -fx, -eta * xa]);
        }
    }
    ShapeEval { n, dn, d2n }
}

/// Second derivatives of the Q8 basis exactly as they appear in the commonly
/// circulated closed-form table for the serendipity element. The node-7
/// `∂²N/∂ξ²` entry of that table reads `-1 - 2η`; it is kept verbatim here so
/// that [`tabulated_discrepancies`] can flag it.
pub fn tabulated_q8_second_derivatives(xi: f64, eta: f64) -> [[f64; 3]; 8] {
    [
        [(1.0 - eta) / 2.0, (1.0 - xi) / 2.0, (1.0 - 2.0 * xi - 2.0 * eta) / 4.0],
        [(1.0 - eta) / 2.0, (1.0 + xi) / 2.0, (2.0 * eta - 2.0 * xi - 1.0) / 4.0],
        [(1.0 + eta) / 2.0, (1.0 + xi) / 2.0, (1.0 + 2.0 * xi + 2.0 * eta) / 4.0],
        [(1.0 + eta) / 2.0, (1.0 - xi) / 2.0, (2.0 * xi - 2.0 * eta - 1.0) / 4.0],
        [eta - 1.0, 0.0, xi],
        [0.0, -xi - 1.0, -eta],
        [-1.0 - 2.0 * eta, 0.0, -xi],
        [0.0, xi - 1.0, eta],
    ]
}

/// One disagreeing entry of the tabulated second derivatives.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TableDiscrepancy {
    /// One-based local node number.
    pub node: usize,
    /// Column index into `(ξξ, ηη, ξη)`.
    pub component: usize,
}

impl std::fmt::Display for TableDiscrepancy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = ["d2N/dxi2", "d2N/deta2", "d2N/dxideta"][self.component];
        write!(f, "node {} {}", self.node, name)
    }
}

/// Compares the tabulated second derivatives against the analytic ones on a
/// 5x5 sample grid and returns every entry that disagrees anywhere.
pub fn tabulated_discrepancies() -> Vec<TableDiscrepancy> {
    let samples = [-1.0, -0.5, 0.0, 0.5, 1.0];
    let mut out = Vec::new();
    for node in 0..8 {
        for component in 0..3 {
            let disagrees = samples.iter().any(|&xi| {
                samples.iter().any(|&eta| {
                    let table = tabulated_q8_second_derivatives(xi, eta)[node][component];
                    let exact = shape_q8(xi, eta).d2n[node][component];
                    (table - exact).abs() > 1e-12
                })
            });
            if disagrees {
                out.push(TableDiscrepancy { node: node + 1, component });
            }
        }
    }
    out
}

static TABLE_CHECK: Once = Once::new();

/// Emits one warning per disagreeing tabulated entry, once per process.
pub(crate) fn warn_tabulated_discrepancies() {
    TABLE_CHECK.call_once(|| {
        for d in tabulated_discrepancies() {
            log::warn!("tabulated Q8 second derivative disagrees with the analytic value ({d}); using the analytic value");
        }
    });
}
