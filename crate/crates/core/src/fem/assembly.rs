//! Free-DOF sparse systems with a precomputed element scatter map.

use crate::linalg::{Factorization, LinalgError, LuSolver, SparseMatrix, SparsePattern};

const SKIP: usize = usize::MAX;

/// The free-free part of a global matrix whose sparsity is fixed by the
/// element DOF lists. Element contributions are added in element order, so
/// the assembled values do not depend on the global DOF numbering beyond
/// floating-point summation order within each entry.
pub struct ReducedSystem {
    free_index: Vec<usize>,
    free_dofs: Vec<usize>,
    pattern: SparsePattern,
    /// Per element, row-major `nd x nd` value positions (`SKIP` for
    /// constrained rows or columns).
    positions: Vec<Vec<usize>>,
    solver: LuSolver,
}

impl ReducedSystem {
    /// `elem_dofs[e]` lists the global DOFs of element `e` in local order;
    /// `constrained[dof]` marks essential DOFs.
    pub fn new(elem_dofs: &[Vec<usize>], constrained: &[bool]) -> Result<Self, LinalgError> {
        let mut free_index = vec![SKIP; constrained.len()];
        let mut free_dofs = Vec::new();
        for (dof, &c) in constrained.iter().enumerate() {
            if !c {
                free_index[dof] = free_dofs.len();
                free_dofs.push(dof);
            }
        }
        let entries = elem_dofs.iter().flat_map(|dofs| {
            let free: Vec<usize> = dofs.iter().map(|&d| free_index[d]).filter(|&f| f != SKIP).collect();
            let pairs: Vec<(usize, usize)> = free.iter().flat_map(|&r| free.iter().map(move |&c| (r, c))).collect();
            pairs
        });
        let pattern = SparsePattern::from_entries(free_dofs.len(), entries);
        let positions = elem_dofs
            .iter()
            .map(|dofs| {
                let mut pos = Vec::with_capacity(dofs.len() * dofs.len());
                for &r in dofs {
                    for &c in dofs {
                        let (fr, fc) = (free_index[r], free_index[c]);
                        pos.push(if fr == SKIP || fc == SKIP { SKIP } else { pattern.position(fr, fc).expect("entry in pattern") });
                    }
                }
                pos
            })
            .collect();
        let solver = LuSolver::new(&pattern)?;
        Ok(ReducedSystem { free_index, free_dofs, pattern, positions, solver })
    }

    pub fn n_free(&self) -> usize {
        self.free_dofs.len()
    }

    pub fn free_dofs(&self) -> &[usize] {
        &self.free_dofs
    }

    pub fn pattern(&self) -> &SparsePattern {
        &self.pattern
    }

    pub fn zeros(&self) -> SparseMatrix {
        SparseMatrix::zeros(&self.pattern)
    }

    /// Adds a dense row-major element matrix in the element's local DOF order.
    pub fn add_element(&self, matrix: &mut SparseMatrix, element: usize, local: &[f64]) {
        for (p, v) in self.positions[element].iter().zip(local) {
            if *p != SKIP {
                matrix.values[*p] += v;
            }
        }
    }

    /// Free entries of a global vector.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free_dofs.iter().map(|&d| full[d]).collect()
    }

    /// `full[free] += delta`.
    pub fn add_free(&self, full: &mut [f64], delta: &[f64]) {
        for (&d, v) in self.free_dofs.iter().zip(delta) {
            full[d] += v;
        }
    }

    pub fn is_free(&self, dof: usize) -> bool {
        self.free_index[dof] != SKIP
    }

    pub fn factor(&self, matrix: &SparseMatrix) -> Result<Factorization, LinalgError> {
        self.solver.factor(&self.pattern, matrix)
    }

    pub fn solve(&self, matrix: &SparseMatrix, rhs: &[f64]) -> Result<Vec<f64>, LinalgError> {
        self.solver.solve(&self.pattern, matrix, rhs)
    }
}
