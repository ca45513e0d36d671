//! Versioned JSON mesh documents, used to import unstructured meshes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BoundarySet, ElementOrder, Mesh, MeshError};

pub const MESH_FILE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: usize,
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElementRecord {
    pub id: usize,
    pub order: ElementOrder,
    pub nodes: Vec<usize>,
}

/// On-disk layout. Ids must be `0..n` in order; the explicit `id` column
/// keeps hand-edited files readable and is checked on import.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshFile {
    pub version: u32,
    #[serde(default)]
    pub gauss_rule: Option<usize>,
    pub nodes: Vec<NodeRecord>,
    pub elements: Vec<ElementRecord>,
    #[serde(default)]
    pub boundary_sets: Vec<BoundarySet>,
}

impl MeshFile {
    pub fn from_mesh(mesh: &Mesh) -> Self {
        MeshFile {
            version: MESH_FILE_VERSION,
            gauss_rule: Some(mesh.gauss_rule),
            nodes: mesh.nodes.iter().enumerate().map(|(id, p)| NodeRecord { id, x: p[0], y: p[1] }).collect(),
            elements: mesh
                .elements
                .iter()
                .enumerate()
                .map(|(id, conn)| ElementRecord { id, order: mesh.order, nodes: conn.clone() })
                .collect(),
            boundary_sets: mesh.boundary_sets.clone(),
        }
    }

    pub fn into_mesh(self) -> Result<Mesh, MeshError> {
        if self.version != MESH_FILE_VERSION {
            return Err(MeshError::File(format!("unsupported mesh file version {}", self.version)));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id != i {
                return Err(MeshError::File(format!("node ids must be consecutive from 0 (found {} at row {i})", n.id)));
            }
        }
        let order = self.elements.first().map(|e| e.order).ok_or_else(|| MeshError::File("mesh has no elements".into()))?;
        for (i, e) in self.elements.iter().enumerate() {
            if e.id != i {
                return Err(MeshError::File(format!("element ids must be consecutive from 0 (found {} at row {i})", e.id)));
            }
            if e.order != order {
                return Err(MeshError::File(format!("element {i} has order {}, mixed orders are not supported", e.order)));
            }
        }
        Mesh::new(
            self.nodes.iter().map(|n| [n.x, n.y]).collect(),
            self.elements.into_iter().map(|e| e.nodes).collect(),
            order,
            self.gauss_rule.unwrap_or_else(|| order.default_gauss_rule()),
            self.boundary_sets,
        )
    }
}

pub fn read_mesh_file(path: &Path) -> Result<Mesh, MeshError> {
    let text = std::fs::read_to_string(path).map_err(|e| MeshError::File(format!("{}: {e}", path.display())))?;
    let file: MeshFile = serde_json::from_str(&text).map_err(|e| MeshError::File(format!("{}: {e}", path.display())))?;
    file.into_mesh()
}

pub fn write_mesh_file(mesh: &Mesh, path: &Path) -> Result<(), MeshError> {
    let text = serde_json::to_string_pretty(&MeshFile::from_mesh(mesh)).map_err(|e| MeshError::File(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| MeshError::File(format!("{}: {e}", path.display())))
}
