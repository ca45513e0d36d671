//! Structured square-element meshes of a rectangle, with optional slits and
//! rectangular cutouts aligned to the element grid.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{BoundarySet, ElementOrder, Mesh, MeshError};

const ALIGN_TOL: f64 = 1e-9;

/// Axis-aligned rectangle in mm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub origin: [f64; 2],
    pub width: f64,
    pub height: f64,
}

impl Domain {
    pub fn new(x0: f64, y0: f64, width: f64, height: f64) -> Self {
        Domain { origin: [x0, y0], width, height }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Notch {
    /// Zero-width crack along a horizontal or vertical grid line. Nodes on
    /// the segment are duplicated; the copies belong to the elements above
    /// (horizontal slit) or to the right (vertical slit). An end point inside
    /// the domain is the crack tip and stays shared.
    Slit { start: [f64; 2], end: [f64; 2] },
    /// Rectangular region whose elements are removed.
    Cutout { min: [f64; 2], max: [f64; 2] },
}

fn grid_steps(length: f64, h: f64) -> Option<usize> {
    let n = (length / h).round();
    (n >= 1.0 && (n * h - length).abs() <= ALIGN_TOL * length.max(1.0)).then_some(n as usize)
}

fn on_grid(v: f64, origin: f64, h: f64) -> bool {
    let t = (v - origin) / h;
    (t - t.round()).abs() <= ALIGN_TOL * t.abs().max(1.0)
}

/// Builds a grid of square `elem_size` elements covering `domain`. Q8
/// meshes place nodes on the half-step lattice without the element centers;
/// numbering is row-major in (x, y) before notch processing.
pub fn build_structured_mesh(
    domain: &Domain,
    notches: &[Notch],
    elem_size: f64,
    order: ElementOrder,
) -> Result<Mesh, MeshError> {
    let h = elem_size;
    if !(h > 0.0) {
        return Err(MeshError::NonDivisible { elem_size: h, length: domain.width });
    }
    let nx = grid_steps(domain.width, h).ok_or(MeshError::NonDivisible { elem_size: h, length: domain.width })?;
    let ny = grid_steps(domain.height, h).ok_or(MeshError::NonDivisible { elem_size: h, length: domain.height })?;
    let [x0, y0] = domain.origin;
    let inside = |p: [f64; 2]| {
        p[0] >= x0 - ALIGN_TOL && p[0] <= x0 + domain.width + ALIGN_TOL && p[1] >= y0 - ALIGN_TOL && p[1] <= y0 + domain.height + ALIGN_TOL
    };
    for (index, notch) in notches.iter().enumerate() {
        let pts = match notch {
            Notch::Slit { start, end } => {
                let horizontal = (start[1] - end[1]).abs() <= ALIGN_TOL;
                let vertical = (start[0] - end[0]).abs() <= ALIGN_TOL;
                if horizontal == vertical {
                    return Err(MeshError::MisalignedNotch { index, reason: "slit must be horizontal or vertical with nonzero length".into() });
                }
                [*start, *end]
            }
            Notch::Cutout { min, max } => {
                if !(max[0] > min[0] && max[1] > min[1]) {
                    return Err(MeshError::MisalignedNotch { index, reason: "cutout must have positive extent".into() });
                }
                [*min, *max]
            }
        };
        for p in pts {
            if !on_grid(p[0], x0, h) || !on_grid(p[1], y0, h) {
                return Err(MeshError::MisalignedNotch { index, reason: format!("point ({}, {}) is not a grid node", p[0], p[1]) });
            }
            if !inside(p) {
                return Err(MeshError::MisalignedNotch { index, reason: format!("point ({}, {}) lies outside the domain", p[0], p[1]) });
            }
        }
    }

    // Lattice with step h/2 for Q8 and h for Q4.
    let sub = match order {
        ElementOrder::Linear => 1,
        ElementOrder::Quadratic => 2,
    };
    let (lx, ly) = (sub * nx + 1, sub * ny + 1);
    let step = h / sub as f64;
    let mut lattice_id = vec![usize::MAX; lx * ly];
    let mut nodes = Vec::new();
    for j in 0..ly {
        for i in 0..lx {
            if sub == 2 && i % 2 == 1 && j % 2 == 1 {
                continue;
            }
            lattice_id[j * lx + i] = nodes.len();
            nodes.push([x0 + i as f64 * step, y0 + j as f64 * step]);
        }
    }
    let id = |i: usize, j: usize| lattice_id[j * lx + i];

    let cutouts: Vec<([f64; 2], [f64; 2])> = notches
        .iter()
        .filter_map(|n| match n {
            Notch::Cutout { min, max } => Some((*min, *max)),
            _ => None,
        })
        .collect();
    let mut elements = Vec::with_capacity(nx * ny);
    for ey in 0..ny {
        for ex in 0..nx {
            let c = [x0 + (ex as f64 + 0.5) * h, y0 + (ey as f64 + 0.5) * h];
            if cutouts.iter().any(|(lo, hi)| c[0] > lo[0] && c[0] < hi[0] && c[1] > lo[1] && c[1] < hi[1]) {
                continue;
            }
            let (i, j) = (sub * ex, sub * ey);
            let mut conn = vec![id(i, j), id(i + sub, j), id(i + sub, j + sub), id(i, j + sub)];
            if sub == 2 {
                conn.extend([id(i + 1, j), id(i + 2, j + 1), id(i + 1, j + 2), id(i, j + 1)]);
            }
            elements.push(conn);
        }
    }

    for notch in notches {
        if let Notch::Slit { start, end } = notch {
            split_slit(&mut nodes, &mut elements, *start, *end, domain);
        }
    }

    let (nodes, elements) = drop_unused_nodes(nodes, elements);
    let mut sets = edge_sets(&nodes, domain);
    sets.retain(|s| !s.nodes.is_empty());
    Mesh::new(nodes, elements, order, order.default_gauss_rule(), sets)
}

fn split_slit(nodes: &mut Vec<[f64; 2]>, elements: &mut [Vec<usize>], start: [f64; 2], end: [f64; 2], domain: &Domain) {
    let horizontal = (start[1] - end[1]).abs() <= ALIGN_TOL;
    // Along-slit coordinate axis and the across-slit axis.
    let (along, across) = if horizontal { (0, 1) } else { (1, 0) };
    let line = start[across];
    let (lo, hi) = (start[along].min(end[along]), start[along].max(end[along]));
    let dom_lo = domain.origin[along];
    let dom_hi = dom_lo + if horizontal { domain.width } else { domain.height };
    let on_edge = |v: f64| (v - dom_lo).abs() <= ALIGN_TOL || (v - dom_hi).abs() <= ALIGN_TOL;
    let splits = |p: [f64; 2]| {
        if (p[across] - line).abs() > ALIGN_TOL {
            return false;
        }
        let s = p[along];
        if s < lo - ALIGN_TOL || s > hi + ALIGN_TOL {
            return false;
        }
        let at_lo = (s - lo).abs() <= ALIGN_TOL;
        let at_hi = (s - hi).abs() <= ALIGN_TOL;
        !(at_lo && !on_edge(lo) || at_hi && !on_edge(hi))
    };
    let mut copies: BTreeMap<usize, usize> = BTreeMap::new();
    for conn in elements.iter_mut() {
        let centroid = conn[..4].iter().map(|&n| nodes[n][across]).sum::<f64>() / 4.0;
        if centroid <= line {
            continue;
        }
        for n in conn.iter_mut() {
            if splits(nodes[*n]) {
                let next = nodes.len() + copies.len();
                let copy = *copies.entry(*n).or_insert(next);
                *n = copy;
            }
        }
    }
    let originals: Vec<usize> = {
        let mut v: Vec<(usize, usize)> = copies.into_iter().collect();
        v.sort_by_key(|&(_, c)| c);
        v.into_iter().map(|(o, _)| o).collect()
    };
    for o in originals {
        nodes.push(nodes[o]);
    }
}

fn drop_unused_nodes(nodes: Vec<[f64; 2]>, mut elements: Vec<Vec<usize>>) -> (Vec<[f64; 2]>, Vec<Vec<usize>>) {
    let mut used = vec![false; nodes.len()];
    for conn in &elements {
        for &n in conn {
            used[n] = true;
        }
    }
    let mut map = vec![usize::MAX; nodes.len()];
    let mut kept = Vec::with_capacity(nodes.len());
    for (i, p) in nodes.into_iter().enumerate() {
        if used[i] {
            map[i] = kept.len();
            kept.push(p);
        }
    }
    for conn in &mut elements {
        for n in conn.iter_mut() {
            *n = map[*n];
        }
    }
    (kept, elements)
}

fn edge_sets(nodes: &[[f64; 2]], domain: &Domain) -> Vec<BoundarySet> {
    let [x0, y0] = domain.origin;
    let (x1, y1) = (x0 + domain.width, y0 + domain.height);
    let specs: [(&str, usize, f64, [f64; 2]); 4] =
        [("bottom", 1, y0, [0.0, -1.0]), ("right", 0, x1, [1.0, 0.0]), ("top", 1, y1, [0.0, 1.0]), ("left", 0, x0, [-1.0, 0.0])];
    specs
        .iter()
        .map(|&(name, axis, value, normal)| {
            let mut ids: Vec<usize> = (0..nodes.len()).filter(|&n| (nodes[n][axis] - value).abs() <= ALIGN_TOL).collect();
            ids.sort_by(|&a, &b| nodes[a][1 - axis].total_cmp(&nodes[b][1 - axis]).then(a.cmp(&b)));
            BoundarySet { name: name.to_string(), normals: vec![normal; ids.len()], nodes: ids }
        })
        .collect()
}
