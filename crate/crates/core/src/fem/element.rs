//! Element residuals and consistent tangent blocks of the coupled
//! displacement / nonlocal-strain formulation.

use crate::material::{mat_vec, DamageState, MaterialParams, Matrix3, Voigt};
use crate::mesh::GaussPointData;

/// Material state at one Gauss point for a trial element state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GpResponse {
    pub strain: Voigt,
    pub eps_eq: f64,
    /// `∂ε_eq/∂ε` (Voigt).
    pub deq: Voigt,
    pub eps_bar: f64,
    pub damage: DamageState,
}

/// Small-strain Voigt vector `[ε_xx, ε_yy, γ_xy]` from interleaved nodal
/// displacements.
pub fn strain_at(gp: &GaussPointData, u_e: &[f64]) -> Voigt {
    let mut e = [0.0; 3];
    for (a, d) in gp.dn_physical.iter().enumerate() {
        let (ux, uy) = (u_e[2 * a], u_e[2 * a + 1]);
        e[0] += d[0] * ux;
        e[1] += d[1] * uy;
        e[2] += d[1] * ux + d[0] * uy;
    }
    e
}

/// `Bᵀ v` for a Voigt vector `v`, accumulated into `out` with factor `w`.
pub(crate) fn add_bt(gp: &GaussPointData, v: &Voigt, w: f64, out: &mut [f64]) {
    for (a, d) in gp.dn_physical.iter().enumerate() {
        out[2 * a] += w * (d[0] * v[0] + d[1] * v[2]);
        out[2 * a + 1] += w * (d[1] * v[1] + d[0] * v[2]);
    }
}

/// Row `a`-column pairs of `B`: `B[:, 2a]` and `B[:, 2a+1]` as Voigt columns.
pub(crate) fn b_columns(d: &[f64; 2]) -> [Voigt; 2] {
    [[d[0], 0.0, d[1]], [0.0, d[1], d[0]]]
}

pub fn gp_response(gp: &GaussPointData, u_e: &[f64], ebar_e: &[f64], kappa_prev: f64, params: &MaterialParams) -> GpResponse {
    let strain = strain_at(gp, u_e);
    let (eps_eq, deq) = params.equivalent_strain(&strain);
    let eps_bar = gp.interpolate(ebar_e);
    GpResponse { strain, eps_eq, deq, eps_bar, damage: params.damage(eps_bar, kappa_prev) }
}

/// Residual vectors and (optionally) the four tangent blocks of one element.
/// Dense blocks are row-major: `juu` is `2m x 2m`, `jue` is `2m x m`, `jeu`
/// is `m x 2m` and `jee` is `m x m` for `m` element nodes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ElementSystem {
    pub ru: Vec<f64>,
    pub re: Vec<f64>,
    pub juu: Vec<f64>,
    pub jue: Vec<f64>,
    pub jeu: Vec<f64>,
    pub jee: Vec<f64>,
}

/// Which tangent blocks to form.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Blocks {
    pub uu: bool,
    pub coupling: bool,
    pub ee: bool,
}

impl Blocks {
    pub const NONE: Blocks = Blocks { uu: false, coupling: false, ee: false };
    pub const ALL: Blocks = Blocks { uu: true, coupling: true, ee: true };
}

/// Evaluates the element residuals
/// `R^u = ∫ Bᵀ (1-d) C ε` and `R^ε̄ = ∫ Nᵀ(ε̄ - ε_eq) + g Bᵀ∇ε̄`
/// and the requested tangent blocks. `gps` are the element's Gauss points,
/// `kappa_prev` the converged history per Gauss point. Returns the system and
/// the Gauss point responses.
pub fn element_system(
    gps: &[GaussPointData],
    u_e: &[f64],
    ebar_e: &[f64],
    kappa_prev: &[f64],
    params: &MaterialParams,
    c: &Matrix3,
    blocks: Blocks,
) -> (ElementSystem, Vec<GpResponse>) {
    let m = ebar_e.len();
    let nu = 2 * m;
    let g = params.g();
    let mut sys = ElementSystem {
        ru: vec![0.0; nu],
        re: vec![0.0; m],
        juu: if blocks.uu { vec![0.0; nu * nu] } else { Vec::new() },
        jue: if blocks.coupling { vec![0.0; nu * m] } else { Vec::new() },
        jeu: if blocks.coupling { vec![0.0; m * nu] } else { Vec::new() },
        jee: if blocks.ee { vec![0.0; m * m] } else { Vec::new() },
    };
    let mut responses = Vec::with_capacity(gps.len());
    for (q, gp) in gps.iter().enumerate() {
        let r = gp_response(gp, u_e, ebar_e, kappa_prev[q], params);
        let dv = gp.dv();
        let ce = mat_vec(c, &r.strain);
        let one_minus_d = 1.0 - r.damage.d;
        add_bt(gp, &ce, one_minus_d * dv, &mut sys.ru);
        let grad_bar = gp.gradient(ebar_e);
        for a in 0..m {
            let d = gp.dn_physical[a];
            sys.re[a] += dv * (gp.n[a] * (r.eps_bar - r.eps_eq) + g * (d[0] * grad_bar[0] + d[1] * grad_bar[1]));
        }
        if blocks.uu {
            for a in 0..m {
                let ba = b_columns(&gp.dn_physical[a]);
                for (ia, col_a) in ba.iter().enumerate() {
                    let row = 2 * a + ia;
                    for b in 0..m {
                        let bb = b_columns(&gp.dn_physical[b]);
                        for (ib, col_b) in bb.iter().enumerate() {
                            let cb = mat_vec(c, col_b);
                            let v = col_a[0] * cb[0] + col_a[1] * cb[1] + col_a[2] * cb[2];
                            sys.juu[row * nu + 2 * b + ib] += one_minus_d * dv * v;
                        }
                    }
                }
            }
        }
        if blocks.coupling {
            let mut bt_ce = vec![0.0; nu];
            add_bt(gp, &ce, 1.0, &mut bt_ce);
            let mut bt_deq = vec![0.0; nu];
            add_bt(gp, &r.deq, 1.0, &mut bt_deq);
            for i in 0..nu {
                for b in 0..m {
                    sys.jue[i * m + b] -= dv * bt_ce[i] * r.damage.dd * gp.n[b];
                    sys.jeu[b * nu + i] -= dv * gp.n[b] * bt_deq[i];
                }
            }
        }
        if blocks.ee {
            for a in 0..m {
                let da = gp.dn_physical[a];
                for b in 0..m {
                    let db = gp.dn_physical[b];
                    sys.jee[a * m + b] += dv * (gp.n[a] * gp.n[b] + g * (da[0] * db[0] + da[1] * db[1]));
                }
            }
        }
        responses.push(r);
    }
    (sys, responses)
}
