//! Linear elasticity, equivalent strain measures and Mazars damage.
//!
//! Strains and stresses use Voigt notation `[xx, yy, xy]` with engineering
//! shear strain `γ = 2ε_xy`.

use serde::{Deserialize, Serialize};

pub type Voigt = [f64; 3];
pub type Matrix3 = [[f64; 3]; 3];

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MaterialError {
    #[error("invalid material parameter: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaneMode {
    Strain,
    Stress,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EqStrainKind {
    /// `sqrt(Σ <ε_i>²)` over the principal strains.
    Principal,
    /// Modified von Mises with ratio `k_vm` of compressive to tensile strength.
    ModifiedVonMises,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialParams {
    /// Young's modulus, MPa.
    pub young: f64,
    pub poisson: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Damage threshold strain.
    pub eps_d: f64,
    /// Characteristic length, mm.
    pub lc: f64,
    pub k_vm: f64,
    pub plane_mode: PlaneMode,
    pub eq_strain: EqStrainKind,
}

impl Default for MaterialParams {
    fn default() -> Self {
        MaterialParams {
            young: 30000.0,
            poisson: 0.2,
            alpha: 0.7,
            beta: 1e4,
            eps_d: 1e-4,
            lc: 4.0,
            k_vm: 10.0,
            plane_mode: PlaneMode::Strain,
            eq_strain: EqStrainKind::Principal,
        }
    }
}

/// Result of evaluating the damage law at one Gauss point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DamageState {
    pub d: f64,
    /// Consistent derivative with respect to the current nonlocal strain;
    /// zero when the history variable governs.
    pub dd: f64,
    /// Updated history variable.
    pub kappa: f64,
}

impl MaterialParams {
    pub fn validate(&self) -> Result<(), MaterialError> {
        let checks = [
            (self.young > 0.0, "E must be positive"),
            (self.poisson > 0.0 && self.poisson < 0.5, "Poisson ratio must lie in (0, 0.5)"),
            ((0.0..=1.0).contains(&self.alpha), "alpha must lie in [0, 1]"),
            (self.beta > 0.0, "beta must be positive"),
            (self.eps_d > 0.0, "eps_d must be positive"),
            (self.lc > 0.0, "characteristic length must be positive"),
            (self.k_vm >= 1.0, "k_vm must be at least 1"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(MaterialError::Invalid((*msg).to_string())),
            None => Ok(()),
        }
    }

    /// Gradient parameter `g = l_c² / 2`, mm².
    pub fn g(&self) -> f64 {
        0.5 * self.lc * self.lc
    }

    pub fn constitutive_matrix(&self) -> Matrix3 {
        let (e, nu) = (self.young, self.poisson);
        match self.plane_mode {
            PlaneMode::Strain => {
                let f = e / ((1.0 + nu) * (1.0 - 2.0 * nu));
                [[f * (1.0 - nu), f * nu, 0.0], [f * nu, f * (1.0 - nu), 0.0], [0.0, 0.0, f * (1.0 - 2.0 * nu) / 2.0]]
            }
            PlaneMode::Stress => {
                let f = e / (1.0 - nu * nu);
                [[f, f * nu, 0.0], [f * nu, f, 0.0], [0.0, 0.0, f * (1.0 - nu) / 2.0]]
            }
        }
    }

    /// `(ε_zz, ∂ε_zz/∂ε_xx)`; `∂ε_zz/∂ε_yy` is the same and shear does not enter.
    fn out_of_plane(&self, eps: &Voigt) -> (f64, f64) {
        match self.plane_mode {
            PlaneMode::Strain => (0.0, 0.0),
            PlaneMode::Stress => {
                let c = -self.poisson / (1.0 - self.poisson);
                (c * (eps[0] + eps[1]), c)
            }
        }
    }

    /// Local equivalent strain and its derivative with respect to the Voigt
    /// strain. The derivative is taken as zero where the measure vanishes.
    pub fn equivalent_strain(&self, eps: &Voigt) -> (f64, Voigt) {
        match self.eq_strain {
            EqStrainKind::Principal => self.principal_equivalent(eps),
            EqStrainKind::ModifiedVonMises => self.von_mises_equivalent(eps),
        }
    }

    fn principal_equivalent(&self, eps: &Voigt) -> (f64, Voigt) {
        let [ex, ey, g] = *eps;
        let m = 0.5 * (ex + ey);
        let dx = 0.5 * (ex - ey);
        let r = (dx * dx + 0.25 * g * g).sqrt();
        let (e1, e2) = (m + r, m - r);
        let (ez, dz) = self.out_of_plane(eps);
        // Σ<ε_i>² and its gradient. When both in-plane principal strains are
        // positive the sum is 2m² + 2r², which stays smooth at r = 0.
        let (mut s, mut ds) = if e2 > 0.0 {
            (2.0 * m * m + 2.0 * r * r, [2.0 * m + 2.0 * dx, 2.0 * m - 2.0 * dx, g])
        } else if e1 > 0.0 {
            // Only the major strain is positive, which implies r > 0.
            let (dm, dr) = ([0.5, 0.5, 0.0], [0.5 * dx / r, -0.5 * dx / r, 0.25 * g / r]);
            (e1 * e1, [0, 1, 2].map(|i| 2.0 * e1 * (dm[i] + dr[i])))
        } else {
            (0.0, [0.0; 3])
        };
        if ez > 0.0 {
            s += ez * ez;
            ds[0] += 2.0 * ez * dz;
            ds[1] += 2.0 * ez * dz;
        }
        if s <= 0.0 {
            return (0.0, [0.0; 3]);
        }
        let v = s.sqrt();
        (v, ds.map(|d| d / (2.0 * v)))
    }

    fn von_mises_equivalent(&self, eps: &Voigt) -> (f64, Voigt) {
        let (k, nu) = (self.k_vm, self.poisson);
        let [ex, ey, g] = *eps;
        let (ez, dz) = self.out_of_plane(eps);
        let i1 = ex + ey + ez;
        let di1 = [1.0 + dz, 1.0 + dz, 0.0];
        let tr2 = ex * ex + ey * ey + ez * ez + 0.5 * g * g;
        let dtr2 = [2.0 * ex + 2.0 * ez * dz, 2.0 * ey + 2.0 * ez * dz, g];
        let j2 = 3.0 * tr2 - i1 * i1;
        let dj2 = [0, 1, 2].map(|i| 3.0 * dtr2[i] - 2.0 * i1 * di1[i]);
        let a = (k - 1.0) / (2.0 * k * (1.0 - 2.0 * nu));
        let b = ((k - 1.0) / (1.0 - 2.0 * nu)).powi(2);
        let c = 2.0 * k / (1.0 + nu).powi(2);
        let arg = b * i1 * i1 + c * j2;
        if arg <= 0.0 {
            return (0.0, [0.0; 3]);
        }
        let root = arg.sqrt();
        let v = a * i1 + root / (2.0 * k);
        let d = [0, 1, 2].map(|i| a * di1[i] + (2.0 * b * i1 * di1[i] + c * dj2[i]) / (4.0 * k * root));
        (v.max(0.0), d)
    }

    /// Mazars damage `d(κ)` and `dd/dκ` for a given history value.
    pub fn mazars(&self, kappa: f64) -> (f64, f64) {
        if kappa <= self.eps_d {
            return (0.0, 0.0);
        }
        let (a, b, e0) = (self.alpha, self.beta, self.eps_d);
        let ex = (-b * (kappa - e0)).exp();
        let d = 1.0 - e0 * (1.0 - a) / kappa - a * ex;
        let dd = e0 * (1.0 - a) / (kappa * kappa) + a * b * ex;
        (d, dd)
    }

    /// Damage for the current nonlocal strain given the previous converged
    /// history value. The tangent is zero when the history governs.
    pub fn damage(&self, eps_bar: f64, kappa_prev: f64) -> DamageState {
        if kappa_prev > eps_bar {
            let (d, _) = self.mazars(kappa_prev);
            DamageState { d, dd: 0.0, kappa: kappa_prev }
        } else {
            let (d, dd) = self.mazars(eps_bar);
            DamageState { d, dd, kappa: eps_bar }
        }
    }
}

pub fn mat_vec(m: &Matrix3, v: &Voigt) -> Voigt {
    [0, 1, 2].map(|i| m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2])
}
