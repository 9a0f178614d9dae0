//! Radial plurisubharmonic profiles `u(z) = φ(|z|²)` with known
//! Monge–Ampère densities. These are the ground truth for the rest of the
//! lab.
//!
//! The operator is normalised as `det(u_{jk̄}) = f`. For radial `u` this is
//! `f(s) = φ'(s)^{n-1} (φ'(s) + s φ''(s))`.

use serde::{Deserialize, Serialize};

use crate::domain::{RadialFn, RadialMesh};
use crate::error::{LabError, Result};

/// Factor between the two common normalisations of the operator:
/// `(dd^c u)^n = 4^n n! det(u_{jk̄}) dμ`. Only used when reporting.
pub fn ddc_normalization(n: usize) -> f64 {
    let fact: f64 = (1..=n).map(|k| k as f64).product();
    4f64.powi(n as i32) * fact
}

const ADMISSIBILITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileKind {
    /// `φ(s) = s^β`, i.e. `u(z) = |z|^{2β}`.
    Power { beta: f64 },
    /// `φ(s) = s`.
    Quadratic,
    /// Samples of `φ` and `φ'` on the profile mesh.
    Tabulated {
        values: Vec<f64>,
        derivative: Vec<f64>,
    },
}

/// A radial profile `scale · φ` in complex dimension `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    pub n: usize,
    pub kind: ProfileKind,
    pub scale: f64,
    pub mesh: RadialMesh,
}

/// JSON form: `{n, kind, beta, mesh_size, S}` plus optional `scale`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileSpec {
    pub n: usize,
    #[serde(flatten)]
    pub kind: ProfileKind,
    pub mesh_size: usize,
    #[serde(rename = "S")]
    pub s_max: f64,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

fn is_one(v: &f64) -> bool {
    *v == 1.0
}

impl RadialProfile {
    pub fn power(n: usize, beta: f64, mesh: RadialMesh) -> Result<Self> {
        RadialProfile::new(n, ProfileKind::Power { beta }, 1.0, mesh)
    }

    pub fn quadratic(n: usize, mesh: RadialMesh) -> Result<Self> {
        RadialProfile::new(n, ProfileKind::Quadratic, 1.0, mesh)
    }

    pub fn new(n: usize, kind: ProfileKind, scale: f64, mesh: RadialMesh) -> Result<Self> {
        if mesh.n != n {
            return Err(LabError::Shape("profile and mesh dimensions differ".into()));
        }
        if !(scale > 0.0) {
            return Err(LabError::InadmissibleProfile(format!(
                "scale must be positive, got {scale}"
            )));
        }
        match &kind {
            ProfileKind::Power { beta } => {
                if !(*beta > 0.0 && *beta <= 1.0) {
                    return Err(LabError::InadmissibleProfile(format!(
                        "power exponent must lie in (0, 1], got {beta}"
                    )));
                }
            }
            ProfileKind::Quadratic => {}
            ProfileKind::Tabulated { values, derivative } => {
                if values.len() != mesh.len() || derivative.len() != mesh.len() {
                    return Err(LabError::Shape(
                        "tabulated profile does not match mesh".into(),
                    ));
                }
                if values.iter().chain(derivative).any(|v| !v.is_finite()) {
                    return Err(LabError::InadmissibleProfile(
                        "non-finite tabulated value".into(),
                    ));
                }
            }
        }
        Ok(RadialProfile {
            n,
            kind,
            scale,
            mesh,
        })
    }

    pub fn from_spec(spec: ProfileSpec) -> Result<Self> {
        let mesh = RadialMesh::new(spec.n, spec.s_max, spec.mesh_size)?;
        RadialProfile::new(spec.n, spec.kind, spec.scale, mesh)
    }

    pub fn to_spec(&self) -> ProfileSpec {
        ProfileSpec {
            n: self.n,
            kind: self.kind.clone(),
            mesh_size: self.mesh.size,
            s_max: self.mesh.s_max,
            scale: self.scale,
        }
    }

    /// Same profile multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        RadialProfile::new(self.n, self.kind.clone(), self.scale * c, self.mesh.clone())
    }

    /// `φ(s)` for analytic kinds; tabulated profiles only at mesh points.
    pub fn phi(&self, s: f64) -> f64 {
        self.scale
            * match &self.kind {
                ProfileKind::Power { beta } => s.powf(*beta),
                ProfileKind::Quadratic => s,
                ProfileKind::Tabulated { values, .. } => values[self.mesh_index(s)],
            }
    }

    pub fn phi_prime(&self, s: f64) -> f64 {
        self.scale
            * match &self.kind {
                ProfileKind::Power { beta } => beta * s.powf(beta - 1.0),
                ProfileKind::Quadratic => 1.0,
                ProfileKind::Tabulated { derivative, .. } => derivative[self.mesh_index(s)],
            }
    }

    fn mesh_index(&self, s: f64) -> usize {
        ((s / self.mesh.ds()).round() as usize).min(self.mesh.size)
    }

    /// `φ` at every mesh point.
    pub fn phi_values(&self) -> Vec<f64> {
        self.mesh.points().map(|s| self.phi(s)).collect()
    }

    /// Closed-form density at `s` for analytic kinds (`+∞` at a singular
    /// origin).
    pub fn density_at(&self, s: f64) -> Option<f64> {
        let n = self.n as i32;
        match &self.kind {
            ProfileKind::Power { beta } => {
                Some(self.scale.powi(n) * beta.powi(n + 1) * s.powf(self.n as f64 * (beta - 1.0)))
            }
            ProfileKind::Quadratic => Some(self.scale.powi(n)),
            ProfileKind::Tabulated { .. } => None,
        }
    }

    /// Density on the Cartesian point `x` (real coordinates).
    pub fn density_at_point(&self, x: &[f64]) -> Option<f64> {
        self.density_at(x.iter().map(|v| v * v).sum())
    }

    /// `u(x) = φ(|x|²)` on a Cartesian point.
    pub fn eval_point(&self, x: &[f64]) -> f64 {
        self.phi(x.iter().map(|v| v * v).sum())
    }
}

/// Monge–Ampère density of a radial profile on its mesh.
pub fn ma_density(profile: &RadialProfile) -> Result<RadialFn> {
    let mesh = &profile.mesh;
    match &profile.kind {
        ProfileKind::Power { .. } | ProfileKind::Quadratic => {
            RadialFn::from_fn(mesh, |s| profile.density_at(s).expect("analytic kind"))
        }
        ProfileKind::Tabulated { derivative, .. } => {
            if let Some(i) = derivative.iter().position(|d| *d < -ADMISSIBILITY_TOL) {
                return Err(LabError::InadmissibleProfile(format!(
                    "φ' = {} < 0 at s = {} (profile not plurisubharmonic)",
                    derivative[i],
                    mesh.s(i)
                )));
            }
            let c = profile.scale;
            let d1: Vec<f64> = derivative.iter().map(|d| c * d).collect();
            let d2 = differentiate(&d1, mesh.ds());
            let n = profile.n as i32;
            let values: Vec<f64> = mesh
                .points()
                .zip(d1.iter().zip(&d2))
                .map(|(s, (p1, p2))| p1.max(0.0).powi(n - 1) * (p1 + s * p2))
                .collect();
            if let Some(i) = values.iter().position(|f| *f < -ADMISSIBILITY_TOL) {
                return Err(LabError::InadmissibleProfile(format!(
                    "negative density {} at s = {}",
                    values[i],
                    mesh.s(i)
                )));
            }
            Ok(RadialFn {
                mesh: mesh.clone(),
                values: values.into_iter().map(|v| v.max(0.0)).collect(),
                singular_origin: false,
            })
        }
    }
}

/// Derivative of uniformly sampled data: fourth-order central differences
/// inside, third-order one-sided four-point stencils at both ends so that
/// `s = 0` is never differenced across.
pub fn differentiate(g: &[f64], ds: f64) -> Vec<f64> {
    let m = g.len();
    assert!(m >= 5, "need at least five samples");
    let last = m - 1;
    let mut out = vec![0.0; m];
    out[0] = (-11.0 * g[0] + 18.0 * g[1] - 9.0 * g[2] + 2.0 * g[3]) / (6.0 * ds);
    out[1] = (-2.0 * g[0] - 3.0 * g[1] + 6.0 * g[2] - g[3]) / (6.0 * ds);
    for i in 2..last - 1 {
        out[i] = (-g[i + 2] + 8.0 * g[i + 1] - 8.0 * g[i - 1] + g[i - 2]) / (12.0 * ds);
    }
    out[last - 1] =
        (g[last - 3] - 6.0 * g[last - 2] + 3.0 * g[last - 1] + 2.0 * g[last]) / (6.0 * ds);
    out[last] =
        (-2.0 * g[last - 3] + 9.0 * g[last - 2] - 18.0 * g[last - 1] + 11.0 * g[last]) / (6.0 * ds);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LpMembership {
    pub in_lp: bool,
    /// `1 / (1 - β)`; infinite for `β = 1`.
    pub critical_p: f64,
}

/// Whether the density of `Power{β}` lies in `L^p(B₁)`: iff `β > 1 - 1/p`.
pub fn lp_membership(profile: &RadialProfile, p: f64) -> Result<LpMembership> {
    let ProfileKind::Power { beta } = profile.kind else {
        return Err(LabError::Parameter(
            "L^p membership is only known for power profiles".into(),
        ));
    };
    if !(p > 1.0) {
        return Err(LabError::Parameter(format!("need p > 1, got {p}")));
    }
    let critical_p = if beta >= 1.0 {
        f64::INFINITY
    } else {
        1.0 / (1.0 - beta)
    };
    Ok(LpMembership {
        in_lp: p < critical_p,
        critical_p,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HolderExponent {
    pub exponent: f64,
    /// Set when `2β > 1`: the modulus exponent is capped at the Lipschitz
    /// value.
    pub saturated: bool,
}

/// Hölder exponent of `|z|^{2β}` on the closed ball: `min(2β, 1)`.
pub fn true_holder_exponent(profile: &RadialProfile) -> Result<HolderExponent> {
    match profile.kind {
        ProfileKind::Power { beta } => Ok(HolderExponent {
            exponent: (2.0 * beta).min(1.0),
            saturated: 2.0 * beta > 1.0,
        }),
        ProfileKind::Quadratic => Ok(HolderExponent {
            exponent: 1.0,
            saturated: true,
        }),
        ProfileKind::Tabulated { .. } => Err(LabError::Parameter(
            "exact Hölder exponent is only known for analytic profiles".into(),
        )),
    }
}
