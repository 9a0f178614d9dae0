//! Radial regularisation kernels `η` on ℝ^d with unit mass.

use serde::{Deserialize, Serialize};

use crate::domain::unit_sphere_area;
use crate::error::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum KernelProfile {
    /// Normalised indicator of the closed unit ball.
    BallIndicator,
    /// `exp(-1/(1 - r²))` on the unit ball.
    SmoothBump,
    /// Constant on `r ≤ inner`, smooth monotone decay to zero at `r = 1`.
    PlateauBump { inner: f64 },
}

/// JSON kernel description. `plateau_radius` overrides the default
/// plateau `U = B(0, a)` declared by the profile; zero means no plateau.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    #[serde(flatten)]
    pub profile: KernelProfile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plateau_radius: Option<f64>,
}

/// `η_λ(x) = λ^{-d} η(x/λ)`: a unit-mass kernel on ℝ^d supported in the
/// closed ball of radius `λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    profile: KernelProfile,
    dim: usize,
    dilation: f64,
    /// Normalising constant of the undilated shape.
    norm: f64,
    /// Plateau radius of the undilated shape.
    plateau: f64,
}

fn smooth_step(t: f64) -> f64 {
    // 0 at t ≤ 0, 1 at t ≥ 1, C^∞ in between.
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / t).exp();
    let b = (-1.0 / (1.0 - t)).exp();
    a / (a + b)
}

impl KernelProfile {
    /// Unnormalised radial shape on `[0, ∞)`.
    fn shape(&self, r: f64) -> f64 {
        match *self {
            KernelProfile::BallIndicator => {
                if r <= 1.0 + 1e-12 {
                    1.0
                } else {
                    0.0
                }
            }
            KernelProfile::SmoothBump => {
                if r < 1.0 {
                    (-1.0 / (1.0 - r * r)).exp()
                } else {
                    0.0
                }
            }
            KernelProfile::PlateauBump { inner } => {
                if r <= inner {
                    1.0
                } else if r < 1.0 {
                    smooth_step((1.0 - r) / (1.0 - inner))
                } else {
                    0.0
                }
            }
        }
    }

    fn default_plateau(&self) -> f64 {
        match *self {
            KernelProfile::BallIndicator => 1.0,
            KernelProfile::SmoothBump => 0.5,
            KernelProfile::PlateauBump { inner } => inner,
        }
    }
}

/// `∫₀¹ g(r) dr` by composite Simpson with `m` (even) panels.
fn simpson(g: impl Fn(f64) -> f64, m: usize) -> f64 {
    let h = 1.0 / m as f64;
    let mut s = g(0.0) + g(1.0);
    for i in 1..m {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * g(i as f64 * h);
    }
    s * h / 3.0
}

impl Kernel {
    pub fn new(profile: KernelProfile, dim: usize) -> Result<Self> {
        Kernel::with_plateau(profile, dim, None)
    }

    pub fn with_plateau(profile: KernelProfile, dim: usize, plateau: Option<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(LabError::Parameter(
                "kernel dimension must be positive".into(),
            ));
        }
        if let KernelProfile::PlateauBump { inner } = profile {
            if !(inner > 0.0 && inner < 1.0) {
                return Err(LabError::Parameter(format!(
                    "plateau radius must lie in (0, 1), got {inner}"
                )));
            }
        }
        let plateau = plateau.unwrap_or_else(|| profile.default_plateau());
        if !(0.0..=1.0).contains(&plateau) {
            return Err(LabError::Parameter(format!(
                "plateau radius {plateau} outside [0, 1]"
            )));
        }
        let norm = match profile {
            KernelProfile::BallIndicator => unit_sphere_area(dim) / dim as f64,
            _ => Kernel::radial_mass(|r| profile.shape(r), dim, 20_000),
        };
        Ok(Kernel {
            profile,
            dim,
            dilation: 1.0,
            norm,
            plateau,
        })
    }

    pub fn from_spec(spec: &KernelSpec, dim: usize) -> Result<Self> {
        Kernel::with_plateau(spec.profile, dim, spec.plateau_radius)
    }

    fn radial_mass(shape: impl Fn(f64) -> f64, dim: usize, panels: usize) -> f64 {
        unit_sphere_area(dim) * simpson(|r| shape(r) * r.powi(dim as i32 - 1), panels)
    }

    pub fn profile(&self) -> KernelProfile {
        self.profile
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Support radius `R`.
    pub fn support(&self) -> f64 {
        self.dilation
    }

    /// `η_λ` for this kernel dilated by a further factor `lambda`.
    pub fn dilated(&self, lambda: f64) -> Kernel {
        Kernel {
            dilation: self.dilation * lambda,
            ..self.clone()
        }
    }

    /// Plateau radius of `U` (the ball on which `η ≥ δ`).
    pub fn plateau_radius(&self) -> f64 {
        self.plateau * self.dilation
    }

    /// Lower bound `δ` of `η` on the plateau ball.
    pub fn plateau_delta(&self) -> f64 {
        if self.plateau == 0.0 {
            return 0.0;
        }
        self.eval_radius(self.plateau_radius() * (1.0 - 1e-12))
    }

    /// `η(x)` as a function of `r = |x|`.
    pub fn eval_radius(&self, r: f64) -> f64 {
        let lam = self.dilation;
        self.profile.shape(r / lam) / (self.norm * lam.powi(self.dim as i32))
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.eval_radius(x.iter().map(|v| v * v).sum::<f64>().sqrt())
    }

    /// `∫ η dμ` by an independent radial quadrature (should be 1).
    pub fn mass(&self) -> f64 {
        let lam = self.dilation;
        let d = self.dim as i32;
        // Substituting r = λρ.
        unit_sphere_area(self.dim)
            * simpson(
                |rho| self.eval_radius(lam * rho) * (lam * rho).powi(d - 1) * lam,
                40_000,
            )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unit_mass() {
        for d in [2, 4] {
            for p in [
                KernelProfile::BallIndicator,
                KernelProfile::SmoothBump,
                KernelProfile::PlateauBump { inner: 0.5 },
            ] {
                let k = Kernel::new(p, d).unwrap();
                let m = k.mass();
                // The indicator's jump limits Simpson to first order.
                let tol = if p == KernelProfile::BallIndicator {
                    1e-3
                } else {
                    1e-6
                };
                assert!((m - 1.0).abs() < tol, "{p:?} d={d}: {m}");
                assert!((k.dilated(0.3).mass() - 1.0).abs() < tol);
            }
        }
    }

    #[test]
    fn plateau_lower_bound() {
        let k = Kernel::new(KernelProfile::PlateauBump { inner: 0.5 }, 2).unwrap();
        let delta = k.plateau_delta();
        assert!(delta > 0.0);
        for i in 0..50 {
            let r = 0.5 * i as f64 / 50.0;
            assert!(k.eval_radius(r) >= delta * (1.0 - 1e-12));
        }
        assert_eq!(k.eval_radius(1.0), 0.0);
    }

    #[test]
    fn rejects_bad_plateau() {
        assert!(Kernel::new(KernelProfile::PlateauBump { inner: 1.5 }, 2).is_err());
    }

    proptest! {
        #[test]
        fn nonnegative(r in 0.0f64..2.0, inner in 0.05f64..0.95) {
            for p in [KernelProfile::BallIndicator, KernelProfile::SmoothBump,
                      KernelProfile::PlateauBump { inner }] {
                let k = Kernel::new(p, 2).unwrap();
                prop_assert!(k.eval_radius(r) >= 0.0);
                if r > 1.0 + 1e-9 {
                    prop_assert_eq!(k.eval_radius(r), 0.0);
                }
            }
        }
    }
}
