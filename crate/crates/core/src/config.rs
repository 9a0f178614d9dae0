//! Experiment configuration: INI sections with a default for every key.

use std::path::{Path, PathBuf};

use ini::Ini;
use serde::Serialize;

use crate::budget::{gamma_0, gamma_n, p_star};
use crate::error::{LabError, Result};
use crate::exact::ProfileKind;
use crate::kernel::{KernelProfile, KernelSpec};
use crate::solver::SorParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceKind {
    /// Radial profile `u = φ(|z|²)` with its exact density.
    Profile,
    /// `f ≡ 0` on the unit disc with data `Re z² + Re z`.
    Harmonic,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceConfig {
    pub kind: InstanceKind,
    pub n: usize,
    pub profile: ProfileKind,
    pub scale: f64,
    pub resolution: usize,
    pub radial_mesh: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BudgetConfig {
    pub alpha: f64,
    pub p: f64,
    /// Unset gammas default to 96% of their upper bound.
    pub gamma: Option<f64>,
    pub gamma_prime: Option<f64>,
    pub gamma_dblprime: Option<f64>,
}

impl BudgetConfig {
    pub fn resolved(&self, n: usize) -> (f64, f64, f64) {
        let gn = gamma_n(n, self.p);
        let g0 = gamma_0(self.p);
        (
            self.gamma.unwrap_or(0.96 * gn),
            self.gamma_prime.unwrap_or(0.96 * gn),
            self.gamma_dblprime.unwrap_or(0.96 * g0),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModulusConfig {
    pub eps0: f64,
    pub depth: usize,
    pub offsets_per_shell: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LemmaConfig {
    pub alpha: f64,
    pub eps0: f64,
    /// Plateau radius of the plateau-bump kernel used by the certificate.
    pub inner: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CheckConfig {
    /// Exponent `δ` of `|Ω|` in the sup-norm bound; unset means 90% of
    /// `1/(np*)`.
    pub delta: Option<f64>,
    pub c_chk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub out: PathBuf,
    pub seed: u64,
    pub instance: InstanceConfig,
    pub budget: BudgetConfig,
    pub kernel: KernelSpec,
    pub eps: Vec<f64>,
    pub modulus: ModulusConfig,
    pub lemma: LemmaConfig,
    pub solver: SorParams,
    pub checks: CheckConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "reference".into(),
            out: PathBuf::from("out"),
            seed: 0x5eed,
            instance: InstanceConfig {
                kind: InstanceKind::Profile,
                n: 1,
                profile: ProfileKind::Power { beta: 0.5 },
                scale: 1.0,
                resolution: 256,
                radial_mesh: 100_000,
            },
            budget: BudgetConfig {
                alpha: 1.0,
                p: 1.5,
                gamma: None,
                gamma_prime: None,
                gamma_dblprime: None,
            },
            kernel: KernelSpec {
                profile: KernelProfile::BallIndicator,
                plateau_radius: None,
            },
            eps: vec![0.2, 0.1, 0.05, 0.025],
            modulus: ModulusConfig {
                eps0: 0.25,
                depth: 8,
                offsets_per_shell: 64,
            },
            lemma: LemmaConfig {
                alpha: 0.9,
                eps0: 0.05,
                inner: 0.5,
            },
            solver: SorParams::default(),
            checks: CheckConfig {
                delta: None,
                c_chk: 1.0,
            },
        }
    }
}

fn bad(section: &str, key: &str, value: &str, why: impl std::fmt::Display) -> LabError {
    LabError::Config(format!("[{section}] {key} = {value:?}: {why}"))
}

fn num<T: std::str::FromStr>(section: &str, key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| bad(section, key, value, e))
}

fn list(section: &str, key: &str, value: &str) -> Result<Vec<f64>> {
    value.split(',').map(|v| num(section, key, v)).collect()
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| LabError::Config(e.to_string()))?;
        let mut cfg = ExperimentConfig::default();
        let mut kernel_inner: Option<f64> = None;
        let mut kernel_kind: Option<String> = None;
        let mut beta: Option<f64> = None;
        let mut profile_kind: Option<String> = None;
        for (section, props) in ini.iter() {
            let sec = section.unwrap_or("");
            for (key, value) in props.iter() {
                let v = value.trim();
                match (sec, key) {
                    ("experiment", "name") => cfg.name = v.to_string(),
                    ("experiment", "out") => cfg.out = PathBuf::from(v),
                    ("experiment", "seed") => cfg.seed = num(sec, key, v)?,
                    ("instance", "kind") => {
                        cfg.instance.kind = match v {
                            "profile" => InstanceKind::Profile,
                            "harmonic" => InstanceKind::Harmonic,
                            _ => return Err(bad(sec, key, v, "expected profile or harmonic")),
                        }
                    }
                    ("instance", "n") => cfg.instance.n = num(sec, key, v)?,
                    ("instance", "profile") => profile_kind = Some(v.to_string()),
                    ("instance", "beta") => beta = Some(num(sec, key, v)?),
                    ("instance", "scale") => cfg.instance.scale = num(sec, key, v)?,
                    ("instance", "resolution") => cfg.instance.resolution = num(sec, key, v)?,
                    ("instance", "radial_mesh") => cfg.instance.radial_mesh = num(sec, key, v)?,
                    ("budget", "alpha") => cfg.budget.alpha = num(sec, key, v)?,
                    ("budget", "p") => cfg.budget.p = num(sec, key, v)?,
                    ("budget", "gamma") => cfg.budget.gamma = Some(num(sec, key, v)?),
                    ("budget", "gamma_prime") => cfg.budget.gamma_prime = Some(num(sec, key, v)?),
                    ("budget", "gamma_dblprime") => {
                        cfg.budget.gamma_dblprime = Some(num(sec, key, v)?)
                    }
                    ("kernel", "profile") => kernel_kind = Some(v.to_string()),
                    ("kernel", "inner") => kernel_inner = Some(num(sec, key, v)?),
                    ("kernel", "plateau_radius") => {
                        cfg.kernel.plateau_radius = Some(num(sec, key, v)?)
                    }
                    ("mollify", "eps") => cfg.eps = list(sec, key, v)?,
                    ("modulus", "eps0") => cfg.modulus.eps0 = num(sec, key, v)?,
                    ("modulus", "depth") => cfg.modulus.depth = num(sec, key, v)?,
                    ("modulus", "offsets_per_shell") => {
                        cfg.modulus.offsets_per_shell = num(sec, key, v)?
                    }
                    ("lemma", "alpha") => cfg.lemma.alpha = num(sec, key, v)?,
                    ("lemma", "eps0") => cfg.lemma.eps0 = num(sec, key, v)?,
                    ("lemma", "inner") => cfg.lemma.inner = num(sec, key, v)?,
                    ("solver", "omega") => cfg.solver.omega = num(sec, key, v)?,
                    ("solver", "max_iter") => cfg.solver.max_iter = num(sec, key, v)?,
                    ("solver", "tol") => cfg.solver.tol = num(sec, key, v)?,
                    ("checks", "delta") => cfg.checks.delta = Some(num(sec, key, v)?),
                    ("checks", "c_chk") => cfg.checks.c_chk = num(sec, key, v)?,
                    _ => {
                        return Err(LabError::Config(format!("unknown key [{sec}] {key}")));
                    }
                }
            }
        }
        cfg.instance.profile = match profile_kind.as_deref() {
            None | Some("power") => ProfileKind::Power {
                beta: beta.unwrap_or(0.5),
            },
            Some("quadratic") => ProfileKind::Quadratic,
            Some(other) => {
                return Err(bad(
                    "instance",
                    "profile",
                    other,
                    "expected power or quadratic",
                ))
            }
        };
        cfg.kernel.profile = match kernel_kind.as_deref() {
            None | Some("ball_indicator") => KernelProfile::BallIndicator,
            Some("smooth_bump") => KernelProfile::SmoothBump,
            Some("plateau_bump") => KernelProfile::PlateauBump {
                inner: kernel_inner.unwrap_or(0.5),
            },
            Some(other) => return Err(bad("kernel", "profile", other, "unknown kernel")),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(LabError::Config(m));
        if self.instance.n == 0 {
            return fail("instance n must be positive".into());
        }
        if self.instance.kind == InstanceKind::Harmonic && self.instance.n != 1 {
            return fail("the harmonic instance lives in one complex dimension".into());
        }
        if self.eps.is_empty() || self.eps.iter().any(|e| !(*e > 0.0)) {
            return fail(format!(
                "eps ladder must be positive and nonempty: {:?}",
                self.eps
            ));
        }
        if !(self.budget.p > 1.0) {
            return fail(format!("p must exceed 1, got {}", self.budget.p));
        }
        if !(self.modulus.eps0 > 0.0) || !(self.lemma.eps0 > 0.0) {
            return fail("eps0 values must be positive".into());
        }
        Ok(())
    }

    /// `δ` for the sup-norm bound.
    pub fn linfty_delta(&self) -> f64 {
        self.checks
            .delta
            .unwrap_or(0.9 / (self.instance.n as f64 * p_star(self.budget.p)))
    }
}
