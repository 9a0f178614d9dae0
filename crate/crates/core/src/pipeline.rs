//! End-to-end experiment: solve, regularise, measure, certify, and write a
//! report bundle.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use crate::barrier::{build_barrier, linfty_check, BarrierCertificate, BarrierCheck, LinftyReport};
use crate::budget::{budget, HolderBudget};
use crate::config::{ExperimentConfig, InstanceKind};
use crate::domain::{build_grid, Domain, Grid, GridFn, RadialMesh};
use crate::error::{LabError, Result};
use crate::exact::{ma_density, RadialProfile};
use crate::holder::{
    fit_exponent, modulus_with, verify_lemma21, ExponentFit, Lemma21Certificate, ModulusCurve,
    ModulusOptions,
};
use crate::kernel::{Kernel, KernelProfile};
use crate::mollify::{subharmonic_gap, GapTable};
use crate::solver::{solve_poisson_n1, solve_radial};
use crate::taylor::TaylorData;

#[derive(Debug, Clone, Serialize)]
pub struct SolveSummary {
    pub kind: InstanceKind,
    pub n: usize,
    pub resolution: usize,
    /// `sor` for the grid Poisson solver, `radial` for the ODE reduction.
    pub method: &'static str,
    pub iterations: Option<usize>,
    pub residual: f64,
    pub relative_sup_error: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SolvedInstance {
    pub u: GridFn,
    pub f: GridFn,
    pub exact: Option<GridFn>,
    pub summary: SolveSummary,
}

fn harmonic_data(x: &[f64]) -> f64 {
    x[0] * x[0] - x[1] * x[1] + x[0]
}

fn relative_error(u: &GridFn, exact: &GridFn) -> f64 {
    let grid = u.grid();
    let err = grid
        .interior()
        .map(|i| (u.get(i) - exact.get(i)).abs())
        .fold(0.0, f64::max);
    let scale = grid
        .interior()
        .map(|i| exact.get(i).abs())
        .fold(0.0, f64::max);
    if scale > 0.0 {
        err / scale
    } else {
        err
    }
}

pub fn instance_grid(cfg: &ExperimentConfig) -> Result<Arc<Grid>> {
    build_grid(&Domain::unit_ball(cfg.instance.n), cfg.instance.resolution)
}

pub fn instance_profile(cfg: &ExperimentConfig) -> Result<RadialProfile> {
    let ic = &cfg.instance;
    let mesh = RadialMesh::new(ic.n, 1.0, ic.radial_mesh)?;
    RadialProfile::new(ic.n, ic.profile.clone(), ic.scale, mesh)
}

/// Solves the configured instance on its grid.
pub fn solve_instance(cfg: &ExperimentConfig) -> Result<SolvedInstance> {
    let ic = &cfg.instance;
    let grid = instance_grid(cfg)?;
    match ic.kind {
        InstanceKind::Harmonic => {
            let f = GridFn::zeros(&grid);
            let r = solve_poisson_n1(&grid, &f, harmonic_data, &cfg.solver)?;
            let exact = GridFn::from_fn(&grid, harmonic_data)?;
            Ok(SolvedInstance {
                summary: SolveSummary {
                    kind: ic.kind,
                    n: 1,
                    resolution: ic.resolution,
                    method: "sor",
                    iterations: Some(r.iterations),
                    residual: r.residual,
                    relative_sup_error: Some(relative_error(&r.solution, &exact)),
                },
                u: r.solution,
                f,
                exact: Some(exact),
            })
        }
        InstanceKind::Profile => {
            let profile = instance_profile(cfg)?;
            let density = |x: &[f64]| profile.density_at_point(x).unwrap_or(f64::NAN);
            let f = GridFn::sample_density(&grid, density)?;
            let exact = GridFn::from_fn(&grid, |x| profile.eval_point(x))?;
            if ic.n == 1 {
                let r = solve_poisson_n1(&grid, &f, |x| profile.eval_point(x), &cfg.solver)?;
                Ok(SolvedInstance {
                    summary: SolveSummary {
                        kind: ic.kind,
                        n: 1,
                        resolution: ic.resolution,
                        method: "sor",
                        iterations: Some(r.iterations),
                        residual: r.residual,
                        relative_sup_error: Some(relative_error(&r.solution, &exact)),
                    },
                    u: r.solution,
                    f,
                    exact: Some(exact),
                })
            } else {
                let rf = ma_density(&profile)?;
                let r = solve_radial(&rf, profile.phi(1.0))?;
                let ds = r.mesh.ds();
                let last = r.mesh.size;
                let interp = |x: &[f64]| {
                    let s = x.iter().map(|v| v * v).sum::<f64>().min(1.0);
                    let t = s / ds;
                    let i = (t.floor() as usize).min(last - 1);
                    let w = t - i as f64;
                    (1.0 - w) * r.phi[i] + w * r.phi[i + 1]
                };
                let u = GridFn::from_fn(&grid, interp)?;
                Ok(SolvedInstance {
                    summary: SolveSummary {
                        kind: ic.kind,
                        n: ic.n,
                        resolution: ic.resolution,
                        method: "radial",
                        iterations: None,
                        residual: r.residual,
                        relative_sup_error: Some(relative_error(&u, &exact)),
                    },
                    u,
                    f,
                    exact: Some(exact),
                })
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub threshold: f64,
    /// `>=` or `<=`/`>`: how `value` must compare with `threshold`.
    pub relation: &'static str,
    pub pass: bool,
}

impl Check {
    fn at_least(name: &'static str, value: f64, threshold: f64) -> Check {
        Check {
            name,
            value,
            threshold,
            relation: ">=",
            pass: value >= threshold,
        }
    }

    fn above(name: &'static str, value: f64, threshold: f64) -> Check {
        Check {
            name,
            value,
            threshold,
            relation: ">",
            pass: value > threshold,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StageFailure {
    pub stage: &'static str,
    pub error: String,
    /// True when the failure stems from bad input rather than a violated
    /// inequality.
    pub usage: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Trace {
    pub key: String,
    pub value: f64,
    pub anchor: &'static str,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Bundle {
    pub name: String,
    pub seed: u64,
    pub solve: Option<SolveSummary>,
    pub gaps: Option<GapTable>,
    pub modulus: Option<ModulusCurve>,
    pub global_fit: Option<ExponentFit>,
    pub lemma21: Option<Lemma21Certificate>,
    pub budget: Option<HolderBudget>,
    pub barrier: Option<BarrierCertificate>,
    pub linfty: Option<LinftyReport>,
    pub checks: Vec<Check>,
    pub failure: Option<StageFailure>,
    #[serde(skip)]
    pub solution: Option<GridFn>,
}

pub fn is_usage_error(e: &LabError) -> bool {
    matches!(
        e,
        LabError::Config(_)
            | LabError::Parameter(_)
            | LabError::Io { .. }
            | LabError::Format(_)
            | LabError::Shape(_)
    )
}

impl Bundle {
    pub fn passed(&self) -> bool {
        self.failure.is_none() && self.checks.iter().all(|c| c.pass)
    }

    fn fail(&mut self, stage: &'static str, e: LabError) {
        self.failure = Some(StageFailure {
            stage,
            usage: is_usage_error(&e),
            error: e.to_string(),
        });
    }
}

const ANCHOR_SOLVE: &str =
    "Dirichlet problem: det(u_{jk}) = f in the domain, u = phi on its boundary";
const ANCHOR_SUP_GAP: &str = "sup over the shrunk domain of the ball average minus u, bounded by C eps^beta + C eps^((1+beta) gamma)";
const ANCHOR_L1_GAP: &str =
    "L1 distance between the ball average and u over the shrunk domain, bounded by C eps^(1+beta)";
const ANCHOR_GLOBAL: &str = "global Hoelder exponent alpha' = min{beta, (1+beta) gamma}";
const ANCHOR_LEMMA: &str =
    "dyadic iteration: C4 = max{C3, C2/((1-2^(alpha-1)) kappa)}, C = max{C3, 2^alpha C4}";
const ANCHOR_BUDGET: &str = "beta = max{min{gamma'', alpha/(2+alpha)}, min{alpha/2, gamma'}}";
const ANCHOR_BARRIER: &str =
    "local barrier rho with rho(0) = 0 and rho >= |z|^2 near a boundary point";
const ANCHOR_LINFTY: &str = "|inf u| <= |inf phi| + C ||f||_p^(1/n) |Omega|^delta";

impl Bundle {
    /// Every emitted number with the formula it instantiates.
    pub fn traceability(&self) -> Vec<Trace> {
        let mut t = Vec::new();
        let mut push = |key: String, value: f64, anchor| t.push(Trace { key, value, anchor });
        if let Some(s) = &self.solve {
            push("solve.residual".into(), s.residual, ANCHOR_SOLVE);
            if let Some(e) = s.relative_sup_error {
                push("solve.relative_sup_error".into(), e, ANCHOR_SOLVE);
            }
        }
        if let Some(g) = &self.gaps {
            for r in &g.rows {
                push(
                    format!("gaps[{}].sup_gap", r.eps),
                    r.sup_gap,
                    ANCHOR_SUP_GAP,
                );
                push(format!("gaps[{}].l1_gap", r.eps), r.l1_gap, ANCHOR_L1_GAP);
            }
            if let Some(f) = g.sup_fit {
                push("gaps.sup_slope".into(), f.slope, ANCHOR_SUP_GAP);
            }
            if let Some(f) = g.l1_fit {
                push("gaps.l1_slope".into(), f.slope, ANCHOR_L1_GAP);
            }
        }
        if let Some(m) = &self.modulus {
            for (r, w) in m.radii.iter().zip(&m.omega) {
                push(format!("modulus[{r}]"), *w, ANCHOR_GLOBAL);
            }
        }
        if let Some(f) = &self.global_fit {
            push("global_fit.alpha_hat".into(), f.alpha_hat, ANCHOR_GLOBAL);
            push("global_fit.c_hat".into(), f.c_hat, ANCHOR_GLOBAL);
        }
        if let Some(c) = &self.lemma21 {
            for (k, v) in [
                ("c1", c.c1),
                ("c2", c.c2),
                ("kappa", c.kappa),
                ("c3", c.c3),
                ("c4", c.c4),
                ("c", c.c),
            ] {
                push(format!("lemma21.{k}"), v, ANCHOR_LEMMA);
            }
        }
        if let Some(b) = &self.budget {
            for (k, v) in [
                ("gamma_0", b.gamma_0),
                ("gamma_n", b.gamma_n),
                ("beta", b.beta),
                ("alpha_prime", b.alpha_prime),
            ] {
                push(format!("budget.{k}"), v, ANCHOR_BUDGET);
            }
        }
        if let Some(b) = &self.barrier {
            push("barrier.c_bar".into(), b.c_bar, ANCHOR_BARRIER);
            push("barrier.eps_bar".into(), b.eps_bar, ANCHOR_BARRIER);
            push("barrier.margin".into(), b.margin, ANCHOR_BARRIER);
        }
        if let Some(l) = &self.linfty {
            push("linfty.lhs".into(), l.lhs, ANCHOR_LINFTY);
            push("linfty.rhs".into(), l.rhs, ANCHOR_LINFTY);
        }
        for c in &self.checks {
            let anchor = match c.name {
                "global exponent" => ANCHOR_GLOBAL,
                "l1 gap slope" => ANCHOR_L1_GAP,
                "sup gap slope" => ANCHOR_SUP_GAP,
                "lemma21 verdict" => ANCHOR_LEMMA,
                "barrier margin" => ANCHOR_BARRIER,
                _ => ANCHOR_LINFTY,
            };
            push(format!("checks.{}", c.name), c.value, anchor);
        }
        t
    }

    pub fn summary(&self) -> String {
        let mut s = format!("experiment {} (seed {})\n", self.name, self.seed);
        for c in &self.checks {
            s += &format!(
                "{} {:<16} {:.6} {} {:.6}\n",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                c.value,
                c.relation,
                c.threshold
            );
        }
        if let Some(f) = &self.failure {
            s += &format!("stage {} failed: {}\n", f.stage, f.error);
        }
        s
    }

    /// Writes CSVs, certificates, the report and the traceability map.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
        let json = |name: &str, value: &dyn erased::Json| -> Result<()> {
            let path = dir.join(name);
            fs::write(&path, value.to_json()?).map_err(|e| LabError::io(&path, e))
        };
        if let Some(u) = &self.solution {
            u.write_csv(&dir.join("solution.csv"))?;
        }
        if let Some(g) = &self.gaps {
            write_gap_csv(g, &dir.join("gap_table.csv"))?;
        }
        if let Some(m) = &self.modulus {
            write_modulus_csv(m, &dir.join("modulus.csv"))?;
        }
        if let Some(c) = &self.lemma21 {
            json("lemma21.json", c)?;
        }
        if let Some(b) = &self.budget {
            json("budget.json", b)?;
        }
        if let Some(b) = &self.barrier {
            json("barrier.json", b)?;
        }
        json("report.json", self)?;
        json("traceability.json", &self.traceability())?;
        let path = dir.join("summary.txt");
        fs::write(&path, self.summary()).map_err(|e| LabError::io(&path, e))
    }
}

mod erased {
    use serde::Serialize;

    pub trait Json {
        fn to_json(&self) -> crate::error::Result<String>;
    }

    impl<T: Serialize> Json for T {
        fn to_json(&self) -> crate::error::Result<String> {
            Ok(serde_json::to_string_pretty(self)? + "\n")
        }
    }
}

pub fn write_gap_csv(table: &GapTable, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| LabError::Format(e.to_string()))?;
    w.write_record(["eps", "sup_gap", "l1_gap", "nodes", "sup_slope", "l1_slope"])?;
    let slope =
        |f: Option<crate::fit::PowerFit>| f.map(|f| f.slope.to_string()).unwrap_or_default();
    for r in &table.rows {
        w.write_record([
            r.eps.to_string(),
            r.sup_gap.to_string(),
            r.l1_gap.to_string(),
            r.nodes.to_string(),
            slope(table.sup_fit),
            slope(table.l1_fit),
        ])?;
    }
    w.flush().map_err(|e| LabError::io(path, e))
}

pub fn write_modulus_csv(curve: &ModulusCurve, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| LabError::Format(e.to_string()))?;
    w.write_record(["r", "omega"])?;
    for (r, o) in curve.radii.iter().zip(&curve.omega) {
        w.write_record([r.to_string(), o.to_string()])?;
    }
    w.flush().map_err(|e| LabError::io(path, e))
}

/// Plateau-bump kernel in the instance's real dimension.
pub fn lemma_kernel(cfg: &ExperimentConfig) -> Result<Kernel> {
    Kernel::new(
        KernelProfile::PlateauBump {
            inner: cfg.lemma.inner,
        },
        2 * cfg.instance.n,
    )
}

/// Unit-ball barrier at the boundary point `e₁`.
pub fn ball_barrier(n: usize, seed: u64) -> Result<BarrierCertificate> {
    let mut p = vec![Complex64::new(0.0, 0.0); n];
    p[0] = Complex64::new(1.0, 0.0);
    let data = TaylorData::ellipsoid(&vec![1.0; n], &p, 1.0)?;
    let mut base = vec![0.0; 2 * n];
    base[0] = 1.0;
    let check = BarrierCheck {
        seed,
        exact: Some((Domain::unit_ball(n), base)),
        ..Default::default()
    };
    Ok(build_barrier(&data, &check)?.1)
}

pub fn run_pipeline(cfg: &ExperimentConfig) -> Bundle {
    let mut b = Bundle {
        name: cfg.name.clone(),
        seed: cfg.seed,
        ..Default::default()
    };
    macro_rules! stage {
        ($name:literal, $e:expr) => {
            match $e {
                Ok(v) => v,
                Err(e) => {
                    b.fail($name, e);
                    return b;
                }
            }
        };
    }
    let n = cfg.instance.n;
    let solved = stage!("solve", solve_instance(cfg));
    b.solve = Some(solved.summary.clone());
    b.solution = Some(solved.u.clone());
    let u = &solved.u;

    let kernel = stage!("mollify", Kernel::from_spec(&cfg.kernel, 2 * n));
    b.gaps = Some(stage!("mollify", subharmonic_gap(u, &kernel, &cfg.eps)));

    let opts = ModulusOptions {
        seed: cfg.seed,
        offsets_per_shell: cfg.modulus.offsets_per_shell,
        exhaustive: false,
    };
    let curve = stage!(
        "modulus",
        modulus_with(u, cfg.modulus.eps0, cfg.modulus.depth, opts)
    );
    let len = curve.radii.len();
    b.global_fit = Some(stage!("modulus", fit_exponent(&curve, 0..len)));
    b.modulus = Some(curve);

    let lk = stage!("lemma21", lemma_kernel(cfg));
    b.lemma21 = Some(stage!(
        "lemma21",
        verify_lemma21(u, &lk, cfg.lemma.alpha, cfg.lemma.eps0)
    ));

    let (g, gp, gpp) = cfg.budget.resolved(n);
    let bud = stage!(
        "budget",
        budget(cfg.budget.alpha, cfg.budget.p, n, g, gp, gpp)
    );
    b.budget = Some(bud);

    b.barrier = Some(stage!("barrier", ball_barrier(n, cfg.seed)));
    b.linfty = Some(stage!(
        "linfty",
        linfty_check(
            u,
            &solved.f,
            n,
            cfg.budget.p,
            cfg.linfty_delta(),
            cfg.checks.c_chk
        )
    ));

    let fit = b.global_fit.unwrap();
    b.checks.push(Check::at_least(
        "global exponent",
        fit.alpha_hat,
        bud.alpha_prime - 0.05,
    ));
    if let Some(g) = &b.gaps {
        // Gaps of a (discretely) harmonic u are lattice noise; their slope
        // carries no information.
        let h = u.grid().h();
        let scale = u
            .grid()
            .interior()
            .map(|i| u.get(i).abs())
            .fold(0.0, f64::max);
        let floor = h * h * scale.max(1.0);
        if g.rows.iter().all(|r| r.sup_gap <= floor) {
            for name in ["l1 gap slope", "sup gap slope"] {
                b.checks.push(Check {
                    name,
                    value: g.rows.iter().map(|r| r.sup_gap).fold(0.0, f64::max),
                    threshold: floor,
                    relation: "vacuous <=",
                    pass: true,
                });
            }
        } else if let Some(f) = g.l1_fit {
            b.checks.push(Check::at_least(
                "l1 gap slope",
                f.slope,
                1.0 + bud.beta - 0.1,
            ));
        }
        if let (Some(f), false) = (
            g.sup_fit,
            b.checks.iter().any(|c| c.relation.starts_with("vacuous")),
        ) {
            b.checks.push(Check::at_least(
                "sup gap slope",
                f.slope,
                bud.alpha_prime - 0.05,
            ));
        }
    }
    let verdict = b.lemma21.as_ref().is_some_and(|c| c.verdict);
    b.checks.push(Check::above(
        "lemma21 verdict",
        if verdict { 1.0 } else { 0.0 },
        0.0,
    ));
    let margin = b.barrier.as_ref().map_or(f64::NEG_INFINITY, |c| c.margin);
    b.checks.push(Check::above("barrier margin", margin, 0.0));
    let l = b.linfty.unwrap();
    b.checks.push(Check {
        name: "linfty bound",
        value: l.lhs - l.inf_phi,
        threshold: l.c_chk * l.rhs,
        relation: "<=",
        pass: l.pass,
    });
    b
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_instance_is_smooth() {
        let cfg = ExperimentConfig::parse(
            "[instance]\nkind = harmonic\nresolution = 64\n[budget]\nalpha = 1\np = 2\n\
             [mollify]\neps = 0.2, 0.1, 0.05\n[modulus]\neps0 = 0.25\n[lemma]\neps0 = 0.1\n",
        )
        .unwrap();
        let b = run_pipeline(&cfg);
        assert!(b.failure.is_none(), "{:?}", b.failure);
        assert!(b.global_fit.unwrap().alpha_hat >= 0.95);
        assert!(b.passed(), "{}", b.summary());
    }

    #[test]
    fn failure_names_stage() {
        let cfg = ExperimentConfig::parse("[instance]\nresolution = 4\n").unwrap();
        let b = run_pipeline(&cfg);
        let f = b.failure.unwrap();
        assert_eq!(f.stage, "solve");
        assert!(f.usage);
    }
}
