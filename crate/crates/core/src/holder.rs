//! Moduli of continuity, Hölder exponent fits, the dyadic regularisation
//! certificate and the sup-versus-L^r stability ratio.

use rand::rngs::ChaCha8Rng;
use rand::{RngExt, SeedableRng};
use rayon::prelude::*;
use serde::Serialize;

use crate::domain::{unit_sphere_area, GridFn, NormKind, PointKind};
use crate::error::{LabError, Result};
use crate::fit::loglog_fit;
use crate::kernel::Kernel;
use crate::mollify::mollify;

/// Grids with at most this many nodes are scanned exhaustively.
pub const EXHAUSTIVE_LIMIT: usize = 129 * 129;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ModulusMode {
    Exhaustive {
        pairs: u64,
    },
    Sampled {
        seed: u64,
        offsets: usize,
        pairs: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulusOptions {
    pub seed: u64,
    /// Random lattice offsets drawn per dyadic shell in sampled mode.
    pub offsets_per_shell: usize,
    /// Force the exhaustive scan regardless of grid size.
    pub exhaustive: bool,
}

impl Default for ModulusOptions {
    fn default() -> Self {
        ModulusOptions {
            seed: 0x5eed,
            offsets_per_shell: 64,
            exhaustive: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModulusCurve {
    pub eps0: f64,
    /// `r_k = ε₀ / 2^k`, descending.
    pub radii: Vec<f64>,
    pub omega: Vec<f64>,
    pub mode: ModulusMode,
    /// Set when the requested depth went below `2h` and was cut.
    pub truncated: bool,
}

impl ModulusCurve {
    /// Interpolation-free lookup: `ω` at the listed radius closest to `r`.
    pub fn at(&self, r: f64) -> Option<f64> {
        self.radii
            .iter()
            .position(|&x| (x / r - 1.0).abs() < 1e-9)
            .map(|k| self.omega[k])
    }
}

/// Lattice offsets with `0 < |δ|h ≤ r_max`, one of each `±δ` pair.
fn half_offsets(dim: usize, m: i64) -> Vec<Vec<i64>> {
    let side = (2 * m + 1) as usize;
    let mut out = Vec::new();
    for code in 0..side.pow(dim as u32) {
        let mut rest = code;
        let mut off = vec![0i64; dim];
        for o in off.iter_mut() {
            *o = (rest % side) as i64 - m;
            rest /= side;
        }
        // Keep offsets whose last nonzero coordinate is positive.
        match off.iter().rev().find(|&&v| v != 0) {
            Some(&v) if v > 0 => {}
            _ => continue,
        }
        if off.iter().map(|v| v * v).sum::<i64>() <= m * m {
            out.push(off);
        }
    }
    out
}

/// Node pairs use interior nodes only; exterior boundary nodes sit up to one
/// cell outside `Ω`.
struct Anchors {
    nodes: Vec<usize>,
    /// Axis indices, `dim` per node.
    axes: Vec<i64>,
}

impl Anchors {
    fn new(u: &GridFn) -> Anchors {
        let grid = u.grid();
        let d = grid.dim();
        let nodes: Vec<usize> = grid.interior().collect();
        let mut axes = Vec::with_capacity(nodes.len() * d);
        for &i in &nodes {
            for k in 0..d {
                axes.push(grid.axis_index(i, k) as i64);
            }
        }
        Anchors { nodes, axes }
    }

    fn max_increment(&self, u: &GridFn, off: &[i64]) -> f64 {
        let grid = u.grid();
        let d = off.len();
        let n = grid.per_axis() as i64;
        let delta = grid.offset_delta(off);
        let vals = u.values();
        let mut best = 0.0f64;
        'node: for (a, &i) in self.nodes.iter().enumerate() {
            for k in 0..d {
                let t = self.axes[a * d + k] + off[k];
                if t < 0 || t >= n {
                    continue 'node;
                }
            }
            let j = (i as i64 + delta) as usize;
            if grid.kind(j) == PointKind::Interior {
                best = best.max((vals[i] - vals[j]).abs());
            }
        }
        best
    }
}

pub fn modulus(u: &GridFn, eps0: f64, s_max: usize) -> Result<ModulusCurve> {
    modulus_with(u, eps0, s_max, ModulusOptions::default())
}

/// `ω(r_k) = sup { |u(x) − u(y)| : |x − y| ≤ r_k }` over interior nodes for
/// `r_k = ε₀/2^k`, `k = 0..=s_max`, truncated where `r_k < 2h`.
pub fn modulus_with(
    u: &GridFn,
    eps0: f64,
    s_max: usize,
    opts: ModulusOptions,
) -> Result<ModulusCurve> {
    let grid = u.grid();
    let h = grid.h();
    if !(eps0 > 0.0 && eps0.is_finite()) {
        return Err(LabError::Parameter(format!(
            "eps0 must be positive, got {eps0}"
        )));
    }
    let mut radii = Vec::new();
    let mut truncated = false;
    for k in 0..=s_max {
        let r = eps0 / 2f64.powi(k as i32);
        if r < 2.0 * h * (1.0 - 1e-12) {
            truncated = true;
            break;
        }
        radii.push(r);
    }
    if radii.is_empty() {
        return Err(LabError::Parameter(format!(
            "eps0 = {eps0} is below two grid cells ({})",
            2.0 * h
        )));
    }
    let d = grid.dim();
    let m = (eps0 / h + 1e-9).floor() as i64;
    let all = half_offsets(d, m);
    let len2 = |o: &Vec<i64>| o.iter().map(|v| v * v).sum::<i64>() as f64 * h * h;
    let exhaustive = opts.exhaustive || grid.len() <= EXHAUSTIVE_LIMIT;
    let offsets: Vec<Vec<i64>> = if exhaustive {
        all
    } else {
        // Per shell (r_{k+1}, r_k]: the axis extremes plus a seeded sample.
        // The innermost ball is always scanned in full.
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let last = *radii.last().unwrap();
        let mut picked: Vec<Vec<i64>> = all
            .iter()
            .filter(|o| len2(o) <= last * last * (1.0 + 1e-12))
            .cloned()
            .collect();
        for w in radii.windows(2) {
            let (outer, inner) = (w[0], w[1]);
            let shell: Vec<&Vec<i64>> = all
                .iter()
                .filter(|o| {
                    let l = len2(o);
                    l > inner * inner * (1.0 + 1e-12) && l <= outer * outer * (1.0 + 1e-12)
                })
                .collect();
            let mo = (outer / h + 1e-9).floor() as i64;
            for k in 0..d {
                let mut axis = vec![0i64; d];
                axis[k] = mo;
                picked.push(axis);
            }
            if shell.len() <= opts.offsets_per_shell {
                picked.extend(shell.into_iter().cloned());
            } else {
                for _ in 0..opts.offsets_per_shell {
                    picked.push(shell[rng.random_range(0..shell.len())].clone());
                }
            }
        }
        picked.sort();
        picked.dedup();
        picked
    };
    let anchors = Anchors::new(u);
    let incs: Vec<f64> = offsets
        .par_iter()
        .map(|o| anchors.max_increment(u, o))
        .collect();
    let omega: Vec<f64> = radii
        .iter()
        .map(|&r| {
            offsets
                .iter()
                .zip(&incs)
                .filter(|(o, _)| len2(o) <= r * r * (1.0 + 1e-12))
                .fold(0.0, |acc, (_, &v)| f64::max(acc, v))
        })
        .collect();
    let pairs = (anchors.nodes.len() * offsets.len()) as u64;
    let mode = if exhaustive {
        ModulusMode::Exhaustive { pairs }
    } else {
        ModulusMode::Sampled {
            seed: opts.seed,
            offsets: offsets.len(),
            pairs,
        }
    };
    Ok(ModulusCurve {
        eps0,
        radii,
        omega,
        mode,
        truncated,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentFit {
    pub alpha_hat: f64,
    pub c_hat: f64,
    pub residual: f64,
    pub points: usize,
}

/// Least-squares slope of `log ω` against `log r` over curve indices
/// `k_range` (clamped to the curve).
pub fn fit_exponent(curve: &ModulusCurve, k_range: std::ops::Range<usize>) -> Result<ExponentFit> {
    let hi = k_range.end.min(curve.radii.len());
    let lo = k_range.start.min(hi);
    if hi - lo < 3 {
        return Err(LabError::DegenerateFit(format!(
            "need at least 3 radii, have {}",
            hi - lo
        )));
    }
    let r = &curve.radii[lo..hi];
    let w = &curve.omega[lo..hi];
    if w.iter().any(|&v| !(v > 0.0)) {
        return Err(LabError::DegenerateFit(
            "modulus vanishes on the fit window".into(),
        ));
    }
    let fit = loglog_fit(r, w)?;
    Ok(ExponentFit {
        alpha_hat: fit.slope,
        c_hat: fit.constant,
        residual: fit.residual,
        points: hi - lo,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapScale {
    pub eps: f64,
    pub sup_gap: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConclusionRow {
    pub r: f64,
    pub omega: f64,
    pub bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReplayStep {
    pub r: f64,
    pub omega_r: f64,
    pub omega_2r: f64,
    /// `ω(2r) ≤ C₄(2r)^α`.
    pub hypothesis: bool,
    /// `ω(r) ≤ max{2C₁(R+1)^α r^α, 2C₂r^α + κω(2r) + (1−2κ)ω(r)}`.
    pub key_inequality: bool,
    /// `ω(r) ≤ C₄ r^α`.
    pub conclusion: bool,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lemma21Certificate {
    pub alpha: f64,
    pub eps0: f64,
    /// Dilation applied so the plateau contains a ball of radius 3.
    pub dilation: f64,
    /// Support radius of the dilated kernel.
    pub support: f64,
    pub diameter: f64,
    pub c1: f64,
    pub c2: f64,
    pub c2_scales: Vec<GapScale>,
    pub kappa: f64,
    pub delta: f64,
    pub c3: f64,
    pub c4: f64,
    pub c: f64,
    pub curve: ModulusCurve,
    pub conclusion: Vec<ConclusionRow>,
    pub replay: Vec<ReplayStep>,
    pub restriction: String,
    pub verdict: bool,
}

/// Factor absorbing grid quantisation of `|x − y|` in the conclusion check.
pub const CONCLUSION_SLACK: f64 = 1.05;

/// `κ = ∫ g dμ` with `g(z) = ½ inf_{B₁(z)} η`; for radial nonincreasing `η`
/// the infimum is `η(|z| + 1)`.
pub fn plateau_kappa(kernel: &Kernel) -> f64 {
    let d = kernel.dim();
    let top = kernel.support() - 1.0;
    if top <= 0.0 {
        return 0.0;
    }
    let m = 20_000;
    let step = top / m as f64;
    let g = |r: f64| 0.5 * kernel.eval_radius(r + 1.0) * r.powi(d as i32 - 1);
    let mut s = g(0.0) + g(top);
    for i in 1..m {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * g(i as f64 * step);
    }
    unit_sphere_area(d) * s * step / 3.0
}

/// Measures the two hypotheses, assembles `C₃, C₄, C` and checks the
/// conclusion on the measured modulus.
pub fn verify_lemma21(
    u: &GridFn,
    kernel: &Kernel,
    alpha: f64,
    eps0: f64,
) -> Result<Lemma21Certificate> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(LabError::Parameter(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    if !(eps0 > 0.0 && eps0.is_finite()) {
        return Err(LabError::Parameter(format!(
            "eps0 must be positive, got {eps0}"
        )));
    }
    let a = kernel.plateau_radius();
    if a <= 0.0 || kernel.plateau_delta() <= 0.0 {
        return Err(LabError::KernelInadmissible(
            "kernel has no plateau on which it is bounded below; use a plateau bump".into(),
        ));
    }
    let dilation = if a < 3.0 { 3.0 / a } else { 1.0 };
    let eta = kernel.dilated(dilation);
    let kappa = plateau_kappa(&eta);
    if !(kappa > 0.0) {
        return Err(LabError::KernelInadmissible(format!(
            "plateau constant vanishes (κ = {kappa}); use a plateau bump"
        )));
    }
    let support = eta.support();
    let grid = u.grid();
    let domain = grid.domain();
    let diameter = domain.diameter();

    // Hypothesis (1): interior nodes against boundary projection points.
    let boundary: Vec<(Vec<f64>, f64)> = grid
        .boundary()
        .map(|b| (domain.project(&grid.coords(b)), u.get(b)))
        .collect();
    let interior: Vec<usize> = grid.interior().collect();
    let c1 = interior
        .par_iter()
        .map(|&i| {
            let x = grid.coords(i);
            let ux = u.get(i);
            boundary.iter().fold(0.0f64, |acc, (y, uy)| {
                let dist = x
                    .iter()
                    .zip(y)
                    .map(|(p, q)| (p - q) * (p - q))
                    .sum::<f64>()
                    .sqrt();
                if dist > 0.0 {
                    acc.max((ux - uy).abs() / dist.powf(alpha))
                } else {
                    acc
                }
            })
        })
        .reduce(|| 0.0, f64::max);

    // Hypothesis (2) along dyadic scales, while the dilated kernel resolves.
    let mut c2_scales = Vec::new();
    let mut eps = eps0;
    while support * eps >= 2.0 * grid.h() {
        if let Ok(m) = mollify(u, &eta, eps) {
            let sup_gap = m
                .region
                .members()
                .iter()
                .map(|&i| (m.values.get(i) - u.get(i)).abs())
                .fold(0.0, f64::max);
            c2_scales.push(GapScale {
                eps,
                sup_gap,
                ratio: sup_gap / eps.powf(alpha),
            });
        }
        eps /= 2.0;
    }
    if c2_scales.is_empty() {
        return Err(LabError::Domain(format!(
            "no dyadic scale up to {eps0} leaves a nonempty shrunk domain"
        )));
    }
    let c2 = c2_scales.iter().map(|s| s.ratio).fold(0.0, f64::max);

    let edge = 2.0 * c1 * (support + 1.0).powf(alpha);
    let c3 = edge * (diameter / eps0).powf(alpha);
    let c4 = c3.max(c2 / ((1.0 - 2f64.powf(alpha - 1.0)) * kappa));
    let c = c3.max(2f64.powf(alpha) * c4);

    // Modulus from 2ε₀ down, so every replay step has ω(2r).
    let depth = 64;
    let curve = modulus(u, 2.0 * eps0, depth)?;
    let conclusion: Vec<ConclusionRow> = curve
        .radii
        .iter()
        .zip(&curve.omega)
        .filter(|(r, _)| **r <= eps0 * (1.0 + 1e-12))
        .map(|(&r, &omega)| {
            let bound = c * r.powf(alpha);
            ConclusionRow {
                r,
                omega,
                bound,
                holds: omega <= CONCLUSION_SLACK * bound,
            }
        })
        .collect();
    let replay: Vec<ReplayStep> = curve
        .omega
        .windows(2)
        .zip(curve.radii.iter().skip(1))
        .map(|(w, &r)| {
            let (omega_2r, omega_r) = (w[0], w[1]);
            let ra = r.powf(alpha);
            let hypothesis = omega_2r <= c4 * (2.0 * r).powf(alpha);
            let key_rhs =
                (edge * ra).max(2.0 * c2 * ra + kappa * omega_2r + (1.0 - 2.0 * kappa) * omega_r);
            let key_inequality = omega_r <= key_rhs * (1.0 + 1e-12);
            let conclusion = omega_r <= c4 * ra;
            ReplayStep {
                r,
                omega_r,
                omega_2r,
                hypothesis,
                key_inequality,
                conclusion,
                holds: key_inequality && (!hypothesis || conclusion),
            }
        })
        .collect();
    let verdict = c1.is_finite()
        && c2.is_finite()
        && !conclusion.is_empty()
        && conclusion.iter().all(|r| r.holds)
        && replay.iter().all(|s| s.holds);
    Ok(Lemma21Certificate {
        alpha,
        eps0,
        dilation,
        support,
        diameter,
        c1,
        c2,
        c2_scales,
        kappa,
        delta: eta.plateau_delta(),
        c3,
        c4,
        c,
        curve,
        conclusion,
        replay,
        restriction: "key inequality replayed on the measured global modulus; \
                      reflected points 2x - z - y are never evaluated pointwise"
            .into(),
        verdict,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityReport {
    /// `sup (v − u)`, floored at zero.
    pub lhs: f64,
    /// `‖(v − u)₊‖_{L^r}`.
    pub rhs_norm: f64,
    pub ratio: f64,
    pub gamma: f64,
}

/// Largest admissible exponent `r/(np* + r)` (exclusive).
pub fn stability_gamma_bound(n: usize, p: f64, r: f64) -> f64 {
    let p_star = p / (p - 1.0);
    r / (n as f64 * p_star + r)
}

pub fn stability_check(
    u: &GridFn,
    v: &GridFn,
    r: f64,
    gamma: f64,
    n: usize,
    p: f64,
) -> Result<StabilityReport> {
    if !(p > 1.0) || !(r >= 1.0) {
        return Err(LabError::Parameter(format!(
            "need p > 1 and r ≥ 1, got p = {p}, r = {r}"
        )));
    }
    let bound = stability_gamma_bound(n, p, r);
    if !(0.0..bound).contains(&gamma) {
        return Err(LabError::Parameter(format!(
            "gamma = {gamma} outside [0, {bound})"
        )));
    }
    if !u.same_grid(v) {
        return Err(LabError::Shape("u and v live on different grids".into()));
    }
    let grid = u.grid();
    let tol = 1e-12 * u.norm(NormKind::Sup)?.max(1.0);
    if let Some(b) = grid.boundary().find(|&b| v.get(b) > u.get(b) + tol) {
        return Err(LabError::Precondition(format!(
            "v exceeds u on the boundary at {:?}",
            grid.coords(b)
        )));
    }
    let diff = v.zip_with(u, |a, b| (a - b).max(0.0))?;
    let lhs = grid.interior().map(|i| diff.get(i)).fold(0.0, f64::max);
    let kind = if r == 1.0 {
        NormKind::L1
    } else {
        NormKind::Lp(r)
    };
    let rhs_norm = diff.norm_over(kind, grid.interior())?;
    let ratio = if rhs_norm > 0.0 {
        lhs / rhs_norm.powf(gamma)
    } else {
        0.0
    };
    Ok(StabilityReport {
        lhs,
        rhs_norm,
        ratio,
        gamma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_grid, Domain};
    use crate::kernel::KernelProfile;
    use std::sync::Arc;

    fn disk(res: usize) -> Arc<crate::domain::Grid> {
        build_grid(&Domain::unit_ball(1), res).unwrap()
    }

    fn radial_power(res: usize, a: f64) -> GridFn {
        GridFn::from_fn(&disk(res), |x| x[0].hypot(x[1]).powf(a)).unwrap()
    }

    #[test]
    fn sqrt_exponent_exhaustive() {
        let u = radial_power(128, 0.5);
        let c = modulus(&u, 0.5, 10).unwrap();
        assert!(matches!(c.mode, ModulusMode::Exhaustive { .. }));
        assert!(c.truncated);
        let fit = fit_exponent(&c, 0..c.radii.len()).unwrap();
        assert!((fit.alpha_hat - 0.5).abs() < 0.05, "{fit:?}");
        assert!(c.omega.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn sampled_mode_matches_exhaustive() {
        let u = radial_power(192, 0.5);
        let s = modulus(&u, 0.25, 6).unwrap();
        assert!(matches!(s.mode, ModulusMode::Sampled { .. }));
        let e = modulus_with(
            &u,
            0.25,
            6,
            ModulusOptions {
                exhaustive: true,
                ..Default::default()
            },
        )
        .unwrap();
        for (a, b) in s.omega.iter().zip(&e.omega) {
            assert!(a <= b && (b - a) / b < 0.02, "{a} {b}");
        }
    }

    #[test]
    fn constant_is_degenerate() {
        let u = GridFn::from_fn(&disk(32), |_| 2.0).unwrap();
        let c = modulus(&u, 0.5, 3).unwrap();
        assert!(c.omega.iter().all(|&w| w == 0.0));
        assert!(matches!(
            fit_exponent(&c, 0..4),
            Err(LabError::DegenerateFit(_))
        ));
    }

    #[test]
    fn affine_is_lipschitz() {
        // Radii down to 8h: lattice directions only approximate the
        // gradient at a few cells.
        let u = GridFn::from_fn(&disk(128), |x| 0.6 * x[0] - 0.8 * x[1]).unwrap();
        let c = modulus(&u, 0.5, 2).unwrap();
        let fit = fit_exponent(&c, 0..3).unwrap();
        assert!((fit.alpha_hat - 1.0).abs() < 0.02, "{fit:?}");
    }

    #[test]
    fn fit_windows() {
        let radii: Vec<f64> = (0..6).map(|k| 0.5f64.powi(k)).collect();
        let curve = |f: &dyn Fn(f64) -> f64, radii: &[f64]| ModulusCurve {
            eps0: radii[0],
            radii: radii.to_vec(),
            omega: radii.iter().map(|&r| f(r)).collect(),
            mode: ModulusMode::Exhaustive { pairs: 0 },
            truncated: false,
        };
        let fit = fit_exponent(&curve(&|r| r.powf(0.7), &radii), 0..6).unwrap();
        assert!((fit.alpha_hat - 0.7).abs() < 1e-12 && fit.residual < 1e-10);
        let window: Vec<f64> = (3..=8).map(|k| 0.5f64.powi(k)).collect();
        let fit = fit_exponent(&curve(&|r| r + r * r, &window), 0..6).unwrap();
        assert!((1.0..=1.1).contains(&fit.alpha_hat), "{fit:?}");
        assert!(fit_exponent(&curve(&|r| r, &radii), 0..2).is_err());
    }

    #[test]
    fn lemma_on_sqrt_cone() {
        let u = radial_power(128, 0.5);
        let k = Kernel::new(KernelProfile::PlateauBump { inner: 0.5 }, 2).unwrap();
        let cert = verify_lemma21(&u, &k, 0.5, 0.05).unwrap();
        assert!((cert.c1 - 1.0).abs() < 0.05, "{}", cert.c1);
        assert!(cert.kappa > 0.0 && cert.c >= cert.c3 && cert.c >= cert.c4);
        assert!(cert.verdict, "{cert:#?}");
    }

    #[test]
    fn lemma_on_affine() {
        let u = GridFn::from_fn(&disk(128), |x| 0.2 + x[0] + 0.5 * x[1]).unwrap();
        let k = Kernel::new(KernelProfile::PlateauBump { inner: 0.5 }, 2).unwrap();
        let cert = verify_lemma21(&u, &k, 0.9, 0.1).unwrap();
        assert!(cert.c2 < 1e-9);
        assert_eq!(cert.c4, cert.c3);
        assert!(cert.verdict, "{cert:#?}");
    }

    #[test]
    fn lemma_rejects_plateau_free_kernel() {
        let u = radial_power(32, 0.5);
        let k = Kernel::with_plateau(KernelProfile::SmoothBump, 2, Some(0.0)).unwrap();
        assert!(matches!(
            verify_lemma21(&u, &k, 0.5, 0.1),
            Err(LabError::KernelInadmissible(_))
        ));
        let k = Kernel::new(KernelProfile::SmoothBump, 2).unwrap();
        assert!(matches!(
            verify_lemma21(&u, &k, 1.0, 0.1),
            Err(LabError::Parameter(_))
        ));
    }

    #[test]
    fn stability_guards() {
        let grid = disk(32);
        let u = GridFn::from_fn(&grid, |x| x[0] * x[0] + x[1] * x[1]).unwrap();
        let same = stability_check(&u, &u, 1.0, 0.3, 1, 2.0).unwrap();
        assert_eq!((same.lhs, same.ratio), (0.0, 0.0));
        let lifted = u.map(|v| v + 0.1);
        assert!(matches!(
            stability_check(&u, &lifted, 1.0, 0.3, 1, 2.0),
            Err(LabError::Precondition(_))
        ));
        assert!(matches!(
            stability_check(&u, &u, 1.0, 0.34, 1, 2.0),
            Err(LabError::Parameter(_))
        ));
    }

    #[test]
    fn stability_ratio_under_halving() {
        let grid = disk(64);
        let u = GridFn::from_fn(&grid, |x| x[0] * x[0] + x[1] * x[1]).unwrap();
        let ratios: Vec<f64> = (0..4)
            .map(|k| {
                let a = 0.5 / 2f64.powi(k);
                let v = GridFn::from_fn(&grid, |x| {
                    let s = x[0] * x[0] + x[1] * x[1];
                    s + a * (1.0 - s) * (1.0 - s)
                })
                .unwrap();
                stability_check(&u, &v, 1.0, 0.3, 1, 2.0).unwrap().ratio
            })
            .collect();
        for w in ratios.windows(2) {
            assert!(w[0] / w[1] < 3.0 && w[1] / w[0] < 3.0, "{ratios:?}");
        }
    }
}
