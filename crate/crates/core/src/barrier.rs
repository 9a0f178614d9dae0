//! Local barriers at boundary points, the boundary estimate chain and the
//! sup-norm bound.

use rand::rngs::ChaCha8Rng;
use rand::{RngExt, SeedableRng};
use serde::Serialize;

use crate::budget::HolderBudget;
use crate::domain::{Domain, GridFn, NormKind};
use crate::error::{LabError, Result};
use crate::taylor::TaylorData;

/// `ρ(w) = −C (Re(a·w) + Re(b w w) + (c − εI) w w̄)` in coordinates centred
/// at the boundary point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Barrier {
    pub data: TaylorData,
    pub eps_bar: f64,
    pub c_bar: f64,
    pub r0: f64,
}

impl Barrier {
    pub fn eval(&self, w: &[f64]) -> f64 {
        -self.c_bar * self.data.eval_with(w, self.eps_bar, 1.0)
    }

    /// Unit inward normal at the origin, `−∇ Re(a·w)` normalised.
    pub fn inward_normal(&self) -> Vec<f64> {
        inward_normal(&self.data)
    }
}

fn inward_normal(data: &TaylorData) -> Vec<f64> {
    let mut g: Vec<f64> = data.a.iter().flat_map(|a| [-a.re, a.im]).collect();
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    g.iter_mut().for_each(|v| *v /= norm);
    g
}

#[derive(Debug, Clone, Serialize)]
pub struct BarrierCertificate {
    pub eps_bar: f64,
    pub c_bar: f64,
    pub r0: f64,
    /// `min (ρ − |w|²)/|w|²` over the verification sample.
    pub margin: f64,
    pub samples: usize,
    /// Smallest eigenvalue of `c − ε I`.
    pub shrunk_min_eigenvalue: f64,
    /// `(C, r₀, margin)` for every ladder rung tried.
    pub ladder: Vec<(f64, f64, f64)>,
}

/// Where the verification sample must lie: the exact domain (shifted so the
/// boundary point is the origin) or the Taylor quadric `{q < 0}`.
#[derive(Debug, Clone)]
pub struct BarrierCheck {
    pub samples: usize,
    pub seed: u64,
    pub exact: Option<(Domain, Vec<f64>)>,
}

impl Default for BarrierCheck {
    fn default() -> Self {
        BarrierCheck {
            samples: 10_000,
            seed: 0xba77,
            exact: None,
        }
    }
}

pub const C_BAR_MAX: f64 = 1048576.0;
pub const R0_MIN: f64 = 1e-4;

fn verification_sample(data: &TaylorData, check: &BarrierCheck, r0: f64) -> Vec<Vec<f64>> {
    let d = data.real_dim();
    let inside = |w: &[f64]| match &check.exact {
        Some((dom, base)) => {
            let x: Vec<f64> = w.iter().zip(base).map(|(a, b)| a + b).collect();
            dom.contains(&x)
        }
        None => data.eval(w) < 0.0,
    };
    let mut out = Vec::with_capacity(check.samples + 64);
    let normal = inward_normal(data);
    for k in 1..=40 {
        let t = r0 * 0.5f64.powi(k);
        let w: Vec<f64> = normal.iter().map(|v| v * t).collect();
        if inside(&w) {
            out.push(w);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(check.seed);
    let mut w = vec![0.0; d];
    let mut attempts = 0usize;
    while out.len() < check.samples && attempts < 400 * check.samples {
        attempts += 1;
        for v in w.iter_mut() {
            *v = rng.random_range(-r0..r0);
        }
        let n2: f64 = w.iter().map(|v| v * v).sum();
        if n2 > 0.0 && n2 <= r0 * r0 && inside(&w) {
            out.push(w.clone());
        }
    }
    out
}

/// Chooses `ε = λ_min(c)/2`, then the smallest `C` on `{1, 2, 4, …}` and the
/// largest `r₀` on `{r₀, r₀/2, …}` with `ρ > |w|²` on the sample.
pub fn build_barrier(
    data: &TaylorData,
    check: &BarrierCheck,
) -> Result<(Barrier, BarrierCertificate)> {
    data.validate()?;
    if data.a.iter().all(|a| a.norm() == 0.0) {
        return Err(LabError::BarrierFailure(
            "linear part vanishes, so the origin is not a smooth boundary point".into(),
        ));
    }
    let lambda_min = data.hermitian_eigenvalues(0.0)[0];
    let eps_bar = lambda_min / 2.0;
    let shrunk = data.hermitian_eigenvalues(eps_bar)[0];
    if !(shrunk > 0.0) {
        return Err(LabError::BarrierFailure(format!(
            "c - eps I is not positive definite (min eigenvalue {shrunk})"
        )));
    }
    let mut ladder = Vec::new();
    let mut r0 = data.r0;
    while r0 >= R0_MIN {
        let sample = verification_sample(data, check, r0);
        if !sample.is_empty() {
            // q(w) = −ρ/C, so the margin at scale C is min (C q − |w|²)/|w|².
            let pairs: Vec<(f64, f64)> = sample
                .iter()
                .map(|w| {
                    (
                        -data.eval_with(w, eps_bar, 1.0),
                        w.iter().map(|v| v * v).sum(),
                    )
                })
                .collect();
            let mut c = 1.0;
            while c <= C_BAR_MAX {
                let margin = pairs
                    .iter()
                    .map(|(q, n2)| (c * q - n2) / n2)
                    .fold(f64::INFINITY, f64::min);
                ladder.push((c, r0, margin));
                if margin > 0.0 {
                    let barrier = Barrier {
                        data: data.clone(),
                        eps_bar,
                        c_bar: c,
                        r0,
                    };
                    let cert = BarrierCertificate {
                        eps_bar,
                        c_bar: c,
                        r0,
                        margin,
                        samples: sample.len(),
                        shrunk_min_eigenvalue: shrunk,
                        ladder,
                    };
                    return Ok((barrier, cert));
                }
                c *= 2.0;
            }
        }
        r0 /= 2.0;
    }
    let best = ladder.iter().map(|l| l.2).fold(f64::NEG_INFINITY, f64::max);
    Err(LabError::BarrierFailure(format!(
        "ladder exhausted (C up to {C_BAR_MAX}, r0 down to {R0_MIN}); best margin {best}"
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainParams {
    /// Sup-norm bound `M` of the solution.
    pub m: f64,
    /// Hölder constant `L` of the boundary data.
    pub l: f64,
    /// `‖f‖_{L^p}`.
    pub f_norm: f64,
    /// Comparison constant multiplying the barrier and density terms.
    pub c_cmp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ChainOutcome {
    Chain {
        dist: f64,
        r: f64,
        eps: f64,
        a: f64,
        delta: f64,
        /// `L r^α`, `C (M/r²) ρ(x₀)`, `C ‖f‖^{1/n} r^{2β/(1−β)}`.
        addends: [f64; 3],
        /// `addend / |x₀|^β`.
        ratios: [f64; 3],
        lower_bound: f64,
    },
    Trivial {
        dist: f64,
        r: f64,
        bound: f64,
    },
    Inapplicable {
        condition: String,
    },
}

/// Lower bound on `u(x₀)` for `x₀` near the boundary point (local
/// coordinates), with `r = |x₀|^{(1−β)/2}`.
pub fn boundary_chain(
    x0: &[f64],
    budget: &HolderBudget,
    barrier: &Barrier,
    params: ChainParams,
) -> Result<ChainOutcome> {
    let beta = budget.beta;
    let alpha = budget.alpha;
    if !(beta < budget.gamma_0) {
        return Ok(ChainOutcome::Inapplicable {
            condition: format!("beta < gamma_0 fails ({beta} >= {})", budget.gamma_0),
        });
    }
    if beta > budget.ratio * (1.0 + 1e-12) {
        return Ok(ChainOutcome::Inapplicable {
            condition: format!("beta <= alpha/(2+alpha) fails ({beta} > {})", budget.ratio),
        });
    }
    if x0.len() != barrier.data.real_dim() {
        return Err(LabError::Shape("x0 has the wrong dimension".into()));
    }
    let dist = x0.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(dist > 0.0) {
        return Err(LabError::Parameter(
            "x0 must differ from the boundary point".into(),
        ));
    }
    let r = dist.powf((1.0 - beta) / 2.0);
    let k = 2.0 * beta / (1.0 - beta);
    if r > barrier.r0 {
        return Ok(ChainOutcome::Trivial {
            dist,
            r,
            bound: params.m * barrier.r0.powf(-k) * dist.powf(beta),
        });
    }
    let n = budget.n as f64;
    let eps = params.l * r.powf(alpha);
    let a = params.m / (r * r);
    let addends = [
        eps,
        params.c_cmp * a * barrier.eval(x0),
        params.c_cmp * params.f_norm.powf(1.0 / n) * r.powf(k),
    ];
    let scale = dist.powf(beta);
    Ok(ChainOutcome::Chain {
        dist,
        r,
        eps,
        a,
        delta: beta / (n * (1.0 - beta)),
        addends,
        ratios: addends.map(|v| v / scale),
        lower_bound: -addends.iter().sum::<f64>(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinftyReport {
    /// `|inf u|`.
    pub lhs: f64,
    /// `|inf φ|`.
    pub inf_phi: f64,
    /// `‖f‖_{L^p}^{1/n} |Ω|^δ`.
    pub rhs: f64,
    pub c_chk: f64,
    pub pass: bool,
    /// Smallest constant that would pass, `(lhs − |inf φ|)₊ / rhs`.
    pub required: f64,
}

/// Checks `|inf u| ≤ |inf φ| + C ‖f‖_p^{1/n} |Ω|^δ`, reading `φ` from the
/// boundary nodes of `u`.
pub fn linfty_check(
    u: &GridFn,
    f: &GridFn,
    n: usize,
    p: f64,
    delta: f64,
    c_chk: f64,
) -> Result<LinftyReport> {
    if !(p > 1.0) {
        return Err(LabError::Parameter(format!("p = {p} must exceed 1")));
    }
    let bound = 1.0 / (n as f64 * crate::budget::p_star(p));
    if !(delta > 0.0 && delta < bound) {
        return Err(LabError::Parameter(format!(
            "delta = {delta} outside (0, {bound})"
        )));
    }
    if !u.same_grid(f) {
        return Err(LabError::Shape("u and f live on different grids".into()));
    }
    let grid = u.grid();
    let inf_u = u.interior_min().min(u.boundary_min());
    let inf_phi = u.boundary_min();
    let f_norm = f.norm_over(NormKind::Lp(p), grid.interior())?;
    let rhs = f_norm.powf(1.0 / n as f64) * grid.domain().volume().powf(delta);
    let lhs = inf_u.abs();
    let slack = lhs - inf_phi.abs();
    Ok(LinftyReport {
        lhs,
        inf_phi: inf_phi.abs(),
        rhs,
        c_chk,
        pass: slack <= c_chk * rhs + 1e-12,
        required: if rhs > 0.0 { slack.max(0.0) / rhs } else { 0.0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::budget::budget;
    use crate::domain::build_grid;
    use num_complex::Complex64;

    fn ball_data(n: usize) -> (TaylorData, Domain, Vec<f64>) {
        let mut p = vec![Complex64::new(0.0, 0.0); n];
        p[0] = Complex64::new(1.0, 0.0);
        let data = TaylorData::ellipsoid(&vec![1.0; n], &p, 1.0).unwrap();
        let mut base = vec![0.0; 2 * n];
        base[0] = 1.0;
        (data, Domain::unit_ball(n), base)
    }

    #[test]
    fn unit_ball_barrier() {
        let (data, dom, base) = ball_data(2);
        assert!((data.a[0] - Complex64::new(2.0, 0.0)).norm() < 1e-15);
        let check = BarrierCheck {
            exact: Some((dom, base)),
            ..Default::default()
        };
        let (b, cert) = build_barrier(&data, &check).unwrap();
        assert!(cert.margin > 0.0 && cert.samples >= 10_000);
        assert!(cert.shrunk_min_eigenvalue > 0.0);
        assert_eq!(b.eps_bar, 0.5);
        assert!(b.c_bar <= 4.0);
        assert_eq!(b.eval(&[0.0; 4]), 0.0);
    }

    #[test]
    fn ellipsoid_barrier() {
        let w = [2.0, 1.0];
        let p = [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)];
        let data = TaylorData::ellipsoid(&w, &p, 0.5).unwrap();
        let (_, cert) = build_barrier(&data, &BarrierCheck::default()).unwrap();
        assert!(cert.margin > 0.0);
    }

    #[test]
    fn interior_like_point_fails() {
        let z = Complex64::new(0.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        let data = TaylorData::new(vec![z], vec![vec![z]], vec![vec![one]], 1.0).unwrap();
        assert!(matches!(
            build_barrier(&data, &BarrierCheck::default()),
            Err(LabError::BarrierFailure(_))
        ));
    }

    #[test]
    fn chain_addends_scale_like_beta() {
        let (data, dom, base) = ball_data(2);
        let check = BarrierCheck {
            samples: 2000,
            exact: Some((dom, base)),
            ..Default::default()
        };
        let (b, _) = build_barrier(&data, &check).unwrap();
        let bud = budget(0.5, 2.0, 2, 0.19, 0.1, 0.3).unwrap();
        let params = ChainParams {
            m: 1.0,
            l: 1.0,
            f_norm: 1.0,
            c_cmp: 1.0,
        };
        let normal = b.inward_normal();
        let mut xs = Vec::new();
        let mut cols = [Vec::new(), Vec::new(), Vec::new()];
        for k in 3..=8 {
            let t = 0.5f64.powi(k);
            let x0: Vec<f64> = normal.iter().map(|v| v * t).collect();
            match boundary_chain(&x0, &bud, &b, params).unwrap() {
                ChainOutcome::Chain { addends, .. } => {
                    xs.push(t);
                    for (c, a) in cols.iter_mut().zip(addends) {
                        c.push(a);
                    }
                }
                other => panic!("{other:?}"),
            }
        }
        for c in &cols {
            let fit = crate::fit::loglog_fit(&xs, c).unwrap();
            assert!((fit.slope - 0.2).abs() <= 0.02, "{}", fit.slope);
        }
    }

    #[test]
    fn chain_guards_and_trivial_branch() {
        let (data, _, _) = ball_data(1);
        let (b, _) = build_barrier(
            &data,
            &BarrierCheck {
                samples: 500,
                ..Default::default()
            },
        )
        .unwrap();
        let params = ChainParams {
            m: 2.0,
            l: 1.0,
            f_norm: 1.0,
            c_cmp: 1.0,
        };
        // n = 1, p = 2, α = 0.5 with γ″ large enough that β > α/(2+α).
        let wide = budget(0.5, 2.0, 1, 0.1, 0.3, 0.3).unwrap();
        assert!(wide.beta > wide.ratio);
        assert!(matches!(
            boundary_chain(&[-0.01, 0.0], &wide, &b, params).unwrap(),
            ChainOutcome::Inapplicable { .. }
        ));
        let ok = budget(0.5, 2.0, 1, 0.1, 0.1, 0.2).unwrap();
        let small_r0 = Barrier { r0: 0.01, ..b };
        match boundary_chain(&[-0.5, 0.0], &ok, &small_r0, params).unwrap() {
            ChainOutcome::Trivial { bound, .. } => {
                let want = 2.0 * 0.01f64.powf(-2.0 * 0.2 / 0.8) * 0.5f64.powf(0.2);
                assert!((bound - want).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn linfty_on_paraboloid() {
        let grid = build_grid(&Domain::unit_ball(1), 64).unwrap();
        let u = GridFn::from_fn(&grid, |x| x[0] * x[0] + x[1] * x[1] - 1.0).unwrap();
        let f = GridFn::from_fn(&grid, |_| 1.0).unwrap();
        let rep = linfty_check(&u, &f, 1, 2.0, 0.25, 1.0).unwrap();
        assert!((rep.lhs - 1.0).abs() < 1e-12);
        assert!(rep.inf_phi < 1e-12);
        let want = std::f64::consts::PI.powf(0.5 + 0.25);
        assert!((rep.rhs / want - 1.0).abs() < 0.02, "{}", rep.rhs);
        assert!(rep.pass);
        assert!(linfty_check(&u, &f, 1, 2.0, 0.5, 1.0).is_err());
        let zero = GridFn::zeros(&grid);
        assert!(linfty_check(&zero, &zero, 1, 2.0, 0.25, 1.0).unwrap().pass);
    }
}
