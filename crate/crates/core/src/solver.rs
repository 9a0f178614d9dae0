//! Dirichlet solvers for the instances where a constructive method exists:
//! exact quadrature of the radial reduction in any dimension, and the
//! linear problem `Δu = 4f` in complex dimension one.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::{Grid, GridFn, PointKind, RadialFn, RadialMesh};
use crate::error::{LabError, Result};

/// Output of [`solve_radial`].
#[derive(Debug, Clone)]
pub struct RadialSolveResult {
    pub mesh: RadialMesh,
    pub phi: Vec<f64>,
    /// `φ'` on the mesh. At `s = 0` this is the limit `f(0)^{1/n}` for
    /// regular data and `+∞` for data singular at the origin.
    pub phi_prime: Vec<f64>,
    /// `n ∫₀^s σ^{n-1} f(σ) dσ` on the mesh.
    pub first_integral: Vec<f64>,
    /// `max_i |(s φ')ⁿ - F| / (1 + |F|)` with `φ'` re-derived from the
    /// recovered `φ` by centred differences.
    pub residual: f64,
    pub boundary_value: f64,
}

impl RadialSolveResult {
    /// Relative sup error against reference values on the same mesh.
    pub fn relative_sup_error(&self, exact: &[f64]) -> f64 {
        let scale = exact.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let err = self
            .phi
            .iter()
            .zip(exact)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        err / scale.max(f64::MIN_POSITIVE)
    }
}

/// Integral over `[a, b]` (with `a > 0`) of the power law through
/// `(a, ga)` and `(b, gb)`; falls back to the trapezoid rule when the
/// endpoint values do not share a strict sign.
fn cell_integral(a: f64, b: f64, ga: f64, gb: f64) -> f64 {
    if ga > 0.0 && gb > 0.0 && a > 0.0 {
        if ga == gb {
            return ga * (b - a);
        }
        let l = (b / a).ln();
        let q1 = (gb / ga).ln() / l + 1.0;
        if q1.abs() < 1e-12 {
            return ga * a * l;
        }
        ga * a * (q1 * l).exp_m1() / q1
    } else {
        0.5 * (ga + gb) * (b - a)
    }
}

/// Integral over `[0, s1]` of the power law fitted through `(s1, g1)` and
/// `(s2, g2)`. `None` when the fitted exponent is not integrable at 0.
fn origin_integral(s1: f64, s2: f64, g1: f64, g2: f64) -> Option<f64> {
    if g1 > 0.0 && g2 > 0.0 {
        let q = (g2 / g1).ln() / (s2 / s1).ln();
        if q <= -1.0 + 1e-9 {
            return None;
        }
        Some(g1 * s1 / (q + 1.0))
    } else {
        Some(0.5 * g1.max(0.0) * s1)
    }
}

/// Solves `det(u_{jk̄}) = f` for radial `u = φ(|z|²)` on `|z|² < S` with
/// `φ(S) = boundary_value`, through the first integral
/// `(s φ'(s))ⁿ = n ∫₀^s σ^{n-1} f(σ) dσ`.
///
/// Cells are integrated with local power-law product rules, which are exact
/// for pure power densities and second order otherwise. The cell touching
/// the origin uses the power law extrapolated from the next two samples,
/// so `φ'(0)` is never evaluated.
pub fn solve_radial(f: &RadialFn, boundary_value: f64) -> Result<RadialSolveResult> {
    let mesh = &f.mesh;
    let n = mesh.n;
    let size = mesh.size;
    let start = usize::from(f.singular_origin);
    if let Some(i) = (start..=size).find(|&i| f.values[i] < 0.0) {
        return Err(LabError::Domain(format!(
            "density {} < 0 at s = {}",
            f.values[i],
            mesh.s(i)
        )));
    }
    let s: Vec<f64> = mesh.points().collect();
    let g: Vec<f64> = (0..=size)
        .map(|i| s[i].powi(n as i32 - 1) * f.values[i])
        .collect();

    let mut first = vec![0.0; size + 1];
    let c0 = if !f.singular_origin && n == 1 && f.values[0] > 0.0 {
        0.5 * (g[0] + g[1]) * s[1]
    } else if !f.singular_origin && g[1] == 0.0 {
        0.0
    } else {
        origin_integral(s[1], s[2], g[1], g[2]).ok_or_else(|| {
            LabError::SingularData("density is not integrable against s^{n-1} near 0".into())
        })?
    };
    first[1] = n as f64 * c0;
    for i in 1..size {
        first[i + 1] = first[i] + n as f64 * cell_integral(s[i], s[i + 1], g[i], g[i + 1]);
    }

    let inv_n = 1.0 / n as f64;
    let mut phi_prime = vec![0.0; size + 1];
    for i in 1..=size {
        phi_prime[i] = first[i].max(0.0).powf(inv_n) / s[i];
    }
    phi_prime[0] = if f.singular_origin {
        f64::INFINITY
    } else {
        f.values[0].powf(inv_n)
    };

    let mut phi = vec![0.0; size + 1];
    phi[size] = boundary_value;
    for i in (1..size).rev() {
        phi[i] = phi[i + 1] - cell_integral(s[i], s[i + 1], phi_prime[i], phi_prime[i + 1]);
    }
    let c_phi = origin_integral(s[1], s[2], phi_prime[1], phi_prime[2])
        .ok_or_else(|| LabError::SingularData("φ' is not integrable near 0".into()))?;
    phi[0] = phi[1] - c_phi;

    let ds = mesh.ds();
    let mut residual = 0.0_f64;
    for i in 1..=size {
        let d = if i == size {
            (3.0 * phi[i] - 4.0 * phi[i - 1] + phi[i - 2]) / (2.0 * ds)
        } else {
            (phi[i + 1] - phi[i - 1]) / (2.0 * ds)
        };
        let lhs = (s[i] * d).powi(n as i32);
        residual = residual.max((lhs - first[i]).abs() / (1.0 + first[i].abs()));
    }

    Ok(RadialSolveResult {
        mesh: mesh.clone(),
        phi,
        phi_prime,
        first_integral: first,
        residual,
        boundary_value,
    })
}

/// Successive over-relaxation settings for the `n = 1` solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SorParams {
    pub omega: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for SorParams {
    fn default() -> Self {
        SorParams {
            omega: 1.9,
            max_iter: 100_000,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GridSolveResult {
    pub solution: GridFn,
    /// Sup norm of `Δ_h u / 4 - f` over interior nodes.
    pub residual: f64,
    pub iterations: usize,
}

/// Per-node stencil: `diag·u_p = Σ u_nb + rhs`.
struct Row {
    idx: usize,
    nbs: [usize; 4],
    nb_count: usize,
    diag: f64,
    rhs: f64,
}

/// Solves `Δu = 4f` (i.e. `u_{zz̄} = f`) on a domain in ℂ¹ with Dirichlet
/// data `phi` on `∂Ω`, by red-black SOR on the 5-point Laplacian.
///
/// A stencil arm that leaves the domain is closed with the ghost value
/// obtained by linear extrapolation through the exact boundary crossing
/// (`u_ghost = u_p + (φ(b) - u_p)/θ`, `θ ∈ (0, 1]` the crossing fraction).
/// This keeps the scheme second order on curved boundaries and needs `φ`
/// only on `∂Ω`.
pub fn solve_poisson_n1<P>(
    grid: &Arc<Grid>,
    f: &GridFn,
    phi: P,
    params: &SorParams,
) -> Result<GridSolveResult>
where
    P: Fn(&[f64]) -> f64,
{
    let domain = grid.domain();
    if domain.n() != 1 {
        return Err(LabError::Shape(format!(
            "the linear solver needs complex dimension 1, got {}",
            domain.n()
        )));
    }
    if !Arc::ptr_eq(f.grid(), grid) && !f.same_grid(&GridFn::zeros(grid)) {
        return Err(LabError::Shape("density lives on a different grid".into()));
    }
    if !(params.omega > 0.0 && params.omega < 2.0) {
        return Err(LabError::Parameter(format!(
            "SOR factor {} outside (0, 2)",
            params.omega
        )));
    }
    let h = grid.h();
    let h2 = h * h;
    let mut rows_red = Vec::new();
    let mut rows_black = Vec::new();
    let mut x = vec![0.0; 2];
    for idx in grid.interior() {
        let fp = f.get(idx);
        if fp < 0.0 {
            return Err(LabError::Domain(format!(
                "density {fp} < 0 at {:?}",
                grid.coords(idx)
            )));
        }
        grid.fill_coords(idx, &mut x);
        let mut row = Row {
            idx,
            nbs: [0; 4],
            nb_count: 0,
            diag: 4.0,
            rhs: -4.0 * fp * h2,
        };
        for axis in 0..2 {
            for sign in [-1i64, 1] {
                let nb = grid.neighbor(idx, axis, sign);
                match nb.map(|j| (j, grid.kind(j))) {
                    Some((j, PointKind::Interior)) => {
                        row.nbs[row.nb_count] = j;
                        row.nb_count += 1;
                    }
                    _ => {
                        let t = domain
                            .axis_crossing(&x, axis, sign as f64)
                            .unwrap_or(h)
                            .min(h);
                        let theta = (t / h).max(1e-12);
                        let mut b = x.clone();
                        b[axis] += sign as f64 * t;
                        let pb = phi(&b);
                        if !pb.is_finite() {
                            return Err(LabError::SingularData(format!(
                                "boundary value {pb} at {b:?}"
                            )));
                        }
                        row.diag += 1.0 / theta - 1.0;
                        row.rhs += pb / theta;
                    }
                }
            }
        }
        let (i, j) = (grid.axis_index(idx, 0), grid.axis_index(idx, 1));
        if (i + j) % 2 == 0 {
            rows_red.push(row);
        } else {
            rows_black.push(row);
        }
    }

    let mut solution = GridFn::zeros(grid);
    for idx in grid.boundary() {
        grid.fill_coords(idx, &mut x);
        solution.set(idx, phi(&domain.project(&x)));
    }
    let start = if grid.boundary().count() > 0 {
        grid.boundary().map(|i| solution.get(i)).sum::<f64>() / grid.boundary().count() as f64
    } else {
        0.0
    };
    let u = solution.values_mut();
    for r in rows_red.iter().chain(&rows_black) {
        u[r.idx] = start;
    }

    let omega = params.omega;
    let residual_of = |u: &[f64]| {
        rows_red
            .iter()
            .chain(&rows_black)
            .map(|r| {
                let s: f64 = r.nbs[..r.nb_count].iter().map(|&j| u[j]).sum();
                ((s + r.rhs - r.diag * u[r.idx]) / (4.0 * h2)).abs()
            })
            .fold(0.0_f64, f64::max)
    };
    let mut iterations = 0;
    let mut residual = residual_of(u);
    while residual > params.tol {
        if iterations >= params.max_iter {
            return Err(LabError::SolverFailure {
                iterations,
                residual,
            });
        }
        for rows in [&rows_red, &rows_black] {
            for r in rows.iter() {
                let s: f64 = r.nbs[..r.nb_count].iter().map(|&j| u[j]).sum();
                let gs = (s + r.rhs) / r.diag;
                u[r.idx] += omega * (gs - u[r.idx]);
            }
        }
        iterations += 1;
        if iterations % 10 == 0 || iterations == params.max_iter {
            residual = residual_of(u);
        }
    }
    Ok(GridSolveResult {
        solution,
        residual,
        iterations,
    })
}

/// Discrete maximum principle for a subharmonic grid solution: the interior
/// maximum does not exceed the boundary maximum by more than `tol`.
pub fn max_principle_holds(u: &GridFn, tol: f64) -> bool {
    u.interior_max() <= u.boundary_max() + tol
}

/// Worst interior point of the 5-point sub-mean-value test
/// `u(p) ≤ mean of the four neighbours`, over nodes whose neighbours are
/// all interior. Returns the largest violation (≤ 0 when subharmonic).
pub fn sub_mean_violation(u: &GridFn) -> f64 {
    let grid = u.grid();
    let d = grid.dim();
    let mut worst = f64::NEG_INFINITY;
    for idx in grid.interior() {
        let mut sum = 0.0;
        let mut ok = true;
        for axis in 0..d {
            for sign in [-1i64, 1] {
                match grid.neighbor(idx, axis, sign) {
                    Some(j) if grid.kind(j) == PointKind::Interior => sum += u.get(j),
                    _ => ok = false,
                }
            }
        }
        if ok {
            worst = worst.max(u.get(idx) - sum / (2 * d) as f64);
        }
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub pass: bool,
    /// `max (v - u)` over interior nodes (≤ 0 when the ordering holds).
    pub worst_violation: f64,
}

/// Checks `v ≤ u + tol` at every interior node. Requires `v ≤ u + tol` on
/// boundary nodes.
pub fn comparison_check(u: &GridFn, v: &GridFn, tol: f64) -> Result<ComparisonReport> {
    if !u.same_grid(v) {
        return Err(LabError::Shape(
            "comparison needs both solutions on one grid".into(),
        ));
    }
    let grid = u.grid();
    if let Some(i) = grid.boundary().find(|&i| v.get(i) > u.get(i) + tol) {
        return Err(LabError::Precondition(format!(
            "boundary ordering fails at {:?}: v = {}, u = {}",
            grid.coords(i),
            v.get(i),
            u.get(i)
        )));
    }
    let worst = grid
        .interior()
        .map(|i| v.get(i) - u.get(i))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(ComparisonReport {
        pass: worst <= tol,
        worst_violation: worst.max(0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_grid, Domain};
    use crate::exact::{ma_density, RadialProfile};

    fn r2(x: &[f64]) -> f64 {
        x[0] * x[0] + x[1] * x[1]
    }

    #[test]
    fn radial_quadratic_n1() {
        let mesh = RadialMesh::new(1, 1.0, 1000).unwrap();
        let f = RadialFn::from_fn(&mesh, |_| 1.0).unwrap();
        let r = solve_radial(&f, 1.0).unwrap();
        for (i, s) in mesh.points().enumerate() {
            assert!((r.phi[i] - s).abs() < 1e-12);
        }
        assert!(r.residual <= 1e-10, "{}", r.residual);
        assert_eq!(r.phi[mesh.size], 1.0);
    }

    #[test]
    fn radial_power_inversions() {
        for (n, beta) in [(2, 0.75), (1, 0.5)] {
            let mesh = RadialMesh::new(n, 1.0, 20_000).unwrap();
            let p = RadialProfile::power(n, beta, mesh.clone()).unwrap();
            let f = ma_density(&p).unwrap();
            let r = solve_radial(&f, 1.0).unwrap();
            let err = r.relative_sup_error(&p.phi_values());
            assert!(err < 1e-4, "n={n} β={beta}: {err}");
            assert!(r.phi_prime[1..].iter().all(|d| *d >= 0.0));
        }
    }

    #[test]
    fn smooth_first_integral_residual() {
        let mesh = RadialMesh::new(2, 1.0, 10_000).unwrap();
        let f = RadialFn::from_fn(&mesh, |s| 1.0 + s + 0.5 * s * s).unwrap();
        let r = solve_radial(&f, 0.0).unwrap();
        assert!(r.residual <= 1e-8, "{}", r.residual);
    }

    #[test]
    fn radial_rejects_bad_data() {
        let mesh = RadialMesh::new(1, 1.0, 100).unwrap();
        let neg = RadialFn::from_fn(&mesh, |s| s - 0.5).unwrap();
        assert!(matches!(solve_radial(&neg, 0.0), Err(LabError::Domain(_))));
        let wild = RadialFn::from_fn(&mesh, |s| s.powf(-1.5)).unwrap();
        assert!(matches!(
            solve_radial(&wild, 0.0),
            Err(LabError::SingularData(_))
        ));
    }

    #[test]
    fn poisson_constant_data() {
        let grid = build_grid(&Domain::unit_ball(1), 32).unwrap();
        let f = GridFn::zeros(&grid);
        let r = solve_poisson_n1(&grid, &f, |_| 3.0, &SorParams::default()).unwrap();
        for i in grid.interior() {
            assert!((r.solution.get(i) - 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn poisson_quadratic_accuracy() {
        let grid = build_grid(&Domain::unit_ball(1), 128).unwrap();
        let f = GridFn::from_fn(&grid, |_| 1.0).unwrap();
        let r = solve_poisson_n1(&grid, &f, r2, &SorParams::default()).unwrap();
        assert!(r.residual <= 1e-9);
        let err = grid
            .interior()
            .map(|i| (r.solution.get(i) - r2(&grid.coords(i))).abs())
            .fold(0.0, f64::max);
        assert!(err <= 5e-4, "{err}");
        assert!(max_principle_holds(&r.solution, 1e-9));
        assert!(sub_mean_violation(&r.solution) <= 1e-9);
    }

    #[test]
    fn poisson_rejects_negative_density() {
        let grid = build_grid(&Domain::unit_ball(1), 16).unwrap();
        let f = GridFn::from_fn(&grid, |x| x[0]).unwrap();
        let r = solve_poisson_n1(&grid, &f, |_| 0.0, &SorParams::default());
        assert!(matches!(r, Err(LabError::Domain(_))));
    }

    #[test]
    fn poisson_reports_non_convergence() {
        let grid = build_grid(&Domain::unit_ball(1), 64).unwrap();
        let f = GridFn::from_fn(&grid, |_| 1.0).unwrap();
        let params = SorParams {
            max_iter: 5,
            ..SorParams::default()
        };
        let r = solve_poisson_n1(&grid, &f, |_| 0.0, &params);
        assert!(matches!(
            r,
            Err(LabError::SolverFailure { iterations: 5, .. })
        ));
    }

    #[test]
    fn more_mass_pushes_solutions_down() {
        let grid = build_grid(&Domain::unit_ball(1), 128).unwrap();
        let one = GridFn::from_fn(&grid, |_| 1.0).unwrap();
        let two = GridFn::from_fn(&grid, |_| 2.0).unwrap();
        let p = SorParams::default();
        let u = solve_poisson_n1(&grid, &one, |_| 0.0, &p).unwrap().solution;
        let v = solve_poisson_n1(&grid, &two, |_| 0.0, &p).unwrap().solution;
        let rep = comparison_check(&u, &v, 1e-9).unwrap();
        assert!(rep.pass, "{rep:?}");
        let same = comparison_check(&u, &u, 0.0).unwrap();
        assert!(same.pass && same.worst_violation == 0.0);
    }

    #[test]
    fn shifted_boundary_data_stays_below() {
        let grid = build_grid(&Domain::unit_ball(1), 64).unwrap();
        let f = GridFn::from_fn(&grid, |_| 1.0).unwrap();
        let p = SorParams::default();
        let eps2 = 0.01;
        let u = solve_poisson_n1(&grid, &f, r2, &p).unwrap().solution;
        let v = solve_poisson_n1(&grid, &f, |x| r2(x) - eps2, &p)
            .unwrap()
            .solution;
        assert!(comparison_check(&u, &v, 1e-9).unwrap().pass);
        // Swapping the roles breaks the boundary precondition.
        assert!(matches!(
            comparison_check(&v, &u, 1e-9),
            Err(LabError::Precondition(_))
        ));
    }

    #[test]
    fn comparison_rejects_mismatched_grids() {
        let a = GridFn::zeros(&build_grid(&Domain::unit_ball(1), 16).unwrap());
        let b = GridFn::zeros(&build_grid(&Domain::unit_ball(1), 32).unwrap());
        assert!(matches!(
            comparison_check(&a, &b, 0.0),
            Err(LabError::Shape(_))
        ));
    }
}
