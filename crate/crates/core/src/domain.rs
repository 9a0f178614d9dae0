//! Domains in ℂⁿ ≅ ℝ²ⁿ, their uniform grids, interior shrinkings and
//! quadrature for grid functions.
//!
//! A grid over a domain covers the cube `[lo, lo + side]^{2n}` with
//! `resolution + 1` nodes per axis, so `h = side / resolution`. Nodes are
//! classified as
//!
//! * `Interior`: strictly inside the domain,
//! * `Boundary`: on `∂Ω`, or outside but an axis neighbour of an interior
//!   node (the Dirichlet stencil points),
//! * `Exterior`: everything else.
//!
//! A grid function stores a value for every node. Boundary nodes carry the
//! value of the function at the nearest point of `∂Ω`; exterior nodes carry
//! zero and are never read.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::taylor::{Quadric, TaylorData};

/// Relative tolerance used to decide that a node lies on `∂Ω`.
const ON_BOUNDARY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    /// `{ x : f_T(x - base) < 0 }` for the Taylor polynomial `f_T`.
    Taylor {
        data: TaylorData,
        base: Vec<f64>,
    },
}

/// A bounded strictly pseudoconvex domain (ball or quadric).
#[derive(Debug, Clone)]
pub struct Domain {
    n: usize,
    shape: Shape,
    quadric: Quadric,
    box_lo: Vec<f64>,
    box_side: f64,
}

impl PartialEq for Domain {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.shape == other.shape
    }
}

impl Domain {
    pub fn ball(n: usize, center: Vec<f64>, radius: f64) -> Result<Self> {
        if n == 0 {
            return Err(LabError::Config(
                "complex dimension must be positive".into(),
            ));
        }
        if center.len() != 2 * n {
            return Err(LabError::Shape(format!(
                "ball centre has {} coordinates, expected {}",
                center.len(),
                2 * n
            )));
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(LabError::Config(format!(
                "ball radius must be positive, got {radius}"
            )));
        }
        let d = 2 * n;
        let grad: Vec<f64> = center.iter().map(|c| -2.0 * c).collect();
        let quadric = Quadric {
            value: center.iter().map(|c| c * c).sum::<f64>() - radius * radius,
            grad: nalgebra::DVector::from_vec(grad),
            hess: nalgebra::DMatrix::identity(d, d) * 2.0,
        };
        let box_lo = center.iter().map(|c| c - radius).collect();
        Ok(Domain {
            n,
            shape: Shape::Ball { center, radius },
            quadric,
            box_lo,
            box_side: 2.0 * radius,
        })
    }

    pub fn unit_ball(n: usize) -> Self {
        Domain::ball(n, vec![0.0; 2 * n], 1.0).expect("unit ball is valid")
    }

    /// Domain bounded by the Taylor quadric of `data`, with the boundary
    /// point placed at `base`. The quadric must have a positive definite
    /// real Hessian so that the domain is a bounded ellipsoid.
    pub fn taylor(data: TaylorData, base: Vec<f64>) -> Result<Self> {
        data.validate()?;
        let d = data.real_dim();
        if base.len() != d {
            return Err(LabError::Shape("base point dimension mismatch".into()));
        }
        let quadric = data.quadric().translated(&base);
        if quadric.min_hess_eigenvalue() <= 0.0 {
            return Err(LabError::Domain(
                "Taylor quadric has an indefinite real Hessian; domain is unbounded".into(),
            ));
        }
        let hinv = quadric
            .hess
            .clone()
            .try_inverse()
            .ok_or_else(|| LabError::Domain("singular Hessian".into()))?;
        let centre = -(&hinv * &quadric.grad);
        let qmin = quadric.eval(centre.as_slice());
        if qmin >= 0.0 {
            return Err(LabError::Domain("Taylor quadric has empty interior".into()));
        }
        let half = (0..d)
            .map(|k| (-2.0 * qmin * hinv[(k, k)]).sqrt())
            .fold(0.0_f64, f64::max);
        let box_lo = centre.iter().map(|c| c - half).collect();
        Ok(Domain {
            n: data.n,
            shape: Shape::Taylor { data, base },
            quadric,
            box_lo,
            box_side: 2.0 * half,
        })
    }

    pub fn from_shape(n: usize, shape: Shape) -> Result<Self> {
        match shape {
            Shape::Ball { center, radius } => Domain::ball(n, center, radius),
            Shape::Taylor { data, base } => {
                if data.n != n {
                    return Err(LabError::Shape(
                        "Taylor data dimension differs from n".into(),
                    ));
                }
                Domain::taylor(data, base)
            }
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn real_dim(&self) -> usize {
        2 * self.n
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn box_lo(&self) -> &[f64] {
        &self.box_lo
    }

    pub fn box_side(&self) -> f64 {
        self.box_side
    }

    /// Defining function, negative inside.
    pub fn defining(&self, x: &[f64]) -> f64 {
        match &self.shape {
            Shape::Ball { center, radius } => dist2(x, center) - radius * radius,
            Shape::Taylor { .. } => self.quadric.eval(x),
        }
    }

    fn boundary_tol(&self) -> f64 {
        ON_BOUNDARY_TOL * (self.box_side * self.box_side).max(1.0)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.defining(x) < -self.boundary_tol()
    }

    pub fn on_boundary(&self, x: &[f64]) -> bool {
        self.defining(x).abs() <= self.boundary_tol()
    }

    /// Distance to `∂Ω` for a point of `Ω̄`. Exact for balls; for Taylor
    /// domains it is the lower bound obtained from
    /// `|f(x+v) - f(x) - ∇f(x)·v| ≤ ½‖H‖|v|²`, which is exact for round
    /// quadrics.
    pub fn dist_to_boundary(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.real_dim() {
            return Err(LabError::Shape("point dimension mismatch".into()));
        }
        if self.on_boundary(x) {
            return Ok(0.0);
        }
        if !self.contains(x) {
            return Err(LabError::Domain("point lies outside the domain".into()));
        }
        Ok(self.raw_dist(x))
    }

    fn raw_dist(&self, x: &[f64]) -> f64 {
        match &self.shape {
            Shape::Ball { center, radius } => radius - dist2(x, center).sqrt(),
            Shape::Taylor { .. } => {
                let f = self.quadric.eval(x);
                let g = self.quadric.gradient(x).norm();
                let hn = self.quadric.hess_norm();
                if hn == 0.0 {
                    -f / g
                } else {
                    (-g + (g * g - 2.0 * hn * f).sqrt()) / hn
                }
            }
        }
    }

    /// Nearest boundary point (Newton iteration along the gradient line
    /// for Taylor domains).
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        match &self.shape {
            Shape::Ball { center, radius } => {
                let r = dist2(x, center).sqrt();
                if r == 0.0 {
                    let mut p = center.clone();
                    p[0] += radius;
                    return p;
                }
                center
                    .iter()
                    .zip(x)
                    .map(|(c, xi)| c + radius * (xi - c) / r)
                    .collect()
            }
            Shape::Taylor { .. } => {
                let mut p = x.to_vec();
                for _ in 0..50 {
                    let g = self.quadric.gradient(&p);
                    let gn = g.norm();
                    if gn == 0.0 {
                        break;
                    }
                    let dir: Vec<f64> = g.iter().map(|v| v / gn).collect();
                    let roots = self.quadric.line_roots(&p, &dir);
                    let Some(t) = roots.into_iter().min_by(|a, b| a.abs().total_cmp(&b.abs()))
                    else {
                        break;
                    };
                    for (pi, di) in p.iter_mut().zip(&dir) {
                        *pi += t * di;
                    }
                    if t.abs() < 1e-14 {
                        break;
                    }
                }
                p
            }
        }
    }

    /// Smallest `t > 0` with `p + t·e_axis·sign` on `∂Ω`, for interior `p`.
    pub fn axis_crossing(&self, p: &[f64], axis: usize, sign: f64) -> Option<f64> {
        let mut dir = vec![0.0; self.real_dim()];
        dir[axis] = sign;
        let roots = match &self.shape {
            Shape::Ball { center, radius } => {
                let off = p[axis] - center[axis];
                let r2 = dist2(p, center);
                // t² + 2 sign·off t + (r2 - R²) = 0
                let b = 2.0 * sign * off;
                let c = r2 - radius * radius;
                let disc = b * b - 4.0 * c;
                if disc < 0.0 {
                    return None;
                }
                vec![(-b - disc.sqrt()) / 2.0, (-b + disc.sqrt()) / 2.0]
            }
            Shape::Taylor { .. } => self.quadric.line_roots(p, &dir),
        };
        roots.into_iter().filter(|t| *t > 0.0).reduce(f64::min)
    }

    pub fn diameter(&self) -> f64 {
        match &self.shape {
            Shape::Ball { radius, .. } => 2.0 * radius,
            Shape::Taylor { .. } => {
                let (qmin, lam_min) = self.ellipsoid_params();
                2.0 * (-2.0 * qmin / lam_min).sqrt()
            }
        }
    }

    /// Lebesgue measure of the domain.
    pub fn volume(&self) -> f64 {
        let d = self.real_dim();
        let unit = unit_ball_volume(d);
        match &self.shape {
            Shape::Ball { radius, .. } => unit * radius.powi(d as i32),
            Shape::Taylor { .. } => {
                let (qmin, _) = self.ellipsoid_params();
                let det = self.quadric.hess.determinant();
                unit * (-2.0 * qmin).powf(d as f64 / 2.0) / det.sqrt()
            }
        }
    }

    fn ellipsoid_params(&self) -> (f64, f64) {
        let hinv = self
            .quadric
            .hess
            .clone()
            .try_inverse()
            .expect("checked at construction");
        let centre = -(&hinv * &self.quadric.grad);
        (
            self.quadric.eval(centre.as_slice()),
            self.quadric.min_hess_eigenvalue(),
        )
    }
}

pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Volume of the unit ball in ℝ^d.
pub fn unit_ball_volume(d: usize) -> f64 {
    // V_d = π^{d/2} / Γ(d/2 + 1), built up by the recurrence V_d = 2π/d V_{d-2}.
    let mut v = if d % 2 == 0 { 1.0 } else { 2.0 };
    let mut k = if d % 2 == 0 { 2 } else { 3 };
    while k <= d {
        v *= 2.0 * std::f64::consts::PI / k as f64;
        k += 2;
    }
    v
}

/// Surface measure of the unit sphere in ℝ^d.
pub fn unit_sphere_area(d: usize) -> f64 {
    d as f64 * unit_ball_volume(d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointKind {
    Interior,
    Boundary,
    Exterior,
}

/// A uniform grid over a domain's bounding cube.
#[derive(Debug)]
pub struct Grid {
    domain: Domain,
    resolution: usize,
    h: f64,
    per_axis: usize,
    kinds: Vec<PointKind>,
    /// Distance to `∂Ω` for interior nodes, zero elsewhere.
    dist: Vec<f64>,
}

/// Builds the grid skeleton with `resolution` cells per axis.
pub fn build_grid(domain: &Domain, resolution: usize) -> Result<Arc<Grid>> {
    if resolution < 8 {
        return Err(LabError::Config(format!(
            "grid resolution must be at least 8, got {resolution}"
        )));
    }
    let d = domain.real_dim();
    let per_axis = resolution + 1;
    let total = per_axis
        .checked_pow(d as u32)
        .filter(|t| *t <= 50_000_000)
        .ok_or_else(|| LabError::Config("grid too large".into()))?;
    let h = domain.box_side / resolution as f64;
    let mut grid = Grid {
        domain: domain.clone(),
        resolution,
        h,
        per_axis,
        kinds: vec![PointKind::Exterior; total],
        dist: vec![0.0; total],
    };
    let mut x = vec![0.0; d];
    for idx in 0..total {
        grid.fill_coords(idx, &mut x);
        if domain.contains(&x) {
            grid.kinds[idx] = PointKind::Interior;
            grid.dist[idx] = domain.raw_dist(&x);
        } else if domain.on_boundary(&x) {
            grid.kinds[idx] = PointKind::Boundary;
        }
    }
    for idx in 0..total {
        if grid.kinds[idx] != PointKind::Interior {
            continue;
        }
        for axis in 0..d {
            for sign in [-1i64, 1] {
                if let Some(nb) = grid.neighbor(idx, axis, sign) {
                    if grid.kinds[nb] == PointKind::Exterior {
                        grid.kinds[nb] = PointKind::Boundary;
                    }
                }
            }
        }
    }
    Ok(Arc::new(grid))
}

impl Grid {
    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn dim(&self) -> usize {
        self.domain.real_dim()
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn per_axis(&self) -> usize {
        self.per_axis
    }

    pub fn kind(&self, idx: usize) -> PointKind {
        self.kinds[idx]
    }

    pub fn kinds(&self) -> &[PointKind] {
        &self.kinds
    }

    /// Distance to `∂Ω` of an interior node.
    pub fn dist(&self, idx: usize) -> f64 {
        self.dist[idx]
    }

    /// Volume of one grid cell, `h^{2n}`.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim() as i32)
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.per_axis.pow(axis as u32)
    }

    pub fn axis_index(&self, idx: usize, axis: usize) -> usize {
        (idx / self.stride(axis)) % self.per_axis
    }

    pub fn fill_coords(&self, idx: usize, out: &mut [f64]) {
        let mut rest = idx;
        for (k, o) in out.iter_mut().enumerate() {
            let i = rest % self.per_axis;
            rest /= self.per_axis;
            *o = self.domain.box_lo[k] + i as f64 * self.h;
        }
    }

    pub fn coords(&self, idx: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        self.fill_coords(idx, &mut x);
        x
    }

    pub fn neighbor(&self, idx: usize, axis: usize, sign: i64) -> Option<usize> {
        let i = self.axis_index(idx, axis) as i64 + sign;
        if i < 0 || i >= self.per_axis as i64 {
            return None;
        }
        let stride = self.stride(axis) as i64;
        Some((idx as i64 + sign * stride) as usize)
    }

    /// Flat index offset of an integer lattice displacement, valid whenever
    /// both endpoints lie in the grid.
    pub fn offset_delta(&self, offset: &[i64]) -> i64 {
        offset
            .iter()
            .enumerate()
            .map(|(k, o)| o * self.stride(k) as i64)
            .sum()
    }

    pub fn interior(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&i| self.kinds[i] == PointKind::Interior)
    }

    pub fn boundary(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&i| self.kinds[i] == PointKind::Boundary)
    }

    pub fn interior_count(&self) -> usize {
        self.interior().count()
    }

    /// Interior nodes with `dist(x, ∂Ω) > eps`.
    pub fn shrunk(self: &Arc<Self>, eps: f64) -> ShrunkDomain {
        let members = self.interior().filter(|&i| self.dist[i] > eps).collect();
        ShrunkDomain {
            grid: Arc::clone(self),
            eps,
            members,
        }
    }
}

/// `Ω_ε` restricted to grid nodes.
#[derive(Debug, Clone)]
pub struct ShrunkDomain {
    grid: Arc<Grid>,
    eps: f64,
    members: Vec<usize>,
}

impl ShrunkDomain {
    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Member node indices, ascending.
    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.members.binary_search(&idx).is_ok()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormKind {
    Sup,
    L1,
    Lp(f64),
}

/// A real function sampled on a [`Grid`].
#[derive(Debug, Clone)]
pub struct GridFn {
    grid: Arc<Grid>,
    values: Vec<f64>,
    /// Interior cells whose sample stands in for a singular integrand;
    /// they are left out of norms.
    omitted: Vec<usize>,
}

impl GridFn {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        GridFn {
            grid: Arc::clone(grid),
            values: vec![0.0; grid.len()],
            omitted: Vec::new(),
        }
    }

    /// Samples `f` at interior nodes and at the boundary projection of
    /// boundary nodes.
    pub fn from_fn<F>(grid: &Arc<Grid>, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64,
    {
        let mut out = GridFn::zeros(grid);
        let mut x = vec![0.0; grid.dim()];
        for idx in 0..grid.len() {
            let v = match grid.kind(idx) {
                PointKind::Interior => {
                    grid.fill_coords(idx, &mut x);
                    f(&x)
                }
                PointKind::Boundary => {
                    grid.fill_coords(idx, &mut x);
                    f(&grid.domain.project(&x))
                }
                PointKind::Exterior => continue,
            };
            if !v.is_finite() {
                return Err(LabError::SingularData(format!(
                    "non-finite sample {v} at {:?}",
                    grid.coords(idx)
                )));
            }
            out.values[idx] = v;
        }
        Ok(out)
    }

    /// Samples a nonnegative density that may be singular at isolated
    /// nodes. A node with a non-finite value is replaced by the mean of `f`
    /// over its cell (midpoint rule on a sub-lattice that avoids the node)
    /// and excluded from norms.
    pub fn sample_density<F>(grid: &Arc<Grid>, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64,
    {
        let d = grid.dim();
        let mut out = GridFn::zeros(grid);
        let mut x = vec![0.0; d];
        for idx in grid.interior() {
            grid.fill_coords(idx, &mut x);
            let v = f(&x);
            if v.is_finite() {
                out.values[idx] = v;
                continue;
            }
            let avg = cell_average(&f, &x, grid.h());
            if !avg.is_finite() {
                return Err(LabError::SingularData(format!(
                    "density not locally integrable near {x:?}"
                )));
            }
            out.values[idx] = avg;
            out.omitted.push(idx);
        }
        Ok(out)
    }

    pub fn from_values(grid: &Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(LabError::Shape(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(LabError::SingularData(format!("non-finite grid value {v}")));
        }
        Ok(GridFn {
            grid: Arc::clone(grid),
            values,
            omitted: Vec::new(),
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    pub fn set(&mut self, idx: usize, v: f64) {
        self.values[idx] = v;
    }

    pub fn omitted(&self) -> &[usize] {
        &self.omitted
    }

    pub fn same_grid(&self, other: &GridFn) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid)
            || (self.grid.domain == other.grid.domain
                && self.grid.resolution == other.grid.resolution)
    }

    /// Pointwise map over interior and boundary nodes.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFn {
        let mut out = self.clone();
        for (v, k) in out.values.iter_mut().zip(self.grid.kinds.iter()) {
            if *k != PointKind::Exterior {
                *v = f(*v);
            }
        }
        out
    }

    /// Pointwise combination of two functions on the same grid.
    pub fn zip_with(&self, other: &GridFn, f: impl Fn(f64, f64) -> f64) -> Result<GridFn> {
        if !self.same_grid(other) {
            return Err(LabError::Shape(
                "grid functions live on different grids".into(),
            ));
        }
        let mut out = self.clone();
        for (i, v) in out.values.iter_mut().enumerate() {
            if self.grid.kinds[i] != PointKind::Exterior {
                *v = f(self.values[i], other.values[i]);
            }
        }
        Ok(out)
    }

    pub fn interior_min(&self) -> f64 {
        self.grid
            .interior()
            .map(|i| self.values[i])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn interior_max(&self) -> f64 {
        self.grid
            .interior()
            .map(|i| self.values[i])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn boundary_min(&self) -> f64 {
        self.grid
            .boundary()
            .map(|i| self.values[i])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn boundary_max(&self) -> f64 {
        self.grid
            .boundary()
            .map(|i| self.values[i])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Norm over interior nodes with cell volume `h^{2n}`.
    pub fn norm(&self, kind: NormKind) -> Result<f64> {
        self.norm_over(kind, self.grid.interior())
    }

    /// Norm restricted to the given node set (e.g. a [`ShrunkDomain`]).
    pub fn norm_over(&self, kind: NormKind, nodes: impl Iterator<Item = usize>) -> Result<f64> {
        let vol = self.grid.cell_volume();
        let mut nodes: Box<dyn Iterator<Item = usize>> = Box::new(nodes);
        if !self.omitted.is_empty() {
            nodes = Box::new(nodes.filter(|i| self.omitted.binary_search(i).is_err()));
        }
        match kind {
            NormKind::Sup => Ok(nodes.map(|i| self.values[i].abs()).fold(0.0, f64::max)),
            NormKind::L1 => Ok(nodes.map(|i| self.values[i].abs()).sum::<f64>() * vol),
            NormKind::Lp(p) => {
                if !(p > 1.0) {
                    return Err(LabError::Parameter(format!(
                        "L^p norm needs p > 1, got {p}"
                    )));
                }
                let s: f64 = nodes.map(|i| self.values[i].abs().powf(p)).sum();
                Ok((s * vol).powf(1.0 / p))
            }
        }
    }

    /// Mass of `|f|^p` (p = 1 for L¹) left out with the omitted cells,
    /// estimated from their stored cell averages.
    pub fn omitted_mass(&self, p: f64) -> f64 {
        self.omitted
            .iter()
            .map(|&i| self.values[i].abs().powf(p))
            .sum::<f64>()
            * self.grid.cell_volume()
    }

    /// Writes the flat CSV layout (`x0..x{d-1}, kind, value`) and a JSON
    /// header next to it (`<stem>.header.json`).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| LabError::io(path, e))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        let d = self.grid.dim();
        let mut header: Vec<String> = (0..d).map(|k| format!("x{k}")).collect();
        header.push("kind".into());
        header.push("value".into());
        w.write_record(&header)?;
        let mut x = vec![0.0; d];
        for idx in 0..self.grid.len() {
            self.grid.fill_coords(idx, &mut x);
            let mut rec: Vec<String> = x.iter().map(|v| format!("{v:.17e}")).collect();
            rec.push(kind_label(self.grid.kinds[idx]).into());
            rec.push(format!("{:.17e}", self.values[idx]));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| LabError::io(path, e))?;
        let header = GridHeader {
            n: self.grid.domain.n,
            resolution: self.grid.resolution,
            shape: self.grid.domain.shape.clone(),
        };
        let hpath = header_path(path);
        let hf = File::create(&hpath).map_err(|e| LabError::io(&hpath, e))?;
        let mut hw = BufWriter::new(hf);
        serde_json::to_writer_pretty(&mut hw, &header)?;
        hw.flush().map_err(|e| LabError::io(&hpath, e))?;
        Ok(())
    }

    /// Reads a grid function written by [`GridFn::write_csv`].
    pub fn read_csv(path: &Path) -> Result<GridFn> {
        let hpath = header_path(path);
        let hf = File::open(&hpath).map_err(|e| LabError::io(&hpath, e))?;
        let header: GridHeader = serde_json::from_reader(BufReader::new(hf))?;
        let domain = Domain::from_shape(header.n, header.shape)?;
        let grid = build_grid(&domain, header.resolution)?;
        let file = File::open(path).map_err(|e| LabError::io(path, e))?;
        let mut r = csv::Reader::from_reader(BufReader::new(file));
        let d = grid.dim();
        let mut values = Vec::with_capacity(grid.len());
        for (idx, rec) in r.records().enumerate() {
            let rec = rec?;
            if rec.len() != d + 2 {
                return Err(LabError::Format(format!(
                    "row {idx} has {} fields",
                    rec.len()
                )));
            }
            let kind = &rec[d];
            if idx < grid.len() && kind != kind_label(grid.kind(idx)) {
                return Err(LabError::Format(format!(
                    "row {idx}: classification {kind} disagrees with the rebuilt grid"
                )));
            }
            let v: f64 = rec[d + 1]
                .parse()
                .map_err(|e| LabError::Format(format!("row {idx}: {e}")))?;
            values.push(v);
        }
        GridFn::from_values(&grid, values)
    }
}

/// JSON header accompanying a grid-function CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridHeader {
    pub n: usize,
    pub resolution: usize,
    pub shape: Shape,
}

pub fn header_path(csv_path: &Path) -> std::path::PathBuf {
    let stem = csv_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    csv_path.with_file_name(format!("{stem}.header.json"))
}

fn kind_label(k: PointKind) -> &'static str {
    match k {
        PointKind::Interior => "interior",
        PointKind::Boundary => "boundary",
        PointKind::Exterior => "exterior",
    }
}

fn cell_average<F: Fn(&[f64]) -> f64>(f: &F, centre: &[f64], h: f64) -> f64 {
    let d = centre.len();
    let m = ((4096f64).powf(1.0 / d as f64).floor() as usize).clamp(2, 16);
    let total = m.pow(d as u32);
    let mut x = vec![0.0; d];
    let mut sum = 0.0;
    for flat in 0..total {
        let mut rest = flat;
        for k in 0..d {
            let i = rest % m;
            rest /= m;
            x[k] = centre[k] + ((i as f64 + 0.5) / m as f64 - 0.5) * h;
        }
        sum += f(&x);
    }
    sum / total as f64
}

/// Uniform mesh in `s = |z|²` on `[0, s_max]` with `size` cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialMesh {
    pub n: usize,
    pub s_max: f64,
    pub size: usize,
}

impl RadialMesh {
    pub fn new(n: usize, s_max: f64, size: usize) -> Result<Self> {
        if n == 0 {
            return Err(LabError::Config(
                "complex dimension must be positive".into(),
            ));
        }
        if !(s_max > 0.0) {
            return Err(LabError::Config("radial mesh needs S > 0".into()));
        }
        if size < 4 {
            return Err(LabError::Config(
                "radial mesh needs at least 4 cells".into(),
            ));
        }
        Ok(RadialMesh { n, s_max, size })
    }

    pub fn ds(&self) -> f64 {
        self.s_max / self.size as f64
    }

    pub fn s(&self, i: usize) -> f64 {
        if i == self.size {
            self.s_max
        } else {
            i as f64 * self.ds()
        }
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.size).map(|i| self.s(i))
    }

    pub fn len(&self) -> usize {
        self.size + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Lebesgue measure on ℂⁿ in the variable `s = |z|²`:
    /// `dμ = π^n s^{n-1} / (n-1)! ds`.
    pub fn measure_weight(&self, s: f64) -> f64 {
        let n = self.n;
        let fact: f64 = (1..n).map(|k| k as f64).product();
        std::f64::consts::PI.powi(n as i32) * s.powi(n as i32 - 1) / fact
    }
}

/// A radial function sampled on a [`RadialMesh`]. When `singular_origin`
/// is set the sample at `s = 0` is meaningless (the function blows up
/// there) and is stored as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialFn {
    pub mesh: RadialMesh,
    pub values: Vec<f64>,
    pub singular_origin: bool,
}

impl RadialFn {
    pub fn from_fn(mesh: &RadialMesh, f: impl Fn(f64) -> f64) -> Result<Self> {
        let mut values: Vec<f64> = mesh.points().map(&f).collect();
        let singular_origin = !values[0].is_finite();
        if singular_origin {
            values[0] = 0.0;
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(LabError::SingularData(format!(
                "radial sample {v} away from the origin"
            )));
        }
        Ok(RadialFn {
            mesh: mesh.clone(),
            values,
            singular_origin,
        })
    }

    pub fn s(&self, i: usize) -> f64 {
        self.mesh.s(i)
    }

    /// Norm with respect to Lebesgue measure on the ball `|z|² < S` of ℂⁿ.
    /// Trapezoid rule in `s`; the first cell is omitted when the origin is
    /// singular.
    pub fn norm(&self, kind: NormKind) -> Result<f64> {
        let start = usize::from(self.singular_origin);
        match kind {
            NormKind::Sup => {
                if self.singular_origin {
                    return Ok(f64::INFINITY);
                }
                Ok(self.values.iter().fold(0.0, |m, v| m.max(v.abs())))
            }
            NormKind::L1 => Ok(self.integrate_weighted(start, |v| v.abs())),
            NormKind::Lp(p) => {
                if !(p > 1.0) {
                    return Err(LabError::Parameter(format!(
                        "L^p norm needs p > 1, got {p}"
                    )));
                }
                Ok(self
                    .integrate_weighted(start, |v| v.abs().powf(p))
                    .powf(1.0 / p))
            }
        }
    }

    fn integrate_weighted(&self, start: usize, g: impl Fn(f64) -> f64) -> f64 {
        let ds = self.mesh.ds();
        (start..self.mesh.size)
            .map(|i| {
                let (s0, s1) = (self.s(i), self.s(i + 1));
                let a = g(self.values[i]) * self.mesh.measure_weight(s0);
                let b = g(self.values[i + 1]) * self.mesh.measure_weight(s1);
                0.5 * (a + b) * ds
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use std::f64::consts::PI;

    #[test]
    fn resolution_eight_unit_disk() {
        let grid = build_grid(&Domain::unit_ball(1), 8).unwrap();
        assert_eq!(grid.h(), 0.25);
        for idx in 0..grid.len() {
            let x = grid.coords(idx);
            let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
            assert_eq!(
                grid.kind(idx) == PointKind::Interior,
                r < 1.0 - 1e-12,
                "{x:?}"
            );
            if (r - 1.0).abs() < 1e-12 {
                assert_eq!(grid.kind(idx), PointKind::Boundary);
            }
        }
    }

    #[test]
    fn interior_count_matches_area() {
        let grid = build_grid(&Domain::unit_ball(1), 512).unwrap();
        let expect = PI / (grid.h() * grid.h());
        let got = grid.interior_count() as f64;
        assert!((got - expect).abs() / expect < 0.01, "{got} vs {expect}");
    }

    #[test]
    fn taylor_unit_ball_classifies_like_ball() {
        let data =
            TaylorData::from_samples(|x| x[0] * x[0] + x[1] * x[1] - 1.0, &[1.0, 0.0], 1e-3, 1.0)
                .unwrap();
        let taylor = Domain::taylor(data, vec![1.0, 0.0]).unwrap();
        for res in [8, 10, 64] {
            let a = build_grid(&Domain::unit_ball(1), res).unwrap();
            let b = build_grid(&taylor, res).unwrap();
            assert_eq!(a.kinds(), b.kinds(), "resolution {res}");
        }
    }

    #[test]
    fn distances() {
        let ball = Domain::unit_ball(1);
        assert_eq!(ball.dist_to_boundary(&[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(ball.dist_to_boundary(&[0.5, 0.0]).unwrap(), 0.5);
        assert!(matches!(
            ball.dist_to_boundary(&[1.5, 0.0]),
            Err(LabError::Domain(_))
        ));

        let data = TaylorData::ellipsoid(&[1.0], &[Complex64::new(1.0, 0.0)], 1.0).unwrap();
        let taylor = Domain::taylor(data, vec![1.0, 0.0]).unwrap();
        let d = taylor.dist_to_boundary(&[0.9, 0.0]).unwrap();
        assert!((0.09..=0.11).contains(&d), "{d}");
    }

    #[test]
    fn ellipsoid_volume_and_diameter() {
        let w = [2.0, 1.0];
        let p = [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)];
        let data = TaylorData::ellipsoid(&w, &p, 0.5).unwrap();
        let dom = Domain::taylor(data, vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        // semi-axes 1/√2, 1/√2, 1, 1 in ℝ⁴
        let expect = unit_ball_volume(4) * 0.5;
        assert!((dom.volume() - expect).abs() < 1e-12);
        assert!((dom.diameter() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn norms_on_unit_disk() {
        let grid = build_grid(&Domain::unit_ball(1), 128).unwrap();
        let one = GridFn::from_fn(&grid, |_| 1.0).unwrap();
        let l1 = one.norm(NormKind::L1).unwrap();
        assert!((l1 - PI).abs() / PI < 0.02, "{l1}");
        let zero = GridFn::zeros(&grid);
        for k in [NormKind::Sup, NormKind::L1, NormKind::Lp(2.0)] {
            assert_eq!(zero.norm(k).unwrap(), 0.0);
        }
        assert!(matches!(
            one.norm(NormKind::Lp(1.0)),
            Err(LabError::Parameter(_))
        ));
    }

    #[test]
    fn singular_lp_norm_is_refinement_stable() {
        // ∫_{B1} |z|^{-1} = 2π, so the L² norm of |z|^{-1/2} is √(2π).
        let exact = (2.0 * PI).sqrt();
        let mut prev = None;
        for res in [256, 512] {
            let grid = build_grid(&Domain::unit_ball(1), res).unwrap();
            let f =
                GridFn::sample_density(&grid, |x| (x[0] * x[0] + x[1] * x[1]).powf(-0.25)).unwrap();
            assert_eq!(f.omitted().len(), 1);
            let v = f.norm(NormKind::Lp(2.0)).unwrap();
            assert!((v - exact).abs() / exact < 0.05, "{v}");
            if let Some(p) = prev {
                let rel: f64 = (v - p) / p;
                assert!(rel.abs() <= 0.02, "{p} -> {v}");
            }
            prev = Some(v);
        }
    }

    #[test]
    fn shrunk_domains_nest() {
        let grid = build_grid(&Domain::unit_ball(1), 64).unwrap();
        let eps = [0.0, 0.05, 0.1, 0.3, 0.9];
        for (i, &e1) in eps.iter().enumerate() {
            for &e2 in &eps[i..] {
                let a = grid.shrunk(e1);
                let b = grid.shrunk(e2);
                assert!(b.members().iter().all(|m| a.contains(*m)));
            }
        }
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let grid = build_grid(&Domain::unit_ball(1), 16).unwrap();
        let f = GridFn::from_fn(&grid, |x| x[0] - 2.0 * x[1] * x[1]).unwrap();
        let path = dir.path().join("u.csv");
        f.write_csv(&path).unwrap();
        let g = GridFn::read_csv(&path).unwrap();
        assert_eq!(f.values(), g.values());
    }

    #[test]
    fn radial_measure_matches_ball_volume() {
        for n in 1..=3 {
            let mesh = RadialMesh::new(n, 1.0, 2000).unwrap();
            let one = RadialFn::from_fn(&mesh, |_| 1.0).unwrap();
            let v = one.norm(NormKind::L1).unwrap();
            let exact = unit_ball_volume(2 * n);
            assert!((v - exact).abs() < 1e-5, "n={n}: {v} vs {exact}");
        }
    }
}
