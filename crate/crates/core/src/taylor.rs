//! Second-order Taylor data of a defining function at a boundary point.
//!
//! Complex coordinates are stored as interleaved reals:
//! `z_j = x[2j] + i x[2j + 1]`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Coefficients of
/// `f(z) = Σ Re(a_j z_j) + Σ Re(b_ij z_i z_j) + Σ c_ij z_i conj(z_j)`
/// around a boundary point moved to the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaylorData {
    pub n: usize,
    pub a: Vec<Complex64>,
    /// Symmetric.
    pub b: Vec<Vec<Complex64>>,
    /// Hermitian positive definite.
    pub c: Vec<Vec<Complex64>>,
    /// Radius of the neighbourhood the barrier is certified on.
    pub r0: f64,
}

impl TaylorData {
    pub fn new(
        a: Vec<Complex64>,
        b: Vec<Vec<Complex64>>,
        c: Vec<Vec<Complex64>>,
        r0: f64,
    ) -> Result<Self> {
        let data = TaylorData {
            n: a.len(),
            a,
            b,
            c,
            r0,
        };
        data.validate()?;
        Ok(data)
    }

    /// Taylor data of the ellipsoid `Σ w_j |z_j|² < 1` at the boundary point
    /// `p` (which must satisfy `Σ w_j |p_j|² = 1`). The expansion is exact:
    /// `a_j = 2 w_j conj(p_j)`, `b = 0`, `c = diag(w)`.
    pub fn ellipsoid(weights: &[f64], point: &[Complex64], r0: f64) -> Result<Self> {
        if weights.len() != point.len() || weights.is_empty() {
            return Err(LabError::Shape(
                "ellipsoid weights and point differ in length".into(),
            ));
        }
        let level: f64 = weights
            .iter()
            .zip(point)
            .map(|(w, p)| w * p.norm_sqr())
            .sum();
        if (level - 1.0).abs() > 1e-10 {
            return Err(LabError::Domain(format!(
                "point is not on the ellipsoid boundary (level {level})"
            )));
        }
        let n = weights.len();
        let a = weights
            .iter()
            .zip(point)
            .map(|(w, p)| 2.0 * w * p.conj())
            .collect();
        let zero = Complex64::new(0.0, 0.0);
        let b = vec![vec![zero; n]; n];
        let mut c = vec![vec![zero; n]; n];
        for (j, w) in weights.iter().enumerate() {
            c[j][j] = Complex64::new(*w, 0.0);
        }
        TaylorData::new(a, b, c, r0)
    }

    /// Extracts Taylor data from a defining function sampled on a central
    /// difference stencil of spacing `h` around `base` (real coordinates).
    /// `f(base)` is expected to vanish.
    pub fn from_samples<F>(f: F, base: &[f64], h: f64, r0: f64) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64,
    {
        let d = base.len();
        if d == 0 || d % 2 != 0 {
            return Err(LabError::Shape(
                "base point must have even real dimension".into(),
            ));
        }
        if h <= 0.0 {
            return Err(LabError::Parameter(
                "stencil spacing must be positive".into(),
            ));
        }
        let n = d / 2;
        let at = |shifts: &[(usize, f64)]| {
            let mut x = base.to_vec();
            for &(k, s) in shifts {
                x[k] += s;
            }
            f(&x)
        };
        let f0 = at(&[]);
        let mut grad = vec![0.0; d];
        let mut hess = vec![vec![0.0; d]; d];
        for k in 0..d {
            grad[k] = (at(&[(k, h)]) - at(&[(k, -h)])) / (2.0 * h);
            hess[k][k] = (at(&[(k, h)]) - 2.0 * f0 + at(&[(k, -h)])) / (h * h);
            for l in 0..k {
                let v = (at(&[(k, h), (l, h)]) - at(&[(k, h), (l, -h)]) - at(&[(k, -h), (l, h)])
                    + at(&[(k, -h), (l, -h)]))
                    / (4.0 * h * h);
                hess[k][l] = v;
                hess[l][k] = v;
            }
        }
        let a = (0..n)
            .map(|j| Complex64::new(grad[2 * j], -grad[2 * j + 1]))
            .collect();
        let zero = Complex64::new(0.0, 0.0);
        let mut b = vec![vec![zero; n]; n];
        let mut c = vec![vec![zero; n]; n];
        for i in 0..n {
            for j in 0..n {
                let (xi, yi, xj, yj) = (2 * i, 2 * i + 1, 2 * j, 2 * j + 1);
                let xx = hess[xi][xj];
                let yy = hess[yi][yj];
                let xy = hess[xi][yj];
                let yx = hess[yi][xj];
                c[i][j] = Complex64::new(xx + yy, xy - yx) * 0.25;
                b[i][j] = Complex64::new(xx - yy, -(xy + yx)) * 0.25;
            }
        }
        TaylorData::new(a, b, c, r0)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        if n == 0 {
            return Err(LabError::Shape("Taylor data needs n ≥ 1".into()));
        }
        let square = |m: &Vec<Vec<Complex64>>| m.len() == n && m.iter().all(|r| r.len() == n);
        if self.a.len() != n || !square(&self.b) || !square(&self.c) {
            return Err(LabError::Shape(
                "Taylor coefficient sizes do not match n".into(),
            ));
        }
        if !(self.r0 > 0.0) {
            return Err(LabError::Parameter("r0 must be positive".into()));
        }
        for i in 0..n {
            for j in 0..n {
                if (self.b[i][j] - self.b[j][i]).norm() > 1e-9 {
                    return Err(LabError::Parameter("b must be symmetric".into()));
                }
                if (self.c[i][j] - self.c[j][i].conj()).norm() > 1e-9 {
                    return Err(LabError::Parameter("c must be Hermitian".into()));
                }
            }
        }
        Ok(())
    }

    /// Real dimension `2n`.
    pub fn real_dim(&self) -> usize {
        2 * self.n
    }

    /// Taylor polynomial evaluated at `x` (real coordinates, origin at the
    /// boundary point). `shrink` is subtracted from the diagonal of `c`
    /// and `b_sign` multiplies the `b` term.
    pub(crate) fn eval_with(&self, x: &[f64], shrink: f64, b_sign: f64) -> f64 {
        let z = to_complex(x);
        let mut v = 0.0;
        for j in 0..self.n {
            v += (self.a[j] * z[j]).re;
        }
        for i in 0..self.n {
            for j in 0..self.n {
                v += b_sign * (self.b[i][j] * z[i] * z[j]).re;
                let mut cij = self.c[i][j];
                if i == j {
                    cij -= shrink;
                }
                v += (cij * z[i] * z[j].conj()).re;
            }
        }
        v
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.eval_with(x, 0.0, 1.0)
    }

    /// Eigenvalues of the Hermitian matrix `c - shift·I`, ascending.
    pub fn hermitian_eigenvalues(&self, shift: f64) -> Vec<f64> {
        hermitian_eigenvalues(&self.c, shift)
    }

    /// Real quadric form of the Taylor polynomial.
    pub fn quadric(&self) -> Quadric {
        let d = self.real_dim();
        let zero = vec![0.0; d];
        let f = |x: &[f64]| self.eval(x);
        let mut grad = vec![0.0; d];
        for j in 0..self.n {
            grad[2 * j] = self.a[j].re;
            grad[2 * j + 1] = -self.a[j].im;
        }
        // Exact for a quadratic: q(e_k) + q(-e_k) = H_kk and
        // q(e_k + e_l) - q(e_k - e_l) = 2 g_l + 2 H_kl.
        let unit = |k: usize, s: f64| {
            let mut x = zero.clone();
            x[k] = s;
            x
        };
        let mut hess = DMatrix::zeros(d, d);
        for k in 0..d {
            hess[(k, k)] = f(&unit(k, 1.0)) + f(&unit(k, -1.0));
            for l in 0..k {
                let mut pp = zero.clone();
                pp[k] = 1.0;
                pp[l] = 1.0;
                let mut pm = zero.clone();
                pm[k] = 1.0;
                pm[l] = -1.0;
                let v = (f(&pp) - f(&pm)) / 2.0 - (grad[l]);
                hess[(k, l)] = v;
                hess[(l, k)] = v;
            }
        }
        Quadric {
            value: 0.0,
            grad: DVector::from_vec(grad),
            hess,
        }
    }
}

/// `q(x) = value + grad·x + ½ xᵀ hess x` on ℝ^d.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadric {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

impl Quadric {
    pub fn dim(&self) -> usize {
        self.grad.len()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let v = DVector::from_column_slice(x);
        self.value + self.grad.dot(&v) + 0.5 * v.dot(&(&self.hess * &v))
    }

    pub fn gradient(&self, x: &[f64]) -> DVector<f64> {
        let v = DVector::from_column_slice(x);
        &self.grad + &self.hess * v
    }

    /// Re-centres the quadric so that `shifted.eval(x) = self.eval(x - origin)`.
    pub fn translated(&self, origin: &[f64]) -> Quadric {
        let o = DVector::from_column_slice(origin);
        let ho = &self.hess * &o;
        Quadric {
            value: self.value - self.grad.dot(&o) + 0.5 * o.dot(&ho),
            grad: &self.grad - ho,
            hess: self.hess.clone(),
        }
    }

    /// Spectral norm of the Hessian (largest |eigenvalue|).
    pub fn hess_norm(&self) -> f64 {
        SymmetricEigen::new(self.hess.clone())
            .eigenvalues
            .iter()
            .fold(0.0_f64, |m, e| m.max(e.abs()))
    }

    pub fn min_hess_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.hess.clone())
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |m, e| m.min(*e))
    }

    /// Roots `t` of `q(p + t·dir) = 0`, ascending. Empty when there are none.
    pub fn line_roots(&self, p: &[f64], dir: &[f64]) -> Vec<f64> {
        let dv = DVector::from_column_slice(dir);
        let c0 = self.eval(p);
        let c1 = self.gradient(p).dot(&dv);
        let c2 = 0.5 * dv.dot(&(&self.hess * &dv));
        solve_quadratic(c2, c1, c0)
    }
}

fn solve_quadratic(a: f64, b: f64, c: f64) -> Vec<f64> {
    if a.abs() < 1e-300 {
        if b.abs() < 1e-300 {
            return Vec::new();
        }
        return vec![-c / b];
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Vec::new();
    }
    let sq = disc.sqrt();
    // Numerically stable pair.
    let q = -0.5 * (b + b.signum() * sq);
    let (mut r1, mut r2) = if q == 0.0 { (0.0, 0.0) } else { (q / a, c / q) };
    if r1 > r2 {
        std::mem::swap(&mut r1, &mut r2);
    }
    vec![r1, r2]
}

pub(crate) fn to_complex(x: &[f64]) -> Vec<Complex64> {
    x.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect()
}

/// Eigenvalues of `m - shift·I` for Hermitian `m`, via the real symmetric
/// embedding `[[Re, -Im], [Im, Re]]` whose spectrum repeats each eigenvalue.
pub fn hermitian_eigenvalues(m: &[Vec<Complex64>], shift: f64) -> Vec<f64> {
    let n = m.len();
    let mut real = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let mut v = m[i][j];
            if i == j {
                v -= shift;
            }
            real[(i, j)] = v.re;
            real[(i + n, j + n)] = v.re;
            real[(i, j + n)] = -v.im;
            real[(i + n, j)] = v.im;
        }
    }
    let mut eig: Vec<f64> = SymmetricEigen::new(real)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    eig.sort_by(|a, b| a.total_cmp(b));
    eig.into_iter().step_by(2).collect()
}
