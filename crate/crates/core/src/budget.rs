//! Exponent bookkeeping: from boundary regularity `α` and density
//! integrability `p` to the interior exponent `α′`.

use serde::Serialize;

use crate::error::{LabError, Result};

/// Which of the three cases the ratio `α/(2+α)` falls into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `α/(2+α) ≥ γ₀`: any `β < γ₀` is reachable.
    Saturated,
    /// `γₙ ≤ α/(2+α) < γ₀`: `β = α/(2+α)` is reachable.
    Intermediate,
    /// `α/(2+α) < γₙ`: `β = min{α/2, γ′}` with `γ′ < γₙ`.
    Small,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HolderBudget {
    pub alpha: f64,
    pub p: f64,
    pub n: usize,
    pub p_star: f64,
    pub gamma_0: f64,
    pub gamma_n: f64,
    pub gamma: f64,
    pub gamma_prime: f64,
    pub gamma_dblprime: f64,
    /// `α/(2+α)`.
    pub ratio: f64,
    pub beta: f64,
    pub alpha_prime: f64,
    pub regime: Regime,
    /// Supremum of `β` over all admissible `γ′, γ″` (not attained when
    /// saturated or small).
    pub beta_sup: f64,
}

pub fn p_star(p: f64) -> f64 {
    p / (p - 1.0)
}

pub fn gamma_0(p: f64) -> f64 {
    1.0 / (p_star(p) + 1.0)
}

pub fn gamma_n(n: usize, p: f64) -> f64 {
    1.0 / (n as f64 * p_star(p) + 1.0)
}

fn open_interval(name: &str, v: f64, hi: f64) -> Result<()> {
    if v > 0.0 && v < hi {
        Ok(())
    } else {
        Err(LabError::Parameter(format!(
            "{name} = {v} outside (0, {hi})"
        )))
    }
}

pub fn budget(
    alpha: f64,
    p: f64,
    n: usize,
    gamma: f64,
    gamma_prime: f64,
    gamma_dblprime: f64,
) -> Result<HolderBudget> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(LabError::Parameter(format!(
            "alpha = {alpha} outside (0, 1]"
        )));
    }
    if !(p > 1.0 && p.is_finite()) {
        return Err(LabError::Parameter(format!("p = {p} must exceed 1")));
    }
    if n == 0 {
        return Err(LabError::Parameter("dimension n must be positive".into()));
    }
    let g0 = gamma_0(p);
    let gn = gamma_n(n, p);
    open_interval("gamma", gamma, gn)?;
    open_interval("gamma'", gamma_prime, gn)?;
    open_interval("gamma''", gamma_dblprime, g0)?;
    let ratio = alpha / (2.0 + alpha);
    let beta = gamma_dblprime
        .min(ratio)
        .max((alpha / 2.0).min(gamma_prime));
    let alpha_prime = beta.min((1.0 + beta) * gamma);
    let (regime, beta_sup) = if ratio >= g0 {
        (Regime::Saturated, g0)
    } else if ratio >= gn {
        (Regime::Intermediate, ratio)
    } else {
        (Regime::Small, (alpha / 2.0).min(gn))
    };
    Ok(HolderBudget {
        alpha,
        p,
        n,
        p_star: p_star(p),
        gamma_0: g0,
        gamma_n: gn,
        gamma,
        gamma_prime,
        gamma_dblprime,
        ratio,
        beta,
        alpha_prime,
        regime,
        beta_sup,
    })
}

/// Largest `α′` over a uniform grid of `steps` interior points per
/// `γ`-interval.
pub fn sup_alpha_prime(alpha: f64, p: f64, n: usize, steps: usize) -> Result<HolderBudget> {
    let g0 = gamma_0(p);
    let gn = gamma_n(n, p);
    let at = |hi: f64, j: usize| hi * (j + 1) as f64 / (steps + 1) as f64;
    let mut best: Option<HolderBudget> = None;
    for i in 0..steps {
        for j in 0..steps {
            for k in 0..steps {
                let b = budget(alpha, p, n, at(gn, i), at(gn, j), at(g0, k))?;
                if best.is_none_or(|x| b.alpha_prime > x.alpha_prime) {
                    best = Some(b);
                }
            }
        }
    }
    best.ok_or_else(|| LabError::Parameter("empty sweep".into()))
}

impl HolderBudget {
    /// Aligned two-column text table.
    pub fn table(&self) -> String {
        let rows = [
            ("alpha", self.alpha.to_string()),
            ("p", self.p.to_string()),
            ("n", self.n.to_string()),
            ("p*", format!("{:.6}", self.p_star)),
            ("gamma_0", format!("{:.6}", self.gamma_0)),
            ("gamma_n", format!("{:.6}", self.gamma_n)),
            ("gamma", self.gamma.to_string()),
            ("gamma'", self.gamma_prime.to_string()),
            ("gamma''", self.gamma_dblprime.to_string()),
            ("alpha/(2+alpha)", format!("{:.6}", self.ratio)),
            ("beta", format!("{:.6}", self.beta)),
            ("alpha'", format!("{:.6}", self.alpha_prime)),
            ("regime", format!("{:?}", self.regime).to_lowercase()),
            ("beta sup", format!("{:.6}", self.beta_sup)),
        ];
        let w = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        rows.iter()
            .map(|(k, v)| format!("{k:<w$}  {v}\n"))
            .collect()
    }
}
