//! Ordinary least squares on log–log axes.

use serde::Serialize;

use crate::error::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerFit {
    /// Slope of `log y` against `log x`.
    pub slope: f64,
    /// `exp(intercept)`, so `y ≈ constant · x^slope`.
    pub constant: f64,
    /// Root-mean-square residual in `log y`.
    pub residual: f64,
}

/// Fits `y = C x^a` through positive samples.
pub fn loglog_fit(x: &[f64], y: &[f64]) -> Result<PowerFit> {
    if x.len() != y.len() {
        return Err(LabError::Shape(
            "fit abscissae and ordinates differ in length".into(),
        ));
    }
    if x.len() < 2 {
        return Err(LabError::DegenerateFit("need at least two points".into()));
    }
    if let Some(v) = x.iter().chain(y).find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(LabError::DegenerateFit(format!("non-positive sample {v}")));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(LabError::DegenerateFit("all abscissae coincide".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (lx
        .iter()
        .zip(&ly)
        .map(|(a, b)| {
            let r = b - (intercept + slope * a);
            r * r
        })
        .sum::<f64>()
        / m)
        .sqrt();
    Ok(PowerFit {
        slope,
        constant: intercept.exp(),
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn exact_power_laws(a in -3.0f64..3.0, c in 0.01f64..100.0) {
            let x: Vec<f64> = (0..6).map(|k| 0.5f64.powi(k)).collect();
            let y: Vec<f64> = x.iter().map(|v| c * v.powf(a)).collect();
            let fit = loglog_fit(&x, &y).unwrap();
            prop_assert!((fit.slope - a).abs() < 1e-10);
            prop_assert!((fit.constant / c - 1.0).abs() < 1e-10);
            prop_assert!(fit.residual < 1e-10);
        }
    }

    #[test]
    fn rejects_zero_samples() {
        assert!(matches!(
            loglog_fit(&[1.0, 0.5], &[0.0, 1.0]),
            Err(LabError::DegenerateFit(_))
        ));
    }
}
