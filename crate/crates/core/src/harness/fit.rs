use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// y ≈ a·x^b fitted by least squares in log-log space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub prefactor: f64,
    pub exponent: f64,
    pub prefactor_err: f64,
    pub exponent_err: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub points: usize,
}

pub const MIN_FIT_POINTS: usize = 4;

pub fn fit_power_law(xs: &[f64], ys: &[f64]) -> Result<ScalingFit> {
    if xs.len() != ys.len() {
        return Err(Error::Fit(format!(
            "length mismatch: {} x values, {} y values",
            xs.len(),
            ys.len()
        )));
    }
    let n = xs.len();
    if n < MIN_FIT_POINTS {
        return Err(Error::Fit(format!(
            "need at least {MIN_FIT_POINTS} points, got {n}"
        )));
    }
    if let Some(y) = ys.iter().find(|y| !(**y > 0.0) || !y.is_finite()) {
        return Err(Error::Fit(format!("y values must be positive and finite, got {y}")));
    }
    if let Some(x) = xs.iter().find(|x| !(**x > 0.0) || !x.is_finite()) {
        return Err(Error::Fit(format!("x values must be positive and finite, got {x}")));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let nf = n as f64;
    let mx = lx.iter().sum::<f64>() / nf;
    let my = ly.iter().sum::<f64>() / nf;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 0.0 {
        return Err(Error::Fit("x values are all equal".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my) * (y - my)).sum();
    let b = sxy / sxx;
    let ln_a = my - b * mx;
    let ssr: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| {
            let e = y - (ln_a + b * x);
            e * e
        })
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - ssr / syy } else { 1.0 };
    let s2 = ssr / (nf - 2.0);
    let b_err = (s2 / sxx).sqrt();
    let ln_a_err = (s2 * (1.0 / nf + mx * mx / sxx)).sqrt();
    let a = ln_a.exp();
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(ScalingFit {
        prefactor: a,
        exponent: b,
        prefactor_err: a * ln_a_err,
        exponent_err: b_err,
        r_squared,
        window: (lo, hi),
        points: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_law() {
        let xs = [20.0, 40.0, 60.0, 80.0];
        let f = fit_power_law(&xs, &xs).unwrap();
        assert!((f.exponent - 1.0).abs() < 1e-12);
        assert!((f.prefactor - 1.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert!(f.exponent_err < 1e-6);
        assert_eq!(f.window, (20.0, 80.0));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(fit_power_law(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(fit_power_law(&[1.0, 2.0, 3.0, 4.0], &[1.0, -2.0, 3.0, 4.0]).is_err());
        assert!(fit_power_law(&[2.0; 4], &[1.0, 2.0, 3.0, 4.0]).is_err());
        assert!(fit_power_law(&[1.0, 2.0], &[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn recovers_exact_power_laws(a in 0.01f64..100.0, b in -2.0f64..2.0) {
            let xs = [10.0f64, 20.0, 35.0, 50.0, 120.0];
            let ys: Vec<f64> = xs.iter().map(|x| a * x.powf(b)).collect();
            let f = fit_power_law(&xs, &ys).unwrap();
            prop_assert!((f.exponent - b).abs() < 1e-9);
            prop_assert!((f.prefactor - a).abs() < 1e-8 * a);
        }
    }
}
