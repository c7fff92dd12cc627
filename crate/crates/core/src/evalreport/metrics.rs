use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Average pixel difference: mean of `|a − b|` over all voxels.
pub fn adp(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::shape("adp", format!("{} vs {} voxels", a.len(), b.len())));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
}

/// `100 · |pred − truth| / truth`.
pub fn pct_error(pred: f64, truth: f64) -> Result<f64> {
    if !(truth > 0.0) {
        return Err(Error::InvalidArgument(format!("percent error needs a positive truth, got {truth}")));
    }
    Ok(100.0 * (pred - truth).abs() / truth)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

pub fn error_stats(errors: &[f64]) -> Result<ErrorStats> {
    if errors.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "error statistics need at least 2 values, got {}",
            errors.len()
        )));
    }
    let n = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / n;
    let var = errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n;
    Ok(ErrorStats { mean, std: var.sqrt() })
}

/// Pearson product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "pearson needs two equal-length lists of at least 3 values, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::InvalidArgument(
            "pearson is undefined when one list has zero variance".into(),
        ));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn adp_examples() {
        assert_eq!(adp(&[1.0, 5.0], &[1.0, 5.0]).unwrap(), 0.0);
        let a = [120.0, 130.5, 171.25];
        let b: Vec<f64> = a.iter().map(|v| v + 2.0).collect();
        assert_relative_eq!(adp(&a, &b).unwrap(), 2.0, epsilon = 1e-12);
        assert_eq!(adp(&[100.0, 102.0], &[101.0, 106.0]).unwrap(), 2.5);
        assert!(adp(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn pct_error_examples() {
        assert_relative_eq!(pct_error(10.05, 10.0).unwrap(), 0.5, epsilon = 1e-9);
        assert_eq!(pct_error(7.0, 7.0).unwrap(), 0.0);
        assert!(pct_error(1.0, 0.0).is_err());
    }

    #[test]
    fn stats_examples() {
        assert_eq!(error_stats(&[1.0, 1.0, 1.0]).unwrap(), ErrorStats { mean: 1.0, std: 0.0 });
        assert_eq!(error_stats(&[0.0, 2.0]).unwrap(), ErrorStats { mean: 1.0, std: 1.0 });
        assert!(error_stats(&[3.0]).is_err());
    }

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 3.0, 4.5];
        let up: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let down: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_relative_eq!(pearson(&x, &up).unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(pearson(&x, &down).unwrap(), -1.0, epsilon = 1e-12);
        assert_relative_eq!(pearson(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap(), 0.5, epsilon = 1e-12);
        assert!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
    }
}
