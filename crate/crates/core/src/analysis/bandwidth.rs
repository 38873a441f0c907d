use super::{AnalysisError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bandwidth {
    pub r: f64,
    /// Either series is constant; `r` is then 0.
    pub degenerate: bool,
    pub n: usize,
}

/// Pearson correlation between per-property MI totals and per-property
/// oracle accuracy.
pub fn bandwidth_correlation(mi_totals: &[f64], oracle_acc: &[f64]) -> Result<Bandwidth> {
    if mi_totals.len() != oracle_acc.len() {
        return Err(AnalysisError::Length(format!("{} MI totals vs {} accuracies", mi_totals.len(), oracle_acc.len())));
    }
    let n = mi_totals.len();
    if n < 3 {
        return Err(AnalysisError::TooFewProperties { needed: 3, got: n });
    }
    let mx = mi_totals.iter().sum::<f64>() / n as f64;
    let my = oracle_acc.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in mi_totals.iter().zip(oracle_acc) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Ok(Bandwidth { r: 0.0, degenerate: true, n });
    }
    Ok(Bandwidth { r: sxy / (sxx * syy).sqrt(), degenerate: false, n })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_and_reversed() {
        let x = [0.1, 0.5, 0.9, 1.3];
        let up: Vec<f64> = x.iter().map(|v| 0.6 + 0.2 * v).collect();
        let down: Vec<f64> = x.iter().map(|v| 0.9 - 0.2 * v).collect();
        assert!((bandwidth_correlation(&x, &up).unwrap().r - 1.0).abs() < 1e-12);
        assert!((bandwidth_correlation(&x, &down).unwrap().r + 1.0).abs() < 1e-12);
        assert!(bandwidth_correlation(&x, &[0.7; 4]).unwrap().degenerate);
        assert!(bandwidth_correlation(&x[..2], &up[..2]).is_err());
    }
}
