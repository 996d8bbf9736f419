use statrs::distribution::{ContinuousCDF, StudentsT};

use super::MetricsError;

/// Sample Pearson correlation with a two-sided p-value from the t
/// transform on n - 2 degrees of freedom.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<(f64, f64), MetricsError> {
    if x.len() != y.len() {
        return Err(MetricsError::Length(x.len(), y.len()));
    }
    let n = x.len();
    if n < 3 {
        return Err(MetricsError::TooFew("pearson_r", 3));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    // test constancy directly; the rounded mean can leave tiny residuals
    if sxx == 0.0 || x.iter().all(|v| *v == x[0]) {
        return Err(MetricsError::ZeroVariance("x"));
    }
    if syy == 0.0 || y.iter().all(|v| *v == y[0]) {
        return Err(MetricsError::ZeroVariance("y"));
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    if 1.0 - r.abs() < 1e-15 {
        return Ok((r, 0.0));
    }
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    Ok((r, 2.0 * dist.sf(t.abs())))
}
