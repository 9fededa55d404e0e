//! Small least-squares helpers shared by the decay profiles and the
//! stretched-exponential fits.

/// Ordinary least squares of `y` on `t`: returns `(slope, intercept, r2)`.
pub fn linear_fit(ts: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    assert_eq!(ts.len(), ys.len());
    let n = ts.len() as f64;
    let mt = ts.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut stt = 0.0;
    let mut sty = 0.0;
    let mut syy = 0.0;
    for (&t, &y) in ts.iter().zip(ys) {
        stt += (t - mt) * (t - mt);
        sty += (t - mt) * (y - my);
        syy += (y - my) * (y - my);
    }
    if stt == 0.0 {
        return (0.0, my, 0.0);
    }
    let slope = sty / stt;
    let intercept = my - slope * mt;
    let r2 = if syy == 0.0 { 1.0 } else { (sty * sty) / (stt * syy) };
    (slope, intercept, r2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let ts: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = ts.iter().map(|t| 3.0 - 0.7 * t).collect();
        let (s, c, r2) = linear_fit(&ts, &ys);
        assert!((s + 0.7).abs() < 1e-12);
        assert!((c - 3.0).abs() < 1e-12);
        assert!((r2 - 1.0).abs() < 1e-12);
    }
}
