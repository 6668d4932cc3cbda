use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Normal quantile for a two-sided 95% interval.
const Z95: f64 = 1.959_963_984_540_054;

/// Least-squares line through `(log x, log y)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Residual-based standard error of the slope (0 with two points).
    pub slope_se: f64,
}

/// One `(x, mean, SE)` observation for a rate fit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub x: f64,
    pub mean: f64,
    pub se: f64,
}

/// Fitted rate exponent with a 95% interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub ci: (f64, f64),
    pub points: usize,
}

impl RateFit {
    pub fn covers(&self, value: f64) -> bool {
        self.ci.0 <= value && value <= self.ci.1
    }
}

/// Minimum number of design points for [`fit_rate_exponent`].
pub const MIN_RATE_POINTS: usize = 3;

fn logs(xs: &[f64], ys: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if xs.len() != ys.len() {
        return Err(Error::InsufficientSpan(format!("{} x values but {} y values", xs.len(), ys.len())));
    }
    if xs.len() < 2 {
        return Err(Error::InsufficientSpan("need at least two points".into()));
    }
    if let Some(v) = xs.iter().chain(ys).find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(crate::error::domain("log-log fit", format!("non-positive or non-finite value {v}")));
    }
    Ok((xs.iter().map(|x| x.ln()).collect(), ys.iter().map(|y| y.ln()).collect()))
}

fn weighted_line(lx: &[f64], ly: &[f64], w: &[f64]) -> (f64, f64, f64) {
    let sw: f64 = w.iter().sum();
    let mx = lx.iter().zip(w).map(|(x, w)| x * w).sum::<f64>() / sw;
    let my = ly.iter().zip(w).map(|(y, w)| y * w).sum::<f64>() / sw;
    let sxx: f64 = lx.iter().zip(w).map(|(x, w)| w * (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(ly).zip(w).map(|((x, y), w)| w * (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx, sxx)
}

/// Ordinary least squares on the log-log scale.
pub fn fit_log_log(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    let (lx, ly) = logs(xs, ys)?;
    let w = vec![1.0; lx.len()];
    let (slope, intercept, sxx) = weighted_line(&lx, &ly, &w);
    if sxx <= 0.0 {
        return Err(Error::InsufficientSpan("all x values coincide".into()));
    }
    let k = lx.len();
    let slope_se = if k > 2 {
        let rss: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        (rss / (k - 2) as f64 / sxx).sqrt()
    } else {
        0.0
    };
    Ok(LineFit {
        slope,
        intercept,
        slope_se,
    })
}

/// Weighted log-log fit of Monte Carlo means.
///
/// Points must span at least one decade in `x` and be roughly geometric.
/// Each point is weighted by the inverse delta-method variance of its log
/// mean, `(se / mean)²`. When every SE is zero the fit falls back to the
/// residual-based OLS error.
pub fn fit_rate_exponent(points: &[RatePoint]) -> Result<RateFit> {
    if points.len() < MIN_RATE_POINTS {
        return Err(Error::InsufficientSpan(format!(
            "{} points given, at least {MIN_RATE_POINTS} required",
            points.len()
        )));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.mean).collect();
    let (lx, ly) = logs(&xs, &ys)?;
    let (lo, hi) = lx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if hi - lo < std::f64::consts::LN_10 * (1.0 - 1e-9) {
        return Err(Error::InsufficientSpan(format!(
            "x spans a factor {:.3}, less than one decade",
            (hi - lo).exp()
        )));
    }
    let mut sorted = lx.clone();
    sorted.sort_by(f64::total_cmp);
    let gaps: Vec<f64> = sorted.windows(2).map(|w| w[1] - w[0]).collect();
    let mean_gap = (hi - lo) / gaps.len() as f64;
    if gaps.iter().any(|g| (g - mean_gap).abs() > 0.25 * mean_gap) {
        return Err(Error::InsufficientSpan("x values are not geometrically spaced".into()));
    }
    if points.iter().any(|p| !(p.se.is_finite() && p.se >= 0.0)) {
        return Err(crate::error::domain("rate fit", "standard errors must be finite and non-negative"));
    }

    let rel: Vec<f64> = points.iter().map(|p| p.se / p.mean).collect();
    let (slope, intercept, slope_se) = if rel.iter().all(|&r| r == 0.0) {
        let f = fit_log_log(&xs, &ys)?;
        (f.slope, f.intercept, f.slope_se)
    } else {
        let floor = rel.iter().copied().filter(|&r| r > 0.0).fold(f64::INFINITY, f64::min) * 1e-3;
        let w: Vec<f64> = rel.iter().map(|r| 1.0 / r.max(floor).powi(2)).collect();
        let (slope, intercept, sxx) = weighted_line(&lx, &ly, &w);
        (slope, intercept, (1.0 / sxx).sqrt())
    };
    Ok(RateFit {
        slope,
        intercept,
        slope_se,
        ci: (slope - Z95 * slope_se, slope + Z95 * slope_se),
        points: points.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn exact(xs: &[f64], f: impl Fn(f64) -> f64) -> Vec<RatePoint> {
        xs.iter().map(|&x| RatePoint { x, mean: f(x), se: 0.0 }).collect()
    }

    #[test]
    fn recovers_an_exact_power_law() {
        let pts = exact(&[10.0, 100.0, 1000.0, 10000.0], |x| 3.0 / x);
        let fit = fit_rate_exponent(&pts).unwrap();
        assert_abs_diff_eq!(fit.slope, -1.0, epsilon = 1e-12);
        assert!(fit.covers(-1.0));
    }

    #[test]
    fn noisy_power_law_is_close() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs = [1.0, 10f64.sqrt(), 10.0, 10f64.powf(1.5), 100.0];
        let pts: Vec<RatePoint> = xs
            .iter()
            .map(|&x| {
                let m = 2.0 * x.powf(-0.8);
                let noise = 1.0 + 0.05 * (rng.random::<f64>() * 2.0 - 1.0);
                RatePoint { x, mean: m * noise, se: 0.05 * m }
            })
            .collect();
        let fit = fit_rate_exponent(&pts).unwrap();
        assert!((fit.slope + 0.8).abs() <= 0.05, "{}", fit.slope);
    }

    #[test]
    fn constant_gives_zero_slope() {
        let pts = exact(&[1.0, 4.0, 16.0], |_| 0.7);
        assert_abs_diff_eq!(fit_rate_exponent(&pts).unwrap().slope, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_designs() {
        assert!(matches!(
            fit_rate_exponent(&exact(&[1.0, 10.0], |x| x)),
            Err(Error::InsufficientSpan(_))
        ));
        assert!(matches!(
            fit_rate_exponent(&exact(&[1.0, 2.0, 4.0], |x| x)),
            Err(Error::InsufficientSpan(_))
        ));
        assert!(matches!(
            fit_rate_exponent(&exact(&[1.0, 9.0, 10.0], |x| x)),
            Err(Error::InsufficientSpan(_))
        ));
        assert!(fit_rate_exponent(&exact(&[1.0, 10.0, 100.0], |_| 0.0)).is_err());
    }

    #[test]
    fn ols_line_through_two_points() {
        let f = fit_log_log(&[1.0, 2.0], &[1.0, 16.0]).unwrap();
        assert_abs_diff_eq!(f.slope, 4.0, epsilon = 1e-12);
        assert_eq!(f.slope_se, 0.0);
    }

    proptest! {
        #[test]
        fn slope_is_scale_invariant(b in -3.0f64..3.0, c in 0.01f64..100.0, k in 0.1f64..10.0) {
            let xs = [1.0, 10.0, 100.0, 1000.0];
            let fit1 = fit_rate_exponent(&exact(&xs, |x| c * x.powf(b))).unwrap();
            let fit2 = fit_rate_exponent(&exact(&xs, |x| k * c * x.powf(b))).unwrap();
            prop_assert!((fit1.slope - b).abs() < 1e-9);
            prop_assert!((fit1.slope - fit2.slope).abs() < 1e-9);
        }
    }
}
