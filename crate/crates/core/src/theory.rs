//! Closed-form rates, bandwidths, regime labels, variance formulas and
//! assumption validators.
//!
//! Every `≲` bound is evaluated with constant 1; only its scaling is
//! meaningful.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{domain, invalid, Result};
use crate::model::{fill_fourier, fourier, fourier_d2, frequency, ProcessSpec};
use crate::quad::Rule;
use crate::smoother::{check_bandwidth, KernelSpec};

/// Upper clamp for bandwidths produced by [`optimal_bandwidth`].
pub const MAX_BANDWIDTH: f64 = 0.49;

/// Inputs shared by the rate formulas.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateInputs {
    pub n: usize,
    pub n_obs: usize,
    pub h: f64,
    pub j: usize,
    pub a: f64,
    pub c: f64,
}

impl RateInputs {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n_obs == 0 || self.j == 0 {
            return Err(invalid("rate inputs", "n, N and j must be positive"));
        }
        if !(self.h > 0.0) || !(self.c > 0.0) {
            return Err(invalid("rate inputs", "h and c must be positive"));
        }
        if !(self.a > 1.0) {
            return Err(invalid("rate inputs", format!("a must exceed 1, got {}", self.a)));
        }
        Ok(())
    }
}

fn check_power_law(a: f64, c: f64) -> Result<()> {
    if !(a > 1.0) {
        return Err(invalid("a", format!("must exceed 1, got {a}")));
    }
    if !(c > 0.0) {
        return Err(invalid("c", format!("must be positive, got {c}")));
    }
    Ok(())
}

/// `h_opt(m) = (nN)^{−1/5} m^{(a−2c−2)/5} (1 + m^a/N)^{1/5}`, clamped to
/// `(0, 0.49]`.
pub fn optimal_bandwidth(n: usize, n_obs: usize, m: usize, a: f64, c: f64) -> Result<f64> {
    if n == 0 || n_obs == 0 || m == 0 {
        return Err(invalid("optimal bandwidth", "n, N and m must be positive"));
    }
    check_power_law(a, c)?;
    let (nf, nn, mf) = (n as f64, n_obs as f64, m as f64);
    let h = (nf * nn).powf(-0.2) * mf.powf((a - 2.0 * c - 2.0) / 5.0) * (1.0 + mf.powf(a) / nn).powf(0.2);
    if h > MAX_BANDWIDTH {
        warn!("optimal bandwidth {h:.4} clamped to {MAX_BANDWIDTH}");
        return Ok(MAX_BANDWIDTH);
    }
    Ok(h)
}

/// The three summands of the eigenfunction error bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateTerms {
    /// `(j²/n)(1 + (jᵃ/N)²)`
    pub fully_observed: f64,
    /// `(jᵃ/(nNh))(1 + jᵃ/N)`
    pub discretization: f64,
    /// `h⁴ j^{2c+2}`
    pub smoothing_bias: f64,
}

impl RateTerms {
    pub fn total(&self) -> f64 {
        self.fully_observed + self.discretization + self.smoothing_bias
    }
}

/// Summands of the bound on `E‖φ̂_j − φ_j‖²`.
pub fn rate_terms(inputs: &RateInputs) -> Result<RateTerms> {
    inputs.validate()?;
    let j = inputs.j as f64;
    let ja = j.powf(inputs.a);
    let (n, nn, h) = (inputs.n as f64, inputs.n_obs as f64, inputs.h);
    Ok(RateTerms {
        fully_observed: j * j / n * (1.0 + (ja / nn).powi(2)),
        discretization: ja / (n * nn * h) * (1.0 + ja / nn),
        smoothing_bias: h.powi(4) * j.powf(2.0 * inputs.c + 2.0),
    })
}

/// The bound on `E‖φ̂_j − φ_j‖²` up to its constant.
pub fn rate_bound(inputs: &RateInputs) -> Result<f64> {
    Ok(rate_terms(inputs)?.total())
}

/// Dense-regime rate `j²/n + j^{(4a+2c+2)/5} (nN)^{−4/5}`.
pub fn dense_rate(n: usize, n_obs: usize, j: usize, a: f64, c: f64) -> f64 {
    let (n, nn, j) = (n as f64, n_obs as f64, j as f64);
    j * j / n + j.powf((4.0 * a + 2.0 * c + 2.0) / 5.0) * (n * nn).powf(-0.8)
}

/// Sparse-regime rate `j^{2a+2}/(nN²) + j^{(8a+2c+2)/5} (nN²)^{−4/5}`.
pub fn sparse_rate(n: usize, n_obs: usize, j: usize, a: f64, c: f64) -> f64 {
    let (n, nn, j) = (n as f64, n_obs as f64, j as f64);
    let nn2 = n * nn * nn;
    j.powf(2.0 * a + 2.0) / nn2 + j.powf((8.0 * a + 2.0 * c + 2.0) / 5.0) * nn2.powf(-0.8)
}

/// Sampling regime for one eigenfunction index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Sparse,
    Dense,
    DenseOptimal,
}

/// Rate formula matching a [`Regime`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateFormula {
    Dense,
    Sparse,
}

impl Regime {
    pub fn formula(self) -> RateFormula {
        match self {
            Regime::Sparse => RateFormula::Sparse,
            Regime::Dense | Regime::DenseOptimal => RateFormula::Dense,
        }
    }
}

/// Sparse if `N < const·jᵃ`; otherwise dense, and dense-optimal when also
/// `N ≥ n^{1/4} j^{a+c/2−2}`. Both comparisons are inclusive on the dense side.
pub fn regime_classify(inputs: &RateInputs, dense_const: f64) -> Result<Regime> {
    inputs.validate()?;
    let j = inputs.j as f64;
    let nn = inputs.n_obs as f64;
    if nn < dense_const * j.powf(inputs.a) {
        return Ok(Regime::Sparse);
    }
    let transition = (inputs.n as f64).powf(0.25) * j.powf(inputs.a + inputs.c / 2.0 - 2.0);
    Ok(if nn >= transition {
        Regime::DenseOptimal
    } else {
        Regime::Dense
    })
}

/// Largest index `⌊n^{1/(2a+2)}⌋` (at least 1) that can be well estimated.
pub fn max_index(n: usize, a: f64) -> Result<usize> {
    if n == 0 {
        return Err(invalid("n", "must be positive"));
    }
    check_power_law(a, 1.0)?;
    let v = (n as f64).powf(1.0 / (2.0 * a + 2.0));
    Ok(((v + 1e-9).floor() as usize).max(1))
}

/// Which assumption group to validate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assumption {
    M1,
    M2,
}

/// Numeric thresholds standing in for `→ 0` and `= O(1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Bound for quantities required to vanish.
    pub small: f64,
    /// Bound for quantities required to stay bounded.
    pub bounded: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            small: 0.1,
            bounded: 1.0,
        }
    }
}

/// One evaluated assumption display.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

/// Evaluated assumption group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub which: Assumption,
    pub m: usize,
    pub checks: Vec<AssumptionCheck>,
}

impl AssumptionReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Evaluates the displayed quantities of assumption M.1 or M.2 for `m`.
pub fn validate_assumptions(
    inputs: &RateInputs,
    m: usize,
    which: Assumption,
    thresholds: Thresholds,
) -> Result<AssumptionReport> {
    inputs.validate()?;
    if m == 0 {
        return Err(invalid("m", "must be positive"));
    }
    let (n, nn, h, a, c) = (inputs.n as f64, inputs.n_obs as f64, inputs.h, inputs.a, inputs.c);
    let mf = m as f64;
    let small = thresholds.small;
    let quantities: Vec<(&str, f64, f64)> = match which {
        Assumption::M1 => vec![
            ("m^(2a+2)/n", mf.powf(2.0 * a + 2.0) / n, small),
            ("m^(2a+2)/(n N^2 h^2)", mf.powf(2.0 * a + 2.0) / (n * nn * nn * h * h), small),
            ("h^4 m^(2a+2)", h.powi(4) * mf.powf(2.0 * a + 2.0), small),
            ("h^4 m^(2a+2c)", h.powi(4) * mf.powf(2.0 * a + 2.0 * c), thresholds.bounded),
        ],
        Assumption::M2 => {
            let ma = mf.powf(a);
            let rate = mf * mf / n * (1.0 + (ma / nn).powi(2))
                + ma / (n * nn * h) * (1.0 + ma / nn)
                + h.powi(4) * mf.powf(2.0 * c + 2.0);
            vec![
                ("sqrt(n)(m^a+N)[rate]", n.sqrt() * (ma + nn) * rate, small),
                ("h(m^(2c)+m^a)", h * (mf.powf(2.0 * c) + ma), small),
            ]
        }
    };
    Ok(AssumptionReport {
        which,
        m,
        checks: quantities
            .into_iter()
            .map(|(name, value, limit)| AssumptionCheck {
                name: name.to_string(),
                value,
                limit,
                pass: value <= limit,
            })
            .collect(),
    })
}

/// Moment ingredients of the eigenvalue variance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceComponents {
    /// `E ξ_j⁴ / λ_j²`
    pub e_xi4_over_lambda2: f64,
    /// `E{ξ_j² (‖Xφ_j‖² + σ²)}`
    pub e_xi2_mixed: f64,
    /// `E{(‖Xφ_j‖² + σ²)²}`
    pub e_mixed_sq: f64,
    pub lambda_j: f64,
    pub n_obs: usize,
    pub n: usize,
}

/// `A_kl = ∫ φ_k φ_l φ_j²` for `k, l ≤ J`, by trapezoid quadrature on a grid
/// fine enough to integrate the trigonometric products exactly.
fn product_integrals(spec: &ProcessSpec, j: usize) -> Vec<f64> {
    let jn = spec.truncation_j;
    let p = 4 * (jn + j) + 64;
    let mut a = vec![0.0; jn * jn];
    let mut phi = vec![0.0; jn];
    for i in 0..p {
        let t = i as f64 / p as f64;
        fill_fourier(t, &mut phi);
        let pj = fourier(j, t);
        let wj = pj * pj / p as f64;
        for k in 0..jn {
            let v = wj * phi[k];
            for l in 0..jn {
                a[k * jn + l] += v * phi[l];
            }
        }
    }
    a
}

/// Gaussian-score moments by series quadrature.
pub fn variance_components(spec: &ProcessSpec, j: usize, n: usize, n_obs: usize) -> Result<VarianceComponents> {
    spec.validate()?;
    let jn = spec.truncation_j;
    if j == 0 || j > jn {
        return Err(domain("component index", format!("j = {j} outside 1..={jn}")));
    }
    let lam = spec.eigenvalues();
    let a = product_integrals(spec, j);
    let lj = lam[j - 1];
    let s2 = spec.noise_sd * spec.noise_sd;
    let mean_energy: f64 = (0..jn).map(|k| lam[k] * a[k * jn + k]).sum();
    let cross: f64 = (0..jn)
        .flat_map(|k| (0..jn).map(move |l| (k, l)))
        .map(|(k, l)| lam[k] * lam[l] * a[k * jn + l].powi(2))
        .sum();
    let e_energy2 = mean_energy * mean_energy + 2.0 * cross;
    let e_xi2_energy = lj * mean_energy + 2.0 * lj * lj * a[(j - 1) * jn + (j - 1)];
    Ok(VarianceComponents {
        e_xi4_over_lambda2: 3.0,
        e_xi2_mixed: e_xi2_energy + s2 * lj,
        e_mixed_sq: e_energy2 + 2.0 * s2 * mean_energy + s2 * s2,
        lambda_j: lj,
        n_obs,
        n,
    })
}

/// `E‖Xφ_j‖² = Σ_k λ_k ∫ φ_k² φ_j²`.
pub fn expected_energy(spec: &ProcessSpec, j: usize) -> Result<f64> {
    let jn = spec.truncation_j;
    if j == 0 || j > jn {
        return Err(domain("component index", format!("j = {j} outside 1..={jn}")));
    }
    let a = product_integrals(spec, j);
    Ok((0..jn).map(|k| spec.model_eigenvalue(k + 1) * a[k * jn + k]).sum())
}

/// `‖Xφ_j‖² = Σ_{k,l} ξ_k ξ_l A_kl` for one score vector.
pub fn energy_from_scores(spec: &ProcessSpec, j: usize, xi: &[f64]) -> Result<f64> {
    let jn = spec.truncation_j;
    if xi.len() != jn {
        return Err(invalid("scores", format!("expected {jn} scores, got {}", xi.len())));
    }
    let a = product_integrals(spec, j);
    Ok((0..jn)
        .map(|k| xi[k] * (0..jn).map(|l| a[k * jn + l] * xi[l]).sum::<f64>())
        .sum())
}

/// Finite-sample variance `Σₙ` of `(λ̂_j − λ_j)/λ_j`.
pub fn sigma_n(vc: &VarianceComponents) -> Result<f64> {
    if vc.n_obs < 2 {
        return Err(crate::error::Error::DegenerateDesign);
    }
    if vc.n == 0 || !(vc.lambda_j > 0.0) {
        return Err(invalid("variance components", "n and λ_j must be positive"));
    }
    let nn = vc.n_obs as f64;
    let pairs = nn * (nn - 1.0);
    let l2 = vc.lambda_j * vc.lambda_j;
    let inner = (nn - 2.0) * (nn - 3.0) / pairs * vc.e_xi4_over_lambda2
        + 4.0 * (nn - 2.0) / pairs * vc.e_xi2_mixed / l2
        + 2.0 / pairs * vc.e_mixed_sq / l2
        - 1.0;
    Ok(inner / vc.n as f64)
}

/// `∫_h^{1−h} φ_j'' φ_j` in closed form for the Fourier basis.
///
/// Cosine members give `−ω²[(1−2h) + (sin 2ω(1−h) − sin 2ωh)/(2ω)]`; sine
/// members flip the sign of the oscillating term.
pub fn curvature_integral(j: usize, h: f64) -> Result<f64> {
    if j == 0 {
        return Err(domain("component index", "j must be ≥ 1"));
    }
    check_bandwidth(h)?;
    let w = frequency(j);
    let osc = ((2.0 * w * (1.0 - h)).sin() - (2.0 * w * h).sin()) / (2.0 * w);
    let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
    Ok(-w * w * ((1.0 - 2.0 * h) + sign * osc))
}

/// Same integral by composite Gauss–Legendre quadrature.
pub fn curvature_integral_quadrature(j: usize, h: f64) -> Result<f64> {
    check_bandwidth(h)?;
    let panels = 4 * j.div_ceil(2) + 8;
    Ok(Rule::new(16).composite(h, 1.0 - h, panels, |u| fourier_d2(j, u) * fourier(j, u)))
}

/// Predicted absolute eigenvalue bias `κ λ_j σ_K² h² ∫_h^{1−h} φ_j'' φ_j`.
pub fn eigenvalue_bias(spec: &ProcessSpec, kernel: KernelSpec, h: f64, j: usize, kappa: f64) -> Result<f64> {
    if !(kappa == 1.0 || kappa == 2.0) {
        return Err(invalid("kappa", format!("must be 1 or 2, got {kappa}")));
    }
    Ok(kappa * spec.eigenvalue(j)? * kernel.sigma_k2() * h * h * curvature_integral(j, h)?)
}

/// Bound on `E⟨Δφ_j, φ_k⟩²` for `1 ≤ k ≤ 2j`.
pub fn cjk_bound(n: usize, n_obs: usize, h: f64, j: usize, k: usize, a: f64, c: f64) -> Result<f64> {
    if n == 0 || n_obs == 0 || j == 0 || k == 0 || h < 0.0 {
        return Err(invalid("cjk bound", "n, N, j, k must be positive and h ≥ 0"));
    }
    check_power_law(a, c)?;
    if k > 2 * j {
        return Err(invalid(
            "k",
            format!("k = {k} exceeds 2j = {}; use cjk_tail_bound for the tail sum", 2 * j),
        ));
    }
    let (n, nn, jf, kf) = (n as f64, n_obs as f64, j as f64, k as f64);
    let (ja, ka) = (jf.powf(-a), kf.powf(-a));
    Ok((ja * ka + (ja + ka) / nn + 1.0 / (nn * nn)) / n + h.powi(4) * kf.powf(2.0 * c - 2.0 * a))
}

/// Bound on `Σ_{k>j} E⟨Δφ_j, φ_k⟩²`.
pub fn cjk_tail_bound(n: usize, n_obs: usize, h: f64, j: usize, a: f64, c: f64) -> Result<f64> {
    if n == 0 || n_obs == 0 || j == 0 || !(h > 0.0) {
        return Err(invalid("cjk tail bound", "n, N, j, h must be positive"));
    }
    check_power_law(a, c)?;
    let (n, nn, jf) = (n as f64, n_obs as f64, j as f64);
    Ok((jf.powf(1.0 - 2.0 * a) + (jf.powf(-a) / h + jf.powf(1.0 - a)) / nn + 1.0 / (h * nn * nn)) / n
        + h.powi(4) * jf.powf(1.0 + 2.0 * c - 2.0 * a))
}

/// Limiting regime of `Nλ_j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitRegime {
    /// `Nλ_j → ∞`
    Divergent,
    /// `Nλ_j → C₁`
    Constant,
    /// `Nλ_j → 0`, with the statistic scaled by `√n N λ_j`.
    Vanishing,
}

/// Cut-offs separating the [`LimitRegime`]s.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitThresholds {
    pub divergent_above: f64,
    pub vanishing_below: f64,
}

impl Default for LimitThresholds {
    fn default() -> Self {
        Self {
            divergent_above: 50.0,
            vanishing_below: 0.02,
        }
    }
}

/// Classifies `Nλ_j` and returns the matching limiting variance.
pub fn limiting_variance(vc: &VarianceComponents, thresholds: LimitThresholds) -> Result<(LimitRegime, f64)> {
    if vc.n_obs < 2 {
        return Err(crate::error::Error::DegenerateDesign);
    }
    let nn = vc.n_obs as f64;
    let lam = vc.lambda_j;
    let c1 = nn * lam;
    let base = vc.e_xi4_over_lambda2 - 1.0;
    if c1 > thresholds.divergent_above {
        Ok((LimitRegime::Divergent, base))
    } else if c1 >= thresholds.vanishing_below {
        Ok((
            LimitRegime::Constant,
            base + 4.0 * vc.e_xi2_mixed / (c1 * lam) + 2.0 * vc.e_mixed_sq / (c1 * c1),
        ))
    } else {
        Ok((LimitRegime::Vanishing, 2.0 * nn / (nn - 1.0) * vc.e_mixed_sq))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn inputs(n: usize, n_obs: usize, h: f64, j: usize) -> RateInputs {
        RateInputs {
            n,
            n_obs,
            h,
            j,
            a: 2.0,
            c: 2.0,
        }
    }

    #[test]
    fn optimal_bandwidth_examples() {
        let h = optimal_bandwidth(1000, 10, 3, 2.0, 2.0).unwrap();
        assert!((h - 0.0748).abs() <= 5e-4, "{h}");
        let h = optimal_bandwidth(100_000, 100_000, 1, 2.0, 2.0).unwrap();
        assert!((h - 0.01 * (1.0 + 1e-5f64).powf(0.2)).abs() < 1e-12);
        let r = optimal_bandwidth(2000, 10, 3, 2.0, 2.0).unwrap() / optimal_bandwidth(1000, 10, 3, 2.0, 2.0).unwrap();
        assert_relative_eq!(r, 2f64.powf(-0.2), max_relative = 1e-12);
        assert_eq!(optimal_bandwidth(1, 2, 1, 2.0, 2.0).unwrap(), MAX_BANDWIDTH);
        assert!(optimal_bandwidth(0, 2, 1, 2.0, 2.0).is_err());
        assert!(optimal_bandwidth(10, 2, 1, 0.5, 2.0).is_err());
    }

    #[test]
    fn rate_bound_examples() {
        let v = rate_bound(&inputs(10_000, 100, 0.05, 1)).unwrap();
        assert!((v - 1.2645e-4).abs() <= 1e-8, "{v}");
        let big = rate_bound(&inputs(1000, 1_000_000_000, 1e-4, 2)).unwrap();
        assert_relative_eq!(big, 4.0 / 1000.0, max_relative = 1e-4);
        assert!(rate_bound(&inputs(0, 1, 0.1, 1)).is_err());
    }

    #[test]
    fn regime_examples() {
        assert_eq!(regime_classify(&inputs(16, 100, 0.1, 3), 1.0).unwrap(), Regime::DenseOptimal);
        assert_eq!(regime_classify(&inputs(16, 2, 0.1, 3), 1.0).unwrap(), Regime::Sparse);
        let tie = regime_classify(&inputs(1_000_000, 9, 0.1, 3), 1.0).unwrap();
        assert_eq!(tie, Regime::Dense);
        assert_eq!(Regime::Sparse.formula(), RateFormula::Sparse);
        assert_eq!(Regime::DenseOptimal.formula(), RateFormula::Dense);
    }

    #[test]
    fn max_index_examples() {
        assert_eq!(max_index(1_000_000, 2.0).unwrap(), 10);
        assert_eq!(max_index(1, 2.0).unwrap(), 1);
        assert_eq!(max_index(64, 1.5).unwrap(), 2);
    }

    #[test]
    fn assumption_examples() {
        let ok = validate_assumptions(&inputs(1_000_000, 100, 0.02, 1), 3, Assumption::M1, Thresholds::default()).unwrap();
        assert!(ok.pass());
        assert!((ok.checks[0].value - 7.29e-4).abs() < 1e-12);
        let bad = validate_assumptions(&inputs(1_000_000, 100, 0.4, 1), 10, Assumption::M1, Thresholds::default()).unwrap();
        assert!(!bad.pass());
        assert!((bad.checks[3].value - 0.0256e8).abs() < 1e-3);
        let lim = validate_assumptions(&inputs(1_000_000_000, 1000, 1e-4, 1), 1, Assumption::M1, Thresholds::default()).unwrap();
        assert!(lim.pass());
        let m2 = validate_assumptions(&inputs(1_000_000, 1000, 0.01, 1), 1, Assumption::M2, Thresholds::default()).unwrap();
        assert_eq!(m2.checks.len(), 2);
    }

    #[test]
    fn sigma_n_limits() {
        let vc = VarianceComponents {
            e_xi4_over_lambda2: 3.0,
            e_xi2_mixed: 1.7,
            e_mixed_sq: 5.2,
            lambda_j: 0.8,
            n_obs: 1_000_000_000,
            n: 50,
        };
        assert_relative_eq!(sigma_n(&vc).unwrap(), 2.0 / 50.0, max_relative = 1e-6);
        // At N = 2 both the fourth-moment and the mixed coefficients vanish.
        let two = VarianceComponents { n_obs: 2, ..vc };
        let want = (5.2 / 0.64 - 1.0) / 50.0;
        assert_relative_eq!(sigma_n(&two).unwrap(), want, max_relative = 1e-14);
        assert!(sigma_n(&VarianceComponents { n_obs: 1, ..vc }).is_err());
    }

    #[test]
    fn moment_ingredients_agree_with_monte_carlo() {
        let spec = ProcessSpec::default();
        let j = 1;
        let vc = variance_components(&spec, j, 1, 50).unwrap();
        let lam = spec.eigenvalues();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
        let draws = 100_000;
        let s2 = spec.noise_sd.powi(2);
        let (mut e, mut e2, mut m, mut m2, mut q, mut q2) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let jn = spec.truncation_j;
        let a = product_integrals(&spec, j);
        let mut xi = vec![0.0; jn];
        for _ in 0..draws {
            for k in 0..jn {
                let z: f64 = StandardNormal.sample(&mut rng);
                xi[k] = lam[k].sqrt() * z;
            }
            let energy: f64 = (0..jn)
                .map(|k| xi[k] * (0..jn).map(|l| a[k * jn + l] * xi[l]).sum::<f64>())
                .sum();
            let mixed = xi[j - 1].powi(2) * (energy + s2);
            let sq = (energy + s2).powi(2);
            e += energy;
            e2 += energy * energy;
            m += mixed;
            m2 += mixed * mixed;
            q += sq;
            q2 += sq * sq;
        }
        let n = draws as f64;
        let check = |s: f64, s2: f64, target: f64, what: &str| {
            let mean = s / n;
            let se = ((s2 / n - mean * mean) / (n - 1.0)).sqrt();
            assert!((mean - target).abs() <= 3.0 * se, "{what}: {mean} vs {target} (se {se})");
        };
        check(e, e2, expected_energy(&spec, j).unwrap(), "energy");
        check(m, m2, vc.e_xi2_mixed, "mixed");
        check(q, q2, vc.e_mixed_sq, "squared");
        assert!((energy_from_scores(&spec, j, &xi).unwrap() - {
            (0..jn).map(|k| xi[k] * (0..jn).map(|l| a[k * jn + l] * xi[l]).sum::<f64>()).sum::<f64>()
        }).abs() < 1e-12);
    }

    #[test]
    fn eigenvalue_bias_examples() {
        let spec = ProcessSpec::default();
        let b = eigenvalue_bias(&spec, KernelSpec::EPANECHNIKOV, 0.1, 1, 2.0).unwrap();
        assert!((b - -0.1024).abs() <= 5e-4, "{b}");
        let h: f64 = 1e-4;
        let b = eigenvalue_bias(&spec, KernelSpec::EPANECHNIKOV, h, 3, 1.0).unwrap();
        let limit = (1.0 / 9.0) * 0.2 * h * h * -(frequency(3).powi(2));
        assert_relative_eq!(b, limit, max_relative = 1e-3);
        assert!(eigenvalue_bias(&spec, KernelSpec::EPANECHNIKOV, 0.1, 1, 1.5).is_err());
        assert!(eigenvalue_bias(&spec, KernelSpec::EPANECHNIKOV, 0.6, 1, 1.0).is_err());
    }

    #[test]
    fn curvature_integral_matches_quadrature() {
        for j in 1..=10 {
            for h in [0.01, 0.02, 0.05, 0.1, 0.15, 0.2] {
                let closed = curvature_integral(j, h).unwrap();
                let quad = curvature_integral_quadrature(j, h).unwrap();
                assert!((closed - quad).abs() <= 1e-8, "j={j} h={h}: {closed} vs {quad}");
                assert!(closed < 0.0);
            }
        }
    }

    #[test]
    fn cjk_examples() {
        let v = cjk_bound(100, 7, 0.0, 1, 1, 2.0, 2.0).unwrap();
        assert_relative_eq!(v, (1.0 + 1.0 / 7.0f64).powi(2) / 100.0, max_relative = 1e-14);
        let a = cjk_bound(1000, 10, 0.0, 2, 3, 2.0, 2.0).unwrap();
        let b = cjk_bound(2000, 10, 0.0, 2, 3, 2.0, 2.0).unwrap();
        assert_relative_eq!(a, 2.0 * b, max_relative = 1e-14);
        let v = cjk_bound(1000, 10, 0.05, 2, 3, 2.0, 2.0).unwrap();
        let want = (1.0 / 36.0 + (0.25 + 1.0 / 9.0) / 10.0 + 0.01) / 1000.0 + 6.25e-6;
        assert_relative_eq!(v, want, max_relative = 1e-12);
        assert!(cjk_bound(1000, 10, 0.05, 2, 5, 2.0, 2.0).is_err());
        assert!(cjk_tail_bound(1000, 10, 0.05, 2, 2.0, 2.0).unwrap() > 0.0);
    }

    #[test]
    fn limiting_variance_examples() {
        let vc = VarianceComponents {
            e_xi4_over_lambda2: 3.0,
            e_xi2_mixed: 0.9,
            e_mixed_sq: 2.5,
            lambda_j: 1.0,
            n_obs: 100,
            n: 10,
        };
        assert_eq!(limiting_variance(&vc, LimitThresholds::default()).unwrap(), (LimitRegime::Divergent, 2.0));
        let tiny = VarianceComponents { lambda_j: 1e-3, n_obs: 2, ..vc };
        let (r, v) = limiting_variance(&tiny, LimitThresholds::default()).unwrap();
        assert_eq!(r, LimitRegime::Vanishing);
        assert_relative_eq!(v, 4.0 * 2.5, max_relative = 1e-15);
        // Regime (b) approaches regime (a) as C₁ grows.
        let wide = LimitThresholds {
            divergent_above: f64::INFINITY,
            vanishing_below: 0.0,
        };
        let big = VarianceComponents { n_obs: 1_000_000, ..vc };
        let (r, v) = limiting_variance(&big, wide).unwrap();
        assert_eq!(r, LimitRegime::Constant);
        assert!((v - 2.0).abs() <= 10.0 / 1e6);
    }

    #[test]
    fn regime_rates_follow_from_the_bound_at_optimal_bandwidth() {
        // On log scales the bound at h_opt and the regime formula share exponents in n.
        for (n_obs, sparse) in [(400usize, false), (3usize, true)] {
            let slope = |f: &dyn Fn(usize) -> f64| (f(1_000_000).ln() - f(10_000).ln()) / (100f64).ln();
            let bound = |n: usize| {
                let h = optimal_bandwidth(n, n_obs, 2, 2.0, 2.0).unwrap();
                rate_bound(&RateInputs { n, n_obs, h, j: 2, a: 2.0, c: 2.0 }).unwrap()
            };
            let formula = |n: usize| if sparse { sparse_rate(n, n_obs, 2, 2.0, 2.0) } else { dense_rate(n, n_obs, 2, 2.0, 2.0) };
            assert!((slope(&bound) - slope(&formula)).abs() < 0.05);
        }
    }

    proptest! {
        #[test]
        fn bound_grows_with_index(n in 10usize..100_000, n_obs in 2usize..500, h in 0.001f64..0.45, j in 1usize..30) {
            let lo = rate_bound(&inputs(n, n_obs, h, j)).unwrap();
            let hi = rate_bound(&inputs(n, n_obs, h, j + 1)).unwrap();
            prop_assert!(hi > lo);
            let t = rate_terms(&inputs(n, n_obs, h, j)).unwrap();
            prop_assert!(t.fully_observed >= 0.0 && t.discretization >= 0.0 && t.smoothing_bias >= 0.0);
        }

        #[test]
        fn more_observations_never_move_toward_sparse(n in 1usize..1_000_000, n_obs in 2usize..1000, j in 1usize..20, extra in 1usize..1000) {
            let a = regime_classify(&inputs(n, n_obs, 0.1, j), 1.0).unwrap();
            let b = regime_classify(&inputs(n, n_obs + extra, 0.1, j), 1.0).unwrap();
            prop_assert!(b >= a);
        }
    }
}
