//! Eigen-decomposition of discretized covariance operators, sign alignment,
//! error metrics and first-order perturbation diagnostics.

use log::warn;
use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::model::{fourier, ProcessSpec};
use crate::smoother::{CovarianceEstimate, Grid};

/// Relative asymmetry accepted by [`eigendecompose`].
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Anomalies detected while building an [`EigenSystem`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EigenFlags {
    /// Number of eigenvalues below `−1e−12 · max|λ̂|`, kept in the system.
    pub negative: usize,
    /// Adjacent index pairs `(k, k+1)` (1-based) with numerically equal eigenvalues.
    pub ties: Vec<(usize, usize)>,
    /// Indices whose sign could not be decided (zero overlap with the reference).
    pub unresolved_signs: Vec<usize>,
}

/// Eigenvalues (descending) and grid eigenfunctions orthonormal in the
/// trapezoid inner product.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenSystem {
    pub grid: Grid,
    pub eigenvalues: Vec<f64>,
    /// Column `k − 1` holds `φ̂_k` sampled on the grid.
    pub eigenfunctions: DMatrix<f64>,
    pub aligned: bool,
    pub flags: EigenFlags,
}

impl EigenSystem {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    fn check_index(&self, j: usize) -> Result<()> {
        if j == 0 || j > self.len() {
            return Err(Error::IndexOutOfRange {
                index: j,
                available: self.len(),
            });
        }
        Ok(())
    }

    /// `λ̂_j` (1-based).
    pub fn eigenvalue(&self, j: usize) -> Result<f64> {
        self.check_index(j)?;
        Ok(self.eigenvalues[j - 1])
    }

    /// `φ̂_j` on the grid (1-based).
    pub fn eigenfunction(&self, j: usize) -> Result<Vec<f64>> {
        self.check_index(j)?;
        Ok(self.eigenfunctions.column(j - 1).iter().copied().collect())
    }

    /// Largest `|⟨φ̂_i, φ̂_j⟩_w − δ_ij|` over the leading `k` eigenfunctions.
    pub fn orthonormality_defect(&self, k: usize) -> f64 {
        let k = k.min(self.len());
        let w = self.grid.weights();
        let mut worst: f64 = 0.0;
        for i in 0..k {
            for j in 0..=i {
                let ip: f64 = (0..w.len())
                    .map(|a| w[a] * self.eigenfunctions[(a, i)] * self.eigenfunctions[(a, j)])
                    .sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((ip - target).abs());
            }
        }
        worst
    }
}

/// Solves the discretized integral-operator eigenproblem.
///
/// The matrix `W^{1/2} Ĉ W^{1/2}` is diagonalized and eigenvectors are mapped
/// back by `W^{−1/2}`, so `Σ_b Ĉ(s_a, s_b) w_b φ̂(s_b) = λ̂ φ̂(s_a)`. Negative
/// eigenvalues are kept and counted; exact ties keep their solver order.
pub fn eigendecompose(est: &CovarianceEstimate) -> Result<EigenSystem> {
    let scale = est.matrix.amax().max(f64::MIN_POSITIVE);
    let asym = est.max_asymmetry();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::Asymmetric(asym));
    }
    let g = est.len();
    let sw: Vec<f64> = est.grid.weights().iter().map(|w| w.sqrt()).collect();
    let a = DMatrix::from_fn(g, g, |i, j| sw[i] * est.matrix[(i, j)] * sw[j]);
    let a = (&a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..g).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let eigenfunctions = DMatrix::from_fn(g, g, |a, k| eig.eigenvectors[(a, order[k])] / sw[a]);

    let tol = 1e-12 * eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    let mut flags = EigenFlags {
        negative: eigenvalues.iter().filter(|&&l| l < -tol).count(),
        ..EigenFlags::default()
    };
    for k in 1..g {
        if (eigenvalues[k - 1] - eigenvalues[k]).abs() <= tol {
            flags.ties.push((k, k + 1));
        }
    }
    if !flags.ties.is_empty() {
        warn!("{} tied eigenvalue pair(s); keeping solver order", flags.ties.len());
    }
    Ok(EigenSystem {
        grid: est.grid.clone(),
        eigenvalues,
        eigenfunctions,
        aligned: false,
        flags,
    })
}

/// Reference eigenfunctions used for sign alignment and error metrics.
pub trait Reference {
    fn value(&self, k: usize, t: f64) -> f64;
}

impl Reference for ProcessSpec {
    fn value(&self, k: usize, t: f64) -> f64 {
        fourier(k, t)
    }
}

impl<F: Fn(usize, f64) -> f64> Reference for F {
    fn value(&self, k: usize, t: f64) -> f64 {
        self(k, t)
    }
}

fn sample_reference<R: Reference + ?Sized>(reference: &R, grid: &Grid, k: usize) -> Vec<f64> {
    grid.points().iter().map(|&t| reference.value(k, t)).collect()
}

/// Flips each of the leading `count` eigenfunctions so that
/// `⟨φ̂_k, φ_k⟩_w ≥ 0`. Zero overlaps keep their sign and are flagged.
pub fn align_signs<R: Reference + ?Sized>(mut sys: EigenSystem, reference: &R, count: usize) -> EigenSystem {
    let count = count.min(sys.len());
    sys.flags.unresolved_signs.clear();
    for k in 1..=count {
        let phi = sample_reference(reference, &sys.grid, k);
        let col: Vec<f64> = sys.eigenfunctions.column(k - 1).iter().copied().collect();
        let ip = sys.grid.inner(&col, &phi);
        if ip < 0.0 {
            sys.eigenfunctions.column_mut(k - 1).neg_mut();
        } else if ip == 0.0 {
            warn!("eigenfunction {k} is orthogonal to its reference; sign left unchanged");
            sys.flags.unresolved_signs.push(k);
        }
    }
    sys.aligned = true;
    sys
}

/// `‖φ̂_j − φ_j‖²` by trapezoid quadrature.
pub fn l2_error(sys: &EigenSystem, spec: &ProcessSpec, j: usize) -> Result<f64> {
    let est = sys.eigenfunction(j)?;
    Ok(sys.grid.dist2(&est, &sample_reference(spec, &sys.grid, j)))
}

/// `(λ̂_j − λ_j, (λ̂_j − λ_j)/λ_j)`.
pub fn eigenvalue_error(sys: &EigenSystem, spec: &ProcessSpec, j: usize) -> Result<(f64, f64)> {
    let lhat = sys.eigenvalue(j)?;
    let lam = spec.model_eigenvalue(j);
    if lam == 0.0 {
        return Err(Error::ZeroEigenvalue(j));
    }
    let abs = lhat - lam;
    Ok((abs, abs / lam))
}

/// `⟨Δφ_j, φ_k⟩ = ∬ (Ĉ − C)(s,t) φ_j(s) φ_k(t) ds dt`.
///
/// The `Ĉ` part is integrated on the grid; the `C` part is `λ_j δ_jk`.
pub fn projection_moment(est: &CovarianceEstimate, spec: &ProcessSpec, j: usize, k: usize) -> Result<f64> {
    if j == 0 || k == 0 {
        return Err(crate::error::domain("projection index", "indices must be ≥ 1"));
    }
    let w = est.grid.weights();
    let pj: Vec<f64> = sample_reference(spec, &est.grid, j).iter().zip(w).map(|(p, w)| p * w).collect();
    let pk: Vec<f64> = sample_reference(spec, &est.grid, k).iter().zip(w).map(|(p, w)| p * w).collect();
    let vj = DVector::from_vec(pj);
    let vk = DVector::from_vec(pk);
    let quad = (&est.matrix * &vk).dot(&vj);
    let truth = if j == k { spec.model_eigenvalue(j) } else { 0.0 };
    Ok(quad - truth)
}

/// Eigengap `η_j = min_{k≠j} |λ_j − λ_k|` of the (truncated) model spectrum.
pub fn eigengap(spec: &ProcessSpec, j: usize) -> f64 {
    let lj = spec.model_eigenvalue(j);
    let mut gap = (lj - spec.model_eigenvalue(j + 1)).abs();
    if j > 1 {
        gap = gap.min((spec.model_eigenvalue(j - 1) - lj).abs());
    }
    gap
}

/// Default number of reference directions used in diagnostics.
pub fn default_k_max(grid: &Grid) -> usize {
    (grid.len() / 4).clamp(1, 64)
}

/// Perturbation quantities for one index `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationDiagnostics {
    pub j: usize,
    /// `⟨Δφ_j, φ_k⟩` for `k = 1..=K_max`.
    pub projections: Vec<f64>,
    /// `‖Δφ_j‖²`.
    pub delta_phi_norm2: f64,
    /// Leading resolvent term on the grid.
    pub first_order_error: Vec<f64>,
    /// `‖Δ‖_HS`.
    pub hs_norm_delta: f64,
    /// `η_j`.
    pub eigengap: f64,
    pub grid: Grid,
}

impl PerturbationDiagnostics {
    /// `Σ_k ⟨Δφ_j, φ_k⟩² ≤ ‖Δφ_j‖² + tol`.
    pub fn bessel_holds(&self, tol: f64) -> bool {
        self.projections.iter().map(|p| p * p).sum::<f64>() <= self.delta_phi_norm2 + tol
    }
}

/// Computes [`PerturbationDiagnostics`] given the discretized truth.
pub fn diagnostics(
    est: &CovarianceEstimate,
    truth: &CovarianceEstimate,
    spec: &ProcessSpec,
    j: usize,
    k_max: Option<usize>,
) -> Result<PerturbationDiagnostics> {
    if truth.len() != est.len() {
        return Err(Error::GridMismatch {
            expected: est.len(),
            actual: truth.len(),
        });
    }
    if j == 0 {
        return Err(crate::error::domain("diagnostic index", "j must be ≥ 1"));
    }
    let grid = &est.grid;
    let k_max = k_max.unwrap_or_else(|| default_k_max(grid)).max(j);
    let w = grid.weights();
    let delta = &est.matrix - &truth.matrix;
    let wphi = DVector::from_iterator(grid.len(), sample_reference(spec, grid, j).iter().zip(w).map(|(p, w)| p * w));
    let dphi = &delta * wphi;
    let dphi: Vec<f64> = dphi.iter().copied().collect();
    let projections: Vec<f64> = (1..=k_max)
        .map(|k| grid.inner(&dphi, &sample_reference(spec, grid, k)))
        .collect();
    let hs_norm_delta = est.hs_dist2(truth, None)?.sqrt();
    let mut diag = PerturbationDiagnostics {
        j,
        projections,
        delta_phi_norm2: grid.norm2(&dphi),
        first_order_error: vec![0.0; grid.len()],
        hs_norm_delta,
        eigengap: eigengap(spec, j),
        grid: grid.clone(),
    };
    diag.first_order_error = resolvent_first_order(&diag, spec)?;
    Ok(diag)
}

/// `Σ_{k≠j, k≤K_max} ⟨Δφ_j, φ_k⟩ / (λ_j − λ_k) · φ_k`.
pub fn resolvent_first_order(diag: &PerturbationDiagnostics, spec: &ProcessSpec) -> Result<Vec<f64>> {
    let j = diag.j;
    let lj = spec.model_eigenvalue(j);
    let mut out = vec![0.0; diag.grid.len()];
    for (idx, &p) in diag.projections.iter().enumerate() {
        let k = idx + 1;
        if k == j {
            continue;
        }
        let gap = lj - spec.model_eigenvalue(k);
        if gap == 0.0 {
            return Err(Error::EigenGapViolated { j, k });
        }
        let c = p / gap;
        for (o, &t) in out.iter_mut().zip(diag.grid.points()) {
            *o += c * fourier(k, t);
        }
    }
    Ok(out)
}

/// Ratio of the realized error to the crude perturbation bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CrudeBound {
    pub ratio: f64,
    /// Set when both the error and the bound vanish (ratio reported as 0).
    pub degenerate: bool,
}

/// `‖φ̂_j − φ_j‖² / (η_j^{−2} ‖Δ‖²_HS)`.
pub fn crude_bound_ratio(
    diag: &PerturbationDiagnostics,
    sys: &EigenSystem,
    spec: &ProcessSpec,
    j: usize,
) -> Result<CrudeBound> {
    let err = l2_error(sys, spec, j)?;
    if diag.eigengap <= 0.0 {
        return Err(Error::EigenGapViolated { j, k: j + 1 });
    }
    let bound = diag.hs_norm_delta.powi(2) / diag.eigengap.powi(2);
    let tiny = 1e-24;
    if bound <= tiny {
        if err <= 1e-12 {
            return Ok(CrudeBound {
                ratio: 0.0,
                degenerate: true,
            });
        }
        return Err(Error::ZeroDenominator("crude bound η_j⁻²‖Δ‖²_HS"));
    }
    Ok(CrudeBound {
        ratio: err / bound,
        degenerate: false,
    })
}

/// Membership in `{‖Δ‖_HS ≤ η_m / 2}`.
pub fn omega_event(hs_norm_delta: f64, spec: &ProcessSpec, m: usize) -> bool {
    hs_norm_delta <= 0.5 * eigengap(spec, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smoother::Method;
    use proptest::prelude::*;

    fn small_spec(j: usize) -> ProcessSpec {
        ProcessSpec {
            truncation_j: j,
            ..ProcessSpec::default()
        }
    }

    #[test]
    fn recovers_the_model_spectrum() {
        let grid = Grid::new(512).unwrap();
        for spec in [small_spec(3), ProcessSpec::default()] {
            let sys = align_signs(eigendecompose(&CovarianceEstimate::truth(&spec, &grid)).unwrap(), &spec, 5);
            for j in 1..=3.min(spec.truncation_j) {
                let (_, rel) = eigenvalue_error(&sys, &spec, j).unwrap();
                assert!(rel.abs() <= 1e-6, "j={j} rel={rel}");
                assert!(l2_error(&sys, &spec, j).unwrap() <= 1e-3);
            }
            assert!(sys.orthonormality_defect(20) <= 1e-8);
        }
    }

    #[test]
    fn rank_one_input_has_a_single_eigenvalue() {
        let grid = Grid::new(65).unwrap();
        let phi = grid.sample(|t| fourier(3, t));
        let m = DMatrix::from_fn(65, 65, |a, b| 0.7 * phi[a] * phi[b]);
        let sys = eigendecompose(&CovarianceEstimate::from_matrix(grid, m, Method::Truth).unwrap()).unwrap();
        assert!((sys.eigenvalues[0] - 0.7).abs() <= 1e-10);
        assert!(sys.eigenvalues[1..].iter().all(|l| l.abs() <= 1e-10));
    }

    #[test]
    fn identity_like_input_is_flagged_as_degenerate() {
        let grid = Grid::new(17).unwrap();
        let m = DMatrix::from_fn(17, 17, |a, b| if a == b { 1.0 / grid.weights()[a] } else { 0.0 });
        let sys = eigendecompose(&CovarianceEstimate::from_matrix(grid, m, Method::Truth).unwrap()).unwrap();
        assert!(sys.eigenvalues.iter().all(|l| (l - 1.0).abs() <= 1e-8));
        assert!(!sys.flags.ties.is_empty());
    }

    #[test]
    fn rejects_asymmetric_input() {
        let grid = Grid::new(5).unwrap();
        let mut m = DMatrix::identity(5, 5);
        m[(0, 1)] = 0.5;
        let est = CovarianceEstimate::from_matrix(grid, m, Method::Truth).unwrap();
        assert!(matches!(eigendecompose(&est), Err(Error::Asymmetric(_))));
    }

    #[test]
    fn negative_eigenvalues_are_kept_and_counted() {
        let grid = Grid::new(33).unwrap();
        let p1 = grid.sample(|t| fourier(1, t));
        let p2 = grid.sample(|t| fourier(2, t));
        let m = DMatrix::from_fn(33, 33, |a, b| p1[a] * p1[b] - 0.2 * p2[a] * p2[b]);
        let sys = eigendecompose(&CovarianceEstimate::from_matrix(grid, m, Method::Truth).unwrap()).unwrap();
        assert_eq!(sys.flags.negative, 1);
        assert!((sys.eigenvalues.last().unwrap() + 0.2).abs() < 1e-12);
    }

    #[test]
    fn alignment_flips_and_is_idempotent() {
        let spec = small_spec(4);
        let grid = Grid::new(129).unwrap();
        let mut sys = eigendecompose(&CovarianceEstimate::truth(&spec, &grid)).unwrap();
        sys.eigenfunctions.column_mut(0).neg_mut();
        assert!((l2_error(&sys, &spec, 1).unwrap() - 4.0).abs() < 1e-9);
        let once = align_signs(sys, &spec, 4);
        assert!(l2_error(&once, &spec, 1).unwrap() < 1e-12);
        let twice = align_signs(once.clone(), &spec, 4);
        assert_eq!(once, twice);
    }

    #[test]
    fn zero_overlap_leaves_sign_and_flags() {
        let spec = small_spec(2);
        let grid = Grid::new(65).unwrap();
        let sys = eigendecompose(&CovarianceEstimate::truth(&spec, &grid)).unwrap();
        let before = sys.eigenfunctions.clone();
        let zero = |_: usize, _: f64| 0.0;
        let out = align_signs(sys, &zero, 2);
        assert_eq!(out.eigenfunctions, before);
        assert_eq!(out.flags.unresolved_signs, vec![1, 2]);
    }

    #[test]
    fn l2_error_of_a_rotated_function() {
        let spec = small_spec(2);
        let grid = Grid::new(257).unwrap();
        let mut sys = eigendecompose(&CovarianceEstimate::truth(&spec, &grid)).unwrap();
        let mix = grid.sample(|t| (fourier(1, t) + fourier(2, t)) / 2f64.sqrt());
        sys.eigenfunctions.column_mut(0).copy_from_slice(&mix);
        assert!((l2_error(&sys, &spec, 1).unwrap() - (2.0 - 2f64.sqrt())).abs() < 1e-12);
        assert!(matches!(l2_error(&sys, &spec, 0), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn eigenvalue_error_arithmetic() {
        let spec = small_spec(2);
        let grid = Grid::new(9).unwrap();
        let mut sys = eigendecompose(&CovarianceEstimate::truth(&spec, &grid)).unwrap();
        sys.eigenvalues[0] = 1.1;
        let (a, r) = eigenvalue_error(&sys, &spec, 1).unwrap();
        assert!((a - 0.1).abs() < 1e-15 && (r - 0.1).abs() < 1e-15);
        assert!(matches!(eigenvalue_error(&sys, &spec, 3), Err(Error::ZeroEigenvalue(3))));
    }

    #[test]
    fn projections_vanish_on_the_truth_and_are_symmetric() {
        let spec = ProcessSpec::default();
        let grid = Grid::new(257).unwrap();
        let truth = CovarianceEstimate::truth(&spec, &grid);
        for j in 1..6 {
            for k in 1..6 {
                assert!(projection_moment(&truth, &spec, j, k).unwrap().abs() <= 1e-10);
            }
        }
        let (ds, _) = crate::model::simulate(&spec, &crate::model::SamplingDesign::new(30, 6, 4)).unwrap();
        let sm = crate::smoother::Smoothing::new(crate::smoother::KernelSpec::EPANECHNIKOV, 0.1);
        let est = crate::smoother::estimate_covariance_binned(&ds, &sm, &grid).unwrap();
        for (j, k) in [(1, 2), (2, 5), (3, 4)] {
            let a = projection_moment(&est, &spec, j, k).unwrap();
            let b = projection_moment(&est, &spec, k, j).unwrap();
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn first_order_term_matches_a_small_perturbation() {
        let spec = small_spec(6);
        let grid = Grid::new(256).unwrap();
        let truth = CovarianceEstimate::truth(&spec, &grid);
        let eps = 1e-4;
        let p1 = grid.sample(|t| fourier(1, t));
        let p2 = grid.sample(|t| fourier(2, t));
        let delta = DMatrix::from_fn(256, 256, |a, b| eps * (p1[a] * p2[b] + p2[a] * p1[b]));
        let est = CovarianceEstimate::from_matrix(grid.clone(), &truth.matrix + delta, Method::Truth).unwrap();
        let sys = align_signs(eigendecompose(&est).unwrap(), &spec, 6);
        let diag = diagnostics(&est, &truth, &spec, 1, None).unwrap();
        let err: Vec<f64> = sys.eigenfunction(1).unwrap().iter().zip(&p1).map(|(a, b)| a - b).collect();
        let gap = diag.eigengap;
        let miss = grid.dist2(&err, &diag.first_order_error).sqrt();
        assert!(miss <= 10.0 * eps * eps / (gap * gap), "miss {miss}");
        assert!(diag.bessel_holds(1e-8));
    }

    #[test]
    fn first_order_term_degenerate_cases() {
        let spec = small_spec(6);
        let grid = Grid::new(64).unwrap();
        let truth = CovarianceEstimate::truth(&spec, &grid);
        let diag = diagnostics(&truth, &truth, &spec, 2, None).unwrap();
        assert!(diag.first_order_error.iter().all(|v| v.abs() < 1e-12));
        let p = grid.sample(|t| fourier(2, t));
        let bump = DMatrix::from_fn(64, 64, |a, b| 0.01 * p[a] * p[b]);
        let est = CovarianceEstimate::from_matrix(grid.clone(), &truth.matrix + bump, Method::Truth).unwrap();
        let diag = diagnostics(&est, &truth, &spec, 2, None).unwrap();
        assert!(diag.first_order_error.iter().all(|v| v.abs() < 1e-12));
        // Beyond the truncation every eigenvalue is zero.
        let diag = diagnostics(&est, &truth, &spec, 8, None).unwrap_err();
        assert!(matches!(diag, Error::EigenGapViolated { .. }));
    }

    #[test]
    fn crude_bound_is_guarded_on_exact_input() {
        let spec = small_spec(5);
        let grid = Grid::new(128).unwrap();
        let truth = CovarianceEstimate::truth(&spec, &grid);
        let sys = align_signs(eigendecompose(&truth).unwrap(), &spec, 5);
        let diag = diagnostics(&truth, &truth, &spec, 1, None).unwrap();
        let cb = crude_bound_ratio(&diag, &sys, &spec, 1).unwrap();
        assert!(cb.degenerate && cb.ratio == 0.0);
        assert!(omega_event(diag.hs_norm_delta, &spec, 3));
    }

    #[test]
    fn eigengap_of_power_law() {
        let spec = small_spec(10);
        assert!((eigengap(&spec, 1) - 0.75).abs() < 1e-15);
        assert!((eigengap(&spec, 2) - (0.25 - 1.0 / 9.0)).abs() < 1e-15);
        assert!((eigengap(&spec, 10) - (1.0 / 81.0 - 0.01)).abs() < 1e-15);
        assert!((eigengap(&small_spec(1), 1) - 1.0).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn sign_flips_of_eigenvectors_leave_the_spectrum_unchanged(
            flips in proptest::collection::vec(any::<bool>(), 6),
            lam in proptest::collection::vec(0.01f64..2.0, 6),
        ) {
            let grid = Grid::new(64).unwrap();
            let build = |signs: &[bool]| {
                DMatrix::from_fn(64, 64, |a, b| {
                    (0..6).map(|k| {
                        let s = if signs[k] { -1.0 } else { 1.0 };
                        let t = grid.points();
                        lam[k] * s * fourier(k + 1, t[a]) * s * fourier(k + 1, t[b])
                    }).sum()
                })
            };
            let a = eigendecompose(&CovarianceEstimate::from_matrix(grid.clone(), build(&[false; 6]), Method::Truth).unwrap()).unwrap();
            let b = eigendecompose(&CovarianceEstimate::from_matrix(grid.clone(), build(&flips), Method::Truth).unwrap()).unwrap();
            for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
                prop_assert!((x - y).abs() <= 1e-10);
            }
            prop_assert!(a.orthonormality_defect(6) <= 1e-8);
        }

        #[test]
        fn aligned_error_never_exceeds_any_sign_choice(seed in any::<u64>()) {
            let spec = ProcessSpec::default();
            let grid = Grid::new(128).unwrap();
            let (ds, _) = crate::model::simulate(&spec, &crate::model::SamplingDesign::new(40, 8, seed)).unwrap();
            let sm = crate::smoother::Smoothing::new(crate::smoother::KernelSpec::EPANECHNIKOV, 0.1);
            let est = crate::smoother::estimate_covariance_binned(&ds, &sm, &grid).unwrap();
            let raw = eigendecompose(&est).unwrap();
            let aligned = align_signs(raw.clone(), &spec, 4);
            let mut flipped = raw.clone();
            for k in 0..4 {
                flipped.eigenfunctions.column_mut(k).neg_mut();
            }
            for j in 1..=4 {
                let e = l2_error(&aligned, &spec, j).unwrap();
                prop_assert!(e <= l2_error(&raw, &spec, j).unwrap() + 1e-12);
                prop_assert!(e <= l2_error(&flipped, &spec, j).unwrap() + 1e-12);
                prop_assert!(e <= 4.0 + 1e-9);
            }
            let truth = CovarianceEstimate::truth(&spec, &grid);
            for j in 1..=4 {
                prop_assert!(diagnostics(&est, &truth, &spec, j, None).unwrap().bessel_holds(1e-8));
            }
        }
    }
}
