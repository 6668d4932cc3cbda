//! Pooled local-constant covariance estimator
//!
//! ```text
//! Ĉ(s, t) = (1/n) Σ_i 1/(N(N−1)h²) Σ_{j≠l} K((T_ij − s)/h) K((T_il − t)/h) X_ij X_il
//! ```
//!
//! evaluated on a grid, either literally (exact path) or after linear
//! binning of the observation times (binned path).

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{fill_fourier, FunctionalDataset, ProcessSpec};
use crate::quad::Rule;

use super::{check_bandwidth, Boundary, Grid, KernelSpec};

/// Number of subject chunks reduced in a fixed pairwise tree.
const CHUNKS: usize = 16;

/// Kernel, bandwidth and boundary convention.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Smoothing {
    pub kernel: KernelSpec,
    pub h: f64,
    #[serde(default)]
    pub boundary: Boundary,
}

impl Smoothing {
    pub fn new(kernel: KernelSpec, h: f64) -> Self {
        Self {
            kernel,
            h,
            boundary: Boundary::default(),
        }
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }

    #[inline]
    fn weight(&self, x: f64, y: f64) -> f64 {
        self.kernel.scaled(self.boundary.distance(x, y), self.h)
    }
}

/// How an estimate was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    Binned,
    /// Analytic mean of the estimator under the model.
    Expected,
    /// Discretized model covariance.
    Truth,
}

/// Covariance surface on a `G × G` grid.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceEstimate {
    pub grid: Grid,
    pub matrix: DMatrix<f64>,
    pub smoothing: Option<Smoothing>,
    pub method: Method,
}

impl CovarianceEstimate {
    /// Wraps a user-supplied matrix.
    pub fn from_matrix(grid: Grid, matrix: DMatrix<f64>, method: Method) -> Result<Self> {
        if matrix.nrows() != grid.len() || matrix.ncols() != grid.len() {
            return Err(Error::GridMismatch {
                expected: grid.len(),
                actual: matrix.nrows().max(matrix.ncols()),
            });
        }
        Ok(Self {
            grid,
            matrix,
            smoothing: None,
            method,
        })
    }

    /// The model covariance sampled on the grid.
    pub fn truth(spec: &ProcessSpec, grid: &Grid) -> Self {
        let g = grid.len();
        let jn = spec.truncation_j;
        let lam = spec.eigenvalues();
        let mut phi = DMatrix::zeros(g, jn);
        let mut buf = vec![0.0; jn];
        for (a, &t) in grid.points().iter().enumerate() {
            fill_fourier(t, &mut buf);
            for k in 0..jn {
                phi[(a, k)] = buf[k] * lam[k].sqrt();
            }
        }
        let matrix = &phi * phi.transpose();
        Self {
            grid: grid.clone(),
            matrix: symmetrize(matrix),
            smoothing: None,
            method: Method::Truth,
        }
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn h(&self) -> Option<f64> {
        self.smoothing.map(|s| s.h)
    }

    /// Largest `|Ĉ(s,t) − Ĉ(t,s)|`.
    pub fn max_asymmetry(&self) -> f64 {
        let m = &self.matrix;
        let mut worst: f64 = 0.0;
        for a in 0..m.nrows() {
            for b in 0..a {
                worst = worst.max((m[(a, b)] - m[(b, a)]).abs());
            }
        }
        worst
    }

    /// Squared Hilbert–Schmidt distance `∬ (A − B)²` by trapezoid quadrature,
    /// optionally restricted to grid indices `rows × rows`.
    pub fn hs_dist2(&self, other: &Self, restrict: Option<&[usize]>) -> Result<f64> {
        if other.len() != self.len() {
            return Err(Error::GridMismatch {
                expected: self.len(),
                actual: other.len(),
            });
        }
        let w = self.grid.weights();
        let all: Vec<usize>;
        let idx = match restrict {
            Some(r) => r,
            None => {
                all = (0..self.len()).collect();
                &all
            }
        };
        let mut acc = 0.0;
        for &a in idx {
            for &b in idx {
                let d = self.matrix[(a, b)] - other.matrix[(a, b)];
                acc += w[a] * w[b] * d * d;
            }
        }
        Ok(acc)
    }

    /// `‖A − B‖_F / ‖B‖_F` over the raw matrix entries.
    pub fn relative_frobenius(&self, reference: &Self) -> f64 {
        let num = (&self.matrix - &reference.matrix).norm();
        let den = reference.matrix.norm();
        if den == 0.0 {
            num
        } else {
            num / den
        }
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

fn check_inputs(data: &FunctionalDataset, smoothing: &Smoothing) -> Result<()> {
    check_bandwidth(smoothing.h)?;
    if data.subjects.is_empty() || data.n_obs() == 0 {
        return Err(Error::NoObservations);
    }
    if data.n_obs() < 2 {
        return Err(Error::DegenerateDesign);
    }
    data.validate()
}

/// Sums equally sized buffers in a fixed pairwise tree.
pub(crate) fn pairwise_sum(mut parts: Vec<Vec<f64>>) -> Vec<f64> {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop().unwrap_or_default()
}

/// Runs `body` over fixed subject chunks in parallel and sums the buffers.
fn chunked_sum<F>(n: usize, len: usize, body: F) -> Vec<f64>
where
    F: Fn(std::ops::Range<usize>, &mut [f64]) + Sync,
{
    let size = n.div_ceil(CHUNKS).max(1);
    let parts: Vec<Vec<f64>> = (0..n.div_ceil(size))
        .into_par_iter()
        .map(|c| {
            let mut buf = vec![0.0; len];
            body(c * size..((c + 1) * size).min(n), &mut buf);
            buf
        })
        .collect();
    pairwise_sum(parts)
}

/// Grid indices and kernel weights `K_h(t − s_a)` for one observation time.
fn support(t: f64, smoothing: &Smoothing, grid: &Grid) -> Vec<(usize, f64)> {
    let g = grid.len();
    let dx = grid.spacing();
    let lo = ((t - smoothing.h) / dx).floor() as isize - 1;
    let hi = ((t + smoothing.h) / dx).ceil() as isize + 1;
    let mut idx: Vec<usize> = Vec::with_capacity((hi - lo + 2) as usize);
    for k in lo..=hi {
        match smoothing.boundary {
            Boundary::Truncated => {
                if k >= 0 && (k as usize) < g {
                    idx.push(k as usize);
                }
            }
            Boundary::Periodic => {
                let a = k.rem_euclid(g as isize - 1) as usize;
                idx.push(a);
                if a == 0 {
                    idx.push(g - 1);
                }
            }
        }
    }
    idx.sort_unstable();
    idx.dedup();
    idx.into_iter()
        .filter_map(|a| {
            let v = smoothing.weight(t, grid.points()[a]);
            (v != 0.0).then_some((a, v))
        })
        .collect()
}

/// Literal evaluation of the estimator: every ordered pair `j ≠ l` of every
/// subject contributes its kernel-weighted cross product.
pub fn estimate_covariance_exact(
    data: &FunctionalDataset,
    smoothing: &Smoothing,
    grid: &Grid,
) -> Result<CovarianceEstimate> {
    check_inputs(data, smoothing)?;
    let g = grid.len();
    let n = data.n();
    let n_obs = data.n_obs();
    let sum = chunked_sum(n, g * g, |range, buf| {
        for s in &data.subjects[range] {
            let sup: Vec<Vec<(usize, f64)>> = s.times.iter().map(|&t| support(t, smoothing, grid)).collect();
            for j in 0..n_obs {
                for l in 0..n_obs {
                    if j == l {
                        continue;
                    }
                    let coef = s.values[j] * s.values[l];
                    for &(a, ka) in &sup[j] {
                        let row = &mut buf[a * g..(a + 1) * g];
                        let c = coef * ka;
                        for &(b, kb) in &sup[l] {
                            row[b] += c * kb;
                        }
                    }
                }
            }
        }
    });
    let scale = 1.0 / (n as f64 * n_obs as f64 * (n_obs - 1) as f64);
    let matrix = DMatrix::from_row_slice(g, g, &sum) * scale;
    Ok(CovarianceEstimate {
        grid: grid.clone(),
        matrix: symmetrize(matrix),
        smoothing: Some(*smoothing),
        method: Method::Exact,
    })
}

/// `∫ K_h(s − y) b_p(y) dy / ∫ b_p` for the hat function `b_p` of bin `p`.
///
/// Averaging the kernel against the hat, rather than sampling it at the
/// node, keeps `Σ_p k_p(s) ∫b_p` equal to the exact kernel mass on `[0, 1]`.
fn hat_average(smoothing: &Smoothing, rule: &Rule, s: f64, p: usize, bins: usize, dx: f64) -> f64 {
    let x = p as f64 * dx;
    let h = smoothing.h;
    let halves = [
        (x - dx, x, smoothing.boundary == Boundary::Periodic || p > 0),
        (x, x + dx, smoothing.boundary == Boundary::Periodic || p + 1 < bins),
    ];
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &(a, b, present)) in halves.iter().enumerate() {
        if !present {
            continue;
        }
        den += 0.5 * dx;
        let mut cuts = vec![a, b];
        for k in [-1.0, 0.0, 1.0] {
            for e in [s - h + k, s + h + k] {
                if e > a && e < b {
                    cuts.push(e);
                }
            }
        }
        cuts.sort_by(f64::total_cmp);
        for w in cuts.windows(2) {
            for (y, wt) in rule.points(w[0], w[1]) {
                let hat = if i == 0 { (y - a) / dx } else { (b - y) / dx };
                num += wt * hat * smoothing.weight(s, y);
            }
        }
    }
    num / den
}

/// Binned fast path.
///
/// Observation times are split linearly between their two neighbouring grid
/// nodes. Per subject, the binned products `u uᵀ` are accumulated with the
/// self-pairs `j = l` subtracted, which keeps the `j ≠ l` exclusion exact at
/// bin resolution. The kernel, averaged over each bin's hat function, is
/// then applied on both sides.
pub fn estimate_covariance_binned(
    data: &FunctionalDataset,
    smoothing: &Smoothing,
    grid: &Grid,
) -> Result<CovarianceEstimate> {
    check_inputs(data, smoothing)?;
    let g = grid.len();
    let n = data.n();
    let n_obs = data.n_obs();
    let dx = grid.spacing();
    let bins = match smoothing.boundary {
        Boundary::Truncated => g,
        Boundary::Periodic => g - 1,
    };
    let locate = |t: f64| -> [(usize, f64); 2] {
        let pos = t / dx;
        match smoothing.boundary {
            Boundary::Truncated => {
                let i0 = (pos.floor() as usize).min(g - 2);
                let f = pos - i0 as f64;
                [(i0, 1.0 - f), (i0 + 1, f)]
            }
            Boundary::Periodic => {
                let i0 = (pos.floor() as usize).min(bins - 1);
                let f = pos - i0 as f64;
                [(i0, 1.0 - f), ((i0 + 1) % bins, f)]
            }
        }
    };
    let s_sum = chunked_sum(n, bins * bins, |range, buf| {
        let mut u = vec![0.0; bins];
        let mut touched: Vec<usize> = Vec::with_capacity(2 * n_obs);
        for s in &data.subjects[range] {
            touched.clear();
            for (&t, &x) in s.times.iter().zip(&s.values) {
                let cell = locate(t);
                for (p, w) in cell {
                    if u[p] == 0.0 && !touched.contains(&p) {
                        touched.push(p);
                    }
                    u[p] += w * x;
                }
                for (p, wp) in cell {
                    for (q, wq) in cell {
                        buf[p * bins + q] -= x * x * wp * wq;
                    }
                }
            }
            for &p in &touched {
                let up = u[p];
                let row = &mut buf[p * bins..(p + 1) * bins];
                for &q in &touched {
                    row[q] += up * u[q];
                }
            }
            for &p in &touched {
                u[p] = 0.0;
            }
        }
    });
    // Kernel rows: hat-averaged K_h(s_a − ·) for each output point and bin.
    let rule = Rule::new(4);
    let krows: Vec<Vec<(usize, f64)>> = grid
        .points()
        .iter()
        .map(|&s| {
            let lo = ((s - smoothing.h) / dx).floor() as isize - 1;
            let hi = ((s + smoothing.h) / dx).ceil() as isize + 1;
            let mut idx: Vec<usize> = (lo..=hi)
                .filter_map(|k| match smoothing.boundary {
                    Boundary::Truncated => (k >= 0 && (k as usize) < g).then_some(k as usize),
                    Boundary::Periodic => Some(k.rem_euclid(bins as isize) as usize),
                })
                .collect();
            idx.sort_unstable();
            idx.dedup();
            idx.into_iter()
                .map(|p| (p, hat_average(smoothing, &rule, s, p, bins, dx)))
                .filter(|&(_, k)| k != 0.0)
                .collect()
        })
        .collect();
    // Y = S Kᵀ (bins × G), then Ĉ = K Y.
    let mut y = vec![0.0; bins * g];
    for p in 0..bins {
        let srow = &s_sum[p * bins..(p + 1) * bins];
        for (a, kr) in krows.iter().enumerate() {
            y[p * g + a] = kr.iter().map(|&(q, k)| srow[q] * k).sum();
        }
    }
    let scale = 1.0 / (n as f64 * n_obs as f64 * (n_obs - 1) as f64);
    let mut c = vec![0.0; g * g];
    for (a, kr) in krows.iter().enumerate() {
        let row = &mut c[a * g..(a + 1) * g];
        for &(p, k) in kr {
            let yrow = &y[p * g..(p + 1) * g];
            row.iter_mut().zip(yrow).for_each(|(r, v)| *r += k * v);
        }
    }
    let matrix = DMatrix::from_row_slice(g, g, &c) * scale;
    Ok(CovarianceEstimate {
        grid: grid.clone(),
        matrix: symmetrize(matrix),
        smoothing: Some(*smoothing),
        method: Method::Binned,
    })
}

/// Dispatches to the exact or binned path.
pub fn estimate_covariance(
    data: &FunctionalDataset,
    smoothing: &Smoothing,
    grid: &Grid,
    method: Method,
) -> Result<CovarianceEstimate> {
    match method {
        Method::Exact => estimate_covariance_exact(data, smoothing, grid),
        Method::Binned => estimate_covariance_binned(data, smoothing, grid),
        other => Err(crate::error::invalid(
            "method",
            format!("{other:?} is not a data-driven estimator"),
        )),
    }
}

/// Analytic mean of the estimator for the uniform design:
/// `∬ K_h(s − u) K_h(t − v) C(u, v) du dv`, by Gauss–Legendre quadrature.
///
/// Measurement noise does not enter because only `j ≠ l` pairs are pooled.
pub fn expected_estimate_oracle(
    spec: &ProcessSpec,
    smoothing: &Smoothing,
    grid: &Grid,
) -> Result<CovarianceEstimate> {
    spec.validate()?;
    check_bandwidth(smoothing.h)?;
    let g = grid.len();
    let jn = spec.truncation_j;
    let rule = Rule::new(16);
    let h = smoothing.h;
    // g_k(s_a) · √λ_k for every grid point and component.
    let rows: Vec<Vec<f64>> = grid
        .points()
        .par_iter()
        .map(|&s| {
            let (lo, hi) = match smoothing.boundary {
                Boundary::Truncated => ((s - h).max(0.0), (s + h).min(1.0)),
                Boundary::Periodic => (s - h, s + h),
            };
            let mut out = vec![0.0; jn];
            let mut phi = vec![0.0; jn];
            let panels = 8;
            let step = (hi - lo) / panels as f64;
            for pnl in 0..panels {
                let a0 = lo + pnl as f64 * step;
                for (x, w) in rule.points(a0, a0 + step) {
                    let k = smoothing.kernel.scaled(s - x, h);
                    fill_fourier(x, &mut phi);
                    out.iter_mut().zip(&phi).for_each(|(o, p)| *o += w * k * p);
                }
            }
            out.iter_mut()
                .enumerate()
                .for_each(|(k, v)| *v *= spec.model_eigenvalue(k + 1).sqrt());
            out
        })
        .collect();
    let mut gm = DMatrix::zeros(g, jn);
    for (a, r) in rows.iter().enumerate() {
        for k in 0..jn {
            gm[(a, k)] = r[k];
        }
    }
    let matrix = &gm * gm.transpose();
    Ok(CovarianceEstimate {
        grid: grid.clone(),
        matrix: symmetrize(matrix),
        smoothing: Some(*smoothing),
        method: Method::Expected,
    })
}
