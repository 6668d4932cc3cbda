//! Ground-truth process and simulation of discretely observed curves.
//!
//! Curves follow a truncated Karhunen–Loève expansion
//!
//! ```text
//! X_i(t) = Σ_{k≤J} ξ_ik φ_k(t),    ξ_ik ~ N(0, λ_k),  λ_k = λ0 · k^(−a)
//! ```
//!
//! observed at `N` uniform random times per subject with additive
//! `N(0, σ²)` noise. The eigenfunctions form the full Fourier system on
//! `[0, 1]`, ordered `√2 cos(2πt), √2 sin(2πt), √2 cos(4πt), …`, which is
//! periodic with periodic first derivative.

use std::f64::consts::{PI, SQRT_2};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, invalid, Error, Result};
use crate::rng::{fnv1a, subject_stream};

/// Eigenfunction family.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    #[default]
    Fourier,
}

/// Distribution of the standardized principal component scores.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreLaw {
    #[default]
    Gaussian,
}

/// Generative model: eigenvalue law, eigenfunctions, score law and noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProcessSpec {
    /// Polynomial decay exponent `a > 1`.
    pub decay_a: f64,
    /// Leading eigenvalue scale `λ0 > 0`.
    pub scale_lambda0: f64,
    /// Measurement-error standard deviation.
    pub noise_sd: f64,
    /// Number of Karhunen–Loève terms kept.
    pub truncation_j: usize,
    pub basis: Basis,
    pub score_law: ScoreLaw,
}

impl Default for ProcessSpec {
    fn default() -> Self {
        Self {
            decay_a: 2.0,
            scale_lambda0: 1.0,
            noise_sd: 0.5,
            truncation_j: 50,
            basis: Basis::Fourier,
            score_law: ScoreLaw::Gaussian,
        }
    }
}

/// Largest admissible tail-variance share `Σ_{j>J} λ_j / Σ_j λ_j`.
pub const TAIL_VARIANCE_GUARD: f64 = 1e-3;

impl ProcessSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.decay_a > 1.0) || !self.decay_a.is_finite() {
            return Err(invalid("decay_a", format!("must exceed 1, got {}", self.decay_a)));
        }
        if !(self.scale_lambda0 > 0.0) || !self.scale_lambda0.is_finite() {
            return Err(invalid(
                "scale_lambda0",
                format!("must be positive, got {}", self.scale_lambda0),
            ));
        }
        if !(self.noise_sd >= 0.0) || !self.noise_sd.is_finite() {
            return Err(invalid("noise_sd", format!("must be ≥ 0, got {}", self.noise_sd)));
        }
        if self.truncation_j == 0 {
            return Err(invalid("truncation_j", "must be at least 1"));
        }
        Ok(())
    }

    /// Frequency exponent `c` of the basis family.
    pub fn freq_c(&self) -> f64 {
        match self.basis {
            Basis::Fourier => 2.0,
        }
    }

    /// `λ_j = λ0 · j^(−a)` for any `j ≥ 1`, ignoring truncation.
    pub fn eigenvalue(&self, j: usize) -> Result<f64> {
        if j == 0 {
            return Err(domain("eigenvalue index", "j must be ≥ 1"));
        }
        Ok(self.scale_lambda0 * (j as f64).powf(-self.decay_a))
    }

    /// Eigenvalue of the truncated covariance: zero beyond `truncation_j`.
    pub fn model_eigenvalue(&self, j: usize) -> f64 {
        if j == 0 || j > self.truncation_j {
            0.0
        } else {
            self.scale_lambda0 * (j as f64).powf(-self.decay_a)
        }
    }

    /// `λ_1, …, λ_J`.
    pub fn eigenvalues(&self) -> Vec<f64> {
        (1..=self.truncation_j).map(|j| self.model_eigenvalue(j)).collect()
    }

    /// Share of the untruncated variance lost by stopping at `J` terms.
    pub fn tail_variance_fraction(&self) -> f64 {
        let a = self.decay_a;
        let head: f64 = (1..=self.truncation_j).map(|j| (j as f64).powf(-a)).sum();
        // Midpoint-rule tail: Σ_{j>J} j^{-a} ≈ ∫_{J+1/2}^∞ x^{-a} dx.
        let tail = (self.truncation_j as f64 + 0.5).powf(1.0 - a) / (a - 1.0);
        tail / (head + tail)
    }

    /// Checks `λ_j − λ_{j+1} ≥ (a / constant) · j^(−a−1)` for all `j < J`.
    pub fn check_eigen_gap(&self, constant: f64) -> bool {
        (1..self.truncation_j).all(|j| {
            let gap = self.model_eigenvalue(j) - self.model_eigenvalue(j + 1);
            gap >= self.decay_a / constant * (j as f64).powf(-self.decay_a - 1.0)
        })
    }

    /// A constant for which the eigen-gap condition holds for the power law.
    ///
    /// By the mean value theorem `j^{-a} − (j+1)^{-a} ≥ a (j+1)^{-a-1}
    /// ≥ a 2^{-a-1} j^{-a-1}`.
    pub fn default_gap_constant(&self) -> f64 {
        2f64.powf(self.decay_a + 1.0) / self.scale_lambda0
    }

    /// Angular frequency `ω_j = 2π ⌈j/2⌉`.
    pub fn frequency(&self, j: usize) -> f64 {
        frequency(j)
    }

    /// Stable 64-bit fingerprint of the process parameters.
    pub fn fingerprint(&self) -> u64 {
        let mut bytes = Vec::with_capacity(40);
        bytes.extend_from_slice(&self.decay_a.to_bits().to_le_bytes());
        bytes.extend_from_slice(&self.scale_lambda0.to_bits().to_le_bytes());
        bytes.extend_from_slice(&self.noise_sd.to_bits().to_le_bytes());
        bytes.extend_from_slice(&(self.truncation_j as u64).to_le_bytes());
        bytes.push(self.basis as u8);
        bytes.push(self.score_law as u8);
        fnv1a(bytes)
    }
}

pub(crate) fn frequency(j: usize) -> f64 {
    2.0 * PI * j.div_ceil(2) as f64
}

/// `λ_j` for the given process.
pub fn eigenvalue(spec: &ProcessSpec, j: usize) -> Result<f64> {
    spec.eigenvalue(j)
}

/// Evaluates `φ_j(t)`.
pub fn basis_eval(spec: &ProcessSpec, j: usize, t: f64) -> Result<f64> {
    if j == 0 || j > spec.truncation_j {
        return Err(domain(
            "basis index",
            format!("j = {j} outside 1..={}", spec.truncation_j),
        ));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(domain("basis argument", format!("t = {t} outside [0, 1]")));
    }
    Ok(fourier(j, t))
}

/// Fourier basis function `j ≥ 1` at any real `t` (1-periodic).
pub fn fourier(j: usize, t: f64) -> f64 {
    let x = frequency(j) * t;
    if j % 2 == 1 {
        SQRT_2 * x.cos()
    } else {
        SQRT_2 * x.sin()
    }
}

/// Second derivative of the Fourier basis function.
pub fn fourier_d2(j: usize, t: f64) -> f64 {
    let w = frequency(j);
    -w * w * fourier(j, t)
}

/// Fills `out[k-1] = φ_k(t)` for `k = 1..=out.len()` by angle recurrence.
pub(crate) fn fill_fourier(t: f64, out: &mut [f64]) {
    let (s1, c1) = (2.0 * PI * t).sin_cos();
    let (mut s, mut c) = (s1, c1);
    for (m, pair) in out.chunks_mut(2).enumerate() {
        if m > 0 {
            let c_next = c * c1 - s * s1;
            s = s * c1 + c * s1;
            c = c_next;
        }
        pair[0] = SQRT_2 * c;
        if let Some(v) = pair.get_mut(1) {
            *v = SQRT_2 * s;
        }
    }
}

/// `C(s, t) = Σ_{k≤J} λ_k φ_k(s) φ_k(t)`.
pub fn true_covariance(spec: &ProcessSpec, s: f64, t: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&s) || !(0.0..=1.0).contains(&t) {
        return Err(domain("covariance argument", format!("({s}, {t}) outside [0,1]²")));
    }
    let jn = spec.truncation_j;
    let mut ps = vec![0.0; jn];
    let mut pt = vec![0.0; jn];
    fill_fourier(s, &mut ps);
    fill_fourier(t, &mut pt);
    Ok((1..=jn)
        .map(|k| spec.model_eigenvalue(k) * ps[k - 1] * pt[k - 1])
        .sum())
}

/// Sampling-time design.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    #[default]
    UniformIid,
}

/// Number of subjects, observations per subject, design and seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingDesign {
    pub n: usize,
    #[serde(rename = "n_obs")]
    pub n_obs: usize,
    #[serde(default)]
    pub design: Design,
    #[serde(default)]
    pub seed: u64,
}

impl SamplingDesign {
    pub fn new(n: usize, n_obs: usize, seed: u64) -> Self {
        Self {
            n,
            n_obs,
            design: Design::UniformIid,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(invalid("n", "at least one subject is required"));
        }
        if self.n_obs < 2 {
            return Err(Error::DegenerateDesign);
        }
        Ok(())
    }
}

/// Observations of one subject.
#[derive(Clone, Debug, PartialEq)]
pub struct Subject {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

/// Observed `(T_ij, X_ij)` pairs with provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct FunctionalDataset {
    pub subjects: Vec<Subject>,
    pub seed: u64,
    pub spec_hash: u64,
}

impl FunctionalDataset {
    /// Builds a dataset from raw subjects and checks the invariants.
    pub fn from_subjects(subjects: Vec<Subject>) -> Result<Self> {
        let ds = Self {
            subjects,
            seed: 0,
            spec_hash: 0,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn n(&self) -> usize {
        self.subjects.len()
    }

    /// Observations per subject (all subjects share it).
    pub fn n_obs(&self) -> usize {
        self.subjects.first().map_or(0, |s| s.times.len())
    }

    pub fn validate(&self) -> Result<()> {
        if self.subjects.is_empty() {
            return Err(Error::NoObservations);
        }
        let n_obs = self.n_obs();
        for (i, s) in self.subjects.iter().enumerate() {
            if s.times.len() != n_obs || s.values.len() != n_obs {
                return Err(invalid(
                    "subjects",
                    format!("subject {i} has {} times / {} values, expected {n_obs}", s.times.len(), s.values.len()),
                ));
            }
            if let Some(t) = s.times.iter().find(|t| !(0.0..=1.0).contains(*t)) {
                return Err(domain("observation time", format!("subject {i}: {t} outside [0, 1]")));
            }
            if s.values.iter().any(|v| !v.is_finite()) {
                return Err(invalid("values", format!("subject {i} has a non-finite value")));
            }
        }
        Ok(())
    }

    /// Multiplies every observed value by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for s in &mut out.subjects {
            s.values.iter_mut().for_each(|v| *v *= factor);
        }
        out
    }
}

/// Principal component scores `ξ_ik`, row-major `n × J`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMatrix {
    pub n: usize,
    pub terms: usize,
    pub data: Vec<f64>,
}

impl ScoreMatrix {
    pub fn zeros(n: usize, terms: usize) -> Self {
        Self {
            n,
            terms,
            data: vec![0.0; n * terms],
        }
    }

    /// Score of subject `i` (0-based) on component `k` (1-based).
    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.data[i * self.terms + k - 1]
    }

    pub fn set(&mut self, i: usize, k: usize, v: f64) {
        self.data[i * self.terms + k - 1] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.terms..(i + 1) * self.terms]
    }

    /// Column `k` (1-based) as a vector.
    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, k)).collect()
    }
}

/// Draws scores, times and noise and returns the dataset with its scores.
///
/// Each subject consumes its own substream in the order: `J` scores,
/// `N` times, `N` noise terms.
pub fn simulate(spec: &ProcessSpec, design: &SamplingDesign) -> Result<(FunctionalDataset, ScoreMatrix)> {
    spec.validate()?;
    design.validate()?;
    let jn = spec.truncation_j;
    let sd: Vec<f64> = spec.eigenvalues().iter().map(|l| l.sqrt()).collect();
    let mut scores = ScoreMatrix::zeros(design.n, jn);
    let mut subjects = Vec::with_capacity(design.n);
    let mut phi = vec![0.0; jn];
    for i in 0..design.n {
        let mut rng = subject_stream(design.seed, i);
        for k in 0..jn {
            let z: f64 = rng.sample(StandardNormal);
            scores.data[i * jn + k] = sd[k] * z;
        }
        subjects.push(observe(spec, design.n_obs, scores.row(i), &mut rng, &mut phi));
    }
    Ok((
        FunctionalDataset {
            subjects,
            seed: design.seed,
            spec_hash: spec.fingerprint(),
        },
        scores,
    ))
}

/// Simulates observations for externally supplied scores.
///
/// Times and noise come from the same per-subject substreams as
/// [`simulate`], offset past the score draws that are skipped here.
pub fn simulate_with_scores(
    spec: &ProcessSpec,
    design: &SamplingDesign,
    scores: &ScoreMatrix,
) -> Result<FunctionalDataset> {
    spec.validate()?;
    design.validate()?;
    if scores.n != design.n || scores.terms != spec.truncation_j {
        return Err(invalid(
            "scores",
            format!(
                "shape {}×{} does not match n = {}, J = {}",
                scores.n, scores.terms, design.n, spec.truncation_j
            ),
        ));
    }
    let mut phi = vec![0.0; spec.truncation_j];
    let subjects = (0..design.n)
        .map(|i| {
            let mut rng = subject_stream(design.seed, i);
            observe(spec, design.n_obs, scores.row(i), &mut rng, &mut phi)
        })
        .collect();
    Ok(FunctionalDataset {
        subjects,
        seed: design.seed,
        spec_hash: spec.fingerprint(),
    })
}

fn observe<R: Rng>(spec: &ProcessSpec, n_obs: usize, xi: &[f64], rng: &mut R, phi: &mut [f64]) -> Subject {
    let times: Vec<f64> = (0..n_obs).map(|_| rng.random::<f64>()).collect();
    let values = times
        .iter()
        .map(|&t| {
            fill_fourier(t, phi);
            let signal: f64 = xi.iter().zip(phi.iter()).map(|(x, p)| x * p).sum();
            let eps: f64 = if spec.noise_sd > 0.0 {
                spec.noise_sd * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            signal + eps
        })
        .collect();
    Subject { times, values }
}
