use serde::{Deserialize, Serialize};

use crate::quad::Rule;

/// Symmetric compactly supported kernel family on `[-1, 1]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    #[default]
    Epanechnikov,
    Uniform,
    Quartic,
}

/// A smoothing kernel and its moment constants.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
}

impl KernelSpec {
    pub const EPANECHNIKOV: Self = Self::new(KernelFamily::Epanechnikov);
    pub const UNIFORM: Self = Self::new(KernelFamily::Uniform);
    pub const QUARTIC: Self = Self::new(KernelFamily::Quartic);

    pub const fn new(family: KernelFamily) -> Self {
        Self { family }
    }

    /// `K(u)`, zero outside `[-1, 1]`.
    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        if !(-1.0..=1.0).contains(&u) {
            return 0.0;
        }
        let v = 1.0 - u * u;
        match self.family {
            KernelFamily::Epanechnikov => 0.75 * v,
            KernelFamily::Uniform => 0.5,
            KernelFamily::Quartic => 0.9375 * v * v,
        }
    }

    /// Scaled kernel `K_h(d) = K(d / h) / h`.
    #[inline]
    pub fn scaled(&self, d: f64, h: f64) -> f64 {
        self.eval(d / h) / h
    }

    /// `σ_K² = ∫ u² K(u) du`.
    pub fn sigma_k2(&self) -> f64 {
        match self.family {
            KernelFamily::Epanechnikov => 1.0 / 5.0,
            KernelFamily::Uniform => 1.0 / 3.0,
            KernelFamily::Quartic => 1.0 / 7.0,
        }
    }

    /// `∫ u⁴ K(u) du`.
    pub fn mu4(&self) -> f64 {
        match self.family {
            KernelFamily::Epanechnikov => 3.0 / 35.0,
            KernelFamily::Uniform => 1.0 / 5.0,
            KernelFamily::Quartic => 1.0 / 21.0,
        }
    }

    /// `‖K‖² = ∫ K(u)² du`.
    pub fn norm2(&self) -> f64 {
        match self.family {
            KernelFamily::Epanechnikov => 3.0 / 5.0,
            KernelFamily::Uniform => 1.0 / 2.0,
            KernelFamily::Quartic => 5.0 / 7.0,
        }
    }

    /// Polynomial degree of the kernel on its support.
    pub(crate) fn degree(&self) -> usize {
        match self.family {
            KernelFamily::Epanechnikov => 2,
            KernelFamily::Uniform => 0,
            KernelFamily::Quartic => 4,
        }
    }

    /// Cosine transform `K̂(x) = ∫ K(u) cos(x u) du`.
    ///
    /// Under periodic smoothing `T_h φ_j = K̂(ω_j h) φ_j` for the Fourier basis.
    pub fn cosine_transform(&self, x: f64) -> f64 {
        let rule = Rule::new(24);
        rule.composite(-1.0, 1.0, 2 + (x.abs() / 4.0).ceil() as usize, |u| {
            self.eval(u) * (x * u).cos()
        })
    }

    pub fn name(&self) -> &'static str {
        match self.family {
            KernelFamily::Epanechnikov => "epanechnikov",
            KernelFamily::Uniform => "uniform",
            KernelFamily::Quartic => "quartic",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALL: [KernelSpec; 3] = [KernelSpec::EPANECHNIKOV, KernelSpec::UNIFORM, KernelSpec::QUARTIC];

    #[test]
    fn kernel_examples() {
        assert_eq!(KernelSpec::EPANECHNIKOV.eval(0.0), 0.75);
        assert_eq!(KernelSpec::EPANECHNIKOV.eval(1.5), 0.0);
        assert_eq!(KernelSpec::QUARTIC.eval(0.0), 0.9375);
        assert_eq!(KernelSpec::UNIFORM.eval(-1.0), 0.5);
    }

    #[test]
    fn moments_match_quadrature() {
        let r = Rule::new(8);
        for k in ALL {
            let mass = r.integrate(-1.0, 1.0, |u| k.eval(u));
            assert!((mass - 1.0).abs() < 1e-12, "{k:?}");
            assert!((r.integrate(-1.0, 1.0, |u| u * u * k.eval(u)) - k.sigma_k2()).abs() < 1e-13);
            assert!((r.integrate(-1.0, 1.0, |u| u.powi(4) * k.eval(u)) - k.mu4()).abs() < 1e-13);
            assert!((r.integrate(-1.0, 1.0, |u| k.eval(u).powi(2)) - k.norm2()).abs() < 1e-13);
            assert!((r.integrate(-1.0, 1.0, |u| u * k.eval(u))).abs() < 1e-15);
        }
    }

    #[test]
    fn cosine_transform_matches_closed_forms() {
        for x in [0.0f64, 1e-3, 0.4, 2.5, 12.0] {
            let uni = if x == 0.0 { 1.0 } else { x.sin() / x };
            assert!((KernelSpec::UNIFORM.cosine_transform(x) - uni).abs() < 1e-13);
            if x > 0.1 {
                let epa = 3.0 * (x.sin() - x * x.cos()) / x.powi(3);
                assert!((KernelSpec::EPANECHNIKOV.cosine_transform(x) - epa).abs() < 1e-12);
            }
        }
        for k in ALL {
            let x: f64 = 0.01;
            let series = 1.0 - k.sigma_k2() * x * x / 2.0 + k.mu4() * x.powi(4) / 24.0;
            assert!((k.cosine_transform(x) - series).abs() < 1e-14);
        }
    }
}
