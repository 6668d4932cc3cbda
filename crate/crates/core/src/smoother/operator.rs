//! The smoothing operator `T_h f(x) = ∫ K_h(x − y) f(y) dy`.
//!
//! Grid functions are read as piecewise-linear interpolants. The operator is
//! discretized by Galerkin projection onto the hat basis with a lumped
//! (trapezoid) mass matrix, `T = W⁻¹ M`, where
//! `M_ij = ∫∫ ψ_i(x) ψ_j(y) K_h(x − y) dx dy` is evaluated exactly. This
//! makes `T` self-adjoint in the trapezoid inner product and reproduces
//! constants exactly wherever the kernel window lies inside `[0, 1]`.

use crate::error::{domain, Result};
use crate::quad::Rule;

use super::{Boundary, Grid, KernelSpec};

/// Precomputed Galerkin discretization of `T_h` on a grid.
#[derive(Clone, Debug)]
pub struct SmoothingOperator {
    kernel: KernelSpec,
    h: f64,
    boundary: Boundary,
    g: usize,
    dx: f64,
    e_max: isize,
    // Cell-pair integrals indexed by [half_a][half_b][e + e_max].
    tables: [[Vec<f64>; 2]; 2],
}

const R: usize = 0;
const L: usize = 1;

pub(crate) fn check_bandwidth(h: f64) -> Result<()> {
    if !(h > 0.0 && h < 0.5) {
        return Err(domain("bandwidth", format!("h = {h} must lie in (0, 0.5)")));
    }
    Ok(())
}

impl SmoothingOperator {
    pub fn new(kernel: KernelSpec, h: f64, grid: &Grid, boundary: Boundary) -> Result<Self> {
        check_bandwidth(h)?;
        let g = grid.len();
        let dx = grid.spacing();
        let e_max = (h / dx).ceil() as isize + 1;
        let outer = Rule::new(5);
        let inner = Rule::new(2);
        let tables = [R, L].map(|a| {
            [R, L].map(|b| {
                (-e_max..=e_max)
                    .map(|e| cell_pair_integral(kernel, h, dx, e as f64, a, b, &outer, &inner))
                    .collect()
            })
        });
        Ok(Self {
            kernel,
            h,
            boundary,
            g,
            dx,
            e_max,
            tables,
        })
    }

    pub fn kernel(&self) -> KernelSpec {
        self.kernel
    }

    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    fn j(&self, a: usize, b: usize, e: isize) -> f64 {
        if e.abs() > self.e_max {
            0.0
        } else {
            self.tables[a][b][(e + self.e_max) as usize]
        }
    }

    /// Galerkin matrix entry between nodes `i` and `j`.
    fn entry(&self, i: usize, j: usize) -> f64 {
        let halves = |k: usize| -> [(usize, isize, bool); 2] {
            let k = k as isize;
            match self.boundary {
                Boundary::Truncated => [
                    (R, k, (k as usize) < self.g - 1),
                    (L, k - 1, k > 0),
                ],
                Boundary::Periodic => [(R, k, true), (L, k - 1, true)],
            }
        };
        let period = (self.g - 1) as isize;
        let mut acc = 0.0;
        for (a, ca, ok_a) in halves(i) {
            if !ok_a {
                continue;
            }
            for (b, cb, ok_b) in halves(j) {
                if !ok_b {
                    continue;
                }
                let e = ca - cb;
                match self.boundary {
                    Boundary::Truncated => acc += self.j(a, b, e),
                    Boundary::Periodic => {
                        let e0 = e.rem_euclid(period);
                        acc += self.j(a, b, e0) + self.j(a, b, e0 - period);
                    }
                }
            }
        }
        acc
    }

    /// Applies the operator to grid samples of `f`.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.g, "grid function length");
        let band = self.e_max + 1;
        match self.boundary {
            Boundary::Truncated => {
                let g = self.g as isize;
                (0..self.g)
                    .map(|i| {
                        let lo = (i as isize - band).max(0);
                        let hi = (i as isize + band).min(g - 1);
                        let s: f64 = (lo..=hi).map(|j| self.entry(i, j as usize) * f[j as usize]).sum();
                        let w = if i == 0 || i == self.g - 1 { 0.5 * self.dx } else { self.dx };
                        s / w
                    })
                    .collect()
            }
            Boundary::Periodic => {
                let p = self.g - 1;
                let mut fu = f[..p].to_vec();
                fu[0] = 0.5 * (f[0] + f[p]);
                let reach = band.min(p as isize / 2);
                let mut out: Vec<f64> = (0..p)
                    .map(|i| {
                        let mut s = 0.0;
                        for d in -reach..=reach {
                            if d == reach && 2 * reach == p as isize {
                                continue;
                            }
                            let j = (i as isize + d).rem_euclid(p as isize) as usize;
                            s += self.entry(i, j) * fu[j];
                        }
                        s / self.dx
                    })
                    .collect();
                out.push(out[0]);
                out
            }
        }
    }
}

/// `Δ² ∫∫ p_a(ξ) p_b(η) K_h(Δ(e + ξ − η)) dξ dη` over the unit cell pair,
/// with `p_R(x) = 1 − x` and `p_L(x) = x`.
#[allow(clippy::too_many_arguments)]
fn cell_pair_integral(
    kernel: KernelSpec,
    h: f64,
    dx: f64,
    e: f64,
    a: usize,
    b: usize,
    outer: &Rule,
    inner: &Rule,
) -> f64 {
    let p = |half: usize, x: f64| if half == R { 1.0 - x } else { x };
    // Overlap density of ξ − η = τ: piecewise cubic with a knot at 0.
    let overlap = |tau: f64| {
        let lo = tau.max(0.0);
        let hi = (1.0 + tau).min(1.0);
        if hi <= lo {
            0.0
        } else {
            inner.integrate(lo, hi, |xi| p(a, xi) * p(b, xi - tau))
        }
    };
    let r = h / dx;
    let mut knots = vec![-1.0, 0.0, 1.0, -e - r, -e + r];
    knots.retain(|&t| (-1.0..=1.0).contains(&t));
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let mut acc = 0.0;
    for w in knots.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let mid = 0.5 * (lo + hi);
        if (e + mid).abs() > r {
            continue;
        }
        acc += outer.integrate(lo, hi, |tau| overlap(tau) * kernel.scaled(dx * (e + tau), h));
    }
    debug_assert!(kernel.degree() + 3 <= 9);
    acc * dx * dx
}

/// Applies `T_h` to a grid function.
///
/// With [`Boundary::Truncated`] kernel mass falling outside `[0, 1]` is
/// lost; with [`Boundary::Periodic`] distances wrap around the circle.
pub fn apply_th(
    kernel: KernelSpec,
    h: f64,
    grid: &Grid,
    f: &[f64],
    boundary: Boundary,
) -> Result<Vec<f64>> {
    grid.check(f)?;
    Ok(SmoothingOperator::new(kernel, h, grid, boundary)?.apply(f))
}
