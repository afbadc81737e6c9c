//! Correction factors `p_{n-k}`: the density of `k` faces of a balanced die
//! relative to `k` iid uniform faces, as a function of their sum.

use serde::{Deserialize, Serialize};

use super::irwin_hall::{uniform_sum_density, IRWIN_HALL_MAX_N};
use super::scaled_density;
use crate::quadrature::{integrate_cube, GaussLegendre, DEFAULT_BUDGET};
use crate::{Error, Result};

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Truncation order of the closed-form factors in `1/n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CorrectionOrder {
    /// Terms up to `1/n`.
    First,
    /// Terms up to `1/n^2` (only for `k <= 2`).
    Second,
}

impl CorrectionOrder {
    /// Highest order available for `k` free faces.
    pub fn best_for(k: usize) -> Self {
        if k <= 2 {
            Self::Second
        } else {
            Self::First
        }
    }
}

/// Closed-form `p_{n-k}(x)`.
pub fn correction_factor_closed(n: usize, k: usize, x: f64, order: CorrectionOrder) -> Result<f64> {
    CorrectionFactor::new(n, k, order).map(|c| c.eval(x))
}

/// Closed-form correction factor for fixed `(n, k, order)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionFactor {
    n: usize,
    k: usize,
    order: CorrectionOrder,
}

impl CorrectionFactor {
    pub fn new(n: usize, k: usize, order: CorrectionOrder) -> Result<Self> {
        if !(1..=4).contains(&k) {
            return Err(Error::UnsupportedK(k));
        }
        if k > 2 && order == CorrectionOrder::Second {
            return Err(Error::UnsupportedOrder(2));
        }
        if n <= k {
            return Err(Error::InvalidArgument(format!("correction factor needs n > k, got n={n}, k={k}")));
        }
        Ok(Self { n, k, order })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn order(&self) -> CorrectionOrder {
        self.order
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.n as f64;
        let x2 = x * x;
        let first = 1.0 + self.k as f64 / (2.0 * n) - x2 / (2.0 * n);
        if self.order == CorrectionOrder::First {
            return first;
        }
        let (c0, c2) = match self.k {
            1 => (9.0 / 40.0, -9.0 / 20.0),
            _ => (6.0 / 5.0, -6.0 / 5.0),
        };
        first + (c0 + c2 * x2 + x2 * x2 / 8.0) / (n * n)
    }
}

/// Source of the density `phi_tilde_{n-k}` in the direct ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DensityBackend {
    /// Exact Irwin-Hall density; needs `n - k <= 40`.
    Exact,
    /// Edgeworth expansion of the given order.
    Edgeworth { order: usize },
}

/// `p_{n-k}(x) = phi_tilde_{n-k}(x) / Z`, with
/// `Z = E phi_tilde_{n-k}(V_1 + ... + V_k)` computed once by quadrature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectCorrection {
    pub n: usize,
    pub k: usize,
    pub backend: DensityBackend,
    pub z: f64,
}

impl DirectCorrection {
    /// Normalizer by Gauss-Legendre over `[-sqrt 3, sqrt 3]^k`: 64 nodes per
    /// axis, 32 at `k = 4`. For `k = 1` the rule is applied between the
    /// knots of the exact density.
    pub fn new(n: usize, k: usize, backend: DensityBackend) -> Result<Self> {
        let nodes = if k >= 4 { 32 } else { 64 };
        Self::with_rule(n, k, backend, nodes, DEFAULT_BUDGET)
    }

    pub fn with_rule(n: usize, k: usize, backend: DensityBackend, nodes: usize, budget: u64) -> Result<Self> {
        if !(1..=4).contains(&k) {
            return Err(Error::UnsupportedK(k));
        }
        if n <= k {
            return Err(Error::InvalidArgument(format!("correction factor needs n > k, got n={n}, k={k}")));
        }
        let m = n - k;
        match backend {
            DensityBackend::Exact if m > IRWIN_HALL_MAX_N => {
                return Err(Error::UnsupportedN {
                    n: m,
                    max: IRWIN_HALL_MAX_N,
                })
            }
            DensityBackend::Edgeworth { order } => {
                scaled_density(m.max(2), 0.0, order)?;
            }
            _ => {}
        }
        let mut this = Self { n, k, backend, z: 1.0 };
        let rule = GaussLegendre::new(nodes);
        let width = 2.0 * SQRT3;
        let integral = if k == 1 {
            let mut breaks = vec![-SQRT3, SQRT3];
            breaks.extend(
                (0..=m)
                    .map(|j| -(m as f64) * SQRT3 + width * j as f64)
                    .filter(|&t| t > -SQRT3 && t < SQRT3),
            );
            breaks.sort_by(f64::total_cmp);
            Ok(rule.integrate_pieces(&breaks, |s| this.density(s)))
        } else {
            integrate_cube(&rule, k, -SQRT3, SQRT3, budget, |v| this.density(v.iter().sum()))
        }?;
        this.z = integral / width.powi(k as i32);
        Ok(this)
    }

    /// `phi_tilde_{n-k}(x)` from the configured backend.
    pub fn density(&self, x: f64) -> f64 {
        let m = self.n - self.k;
        match self.backend {
            DensityBackend::Exact => uniform_sum_density(m, x),
            DensityBackend::Edgeworth { order } => {
                scaled_density(m.max(2), x, order).expect("order validated at construction")
            }
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.density(x) / self.z
    }
}

/// Direct-ratio `p_{n-k}(x)` from scratch (recomputes the normalizer).
pub fn correction_factor_direct(n: usize, k: usize, x: f64, backend: DensityBackend) -> Result<f64> {
    Ok(DirectCorrection::new(n, k, backend)?.eval(x))
}
