//! Edgeworth expansion for sums of iid uniforms on `[-sqrt 3, sqrt 3]`.
//!
//! `phi_n` is the density of the normalized sum `n^{-1/2} (X_1 + ... + X_n)`
//! and `phi_tilde_n(x) = n^{-1/2} phi_n(x / sqrt n)` the density of the sum
//! itself.

mod conditional;
mod correction;
mod irwin_hall;

pub use conditional::{
    conditional_expect, simple_integrals_table, ConditionalOptions, FaceLayout, SimpleIntegral, Weights,
};
pub use correction::{
    correction_factor_closed, correction_factor_direct, CorrectionFactor, CorrectionOrder, DensityBackend,
    DirectCorrection,
};
pub use irwin_hall::{irwin_hall_density, uniform_sum_density, PiecewiseDensity, IRWIN_HALL_MAX_N};

use crate::{Error, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Largest `nu` accepted by [`q_nu`].
pub const MAX_NU: usize = 8;

/// Probabilists' Hermite polynomial `He_m(x)`.
pub fn hermite(m: usize, x: f64) -> f64 {
    let (mut h0, mut h1) = (1.0, x);
    if m == 0 {
        return h0;
    }
    for k in 1..m {
        let h2 = x * h1 - k as f64 * h0;
        h0 = h1;
        h1 = h2;
    }
    h1
}

/// Cumulants `gamma_k` of a unit-variance base law, with `Gamma_k = gamma_k / k!`.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulantSet {
    gamma: Vec<f64>,
}

impl CumulantSet {
    /// Uniform law on `[-sqrt 3, sqrt 3]`: odd cumulants vanish and
    /// `gamma_{2m} = B_{2m} 12^m / (2m)` with `B` the Bernoulli numbers.
    pub fn uniform_symmetric() -> Self {
        const BERNOULLI_EVEN: [f64; 6] = [
            1.0 / 6.0,
            -1.0 / 30.0,
            1.0 / 42.0,
            -1.0 / 30.0,
            5.0 / 66.0,
            -691.0 / 2730.0,
        ];
        let mut gamma = vec![0.0; 2 * BERNOULLI_EVEN.len() + 1];
        for (i, b) in BERNOULLI_EVEN.iter().enumerate() {
            let m = i + 1;
            gamma[2 * m] = b * 12f64.powi(m as i32) / (2 * m) as f64;
        }
        Self { gamma }
    }

    pub fn max_order(&self) -> usize {
        self.gamma.len() - 1
    }

    pub fn gamma(&self, k: usize) -> f64 {
        self.gamma.get(k).copied().unwrap_or(0.0)
    }

    /// `Gamma_k = gamma_k / k!`.
    pub fn big_gamma(&self, k: usize) -> f64 {
        self.gamma(k) / (1..=k).map(|i| i as f64).product::<f64>()
    }
}

/// Enumerates the solutions of `k_1 + 2 k_2 + ... + nu k_nu = nu`.
fn restricted_partitions(nu: usize) -> Vec<Vec<usize>> {
    fn go(m: usize, remaining: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if m == 0 {
            if remaining == 0 {
                out.push(cur.clone());
            }
            return;
        }
        for k in 0..=remaining / m {
            cur[m - 1] = k;
            go(m - 1, remaining - k * m, cur, out);
        }
        cur[m - 1] = 0;
    }
    let mut out = Vec::new();
    let mut cur = vec![0; nu];
    go(nu, nu, &mut cur, &mut out);
    out
}

/// Edgeworth term `q_nu(x)`: the sum over restricted partitions of
/// `H_{nu + 2s}(x) prod_m Gamma_{m+2}^{k_m} / k_m!` times the normal density.
pub fn q_nu(nu: usize, x: f64, cumulants: &CumulantSet) -> Result<f64> {
    if nu == 0 || nu > MAX_NU || nu + 2 > cumulants.max_order() {
        return Err(Error::UnsupportedOrder(nu));
    }
    let mut total = 0.0;
    for ks in restricted_partitions(nu) {
        let mut coeff = 1.0;
        let mut s = 0;
        for (i, &k) in ks.iter().enumerate() {
            if k == 0 {
                continue;
            }
            let g = cumulants.big_gamma(i + 3);
            let fact: f64 = (1..=k).map(|j| j as f64).product();
            coeff *= g.powi(k as i32) / fact;
            s += k;
        }
        if coeff != 0.0 {
            total += coeff * hermite(nu + 2 * s, x);
        }
    }
    Ok(total * INV_SQRT_2PI * (-0.5 * x * x).exp())
}

fn check_order(order: usize) -> Result<()> {
    if !matches!(order, 0 | 2 | 4) {
        return Err(Error::UnsupportedOrder(order));
    }
    Ok(())
}

/// Truncated expansion of `phi_n(x)` keeping the terms up to `n^{-order/2}`.
/// Supported orders are 0, 2 and 4.
pub fn edgeworth_density(n: usize, x: f64, order: usize) -> Result<f64> {
    check_order(order)?;
    if n < 2 {
        return Err(Error::InvalidArgument(format!("edgeworth density needs n >= 2, got {n}")));
    }
    let cumulants = CumulantSet::uniform_symmetric();
    let mut total = INV_SQRT_2PI * (-0.5 * x * x).exp();
    let nf = n as f64;
    for nu in (2..=order).step_by(2) {
        total += q_nu(nu, x, &cumulants)? / nf.powf(nu as f64 / 2.0);
    }
    Ok(total)
}

/// Density of the unnormalized sum, `n^{-1/2} phi_n(x / sqrt n)`.
pub fn scaled_density(n: usize, x: f64, order: usize) -> Result<f64> {
    let s = (n as f64).sqrt();
    Ok(edgeworth_density(n, x / s, order)? / s)
}

/// Coefficients `A = 3 Gamma_4`, `C = -15 Gamma_6 + (105/2) Gamma_4^2` and
/// `E = -6 Gamma_4` of the expanded sum density.
pub fn expansion_constants() -> (f64, f64, f64) {
    let c = CumulantSet::uniform_symmetric();
    let (g4, g6) = (c.big_gamma(4), c.big_gamma(6));
    (3.0 * g4, -15.0 * g6 + 52.5 * g4 * g4, -6.0 * g4)
}

/// Expanded polynomial form of the sum density for `|x| = O(1)`:
/// `(2 pi n)^{-1/2} [1 + A/n - x^2/2n + C/n^2 - A x^2/2n^2 + E x^2/n^2 + x^4/8n^2]`.
pub fn scaled_density_expanded(n: usize, x: f64) -> f64 {
    let (a, c, e) = expansion_constants();
    let nf = n as f64;
    let x2 = x * x;
    let bracket = 1.0 + a / nf - x2 / (2.0 * nf) + c / (nf * nf) - a * x2 / (2.0 * nf * nf)
        + e * x2 / (nf * nf)
        + x2 * x2 / (8.0 * nf * nf);
    bracket * INV_SQRT_2PI / nf.sqrt()
}
