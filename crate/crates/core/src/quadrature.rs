//! Gauss-Legendre rules in one and several dimensions.

use crate::{Error, Result};

/// Default evaluation cap for tensor rules (`64^4`).
pub const DEFAULT_BUDGET: u64 = 64 * 64 * 64 * 64;

/// Gauss-Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// `m`-point rule; nodes by Newton iteration on `P_m`.
    pub fn new(m: usize) -> Self {
        assert!(m >= 1, "a quadrature rule needs at least one node");
        let mut nodes = vec![0.0; m];
        let mut weights = vec![0.0; m];
        let mf = m as f64;
        for i in 0..m.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (mf + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(m, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(m, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[m - 1 - i] = x;
            weights[i] = w;
            weights[m - 1 - i] = w;
        }
        if m % 2 == 1 {
            nodes[m / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let (c, h) = ((a + b) / 2.0, (b - a) / 2.0);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (c + h * x, h * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }

    /// Composite rule over the consecutive pieces of `breaks`.
    pub fn integrate_pieces<F: FnMut(f64) -> f64>(&self, breaks: &[f64], mut f: F) -> f64 {
        breaks
            .windows(2)
            .map(|w| self.integrate(w[0], w[1], &mut f))
            .sum()
    }
}

fn legendre_with_derivative(m: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=m {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if m == 0 { 1.0 } else { p1 };
    let d = m as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

fn check_budget(m: usize, k: usize, budget: u64) -> Result<()> {
    let needed = (m as u64).checked_pow(k as u32).unwrap_or(u64::MAX);
    if needed > budget {
        return Err(Error::QuadratureBudget { needed, budget });
    }
    Ok(())
}

/// Tensor rule over the cube `[a, b]^k`.
pub fn integrate_cube<F: FnMut(&[f64]) -> f64>(
    rule: &GaussLegendre,
    k: usize,
    a: f64,
    b: f64,
    budget: u64,
    mut f: F,
) -> Result<f64> {
    check_budget(rule.len(), k, budget)?;
    let pts: Vec<(f64, f64)> = rule.mapped(a, b).collect();
    let mut x = vec![0.0; k];
    let mut total = 0.0;
    let mut idx = vec![0usize; k];
    let m = pts.len();
    if k == 0 {
        return Ok(f(&x));
    }
    loop {
        let mut w = 1.0;
        for (d, &i) in idx.iter().enumerate() {
            x[d] = pts[i].0;
            w *= pts[i].1;
        }
        total += w * f(&x);
        let mut d = 0;
        loop {
            idx[d] += 1;
            if idx[d] < m {
                break;
            }
            idx[d] = 0;
            d += 1;
            if d == k {
                return Ok(total);
            }
        }
    }
}

/// Integral of `f` over `[a, b]^k` computed as the sum, over all `k!`
/// orderings, of integrals over the ordered simplex `a <= x_1 <= ... <= x_k <= b`.
///
/// Integrands built from `max`/`min` of coordinates are polynomial on each
/// simplex, so a modest rule integrates them exactly.
pub fn integrate_cube_by_orderings<F: FnMut(&[f64]) -> f64>(
    rule: &GaussLegendre,
    k: usize,
    a: f64,
    b: f64,
    budget: u64,
    mut f: F,
) -> Result<f64> {
    let perms = permutations(k);
    let needed = (rule.len() as u64)
        .checked_pow(k as u32)
        .and_then(|v| v.checked_mul(perms.len() as u64))
        .unwrap_or(u64::MAX);
    if needed > budget {
        return Err(Error::QuadratureBudget { needed, budget });
    }
    let mut y = vec![0.0; k];
    let mut x = vec![0.0; k];
    let mut g = |sorted: &[f64]| {
        perms
            .iter()
            .map(|p| {
                for (i, &pi) in p.iter().enumerate() {
                    x[i] = sorted[pi];
                }
                f(&x)
            })
            .sum::<f64>()
    };
    Ok(ordered(rule, k, a, b, &mut y, &mut g))
}

/// Nested rule on `a <= y_0 <= ... <= y_{k-1} <= upper`, filling from the top.
fn ordered<G: FnMut(&[f64]) -> f64>(
    rule: &GaussLegendre,
    level: usize,
    a: f64,
    upper: f64,
    y: &mut [f64],
    g: &mut G,
) -> f64 {
    if level == 0 {
        return g(y);
    }
    let mut total = 0.0;
    for (t, w) in rule.mapped(a, upper) {
        y[level - 1] = t;
        total += w * ordered(rule, level - 1, a, t, y, g);
    }
    total
}

/// All permutations of `0..k` in lexicographic order.
pub fn permutations(k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        let Some(i) = (1..k).rev().find(|&i| cur[i - 1] < cur[i]) else {
            return out;
        };
        let j = (i..k).rev().find(|&j| cur[j] > cur[i - 1]).unwrap();
        cur.swap(i - 1, j);
        cur[i..].reverse();
    }
}
