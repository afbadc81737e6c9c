//! Expectations of functions of a few faces of balanced dice on
//! `[-sqrt 3, sqrt 3]`, as uniform expectations reweighted by correction
//! factors.

use serde::{Deserialize, Serialize};

use super::correction::{CorrectionFactor, CorrectionOrder, DensityBackend, DirectCorrection};
use crate::quadrature::{integrate_cube, integrate_cube_by_orderings, GaussLegendre, DEFAULT_BUDGET};
use crate::Result;

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Which faces of which dice the integrand reads. Arguments are passed to
/// the integrand in the order listed in the variant name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FaceLayout {
    /// `f(a_1)`, weight `p_{n-1}(v_1)`.
    A1,
    /// `f(a_1, a_2)`, weight `p_{n-2}(v_1 + v_2)`.
    A2,
    /// `f(a_1, a_2, a_3)`, weight `p_{n-3}(v_1 + v_2 + v_3)`.
    A3,
    /// `f(a_1, ..., a_4)`, weight `p_{n-4}(v_1 + ... + v_4)`.
    A4,
    /// `f(a_1, b_1)`, weight `p_{n-1}(v_1) p_{n-1}(v_2)`.
    A1B1,
    /// `f(a_1, a_2, b_1)`, weight `p_{n-2}(v_1 + v_2) p_{n-1}(v_3)`.
    A2B1,
    /// `f(a_1, a_2, b_1, b_2)`, weight `p_{n-2}(v_1 + v_2) p_{n-2}(v_3 + v_4)`.
    A2B2,
}

impl FaceLayout {
    pub fn arity(&self) -> usize {
        match self {
            Self::A1 => 1,
            Self::A2 | Self::A1B1 => 2,
            Self::A3 | Self::A2B1 => 3,
            Self::A4 | Self::A2B2 => 4,
        }
    }

    /// Free-face counts `k` of the factors and the coordinate ranges they
    /// are evaluated on.
    fn factors(&self) -> &'static [(usize, usize, usize)] {
        match self {
            Self::A1 => &[(1, 0, 1)],
            Self::A2 => &[(2, 0, 2)],
            Self::A3 => &[(3, 0, 3)],
            Self::A4 => &[(4, 0, 4)],
            Self::A1B1 => &[(1, 0, 1), (1, 1, 2)],
            Self::A2B1 => &[(2, 0, 2), (1, 2, 3)],
            Self::A2B2 => &[(2, 0, 2), (2, 2, 4)],
        }
    }
}

/// Correction factors used as weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Weights {
    /// Closed forms at the given order, lowered to first order for `k >= 3`.
    Closed(CorrectionOrder),
    /// Direct density ratios.
    Direct(DensityBackend),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalOptions {
    pub weights: Weights,
    /// Nodes per axis; `None` picks 64 (32 at arity 4) for the plain tensor
    /// rule and 16 when splitting along diagonals.
    pub nodes: Option<usize>,
    /// Integrate each ordering `v_{s(1)} <= ... <= v_{s(k)}` separately, so
    /// that integrands built from `max`/`min` are smooth on every piece.
    pub split_diagonals: bool,
    pub budget: u64,
}

impl Default for ConditionalOptions {
    fn default() -> Self {
        Self {
            weights: Weights::Closed(CorrectionOrder::Second),
            nodes: None,
            split_diagonals: true,
            budget: DEFAULT_BUDGET,
        }
    }
}

enum Factor {
    Closed(CorrectionFactor),
    Direct(DirectCorrection),
}

impl Factor {
    fn eval(&self, x: f64) -> f64 {
        match self {
            Self::Closed(c) => c.eval(x),
            Self::Direct(d) => d.eval(x),
        }
    }
}

/// `E[f(faces)]` for balanced dice with `n` faces, by quadrature of
/// `f(v) * weight(v)` against iid uniform `v`.
pub fn conditional_expect<F: Fn(&[f64]) -> f64>(
    f: F,
    layout: FaceLayout,
    n: usize,
    options: &ConditionalOptions,
) -> Result<f64> {
    let k = layout.arity();
    let mut factors = Vec::new();
    for &(kk, lo, hi) in layout.factors() {
        let factor = match options.weights {
            Weights::Closed(order) => {
                Factor::Closed(CorrectionFactor::new(n, kk, order.min(CorrectionOrder::best_for(kk)))?)
            }
            Weights::Direct(backend) => Factor::Direct(DirectCorrection::new(n, kk, backend)?),
        };
        factors.push((factor, lo, hi));
    }
    let integrand = |v: &[f64]| {
        let w: f64 = factors
            .iter()
            .map(|(p, lo, hi)| p.eval(v[*lo..*hi].iter().sum()))
            .product();
        f(v) * w
    };
    let nodes = options.nodes.unwrap_or(match (options.split_diagonals, k) {
        (true, _) => 16,
        (false, 4) => 32,
        (false, _) => 64,
    });
    let rule = GaussLegendre::new(nodes);
    let integral = if options.split_diagonals {
        integrate_cube_by_orderings(&rule, k, -SQRT3, SQRT3, options.budget, integrand)?
    } else {
        integrate_cube(&rule, k, -SQRT3, SQRT3, options.budget, integrand)?
    };
    Ok(integral / (2.0 * SQRT3).powi(k as i32))
}

/// One row of the table of uniform expectations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimpleIntegral {
    pub label: String,
    pub exact_form: String,
    pub exact: f64,
    pub numeric: f64,
    pub abs_error: f64,
    /// `abs_error <= 1e-10`.
    pub pass: bool,
}

type Integrand = fn(&[f64]) -> f64;

fn uniform_mean(k: usize, f: Integrand) -> f64 {
    let rule = GaussLegendre::new(12);
    integrate_cube_by_orderings(&rule, k, -SQRT3, SQRT3, DEFAULT_BUDGET, f).expect("small rule")
        / (2.0 * SQRT3).powi(k as i32)
}

/// Expectations of low-degree polynomials in iid uniforms `V_1, V_2, V_3`
/// on `[-sqrt 3, sqrt 3]` and in `max{V_1, V_2}`, `max{V_1, V_3}`, each
/// recomputed by split-domain quadrature.
pub fn simple_integrals_table() -> Vec<SimpleIntegral> {
    let r3 = SQRT3;
    let rows: Vec<(&str, &str, f64, usize, Integrand)> = vec![
        ("E[V1^k], k odd (k = 1, 3, 5)", "0", 0.0, 1, |v| v[0] + v[0].powi(3) + v[0].powi(5)),
        ("E[V1^2]", "1", 1.0, 1, |v| v[0].powi(2)),
        ("E[V1^4]", "9/5", 9.0 / 5.0, 1, |v| v[0].powi(4)),
        ("E[V1^6]", "27/7", 27.0 / 7.0, 1, |v| v[0].powi(6)),
        ("E[max(V1,V2)]", "sqrt3/3", r3 / 3.0, 2, |v| v[0].max(v[1])),
        ("E[max(V1,V2)^2]", "1", 1.0, 2, |v| v[0].max(v[1]).powi(2)),
        ("E[max(V1,V2) V1]", "1/2", 0.5, 2, |v| v[0].max(v[1]) * v[0]),
        ("E[max(V1,V2) V1^2]", "2 sqrt3/5", 2.0 * r3 / 5.0, 2, |v| v[0].max(v[1]) * v[0].powi(2)),
        ("E[max(V1,V2) V1^3]", "9/10", 0.9, 2, |v| v[0].max(v[1]) * v[0].powi(3)),
        ("E[max(V1,V2) V1^4]", "27 sqrt3/35", 27.0 * r3 / 35.0, 2, |v| v[0].max(v[1]) * v[0].powi(4)),
        ("E[max(V1,V2) V1 V2]", "-sqrt3/5", -r3 / 5.0, 2, |v| v[0].max(v[1]) * v[0] * v[1]),
        ("E[max(V1,V2) V1^2 V2]", "1/2", 0.5, 2, |v| v[0].max(v[1]) * v[0].powi(2) * v[1]),
        ("E[max(V1,V2) V1^2 V2^2]", "3 sqrt3/7", 3.0 * r3 / 7.0, 2, |v| {
            v[0].max(v[1]) * v[0].powi(2) * v[1].powi(2)
        }),
        ("E[max(V1,V2) max(V1,V3)]", "3/5", 0.6, 3, |v| v[0].max(v[1]) * v[0].max(v[2])),
        ("E[max(V1,V2) max(V1,V3) V1^2]", "33/35", 33.0 / 35.0, 3, |v| {
            v[0].max(v[1]) * v[0].max(v[2]) * v[0].powi(2)
        }),
        ("E[max(V1,V2) max(V1,V3) V2^2]", "23/35", 23.0 / 35.0, 3, |v| {
            v[0].max(v[1]) * v[0].max(v[2]) * v[1].powi(2)
        }),
        ("E[max(V1,V2) max(V1,V3) V2 V3]", "13/35", 13.0 / 35.0, 3, |v| {
            v[0].max(v[1]) * v[0].max(v[2]) * v[1] * v[2]
        }),
    ];
    rows.into_iter()
        .map(|(label, form, exact, k, f)| {
            let numeric = uniform_mean(k, f);
            let abs_error = (numeric - exact).abs();
            SimpleIntegral {
                label: label.to_string(),
                exact_form: form.to_string(),
                exact,
                numeric,
                abs_error,
                pass: abs_error <= 1e-10,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn closed() -> ConditionalOptions {
        ConditionalOptions::default()
    }

    #[test]
    fn table_rows_all_pass() {
        let rows = simple_integrals_table();
        assert_eq!(rows.len(), 17);
        for r in &rows {
            assert!(r.pass, "{}: {} vs {}", r.label, r.numeric, r.exact);
        }
    }

    #[test]
    fn unit_function_and_parity() {
        for n in [10, 50, 400] {
            let one = conditional_expect(|_| 1.0, FaceLayout::A1, n, &closed()).unwrap();
            assert!((one - 1.0).abs() < 1e-12, "n={n}: {one}");
            let odd = conditional_expect(|v| v[0], FaceLayout::A1, n, &closed()).unwrap();
            assert!(odd.abs() < 1e-10);
        }
        let direct = ConditionalOptions {
            weights: Weights::Direct(DensityBackend::Exact),
            ..closed()
        };
        let one = conditional_expect(|_| 1.0, FaceLayout::A1, 30, &direct).unwrap();
        assert!((one - 1.0).abs() < 1e-9);
    }

    #[test]
    fn calculus_spot_values() {
        let n = 50usize;
        let nf = n as f64;
        let r3 = SQRT3;
        let a1sq = conditional_expect(|v| v[0] * v[0], FaceLayout::A1, n, &closed()).unwrap();
        assert!((a1sq - (1.0 - 2.0 / (5.0 * nf) - 18.0 / (175.0 * nf * nf))).abs() < 1e-4);
        let a1_4 = conditional_expect(|v| v[0].powi(4), FaceLayout::A1, n, &closed()).unwrap();
        assert!((a1_4 - 1.8 * (1.0 - 4.0 / (7.0 * nf))).abs() < 5.0 / (nf * nf));
        let max_ab = conditional_expect(|v| v[0].max(v[1]), FaceLayout::A1B1, n, &closed()).unwrap();
        let expected = r3 / 3.0 * (1.0 - 1.0 / (5.0 * nf) - 2.0 / (25.0 * nf * nf));
        assert!((max_ab - expected).abs() < 1e-4);
        let a12sq = conditional_expect(|v| (v[0] * v[1]).powi(2), FaceLayout::A2, n, &closed()).unwrap();
        assert!((a12sq - (1.0 - 4.0 / (5.0 * nf) + 48.0 / (175.0 * nf * nf))).abs() < 1e-4);
        let n = 100usize;
        let nf = n as f64;
        let max_aa = conditional_expect(|v| v[0].max(v[1]), FaceLayout::A2, n, &closed()).unwrap();
        assert!((max_aa - r3 / 3.0 * (1.0 + 2.0 / (5.0 * nf))).abs() < 5.0 / (nf * nf));
        let m4 = conditional_expect(
            |v| v[0].max(v[1]) * v[2].max(v[3]),
            FaceLayout::A4,
            n,
            &closed(),
        )
        .unwrap();
        assert!((m4 - (1.0 - 11.0 / (5.0 * nf)) / 3.0).abs() < 5.0 / (nf * nf));
        let mixed = conditional_expect(
            |v| v[0].max(v[2]) * v[1].max(v[3]),
            FaceLayout::A2B2,
            n,
            &closed(),
        )
        .unwrap();
        assert!((mixed - (1.0 - 19.0 / (10.0 * nf) - 31.0 / (50.0 * nf * nf)) / 3.0).abs() < 1e-5);
        let a2b1 = conditional_expect(|v| v[0] * v[0] * v[1].max(v[2]), FaceLayout::A2B1, n, &closed()).unwrap();
        assert!((a2b1 - r3 / 3.0 * (1.0 - 3.0 / (5.0 * nf) - 4.0 / (175.0 * nf * nf))).abs() < 1e-5);
    }
}
