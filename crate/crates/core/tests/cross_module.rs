//! Checks that tie several modules together: sampler against correction
//! factors, quadrature against Monte Carlo, interval invariance of the
//! tournament statistics, and the decay report on random pairs.

use dicelab::charfn::{check_decay_box, conditional_clt_compare, ConditioningMode, GridSpec};
use dicelab::dice::{beats_fast, rescale, sample_balanced, IntervalSpec};
use dicelab::edgeworth::{conditional_expect, ConditionalOptions, DensityBackend, DirectCorrection, FaceLayout, Weights};
use dicelab::gstats::{moments_quadrature, sum_g};
use dicelab::mc::{run_parallel, Accumulator, RngStream};
use dicelab::tournaments::{estimate_tournament3, estimate_tournament4, identity_report};

const SQRT3: f64 = 1.732_050_807_568_877_2;

#[test]
fn three_face_marginal_matches_exact_factor() {
    // the first face of a balanced 3-face die has density p_2(x) / (2 sqrt 3)
    let n = 3;
    let spec = IntervalSpec::symmetric(n).unwrap();
    let factor = DirectCorrection::new(n, 1, DensityBackend::Exact).unwrap();
    let bins = 12;
    let width = 2.0 * SQRT3 / bins as f64;
    let draws = 400_000u64;
    let counts: Vec<u64> = run_parallel(draws, 2, 77, |rng, _, s: &mut Vec<u64>| {
        if s.is_empty() {
            s.resize(bins, 0);
        }
        let a = sample_balanced(&spec, rng, 10_000)?;
        let i = (((a.faces()[0] + SQRT3) / width) as usize).min(bins - 1);
        s[i] += 1;
        Ok(())
    })
    .unwrap();
    let rule = dicelab::quadrature::GaussLegendre::new(16);
    for (i, &c) in counts.iter().enumerate() {
        let lo = -SQRT3 + i as f64 * width;
        // p_2 has a kink at 0, which is a bin edge
        let expected = rule.integrate(lo, lo + width, |x| factor.eval(x)) / (2.0 * SQRT3);
        let p = c as f64 / draws as f64;
        let se = (expected * (1.0 - expected) / draws as f64).sqrt();
        assert!((p - expected).abs() < 4.5 * se, "bin {i}: {p} vs {expected}");
    }
}

#[test]
fn conditional_expectation_matches_sampling() {
    let n = 12;
    let spec = IntervalSpec::symmetric(n).unwrap();
    let exact = ConditionalOptions {
        weights: Weights::Direct(DensityBackend::Exact),
        ..ConditionalOptions::default()
    };
    let e_prod = conditional_expect(|v| v[0] * v[1], FaceLayout::A2, n, &exact).unwrap();
    let e_max = conditional_expect(|v| v[0].max(v[1]), FaceLayout::A1B1, n, &exact).unwrap();
    // a_1 a_2 summed over ordered pairs is (sum a)^2 - sum a^2 = -sum a^2
    let e_sq = conditional_expect(|v| v[0] * v[0], FaceLayout::A1, n, &exact).unwrap();
    assert!((e_prod + e_sq / (n as f64 - 1.0)).abs() < 1e-8);

    let (prod, mx): (Accumulator, Accumulator) =
        run_parallel(200_000, 2, 78, |rng, _, s: &mut (Accumulator, Accumulator)| {
            let a = sample_balanced(&spec, rng, 10_000)?;
            let b = sample_balanced(&spec, rng, 10_000)?;
            s.0.push(a.faces()[0] * a.faces()[1]);
            s.1.push(a.faces()[0].max(b.faces()[0]));
            Ok(())
        })
        .unwrap();
    assert!((prod.mean() - e_prod).abs() < 4.0 * prod.se(), "{} vs {e_prod}", prod.mean());
    assert!((mx.mean() - e_max).abs() < 4.0 * mx.se(), "{} vs {e_max}", mx.mean());
}

#[test]
fn statistics_do_not_depend_on_the_interval() {
    let n = 41;
    let sym = IntervalSpec::symmetric(n).unwrap();
    let wide = IntervalSpec::wide(n).unwrap();
    let unit = IntervalSpec::unit(n).unwrap();
    let mut rng = RngStream::new(79, 0).rng();
    for _ in 0..20 {
        let a = sample_balanced(&sym, &mut rng, 10_000).unwrap();
        let b = sample_balanced(&sym, &mut rng, 10_000).unwrap();
        let m = beats_fast(&a, &b).unwrap().margin;
        let g = sum_g(&a, &b).unwrap();
        let base = moments_quadrature(&a, &b).unwrap();
        for target in [wide, unit] {
            let (a2, b2) = (rescale(&a, &target).unwrap(), rescale(&b, &target).unwrap());
            assert_eq!(beats_fast(&a2, &b2).unwrap().margin, m);
            assert!((sum_g(&a2, &b2).unwrap() - g).abs() < 1e-8);
            let moved = moments_quadrature(&a2, &b2).unwrap();
            assert!((moved.var_a - base.var_a).abs() < 1e-9 * base.var_a.max(1.0));
            assert!((moved.rho_cond - base.rho_cond).abs() < 1e-9);
        }
    }
}

#[test]
fn clt_comparison_is_interval_free() {
    let n = 51;
    let sym = IntervalSpec::symmetric(n).unwrap();
    let wide = IntervalSpec::wide(n).unwrap();
    let mut rng = RngStream::new(80, 0).rng();
    let a = sample_balanced(&sym, &mut rng, 10_000).unwrap();
    let b = sample_balanced(&sym, &mut rng, 10_000).unwrap();
    let r1 = conditional_clt_compare(&a, &b, 20_000, 5, 2, ConditioningMode::Exact).unwrap();
    let (a2, b2) = (rescale(&a, &wide).unwrap(), rescale(&b, &wide).unwrap());
    let r2 = conditional_clt_compare(&a2, &b2, 20_000, 6, 2, ConditioningMode::Exact).unwrap();
    assert!((r1.rhs - r2.rhs).abs() < 1e-9);
    assert!((r1.lhs - r2.lhs).abs() < 4.0 * (r1.se + r2.se));
}

#[test]
fn decay_report_on_random_pairs() {
    let n = 101;
    let spec = IntervalSpec::wide(n).unwrap();
    let mut rng = RngStream::new(81, 0).rng();
    let grid = GridSpec::default();
    let mut violating = 0;
    for _ in 0..20 {
        let a = sample_balanced(&spec, &mut rng, 100_000).unwrap();
        let b = sample_balanced(&spec, &mut rng, 100_000).unwrap();
        let r = check_decay_box(&a, &b, &grid).unwrap();
        assert_eq!(r.points + r.excluded, 1000);
        assert!(r.max_power_below <= r.power_bound);
        if r.violated() {
            violating += 1;
        }
    }
    assert!(violating as f64 / 20.0 <= 0.1, "{violating} of 20 pairs exceed the threshold");
}

#[test]
fn identities_hold_between_independent_estimates() {
    let spec = IntervalSpec::symmetric(51).unwrap();
    let e3 = estimate_tournament3(&spec, 40_000, 82, 2).unwrap();
    let e4 = estimate_tournament4(&spec, 40_000, 83, 2).unwrap();
    let r = identity_report(&e3, &e4).unwrap();
    assert!(!r.transitive.flagged, "{r:?}");
    assert!(!r.cycle.flagged, "{r:?}");
}
