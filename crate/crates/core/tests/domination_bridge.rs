//! Bridge jump-count laws against conditioned Poisson laws.
//!
//! For `f(y) = 1/(π(1+y²))` the n-fold convolution is Cauchy with scale n,
//! so the bridge count law is explicit:
//! `P(N = n | B = c) ∝ λⁿ/n! · n/(n² + c²)`.

use std::collections::BTreeMap;

use bridgelab::domination::{
    bridge_count_report, dominance_check, poisson_plus_mean, CountDistribution, SamplerChoice, Verdict,
};
use bridgelab::jump_models::JumpDensity;
use bridgelab::samplers::ChainConfig;

fn cauchy_bridge_count_law(lambda: f64, c: f64) -> CountDistribution {
    let mut weights = BTreeMap::new();
    let mut term = 1.0;
    for n in 1..=60usize {
        term *= lambda / n as f64;
        weights.insert(n, term * n as f64 / ((n * n) as f64 + c * c));
    }
    let z: f64 = weights.values().sum();
    CountDistribution::exact(weights.into_iter().map(|(k, w)| (k, w / z)).collect()).unwrap()
}

#[test]
fn exact_cauchy_law_mean() {
    let law = cauchy_bridge_count_law(1.0, 1.0);
    assert!((law.mean() - 1.442_635_296).abs() < 1e-9, "{}", law.mean());
    // Below the doubled lower bound 1/(1 - e^{-1}) but above k/(1 - e^{-k}), k = 1/2.
    assert!(law.mean() < poisson_plus_mean(1.0).unwrap());
    assert!(law.mean() > poisson_plus_mean(0.5).unwrap());
    assert!(law.mean() < poisson_plus_mean(2.0).unwrap());
}

#[test]
fn exact_cauchy_law_against_poisson_plus() {
    for c in [0.5, 1.0, 5.0] {
        let law = cauchy_bridge_count_law(1.0, c);
        let k = CountDistribution::poisson_plus(0.5).unwrap();
        let big_k = CountDistribution::poisson_plus(2.0).unwrap();
        assert_eq!(dominance_check(&law, &k).unwrap().verdict, Verdict::Dominates, "c={c}");
        assert_eq!(dominance_check(&big_k, &law).unwrap().verdict, Verdict::Dominates, "c={c}");
    }
    // The doubled lower law Poi⁺_1 is not dominated at c = 1: the exact
    // tail P(N ≥ 2) = 0.343 is below Poi⁺_1(N ≥ 2) = 0.418.
    let law = cauchy_bridge_count_law(1.0, 1.0);
    let lower = CountDistribution::poisson_plus(1.0).unwrap();
    let r = dominance_check(&law, &lower).unwrap();
    assert_eq!(r.verdict, Verdict::Violated);
    assert_eq!(r.worst_j, Some(2));
    assert!((law.tail(2) - 0.3432).abs() < 5e-4);
}

#[test]
fn chain_matches_exact_cauchy_law_and_verdicts_agree_across_heights() {
    let model = JumpDensity::cauchy(2.0, 1.0).unwrap();
    let bounds = model.estimate_bounds(50.0, 2001).unwrap();
    let mut verdicts = Vec::new();
    for (i, c) in [0.5, 1.0, 5.0].into_iter().enumerate() {
        let config = ChainConfig { seed: 40 + i as u64, ..ChainConfig::default() };
        let report = bridge_count_report(&model, c, &SamplerChoice::Mcmc { config }, &bounds, 20_000).unwrap();
        let exact = cauchy_bridge_count_law(1.0, c);
        let tv: f64 = 0.5
            * (1..=60)
                .map(|n| (report.counts.prob(n) - exact.prob(n)).abs())
                .sum::<f64>();
        assert!(tv < 0.02, "c={c}: tv {tv}");
        assert!((report.mean_count - exact.mean()).abs() < 4.0 * report.mean_count_se, "c={c}");
        assert!(report.undoubled.dominates_lower && report.undoubled.dominated_by_upper, "c={c}");
        assert!(report.undoubled.mean_in_interval);
        verdicts.push((report.undoubled.dominates_lower, report.undoubled.dominated_by_upper));
    }
    assert!(verdicts.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn tails_csv_shape() {
    let model = JumpDensity::cauchy(2.0, 1.0).unwrap();
    let bounds = model.estimate_bounds(50.0, 201).unwrap();
    let config = ChainConfig { seed: 9, ..ChainConfig::default() };
    let report = bridge_count_report(&model, 1.0, &SamplerChoice::Mcmc { config }, &bounds, 500).unwrap();
    let csv = report.tails_csv().unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("j,empirical_tail,poi_plus_upper_tail,poi_plus_lower_tail"));
    assert_eq!(lines.next().unwrap().split(',').nth(1), Some("1"));
    assert_eq!(csv.lines().count(), 1 + report.counts.max_support() + 2);
}

#[test]
fn laplace_has_no_finite_upper_constant() {
    let model = JumpDensity::laplace(1.0).unwrap();
    let bounds = model.estimate_bounds(20.0, 401).unwrap();
    let config = ChainConfig { seed: 10, ..ChainConfig::default() };
    let report = bridge_count_report(&model, 1.0, &SamplerChoice::Mcmc { config }, &bounds, 2000).unwrap();
    assert!(report.doubled.upper.is_none());
    assert!(report.doubled.mean_interval.1.is_infinite());
    assert!(report.tails_csv().unwrap().lines().nth(1).unwrap().contains(",,"));
    assert!(report.gaussian_product_form.is_none());
}

#[test]
fn gaussian_reports_both_lower_forms() {
    let model = JumpDensity::gauss(1.0).unwrap();
    let bounds = model.estimate_bounds(6.0, 241).unwrap();
    let config = ChainConfig { seed: 11, ..ChainConfig::default() };
    let report = bridge_count_report(&model, 1.0, &SamplerChoice::Mcmc { config }, &bounds, 1000).unwrap();
    let two_k = 2f64.sqrt();
    assert!((report.doubled.mean_interval.0 - 1.86847).abs() < 1e-4, "{:?}", report.doubled.mean_interval);
    assert!((report.gaussian_product_form.unwrap() - two_k * (1.0 - (-two_k).exp())).abs() < 1e-9);
    assert!((report.gaussian_product_form.unwrap() - 1.07039).abs() < 1e-4);
}
