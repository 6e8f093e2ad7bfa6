//! Stochastic-dominance tests of bridge jump-count laws against Poisson laws
//! conditioned to be positive.
//!
//! `p ⪰ q` means every tail of `p` is at least the matching tail of `q`:
//! `p(N ≥ j) ≥ q(N ≥ j)` for all `j ≥ 1`. On empirical laws each tail is
//! compared with a binomial 3σ band.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jump_models::{ConvolutionBounds, Family, JumpDensity};
use crate::path::JumpPath;
use crate::samplers::{sample_bridge_mcmc, sample_bridge_rejection_batch, ChainConfig};
use crate::stats::MeanVar;

/// Width of the per-tail tolerance band, in binomial standard deviations.
pub const TAIL_SIGMAS: f64 = 3.0;

/// Slack allowed between two exact laws (rounding only).
const EXACT_SLACK: f64 = 1e-12;

/// Exact laws are tabulated until the remaining tail drops below this.
const EXACT_TAIL_CUTOFF: f64 = 1e-17;

fn check_rate(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("Poisson parameter must be positive and finite, got {lambda}")))
    }
}

fn ln_poisson_plus(lambda: f64, n: usize) -> f64 {
    // ln(e^{-λ} λ^n / n! / (1 - e^{-λ})) = n ln λ - ln n! - ln(e^λ - 1).
    let ln_fact = statrs::function::factorial::ln_factorial(n as u64);
    n as f64 * lambda.ln() - ln_fact - lambda.exp_m1().ln()
}

/// `Poi⁺_λ(n) = e^{-λ} λⁿ / n! / (1 - e^{-λ})` for `n ≥ 1`.
pub fn poisson_plus_pmf(lambda: f64, n: usize) -> Result<f64> {
    check_rate(lambda)?;
    if n == 0 {
        return Err(Error::Domain("Poi⁺ is supported on n ≥ 1".into()));
    }
    Ok(ln_poisson_plus(lambda, n).exp())
}

/// `E[N] = λ / (1 - e^{-λ})` under `Poi⁺_λ`.
pub fn poisson_plus_mean(lambda: f64) -> Result<f64> {
    check_rate(lambda)?;
    Ok(lambda / (-(-lambda).exp_m1()))
}

/// `Poi⁺_λ(N ≥ j)`, summed directly for accuracy in the far tail.
pub fn poisson_plus_tail(lambda: f64, j: usize) -> Result<f64> {
    check_rate(lambda)?;
    if j <= 1 {
        return Ok(1.0);
    }
    let mut term = ln_poisson_plus(lambda, j).exp();
    let mut sum = 0.0;
    let mut n = j;
    while term > 0.0 && (term > sum * 1e-18 || (n as f64) < lambda) {
        sum += term;
        n += 1;
        term *= lambda / n as f64;
    }
    Ok(sum.min(1.0))
}

/// A law on `{1, 2, …}`, either empirical (`n_samples` set) or exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountDistribution {
    pub pmf: BTreeMap<usize, f64>,
    pub n_samples: Option<u64>,
}

impl CountDistribution {
    /// Empirical law of observed counts.
    pub fn from_counts(counts: &[usize]) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::Domain("empty count sample".into()));
        }
        let mut tally: BTreeMap<usize, u64> = BTreeMap::new();
        for &c in counts {
            *tally.entry(c).or_default() += 1;
        }
        let n = counts.len() as f64;
        let pmf = tally.into_iter().map(|(k, v)| (k, v as f64 / n)).collect();
        Ok(Self { pmf, n_samples: Some(counts.len() as u64) })
    }

    /// An exact law given by its probabilities on `1, 2, …`; the remaining
    /// mass is ignored.
    pub fn exact(pmf: BTreeMap<usize, f64>) -> Result<Self> {
        if pmf.is_empty() {
            return Err(Error::Domain("empty law".into()));
        }
        Ok(Self { pmf, n_samples: None })
    }

    /// `Poi⁺_λ`, tabulated until the tail is negligible.
    pub fn poisson_plus(lambda: f64) -> Result<Self> {
        check_rate(lambda)?;
        let mut pmf = BTreeMap::new();
        let mut n = 1;
        loop {
            pmf.insert(n, poisson_plus_pmf(lambda, n)?);
            if n as f64 > lambda && poisson_plus_tail(lambda, n + 1)? < EXACT_TAIL_CUTOFF {
                break;
            }
            n += 1;
        }
        Self::exact(pmf)
    }

    pub fn is_empirical(&self) -> bool {
        self.n_samples.is_some()
    }

    pub fn prob(&self, n: usize) -> f64 {
        self.pmf.get(&n).copied().unwrap_or(0.0)
    }

    /// `P(N ≥ j)`.
    pub fn tail(&self, j: usize) -> f64 {
        self.pmf.range(j..).map(|(_, p)| p).sum::<f64>().min(1.0)
    }

    pub fn max_support(&self) -> usize {
        self.pmf.keys().next_back().copied().unwrap_or(0)
    }

    pub fn mean(&self) -> f64 {
        self.pmf.iter().map(|(&k, &p)| k as f64 * p).sum()
    }

    /// Binomial variance of the tail estimate, evaluated at tail level `t`;
    /// zero for exact laws.
    fn tail_variance(&self, t: f64) -> f64 {
        match self.n_samples {
            Some(n) => t * (1.0 - t) / n as f64,
            None => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    /// Every tail of `p` is at least the tail of `q`.
    Dominates,
    /// Some tail of `q` exceeds that of `p`, but within the tolerance band.
    Consistent,
    /// Some tail of `q` exceeds that of `p` beyond the tolerance band.
    Violated,
}

impl Verdict {
    /// True unless the dominance is statistically refuted.
    pub fn holds(self) -> bool {
        self != Verdict::Violated
    }
}

/// Outcome of testing `p ⪰ q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceResult {
    pub verdict: Verdict,
    /// `max_j (q(N ≥ j) - p(N ≥ j))⁺`.
    pub max_tail_violation: f64,
    /// Where the largest violation, measured in tolerance units, occurs.
    pub worst_j: Option<usize>,
    /// Largest violation divided by its standard deviation (∞ for exact laws).
    pub worst_sigmas: f64,
    pub j_max: usize,
    /// Sufficient ratio condition `q(j+1) p(j) ≤ q(j) p(j+1)` for all
    /// `j < j_max`; a secondary diagnostic, noisy on empirical laws.
    pub ratio_criterion: bool,
}

/// Tests `p ⪰ q` on the tails `j = 1..=j_max`, where `j_max` is the largest
/// count observed in an empirical argument plus 2 (exact laws contribute
/// their tabulated support).
pub fn dominance_check(p: &CountDistribution, q: &CountDistribution) -> Result<DominanceResult> {
    if q.pmf.is_empty() || p.pmf.is_empty() {
        return Err(Error::Domain("dominance check needs non-empty laws".into()));
    }
    if q.pmf.contains_key(&0) || p.pmf.contains_key(&0) {
        return Err(Error::Domain("count laws must be supported on n ≥ 1".into()));
    }
    let j_max = match (p.is_empirical(), q.is_empirical()) {
        (false, false) => p.max_support().max(q.max_support()),
        (true, true) => p.max_support().max(q.max_support()) + 2,
        (true, false) => p.max_support() + 2,
        (false, true) => q.max_support() + 2,
    };
    let mut max_violation: f64 = 0.0;
    let mut worst: Option<(usize, f64)> = None;
    let mut violated = false;
    for j in 1..=j_max {
        let (tp, tq) = (p.tail(j), q.tail(j));
        let gap = tq - tp;
        if gap <= EXACT_SLACK {
            continue;
        }
        max_violation = max_violation.max(gap);
        // The larger tail sets the band, so an unobserved tail is not
        // treated as known exactly.
        let level = tp.max(tq);
        let sd = (p.tail_variance(level) + q.tail_variance(level)).sqrt();
        let sigmas = if sd > 0.0 { gap / sd } else { f64::INFINITY };
        if sigmas > TAIL_SIGMAS {
            violated = true;
        }
        if worst.is_none_or(|(_, s)| sigmas > s) {
            worst = Some((j, sigmas));
        }
    }
    let ratio_criterion = (1..j_max).all(|j| {
        let lhs = q.prob(j + 1) * p.prob(j);
        let rhs = q.prob(j) * p.prob(j + 1);
        lhs <= rhs * (1.0 + 1e-12) + f64::MIN_POSITIVE
    });
    let verdict = if violated {
        Verdict::Violated
    } else if worst.is_some() {
        Verdict::Consistent
    } else {
        Verdict::Dominates
    };
    Ok(DominanceResult {
        verdict,
        max_tail_violation: max_violation,
        worst_j: worst.map(|w| w.0),
        worst_sigmas: worst.map_or(0.0, |w| w.1),
        j_max,
        ratio_criterion,
    })
}

/// Which bridge sampler feeds a count report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "method")]
pub enum SamplerChoice {
    Mcmc { config: ChainConfig },
    Rejection { epsilon: f64, budget: u64, seed: u64 },
}

/// Tail comparison of a bridge count law with `Poi⁺` laws at an upper and a
/// lower parameter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailComparison {
    /// Parameter of the dominating law (`+∞` when no finite bound exists).
    #[serde(serialize_with = "crate::jump_models::ser_maybe_inf")]
    pub upper_parameter: f64,
    pub lower_parameter: f64,
    pub dominated_by_upper: bool,
    pub dominates_lower: bool,
    pub upper: Option<DominanceResult>,
    pub lower: DominanceResult,
    /// Largest tail violation over both comparisons.
    pub max_tail_violation: f64,
    /// `[μ(lower), μ(upper)]` with `μ(a) = a / (1 - e^{-a})`.
    #[serde(serialize_with = "crate::jump_models::ser_pair_maybe_inf")]
    pub mean_interval: (f64, f64),
    /// Mean inside the interval up to a 3σ Monte Carlo margin.
    pub mean_in_interval: bool,
}

fn compare_with(
    counts: &CountDistribution,
    mean: f64,
    mean_se: f64,
    lower_parameter: f64,
    upper_parameter: f64,
) -> Result<TailComparison> {
    let lower = dominance_check(counts, &CountDistribution::poisson_plus(lower_parameter)?)?;
    let upper = if upper_parameter.is_finite() {
        Some(dominance_check(&CountDistribution::poisson_plus(upper_parameter)?, counts)?)
    } else {
        None
    };
    let lo = poisson_plus_mean(lower_parameter)?;
    let hi = if upper_parameter.is_finite() { poisson_plus_mean(upper_parameter)? } else { f64::INFINITY };
    let margin = 3.0 * mean_se;
    let max_tail_violation = lower.max_tail_violation.max(upper.as_ref().map_or(0.0, |u| u.max_tail_violation));
    Ok(TailComparison {
        upper_parameter,
        lower_parameter,
        dominated_by_upper: upper.as_ref().is_none_or(|u| u.verdict.holds()),
        dominates_lower: lower.verdict.holds(),
        upper,
        lower,
        max_tail_violation,
        mean_interval: (lo, hi),
        mean_in_interval: mean >= lo - margin && mean <= hi + margin,
    })
}

/// Bridge jump counts compared with `Poi⁺` laws built from the convolution
/// constants `k ≤ (ρ∗ρ)/ρ ≤ K`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BridgeCountReport {
    pub height: f64,
    pub n_samples: usize,
    pub mean_count: f64,
    pub mean_count_se: f64,
    pub counts: CountDistribution,
    pub bounds: ConvolutionBounds,
    /// Against `Poi⁺_{2K}` and `Poi⁺_{2k}`.
    pub doubled: TailComparison,
    /// Against `Poi⁺_K` and `Poi⁺_k`.
    pub undoubled: TailComparison,
    /// `2k (1 - e^{-2k})`, the product form some statements print in place of
    /// the mean bound `2k / (1 - e^{-2k})`. Reported for Gaussian jumps.
    pub gaussian_product_form: Option<f64>,
    /// Set when the sampler stopped early.
    pub partial: bool,
}

impl BridgeCountReport {
    /// `j,empirical_tail,poi_plus_upper_tail,poi_plus_lower_tail` for the
    /// doubled parameters; the upper column is empty without a finite `K`.
    pub fn tails_csv(&self) -> Result<String> {
        let mut out = String::from("j,empirical_tail,poi_plus_upper_tail,poi_plus_lower_tail\n");
        let j_max = self.counts.max_support() + 2;
        for j in 1..=j_max {
            let upper = if self.doubled.upper_parameter.is_finite() {
                poisson_plus_tail(self.doubled.upper_parameter, j)?.to_string()
            } else {
                String::new()
            };
            let lower = poisson_plus_tail(self.doubled.lower_parameter, j)?;
            writeln!(out, "{j},{},{upper},{lower}", self.counts.tail(j)).expect("writing to a String");
        }
        Ok(out)
    }
}

/// Draws `n` bridge paths of height `c` and compares their jump counts with
/// the conditioned Poisson laws implied by `bounds`.
pub fn bridge_count_report(
    model: &JumpDensity,
    c: f64,
    sampler: &SamplerChoice,
    bounds: &ConvolutionBounds,
    n: usize,
) -> Result<BridgeCountReport> {
    if c == 0.0 || !c.is_finite() {
        return Err(Error::InvalidParameter(format!("bridge height must be nonzero and finite, got {c}")));
    }
    if !(bounds.lower > 0.0) {
        return Err(Error::InvalidParameter("lower convolution constant must be positive".into()));
    }
    let (paths, partial): (Vec<JumpPath>, bool) = match sampler {
        SamplerChoice::Mcmc { config } => {
            let out = sample_bridge_mcmc(model, 0.0, c, model, config, n)?;
            (out.paths, out.partial)
        }
        SamplerChoice::Rejection { epsilon, budget, seed } => {
            (sample_bridge_rejection_batch(model, 0.0, c, *epsilon, n, *budget, *seed)?.paths, false)
        }
    };
    let raw: Vec<usize> = paths.iter().map(JumpPath::jump_count).collect();
    let counts = CountDistribution::from_counts(&raw)?;
    let mean: MeanVar = raw.iter().map(|&k| k as f64).collect();
    // Paths from one chain are correlated; the standard error uses chain means.
    let batch = match sampler {
        SamplerChoice::Mcmc { config } => config.samples_per_chain,
        SamplerChoice::Rejection { .. } => 1,
    };
    let mean_se = if batch > 1 && raw.len() >= 2 * batch {
        let means: MeanVar =
            raw.chunks(batch).map(|c| c.iter().sum::<usize>() as f64 / c.len() as f64).collect();
        means.std_error()
    } else {
        mean.std_error()
    };
    let (k, big_k) = (bounds.lower, bounds.upper);
    let gaussian_product_form = match model.family() {
        Family::Exp { beta, .. } if *beta == 2.0 => Some(2.0 * k * (-(-2.0 * k).exp_m1())),
        _ => None,
    };
    Ok(BridgeCountReport {
        height: c,
        n_samples: raw.len(),
        mean_count: mean.mean,
        mean_count_se: mean_se,
        doubled: compare_with(&counts, mean.mean, mean_se, 2.0 * k, 2.0 * big_k)?,
        undoubled: compare_with(&counts, mean.mean, mean_se, k, big_k)?,
        counts,
        bounds: bounds.clone(),
        gaussian_product_form,
        partial,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pmf_values() {
        let e = (-1.0f64).exp();
        assert!((poisson_plus_pmf(1.0, 1).unwrap() - e / (1.0 - e)).abs() < 1e-15);
        assert!((poisson_plus_pmf(1.0, 1).unwrap() - 0.5820).abs() < 5e-5);
        assert!(matches!(poisson_plus_pmf(1.0, 0), Err(Error::Domain(_))));
        assert!(poisson_plus_pmf(0.0, 1).is_err());
    }

    #[test]
    fn normalization_and_mean() {
        for lambda in [0.5, 1.0, 4.0] {
            let s: f64 = (1..=200).map(|n| poisson_plus_pmf(lambda, n).unwrap()).sum();
            assert!((s - 1.0).abs() < 1e-12, "lambda={lambda}: {s}");
        }
        assert!((poisson_plus_mean(1.0).unwrap() - 1.58198).abs() < 1e-5);
        assert!((poisson_plus_mean(4.0).unwrap() - 4.07463).abs() < 1e-5);
        let law = CountDistribution::poisson_plus(2.5).unwrap();
        assert!((law.mean() - poisson_plus_mean(2.5).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn tail_matches_pmf_sum() {
        for lambda in [0.3, 1.0, 7.0] {
            for j in 1..15 {
                let direct: f64 = (j..400).map(|n| poisson_plus_pmf(lambda, n).unwrap()).sum();
                let tail = poisson_plus_tail(lambda, j).unwrap();
                assert!((tail - direct).abs() < 1e-14 * direct.max(1e-300) + 1e-300, "{lambda} {j}");
            }
        }
    }

    #[test]
    fn larger_parameter_dominates() {
        let p = CountDistribution::poisson_plus(2.0).unwrap();
        let q = CountDistribution::poisson_plus(1.0).unwrap();
        let r = dominance_check(&p, &q).unwrap();
        assert_eq!(r.verdict, Verdict::Dominates);
        assert_eq!(r.max_tail_violation, 0.0);
        assert!(r.ratio_criterion);
    }

    #[test]
    fn reflexive() {
        let p = CountDistribution::poisson_plus(1.3).unwrap();
        let r = dominance_check(&p, &p).unwrap();
        assert_eq!(r.verdict, Verdict::Dominates);
        assert!(r.ratio_criterion);
    }

    #[test]
    fn smaller_parameter_violates_at_two() {
        let p = CountDistribution::poisson_plus(1.0).unwrap();
        let q = CountDistribution::poisson_plus(2.0).unwrap();
        let r = dominance_check(&p, &q).unwrap();
        assert_eq!(r.verdict, Verdict::Violated);
        assert!(!r.ratio_criterion);
        let gap2 = q.tail(2) - p.tail(2);
        assert!(gap2 > 0.0);
        assert!(r.max_tail_violation >= gap2);
    }

    #[test]
    fn empirical_tolerance_band() {
        // 1000 draws matching Poi⁺_1 to rounding: consistent or dominating.
        let exact = CountDistribution::poisson_plus(1.0).unwrap();
        let mut counts = Vec::new();
        for (&k, &p) in &exact.pmf {
            counts.extend(std::iter::repeat_n(k, (p * 1000.0).round() as usize));
        }
        let emp = CountDistribution::from_counts(&counts).unwrap();
        assert!(dominance_check(&emp, &exact).unwrap().verdict.holds());
        assert_eq!(dominance_check(&emp, &exact).unwrap().j_max, emp.max_support() + 2);
        // Far below: a law concentrated on 1 against Poi⁺_3.
        let ones = CountDistribution::from_counts(&[1; 500]).unwrap();
        let r = dominance_check(&ones, &CountDistribution::poisson_plus(3.0).unwrap()).unwrap();
        assert_eq!(r.verdict, Verdict::Violated);
        assert_eq!(r.worst_j, Some(2));
    }

    #[test]
    fn empty_and_zero_counts_rejected() {
        assert!(CountDistribution::from_counts(&[]).is_err());
        let with_zero = CountDistribution::from_counts(&[0, 1]).unwrap();
        let p = CountDistribution::poisson_plus(1.0).unwrap();
        assert!(dominance_check(&p, &with_zero).is_err());
    }

    proptest! {
        #[test]
        fn dominance_is_monotone_in_parameter(a in 0.05f64..10.0, b in 0.05f64..10.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let p = CountDistribution::poisson_plus(hi).unwrap();
            let q = CountDistribution::poisson_plus(lo).unwrap();
            prop_assert_eq!(dominance_check(&p, &q).unwrap().verdict, Verdict::Dominates);
        }

        #[test]
        fn normalization_over_range(lambda in 0.01f64..20.0) {
            let law = CountDistribution::poisson_plus(lambda).unwrap();
            let s: f64 = law.pmf.values().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
    }
}
