//! The split/coalesce chain against the ε-window rejection oracle.

use bridgelab::jump_models::JumpDensity;
use bridgelab::path::JumpPath;
use bridgelab::rng::rng_from_seed;
use bridgelab::samplers::{sample_bridge_mcmc, sample_bridge_rejection_batch, ChainConfig, DEFAULT_TRIAL_BUDGET};
use bridgelab::stats::{count_pmf, ks_two_sample, total_variation};
use rand::Rng;

fn counts(paths: &[JumpPath]) -> Vec<usize> {
    paths.iter().map(|p| p.jump_count()).collect()
}

// One jump per path keeps the KS samples independent. Sizes come only from
// paths with at least two jumps: single-jump bridges carry an atom at c that
// the ε-window smears.
fn one_size_per_multi_jump_path(paths: &[JumpPath], seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    paths
        .iter()
        .filter(|p| p.jump_count() >= 2)
        .map(|p| p.jumps()[rng.random_range(0..p.jump_count())].size)
        .collect()
}

fn one_time_per_path(paths: &[JumpPath], seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    paths.iter().map(|p| p.jumps()[rng.random_range(0..p.jump_count())].time).collect()
}

#[test]
fn laplace_bridge_matches_oracle() {
    let model = JumpDensity::laplace(1.0).unwrap();
    let n = 10_000;
    let oracle = sample_bridge_rejection_batch(&model, 0.0, 1.0, 0.05, n, DEFAULT_TRIAL_BUDGET, 101).unwrap();
    let config = ChainConfig { seed: 102, ..ChainConfig::default() };
    let chain = sample_bridge_mcmc(&model, 0.0, 1.0, &model, &config, n).unwrap();
    let tv = total_variation(&count_pmf(&counts(&oracle.paths)), &count_pmf(&counts(&chain.paths)));
    assert!(tv < 0.05, "tv {tv}");
    let sizes = ks_two_sample(
        &one_size_per_multi_jump_path(&oracle.paths, 1),
        &one_size_per_multi_jump_path(&chain.paths, 2),
    );
    assert!(sizes.passes(0.01), "{sizes:?}");
    let times = ks_two_sample(&one_time_per_path(&oracle.paths, 3), &one_time_per_path(&chain.paths, 4));
    assert!(times.passes(0.01), "{times:?}");
}
