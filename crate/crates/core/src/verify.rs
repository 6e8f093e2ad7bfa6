//! Monte Carlo checks of the Poisson and bridge identities.
//!
//! Each check estimates both sides of an identity from independent sample
//! streams and reports `z = (lhs - rhs) / √(se_lhs² + se_rhs²)`. Work is
//! split into fixed-size blocks; block `b` draws its left side from child
//! stream `2b` and its right side from `2b + 1`, and block summaries are
//! merged in block order, so a report depends only on `(seed, n, functional)`.
//!
//! Integrals over a new jump size `x₁ ∈ ℝ` are importance sampled with the
//! model density `ψ = f` and weight `1/ψ(x₁)`.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::jump_models::{ser_maybe_inf, JumpDensity};
use crate::path::{ou_map, JumpPath, OUPath};
use crate::point_measure::{SizeConfiguration, SpaceTimeAtom};
use crate::quadrature::{integrate, Tolerance};
use crate::rng::{child_rng, SimRng};
use crate::samplers::{
    blocks, sample_bridge_mcmc, sample_bridge_rejection, sample_compound_poisson, sample_poisson_configuration,
    ChainConfig, DEFAULT_TRIAL_BUDGET,
};
use crate::stats::MeanVar;

/// Samples per parallel block.
pub const VERIFY_BLOCK: usize = 2048;

/// Guard ratio: running variance may not exceed this multiple of the squared
/// running mean.
pub const VARIANCE_GUARD_RATIO: f64 = 1e6;

/// Summands needed before the variance guard is consulted.
const GUARD_MIN_COUNT: u64 = 1000;

/// Two-sided estimate of an identity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    pub identity: String,
    pub functional: String,
    pub lhs: f64,
    pub rhs: f64,
    pub lhs_se: f64,
    pub rhs_se: f64,
    #[serde(serialize_with = "ser_maybe_inf")]
    pub z: f64,
    pub n: usize,
    pub seed: u64,
}

impl IdentityReport {
    fn new(identity: &str, functional: &str, lhs: MeanVar, rhs: MeanVar, n: usize, seed: u64) -> Self {
        Self::from_estimates(identity, functional, (lhs.mean, lhs.std_error()), (rhs.mean, rhs.std_error()), n, seed)
    }

    fn from_estimates(
        identity: &str,
        functional: &str,
        (lhs, lhs_se): (f64, f64),
        (rhs, rhs_se): (f64, f64),
        n: usize,
        seed: u64,
    ) -> Self {
        let z = z_score(lhs, rhs, lhs_se, rhs_se);
        Self { identity: identity.into(), functional: functional.into(), lhs, rhs, lhs_se, rhs_se, z, n, seed }
    }

    /// `|z| < 3`.
    pub fn passes(&self) -> bool {
        self.z.abs() < 3.0
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("reports serialize")
    }

    /// Human-readable two-line table.
    pub fn to_table(&self) -> String {
        format!(
            "{:<12} {:<22} {:>12} {:>10} {:>12} {:>10} {:>8} {:>9}\n{:<12} {:<22} {:>12.6} {:>10.2e} {:>12.6} {:>10.2e} {:>8.3} {:>9}\n",
            "identity", "functional", "lhs", "lhs_se", "rhs", "rhs_se", "z", "n",
            self.identity, self.functional, self.lhs, self.lhs_se, self.rhs, self.rhs_se, self.z, self.n
        )
    }
}

/// `(lhs - rhs) / √(se_l² + se_r²)`; 0 for identical exact sides and ±∞ for
/// differing exact sides.
pub fn z_score(lhs: f64, rhs: f64, lhs_se: f64, rhs_se: f64) -> f64 {
    let sd = (lhs_se * lhs_se + rhs_se * rhs_se).sqrt();
    if sd > 0.0 {
        (lhs - rhs) / sd
    } else if lhs == rhs {
        0.0
    } else {
        (lhs - rhs).signum() * f64::INFINITY
    }
}

/// A named test functional. `bounded = false` marks functionals whose
/// estimates are checked by the variance guard.
pub struct TestFunctional<E: ?Sized> {
    pub id: String,
    pub integrability_note: String,
    pub bounded: bool,
    evaluator: Arc<E>,
}

impl<E: ?Sized> Clone for TestFunctional<E> {
    fn clone(&self) -> Self {
        Self {
            id: self.id.clone(),
            integrability_note: self.integrability_note.clone(),
            bounded: self.bounded,
            evaluator: Arc::clone(&self.evaluator),
        }
    }
}

impl<E: ?Sized> fmt::Debug for TestFunctional<E> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunctional").field("id", &self.id).field("bounded", &self.bounded).finish()
    }
}

pub type MeckeEval = dyn Fn(f64, &SizeConfiguration) -> f64 + Send + Sync;
pub type BivariateEval = dyn Fn(f64, f64, &SizeConfiguration) -> f64 + Send + Sync;
pub type ConfigEval = dyn Fn(&SizeConfiguration) -> f64 + Send + Sync;
pub type SplitEval<P> = dyn Fn(&SplitPoint<'_, P>) -> f64 + Send + Sync;

/// `F(γ, μ)` for the Mecke formula.
pub type MeckeFunctional = TestFunctional<MeckeEval>;
/// `F(γ, γ', μ)` for the bivariate Mecke formula.
pub type BivariateFunctional = TestFunctional<BivariateEval>;
/// `F̃(μ)` or `G(μ)` on size configurations.
pub type ConfigFunctional = TestFunctional<ConfigEval>;
/// `F(γ, γ₁, γ₂, path)` for the split identities.
pub type SplitFunctional<P> = TestFunctional<SplitEval<P>>;

impl<E: ?Sized> TestFunctional<E> {
    pub fn new(id: impl Into<String>, integrability_note: impl Into<String>, bounded: bool, evaluator: Arc<E>) -> Self {
        Self { id: id.into(), integrability_note: integrability_note.into(), bounded, evaluator }
    }
}

/// Arguments of a split functional: the removed (or merged) jump `γ`, the
/// two pieces `γ₁`, `γ₂` and the path the functional sees.
#[derive(Debug, Clone, Copy)]
pub struct SplitPoint<'a, P> {
    pub gamma: SpaceTimeAtom,
    pub gamma1: SpaceTimeAtom,
    pub gamma2: SpaceTimeAtom,
    pub path: &'a P,
}

/// Paths with a jump configuration.
pub trait JumpCarrier {
    fn jump_list(&self) -> &[SpaceTimeAtom];
}

impl JumpCarrier for JumpPath {
    fn jump_list(&self) -> &[SpaceTimeAtom] {
        self.jumps()
    }
}

impl JumpCarrier for OUPath {
    fn jump_list(&self) -> &[SpaceTimeAtom] {
        self.jumps()
    }
}

fn parse_index(name: &str, prefix: &str) -> Option<usize> {
    name.strip_prefix(prefix).and_then(|k| k.parse().ok())
}

fn unknown(kind: &str, name: &str, known: &str) -> Error {
    Error::InvalidParameter(format!("unknown {kind} functional '{name}'; known: {known}"))
}

/// Built-in Mecke functionals: `one`, `count_eq:K`, `abs_min1`.
pub fn mecke_functional(name: &str) -> Result<MeckeFunctional> {
    if name == "one" {
        return Ok(TestFunctional::new(name, "constant", true, Arc::new(|_: f64, _: &SizeConfiguration| 1.0)));
    }
    if name == "abs_min1" {
        return Ok(TestFunctional::new(name, "|γ| ∧ 1", true, Arc::new(|g: f64, _: &SizeConfiguration| g.abs().min(1.0))));
    }
    if let Some(k) = parse_index(name, "count_eq:") {
        return Ok(TestFunctional::new(
            name,
            "indicator of μ(Γ) = k",
            true,
            Arc::new(move |_: f64, m: &SizeConfiguration| f64::from(u8::from(m.len() == k))),
        ));
    }
    Err(unknown("mecke", name, "one, count_eq:K, abs_min1"))
}

/// Built-in bivariate functionals: `one`, `same_sign`.
pub fn bivariate_functional(name: &str) -> Result<BivariateFunctional> {
    match name {
        "one" => Ok(TestFunctional::new(name, "constant", true, Arc::new(|_: f64, _: f64, _: &SizeConfiguration| 1.0))),
        "same_sign" => Ok(TestFunctional::new(
            name,
            "indicator of γγ' > 0",
            true,
            Arc::new(|a: f64, b: f64, _: &SizeConfiguration| f64::from(u8::from(a * b > 0.0))),
        )),
        _ => Err(unknown("bivariate", name, "one, same_sign")),
    }
}

/// Built-in configuration functionals: `one`, `count_eq:K`, `count`,
/// `exp_neg_count`.
pub fn config_functional(name: &str) -> Result<ConfigFunctional> {
    match name {
        "one" => Ok(TestFunctional::new(name, "constant", true, Arc::new(|_: &SizeConfiguration| 1.0))),
        "count" => Ok(TestFunctional::new(name, "μ(Γ); Poisson moments are finite", false, Arc::new(|m: &SizeConfiguration| m.len() as f64))),
        "exp_neg_count" => Ok(TestFunctional::new(
            name,
            "e^{-μ(Γ)}",
            true,
            Arc::new(|m: &SizeConfiguration| (-(m.len() as f64)).exp()),
        )),
        _ => match parse_index(name, "count_eq:") {
            Some(k) => Ok(TestFunctional::new(
                name,
                "indicator of μ(Γ) = k",
                true,
                Arc::new(move |m: &SizeConfiguration| f64::from(u8::from(m.len() == k))),
            )),
            None => Err(unknown("configuration", name, "one, count_eq:K, count, exp_neg_count")),
        },
    }
}

/// Built-in split functionals, with `φ = f`:
/// `phi_x1` (`φ(x₁)`), `density_reduction` (`φ(x₁) 1{N>1}/(N-1)`, `N` the
/// jump count of the path argument) and `phi_x1_sup_min1`
/// (`φ(x₁)(sup_t |X_t| ∧ 1)`, OU paths only).
pub fn split_functional<P: JumpCarrier + SupNorm + 'static>(name: &str, model: &JumpDensity) -> Result<SplitFunctional<P>> {
    let phi = model.clone();
    let note = "φ(x₁) factor makes the x₁-integral finite; χ-weighted side is variance-guarded";
    match name {
        "phi_x1" => Ok(TestFunctional::new(name, note, true, Arc::new(move |a: &SplitPoint<'_, P>| phi.pdf(a.gamma1.size)))),
        "density_reduction" => Ok(TestFunctional::new(
            name,
            note,
            true,
            Arc::new(move |a: &SplitPoint<'_, P>| {
                let n = a.path.jump_list().len();
                if n > 1 {
                    phi.pdf(a.gamma1.size) / (n - 1) as f64
                } else {
                    0.0
                }
            }),
        )),
        "phi_x1_sup_min1" => {
            if P::sup_abs_of(None).is_none() {
                return Err(Error::InvalidParameter("phi_x1_sup_min1 needs an OU path".into()));
            }
            Ok(TestFunctional::new(
                name,
                note,
                true,
                Arc::new(move |a: &SplitPoint<'_, P>| {
                    phi.pdf(a.gamma1.size) * P::sup_abs_of(Some(a.path)).unwrap_or(0.0).min(1.0)
                }),
            ))
        }
        _ => Err(unknown("split", name, "phi_x1, density_reduction, phi_x1_sup_min1")),
    }
}

/// `sup_t |X_t|` where it is part of a functional's vocabulary.
pub trait SupNorm: Sized {
    /// `None` when the path type has no supremum functional; called with
    /// `None` to probe support.
    fn sup_abs_of(path: Option<&Self>) -> Option<f64>;
}

impl SupNorm for JumpPath {
    fn sup_abs_of(_: Option<&Self>) -> Option<f64> {
        None
    }
}

impl SupNorm for OUPath {
    fn sup_abs_of(path: Option<&Self>) -> Option<f64> {
        Some(path.map_or(0.0, OUPath::sup_abs))
    }
}

fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 samples, got {n}")));
    }
    Ok(())
}

fn guard(stats: &MeanVar, functional: &str, side: &str) -> Result<()> {
    if stats.count >= GUARD_MIN_COUNT && stats.variance() > VARIANCE_GUARD_RATIO * stats.mean * stats.mean {
        return Err(Error::VarianceGuard(format!(
            "functional '{functional}' ({side}): variance {:.3e} exceeds {VARIANCE_GUARD_RATIO:e} × mean² ({:.3e})",
            stats.variance(),
            stats.mean * stats.mean
        )));
    }
    Ok(())
}

/// Runs `sample` over `n` draws in blocks; `stream` selects the child stream
/// (0 for left sides, 1 for right sides). The variance guard is applied
/// after each block merge when `guarded`.
fn run_blocks<S>(n: usize, seed: u64, stream: u64, guarded: Option<(&str, &str)>, sample: S) -> Result<MeanVar>
where
    S: Fn(&mut SimRng, usize) -> Result<f64> + Sync,
{
    let parts: Vec<Result<MeanVar>> = blocks(n, VERIFY_BLOCK)
        .into_par_iter()
        .map(|(b, count)| {
            let mut rng = child_rng(seed, 2 * b + stream);
            let start = b as usize * VERIFY_BLOCK;
            let mut acc = MeanVar::new();
            for i in 0..count {
                acc.push(sample(&mut rng, start + i)?);
            }
            Ok(acc)
        })
        .collect();
    let mut total = MeanVar::new();
    for part in parts {
        total = total.merge(&part?);
        if let Some((name, side)) = guarded {
            guard(&total, name, side)?;
        }
    }
    Ok(total)
}

fn guard_tag<'a, E: ?Sized>(f: &'a TestFunctional<E>, side: &'a str) -> Option<(&'a str, &'a str)> {
    (!f.bounded).then_some((f.id.as_str(), side))
}

/// Mecke: `E Σ_{γ∈μ} F(γ, μ - δ_γ) = ∫ E F(γ, μ) ρ(dγ)`.
pub fn check_mecke(model: &JumpDensity, functional: &MeckeFunctional, n: usize, seed: u64) -> Result<IdentityReport> {
    check_n(n)?;
    let f = &functional.evaluator;
    let lhs = run_blocks(n, seed, 0, guard_tag(functional, "lhs"), |rng, _| {
        let mu = sample_poisson_configuration(model, rng);
        Ok((0..mu.len()).map(|i| f(mu.atoms()[i], &mu.without(i).expect("index in range"))).sum())
    })?;
    let lambda = model.lambda();
    let rhs = run_blocks(n, seed, 1, guard_tag(functional, "rhs"), |rng, _| {
        let mu = sample_poisson_configuration(model, rng);
        let gamma = model.sample(rng);
        Ok(lambda * f(gamma, &mu))
    })?;
    Ok(IdentityReport::new("mecke", &functional.id, lhs, rhs, n, seed))
}

/// Reduced bivariate Mecke:
/// `E Σ_{γ≠γ'} F(γ, γ', μ - δ_γ - δ_γ') = ∫∫ E F(γ, γ', μ) ρ(dγ) ρ(dγ')`.
pub fn check_bivariate_mecke(
    model: &JumpDensity,
    functional: &BivariateFunctional,
    n: usize,
    seed: u64,
) -> Result<IdentityReport> {
    check_n(n)?;
    let f = &functional.evaluator;
    let lhs = run_blocks(n, seed, 0, guard_tag(functional, "lhs"), |rng, _| {
        let mu = sample_poisson_configuration(model, rng);
        let atoms = mu.atoms();
        let mut sum = 0.0;
        for (i, j) in mu.factorial_pair_indices() {
            let (hi, lo) = if i > j { (i, j) } else { (j, i) };
            let rest = mu.without(hi).and_then(|m| m.without(lo)).expect("indices in range");
            sum += f(atoms[i], atoms[j], &rest);
        }
        Ok(sum)
    })?;
    let l2 = model.lambda() * model.lambda();
    let rhs = run_blocks(n, seed, 1, guard_tag(functional, "rhs"), |rng, _| {
        let mu = sample_poisson_configuration(model, rng);
        let (g1, g2) = (model.sample(rng), model.sample(rng));
        Ok(l2 * f(g1, g2, &mu))
    })?;
    Ok(IdentityReport::new("bivariate", &functional.id, lhs, rhs, n, seed))
}

fn uniform_time<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Draws `(s₁, x₁, s₂)` for splitting jump `k` of `path` into a valid path,
/// redrawing on null events. Returns the pieces and the split path.
fn random_split<R: Rng + ?Sized>(
    path: &JumpPath,
    k: usize,
    psi: &JumpDensity,
    rng: &mut R,
) -> Result<(SpaceTimeAtom, SpaceTimeAtom, JumpPath)> {
    let delta = path.jumps()[k].size;
    loop {
        let (s1, x1, s2) = (uniform_time(rng), psi.sample(rng), uniform_time(rng));
        match path.split_jump(k, s1, x1, s2) {
            Ok(p) => {
                return Ok((SpaceTimeAtom { time: s1, size: x1 }, SpaceTimeAtom { time: s2, size: delta - x1 }, p));
            }
            Err(Error::Resample(_)) => continue,
            Err(e) => return Err(e),
        }
    }
}

/// One left-side summand `AD F(Z)`: each jump is split once with
/// `x₁ ~ ψ = f`, weighted by `1/ψ(x₁)`. `view` maps the split driving path to
/// the path handed to `F`.
fn split_lhs_summand<P, V, R>(
    model: &JumpDensity,
    f: &SplitEval<P>,
    z: &JumpPath,
    view: &V,
    rng: &mut R,
) -> Result<f64>
where
    V: Fn(JumpPath) -> Result<P>,
    R: Rng + ?Sized,
{
    let mut sum = 0.0;
    for k in 0..z.jump_count() {
        let gamma = z.jumps()[k];
        let (gamma1, gamma2, split) = random_split(z, k, model, rng)?;
        let seen = view(split)?;
        let w = f(&SplitPoint { gamma, gamma1, gamma2, path: &seen }) / model.pdf(gamma1.size);
        sum += w;
    }
    Ok(sum)
}

/// One right-side summand: `Σ_{i≠j} χ_ν(x_i, x_j) F((t, x_i + x_j), γ_i, γ_j, ·)`
/// with `t` uniform.
fn split_rhs_summand<P: JumpCarrier, R: Rng + ?Sized>(
    model: &JumpDensity,
    f: &SplitEval<P>,
    seen: &P,
    rng: &mut R,
) -> Result<f64> {
    let jumps = seen.jump_list();
    let mut sum = 0.0;
    for (i, gi) in jumps.iter().enumerate() {
        for (j, gj) in jumps.iter().enumerate() {
            if i == j {
                continue;
            }
            let chi = model.chi(gi.size, gj.size)?;
            let gamma = SpaceTimeAtom { time: uniform_time(rng), size: gi.size + gj.size };
            sum += chi * f(&SplitPoint { gamma, gamma1: *gi, gamma2: *gj, path: seen });
        }
    }
    Ok(sum)
}

/// Bridge end points and chain settings for the conditioned split check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BridgeConditioning {
    pub x: f64,
    pub y: f64,
    pub chain: ChainConfig,
}

/// Split identity `E[AD F] = E Σ_{i≠j} χ_ν ∫₀¹ F dt` under the forward
/// process, or under the bridge when `conditioned` is given. Paths without
/// jumps contribute 0 to both sides.
pub fn check_split_identity(
    model: &JumpDensity,
    functional: &SplitFunctional<JumpPath>,
    n: usize,
    seed: u64,
    conditioned: Option<&BridgeConditioning>,
) -> Result<IdentityReport> {
    check_n(n)?;
    let f = &*functional.evaluator;
    let id = &functional.id;
    let keep = |p: JumpPath| -> Result<JumpPath> { Ok(p) };
    let (lhs, rhs, name) = match conditioned {
        None => {
            let lhs = run_blocks(n, seed, 0, guard_tag(functional, "lhs"), |rng, _| {
                let z = sample_compound_poisson(model, 0.0, rng);
                split_lhs_summand(model, f, &z, &keep, rng)
            })?;
            let rhs = run_blocks(n, seed, 1, Some((id, "rhs")), |rng, _| {
                let z = sample_compound_poisson(model, 0.0, rng);
                split_rhs_summand(model, f, &z, rng)
            })?;
            (lhs, rhs, "split")
        }
        Some(b) => {
            let chain = |stream: u64| ChainConfig { seed: crate::rng::child_seed(seed, u64::MAX - stream), ..b.chain };
            let left = bridge_paths(model, b, &chain(0), n)?;
            let right = bridge_paths(model, b, &chain(1), n)?;
            let lhs = run_blocks(n, seed, 0, guard_tag(functional, "lhs"), |rng, i| {
                split_lhs_summand(model, f, &left[i], &keep, rng)
            })?;
            let rhs = run_blocks(n, seed, 1, Some((id, "rhs")), |rng, i| split_rhs_summand(model, f, &right[i], rng))?;
            (lhs, rhs, "split_bridge")
        }
    };
    Ok(IdentityReport::new(name, id, lhs, rhs, n, seed))
}

fn bridge_paths(model: &JumpDensity, b: &BridgeConditioning, chain: &ChainConfig, n: usize) -> Result<Vec<JumpPath>> {
    let out = sample_bridge_mcmc(model, b.x, b.y, model, chain, n)?;
    if out.partial {
        return Err(Error::InvalidParameter("bridge chain hit its event cap; raise max_events".into()));
    }
    Ok(out.paths)
}

/// Size-only density reweighting: `E[F̃(Tμ); μ ≠ 0] = E[F̃(μ) D_ρ(μ)]`, with
/// `T` the random split (uniform atom, new piece `γ' ~ φ`) and
/// `D_ρ(μ) = 1{n>1}/(n-1) Σ_{i≠j} χ_ρ(γ_i, γ_j) φ(γ_j)`.
pub fn check_density_reweighting(
    model: &JumpDensity,
    functional: &ConfigFunctional,
    phi: &JumpDensity,
    n: usize,
    seed: u64,
) -> Result<IdentityReport> {
    check_n(n)?;
    let f = &functional.evaluator;
    let lhs = run_blocks(n, seed, 0, guard_tag(functional, "lhs"), |rng, _| {
        let mu = sample_poisson_configuration(model, rng);
        if mu.is_empty() {
            return Ok(0.0);
        }
        let k = rng.random_range(0..mu.len());
        let first = loop {
            let g = phi.sample(rng);
            if g != 0.0 && g != mu.atoms()[k] {
                break g;
            }
        };
        Ok(f(&mu.split_atom(k, first)?))
    })?;
    let rhs = run_blocks(n, seed, 1, Some((&functional.id, "rhs")), |rng, _| {
        let mu = sample_poisson_configuration(model, rng);
        Ok(f(&mu) * density_weight(model, phi, &mu)?)
    })?;
    Ok(IdentityReport::new("reweight", &functional.id, lhs, rhs, n, seed))
}

/// `D_ρ(μ)`.
pub fn density_weight(model: &JumpDensity, phi: &JumpDensity, mu: &SizeConfiguration) -> Result<f64> {
    let n = mu.len();
    if n < 2 {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for (a, b) in mu.factorial_pairs() {
        sum += model.chi(a, b)? * phi.pdf(b);
    }
    Ok(sum / (n - 1) as f64)
}

/// Diminished bridge density. Left: `G(μ - δ_γ)` for a uniformly removed
/// atom of an ε-window rejection bridge. Right: forward `μ ~ P_ρ` weighted by
/// `∫_{c-B(μ)-ε}^{c-B(μ)+ε} ρ / (μ(Γ) + 1)` and self-normalised; this is the
/// exact density of the diminished ε-conditioned law, which tends to
/// `ρ(c - B(μ)) / (μ(Γ) + 1)` as ε → 0.
pub fn check_diminished_density(
    model: &JumpDensity,
    c: f64,
    epsilon: f64,
    functional: &ConfigFunctional,
    n: usize,
    seed: u64,
) -> Result<IdentityReport> {
    check_n(n)?;
    if c == 0.0 || !c.is_finite() {
        return Err(Error::InvalidParameter(format!("bridge height must be nonzero and finite, got {c}")));
    }
    if !(epsilon > 0.0 && epsilon < c.abs()) {
        return Err(Error::InvalidParameter(format!("epsilon must lie in (0, |c|), got {epsilon}")));
    }
    let g = &functional.evaluator;
    let lhs = run_blocks(n, seed, 0, guard_tag(functional, "lhs"), |rng, _| {
        let draw = sample_bridge_rejection(model, 0.0, c, epsilon, DEFAULT_TRIAL_BUDGET, rng)?;
        let sizes = SizeConfiguration::new(draw.path.jumps().iter().map(|j| j.size).collect());
        let (_, rest) = sizes.remove_random_atom(rng)?;
        Ok(g(&rest))
    })?;

    // Self-normalised importance sampling; block sums are merged in order.
    let tol = Tolerance { abs: 1e-15, rel: 1e-10, ..Tolerance::default() };
    let lambda = model.lambda();
    let parts: Vec<Result<WeightedSums>> = blocks(n, VERIFY_BLOCK)
        .into_par_iter()
        .map(|(b, count)| {
            let mut rng = child_rng(seed, 2 * b + 1);
            let mut acc = WeightedSums::default();
            for _ in 0..count {
                let mu = sample_poisson_configuration(model, &mut rng);
                let centre = c - mu.first_moment();
                let mass = lambda * integrate(|y| model.pdf(y), centre - epsilon, centre + epsilon, tol)?.value;
                acc.push(mass / (mu.len() + 1) as f64, g(&mu));
            }
            Ok(acc)
        })
        .collect();
    let mut sums = WeightedSums::default();
    for part in parts {
        sums.merge(&part?);
    }
    let rhs = sums.estimate().ok_or_else(|| {
        Error::DegenerateWeights(format!(
            "all forward weights vanish for c = {c}, ε = {epsilon}; increase n or choose a smaller |c|"
        ))
    })?;
    let lhs_est = (lhs.mean, lhs.std_error());
    Ok(IdentityReport::from_estimates("diminished", &functional.id, lhs_est, rhs, n, seed))
}

/// Running sums for a self-normalised weighted mean.
#[derive(Debug, Clone, Copy, Default)]
struct WeightedSums {
    w: f64,
    wg: f64,
    w2: f64,
    w2g: f64,
    w2g2: f64,
}

impl WeightedSums {
    fn push(&mut self, w: f64, g: f64) {
        self.w += w;
        self.wg += w * g;
        self.w2 += w * w;
        self.w2g += w * w * g;
        self.w2g2 += w * w * g * g;
    }

    fn merge(&mut self, o: &Self) {
        self.w += o.w;
        self.wg += o.wg;
        self.w2 += o.w2;
        self.w2g += o.w2g;
        self.w2g2 += o.w2g2;
    }

    /// `(Σ w g / Σ w, delta-method standard error)`; `None` when the weights
    /// are degenerate (zero total or effective sample size below 10).
    fn estimate(&self) -> Option<(f64, f64)> {
        if !(self.w > 0.0) || self.w * self.w / self.w2 < 10.0 {
            return None;
        }
        let m = self.wg / self.w;
        // Σ w² (g - m)² expanded.
        let num = self.w2g2 - 2.0 * m * self.w2g + m * m * self.w2;
        Some((m, num.max(0.0).sqrt() / self.w))
    }
}

/// PerOU identity: the split identity for `X = X^c(Z)`, where the split acts
/// on the driving jumps and the OU map is re-applied. The right side reads
/// the jumps off the OU path, since `μ_X = μ_Z`.
pub fn check_perou_identity(
    model: &JumpDensity,
    c: f64,
    functional: &SplitFunctional<OUPath>,
    n: usize,
    seed: u64,
) -> Result<IdentityReport> {
    check_n(n)?;
    if c == 0.0 || !c.is_finite() {
        return Err(Error::InvalidParameter(format!("damping must be nonzero and finite, got {c}")));
    }
    let f = &*functional.evaluator;
    let view = |p: JumpPath| ou_map(c, &p);
    let lhs = run_blocks(n, seed, 0, guard_tag(functional, "lhs"), |rng, _| {
        let z = sample_compound_poisson(model, 0.0, rng);
        split_lhs_summand(model, f, &z, &view, rng)
    })?;
    let rhs = run_blocks(n, seed, 1, Some((&functional.id, "rhs")), |rng, _| {
        let x = ou_map(c, &sample_compound_poisson(model, 0.0, rng))?;
        split_rhs_summand(model, f, &x, rng)
    })?;
    Ok(IdentityReport::new("perou", &functional.id, lhs, rhs, n, seed))
}
