//! Forward compound-Poisson sampling, the ε-window rejection bridge (the
//! brute-force oracle), the split/coalesce continuous-time bridge chain and
//! periodic Ornstein-Uhlenbeck draws.
//!
//! Bridge heights use `c = y - x = Z_1 - Z_0 = B(μ_Z)`.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jump_models::JumpDensity;
use crate::path::{ou_map, JumpPath, OUPath};
use crate::point_measure::{SizeConfiguration, SpaceTimeAtom};
use crate::rng::{child_rng, child_seed, SimRng};

/// Default trial budget per accepted rejection sample.
pub const DEFAULT_TRIAL_BUDGET: u64 = 10_000_000;

/// Samples per parallel block for forward and rejection batches.
pub const BLOCK_SIZE: usize = 1024;

/// Tolerated drift of `Σ sizes` away from `c` before renormalising.
pub const CONSERVATION_TOLERANCE: f64 = 1e-9;

/// Full rate-table rebuild period, in events.
const REBUILD_PERIOD: u64 = 1000;

fn uniform_time<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // (0, 1]: a jump at time 0 would move Z_0.
    1.0 - rng.random::<f64>()
}

fn draw_count<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> usize {
    let n: f64 = Poisson::new(lambda).expect("lambda validated at construction").sample(rng);
    n as usize
}

/// Compound-Poisson path: `N ~ Poisson(λ)`, times iid uniform, sizes iid `f`.
pub fn sample_compound_poisson<R: Rng + ?Sized>(model: &JumpDensity, initial: f64, rng: &mut R) -> JumpPath {
    let n = draw_count(model.lambda(), rng);
    let mut jumps: Vec<SpaceTimeAtom> = Vec::with_capacity(n);
    while jumps.len() < n {
        let time = uniform_time(rng);
        if jumps.iter().any(|j| j.time == time) {
            continue;
        }
        let size = model.sample(rng);
        jumps.push(SpaceTimeAtom { time, size });
    }
    JumpPath::new(initial, jumps).expect("distinct positive times")
}

/// Poisson point process on ℝ with intensity `ρ = λ f` (sizes only).
pub fn sample_poisson_configuration<R: Rng + ?Sized>(model: &JumpDensity, rng: &mut R) -> SizeConfiguration {
    let n = draw_count(model.lambda(), rng);
    SizeConfiguration::new((0..n).map(|_| model.sample(rng)).collect())
}

/// Splits `0..n` into `(block_index, count)` pieces of at most `block` items.
pub(crate) fn blocks(n: usize, block: usize) -> Vec<(u64, usize)> {
    (0..n.div_ceil(block))
        .map(|b| (b as u64, block.min(n - b * block)))
        .collect()
}

/// `n` forward paths, generated in per-block streams so the result depends
/// only on `seed`.
pub fn sample_compound_poisson_batch(model: &JumpDensity, initial: f64, n: usize, seed: u64) -> Vec<JumpPath> {
    blocks(n, BLOCK_SIZE)
        .into_par_iter()
        .map(|(b, count)| {
            let mut rng = child_rng(seed, b);
            (0..count).map(|_| sample_compound_poisson(model, initial, &mut rng)).collect::<Vec<_>>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

/// Default oracle window: `0.05 · IQR(f)`.
pub fn default_epsilon(model: &JumpDensity) -> Result<f64> {
    Ok(0.05 * model.interquartile_range()?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectionDraw {
    pub path: JumpPath,
    pub trials: u64,
}

/// One draw from `P^{c,ε}`: forward paths started at `x`, accepted iff
/// `|Z_1 - y| ≤ ε`.
pub fn sample_bridge_rejection<R: Rng + ?Sized>(
    model: &JumpDensity,
    x: f64,
    y: f64,
    epsilon: f64,
    budget: u64,
    rng: &mut R,
) -> Result<RejectionDraw> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
    }
    for trials in 1..=budget {
        let path = sample_compound_poisson(model, x, rng);
        if (path.terminal() - y).abs() <= epsilon {
            return Ok(RejectionDraw { path, trials });
        }
    }
    Err(Error::TrialBudget { trials: budget, accepted: 0, rate: 0.0 })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectionBatch {
    pub paths: Vec<JumpPath>,
    pub trials: u64,
    pub accepted: u64,
}

impl RejectionBatch {
    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.trials as f64
    }
}

/// `n` oracle draws. `budget` bounds the trials spent on any single accepted
/// path; exhaustion reports the acceptance rate observed so far.
pub fn sample_bridge_rejection_batch(
    model: &JumpDensity,
    x: f64,
    y: f64,
    epsilon: f64,
    n: usize,
    budget: u64,
    seed: u64,
) -> Result<RejectionBatch> {
    let parts: Vec<Result<(Vec<JumpPath>, u64)>> = blocks(n, BLOCK_SIZE)
        .into_par_iter()
        .map(|(b, count)| {
            let mut rng = child_rng(seed, b);
            let mut paths = Vec::with_capacity(count);
            let mut trials = 0u64;
            for _ in 0..count {
                match sample_bridge_rejection(model, x, y, epsilon, budget, &mut rng) {
                    Ok(draw) => {
                        trials += draw.trials;
                        paths.push(draw.path);
                    }
                    Err(_) => {
                        let total = trials + budget;
                        let accepted = paths.len() as u64;
                        return Err(Error::TrialBudget { trials: total, accepted, rate: accepted as f64 / total as f64 });
                    }
                }
            }
            Ok((paths, trials))
        })
        .collect();
    let mut out = RejectionBatch { paths: Vec::with_capacity(n), trials: 0, accepted: 0 };
    for part in parts {
        let (paths, trials) = part?;
        out.trials += trials;
        out.accepted += paths.len() as u64;
        out.paths.extend(paths);
    }
    Ok(out)
}

/// Chain timing and safety limits. Times are in chain-time units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub burn_in: f64,
    pub sample_interval: f64,
    /// Event cap per chain.
    pub max_events: u64,
    pub seed: u64,
    /// Paths emitted by each independent chain.
    pub samples_per_chain: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self { burn_in: 20.0, sample_interval: 5.0, max_events: 1_000_000, seed: 0, samples_per_chain: 10 }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.burn_in > 0.0 && self.sample_interval > 0.0 && self.max_events > 0 && self.samples_per_chain > 0) {
            return Err(Error::InvalidParameter(
                "burn_in, sample_interval, max_events and samples_per_chain must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Split,
    Merge,
}

/// Continuous-time split/coalesce chain on bridge paths.
///
/// Each jump splits at rate 1 into `(s1, x1)`, `(s2, Δ - x1)` with uniform
/// times and `x1 ~ φ`; each ordered pair `(i, j)` coalesces at rate
/// `φ(x_i) χ_ν(x_i, x_j)` into one jump at a uniform time.
#[derive(Debug, Clone)]
pub struct BridgeChain {
    model: JumpDensity,
    phi: JumpDensity,
    x: f64,
    c: f64,
    jumps: Vec<SpaceTimeAtom>,
    // rates[i][j]: coalescence rate of the ordered pair (i, j); diagonal 0.
    rates: Vec<Vec<f64>>,
    row_sums: Vec<f64>,
    clock: f64,
    events: u64,
}

impl BridgeChain {
    /// Starts from a single jump of size `c`, or from `(u, -u)` with `u ~ φ`
    /// when `c = 0`.
    pub fn new<R: Rng + ?Sized>(model: &JumpDensity, phi: &JumpDensity, x: f64, y: f64, rng: &mut R) -> Result<Self> {
        let c = y - x;
        if !c.is_finite() || !x.is_finite() {
            return Err(Error::InvalidParameter("bridge end points must be finite".into()));
        }
        let jumps = if c != 0.0 {
            vec![SpaceTimeAtom { time: uniform_time(rng), size: c }]
        } else {
            let u = loop {
                let u = phi.sample(rng);
                if u != 0.0 {
                    break u;
                }
            };
            let (s1, s2) = loop {
                let (a, b) = (uniform_time(rng), uniform_time(rng));
                if a != b {
                    break (a, b);
                }
            };
            vec![SpaceTimeAtom { time: s1, size: u }, SpaceTimeAtom { time: s2, size: -u }]
        };
        let mut chain = Self {
            model: model.clone(),
            phi: phi.clone(),
            x,
            c,
            jumps,
            rates: Vec::new(),
            row_sums: Vec::new(),
            clock: 0.0,
            events: 0,
        };
        chain.rebuild()?;
        Ok(chain)
    }

    pub fn height(&self) -> f64 {
        self.c
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn jump_count(&self) -> usize {
        self.jumps.len()
    }

    pub fn sizes(&self) -> impl Iterator<Item = f64> + '_ {
        self.jumps.iter().map(|j| j.size)
    }

    /// The current state as a path pinned at `Z_0 = x`.
    pub fn path(&self) -> JumpPath {
        JumpPath::new(self.x, self.jumps.clone()).expect("chain keeps distinct positive times")
    }

    fn merges_allowed(&self) -> bool {
        // With c = 0 the last pair would coalesce into the empty path.
        !(self.c == 0.0 && self.jumps.len() <= 2)
    }

    fn pair_rate(&self, i: usize, j: usize) -> Result<f64> {
        let (a, b) = (self.jumps[i].size, self.jumps[j].size);
        if a + b == 0.0 {
            return Ok(0.0);
        }
        let rate = self.phi.pdf(a) * self.model.chi(a, b)?;
        if !rate.is_finite() {
            return Err(Error::Overflow { what: "coalescence rate", x1: a, x2: b });
        }
        Ok(rate)
    }

    fn rebuild(&mut self) -> Result<()> {
        let n = self.jumps.len();
        let mut rates = vec![vec![0.0; n]; n];
        for (i, row) in rates.iter_mut().enumerate() {
            for (j, r) in row.iter_mut().enumerate() {
                if i != j {
                    *r = self.pair_rate(i, j)?;
                }
            }
        }
        self.row_sums = rates.iter().map(|r| r.iter().sum()).collect();
        self.rates = rates;
        Ok(())
    }

    fn remove(&mut self, k: usize) {
        self.jumps.swap_remove(k);
        self.rates.swap_remove(k);
        self.row_sums.swap_remove(k);
        for (row, sum) in self.rates.iter_mut().zip(self.row_sums.iter_mut()) {
            *sum -= row[k];
            row.swap_remove(k);
        }
    }

    fn push(&mut self, atom: SpaceTimeAtom) -> Result<()> {
        self.jumps.push(atom);
        let new = self.jumps.len() - 1;
        let mut row = vec![0.0; new + 1];
        for (i, slot) in row.iter_mut().enumerate().take(new) {
            let into = self.pair_rate(i, new)?;
            self.rates[i].push(into);
            self.row_sums[i] += into;
            *slot = self.pair_rate(new, i)?;
        }
        self.row_sums.push(row.iter().sum());
        self.rates.push(row);
        Ok(())
    }

    /// Total event rate `R = n + Σ_{i≠j} φ(x_i) χ_ν(x_i, x_j)`.
    pub fn total_rate(&self) -> f64 {
        let merge: f64 = if self.merges_allowed() { self.row_sums.iter().sum() } else { 0.0 };
        self.jumps.len() as f64 + merge.max(0.0)
    }

    fn has_time(&self, t: f64) -> bool {
        self.jumps.iter().any(|j| j.time == t)
    }

    /// Draws the holding time of the current state.
    pub fn waiting_time<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        Exp::new(self.total_rate()).expect("positive total rate").sample(rng)
    }

    /// Chooses and applies one event, without advancing the clock.
    pub fn fire<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<EventKind> {
        let n = self.jumps.len();
        let total = self.total_rate();
        let u = rng.random::<f64>() * total;
        let kind = if u < n as f64 {
            self.split((u as usize).min(n - 1), rng)?;
            EventKind::Split
        } else {
            let (i, j) = self.pick_pair(u - n as f64);
            self.merge(i, j, rng)?;
            EventKind::Merge
        };
        self.events += 1;
        if self.events.is_multiple_of(REBUILD_PERIOD) {
            self.rebuild()?;
        }
        self.renormalize()?;
        Ok(kind)
    }

    /// One exact event: holding time, then the event. Returns the event and
    /// the holding time.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<(EventKind, f64)> {
        let w = self.waiting_time(rng);
        self.clock += w;
        Ok((self.fire(rng)?, w))
    }

    fn pick_pair(&self, mut u: f64) -> (usize, usize) {
        let mut last = None;
        for (i, row) in self.rates.iter().enumerate() {
            if u < self.row_sums[i] {
                for (j, &r) in row.iter().enumerate() {
                    if r > 0.0 {
                        last = Some((i, j));
                        if u < r {
                            return (i, j);
                        }
                        u -= r;
                    }
                }
                // Rounding pushed u past the row; settle on its last pair.
                if let Some(p) = last {
                    return p;
                }
            }
            u -= self.row_sums[i];
            if let Some(j) = row.iter().rposition(|&r| r > 0.0) {
                last = Some((i, j));
            }
        }
        last.expect("merge chosen with a positive merge rate")
    }

    fn split<R: Rng + ?Sized>(&mut self, k: usize, rng: &mut R) -> Result<()> {
        let size = self.jumps[k].size;
        let x1 = loop {
            let x1 = self.phi.sample(rng);
            if x1 != 0.0 && x1 != size {
                break x1;
            }
        };
        let old_time = self.jumps[k].time;
        let (s1, s2) = loop {
            let (a, b) = (uniform_time(rng), uniform_time(rng));
            let clash = |t: f64| t != old_time && self.has_time(t);
            if a != b && !clash(a) && !clash(b) {
                break (a, b);
            }
        };
        self.remove(k);
        self.push(SpaceTimeAtom { time: s1, size: x1 })?;
        self.push(SpaceTimeAtom { time: s2, size: size - x1 })
    }

    fn merge<R: Rng + ?Sized>(&mut self, i: usize, j: usize, rng: &mut R) -> Result<()> {
        let size = self.jumps[i].size + self.jumps[j].size;
        let (ti, tj) = (self.jumps[i].time, self.jumps[j].time);
        let t = loop {
            let t = uniform_time(rng);
            if t == ti || t == tj || !self.has_time(t) {
                break t;
            }
        };
        let (hi, lo) = if i > j { (i, j) } else { (j, i) };
        self.remove(hi);
        self.remove(lo);
        self.push(SpaceTimeAtom { time: t, size })
    }

    /// Pushes accumulated rounding back into the largest jump once
    /// `|Σ sizes - c|` exceeds [`CONSERVATION_TOLERANCE`].
    fn renormalize(&mut self) -> Result<()> {
        if self.jumps.len() == 1 {
            self.jumps[0].size = self.c;
            return Ok(());
        }
        let drift = self.c - self.jumps.iter().map(|j| j.size).sum::<f64>();
        if drift.abs() > CONSERVATION_TOLERANCE {
            let k = (0..self.jumps.len())
                .max_by(|&a, &b| self.jumps[a].size.abs().total_cmp(&self.jumps[b].size.abs()))
                .expect("non-empty state");
            self.jumps[k].size += drift;
            self.rebuild()?;
        }
        Ok(())
    }

    /// `|Σ sizes - c|` of the current state.
    pub fn conservation_error(&self) -> f64 {
        (self.jumps.iter().map(|j| j.size).sum::<f64>() - self.c).abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McmcOutput {
    pub paths: Vec<JumpPath>,
    pub chains: usize,
    pub events: u64,
    /// Set when some chain hit its event cap; `paths` is then incomplete.
    pub partial: bool,
}

/// Runs one chain and records its state at `burn_in + k · sample_interval`.
fn run_chain(
    model: &JumpDensity,
    phi: &JumpDensity,
    x: f64,
    y: f64,
    config: &ChainConfig,
    count: usize,
    rng: &mut SimRng,
) -> Result<(Vec<JumpPath>, u64, bool)> {
    let mut chain = BridgeChain::new(model, phi, x, y, rng)?;
    let mut next = config.burn_in;
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        if chain.events >= config.max_events {
            return Ok((out, chain.events, true));
        }
        let w = chain.waiting_time(rng);
        if chain.clock + w >= next {
            // Memorylessness: the holding time can be redrawn from `next`.
            let mut path = chain.path();
            path.nudge_largest_jump(y - path.terminal());
            out.push(path);
            chain.clock = next;
            next += config.sample_interval;
            continue;
        }
        chain.clock += w;
        chain.fire(rng)?;
    }
    Ok((out, chain.events, false))
}

/// `n` bridge paths from independent chains; chain `i` uses
/// `child_seed(config.seed, i)` and results are concatenated in chain order.
pub fn sample_bridge_mcmc(
    model: &JumpDensity,
    x: f64,
    y: f64,
    phi: &JumpDensity,
    config: &ChainConfig,
    n: usize,
) -> Result<McmcOutput> {
    config.validate()?;
    let per = config.samples_per_chain;
    let plan = blocks(n, per);
    let results: Vec<Result<(Vec<JumpPath>, u64, bool)>> = plan
        .par_iter()
        .map(|&(i, count)| {
            let mut rng = crate::rng::rng_from_seed(child_seed(config.seed, i));
            run_chain(model, phi, x, y, config, count, &mut rng)
        })
        .collect();
    let mut out = McmcOutput { paths: Vec::with_capacity(n), chains: plan.len(), events: 0, partial: false };
    for r in results {
        let (paths, events, partial) = r?;
        out.paths.extend(paths);
        out.events += events;
        out.partial |= partial;
    }
    Ok(out)
}

/// Periodic OU path driven by a forward compound-Poisson path started at 0.
pub fn sample_perou<R: Rng + ?Sized>(model: &JumpDensity, c: f64, rng: &mut R) -> Result<OUPath> {
    ou_map(c, &sample_compound_poisson(model, 0.0, rng))
}

/// JSON-lines dump, one `{"z0":…, "jumps":[[t,size],…]}` object per path.
pub fn paths_to_json_lines(paths: &[JumpPath]) -> String {
    let mut out = String::new();
    for p in paths {
        out.push_str(&serde_json::to_string(p).expect("paths serialize"));
        out.push('\n');
    }
    out
}

/// Summary CSV with one row per path: `sample,jump_count,terminal`.
pub fn paths_summary_csv(paths: &[JumpPath]) -> String {
    let mut out = String::from("sample,jump_count,terminal\n");
    for (k, p) in paths.iter().enumerate() {
        writeln!(out, "{k},{},{}", p.jump_count(), p.terminal()).expect("writing to a String");
    }
    out
}
