//! Pure-jump càdlàg paths on `[0, 1]` and the periodic Ornstein-Uhlenbeck map.
//!
//! A [`JumpPath`] is an initial value plus time-sorted jumps; it is in
//! bijection with its jump configuration `μ_Z`. Splits and merges return new
//! paths and keep `Z_1 - Z_0 = B(μ_Z)` unchanged.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::point_measure::{SpaceTimeAtom, SpaceTimeConfiguration};

/// Default number of grid points for CSV export.
pub const DEFAULT_EXPORT_POINTS: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpPath {
    #[serde(rename = "z0")]
    initial: f64,
    jumps: Vec<SpaceTimeAtom>,
}

impl JumpPath {
    /// Builds the path `Z_t = initial + Σ_{s ≤ t} size_s` from its jumps.
    pub fn from_configuration(initial: f64, config: &SpaceTimeConfiguration) -> Result<Self> {
        Self::new(initial, config.atoms().to_vec())
    }

    pub fn new(initial: f64, mut jumps: Vec<SpaceTimeAtom>) -> Result<Self> {
        if !initial.is_finite() {
            return Err(Error::Domain(format!("initial value must be finite, got {initial}")));
        }
        jumps.sort_by(|a, b| a.time.total_cmp(&b.time));
        for j in &jumps {
            if j.time <= 0.0 {
                return Err(Error::Domain("jump times must lie in (0, 1]".into()));
            }
        }
        if jumps.windows(2).any(|w| w[0].time == w[1].time) {
            return Err(Error::Domain("duplicate jump times".into()));
        }
        Ok(Self { initial, jumps })
    }

    /// The constant path.
    pub fn constant(initial: f64) -> Self {
        Self { initial, jumps: Vec::new() }
    }

    pub fn initial(&self) -> f64 {
        self.initial
    }

    pub fn jumps(&self) -> &[SpaceTimeAtom] {
        &self.jumps
    }

    pub fn jump_count(&self) -> usize {
        self.jumps.len()
    }

    /// Jump configuration `μ_Z`.
    pub fn configuration(&self) -> SpaceTimeConfiguration {
        SpaceTimeConfiguration::new(self.jumps.clone())
    }

    /// `Z_1 - Z_0`, the first moment of `μ_Z`.
    pub fn increment(&self) -> f64 {
        self.jumps.iter().map(|j| j.size).sum()
    }

    pub fn terminal(&self) -> f64 {
        self.initial + self.increment()
    }

    /// `Z_t` (right-continuous).
    pub fn value_at(&self, t: f64) -> f64 {
        let k = self.jumps.partition_point(|j| j.time <= t);
        self.initial + self.jumps[..k].iter().map(|j| j.size).sum::<f64>()
    }

    /// `Z_{t-}`.
    pub fn left_limit(&self, t: f64) -> f64 {
        let k = self.jumps.partition_point(|j| j.time < t);
        self.initial + self.jumps[..k].iter().map(|j| j.size).sum::<f64>()
    }

    fn has_time(&self, t: f64) -> bool {
        self.jumps.binary_search_by(|j| j.time.total_cmp(&t)).is_ok()
    }

    fn insert(&mut self, atom: SpaceTimeAtom) {
        let pos = self.jumps.partition_point(|j| j.time < atom.time);
        self.jumps.insert(pos, atom);
    }

    /// Replaces jump `index` by `(s1, x1)` and `(s2, Δ - x1)`.
    ///
    /// Returns [`Error::Resample`] when the new times collide with each other
    /// or with the remaining jumps, or when `x1 ∈ {0, Δ}` would create a
    /// zero-size jump; these are null events under diffuse laws.
    pub fn split_jump(&self, index: usize, s1: f64, x1: f64, s2: f64) -> Result<Self> {
        if index >= self.jumps.len() {
            return Err(Error::IndexOutOfRange { index, len: self.jumps.len() });
        }
        for s in [s1, s2] {
            if !(s > 0.0 && s <= 1.0) {
                return Err(Error::Domain(format!("split time {s} outside (0, 1]")));
            }
        }
        let removed = self.jumps[index];
        let x2 = removed.size - x1;
        if x1 == 0.0 || x2 == 0.0 || !x1.is_finite() {
            return Err(Error::Resample("split would create a zero-size jump"));
        }
        if s1 == s2 {
            return Err(Error::Resample("split times coincide"));
        }
        let mut out = self.clone();
        out.jumps.remove(index);
        if out.has_time(s1) || out.has_time(s2) {
            return Err(Error::Resample("split time collides with an existing jump"));
        }
        out.insert(SpaceTimeAtom { time: s1, size: x1 });
        out.insert(SpaceTimeAtom { time: s2, size: x2 });
        Ok(out)
    }

    /// Replaces jumps `i` and `j` by one jump at time `t` carrying their
    /// summed size.
    pub fn merge_jumps(&self, i: usize, j: usize, t: f64) -> Result<Self> {
        let len = self.jumps.len();
        for index in [i, j] {
            if index >= len {
                return Err(Error::IndexOutOfRange { index, len });
            }
        }
        if i == j {
            return Err(Error::Domain("cannot merge a jump with itself".into()));
        }
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::Domain(format!("merge time {t} outside (0, 1]")));
        }
        let size = self.jumps[i].size + self.jumps[j].size;
        if size == 0.0 {
            return Err(Error::Resample("merged jump would have zero size"));
        }
        let mut out = self.clone();
        let (hi, lo) = if i > j { (i, j) } else { (j, i) };
        out.jumps.remove(hi);
        out.jumps.remove(lo);
        if out.has_time(t) {
            return Err(Error::Resample("merge time collides with an existing jump"));
        }
        out.insert(SpaceTimeAtom { time: t, size });
        Ok(out)
    }

    /// The path whose jumps are the union of both jump sets (initial values
    /// add).
    pub fn superpose(&self, other: &JumpPath) -> Result<Self> {
        let mut jumps = self.jumps.clone();
        jumps.extend_from_slice(&other.jumps);
        Self::new(self.initial + other.initial, jumps)
    }

    /// Adds `delta` to the largest jump, e.g. to remove accumulated rounding.
    pub(crate) fn nudge_largest_jump(&mut self, delta: f64) {
        if let Some(j) = self.jumps.iter_mut().max_by(|a, b| a.size.abs().total_cmp(&b.size.abs())) {
            j.size += delta;
        }
    }

    /// `t,value` rows on a uniform grid, with both one-sided limits at
    /// every jump time.
    pub fn to_csv(&self, grid_points: usize) -> String {
        export_csv(grid_points, &self.jumps, |t| self.value_at(t), |t| self.left_limit(t))
    }
}

fn export_csv(
    grid_points: usize,
    jumps: &[SpaceTimeAtom],
    value: impl Fn(f64) -> f64,
    left: impl Fn(f64) -> f64,
) -> String {
    let mut rows: Vec<(f64, u8)> = Vec::new();
    let n = grid_points.max(2);
    for k in 0..n {
        let t = k as f64 / (n - 1) as f64;
        rows.push((t, 1));
    }
    for j in jumps {
        rows.push((j.time, 0));
        rows.push((j.time, 1));
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    rows.dedup();
    let mut out = String::from("t,value\n");
    for (t, kind) in rows {
        let v = if kind == 0 { left(t) } else { value(t) };
        writeln!(out, "{t},{v}").expect("writing to a String");
    }
    out
}

/// The periodic Ornstein-Uhlenbeck path `X^c(Z)`, evaluated lazily from the
/// closed form:
///
/// `X_0 = X_1 = (e^c - 1)^{-1} ∫_0^1 e^{cs} dZ_s`,
/// `X_t = e^{-ct} (X_0 + ∫_0^t e^{cs} dZ_s)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OUPath {
    c: f64,
    x0: f64,
    source: JumpPath,
    // Prefix sums of e^{c s_i} x_i aligned with source jumps.
    #[serde(skip)]
    weighted: Vec<f64>,
}

/// Largest `|c|` for which `e^{±c}` stays representable.
const MAX_DAMPING: f64 = 700.0;

/// Applies the periodic Ornstein-Uhlenbeck map with damping `c`.
pub fn ou_map(c: f64, z: &JumpPath) -> Result<OUPath> {
    OUPath::new(c, z.clone())
}

impl OUPath {
    pub fn new(c: f64, source: JumpPath) -> Result<Self> {
        if c == 0.0 || !c.is_finite() {
            return Err(Error::InvalidParameter(format!("damping must be nonzero and finite, got {c}")));
        }
        if c.abs() > MAX_DAMPING {
            return Err(Error::Overflow { what: "periodic OU map", x1: c, x2: 0.0 });
        }
        let mut weighted = Vec::with_capacity(source.jumps.len());
        let mut acc = 0.0;
        for j in &source.jumps {
            acc += (c * j.time).exp() * j.size;
            weighted.push(acc);
        }
        let x0 = acc / c.exp_m1();
        Ok(Self { c, x0, source, weighted })
    }

    pub fn damping(&self) -> f64 {
        self.c
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn source(&self) -> &JumpPath {
        &self.source
    }

    /// Jumps of `X`, identical to those of the driving path.
    pub fn jumps(&self) -> &[SpaceTimeAtom] {
        &self.source.jumps
    }

    fn eval(&self, t: f64, k: usize) -> f64 {
        let integral = if k == 0 { 0.0 } else { self.weighted[k - 1] };
        (-self.c * t).exp() * (self.x0 + integral)
    }

    pub fn value_at(&self, t: f64) -> f64 {
        let k = self.source.jumps.partition_point(|j| j.time <= t);
        self.eval(t, k)
    }

    pub fn left_limit(&self, t: f64) -> f64 {
        let k = self.source.jumps.partition_point(|j| j.time < t);
        self.eval(t, k)
    }

    /// `sup_t |X_t|`. Between jumps `X_t = e^{-ct}·const` is monotone, so
    /// the supremum is attained at a segment end or one-sided limit.
    pub fn sup_abs(&self) -> f64 {
        let mut best = self.x0.abs().max(self.value_at(1.0).abs());
        for j in &self.source.jumps {
            best = best.max(self.left_limit(j.time).abs()).max(self.value_at(j.time).abs());
        }
        best
    }

    /// The OU image of the split driving path, `X^c(Θ Z) = X^c(Z) + X^c(ΘZ - Z)`.
    pub fn split_source(&self, index: usize, s1: f64, x1: f64, s2: f64) -> Result<Self> {
        OUPath::new(self.c, self.source.split_jump(index, s1, x1, s2)?)
    }

    pub fn to_csv(&self, grid_points: usize) -> String {
        export_csv(grid_points, &self.source.jumps, |t| self.value_at(t), |t| self.left_limit(t))
    }
}
