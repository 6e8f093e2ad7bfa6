//! Jump intensities `ν(dx) = λ f(x) dx`, the reciprocal characteristic
//! `χ_ν(x₁, x₂) = ν(x₁ + x₂) / (ν(x₁) ν(x₂))`, and numerical estimates of the
//! convolution constants `k ≤ (ρ∗ρ)/ρ ≤ K` that drive the domination bounds.
//!
//! Two families are supported, plus truncation:
//!
//! - Cauchy type `f_α(y) = r_α / (1 + |y|^α)`, `α > 1`;
//! - symmetric exponential type `g_β(y) = r_β exp(-|y|^β)`, `β > 0`
//!   (`β = 1` is Laplace, `β = 2` the Gaussian `e^{-y²}/√π`);
//! - `truncated(<family>, cutoff=c)`: the jumps with `|x| > c` only.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate, integrate_real_line, Tolerance};

/// Largest exponent `exp` accepts without overflowing.
const MAX_EXP: f64 = 709.0;

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Cauchy { alpha: f64, norm: f64 },
    Exp { beta: f64, norm: f64 },
    Truncated { base: Box<JumpDensity>, cutoff: f64, mass: f64 },
}

/// A finite jump intensity `ν(dx) = λ f(x) dx` with `f` a probability density.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpDensity {
    lambda: f64,
    family: Family,
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("lambda must be positive and finite, got {lambda}")))
    }
}

impl JumpDensity {
    /// Cauchy-type density `r_α / (1 + |y|^α)`; `r_α = α sin(π/α) / (2π)`.
    pub fn cauchy(alpha: f64, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        if !(alpha > 1.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("alpha must exceed 1, got {alpha}")));
        }
        let norm = alpha * (PI / alpha).sin() / (2.0 * PI);
        Ok(Self { lambda, family: Family::Cauchy { alpha, norm } })
    }

    /// Exponential-type density `r_β exp(-|y|^β)`; `r_β = 1 / (2 Γ(1 + 1/β))`.
    pub fn exp(beta: f64, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
        }
        let norm = 0.5 / statrs::function::gamma::gamma(1.0 + 1.0 / beta);
        Ok(Self { lambda, family: Family::Exp { beta, norm } })
    }

    pub fn laplace(lambda: f64) -> Result<Self> {
        Self::exp(1.0, lambda)
    }

    pub fn gauss(lambda: f64) -> Result<Self> {
        Self::exp(2.0, lambda)
    }

    /// Keeps only jumps with `|x| > cutoff`: `λ' = λ ∫_{|x|>c} f` and
    /// `f' = f 1{|x|>c} / ∫_{|x|>c} f`. A zero cutoff returns the model
    /// unchanged.
    pub fn truncate(&self, cutoff: f64) -> Result<Self> {
        if !(cutoff >= 0.0 && cutoff.is_finite()) {
            return Err(Error::InvalidParameter(format!("cutoff must be nonnegative, got {cutoff}")));
        }
        if cutoff == 0.0 {
            return Ok(self.clone());
        }
        let inner = integrate(|y| self.pdf(y), -cutoff, cutoff, Tolerance::default())?.value;
        let mass = 1.0 - inner;
        if mass <= 1e-12 {
            return Err(Error::Domain(format!("no jump mass survives cutoff {cutoff}")));
        }
        Ok(Self {
            lambda: self.lambda * mass,
            family: Family::Truncated { base: Box::new(self.clone()), cutoff, mass },
        })
    }

    /// Total jump rate `λ`.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    /// Same jump law with a different rate.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        let family = match &self.family {
            Family::Truncated { base, cutoff, mass } => Family::Truncated {
                base: Box::new(base.with_lambda(lambda / mass)?),
                cutoff: *cutoff,
                mass: *mass,
            },
            other => other.clone(),
        };
        Ok(Self { lambda, family })
    }

    /// Normalised jump density `f(y)`.
    pub fn pdf(&self, y: f64) -> f64 {
        self.ln_pdf(y).exp()
    }

    pub fn ln_pdf(&self, y: f64) -> f64 {
        match &self.family {
            Family::Cauchy { alpha, norm } => {
                let a = y.abs();
                let ln_den = if a <= 1.0 {
                    a.powf(*alpha).ln_1p()
                } else {
                    alpha * a.ln() + a.powf(-alpha).ln_1p()
                };
                norm.ln() - ln_den
            }
            Family::Exp { beta, norm } => norm.ln() - y.abs().powf(*beta),
            Family::Truncated { base, cutoff, mass } => {
                if y.abs() > *cutoff {
                    base.ln_pdf(y) - mass.ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    /// Intensity density `ν(y) = λ f(y)`.
    pub fn intensity(&self, y: f64) -> f64 {
        self.lambda * self.pdf(y)
    }

    pub fn ln_intensity(&self, y: f64) -> f64 {
        self.lambda.ln() + self.ln_pdf(y)
    }

    /// Draws one jump size from `f`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        match &self.family {
            Family::Cauchy { alpha, .. } => sign * sample_cauchy_type_abs(*alpha, rng),
            Family::Exp { beta, .. } => {
                let w: f64 = Gamma::new(1.0 / beta, 1.0).expect("valid gamma shape").sample(rng);
                sign * w.powf(1.0 / beta)
            }
            Family::Truncated { base, cutoff, .. } => loop {
                let x = base.sample(rng);
                if x.abs() > *cutoff {
                    break x;
                }
            },
        }
    }

    /// Reciprocal characteristic `χ_ν(x₁, x₂)`, evaluated in log space.
    pub fn chi(&self, x1: f64, x2: f64) -> Result<f64> {
        // Fixed argument order keeps χ bitwise symmetric.
        let (a, b) = if x1.total_cmp(&x2).is_le() { (x1, x2) } else { (x2, x1) };
        let ln1 = self.ln_intensity(a);
        let ln2 = self.ln_intensity(b);
        if ln1 == f64::NEG_INFINITY || ln2 == f64::NEG_INFINITY {
            return Err(Error::Domain(format!("chi undefined where the intensity vanishes: ({x1}, {x2})")));
        }
        let ln_chi = self.ln_intensity(a + b) - ln1 - ln2;
        if ln_chi > MAX_EXP || ln_chi.is_nan() {
            return Err(Error::Overflow { what: "chi", x1, x2 });
        }
        Ok(ln_chi.exp())
    }

    /// Points where `y ↦ f(y) f(x - y)` has kinks, jumps or modes.
    fn convolution_breakpoints(&self, x: f64) -> Vec<f64> {
        let mut pts = vec![0.0, 0.5 * x, x];
        if let Family::Truncated { cutoff, .. } = &self.family {
            pts.extend([-cutoff, *cutoff, x - cutoff, x + cutoff]);
        }
        pts
    }

    /// Full-line self-convolution `(f∗f)(x)`.
    pub fn self_convolution(&self, x: f64) -> Result<f64> {
        let est = integrate_real_line(
            |y| (self.ln_pdf(y) + self.ln_pdf(x - y)).exp(),
            &self.convolution_breakpoints(x),
            Tolerance::default(),
        )?;
        Ok(est.value)
    }

    /// The ratio `(f∗f)(x) / f(x)` (`H_α`, `G_β`), integrated as
    /// `∫ exp(ln f(y) + ln f(x-y) - ln f(x)) dy` so that tails do not underflow.
    pub fn convolution_ratio(&self, x: f64) -> Result<f64> {
        let ln_fx = self.ln_pdf(x);
        if ln_fx == f64::NEG_INFINITY {
            return Err(Error::Overflow { what: "convolution ratio (f(x) = 0)", x1: x, x2: 0.0 });
        }
        // The integrand peaks near y = x/2; refuse before exp() saturates.
        let peak = 2.0 * self.ln_pdf(0.5 * x) - ln_fx;
        if peak > MAX_EXP - 10.0 {
            return Err(Error::Overflow { what: "convolution ratio", x1: x, x2: peak });
        }
        let est = integrate_real_line(
            |y| (self.ln_pdf(y) + self.ln_pdf(x - y) - ln_fx).exp(),
            &self.convolution_breakpoints(x),
            Tolerance::default(),
        )?;
        if !est.value.is_finite() {
            return Err(Error::Overflow { what: "convolution ratio", x1: x, x2: est.value });
        }
        Ok(est.value)
    }

    /// Half-line convolution `∫_0^x f(y) f(x-y) dy` on the cone `[0, ∞)`.
    pub fn cone_convolution(&self, x: f64) -> Result<f64> {
        cone_convolution(|y| self.pdf(y), x)
    }

    /// Grid estimates `k̂ = λ min (f∗f)/f` and `K̂ = λ max (f∗f)/f` over
    /// `grid_points` equally spaced points of `[-halfwidth, halfwidth]`.
    ///
    /// `K̂` is reported as `+∞` (with a flag) when the ratio overflows on the
    /// grid or is known to be unbounded, rather than as the grid maximum.
    pub fn estimate_bounds(&self, grid_halfwidth: f64, grid_points: usize) -> Result<ConvolutionBounds> {
        if grid_points < 3 {
            return Err(Error::InvalidParameter(format!("grid needs at least 3 points, got {grid_points}")));
        }
        if !(grid_halfwidth > 0.0 && grid_halfwidth.is_finite()) {
            return Err(Error::InvalidParameter(format!("grid half-width must be positive, got {grid_halfwidth}")));
        }
        let step = 2.0 * grid_halfwidth / (grid_points - 1) as f64;
        let mut lower = (f64::INFINITY, 0.0);
        let mut upper = (f64::NEG_INFINITY, 0.0);
        let mut overflow_at = None;
        for i in 0..grid_points {
            let x = if 2 * i + 1 == grid_points { 0.0 } else { -grid_halfwidth + step * i as f64 };
            match self.convolution_ratio(x) {
                Ok(r) => {
                    if r < lower.0 {
                        lower = (r, x);
                    }
                    if r > upper.0 {
                        upper = (r, x);
                    }
                }
                Err(Error::Overflow { .. }) => {
                    overflow_at.get_or_insert(x);
                }
                Err(e) => return Err(e),
            }
        }
        if !lower.0.is_finite() {
            return Err(Error::Domain("convolution ratio overflowed at every grid point".into()));
        }
        let analytic = self.analytic_bounds();
        let unbounded = if let Some(at) = overflow_at {
            Some(Unbounded::OverflowOnGrid { at })
        } else if matches!(analytic, Some(AnalyticBounds { upper, .. }) if upper.is_infinite()) {
            Some(Unbounded::Analytic)
        } else {
            None
        };
        let upper_value = if unbounded.is_some() { f64::INFINITY } else { self.lambda * upper.0 };
        Ok(ConvolutionBounds {
            lower: self.lambda * lower.0,
            upper: upper_value,
            argmin: lower.1,
            argmax: upper.1,
            grid_max: self.lambda * upper.0,
            unbounded,
            grid: GridSpec { halfwidth: grid_halfwidth, points: grid_points },
            tail_certificate: self.tail_note(),
            analytic,
        })
    }

    /// Closed-form ρ-level constants where they are known.
    pub fn analytic_bounds(&self) -> Option<AnalyticBounds> {
        let l = self.lambda;
        let (lower, upper) = match &self.family {
            Family::Cauchy { alpha, .. } if *alpha == 2.0 => (Some(0.5 * l), 2.0 * l),
            Family::Exp { beta, .. } if *beta == 1.0 => (Some(0.5 * l), f64::INFINITY),
            Family::Exp { beta, .. } if *beta == 2.0 => (Some(l / 2f64.sqrt()), f64::INFINITY),
            Family::Exp { beta, .. } if *beta > 1.0 => (None, f64::INFINITY),
            _ => return None,
        };
        Some(AnalyticBounds { lower, upper })
    }

    fn tail_note(&self) -> String {
        match &self.family {
            Family::Cauchy { alpha, .. } if *alpha == 2.0 => {
                "H_2(x) = 2(1+x²)/(4+x²): increases to its supremum 2 as |x| → ∞, minimum 1/2 at x = 0".into()
            }
            Family::Cauchy { .. } => {
                "regularly varying tail: (f∗f)/f → 2 as |x| → ∞; bounded above and below, grid values are estimates, not certified constants".into()
            }
            Family::Exp { beta, .. } if *beta == 1.0 => "G_1(x) = (1+|x|)/2 grows linearly: no finite K".into(),
            Family::Exp { beta, .. } if *beta == 2.0 => "G_2(x) = e^{x²/2}/√2 grows without bound: no finite K".into(),
            Family::Exp { beta, .. } if *beta >= 1.0 => "light tail (β ≥ 1): (g∗g)/g unbounded, no finite K".into(),
            Family::Exp { .. } => "subexponential tail (β < 1): (g∗g)/g → 2 as |x| → ∞".into(),
            Family::Truncated { cutoff, .. } => format!(
                "f vanishes on (-{cutoff}, {cutoff}) while f∗f need not: no finite K; lower value taken where f > 0"
            ),
        }
    }

    /// Interquartile range of `f` (all families are symmetric about 0).
    pub fn interquartile_range(&self) -> Result<f64> {
        let tol = Tolerance { abs: 1e-12, rel: 1e-10, ..Tolerance::default() };
        let cdf_from_zero = |q: f64| integrate(|y| self.pdf(y), 0.0, q, tol).map(|e| e.value);
        let mut hi = 1.0;
        while cdf_from_zero(hi)? < 0.25 {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if cdf_from_zero(mid)? < 0.25 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(lo + hi)
    }
}

/// Sampler for `|Y|` with density proportional to `1 / (1 + y^α)` on `[0, ∞)`.
///
/// Rejection from the envelope `min(1, y^{-α})` (uniform on `[0, 1]`, Pareto
/// beyond); the acceptance probability is at least 1/2.
fn sample_cauchy_type_abs<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let p_body = (alpha - 1.0) / alpha;
    loop {
        let y = if rng.random::<f64>() < p_body {
            rng.random::<f64>()
        } else {
            let u: f64 = 1.0 - rng.random::<f64>();
            u.powf(-1.0 / (alpha - 1.0))
        };
        let accept = if y <= 1.0 { 1.0 / (1.0 + y.powf(alpha)) } else { 1.0 / (1.0 + y.powf(-alpha)) };
        if rng.random::<f64>() < accept {
            return y;
        }
    }
}

/// Half-line convolution `∫_0^x f(y) f(x-y) dy` of an arbitrary density.
pub fn cone_convolution<F: Fn(f64) -> f64>(density: F, x: f64) -> Result<f64> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::Domain(format!("cone convolution needs x > 0, got {x}")));
    }
    Ok(integrate(|y| density(y) * density(x - y), 0.0, x, Tolerance::default())?.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub halfwidth: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticBounds {
    pub lower: Option<f64>,
    #[serde(serialize_with = "ser_maybe_inf", deserialize_with = "de_maybe_inf")]
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reason")]
pub enum Unbounded {
    /// The ratio overflowed at grid point `at`.
    OverflowOnGrid { at: f64 },
    /// The ratio is unbounded in closed form.
    Analytic,
}

/// ρ-level constants `k̂ ≤ (ρ∗ρ)/ρ ≤ K̂` estimated on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvolutionBounds {
    /// `k̂ = λ min (f∗f)/f`.
    pub lower: f64,
    /// `K̂ = λ max (f∗f)/f`, or `+∞` when flagged.
    #[serde(serialize_with = "ser_maybe_inf", deserialize_with = "de_maybe_inf")]
    pub upper: f64,
    pub argmin: f64,
    pub argmax: f64,
    /// Largest finite grid value, whether or not `upper` is flagged.
    pub grid_max: f64,
    pub unbounded: Option<Unbounded>,
    pub grid: GridSpec,
    pub tail_certificate: String,
    pub analytic: Option<AnalyticBounds>,
}

pub(crate) fn ser_maybe_inf<S: serde::Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
    } else {
        s.serialize_f64(*v)
    }
}

pub(crate) fn ser_pair_maybe_inf<S: serde::Serializer>(v: &(f64, f64), s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeTuple;
    struct MaybeInf(f64);
    impl Serialize for MaybeInf {
        fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
            ser_maybe_inf(&self.0, s)
        }
    }
    let mut t = s.serialize_tuple(2)?;
    t.serialize_element(&MaybeInf(v.0))?;
    t.serialize_element(&MaybeInf(v.1))?;
    t.end()
}

fn de_maybe_inf<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Num {
        F(f64),
        S(String),
    }
    match Num::deserialize(d)? {
        Num::F(v) => Ok(v),
        Num::S(s) if s == "inf" => Ok(f64::INFINITY),
        Num::S(s) if s == "-inf" => Ok(f64::NEG_INFINITY),
        Num::S(s) => Err(serde::de::Error::custom(format!("not a number: {s}"))),
    }
}

impl fmt::Display for JumpDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.family {
            Family::Cauchy { alpha, .. } => write!(f, "cauchy(alpha={alpha},lambda={})", self.lambda),
            Family::Exp { beta, .. } if *beta == 1.0 => write!(f, "laplace(lambda={})", self.lambda),
            Family::Exp { beta, .. } if *beta == 2.0 => write!(f, "gauss(lambda={})", self.lambda),
            Family::Exp { beta, .. } => write!(f, "exp(beta={beta},lambda={})", self.lambda),
            Family::Truncated { base, cutoff, .. } => write!(f, "truncated({base},cutoff={cutoff})"),
        }
    }
}

/// Splits `s` at commas that are not nested inside parentheses.
fn split_top_level(s: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, ch) in s.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                parts.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&s[start..]);
    parts.into_iter().map(str::trim).filter(|p| !p.is_empty()).collect()
}

pub const MODEL_GRAMMAR: &str = "\
model spec grammar:
  cauchy(alpha=<a > 1>, lambda=<l > 0>)
  exp(beta=<b > 0>, lambda=<l > 0>)
  laplace(lambda=<l>)          alias exp(beta=1)
  gauss(lambda=<l>)            alias exp(beta=2)
  truncated(<model>, cutoff=<c >= 0>)
lambda defaults to 1 when omitted";

impl FromStr for JumpDensity {
    type Err = Error;

    fn from_str(spec: &str) -> Result<Self> {
        let bad = |reason: &str| Error::ModelSpec { spec: spec.to_string(), reason: reason.to_string() };
        let s = spec.trim();
        let open = s.find('(').ok_or_else(|| bad("expected `name(...)`"))?;
        if !s.ends_with(')') {
            return Err(bad("missing closing parenthesis"));
        }
        let name = s[..open].trim().to_ascii_lowercase();
        let inner = &s[open + 1..s.len() - 1];
        let mut args = split_top_level(inner);

        let base = if name == "truncated" {
            if args.is_empty() {
                return Err(bad("truncated needs a base model"));
            }
            Some(args.remove(0).parse::<JumpDensity>()?)
        } else {
            None
        };

        let mut params = std::collections::BTreeMap::new();
        for arg in args {
            let (k, v) = arg.split_once('=').ok_or_else(|| bad(&format!("expected key=value, got `{arg}`")))?;
            let value: f64 = v.trim().parse().map_err(|_| bad(&format!("`{}` is not a number", v.trim())))?;
            if params.insert(k.trim().to_ascii_lowercase(), value).is_some() {
                return Err(bad(&format!("duplicate key `{}`", k.trim())));
            }
        }
        let mut take = |key: &str| params.remove(key);
        let lambda = take("lambda").unwrap_or(1.0);
        let model = match name.as_str() {
            "cauchy" => JumpDensity::cauchy(take("alpha").ok_or_else(|| bad("cauchy needs alpha"))?, lambda),
            "exp" => JumpDensity::exp(take("beta").ok_or_else(|| bad("exp needs beta"))?, lambda),
            "laplace" => JumpDensity::laplace(lambda),
            "gauss" | "gaussian" => JumpDensity::gauss(lambda),
            "truncated" => {
                let cutoff = take("cutoff").ok_or_else(|| bad("truncated needs cutoff"))?;
                base.expect("parsed above").truncate(cutoff)
            }
            other => return Err(bad(&format!("unknown family `{other}`"))),
        }
        .map_err(|e| bad(&e.to_string()))?;
        if let Some(extra) = params.keys().next() {
            return Err(bad(&format!("unexpected key `{extra}`")));
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use crate::stats::MeanVar;
    use std::f64::consts::{E, SQRT_2};

    fn laplace() -> JumpDensity {
        JumpDensity::laplace(1.0).unwrap()
    }

    #[test]
    fn normalizers_match_closed_forms() {
        let tol = 1e-8;
        match JumpDensity::cauchy(2.0, 1.0).unwrap().family {
            Family::Cauchy { norm, .. } => assert!((norm - 1.0 / PI).abs() < tol),
            _ => unreachable!(),
        }
        match laplace().family {
            Family::Exp { norm, .. } => assert!((norm - 0.5).abs() < tol),
            _ => unreachable!(),
        }
        match JumpDensity::gauss(1.0).unwrap().family {
            Family::Exp { norm, .. } => assert!((norm - 1.0 / PI.sqrt()).abs() < tol),
            _ => unreachable!(),
        }
    }

    #[test]
    fn densities_integrate_to_one() {
        for m in [
            JumpDensity::cauchy(2.0, 1.0).unwrap(),
            JumpDensity::cauchy(3.0, 2.0).unwrap(),
            JumpDensity::cauchy(1.5, 1.0).unwrap(),
            laplace(),
            JumpDensity::gauss(1.0).unwrap(),
            JumpDensity::exp(0.5, 1.0).unwrap(),
            laplace().truncate(1.0).unwrap(),
        ] {
            let bp: &[f64] = match m.family() {
                Family::Truncated { cutoff, .. } => &[-*cutoff, 0.0, *cutoff],
                _ => &[0.0],
            };
            let total = integrate_real_line(|y| m.pdf(y), bp, Tolerance::default()).unwrap().value;
            assert!((total - 1.0).abs() < 1e-8, "{m}: {total}");
            assert!(m.pdf(0.3) >= 0.0);
        }
    }

    #[test]
    fn densities_positive() {
        for m in [JumpDensity::cauchy(2.0, 1.0).unwrap(), laplace(), JumpDensity::gauss(1.0).unwrap()] {
            for x in [-20.0, -1.0, 0.0, 1e-3, 7.0, 25.0] {
                assert!(m.pdf(x) > 0.0, "{m} at {x}");
            }
            // Beyond underflow the log-density stays finite.
            assert!(m.ln_pdf(1e6).is_finite());
        }
    }

    #[test]
    fn chi_laplace_examples() {
        let m = laplace();
        // (e^{-2}/2) / (e^{-1}/2)^2 = 2
        assert!((m.chi(1.0, 1.0).unwrap() - 2.0).abs() < 1e-12);
        // (1/2) / (e^{-1}/2)^2 = 2 e^2
        assert!((m.chi(1.0, -1.0).unwrap() - 2.0 * E * E).abs() < 1e-10);
    }

    #[test]
    fn chi_symmetric_and_matches_direct_ratio() {
        let mut rng = rng_from_seed(3);
        let models = [laplace(), JumpDensity::cauchy(2.0, 1.5).unwrap(), JumpDensity::gauss(0.7).unwrap()];
        for m in &models {
            for _ in 0..1000 {
                let x1 = m.sample(&mut rng);
                let x2 = m.sample(&mut rng);
                let a = m.chi(x1, x2).unwrap();
                assert_eq!(a, m.chi(x2, x1).unwrap());
                let direct = m.intensity(x1 + x2) / (m.intensity(x1) * m.intensity(x2));
                assert!((a - direct).abs() <= 1e-12 * direct.max(1e-300) * 10.0, "{m} {x1} {x2}");
            }
        }
    }

    #[test]
    fn chi_overflow_is_reported() {
        let g = JumpDensity::gauss(1.0).unwrap();
        // ln χ = 2 |x1 x2| + ... at x1 = 30, x2 = -30
        match g.chi(30.0, -30.0) {
            Err(Error::Overflow { x1, x2, .. }) => assert_eq!((x1, x2), (30.0, -30.0)),
            other => panic!("expected overflow, got {other:?}"),
        }
    }

    #[test]
    fn cauchy_two_ratio_closed_form() {
        let m = JumpDensity::cauchy(2.0, 1.0).unwrap();
        assert!((m.convolution_ratio(0.0).unwrap() - 0.5).abs() < 1e-10);
        for x in [-40.0, -3.0, -0.5, 0.25, 1.0, 7.5, 49.0] {
            let exact = 2.0 * (1.0 + x * x) / (4.0 + x * x);
            let r = m.convolution_ratio(x).unwrap();
            assert!((r - exact).abs() < 1e-9, "x={x}: {r} vs {exact}");
            assert!((0.5 - 1e-6..=2.0 + 1e-6).contains(&r));
        }
    }

    #[test]
    fn laplace_ratio_is_linear() {
        let m = laplace();
        assert!((m.convolution_ratio(2.0).unwrap() - 1.5).abs() < 1e-10);
        for i in 0..=80 {
            let x = -20.0 + 0.5 * i as f64;
            let r = m.convolution_ratio(x).unwrap();
            assert!((r - 0.5 * (1.0 + x.abs())).abs() < 1e-8, "x={x}: {r}");
        }
    }

    #[test]
    fn gauss_ratio_closed_form() {
        // g₂∗g₂ is the N(0,1) density, so (g₂∗g₂)/g₂ = e^{x²/2}/√2.
        let m = JumpDensity::gauss(1.0).unwrap();
        assert!((m.convolution_ratio(0.0).unwrap() - 1.0 / SQRT_2).abs() < 1e-12);
        for i in 0..=60 {
            let x = -3.0 + 0.1 * i as f64;
            let exact = (0.5 * x * x).exp() / SQRT_2;
            let r = m.convolution_ratio(x).unwrap();
            assert!(((r - exact) / exact).abs() < 1e-6, "x={x}: {r} vs {exact}");
        }
    }

    #[test]
    fn ratio_matches_convolution_over_density() {
        let m = JumpDensity::cauchy(3.0, 1.0).unwrap();
        for x in [0.0, 1.3, -4.0] {
            let r = m.convolution_ratio(x).unwrap();
            let direct = m.self_convolution(x).unwrap() / m.pdf(x);
            assert!((r - direct).abs() < 1e-9 * r);
        }
    }

    #[test]
    fn bimodal_subexponential_ratio_tends_to_two() {
        let m = JumpDensity::exp(0.5, 1.0).unwrap();
        let far = m.convolution_ratio(400.0).unwrap();
        assert!(far > 1.5 && far < 2.5, "{far}");
        // Brute-force midpoint sum on a wide window as an independent route.
        let x = 30.0;
        let h = 1e-3;
        let mut brute = 0.0;
        let mut y = -200.0 + 0.5 * h;
        while y < 230.0 {
            brute += m.pdf(y) * m.pdf(x - y) * h;
            y += h;
        }
        let r = m.convolution_ratio(x).unwrap();
        assert!((r - brute / m.pdf(x)).abs() < 1e-4 * r, "{r} vs {}", brute / m.pdf(x));
    }

    #[test]
    fn bounds_cauchy_two() {
        let b = JumpDensity::cauchy(2.0, 1.0).unwrap().estimate_bounds(50.0, 201).unwrap();
        assert!((1.9..=2.0).contains(&b.upper), "{b:?}");
        assert!((0.5..=0.55).contains(&b.lower), "{b:?}");
        assert_eq!(b.argmin, 0.0);
        assert!(b.unbounded.is_none());
        let b3 = JumpDensity::cauchy(2.0, 3.0).unwrap().estimate_bounds(50.0, 201).unwrap();
        assert!((b3.upper - 3.0 * b.upper).abs() < 1e-9);
    }

    #[test]
    fn bounds_exponential_family() {
        let b1 = laplace().estimate_bounds(50.0, 201).unwrap();
        assert!((b1.lower - 0.5).abs() < 1e-10);
        assert_eq!(b1.argmin, 0.0);
        assert!(b1.upper.is_infinite());
        assert_eq!(b1.unbounded, Some(Unbounded::Analytic));

        let b2 = JumpDensity::gauss(1.0).unwrap().estimate_bounds(50.0, 201).unwrap();
        assert!((b2.lower - 1.0 / SQRT_2).abs() < 1e-9);
        assert!(b2.upper.is_infinite());
        assert!(matches!(b2.unbounded, Some(Unbounded::OverflowOnGrid { .. })));
    }

    #[test]
    fn bounds_reject_small_grid() {
        assert!(laplace().estimate_bounds(1.0, 2).is_err());
    }

    #[test]
    fn bounds_json_encodes_infinity() {
        let b = laplace().estimate_bounds(5.0, 11).unwrap();
        let js = serde_json::to_string(&b).unwrap();
        assert!(js.contains("\"upper\":\"inf\""), "{js}");
        let back: ConvolutionBounds = serde_json::from_str(&js).unwrap();
        assert!(back.upper.is_infinite());
    }

    #[test]
    fn cone_convolution_examples() {
        let one_sided = |y: f64| if y >= 0.0 { (-y).exp() } else { 0.0 };
        for x in [0.1, 1.0, 3.5] {
            let v = cone_convolution(one_sided, x).unwrap();
            assert!((v - x * (-x).exp()).abs() < 1e-13);
        }
        let small = cone_convolution(one_sided, 1e-9).unwrap();
        assert!(small < 1e-8);
        assert!(cone_convolution(one_sided, 0.0).is_err());

        let m = laplace();
        for x in [0.5, 2.0, 6.0] {
            assert!(m.cone_convolution(x).unwrap() <= m.self_convolution(x).unwrap());
        }
    }

    #[test]
    fn truncation() {
        let m = laplace();
        assert_eq!(m.truncate(0.0).unwrap(), m);
        let t = m.truncate(1.0).unwrap();
        assert!((t.lambda() - (-1.0f64).exp()).abs() < 1e-10);
        assert_eq!(t.pdf(0.5), 0.0);
        assert_eq!(t.pdf(-0.999), 0.0);
        assert!((t.pdf(2.0) - m.pdf(2.0) / (-1.0f64).exp()).abs() < 1e-10);
        let mut rng = rng_from_seed(5);
        assert!((0..1000).all(|_| t.sample(&mut rng).abs() > 1.0));
        assert!(matches!(JumpDensity::gauss(1.0).unwrap().truncate(40.0), Err(Error::Domain(_))));
    }

    #[test]
    fn sampler_moments() {
        let mut rng = rng_from_seed(9);
        // E|Y| for Laplace is 1; for g₂ it is 1/√π; for f₃ it is ∫ 2 r y/(1+y³) dy = 2 r (2π/(3√3)) with r = 3√3/(4π)... = 1
        let cases = [
            (laplace(), 1.0),
            (JumpDensity::gauss(1.0).unwrap(), 1.0 / PI.sqrt()),
            (JumpDensity::cauchy(3.0, 1.0).unwrap(), 1.0),
        ];
        for (m, want) in cases {
            let mv: MeanVar = (0..200_000).map(|_| m.sample(&mut rng).abs()).collect();
            assert!((mv.mean - want).abs() < 4.0 * mv.std_error() + 1e-3, "{m}: {} vs {want}", mv.mean);
        }
    }

    #[test]
    fn cauchy_two_sampler_quartiles() {
        let m = JumpDensity::cauchy(2.0, 1.0).unwrap();
        let mut rng = rng_from_seed(21);
        let n = 100_000;
        let inside = (0..n).filter(|_| m.sample(&mut rng).abs() < 1.0).count() as f64 / n as f64;
        assert!((inside - 0.5).abs() < 4.0 * (0.25 / n as f64).sqrt());
    }

    #[test]
    fn interquartile_ranges() {
        assert!((laplace().interquartile_range().unwrap() - 2.0 * 2f64.ln()).abs() < 1e-9);
        assert!((JumpDensity::cauchy(2.0, 1.0).unwrap().interquartile_range().unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn parse_and_display() {
        let m: JumpDensity = "laplace(lambda=1)".parse().unwrap();
        assert_eq!(m, laplace());
        let c: JumpDensity = "cauchy(alpha=2, lambda=1)".parse().unwrap();
        assert_eq!(c.to_string(), "cauchy(alpha=2,lambda=1)");
        let g: JumpDensity = "gauss()".parse().unwrap();
        assert_eq!(g, JumpDensity::exp(2.0, 1.0).unwrap());
        let e: JumpDensity = "exp(beta=0.5,lambda=2)".parse().unwrap();
        assert_eq!(e.to_string().parse::<JumpDensity>().unwrap(), e);
        let t: JumpDensity = "truncated(laplace(lambda=2), cutoff=1)".parse().unwrap();
        assert!((t.lambda() - 2.0 * (-1.0f64).exp()).abs() < 1e-10);
        assert_eq!(t.to_string(), "truncated(laplace(lambda=2),cutoff=1)");
        assert_eq!(t.to_string().parse::<JumpDensity>().unwrap(), t);
        for bad in ["laplace", "cauchy(lambda=1)", "cauchy(alpha=0.5)", "foo(x=1)", "laplace(lambda=1,zeta=2)", "laplace(lambda=x)"] {
            assert!(matches!(bad.parse::<JumpDensity>(), Err(Error::ModelSpec { .. })), "{bad}");
        }
    }
}
