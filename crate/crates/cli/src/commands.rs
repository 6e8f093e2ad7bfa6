//! Subcommand execution and output formatting.

use std::fmt::Write as _;
use std::io::Write as _;

use bridgelab::domination::{bridge_count_report, SamplerChoice};
use bridgelab::error::{Error, Result};
use bridgelab::path::{JumpPath, OUPath};
use bridgelab::rng::child_rng;
use bridgelab::samplers::{
    default_epsilon, paths_summary_csv, paths_to_json_lines, sample_bridge_mcmc, sample_bridge_rejection_batch,
    sample_compound_poisson_batch, sample_perou, ChainConfig, BLOCK_SIZE,
};
use bridgelab::verify::{
    bivariate_functional, check_bivariate_mecke, check_density_reweighting, check_diminished_density,
    check_mecke, check_perou_identity, check_split_identity, config_functional, mecke_functional,
    split_functional, BridgeConditioning, IdentityReport,
};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::args::{Bounds, ChainArgs, Check, Command, Dominate, Format, Identity, Method, SampleBridge, SampleLevy, SamplePerou};

/// What a successful run produced.
pub struct Outcome {
    pub text: String,
    /// Identity check result, used for `--strict`.
    pub report: Option<IdentityReport>,
    /// Notes for stderr.
    pub warnings: Vec<String>,
}

impl Outcome {
    fn plain(text: String) -> Self {
        Self { text, report: None, warnings: Vec::new() }
    }
}

pub fn run(command: &Command) -> Result<Outcome> {
    match command {
        Command::SampleLevy(a) => sample_levy(command, a),
        Command::SampleBridge(a) => sample_bridge(command, a),
        Command::SamplePerou(a) => sample_perou_cmd(command, a),
        Command::Check(a) => check(command, a),
        Command::Bounds(a) => bounds(command, a),
        Command::Dominate(a) => dominate(command, a),
    }
}

pub fn emit(command: &Command, text: &str) -> std::io::Result<()> {
    match &command.common().out {
        Some(path) => std::fs::write(path, text),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()
        }
    }
}

fn chain_config(c: &ChainArgs, seed: u64) -> ChainConfig {
    ChainConfig {
        burn_in: c.burn_in,
        sample_interval: c.interval,
        max_events: c.max_events,
        seed,
        samples_per_chain: c.samples_per_chain,
    }
}

fn json_object<T: Serialize>(command: &Command, key: &str, value: &T) -> String {
    let mut s = serde_json::to_string_pretty(&json!({ "config": command, key: value })).expect("reports serialize");
    s.push('\n');
    s
}

fn header_line(command: &Command, extra: serde_json::Value) -> String {
    let mut s = serde_json::to_string(&json!({ "config": command, "run": extra })).expect("config serializes");
    s.push('\n');
    s
}

fn paths_output(command: &Command, paths: &[JumpPath], run: serde_json::Value) -> String {
    match command.common().format {
        Format::Json => header_line(command, run) + &paths_to_json_lines(paths),
        Format::Csv => paths_summary_csv(paths),
    }
}

fn sample_levy(command: &Command, a: &SampleLevy) -> Result<Outcome> {
    let c = &a.common;
    let paths = sample_compound_poisson_batch(&c.model, a.x, c.n, c.seed);
    Ok(Outcome::plain(paths_output(command, &paths, json!({ "samples": paths.len() }))))
}

fn epsilon_or_default(epsilon: Option<f64>, model: &bridgelab::jump_models::JumpDensity) -> Result<f64> {
    match epsilon {
        Some(e) => Ok(e),
        None => default_epsilon(model),
    }
}

fn sample_bridge(command: &Command, a: &SampleBridge) -> Result<Outcome> {
    let c = &a.common;
    let mut warnings = Vec::new();
    let (paths, run) = match a.method {
        Method::Mcmc => {
            let config = chain_config(&a.chain, c.seed);
            let out = sample_bridge_mcmc(&c.model, a.x, a.y, &c.model, &config, c.n)?;
            if out.partial {
                warnings.push(format!(
                    "a chain hit its event cap; {} of {} paths produced (raise --max-events)",
                    out.paths.len(),
                    c.n
                ));
            }
            let run = json!({ "samples": out.paths.len(), "chains": out.chains, "events": out.events, "partial": out.partial });
            (out.paths, run)
        }
        Method::Rejection => {
            let epsilon = epsilon_or_default(a.epsilon, &c.model)?;
            let out = sample_bridge_rejection_batch(&c.model, a.x, a.y, epsilon, c.n, a.budget, c.seed)?;
            let run = json!({
                "samples": out.paths.len(),
                "epsilon": epsilon,
                "trials": out.trials,
                "acceptance_rate": out.acceptance_rate(),
            });
            (out.paths, run)
        }
    };
    Ok(Outcome { text: paths_output(command, &paths, run), report: None, warnings })
}

fn sample_perou_cmd(command: &Command, a: &SamplePerou) -> Result<Outcome> {
    let c = &a.common;
    let starts: Vec<(u64, usize)> =
        (0..c.n.div_ceil(BLOCK_SIZE)).map(|b| (b as u64, BLOCK_SIZE.min(c.n - b * BLOCK_SIZE))).collect();
    let parts: Vec<Result<Vec<OUPath>>> = starts
        .into_par_iter()
        .map(|(b, count)| {
            let mut rng = child_rng(c.seed, b);
            (0..count).map(|_| sample_perou(&c.model, a.c, &mut rng)).collect()
        })
        .collect();
    let mut paths = Vec::with_capacity(c.n);
    for p in parts {
        paths.extend(p?);
    }
    let text = match c.format {
        Format::Json => {
            let mut s = header_line(command, json!({ "samples": paths.len() }));
            for p in &paths {
                s.push_str(&serde_json::to_string(p).expect("paths serialize"));
                s.push('\n');
            }
            s
        }
        Format::Csv => {
            let mut s = String::from("sample,t,value\n");
            for (k, p) in paths.iter().enumerate() {
                for line in p.to_csv(a.points).lines().skip(1) {
                    writeln!(s, "{k},{line}").expect("writing to a String");
                }
            }
            s
        }
    };
    Ok(Outcome::plain(text))
}

/// Functional used when `--functional` is omitted.
pub fn default_functional(identity: Identity) -> &'static str {
    match identity {
        Identity::Mecke => "abs_min1",
        Identity::Bivariate => "one",
        Identity::Split => "phi_x1",
        Identity::Reweight => "exp_neg_count",
        Identity::Diminished => "count",
        Identity::Perou => "phi_x1_sup_min1",
    }
}

fn check(command: &Command, a: &Check) -> Result<Outcome> {
    let c = &a.common;
    let name = a.functional.as_deref().unwrap_or(default_functional(a.identity));
    if a.bridge && a.identity != Identity::Split {
        return Err(Error::InvalidParameter("--bridge applies to --identity split only".into()));
    }
    let report = match a.identity {
        Identity::Mecke => check_mecke(&c.model, &mecke_functional(name)?, c.n, c.seed)?,
        Identity::Bivariate => check_bivariate_mecke(&c.model, &bivariate_functional(name)?, c.n, c.seed)?,
        Identity::Split => {
            let f = split_functional::<JumpPath>(name, &c.model)?;
            let bridge = a.bridge.then(|| BridgeConditioning { x: a.x, y: a.y, chain: chain_config(&a.chain, c.seed) });
            check_split_identity(&c.model, &f, c.n, c.seed, bridge.as_ref())?
        }
        Identity::Reweight => check_density_reweighting(&c.model, &config_functional(name)?, &c.model, c.n, c.seed)?,
        Identity::Diminished => {
            let epsilon = epsilon_or_default(a.epsilon, &c.model)?;
            check_diminished_density(&c.model, a.c, epsilon, &config_functional(name)?, c.n, c.seed)?
        }
        Identity::Perou => {
            let f = split_functional::<OUPath>(name, &c.model)?;
            check_perou_identity(&c.model, a.c, &f, c.n, c.seed)?
        }
    };
    let text = match c.format {
        Format::Json => json_object(command, "report", &report),
        Format::Csv => format!(
            "identity,functional,lhs,rhs,lhs_se,rhs_se,z,n,seed\n{},{},{},{},{},{},{},{},{}\n",
            report.identity,
            report.functional,
            report.lhs,
            report.rhs,
            report.lhs_se,
            report.rhs_se,
            report.z,
            report.n,
            report.seed
        ),
    };
    Ok(Outcome { text, report: Some(report), warnings: Vec::new() })
}

fn bounds(command: &Command, a: &Bounds) -> Result<Outcome> {
    let c = &a.common;
    let est = c.model.estimate_bounds(a.grid.halfwidth, a.grid.points)?;
    let text = match c.format {
        Format::Json => json_object(command, "bounds", &est),
        Format::Csv => ratio_grid_csv(&c.model, a.grid.halfwidth, a.grid.points)?,
    };
    Ok(Outcome::plain(text))
}

/// `x,ratio` on the estimation grid; points where the ratio overflows read `inf`.
fn ratio_grid_csv(model: &bridgelab::jump_models::JumpDensity, halfwidth: f64, points: usize) -> Result<String> {
    if points < 2 || !(halfwidth > 0.0) {
        return Err(Error::InvalidParameter("grid needs at least 2 points and a positive half-width".into()));
    }
    let xs: Vec<f64> = (0..points).map(|i| -halfwidth + 2.0 * halfwidth * i as f64 / (points - 1) as f64).collect();
    let values: Vec<Result<Option<f64>>> = xs
        .par_iter()
        .map(|&x| match model.convolution_ratio(x) {
            Ok(v) => Ok(Some(v)),
            Err(Error::Overflow { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect();
    let mut out = String::from("x,ratio\n");
    for (x, v) in xs.iter().zip(values) {
        match v? {
            Some(v) if v.is_finite() => writeln!(out, "{x},{v}"),
            _ => writeln!(out, "{x},inf"),
        }
        .expect("writing to a String");
    }
    Ok(out)
}

fn dominate(command: &Command, a: &Dominate) -> Result<Outcome> {
    let c = &a.common;
    let est = c.model.estimate_bounds(a.grid.halfwidth, a.grid.points)?;
    let sampler = match a.method {
        Method::Mcmc => SamplerChoice::Mcmc { config: chain_config(&a.chain, c.seed) },
        Method::Rejection => SamplerChoice::Rejection {
            epsilon: epsilon_or_default(a.epsilon, &c.model)?,
            budget: a.budget,
            seed: c.seed,
        },
    };
    let report = bridge_count_report(&c.model, a.c, &sampler, &est, c.n)?;
    let mut warnings = Vec::new();
    if report.partial {
        warnings.push("a chain hit its event cap; the report uses fewer samples than requested".into());
    }
    let text = match c.format {
        Format::Json => json_object(command, "report", &report),
        Format::Csv => report.tails_csv()?,
    };
    Ok(Outcome { text, report: None, warnings })
}
