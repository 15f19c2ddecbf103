//! Brute-force cross-checks on an enumerable model.

use std::collections::HashMap;
use std::io::Write;

use edgecause_core::ergm::{exact_distribution, exact_local_marginal, ErgmModel, LocalLaw, MhChain, MAX_EXACT_DYADS};
use edgecause_core::error::{Error, Result};
use edgecause_core::intervention::law_log_denominator;
use edgecause_core::io::format_number;
use edgecause_core::network::{local_subnetwork, NeighborhoodSystem};
use edgecause_core::seed::rng_for;
use edgecause_core::simlab::{exact_theta, PotentialOutcomes};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OracleConfig {
    pub steps: u64,
    pub thin: u64,
    pub burn_in: u64,
    pub seed: u64,
    pub max_dyads: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleReport {
    pub dyads: usize,
    pub states: usize,
    pub draws: usize,
    /// Total variation between the sampler's empirical law and the exact one.
    pub tv_sampler_exact: f64,
    /// Largest per-unit total variation between sampled and exact local laws.
    pub marginal_tv_max: f64,
    /// Largest `|Σ_a P(a) e^{λ e(a)} / D − 1|` over units and λ.
    pub weight_residual_max: f64,
    /// `(λ, θ)` from enumeration.
    pub theta: Vec<(f64, f64)>,
}

fn law_tv(law: &LocalLaw, counts: &HashMap<u64, u64>, total: f64) -> f64 {
    let mut exact: HashMap<u64, f64> = HashMap::new();
    for (a, p) in law.iter() {
        *exact.entry(a.code().expect("small neighbourhood")).or_default() += p;
    }
    let mut tv = 0.0;
    for (code, p) in &exact {
        let q = counts.get(code).map_or(0.0, |&c| c as f64 / total);
        tv += (p - q).abs();
    }
    for (code, &c) in counts {
        if !exact.contains_key(code) {
            tv += c as f64 / total;
        }
    }
    tv / 2.0
}

pub fn oracle_check(
    model: &ErgmModel,
    nbhds: &NeighborhoodSystem,
    outcomes: &dyn PotentialOutcomes,
    lambdas: &[f64],
    cfg: &OracleConfig,
) -> Result<OracleReport> {
    if cfg.max_dyads > MAX_EXACT_DYADS {
        return Err(Error::InvalidConfig(format!("--max-dyads cannot exceed {MAX_EXACT_DYADS}")));
    }
    let dyads = model.space().dyad_count();
    if dyads > cfg.max_dyads {
        return Err(Error::TooManyDyads {
            count: dyads,
            max: cfg.max_dyads,
        });
    }
    if cfg.thin == 0 || cfg.steps < cfg.thin {
        return Err(Error::InvalidConfig("need steps ≥ thin ≥ 1".into()));
    }
    let dist = exact_distribution(model)?;
    let n = model.n();
    let draws = (cfg.steps / cfg.thin) as usize;
    let mut global = vec![0u64; dist.len()];
    let mut local: Vec<HashMap<u64, u64>> = vec![HashMap::new(); n];
    let mut chain = MhChain::new(model, None, rng_for(cfg.seed, "oracle", 0))?;
    chain.sample_with(cfg.burn_in, cfg.thin, draws, |c| {
        let net = c.state();
        global[dist.code_of(net).expect("chain stays in the restricted space")] += 1;
        for (i, counts) in local.iter_mut().enumerate() {
            let a = local_subnetwork(net, nbhds, i).expect("unit in range");
            *counts.entry(a.code().expect("small neighbourhood")).or_default() += 1;
        }
    });
    let total = draws as f64;
    let tv_sampler_exact = global
        .iter()
        .enumerate()
        .map(|(code, &c)| (c as f64 / total - dist.prob(code)).abs())
        .sum::<f64>()
        / 2.0;
    let laws = (0..n).map(|i| exact_local_marginal(&dist, nbhds, i)).collect::<Result<Vec<_>>>()?;
    let marginal_tv_max = laws
        .iter()
        .zip(&local)
        .map(|(law, counts)| law_tv(law, counts, total))
        .fold(0.0, f64::max);
    let mut weight_residual_max: f64 = 0.0;
    for &lambda in lambdas {
        for law in &laws {
            let log_d = law_log_denominator(law, lambda);
            let s: f64 = law
                .iter()
                .map(|(a, p)| p * (lambda * a.edge_count() as f64 - log_d).exp())
                .sum();
            weight_residual_max = weight_residual_max.max((s - 1.0).abs());
        }
    }
    let theta = exact_theta(model, nbhds, outcomes, lambdas)?
        .into_iter()
        .map(|t| (t.lambda, t.theta))
        .collect();
    Ok(OracleReport {
        dyads,
        states: dist.len(),
        draws,
        tv_sampler_exact,
        marginal_tv_max,
        weight_residual_max,
        theta,
    })
}

impl OracleReport {
    /// CSV with header `quantity,lambda,value`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "quantity,lambda,value")?;
        writeln!(out, "dyads,,{}", self.dyads)?;
        writeln!(out, "states,,{}", self.states)?;
        writeln!(out, "draws,,{}", self.draws)?;
        writeln!(out, "tv_sampler_exact,,{}", format_number(self.tv_sampler_exact))?;
        writeln!(out, "marginal_tv_max,,{}", format_number(self.marginal_tv_max))?;
        writeln!(out, "weight_residual_max,,{}", format_number(self.weight_residual_max))?;
        for (l, t) in &self.theta {
            writeln!(out, "theta_exact,{},{}", format_number(*l), format_number(*t))?;
        }
        Ok(())
    }
}
