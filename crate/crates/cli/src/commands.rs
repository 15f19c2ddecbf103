use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde_json::json;

use edgecause_core::ergm::{mcmc_mle, FitConfig, IndependentSampler, MhChain, SamplerConfig};
use edgecause_core::error::{Error, Result};
use edgecause_core::estimators::{omega_matrix, report};
use edgecause_core::intervention::{exact_independent_denominators, ipw_weights_from_counts, sampled_denominators};
use edgecause_core::io::{format_number, FitRecord};
use edgecause_core::network::{local_edge_count, Network};
use edgecause_core::seed::{derive_seed, rng_for};
use edgecause_core::simlab::{emit_summary, run_study, DgpConfig, LinearOutcomes, Scenario, TruthPrecision};
use edgecause_core::stats::{CovariateTable, StatTerm, Term};

use crate::data::{lambda_grid, nbhd_size, read_fit, Inputs};
use crate::manifest::{manifest_path, FileDigest, RunManifest};
use crate::oracle::{oracle_check, OracleConfig};
use crate::{Cli, Command, EstimateArgs, FitArgs, GlobalArgs, GofArgs, OracleArgs, SimulateArgs};

struct Outcome {
    out: PathBuf,
    inputs: Vec<PathBuf>,
    metadata: serde_json::Value,
}

pub fn execute(cli: &Cli, args: &[String]) -> Result<()> {
    let start = Instant::now();
    let g = &cli.global;
    let outcome = match &cli.command {
        Command::Fit(a) => fit(g, a)?,
        Command::Estimate(a) => estimate(g, a)?,
        Command::Simulate(a) => simulate(g, a)?,
        Command::Gof(a) => gof(g, a)?,
        Command::Oracle(a) => oracle(g, a)?,
        Command::Replay(a) => {
            let out = crate::manifest::replay(&a.manifest, a.out.as_deref())?;
            println!("replay ok: {}", out.display());
            return Ok(());
        }
    };
    let manifest = RunManifest {
        command: cli.command.name().to_string(),
        flags: args.to_vec(),
        seed: g.seed,
        inputs: outcome.inputs.iter().map(|p| FileDigest::of(p)).collect::<Result<_>>()?,
        version: env!("CARGO_PKG_VERSION").to_string(),
        duration_s: start.elapsed().as_secs_f64(),
        outputs: vec![FileDigest::of(&outcome.out)?],
        metadata: outcome.metadata,
    };
    manifest.write(&manifest_path(&outcome.out))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::InvalidConfig(format!("cannot write {}: {e}", path.display())))
}

fn term_label(t: &StatTerm, cov: &CovariateTable) -> String {
    let name = |p: &usize| cov.names()[*p].clone();
    let base = match &t.term {
        Term::Edges => "edges".to_string(),
        Term::NodeCov(p) => format!("nodecov.{}", name(p)),
        Term::AbsDiff(p) => format!("absdiff.{}", name(p)),
        Term::NodeMatch(p) => format!("nodematch.{}", name(p)),
        Term::Gwesp(d) => format!("gwesp.{d}"),
        Term::BetweenEdges => "between_edges".to_string(),
        Term::BetweenNodeCov(p) => format!("between_nodecov.{}", name(p)),
    };
    match t.block {
        Some(b) => format!("{base}.block{}", b + 1),
        None => base,
    }
}

fn term_labels(inp: &Inputs) -> Vec<String> {
    inp.spec.terms().iter().map(|t| term_label(t, &inp.cov)).collect()
}

fn parse_vector(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|f| {
            f.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse(format!("`{}` is not a finite number", f.trim())))
        })
        .collect()
}

fn check_eta(eta: &[f64], inp: &Inputs) -> Result<()> {
    if eta.len() != inp.spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: inp.spec.dim(),
            got: eta.len(),
        });
    }
    Ok(())
}

fn fit(g: &GlobalArgs, a: &FitArgs) -> Result<Outcome> {
    let inp = Inputs::load(&a.inputs, !g.no_standardize, &[])?;
    let observed = inp.observed(&a.edges)?;
    let cfg = FitConfig {
        draws: a.draws,
        max_iters: a.max_iters,
        seed: derive_seed(g.seed, "fit", 0),
        ..FitConfig::default()
    };
    let res = mcmc_mle(&inp.spec, &observed, &inp.space, &inp.cov, inp.blocks.as_ref(), None, &cfg)?;
    let record = FitRecord {
        eta_hat: res.eta_hat,
        se: res.se,
        converged: res.converged,
        iterations: res.iterations,
        seed: g.seed,
    };
    let mut w = create(&a.out)?;
    serde_json::to_writer_pretty(&mut w, &record)?;
    writeln!(w)?;
    w.flush()?;
    if !record.converged {
        log::warn!("fit did not converge in {} iterations", record.iterations);
    }
    Ok(Outcome {
        out: a.out.clone(),
        inputs: [&a.inputs.nodes, &a.inputs.model, &a.edges]
            .into_iter()
            .chain(&a.inputs.distances)
            .cloned()
            .collect(),
        metadata: json!({
            "terms": term_labels(&inp),
            "standardized": !g.no_standardize,
            "n": inp.n(),
            "eligible_dyads": inp.space.dyad_count(),
            "observed_edges": observed.edge_count(),
            "draws": a.draws,
        }),
    })
}

pub const ESTIMATE_HEADER: &str =
    "lambda,estimator,estimate,se,ci_low,ci_high,contrast_vs_zero,contrast_se,denominator_mcse_max";

fn estimate(g: &GlobalArgs, a: &EstimateArgs) -> Result<Outcome> {
    let inp = Inputs::load(&a.inputs, !g.no_standardize, std::slice::from_ref(&a.outcome_col))?;
    let y = inp.nodes.numeric_column(&a.outcome_col)?;
    let observed = inp.observed(&a.edges)?;
    let fit = read_fit(&a.fit)?;
    check_eta(&fit.eta_hat, &inp)?;
    let model = inp.model(fit.eta_hat)?;
    let grid = lambda_grid(&a.lambda_grid)?;
    let (nbhds, dep) = inp.neighborhoods(nbhd_size(a.nbhd_l, g.nbhd_includes_self_in_count)?)?;
    let exact = model.is_dyad_independent();
    let dens = if exact {
        exact_independent_denominators(&model, &nbhds, &grid)?
    } else {
        if a.mc_samples == 0 {
            return Err(Error::InvalidConfig("--mc-samples must be positive".into()));
        }
        let sc = SamplerConfig::sweeps(&model, a.mc_samples, derive_seed(g.seed, "denominators", 0));
        sampled_denominators(&model, &nbhds, &grid, &sc)?
    };
    let counts: Vec<usize> = (0..inp.n()).map(|i| local_edge_count(&observed, nbhds.members(i))).collect();
    let sets = grid
        .iter()
        .zip(&dens)
        .map(|(&l, d)| ipw_weights_from_counts(&counts, l, d))
        .collect::<Result<Vec<_>>>()?;
    let rows = report(&sets, &y, &omega_matrix(&dep)?, g.level)?;
    let mut w = create(&a.out)?;
    writeln!(w, "{ESTIMATE_HEADER}")?;
    for r in &rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            format_number(r.lambda),
            r.kind.name(),
            format_number(r.estimate),
            format_number(r.se),
            format_number(r.ci_low),
            format_number(r.ci_high),
            format_number(r.contrast_vs_zero.unwrap_or(f64::NAN)),
            format_number(r.contrast_se.unwrap_or(f64::NAN)),
            format_number(r.denominator_mcse_max),
        )?;
    }
    w.flush()?;
    Ok(Outcome {
        out: a.out.clone(),
        inputs: [&a.inputs.nodes, &a.inputs.model, &a.edges, &a.fit]
            .into_iter()
            .chain(&a.inputs.distances)
            .cloned()
            .collect(),
        metadata: json!({
            "denominators": if exact { "exact" } else { "monte_carlo" },
            "mc_samples": if exact { 0 } else { a.mc_samples },
            "nbhd_size": nbhds.members(0).len(),
            "hajek_variance": "linearized",
            "level": g.level,
        }),
    })
}

fn simulate(g: &GlobalArgs, a: &SimulateArgs) -> Result<Outcome> {
    let mut cfg = DgpConfig::new(Scenario::parse(&a.scenario)?, a.n, a.l);
    cfg.seed = g.seed;
    cfg.lambda_grid = lambda_grid(&a.lambda_grid)?;
    cfg.reps = a.reps;
    cfg.block_mean_size = a.block_mean_size;
    cfg.cutoff = match a.cutoff.as_str() {
        "none" => None,
        s => Some(s.parse().map_err(|_| Error::Parse(format!("--cutoff `{s}` is not a number")))?),
    };
    cfg.nbhd_includes_self = g.nbhd_includes_self_in_count;
    cfg.refit = a.refit;
    cfg.fit_draws = a.fit_draws;
    cfg.mc_samples = a.mc_samples;
    cfg.truth = match (a.exact_truth, a.truth_draws) {
        (true, Some(_)) => return Err(Error::InvalidConfig("--exact-truth conflicts with --truth-draws".into())),
        (true, None) => TruthPrecision::Exact,
        (false, Some(m)) => TruthPrecision::MonteCarlo(m),
        (false, None) => TruthPrecision::Auto,
    };
    cfg.level = g.level;
    let summary = run_study(&cfg)?;
    emit_summary(&summary, &a.out)?;
    Ok(Outcome {
        out: a.out.clone(),
        inputs: Vec::new(),
        metadata: serde_json::to_value(&summary.metadata)?,
    })
}

fn degree_histogram(net: &Network) -> Vec<usize> {
    let mut h = Vec::new();
    for i in 0..net.n() {
        let d = net.degree(i);
        if h.len() <= d {
            h.resize(d + 1, 0);
        }
        h[d] += 1;
    }
    h
}

fn gof(g: &GlobalArgs, a: &GofArgs) -> Result<Outcome> {
    let inp = Inputs::load(&a.inputs, !g.no_standardize, &[])?;
    let fit = read_fit(&a.fit)?;
    check_eta(&fit.eta_hat, &inp)?;
    if a.sims == 0 {
        return Err(Error::InvalidConfig("--sims must be positive".into()));
    }
    let observed = a.edges.as_deref().map(|p| inp.observed(p)).transpose()?;
    let model = inp.model(fit.eta_hat)?;
    let sims: Vec<Network> = if model.is_dyad_independent() {
        let sampler = IndependentSampler::new(&model)?;
        (0..a.sims)
            .into_par_iter()
            .map(|s| sampler.draw(&mut rng_for(g.seed, "gof", s as u64)))
            .collect()
    } else {
        let d = model.space().dyad_count().max(1) as u64;
        let mut chain = MhChain::new(&model, None, rng_for(g.seed, "gof", 0))?;
        let mut nets = Vec::with_capacity(a.sims);
        chain.sample_with(10 * d, d, a.sims, |c| nets.push(c.state().clone()));
        nets
    };
    let ctx = model.context();
    let rows: Vec<(String, &Network)> = observed
        .iter()
        .map(|n| ("observed".to_string(), n))
        .chain(sims.iter().enumerate().map(|(s, n)| ((s + 1).to_string(), n)))
        .collect();
    let table: Vec<(Vec<f64>, Vec<usize>)> = rows
        .par_iter()
        .map(|(_, net)| (ctx.statistics(net), degree_histogram(net)))
        .collect();
    let width = table.iter().map(|(_, h)| h.len()).max().unwrap_or(1);
    let mut w = create(&a.out)?;
    let labels = term_labels(&inp);
    let degs: Vec<String> = (0..width).map(|k| format!("deg{k}")).collect();
    writeln!(w, "sim,{},{}", labels.join(","), degs.join(","))?;
    for ((name, _), (stats, hist)) in rows.iter().zip(&table) {
        let s: Vec<String> = stats.iter().map(|&v| format_number(v)).collect();
        let h: Vec<String> = (0..width).map(|k| hist.get(k).copied().unwrap_or(0).to_string()).collect();
        writeln!(w, "{name},{},{}", s.join(","), h.join(","))?;
    }
    w.flush()?;
    Ok(Outcome {
        out: a.out.clone(),
        inputs: [&a.inputs.nodes, &a.inputs.model, &a.fit]
            .into_iter()
            .chain(&a.edges)
            .chain(&a.inputs.distances)
            .cloned()
            .collect(),
        metadata: json!({
            "terms": labels,
            "sims": a.sims,
            "sampler": if model.is_dyad_independent() { "independent" } else { "metropolis" },
        }),
    })
}

fn oracle(g: &GlobalArgs, a: &OracleArgs) -> Result<Outcome> {
    let exclude: Vec<String> = a.outcome_col.iter().cloned().collect();
    let inp = Inputs::load(&a.inputs, !g.no_standardize, &exclude)?;
    let eta = match (&a.fit, &a.eta) {
        (Some(p), _) => read_fit(p)?.eta_hat,
        (None, Some(s)) => parse_vector(s)?,
        (None, None) => vec![0.0; inp.spec.dim()],
    };
    check_eta(&eta, &inp)?;
    let model = inp.model(eta)?;
    let grid = lambda_grid(&a.lambda_grid)?;
    let (nbhds, _) = inp.neighborhoods(nbhd_size(a.nbhd_l, g.nbhd_includes_self_in_count)?)?;
    let n = inp.n();
    let base = match &a.outcome_col {
        Some(c) => inp.nodes.numeric_column(c)?,
        None => vec![0.0; n],
    };
    let outcomes = LinearOutcomes {
        base,
        coef: vec![a.edge_effect; n],
    };
    let cfg = OracleConfig {
        steps: a.steps,
        thin: a.thin,
        burn_in: a.burn_in,
        seed: g.seed,
        max_dyads: a.max_dyads,
    };
    let rep = oracle_check(&model, &nbhds, &outcomes, &grid, &cfg)?;
    let mut w = create(&a.out)?;
    rep.write_csv(&mut w)?;
    w.flush()?;
    rep.write_csv(std::io::stdout().lock())?;
    Ok(Outcome {
        out: a.out.clone(),
        inputs: [&a.inputs.nodes, &a.inputs.model]
            .into_iter()
            .chain(&a.fit)
            .chain(&a.inputs.distances)
            .cloned()
            .collect(),
        metadata: json!({
            "steps": a.steps,
            "thin": a.thin,
            "burn_in": a.burn_in,
            "edge_effect": a.edge_effect,
        }),
    })
}
