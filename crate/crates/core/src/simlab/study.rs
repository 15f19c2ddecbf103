use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::{generate_dgp, true_theta_grid, DgpConfig, PotentialOutcomes, Scenario, SyntheticStudy, TruthValue};
use crate::ergm::{mcmc_mle, ErgmModel, FitConfig, IndependentSampler, MhChain, SamplerConfig, MAX_EXACT_DYADS};
use crate::error::{Error, Result};
use crate::estimators::{closed_form_variance, normal_quantile, omega_matrix, EstimatorKind, OmegaMatrix};
use crate::intervention::{exact_denominators, ipw_weights_from_counts, sampled_denominators, Denominator};
use crate::io::format_number;
use crate::network::{local_edge_count, Network};
use crate::seed::{derive_seed, rng_for};

/// One estimator's output in one replication.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RepEstimate {
    pub estimate: f64,
    pub se: f64,
    pub covered: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplicateRecord {
    pub index: usize,
    pub outcome_digest: String,
    pub sample_mean: f64,
    /// Estimates with the true η, indexed `[λ][estimator]` in
    /// [`EstimatorKind::ALL`] order.
    pub fixed: Vec<[RepEstimate; 2]>,
    /// Estimates after re-fitting η; empty when re-fitting is off or failed.
    pub refit: Vec<[RepEstimate; 2]>,
    pub eta_hat: Option<Vec<f64>>,
    pub refit_error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub lambda: f64,
    pub estimator: EstimatorKind,
    pub bias: f64,
    pub rmse: f64,
    pub mean_se_hat: f64,
    pub true_se_refit: f64,
    pub true_se_fixed: f64,
    pub coverage: f64,
    pub excluded_reps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StudyMetadata {
    pub scenario: String,
    pub n: usize,
    pub l: usize,
    pub reps: usize,
    pub seed: u64,
    pub refit: bool,
    pub fit_draws: usize,
    pub denominators: String,
    pub truth: String,
    pub outcome_digest: String,
    pub level: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudySummary {
    pub scenario: Scenario,
    pub n: usize,
    pub l: usize,
    pub lambda_grid: Vec<f64>,
    pub truth: Vec<TruthValue>,
    pub rows: Vec<SummaryRow>,
    pub replicates: Vec<ReplicateRecord>,
    pub metadata: StudyMetadata,
}

impl StudySummary {
    pub fn row(&self, lambda: f64, estimator: EstimatorKind) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.lambda == lambda && r.estimator == estimator)
    }
}

struct Context<'a> {
    study: &'a SyntheticStudy,
    cfg: &'a DgpConfig,
    digest: String,
    truth: Vec<TruthValue>,
    omega: OmegaMatrix,
    z: f64,
    fixed_dens: Vec<Vec<Denominator>>,
}

impl Context<'_> {
    fn estimates(&self, dens: &[Vec<Denominator>], counts: &[usize], y: &[f64]) -> Result<Vec<[RepEstimate; 2]>> {
        self.cfg
            .lambda_grid
            .iter()
            .zip(dens)
            .zip(&self.truth)
            .map(|((&lambda, d), truth)| {
                let ws = ipw_weights_from_counts(counts, lambda, d)?;
                let one = |kind: EstimatorKind| -> Result<RepEstimate> {
                    let estimate = kind.estimate(&ws.weights, y)?;
                    let se = closed_form_variance(&self.omega, &kind.influence(&ws.weights, y, estimate))?.sqrt();
                    Ok(RepEstimate {
                        estimate,
                        se,
                        covered: (estimate - truth.theta).abs() <= self.z * se,
                    })
                };
                Ok([one(EstimatorKind::ALL[0])?, one(EstimatorKind::ALL[1])?])
            })
            .collect()
    }

    fn denominators_for(&self, model: &ErgmModel, rep: usize) -> Result<Vec<Vec<Denominator>>> {
        denominators(model, self.study, self.cfg, derive_seed(self.cfg.seed, "refit-denominators", rep as u64))
    }

    fn replicate(&self, index: usize, net: &Network) -> Result<ReplicateRecord> {
        let study = self.study;
        // design-based contract: the potential outcomes never change
        let digest = study.outcomes.digest();
        if digest != self.digest {
            return Err(Error::InvalidConfig(format!("potential outcomes changed in replication {index}")));
        }
        let y = study.outcomes.observed(net, &study.nbhds);
        let counts: Vec<usize> = (0..study.nbhds.len())
            .map(|i| local_edge_count(net, study.nbhds.members(i)))
            .collect();
        let fixed = self.estimates(&self.fixed_dens, &counts, &y)?;
        let (mut refit, mut eta_hat, mut refit_error) = (Vec::new(), None, None);
        if self.cfg.refit_enabled() {
            let model = &study.model;
            let fit_cfg = FitConfig {
                draws: self.cfg.fit_draws,
                seed: derive_seed(self.cfg.seed, "refit", index as u64),
                ..FitConfig::default()
            };
            let fitted = mcmc_mle(model.spec(), net, model.space(), model.covariates(), model.blocks(), None, &fit_cfg)
                .and_then(|fit| {
                    let m = model.with_eta(fit.eta_hat.clone())?;
                    let dens = self.denominators_for(&m, index)?;
                    Ok((fit.eta_hat, self.estimates(&dens, &counts, &y)?))
                });
            match fitted {
                Ok((eta, est)) => {
                    eta_hat = Some(eta);
                    refit = est;
                }
                Err(e) if e.is_numerical() => {
                    log::warn!("replication {index}: refit failed: {e}");
                    refit_error = Some(e.to_string());
                }
                Err(e) => return Err(e),
            }
        }
        Ok(ReplicateRecord {
            index,
            outcome_digest: digest,
            sample_mean: y.iter().sum::<f64>() / y.len() as f64,
            fixed,
            refit,
            eta_hat,
            refit_error,
        })
    }
}

fn exact_denominators_feasible(model: &ErgmModel) -> bool {
    model.is_dyad_independent() || model.space().dyad_count() <= MAX_EXACT_DYADS
}

/// Exact denominators whenever the model allows them, Monte Carlo otherwise.
fn denominators(model: &ErgmModel, study: &SyntheticStudy, cfg: &DgpConfig, seed: u64) -> Result<Vec<Vec<Denominator>>> {
    if exact_denominators_feasible(model) {
        exact_denominators(model, &study.nbhds, &cfg.lambda_grid)
    } else {
        let sc = SamplerConfig::sweeps(model, cfg.mc_samples, seed);
        sampled_denominators(model, &study.nbhds, &cfg.lambda_grid, &sc)
    }
}

/// Full replication loop: draw a treatment network from the true model,
/// realize outcomes, estimate with the true η and (optionally) a re-fitted η,
/// and aggregate against the true `θ^δ`.
pub fn run_study(cfg: &DgpConfig) -> Result<StudySummary> {
    let study = generate_dgp(cfg)?;
    let truth = true_theta_grid(&study, &cfg.lambda_grid, cfg.truth)?;
    let model = &study.model;
    let fixed_dens = denominators(model, &study, cfg, derive_seed(cfg.seed, "fixed-denominators", 0))?;
    let ctx = Context {
        study: &study,
        cfg,
        digest: study.outcomes.digest(),
        truth,
        omega: omega_matrix(&study.dependence)?,
        z: normal_quantile(cfg.level)?,
        fixed_dens,
    };
    let replicates: Vec<ReplicateRecord> = if model.is_dyad_independent() {
        let sampler = IndependentSampler::new(model)?;
        (0..cfg.reps)
            .into_par_iter()
            .map(|r| {
                let net = sampler.draw(&mut rng_for(cfg.seed, "treatment", r as u64));
                ctx.replicate(r, &net)
            })
            .collect::<Result<_>>()?
    } else {
        // one chain; replication r is the state one sweep after replication r − 1
        let sc = SamplerConfig::sweeps(model, cfg.reps, 0);
        let mut chain = MhChain::new(model, None, rng_for(cfg.seed, "treatment", 0))?;
        chain.run(sc.burn_in);
        let mut nets = Vec::with_capacity(cfg.reps);
        for _ in 0..cfg.reps {
            chain.run(sc.thin);
            nets.push(chain.state().clone());
        }
        nets.par_iter().enumerate().map(|(r, net)| ctx.replicate(r, net)).collect::<Result<_>>()?
    };
    let rows = aggregate(cfg, &ctx.truth, &replicates);
    let refit_on = cfg.refit_enabled();
    let metadata = StudyMetadata {
        scenario: cfg.scenario.name().into(),
        n: cfg.n,
        l: cfg.l,
        reps: cfg.reps,
        seed: cfg.seed,
        refit: refit_on,
        fit_draws: cfg.fit_draws,
        denominators: if exact_denominators_feasible(model) {
            "exact".into()
        } else {
            format!("monte-carlo ({} draws)", cfg.mc_samples)
        },
        truth: if ctx.truth.iter().all(|t| t.exact) {
            "exact".into()
        } else {
            "monte-carlo".into()
        },
        outcome_digest: ctx.digest.clone(),
        level: cfg.level,
    };
    Ok(StudySummary {
        scenario: cfg.scenario,
        n: cfg.n,
        l: cfg.l,
        lambda_grid: cfg.lambda_grid.clone(),
        truth: ctx.truth,
        rows,
        replicates,
        metadata,
    })
}

fn sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return f64::NAN;
    }
    let m = values.iter().sum::<f64>() / values.len() as f64;
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

fn aggregate(cfg: &DgpConfig, truth: &[TruthValue], reps: &[ReplicateRecord]) -> Vec<SummaryRow> {
    let refit_on = cfg.refit_enabled();
    let included: Vec<&ReplicateRecord> = reps.iter().filter(|r| !refit_on || !r.refit.is_empty()).collect();
    let excluded = reps.len() - included.len();
    let mut rows = Vec::new();
    for (t, tv) in truth.iter().enumerate() {
        for (k, kind) in EstimatorKind::ALL.into_iter().enumerate() {
            let fixed: Vec<f64> = reps.iter().map(|r| r.fixed[t][k].estimate).collect();
            let refit: Vec<f64> = included.iter().filter(|_| refit_on).map(|r| r.refit[t][k].estimate).collect();
            let primary: Vec<RepEstimate> = included
                .iter()
                .map(|r| if refit_on { r.refit[t][k] } else { r.fixed[t][k] })
                .collect();
            let m = primary.len() as f64;
            let mean = |f: &dyn Fn(&RepEstimate) -> f64| primary.iter().map(f).sum::<f64>() / m;
            rows.push(SummaryRow {
                lambda: tv.lambda,
                estimator: kind,
                bias: mean(&|e| e.estimate) - tv.theta,
                rmse: mean(&|e| (e.estimate - tv.theta).powi(2)).sqrt(),
                mean_se_hat: mean(&|e| e.se),
                true_se_refit: if refit_on { sd(&refit) } else { f64::NAN },
                true_se_fixed: sd(&fixed),
                coverage: mean(&|e| e.covered as u8 as f64),
                excluded_reps: excluded,
            });
        }
    }
    rows
}

pub const SUMMARY_HEADER: [&str; 12] = [
    "scenario",
    "n",
    "l",
    "lambda",
    "estimator",
    "bias",
    "rmse",
    "mean_se_hat",
    "true_se_refit",
    "true_se_fixed",
    "coverage",
    "excluded_reps",
];

pub fn write_summary<W: Write>(summary: &StudySummary, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for r in &summary.rows {
        w.write_record([
            summary.scenario.name().to_string(),
            summary.n.to_string(),
            summary.l.to_string(),
            format_number(r.lambda),
            r.estimator.name().to_string(),
            format_number(r.bias),
            format_number(r.rmse),
            format_number(r.mean_se_hat),
            format_number(r.true_se_refit),
            format_number(r.true_se_fixed),
            format_number(r.coverage),
            r.excluded_reps.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_summary(summary: &StudySummary, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_summary(summary, std::io::BufWriter::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::sample_mean;
    use crate::simlab::{Interaction, TruthPrecision};

    fn small(scenario: Scenario) -> DgpConfig {
        let mut cfg = DgpConfig::new(scenario, 60, 3);
        cfg.reps = 12;
        cfg.seed = 5;
        cfg.mc_samples = 500;
        cfg.truth = TruthPrecision::MonteCarlo(20_000);
        cfg.block_mean_size = 20;
        cfg
    }

    #[test]
    fn summary_shape_and_ranges() {
        for scenario in [Scenario::Bernoulli, Scenario::LocalDependence] {
            let s = run_study(&small(scenario)).unwrap();
            assert_eq!(s.rows.len(), 10);
            assert_eq!(s.replicates.len(), 12);
            for r in &s.rows {
                assert!((0.0..=1.0).contains(&r.coverage));
                assert!(r.rmse * r.rmse >= r.bias * r.bias - 1e-12);
            }
            let mut buf = Vec::new();
            write_summary(&s, &mut buf).unwrap();
            let text = String::from_utf8(buf).unwrap();
            let lines: Vec<&str> = text.lines().collect();
            assert_eq!(lines[0], SUMMARY_HEADER.join(","));
            assert_eq!(lines.len(), 11);
        }
    }

    #[test]
    fn lambda_zero_hajek_is_sample_mean_and_digest_is_frozen() {
        let s = run_study(&small(Scenario::Bernoulli)).unwrap();
        let zero = s.lambda_grid.iter().position(|&l| l == 0.0).unwrap();
        for r in &s.replicates {
            assert_eq!(r.outcome_digest, s.metadata.outcome_digest);
            assert_eq!(r.fixed[zero][1].estimate, r.sample_mean);
            assert_eq!(r.fixed[zero][0].estimate, r.sample_mean);
            if !r.refit.is_empty() {
                assert_eq!(r.refit[zero][1].estimate, r.sample_mean);
            }
        }
        assert!(s.replicates.iter().all(|r| r.eta_hat.is_some() || r.refit_error.is_some()));
    }

    #[test]
    fn reruns_are_byte_identical() {
        let cfg = small(Scenario::Bernoulli);
        let render = |c: &DgpConfig| {
            let mut buf = Vec::new();
            write_summary(&run_study(c).unwrap(), &mut buf).unwrap();
            buf
        };
        let a = render(&cfg);
        assert_eq!(a, render(&cfg));
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        assert_eq!(a, single.install(|| render(&cfg)));
        let mut other = cfg.clone();
        other.seed = 6;
        assert_ne!(a, render(&other));
    }

    /// HT with exact weights is unbiased for every λ; checked on an
    /// enumerable toy study against the exact truth.
    #[test]
    fn horvitz_thompson_unbiased_on_toy_study() {
        for scenario in [Scenario::Bernoulli, Scenario::LocalDependence] {
            let mut cfg = DgpConfig::new(scenario, 6, 3);
            cfg.cutoff = None;
            cfg.block_mean_size = 3;
            cfg.reps = 2000;
            cfg.refit = Some(false);
            cfg.truth = TruthPrecision::Exact;
            cfg.mc_samples = 200_000;
            cfg.seed = 21;
            let s = run_study(&cfg).unwrap();
            for (t, tv) in s.truth.iter().enumerate() {
                let est: Vec<f64> = s.replicates.iter().map(|r| r.fixed[t][0].estimate).collect();
                // local-dependence reps are successive chain states, so their
                // standard error comes from batch means over the rep sequence
                let mcse = match scenario {
                    Scenario::Bernoulli => sd(&est) / (est.len() as f64).sqrt(),
                    Scenario::LocalDependence => {
                        let batches: Vec<f64> = est.chunks(100).map(sample_mean).collect();
                        sd(&batches) / (batches.len() as f64).sqrt()
                    }
                };
                let bias = sample_mean(&est) - tv.theta;
                assert!(bias.abs() <= 3.0 * mcse, "{scenario:?} λ={}: bias {bias} mcse {mcse}", tv.lambda);
            }
        }
    }

    #[test]
    fn edge_blind_outcomes_have_flat_truth() {
        let mut cfg = small(Scenario::Bernoulli);
        cfg.interaction = Interaction::None;
        cfg.truth = TruthPrecision::Auto;
        let s = run_study(&cfg).unwrap();
        assert!(s.truth.iter().all(|t| (t.theta - s.truth[0].theta).abs() < 1e-12));
    }
}
