use nalgebra::{DMatrix, DVector};

use super::{mple_with_blocks, ErgmModel, IndependentSampler, MhChain};
use crate::error::{Error, Result};
use crate::network::{Network, RestrictedSpace};
use crate::seed::rng_for;
use crate::stats::{BlockMembership, CovariateTable, StatContext, StatisticSpec};

/// How the statistic draws for each Geyer–Thompson iteration are produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StatSampler {
    /// Exact independent draws when the model has no dyad dependence,
    /// Metropolis–Hastings otherwise.
    Auto,
    Metropolis,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitConfig {
    pub draws: usize,
    /// Defaults to ten times the number of eligible dyads.
    pub burn_in: Option<u64>,
    /// Defaults to the number of eligible dyads.
    pub thin: Option<u64>,
    pub trust_radius: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub sampler: StatSampler,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            draws: 5000,
            burn_in: None,
            thin: None,
            trust_radius: 0.5,
            tol: 1e-4,
            max_iters: 30,
            seed: 0,
            sampler: StatSampler::Auto,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub eta_hat: Vec<f64>,
    pub se: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub stat_mean: Vec<f64>,
    pub stat_cov: Vec<Vec<f64>>,
}

const DEGENERACY_STREAK: usize = 3;

/// Monte Carlo maximum likelihood by iterated importance sampling.
#[allow(clippy::too_many_arguments)]
pub fn mcmc_mle(
    spec: &StatisticSpec,
    observed: &Network,
    space: &RestrictedSpace,
    cov: &CovariateTable,
    blocks: Option<&BlockMembership>,
    init: Option<&[f64]>,
    cfg: &FitConfig,
) -> Result<FitResult> {
    if cfg.draws < 2 || cfg.max_iters == 0 || !(cfg.trust_radius > 0.0) || !(cfg.tol >= 0.0) {
        return Err(Error::InvalidConfig("fit configuration out of range".into()));
    }
    let ctx = StatContext::new(spec, cov, blocks)?;
    if observed.n() != space.n() || space.n() != cov.n() {
        return Err(Error::DimensionMismatch {
            expected: cov.n(),
            got: observed.n(),
        });
    }
    if !space.admits(observed) {
        return Err(Error::OutsideRestrictedSpace);
    }
    let d = spec.dim();
    let mut eta = match init {
        Some(e) => {
            if e.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: e.len() });
            }
            e.to_vec()
        }
        None => mple_with_blocks(spec, observed, space, cov, blocks)?,
    };
    let g_obs = ctx.statistics(observed);
    let mut streak = 0;
    let mut prev_gap: Option<f64> = None;
    let mut converged = false;
    let mut iterations = 0;
    let mut last: Option<(Vec<Vec<f64>>, DVector<f64>)> = None;
    for it in 0..cfg.max_iters {
        iterations = it + 1;
        let model = ErgmModel::new(spec.clone(), eta.clone(), space.clone(), cov.clone(), blocks.cloned())?;
        let draws = sample_statistics(&model, observed, cfg, it as u64)?;
        let gap = range_gap(&g_obs, &draws);
        if gap > 0.0 && prev_gap.is_none_or(|p| gap > 0.9 * p) {
            streak += 1;
            if streak >= DEGENERACY_STREAK {
                return Err(Error::ModelDegeneracy(iterations));
            }
        } else if gap == 0.0 {
            streak = 0;
        }
        prev_gap = Some(gap);
        let shifted: Vec<DVector<f64>> = draws
            .iter()
            .map(|g| DVector::from_iterator(d, g.iter().zip(&g_obs).map(|(a, b)| a - b)))
            .collect();
        let (delta, binding) = maximize_ratio(&shifted, cfg.trust_radius)?;
        let (_, base_cov) = weighted_moments(&shifted, &DVector::zeros(d));
        let noise = cfg.draws as f64 * delta.dot(&(&base_cov * &delta));
        for (e, dl) in eta.iter_mut().zip(delta.iter()) {
            *e += dl;
        }
        last = Some((draws, delta.clone()));
        if delta.norm() <= cfg.tol || (!binding && noise <= d as f64) {
            converged = true;
            break;
        }
    }
    let (draws, delta) = last.expect("at least one iteration");
    let stats: Vec<DVector<f64>> = draws.iter().map(|g| DVector::from_column_slice(g)).collect();
    let centered: Vec<DVector<f64>> = stats.iter().map(|g| g - DVector::from_column_slice(&g_obs)).collect();
    let w = softmax_weights(&centered, &delta);
    let mean = stats.iter().zip(&w).fold(DVector::zeros(d), |acc, (g, &wi)| acc + g * wi);
    let mut c = DMatrix::zeros(d, d);
    for (g, &wi) in stats.iter().zip(&w) {
        let r = g - &mean;
        c += &r * r.transpose() * wi;
    }
    let inv = c
        .clone()
        .cholesky()
        .ok_or(Error::Singular("simulated statistic covariance"))?
        .inverse();
    Ok(FitResult {
        se: (0..d).map(|k| inv[(k, k)].max(0.0).sqrt()).collect(),
        eta_hat: eta,
        iterations,
        converged,
        stat_mean: mean.iter().copied().collect(),
        stat_cov: (0..d).map(|a| (0..d).map(|b| c[(a, b)]).collect()).collect(),
    })
}

fn sample_statistics(model: &ErgmModel, observed: &Network, cfg: &FitConfig, iter: u64) -> Result<Vec<Vec<f64>>> {
    let mut rng = rng_for(cfg.seed, "mcmle-draws", iter);
    if cfg.sampler == StatSampler::Auto && model.is_dyad_independent() {
        let s = IndependentSampler::new(model)?;
        return Ok((0..cfg.draws).map(|_| s.draw_statistics(&mut rng)).collect());
    }
    let dyads = model.space().dyad_count() as u64;
    let burn_in = cfg.burn_in.unwrap_or(10 * dyads);
    let thin = cfg.thin.unwrap_or(dyads).max(1);
    let mut chain = MhChain::new(model, Some(observed.clone()), rng)?.track_statistics();
    let mut out = Vec::with_capacity(cfg.draws);
    chain.sample_with(burn_in, thin, cfg.draws, |c| out.push(c.statistics().expect("tracked").to_vec()));
    Ok(out)
}

/// Largest distance of the observed statistic beyond the simulated range,
/// in units of the simulated standard deviation of that coordinate; zero when
/// every coordinate is inside. Iterations outside the range whose gap is not
/// shrinking count toward the degeneracy streak, so a long but productive
/// walk from a distant start is not mistaken for degeneracy.
fn range_gap(g_obs: &[f64], draws: &[Vec<f64>]) -> f64 {
    let m = draws.len() as f64;
    (0..g_obs.len())
        .map(|k| {
            let lo = draws.iter().map(|g| g[k]).fold(f64::INFINITY, f64::min);
            let hi = draws.iter().map(|g| g[k]).fold(f64::NEG_INFINITY, f64::max);
            let beyond = (lo - g_obs[k]).max(g_obs[k] - hi).max(0.0);
            if beyond == 0.0 {
                return 0.0;
            }
            let mean = draws.iter().map(|g| g[k]).sum::<f64>() / m;
            let sd = (draws.iter().map(|g| (g[k] - mean).powi(2)).sum::<f64>() / m).sqrt();
            if sd > 0.0 {
                beyond / sd
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max)
}

fn softmax_weights(shifted: &[DVector<f64>], delta: &DVector<f64>) -> Vec<f64> {
    let logits: Vec<f64> = shifted.iter().map(|s| s.dot(delta)).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|x| x / total).collect()
}

/// `log mean exp(δᵀ s_m)` together with the weighted mean and covariance of `s`.
fn weighted_moments(shifted: &[DVector<f64>], delta: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let d = delta.len();
    let w = softmax_weights(shifted, delta);
    let mean = shifted.iter().zip(&w).fold(DVector::zeros(d), |acc, (s, &wi)| acc + s * wi);
    let mut c = DMatrix::zeros(d, d);
    for (s, &wi) in shifted.iter().zip(&w) {
        let r = s - &mean;
        c += &r * r.transpose() * wi;
    }
    (mean, c)
}

fn objective(shifted: &[DVector<f64>], delta: &DVector<f64>) -> f64 {
    let logits: Vec<f64> = shifted.iter().map(|s| s.dot(delta)).collect();
    super::log_sum_exp(logits.iter().copied()) - (shifted.len() as f64).ln()
}

/// Minimizes `log mean exp(δᵀ s_m)` (the negated log-likelihood ratio) by
/// Newton steps, stopping on the trust-region boundary. Returns the step and
/// whether the boundary was hit.
fn maximize_ratio(shifted: &[DVector<f64>], radius: f64) -> Result<(DVector<f64>, bool)> {
    let d = shifted[0].len();
    let mut delta = DVector::zeros(d);
    let mut f = objective(shifted, &delta);
    for _ in 0..100 {
        let (grad, hess) = weighted_moments(shifted, &delta);
        if grad.norm() <= 1e-12 * (1.0 + hess.trace()) {
            break;
        }
        let ridge = 1e-12 * (1.0 + hess.trace());
        let h = hess + DMatrix::identity(d, d) * ridge;
        let step = -h.cholesky().ok_or(Error::Singular("importance-sampling Hessian"))?.solve(&grad);
        let mut t = 1.0;
        let mut next = &delta + &step;
        let mut f_next = objective(shifted, &next);
        while f_next > f && t > 1e-8 {
            t *= 0.5;
            next = &delta + &step * t;
            f_next = objective(shifted, &next);
        }
        if next.norm() > radius {
            let scaled = &next * (radius / next.norm());
            return Ok((scaled, true));
        }
        let moved = (&next - &delta).norm();
        delta = next;
        f = f_next;
        if moved <= 1e-12 {
            break;
        }
    }
    Ok((delta, false))
}
