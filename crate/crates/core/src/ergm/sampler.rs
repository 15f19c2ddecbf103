use std::collections::HashMap;

use rand::Rng as _;
use rand_distr::{Binomial, Distribution};

use super::{dot, expit, ErgmModel};
use crate::error::{Error, Result};
use crate::network::Network;
use crate::seed::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SamplerConfig {
    pub burn_in: u64,
    pub thin: u64,
    pub n_draws: usize,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 || self.n_draws == 0 {
            return Err(Error::InvalidConfig("thin and n_draws must be positive".into()));
        }
        Ok(())
    }

    /// Burn-in of ten sweeps and one sweep between retained draws, a sweep
    /// being one proposal per eligible dyad.
    pub fn sweeps(model: &ErgmModel, n_draws: usize, seed: u64) -> Self {
        let d = model.space().dyad_count().max(1) as u64;
        SamplerConfig {
            burn_in: 10 * d,
            thin: d,
            n_draws,
            seed,
        }
    }
}

/// Metropolis–Hastings chain over the restricted space: uniform eligible-dyad
/// toggles plus one null proposal.
pub struct MhChain<'m> {
    model: &'m ErgmModel,
    net: Network,
    rng: Rng,
    // per-dyad log-odds and change statistics when they do not depend on the state
    fixed: Option<(Vec<f64>, Vec<f64>)>,
    delta: Vec<f64>,
    stats: Option<Vec<f64>>,
    steps: u64,
    accepted: u64,
}

impl<'m> MhChain<'m> {
    pub fn new(model: &'m ErgmModel, start: Option<Network>, rng: Rng) -> Result<Self> {
        let net = match start {
            Some(s) => {
                if s.n() != model.n() {
                    return Err(Error::DimensionMismatch {
                        expected: model.n(),
                        got: s.n(),
                    });
                }
                if !model.space().admits(&s) {
                    return Err(Error::OutsideRestrictedSpace);
                }
                s
            }
            None => Network::empty(model.n()),
        };
        let d = model.spec().dim();
        let fixed = model.is_dyad_independent().then(|| {
            let ctx = model.context();
            let mut lo = Vec::with_capacity(model.space().dyad_count());
            let mut deltas = Vec::with_capacity(model.space().dyad_count() * d);
            for &(i, j) in model.space().dyads() {
                let delta = ctx.dyadic_change(i, j).expect("dyad independent");
                lo.push(dot(model.eta(), &delta));
                deltas.extend(delta);
            }
            (lo, deltas)
        });
        Ok(MhChain {
            model,
            net,
            rng,
            fixed,
            delta: vec![0.0; d],
            stats: None,
            steps: 0,
            accepted: 0,
        })
    }

    /// Keep a running `g(a)` updated on every accepted toggle.
    pub fn track_statistics(mut self) -> Self {
        self.stats = Some(self.model.context().statistics(&self.net));
        self
    }

    pub fn state(&self) -> &Network {
        &self.net
    }

    pub fn statistics(&self) -> Option<&[f64]> {
        self.stats.as_deref()
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.accepted as f64 / self.steps as f64
        }
    }

    /// One proposal; returns whether the state changed.
    #[inline]
    pub fn step(&mut self) -> bool {
        let dyads = self.model.space().dyads();
        if dyads.is_empty() {
            return false;
        }
        self.steps += 1;
        // one extra null proposal keeps the chain aperiodic when every toggle
        // would be accepted (e.g. η = 0)
        let t = self.rng.random_range(0..=dyads.len());
        if t == dyads.len() {
            return false;
        }
        let (i, j) = dyads[t];
        let present = self.net.has_edge(i, j);
        let d = self.delta.len();
        let lo = match &self.fixed {
            Some((lo, _)) => lo[t],
            None => {
                self.model.context().change_into(&self.net, i, j, &mut self.delta);
                dot(self.model.eta(), &self.delta)
            }
        };
        let signed = if present { -lo } else { lo };
        let accept = signed >= 0.0 || self.rng.random::<f64>() < signed.exp();
        if !accept {
            return false;
        }
        self.net.set_edge(i, j, !present);
        self.accepted += 1;
        if let Some(g) = &mut self.stats {
            let delta = match &self.fixed {
                Some((_, deltas)) => &deltas[t * d..(t + 1) * d],
                None => &self.delta[..],
            };
            let sign = if present { -1.0 } else { 1.0 };
            for (gk, dk) in g.iter_mut().zip(delta) {
                *gk += sign * dk;
            }
        }
        true
    }

    pub fn run(&mut self, steps: u64) {
        for _ in 0..steps {
            self.step();
        }
    }

    /// Runs `burn_in` steps, then visits `n_draws` states spaced `thin` apart.
    pub fn sample_with(&mut self, burn_in: u64, thin: u64, n_draws: usize, mut visit: impl FnMut(&Self)) {
        self.run(burn_in);
        for _ in 0..n_draws {
            self.run(thin);
            visit(self);
        }
    }
}

pub fn mh_sample(model: &ErgmModel, cfg: &SamplerConfig, start: Option<Network>) -> Result<Vec<Network>> {
    cfg.validate()?;
    if model.space().dyad_count() == 0 {
        log::warn!("restricted space has no eligible dyads; returning the starting network");
        let net = start.unwrap_or_else(|| Network::empty(model.n()));
        return Ok(vec![net; cfg.n_draws]);
    }
    let mut chain = MhChain::new(model, start, crate::seed::rng_for(cfg.seed, "mh", 0))?;
    let mut out = Vec::with_capacity(cfg.n_draws);
    chain.sample_with(cfg.burn_in, cfg.thin, cfg.n_draws, |c| out.push(c.state().clone()));
    Ok(out)
}

/// Exact independent draws for models without dyad dependence: each eligible
/// dyad is an independent Bernoulli with probability `expit(ηᵀΔ_ij)`.
#[derive(Clone, Debug)]
pub struct IndependentSampler {
    n: usize,
    dim: usize,
    dyads: Vec<(usize, usize)>,
    probs: Vec<f64>,
    // dyads sharing a change-statistic vector, drawn jointly as a binomial
    groups: Vec<(u64, f64, Vec<f64>)>,
}

impl IndependentSampler {
    pub fn new(model: &ErgmModel) -> Result<Self> {
        if !model.is_dyad_independent() {
            return Err(Error::InvalidSpec("independent sampling needs a dyad-independent model".into()));
        }
        let ctx = model.context();
        let dyads = model.space().dyads().to_vec();
        let mut probs = Vec::with_capacity(dyads.len());
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut groups: Vec<(u64, f64, Vec<f64>)> = Vec::new();
        for &(i, j) in &dyads {
            let delta = ctx.dyadic_change(i, j).expect("dyad independent");
            let p = expit(dot(model.eta(), &delta));
            probs.push(p);
            let key: Vec<u64> = delta.iter().map(|x| x.to_bits()).collect();
            match index.get(&key) {
                Some(&g) => groups[g].0 += 1,
                None => {
                    index.insert(key, groups.len());
                    groups.push((1, p, delta));
                }
            }
        }
        Ok(IndependentSampler {
            n: model.n(),
            dim: model.spec().dim(),
            dyads,
            probs,
            groups,
        })
    }

    pub fn dyads(&self) -> &[(usize, usize)] {
        &self.dyads
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn draw(&self, rng: &mut Rng) -> Network {
        let mut net = Network::empty(self.n);
        for (&(i, j), &p) in self.dyads.iter().zip(&self.probs) {
            if rng.random::<f64>() < p {
                net.set_edge(i, j, true);
            }
        }
        net
    }

    /// Statistics of one draw without building the network.
    pub fn draw_statistics(&self, rng: &mut Rng) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        for (count, p, delta) in &self.groups {
            let k = if *count == 1 {
                (rng.random::<f64>() < *p) as u64
            } else {
                Binomial::new(*count, *p).expect("probability in [0,1]").sample(rng)
            };
            if k > 0 {
                for (gk, dk) in g.iter_mut().zip(delta) {
                    *gk += k as f64 * dk;
                }
            }
        }
        g
    }
}
