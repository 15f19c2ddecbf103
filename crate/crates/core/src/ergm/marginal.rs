use std::collections::BTreeMap;

use super::{ErgmModel, ExactDistribution, MhChain, SamplerConfig};
use crate::error::{Error, Result};
use crate::network::{local_subnetwork, LocalAdjacency, NeighborhoodSystem};
use crate::seed::rng_for;

/// Probability table over the values of one unit's local treatment `A_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalLaw {
    owner: usize,
    members: Vec<usize>,
    probs: BTreeMap<LocalAdjacency, f64>,
}

impl LocalLaw {
    pub fn new(owner: usize, members: Vec<usize>, entries: impl IntoIterator<Item = (LocalAdjacency, f64)>) -> Result<Self> {
        let mut probs = BTreeMap::new();
        for (a, p) in entries {
            if a.owner() != owner || a.members() != members.as_slice() {
                return Err(Error::InvalidDistribution("entry belongs to a different neighborhood".into()));
            }
            if !(p >= 0.0 && p.is_finite()) {
                return Err(Error::InvalidDistribution(format!("invalid probability {p}")));
            }
            *probs.entry(a).or_insert(0.0) += p;
        }
        Ok(LocalLaw { owner, members, probs })
    }

    pub fn owner(&self) -> usize {
        self.owner
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&LocalAdjacency, f64)> {
        self.probs.iter().map(|(a, &p)| (a, p))
    }

    pub fn prob(&self, a: &LocalAdjacency) -> f64 {
        self.probs.get(a).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.probs.values().sum()
    }

    /// Law of the local edge count `e(A_i)`.
    pub fn edge_count_law(&self) -> Vec<f64> {
        let mut out = vec![0.0; LocalAdjacency::zeros(self.owner, self.members.clone()).pair_count() + 1];
        for (a, p) in self.iter() {
            out[a.edge_count()] += p;
        }
        out
    }
}

/// Exact law of `A_i`, summing the full table over `a_{−i}`.
pub fn exact_local_marginal(dist: &ExactDistribution, nbhds: &NeighborhoodSystem, i: usize) -> Result<LocalLaw> {
    if nbhds.len() != dist.n() {
        return Err(Error::DimensionMismatch {
            expected: dist.n(),
            got: nbhds.len(),
        });
    }
    let mut probs: BTreeMap<LocalAdjacency, f64> = BTreeMap::new();
    for code in 0..dist.len() {
        let a = local_subnetwork(&dist.network(code), nbhds, i)?;
        *probs.entry(a).or_insert(0.0) += dist.prob(code);
    }
    Ok(LocalLaw {
        owner: i,
        members: nbhds.members(i).to_vec(),
        probs,
    })
}

/// Empirical law of `A_i` over retained Metropolis–Hastings draws.
pub fn local_marginal(model: &ErgmModel, i: usize, nbhds: &NeighborhoodSystem, cfg: &SamplerConfig) -> Result<LocalLaw> {
    cfg.validate()?;
    if nbhds.len() != model.n() {
        return Err(Error::DimensionMismatch {
            expected: model.n(),
            got: nbhds.len(),
        });
    }
    if i >= model.n() {
        return Err(Error::IndexOutOfRange { index: i, n: model.n() });
    }
    let mut counts: BTreeMap<LocalAdjacency, u64> = BTreeMap::new();
    if model.space().dyad_count() == 0 {
        log::warn!("restricted space has no eligible dyads; local law is a point mass");
        counts.insert(LocalAdjacency::zeros(i, nbhds.members(i).to_vec()), cfg.n_draws as u64);
    } else {
        let mut chain = MhChain::new(model, None, rng_for(cfg.seed, "local-marginal", i as u64))?;
        chain.sample_with(cfg.burn_in, cfg.thin, cfg.n_draws, |c| {
            let a = local_subnetwork(c.state(), nbhds, i).expect("validated index");
            *counts.entry(a).or_insert(0) += 1;
        });
    }
    let total = cfg.n_draws as f64;
    Ok(LocalLaw {
        owner: i,
        members: nbhds.members(i).to_vec(),
        probs: counts.into_iter().map(|(a, c)| (a, c as f64 / total)).collect(),
    })
}
