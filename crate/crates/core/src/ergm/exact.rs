use rayon::prelude::*;

use super::{dot, log_sum_exp, ErgmModel};
use crate::error::{Error, Result};
use crate::network::Network;

pub const MAX_EXACT_DYADS: usize = 22;

/// Full probability table over `A_U`; network `code` has an edge on eligible
/// dyad `b` (in [`ExactDistribution::dyads`] order) iff bit `b` is set.
#[derive(Clone, Debug)]
pub struct ExactDistribution {
    n: usize,
    dyads: Vec<(usize, usize)>,
    log_z: f64,
    log_probs: Vec<f64>,
}

pub fn exact_distribution(model: &ErgmModel) -> Result<ExactDistribution> {
    let dyads = model.space().dyads().to_vec();
    if dyads.len() > MAX_EXACT_DYADS {
        return Err(Error::TooManyDyads {
            count: dyads.len(),
            max: MAX_EXACT_DYADS,
        });
    }
    let n = model.n();
    let ctx = model.context();
    let size = 1usize << dyads.len();
    let log_w: Vec<f64> = (0..size)
        .into_par_iter()
        .map(|code| {
            let net = network_for(n, &dyads, code);
            dot(model.eta(), &ctx.statistics(&net))
        })
        .collect();
    let log_z = log_sum_exp(log_w.iter().copied());
    if !log_z.is_finite() {
        return Err(Error::InvalidDistribution("normalizer is not finite".into()));
    }
    let log_probs = log_w.into_iter().map(|w| w - log_z).collect();
    Ok(ExactDistribution {
        n,
        dyads,
        log_z,
        log_probs,
    })
}

fn network_for(n: usize, dyads: &[(usize, usize)], code: usize) -> Network {
    let mut net = Network::empty(n);
    for (b, &(i, j)) in dyads.iter().enumerate() {
        if (code >> b) & 1 == 1 {
            net.set_edge(i, j, true);
        }
    }
    net
}

impl ExactDistribution {
    pub fn len(&self) -> usize {
        self.log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_probs.is_empty()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dyads(&self) -> &[(usize, usize)] {
        &self.dyads
    }

    pub fn log_normalizer(&self) -> f64 {
        self.log_z
    }

    pub fn log_prob(&self, code: usize) -> f64 {
        self.log_probs[code]
    }

    pub fn prob(&self, code: usize) -> f64 {
        self.log_probs[code].exp()
    }

    pub fn probs(&self) -> Vec<f64> {
        self.log_probs.iter().map(|l| l.exp()).collect()
    }

    pub fn network(&self, code: usize) -> Network {
        network_for(self.n, &self.dyads, code)
    }

    /// Index of `net` in the table; `None` if it is outside `A_U`.
    pub fn code_of(&self, net: &Network) -> Option<usize> {
        if net.n() != self.n {
            return None;
        }
        let mut code = 0;
        let mut inside = 0;
        for (b, &(i, j)) in self.dyads.iter().enumerate() {
            if net.has_edge(i, j) {
                code |= 1 << b;
                inside += 1;
            }
        }
        (inside == net.edge_count()).then_some(code)
    }

    /// `P(A_ij = 1)` for every eligible dyad.
    pub fn edge_marginals(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dyads.len()];
        for (code, lp) in self.log_probs.iter().enumerate() {
            let p = lp.exp();
            for (b, mb) in m.iter_mut().enumerate() {
                if (code >> b) & 1 == 1 {
                    *mb += p;
                }
            }
        }
        m
    }
}
