//! Constrained exponential random graph models.
//!
//! `P(a) ∝ 1(a ∈ A_U) exp{ηᵀ g(a, x)}` with an optional block structure whose
//! within/between split is carried by the `StatisticSpec`.

mod exact;
mod marginal;
mod mcmle;
mod mple;
mod sampler;

pub use exact::{exact_distribution, ExactDistribution, MAX_EXACT_DYADS};
pub use marginal::{exact_local_marginal, local_marginal, LocalLaw};
pub use mcmle::{mcmc_mle, FitConfig, FitResult, StatSampler};
pub use mple::{mple, mple_with_blocks};
pub use sampler::{mh_sample, IndependentSampler, MhChain, SamplerConfig};

use crate::error::{Error, Result};
use crate::network::{Network, RestrictedSpace};
use crate::stats::{BlockMembership, CovariateTable, StatContext, StatTerm, StatisticSpec, Term};

#[derive(Clone, Debug, PartialEq)]
pub struct ErgmModel {
    spec: StatisticSpec,
    eta: Vec<f64>,
    space: RestrictedSpace,
    cov: CovariateTable,
    blocks: Option<BlockMembership>,
}

impl ErgmModel {
    pub fn new(
        spec: StatisticSpec,
        eta: Vec<f64>,
        space: RestrictedSpace,
        cov: CovariateTable,
        blocks: Option<BlockMembership>,
    ) -> Result<Self> {
        StatContext::new(&spec, &cov, blocks.as_ref())?;
        if eta.len() != spec.dim() {
            return Err(Error::DimensionMismatch {
                expected: spec.dim(),
                got: eta.len(),
            });
        }
        if eta.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig("parameter vector has nonfinite entries".into()));
        }
        if space.n() != cov.n() {
            return Err(Error::DimensionMismatch {
                expected: cov.n(),
                got: space.n(),
            });
        }
        Ok(ErgmModel {
            spec,
            eta,
            space,
            cov,
            blocks,
        })
    }

    pub fn with_eta(&self, eta: Vec<f64>) -> Result<Self> {
        Self::new(self.spec.clone(), eta, self.space.clone(), self.cov.clone(), self.blocks.clone())
    }

    pub fn n(&self) -> usize {
        self.space.n()
    }

    pub fn spec(&self) -> &StatisticSpec {
        &self.spec
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn space(&self) -> &RestrictedSpace {
        &self.space
    }

    pub fn covariates(&self) -> &CovariateTable {
        &self.cov
    }

    pub fn blocks(&self) -> Option<&BlockMembership> {
        self.blocks.as_ref()
    }

    pub fn context(&self) -> StatContext<'_> {
        StatContext {
            spec: &self.spec,
            cov: &self.cov,
            blocks: self.blocks.as_ref(),
        }
    }

    pub fn is_dyad_independent(&self) -> bool {
        self.spec.is_dyad_independent()
    }

    /// Edge probability of an eligible dyad under a dyad-independent model;
    /// ineligible pairs have probability zero.
    pub fn dyad_probability(&self, i: usize, j: usize) -> Result<f64> {
        if i >= self.n() || j >= self.n() {
            return Err(Error::IndexOutOfRange {
                index: i.max(j),
                n: self.n(),
            });
        }
        if i == j || !self.space.contains(i, j) {
            return Ok(0.0);
        }
        match self.context().dyadic_change(i, j) {
            Some(delta) => Ok(expit(dot(&self.eta, &delta))),
            None => Err(Error::InvalidSpec("dyad probabilities need a dyad-independent model".into())),
        }
    }

    fn check_n(&self, net: &Network) -> Result<()> {
        if net.n() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: net.n(),
            });
        }
        Ok(())
    }

    /// `ηᵀ g(a, x)` for networks in the restricted space, `−∞` otherwise.
    pub fn log_weight(&self, net: &Network) -> Result<f64> {
        self.check_n(net)?;
        if !self.space.admits(net) {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(dot(&self.eta, &self.context().statistics(net)))
    }

    pub fn conditional_logodds(&self, net: &Network, i: usize, j: usize) -> Result<f64> {
        self.check_n(net)?;
        if i >= self.n() || j >= self.n() {
            return Err(Error::IndexOutOfRange {
                index: i.max(j),
                n: self.n(),
            });
        }
        if i == j || !self.space.contains(i, j) {
            return Err(Error::IneligibleDyad { i, j });
        }
        Ok(dot(&self.eta, &self.context().change(net, i, j)))
    }
}

/// Statistics of the block-structured local-dependence model: the
/// `within` terms apply inside blocks (one shared copy, or one copy per block
/// when `per_block` gives the block count), followed by the `between` terms.
pub fn local_dependence_spec(within: &[Term], between: &[Term], per_block: Option<usize>) -> StatisticSpec {
    let mut terms: Vec<StatTerm> = Vec::new();
    match per_block {
        None => terms.extend(within.iter().cloned().map(StatTerm::from)),
        Some(k) => {
            for b in 0..k {
                terms.extend(within.iter().map(|t| StatTerm {
                    term: t.clone(),
                    block: Some(b),
                }));
            }
        }
    }
    terms.extend(between.iter().cloned().map(StatTerm::from));
    StatisticSpec::new(terms)
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn log_sum_exp(values: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.into_iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::Covariate;

    pub(crate) fn section4_model(n: usize, x1: Vec<f64>, x2: Vec<f64>) -> ErgmModel {
        let cov = CovariateTable::new(n)
            .with_column("x1", Covariate::Continuous(x1))
            .unwrap()
            .with_column("x2", Covariate::Continuous(x2))
            .unwrap();
        ErgmModel::new(
            StatisticSpec::new([Term::Edges, Term::NodeCov(0), Term::NodeCov(1)]),
            vec![-1.5, 0.5, -0.5],
            RestrictedSpace::complete(n),
            cov,
            None,
        )
        .unwrap()
    }

    #[test]
    fn log_weight_examples() {
        let space = RestrictedSpace::from_sets(vec![vec![1, 2], vec![0, 2], vec![0, 1], vec![4], vec![3]]).unwrap();
        let edges_only = |eta: f64| {
            ErgmModel::new(StatisticSpec::new([Term::Edges]), vec![eta], space.clone(), CovariateTable::new(5), None)
                .unwrap()
        };
        let net = Network::from_edges(5, &[(0, 1), (0, 2), (1, 2), (3, 4)]).unwrap();
        assert_eq!(edges_only(0.0).log_weight(&net).unwrap(), 0.0);
        assert_eq!(edges_only(-1.5).log_weight(&net).unwrap(), -6.0);
        let bad = Network::from_edges(5, &[(0, 3)]).unwrap();
        assert_eq!(edges_only(-1.5).log_weight(&bad).unwrap(), f64::NEG_INFINITY);
        assert!(matches!(
            edges_only(0.0).log_weight(&Network::empty(4)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn conditional_logodds_examples() {
        let m = section4_model(3, vec![0.25, 0.75, 0.0], vec![0.5, -0.5, 0.0]);
        let net = Network::empty(3);
        assert!((m.conditional_logodds(&net, 0, 1).unwrap() - -1.0).abs() < 1e-15);
        let e = ErgmModel::new(
            StatisticSpec::new([Term::Edges]),
            vec![0.7],
            RestrictedSpace::from_sets(vec![vec![1], vec![0], vec![]]).unwrap(),
            CovariateTable::new(3),
            None,
        )
        .unwrap();
        let full = Network::from_edges(3, &[(0, 1)]).unwrap();
        assert_eq!(e.conditional_logodds(&full, 0, 1).unwrap(), 0.7);
        assert_eq!(e.conditional_logodds(&net, 0, 1).unwrap(), 0.7);
        assert!(matches!(e.conditional_logodds(&net, 0, 2), Err(Error::IneligibleDyad { i: 0, j: 2 })));
    }

    #[test]
    fn rejects_wrong_dimension() {
        let r = ErgmModel::new(
            StatisticSpec::new([Term::Edges]),
            vec![0.0, 1.0],
            RestrictedSpace::complete(3),
            CovariateTable::new(3),
            None,
        );
        assert!(matches!(r, Err(Error::DimensionMismatch { expected: 1, got: 2 })));
    }

    #[test]
    fn block_log_weight_decomposes() {
        use crate::seed::rng_for;
        use rand::Rng as _;
        for trial in 0..40u64 {
            let mut rng = rng_for(11, "blockdecomp", trial);
            let n = rng.random_range(4..=12);
            let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
            let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
            let cov = CovariateTable::new(n).with_column("x", Covariate::Continuous(x.clone())).unwrap();
            let mut edges = Vec::new();
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.random::<f64>() < 0.4 {
                        edges.push((i, j));
                    }
                }
            }
            let net = Network::from_edges(n, &edges).unwrap();
            let within = [Term::Edges, Term::NodeCov(0), Term::Gwesp(0.3)];
            let spec = local_dependence_spec(&within, &[Term::BetweenEdges, Term::BetweenNodeCov(0)], None);
            let eta = vec![-1.0, 0.4, 0.6, -2.0, 0.3];
            let blocks = BlockMembership::new(labels.clone());
            let model = ErgmModel::new(spec, eta.clone(), RestrictedSpace::complete(n), cov, Some(blocks)).unwrap();
            let monolithic = model.log_weight(&net).unwrap();

            // each block evaluated as a standalone network, plus a direct between-dyad sum
            let mut total = 0.0;
            for b in 0..2 {
                let members: Vec<usize> = (0..n).filter(|&i| labels[i] == b).collect();
                let m = members.len();
                let sub_edges: Vec<(usize, usize)> = (0..m)
                    .flat_map(|k| ((k + 1)..m).map(move |l| (k, l)))
                    .filter(|&(k, l)| net.has_edge(members[k], members[l]))
                    .collect();
                let sub = Network::from_edges(m, &sub_edges).unwrap();
                let sub_cov = CovariateTable::new(m)
                    .with_column("x", Covariate::Continuous(members.iter().map(|&i| x[i]).collect()))
                    .unwrap();
                let g = crate::stats::compute_statistics(&sub, &sub_cov, &StatisticSpec::new(within.clone()), None).unwrap();
                total += dot(&eta[..3], &g);
            }
            for (i, j) in net.edges() {
                if labels[i] != labels[j] {
                    total += eta[3] + eta[4] * (x[i] + x[j]);
                }
            }
            assert!((monolithic - total).abs() < 1e-10, "{monolithic} vs {total}");
        }
    }
}
