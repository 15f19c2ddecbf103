use rand::Rng as _;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use super::{DgpConfig, Interaction, Scenario};
use crate::ergm::{local_dependence_spec, ErgmModel};
use crate::error::Result;
use crate::network::{
    dependence_from_blocks, dependence_from_overlap, eligibility_from_distance, knn_neighborhoods, knn_within_groups,
    DependenceSystem, LocalAdjacency, Locations, NeighborhoodSystem, Network, RestrictedSpace,
};
use crate::seed::rng_for;
use crate::stats::{BlockMembership, Covariate, CovariateTable, StatisticSpec, Term};

/// Fixed potential outcomes `Y_i(a_i)`.
pub trait PotentialOutcomes: Send + Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `Y_i` at local treatment `a_i`, `i` being the owner of `a_i`.
    fn outcome(&self, a_i: &LocalAdjacency) -> f64;

    /// Outcomes realized under network `net`.
    fn observed(&self, net: &Network, nbhds: &NeighborhoodSystem) -> Vec<f64> {
        (0..self.len())
            .map(|i| self.outcome(&crate::network::local_subnetwork(net, nbhds, i).expect("unit in range")))
            .collect()
    }

    /// Hex SHA-256 of the outcome table.
    fn digest(&self) -> String;

    /// `(base, coef)` when `Y_i(a_i) = base_i + Σ_{j ∈ N_i} a_ij coef_j`.
    fn additive(&self) -> Option<(&[f64], &[f64])> {
        None
    }
}

/// `Y_i(a_i) = base_i + Σ_{j ∈ N_i} a_ij c_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearOutcomes {
    pub base: Vec<f64>,
    pub coef: Vec<f64>,
}

impl PotentialOutcomes for LinearOutcomes {
    fn len(&self) -> usize {
        self.base.len()
    }

    fn outcome(&self, a_i: &LocalAdjacency) -> f64 {
        let i = a_i.owner();
        let k = a_i.members().iter().position(|&m| m == i).expect("owner in its neighborhood");
        let mut y = self.base[i];
        for (l, &j) in a_i.members().iter().enumerate() {
            if l != k && a_i.get(k, l) {
                y += self.coef[j];
            }
        }
        y
    }

    fn observed(&self, net: &Network, nbhds: &NeighborhoodSystem) -> Vec<f64> {
        (0..self.len())
            .map(|i| {
                let mut y = self.base[i];
                for &j in nbhds.members(i) {
                    if j != i && net.has_edge(i, j) {
                        y += self.coef[j];
                    }
                }
                y
            })
            .collect()
    }

    fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.base.len() as u64).to_le_bytes());
        for v in self.base.iter().chain(&self.coef) {
            h.update(v.to_bits().to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    fn additive(&self) -> Option<(&[f64], &[f64])> {
        Some((&self.base, &self.coef))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticStudy {
    pub config: DgpConfig,
    pub locations: Locations,
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub eps: Vec<f64>,
    pub model: ErgmModel,
    pub nbhds: NeighborhoodSystem,
    pub dependence: DependenceSystem,
    /// Block labels for the local-dependence scenario.
    pub blocks: Option<Vec<usize>>,
    pub outcomes: LinearOutcomes,
}

const BERNOULLI_ETA: [f64; 3] = [-1.5, 0.5, -0.5];
// within: edges, x1, x2, gwesp; between: edges, x1, x2
const LOCALDEP_ETA: [f64; 7] = [-1.5, 0.5, -0.5, 0.5, -1.5, 0.5, -0.5];
const GWESP_DECAY: f64 = 0.3;

pub fn generate_dgp(cfg: &DgpConfig) -> Result<SyntheticStudy> {
    cfg.validate()?;
    let n = cfg.n;
    let mut rng = rng_for(cfg.seed, "dgp", 0);
    let points: Vec<[f64; 2]> = (0..n).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
    let normals = |rng: &mut crate::seed::Rng| -> Vec<f64> { (0..n).map(|_| rng.sample(StandardNormal)).collect() };
    let x1 = normals(&mut rng);
    let x2 = normals(&mut rng);
    let eps = normals(&mut rng);
    let locations = Locations::new(points)?;
    let cov = CovariateTable::new(n)
        .with_column("x1", Covariate::Continuous(x1.clone()))?
        .with_column("x2", Covariate::Continuous(x2.clone()))?;
    let space = match cfg.cutoff {
        Some(c) => eligibility_from_distance(&locations, c)?,
        None => RestrictedSpace::complete(n),
    };
    let k = cfg.nbhd_size();
    let (model, nbhds, dependence, blocks) = match cfg.scenario {
        Scenario::Bernoulli => {
            let spec = StatisticSpec::new([Term::Edges, Term::NodeCov(0), Term::NodeCov(1)]);
            let model = ErgmModel::new(spec, BERNOULLI_ETA.to_vec(), space, cov, None)?;
            let nbhds = knn_neighborhoods(&locations, k)?;
            let dep = dependence_from_overlap(&nbhds);
            (model, nbhds, dep, None)
        }
        Scenario::LocalDependence => {
            let blocks_n = ((n as f64 / cfg.block_mean_size as f64).round() as usize).max(1);
            let mut brng = rng_for(cfg.seed, "blocks", 0);
            let labels: Vec<usize> = (0..n).map(|_| brng.random_range(0..blocks_n)).collect();
            let spec = local_dependence_spec(
                &[Term::Edges, Term::NodeCov(0), Term::NodeCov(1), Term::Gwesp(GWESP_DECAY)],
                &[Term::BetweenEdges, Term::BetweenNodeCov(0), Term::BetweenNodeCov(1)],
                None,
            );
            let membership = BlockMembership::new(labels.clone());
            let model = ErgmModel::new(spec, LOCALDEP_ETA.to_vec(), space, cov, Some(membership))?;
            let nbhds = knn_within_groups(&locations, k, &labels)?;
            let dep = dependence_from_blocks(&labels);
            (model, nbhds, dep, Some(labels))
        }
    };
    let coef = match cfg.interaction {
        Interaction::Covariates => x1.iter().zip(&x2).map(|(a, b)| a + b).collect(),
        Interaction::PerEdge(c) => vec![c; n],
        Interaction::None => vec![0.0; n],
    };
    let base = (0..n).map(|i| 1.0 + 2.0 * x1[i] + 1.5 * x2[i] + eps[i]).collect();
    Ok(SyntheticStudy {
        config: cfg.clone(),
        locations,
        x1,
        x2,
        eps,
        model,
        nbhds,
        dependence,
        blocks,
        outcomes: LinearOutcomes { base, coef },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::local_subnetwork;

    #[test]
    fn same_config_gives_identical_study() {
        for scenario in [Scenario::Bernoulli, Scenario::LocalDependence] {
            let mut cfg = DgpConfig::new(scenario, 120, 3);
            cfg.seed = 11;
            let a = generate_dgp(&cfg).unwrap();
            let b = generate_dgp(&cfg).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.outcomes.digest(), b.outcomes.digest());
            cfg.seed = 12;
            assert_ne!(generate_dgp(&cfg).unwrap().outcomes.digest(), a.outcomes.digest());
        }
    }

    #[test]
    fn neighborhoods_and_dependence_follow_scenario() {
        let cfg = DgpConfig::new(Scenario::Bernoulli, 100, 3);
        let s = generate_dgp(&cfg).unwrap();
        assert!((0..100).all(|i| s.nbhds.members(i).len() == 3));
        assert_eq!(s.dependence, dependence_from_overlap(&s.nbhds));
        assert!(s.blocks.is_none());
        let mut wide = cfg.clone();
        wide.nbhd_includes_self = false;
        let s = generate_dgp(&wide).unwrap();
        assert!((0..100).all(|i| s.nbhds.members(i).len() == 4));

        let cfg = DgpConfig::new(Scenario::LocalDependence, 300, 3);
        let s = generate_dgp(&cfg).unwrap();
        let labels = s.blocks.clone().unwrap();
        assert_eq!(labels.iter().max().unwrap() + 1, 6);
        assert_eq!(s.dependence, dependence_from_blocks(&labels));
        for i in 0..300 {
            assert!(s.nbhds.members(i).iter().all(|&j| labels[j] == labels[i]));
        }
        assert!(!s.model.is_dyad_independent());
        assert_eq!(s.model.spec().dim(), 7);
    }

    #[test]
    fn eligibility_uses_distance_cutoff() {
        let s = generate_dgp(&DgpConfig::new(Scenario::Bernoulli, 80, 3)).unwrap();
        use crate::network::Distances;
        for i in 0..80 {
            for j in 0..80 {
                if i != j {
                    assert_eq!(s.model.space().contains(i, j), s.locations.distance(i, j) < 0.2);
                }
            }
        }
    }

    #[test]
    fn linear_outcome_fast_path_matches_local_adjacency() {
        let s = generate_dgp(&DgpConfig::new(Scenario::Bernoulli, 60, 4)).unwrap();
        let sampler = crate::ergm::IndependentSampler::new(&s.model).unwrap();
        let net = sampler.draw(&mut rng_for(1, "t", 0));
        let fast = s.outcomes.observed(&net, &s.nbhds);
        for i in 0..60 {
            let a = local_subnetwork(&net, &s.nbhds, i).unwrap();
            assert_eq!(fast[i], s.outcomes.outcome(&a));
        }
    }
}
