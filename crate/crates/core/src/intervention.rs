//! Stochastic interventions that tilt each local-treatment law by its edge
//! count, and the inverse-probability weights they induce.

use crate::ergm::{
    exact_distribution, exact_local_marginal, log_sum_exp, ErgmModel, IndependentSampler, LocalLaw, MhChain, SamplerConfig,
};
use crate::error::{Error, Result};
use crate::network::{local_edge_count, LocalAdjacency, NeighborhoodSystem, Network};
use crate::seed::rng_for;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InterventionPolicy {
    lambda: f64,
}

impl InterventionPolicy {
    pub fn new(lambda: f64) -> Result<Self> {
        if !lambda.is_finite() {
            return Err(Error::InvalidConfig(format!("lambda must be finite, got {lambda}")));
        }
        Ok(InterventionPolicy { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

/// `q(a_i) ∝ p(a_i) exp{e(a_i) λ}`, normalized in log space.
pub fn tilt_distribution(dist: &LocalLaw, lambda: f64) -> Result<LocalLaw> {
    let total = dist.total();
    if total <= 0.0 {
        return Err(Error::InvalidDistribution("all-zero distribution".into()));
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidDistribution(format!("probabilities sum to {total}")));
    }
    if lambda == 0.0 {
        return Ok(dist.clone());
    }
    let logs: Vec<(LocalAdjacency, f64)> = dist
        .iter()
        .filter(|(_, p)| *p > 0.0)
        .map(|(a, p)| (a.clone(), p.ln() + a.edge_count() as f64 * lambda))
        .collect();
    let lse = log_sum_exp(logs.iter().map(|(_, l)| *l));
    let support = dist.iter().map(|(a, p)| {
        let q = if p > 0.0 {
            (p.ln() + a.edge_count() as f64 * lambda - lse).exp()
        } else {
            0.0
        };
        (a.clone(), q)
    });
    LocalLaw::new(dist.owner(), dist.members().to_vec(), support.collect::<Vec<_>>())
}

/// Monte Carlo estimate of `E[exp{e(A_i) λ}]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Denominator {
    pub log_value: f64,
    pub mcse: f64,
    pub draws: usize,
}

impl Denominator {
    pub fn value(&self) -> f64 {
        self.log_value.exp()
    }

    /// A denominator known without Monte Carlo error.
    pub fn exact(log_value: f64) -> Self {
        Denominator {
            log_value,
            mcse: 0.0,
            draws: 0,
        }
    }
}

/// Histogram of a unit's local edge count over a set of draws.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EdgeCountHistogram {
    counts: Vec<u64>,
    total: u64,
}

impl EdgeCountHistogram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, edges: usize) {
        if self.counts.len() <= edges {
            self.counts.resize(edges + 1, 0);
        }
        self.counts[edges] += 1;
        self.total += 1;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// `log[(1/M) Σ_m exp{e_m λ}]` and its Monte Carlo standard error.
    pub fn denominator(&self, lambda: f64) -> Result<Denominator> {
        if self.total == 0 {
            return Err(Error::EmptyDraws);
        }
        let m = self.total as f64;
        let used = self.counts.iter().enumerate().filter(|(_, &c)| c > 0);
        let max = used.clone().map(|(e, _)| e as f64 * lambda).fold(f64::NEG_INFINITY, f64::max);
        let (mut s1, mut s2) = (0.0, 0.0);
        for (e, &c) in used {
            let v = (e as f64 * lambda - max).exp();
            s1 += c as f64 * v;
            s2 += c as f64 * v * v;
        }
        let log_value = max + s1.ln() - m.ln();
        let mcse = if self.total > 1 {
            let mean = s1 / m;
            let var = ((s2 - m * mean * mean) / (m - 1.0)).max(0.0);
            max.exp() * (var / m).sqrt()
        } else {
            f64::NAN
        };
        Ok(Denominator {
            log_value,
            mcse,
            draws: self.total as usize,
        })
    }
}

pub fn denominator_estimate(draws: &[LocalAdjacency], lambda: f64) -> Result<Denominator> {
    let mut h = EdgeCountHistogram::new();
    for a in draws {
        h.record(a.edge_count());
    }
    h.denominator(lambda)
}

/// Per-unit edge-count histograms accumulated from one shared network sample.
#[derive(Clone, Debug)]
pub struct SharedDenominators<'a> {
    nbhds: &'a NeighborhoodSystem,
    hists: Vec<EdgeCountHistogram>,
}

impl<'a> SharedDenominators<'a> {
    pub fn new(nbhds: &'a NeighborhoodSystem) -> Self {
        SharedDenominators {
            nbhds,
            hists: vec![EdgeCountHistogram::new(); nbhds.len()],
        }
    }

    pub fn record(&mut self, net: &Network) {
        for (i, h) in self.hists.iter_mut().enumerate() {
            h.record(local_edge_count(net, self.nbhds.members(i)));
        }
    }

    pub fn histograms(&self) -> &[EdgeCountHistogram] {
        &self.hists
    }

    pub fn denominators(&self, lambda: f64) -> Result<Vec<Denominator>> {
        self.hists.iter().map(|h| h.denominator(lambda)).collect()
    }
}

/// Exact `log E[exp{e(A_i) λ}]` from a local law.
pub fn law_log_denominator(law: &LocalLaw, lambda: f64) -> f64 {
    let terms: Vec<f64> = law
        .iter()
        .filter(|(_, p)| *p > 0.0)
        .map(|(a, p)| p.ln() + a.edge_count() as f64 * lambda)
        .collect();
    log_sum_exp(terms)
}

/// Exact `log E[exp{e(A_i) λ}]` when the dyads inside `N_i` are independent
/// with the given edge probabilities: `Σ log(1 + p (e^λ − 1))`.
pub fn independent_log_denominator(probs: impl IntoIterator<Item = f64>, lambda: f64) -> f64 {
    let g = lambda.exp_m1();
    probs.into_iter().map(|p| (p * g).ln_1p()).sum()
}

/// Edge probabilities of the eligible pairs inside each `N_i` under a
/// dyad-independent model.
pub fn local_edge_probabilities(model: &ErgmModel, nbhds: &NeighborhoodSystem) -> Result<Vec<Vec<f64>>> {
    check_units(model, nbhds)?;
    (0..nbhds.len())
        .map(|i| {
            let m = nbhds.members(i);
            let mut out = Vec::new();
            for (a, &u) in m.iter().enumerate() {
                for &v in &m[a + 1..] {
                    if model.space().contains(u, v) {
                        out.push(model.dyad_probability(u, v)?);
                    }
                }
            }
            Ok(out)
        })
        .collect()
}

/// Exact denominators per λ (outer) and unit (inner) for a dyad-independent
/// model.
pub fn exact_independent_denominators(
    model: &ErgmModel,
    nbhds: &NeighborhoodSystem,
    lambdas: &[f64],
) -> Result<Vec<Vec<Denominator>>> {
    let probs = local_edge_probabilities(model, nbhds)?;
    Ok(lambdas
        .iter()
        .map(|&lambda| {
            probs
                .iter()
                .map(|p| Denominator::exact(independent_log_denominator(p.iter().copied(), lambda)))
                .collect()
        })
        .collect())
}

/// Exact denominators per λ and unit: the product form for dyad-independent
/// models, full enumeration otherwise.
pub fn exact_denominators(model: &ErgmModel, nbhds: &NeighborhoodSystem, lambdas: &[f64]) -> Result<Vec<Vec<Denominator>>> {
    if model.is_dyad_independent() {
        return exact_independent_denominators(model, nbhds, lambdas);
    }
    check_units(model, nbhds)?;
    let dist = exact_distribution(model)?;
    let laws = (0..nbhds.len())
        .map(|i| exact_local_marginal(&dist, nbhds, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(lambdas
        .iter()
        .map(|&lambda| laws.iter().map(|law| Denominator::exact(law_log_denominator(law, lambda))).collect())
        .collect())
}

/// Monte Carlo denominators per λ and unit from one shared sample at the
/// model's η: a Metropolis–Hastings chain, or exact independent draws when
/// the model has no dyad dependence.
pub fn sampled_denominators(
    model: &ErgmModel,
    nbhds: &NeighborhoodSystem,
    lambdas: &[f64],
    cfg: &SamplerConfig,
) -> Result<Vec<Vec<Denominator>>> {
    cfg.validate()?;
    check_units(model, nbhds)?;
    let mut shared = SharedDenominators::new(nbhds);
    if model.is_dyad_independent() {
        let sampler = IndependentSampler::new(model)?;
        let mut rng = rng_for(cfg.seed, "denominators", 0);
        for _ in 0..cfg.n_draws {
            shared.record(&sampler.draw(&mut rng));
        }
    } else {
        let mut chain = MhChain::new(model, None, rng_for(cfg.seed, "denominators", 0))?;
        chain.sample_with(cfg.burn_in, cfg.thin, cfg.n_draws, |c| shared.record(c.state()));
    }
    lambdas.iter().map(|&l| shared.denominators(l)).collect()
}

fn check_units(model: &ErgmModel, nbhds: &NeighborhoodSystem) -> Result<()> {
    if nbhds.len() != model.n() {
        return Err(Error::DimensionMismatch {
            expected: model.n(),
            got: nbhds.len(),
        });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightSet {
    pub lambda: f64,
    pub weights: Vec<f64>,
    pub log_denominators: Vec<f64>,
    pub denominator_mcse: Vec<f64>,
    pub mc_samples: usize,
}

impl WeightSet {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// `w_i = exp{e(A_i) λ} / D_i`.
pub fn ipw_weights(observed_locals: &[LocalAdjacency], lambda: f64, denominators: &[Denominator]) -> Result<WeightSet> {
    let counts: Vec<usize> = observed_locals.iter().map(|a| a.edge_count()).collect();
    ipw_weights_from_counts(&counts, lambda, denominators)
}

pub fn ipw_weights_from_counts(edge_counts: &[usize], lambda: f64, denominators: &[Denominator]) -> Result<WeightSet> {
    if edge_counts.len() != denominators.len() {
        return Err(Error::DimensionMismatch {
            expected: edge_counts.len(),
            got: denominators.len(),
        });
    }
    if let Some(i) = denominators.iter().position(|d| !(d.log_value.is_finite())) {
        return Err(Error::NonPositiveDenominator(i));
    }
    let weights = edge_counts
        .iter()
        .zip(denominators)
        .map(|(&e, d)| (e as f64 * lambda - d.log_value).exp())
        .collect();
    Ok(WeightSet {
        lambda,
        weights,
        log_denominators: denominators.iter().map(|d| d.log_value).collect(),
        denominator_mcse: denominators.iter().map(|d| d.mcse).collect(),
        mc_samples: denominators.iter().map(|d| d.draws).max().unwrap_or(0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ergm::{exact_distribution, exact_local_marginal, ErgmModel};
    use crate::network::{local_subnetwork, RestrictedSpace};
    use crate::seed::rng_for;
    use crate::stats::{Covariate, CovariateTable, StatisticSpec, Term};
    use proptest::prelude::*;
    use rand::Rng as _;

    fn two_point(p_edge: f64) -> LocalLaw {
        let members = vec![0, 1];
        LocalLaw::new(
            0,
            members.clone(),
            [
                (LocalAdjacency::from_code(0, members.clone(), 0), 1.0 - p_edge),
                (LocalAdjacency::from_code(0, members, 1), p_edge),
            ],
        )
        .unwrap()
    }

    #[test]
    fn tilt_examples() {
        let law = two_point(0.5);
        assert_eq!(tilt_distribution(&law, 0.0).unwrap(), law);
        let q = tilt_distribution(&law, 2f64.ln()).unwrap();
        let edge = LocalAdjacency::from_code(0, vec![0, 1], 1);
        let none = LocalAdjacency::from_code(0, vec![0, 1], 0);
        assert!((q.prob(&edge) - 2.0 / 3.0).abs() < 1e-15);
        assert!((q.prob(&none) - 1.0 / 3.0).abs() < 1e-15);
        let degenerate = two_point(0.0);
        assert_eq!(tilt_distribution(&degenerate, 1.3).unwrap().prob(&edge), 0.0);
        let zero = LocalLaw::new(0, vec![0, 1], [(none, 0.0)]).unwrap();
        assert!(tilt_distribution(&zero, 1.0).is_err());
    }

    #[test]
    fn denominator_examples() {
        let members = vec![0, 1];
        let a0 = LocalAdjacency::from_code(0, members.clone(), 0);
        let a1 = LocalAdjacency::from_code(0, members, 1);
        let d = denominator_estimate(&[a0.clone(), a1.clone()], 2f64.ln()).unwrap();
        assert!((d.value() - 1.5).abs() < 1e-15);
        let d0 = denominator_estimate(&[a0.clone(), a1.clone(), a1.clone()], 0.0).unwrap();
        assert_eq!(d0.value(), 1.0);
        assert_eq!(d0.mcse, 0.0);
        assert!(matches!(denominator_estimate(&[], 1.0), Err(Error::EmptyDraws)));
        let w = ipw_weights(&[a1.clone(), a0.clone()], 2f64.ln(), &[d, d]).unwrap();
        assert!((w.weights[0] - 4.0 / 3.0).abs() < 1e-15);
        let w0 = ipw_weights(&[a1, a0], 0.0, &[d0, d0]).unwrap();
        assert_eq!(w0.weights, vec![1.0, 1.0]);
        let bad = Denominator::exact(f64::NEG_INFINITY);
        assert!(matches!(ipw_weights_from_counts(&[0], 1.0, &[bad]), Err(Error::NonPositiveDenominator(0))));
    }

    fn toy_model(seed: u64) -> (ErgmModel, NeighborhoodSystem) {
        let n = 6;
        let mut rng = rng_for(seed, "toy", 0);
        let x1: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let x2: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let cov = CovariateTable::new(n)
            .with_column("x1", Covariate::Continuous(x1))
            .unwrap()
            .with_column("x2", Covariate::Continuous(x2))
            .unwrap();
        let m = ErgmModel::new(
            StatisticSpec::new([Term::Edges, Term::NodeCov(0), Term::NodeCov(1), Term::Gwesp(0.3)]),
            vec![-1.0, 0.5, -0.5, 0.4],
            RestrictedSpace::complete(n),
            cov,
            None,
        )
        .unwrap();
        let nb = NeighborhoodSystem::from_sets((0..n).map(|i| vec![i, (i + 1) % n, (i + 3) % n]).collect()).unwrap();
        (m, nb)
    }

    #[test]
    fn exact_weights_self_normalize_and_identify_tilted_means() {
        let (m, nb) = toy_model(1);
        let dist = exact_distribution(&m).unwrap();
        for lambda in [-(2f64.ln()), 0.4, 2f64.ln()] {
            for i in 0..m.n() {
                let law = exact_local_marginal(&dist, &nb, i).unwrap();
                let log_d = law_log_denominator(&law, lambda);
                let tilted = tilt_distribution(&law, lambda).unwrap();
                // arbitrary fixed function of the local treatment
                let f = |a: &LocalAdjacency| (a.code().unwrap() as f64 * 0.37).sin() + a.edge_count() as f64;
                let mut total_w = 0.0;
                let mut weighted = 0.0;
                for code in 0..dist.len() {
                    let a = local_subnetwork(&dist.network(code), &nb, i).unwrap();
                    let w = (a.edge_count() as f64 * lambda - log_d).exp();
                    total_w += dist.prob(code) * w;
                    weighted += dist.prob(code) * w * f(&a);
                }
                let target: f64 = tilted.iter().map(|(a, q)| q * f(a)).sum();
                assert!((total_w - 1.0).abs() < 1e-12, "{total_w}");
                assert!((weighted - target).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn mc_denominator_within_three_standard_errors() {
        let (m, nb) = toy_model(2);
        let dist = exact_distribution(&m).unwrap();
        let lambda = 2f64.ln();
        let mut shared = SharedDenominators::new(&nb);
        let mut chain = crate::ergm::MhChain::new(&m, None, rng_for(4, "chain", 0)).unwrap();
        chain.sample_with(1000, 15, 40_000, |c| shared.record(c.state()));
        let mc = shared.denominators(lambda).unwrap();
        for (i, d) in mc.iter().enumerate() {
            let exact = law_log_denominator(&exact_local_marginal(&dist, &nb, i).unwrap(), lambda).exp();
            // thinned draws are nearly independent; allow for residual autocorrelation
            assert!((d.value() - exact).abs() < 3.0 * 1.5 * d.mcse, "{i}: {} vs {exact} ± {}", d.value(), d.mcse);
        }
    }

    #[test]
    fn independent_denominator_matches_enumeration() {
        let (m, nb) = toy_model(3);
        let m = m.with_eta(vec![-1.0, 0.5, -0.5, 0.0]).unwrap();
        let dist = exact_distribution(&m).unwrap();
        let marg = dist.edge_marginals();
        for i in 0..m.n() {
            let members = nb.members(i);
            let probs = dist
                .dyads()
                .iter()
                .zip(&marg)
                .filter(|((a, b), _)| members.contains(a) && members.contains(b))
                .map(|(_, &p)| p);
            let law = exact_local_marginal(&dist, &nb, i).unwrap();
            for lambda in [-0.7, 0.0, 0.4, 1.1] {
                let a = independent_log_denominator(probs.clone(), lambda);
                let b = law_log_denominator(&law, lambda);
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn model_denominator_helpers_match_enumeration() {
        let (dep, nb) = toy_model(5);
        let m = ErgmModel::new(
            StatisticSpec::new([Term::Edges, Term::NodeCov(0), Term::NodeCov(1)]),
            vec![-0.8, 0.5, -0.5],
            dep.space().clone(),
            dep.covariates().clone(),
            None,
        )
        .unwrap();
        let dist = exact_distribution(&m).unwrap();
        let lambdas = [-(2f64.ln()), 0.0, 1.5f64.ln()];
        let exact = exact_independent_denominators(&m, &nb, &lambdas).unwrap();
        let cfg = SamplerConfig {
            burn_in: 0,
            thin: 1,
            n_draws: 50_000,
            seed: 9,
        };
        let sampled = sampled_denominators(&m, &nb, &lambdas, &cfg).unwrap();
        for (k, &lambda) in lambdas.iter().enumerate() {
            for i in 0..m.n() {
                let oracle = law_log_denominator(&exact_local_marginal(&dist, &nb, i).unwrap(), lambda);
                assert!((exact[k][i].log_value - oracle).abs() < 1e-12);
                let d = sampled[k][i];
                assert!((d.value() - oracle.exp()).abs() <= 4.0 * d.mcse + 1e-12, "{i} {lambda}");
            }
        }
        assert!(exact_independent_denominators(&dep, &nb, &lambdas).is_err());
        let full = exact_denominators(&dep, &nb, &lambdas).unwrap();
        let dist = exact_distribution(&dep).unwrap();
        for (k, &lambda) in lambdas.iter().enumerate() {
            for i in 0..dep.n() {
                let law = exact_local_marginal(&dist, &nb, i).unwrap();
                assert_eq!(full[k][i].log_value, law_log_denominator(&law, lambda));
            }
        }
    }

    fn arb_law() -> impl Strategy<Value = LocalLaw> {
        proptest::collection::vec(prop_oneof![Just(0.0), 0.0f64..1.0], 8).prop_filter_map("nonzero", |raw| {
            let total: f64 = raw.iter().sum();
            (total > 0.0).then(|| {
                let members = vec![0, 1, 2];
                LocalLaw::new(
                    0,
                    members.clone(),
                    raw.iter().enumerate().map(|(c, p)| (LocalAdjacency::from_code(0, members.clone(), c as u64), p / total)),
                )
                .unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn tilt_normalizes_and_keeps_support(law in arb_law(), lambda in -3.0f64..3.0) {
            let q = tilt_distribution(&law, lambda).unwrap();
            prop_assert!((q.total() - 1.0).abs() <= 1e-12);
            for (a, p) in law.iter() {
                prop_assert_eq!(p == 0.0, q.prob(a) == 0.0);
            }
        }

        #[test]
        fn tilt_shifts_log_odds_by_lambda_per_edge(law in arb_law(), lambda in -3.0f64..3.0) {
            let q = tilt_distribution(&law, lambda).unwrap();
            let members = law.members().to_vec();
            for code in 0u64..8 {
                for bit in 0..3 {
                    if code & (1 << bit) != 0 { continue; }
                    let without = LocalAdjacency::from_code(0, members.clone(), code);
                    let with = LocalAdjacency::from_code(0, members.clone(), code | (1 << bit));
                    let (pw, po) = (law.prob(&with), law.prob(&without));
                    if po > 0.0 && pw > 0.0 {
                        let lhs = q.prob(&with) / q.prob(&without);
                        let rhs = lambda.exp() * pw / po;
                        prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.max(1.0));
                    }
                }
            }
        }

        #[test]
        fn tilts_compose(law in arb_law(), l1 in -2.0f64..2.0, l2 in -2.0f64..2.0) {
            let twice = tilt_distribution(&tilt_distribution(&law, l1).unwrap(), l2).unwrap();
            let once = tilt_distribution(&law, l1 + l2).unwrap();
            for (a, p) in once.iter() {
                prop_assert!((twice.prob(a) - p).abs() <= 1e-12);
            }
        }
    }
}
