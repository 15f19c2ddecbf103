//! End-to-end runs through the public API: files in, estimates out.

use std::fmt::Write as _;

use edgecause_core::ergm::{exact_distribution, mcmc_mle, ErgmModel, FitConfig, IndependentSampler, SamplerConfig};
use edgecause_core::estimators::{omega_matrix, report, sample_mean, EstimatorKind};
use edgecause_core::intervention::{exact_denominators, ipw_weights_from_counts, sampled_denominators};
use edgecause_core::io::{parse_edges, parse_nodes, Geometry, ModelConfig};
use edgecause_core::network::{dependence_from_overlap, knn_neighborhoods, local_edge_count, NeighborhoodSystem};
use edgecause_core::seed::rng_for;
use edgecause_core::simlab::{generate_dgp, DgpConfig, PotentialOutcomes, Scenario};
use edgecause_core::stats::{BlockMembership, Covariate, CovariateTable, StatisticSpec, Term};

#[test]
fn csv_to_estimates() {
    let mut cfg = DgpConfig::new(Scenario::Bernoulli, 150, 3);
    cfg.seed = 31;
    let s = generate_dgp(&cfg).unwrap();
    let net = IndependentSampler::new(&s.model).unwrap().draw(&mut rng_for(31, "pipeline", 0));
    let y = s.outcomes.observed(&net, &s.nbhds);

    let mut nodes = String::from("id,loc_x,loc_y,x1,x2,y\n");
    // reversed order on purpose; ingestion sorts by id
    for i in (0..150).rev() {
        let p = s.locations.points()[i];
        writeln!(nodes, "{},{},{},{},{},{}", i + 1, p[0], p[1], s.x1[i], s.x2[i], y[i]).unwrap();
    }
    let mut edges = String::from("i,j\n");
    for (a, b) in net.edges() {
        writeln!(edges, "{},{}", b + 1, a + 1).unwrap();
    }
    let table = parse_nodes(nodes.as_bytes()).unwrap();
    let observed = parse_edges(edges.as_bytes(), 150).unwrap();
    assert_eq!(observed, net);
    let config = ModelConfig::from_json(
        r#"{"terms":[{"term":"edges"},{"term":"nodecov","covariate":"x1"},{"term":"nodecov","covariate":"x2"}],
            "constraint":{"type":"distance","cutoff":0.2}}"#,
    )
    .unwrap();
    let cov = table.covariate_table(&[], &["y".to_string()]).unwrap();
    assert_eq!(cov, *s.model.covariates());
    let spec = config.spec(&cov, None).unwrap();
    let geo = Geometry::Locations(table.locations.clone().unwrap());
    let space = config.restricted_space(Some(&geo), 150).unwrap();
    assert_eq!(space, *s.model.space());

    let fit = mcmc_mle(&spec, &observed, &space, &cov, None, None, &FitConfig::default()).unwrap();
    assert!(fit.converged);
    for (k, (e, t)) in fit.eta_hat.iter().zip(s.model.eta()).enumerate() {
        assert!((e - t).abs() <= 4.0 * fit.se[k], "η[{k}] = {e}, truth {t}, se {}", fit.se[k]);
    }

    let model = ErgmModel::new(spec, fit.eta_hat, space, cov, None).unwrap();
    let nbhds = knn_neighborhoods(&geo, 3).unwrap();
    assert_eq!(nbhds, s.nbhds);
    let grid = [-0.5, 0.0, 0.5];
    let dens = exact_denominators(&model, &nbhds, &grid).unwrap();
    let counts: Vec<usize> = (0..150).map(|i| local_edge_count(&observed, nbhds.members(i))).collect();
    let sets: Vec<_> = grid
        .iter()
        .zip(&dens)
        .map(|(&l, d)| ipw_weights_from_counts(&counts, l, d).unwrap())
        .collect();
    let y_in = table.numeric_column("y").unwrap();
    let rows = report(&sets, &y_in, &omega_matrix(&dependence_from_overlap(&nbhds)).unwrap(), 0.95).unwrap();
    assert_eq!(rows.len(), 6);
    for r in rows.iter().filter(|r| r.lambda == 0.0) {
        assert_eq!(r.estimate.to_bits(), sample_mean(&y).to_bits());
        assert_eq!(r.contrast_vs_zero, Some(0.0));
    }
    for r in &rows {
        assert!(r.se > 0.0 && r.ci_low < r.estimate && r.estimate < r.ci_high);
        assert_eq!(r.denominator_mcse_max, 0.0);
    }
    let hajek: Vec<_> = rows.iter().filter(|r| r.kind == EstimatorKind::Hajek).collect();
    assert_eq!(hajek.len(), 3);
}

/// Shared-chain Monte Carlo denominators agree with enumeration on a small
/// dependent block model.
#[test]
fn sampled_denominators_track_enumeration() {
    let n = 6;
    let cov = CovariateTable::new(n)
        .with_column("x", Covariate::Continuous(vec![0.3, -1.0, 0.8, 0.1, -0.2, 1.4]))
        .unwrap();
    let blocks = BlockMembership::new(vec![0, 0, 0, 1, 1, 1]);
    let spec = StatisticSpec::new([Term::Edges, Term::NodeCov(0), Term::Gwesp(0.3), Term::BetweenEdges]);
    let model = ErgmModel::new(
        spec,
        vec![-0.8, 0.4, 0.6, -1.2],
        edgecause_core::network::RestrictedSpace::complete(n),
        cov,
        Some(blocks),
    )
    .unwrap();
    assert!(exact_distribution(&model).is_ok());
    let nbhds = NeighborhoodSystem::from_sets(vec![
        vec![0, 1, 2],
        vec![1, 0, 2],
        vec![2, 0, 1],
        vec![3, 4, 5],
        vec![4, 3, 5],
        vec![5, 3, 4],
    ])
    .unwrap();
    let grid = [-0.7, 0.0, 0.7];
    let exact = exact_denominators(&model, &nbhds, &grid).unwrap();
    let sampled = sampled_denominators(&model, &nbhds, &grid, &SamplerConfig::sweeps(&model, 40_000, 3)).unwrap();
    for (e, s) in exact.iter().flatten().zip(sampled.iter().flatten()) {
        let (ev, sv) = (e.value(), s.value());
        // histogram mcse is iid-based; allow for chain autocorrelation
        assert!((ev - sv).abs() <= 6.0 * s.mcse + 1e-12, "exact {ev}, sampled {sv} ± {}", s.mcse);
    }
}
