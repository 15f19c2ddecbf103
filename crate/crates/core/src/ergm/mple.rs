use nalgebra::{DMatrix, DVector};

use super::expit;
use crate::error::{Error, Result};
use crate::network::{Network, RestrictedSpace};
use crate::stats::{BlockMembership, CovariateTable, StatContext, StatisticSpec};

const MAX_NEWTON: usize = 200;
const GRAD_TOL: f64 = 1e-8;
// a fitted log-odds this extreme on a dyad it predicts perfectly means the
// pseudo-likelihood has no finite maximizer
const SEPARATION_LOGIT: f64 = 15.0;

pub fn mple(spec: &StatisticSpec, observed: &Network, space: &RestrictedSpace, cov: &CovariateTable) -> Result<Vec<f64>> {
    mple_with_blocks(spec, observed, space, cov, None)
}

/// Logistic regression of eligible-dyad edge indicators on their change
/// statistics, by damped Newton iterations.
pub fn mple_with_blocks(
    spec: &StatisticSpec,
    observed: &Network,
    space: &RestrictedSpace,
    cov: &CovariateTable,
    blocks: Option<&BlockMembership>,
) -> Result<Vec<f64>> {
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
    let dyads = space.dyads();
    if dyads.is_empty() {
        return Err(Error::InvalidSpec("no eligible dyads to fit".into()));
    }
    let d = spec.dim();
    let rows: Vec<Vec<f64>> = dyads.iter().map(|&(i, j)| ctx.change(observed, i, j)).collect();
    let x = DMatrix::from_fn(dyads.len(), d, |r, c| rows[r][c]);
    let y = DVector::from_iterator(dyads.len(), dyads.iter().map(|&(i, j)| observed.has_edge(i, j) as u8 as f64));
    logistic_newton(&x, &y)
}

fn log_lik(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    let lin = x * beta;
    lin.iter()
        .zip(y.iter())
        .map(|(&l, &yy)| yy * l - softplus(l))
        .sum()
}

#[inline]
fn softplus(l: f64) -> f64 {
    if l > 0.0 {
        l + (-l).exp().ln_1p()
    } else {
        l.exp().ln_1p()
    }
}

pub(crate) fn logistic_newton(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Vec<f64>> {
    let d = x.ncols();
    let mut beta = DVector::zeros(d);
    let mut ll = log_lik(x, y, &beta);
    let mut converged = false;
    for _ in 0..MAX_NEWTON {
        let lin = x * &beta;
        let p = lin.map(expit);
        let grad = x.transpose() * (y - &p);
        if grad.norm() <= GRAD_TOL {
            converged = true;
            break;
        }
        let w = p.map(|pi| pi * (1.0 - pi));
        let mut h = DMatrix::zeros(d, d);
        for (r, &wr) in w.iter().enumerate() {
            let row = x.row(r);
            for a in 0..d {
                let ra = wr * row[a];
                for b in a..d {
                    h[(a, b)] += ra * row[b];
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                h[(a, b)] = h[(b, a)];
            }
        }
        let step = match h.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => {
                if beta.norm() > SEPARATION_LOGIT {
                    break;
                }
                return Err(Error::Singular("pseudo-likelihood Hessian"));
            }
        };
        let mut t = 1.0;
        loop {
            let cand = &beta + &step * t;
            let cand_ll = log_lik(x, y, &cand);
            if cand_ll >= ll - 1e-12 * ll.abs() || t < 1e-10 {
                beta = cand;
                ll = cand_ll;
                break;
            }
            t *= 0.5;
        }
    }
    let lin = x * &beta;
    let separated = lin.iter().zip(y.iter()).any(|(&l, &yy)| {
        l.abs() > SEPARATION_LOGIT && ((l > 0.0) == (yy > 0.5))
    });
    if separated || !converged && beta.norm() > SEPARATION_LOGIT {
        let norm = beta.norm();
        return Err(Error::DegeneratePseudoLikelihood {
            direction: beta.iter().map(|b| b / norm).collect(),
        });
    }
    if !converged || beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::Singular("pseudo-likelihood did not converge"));
    }
    Ok(beta.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ergm::{exact_distribution, ErgmModel};
    use crate::seed::rng_for;
    use crate::stats::{compute_statistics, Covariate, Term};
    use rand::Rng as _;

    fn logit(p: f64) -> f64 {
        (p / (1.0 - p)).ln()
    }

    #[test]
    fn edges_only_is_logit_density() {
        let space = RestrictedSpace::from_sets(vec![vec![1, 2, 3], vec![0, 2], vec![0, 1, 3], vec![0, 2], vec![]]).unwrap();
        let net = Network::from_edges(5, &[(0, 1), (2, 3)]).unwrap();
        let eta = mple(&StatisticSpec::new([Term::Edges]), &net, &space, &CovariateTable::new(5)).unwrap();
        assert!((eta[0] - logit(2.0 / 5.0)).abs() < 1e-10);
    }

    #[test]
    fn complete_observed_network_is_separated() {
        let space = RestrictedSpace::complete(4);
        let net = Network::from_edges(4, &space.dyads().to_vec()).unwrap();
        match mple(&StatisticSpec::new([Term::Edges]), &net, &space, &CovariateTable::new(4)) {
            Err(Error::DegeneratePseudoLikelihood { direction }) => assert!((direction[0] - 1.0).abs() < 1e-12),
            other => panic!("expected separation, got {other:?}"),
        }
        let empty = Network::empty(4);
        assert!(matches!(
            mple(&StatisticSpec::new([Term::Edges]), &empty, &space, &CovariateTable::new(4)),
            Err(Error::DegeneratePseudoLikelihood { .. })
        ));
    }

    /// Exact log-likelihood by enumeration, maximized by gradient ascent with
    /// Barzilai–Borwein steps; gradient is `g_obs − E_η[g]` from the table.
    fn exact_mle(model: &ErgmModel, observed: &Network) -> Vec<f64> {
        let g_obs = compute_statistics(observed, model.covariates(), model.spec(), None).unwrap();
        let d = g_obs.len();
        let grad = |eta: &[f64]| -> Vec<f64> {
            let m = model.with_eta(eta.to_vec()).unwrap();
            let dist = exact_distribution(&m).unwrap();
            let mut mean = vec![0.0; d];
            for code in 0..dist.len() {
                let g = compute_statistics(&dist.network(code), m.covariates(), m.spec(), None).unwrap();
                let p = dist.prob(code);
                for k in 0..d {
                    mean[k] += p * g[k];
                }
            }
            (0..d).map(|k| g_obs[k] - mean[k]).collect()
        };
        let mut eta = vec![0.0; d];
        let mut g = grad(&eta);
        let mut step = 0.01;
        for _ in 0..5000 {
            let next: Vec<f64> = eta.iter().zip(&g).map(|(e, gk)| e + step * gk).collect();
            let g_next = grad(&next);
            let s: Vec<f64> = next.iter().zip(&eta).map(|(a, b)| a - b).collect();
            let yv: Vec<f64> = g_next.iter().zip(&g).map(|(a, b)| b - a).collect();
            let sy: f64 = s.iter().zip(&yv).map(|(a, b)| a * b).sum();
            let ss: f64 = s.iter().map(|a| a * a).sum();
            eta = next;
            g = g_next;
            if g.iter().map(|x| x * x).sum::<f64>().sqrt() < 1e-11 {
                break;
            }
            if sy > 0.0 {
                step = ss / sy;
            }
        }
        eta
    }

    #[test]
    fn dyad_independent_mple_equals_exact_mle() {
        let n = 6;
        for trial in 0..3 {
            let mut rng = rng_for(5, "mple-oracle", trial);
            let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let cov = CovariateTable::new(n).with_column("x", Covariate::Continuous(x)).unwrap();
            let space = RestrictedSpace::complete(n);
            let spec = StatisticSpec::new([Term::Edges, Term::NodeCov(0)]);
            let model = ErgmModel::new(spec.clone(), vec![0.0, 0.0], space.clone(), cov.clone(), None).unwrap();
            let observed = loop {
                let edges: Vec<(usize, usize)> =
                    space.dyads().iter().copied().filter(|_| rng.random::<f64>() < 0.45).collect();
                let net = Network::from_edges(n, &edges).unwrap();
                if let Ok(eta) = mple(&spec, &net, &space, &cov) {
                    break (net, eta);
                }
            };
            let oracle = exact_mle(&model, &observed.0);
            for (a, b) in observed.1.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-6, "{:?} vs {:?}", observed.1, oracle);
            }
        }
    }
}
