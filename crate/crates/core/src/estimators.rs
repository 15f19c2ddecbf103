//! IPW point estimators, the dependence-aware variance and Normal intervals.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::intervention::WeightSet;
use crate::network::DependenceSystem;
use crate::seed::rng_for;

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch { expected: a, got: b });
    }
    Ok(())
}

pub fn sample_mean(y: &[f64]) -> f64 {
    y.iter().sum::<f64>() / y.len() as f64
}

/// `θ̂₁ = n⁻¹ Σ w_i Y_i`.
pub fn horvitz_thompson(weights: &[f64], y: &[f64]) -> Result<f64> {
    check_len(y.len(), weights.len())?;
    Ok(weights.iter().zip(y).map(|(w, v)| w * v).sum::<f64>() / y.len() as f64)
}

/// `θ̂₂ = Σ w_i Y_i / Σ w_i`.
pub fn hajek(weights: &[f64], y: &[f64]) -> Result<f64> {
    check_len(y.len(), weights.len())?;
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroTotalWeight);
    }
    // exact in the two cases where the ratio reduces analytically
    if weights.iter().all(|&w| w == weights[0]) {
        return Ok(sample_mean(y));
    }
    if y.iter().all(|&v| v == y[0]) {
        return Ok(y[0]);
    }
    Ok(weights.iter().zip(y).map(|(w, v)| w * v).sum::<f64>() / total)
}

/// Sparse symmetric `ω_ij = |R_i ∩ R_j| / (n⁻¹ Σ_k |R_k|)`.
#[derive(Clone, Debug, PartialEq)]
pub struct OmegaMatrix {
    rows: Vec<Vec<(usize, f64)>>,
}

impl OmegaMatrix {
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .binary_search_by_key(&j, |&(k, _)| k)
            .map_or(0.0, |p| self.rows[i][p].1)
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut m = DMatrix::zeros(n, n);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// Units relabeled so old unit `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut rows = vec![Vec::new(); self.n()];
        for (i, row) in self.rows.iter().enumerate() {
            let mut r: Vec<(usize, f64)> = row.iter().map(|&(j, v)| (perm[j], v)).collect();
            r.sort_unstable_by_key(|&(j, _)| j);
            rows[perm[i]] = r;
        }
        OmegaMatrix { rows }
    }

    /// `Σ_ij ω_ij r_i r_j`.
    pub fn quadratic_form(&self, r: &[f64]) -> f64 {
        self.rows
            .iter()
            .zip(r)
            .map(|(row, &ri)| ri * row.iter().map(|&(j, v)| v * r[j]).sum::<f64>())
            .sum()
    }
}

pub fn omega_matrix(dep: &DependenceSystem) -> Result<OmegaMatrix> {
    let n = dep.len();
    let total = dep.total_size();
    if total == 0 {
        return Err(Error::InvalidConfig("all dependence neighborhoods are empty".into()));
    }
    let scale = n as f64 / total as f64;
    let mut counts = vec![0usize; n];
    let mut touched = Vec::new();
    let rows = (0..n)
        .map(|i| {
            // by symmetry, j ∈ R_k exactly when k ∈ R_j
            for &k in dep.members(i) {
                for &j in dep.members(k) {
                    if counts[j] == 0 {
                        touched.push(j);
                    }
                    counts[j] += 1;
                }
            }
            touched.sort_unstable();
            let row = touched.iter().map(|&j| (j, counts[j] as f64 * scale)).collect();
            for &j in &touched {
                counts[j] = 0;
            }
            touched.clear();
            row
        })
        .collect();
    Ok(OmegaMatrix { rows })
}

/// `n⁻² Σ_ij ω_ij r_i r_j` for influence terms `r`, clamped at zero.
pub fn closed_form_variance(omega: &OmegaMatrix, r: &[f64]) -> Result<f64> {
    check_len(omega.n(), r.len())?;
    let n = r.len() as f64;
    let v = omega.quadratic_form(r) / (n * n);
    if v < 0.0 {
        log::warn!("closed-form variance {v} is negative; clamped to 0");
        return Ok(0.0);
    }
    Ok(v)
}

/// Variance of `θ̂₁` with residuals `w_i Y_i − θ̂`.
pub fn variance_closed_form(weights: &[f64], y: &[f64], theta_hat: f64, omega: &OmegaMatrix) -> Result<f64> {
    check_len(y.len(), weights.len())?;
    let r: Vec<f64> = weights.iter().zip(y).map(|(w, v)| w * v - theta_hat).collect();
    closed_form_variance(omega, &r)
}

/// Lower Cholesky factor of `Ω + εI` with `ε = max(0, −λ_min) + 1e−10`.
pub fn repaired_cholesky(omega: &OmegaMatrix) -> Result<DMatrix<f64>> {
    let dense = omega.to_dense();
    let n = dense.nrows();
    let lambda_min = dense.clone().symmetric_eigen().eigenvalues.min();
    let eps = (-lambda_min).max(0.0) + 1e-10;
    let repaired = dense + DMatrix::identity(n, n) * eps;
    Ok(repaired.cholesky().ok_or(Error::Factorization)?.l())
}

/// Dependent wild bootstrap: `θ*_b = n⁻¹ Σ_i (θ̂ + r_i W_i)` with
/// `W ~ N(0, Ω)`; returns the sample variance of the replicates.
pub fn wild_bootstrap(weights: &[f64], y: &[f64], theta_hat: f64, omega: &OmegaMatrix, b: usize, seed: u64) -> Result<f64> {
    check_len(y.len(), weights.len())?;
    check_len(omega.n(), y.len())?;
    if b < 2 {
        return Err(Error::InsufficientReplicates(b));
    }
    let n = y.len();
    let r = DVector::from_iterator(n, weights.iter().zip(y).map(|(w, v)| w * v - theta_hat));
    if r.iter().all(|&x| x == 0.0) {
        return Ok(0.0);
    }
    let l = repaired_cholesky(omega)?;
    // θ*_b − θ̂ = n⁻¹ rᵀ L z_b, so only Lᵀ r is needed
    let v = l.transpose() * r / n as f64;
    let reps: Vec<f64> = (0..b)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng_for(seed, "wild-bootstrap", k as u64);
            let dev: f64 = v.iter().map(|vi| { let z: f64 = StandardNormal.sample(&mut rng); vi * z }).sum();
            theta_hat + dev
        })
        .collect();
    let mean = reps.iter().sum::<f64>() / b as f64;
    Ok(reps.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (b - 1) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    HorvitzThompson,
    Hajek,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 2] = [EstimatorKind::HorvitzThompson, EstimatorKind::Hajek];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::HorvitzThompson => "ht",
            EstimatorKind::Hajek => "hajek",
        }
    }

    pub fn estimate(self, weights: &[f64], y: &[f64]) -> Result<f64> {
        match self {
            EstimatorKind::HorvitzThompson => horvitz_thompson(weights, y),
            EstimatorKind::Hajek => hajek(weights, y),
        }
    }

    /// Per-unit influence terms whose Ω-quadratic form gives the variance;
    /// the Hájek terms are the ratio-estimator linearization.
    pub fn influence(self, weights: &[f64], y: &[f64], estimate: f64) -> Vec<f64> {
        match self {
            EstimatorKind::HorvitzThompson => weights.iter().zip(y).map(|(w, v)| w * v - estimate).collect(),
            EstimatorKind::Hajek => {
                let wbar = weights.iter().sum::<f64>() / weights.len() as f64;
                weights.iter().zip(y).map(|(w, v)| w / wbar * (v - estimate)).collect()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimateReport {
    pub lambda: f64,
    pub kind: EstimatorKind,
    pub estimate: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub contrast_vs_zero: Option<f64>,
    pub contrast_se: Option<f64>,
    pub denominator_mcse_max: f64,
}

/// Two-sided Normal quantile for confidence `level`.
pub fn normal_quantile(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidConfig(format!("confidence level must be in (0,1), got {level}")));
    }
    Ok(Normal::standard().inverse_cdf(0.5 + level / 2.0))
}

/// Per-λ, per-estimator rows; contrasts against the λ = 0 entry when present.
pub fn report(weight_sets: &[WeightSet], y: &[f64], omega: &OmegaMatrix, level: f64) -> Result<Vec<EstimateReport>> {
    let z = normal_quantile(level)?;
    let baseline = weight_sets.iter().find(|w| w.lambda == 0.0);
    let mut rows = Vec::with_capacity(2 * weight_sets.len());
    for ws in weight_sets {
        check_len(y.len(), ws.weights.len())?;
        for kind in EstimatorKind::ALL {
            let estimate = kind.estimate(&ws.weights, y)?;
            let infl = kind.influence(&ws.weights, y, estimate);
            let se = closed_form_variance(omega, &infl)?.sqrt();
            let (contrast_vs_zero, contrast_se) = match baseline {
                Some(base) => {
                    let est0 = kind.estimate(&base.weights, y)?;
                    let infl0 = kind.influence(&base.weights, y, est0);
                    let diff: Vec<f64> = infl.iter().zip(&infl0).map(|(a, b)| a - b).collect();
                    (Some(estimate - est0), Some(closed_form_variance(omega, &diff)?.sqrt()))
                }
                None => (None, None),
            };
            rows.push(EstimateReport {
                lambda: ws.lambda,
                kind,
                estimate,
                se,
                ci_low: estimate - z * se,
                ci_high: estimate + z * se,
                contrast_vs_zero,
                contrast_se,
                denominator_mcse_max: ws.denominator_mcse.iter().copied().fold(0.0, f64::max),
            });
        }
    }
    Ok(rows)
}
