//! Monte-Carlo and closed-form checks of ensemble variance reduction.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::par::{self, Exec};

const DRAW_CHUNK: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AveragedVariance {
    /// Sample variance of the averaged estimator over the draws.
    pub empirical: f64,
    /// `Σ σ_t² / T²`.
    pub exact: f64,
    /// `max σ_t² / T`.
    pub worst_case_bound: f64,
}

/// Draws `T` independent unbiased estimators `g_t = μ + σ_t z_t` and
/// measures the variance of their mean. Chunks of draws use their own
/// generator streams, so the result does not depend on `exec`.
pub fn averaged_estimator_variance(
    variances: &[f64],
    mean: f64,
    draws: usize,
    seed: u64,
    exec: Exec,
) -> Result<AveragedVariance> {
    if variances.is_empty() || variances.iter().any(|v| !(*v >= 0.0)) {
        return input("need at least one non-negative variance");
    }
    if draws < 2 {
        return input("need at least two draws");
    }
    let t = variances.len() as f64;
    let sds: Vec<f64> = variances.iter().map(|v| v.sqrt()).collect();
    let chunks = draws.div_ceil(DRAW_CHUNK);
    let parts = par::map_range(exec, chunks, |c| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        let n = DRAW_CHUNK.min(draws - c * DRAW_CHUNK);
        (0..n)
            .map(|_| {
                sds.iter().map(|s| mean + s * rng.sample::<f64, _>(StandardNormal)).sum::<f64>() / t
            })
            .collect::<Vec<f64>>()
    });
    let values: Vec<f64> = parts.concat();
    let m = values.iter().sum::<f64>() / values.len() as f64;
    let empirical = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
    let exact = variances.iter().sum::<f64>() / (t * t);
    let worst = variances.iter().cloned().fold(0.0, f64::max) / t;
    Ok(AveragedVariance { empirical, exact, worst_case_bound: worst })
}

/// `Σ_tt − Σ_t,¬t Σ_¬t,¬t⁻¹ Σ_¬t,t` for every coordinate `t`, via a
/// Cholesky solve on the complementary block.
pub fn conditional_variances(cov: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = cov.nrows();
    if n < 2 || cov.ncols() != n {
        return input("covariance must be square with at least two rows");
    }
    (0..n)
        .map(|t| {
            let rest: Vec<usize> = (0..n).filter(|&j| j != t).collect();
            let block = cov.select_rows(&rest).select_columns(&rest);
            let cross = DVector::from_iterator(rest.len(), rest.iter().map(|&j| cov[(j, t)]));
            let chol = block
                .cholesky()
                .ok_or_else(|| Error::Numeric(format!("covariance block without row {t} is not positive definite")))?;
            Ok(cov[(t, t)] - cross.dot(&chol.solve(&cross)))
        })
        .collect()
}

/// `A Aᵀ + n·10⁻³·I` with `A` standard normal: symmetric positive definite.
pub fn random_spd<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    &a * a.transpose() + DMatrix::identity(n, n) * (n as f64 * 1e-3)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn independent_coordinates_keep_their_variance() {
        let cov = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0]));
        assert_eq!(conditional_variances(&cov).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn two_by_two_closed_form() {
        // 2 - 1·1/3
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let c = conditional_variances(&cov).unwrap();
        assert!((c[0] - 5.0 / 3.0).abs() < 1e-15);
        assert!((c[1] - 2.5).abs() < 1e-15);
    }

    #[test]
    fn singular_block_is_numeric_error() {
        let cov = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0]);
        assert!(matches!(conditional_variances(&cov), Err(Error::Numeric(_))));
    }

    #[test]
    fn averaged_variance_small_run() {
        let r = averaged_estimator_variance(&[1.0, 1.0], 0.0, 20_000, 3, Exec::Parallel).unwrap();
        assert_eq!(r.exact, 0.5);
        assert!((r.empirical - 0.5).abs() < 0.05);
        let s = averaged_estimator_variance(&[1.0, 1.0], 0.0, 20_000, 3, Exec::Sequential).unwrap();
        assert_eq!(r, s);
    }
}
