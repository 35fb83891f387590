use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{simulate_dsm, CircuitConfig, ParamVec};
use crate::error::{Error, Result};
use crate::SquareMatrix;

/// Finite-shot estimate of the circuit DSM.
///
/// Each column of the exact DSM is a distribution over rows; `shots / T`
/// samples are drawn per column and the empirical frequencies returned, so
/// the result is column-stochastic but generally not row-stochastic.
pub fn sample_shots(
    config: &CircuitConfig,
    theta: &ParamVec,
    m: &SquareMatrix,
    shots: usize,
    seed: u64,
) -> Result<SquareMatrix> {
    let t = config.dsm_dim;
    if shots < t {
        return Err(Error::InvalidArgument(format!(
            "need at least {t} shots (one per column), got {shots}"
        )));
    }
    let exact = simulate_dsm(config, theta, m)?;
    let per_column = shots / t;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut freq = SquareMatrix::zeros(t);
    for j in 0..t {
        let weights: Vec<f64> = (0..t).map(|i| exact.matrix()[(i, j)].max(0.0)).collect();
        let dist = WeightedIndex::new(&weights)
            .map_err(|e| Error::InvalidArgument(format!("column {j}: {e}")))?;
        let mut counts = vec![0usize; t];
        for _ in 0..per_column {
            counts[dist.sample(&mut rng)] += 1;
        }
        for (i, c) in counts.into_iter().enumerate() {
            freq[(i, j)] = c as f64 / per_column as f64;
        }
    }
    Ok(freq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qontot::Ansatz;

    #[test]
    fn identity_circuit_samples_exactly() {
        let c = CircuitConfig::new(4, 1, 2, Ansatz::Simple).unwrap();
        let m = SquareMatrix::filled(4, 1.0);
        for shots in [4, 37, 1000] {
            let s = sample_shots(&c, &ParamVec::zeros(&c), &m, shots, 5).unwrap();
            assert_eq!(s, SquareMatrix::identity(4));
        }
    }

    #[test]
    fn too_few_shots_is_an_error() {
        let c = CircuitConfig::new(4, 1, 1, Ansatz::Simple).unwrap();
        let m = SquareMatrix::filled(4, 1.0);
        assert!(sample_shots(&c, &ParamVec::zeros(&c), &m, 3, 0).is_err());
    }

    #[test]
    fn columns_sum_to_one_and_seed_is_reproducible() {
        let c = CircuitConfig::new(4, 2, 3, Ansatz::Trotter).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let theta = ParamVec::random(&c, &mut rng);
        let m = SquareMatrix::gaussian(4, &mut rng);
        let a = sample_shots(&c, &theta, &m, 400, 17).unwrap();
        assert_eq!(a, sample_shots(&c, &theta, &m, 400, 17).unwrap());
        for s in a.col_sums() {
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
}
