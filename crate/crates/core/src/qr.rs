//! Orthostochastic normalization: `Q ⊙ Q` for the orthogonal factor of `M = QR`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::metrics::Dsm;
use crate::SquareMatrix;

/// Column norms below this are treated as linear dependence.
pub const PIVOT_THRESHOLD: f64 = 1e-10;
/// Standard deviation of the Gaussian noise added to break rank deficiency.
pub const NOISE_STD: f64 = 1e-7;
pub const MAX_RESTARTS: usize = 5;

/// Orthogonal factor from modified Gram-Schmidt, with `diag(R) > 0`.
///
/// Rank-deficient inputs get entrywise noise drawn from a generator seeded
/// with `noise_seed` and are retried, up to [`MAX_RESTARTS`] times.
pub fn qr_orthonormalize(m: &SquareMatrix, noise_seed: u64) -> Result<SquareMatrix> {
    if let Some(q) = modified_gram_schmidt(m) {
        return Ok(q);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let noise = Normal::new(0.0, NOISE_STD).expect("valid normal");
    let mut current = m.clone();
    for _ in 0..MAX_RESTARTS {
        current = current.map(|x| x + noise.sample(&mut rng));
        if let Some(q) = modified_gram_schmidt(&current) {
            return Ok(q);
        }
    }
    Err(Error::RankDeficient {
        restarts: MAX_RESTARTS,
    })
}

pub fn qr_dsm(m: &SquareMatrix, noise_seed: u64) -> Result<Dsm> {
    let q = qr_orthonormalize(m, noise_seed)?;
    Dsm::new(q.map(|x| x * x))
}

/// Column-oriented MGS with one reorthogonalization sweep per column.
/// Returns `None` when a pivot norm falls under [`PIVOT_THRESHOLD`].
fn modified_gram_schmidt(m: &SquareMatrix) -> Option<SquareMatrix> {
    let n = m.n();
    let mut cols: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| m[(i, j)]).collect())
        .collect();
    for j in 0..n {
        let (done, rest) = cols.split_at_mut(j);
        let v = &mut rest[0];
        for _ in 0..2 {
            for q in done.iter() {
                let r: f64 = q.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(q).for_each(|(x, qi)| *x -= r * qi);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < PIVOT_THRESHOLD {
            return None;
        }
        v.iter_mut().for_each(|x| *x /= norm);
    }
    Some(SquareMatrix::from_fn(n, |i, j| cols[j][i]))
}
