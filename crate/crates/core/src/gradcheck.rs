//! Central finite-difference checks for the analytic backward passes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::attention::{sinkhorn_naive_vjp, softmax_rows, softmax_vjp};
use crate::error::Result;
use crate::sinkhorn::sinkhorn_naive;
use crate::SquareMatrix;

pub const FD_STEP: f64 = 1e-5;

/// Central-difference gradient of `m -> <upstream, f(m)>`.
pub fn fd_gradient(
    m: &SquareMatrix,
    upstream: &SquareMatrix,
    h: f64,
    f: impl Fn(&SquareMatrix) -> Result<SquareMatrix>,
) -> Result<SquareMatrix> {
    let n = m.n();
    let objective = |x: &SquareMatrix| -> Result<f64> {
        Ok(f(x)?
            .as_slice()
            .iter()
            .zip(upstream.as_slice())
            .map(|(a, b)| a * b)
            .sum())
    };
    let mut grad = vec![0.0; n * n];
    let mut probe = m.clone();
    for (idx, g) in grad.iter_mut().enumerate() {
        let (i, j) = (idx / n, idx % n);
        let orig = probe[(i, j)];
        probe[(i, j)] = orig + h;
        let plus = objective(&probe)?;
        probe[(i, j)] = orig - h;
        let minus = objective(&probe)?;
        probe[(i, j)] = orig;
        *g = (plus - minus) / (2.0 * h);
    }
    SquareMatrix::new(n, grad)
}

/// `max |a - b| / max |b|`, the error of `a` relative to the scale of `b`.
pub fn relative_error(a: &SquareMatrix, b: &SquareMatrix) -> f64 {
    let scale = b.as_slice().iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    a.max_abs_diff(b) / scale.max(f64::MIN_POSITIVE)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GradTarget {
    Softmax,
    SinkhornNaive { k: usize },
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckReport {
    pub target: GradTarget,
    pub n: usize,
    pub trials: usize,
    pub max_relative_error: f64,
}

/// Runs `trials` random `n x n` comparisons. Sinkhorn inputs are drawn from
/// `U(0.1, 10)`, softmax inputs and all upstream gradients from `U(-1, 1)`.
pub fn gradcheck(
    target: GradTarget,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let upstream = SquareMatrix::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let err = match target {
            GradTarget::Softmax => {
                let m = SquareMatrix::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
                let tau = rng.random_range(0.5..2.0);
                let analytic = softmax_vjp(&m, tau, &upstream)?;
                let numeric = fd_gradient(&m, &upstream, FD_STEP, |x| softmax_rows(x, tau))?;
                relative_error(&analytic, &numeric)
            }
            GradTarget::SinkhornNaive { k } => {
                let m = SquareMatrix::from_fn(n, |_, _| rng.random_range(0.1..10.0));
                let analytic = sinkhorn_naive_vjp(&m, k, &upstream)?;
                let numeric = fd_gradient(&m, &upstream, FD_STEP, |x| sinkhorn_naive(x, k))?;
                relative_error(&analytic, &numeric)
            }
        };
        worst = worst.max(err);
    }
    Ok(GradcheckReport {
        target,
        n,
        trials,
        max_relative_error: worst,
    })
}
