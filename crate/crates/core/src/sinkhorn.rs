//! Sinkhorn normalization with a fixed, odd number of half-steps.
//!
//! Passes are numbered `t = 1..=k`; odd passes normalize rows and even passes
//! normalize columns. With `k` odd the first and last passes are row passes, so
//! the output is row-stochastic to machine precision while column sums only
//! approach one as `k` grows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::SquareMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SinkhornFlavor {
    /// Direct alternating division by row and column sums.
    Naive,
    /// Log-domain dual potential updates against unit marginals.
    Ot,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinkhornSettings {
    pub iterations: usize,
    pub flavor: SinkhornFlavor,
    pub temperature: f64,
}

impl SinkhornSettings {
    pub fn new(iterations: usize, flavor: SinkhornFlavor) -> Result<Self> {
        let s = Self {
            iterations,
            flavor,
            temperature: 1.0,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_temperature(mut self, temperature: f64) -> Result<Self> {
        self.temperature = temperature;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        check_iterations(self.iterations)?;
        check_temperature(self.temperature)
    }

    /// Applies the configured flavor to a strictly positive kernel.
    pub fn apply(&self, m: &SquareMatrix) -> Result<SquareMatrix> {
        match self.flavor {
            SinkhornFlavor::Naive => sinkhorn_naive(m, self.iterations),
            SinkhornFlavor::Ot => sinkhorn_ot(m, self.iterations),
        }
    }

    /// Applies the configured flavor to raw logits, using `exp(logits / temperature)`
    /// as the kernel. The OT flavor never materializes the exponentials.
    pub fn apply_logits(&self, logits: &SquareMatrix) -> Result<SquareMatrix> {
        match self.flavor {
            SinkhornFlavor::Naive => {
                sinkhorn_naive(&exp_scale(logits, self.temperature)?, self.iterations)
            }
            SinkhornFlavor::Ot => {
                check_temperature(self.temperature)?;
                sinkhorn_log_domain(&logits.scale(1.0 / self.temperature), self.iterations)
            }
        }
    }
}

fn check_iterations(k: usize) -> Result<()> {
    if k == 0 || k.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "Sinkhorn iteration count must be a positive odd integer, got {k}"
        )));
    }
    Ok(())
}

fn check_temperature(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "temperature must be positive, got {tau}"
        )));
    }
    Ok(())
}

fn check_positive(m: &SquareMatrix) -> Result<()> {
    if let Some(pos) = m.as_slice().iter().position(|&x| x <= 0.0) {
        return Err(Error::InvalidMatrix(format!(
            "Sinkhorn requires strictly positive entries; found {} at ({}, {})",
            m.as_slice()[pos],
            pos / m.n(),
            pos % m.n()
        )));
    }
    Ok(())
}

/// `exp(m / tau)` divided by the largest entry, so the maximum is exactly one.
/// The common factor cancels in every diagonal scaling. Entries far below the
/// maximum may underflow to zero.
pub fn exp_scale(m: &SquareMatrix, tau: f64) -> Result<SquareMatrix> {
    check_temperature(tau)?;
    let shift = m.max_entry() / tau;
    Ok(m.map(|x| (x / tau - shift).exp()))
}

pub fn sinkhorn_naive(m: &SquareMatrix, k: usize) -> Result<SquareMatrix> {
    check_iterations(k)?;
    check_positive(m)?;
    let n = m.n();
    let mut data = m.as_slice().to_vec();
    for t in 1..=k {
        if t % 2 == 1 {
            normalize_rows(&mut data, n);
        } else {
            normalize_columns(&mut data, n);
        }
    }
    SquareMatrix::new(n, data)
}

pub(crate) fn normalize_rows(data: &mut [f64], n: usize) {
    for row in data.chunks_exact_mut(n) {
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= s);
    }
}

pub(crate) fn normalize_columns(data: &mut [f64], n: usize) {
    let mut sums = vec![0.0; n];
    for row in data.chunks_exact(n) {
        for (s, x) in sums.iter_mut().zip(row) {
            *s += x;
        }
    }
    for row in data.chunks_exact_mut(n) {
        for (x, s) in row.iter_mut().zip(&sums) {
            *x /= s;
        }
    }
}

pub fn sinkhorn_ot(m: &SquareMatrix, k: usize) -> Result<SquareMatrix> {
    check_iterations(k)?;
    check_positive(m)?;
    sinkhorn_log_domain(&m.map(f64::ln), k)
}

/// Sinkhorn on the kernel `exp(log_kernel)` carried out entirely on
/// potentials `u` (rows) and `v` (columns).
pub fn sinkhorn_log_domain(log_kernel: &SquareMatrix, k: usize) -> Result<SquareMatrix> {
    check_iterations(k)?;
    let n = log_kernel.n();
    let mut u = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut buf = vec![0.0; n];
    for t in 1..=k {
        if t % 2 == 1 {
            for i in 0..n {
                for j in 0..n {
                    buf[j] = log_kernel[(i, j)] + v[j];
                }
                u[i] = -log_sum_exp(&buf);
            }
        } else {
            for j in 0..n {
                for i in 0..n {
                    buf[i] = log_kernel[(i, j)] + u[i];
                }
                v[j] = -log_sum_exp(&buf);
            }
        }
    }
    SquareMatrix::new(
        n,
        (0..n * n)
            .map(|idx| {
                let (i, j) = (idx / n, idx % n);
                (log_kernel[(i, j)] + u[i] + v[j]).exp()
            })
            .collect(),
    )
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::check_stochasticity;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_by_two() -> SquareMatrix {
        SquareMatrix::new(2, vec![2.0, 1.0, 1.0, 2.0]).unwrap()
    }

    /// Plain alternating normalization run for a fixed large number of passes.
    fn long_run_oracle(m: &SquareMatrix, passes: usize) -> Vec<f64> {
        let n = m.n();
        let mut d = m.as_slice().to_vec();
        for _ in 0..passes {
            for i in 0..n {
                let s: f64 = d[i * n..(i + 1) * n].iter().sum();
                d[i * n..(i + 1) * n].iter_mut().for_each(|x| *x /= s);
            }
            for j in 0..n {
                let s: f64 = (0..n).map(|i| d[i * n + j]).sum();
                (0..n).for_each(|i| d[i * n + j] /= s);
            }
        }
        d
    }

    #[test]
    fn rejects_even_or_zero_iterations() {
        let m = SquareMatrix::filled(2, 1.0);
        assert!(sinkhorn_naive(&m, 0).is_err());
        assert!(sinkhorn_naive(&m, 4).is_err());
        assert!(sinkhorn_ot(&m, 2).is_err());
        assert!(SinkhornSettings::new(2, SinkhornFlavor::Naive).is_err());
        assert!(SinkhornSettings::new(3, SinkhornFlavor::Naive)
            .unwrap()
            .with_temperature(0.0)
            .is_err());
    }

    #[test]
    fn rejects_non_positive_input() {
        let m = SquareMatrix::new(2, vec![1.0, 0.0, 1.0, 1.0]).unwrap();
        assert!(sinkhorn_naive(&m, 3).is_err());
        assert!(sinkhorn_ot(&m, 3).is_err());
    }

    #[test]
    fn exp_scale_examples() {
        assert_eq!(
            exp_scale(&SquareMatrix::zeros(3), 1.0).unwrap(),
            SquareMatrix::filled(3, 1.0)
        );

        let out = exp_scale(&SquareMatrix::identity(2), 1.0).unwrap();
        let e = std::f64::consts::E;
        let expected = [e, 1.0, 1.0, e];
        let ratio = out[(0, 0)] / e;
        for (x, y) in out.as_slice().iter().zip(expected) {
            assert!((x - ratio * y).abs() < 1e-15);
        }

        let m0 = SquareMatrix::new(2, vec![0.5, 2.0, 4.0, 1.0]).unwrap();
        let back = exp_scale(&m0.map(f64::ln), 1.0).unwrap();
        let factor = m0[(0, 0)] / back[(0, 0)];
        assert!(back.scale(factor).max_abs_diff(&m0) < 1e-14);
        assert!(exp_scale(&m0, -1.0).is_err());
    }

    #[test]
    fn all_ones_goes_to_center_in_one_pass() {
        let j = SquareMatrix::filled(4, 1.0);
        assert_eq!(sinkhorn_naive(&j, 1).unwrap(), SquareMatrix::uniform(4));
        for k in [1, 3, 21] {
            assert!(
                sinkhorn_ot(&j, k)
                    .unwrap()
                    .max_abs_diff(&SquareMatrix::uniform(4))
                    < 1e-15
            );
        }
    }

    #[test]
    fn constant_rows_collapse_after_first_pass() {
        // exp(e_2 1^T): every row is constant
        let m = exp_scale(
            &SquareMatrix::from_fn(4, |i, _| if i == 1 { 1.0 } else { 0.0 }),
            1.0,
        )
        .unwrap();
        for k in [1, 3, 201] {
            let out = sinkhorn_naive(&m, k).unwrap();
            assert!(out.max_abs_diff(&SquareMatrix::uniform(4)) < 1e-16);
        }
    }

    #[test]
    fn two_by_two_fixed_point() {
        let oracle = long_run_oracle(&two_by_two(), 10_000);
        let expected = [2.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0];
        for (o, e) in oracle.iter().zip(expected) {
            assert!((o - e).abs() < 1e-14);
        }
        for out in [
            sinkhorn_naive(&two_by_two(), 201),
            sinkhorn_ot(&two_by_two(), 201),
        ] {
            let out = out.unwrap();
            for (x, e) in out.as_slice().iter().zip(expected) {
                assert!((x - e).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn flavors_agree_on_well_conditioned_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [2, 4, 8, 16] {
            for k in [1, 3, 21, 101] {
                let m = SquareMatrix::from_fn(n, |_, _| rng.random_range(0.1..10.0));
                let a = sinkhorn_naive(&m, k).unwrap();
                let b = sinkhorn_ot(&m, k).unwrap();
                assert!(a.max_abs_diff(&b) < 1e-8, "n={n} k={k}");
                assert!(check_stochasticity(&a).max_row_deviation < 1e-12);
            }
        }
    }

    #[test]
    fn column_violation_shrinks_with_iterations() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let m = exp_scale(&SquareMatrix::gaussian(8, &mut rng), 1.0).unwrap();
            let mut prev = f64::INFINITY;
            for k in (1..=41).step_by(2) {
                let dev = check_stochasticity(&sinkhorn_naive(&m, k).unwrap()).max_col_deviation;
                assert!(dev <= prev + 1e-15, "k={k}: {dev} > {prev}");
                prev = dev;
            }
        }
    }

    #[test]
    fn ot_flavor_survives_extreme_logits() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let logits = SquareMatrix::gaussian(8, &mut rng);
        let settings = SinkhornSettings::new(21, SinkhornFlavor::Ot)
            .unwrap()
            .with_temperature(1e-3)
            .unwrap();
        let out = settings.apply_logits(&logits).unwrap();
        assert!(check_stochasticity(&out).max_row_deviation < 1e-12);
        // the naive route underflows to zeros and refuses the kernel
        let naive = SinkhornSettings {
            flavor: SinkhornFlavor::Naive,
            ..settings
        };
        assert!(naive.apply_logits(&logits).is_err());
    }
}
