//! Scaled dot-product attention with a pluggable normalizer, and reverse-mode
//! derivatives of the softmax and naive Sinkhorn normalizers.

use serde::{Deserialize, Serialize};

use crate::birkhoff::ProjectionSettings;
use crate::error::{Error, Result};
use crate::matrix::parse_csv_rows;
use crate::metrics::{check_stochasticity, Dsm};
use crate::operator::DsmOperator;
use crate::qontot::{CircuitConfig, ParamVec};
use crate::sinkhorn::{normalize_columns, normalize_rows, SinkhornFlavor, SinkhornSettings};
use crate::SquareMatrix;

/// Floor for the NormSoftmax temperature, reached only by (near) constant logits.
pub const NORM_SOFTMAX_MIN_DENOMINATOR: f64 = 1e-6;

/// Dense row-major `rows x cols` matrix for queries, keys and values.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::InvalidMatrix(format!(
                "{rows}x{cols} matrix cannot hold {} entries",
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidMatrix("non-finite entry".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let rows = parse_csv_rows(text)?;
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Parse("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn to_csv_string(&self) -> String {
        self.data
            .chunks_exact(self.cols)
            .map(|r| {
                let fields: Vec<String> =
                    r.iter().map(|x| crate::matrix::format_float(*x)).collect();
                fields.join(",") + "\n"
            })
            .collect()
    }
}

impl From<SquareMatrix> for DenseMatrix {
    fn from(m: SquareMatrix) -> Self {
        let n = m.n();
        Self {
            rows: n,
            cols: n,
            data: m.into_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NormalizerKind {
    Softmax,
    /// NormSoftmax with the population standard deviation of the logits.
    SoftmaxSigma,
    /// NormSoftmax with the population variance of the logits.
    SoftmaxSigma2,
    SinkhornNaive {
        k: usize,
    },
    SinkhornOt {
        k: usize,
    },
    QrDsm {
        seed: u64,
    },
    Qontot {
        config: CircuitConfig,
        theta: ParamVec,
    },
    BirkhoffProject {
        settings: ProjectionSettings,
    },
}

impl NormalizerKind {
    pub fn is_softmax_family(&self) -> bool {
        matches!(
            self,
            NormalizerKind::Softmax | NormalizerKind::SoftmaxSigma | NormalizerKind::SoftmaxSigma2
        )
    }

    /// The DSM operator behind this normalizer; Sinkhorn uses temperature `tau`.
    pub fn dsm_operator(&self, tau: f64) -> Result<Option<DsmOperator>> {
        let sinkhorn = |k, flavor| -> Result<Option<DsmOperator>> {
            Ok(Some(DsmOperator::Sinkhorn(
                SinkhornSettings::new(k, flavor)?.with_temperature(tau)?,
            )))
        };
        match self {
            NormalizerKind::SinkhornNaive { k } => sinkhorn(*k, SinkhornFlavor::Naive),
            NormalizerKind::SinkhornOt { k } => sinkhorn(*k, SinkhornFlavor::Ot),
            NormalizerKind::QrDsm { seed } => Ok(Some(DsmOperator::Qr { seed: *seed })),
            NormalizerKind::Qontot { config, theta } => Ok(Some(DsmOperator::Qontot {
                config: *config,
                theta: theta.clone(),
            })),
            NormalizerKind::BirkhoffProject { settings } => {
                Ok(Some(DsmOperator::BirkhoffProject(*settings)))
            }
            _ => Ok(None),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionConfig {
    pub seq_len: usize,
    pub head_dim: usize,
    pub temperature: f64,
    pub normalizer: NormalizerKind,
}

impl AttentionConfig {
    /// Config with the canonical temperature `sqrt(head_dim)`.
    pub fn new(seq_len: usize, head_dim: usize, normalizer: NormalizerKind) -> Result<Self> {
        let c = Self {
            seq_len,
            head_dim,
            temperature: (head_dim as f64).sqrt(),
            normalizer,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seq_len == 0 || self.head_dim == 0 {
            return Err(Error::InvalidArgument(
                "sequence length and head dimension must be positive".into(),
            ));
        }
        check_tau(self.temperature)
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "temperature must be positive, got {tau}"
        )));
    }
    Ok(())
}

/// Row-wise `softmax(m / tau)`.
pub fn softmax_rows(m: &SquareMatrix, tau: f64) -> Result<SquareMatrix> {
    check_tau(tau)?;
    let n = m.n();
    let mut data = Vec::with_capacity(n * n);
    for row in m.rows() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|x| ((x - max) / tau).exp()).collect();
        let sum: f64 = exps.iter().sum();
        data.extend(exps.into_iter().map(|e| e / sum));
    }
    SquareMatrix::new(n, data)
}

/// Softmax at temperature `max(min(stat, tau), 1e-6)`, where `stat` is the
/// population standard deviation (`power = 1`) or variance (`power = 2`) of
/// all entries of `m`.
pub fn norm_softmax(m: &SquareMatrix, tau: f64, power: u32) -> Result<SquareMatrix> {
    check_tau(tau)?;
    let values = m.as_slice();
    let len = values.len() as f64;
    let mean = values.iter().sum::<f64>() / len;
    let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / len;
    let stat = match power {
        1 => var.sqrt(),
        2 => var,
        _ => {
            return Err(Error::InvalidArgument(format!(
                "NormSoftmax power must be 1 or 2, got {power}"
            )))
        }
    };
    softmax_rows(m, stat.min(tau).max(NORM_SOFTMAX_MIN_DENOMINATOR))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput {
    pub output: DenseMatrix,
    pub attn: SquareMatrix,
}

/// `A V` with `A` the normalized `Q K^T`.
///
/// The softmax family divides the logits by the temperature. Sinkhorn
/// normalizers exponentiate `Q K^T / tau`; QR, QontOT and the Birkhoff
/// projection take `Q K^T` unchanged.
pub fn attention_forward(
    q: &DenseMatrix,
    k: &DenseMatrix,
    v: &DenseMatrix,
    config: &AttentionConfig,
) -> Result<AttentionOutput> {
    config.validate()?;
    let t = config.seq_len;
    for (name, m, cols) in [("Q", q, config.head_dim), ("K", k, config.head_dim)] {
        if m.rows != t || m.cols != cols {
            return Err(Error::InvalidArgument(format!(
                "{name} must be {t}x{cols}, got {}x{}",
                m.rows, m.cols
            )));
        }
    }
    if v.rows != t {
        return Err(Error::DimensionMismatch {
            expected: t,
            actual: v.rows,
        });
    }
    let logits = SquareMatrix::from_fn(t, |i, j| {
        (0..config.head_dim)
            .map(|c| q.get(i, c) * k.get(j, c))
            .sum()
    });
    let tau = config.temperature;
    let attn = match &config.normalizer {
        NormalizerKind::Softmax => softmax_rows(&logits, tau)?,
        NormalizerKind::SoftmaxSigma => norm_softmax(&logits, tau, 1)?,
        NormalizerKind::SoftmaxSigma2 => norm_softmax(&logits, tau, 2)?,
        other => {
            let op = other.dsm_operator(tau)?.expect("non-softmax normalizer");
            let out = op.apply_logits(&logits)?;
            if !matches!(
                other,
                NormalizerKind::SinkhornNaive { .. } | NormalizerKind::SinkhornOt { .. }
            ) {
                // Sinkhorn is only row-stochastic at finite k; the rest are exact
                Dsm::with_tolerance(out.clone(), crate::birkhoff::OUTPUT_TOLERANCE)?;
            } else if check_stochasticity(&out).max_row_deviation > 1e-12 {
                return Err(Error::InvalidArgument(
                    "Sinkhorn output is not row-stochastic".into(),
                ));
            }
            out
        }
    };
    let dv = v.cols;
    let mut out = vec![0.0; t * dv];
    for i in 0..t {
        for j in 0..t {
            let a = attn[(i, j)];
            for c in 0..dv {
                out[i * dv + c] += a * v.get(j, c);
            }
        }
    }
    Ok(AttentionOutput {
        output: DenseMatrix::new(t, dv, out)?,
        attn,
    })
}

/// Gradient of `<upstream, softmax_rows(m, tau)>` with respect to `m`.
pub fn softmax_vjp(m: &SquareMatrix, tau: f64, upstream: &SquareMatrix) -> Result<SquareMatrix> {
    m.check_same_dim(upstream)?;
    let y = softmax_rows(m, tau)?;
    let n = m.n();
    let mut grad = vec![0.0; n * n];
    for i in 0..n {
        let (yr, gr) = (y.row(i), upstream.row(i));
        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
        for j in 0..n {
            grad[i * n + j] = yr[j] * (gr[j] - dot) / tau;
        }
    }
    SquareMatrix::new(n, grad)
}

/// Gradient of `<upstream, sinkhorn_naive(m, k)>` with respect to `m`,
/// by reverse accumulation through every recorded normalization pass.
pub fn sinkhorn_naive_vjp(
    m: &SquareMatrix,
    k: usize,
    upstream: &SquareMatrix,
) -> Result<SquareMatrix> {
    m.check_same_dim(upstream)?;
    // validates k and positivity
    crate::sinkhorn::sinkhorn_naive(m, k)?;
    let n = m.n();
    let mut tape: Vec<Vec<f64>> = Vec::with_capacity(k + 1);
    tape.push(m.as_slice().to_vec());
    // pass t (1-based) maps tape[t - 1] to tape[t]; odd passes are row passes
    for t in 1..=k {
        let mut next = tape[t - 1].clone();
        if t % 2 == 1 {
            normalize_rows(&mut next, n);
        } else {
            normalize_columns(&mut next, n);
        }
        tape.push(next);
    }
    let mut g = upstream.as_slice().to_vec();
    for t in (1..=k).rev() {
        let (x, y) = (&tape[t - 1], &tape[t]);
        if t % 2 == 0 {
            // y_ij = x_ij / s_j with s_j = sum_i x_ij
            for j in 0..n {
                let s: f64 = (0..n).map(|i| x[i * n + j]).sum();
                let dot: f64 = (0..n).map(|i| g[i * n + j] * y[i * n + j]).sum();
                for i in 0..n {
                    g[i * n + j] = (g[i * n + j] - dot) / s;
                }
            }
        } else {
            for i in 0..n {
                let row = i * n..(i + 1) * n;
                let s: f64 = x[row.clone()].iter().sum();
                let dot: f64 = g[row.clone()]
                    .iter()
                    .zip(&y[row.clone()])
                    .map(|(a, b)| a * b)
                    .sum();
                for gx in &mut g[row] {
                    *gx = (*gx - dot) / s;
                }
            }
        }
    }
    SquareMatrix::new(n, g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qontot::Ansatz;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
        let data = (0..rows * cols)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        DenseMatrix::new(rows, cols, data).unwrap()
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(
            softmax_rows(&SquareMatrix::zeros(3), 2.5).unwrap(),
            SquareMatrix::uniform(3)
        );
        let m = SquareMatrix::new(2, vec![0.0, 3f64.ln(), 0.0, 0.0]).unwrap();
        let y = softmax_rows(&m, 1.0).unwrap();
        assert!((y[(0, 0)] - 0.25).abs() < 1e-15 && (y[(0, 1)] - 0.75).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = SquareMatrix::gaussian(5, &mut rng);
        let shifted = SquareMatrix::from_fn(5, |i, j| m[(i, j)] + 3.0 * i as f64);
        assert!(
            softmax_rows(&m, 1.3)
                .unwrap()
                .max_abs_diff(&softmax_rows(&shifted, 1.3).unwrap())
                < 1e-15
        );
        assert!(softmax_rows(&m, 0.0).is_err());
    }

    #[test]
    fn norm_softmax_selects_temperature() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = SquareMatrix::gaussian(8, &mut rng).scale(5.0);
        // std around 5 exceeds tau = 1
        assert_eq!(
            norm_softmax(&m, 1.0, 1).unwrap(),
            softmax_rows(&m, 1.0).unwrap()
        );

        assert_eq!(
            norm_softmax(&SquareMatrix::filled(4, 2.0), 8.0, 1).unwrap(),
            SquareMatrix::uniform(4)
        );
        assert_eq!(
            norm_softmax(&SquareMatrix::filled(4, 2.0), 8.0, 2).unwrap(),
            SquareMatrix::uniform(4)
        );

        // rescale a Gaussian matrix to population std exactly 0.5
        let g = SquareMatrix::gaussian(8, &mut rng);
        let mean = g.as_slice().iter().sum::<f64>() / 64.0;
        let sd = (g.as_slice().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 64.0).sqrt();
        let m = g.map(|x| (x - mean) / sd * 0.5);
        let got = norm_softmax(&m, 8.0, 1).unwrap();
        assert!(got.max_abs_diff(&softmax_rows(&m, 0.5).unwrap()) < 1e-12);
        // variance 0.25 for the squared statistic
        let got = norm_softmax(&m, 8.0, 2).unwrap();
        assert!(got.max_abs_diff(&softmax_rows(&m, 0.25).unwrap()) < 1e-12);
        assert!(norm_softmax(&m, 8.0, 3).is_err());
    }

    #[test]
    fn zero_queries_average_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = DenseMatrix::new(4, 3, vec![0.0; 12]).unwrap();
        let k = dense_gaussian(4, 3, &mut rng);
        let v = dense_gaussian(4, 2, &mut rng);
        let cfg = AttentionConfig::new(4, 3, NormalizerKind::Softmax).unwrap();
        let out = attention_forward(&q, &k, &v, &cfg).unwrap();
        assert_eq!(out.attn, SquareMatrix::uniform(4));
        for c in 0..2 {
            let mean = (0..4).map(|j| v.get(j, c)).sum::<f64>() / 4.0;
            for i in 0..4 {
                assert!((out.output.get(i, c) - mean).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn identity_circuit_passes_values_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let config = CircuitConfig::new(4, 2, 2, Ansatz::Simple).unwrap();
        let norm = NormalizerKind::Qontot {
            theta: ParamVec::zeros(&config),
            config,
        };
        let cfg = AttentionConfig::new(4, 6, norm).unwrap();
        let (q, k, v) = (
            dense_gaussian(4, 6, &mut rng),
            dense_gaussian(4, 6, &mut rng),
            dense_gaussian(4, 5, &mut rng),
        );
        let out = attention_forward(&q, &k, &v, &cfg).unwrap();
        assert_eq!(out.attn, SquareMatrix::identity(4));
        assert_eq!(out.output, v);
    }

    #[test]
    fn sinkhorn_attention_matches_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (q, k, v) = (
            dense_gaussian(6, 4, &mut rng),
            dense_gaussian(6, 4, &mut rng),
            dense_gaussian(6, 3, &mut rng),
        );
        let cfg = AttentionConfig::new(6, 4, NormalizerKind::SinkhornNaive { k: 3 }).unwrap();
        let out = attention_forward(&q, &k, &v, &cfg).unwrap();
        let logits =
            SquareMatrix::from_fn(6, |i, j| (0..4).map(|c| q.get(i, c) * k.get(j, c)).sum());
        let kernel = crate::sinkhorn::exp_scale(&logits, 2.0).unwrap();
        let reference = crate::sinkhorn::sinkhorn_naive(&kernel, 3).unwrap();
        assert!(out.attn.max_abs_diff(&reference) < 1e-15);
        let r = check_stochasticity(&out.attn);
        assert!(r.max_row_deviation < 1e-12);
        for i in 0..6 {
            for c in 0..3 {
                let expected: f64 = (0..6).map(|j| reference[(i, j)] * v.get(j, c)).sum();
                assert!((out.output.get(i, c) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_errors() {
        let q = DenseMatrix::new(4, 3, vec![0.0; 12]).unwrap();
        let v = DenseMatrix::new(3, 3, vec![0.0; 9]).unwrap();
        let cfg = AttentionConfig::new(4, 3, NormalizerKind::Softmax).unwrap();
        assert!(attention_forward(&q, &q, &v, &cfg).is_err());
        let cfg = AttentionConfig::new(4, 2, NormalizerKind::Softmax).unwrap();
        assert!(attention_forward(&q, &q, &q, &cfg).is_err());
        assert!(AttentionConfig::new(0, 2, NormalizerKind::Softmax).is_err());
    }

    #[test]
    fn sinkhorn_vjp_trivial_cases() {
        let one = SquareMatrix::new(1, vec![3.0]).unwrap();
        let g = sinkhorn_naive_vjp(&one, 1, &SquareMatrix::new(1, vec![1.7]).unwrap()).unwrap();
        assert_eq!(g.as_slice(), &[0.0]);

        // a single pass normalizes rows; on the transpose that is a column
        // normalization with Jacobian dy_ij/dx_lj = (delta_il s_j - x_ij) / s_j^2
        let x = SquareMatrix::new(2, vec![1.0, 2.0, 3.0, 0.5]).unwrap();
        let up = SquareMatrix::new(2, vec![0.3, -1.0, 2.0, 0.7]).unwrap();
        let g = sinkhorn_naive_vjp(&x.transpose(), 1, &up.transpose())
            .unwrap()
            .transpose();
        for j in 0..2 {
            let s = x[(0, j)] + x[(1, j)];
            for l in 0..2 {
                let expected: f64 = (0..2)
                    .map(|i| {
                        let delta = if i == l { s } else { 0.0 };
                        up[(i, j)] * (delta - x[(i, j)]) / (s * s)
                    })
                    .sum();
                assert!((g[(l, j)] - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn row_sum_functional_has_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = SquareMatrix::from_fn(6, |_, _| rng.random_range(0.1..10.0));
        // sum of a single output row is always 1
        let up = SquareMatrix::from_fn(6, |i, _| if i == 2 { 1.0 } else { 0.0 });
        for k in [1, 3, 21] {
            let g = sinkhorn_naive_vjp(&m, k, &up).unwrap();
            assert!(g.max_abs_diff(&SquareMatrix::zeros(6)) < 1e-14, "k = {k}");
        }
    }

    #[test]
    fn softmax_vjp_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = SquareMatrix::gaussian(5, &mut rng);
        let g = softmax_vjp(&m, 1.7, &SquareMatrix::filled(5, 0.4)).unwrap();
        assert!(g.max_abs_diff(&SquareMatrix::zeros(5)) < 1e-16);

        // 2-element row (a, b) with tau = 1: dy0/da = y0 y1, dy0/db = -y0 y1
        let m = SquareMatrix::new(2, vec![0.2, -0.5, 0.0, 0.0]).unwrap();
        let up = SquareMatrix::new(2, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let g = softmax_vjp(&m, 1.0, &up).unwrap();
        let y0 = 1.0 / (1.0 + (-0.7f64).exp());
        let y1 = 1.0 - y0;
        assert!((g[(0, 0)] - y0 * y1).abs() < 1e-15);
        assert!((g[(0, 1)] + y0 * y1).abs() < 1e-15);
    }
}
