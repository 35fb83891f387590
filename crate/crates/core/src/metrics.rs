//! Stochasticity checks and the matrix metrics shared by the analysis harnesses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::SquareMatrix;

/// Default tolerance for accepting a matrix as doubly stochastic.
pub const DEFAULT_DSM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StochasticityReport {
    /// max over rows of |row sum - 1|
    pub max_row_deviation: f64,
    /// max over columns of |column sum - 1|
    pub max_col_deviation: f64,
    pub min_entry: f64,
    /// Frobenius distance to the nearest doubly stochastic matrix, when computed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frobenius_to_birkhoff: Option<f64>,
}

impl StochasticityReport {
    pub fn max_deviation(&self) -> f64 {
        self.max_row_deviation.max(self.max_col_deviation)
    }

    pub fn is_doubly_stochastic(&self, tolerance: f64) -> bool {
        self.min_entry >= -tolerance && self.max_deviation() <= tolerance
    }
}

pub fn check_stochasticity(m: &SquareMatrix) -> StochasticityReport {
    let dev = |sums: Vec<f64>| {
        sums.into_iter()
            .map(|s| (s - 1.0).abs())
            .fold(0.0, f64::max)
    };
    StochasticityReport {
        max_row_deviation: dev(m.row_sums()),
        max_col_deviation: dev(m.col_sums()),
        min_entry: m.min_entry(),
        frobenius_to_birkhoff: None,
    }
}

/// A matrix validated to lie in the Birkhoff polytope up to `tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dsm {
    matrix: SquareMatrix,
    tolerance: f64,
    report: StochasticityReport,
}

impl Dsm {
    pub fn new(matrix: SquareMatrix) -> Result<Self> {
        Self::with_tolerance(matrix, DEFAULT_DSM_TOLERANCE)
    }

    pub fn with_tolerance(matrix: SquareMatrix, tolerance: f64) -> Result<Self> {
        let report = check_stochasticity(&matrix);
        if !report.is_doubly_stochastic(tolerance) {
            return Err(Error::NotDoublyStochastic { tolerance, report });
        }
        Ok(Self {
            matrix,
            tolerance,
            report,
        })
    }

    pub fn matrix(&self) -> &SquareMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> SquareMatrix {
        self.matrix
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn report(&self) -> &StochasticityReport {
        &self.report
    }

    pub fn n(&self) -> usize {
        self.matrix.n()
    }
}

impl AsRef<SquareMatrix> for Dsm {
    fn as_ref(&self) -> &SquareMatrix {
        &self.matrix
    }
}

/// Row-averaged Shannon entropy (natural log), with `0 ln 0 = 0`.
/// Negative round-off entries are clamped to zero.
pub fn shannon_entropy(p: &Dsm) -> f64 {
    row_entropy(p.matrix())
}

/// Same as [`shannon_entropy`] for any non-negative matrix whose rows are distributions.
pub fn row_entropy(m: &SquareMatrix) -> f64 {
    let total: f64 = m
        .rows()
        .map(|row| {
            row.iter()
                .map(|&x| {
                    let x = x.max(0.0);
                    if x > 0.0 {
                        -x * x.ln()
                    } else {
                        0.0
                    }
                })
                .sum::<f64>()
        })
        .sum();
    total / m.n() as f64
}

pub fn frobenius_distance(a: &SquareMatrix, b: &SquareMatrix) -> Result<f64> {
    a.check_same_dim(b)?;
    Ok(a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// Average (fractional) ranks, 1-based. Ties share the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold a tie group; ranks are 1-based
        let rank = (start + end + 1) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation over all flattened entries.
pub fn spearman_rho(a: &SquareMatrix, b: &SquareMatrix) -> Result<f64> {
    a.check_same_dim(b)?;
    let ra = average_ranks(a.as_slice());
    let rb = average_ranks(b.as_slice());
    pearson(&ra, &rb)
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let len = x.len() as f64;
    let mx = x.iter().sum::<f64>() / len;
    let my = y.iter().sum::<f64>() / len;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroRankVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}
