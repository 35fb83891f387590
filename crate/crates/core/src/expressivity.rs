//! Exhaustive grid sweeps and invariance probes over any [`DsmOperator`].

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{frobenius_distance, row_entropy};
use crate::operator::DsmOperator;
use crate::SquareMatrix;

/// Default cap on the number of grid points `enumerate_grid` accepts.
pub const DEFAULT_MAX_GRID: u64 = 1 << 32;

/// Indices handled per parallel work item in sweeps.
const SWEEP_CHUNK: u64 = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridDomain {
    /// Every entry ranges over `{0, 1/(d-1), ..., 1}`.
    Hypercube,
    /// Every column is a unit-norm point of the same lattice.
    Hypersphere,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub d: usize,
    pub domain: GridDomain,
    pub rounding_decimals: u32,
}

impl GridSpec {
    pub fn new(n: usize, d: usize, domain: GridDomain) -> Result<Self> {
        if n == 0 || d < 2 {
            return Err(Error::InvalidArgument(format!(
                "grid needs n >= 1 and d >= 2, got n = {n}, d = {d}"
            )));
        }
        Ok(Self {
            n,
            d,
            domain,
            rounding_decimals: 3,
        })
    }

    /// Unit-norm lattice columns in lexicographic order, as integer steps
    /// (entry value = step / (d - 1)).
    pub fn sphere_columns(&self) -> Vec<Vec<u64>> {
        let steps = self.d as u64 - 1;
        let mut out = Vec::new();
        let mut digits = vec![0u64; self.n];
        loop {
            if digits.iter().map(|x| x * x).sum::<u64>() == steps * steps {
                out.push(digits.clone());
            }
            // last coordinate fastest
            let mut pos = self.n;
            loop {
                if pos == 0 {
                    return out;
                }
                pos -= 1;
                digits[pos] += 1;
                if digits[pos] <= steps {
                    break;
                }
                digits[pos] = 0;
            }
        }
    }

    /// Number of grid matrices, or `None` on overflow.
    pub fn total(&self) -> Option<u64> {
        match self.domain {
            GridDomain::Hypercube => (self.d as u64).checked_pow((self.n * self.n) as u32),
            GridDomain::Hypersphere => {
                (self.sphere_columns().len() as u64).checked_pow(self.n as u32)
            }
        }
    }

    fn checked_total(&self, limit: u64) -> Result<u64> {
        match self.total() {
            Some(t) if t <= limit => Ok(t),
            _ => Err(Error::Infeasible(format!(
                "grid {self:?} exceeds the limit of {limit} matrices"
            ))),
        }
    }
}

/// Random access into a grid. Index 0 is the first matrix in lexicographic
/// order: the first row-major entry (cube) or first column (sphere) is the
/// most significant digit.
struct GridIndexer {
    n: usize,
    base: u64,
    /// Per digit value, the column to place (sphere) or `None` (cube).
    columns: Option<Vec<Vec<f64>>>,
    scale: f64,
}

impl GridIndexer {
    fn new(spec: &GridSpec) -> Self {
        let scale = 1.0 / (spec.d as f64 - 1.0);
        match spec.domain {
            GridDomain::Hypercube => Self {
                n: spec.n,
                base: spec.d as u64,
                columns: None,
                scale,
            },
            GridDomain::Hypersphere => {
                let cols: Vec<Vec<f64>> = spec
                    .sphere_columns()
                    .into_iter()
                    .map(|c| c.into_iter().map(|x| x as f64 * scale).collect())
                    .collect();
                Self {
                    n: spec.n,
                    base: cols.len() as u64,
                    columns: Some(cols),
                    scale,
                }
            }
        }
    }

    fn matrix_at(&self, mut index: u64) -> SquareMatrix {
        let n = self.n;
        let mut data = vec![0.0; n * n];
        match &self.columns {
            None => {
                for slot in (0..n * n).rev() {
                    data[slot] = (index % self.base) as f64 * self.scale;
                    index /= self.base;
                }
            }
            Some(cols) => {
                for j in (0..n).rev() {
                    let col = &cols[(index % self.base) as usize];
                    index /= self.base;
                    for i in 0..n {
                        data[i * n + j] = col[i];
                    }
                }
            }
        }
        SquareMatrix::new(n, data).expect("grid entries are finite")
    }
}

/// The grid as a stream starting at `offset`. Fails when the grid exceeds
/// `limit` matrices (default [`DEFAULT_MAX_GRID`]).
pub fn enumerate_grid(
    spec: &GridSpec,
    offset: u64,
    limit: Option<u64>,
) -> Result<impl Iterator<Item = SquareMatrix>> {
    let total = spec.checked_total(limit.unwrap_or(DEFAULT_MAX_GRID))?;
    let indexer = GridIndexer::new(spec);
    Ok((offset.min(total)..total).map(move |i| indexer.matrix_at(i)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub min: f64,
    pub median: f64,
    pub mean: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let len = sorted.len();
        let median = if len % 2 == 1 {
            sorted[len / 2]
        } else {
            0.5 * (sorted[len / 2 - 1] + sorted[len / 2])
        };
        Some(Self {
            min: sorted[0],
            median,
            mean: values.iter().sum::<f64>() / len as f64,
            max: sorted[len - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub operator: String,
    pub total_inputs: u64,
    pub unique_outputs: u64,
    /// Multiplicity of each distinct rounded output, largest first.
    pub count_multiset: Vec<u64>,
    pub entropy_stats: Option<Summary>,
    pub residual_stats: Option<Summary>,
}

impl SweepReport {
    /// `(rank, multiplicity, cumulative count)` rows for an ECDF plot.
    pub fn ecdf_csv(&self) -> String {
        let mut out = String::from("rank,multiplicity,cumulative\n");
        let mut cum = 0;
        for (rank, c) in self.count_multiset.iter().enumerate() {
            cum += c;
            let _ = writeln!(out, "{},{},{}", rank + 1, c, cum);
        }
        out
    }
}

/// Rounded representation used to decide whether two outputs are the same DSM.
pub fn rounding_key(m: &SquareMatrix, decimals: u32) -> Vec<i64> {
    let factor = 10f64.powi(decimals as i32);
    m.as_slice()
        .iter()
        .map(|x| (x * factor).round() as i64)
        .collect()
}

/// Applies `operator` (through [`DsmOperator::apply_logits`]) to every grid
/// matrix and counts distinct outputs after rounding.
pub fn uniqueness_sweep(
    spec: &GridSpec,
    operator: &DsmOperator,
    limit: Option<u64>,
) -> Result<SweepReport> {
    let total = spec.checked_total(limit.unwrap_or(DEFAULT_MAX_GRID))?;
    let indexer = GridIndexer::new(spec);
    let chunks: Vec<u64> = (0..total).step_by(SWEEP_CHUNK as usize).collect();

    struct Partial {
        counts: HashMap<Vec<i64>, u64>,
        entropy: Vec<f64>,
        residual: Vec<f64>,
    }

    let partials: Vec<Partial> = chunks
        .par_iter()
        .map(|&start| -> Result<Partial> {
            let mut part = Partial {
                counts: HashMap::new(),
                entropy: Vec::new(),
                residual: Vec::new(),
            };
            for index in start..(start + SWEEP_CHUNK).min(total) {
                let input = indexer.matrix_at(index);
                let out = operator
                    .apply_logits(&input)
                    .map_err(|e| Error::OperatorFailed {
                        index,
                        input: Box::new(input.clone()),
                        source: Box::new(e),
                    })?;
                part.entropy.push(row_entropy(&out));
                part.residual.push(frobenius_distance(&input, &out)?);
                *part
                    .counts
                    .entry(rounding_key(&out, spec.rounding_decimals))
                    .or_insert(0) += 1;
            }
            Ok(part)
        })
        .collect::<Result<_>>()?;

    let mut counts: HashMap<Vec<i64>, u64> = HashMap::new();
    let mut entropy = Vec::with_capacity(total as usize);
    let mut residual = Vec::with_capacity(total as usize);
    for part in partials {
        for (k, c) in part.counts {
            *counts.entry(k).or_insert(0) += c;
        }
        entropy.extend(part.entropy);
        residual.extend(part.residual);
    }
    let mut count_multiset: Vec<u64> = counts.into_values().collect();
    count_multiset.sort_unstable_by(|a, b| b.cmp(a));
    Ok(SweepReport {
        operator: operator.name().to_string(),
        total_inputs: total,
        unique_outputs: count_multiset.len() as u64,
        count_multiset,
        entropy_stats: Summary::of(&entropy),
        residual_stats: Summary::of(&residual),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TradeoffPoint {
    pub entropy: f64,
    pub residual: f64,
}

/// Per input: row entropy of the output and its Frobenius distance to the input.
pub fn tradeoff_sweep(
    inputs: &[SquareMatrix],
    operator: &DsmOperator,
) -> Result<Vec<TradeoffPoint>> {
    inputs
        .par_iter()
        .map(|m| {
            let out = operator.apply_logits(m)?;
            Ok(TradeoffPoint {
                entropy: row_entropy(&out),
                residual: frobenius_distance(m, &out)?,
            })
        })
        .collect()
}

pub fn tradeoff_csv(operator: &str, points: &[TradeoffPoint]) -> String {
    let mut out = String::from("operator,entropy,residual\n");
    for p in points {
        let _ = writeln!(out, "{operator},{:.12},{:.12}", p.entropy, p.residual);
    }
    out
}

/// Tolerance for declaring two operator outputs equal in the probes.
pub const PROBE_TOLERANCE: f64 = 1e-8;
pub const PROBE_SCALES: [f64; 3] = [0.5, 2.0, 10.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Transform {
    Scale { factor: f64 },
    Permute { rows: Vec<usize>, cols: Vec<usize> },
}

/// A failed probe. `trial_seed` regenerates `input` (and the permutations) via
/// [`probe_trial_input`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub trial_seed: u64,
    pub transform: Transform,
    pub input: SquareMatrix,
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvarianceReport {
    pub operator: String,
    pub trials: usize,
    pub scale_invariant: bool,
    pub permutation_equivariant: bool,
    pub witnesses: Vec<Witness>,
}

/// Regenerates the input and permutation pair used by one probe trial.
pub fn probe_trial_input(
    operator: &DsmOperator,
    n: usize,
    trial_seed: u64,
) -> (SquareMatrix, Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
    let m = if operator.requires_positive() {
        SquareMatrix::from_fn(n, |_, _| rng.random_range(0.1..10.0))
    } else {
        SquareMatrix::gaussian(n, &mut rng)
    };
    let mut rows: Vec<usize> = (0..n).collect();
    let mut cols: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut rng);
    cols.shuffle(&mut rng);
    (m, rows, cols)
}

/// Checks `f(λ m) = f(m)` for λ in [`PROBE_SCALES`] and
/// `f(Π_r m Π_c) = Π_r f(m) Π_c` for random permutations. Trial `t` uses seed
/// `seed + t`. Inputs are positive for operators that require it, Gaussian
/// otherwise; `n` is overridden by the operator's fixed dimension.
pub fn probe_invariances(
    operator: &DsmOperator,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<InvarianceReport> {
    let n = operator.fixed_dim().unwrap_or(n);
    let mut witnesses = Vec::new();
    let (mut scale_ok, mut perm_ok) = (true, true);
    for t in 0..trials {
        let trial_seed = seed.wrapping_add(t as u64);
        let (m, rows, cols) = probe_trial_input(operator, n, trial_seed);
        let base = operator.apply(&m)?;
        for factor in PROBE_SCALES {
            let out = operator.apply(&m.scale(factor))?;
            let deviation = out.max_abs_diff(&base);
            if deviation > PROBE_TOLERANCE {
                scale_ok = false;
                witnesses.push(Witness {
                    trial_seed,
                    transform: Transform::Scale { factor },
                    input: m.clone(),
                    deviation,
                });
            }
        }
        let out = operator.apply(&m.permute(&rows, &cols))?;
        let deviation = out.max_abs_diff(&base.permute(&rows, &cols));
        if deviation > PROBE_TOLERANCE {
            perm_ok = false;
            witnesses.push(Witness {
                trial_seed,
                transform: Transform::Permute { rows, cols },
                input: m,
                deviation,
            });
        }
    }
    Ok(InvarianceReport {
        operator: operator.name().to_string(),
        trials,
        scale_invariant: scale_ok,
        permutation_equivariant: perm_ok,
        witnesses,
    })
}
