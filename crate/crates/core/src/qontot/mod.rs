//! Classically simulated parametric circuit producing doubly stochastic matrices.
//!
//! For any unitary `W`, the matrix of squared amplitude moduli `W ⊙ conj(W)` is
//! doubly stochastic. The circuit acts on `q = q_d + q_a` qubits, where the
//! `q_d = log2(T)` data qubits occupy the low bits of the basis index. The
//! `2^q x 2^q` matrix is folded into `T x T` by summing its `T x T` blocks and
//! dividing by the number of blocks per row, which keeps it in the polytope.

mod bench;
mod gates;
mod shots;
mod simulate;

pub use bench::{bench_circuit, bench_csv, BenchRow};
pub use gates::{build_block, Block, Gate};
pub use shots::sample_shots;
pub use simulate::{circuit_gates, simulate_dsm, simulate_injected};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::SquareMatrix;

/// Largest simulated register; the statevector holds `2^24` amplitudes.
pub const MAX_QUBITS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Ansatz {
    /// Checkerboard of 4-parameter blocks on alternating neighbour pairs.
    Simple,
    /// Second-order Trotter steps of a transverse-field Ising evolution.
    Trotter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CircuitConfig {
    /// `T`, the output dimension.
    pub dsm_dim: usize,
    pub aux_qubits: usize,
    pub layers: usize,
    pub ansatz: Ansatz,
}

impl CircuitConfig {
    pub fn new(dsm_dim: usize, aux_qubits: usize, layers: usize, ansatz: Ansatz) -> Result<Self> {
        let c = Self {
            dsm_dim,
            aux_qubits,
            layers,
            ansatz,
        };
        c.validate()?;
        Ok(c)
    }

    /// `log2(T) + 1` auxiliary qubits.
    pub fn with_default_aux(dsm_dim: usize, layers: usize, ansatz: Ansatz) -> Result<Self> {
        if !dsm_dim.is_power_of_two() {
            return Err(not_power_of_two(dsm_dim));
        }
        Self::new(
            dsm_dim,
            dsm_dim.trailing_zeros() as usize + 1,
            layers,
            ansatz,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.dsm_dim < 2 || !self.dsm_dim.is_power_of_two() {
            return Err(not_power_of_two(self.dsm_dim));
        }
        if self.layers == 0 {
            return Err(Error::InvalidArgument(
                "circuit needs at least one layer".into(),
            ));
        }
        if self.total_qubits() > MAX_QUBITS {
            return Err(Error::InvalidArgument(format!(
                "{} qubits exceed the simulation limit of {MAX_QUBITS}",
                self.total_qubits()
            )));
        }
        Ok(())
    }

    pub fn data_qubits(&self) -> usize {
        self.dsm_dim.trailing_zeros() as usize
    }

    pub fn total_qubits(&self) -> usize {
        self.data_qubits() + self.aux_qubits
    }

    /// Number of circuit parameters.
    pub fn param_count(&self) -> usize {
        let q = self.total_qubits();
        match self.ansatz {
            Ansatz::Simple => (0..self.layers).map(|l| 4 * ((q - l % 2) / 2)).sum(),
            // q - 1 ZZ couplings and q transverse fields per step
            Ansatz::Trotter => self.layers * (2 * q - 1),
        }
    }
}

fn not_power_of_two(t: usize) -> Error {
    Error::InvalidArgument(format!(
        "DSM dimension must be a power of two and at least 2, got {t}"
    ))
}

/// Circuit parameter vector `theta`, sized for a particular config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVec(Vec<f64>);

impl ParamVec {
    pub fn new(config: &CircuitConfig, values: Vec<f64>) -> Result<Self> {
        if values.len() != config.param_count() {
            return Err(Error::DimensionMismatch {
                expected: config.param_count(),
                actual: values.len(),
            });
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("parameters must be finite".into()));
        }
        Ok(Self(values))
    }

    pub fn zeros(config: &CircuitConfig) -> Self {
        Self(vec![0.0; config.param_count()])
    }

    /// Independent draws from `U(-1, 1)`.
    pub fn random<R: Rng + ?Sized>(config: &CircuitConfig, rng: &mut R) -> Self {
        Self(
            (0..config.param_count())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect(),
        )
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Parameters after data injection, `phi = theta ⊙ vec(M)` with `vec(M)`
/// repeated cyclically to the length of `theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectedParams(Vec<f64>);

impl InjectedParams {
    pub fn from_raw(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn inject(
    theta: &ParamVec,
    m: &SquareMatrix,
    config: &CircuitConfig,
) -> Result<InjectedParams> {
    if m.n() != config.dsm_dim {
        return Err(Error::DimensionMismatch {
            expected: config.dsm_dim,
            actual: m.n(),
        });
    }
    if theta.len() != config.param_count() {
        return Err(Error::DimensionMismatch {
            expected: config.param_count(),
            actual: theta.len(),
        });
    }
    let data = m.as_slice();
    Ok(InjectedParams(
        theta
            .as_slice()
            .iter()
            .enumerate()
            .map(|(k, t)| t * data[k % data.len()])
            .collect(),
    ))
}
