use num_complex::Complex64;
use rayon::prelude::*;

use super::gates::{build_block, Gate};
use super::{inject, Ansatz, CircuitConfig, InjectedParams, ParamVec};
use crate::error::{Error, Result};
use crate::metrics::Dsm;
use crate::SquareMatrix;

/// Basis columns handled per work item. Fixed so the reduction order, and
/// therefore the floating point result, does not depend on the thread count.
const COLUMN_CHUNK: usize = 16;

/// Lays out the gates of the circuit for already-injected parameters.
pub fn circuit_gates(config: &CircuitConfig, phi: &InjectedParams) -> Result<Vec<Gate>> {
    config.validate()?;
    let phi = phi.as_slice();
    if phi.len() != config.param_count() {
        return Err(Error::DimensionMismatch {
            expected: config.param_count(),
            actual: phi.len(),
        });
    }
    let q = config.total_qubits();
    let mut gates = Vec::new();
    let mut params = phi.iter().copied();
    let mut next = || params.next().expect("parameter count checked above");
    for layer in 0..config.layers {
        match config.ansatz {
            Ansatz::Simple => {
                let mut first = layer % 2;
                while first + 1 < q {
                    let alpha = [next(), next(), next(), next()];
                    gates.push(Gate::Block {
                        first,
                        second: first + 1,
                        matrix: build_block(alpha),
                    });
                    first += 2;
                }
            }
            Ansatz::Trotter => {
                let couplings: Vec<f64> = (0..q - 1).map(|_| next()).collect();
                let fields: Vec<f64> = (0..q).map(|_| next()).collect();
                // exp(-i/2 b X) exp(-i a ZZ) exp(-i/2 b X); Rx(angle) = exp(-i angle/2 X)
                let half_step = fields
                    .iter()
                    .enumerate()
                    .map(|(qubit, &b)| Gate::Rx { qubit, angle: b });
                gates.extend(half_step.clone());
                gates.extend(couplings.iter().enumerate().map(|(j, &a)| Gate::Zz {
                    first: j,
                    second: j + 1,
                    angle: a,
                }));
                gates.extend(half_step);
            }
        }
    }
    Ok(gates)
}

pub fn simulate_dsm(config: &CircuitConfig, theta: &ParamVec, m: &SquareMatrix) -> Result<Dsm> {
    config.validate()?;
    let phi = inject(theta, m, config)?;
    simulate_injected(config, &phi)
}

/// Runs the circuit on every basis state and folds `|W|^2` into a `T x T` DSM.
pub fn simulate_injected(config: &CircuitConfig, phi: &InjectedParams) -> Result<Dsm> {
    let gates = circuit_gates(config, phi)?;
    let t = config.dsm_dim;
    let dim = 1usize << config.total_qubits();
    let chunks: Vec<usize> = (0..dim).step_by(COLUMN_CHUNK).collect();
    let partials: Vec<Vec<f64>> = chunks
        .par_iter()
        .map(|&start| {
            let mut acc = vec![0.0; t * t];
            let mut state = vec![Complex64::new(0.0, 0.0); dim];
            for col in start..(start + COLUMN_CHUNK).min(dim) {
                state.fill(Complex64::new(0.0, 0.0));
                state[col] = Complex64::new(1.0, 0.0);
                for g in &gates {
                    g.apply(&mut state);
                }
                let j = col % t;
                for (row, amp) in state.iter().enumerate() {
                    acc[(row % t) * t + j] += amp.norm_sqr();
                }
            }
            acc
        })
        .collect();
    let mut folded = vec![0.0; t * t];
    for part in &partials {
        for (f, p) in folded.iter_mut().zip(part) {
            *f += p;
        }
    }
    let blocks = (dim / t) as f64;
    Dsm::new(SquareMatrix::new(
        t,
        folded.into_iter().map(|x| x / blocks).collect(),
    )?)
}
