//! Dense-unitary reference for the circuit simulator: every gate is expanded
//! to a full `2^q x 2^q` matrix by Kronecker products and multiplied out.

use birkhoff_attn::qontot::{Ansatz, CircuitConfig, ParamVec};
use birkhoff_attn::SquareMatrix;
use nalgebra::DMatrix;
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn ry(a: f64) -> CMat {
    let (s, co) = (a / 2.0).sin_cos();
    CMat::from_row_slice(2, 2, &[c(co, 0.0), c(-s, 0.0), c(s, 0.0), c(co, 0.0)])
}

fn rx(a: f64) -> CMat {
    let (s, co) = (a / 2.0).sin_cos();
    CMat::from_row_slice(2, 2, &[c(co, 0.0), c(0.0, -s), c(0.0, -s), c(co, 0.0)])
}

fn rz(a: f64) -> CMat {
    CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![
        Complex64::from_polar(1.0, -a / 2.0),
        Complex64::from_polar(1.0, a / 2.0),
    ]))
}

fn pauli_z() -> CMat {
    CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)])
}

fn projector(bit: usize) -> CMat {
    let mut p = CMat::zeros(2, 2);
    p[(bit, bit)] = c(1.0, 0.0);
    p
}

/// Tensor product placing `ops[k]` on qubit `k`; qubit 0 is the least
/// significant bit, so it is the rightmost Kronecker factor.
fn embed(q: usize, ops: &[(usize, CMat)]) -> CMat {
    let mut out = CMat::identity(1, 1);
    for qubit in (0..q).rev() {
        let factor = ops
            .iter()
            .find(|(k, _)| *k == qubit)
            .map(|(_, m)| m.clone())
            .unwrap_or_else(|| CMat::identity(2, 2));
        out = out.kronecker(&factor);
    }
    out
}

fn dense_block(q: usize, first: usize, second: usize, a: &[f64]) -> CMat {
    let outer = embed(q, &[(first, ry(a[0])), (second, ry(a[1]))]);
    let crz =
        embed(q, &[(first, projector(0))]) + embed(q, &[(first, projector(1)), (second, rz(a[2]))]);
    let inner = embed(q, &[(first, ry(a[3]))]);
    outer * crz * inner
}

pub fn dense_unitary(config: &CircuitConfig, phi: &[f64]) -> CMat {
    let q = config.total_qubits();
    let mut w = CMat::identity(1 << q, 1 << q);
    let mut k = 0;
    for layer in 0..config.layers {
        let u = match config.ansatz {
            Ansatz::Simple => {
                let mut u = CMat::identity(1 << q, 1 << q);
                let mut first = layer % 2;
                while first + 1 < q {
                    u = dense_block(q, first, first + 1, &phi[k..k + 4]) * u;
                    k += 4;
                    first += 2;
                }
                u
            }
            Ansatz::Trotter => {
                let couplings = &phi[k..k + q - 1];
                let fields = &phi[k + q - 1..k + 2 * q - 1];
                k += 2 * q - 1;
                let x_half = embed(
                    q,
                    &fields
                        .iter()
                        .enumerate()
                        .map(|(j, &b)| (j, rx(b)))
                        .collect::<Vec<_>>(),
                );
                let mut zz = CMat::identity(1 << q, 1 << q);
                for (j, &a) in couplings.iter().enumerate() {
                    let zj = embed(q, &[(j, pauli_z()), (j + 1, pauli_z())]);
                    let term =
                        CMat::identity(1 << q, 1 << q) * c(a.cos(), 0.0) - zj * c(0.0, a.sin());
                    zz = term * zz;
                }
                &x_half * zz * &x_half
            }
        };
        w = u * w;
    }
    assert_eq!(k, phi.len());
    w
}

pub fn dense_dsm(config: &CircuitConfig, theta: &ParamVec, m: &SquareMatrix) -> SquareMatrix {
    let t = config.dsm_dim;
    let data = m.as_slice();
    let phi: Vec<f64> = theta
        .as_slice()
        .iter()
        .enumerate()
        .map(|(k, x)| x * data[k % (t * t)])
        .collect();
    let w = dense_unitary(config, &phi);
    let blocks = w.nrows() / t;
    let mut s = vec![0.0; t * t];
    for r in 0..w.nrows() {
        for col in 0..w.ncols() {
            s[(r % t) * t + col % t] += w[(r, col)].norm_sqr();
        }
    }
    SquareMatrix::new(t, s.into_iter().map(|x| x / blocks as f64).collect()).unwrap()
}
