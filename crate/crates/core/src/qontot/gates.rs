//! Gate set and in-place statevector application.
//!
//! Basis index bit `k` is the computational value of qubit `k`, so qubit 0 is
//! the least significant bit. Two-qubit gates use the local index
//! `bit(first) + 2 * bit(second)`.

use num_complex::Complex64;

pub type Block = [[Complex64; 4]; 4];

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Gate {
    /// Four-parameter unit block on `(first, second)`.
    Block {
        first: usize,
        second: usize,
        matrix: Block,
    },
    /// `exp(-i angle/2 X)` on one qubit.
    Rx { qubit: usize, angle: f64 },
    /// `exp(-i angle Z Z)` on a pair.
    Zz {
        first: usize,
        second: usize,
        angle: f64,
    },
}

fn ry(theta: f64) -> [[Complex64; 2]; 2] {
    let (s, c) = (theta / 2.0).sin_cos();
    [
        [Complex64::new(c, 0.0), Complex64::new(-s, 0.0)],
        [Complex64::new(s, 0.0), Complex64::new(c, 0.0)],
    ]
}

fn mul4(a: &Block, b: &Block) -> Block {
    let mut out = [[ZERO; 4]; 4];
    for i in 0..4 {
        for k in 0..4 {
            for j in 0..4 {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

/// `first`-qubit operator `a` tensored with `second`-qubit operator `b`.
fn kron_local(a: &[[Complex64; 2]; 2], b: &[[Complex64; 2]; 2]) -> Block {
    let mut out = [[ZERO; 4]; 4];
    for r in 0..4 {
        for c in 0..4 {
            out[r][c] = a[r & 1][c & 1] * b[r >> 1][c >> 1];
        }
    }
    out
}

/// The unit block `[RY(a0) ⊗ RY(a1)] · CRZ(a2) · [RY(a3) ⊗ I]`, where the
/// left tensor factor acts on the block's first qubit and the controlled
/// rotation uses the first qubit as control. Every factor is the identity at
/// a zero angle.
pub fn build_block(alpha: [f64; 4]) -> Block {
    let id = [[ONE, ZERO], [ZERO, ONE]];
    let outer = kron_local(&ry(alpha[0]), &ry(alpha[1]));
    let mut crz = [[ZERO; 4]; 4];
    let half = alpha[2] / 2.0;
    for (l, row) in crz.iter_mut().enumerate() {
        row[l] = if l & 1 == 1 {
            // control set: RZ on the second qubit
            if l >> 1 == 0 {
                Complex64::from_polar(1.0, -half)
            } else {
                Complex64::from_polar(1.0, half)
            }
        } else {
            ONE
        };
    }
    let inner = kron_local(&ry(alpha[3]), &id);
    mul4(&outer, &mul4(&crz, &inner))
}

impl Gate {
    pub fn apply(&self, state: &mut [Complex64]) {
        match *self {
            Gate::Block {
                first,
                second,
                ref matrix,
            } => apply_block(state, first, second, matrix),
            Gate::Rx { qubit, angle } => {
                let (s, c) = (angle / 2.0).sin_cos();
                let (c, ms) = (Complex64::new(c, 0.0), Complex64::new(0.0, -s));
                let bit = 1usize << qubit;
                for i in 0..state.len() {
                    if i & bit == 0 {
                        let (a, b) = (state[i], state[i | bit]);
                        state[i] = c * a + ms * b;
                        state[i | bit] = ms * a + c * b;
                    }
                }
            }
            Gate::Zz {
                first,
                second,
                angle,
            } => {
                let same = Complex64::from_polar(1.0, -angle);
                let differ = Complex64::from_polar(1.0, angle);
                for (i, amp) in state.iter_mut().enumerate() {
                    let parity = ((i >> first) ^ (i >> second)) & 1;
                    *amp *= if parity == 0 { same } else { differ };
                }
            }
        }
    }
}

fn apply_block(state: &mut [Complex64], first: usize, second: usize, m: &Block) {
    let (b0, b1) = (1usize << first, 1usize << second);
    for base in 0..state.len() {
        if base & (b0 | b1) != 0 {
            continue;
        }
        let idx = [base, base | b0, base | b1, base | b0 | b1];
        let v = idx.map(|k| state[k]);
        for (r, &k) in idx.iter().enumerate() {
            state[k] = m[r][0] * v[0] + m[r][1] * v[1] + m[r][2] * v[2] + m[r][3] * v[3];
        }
    }
}
