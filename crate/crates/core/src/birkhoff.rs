//! Frobenius-nearest projection onto the Birkhoff polytope.
//!
//! The polytope is the intersection of the affine set `{Y : Y 1 = 1, Y^T 1 = 1}`
//! with the non-negative orthant. Both pieces have closed-form projections, so
//! the default method is Dykstra's alternating projection. A generic
//! operator-splitting QP solver over the explicit equality/bound formulation is
//! provided as an independent second method.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{check_stochasticity, Dsm, StochasticityReport};
use crate::SquareMatrix;

/// Feasibility tolerance used to validate projection outputs.
pub const OUTPUT_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProjectionMethod {
    Dykstra,
    SplittingQp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSettings {
    /// Bound on both the final step length and the marginal violation.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub method: ProjectionMethod,
}

impl Default for ProjectionSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 50_000,
            method: ProjectionMethod::Dykstra,
        }
    }
}

impl ProjectionSettings {
    pub fn with_method(method: ProjectionMethod) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "projection tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument(
                "max_iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Nearest matrix with unit row and column sums (entries may be negative).
///
/// With row sums `r`, column sums `c` and total `s`, the KKT system for the
/// row/column multipliers has the solution
/// `Y = M + (1 - r) 1^T / n + 1 (1 - c)^T / n + (s - n) J / n^2`.
pub fn affine_project(m: &SquareMatrix) -> SquareMatrix {
    let n = m.n();
    let nf = n as f64;
    let r = m.row_sums();
    let c = m.col_sums();
    let total: f64 = r.iter().sum();
    let shift = (total - nf) / (nf * nf);
    SquareMatrix::from_fn(n, |i, j| {
        m[(i, j)] + (1.0 - r[i]) / nf + (1.0 - c[j]) / nf + shift
    })
}

pub fn project(m: &SquareMatrix, settings: &ProjectionSettings) -> Result<Dsm> {
    settings.validate()?;
    let out = match settings.method {
        ProjectionMethod::Dykstra => dykstra(m, settings)?,
        ProjectionMethod::SplittingQp => splitting_qp(m, settings)?,
    };
    Dsm::with_tolerance(out, OUTPUT_TOLERANCE)
}

/// `||m - project(m)||_F` with default settings.
pub fn birkhoff_distance(m: &SquareMatrix) -> Result<f64> {
    birkhoff_distance_with(m, &ProjectionSettings::default())
}

pub fn birkhoff_distance_with(m: &SquareMatrix, settings: &ProjectionSettings) -> Result<f64> {
    let p = project(m, settings)?;
    crate::metrics::frobenius_distance(m, p.matrix())
}

/// [`check_stochasticity`] with the distance to the polytope filled in.
pub fn stochasticity_with_distance(m: &SquareMatrix) -> Result<StochasticityReport> {
    let mut report = check_stochasticity(m);
    report.frobenius_to_birkhoff = Some(birkhoff_distance(m)?);
    Ok(report)
}

fn dykstra(m: &SquareMatrix, settings: &ProjectionSettings) -> Result<SquareMatrix> {
    let n = m.n();
    let len = n * n;
    let mut x = m.as_slice().to_vec();
    let mut p = vec![0.0; len];
    let mut q = vec![0.0; len];
    let mut buf = vec![0.0; len];
    for _ in 0..settings.max_iterations {
        for k in 0..len {
            buf[k] = x[k] + p[k];
        }
        let y = affine_project(&SquareMatrix::from_raw(n, buf.clone()));
        let y = y.as_slice();
        for k in 0..len {
            p[k] = buf[k] - y[k];
        }
        let mut step = 0.0;
        for k in 0..len {
            let shifted = y[k] + q[k];
            let next = shifted.max(0.0);
            q[k] = shifted - next;
            step += (next - x[k]) * (next - x[k]);
            x[k] = next;
        }
        if step.sqrt() < settings.tolerance {
            let candidate = SquareMatrix::from_raw(n, x.clone());
            if check_stochasticity(&candidate).max_deviation() <= settings.tolerance {
                return Ok(candidate);
            }
        }
    }
    let last = SquareMatrix::from_raw(n, x);
    Err(Error::NoConvergence {
        iterations: settings.max_iterations,
        report: check_stochasticity(&last),
        last_iterate: Box::new(last),
    })
}

/// Equality rows of `A vec(X) = 1` for row-major `vec`: first the `n` row-sum
/// constraints, then `n - 1` column-sum constraints (the last column row is
/// implied by the others and dropped).
fn equality_matrix(n: usize) -> DMatrix<f64> {
    let rows = 2 * n - 1;
    let mut a = DMatrix::zeros(rows, n * n);
    for i in 0..n {
        for j in 0..n {
            a[(i, i * n + j)] = 1.0;
            if j < n - 1 {
                a[(n + j, i * n + j)] = 1.0;
            }
        }
    }
    a
}

/// ADMM on `min 1/2 x^T x - vec(M)^T x  s.t.  A x = 1, x >= 0`,
/// with the bound constraints stacked under `A` as an identity block.
fn splitting_qp(m: &SquareMatrix, settings: &ProjectionSettings) -> Result<SquareMatrix> {
    const SIGMA: f64 = 1e-6;
    const RELAX: f64 = 1.6;
    const RHO: f64 = 1.0;
    const RHO_EQ: f64 = 1e3;

    let n = m.n();
    let len = n * n;
    let a = equality_matrix(n);
    let n_eq = a.nrows();
    let mut c = DMatrix::zeros(n_eq + len, len);
    c.view_mut((0, 0), (n_eq, len)).copy_from(&a);
    c.view_mut((n_eq, 0), (len, len)).fill_diagonal(1.0);
    let rho = DVector::from_fn(n_eq + len, |i, _| if i < n_eq { RHO_EQ } else { RHO });
    let lower = DVector::from_fn(n_eq + len, |i, _| if i < n_eq { 1.0 } else { 0.0 });
    let upper = DVector::from_fn(
        n_eq + len,
        |i, _| if i < n_eq { 1.0 } else { f64::INFINITY },
    );
    let lin = -DVector::from_column_slice(m.as_slice());

    let mut kkt = c.transpose() * DMatrix::from_diagonal(&rho) * &c;
    for i in 0..len {
        kkt[(i, i)] += 1.0 + SIGMA;
    }
    let chol = kkt
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("QP system is not positive definite".into()))?;

    let mut x = DVector::from_column_slice(m.as_slice());
    let mut z = &c * &x;
    let mut y = DVector::zeros(n_eq + len);
    for _ in 0..settings.max_iterations {
        let rhs = SIGMA * &x - &lin + c.transpose() * (rho.component_mul(&z) - &y);
        let x_tilde = chol.solve(&rhs);
        let z_tilde = &c * &x_tilde;
        let x_next = RELAX * &x_tilde + (1.0 - RELAX) * &x;
        let z_relaxed = RELAX * &z_tilde + (1.0 - RELAX) * &z;
        let z_next =
            (&z_relaxed + y.component_div(&rho))
                .zip_zip_map(&lower, &upper, |v, lo, hi| v.clamp(lo, hi));
        y += rho.component_mul(&(&z_relaxed - &z_next));

        let step = (&x_next - &x).norm();
        x = x_next;
        z = z_next;

        let primal = (&c * &x - &z).amax();
        let dual = (&x + &lin + c.transpose() * &y).amax();
        if primal < settings.tolerance && dual < settings.tolerance && step < settings.tolerance {
            break;
        }
    }
    let out = SquareMatrix::new(n, x.iter().map(|v| v.max(0.0)).collect())?;
    let report = check_stochasticity(&out);
    if report.max_deviation() > OUTPUT_TOLERANCE {
        return Err(Error::NoConvergence {
            iterations: settings.max_iterations,
            last_iterate: Box::new(out),
            report,
        });
    }
    Ok(out)
}
