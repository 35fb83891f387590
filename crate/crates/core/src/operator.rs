//! A single handle over every doubly-stochastic operator in the crate.

use serde::{Deserialize, Serialize};

use crate::birkhoff::{self, ProjectionSettings};
use crate::error::{Error, Result};
use crate::qontot::{self, CircuitConfig, ParamVec};
use crate::qr;
use crate::sinkhorn::{SinkhornFlavor, SinkhornSettings};
use crate::SquareMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DsmOperator {
    Sinkhorn(SinkhornSettings),
    BirkhoffProject(ProjectionSettings),
    Qr {
        seed: u64,
    },
    Qontot {
        config: CircuitConfig,
        theta: ParamVec,
    },
}

impl DsmOperator {
    pub fn name(&self) -> &'static str {
        match self {
            DsmOperator::Sinkhorn(s) => match s.flavor {
                SinkhornFlavor::Naive => "sinkhorn-naive",
                SinkhornFlavor::Ot => "sinkhorn-ot",
            },
            DsmOperator::BirkhoffProject(_) => "birkhoff-project",
            DsmOperator::Qr { .. } => "qr",
            DsmOperator::Qontot { .. } => "qontot",
        }
    }

    /// Whether [`DsmOperator::apply`] needs strictly positive input.
    pub fn requires_positive(&self) -> bool {
        matches!(self, DsmOperator::Sinkhorn(_))
    }

    /// Input dimension the operator is bound to, if any.
    pub fn fixed_dim(&self) -> Option<usize> {
        match self {
            DsmOperator::Qontot { config, .. } => Some(config.dsm_dim),
            _ => None,
        }
    }

    /// Applies the operator on its natural domain (positive kernels for Sinkhorn,
    /// arbitrary real matrices for the rest).
    pub fn apply(&self, m: &SquareMatrix) -> Result<SquareMatrix> {
        if let Some(t) = self.fixed_dim() {
            if m.n() != t {
                return Err(Error::DimensionMismatch {
                    expected: t,
                    actual: m.n(),
                });
            }
        }
        match self {
            DsmOperator::Sinkhorn(s) => s.apply(m),
            DsmOperator::BirkhoffProject(s) => Ok(birkhoff::project(m, s)?.into_matrix()),
            DsmOperator::Qr { seed } => Ok(qr::qr_dsm(m, *seed)?.into_matrix()),
            DsmOperator::Qontot { config, theta } => {
                Ok(qontot::simulate_dsm(config, theta, m)?.into_matrix())
            }
        }
    }

    /// Applies the operator to real-valued logits. Sinkhorn exponentiates with
    /// its temperature first; the other operators take the logits unchanged.
    pub fn apply_logits(&self, logits: &SquareMatrix) -> Result<SquareMatrix> {
        match self {
            DsmOperator::Sinkhorn(s) => s.apply_logits(logits),
            _ => self.apply(logits),
        }
    }
}
