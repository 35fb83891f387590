//! Doubly stochastic normalization operators and the tooling used to compare
//! them: Sinkhorn scaling, exact projection onto the Birkhoff polytope, the
//! orthostochastic QR map, a simulated parametric circuit producing
//! unistochastic-style matrices, attention with pluggable normalizers, exact
//! DSM counting on discrete grids, and expressivity sweeps.

pub mod attention;
pub mod birkhoff;
pub mod counting;
pub mod error;
pub mod expressivity;
pub mod gradcheck;
pub mod matrix;
pub mod metrics;
pub mod operator;
pub mod qontot;
pub mod qr;
pub mod sinkhorn;

pub use error::{Error, Result};
pub use matrix::SquareMatrix;
pub use metrics::{Dsm, StochasticityReport};
pub use operator::DsmOperator;
