//! Optimal power flow for radial distribution feeders with on-load tap
//! changers.
//!
//! The tap ratio of every transformer is encoded with binary expansion and
//! the bilinear voltage products are linearized exactly with big-M rows,
//! giving a mixed-integer second-order-cone program. The crate ships its
//! own interior-point conic solver and branch-and-bound driver, and a
//! backward/forward sweep power flow used as an independent oracle.
//!
//! All numerical code is generic over [`scalar::Real`]; the aliases at the
//! crate root fix the scalar to `f64`.

pub mod error;
pub mod linearization;
pub mod model;
pub mod network;
pub mod opf;
pub mod powerflow;
pub mod scalar;
pub mod scenario;
pub mod solver;

pub use error::{Error, Result};

pub type Case = network::NetworkCase<f64>;
pub type Program = model::MixedIntegerConicProgram<f64>;
pub type Encoding = linearization::TapEncoding<f64>;
pub type Model = opf::OpfModel<f64>;
pub type Solution = opf::OpfSolution<f64>;
pub type PowerFlow = powerflow::PowerFlowSolution<f64>;
pub type SocpOutcome = solver::SocpResult<f64>;
pub type BnbOutcome = solver::BnbResult<f64>;
pub type Settings = solver::SolverSettings<f64>;
