use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid case: {0}")]
    Validation(String),
    #[error("topology error: {0}")]
    Topology(#[from] TopologyError),
    #[error("invalid per-unit base: mva={mva}, kv={kv}")]
    InvalidBase { mva: f64, kv: f64 },
    #[error("tap assignment: {0}")]
    TapRange(String),
    #[error("power flow did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("voltage collapse at bus {bus}")]
    VoltageCollapse { bus: u32 },
    #[error("enumeration grid of {size} points exceeds cap {cap}")]
    EnumerationCap { size: u128, cap: u128 },
    #[error("no tap assignment satisfies the voltage bounds")]
    NoFeasibleAssignment,
    #[error("tap encoding: {0}")]
    Encoding(String),
    #[error("model: {0}")]
    Model(String),
    #[error("binary variable {name} = {value} is not integral")]
    Integrality { name: String, value: f64 },
    #[error("problem is infeasible")]
    Infeasible,
    #[error("solver failure: {0}")]
    Solver(String),
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum TopologyError {
    #[error("no slack bus")]
    MissingSlack,
    #[error("multiple slack buses: {0:?}")]
    MultipleSlack(Vec<u32>),
    #[error("cycle detected through branch {from}-{to}")]
    Cycle { from: u32, to: u32 },
    #[error("bus {0} is not connected to the slack bus")]
    Disconnected(u32),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
