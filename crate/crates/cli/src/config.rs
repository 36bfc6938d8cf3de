//! TOML configuration file.
//!
//! Every key is optional. Values from the file replace the built-in
//! defaults, and command-line flags replace values from the file.
//!
//! ```toml
//! [solver]
//! rel_gap = 1e-6
//! socp_tol = 1e-8
//! max_iter = 100
//! node_limit = 100000
//! threads = 1
//! mode = "ipm"            # or "splitting"
//!
//! [linearization]
//! bit_length = "minimal"  # or "extended"
//! big_m = "tight"         # or a number
//!
//! [thresholds]
//! cone_gap = 1e-5
//! bigm_gap = 1e-6
//! oracle_rel = 1e-3
//!
//! [powerflow]
//! tol = 1e-10
//! max_iter = 100
//!
//! [enumeration]
//! cap = 1000000
//! ```

use std::path::Path;

use serde::Deserialize;
use tapflow::linearization::{BigMMode, BitLengthMode, LinearizationConfig};
use tapflow::powerflow::{EnumerationSettings, PowerFlowSettings};
use tapflow::scenario::Thresholds;
use tapflow::solver::{SolverMode, SolverSettings};
use tapflow::{Error, Result};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub linearization: LinearizationBlock,
    #[serde(default)]
    pub thresholds: ThresholdBlock,
    #[serde(default)]
    pub powerflow: PowerFlowBlock,
    #[serde(default)]
    pub enumeration: EnumerationBlock,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    pub rel_gap: Option<f64>,
    pub socp_tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub node_limit: Option<usize>,
    pub threads: Option<usize>,
    pub mode: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearizationBlock {
    pub bit_length: Option<String>,
    pub big_m: Option<BigMValue>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum BigMValue {
    Uniform(f64),
    Named(String),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdBlock {
    pub cone_gap: Option<f64>,
    pub bigm_gap: Option<f64>,
    pub oracle_rel: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerFlowBlock {
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnumerationBlock {
    pub cap: Option<u64>,
}

/// Solver flags given on the command line; `None` leaves the configured
/// value in place.
#[derive(Debug, Default, Clone)]
pub struct SolverOverrides {
    pub rel_gap: Option<f64>,
    pub socp_tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub node_limit: Option<usize>,
    pub threads: Option<usize>,
    pub mode: Option<SolverMode>,
}

/// Effective settings after merging defaults, file and flags.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub solver: SolverSettings<f64>,
    pub linearization: LinearizationConfig<f64>,
    pub thresholds: Thresholds,
    pub powerflow: PowerFlowSettings<f64>,
    pub enumeration: EnumerationSettings<f64>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))
    }

    pub fn resolve(&self, flags: &SolverOverrides) -> Result<Resolved> {
        let mut solver = SolverSettings::<f64>::default();
        let s = &self.solver;
        if let Some(mode) = &s.mode {
            solver.mode = mode.parse()?;
        }
        solver.rel_gap = flags.rel_gap.or(s.rel_gap).unwrap_or(solver.rel_gap);
        solver.socp_tol = flags.socp_tol.or(s.socp_tol).unwrap_or(solver.socp_tol);
        solver.max_iter = flags.max_iter.or(s.max_iter).unwrap_or(solver.max_iter);
        solver.node_limit = flags.node_limit.or(s.node_limit).unwrap_or(solver.node_limit);
        solver.threads = flags.threads.or(s.threads).unwrap_or(solver.threads);
        solver.mode = flags.mode.unwrap_or(solver.mode);
        positive("rel_gap", solver.rel_gap)?;
        positive("socp_tol", solver.socp_tol)?;
        if solver.threads == 0 || solver.max_iter == 0 || solver.node_limit == 0 {
            return Err(Error::Validation("threads, max_iter and node_limit must be at least 1".into()));
        }

        let mut linearization = LinearizationConfig::default();
        match self.linearization.bit_length.as_deref() {
            None | Some("minimal") => {}
            Some("extended") => linearization.bit_length = BitLengthMode::Extended,
            Some(other) => return Err(Error::Validation(format!("unknown bit_length {other:?}"))),
        }
        match &self.linearization.big_m {
            None => {}
            Some(BigMValue::Named(n)) if n == "tight" => {}
            Some(BigMValue::Named(n)) => return Err(Error::Validation(format!("unknown big_m {n:?}"))),
            Some(BigMValue::Uniform(m)) => {
                positive("big_m", *m)?;
                linearization.big_m = BigMMode::Uniform(*m);
            }
        }

        let mut thresholds = Thresholds::default();
        let t = &self.thresholds;
        thresholds.cone_gap = t.cone_gap.unwrap_or(thresholds.cone_gap);
        thresholds.bigm_gap = t.bigm_gap.unwrap_or(thresholds.bigm_gap);
        thresholds.oracle_rel = t.oracle_rel.unwrap_or(thresholds.oracle_rel);

        let mut powerflow = PowerFlowSettings::<f64>::default();
        powerflow.tol = self.powerflow.tol.unwrap_or(powerflow.tol);
        powerflow.max_iter = self.powerflow.max_iter.unwrap_or(powerflow.max_iter);
        positive("powerflow.tol", powerflow.tol)?;

        let mut enumeration = EnumerationSettings::<f64>::default();
        enumeration.cap = self.enumeration.cap.map_or(enumeration.cap, u128::from);
        enumeration.powerflow = powerflow;
        enumeration.parallel = solver.threads > 1;

        Ok(Resolved { solver, linearization, thresholds, powerflow, enumeration })
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Validation(format!("{name} must be a positive number, got {v}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_example_parses_to_the_defaults() {
        let text: String = include_str!("config.rs")
            .lines()
            .skip_while(|l| !l.starts_with("//! ```toml"))
            .skip(1)
            .take_while(|l| !l.starts_with("//! ```"))
            .map(|l| l.trim_start_matches("//!").trim_start().to_string() + "\n")
            .collect();
        let r = ConfigFile::parse(&text).unwrap().resolve(&SolverOverrides::default()).unwrap();
        let d = ConfigFile::default().resolve(&SolverOverrides::default()).unwrap();
        assert_eq!(r.solver, d.solver);
        assert_eq!(r.linearization, d.linearization);
        assert_eq!(r.thresholds, d.thresholds);
        assert_eq!(r.powerflow, d.powerflow);
        assert_eq!(r.enumeration, d.enumeration);
    }

    #[test]
    fn flags_replace_file_values() {
        let file = ConfigFile::parse("[solver]\nrel_gap = 1e-3\nthreads = 4\nmode = \"splitting\"\n").unwrap();
        let r = file.resolve(&SolverOverrides::default()).unwrap();
        assert_eq!((r.solver.rel_gap, r.solver.threads, r.solver.mode), (1e-3, 4, SolverMode::Splitting));
        assert!(r.enumeration.parallel);
        let flags = SolverOverrides { rel_gap: Some(1e-5), mode: Some(SolverMode::Ipm), ..Default::default() };
        let r = file.resolve(&flags).unwrap();
        assert_eq!((r.solver.rel_gap, r.solver.threads, r.solver.mode), (1e-5, 4, SolverMode::Ipm));
    }

    #[test]
    fn linearization_block() {
        let r = ConfigFile::parse("[linearization]\nbit_length = \"extended\"\nbig_m = 4.0\n")
            .unwrap()
            .resolve(&SolverOverrides::default())
            .unwrap();
        assert_eq!(r.linearization.bit_length, BitLengthMode::Extended);
        assert_eq!(r.linearization.big_m, BigMMode::Uniform(4.0));
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            "[solver]\nmode = \"simplex\"\n",
            "[solver]\nrel_gap = -1.0\n",
            "[linearization]\nbig_m = \"loose\"\n",
            "[linearization]\nbit_length = \"long\"\n",
            "[powerflow]\ntol = 0.0\n",
        ] {
            let parsed = ConfigFile::parse(text).unwrap();
            assert!(parsed.resolve(&SolverOverrides::default()).is_err(), "{text}");
        }
        assert!(ConfigFile::parse("[solver]\nthreads = \"two\"\n").is_err());
        assert!(ConfigFile::parse("[extra]\n").is_err());
    }
}
