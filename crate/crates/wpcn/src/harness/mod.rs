//! Experiment definitions, sweep execution and CSV output.
//!
//! An [`Experiment`] names a sweep, the schemes it compares and its grid.
//! [`run_experiment`] evaluates every grid point on a worker pool and
//! returns tables ordered by grid index, so output never depends on
//! scheduling. [`write_output`] writes each table as CSV with a schema
//! sidecar (`<file>.schema`) and a wall-time sidecar (`<file>.timing.csv`);
//! the main CSV holds only deterministic columns.

pub mod acceptance;
mod output;
mod run;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

pub use output::{write_output, write_table, Table, SCHEMA_VERSION};
pub use run::{
    convergence_trace, emit_rate_region, run_experiment, solve_point, validate_ber, worker_count, PointOutcome,
    RunOutput, WORKERS_ENV,
};

use crate::baselines::SchemeId;
use crate::dual_solver::{DualUpdate, SolverOptions, StepRule};
use crate::error::{Error, Result};
use crate::phy::SignalModel;
use crate::sysmodel::{reference_gains, Config};

/// Sweep families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    /// Power-splitting ratio swept on fixed channel gains.
    BetaSweep,
    /// Far-device distance swept on the line placement.
    D1Sweep,
    /// Relay distance swept on the line placement.
    D2Sweep,
    /// Weighted-sum-rate boundary over the weight `w1`.
    RateRegion,
    /// Per-iteration trace of the dual solver.
    Convergence,
    /// Detector Monte Carlo against the closed-form error rate.
    BerValidation,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::BetaSweep => "beta_sweep",
            ExperimentKind::D1Sweep => "d1_sweep",
            ExperimentKind::D2Sweep => "d2_sweep",
            ExperimentKind::RateRegion => "rate_region",
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::BerValidation => "ber_validation",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let kind = match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "beta_sweep" | "beta" => ExperimentKind::BetaSweep,
            "d1_sweep" | "d1" => ExperimentKind::D1Sweep,
            "d2_sweep" | "d2" => ExperimentKind::D2Sweep,
            "rate_region" | "region" => ExperimentKind::RateRegion,
            "convergence" => ExperimentKind::Convergence,
            "ber_validation" | "ber" => ExperimentKind::BerValidation,
            other => return Err(Error::Config(format!("unknown experiment `{other}`"))),
        };
        Ok(kind)
    }
}

/// A fully specified sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub kind: ExperimentKind,
    pub schemes: Vec<SchemeId>,
    /// Swept values: beta, d1, d2, the weight `w1`, beta (convergence) or
    /// beta (error-rate validation).
    pub grid: Vec<f64>,
    pub output: PathBuf,
    pub seed: u64,
    /// Channel gains `(h1, h2, h12)` for the beta sweep and convergence runs.
    pub gains: (f64, f64, f64),
    /// Fixed far-device distance for d2 sweeps and the rate region.
    pub d1: f64,
    /// Fixed relay distance for d1 sweeps.
    pub d2: f64,
    /// Backscatter bit rates; d1 sweeps repeat for each.
    pub rb_values: Vec<f64>,
    /// Relay distances of the rate region, one output file each.
    pub d2_values: Vec<f64>,
    /// Samples per bit for error-rate validation.
    pub samples_per_bit: Vec<usize>,
    pub num_bits: u64,
    pub signal_models: Vec<SignalModel>,
    pub solver: SolverOptions,
}

/// Below this many samples per bit the Gaussian approximation behind the
/// closed-form error rate is not expected to hold.
pub const GAUSSIAN_VALIDITY_SAMPLES: usize = 10;

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

impl Experiment {
    /// Default setup for each sweep family.
    pub fn defaults(kind: ExperimentKind) -> Self {
        use reference_gains::*;
        let base = Experiment {
            kind,
            schemes: SchemeId::ALL.to_vec(),
            grid: Vec::new(),
            output: PathBuf::from(format!("{}.csv", kind.name())),
            seed: 1,
            gains: (H1, H2, H12_SPLIT),
            d1: 6.5,
            d2: 2.5,
            rb_values: vec![30e3],
            d2_values: vec![3.0, 4.0, 5.0],
            samples_per_bit: vec![5, 20, 50, 100],
            num_bits: 1_000_000,
            signal_models: vec![SignalModel::EnergyDomain, SignalModel::Full],
            solver: SolverOptions::default(),
        };
        match kind {
            ExperimentKind::BetaSweep => Experiment { grid: linspace(0.0, 1.0, 21), ..base },
            ExperimentKind::D1Sweep => Experiment { grid: linspace(5.0, 8.0, 13), rb_values: vec![30e3, 80e3], ..base },
            ExperimentKind::D2Sweep => Experiment { grid: linspace(2.0, 4.0, 9), ..base },
            ExperimentKind::RateRegion => Experiment { grid: linspace(0.0, 1.0, 11), d1: 8.0, ..base },
            ExperimentKind::Convergence => Experiment {
                schemes: vec![SchemeId::ProposedAB],
                grid: vec![0.8],
                gains: (H1, H2, H12_CONVERGENCE),
                ..base
            },
            ExperimentKind::BerValidation => Experiment { schemes: Vec::new(), grid: vec![0.2, 0.5, 0.8], ..base },
        }
    }

    /// Builds an experiment from configuration keys, consuming them.
    ///
    /// Recognised keys: `experiment`, `schemes`, `grid`, `out`, `seed`,
    /// `h1`, `h2`, `h12`, `d1`, `d2`, `rb_values`, `d2_values`,
    /// `samples_per_bit`, `num_bits`, `signal_models` (`energy`, `full`),
    /// `update` (`cutting_plane`, `subgradient`, `subgradient_constant`),
    /// `step0`, `eps`, `max_iter`.
    pub fn from_config(cfg: &mut Config) -> Result<Self> {
        let kind: ExperimentKind = cfg
            .take::<String>("experiment")?
            .ok_or_else(|| Error::Config("missing `experiment`".into()))?
            .parse()?;
        let mut e = Experiment::defaults(kind);
        e.apply_config(cfg)?;
        Ok(e)
    }

    /// Overrides fields from configuration keys (all but `experiment`).
    pub fn apply_config(&mut self, cfg: &mut Config) -> Result<()> {
        if let Some(v) = cfg.take_list::<SchemeId>("schemes")? {
            self.schemes = v;
        }
        if let Some(v) = cfg.take_list::<f64>("grid")? {
            self.grid = v;
        }
        if let Some(v) = cfg.take::<String>("out")? {
            self.output = PathBuf::from(v);
        }
        if let Some(v) = cfg.take::<u64>("seed")? {
            self.seed = v;
        }
        if let Some(v) = cfg.take::<f64>("h1")? {
            self.gains.0 = v;
        }
        if let Some(v) = cfg.take::<f64>("h2")? {
            self.gains.1 = v;
        }
        if let Some(v) = cfg.take::<f64>("h12")? {
            self.gains.2 = v;
        }
        if let Some(v) = cfg.take::<f64>("d1")? {
            self.d1 = v;
        }
        if let Some(v) = cfg.take::<f64>("d2")? {
            self.d2 = v;
        }
        if let Some(v) = cfg.take_list::<f64>("rb_values")? {
            self.rb_values = v;
        }
        if let Some(v) = cfg.take_list::<f64>("d2_values")? {
            self.d2_values = v;
        }
        if let Some(v) = cfg.take_list::<usize>("samples_per_bit")? {
            self.samples_per_bit = v;
        }
        if let Some(v) = cfg.take::<u64>("num_bits")? {
            self.num_bits = v;
        }
        if let Some(v) = cfg.take_list::<String>("signal_models")? {
            self.signal_models = v.iter().map(|s| parse_signal_model(s)).collect::<Result<_>>()?;
        }
        if let Some(v) = cfg.take::<String>("update")? {
            self.solver.update = match v.as_str() {
                "cutting_plane" => DualUpdate::CuttingPlane,
                "subgradient" => DualUpdate::Subgradient(StepRule::Diminishing),
                "subgradient_constant" => DualUpdate::Subgradient(StepRule::Constant),
                other => return Err(Error::Config(format!("unknown update `{other}`"))),
            };
        }
        if let Some(v) = cfg.take::<f64>("step0")? {
            self.solver.step0 = v;
        }
        if let Some(v) = cfg.take::<f64>("eps")? {
            self.solver.eps = v;
        }
        if let Some(v) = cfg.take::<usize>("max_iter")? {
            self.solver.max_iter = v;
        }
        Ok(())
    }

    pub fn with_output(mut self, path: impl AsRef<Path>) -> Self {
        self.output = path.as_ref().to_path_buf();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::Config("experiment grid is empty".into()));
        }
        if self.grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config("experiment grid must be strictly increasing".into()));
        }
        if self.schemes.is_empty() && self.kind != ExperimentKind::BerValidation {
            return Err(Error::Config("no schemes selected".into()));
        }
        match self.kind {
            ExperimentKind::BetaSweep | ExperimentKind::Convergence | ExperimentKind::BerValidation => {
                if self.grid.iter().any(|b| !(0.0..=1.0).contains(b)) {
                    return Err(Error::Config("beta values must lie in [0, 1]".into()));
                }
            }
            ExperimentKind::D1Sweep => {
                if self.grid.iter().any(|&d1| !(d1 > self.d2 && self.d2 > 0.0)) {
                    return Err(Error::Config("d1 sweep needs d1 > d2 > 0 at every point".into()));
                }
                if self.rb_values.is_empty() {
                    return Err(Error::Config("d1 sweep needs at least one Rb value".into()));
                }
            }
            ExperimentKind::D2Sweep => {
                if self.grid.iter().any(|&d2| !(self.d1 > d2 && d2 > 0.0)) {
                    return Err(Error::Config("d2 sweep needs d1 > d2 > 0 at every point".into()));
                }
            }
            ExperimentKind::RateRegion => {
                if self.grid.len() < 11 || self.grid.iter().any(|w| !(0.0..=1.0).contains(w)) {
                    return Err(Error::Config("rate region needs at least 11 weights in [0, 1]".into()));
                }
                if self.d2_values.is_empty() || self.d2_values.iter().any(|&d2| !(self.d1 > d2 && d2 > 0.0)) {
                    return Err(Error::Config("rate region needs d1 > d2 > 0 for every d2".into()));
                }
            }
        }
        if self.kind == ExperimentKind::BerValidation {
            if self.num_bits < 100_000 {
                return Err(Error::Config("error-rate validation needs at least 10^5 bits".into()));
            }
            if self.samples_per_bit.is_empty() || self.samples_per_bit.contains(&0) || self.signal_models.is_empty() {
                return Err(Error::Config("error-rate validation needs sample counts >= 1 and a signal model".into()));
            }
        }
        Ok(())
    }
}

pub fn parse_signal_model(s: &str) -> Result<SignalModel> {
    match s.trim() {
        "energy" | "energy_domain" => Ok(SignalModel::EnergyDomain),
        "full" => Ok(SignalModel::Full),
        other => Err(Error::Config(format!("unknown signal model `{other}`"))),
    }
}

pub fn signal_model_name(m: SignalModel) -> &'static str {
    match m {
        SignalModel::EnergyDomain => "energy",
        SignalModel::Full => "full",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        for kind in [
            ExperimentKind::BetaSweep,
            ExperimentKind::D1Sweep,
            ExperimentKind::D2Sweep,
            ExperimentKind::RateRegion,
            ExperimentKind::Convergence,
            ExperimentKind::BerValidation,
        ] {
            let e = Experiment::defaults(kind);
            e.validate().unwrap();
            assert_eq!(kind.name().parse::<ExperimentKind>().unwrap(), kind);
        }
        assert_eq!(Experiment::defaults(ExperimentKind::BetaSweep).grid.len(), 21);
        assert_eq!(Experiment::defaults(ExperimentKind::D1Sweep).grid.len(), 13);
    }

    #[test]
    fn config_overrides_and_rejects() {
        let mut cfg = Config::parse("experiment = d2\ngrid = 2, 3\nschemes = proposed_ab\nseed = 9\n").unwrap();
        let e = Experiment::from_config(&mut cfg).unwrap();
        cfg.finish().unwrap();
        assert_eq!(e.kind, ExperimentKind::D2Sweep);
        assert_eq!(e.grid, vec![2.0, 3.0]);
        assert_eq!(e.schemes, vec![SchemeId::ProposedAB]);
        assert_eq!(e.seed, 9);

        let mut bad = Config::parse("experiment = d1\ngrid = 6, 5\n").unwrap();
        assert!(Experiment::from_config(&mut bad).unwrap().validate().is_err());
        let mut unknown = Config::parse("experiment = nope\n").unwrap();
        assert!(Experiment::from_config(&mut unknown).is_err());
    }
}
