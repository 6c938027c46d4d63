//! Storage-time sweep: for each grid point simulate the memory-on and
//! memory-off datasets, fit both, and report the process fidelity between
//! them alongside the retrieval efficiency.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{
    memory_chi, off_chi, simulate_dataset, transmitted_chi, ChannelError, ChannelTag, MemoryModel, ShotConfig,
    TomographyDataset,
};
use crate::rng;
use crate::tomography::{
    efficiency_of, mle_reconstruct, monte_carlo_around, CountTable, FidelityEstimate, MleOptions, ReconstructionRecord,
    TomographyError, MIN_TRIALS,
};

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Tomography(#[from] TomographyError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Storage times (ns) used when the config does not give any. These are
/// model defaults spanning 12.5 ns to 1.5 μs, not measured abscissae.
pub const DEFAULT_GRID: [f64; 8] = [12.5, 100.0, 250.0, 500.0, 750.0, 1000.0, 1250.0, 1500.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Free-form annotation, ignored by the sweep.
    #[serde(rename = "_note", skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    /// ns, strictly increasing.
    pub storage_times: Vec<f64>,
    pub channel: MemoryModel,
    pub shots: ShotConfig,
    pub mc_trials: usize,
    pub mle: MleOptions,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            note: None,
            storage_times: DEFAULT_GRID.to_vec(),
            channel: MemoryModel::default(),
            shots: ShotConfig::default(),
            mc_trials: 100,
            mle: MleOptions::default(),
        }
    }
}

impl SweepConfig {
    pub fn from_json(text: &str) -> Result<Self, SweepError> {
        let config: Self = serde_json::from_str(text).map_err(|e| SweepError::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        let invalid = |msg: String| Err(SweepError::InvalidConfig(msg));
        if self.storage_times.is_empty() {
            return invalid("storage_times is empty".into());
        }
        if self.storage_times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return invalid("storage_times must be finite and non-negative".into());
        }
        if self.storage_times.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("storage_times must be strictly increasing".into());
        }
        if self.mc_trials < MIN_TRIALS {
            return invalid(format!("mc_trials must be at least {MIN_TRIALS}"));
        }
        if self.mle.max_iter == 0 || self.mle.tol.is_nan() || self.mle.tol < 0.0 {
            return invalid("mle options need max_iter > 0 and tol >= 0".into());
        }
        self.channel
            .validate()
            .and_then(|_| self.shots.validate())
            .map_err(|e| SweepError::InvalidConfig(e.to_string()))
    }

    /// Shot settings for dataset `which` of grid point `index`.
    fn shots_for(&self, index: usize, which: u64) -> ShotConfig {
        ShotConfig {
            seed: rng::derive_seed(self.shots.seed, &[rng::TAG_SWEEP, index as u64, which]),
            ..self.shots
        }
    }
}

/// The three datasets of one storage time: memory on, memory off, and the
/// light transmitted without being stored. Each gets its own seed derived
/// from `shots.seed`.
pub fn simulate_channels(
    model: &MemoryModel,
    storage_time: f64,
    shots: &ShotConfig,
) -> Result<[TomographyDataset; 3], ChannelError> {
    let params = model.at(storage_time);
    let seeded = |which: u64| ShotConfig {
        seed: rng::derive_seed(shots.seed, &[which]),
        ..*shots
    };
    Ok([
        simulate_dataset(&memory_chi(&params)?, &seeded(0), ChannelTag::MemoryOn)?,
        simulate_dataset(&off_chi(&params)?, &seeded(1), ChannelTag::MemoryOff)?,
        simulate_dataset(&transmitted_chi(&params)?, &seeded(2), ChannelTag::Transmitted)?,
    ])
}

/// One CSV line of the sweep report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub storage_time_ns: f64,
    pub efficiency: f64,
    pub fidelity: f64,
    pub fidelity_err: f64,
    pub converged: bool,
}

/// Everything computed at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointReport {
    pub storage_time_ns: f64,
    pub efficiency: f64,
    pub fidelity: FidelityEstimate,
    pub monte_carlo_ok: bool,
    pub memory_on: ReconstructionRecord,
    pub memory_off: ReconstructionRecord,
}

impl PointReport {
    pub fn row(&self) -> SweepRow {
        SweepRow {
            storage_time_ns: self.storage_time_ns,
            efficiency: self.efficiency,
            fidelity: self.fidelity.value,
            fidelity_err: self.fidelity.std_err,
            converged: self.memory_on.converged && self.memory_off.converged && self.monte_carlo_ok,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub points: Vec<PointReport>,
}

impl SweepReport {
    pub fn rows(&self) -> Vec<SweepRow> {
        self.points.iter().map(PointReport::row).collect()
    }

    /// `storage_time_ns,efficiency,fidelity,fidelity_err,converged`, one row
    /// per grid point in grid order.
    pub fn to_csv(&self) -> Result<String, SweepError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in self.rows() {
            w.serialize(row)?;
        }
        let bytes = w.into_inner().map_err(|e| SweepError::InvalidConfig(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

pub fn run_point(config: &SweepConfig, index: usize) -> Result<PointReport, SweepError> {
    let t = config.storage_times[index];
    let params = config.channel.at(t);
    let on = simulate_dataset(&memory_chi(&params)?, &config.shots_for(index, 0), ChannelTag::MemoryOn)?;
    let off = simulate_dataset(&off_chi(&params)?, &config.shots_for(index, 1), ChannelTag::MemoryOff)?;
    let on_table = CountTable::from(&on);
    let on_fit = mle_reconstruct(&on_table, &config.mle)?;
    let off_fit = mle_reconstruct(&CountTable::from(&off), &config.mle)?;

    let (fidelity, monte_carlo_ok) =
        match monte_carlo_around(&on_table, &on_fit.chi, &off_fit.chi, config.mc_trials, &config.mle) {
            Ok(est) => (est, true),
            Err(TomographyError::TooManyFailures { dropped, trials }) => (
                FidelityEstimate {
                    value: crate::tomography::process_fidelity(&on_fit.chi, &off_fit.chi)?,
                    std_err: f64::NAN,
                    trials: trials - dropped,
                    dropped,
                },
                false,
            ),
            Err(e) => return Err(e.into()),
        };

    Ok(PointReport {
        storage_time_ns: t,
        efficiency: efficiency_of(&on_fit.chi),
        fidelity,
        monte_carlo_ok,
        memory_on: on_fit.to_record(),
        memory_off: off_fit.to_record(),
    })
}

/// Runs every grid point; points are independent and the report keeps grid
/// order whatever order they finish in.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepReport, SweepError> {
    config.validate()?;
    let points = (0..config.storage_times.len())
        .into_par_iter()
        .map(|i| run_point(config, i))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SweepReport { points })
}
