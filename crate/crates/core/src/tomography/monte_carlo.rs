use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{poisson_sample, ProcessMatrix};
use crate::rng;

use super::counts::CountTable;
use super::fidelity::process_fidelity;
use super::mle::{mle_reconstruct, MleOptions};
use super::TomographyError;

pub const MIN_TRIALS: usize = 30;
/// Largest tolerated fraction of non-converged resampled fits.
const MAX_DROP_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityEstimate {
    pub value: f64,
    pub std_err: f64,
    pub trials: usize,
    /// Resampled fits discarded for not converging.
    #[serde(skip)]
    pub dropped: usize,
}

/// Redraws every setting's `R` shots as Poisson around its observed mean and
/// returns the new sample means.
fn resample(table: &CountTable, trial: usize) -> CountTable {
    let mut rng = rng::stream(table.seed, &[rng::TAG_MONTE_CARLO, trial as u64]);
    let r = table.repetitions as f64;
    let mut out = table.clone();
    // the sum of R Poisson(n̄) shots is Poisson(R·n̄)
    for m in out.means.iter_mut() {
        *m = poisson_sample(&mut rng, r * *m) as f64 / r;
    }
    out
}

/// Fidelity of the MLE estimate against `chi_ref`, with a Monte-Carlo error bar.
///
/// Each trial resamples the counts (seeded from the table's seed and the
/// trial index), refits, and scores the refit against `chi_ref`; the spread
/// of those scores is the error bar. The reported value is the fidelity of
/// the fit to the observed counts. Trials run in parallel and are reduced
/// in index order, so results do not depend on scheduling.
pub fn monte_carlo_errors(
    table: &CountTable,
    chi_ref: &ProcessMatrix,
    trials: usize,
    opts: &MleOptions,
) -> Result<FidelityEstimate, TomographyError> {
    let point = mle_reconstruct(table, opts)?;
    monte_carlo_around(table, &point.chi, chi_ref, trials, opts)
}

/// [`monte_carlo_errors`] for a table whose MLE fit is already known.
pub(crate) fn monte_carlo_around(
    table: &CountTable,
    fit: &ProcessMatrix,
    chi_ref: &ProcessMatrix,
    trials: usize,
    opts: &MleOptions,
) -> Result<FidelityEstimate, TomographyError> {
    if trials < MIN_TRIALS {
        return Err(TomographyError::TooFewTrials {
            min: MIN_TRIALS,
            got: trials,
        });
    }
    let value = process_fidelity(fit, chi_ref)?;

    let outcomes: Vec<Result<Option<f64>, TomographyError>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let fit = mle_reconstruct(&resample(table, trial), opts)?;
            if !fit.converged {
                return Ok(None);
            }
            process_fidelity(&fit.chi, chi_ref).map(Some)
        })
        .collect();

    let mut samples = Vec::with_capacity(trials);
    for outcome in outcomes {
        if let Some(f) = outcome? {
            samples.push(f);
        }
    }
    let dropped = trials - samples.len();
    if dropped as f64 > MAX_DROP_FRACTION * trials as f64 || samples.len() < 2 {
        return Err(TomographyError::TooManyFailures { dropped, trials });
    }

    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(FidelityEstimate {
        value,
        std_err: var.sqrt(),
        trials: samples.len(),
        dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ShotConfig;

    fn shots() -> ShotConfig {
        ShotConfig {
            photons_per_pulse: 5000.0,
            background: 0.0,
            repetitions: 500,
            seed: 23,
        }
    }

    #[test]
    fn too_few_trials() {
        let table = CountTable::noiseless(&ProcessMatrix::identity(), &shots());
        assert_eq!(
            monte_carlo_errors(&table, &ProcessMatrix::identity(), 10, &MleOptions::default()),
            Err(TomographyError::TooFewTrials { min: 30, got: 10 })
        );
    }

    #[test]
    fn noiseless_identity_has_small_error() {
        let table = CountTable::noiseless(&ProcessMatrix::identity(), &shots());
        let est = monte_carlo_errors(&table, &ProcessMatrix::identity(), 30, &MleOptions::default()).unwrap();
        assert!(est.value >= 0.99);
        assert!(est.std_err < 0.01);
        assert!(est.std_err > 0.0);
        assert_eq!(est.trials + est.dropped, 30);
    }

    #[test]
    fn resampling_is_seeded() {
        let table = CountTable::noiseless(&ProcessMatrix::identity().scaled(0.3), &shots());
        assert_eq!(resample(&table, 4), resample(&table, 4));
        assert_ne!(resample(&table, 4), resample(&table, 5));
    }

    #[test]
    fn json_fields() {
        let est = FidelityEstimate {
            value: 0.97,
            std_err: 0.01,
            trials: 100,
            dropped: 0,
        };
        let v: serde_json::Value = serde_json::to_value(&est).unwrap();
        assert_eq!(v, serde_json::json!({"value": 0.97, "std_err": 0.01, "trials": 100}));
    }
}
