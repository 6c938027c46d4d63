use crate::channel::{setting_index, setting_probabilities, ProcessMatrix, ShotConfig, TomographyDataset, SETTINGS};
use crate::polarization::{Label, LabelProbs, PolarizationError};

use super::TomographyError;

/// Mean counts per setting together with the shot metadata needed to
/// interpret them. Noiseless tables hold exact expected values.
#[derive(Debug, Clone, PartialEq)]
pub struct CountTable {
    pub photons_per_pulse: f64,
    pub background: f64,
    pub repetitions: usize,
    pub seed: u64,
    /// Prep-major, see [`setting_index`].
    pub means: [f64; SETTINGS],
}

impl CountTable {
    pub fn from_dataset(ds: &TomographyDataset) -> Self {
        Self::with_means(&ds.shot_config, ds.mean_counts())
    }

    /// Expected mean counts `N₀·p + background` for χ, without shot noise.
    pub fn noiseless(chi: &ProcessMatrix, shots: &ShotConfig) -> Self {
        let means = setting_probabilities(chi).map(|p| shots.photons_per_pulse * p + shots.background);
        Self::with_means(shots, means)
    }

    pub fn with_means(shots: &ShotConfig, means: [f64; SETTINGS]) -> Self {
        Self {
            photons_per_pulse: shots.photons_per_pulse,
            background: shots.background,
            repetitions: shots.repetitions,
            seed: shots.seed,
            means,
        }
    }

    pub fn mean(&self, prep: Label, analyzer: Label) -> f64 {
        self.means[setting_index(prep, analyzer)]
    }
}

impl From<&TomographyDataset> for CountTable {
    fn from(ds: &TomographyDataset) -> Self {
        Self::from_dataset(ds)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedProbs {
    /// `probs[m][k]`: analyzer `k` given preparation `m`, each analyzer pair
    /// normalized on its own.
    pub probs: [LabelProbs; 6],
    /// Mean background-subtracted pair sum for each preparation.
    pub intensity: [f64; 6],
    pub degenerate_pairs: usize,
}

const PAIRS: [(Label, Label, &str); 3] = [
    (Label::H, Label::V, "H/V"),
    (Label::D, Label::A, "D/A"),
    (Label::R, Label::L, "R/L"),
];

/// Background-subtracted, pairwise-normalized probabilities.
pub fn normalized_probs(table: &CountTable) -> Result<NormalizedProbs, TomographyError> {
    normalize(table, true)
}

/// Like [`normalized_probs`], but an empty pair becomes (½, ½) and is counted.
pub(crate) fn normalized_probs_lenient(table: &CountTable) -> NormalizedProbs {
    normalize(table, false).expect("lenient normalization cannot fail")
}

fn normalize(table: &CountTable, strict: bool) -> Result<NormalizedProbs, TomographyError> {
    let mut out = NormalizedProbs {
        probs: [[0.0; 6]; 6],
        intensity: [0.0; 6],
        degenerate_pairs: 0,
    };
    for prep in Label::ALL {
        let m = prep.index();
        let mut total = 0.0;
        for (a, b, name) in PAIRS {
            let na = (table.mean(prep, a) - table.background).max(0.0);
            let nb = (table.mean(prep, b) - table.background).max(0.0);
            let sum = na + nb;
            let (pa, pb) = if sum > 0.0 {
                (na / sum, nb / sum)
            } else if strict {
                return Err(PolarizationError::DegeneratePair(name).into());
            } else {
                out.degenerate_pairs += 1;
                (0.5, 0.5)
            };
            out.probs[m][a.index()] = pa;
            out.probs[m][b.index()] = pb;
            total += sum;
        }
        out.intensity[m] = total / 3.0;
    }
    Ok(out)
}
