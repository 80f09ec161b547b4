use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profiles::{BackgroundSource, Profile};
use crate::report::CsvTable;
use crate::scalar::Scalar;

use super::tau::{grid_search_tau_per_sample, TauGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepMode {
    Baseline,
    Text,
    Audio,
}

impl SweepMode {
    pub const ALL: [SweepMode; 3] = [SweepMode::Baseline, SweepMode::Text, SweepMode::Audio];

    pub fn as_str(self) -> &'static str {
        match self {
            SweepMode::Baseline => "baseline",
            SweepMode::Text => "text",
            SweepMode::Audio => "audio",
        }
    }
}

/// Everything needed to score one SNR level: test profiles with their
/// per-sample text and audio background profiles.
#[derive(Debug, Clone)]
pub struct SweepCase<T: Scalar = f64> {
    pub snr_db: f64,
    pub profiles: Vec<Profile<T>>,
    pub text_backgrounds: Vec<Profile<T>>,
    pub audio_backgrounds: Vec<Profile<T>>,
    pub truths: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub snr_db: f64,
    pub mode: SweepMode,
    pub accuracy: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn get(&self, snr_db: f64, mode: SweepMode) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.snr_db == snr_db && r.mode == mode)
    }

    /// Long-format plot data: SNR on the x axis, one series per mode.
    pub fn plot_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(["snr_db", "mode", "accuracy", "tau"]);
        for r in &self.rows {
            t.push([
                format!("{}", r.snr_db),
                r.mode.as_str().to_string(),
                format!("{:.6}", r.accuracy),
                format!("{}", r.tau),
            ]);
        }
        t
    }
}

/// Accuracy for every (SNR, mode) cell. Baseline is tau = 0; the adapted
/// modes report the grid-searched best tau.
pub fn snr_sweep<T: Scalar>(cases: &[SweepCase<T>], modes: &[SweepMode], grid: &TauGrid) -> Result<SweepTable> {
    if cases.is_empty() || modes.is_empty() {
        return Err(Error::EmptyInput);
    }
    let cells: Vec<(&SweepCase<T>, SweepMode)> = cases
        .iter()
        .flat_map(|c| modes.iter().map(move |&m| (c, m)))
        .collect();
    let rows = cells
        .par_iter()
        .map(|&(case, mode)| {
            let (backgrounds, source, grid) = match mode {
                SweepMode::Baseline => (&case.audio_backgrounds, BackgroundSource::Audio, TauGrid(vec![0.0])),
                SweepMode::Text => (&case.text_backgrounds, BackgroundSource::Text, grid.clone()),
                SweepMode::Audio => (&case.audio_backgrounds, BackgroundSource::Audio, grid.clone()),
            };
            let refs: Vec<&Profile<T>> = backgrounds.iter().collect();
            let r = grid_search_tau_per_sample(&case.profiles, &refs, &case.truths, &grid, source)?;
            Ok(SweepRow {
                snr_db: case.snr_db,
                mode,
                accuracy: r.best_accuracy,
                tau: r.best_tau,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepTable { rows })
}
