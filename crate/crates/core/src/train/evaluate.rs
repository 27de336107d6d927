use std::path::Path;

use rayon::prelude::*;

use crate::data::{read_wav, ManifestEntry};
use crate::error::Result;
use crate::metrics::{si_sdr, stoi, FileMetrics, MetricReport};
use crate::model::{enhance, ModelParams};
use crate::transforms::SAMPLE_RATE;

/// Anything that maps a noisy signal to an enhanced one of the same length.
pub trait Enhance: Sync {
    fn enhance(&self, noisy: &[f64]) -> Result<Vec<f64>>;
}

impl Enhance for ModelParams {
    fn enhance(&self, noisy: &[f64]) -> Result<Vec<f64>> {
        enhance(self, noisy)
    }
}

/// Returns its input unchanged; evaluates the unprocessed mixtures.
#[derive(Debug, Clone, Copy, Default)]
pub struct Passthrough;

impl Enhance for Passthrough {
    fn enhance(&self, noisy: &[f64]) -> Result<Vec<f64>> {
        Ok(noisy.to_vec())
    }
}

fn score(estimate: &[f64], reference: &[f64]) -> (f64, f64) {
    (
        si_sdr(estimate, reference).unwrap_or(f64::NAN),
        stoi(estimate, reference, SAMPLE_RATE).unwrap_or(f64::NAN),
    )
}

fn evaluate_entry<E: Enhance + ?Sized>(model: &E, entry: &ManifestEntry) -> Result<FileMetrics> {
    let noisy = read_wav(&entry.mixture)?.into_samples();
    let clean = read_wav(&entry.reference)?.into_samples();
    let n = noisy.len().min(clean.len());
    let enhanced = model.enhance(&noisy[..n])?;
    let (si_sdr_db, stoi) = score(&enhanced, &clean[..n]);
    let (noisy_si_sdr_db, noisy_stoi) = score(&noisy[..n], &clean[..n]);
    let file = entry
        .mixture
        .file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_else(|| entry.mixture.display().to_string());
    Ok(FileMetrics {
        file,
        si_sdr_db,
        stoi,
        noisy_si_sdr_db,
        noisy_stoi,
    })
}

/// Scores `model` on each entry against its reference, alongside the
/// unprocessed mixture. Unreadable entries are listed in
/// [`MetricReport::missing`] and skipped.
pub fn evaluate<E: Enhance + ?Sized>(
    model: &E,
    entries: &[ManifestEntry],
    out_csv: Option<&Path>,
) -> Result<MetricReport> {
    let results: Vec<Result<FileMetrics>> = entries
        .par_iter()
        .map(|e| evaluate_entry(model, e))
        .collect();
    let mut report = MetricReport::default();
    for (entry, result) in entries.iter().zip(results) {
        match result {
            Ok(m) => report.files.push(m),
            Err(e) => {
                log::warn!("skipping {}: {e}", entry.mixture.display());
                report.missing.push(entry.mixture.clone());
            }
        }
    }
    if let Some(path) = out_csv {
        report.write_csv(path)?;
    }
    Ok(report)
}
