use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Metrics of one enhanced file and of its unprocessed mixture. A metric
/// that could not be computed (e.g. too little non-silent audio for STOI)
/// is NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct FileMetrics {
    pub file: String,
    pub si_sdr_db: f64,
    pub stoi: f64,
    pub noisy_si_sdr_db: f64,
    pub noisy_stoi: f64,
}

/// Per-file results plus the files that could not be read.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricReport {
    pub files: Vec<FileMetrics>,
    pub missing: Vec<PathBuf>,
}

fn finite_mean(values: impl Iterator<Item = f64>) -> (f64, usize) {
    let (sum, n) = values
        .filter(|v| v.is_finite())
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (if n == 0 { f64::NAN } else { sum / n as f64 }, n)
}

impl MetricReport {
    pub fn count(&self) -> usize {
        self.files.len()
    }

    /// Arithmetic mean of the finite values of one column, and how many
    /// values entered it.
    pub fn mean_of(&self, column: impl Fn(&FileMetrics) -> f64) -> (f64, usize) {
        finite_mean(self.files.iter().map(column))
    }

    pub fn mean_si_sdr(&self) -> f64 {
        self.mean_of(|f| f.si_sdr_db).0
    }

    pub fn mean_stoi(&self) -> f64 {
        self.mean_of(|f| f.stoi).0
    }

    pub fn mean_noisy_si_sdr(&self) -> f64 {
        self.mean_of(|f| f.noisy_si_sdr_db).0
    }

    pub fn mean_noisy_stoi(&self) -> f64 {
        self.mean_of(|f| f.noisy_stoi).0
    }

    /// `file,si_sdr_db,stoi,noisy_si_sdr_db,noisy_stoi`, one row per file,
    /// then a `mean` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("file,si_sdr_db,stoi,noisy_si_sdr_db,noisy_stoi\n");
        for f in &self.files {
            let _ = writeln!(
                out,
                "{},{:.6},{:.6},{:.6},{:.6}",
                f.file, f.si_sdr_db, f.stoi, f.noisy_si_sdr_db, f.noisy_stoi
            );
        }
        let _ = writeln!(
            out,
            "mean,{:.6},{:.6},{:.6},{:.6}",
            self.mean_si_sdr(),
            self.mean_stoi(),
            self.mean_noisy_si_sdr(),
            self.mean_noisy_stoi()
        );
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}
