use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::mix::mix_at_offset;
use super::wav::{read_wav, write_wav};
use crate::error::{Error, Result};
use crate::transforms::{AudioBuffer, SAMPLE_RATE};

pub const SEGMENT_SECONDS: usize = 15;
pub const SNR_LEVELS: usize = 30;
pub const SNR_MIN_DB: f64 = -5.0;
pub const SNR_MAX_DB: f64 = 25.0;
const TRAIN_FRACTION: f64 = 0.8;

/// `SNR_LEVELS` evenly spaced values from `SNR_MIN_DB` to `SNR_MAX_DB`
/// inclusive.
pub fn snr_grid() -> Vec<f64> {
    let step = (SNR_MAX_DB - SNR_MIN_DB) / (SNR_LEVELS - 1) as f64;
    (0..SNR_LEVELS)
        .map(|i| SNR_MIN_DB + step * i as f64)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            other => Err(format!("unknown split '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub split: Split,
    pub mixture: PathBuf,
    pub reference: PathBuf,
    pub snr_db: f64,
}

/// Mixture/reference pairs with their split tags. Relative paths in a
/// manifest file are resolved against the file's directory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn count(&self, split: Split) -> usize {
        self.split(split).count()
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let bad = |line: usize, message: String| Error::Manifest {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(bad(
                    i + 1,
                    format!("expected 4 tab-separated fields, found {}", fields.len()),
                ));
            }
            let split = fields[0].parse().map_err(|m| bad(i + 1, m))?;
            let snr_db = fields[3]
                .trim()
                .parse::<f64>()
                .map_err(|e| bad(i + 1, format!("snr '{}': {e}", fields[3])))?;
            entries.push(ManifestEntry {
                split,
                mixture: base.join(fields[1]),
                reference: base.join(fields[2]),
                snr_db,
            });
        }
        Ok(Self { entries })
    }

    /// Writes the manifest; paths under the manifest's directory are stored
    /// relative to it.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new(""));
        let rel = |p: &Path| p.strip_prefix(base).unwrap_or(p).display().to_string();
        let mut text = String::new();
        for e in &self.entries {
            text.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                e.split,
                rel(&e.mixture),
                rel(&e.reference),
                e.snr_db
            ));
        }
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Random choices for one generated pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairPlan {
    pub snr_db: f64,
    pub speech_offset: usize,
    pub noise_offset: usize,
}

fn pair_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // stream 0 is reserved for the split permutation
    rng.set_stream(index as u64 + 1);
    rng
}

/// Draws the SNR level and source offsets of pair `index`. Depends only on
/// `(seed, index)` and the pool lengths.
pub fn plan_pair(
    seed: u64,
    index: usize,
    speech_len: usize,
    noise_len: usize,
    segment: usize,
) -> PairPlan {
    let mut rng = pair_rng(seed, index);
    let grid = snr_grid();
    let snr_db = grid[rng.random_range(0..grid.len())];
    let speech_offset = rng.random_range(0..=speech_len - segment);
    let noise_offset = rng.random_range(0..=noise_len - segment);
    PairPlan {
        snr_db,
        speech_offset,
        noise_offset,
    }
}

/// Seeded 80:20 split of `n` entries.
pub fn split_indices(n: usize, seed: u64) -> Vec<Split> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n_train = (n as f64 * TRAIN_FRACTION).round() as usize;
    let mut splits = vec![Split::Val; n];
    for &i in &order[..n_train] {
        splits[i] = Split::Train;
    }
    splits
}

fn wav_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();
    Ok(files)
}

fn load_pool(dir: &Path, what: &str) -> Result<Vec<f64>> {
    let files = wav_files(dir)?;
    if files.is_empty() {
        return Err(Error::InsufficientMaterial(format!(
            "no WAV files in {what} directory {}",
            dir.display()
        )));
    }
    let mut pool = Vec::new();
    for f in files {
        pool.extend(read_wav(&f)?.into_samples());
    }
    Ok(pool)
}

/// Generates `round(hours * 3600 / 15)` fifteen-second mixture/reference
/// pairs under `out_dir/noisy` and `out_dir/clean`, and writes
/// `out_dir/manifest.tsv`.
///
/// All speech files are concatenated into one pool and all noise files into
/// another; each pair takes a segment of each at seeded offsets and an SNR
/// drawn uniformly from [`snr_grid`]. Both pools must hold at least one
/// segment.
pub fn build_dataset(
    speech_dir: impl AsRef<Path>,
    noise_dir: impl AsRef<Path>,
    hours: f64,
    out_dir: impl AsRef<Path>,
    seed: u64,
) -> Result<DatasetManifest> {
    let out_dir = out_dir.as_ref();
    if !(hours.is_finite() && hours > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "hours must be positive, got {hours}"
        )));
    }
    let n = (hours * 3600.0 / SEGMENT_SECONDS as f64).round() as usize;
    if n == 0 {
        return Err(Error::InvalidArgument(format!(
            "{hours} h is less than one {SEGMENT_SECONDS} s pair"
        )));
    }
    let speech = load_pool(speech_dir.as_ref(), "speech")?;
    let noise = load_pool(noise_dir.as_ref(), "noise")?;
    let segment = SEGMENT_SECONDS * SAMPLE_RATE as usize;
    let mut short = Vec::new();
    for (what, pool) in [("speech", &speech), ("noise", &noise)] {
        if pool.len() < segment {
            short.push(format!(
                "{what}: {:.2} s available, {SEGMENT_SECONDS} s needed (short by {:.2} s)",
                pool.len() as f64 / SAMPLE_RATE as f64,
                (segment - pool.len()) as f64 / SAMPLE_RATE as f64
            ));
        }
    }
    if !short.is_empty() {
        return Err(Error::InsufficientMaterial(short.join("; ")));
    }

    for sub in ["noisy", "clean"] {
        let d = out_dir.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let noise_buf = AudioBuffer::from_samples(noise)?;
    let splits = split_indices(n, seed);
    let entries = (0..n)
        .into_par_iter()
        .map(|i| -> Result<ManifestEntry> {
            let plan = plan_pair(seed, i, speech.len(), noise_buf.len(), segment);
            let clip = AudioBuffer::from_samples(
                speech[plan.speech_offset..plan.speech_offset + segment].to_vec(),
            )?;
            let m = mix_at_offset(&clip, &noise_buf, plan.snr_db, plan.noise_offset)?;
            let mixture = out_dir.join("noisy").join(format!("{i:05}.wav"));
            let reference = out_dir.join("clean").join(format!("{i:05}.wav"));
            write_wav(&mixture, &m.mixture)?;
            write_wav(&reference, &m.reference)?;
            Ok(ManifestEntry {
                split: splits[i],
                mixture,
                reference,
                snr_db: plan.snr_db,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = DatasetManifest { entries };
    manifest.write(out_dir.join("manifest.tsv"))?;
    log::info!(
        "wrote {} pairs ({} train, {} val) to {}",
        n,
        manifest.count(Split::Train),
        manifest.count(Split::Val),
        out_dir.display()
    );
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_has_thirty_even_levels() {
        let g = snr_grid();
        assert_eq!(g.len(), 30);
        assert_eq!(g[0], -5.0);
        assert!((g[29] - 25.0).abs() < 1e-12);
        for w in g.windows(2) {
            assert!((w[1] - w[0] - 30.0 / 29.0).abs() < 1e-12);
        }
    }

    #[test]
    fn split_ratio() {
        for n in [1, 5, 12, 120, 1001] {
            let s = split_indices(n, 9);
            let train = s.iter().filter(|&&x| x == Split::Train).count();
            assert!((train as f64 - 0.8 * n as f64).abs() <= 1.0, "{n}: {train}");
        }
        let s = split_indices(120, 1);
        assert_eq!(s.iter().filter(|&&x| x == Split::Train).count(), 96);
        assert_eq!(s, split_indices(120, 1));
        assert_ne!(s, split_indices(120, 2));
    }

    #[test]
    fn snr_histogram_covers_grid() {
        let grid = snr_grid();
        let mut counts = [0usize; SNR_LEVELS];
        for i in 0..3000 {
            let p = plan_pair(42, i, 1_000_000, 1_000_000, 240_000);
            let level = grid.iter().position(|&g| g == p.snr_db).unwrap();
            counts[level] += 1;
        }
        for c in counts {
            assert!((60..=140).contains(&c), "{counts:?}");
        }
    }

    #[test]
    fn plans_are_independent_of_order() {
        let a: Vec<PairPlan> = (0..10)
            .map(|i| plan_pair(3, i, 500_000, 400_000, 240_000))
            .collect();
        let b: Vec<PairPlan> = (0..10)
            .rev()
            .map(|i| plan_pair(3, i, 500_000, 400_000, 240_000))
            .collect();
        assert!(a.iter().eq(b.iter().rev()));
        for p in a {
            assert!(p.speech_offset <= 260_000 && p.noise_offset <= 160_000);
        }
    }

    #[test]
    fn manifest_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let m = DatasetManifest {
            entries: vec![
                ManifestEntry {
                    split: Split::Train,
                    mixture: dir.path().join("noisy/0.wav"),
                    reference: dir.path().join("clean/0.wav"),
                    snr_db: -5.0,
                },
                ManifestEntry {
                    split: Split::Val,
                    mixture: PathBuf::from("/abs/n.wav"),
                    reference: PathBuf::from("/abs/c.wav"),
                    snr_db: 1.0344827586206897,
                },
            ],
        };
        let path = dir.path().join("manifest.tsv");
        m.write(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("train\tnoisy/0.wav\tclean/0.wav\t-5\n"));
        assert_eq!(DatasetManifest::read(&path).unwrap(), m);

        fs::write(&path, "train\ta.wav\tb.wav\n").unwrap();
        assert!(matches!(
            DatasetManifest::read(&path),
            Err(Error::Manifest { line: 1, .. })
        ));
        fs::write(&path, "# comment\n\ntest\ta\tb\t0\n").unwrap();
        assert!(matches!(
            DatasetManifest::read(&path),
            Err(Error::Manifest { line: 3, .. })
        ));
    }

    #[test]
    fn insufficient_material_names_shortfall() {
        let dir = tempfile::tempdir().unwrap();
        let speech = dir.path().join("speech");
        let noise = dir.path().join("noise");
        fs::create_dir_all(&speech).unwrap();
        fs::create_dir_all(&noise).unwrap();
        let tone = AudioBuffer::from_samples(vec![0.1; 16_000 * 5]).unwrap();
        write_wav(speech.join("a.wav"), &tone).unwrap();
        write_wav(
            noise.join("a.wav"),
            &AudioBuffer::from_samples(vec![0.1; 16_000 * 20]).unwrap(),
        )
        .unwrap();
        let err = build_dataset(&speech, &noise, 0.01, dir.path().join("out"), 0).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::InsufficientMaterial(_)));
        assert!(
            msg.contains("speech") && msg.contains("short by 10.00 s"),
            "{msg}"
        );
        assert!(!msg.contains("noise:"));

        let empty = dir.path().join("empty");
        fs::create_dir_all(&empty).unwrap();
        assert!(matches!(
            build_dataset(&empty, &noise, 0.01, dir.path().join("out"), 0),
            Err(Error::InsufficientMaterial(_))
        ));
    }
}
