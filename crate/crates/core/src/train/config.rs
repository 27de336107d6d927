use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::TopologySpec;

/// Training hyper-parameters and paths.
///
/// The text form is one `key = value` per line; `#` starts a comment. Keys
/// are the field names. Relative paths are resolved against the config
/// file's directory by [`TrainConfig::from_file`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub topology: String,
    pub batch_size: usize,
    pub lr: f64,
    pub clip_norm: f64,
    pub lr_halve_patience: usize,
    pub early_stop_patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub manifest: PathBuf,
    pub checkpoint_dir: PathBuf,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            topology: "DTLN".into(),
            batch_size: 32,
            lr: 1e-3,
            clip_norm: 3.0,
            lr_halve_patience: 3,
            early_stop_patience: 10,
            max_epochs: 100,
            seed: 0,
            manifest: PathBuf::from("manifest.tsv"),
            checkpoint_dir: PathBuf::from("checkpoints"),
        }
    }
}

impl TrainConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Config {
                line: i + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected 'key = value', found '{line}'")))?;
            let (key, value) = (key.trim(), value.trim());
            fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String>
            where
                T::Err: std::fmt::Display,
            {
                value.parse().map_err(|e| format!("{key} = '{value}': {e}"))
            }
            match key {
                "topology" => cfg.topology = value.to_string(),
                "batch_size" => cfg.batch_size = num(key, value).map_err(err)?,
                "lr" => cfg.lr = num(key, value).map_err(err)?,
                "clip_norm" => cfg.clip_norm = num(key, value).map_err(err)?,
                "lr_halve_patience" => cfg.lr_halve_patience = num(key, value).map_err(err)?,
                "early_stop_patience" => cfg.early_stop_patience = num(key, value).map_err(err)?,
                "max_epochs" => cfg.max_epochs = num(key, value).map_err(err)?,
                "seed" => cfg.seed = num(key, value).map_err(err)?,
                "manifest" => cfg.manifest = PathBuf::from(value),
                "checkpoint_dir" => cfg.checkpoint_dir = PathBuf::from(value),
                other => return Err(err(format!("unknown key '{other}'"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.manifest = base.join(&cfg.manifest);
        cfg.checkpoint_dir = base.join(&cfg.checkpoint_dir);
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        format!(
            "topology = {}\nbatch_size = {}\nlr = {}\nclip_norm = {}\nlr_halve_patience = {}\n\
             early_stop_patience = {}\nmax_epochs = {}\nseed = {}\nmanifest = {}\ncheckpoint_dir = {}\n",
            self.topology,
            self.batch_size,
            self.lr,
            self.clip_norm,
            self.lr_halve_patience,
            self.early_stop_patience,
            self.max_epochs,
            self.seed,
            self.manifest.display(),
            self.checkpoint_dir.display()
        )
    }

    pub fn validate(&self) -> Result<()> {
        TopologySpec::named(&self.topology)?;
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.lr_halve_patience == 0 || self.early_stop_patience == 0 {
            return bad("patience values must be positive");
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad("lr must be positive");
        }
        if !(self.clip_norm.is_finite() && self.clip_norm > 0.0) {
            return bad("clip_norm must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_round_trip() {
        let d = TrainConfig::default();
        assert_eq!((d.batch_size, d.lr, d.clip_norm), (32, 1e-3, 3.0));
        assert_eq!((d.lr_halve_patience, d.early_stop_patience), (3, 10));
        let cfg = TrainConfig {
            topology: "B3".into(),
            lr: 5e-4,
            seed: 9,
            ..d
        };
        assert_eq!(TrainConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let e = TrainConfig::parse("lr = 1e-3\nbatch_size = lots\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 2, .. }));
        assert!(matches!(
            TrainConfig::parse("# c\nfoo = 1"),
            Err(Error::Config { line: 2, .. })
        ));
        assert!(matches!(
            TrainConfig::parse("seed 3"),
            Err(Error::Config { line: 1, .. })
        ));
        assert!(TrainConfig::parse("batch_size = 0").is_err());
        assert!(TrainConfig::parse("early_stop_patience = 0").is_err());
        assert!(matches!(
            TrainConfig::parse("topology = B9"),
            Err(Error::UnknownTopology(_))
        ));
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.cfg");
        fs::write(
            &path,
            "manifest = data/manifest.tsv  # comment\ncheckpoint_dir = /abs/ckpt\n",
        )
        .unwrap();
        let cfg = TrainConfig::from_file(&path).unwrap();
        assert_eq!(cfg.manifest, dir.path().join("data/manifest.tsv"));
        assert_eq!(cfg.checkpoint_dir, PathBuf::from("/abs/ckpt"));
    }
}
