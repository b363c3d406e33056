//! Flat `key=value` run configuration shared by every subcommand.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::datamodel::kv;
use crate::error::{Error, Result};

/// Every accepted key with a one-line description. `encoder.*` keys are
/// listed individually.
pub const KEYS: &[(&str, &str)] = &[
    ("seed", "root seed for every random stream (default 0)"),
    ("data.manifest", "training dataset manifest"),
    ("data.eval_manifest", "held-out dataset manifest (default: data.manifest)"),
    ("data.prompt_dir", "directory holding prompts_<taxonomy>.manifest files"),
    ("out.dir", "output directory"),
    ("encoder.layers", "transformer layers (6)"),
    ("encoder.heads", "attention heads (8)"),
    ("encoder.model_width", "token width (512)"),
    ("encoder.ffn_width", "feed-forward hidden width (256)"),
    ("encoder.head_width", "projection head hidden width (256)"),
    ("encoder.output_width", "embedding width D (512)"),
    ("encoder.bands", "spectral bands C (10)"),
    ("encoder.patch", "patch side H = W (1)"),
    ("encoder.ln_eps", "layer-norm epsilon (1e-5)"),
    ("loss.queue_size", "memory queue capacity K (4096)"),
    ("loss.tau_init", "initial temperature (0.07)"),
    ("loss.tau_min", "temperature floor (0.01)"),
    ("augment.strategy", "none | random_tsdrop | tsmixaug | tsmsdrop (none)"),
    ("augment.prob", "augmentation probability p (0.5)"),
    ("augment.rgb_bands", "comma-separated band indices never masked (0,1,2)"),
    ("train.epochs", "epochs (50)"),
    ("train.batch_size", "batch size, at least 2 (64)"),
    ("train.lr", "peak learning rate (1e-4)"),
    ("train.weight_decay", "decoupled weight decay (0.01)"),
    ("train.warmup_epochs", "linear warmup epochs (10)"),
    ("train.clip_norm", "global gradient-norm clip (1.0)"),
    ("train.stop_after", "stop after this many epochs, keeping the schedule (unset)"),
    ("train.resume", "checkpoint directory to resume from (unset)"),
    ("eval.temporal", "monthly | quarterly | annual (monthly)"),
    ("eval.prompt_mode", "class | template | descriptive (class)"),
    ("eval.ensemble", "early | late (early)"),
    ("eval.k", "retrieval cutoff k (1)"),
    ("eval.scenicness_beta", "scenicness softmax sharpness (20)"),
    ("probe.steps", "linear-probe optimizer steps (200)"),
    ("probe.lr", "linear-probe learning rate (0.01)"),
    ("synth.n_classes", "synthetic classes (8)"),
    ("synth.sites_per_class", "synthetic sites per class (64)"),
    ("synth.noise_std", "synthetic noise standard deviation (0.05)"),
    ("synth.test_fraction", "held-out fraction per class (0.25)"),
    ("synth.timesteps", "synthetic timesteps (12)"),
    ("synth.bands", "synthetic bands (10)"),
    ("synth.embed_width", "synthetic embedding width D (512)"),
    ("flops.patch", "patch side for the cost estimate (1)"),
    ("flops.timesteps", "timesteps for the cost estimate (12)"),
];

/// Parsed run configuration. Unknown keys are rejected at construction.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pairs: BTreeMap<String, String>,
    base: PathBuf,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let pairs = kv::parse(text).map_err(Error::Config)?;
        Self::from_pairs(pairs)
    }

    /// Reads a config file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut c = Self::parse(&text)?;
        c.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(c)
    }

    pub fn from_pairs(pairs: BTreeMap<String, String>) -> Result<Self> {
        if let Some(k) = pairs.keys().find(|k| !KEYS.iter().any(|(known, _)| known == k)) {
            return Err(Error::Config(format!("unknown key '{k}'")));
        }
        Ok(Self {
            pairs,
            base: PathBuf::new(),
        })
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        if !KEYS.iter().any(|(k, _)| *k == key) {
            return Err(Error::Config(format!("unknown key '{key}'")));
        }
        self.pairs.insert(key.to_string(), value.into());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.pairs.get(key).map(String::as_str)
    }

    pub fn pairs(&self) -> &BTreeMap<String, String> {
        &self.pairs
    }

    /// Keys with the given prefix (prefix kept).
    pub fn section(&self, prefix: &str) -> BTreeMap<String, String> {
        self.pairs.iter().filter(|(k, _)| k.starts_with(prefix)).map(|(k, v)| (k.clone(), v.clone())).collect()
    }

    pub fn parse_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'"))),
        }
    }

    pub fn parse_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'"))))
            .transpose()
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| Error::Config(format!("missing required key '{key}'")))
    }

    /// Path value resolved against the config file's directory.
    pub fn path(&self, key: &str) -> Result<PathBuf> {
        Ok(self.base.join(self.require(key)?))
    }

    pub fn path_opt(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(|v| self.base.join(v))
    }

    pub fn seed(&self) -> Result<u64> {
        self.parse_or("seed", 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_rejects_unknown() {
        let c = RunConfig::parse("seed = 7\n# comment\ntrain.epochs=3\n").unwrap();
        assert_eq!(c.seed().unwrap(), 7);
        assert_eq!(c.parse_or("train.epochs", 50usize).unwrap(), 3);
        assert_eq!(c.parse_or("train.batch_size", 64usize).unwrap(), 64);
        assert!(matches!(RunConfig::parse("bogus=1"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("seed=x").unwrap().seed(), Err(Error::Config(_))));
        assert!(matches!(c.require("out.dir"), Err(Error::Config(_))));
        assert!(RunConfig::parse("seed=1\nseed=2").is_err());
    }

    #[test]
    fn paths_resolve_against_file() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("run.cfg");
        std::fs::write(&f, "out.dir = out\n").unwrap();
        let c = RunConfig::load(&f).unwrap();
        assert_eq!(c.path("out.dir").unwrap(), dir.path().join("out"));
    }
}
