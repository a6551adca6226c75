//! TOML run configuration.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use nilm::data::SyntheticConfig;
use nilm::eval::DEFAULT_THRESHOLD;
use nilm::training::TrainConfig;
use nilm::ModelConfig;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApplianceChannel {
    pub name: String,
    /// REFIT column, `Appliance1` through `Appliance9`.
    pub column: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// REFIT-layout CSV. Relative paths resolve against the config file.
    pub csv: Option<PathBuf>,
    pub window: usize,
    pub train_stride: usize,
    /// Defaults to `window` (non-overlapping).
    pub inference_stride: Option<usize>,
    pub train_fraction: f64,
    /// First kept row to use; selects the region of a long recording.
    pub start_row: usize,
    /// Number of kept rows to use from `start_row`; all when absent.
    pub max_rows: Option<usize>,
    pub appliances: Vec<ApplianceChannel>,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            csv: None,
            window: 100,
            train_stride: 1,
            inference_stride: None,
            train_fraction: 0.7,
            start_row: 0,
            max_rows: None,
            appliances: Vec::new(),
        }
    }
}

impl DataSection {
    pub fn inference_stride(&self) -> usize {
        self.inference_stride.unwrap_or(self.window)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub out_dir: Option<PathBuf>,
    /// Overrides the model, training and synthetic seeds when set.
    pub seed: Option<u64>,
    pub data: DataSection,
    /// `window_len` and `output_units` are taken from `data.window`.
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub synth: Option<SyntheticConfig>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(csv) = cfg.data.csv.take() {
            cfg.data.csv = Some(if csv.is_relative() { base.join(csv) } else { csv });
        }
        if let Some(out) = cfg.out_dir.take() {
            cfg.out_dir = Some(if out.is_relative() { base.join(out) } else { out });
        }
        Ok(cfg)
    }

    /// Applies command-line overrides and fills derived fields.
    pub fn finish(mut self, seed: Option<u64>, out: Option<PathBuf>) -> Result<Self> {
        if let Some(s) = seed.or(self.seed) {
            self.seed = Some(s);
            self.model.seed = s;
            self.train.seed = s;
            if let Some(synth) = self.synth.as_mut() {
                synth.seed = s;
            }
        }
        if out.is_some() {
            self.out_dir = out;
        }
        self.model.window_len = self.data.window;
        self.model.output_units = self.data.window;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        if d.window == 0 || d.train_stride == 0 || d.inference_stride() == 0 {
            bail!("data.window, data.train_stride and data.inference_stride must be positive");
        }
        if d.inference_stride() > d.window {
            bail!("data.inference_stride ({}) may not exceed data.window ({})", d.inference_stride(), d.window);
        }
        if !(d.train_fraction > 0.0 && d.train_fraction < 1.0) {
            bail!("data.train_fraction must be in (0, 1), got {}", d.train_fraction);
        }
        let mut seen = std::collections::BTreeSet::new();
        for a in &d.appliances {
            if a.name.is_empty() || a.name.contains(['/', '\\']) || a.name.starts_with('.') {
                bail!("appliance name {:?} is not usable as a directory name", a.name);
            }
            if !seen.insert(&a.name) {
                bail!("appliance {:?} listed twice", a.name);
            }
            if !(1..=9).contains(&a.column) {
                bail!("appliance {:?}: column must be 1..=9, got {}", a.name, a.column);
            }
            if !(a.threshold >= 0.0) {
                bail!("appliance {:?}: threshold must be >= 0", a.name);
            }
        }
        self.model.validate()?;
        self.train.validate()?;
        if let Some(s) = &self.synth {
            s.validate()?;
            if s.appliances.len() > 9 {
                bail!("synth: at most 9 appliances fit the REFIT layout");
            }
        }
        Ok(())
    }

    pub fn out_dir(&self) -> Result<&Path> {
        self.out_dir.as_deref().context("no output directory: pass --out or set out_dir")
    }

    pub fn appliances(&self, only: Option<&str>) -> Result<Vec<&ApplianceChannel>> {
        if self.data.appliances.is_empty() {
            bail!("no [[data.appliances]] configured");
        }
        match only {
            None => Ok(self.data.appliances.iter().collect()),
            Some(name) => match self.data.appliances.iter().find(|a| a.name == name) {
                Some(a) => Ok(vec![a]),
                None => bail!("appliance {name:?} is not in the config"),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_keeps_documented_defaults() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        let cfg = cfg.finish(None, None).unwrap();
        assert_eq!(cfg.data.window, 100);
        assert_eq!(cfg.data.train_fraction, 0.7);
        assert_eq!(cfg.data.inference_stride(), 100);
        assert_eq!(cfg.model.pool_size, 3);
        assert_eq!(cfg.model.conv_filters, 48);
        assert_eq!(cfg.train.epochs, 500);
    }

    #[test]
    fn seed_override_reaches_every_section() {
        let cfg: RunConfig = toml::from_str("seed = 4\n[synth]\nduration_samples = 10\n").unwrap();
        let cfg = cfg.finish(Some(9), None).unwrap();
        assert_eq!((cfg.model.seed, cfg.train.seed, cfg.synth.unwrap().seed), (9, 9, 9));
    }

    #[test]
    fn rejects_bad_values() {
        let bad = [
            "[data]\ntrain_fraction = 1.0\n",
            "[data]\n[[data.appliances]]\nname = \"k\"\ncolumn = 12\n",
            "[model]\nbogus = 1\n",
            "[train]\nepochs = 0\n",
        ];
        for text in bad {
            let parsed: Result<RunConfig> = toml::from_str(text).map_err(Into::into);
            assert!(parsed.and_then(|c| c.finish(None, None)).is_err(), "{text}");
        }
    }
}
