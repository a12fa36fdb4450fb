//! Flat `key = value` run configuration.
//!
//! Resolution order: built-in defaults, then the `--config` file, then
//! `--set` pairs and dedicated flags, each layer overriding the previous.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use s2s_core::model::{Combiner, InputMode, ModelConfig};
use s2s_core::nn::BackboneKind;
use s2s_core::train::TrainConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dataset {
    Vt60,
    Confusion,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitKind {
    /// The fixed assignment of the dataset's table.
    Table,
    /// Seeded half split per verb.
    Random,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub data: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub dataset: Dataset,
    pub split: SplitKind,
    pub image_size: usize,
    pub samples_per_pair: usize,
    /// `fixture` or a path to a word-vector text file.
    pub words: String,
    pub word_dim: usize,
    pub mode: InputMode,
    pub backbone: BackboneKind,
    pub input_size: usize,
    pub d_v: usize,
    pub q_hidden: Option<usize>,
    pub c_hidden: Option<usize>,
    pub combiner: Combiner,
    pub separate_qnets: bool,
    pub lr0: f64,
    pub anneal_factor: f64,
    pub anneal_every: u64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub iterations: u64,
    pub episode_classes: usize,
    pub negatives_per_positive: usize,
    pub log_every: u64,
    pub checkpoint_every: u64,
    pub protocol: String,
    pub side: String,
    pub features: String,
    pub color_by: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        RunConfig {
            seed: 0,
            out: None,
            data: PathBuf::from("data"),
            checkpoint: None,
            dataset: Dataset::Vt60,
            split: SplitKind::Table,
            image_size: 64,
            samples_per_pair: 10,
            words: "fixture".into(),
            word_dim: 64,
            mode: InputMode::S2s,
            backbone: BackboneKind::Tiny,
            input_size: 64,
            d_v: 64,
            q_hidden: None,
            c_hidden: None,
            combiner: Combiner::Sum,
            separate_qnets: false,
            lr0: t.lr0,
            anneal_factor: t.anneal_factor,
            anneal_every: t.anneal_every,
            weight_decay: t.weight_decay,
            batch_size: t.batch_size,
            iterations: t.iterations,
            episode_classes: t.episode_classes,
            negatives_per_positive: t.negatives_per_positive,
            log_every: t.log_every,
            checkpoint_every: 0,
            protocol: "verb_transfer".into(),
            side: "test".into(),
            features: "vnet".into(),
            color_by: "verb".into(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("invalid value `{value}` for `{key}`"))
}

fn parse_with<T, E: std::fmt::Display>(
    value: &str,
    f: impl FnOnce(&str) -> Result<T, E>,
) -> Result<T, String> {
    f(value).map_err(|e| e.to_string())
}

fn optional(value: &str) -> Option<&str> {
    if value.is_empty() || value == "auto" {
        None
    } else {
        Some(value)
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let v = value.trim();
        match key.trim() {
            "seed" => self.seed = parse(key, v)?,
            "out" => self.out = optional(v).map(PathBuf::from),
            "data" => self.data = PathBuf::from(v),
            "checkpoint" => self.checkpoint = optional(v).map(PathBuf::from),
            "dataset" => {
                self.dataset = match v {
                    "vt60" => Dataset::Vt60,
                    "confusion" => Dataset::Confusion,
                    _ => return Err(format!("unknown dataset `{v}` (vt60, confusion)")),
                }
            }
            "split" => {
                self.split = match v {
                    "table" => SplitKind::Table,
                    "random" => SplitKind::Random,
                    _ => return Err(format!("unknown split `{v}` (table, random)")),
                }
            }
            "image_size" => self.image_size = parse(key, v)?,
            "samples_per_pair" => self.samples_per_pair = parse(key, v)?,
            "words" => self.words = v.to_string(),
            "word_dim" => self.word_dim = parse(key, v)?,
            "mode" => self.mode = parse_with(v, InputMode::from_str)?,
            "backbone" => self.backbone = parse_with(v, BackboneKind::from_str)?,
            "input_size" => self.input_size = parse(key, v)?,
            "d_v" => self.d_v = parse(key, v)?,
            "q_hidden" => self.q_hidden = optional(v).map(|x| parse(key, x)).transpose()?,
            "c_hidden" => self.c_hidden = optional(v).map(|x| parse(key, x)).transpose()?,
            "combiner" => self.combiner = parse_with(v, Combiner::from_str)?,
            "separate_qnets" => self.separate_qnets = parse(key, v)?,
            "lr0" => self.lr0 = parse(key, v)?,
            "anneal_factor" => self.anneal_factor = parse(key, v)?,
            "anneal_every" => self.anneal_every = parse(key, v)?,
            "weight_decay" => self.weight_decay = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "iterations" => self.iterations = parse(key, v)?,
            "episode_classes" => self.episode_classes = parse(key, v)?,
            "negatives_per_positive" => self.negatives_per_positive = parse(key, v)?,
            "log_every" => self.log_every = parse(key, v)?,
            "checkpoint_every" => self.checkpoint_every = parse(key, v)?,
            "protocol" => match v {
                "verb_transfer" | "vo_confusion" => self.protocol = v.to_string(),
                _ => {
                    return Err(format!(
                        "unknown protocol `{v}` (verb_transfer, vo_confusion)"
                    ))
                }
            },
            "side" => match v {
                "train" | "test" => self.side = v.to_string(),
                _ => return Err(format!("unknown side `{v}` (train, test)")),
            },
            "features" => self.features = v.to_string(),
            "color_by" => self.color_by = v.to_string(),
            other => return Err(format!("unknown config key `{other}`")),
        }
        Ok(())
    }

    /// Apply a `key = value` file; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), String> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected `key = value`", n + 1))?;
            self.set(k, v).map_err(|e| format!("line {}: {e}", n + 1))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        self.apply_text(&text)
    }

    /// Every key with its resolved value, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let opt = |p: &Option<PathBuf>| {
            p.as_ref()
                .map_or(String::new(), |p| p.display().to_string())
        };
        let auto = |v: Option<usize>| v.map_or("auto".to_string(), |v| v.to_string());
        vec![
            ("seed", self.seed.to_string()),
            ("out", opt(&self.out)),
            ("data", self.data.display().to_string()),
            ("checkpoint", opt(&self.checkpoint)),
            (
                "dataset",
                match self.dataset {
                    Dataset::Vt60 => "vt60",
                    Dataset::Confusion => "confusion",
                }
                .into(),
            ),
            (
                "split",
                match self.split {
                    SplitKind::Table => "table",
                    SplitKind::Random => "random",
                }
                .into(),
            ),
            ("image_size", self.image_size.to_string()),
            ("samples_per_pair", self.samples_per_pair.to_string()),
            ("words", self.words.clone()),
            ("word_dim", self.word_dim.to_string()),
            ("mode", self.mode.as_str().into()),
            ("backbone", format!("{:?}", self.backbone).to_lowercase()),
            ("input_size", self.input_size.to_string()),
            ("d_v", self.d_v.to_string()),
            ("q_hidden", auto(self.q_hidden)),
            ("c_hidden", auto(self.c_hidden)),
            ("combiner", self.combiner.as_str().into()),
            ("separate_qnets", self.separate_qnets.to_string()),
            ("lr0", format!("{:e}", self.lr0)),
            ("anneal_factor", self.anneal_factor.to_string()),
            ("anneal_every", self.anneal_every.to_string()),
            ("weight_decay", format!("{:e}", self.weight_decay)),
            ("batch_size", self.batch_size.to_string()),
            ("iterations", self.iterations.to_string()),
            ("episode_classes", self.episode_classes.to_string()),
            (
                "negatives_per_positive",
                self.negatives_per_positive.to_string(),
            ),
            ("log_every", self.log_every.to_string()),
            ("checkpoint_every", self.checkpoint_every.to_string()),
            ("protocol", self.protocol.clone()),
            ("side", self.side.clone()),
            ("features", self.features.clone()),
            ("color_by", self.color_by.clone()),
        ]
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn model_config(&self, word_dim: usize) -> ModelConfig {
        let base = match self.backbone {
            BackboneKind::Tiny => ModelConfig::tiny(self.mode, word_dim, self.input_size, self.d_v),
            kind => ModelConfig::residual(kind, self.mode, word_dim, self.input_size),
        };
        ModelConfig {
            q_hidden: self.q_hidden.unwrap_or(base.q_hidden),
            c_hidden: self.c_hidden.unwrap_or(base.c_hidden),
            combiner: self.combiner,
            separate_qnets: self.separate_qnets,
            seed: self.seed,
            ..base
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr0: self.lr0,
            anneal_factor: self.anneal_factor,
            anneal_every: self.anneal_every,
            weight_decay: self.weight_decay,
            batch_size: self.batch_size,
            iterations: self.iterations,
            seed: self.seed,
            episode_classes: self.episode_classes,
            negatives_per_positive: self.negatives_per_positive,
            log_every: self.log_every,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut c = RunConfig::default();
        c.apply_text(
            "# comment\nmode = rgb\ncombiner = catV  # inline\nq_hidden = 32\nout = runs/a\n",
        )
        .unwrap();
        assert_eq!(
            (c.mode, c.combiner, c.q_hidden),
            (InputMode::Rgb, Combiner::CatV, Some(32))
        );
        let mut d = RunConfig::default();
        d.apply_text(&c.to_text()).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn bad_keys_and_values() {
        let mut c = RunConfig::default();
        assert!(c.set("nope", "1").is_err());
        assert!(c.set("seed", "x").is_err());
        assert!(c.apply_text("seed 3").is_err());
        assert!(c.set("mode", "depth").is_err());
    }
}
