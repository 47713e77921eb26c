use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::distill::{DistillConfig, TeacherKind};
use crate::error::{Error, Result};
use crate::inference::BeamConfig;
use crate::lstm::TrainConfig;
use crate::probe::ProbeConfig;
use crate::rnng::{Limits, RnngConfig};

const MODULE: &str = "config";

/// `(key, default, description)`; the defaults are the desk-scale settings.
const KEYS: &[(&str, &str, &str)] = &[
    (
        "seed",
        "1",
        "seed for data generation; model seeds are seed, seed+1, ...",
    ),
    ("seeds", "5", "number of model seeds per variant"),
    (
        "jobs",
        "1",
        "worker threads for caching, evaluation and feature extraction",
    ),
    ("data.train", "3000", "training sentences (the full corpus)"),
    ("data.valid", "300", "validation sentences"),
    ("data.pairs", "40", "minimal pairs per construction"),
    ("data.max_depth", "24", "derivations deeper than this are resampled"),
    ("teacher.subset", "0.2", "fraction of the training corpus the RNNG sees"),
    ("lstm.hidden", "32", ""),
    ("lstm.embed", "32", ""),
    ("lstm.layers", "2", ""),
    ("lstm.lr", "0.45", ""),
    ("lstm.decay", "0.9", ""),
    ("lstm.decay_start", "10", ""),
    ("lstm.dropout", "0.2", ""),
    ("lstm.batch", "2", ""),
    ("lstm.epochs", "20", ""),
    ("rnng.hidden", "32", ""),
    ("rnng.embed", "32", ""),
    ("rnng.layers", "2", ""),
    ("rnng.lr", "0.3", ""),
    ("rnng.decay", "0.92", ""),
    ("rnng.decay_start", "30", ""),
    ("rnng.dropout", "0.2", ""),
    ("rnng.batch", "1", ""),
    ("rnng.epochs", "60", ""),
    ("rnng.max_open", "40", ""),
    ("rnng.max_len", "120", ""),
    ("distill.alpha", "0.5", "weight of the distillation term"),
    (
        "distill.lr",
        "0.4",
        "student learning rate; other student settings follow lstm.*",
    ),
    ("distill.decay", "0.9", ""),
    (
        "distill.samples",
        "3000",
        "strings drawn from the RNNG in mc-samples mode",
    ),
    ("eval.word_beam", "10", ""),
    ("eval.action_beam", "100", ""),
    ("eval.fast_track", "1", ""),
    ("probe.train_tokens", "30000", ""),
    ("probe.valid_tokens", "3000", ""),
    ("probe.test_tokens", "3000", ""),
    ("probe.l2", "1e-4", ""),
    ("probe.lr", "1.0", ""),
    ("probe.max_iters", "1500", ""),
];

/// Flat `key = value` experiment settings with every key known in advance.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    values: BTreeMap<String, String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|(k, v, _)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

impl ExperimentConfig {
    /// Defaults overridden by `text`; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::module(MODULE, format!("line {}: expected `key = value`", i + 1)))?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| Error::module(MODULE, format!("line {}: {e}", i + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.to_string();
                Ok(())
            }
            None => Err(Error::module(MODULE, format!("unknown key `{key}`"))),
        }
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values
            .get(key)
            .map(String::as_str)
            .unwrap_or_else(|| panic!("undeclared config key {key}"))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T> {
        let v = self.raw(key);
        v.parse()
            .map_err(|_| Error::module(MODULE, format!("`{key}` has invalid value `{v}`")))
    }

    /// Every key with its resolved value, in a form [`parse`](Self::parse) reads back.
    pub fn snapshot(&self) -> String {
        let mut out = String::new();
        for (k, _, doc) in KEYS {
            if !doc.is_empty() {
                let _ = writeln!(out, "# {doc}");
            }
            let _ = writeln!(out, "{k} = {}", self.values[*k]);
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let subset: f64 = self.get("teacher.subset")?;
        if !(subset > 0.0 && subset <= 1.0) {
            return Err(Error::module(MODULE, "teacher.subset must lie in (0, 1]"));
        }
        if self.get::<usize>("seeds")? == 0
            || self.get::<usize>("data.train")? == 0
            || self.get::<usize>("data.valid")? == 0
        {
            return Err(Error::module(
                MODULE,
                "seeds, data.train and data.valid must be positive",
            ));
        }
        self.lstm(0)?.validate()?;
        self.rnng(0)?.validate()?;
        self.distill(0, TeacherKind::RnngCache)?.validate()?;
        self.beam()?.validate()?;
        Ok(())
    }

    pub fn seed(&self) -> Result<u64> {
        self.get("seed")
    }

    pub fn model_seeds(&self) -> Result<Vec<u64>> {
        let base = self.seed()?;
        Ok((0..self.get::<u64>("seeds")?).map(|i| base + i).collect())
    }

    pub fn jobs(&self) -> Result<usize> {
        Ok(self.get::<usize>("jobs")?.max(1))
    }

    pub fn lstm(&self, seed: u64) -> Result<TrainConfig> {
        Ok(TrainConfig {
            hidden: self.get("lstm.hidden")?,
            embed: self.get("lstm.embed")?,
            layers: self.get("lstm.layers")?,
            lr: self.get("lstm.lr")?,
            decay: self.get("lstm.decay")?,
            decay_start: self.get("lstm.decay_start")?,
            dropout: self.get("lstm.dropout")?,
            batch: self.get("lstm.batch")?,
            epochs: self.get("lstm.epochs")?,
            seed,
        })
    }

    pub fn rnng(&self, seed: u64) -> Result<RnngConfig> {
        Ok(RnngConfig {
            hidden: self.get("rnng.hidden")?,
            embed: self.get("rnng.embed")?,
            layers: self.get("rnng.layers")?,
            lr: self.get("rnng.lr")?,
            decay: self.get("rnng.decay")?,
            decay_start: self.get("rnng.decay_start")?,
            dropout: self.get("rnng.dropout")?,
            batch: self.get("rnng.batch")?,
            epochs: self.get("rnng.epochs")?,
            seed,
            limits: Limits {
                max_open: self.get("rnng.max_open")?,
                max_len: self.get("rnng.max_len")?,
            },
            eos: true,
        })
    }

    pub fn distill(&self, seed: u64, kind: TeacherKind) -> Result<DistillConfig> {
        Ok(DistillConfig {
            alpha: self.get("distill.alpha")?,
            kind,
            student: TrainConfig {
                lr: self.get("distill.lr")?,
                decay: self.get("distill.decay")?,
                ..self.lstm(seed)?
            },
            samples: self.get("distill.samples")?,
        })
    }

    pub fn beam(&self) -> Result<BeamConfig> {
        Ok(BeamConfig {
            word_beam: self.get("eval.word_beam")?,
            action_beam: self.get("eval.action_beam")?,
            fast_track: self.get("eval.fast_track")?,
        })
    }

    pub fn probe(&self) -> Result<ProbeConfig> {
        Ok(ProbeConfig {
            l2: self.get("probe.l2")?,
            lr: self.get("probe.lr")?,
            max_iters: self.get("probe.max_iters")?,
            ..Default::default()
        })
    }
}
