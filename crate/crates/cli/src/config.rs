//! Flat `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Every key must be
//! known to the command reading the file and may appear at most once.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use shgt_core::{GeneratorConfig, Preset, TrainConfig};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlatConfig {
    entries: BTreeMap<String, (usize, String)>,
}

impl FlatConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!("config line {}: expected `key = value`", n + 1))
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(CliError::Usage(format!("config line {}: empty key", n + 1)));
            }
            if let Some((first, _)) = entries.get(key) {
                return Err(CliError::Usage(format!(
                    "config line {}: key `{key}` already set on line {first}",
                    n + 1
                )));
            }
            entries.insert(key.to_string(), (n + 1, value.trim().to_string()));
        }
        Ok(FlatConfig { entries })
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    fn reject_unknown(&self, known: &[&str]) -> CliResult<()> {
        for (key, (line, _)) in &self.entries {
            if !known.contains(&key.as_str()) {
                return Err(CliError::Usage(format!(
                    "config line {line}: unknown key `{key}` (known keys: {})",
                    known.join(", ")
                )));
            }
        }
        Ok(())
    }

    fn typed<T>(&self, key: &str) -> CliResult<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        let Some((line, value)) = self.entries.get(key) else {
            return Ok(None);
        };
        value.parse().map(Some).map_err(|e| {
            CliError::Usage(format!(
                "config line {line}: bad value {value:?} for `{key}`: {e}"
            ))
        })
    }
}

/// Parses `10,20` style lists.
pub fn parse_list<T>(text: &str) -> Result<Vec<T>, String>
where
    T: FromStr,
    T::Err: Display,
{
    text.split(',')
        .map(|s| s.trim().parse::<T>().map_err(|e| format!("{s:?}: {e}")))
        .collect()
}

/// Everything a training run needs beyond the model itself.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSettings {
    pub train: TrainConfig,
    /// Seed of the patient-level 7:1:2 split, independent of the model seed.
    pub split_seed: u64,
}

pub const TRAIN_KEYS: &[&str] = &[
    "preset",
    "lr",
    "dropout",
    "dim",
    "layers",
    "alpha",
    "epochs",
    "patience",
    "seed",
    "variant",
    "threshold",
    "ks",
    "recall_denominator",
    "split_seed",
];

impl RunSettings {
    /// Applies a config file on top of `self`. A `preset` key is applied
    /// first so explicit keys in the same file override it.
    pub fn apply(&mut self, flat: &FlatConfig) -> CliResult<()> {
        flat.reject_unknown(TRAIN_KEYS)?;
        if let Some(preset) = flat.typed::<Preset>("preset")? {
            self.apply_preset(preset);
        }
        let t = &mut self.train;
        macro_rules! set {
            ($($key:literal => $field:expr),* $(,)?) => {
                $(if let Some(v) = flat.typed($key)? { $field = v; })*
            };
        }
        set! {
            "lr" => t.lr,
            "dropout" => t.dropout,
            "dim" => t.dim,
            "layers" => t.layers,
            "alpha" => t.alpha,
            "epochs" => t.epochs,
            "patience" => t.patience,
            "seed" => t.seed,
            "variant" => t.variant,
            "threshold" => t.threshold,
            "recall_denominator" => t.recall_denominator,
            "split_seed" => self.split_seed,
        }
        if let Some(ks) = flat.get("ks") {
            self.train.ks =
                parse_list(ks).map_err(|e| CliError::Usage(format!("bad `ks`: {e}")))?;
        }
        Ok(())
    }

    pub fn apply_preset(&mut self, preset: Preset) {
        let p = TrainConfig::preset(preset);
        self.train.layers = p.layers;
        self.train.alpha = p.alpha;
    }

    pub fn validate(&self) -> CliResult<()> {
        self.train.validate().map_err(CliError::from)
    }

    /// Canonical `key = value` rendering; parsing it back yields `self`.
    pub fn render(&self) -> String {
        let t = &self.train;
        let ks: Vec<String> = t.ks.iter().map(usize::to_string).collect();
        [
            ("lr", t.lr.to_string()),
            ("dropout", t.dropout.to_string()),
            ("dim", t.dim.to_string()),
            ("layers", t.layers.to_string()),
            ("alpha", t.alpha.to_string()),
            ("epochs", t.epochs.to_string()),
            ("patience", t.patience.to_string()),
            ("seed", t.seed.to_string()),
            ("variant", t.variant.to_string()),
            ("threshold", t.threshold.to_string()),
            ("ks", ks.join(",")),
            ("recall_denominator", t.recall_denominator.to_string()),
            ("split_seed", self.split_seed.to_string()),
        ]
        .iter()
        .map(|(k, v)| format!("{k} = {v}\n"))
        .collect()
    }
}

pub const GENERATOR_KEYS: &[&str] = &[
    "patients",
    "diagnoses",
    "medications",
    "procedures",
    "clusters",
    "min_visits",
    "max_visits",
    "min_codes",
    "max_codes",
    "noise",
];

pub fn generator_config(flat: &FlatConfig) -> CliResult<GeneratorConfig> {
    flat.reject_unknown(GENERATOR_KEYS)?;
    let mut g = GeneratorConfig::default();
    macro_rules! set {
        ($($key:literal => $field:expr),* $(,)?) => {
            $(if let Some(v) = flat.typed($key)? { $field = v; })*
        };
    }
    set! {
        "patients" => g.patients,
        "diagnoses" => g.diagnoses,
        "medications" => g.medications,
        "procedures" => g.procedures,
        "clusters" => g.clusters,
        "min_visits" => g.min_visits,
        "max_visits" => g.max_visits,
        "min_codes" => g.min_codes,
        "max_codes" => g.max_codes,
        "noise" => g.noise,
    }
    Ok(g)
}
