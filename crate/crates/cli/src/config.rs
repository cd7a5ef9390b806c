//! Flat run configuration: the same keys come from a JSON file or from
//! `--kebab-case` flags, flags winning, both layered over a preset.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use clap::{Args, ValueEnum};
use evosts::evolution::EvoConfig;
use evosts::rng;
use evosts::signal_io::{SignalConfig, SineComponent};
use evosts::sparse_coding::{CodeInit, StepMode};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

const CODE_INIT_TAG: u64 = 0x636f_6465;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Desk,
    Paper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    /// `.csv` files are CSV, anything else raw 16-bit.
    Auto,
    Csv,
    RawI16,
}

/// Sine components; on the command line `amp:freq:phase,amp:freq:phase`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Components {
    List(Vec<SineComponent>),
    #[serde(with = "components_text")]
    Text(Vec<SineComponent>),
}

impl Components {
    fn into_vec(self) -> Vec<SineComponent> {
        match self {
            Components::List(v) | Components::Text(v) => v,
        }
    }
}

fn parse_components(s: &str) -> std::result::Result<Vec<SineComponent>, String> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|part| {
            let fields: Vec<&str> = part.trim().split(':').collect();
            let num = |i: usize| -> std::result::Result<f64, String> {
                fields
                    .get(i)
                    .ok_or_else(|| format!("component `{part}` needs amp:freq[:phase]"))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| format!("component `{part}`: {e}"))
            };
            if fields.len() > 3 {
                return Err(format!("component `{part}` has too many fields"));
            }
            Ok(SineComponent {
                amplitude: num(0)?,
                frequency_hz: num(1)?,
                phase: if fields.len() == 3 { num(2)? } else { 0.0 },
            })
        })
        .collect()
}

mod components_text {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(
        v: &[SineComponent],
        s: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        let text: Vec<String> = v
            .iter()
            .map(|c| format!("{}:{}:{}", c.amplitude, c.frequency_hz, c.phase))
            .collect();
        s.serialize_str(&text.join(","))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Vec<SineComponent>, D::Error> {
        let s = String::deserialize(d)?;
        parse_components(&s).map_err(serde::de::Error::custom)
    }
}

impl FromStr for Components {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        parse_components(s).map(Components::Text)
    }
}

impl fmt::Display for Components {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .clone()
            .into_vec()
            .iter()
            .map(|c| format!("{}:{}:{}", c.amplitude, c.frequency_hz, c.phase))
            .collect();
        f.write_str(&parts.join(","))
    }
}

/// Every tunable, all optional. Used both as the JSON schema and as the
/// shared flag group of every subcommand.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    /// Base preset the other keys are layered on.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,

    #[arg(long, help_heading = "Signal")]
    pub sample_rate_hz: Option<f64>,
    /// Input window length F.
    #[arg(long, help_heading = "Signal")]
    pub feature_len: Option<usize>,
    /// Forecast horizon T (also the atom length).
    #[arg(long, help_heading = "Signal")]
    pub target_len: Option<usize>,
    /// Window stride; defaults to target_len.
    #[arg(long, help_heading = "Signal")]
    pub stride: Option<usize>,
    #[arg(long, help_heading = "Signal")]
    pub normalize: Option<bool>,
    /// Millivolts per ADC count for raw 16-bit input.
    #[arg(long, help_heading = "Signal")]
    pub lsb_mv: Option<f64>,
    #[arg(long, help_heading = "Signal")]
    pub csv_column: Option<usize>,
    #[arg(long, value_enum, help_heading = "Signal")]
    pub input_format: Option<InputFormat>,

    #[arg(long, help_heading = "Synthesis")]
    pub synth_length: Option<usize>,
    /// Comma-separated `amp:freq_hz:phase` triples.
    #[arg(long, help_heading = "Synthesis")]
    pub synth_components: Option<Components>,
    #[arg(long, help_heading = "Synthesis")]
    pub synth_noise_std: Option<f64>,

    #[arg(long, help_heading = "Model")]
    pub hidden_dim: Option<usize>,
    #[arg(long, help_heading = "Model")]
    pub epochs: Option<usize>,
    #[arg(long, help_heading = "Model")]
    pub batch_size: Option<usize>,
    #[arg(long, help_heading = "Model")]
    pub learning_rate: Option<f64>,
    #[arg(long, help_heading = "Model")]
    pub momentum: Option<f64>,
    #[arg(long, help_heading = "Model")]
    pub early_stop_patience: Option<usize>,
    #[arg(long, help_heading = "Model")]
    pub val_fraction: Option<f64>,

    /// Sparsity weight.
    #[arg(long, help_heading = "Sparse coding")]
    pub lambda: Option<f64>,
    #[arg(long, help_heading = "Sparse coding")]
    pub max_iter: Option<usize>,
    #[arg(long, help_heading = "Sparse coding")]
    pub tol: Option<f64>,
    /// Fixed ISTA step; omitted means 1/L.
    #[arg(long, help_heading = "Sparse coding")]
    pub step_size: Option<f64>,
    #[arg(long, help_heading = "Sparse coding")]
    pub random_code_init: Option<bool>,
    /// Dictionary atoms; defaults to 2 * target_len.
    #[arg(long, help_heading = "Sparse coding")]
    pub n_atoms: Option<usize>,
    #[arg(long, help_heading = "Sparse coding")]
    pub outer_iters: Option<usize>,
    #[arg(long, help_heading = "Sparse coding")]
    pub dict_stride: Option<usize>,

    /// Number of generations l.
    #[arg(long, help_heading = "Evolution")]
    pub generations: Option<usize>,
    /// Children per generation k.
    #[arg(long, help_heading = "Evolution")]
    pub children: Option<usize>,
    #[arg(long, help_heading = "Evolution")]
    pub epochs_per_generation: Option<usize>,
    #[arg(long, help_heading = "Evolution")]
    pub relearn_dictionary_per_partition: Option<bool>,
    #[arg(long, help_heading = "Evolution")]
    pub score_on_holdout: Option<bool>,

    #[arg(long, help_heading = "Run")]
    pub k_folds: Option<usize>,
    /// Master seed; every random stream derives from it.
    #[arg(long, help_heading = "Run")]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, help_heading = "Run")]
    pub threads: Option<usize>,
}

macro_rules! overlay {
    ($base:ident, $top:ident; $($f:ident),* $(,)?) => {
        ConfigOverrides { $($f: $top.$f.or($base.$f)),* }
    };
}

impl ConfigOverrides {
    /// `top` wins wherever it sets a key.
    pub fn overlay(self, top: ConfigOverrides) -> ConfigOverrides {
        let base = self;
        overlay!(base, top;
            preset, sample_rate_hz, feature_len, target_len, stride, normalize, lsb_mv, csv_column,
            input_format, synth_length, synth_components, synth_noise_std, hidden_dim, epochs,
            batch_size, learning_rate, momentum, early_stop_patience, val_fraction, lambda, max_iter,
            tol, step_size, random_code_init, n_atoms, outer_iters, dict_stride, generations, children,
            epochs_per_generation, relearn_dictionary_per_partition, score_on_holdout, k_folds, seed,
            threads)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Fully resolved configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub preset: Preset,
    pub signal: SignalConfig,
    pub csv_column: usize,
    pub input_format: InputFormat,
    pub synth_length: usize,
    pub synth_components: Vec<SineComponent>,
    pub synth_noise_std: f64,
    pub evo: EvoConfig,
    pub k_folds: usize,
    pub seed: u64,
    pub threads: Option<usize>,
}

fn positive(key: &str, v: Option<usize>) -> Result<()> {
    match v {
        Some(0) => Err(CliError::key(key, "must be at least 1")),
        _ => Ok(()),
    }
}

fn positive_f(key: &str, v: Option<f64>) -> Result<()> {
    match v {
        Some(x) if !(x.is_finite() && x > 0.0) => Err(CliError::key(
            key,
            format!("must be a positive finite number, got {x}"),
        )),
        _ => Ok(()),
    }
}

fn in_range(key: &str, v: Option<f64>, lo: f64, hi: f64) -> Result<()> {
    match v {
        Some(x) if !(x >= lo && x < hi) => Err(CliError::key(
            key,
            format!("must lie in [{lo}, {hi}), got {x}"),
        )),
        _ => Ok(()),
    }
}

impl RunConfig {
    pub fn resolve(o: ConfigOverrides) -> Result<Self> {
        Self::check(&o)?;
        let preset = o.preset.unwrap_or(Preset::Desk);
        let (mut signal, mut evo) = match preset {
            Preset::Desk => (SignalConfig::desk(), EvoConfig::desk()),
            Preset::Paper => {
                let mut evo = EvoConfig::desk();
                evo.hidden_dim = 100;
                (SignalConfig::paper(), evo)
            }
        };
        if preset == Preset::Paper {
            for (key, v) in [("generations", o.generations), ("children", o.children)] {
                if v.is_none() {
                    return Err(CliError::key(
                        key,
                        "must be set explicitly with the paper preset",
                    ));
                }
            }
        }
        let seed = o.seed.unwrap_or(0);

        macro_rules! set {
            ($dst:expr, $src:expr) => {
                if let Some(v) = $src {
                    $dst = v;
                }
            };
        }
        set!(signal.sample_rate_hz, o.sample_rate_hz);
        set!(signal.feature_len, o.feature_len);
        set!(signal.target_len, o.target_len);
        signal.stride = o.stride.or(signal.stride);
        set!(signal.normalize, o.normalize);
        set!(signal.lsb_mv, o.lsb_mv);

        set!(evo.hidden_dim, o.hidden_dim);
        set!(evo.generations, o.generations);
        set!(evo.children, o.children);
        set!(evo.epochs_per_generation, o.epochs_per_generation);
        set!(
            evo.relearn_dictionary_per_partition,
            o.relearn_dictionary_per_partition
        );
        set!(evo.score_on_holdout, o.score_on_holdout);
        evo.master_seed = seed;

        let t = &mut evo.train;
        set!(t.epochs, o.epochs);
        set!(t.batch_size, o.batch_size);
        set!(t.learning_rate, o.learning_rate);
        set!(t.momentum, o.momentum);
        set!(t.early_stop_patience, o.early_stop_patience);
        set!(t.val_fraction, o.val_fraction);
        t.seed = seed;

        let s = &mut evo.sparse;
        set!(s.lambda, o.lambda);
        set!(s.max_iter, o.max_iter);
        set!(s.tol, o.tol);
        if let Some(step) = o.step_size {
            s.step = StepMode::Fixed(step);
        }
        if o.random_code_init == Some(true) {
            s.init = CodeInit::Random {
                seed: rng::derive(seed, CODE_INIT_TAG),
            };
        }

        evo.dictionary.n_atoms = o.n_atoms.or(evo.dictionary.n_atoms);
        set!(evo.dictionary.outer_iters, o.outer_iters);
        evo.dictionary.stride = o.dict_stride.or(evo.dictionary.stride);

        evo.validate()
            .map_err(|e| CliError::Config(e.to_string()))?;

        Ok(RunConfig {
            preset,
            signal,
            csv_column: o.csv_column.unwrap_or(0),
            input_format: o.input_format.unwrap_or(InputFormat::Auto),
            synth_length: o.synth_length.unwrap_or(20_000),
            synth_components: o
                .synth_components
                .map(Components::into_vec)
                .unwrap_or_else(|| {
                    vec![SineComponent {
                        amplitude: 1.0,
                        frequency_hz: 5.0,
                        phase: 0.0,
                    }]
                }),
            synth_noise_std: o.synth_noise_std.unwrap_or(0.05),
            evo,
            k_folds: o.k_folds.unwrap_or(10),
            seed,
            threads: o.threads,
        })
    }

    /// Key-level checks, so errors name the offending key.
    fn check(o: &ConfigOverrides) -> Result<()> {
        positive_f("sample_rate_hz", o.sample_rate_hz)?;
        positive("feature_len", o.feature_len)?;
        positive("target_len", o.target_len)?;
        positive("stride", o.stride)?;
        positive_f("lsb_mv", o.lsb_mv)?;
        positive("synth_length", o.synth_length)?;
        if let Some(x) = o.synth_noise_std {
            if !(x.is_finite() && x >= 0.0) {
                return Err(CliError::key(
                    "synth_noise_std",
                    format!("must be finite and non-negative, got {x}"),
                ));
            }
        }
        if let Some(c) = &o.synth_components {
            let c = c.clone().into_vec();
            if c.is_empty() {
                return Err(CliError::key(
                    "synth_components",
                    "needs at least one component",
                ));
            }
            if c.iter().any(|c| {
                !(c.amplitude.is_finite() && c.frequency_hz.is_finite() && c.phase.is_finite())
            }) {
                return Err(CliError::key("synth_components", "values must be finite"));
            }
        }
        positive("hidden_dim", o.hidden_dim)?;
        positive("epochs", o.epochs)?;
        positive("batch_size", o.batch_size)?;
        positive_f("learning_rate", o.learning_rate)?;
        in_range("momentum", o.momentum, 0.0, 1.0)?;
        positive("early_stop_patience", o.early_stop_patience)?;
        in_range("val_fraction", o.val_fraction, 0.0, 1.0)?;
        if let Some(x) = o.lambda {
            if !(x.is_finite() && x >= 0.0) {
                return Err(CliError::key(
                    "lambda",
                    format!("must be finite and non-negative, got {x}"),
                ));
            }
        }
        positive("max_iter", o.max_iter)?;
        positive_f("tol", o.tol)?;
        positive_f("step_size", o.step_size)?;
        positive("n_atoms", o.n_atoms)?;
        positive("outer_iters", o.outer_iters)?;
        positive("dict_stride", o.dict_stride)?;
        positive("generations", o.generations)?;
        positive("children", o.children)?;
        positive("epochs_per_generation", o.epochs_per_generation)?;
        if let Some(k) = o.k_folds {
            if k < 2 {
                return Err(CliError::key(
                    "k_folds",
                    format!("must be at least 2, got {k}"),
                ));
            }
        }
        positive("threads", o.threads)?;
        Ok(())
    }
}
