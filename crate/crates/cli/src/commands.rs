use std::fs;
use std::path::{Path, PathBuf};

use evosts::checksum::f64_digest;
use evosts::eval_report::{cross_validate, plot_signal, write_report, Series};
use evosts::evolution::{evosts_with_dictionary, write_run, DICTIONARY_TAG};
use evosts::lstm::{predict, read_checkpoint};
use evosts::rng;
use evosts::signal_io::{
    generate_synthetic, load_csv, load_raw_i16, make_windows, Dataset, NormStats, Signal,
};
use evosts::sparse_coding::Dictionary;
use log::info;
use serde::{Deserialize, Serialize};

use crate::config::{InputFormat, RunConfig};
use crate::error::{CliError, Result};

pub const DICTIONARY_SCHEMA_VERSION: u32 = 1;

/// Sidecar written next to a dictionary file as `<path>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DictionaryMeta {
    pub schema_version: u32,
    pub atom_len: usize,
    pub n_atoms: usize,
    pub lambda: f64,
    pub seed: u64,
    pub data_checksum: String,
    pub dictionary_checksum: String,
    pub normalization: NormStats,
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .map_err(|e| CliError::Io(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn load_signal(cfg: &RunConfig, path: &Path) -> Result<Signal> {
    let format = match cfg.input_format {
        InputFormat::Auto
            if path
                .extension()
                .is_some_and(|e| e.eq_ignore_ascii_case("csv")) =>
        {
            InputFormat::Csv
        }
        InputFormat::Auto => InputFormat::RawI16,
        f => f,
    };
    let rate = cfg.signal.sample_rate_hz;
    let signal = match format {
        InputFormat::Csv => load_csv(path, cfg.csv_column, rate)?,
        _ => load_raw_i16(path, cfg.signal.lsb_mv, rate)?,
    };
    info!("loaded {} samples from {}", signal.len(), path.display());
    Ok(signal)
}

/// Raw window pairs in source units.
pub fn windows(cfg: &RunConfig, signal: &Signal) -> Result<Dataset> {
    let s = &cfg.signal;
    Ok(make_windows(
        signal,
        s.feature_len,
        s.target_len,
        s.effective_stride(),
    )?)
}

/// Window pairs, z-scored over all pair elements when configured.
pub fn prepared(cfg: &RunConfig, signal: &Signal) -> Result<Dataset> {
    let data = windows(cfg, signal)?;
    if cfg.signal.normalize {
        let stats = data.fit_stats()?;
        Ok(data.normalized(&stats))
    } else {
        Ok(data)
    }
}

pub fn synth(cfg: &RunConfig, out: &Path) -> Result<()> {
    let signal = generate_synthetic(
        cfg.synth_length,
        &cfg.synth_components,
        cfg.synth_noise_std,
        cfg.seed,
        cfg.signal.sample_rate_hz,
    )?;
    let mut text = String::with_capacity(signal.len() * 24);
    for v in &signal.samples {
        text.push_str(&v.to_string());
        text.push('\n');
    }
    write_file(out, text)?;
    info!("wrote {} samples to {}", signal.len(), out.display());
    Ok(())
}

pub fn learn_dict(cfg: &RunConfig, input: &Path, out: &Path) -> Result<Dictionary> {
    let signal = load_signal(cfg, input)?;
    let data = prepared(cfg, &signal)?;
    let seed = rng::derive(cfg.seed, DICTIONARY_TAG);
    let t = cfg.signal.target_len;
    let dict = cfg.evo.dictionary.learn(&data, t, &cfg.evo.sparse, seed)?;
    let bytes: Vec<u8> = dict
        .to_column_major()
        .iter()
        .flat_map(|v| v.to_le_bytes())
        .collect();
    write_file(out, bytes)?;
    let meta = DictionaryMeta {
        schema_version: DICTIONARY_SCHEMA_VERSION,
        atom_len: dict.atom_len(),
        n_atoms: dict.n_atoms(),
        lambda: cfg.evo.sparse.lambda,
        seed,
        data_checksum: f64_digest(&signal.samples),
        dictionary_checksum: dict.checksum(),
        normalization: data.normalization,
    };
    write_file(&sidecar(out), to_json(&meta)?)?;
    info!(
        "wrote {}x{} dictionary to {}",
        dict.atom_len(),
        dict.n_atoms(),
        out.display()
    );
    Ok(dict)
}

pub fn read_dictionary(path: &Path) -> Result<(Dictionary, DictionaryMeta)> {
    let side = sidecar(path);
    let meta_text =
        fs::read(&side).map_err(|e| CliError::Io(format!("{}: {e}", side.display())))?;
    let meta: DictionaryMeta = serde_json::from_slice(&meta_text)
        .map_err(|e| CliError::Io(format!("{}: {e}", side.display())))?;
    let bytes = fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    if bytes.len() != 8 * meta.atom_len * meta.n_atoms {
        return Err(CliError::Io(format!(
            "{}: {} bytes does not hold a {}x{} f64 matrix",
            path.display(),
            bytes.len(),
            meta.atom_len,
            meta.n_atoms
        )));
    }
    let data: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let dict = Dictionary::from_column_major(meta.atom_len, meta.n_atoms, &data)?;
    if dict.checksum() != meta.dictionary_checksum {
        return Err(CliError::Io(format!(
            "{}: checksum does not match sidecar",
            path.display()
        )));
    }
    Ok((dict, meta))
}

pub fn evolve(
    cfg: &RunConfig,
    input: &Path,
    out_dir: &Path,
    dictionary: Option<&Path>,
) -> Result<()> {
    let signal = load_signal(cfg, input)?;
    let data = prepared(cfg, &signal)?;
    let shared = dictionary.map(read_dictionary).transpose()?.map(|(d, _)| d);
    let run = evosts_with_dictionary(&data, &cfg.evo, shared.as_ref())?;
    for g in &run.generations {
        info!(
            "generation {}: best child {} score {:.6}",
            g.generation_index,
            g.best_index,
            g.best().score
        );
    }
    write_run(&run, &run.manifest(), out_dir)?;
    info!("wrote run to {}", out_dir.display());
    Ok(())
}

pub fn evaluate(cfg: &RunConfig, input: &Path, out: &Path) -> Result<()> {
    let signal = load_signal(cfg, input)?;
    let data = windows(cfg, &signal)?;
    let report = cross_validate(&data, &cfg.evo, cfg.k_folds, cfg.seed, cfg.signal.normalize)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    write_report(&report, out)?;
    info!(
        "mean r2 random {:.4} optimized {:.4}; wrote {}",
        report.means.r2_random,
        report.means.r2_optimized,
        out.display()
    );
    Ok(())
}

/// Plot window `window` (input and horizon, source units) with each
/// checkpoint's forecast over the horizon.
pub fn plot(
    cfg: &RunConfig,
    input: &Path,
    out: &Path,
    checkpoints: &[PathBuf],
    window: usize,
) -> Result<()> {
    let signal = load_signal(cfg, input)?;
    let data = windows(cfg, &signal)?;
    let pair = data.pairs.get(window).ok_or_else(|| {
        CliError::key(
            "window",
            format!("index {window} out of range for {} windows", data.len()),
        )
    })?;
    let mut segment = pair.features.clone();
    segment.extend_from_slice(&pair.target);
    let actual = Series::new("actual", pair.origin_index, segment);
    let offset = pair.origin_index + pair.features.len();
    let mut predictions = Vec::with_capacity(checkpoints.len());
    for path in checkpoints {
        let (weights, meta) = read_checkpoint(path)?;
        let stats = meta.normalization.unwrap_or(NormStats::IDENTITY);
        let y = predict(&weights, &stats.apply_slice(&pair.features))?;
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        predictions.push(Series::new(label, offset, stats.invert_slice(&y)));
    }
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    plot_signal(&actual, &predictions, &format!("window {window}"), out)?;
    info!("wrote {}", out.display());
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v)
        .map(|s| s + "\n")
        .map_err(|e| CliError::Io(e.to_string()))
}
