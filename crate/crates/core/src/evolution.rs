//! The generational loop: spawn children from the generation prior, train
//! each on the partition with its own shuffle stream, score each by how well
//! the partition dictionary reconstructs its predictions, carry the best on.

use std::fs;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lstm::{
    self, count_parameters, dataset_mse, init_weights, CheckpointMeta, LstmDims, LstmError,
    LstmWeights, Sgd, TrainConfig,
};
use crate::rng;
use crate::signal_io::{partition_generations, Dataset, NormStats, SignalError, WindowPair};
use crate::sparse_coding::{learn_dictionary, Dictionary, IstaSolver, SparseConfig, SparseError};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
/// Tag mixed into the master seed for dictionary learning seeds.
pub const DICTIONARY_TAG: u64 = 0x6469_6374;

#[derive(Debug, Error)]
pub enum EvoError {
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error(transparent)]
    Lstm(#[from] LstmError),
    #[error("invalid evolution config: {0}")]
    InvalidConfig(String),
    #[error("partition has no pairs to train or score on")]
    EmptyPartition,
    #[error("child {child} of generation {generation} produced a non-finite score")]
    NonFiniteScore { generation: usize, child: usize },
    #[error("dictionary atom length {atom_len} does not match model output length {output_dim}")]
    DictionaryMismatch { atom_len: usize, output_dim: usize },
    #[error("run i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, EvoError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DictionaryConfig {
    /// Defaults to twice the atom length.
    pub n_atoms: Option<usize>,
    pub outer_iters: usize,
    /// Offset between sub-windows; defaults to the atom length.
    pub stride: Option<usize>,
}

impl Default for DictionaryConfig {
    fn default() -> Self {
        DictionaryConfig {
            n_atoms: None,
            outer_iters: 30,
            stride: None,
        }
    }
}

impl DictionaryConfig {
    pub fn atoms_for(&self, atom_len: usize) -> usize {
        self.n_atoms.unwrap_or(2 * atom_len)
    }

    /// Learn a dictionary of length-`atom_len` atoms from the signal the
    /// dataset covers.
    pub fn learn(
        &self,
        data: &Dataset,
        atom_len: usize,
        sparse: &SparseConfig,
        seed: u64,
    ) -> Result<Dictionary> {
        let windows = data.sub_windows(atom_len, self.stride.unwrap_or(atom_len));
        Ok(learn_dictionary(
            &windows,
            self.atoms_for(atom_len),
            sparse,
            self.outer_iters,
            seed,
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvoConfig {
    pub generations: usize,
    pub children: usize,
    pub hidden_dim: usize,
    pub epochs_per_generation: usize,
    pub master_seed: u64,
    pub sparse: SparseConfig,
    pub train: TrainConfig,
    pub dictionary: DictionaryConfig,
    pub relearn_dictionary_per_partition: bool,
    /// Score on the held-out tail of each partition instead of the
    /// training pairs.
    pub score_on_holdout: bool,
}

impl EvoConfig {
    pub fn desk() -> Self {
        EvoConfig {
            generations: 3,
            children: 4,
            hidden_dim: 16,
            epochs_per_generation: 1,
            master_seed: 0,
            sparse: SparseConfig::default(),
            train: TrainConfig::default(),
            dictionary: DictionaryConfig::default(),
            relearn_dictionary_per_partition: true,
            score_on_holdout: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(EvoError::InvalidConfig(m.to_string()));
        if self.generations == 0 {
            return fail("generations must be at least 1");
        }
        if self.children == 0 {
            return fail("children must be at least 1");
        }
        if self.hidden_dim == 0 {
            return fail("hidden_dim must be at least 1");
        }
        if self.epochs_per_generation == 0 {
            return fail("epochs_per_generation must be at least 1");
        }
        if self.dictionary.n_atoms == Some(0) {
            return fail("n_atoms must be at least 1");
        }
        if self.dictionary.stride == Some(0) {
            return fail("dictionary stride must be at least 1");
        }
        self.sparse.validate()?;
        self.train.validate()?;
        Ok(())
    }
}

/// A fresh copy of the generation prior with its own shuffle stream.
#[derive(Debug, Clone)]
pub struct Child {
    pub index: usize,
    pub weights: LstmWeights,
    pub rng: ChaCha8Rng,
}

/// `k` copies of `gamma`; child `i` of generation `g` draws from stream
/// `(master_seed, g, i)`.
pub fn spawn_children(
    gamma: &LstmWeights,
    k: usize,
    master_seed: u64,
    generation: usize,
) -> Vec<Child> {
    (0..k)
        .map(|index| Child {
            index,
            weights: gamma.clone(),
            rng: rng::child_stream(master_seed, generation, index),
        })
        .collect()
}

/// Mean reconstruction loss of the model's predictions for `features`.
pub fn evaluate_child<V: AsRef<[f64]>>(
    weights: &LstmWeights,
    dictionary: &Dictionary,
    features: &[V],
    cfg: &SparseConfig,
) -> Result<f64> {
    let solver = IstaSolver::new(dictionary, cfg)?;
    score_with(weights, &solver, features)
}

fn score_with<V: AsRef<[f64]>>(
    weights: &LstmWeights,
    solver: &IstaSolver<'_>,
    features: &[V],
) -> Result<f64> {
    if features.is_empty() {
        return Err(EvoError::EmptyPartition);
    }
    let atom_len = solver.dictionary().atom_len();
    if atom_len != weights.dims().output_dim {
        return Err(EvoError::DictionaryMismatch {
            atom_len,
            output_dim: weights.dims().output_dim,
        });
    }
    let mut total = 0.0;
    for x in features {
        let prediction = lstm::predict(weights, x.as_ref())?;
        total += solver.reconstruction_loss(&prediction)?;
    }
    Ok(total / features.len() as f64)
}

/// First index of the minimum score.
pub fn select_best(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s < scores[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChildResult {
    pub child_index: usize,
    pub weights: LstmWeights,
    pub score: f64,
    /// Training-pair MSE after each epoch.
    pub train_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationResult {
    pub generation_index: usize,
    pub partition_id: usize,
    pub partition_pairs: usize,
    pub dictionary_checksum: String,
    pub children: Vec<ChildResult>,
    pub best_index: usize,
}

impl GenerationResult {
    pub fn best(&self) -> &ChildResult {
        &self.children[self.best_index]
    }
}

fn split_for_scoring<'a>(
    partition: &'a Dataset,
    cfg: &EvoConfig,
) -> Result<(&'a [WindowPair], &'a [WindowPair])> {
    let pairs = partition.pairs.as_slice();
    if pairs.is_empty() {
        return Err(EvoError::EmptyPartition);
    }
    if !cfg.score_on_holdout {
        return Ok((pairs, pairs));
    }
    if pairs.len() < 2 {
        return Err(EvoError::EmptyPartition);
    }
    let n_score =
        ((cfg.train.val_fraction * pairs.len() as f64).ceil() as usize).clamp(1, pairs.len() - 1);
    Ok(pairs.split_at(pairs.len() - n_score))
}

/// One spawn/train/score/select cycle. Children run on the current rayon
/// pool; results do not depend on its size.
pub fn run_generation(
    gamma: &LstmWeights,
    partition: &Dataset,
    dictionary: &Dictionary,
    cfg: &EvoConfig,
    generation_index: usize,
) -> Result<GenerationResult> {
    let (train_pairs, score_pairs) = split_for_scoring(partition, cfg)?;
    let solver = IstaSolver::new(dictionary, &cfg.sparse)?;
    let score_features: Vec<&[f64]> = score_pairs.iter().map(|p| p.features.as_slice()).collect();
    let children = spawn_children(gamma, cfg.children, cfg.master_seed, generation_index);

    let results: Vec<ChildResult> = children
        .into_par_iter()
        .map(|mut child| {
            let mut sgd = Sgd::for_config(&child.weights, &cfg.train);
            let mut train_history = Vec::with_capacity(cfg.epochs_per_generation);
            for _ in 0..cfg.epochs_per_generation {
                sgd.run_epoch(
                    &mut child.weights,
                    train_pairs,
                    cfg.train.batch_size,
                    &mut child.rng,
                )?;
                train_history.push(dataset_mse(&child.weights, train_pairs)?);
            }
            let score = score_with(&child.weights, &solver, &score_features)?;
            if !score.is_finite() {
                return Err(EvoError::NonFiniteScore {
                    generation: generation_index,
                    child: child.index,
                });
            }
            Ok(ChildResult {
                child_index: child.index,
                weights: child.weights,
                score,
                train_history,
            })
        })
        .collect::<Result<_>>()?;

    let scores: Vec<f64> = results.iter().map(|c| c.score).collect();
    Ok(GenerationResult {
        generation_index,
        partition_id: generation_index,
        partition_pairs: partition.len(),
        dictionary_checksum: dictionary.checksum(),
        best_index: select_best(&scores),
        children: results,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvoRun {
    pub config: EvoConfig,
    pub dims: LstmDims,
    pub normalization: NormStats,
    pub initial_weights: LstmWeights,
    pub generations: Vec<GenerationResult>,
    pub first_generation_best: LstmWeights,
    pub final_generation_best: LstmWeights,
}

pub fn evosts(dataset: &Dataset, cfg: &EvoConfig) -> Result<EvoRun> {
    evosts_with_dictionary(dataset, cfg, None)
}

/// Run all generations. With `shared` set, that dictionary scores every
/// generation; otherwise dictionaries are learned per partition or once for
/// the whole dataset according to the config.
pub fn evosts_with_dictionary(
    dataset: &Dataset,
    cfg: &EvoConfig,
    shared: Option<&Dictionary>,
) -> Result<EvoRun> {
    cfg.validate()?;
    let dims = LstmDims::new(dataset.feature_len, cfg.hidden_dim, dataset.target_len)?;
    let partitions = partition_generations(dataset, cfg.generations)?;
    let atom_len = dataset.target_len;

    let run_wide = match shared {
        Some(d) => Some(d.clone()),
        None if !cfg.relearn_dictionary_per_partition => Some(cfg.dictionary.learn(
            dataset,
            atom_len,
            &cfg.sparse,
            rng::derive(cfg.master_seed, DICTIONARY_TAG),
        )?),
        None => None,
    };
    if let Some(d) = &run_wide {
        if d.atom_len() != atom_len {
            return Err(EvoError::DictionaryMismatch {
                atom_len: d.atom_len(),
                output_dim: atom_len,
            });
        }
    }

    let initial_weights = init_weights(&dims, cfg.master_seed);
    let mut gamma = initial_weights.clone();
    let mut generations = Vec::with_capacity(cfg.generations);
    for (g, partition) in partitions.iter().enumerate() {
        let learned;
        let dictionary = match &run_wide {
            Some(d) => d,
            None => {
                let seed = rng::derive(cfg.master_seed, DICTIONARY_TAG.wrapping_add(1 + g as u64));
                learned = cfg
                    .dictionary
                    .learn(partition, atom_len, &cfg.sparse, seed)?;
                &learned
            }
        };
        let result = run_generation(&gamma, partition, dictionary, cfg, g)?;
        log::info!(
            "generation {g}: best child {} score {:.6}",
            result.best_index,
            result.best().score
        );
        gamma = result.best().weights.clone();
        generations.push(result);
    }

    Ok(EvoRun {
        config: cfg.clone(),
        dims,
        normalization: dataset.normalization,
        initial_weights,
        first_generation_best: generations[0].best().weights.clone(),
        final_generation_best: gamma,
        generations,
    })
}

/// Run inside a dedicated pool of `threads` workers.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .expect("thread pool");
    pool.install(f)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChildRecord {
    pub child_index: usize,
    pub score: f64,
    pub train_history: Vec<f64>,
    pub weights_checksum: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationRecord {
    pub generation_index: usize,
    pub partition_id: usize,
    pub partition_pairs: usize,
    pub dictionary_checksum: String,
    pub best_index: usize,
    pub best_score: f64,
    pub children: Vec<ChildRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub schema_version: u32,
    pub config: EvoConfig,
    pub dims: LstmDims,
    pub parameter_count: usize,
    pub normalization: NormStats,
    pub initial_weights_checksum: String,
    pub generations: Vec<GenerationRecord>,
    pub first_generation_best_checksum: String,
    pub final_generation_best_checksum: String,
}

impl EvoRun {
    pub fn manifest(&self) -> RunManifest {
        RunManifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            config: self.config.clone(),
            dims: self.dims,
            parameter_count: count_parameters(&self.dims).total,
            normalization: self.normalization,
            initial_weights_checksum: self.initial_weights.checksum(),
            generations: self
                .generations
                .iter()
                .map(|g| GenerationRecord {
                    generation_index: g.generation_index,
                    partition_id: g.partition_id,
                    partition_pairs: g.partition_pairs,
                    dictionary_checksum: g.dictionary_checksum.clone(),
                    best_index: g.best_index,
                    best_score: g.best().score,
                    children: g
                        .children
                        .iter()
                        .map(|c| ChildRecord {
                            child_index: c.child_index,
                            score: c.score,
                            train_history: c.train_history.clone(),
                            weights_checksum: c.weights.checksum(),
                        })
                        .collect(),
                })
                .collect(),
            first_generation_best_checksum: self.first_generation_best.checksum(),
            final_generation_best_checksum: self.final_generation_best.checksum(),
        }
    }
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FIRST_BEST_FILE: &str = "gamma_first.bin";
pub const FINAL_BEST_FILE: &str = "gamma_final.bin";

/// Write `manifest.json` and the first/final generation-best checkpoints.
pub fn write_run(run: &EvoRun, manifest: &RunManifest, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    let json = serde_json::to_string_pretty(manifest)?;
    fs::write(out_dir.join(MANIFEST_FILE), json + "\n")?;
    let seed = run.config.master_seed;
    let last = run.generations.len() - 1;
    lstm::write_checkpoint(
        &run.first_generation_best,
        &CheckpointMeta::for_weights(&run.first_generation_best, seed, 0, Some(run.normalization)),
        &out_dir.join(FIRST_BEST_FILE),
    )?;
    lstm::write_checkpoint(
        &run.final_generation_best,
        &CheckpointMeta::for_weights(
            &run.final_generation_best,
            seed,
            last,
            Some(run.normalization),
        ),
        &out_dir.join(FINAL_BEST_FILE),
    )?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal_io::{generate_synthetic, make_windows, SineComponent};

    fn sine_dataset(len: usize, f: usize, t: usize) -> Dataset {
        let c = SineComponent {
            amplitude: 1.0,
            frequency_hz: 5.0,
            phase: 0.0,
        };
        let s = generate_synthetic(len, &[c], 0.05, 1, 1000.0).unwrap();
        let d = make_windows(&s, f, t, t).unwrap();
        let stats = d.fit_stats().unwrap();
        d.normalized(&stats)
    }

    fn small_cfg() -> EvoConfig {
        EvoConfig {
            generations: 2,
            children: 3,
            hidden_dim: 4,
            train: TrainConfig {
                batch_size: 4,
                ..TrainConfig::default()
            },
            dictionary: DictionaryConfig {
                n_atoms: Some(8),
                outer_iters: 5,
                stride: None,
            },
            ..EvoConfig::desk()
        }
    }

    #[test]
    fn spawn_copies_prior() {
        let gamma = init_weights(&LstmDims::new(4, 2, 2).unwrap(), 1);
        let one = spawn_children(&gamma, 1, 7, 0);
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].weights, gamma);
        let three = spawn_children(&gamma, 3, 7, 0);
        assert!(three.iter().all(|c| c.weights == gamma));
        let mut a = three[0].rng.clone();
        let mut b = three[1].rng.clone();
        use rand::Rng;
        assert_ne!(a.random::<u64>(), b.random::<u64>());
    }

    #[test]
    fn first_argmin() {
        assert_eq!(select_best(&[0.5, 0.2, 0.2]), 1);
        assert_eq!(select_best(&[0.3]), 0);
        assert_eq!(select_best(&[1.0, 1.0, 1.0]), 0);
        assert_eq!(select_best(&[3.0, 2.0, 1.0]), 2);
    }

    #[test]
    fn in_span_predictions_score_zero() {
        // zero gate weights with zero dense weight: prediction = dense bias,
        // set to a multiple of one atom
        let dims = LstmDims::new(3, 2, 4).unwrap();
        let atoms = vec![vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 0.6, 0.8, 0.0]];
        let d = Dictionary::from_columns(&atoms).unwrap();
        let mut w = LstmWeights::zeros(dims);
        w.dense_bias_mut().copy_from_slice(&[0.0, 1.2, 1.6, 0.0]);
        let cfg = SparseConfig {
            lambda: 1e-9,
            max_iter: 5000,
            tol: 1e-14,
            ..SparseConfig::default()
        };
        let features = vec![vec![0.1, 0.2, 0.3], vec![-1.0, 0.0, 1.0]];
        assert!(evaluate_child(&w, &d, &features, &cfg).unwrap() <= 1e-6);
    }

    #[test]
    fn score_is_pure_and_a_mean() {
        let dims = LstmDims::new(3, 2, 2).unwrap();
        let w = init_weights(&dims, 3);
        let d = Dictionary::from_columns(&[vec![1.0, 0.0]]).unwrap();
        let cfg = SparseConfig::default();
        let f1 = vec![0.5, -0.2, 0.1];
        let f2 = vec![-0.4, 0.9, 0.3];
        let a = evaluate_child(&w, &d, std::slice::from_ref(&f1), &cfg).unwrap();
        let b = evaluate_child(&w, &d, std::slice::from_ref(&f2), &cfg).unwrap();
        let both = evaluate_child(&w, &d, &[f1.clone(), f2.clone()], &cfg).unwrap();
        assert!((both - (a + b) / 2.0).abs() < 1e-15);
        assert_eq!(
            both,
            evaluate_child(&w.clone(), &d, &[f1, f2], &cfg).unwrap()
        );
        // the one atom is e0: the residual is exactly |prediction[1]| when lambda
        // is 0 and the code recovers prediction[0]
        let exact = SparseConfig {
            lambda: 0.0,
            ..SparseConfig::default()
        };
        let p = lstm::predict(&w, &[0.5, -0.2, 0.1]).unwrap();
        let s = evaluate_child(&w, &d, &[vec![0.5, -0.2, 0.1]], &exact).unwrap();
        assert!((s - p[1].abs()).abs() < 1e-12);
        let empty: Vec<Vec<f64>> = Vec::new();
        assert!(matches!(
            evaluate_child(&w, &d, &empty, &cfg),
            Err(EvoError::EmptyPartition)
        ));
        let wide = Dictionary::from_columns(&[vec![1.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(
            evaluate_child(&w, &wide, &[vec![0.0; 3]], &cfg),
            Err(EvoError::DictionaryMismatch { .. })
        ));
    }

    #[test]
    fn single_child_generation() {
        let data = sine_dataset(400, 16, 4);
        let cfg = EvoConfig {
            children: 1,
            ..small_cfg()
        };
        let gamma = init_weights(&LstmDims::new(16, 4, 4).unwrap(), 0);
        let d = cfg.dictionary.learn(&data, 4, &cfg.sparse, 1).unwrap();
        let g = run_generation(&gamma, &data, &d, &cfg, 0).unwrap();
        assert_eq!(g.best_index, 0);
        assert_eq!(g.children.len(), 1);
        // plain sequential training with the child's stream
        let mut w = gamma.clone();
        let mut stream = rng::child_stream(cfg.master_seed, 0, 0);
        Sgd::for_config(&w, &cfg.train)
            .run_epoch(&mut w, &data.pairs, cfg.train.batch_size, &mut stream)
            .unwrap();
        assert_eq!(g.children[0].weights, w);
    }

    #[test]
    fn serial_and_parallel_generations_match() {
        let data = sine_dataset(500, 16, 4);
        let cfg = small_cfg();
        let gamma = init_weights(&LstmDims::new(16, 4, 4).unwrap(), 0);
        let d = cfg.dictionary.learn(&data, 4, &cfg.sparse, 1).unwrap();
        let serial = with_threads(1, || run_generation(&gamma, &data, &d, &cfg, 0).unwrap());
        let parallel = with_threads(4, || run_generation(&gamma, &data, &d, &cfg, 0).unwrap());
        assert_eq!(serial, parallel);
    }

    #[test]
    fn run_shape_and_lineage() {
        let data = sine_dataset(900, 16, 4);
        let cfg = small_cfg();
        let run = evosts(&data, &cfg).unwrap();
        assert_eq!(run.generations.len(), cfg.generations);
        for (g, gen) in run.generations.iter().enumerate() {
            assert_eq!(gen.children.len(), cfg.children);
            let min = gen
                .children
                .iter()
                .map(|c| c.score)
                .fold(f64::INFINITY, f64::min);
            assert_eq!(gen.best().score, min);
            if g + 1 < run.generations.len() {
                // children of the next generation were spawned from this best
                let next = &run.generations[g + 1];
                let mut w = gen.best().weights.clone();
                let mut stream = rng::child_stream(cfg.master_seed, g + 1, 0);
                let partition = &partition_generations(&data, cfg.generations).unwrap()[g + 1];
                Sgd::for_config(&w, &cfg.train)
                    .run_epoch(&mut w, &partition.pairs, cfg.train.batch_size, &mut stream)
                    .unwrap();
                assert_eq!(next.children[0].weights, w);
            }
        }
        assert_eq!(run.first_generation_best, run.generations[0].best().weights);
        assert_eq!(
            run.final_generation_best,
            run.generations.last().unwrap().best().weights
        );
        assert_eq!(evosts(&data, &cfg).unwrap(), run);
    }

    #[test]
    fn single_generation_run() {
        let data = sine_dataset(400, 16, 4);
        let cfg = EvoConfig {
            generations: 1,
            ..small_cfg()
        };
        let run = evosts(&data, &cfg).unwrap();
        assert_eq!(run.generations.len(), 1);
        assert_eq!(run.first_generation_best, run.final_generation_best);
    }

    #[test]
    fn shared_and_holdout_modes() {
        let data = sine_dataset(600, 16, 4);
        let cfg = EvoConfig {
            relearn_dictionary_per_partition: false,
            score_on_holdout: true,
            ..small_cfg()
        };
        let run = evosts(&data, &cfg).unwrap();
        let checksums: Vec<&str> = run
            .generations
            .iter()
            .map(|g| g.dictionary_checksum.as_str())
            .collect();
        assert!(checksums.windows(2).all(|w| w[0] == w[1]));
        let per_partition = evosts(&data, &small_cfg()).unwrap();
        assert_ne!(
            per_partition.generations[0].dictionary_checksum,
            per_partition.generations[1].dictionary_checksum
        );
        let wrong = Dictionary::from_columns(&[vec![1.0, 0.0]]).unwrap();
        assert!(matches!(
            evosts_with_dictionary(&data, &small_cfg(), Some(&wrong)),
            Err(EvoError::DictionaryMismatch { .. })
        ));
    }

    #[test]
    fn config_and_size_errors() {
        let data = sine_dataset(400, 16, 4);
        for bad in [
            EvoConfig {
                generations: 0,
                ..small_cfg()
            },
            EvoConfig {
                children: 0,
                ..small_cfg()
            },
            EvoConfig {
                epochs_per_generation: 0,
                ..small_cfg()
            },
        ] {
            assert!(matches!(
                evosts(&data, &bad),
                Err(EvoError::InvalidConfig(_))
            ));
        }
        let tiny = data.subset(&[0, 1]);
        let cfg = EvoConfig {
            generations: 3,
            ..small_cfg()
        };
        assert!(matches!(
            evosts(&tiny, &cfg),
            Err(EvoError::Signal(SignalError::TooFewPairs { .. }))
        ));
    }

    #[test]
    fn manifest_round_trip() {
        let data = sine_dataset(400, 16, 4);
        let run = evosts(&data, &small_cfg()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest = run.manifest();
        write_run(&run, &manifest, dir.path()).unwrap();
        assert_eq!(
            read_manifest(&dir.path().join(MANIFEST_FILE)).unwrap(),
            manifest
        );
        let (w, meta) = lstm::read_checkpoint(&dir.path().join(FINAL_BEST_FILE)).unwrap();
        assert_eq!(w, run.final_generation_best);
        assert_eq!(meta.epoch, 1);
        assert_eq!(
            manifest.generations[1].children[0].weights_checksum,
            run.generations[1].children[0].weights.checksum()
        );
    }
}
