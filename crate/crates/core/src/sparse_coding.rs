//! Sparse coding with ISTA and dictionary learning by alternating minimization.
//!
//! Codes minimize `0.5 * ||x - D a||^2 + lambda * ||a||_1` by the proximal
//! gradient iteration
//!
//! ```text
//! a <- soft_threshold(a + step * D^T (x - D a), step * lambda)
//! ```
//!
//! with `step = 1 / L`, `L` the largest eigenvalue of `D^T D`.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{checksum, rng};

#[derive(Debug, Error, PartialEq)]
pub enum SparseError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("dictionary is degenerate (empty, zero or non-finite)")]
    DegenerateDictionary,
    #[error("dictionary learning needs at least one window")]
    EmptyTrainingSet,
    #[error("invalid sparse config: {0}")]
    InvalidConfig(String),
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
}

pub type Result<T> = std::result::Result<T, SparseError>;

/// Column-atom dictionary of shape `(atom_len, n_atoms)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    atoms: Array2<f64>,
}

impl Dictionary {
    pub fn new(atoms: Array2<f64>) -> Result<Self> {
        if atoms.nrows() == 0 || atoms.ncols() == 0 || atoms.iter().any(|v| !v.is_finite()) {
            return Err(SparseError::DegenerateDictionary);
        }
        if atoms
            .columns()
            .into_iter()
            .any(|c| c.iter().all(|&v| v == 0.0))
        {
            return Err(SparseError::DegenerateDictionary);
        }
        Ok(Dictionary { atoms })
    }

    /// Build from atoms given as columns.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let atom_len = columns.first().map_or(0, Vec::len);
        if let Some(bad) = columns.iter().find(|c| c.len() != atom_len) {
            return Err(SparseError::DimensionMismatch {
                expected: atom_len,
                got: bad.len(),
            });
        }
        let mut atoms = Array2::zeros((atom_len, columns.len()));
        for (j, col) in columns.iter().enumerate() {
            atoms
                .column_mut(j)
                .assign(&ArrayView1::from(col.as_slice()));
        }
        Self::new(atoms)
    }

    /// Inverse of [`Dictionary::to_column_major`].
    pub fn from_column_major(atom_len: usize, n_atoms: usize, data: &[f64]) -> Result<Self> {
        if data.len() != atom_len * n_atoms {
            return Err(SparseError::DimensionMismatch {
                expected: atom_len * n_atoms,
                got: data.len(),
            });
        }
        let columns: Vec<Vec<f64>> = data.chunks(atom_len.max(1)).map(<[f64]>::to_vec).collect();
        Self::from_columns(&columns)
    }

    pub fn atom_len(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn atoms(&self) -> &Array2<f64> {
        &self.atoms
    }

    pub fn atom(&self, j: usize) -> ArrayView1<'_, f64> {
        self.atoms.column(j)
    }

    /// Atoms concatenated one after another.
    pub fn to_column_major(&self) -> Vec<f64> {
        self.atoms.t().iter().copied().collect()
    }

    pub fn checksum(&self) -> String {
        checksum::f64_digest(&self.to_column_major())
    }

    pub fn reconstruct(&self, coefficients: &[f64]) -> Result<Vec<f64>> {
        self.check_code(coefficients.len())?;
        Ok(self.atoms.dot(&ArrayView1::from(coefficients)).to_vec())
    }

    fn check_signal(&self, len: usize) -> Result<()> {
        if len != self.atom_len() {
            return Err(SparseError::DimensionMismatch {
                expected: self.atom_len(),
                got: len,
            });
        }
        Ok(())
    }

    fn check_code(&self, len: usize) -> Result<()> {
        if len != self.n_atoms() {
            return Err(SparseError::DimensionMismatch {
                expected: self.n_atoms(),
                got: len,
            });
        }
        Ok(())
    }

    fn gram(&self) -> Array2<f64> {
        self.atoms.t().dot(&self.atoms)
    }
}

/// ISTA step size selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepMode {
    /// `1 / L` from power iteration on `D^T D`.
    Auto,
    Fixed(f64),
}

/// Starting point for ISTA.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodeInit {
    Zero,
    /// Uniform in `[-0.01, 0.01]`, keyed by seed.
    Random {
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparseConfig {
    pub lambda: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub step: StepMode,
    pub init: CodeInit,
}

impl Default for SparseConfig {
    fn default() -> Self {
        SparseConfig {
            lambda: 0.1,
            max_iter: 200,
            tol: 1e-6,
            step: StepMode::Auto,
            init: CodeInit::Zero,
        }
    }
}

impl SparseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(SparseError::InvalidConfig(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if self.max_iter == 0 {
            return Err(SparseError::InvalidConfig(
                "max_iter must be at least 1".to_string(),
            ));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(SparseError::InvalidConfig(format!(
                "tol must be > 0, got {}",
                self.tol
            )));
        }
        if let StepMode::Fixed(step) = self.step {
            if !(step > 0.0 && step.is_finite()) {
                return Err(SparseError::InvalidConfig(format!(
                    "fixed step must be > 0, got {step}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    pub coefficients: Vec<f64>,
    pub iterations_used: usize,
    pub converged: bool,
}

/// Elementwise `sign(v) * max(|v| - theta, 0)`.
pub fn soft_threshold(v: &[f64], theta: f64) -> Vec<f64> {
    v.iter().map(|&x| shrink(x, theta)).collect()
}

#[inline]
fn shrink(x: f64, theta: f64) -> f64 {
    if x > theta {
        x - theta
    } else if x < -theta {
        x + theta
    } else {
        0.0
    }
}

const POWER_TOL: f64 = 1e-6;
const POWER_MAX_ITER: usize = 1000;

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
pub(crate) fn largest_eigenvalue(sym: &Array2<f64>) -> f64 {
    let n = sym.nrows();
    if n == 0 {
        return 0.0;
    }
    // non-uniform start so it is unlikely to be orthogonal to the top eigenvector
    let mut v = Array1::from_iter((0..n).map(|i| 1.0 + (i as f64 + 1.0).sqrt() / n as f64));
    let norm = v.dot(&v).sqrt();
    v /= norm;
    let mut estimate = 0.0;
    for _ in 0..POWER_MAX_ITER {
        let w = sym.dot(&v);
        let next = v.dot(&w);
        let wn = w.dot(&w).sqrt();
        if wn == 0.0 {
            return 0.0;
        }
        v = w / wn;
        let done = (next - estimate).abs() <= POWER_TOL * next.abs();
        estimate = next;
        if done {
            break;
        }
    }
    // Rayleigh quotient at the final vector
    v.dot(&sym.dot(&v)).max(estimate)
}

/// `1 / L` where `L` is the largest eigenvalue of `D^T D`.
pub fn lipschitz_step(dictionary: &Dictionary) -> Result<f64> {
    lipschitz_from_gram(&dictionary.gram()).map(|l| 1.0 / l)
}

fn lipschitz_from_gram(gram: &Array2<f64>) -> Result<f64> {
    let l = largest_eigenvalue(gram);
    if l.is_nan() || l <= 0.0 || !l.is_finite() {
        return Err(SparseError::DegenerateDictionary);
    }
    Ok(l)
}

/// ISTA objective `0.5 * ||x - D a||_2^2 + lambda * ||a||_1`.
pub fn objective(
    dictionary: &Dictionary,
    x: &[f64],
    coefficients: &[f64],
    lambda: f64,
) -> Result<f64> {
    let residual = residual_norm(dictionary, x, coefficients)?;
    Ok(0.5 * residual * residual + lambda * l1(coefficients))
}

/// Sparse-coding energy `||x - D a||_2 + lambda * ||a||_1`.
pub fn energy(dictionary: &Dictionary, x: &[f64], code: &SparseCode, lambda: f64) -> Result<f64> {
    Ok(residual_norm(dictionary, x, &code.coefficients)? + lambda * l1(&code.coefficients))
}

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|a| a.abs()).sum()
}

fn residual_norm(dictionary: &Dictionary, x: &[f64], coefficients: &[f64]) -> Result<f64> {
    dictionary.check_signal(x.len())?;
    let recon = dictionary.reconstruct(coefficients)?;
    Ok(x.iter()
        .zip(&recon)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt())
}

/// Precomputed Gram matrix and step for encoding many vectors against one
/// dictionary. Shareable across threads.
#[derive(Debug, Clone)]
pub struct IstaSolver<'a> {
    dictionary: &'a Dictionary,
    gram: Array2<f64>,
    step: f64,
    cfg: SparseConfig,
}

impl<'a> IstaSolver<'a> {
    pub fn new(dictionary: &'a Dictionary, cfg: &SparseConfig) -> Result<Self> {
        cfg.validate()?;
        let gram = dictionary.gram();
        let step = match cfg.step {
            StepMode::Auto => 1.0 / lipschitz_from_gram(&gram)?,
            StepMode::Fixed(step) => step,
        };
        Ok(IstaSolver {
            dictionary,
            gram,
            step,
            cfg: *cfg,
        })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn dictionary(&self) -> &Dictionary {
        self.dictionary
    }

    fn initial_code(&self) -> Vec<f64> {
        let n = self.dictionary.n_atoms();
        match self.cfg.init {
            CodeInit::Zero => vec![0.0; n],
            CodeInit::Random { seed } => {
                let mut r = rng::seeded(seed);
                (0..n).map(|_| r.random_range(-0.01..=0.01)).collect()
            }
        }
    }

    pub fn encode(&self, x: &[f64]) -> Result<SparseCode> {
        self.run(x, self.initial_code(), None)
    }

    /// Encode starting from `start` instead of the configured initialization.
    pub fn encode_from(&self, x: &[f64], start: Vec<f64>) -> Result<SparseCode> {
        self.dictionary.check_code(start.len())?;
        self.run(x, start, None)
    }

    /// Encode and return the objective after every iteration; element 0 is
    /// the objective at the starting point.
    pub fn encode_traced(&self, x: &[f64]) -> Result<(SparseCode, Vec<f64>)> {
        let mut trace = Vec::new();
        let code = self.run(x, self.initial_code(), Some(&mut trace))?;
        Ok((code, trace))
    }

    fn run(
        &self,
        x: &[f64],
        start: Vec<f64>,
        mut trace: Option<&mut Vec<f64>>,
    ) -> Result<SparseCode> {
        self.dictionary.check_signal(x.len())?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SparseError::NonFinite("ista input"));
        }
        let lambda = self.cfg.lambda;
        let threshold = self.step * lambda;
        let correlation = self.dictionary.atoms.t().dot(&ArrayView1::from(x));
        let mut a = Array1::from(start);
        if let Some(t) = trace.as_deref_mut() {
            t.push(objective(
                self.dictionary,
                x,
                a.as_slice().unwrap(),
                lambda,
            )?);
        }
        let mut iterations_used = 0;
        let mut converged = false;
        for _ in 0..self.cfg.max_iter {
            iterations_used += 1;
            let grad = self.gram.dot(&a) - &correlation;
            let mut max_change = 0.0f64;
            for (ai, gi) in a.iter_mut().zip(grad.iter()) {
                let next = shrink(*ai - self.step * gi, threshold);
                max_change = max_change.max((next - *ai).abs());
                *ai = next;
            }
            if let Some(t) = trace.as_deref_mut() {
                t.push(objective(
                    self.dictionary,
                    x,
                    a.as_slice().unwrap(),
                    lambda,
                )?);
            }
            if max_change < self.cfg.tol {
                converged = true;
                break;
            }
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(SparseError::NonFinite("ista iterate"));
        }
        Ok(SparseCode {
            coefficients: a.to_vec(),
            iterations_used,
            converged,
        })
    }

    /// `||y - D a||_2` for the ISTA code of `y`.
    pub fn reconstruction_loss(&self, y: &[f64]) -> Result<f64> {
        let code = self.encode(y)?;
        residual_norm(self.dictionary, y, &code.coefficients)
    }
}

pub fn ista_encode(dictionary: &Dictionary, x: &[f64], cfg: &SparseConfig) -> Result<SparseCode> {
    IstaSolver::new(dictionary, cfg)?.encode(x)
}

/// Reconstruction residual of `y` after sparse encoding. The sparsity
/// penalty is not part of the score.
pub fn reconstruction_loss(dictionary: &Dictionary, y: &[f64], cfg: &SparseConfig) -> Result<f64> {
    IstaSolver::new(dictionary, cfg)?.reconstruction_loss(y)
}

/// Result of dictionary learning with the mean window objective before the
/// first and after every outer iteration.
#[derive(Debug, Clone)]
pub struct DictionaryFit {
    pub dictionary: Dictionary,
    pub energy_history: Vec<f64>,
}

const CODE_GRAM_EPS: f64 = 1e-8;
const MAX_BACKTRACK: usize = 30;

/// Learn `n_atoms` unit-norm atoms from equal-length windows.
///
/// Atoms start as randomly chosen (seeded) windows scaled to unit norm.
pub fn learn_dictionary(
    windows: &[Vec<f64>],
    n_atoms: usize,
    cfg: &SparseConfig,
    outer_iters: usize,
    seed: u64,
) -> Result<Dictionary> {
    learn_dictionary_with_history(windows, n_atoms, cfg, outer_iters, seed)
        .map(|fit| fit.dictionary)
}

pub fn learn_dictionary_with_history(
    windows: &[Vec<f64>],
    n_atoms: usize,
    cfg: &SparseConfig,
    outer_iters: usize,
    seed: u64,
) -> Result<DictionaryFit> {
    let init = initial_dictionary(windows, n_atoms, seed)?;
    learn_dictionary_from(init, windows, cfg, outer_iters)
}

/// Seeded initial atoms drawn from the non-zero windows.
pub fn initial_dictionary(windows: &[Vec<f64>], n_atoms: usize, seed: u64) -> Result<Dictionary> {
    if windows.is_empty() {
        return Err(SparseError::EmptyTrainingSet);
    }
    if n_atoms == 0 {
        return Err(SparseError::InvalidConfig(
            "n_atoms must be at least 1".to_string(),
        ));
    }
    let atom_len = windows[0].len();
    if atom_len == 0 {
        return Err(SparseError::DimensionMismatch {
            expected: 1,
            got: 0,
        });
    }
    if let Some(bad) = windows.iter().find(|w| w.len() != atom_len) {
        return Err(SparseError::DimensionMismatch {
            expected: atom_len,
            got: bad.len(),
        });
    }
    if windows.len() < n_atoms {
        log::warn!(
            "learning {n_atoms} atoms from only {} windows; some atoms start as perturbed copies",
            windows.len()
        );
    }
    let mut rng = rng::seeded(seed);
    let mut pool: Vec<usize> = (0..windows.len())
        .filter(|&i| norm(&windows[i]) > 1e-12)
        .collect();
    pool.shuffle(&mut rng);
    let columns: Vec<Vec<f64>> = (0..n_atoms)
        .map(|j| {
            let mut atom: Vec<f64> = if pool.is_empty() {
                (0..atom_len).map(|_| rng.sample(StandardNormal)).collect()
            } else {
                let mut w = windows[pool[j % pool.len()]].clone();
                if j >= pool.len() {
                    let scale = 1e-3 * norm(&w);
                    for v in &mut w {
                        *v += scale * rng.sample::<f64, _>(StandardNormal);
                    }
                }
                w
            };
            let n = norm(&atom);
            atom.iter_mut().for_each(|v| *v /= n);
            atom
        })
        .collect();
    Dictionary::from_columns(&columns)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Alternating minimization from a given starting dictionary.
///
/// Each outer iteration takes one gradient step on the atoms with step
/// `1 / (lambda_max(A A^T) + eps)`, renormalizes the atoms (rescaling the
/// codes so `D A` is unchanged), halves the step while the mean objective
/// would rise, then re-encodes every window warm-started from its previous
/// code. The mean objective is therefore non-increasing.
pub fn learn_dictionary_from(
    init: Dictionary,
    windows: &[Vec<f64>],
    cfg: &SparseConfig,
    outer_iters: usize,
) -> Result<DictionaryFit> {
    cfg.validate()?;
    if windows.is_empty() {
        return Err(SparseError::EmptyTrainingSet);
    }
    let atom_len = init.atom_len();
    if let Some(bad) = windows.iter().find(|w| w.len() != atom_len) {
        return Err(SparseError::DimensionMismatch {
            expected: atom_len,
            got: bad.len(),
        });
    }
    let n = windows.len();
    let mut data = Array2::zeros((atom_len, n));
    for (i, w) in windows.iter().enumerate() {
        data.column_mut(i).assign(&ArrayView1::from(w.as_slice()));
    }

    let mut dictionary = init;
    let mut codes = encode_all(&dictionary, windows, cfg, None)?;
    let mut current = mean_objective(&dictionary, &data, &codes, cfg.lambda);
    let mut energy_history = vec![current];

    for _ in 0..outer_iters {
        let residual = &data - &dictionary.atoms.dot(&codes);
        let descent = residual.dot(&codes.t());
        let code_gram = codes.dot(&codes.t());
        let mut step = 1.0 / (largest_eigenvalue(&code_gram) + CODE_GRAM_EPS);

        let mut accepted = None;
        for _ in 0..MAX_BACKTRACK {
            let (candidate, scaled) = renormalized_step(&dictionary, &codes, &descent, step);
            let value = mean_objective(&candidate, &data, &scaled, cfg.lambda);
            if value <= current {
                accepted = Some((candidate, scaled, value));
                break;
            }
            step *= 0.5;
        }
        let Some((candidate, scaled, value)) = accepted else {
            break;
        };

        let warm: Vec<Vec<f64>> = scaled.columns().into_iter().map(|c| c.to_vec()).collect();
        let refreshed = encode_all(&candidate, windows, cfg, Some(warm))?;
        let refreshed_value = mean_objective(&candidate, &data, &refreshed, cfg.lambda);
        if refreshed_value <= value {
            codes = refreshed;
            current = refreshed_value;
        } else {
            codes = scaled;
            current = value;
        }
        dictionary = candidate;
        energy_history.push(current);
    }
    Ok(DictionaryFit {
        dictionary,
        energy_history,
    })
}

fn renormalized_step(
    dictionary: &Dictionary,
    codes: &Array2<f64>,
    descent: &Array2<f64>,
    step: f64,
) -> (Dictionary, Array2<f64>) {
    let mut atoms = &dictionary.atoms + &(descent * step);
    let mut scaled = codes.clone();
    for (j, (mut col, mut row)) in atoms
        .columns_mut()
        .into_iter()
        .zip(scaled.axis_iter_mut(Axis(0)))
        .enumerate()
    {
        let n = col.dot(&col).sqrt();
        if n > 1e-12 && n.is_finite() {
            col /= n;
            row *= n;
        } else {
            col.assign(&dictionary.atoms.column(j));
        }
    }
    (Dictionary { atoms }, scaled)
}

fn encode_all(
    dictionary: &Dictionary,
    windows: &[Vec<f64>],
    cfg: &SparseConfig,
    warm: Option<Vec<Vec<f64>>>,
) -> Result<Array2<f64>> {
    let solver = IstaSolver::new(dictionary, cfg)?;
    let coded: Vec<SparseCode> = match warm {
        Some(starts) => windows
            .par_iter()
            .zip(starts)
            .map(|(w, s)| solver.encode_from(w, s))
            .collect::<Result<_>>()?,
        None => windows
            .par_iter()
            .map(|w| solver.encode(w))
            .collect::<Result<_>>()?,
    };
    let mut codes = Array2::zeros((dictionary.n_atoms(), windows.len()));
    for (i, c) in coded.iter().enumerate() {
        codes
            .column_mut(i)
            .assign(&ArrayView1::from(c.coefficients.as_slice()));
    }
    Ok(codes)
}

fn mean_objective(
    dictionary: &Dictionary,
    data: &Array2<f64>,
    codes: &Array2<f64>,
    lambda: f64,
) -> f64 {
    let residual = data - &dictionary.atoms.dot(codes);
    let squared: f64 = residual.iter().map(|r| r * r).sum();
    let penalty: f64 = codes.iter().map(|a| a.abs()).sum();
    (0.5 * squared + lambda * penalty) / data.ncols() as f64
}
