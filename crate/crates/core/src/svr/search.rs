//! Hyperparameter selection by k-fold cross-validation and per-coefficient training.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kernel::{GammaSpec, GramMatrix, KernelKind};
use super::smo::{predict, train_svr_with, SolverOptions, SvrModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// k-fold CV on the training samples.
    #[default]
    CrossValidation,
    /// Minimise the absolute error on the hidden samples directly.
    Hidden,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperparameterGrid {
    pub c_values: Vec<f64>,
    pub epsilon_values: Vec<f64>,
    /// RBF only.
    pub gammas: Vec<GammaSpec>,
    pub folds: usize,
    #[serde(default)]
    pub selection: Selection,
    #[serde(default)]
    pub solver: SolverOptions,
}

impl Default for HyperparameterGrid {
    fn default() -> Self {
        Self {
            c_values: vec![0.01, 0.1, 1.0, 10.0, 100.0, 1000.0],
            epsilon_values: vec![1e-4, 1e-3, 1e-2, 0.1],
            gammas: vec![
                GammaSpec::Fixed(0.1),
                GammaSpec::Fixed(1.0),
                GammaSpec::Fixed(10.0),
                GammaSpec::InverseFeatureVariance,
                GammaSpec::InverseFeatureCount,
            ],
            folds: 5,
            selection: Selection::CrossValidation,
            solver: SolverOptions::default(),
        }
    }
}

impl HyperparameterGrid {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: &[f64]| !v.is_empty() && v.iter().all(|x| *x > 0.0 && x.is_finite());
        if !positive(&self.c_values) || !positive(&self.epsilon_values) {
            return Err(Error::invalid("C and ε grids must be non-empty and positive"));
        }
        if self.gammas.iter().any(|g| matches!(g, GammaSpec::Fixed(v) if !(*v > 0.0))) {
            return Err(Error::invalid("fixed γ values must be positive"));
        }
        if self.folds < 2 {
            return Err(Error::invalid("need at least 2 folds"));
        }
        Ok(())
    }
}

/// Concrete γ values from the training features, sorted ascending and deduplicated.
pub fn resolve_gammas(specs: &[GammaSpec], train_features: &[Vec<f64>]) -> Result<Vec<f64>> {
    let nf = train_features.first().map_or(0, Vec::len);
    if nf == 0 {
        return Err(Error::invalid("cannot derive γ without training features"));
    }
    let n = train_features.len() as f64;
    let mean_var = (0..nf)
        .map(|j| {
            let mean = train_features.iter().map(|r| r[j]).sum::<f64>() / n;
            train_features.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n
        })
        .sum::<f64>()
        / nf as f64;
    let mut out: Vec<f64> = specs
        .iter()
        .filter_map(|s| match *s {
            GammaSpec::Fixed(v) => Some(v),
            GammaSpec::InverseFeatureVariance if mean_var > 0.0 => Some(1.0 / (nf as f64 * mean_var)),
            GammaSpec::InverseFeatureVariance => None,
            GammaSpec::InverseFeatureCount => Some(1.0 / nf as f64),
        })
        .collect();
    out.sort_by(f64::total_cmp);
    out.dedup();
    Ok(out)
}

/// Shuffled k-fold validation index sets over `0..n`; earlier folds take the remainder.
pub fn fold_indices(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 || n < folds {
        return Err(Error::invalid(format!("cannot split {n} samples into {folds} folds")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let base = n / folds;
    let extra = n % folds;
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let len = base + usize::from(f < extra);
        out.push(idx[start..start + len].to_vec());
        start += len;
    }
    Ok(out)
}

/// Selected hyperparameters and their validation score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvScore {
    pub kernel: KernelKind,
    pub c: f64,
    pub epsilon: f64,
    pub score: f64,
}

fn sub(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |a, b| m[(rows[a], cols[b])])
}

/// Mean absolute error of a model trained on `fit` and evaluated on `eval`.
fn holdout_error(
    gram: &DMatrix<f64>,
    fit: &[usize],
    eval: &[usize],
    y_fit: &[f64],
    y_eval: &[f64],
    c: f64,
    eps: f64,
    solver: &SolverOptions,
) -> Result<f64> {
    let model = train_svr_with(&sub(gram, fit, fit), y_fit, c, eps, solver)?;
    let cross = sub(gram, eval, fit);
    let mut err = 0.0;
    for (r, y) in y_eval.iter().enumerate() {
        let row: Vec<f64> = cross.row(r).iter().copied().collect();
        err += (predict(&model, &row)? - y).abs();
    }
    Ok(err / y_eval.len() as f64)
}

/// Grid search over candidate Gram matrices (one per kernel parameter) and
/// the `(C, ε)` grid.
///
/// `grams` are indexed by global sample id; `train` selects the rows the
/// search may use and `y` is aligned with `train`. With
/// [`Selection::Hidden`], `hidden` supplies the evaluation rows and targets.
/// Ties resolve toward smaller C, then larger ε, then the earlier candidate.
pub fn grid_search(
    grams: &[GramMatrix],
    train: &[usize],
    y: &[f64],
    hidden: Option<(&[usize], &[f64])>,
    grid: &HyperparameterGrid,
    seed: u64,
) -> Result<CvScore> {
    grid.validate()?;
    if grams.is_empty() {
        return Err(Error::invalid("grid search needs at least one kernel candidate"));
    }
    if y.len() != train.len() {
        return Err(Error::invalid("target count differs from training index count"));
    }
    let mut c_sorted = grid.c_values.clone();
    c_sorted.sort_by(f64::total_cmp);
    let mut eps_sorted = grid.epsilon_values.clone();
    eps_sorted.sort_by(|a, b| b.total_cmp(a));

    let splits: Vec<(Vec<usize>, Vec<usize>)> = match grid.selection {
        Selection::CrossValidation => {
            let folds = fold_indices(train.len(), grid.folds, seed)?;
            folds
                .iter()
                .map(|val| {
                    let fit: Vec<usize> = (0..train.len()).filter(|k| !val.contains(k)).collect();
                    (fit, val.clone())
                })
                .collect()
        }
        Selection::Hidden => Vec::new(),
    };
    if grid.selection == Selection::Hidden && hidden.is_none() {
        return Err(Error::invalid("hidden-set selection requires hidden samples"));
    }

    let mut best: Option<CvScore> = None;
    for &c in &c_sorted {
        for &eps in &eps_sorted {
            for g in grams {
                let score = match grid.selection {
                    Selection::CrossValidation => {
                        let mut total = 0.0;
                        let mut failed = false;
                        for (fit, val) in &splits {
                            let fit_ids: Vec<usize> = fit.iter().map(|&k| train[k]).collect();
                            let val_ids: Vec<usize> = val.iter().map(|&k| train[k]).collect();
                            let y_fit: Vec<f64> = fit.iter().map(|&k| y[k]).collect();
                            let y_val: Vec<f64> = val.iter().map(|&k| y[k]).collect();
                            match holdout_error(&g.entries, &fit_ids, &val_ids, &y_fit, &y_val, c, eps, &grid.solver) {
                                Ok(e) => total += e,
                                Err(e) if e.is_convergence_failure() => {
                                    log::warn!("grid cell C={c} ε={eps} {:?} skipped: {e}", g.kind);
                                    failed = true;
                                    break;
                                }
                                Err(e) => return Err(e),
                            }
                        }
                        if failed { f64::INFINITY } else { total / splits.len() as f64 }
                    }
                    Selection::Hidden => {
                        let (hid, y_hid) = hidden.expect("checked above");
                        match holdout_error(&g.entries, train, hid, y, y_hid, c, eps, &grid.solver) {
                            Ok(e) => e,
                            Err(e) if e.is_convergence_failure() => f64::INFINITY,
                            Err(e) => return Err(e),
                        }
                    }
                };
                let better = match best {
                    None => true,
                    Some(b) => score < b.score - 1e-12 * (1.0 + b.score.abs()),
                };
                if better {
                    best = Some(CvScore { kernel: g.kind, c, epsilon: eps, score });
                }
            }
        }
    }
    let best = best.expect("non-empty grid");
    if !best.score.is_finite() {
        return Err(Error::SvrNotConverged { passes: grid.solver.max_iterations, gap: f64::NAN });
    }
    Ok(best)
}

/// One grid search and one final fit per expansion coefficient.
///
/// `targets[k][l]` is coefficient `l` of training sample `train[k]`.
pub fn train_multi(
    grams: &[GramMatrix],
    train: &[usize],
    targets: &[Vec<f64>],
    hidden: Option<(&[usize], &[Vec<f64>])>,
    grid: &HyperparameterGrid,
    seed: u64,
) -> Result<Vec<SvrModel>> {
    if targets.len() != train.len() {
        return Err(Error::invalid("target rows differ from training index count"));
    }
    let n_coef = targets.first().map_or(0, Vec::len);
    if n_coef == 0 || targets.iter().any(|r| r.len() != n_coef) {
        return Err(Error::invalid("target rows must be non-empty and of equal length"));
    }
    (0..n_coef)
        .into_par_iter()
        .map(|l| {
            let y: Vec<f64> = targets.iter().map(|r| r[l]).collect();
            let y_hidden: Option<Vec<f64>> = hidden.map(|(_, t)| t.iter().map(|r| r[l]).collect());
            let hid = hidden.map(|(idx, _)| idx).zip(y_hidden.as_deref());
            let choice = grid_search(grams, train, &y, hid, grid, seed)?;
            let gram = grams
                .iter()
                .find(|g| g.kind == choice.kernel)
                .expect("selected kernel is a candidate");
            let mut model = train_svr_with(&sub(&gram.entries, train, train), &y, choice.c, choice.epsilon, &grid.solver)?;
            model.kernel = choice.kernel;
            model.target_index = l;
            model.training_ids = train.to_vec();
            Ok(model)
        })
        .collect()
}
