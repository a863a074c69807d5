//! End-to-end two-step estimation.
//!
//! Every trajectory is smoothed once on the quadrature grid (bandwidth chosen
//! by cross-validation), each equation's functional matrix is assembled, the
//! SCAD penalty level is chosen by K-fold cross-validation, and the penalized
//! fit is run row by row.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{cross_moments, gram_matrix, FunctionalMatrix, QuadratureGrid, QuadratureRule};
use crate::series::TimeSeries;
use crate::smoother::{cv_bandwidth, local_poly_fit, min_bandwidth, smooth_curve, Kernel, SmoothedCurve, SmootherConfig};
use crate::sparse_solver::{fit_scad_grid, lambda_grid, DescentOptions, InitStrategy, ScadParams, SparseFit, DEFAULT_A};

/// How held-out observations score a candidate penalty level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationLoss {
    /// `βᵀQ_val β - 2 b_valᵀβ` from functionals of the held-out fold smoothed on its own.
    #[default]
    Functional,
    /// Squared error between finite-difference slopes of the raw target
    /// observations and `βᵀ m̂(X_i)` at held-out times.
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub order: usize,
    pub kernel: Kernel,
    /// Candidate bandwidths; `None` builds a data-driven grid.
    pub bandwidths: Option<Vec<f64>>,
    pub bandwidth_count: usize,
    pub bandwidth_max: f64,
    pub bandwidth_folds: usize,
    /// Candidate penalty levels; `None` uses a per-row log grid below `λ_max`.
    pub lambdas: Option<Vec<f64>>,
    pub lambda_count: usize,
    pub lambda_ratio: f64,
    pub lambda_folds: usize,
    pub scad_a: f64,
    pub grid_size: usize,
    pub quadrature: QuadratureRule,
    pub tol: f64,
    pub max_iter: usize,
    pub validation: ValidationLoss,
    pub init: InitStrategy,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            order: 3,
            kernel: Kernel::Epanechnikov,
            bandwidths: None,
            bandwidth_count: 12,
            bandwidth_max: 0.5,
            bandwidth_folds: 5,
            lambdas: None,
            lambda_count: 20,
            lambda_ratio: 1e-4,
            lambda_folds: 5,
            scad_a: DEFAULT_A,
            grid_size: crate::functionals::DEFAULT_GRID_SIZE,
            quadrature: QuadratureRule::Boole,
            tol: crate::sparse_solver::DEFAULT_TOL,
            max_iter: crate::sparse_solver::DEFAULT_MAX_ITER,
            validation: ValidationLoss::Functional,
            init: InitStrategy::Best,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.order < 1 {
            return bad("order must be at least 1".into());
        }
        if self.bandwidth_folds < 2 || self.lambda_folds < 2 {
            return bad("fold counts must be at least 2".into());
        }
        if let Some(hs) = &self.bandwidths {
            if hs.is_empty() || hs.iter().any(|h| !(*h > 0.0) || !h.is_finite()) {
                return bad(format!("bandwidth candidates must be positive: {hs:?}"));
            }
        } else if self.bandwidth_count == 0 || !(self.bandwidth_max > 0.0) {
            return bad("automatic bandwidth grid needs a positive count and maximum".into());
        }
        if let Some(ls) = &self.lambdas {
            if ls.is_empty() || ls.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
                return bad(format!("lambda candidates must be nonnegative: {ls:?}"));
            }
        } else if self.lambda_count == 0 || !(self.lambda_ratio > 0.0 && self.lambda_ratio < 1.0) {
            return bad("automatic lambda grid needs a positive count and a ratio in (0, 1)".into());
        }
        ScadParams::new(0.0).with_a(self.scad_a).validate()?;
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return bad("tol and max_iter must be positive".into());
        }
        self.quadrature_grid().map(|_| ())
    }

    pub fn quadrature_grid(&self) -> Result<QuadratureGrid> {
        QuadratureGrid::new(self.grid_size, self.quadrature)
    }

    pub fn smoother(&self, bandwidth: f64) -> SmootherConfig {
        SmootherConfig {
            bandwidth,
            order: self.order,
            kernel: self.kernel,
        }
    }

    pub fn descent(&self) -> DescentOptions {
        DescentOptions {
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }

    pub fn scad(&self, lambda: f64) -> ScadParams {
        ScadParams::new(lambda).with_a(self.scad_a)
    }
}

/// Every trajectory smoothed on the quadrature grid.
#[derive(Debug, Clone)]
pub struct SmoothedSet {
    pub curves: Vec<SmoothedCurve>,
    pub bandwidths: Vec<f64>,
}

/// Smallest bandwidth that leaves `order + 1` observations in every grid window.
fn grid_min_bandwidth(times: &[f64], quad: &QuadratureGrid, order: usize) -> Result<f64> {
    min_bandwidth(times, quad.points(), order + 1).ok_or_else(|| {
        Error::InsufficientLocalData {
            x0: 0.0,
            available: times.len(),
            required: order + 1,
        }
    })
}

/// Log-spaced bandwidths from the smallest grid-admissible value up to `cfg.bandwidth_max`.
pub fn bandwidth_candidates(times: &[f64], quad: &QuadratureGrid, cfg: &PipelineConfig) -> Result<Vec<f64>> {
    if let Some(hs) = &cfg.bandwidths {
        return Ok(hs.clone());
    }
    // one extra point so that training folds usually still fit
    let lo = grid_min_bandwidth(times, quad, cfg.order + 1)?;
    let hi = cfg.bandwidth_max.max(lo * 1.5);
    let k = cfg.bandwidth_count;
    if k == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..k)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (k - 1) as f64).exp())
        .collect())
}

/// Chooses each column's bandwidth by cross-validation and smooths it on the grid.
pub fn smooth_series(ts: &TimeSeries, cfg: &PipelineConfig, quad: &QuadratureGrid) -> Result<SmoothedSet> {
    let times = ts.times();
    let floor = grid_min_bandwidth(times, quad, cfg.order)?;
    let candidates: Vec<f64> = bandwidth_candidates(times, quad, cfg)?
        .into_iter()
        .filter(|&h| h >= floor)
        .collect();
    if candidates.is_empty() {
        return Err(Error::AllCandidatesFailed(format!(
            "every bandwidth candidate is below {floor}, the smallest usable on the grid"
        )));
    }
    let base = cfg.smoother(1.0);
    let bandwidths = (0..ts.p())
        .into_par_iter()
        .map(|j| {
            cv_bandwidth(times, &ts.column(j), &candidates, cfg.bandwidth_folds, &base)
                .map_err(|e| e.context(format!("column {}", ts.names()[j])))
        })
        .collect::<Result<Vec<_>>>()?;
    smooth_with(ts, &bandwidths, cfg, quad)
}

/// Smooths every column with the given bandwidths, raising any that leave a
/// grid window with too few observations.
pub fn smooth_with(ts: &TimeSeries, bandwidths: &[f64], cfg: &PipelineConfig, quad: &QuadratureGrid) -> Result<SmoothedSet> {
    if bandwidths.len() != ts.p() {
        return Err(Error::LengthMismatch {
            expected: ts.p(),
            actual: bandwidths.len(),
        });
    }
    let floor = grid_min_bandwidth(ts.times(), quad, cfg.order)?;
    let bandwidths: Vec<f64> = bandwidths.iter().map(|&h| h.max(floor)).collect();
    let curves = bandwidths
        .par_iter()
        .enumerate()
        .map(|(j, &h)| {
            smooth_curve(ts.times(), &ts.column(j), quad.points(), &cfg.smoother(h))
                .map_err(|e| e.context(format!("column {}", ts.names()[j])))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SmoothedSet { curves, bandwidths })
}

enum Validation {
    Functional {
        curves: Vec<SmoothedCurve>,
        gram: DMatrix<f64>,
    },
    FiniteDifference {
        /// held-out rows that have a predecessor
        rows: Vec<usize>,
        /// training-fold smooths at those rows' times, one row per entry of `rows`
        predicted: DMatrix<f64>,
    },
}

struct Fold {
    train_curves: Vec<SmoothedCurve>,
    train_gram: DMatrix<f64>,
    validation: Validation,
}

/// Cross-validation of the penalty level; fold smoothing is shared by all targets.
pub struct LambdaCv<'a> {
    ts: &'a TimeSeries,
    cfg: &'a PipelineConfig,
    quad: &'a QuadratureGrid,
    folds: Vec<Fold>,
}

/// Candidate penalty levels, their cross-validated losses, and the winner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSelection {
    pub chosen: f64,
    pub candidates: Vec<f64>,
    /// `None` marks a candidate whose fit failed on some fold.
    pub scores: Vec<Option<f64>>,
}

impl<'a> LambdaCv<'a> {
    /// Splits observations by `index % folds` and smooths training (and
    /// validation) folds with `bandwidths`, raised where a fold is too sparse.
    pub fn new(ts: &'a TimeSeries, bandwidths: &[f64], cfg: &'a PipelineConfig, quad: &'a QuadratureGrid) -> Result<Self> {
        let k = cfg.lambda_folds;
        if k < 2 {
            return Err(Error::InvalidConfig(format!("need at least 2 folds, got {k}")));
        }
        let n = ts.n();
        let folds = (0..k)
            .map(|f| {
                let train_rows: Vec<usize> = (0..n).filter(|i| i % k != f).collect();
                let held_rows: Vec<usize> = (0..n).filter(|i| i % k == f).collect();
                let train = ts.select_rows(&train_rows);
                let train_set = smooth_with(&train, bandwidths, cfg, quad)
                    .map_err(|e| e.context(format!("training fold {f}")))?;
                let train_gram = gram_matrix(&train_set.curves, quad)?;
                let validation = match cfg.validation {
                    ValidationLoss::Functional => {
                        let held = ts.select_rows(&held_rows);
                        let set = smooth_with(&held, bandwidths, cfg, quad)
                            .map_err(|e| e.context(format!("validation fold {f}")))?;
                        let gram = gram_matrix(&set.curves, quad)?;
                        Validation::Functional {
                            curves: set.curves,
                            gram,
                        }
                    }
                    ValidationLoss::FiniteDifference => {
                        let rows: Vec<usize> = held_rows.into_iter().filter(|&i| i > 0).collect();
                        let mut predicted = DMatrix::zeros(rows.len(), ts.p());
                        for j in 0..ts.p() {
                            let col = train.column(j);
                            let smoother = cfg.smoother(train_set.bandwidths[j]);
                            for (r, &i) in rows.iter().enumerate() {
                                predicted[(r, j)] = local_poly_fit(train.times(), &col, ts.times()[i], &smoother)?[0];
                            }
                        }
                        Validation::FiniteDifference { rows, predicted }
                    }
                };
                Ok(Fold {
                    train_curves: train_set.curves,
                    train_gram,
                    validation,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LambdaCv { ts, cfg, quad, folds })
    }

    /// Summed validation loss of every candidate for equation `target`.
    pub fn scores(&self, target: usize, candidates: &[f64]) -> Result<Vec<Option<f64>>> {
        let mut totals: Vec<Option<f64>> = vec![Some(0.0); candidates.len()];
        for fold in &self.folds {
            let b = cross_moments(&fold.train_curves, target, self.quad)?;
            let fm = FunctionalMatrix::new(target, b, fold.train_gram.clone())?;
            let val_b = match &fold.validation {
                Validation::Functional { curves, .. } => Some(cross_moments(curves, target, self.quad)?),
                Validation::FiniteDifference { .. } => None,
            };
            match fit_scad_grid(&fm, candidates, self.cfg.scad_a, self.cfg.init, self.cfg.descent()) {
                Ok(fits) => {
                    for (slot, fit) in totals.iter_mut().zip(fits) {
                        if let Some(acc) = slot.as_mut() {
                            *acc += self.loss(fold, val_b.as_ref(), target, &fit.beta);
                        }
                    }
                }
                Err(_) => totals.iter_mut().for_each(|s| *s = None),
            }
        }
        Ok(totals)
    }

    fn loss(&self, fold: &Fold, val_b: Option<&DVector<f64>>, target: usize, beta: &[f64]) -> f64 {
        let beta = DVector::from_column_slice(beta);
        match &fold.validation {
            Validation::Functional { gram, .. } => {
                let b = val_b.expect("functional validation carries b");
                (beta.transpose() * gram * &beta)[(0, 0)] - 2.0 * b.dot(&beta)
            }
            Validation::FiniteDifference { rows, predicted } => {
                let t = self.ts.times();
                let y = self.ts.values();
                let fitted = predicted * &beta;
                rows.iter()
                    .enumerate()
                    .map(|(r, &i)| {
                        let slope = (y[(i, target)] - y[(i - 1, target)]) / (t[i] - t[i - 1]);
                        (slope - fitted[r]).powi(2)
                    })
                    .sum()
            }
        }
    }

    /// Cross-validated choice among `candidates`; near-ties go to the larger λ.
    pub fn select(&self, target: usize, candidates: &[f64]) -> Result<LambdaSelection> {
        if candidates.is_empty() {
            return Err(Error::InvalidConfig("no lambda candidates".into()));
        }
        let scores = self.scores(target, candidates)?;
        let chosen = pick_largest(candidates, &scores).ok_or_else(|| {
            Error::AllCandidatesFailed(format!("no penalty level could be fitted for equation {target}"))
        })?;
        Ok(LambdaSelection {
            chosen,
            candidates: candidates.to_vec(),
            scores,
        })
    }
}

/// Minimum-loss candidate; losses within `1e-12` (relative) of the minimum
/// count as ties and go to the largest candidate.
pub(crate) fn pick_largest(candidates: &[f64], scores: &[Option<f64>]) -> Option<f64> {
    let best = scores.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return None;
    }
    let tie = 1e-12 * best.abs().max(f64::MIN_POSITIVE);
    candidates
        .iter()
        .zip(scores)
        .filter(|(_, s)| matches!(s, Some(l) if *l <= best + tie))
        .map(|(&l, _)| l)
        .max_by(f64::total_cmp)
}

/// Fit of one equation of the network.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RowFit {
    pub target: usize,
    pub selection: LambdaSelection,
    pub fit: SparseFit,
}

/// Penalized estimate of the full coefficient matrix.
#[derive(Debug, Clone)]
pub struct NetworkFit {
    pub coefficients: DMatrix<f64>,
    pub rows: Vec<RowFit>,
    pub bandwidths: Vec<f64>,
}

/// Candidate λ values for one row: configured list or the log grid below `λ_max`.
pub fn lambda_candidates(fm: &FunctionalMatrix, cfg: &PipelineConfig) -> Vec<f64> {
    match &cfg.lambdas {
        Some(ls) => ls.clone(),
        None => lambda_grid(fm, cfg.lambda_count, cfg.lambda_ratio, cfg.scad_a),
    }
}

/// Cross-validates λ for equation `target` and runs the penalized fit on the full data.
pub fn fit_row(
    target: usize,
    smoothed: &SmoothedSet,
    gram: &DMatrix<f64>,
    cv: &LambdaCv<'_>,
    cfg: &PipelineConfig,
    quad: &QuadratureGrid,
) -> Result<RowFit> {
    let b = cross_moments(&smoothed.curves, target, quad)?;
    let fm = FunctionalMatrix::new(target, b, gram.clone())?;
    let selection = cv.select(target, &lambda_candidates(&fm, cfg))?;
    let k = selection
        .candidates
        .iter()
        .position(|&l| l == selection.chosen)
        .expect("chosen from candidates");
    let fit = fit_scad_grid(&fm, &selection.candidates, cfg.scad_a, cfg.init, cfg.descent())?.swap_remove(k);
    Ok(RowFit { target, selection, fit })
}

/// Fits every equation of the system.
pub fn fit_network(ts: &TimeSeries, cfg: &PipelineConfig) -> Result<NetworkFit> {
    cfg.validate()?;
    let quad = cfg.quadrature_grid()?;
    let smoothed = smooth_series(ts, cfg, &quad)?;
    let gram = gram_matrix(&smoothed.curves, &quad)?;
    let cv = LambdaCv::new(ts, &smoothed.bandwidths, cfg, &quad)?;
    let rows = (0..ts.p())
        .into_par_iter()
        .map(|r| fit_row(r, &smoothed, &gram, &cv, cfg, &quad).map_err(|e| e.context(format!("row {}", ts.names()[r]))))
        .collect::<Result<Vec<_>>>()?;
    let p = ts.p();
    let mut coefficients = DMatrix::zeros(p, p);
    for row in &rows {
        for (j, &v) in row.fit.beta.iter().enumerate() {
            coefficients[(row.target, j)] = v;
        }
    }
    Ok(NetworkFit {
        coefficients,
        rows,
        bandwidths: smoothed.bandwidths,
    })
}
