//! SCAD-penalized quadratic least squares.
//!
//! Given `[b, Q]`, minimizes
//!
//! ```text
//! S(β) = βᵀQβ - 2bᵀβ + Σ_j p_λ(|β_j|)
//! ```
//!
//! by cyclic coordinate descent with an exact univariate SCAD step. The
//! β-free constant `∫ m'^2 w` is omitted, so reported objectives are offset
//! by it. Also provides the unpenalized, support-restricted, and
//! finite-difference ("TS") baselines.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::FunctionalMatrix;
use crate::series::TimeSeries;

pub const DEFAULT_A: f64 = 3.7;
pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 10_000;

const MIN_DIAGONAL: f64 = 1e-14;
const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScadParams {
    pub lambda: f64,
    pub a: f64,
}

impl ScadParams {
    pub fn new(lambda: f64) -> Self {
        ScadParams { lambda, a: DEFAULT_A }
    }

    pub fn with_a(self, a: f64) -> Self {
        ScadParams { a, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidConfig(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.a > 2.0) || !self.a.is_finite() {
            return Err(Error::InvalidConfig(format!("SCAD a must exceed 2, got {}", self.a)));
        }
        Ok(())
    }
}

/// `p'_λ(θ)` for `θ >= 0`.
pub fn scad_derivative(theta: f64, params: &ScadParams) -> f64 {
    let ScadParams { lambda, a } = *params;
    if theta <= lambda {
        lambda
    } else {
        (a * lambda - theta).max(0.0) / (a - 1.0)
    }
}

/// `p_λ(θ)` for `θ >= 0`, with `p_λ(0) = 0`.
pub fn scad_penalty(theta: f64, params: &ScadParams) -> f64 {
    let ScadParams { lambda, a } = *params;
    if theta <= lambda {
        lambda * theta
    } else if theta <= a * lambda {
        (2.0 * a * lambda * theta - theta * theta - lambda * lambda) / (2.0 * (a - 1.0))
    } else {
        (a + 1.0) * lambda * lambda / 2.0
    }
}

/// Global minimizer of `q (β - z)^2 / 2 + p_λ(|β|)`.
///
/// Every branch of the penalty contributes its clamped stationary point and
/// the branch endpoints; the candidate with the lowest objective wins, the
/// smallest magnitude winning exact ties.
pub fn scad_threshold(z: f64, q: f64, params: &ScadParams) -> f64 {
    let ScadParams { lambda, a } = *params;
    let za = z.abs();
    let objective = |b: f64| 0.5 * q * (b - za).powi(2) + scad_penalty(b, params);

    let inner = (za - lambda / q).clamp(0.0, lambda);
    let denom = q * (a - 1.0) - 1.0;
    let middle = if denom > 0.0 {
        ((q * za * (a - 1.0) - a * lambda) / denom).clamp(lambda, a * lambda)
    } else {
        lambda
    };
    let outer = za.max(a * lambda);
    let mut candidates = [0.0, inner, lambda, middle, a * lambda, outer];
    candidates.sort_by(f64::total_cmp);

    let mut best = 0.0;
    let mut best_obj = objective(0.0);
    for &c in &candidates[1..] {
        let obj = objective(c);
        if obj < best_obj {
            best = c;
            best_obj = obj;
        }
    }
    if best == 0.0 {
        0.0
    } else {
        best.copysign(z)
    }
}

/// Result of a (penalized) least-squares fit of one equation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseFit {
    pub beta: Vec<f64>,
    /// Indices with a nonzero coefficient.
    pub support: Vec<usize>,
    /// `S(β)` without the β-free constant.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub params: ScadParams,
    /// Objective before the first sweep and after each sweep.
    #[serde(skip)]
    pub objective_path: Vec<f64>,
}

impl SparseFit {
    fn from_beta(fm: &FunctionalMatrix, beta: Vec<f64>, params: ScadParams) -> Self {
        let objective = scad_objective(fm, &beta, &params);
        SparseFit {
            support: support_of(&beta),
            beta,
            objective,
            iterations: 0,
            converged: true,
            params,
            objective_path: vec![objective],
        }
    }
}

fn support_of(beta: &[f64]) -> Vec<usize> {
    beta.iter().enumerate().filter(|(_, b)| **b != 0.0).map(|(j, _)| j).collect()
}

/// `βᵀQβ - 2bᵀβ + Σ p_λ(|β_j|)`.
pub fn scad_objective(fm: &FunctionalMatrix, beta: &[f64], params: &ScadParams) -> f64 {
    let b = DVector::from_column_slice(beta);
    let quad = (b.transpose() * &fm.q * &b)[(0, 0)];
    let penalty: f64 = beta.iter().map(|x| scad_penalty(x.abs(), params)).sum();
    quad - 2.0 * fm.b.dot(&b) + penalty
}

/// Ratio of extreme eigenvalues of a symmetric matrix (infinite when not positive definite).
pub fn condition_number(q: &DMatrix<f64>) -> f64 {
    if q.is_empty() {
        return 1.0;
    }
    let eig = q.clone().symmetric_eigen();
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn solve_spd(q: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let condition = condition_number(q);
    if !(condition < MAX_CONDITION) {
        return Err(Error::IllConditioned { condition });
    }
    let chol = q.clone().cholesky().ok_or(Error::IllConditioned { condition })?;
    Ok(chol.solve(b))
}

/// Unpenalized solution of `Qβ = b`.
pub fn fit_ols(fm: &FunctionalMatrix) -> Result<SparseFit> {
    let beta = solve_spd(&fm.q, &fm.b)?;
    Ok(SparseFit::from_beta(fm, beta.iter().copied().collect(), ScadParams::new(0.0)))
}

/// Unpenalized solution restricted to `support`; zeros elsewhere.
pub fn fit_oracle(fm: &FunctionalMatrix, support: &[usize]) -> Result<SparseFit> {
    let p = fm.p();
    if let Some(&j) = support.iter().find(|&&j| j >= p) {
        return Err(Error::InvalidConfig(format!("support index {j} out of range for p={p}")));
    }
    let mut beta = vec![0.0; p];
    if !support.is_empty() {
        let sub_q = fm.q.select_rows(support).select_columns(support);
        let sub_b = DVector::from_iterator(support.len(), support.iter().map(|&j| fm.b[j]));
        let sol = solve_spd(&sub_q, &sub_b)?;
        for (k, &j) in support.iter().enumerate() {
            beta[j] = sol[k];
        }
    }
    Ok(SparseFit::from_beta(fm, beta, ScadParams::new(0.0)))
}

/// Settings for [`fit_scad`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for DescentOptions {
    fn default() -> Self {
        DescentOptions {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

/// Default starting point: the unpenalized solution when `Q` is well
/// conditioned, otherwise zero.
pub fn default_init(fm: &FunctionalMatrix) -> Vec<f64> {
    match solve_spd(&fm.q, &fm.b) {
        Ok(beta) => beta.iter().copied().collect(),
        Err(_) => vec![0.0; fm.p()],
    }
}

/// Cyclic coordinate descent on the SCAD-penalized objective.
///
/// Sweeps run in ascending index order until the largest coordinate change
/// in a sweep falls below `opts.tol`; hitting `opts.max_iter` sweeps returns
/// the current iterate with `converged = false`.
pub fn fit_scad(
    fm: &FunctionalMatrix,
    params: &ScadParams,
    init: Option<&[f64]>,
    opts: DescentOptions,
) -> Result<SparseFit> {
    params.validate()?;
    let p = fm.p();
    for j in 0..p {
        let d = fm.q[(j, j)];
        if !(d > MIN_DIAGONAL) {
            return Err(Error::ZeroDiagonal { index: j, value: d });
        }
    }
    let mut beta = match init {
        Some(v) if v.len() != p => {
            return Err(Error::LengthMismatch {
                expected: p,
                actual: v.len(),
            })
        }
        Some(v) => v.to_vec(),
        None => default_init(fm),
    };

    // running Qβ
    let mut qb: Vec<f64> = (&fm.q * DVector::from_column_slice(&beta)).iter().copied().collect();
    let mut path = vec![scad_objective(fm, &beta, params)];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        iterations += 1;
        let mut max_change: f64 = 0.0;
        for j in 0..p {
            let qjj = fm.q[(j, j)];
            let z = (fm.b[j] - (qb[j] - qjj * beta[j])) / qjj;
            let next = scad_threshold(z, 2.0 * qjj, params);
            let delta = next - beta[j];
            if delta != 0.0 {
                for (k, g) in qb.iter_mut().enumerate() {
                    *g += delta * fm.q[(k, j)];
                }
                beta[j] = next;
                max_change = max_change.max(delta.abs());
            }
        }
        let obj = scad_objective(fm, &beta, params);
        if !obj.is_finite() {
            return Err(Error::InvalidData(format!("objective became non-finite at sweep {iterations}")));
        }
        path.push(obj);
        if max_change < opts.tol {
            converged = true;
            break;
        }
    }

    Ok(SparseFit {
        support: support_of(&beta),
        objective: *path.last().expect("path starts non-empty"),
        beta,
        iterations,
        converged,
        params: *params,
        objective_path: path,
    })
}

/// Starting points used when fitting a grid of penalty levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// Warm starts along a decreasing λ path that begins at zero.
    Path,
    /// Every level starts from [`default_init`].
    Ols,
    /// Both of the above; the lower penalized objective wins at each level.
    #[default]
    Best,
}

/// Fits every level of `lambdas` under `init`; results follow the order of `lambdas`.
pub fn fit_scad_grid(
    fm: &FunctionalMatrix,
    lambdas: &[f64],
    a: f64,
    init: InitStrategy,
    opts: DescentOptions,
) -> Result<Vec<SparseFit>> {
    match init {
        InitStrategy::Path => fit_scad_path(fm, lambdas, a, opts),
        InitStrategy::Best => {
            let path = fit_scad_path(fm, lambdas, a, opts)?;
            let start = default_init(fm);
            path.into_iter()
                .zip(lambdas)
                .map(|(warm, &l)| {
                    let cold = fit_scad(fm, &ScadParams::new(l).with_a(a), Some(&start), opts)?;
                    Ok(if cold.objective < warm.objective { cold } else { warm })
                })
                .collect()
        }
        InitStrategy::Ols => {
            let start = default_init(fm);
            lambdas
                .iter()
                .map(|&l| fit_scad(fm, &ScadParams::new(l).with_a(a), Some(&start), opts))
                .collect()
        }
    }
}

/// Fits every penalty level in `lambdas`, sweeping from the largest to the
/// smallest. The largest starts from zero and each later fit starts from
/// the previous solution. Results are returned in the order of `lambdas`.
pub fn fit_scad_path(fm: &FunctionalMatrix, lambdas: &[f64], a: f64, opts: DescentOptions) -> Result<Vec<SparseFit>> {
    let mut order: Vec<usize> = (0..lambdas.len()).collect();
    order.sort_by(|&i, &j| lambdas[j].total_cmp(&lambdas[i]));
    let mut warm = vec![0.0; fm.p()];
    let mut fits: Vec<Option<SparseFit>> = vec![None; lambdas.len()];
    for k in order {
        let fit = fit_scad(fm, &ScadParams::new(lambdas[k]).with_a(a), Some(&warm), opts)?;
        warm.clone_from(&fit.beta);
        fits[k] = Some(fit);
    }
    Ok(fits.into_iter().map(|f| f.expect("every level fitted")).collect())
}

/// Finite-difference regression rows for equation `target`: responses
/// `(Y_i,target - Y_{i-1},target) / (X_i - X_{i-1})` and covariates `Y_i·`
/// for `i = 2..n` (one-based).
pub fn ts_rows(ts: &TimeSeries, target: usize) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (n, p) = (ts.n(), ts.p());
    if n < 2 {
        return Err(Error::InvalidData(format!("finite differences need n >= 2, got {n}")));
    }
    if target >= p {
        return Err(Error::InvalidConfig(format!("target {target} out of range for p={p}")));
    }
    let t = ts.times();
    let y = ts.values();
    let mut response = DVector::zeros(n - 1);
    for i in 1..n {
        let gap = t[i] - t[i - 1];
        if !(gap > 0.0) {
            return Err(Error::ZeroTimeGap { index: i - 1 });
        }
        response[i - 1] = (y[(i, target)] - y[(i - 1, target)]) / gap;
    }
    Ok((response, y.rows(1, n - 1).into_owned()))
}

fn gram_of(target: usize, response: &DVector<f64>, covariates: &DMatrix<f64>) -> Result<FunctionalMatrix> {
    let xt = covariates.transpose();
    FunctionalMatrix::new(target, &xt * response, &xt * covariates)
}

/// Gram form `[Xᵀy, XᵀX]` of the finite-difference regression (see [`ts_rows`]).
pub fn ts_gram(ts: &TimeSeries, target: usize) -> Result<FunctionalMatrix> {
    let (response, covariates) = ts_rows(ts, target)?;
    gram_of(target, &response, &covariates)
}

/// K-fold choice of λ for the finite-difference estimator: rows are split
/// by `index % folds` and scored by held-out squared residuals. Near-ties go
/// to the larger λ.
pub fn cv_ts_lambda(
    ts: &TimeSeries,
    target: usize,
    candidates: &[f64],
    folds: usize,
    a: f64,
    init: InitStrategy,
    opts: DescentOptions,
) -> Result<(f64, Vec<Option<f64>>)> {
    if folds < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 folds, got {folds}")));
    }
    if candidates.is_empty() {
        return Err(Error::InvalidConfig("no lambda candidates".into()));
    }
    let (response, covariates) = ts_rows(ts, target)?;
    let m = response.len();
    let mut totals: Vec<Option<f64>> = vec![Some(0.0); candidates.len()];
    for f in 0..folds {
        let train: Vec<usize> = (0..m).filter(|i| i % folds != f).collect();
        let held: Vec<usize> = (0..m).filter(|i| i % folds == f).collect();
        let fm = gram_of(target, &response.select_rows(&train), &covariates.select_rows(&train))?;
        let held_x = covariates.select_rows(&held);
        let held_y = response.select_rows(&held);
        match fit_scad_grid(&fm, candidates, a, init, opts) {
            Ok(fits) => {
                for (slot, fit) in totals.iter_mut().zip(fits) {
                    if let Some(acc) = slot.as_mut() {
                        *acc += (&held_y - &held_x * DVector::from_vec(fit.beta)).norm_squared();
                    }
                }
            }
            Err(_) => totals.iter_mut().for_each(|s| *s = None),
        }
    }
    let chosen = crate::pipeline::pick_largest(candidates, &totals)
        .ok_or_else(|| Error::AllCandidatesFailed(format!("no finite-difference fit for equation {target}")))?;
    Ok((chosen, totals))
}

/// SCAD-penalized finite-difference ("TS") estimator for one equation.
pub fn fit_ts(ts: &TimeSeries, target: usize, params: &ScadParams) -> Result<SparseFit> {
    let fm = ts_gram(ts, target)?;
    fit_scad(&fm, params, None, DescentOptions::default())
}

/// Smallest penalty level at which every univariate update from the zero
/// vector returns zero, so descent started at zero stays there.
///
/// This is `2 max_j |b_j|` unless some `Q_jj` is small enough for a distant
/// minimizer in the flat part of the penalty to win; the level is then
/// raised by doubling and refined by bisection.
pub fn lambda_max(fm: &FunctionalMatrix, a: f64) -> f64 {
    let base = 2.0 * fm.b.amax();
    if !(base > 0.0) {
        return 0.0;
    }
    let stays_zero = |lambda: f64| {
        let params = ScadParams::new(lambda).with_a(a);
        (0..fm.p()).all(|j| {
            let d = fm.q[(j, j)];
            !(d > MIN_DIAGONAL) || scad_threshold(fm.b[j] / d, 2.0 * d, &params) == 0.0
        })
    };
    if stays_zero(base) {
        return base;
    }
    let mut lo = base;
    let mut hi = 2.0 * base;
    while !stays_zero(hi) {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if stays_zero(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// `count` log-spaced penalty levels from `ratio * λ_max` up to `λ_max`, ascending.
pub fn lambda_grid(fm: &FunctionalMatrix, count: usize, ratio: f64, a: f64) -> Vec<f64> {
    let top = lambda_max(fm, a);
    if count == 0 || !(top > 0.0) {
        return vec![0.0];
    }
    if count == 1 {
        return vec![top];
    }
    let lo = (top * ratio).ln();
    let hi = top.ln();
    (0..count)
        .map(|k| (lo + (hi - lo) * k as f64 / (count - 1) as f64).exp())
        .collect()
}
