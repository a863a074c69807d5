//! Local polynomial regression for trajectories and their first derivatives.
//!
//! Around each evaluation point `x0` a degree-`s` polynomial is fitted by
//! kernel-weighted least squares. The `d`-th local coefficient estimates
//! `m^(d)(x0) / d!`; the first-derivative estimate is therefore the local
//! slope, not the derivative of the fitted curve.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Condition number of the local normal matrix above which the ridge fallback kicks in.
const MAX_CONDITION: f64 = 1e12;
const RIDGE_SCALE: f64 = 1e-10;

/// Compactly supported, symmetric kernels on `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    /// `0.75 (1 - u^2)`
    #[default]
    Epanechnikov,
    /// `15/16 (1 - u^2)^2`
    Biweight,
    /// `35/32 (1 - u^2)^3`
    Triweight,
}

impl Kernel {
    pub fn eval(self, u: f64) -> f64 {
        kernel_eval(u, self)
    }
}

/// Kernel density at `u`; zero outside `[-1, 1]`.
pub fn kernel_eval(u: f64, kernel: Kernel) -> f64 {
    if !(u.abs() <= 1.0) {
        return 0.0;
    }
    let r = 1.0 - u * u;
    match kernel {
        Kernel::Epanechnikov => 0.75 * r,
        Kernel::Biweight => 15.0 / 16.0 * r * r,
        Kernel::Triweight => 35.0 / 32.0 * r * r * r,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmootherConfig {
    pub bandwidth: f64,
    pub order: usize,
    pub kernel: Kernel,
}

impl SmootherConfig {
    /// Local cubic fit with the Epanechnikov kernel.
    pub fn new(bandwidth: f64) -> Self {
        SmootherConfig {
            bandwidth,
            order: 3,
            kernel: Kernel::Epanechnikov,
        }
    }

    pub fn with_bandwidth(self, bandwidth: f64) -> Self {
        SmootherConfig { bandwidth, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0) || !self.bandwidth.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "bandwidth must be positive, got {}",
                self.bandwidth
            )));
        }
        if self.order < 1 {
            return Err(Error::InvalidConfig("polynomial order must be at least 1".into()));
        }
        Ok(())
    }
}

/// Estimated values and first derivatives of one trajectory on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedCurve {
    pub grid: Vec<f64>,
    pub value: Vec<f64>,
    pub deriv: Vec<f64>,
}

/// Index range of observations strictly inside `(x0 - h, x0 + h)`.
fn window(times: &[f64], x0: f64, h: f64) -> std::ops::Range<usize> {
    let lo = times.partition_point(|&t| t <= x0 - h);
    let hi = times.partition_point(|&t| t < x0 + h);
    lo..hi.max(lo)
}

/// Local polynomial coefficients `alpha[0..=s]` at `x0`.
///
/// `alpha[d]` is the coefficient of `(x - x0)^d`, so `d! * alpha[d]` estimates
/// the `d`-th derivative. `times` must be sorted ascending.
pub fn local_poly_fit(times: &[f64], values: &[f64], x0: f64, cfg: &SmootherConfig) -> Result<Vec<f64>> {
    if times.len() != values.len() {
        return Err(Error::LengthMismatch {
            expected: times.len(),
            actual: values.len(),
        });
    }
    cfg.validate()?;
    let h = cfg.bandwidth;
    let ncoef = cfg.order + 1;

    let mut rows: Vec<(f64, f64, f64)> = Vec::new();
    for i in window(times, x0, h) {
        let u = (times[i] - x0) / h;
        let k = cfg.kernel.eval(u);
        if k > 0.0 {
            rows.push((u, k.sqrt(), values[i]));
        }
    }
    if rows.len() < ncoef {
        return Err(Error::InsufficientLocalData {
            x0,
            available: rows.len(),
            required: ncoef,
        });
    }

    // Columns are powers of (t - x0) / h; the rescaling is undone below.
    let design = DMatrix::from_fn(rows.len(), ncoef, |r, d| rows[r].1 * rows[r].0.powi(d as i32));
    let rhs = DVector::from_iterator(rows.len(), rows.iter().map(|&(_, sw, y)| sw * y));

    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { (smax / smin).powi(2) } else { f64::INFINITY };

    let scaled = if condition <= MAX_CONDITION {
        svd.solve(&rhs, 0.0)
            .map_err(|_| Error::SingularLocalDesign { x0, condition })?
    } else {
        let mut normal = design.transpose() * &design;
        let jitter = RIDGE_SCALE * normal.trace() / ncoef as f64;
        for d in 0..ncoef {
            normal[(d, d)] += jitter;
        }
        let chol = normal
            .cholesky()
            .ok_or(Error::SingularLocalDesign { x0, condition })?;
        chol.solve(&(design.transpose() * &rhs))
    };
    if scaled.iter().any(|c| !c.is_finite()) {
        return Err(Error::SingularLocalDesign { x0, condition });
    }

    let mut scale = 1.0;
    Ok(scaled
        .iter()
        .map(|&c| {
            let out = c / scale;
            scale *= h;
            out
        })
        .collect())
}

/// Value and first-derivative estimates of one trajectory at every grid point.
pub fn smooth_curve(times: &[f64], values: &[f64], grid: &[f64], cfg: &SmootherConfig) -> Result<SmoothedCurve> {
    let mut value = Vec::with_capacity(grid.len());
    let mut deriv = Vec::with_capacity(grid.len());
    for &x in grid {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::DomainError(x));
        }
        let alpha = local_poly_fit(times, values, x, cfg).map_err(|e| e.context(format!("grid point {x}")))?;
        value.push(alpha[0]);
        deriv.push(alpha[1]);
    }
    Ok(SmoothedCurve {
        grid: grid.to_vec(),
        value,
        deriv,
    })
}

/// Smallest bandwidth for which every point of `at` has at least `required`
/// observations strictly inside its window (padded by a small relative margin).
pub fn min_bandwidth(times: &[f64], at: &[f64], required: usize) -> Option<f64> {
    if times.len() < required || required == 0 {
        return None;
    }
    let mut worst: f64 = 0.0;
    let mut dists = Vec::with_capacity(2 * required);
    for &x in at {
        let mid = times.partition_point(|&t| t < x);
        let lo = mid.saturating_sub(required);
        let hi = (mid + required).min(times.len());
        dists.clear();
        dists.extend(times[lo..hi].iter().map(|&t| (t - x).abs()));
        dists.sort_by(f64::total_cmp);
        worst = worst.max(dists[required - 1]);
    }
    Some(worst * (1.0 + 1e-6) + 1e-12)
}

/// Held-out squared prediction error of the local fit (value component) for
/// each candidate bandwidth; `None` marks a candidate that could not be fitted
/// on some fold.
///
/// Folds are assigned by `index % folds` over the time-sorted observations.
pub fn cv_bandwidth_scores(
    times: &[f64],
    values: &[f64],
    candidates: &[f64],
    folds: usize,
    base: &SmootherConfig,
) -> Result<Vec<Option<f64>>> {
    if folds < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 folds, got {folds}")));
    }
    if times.len() != values.len() {
        return Err(Error::LengthMismatch {
            expected: times.len(),
            actual: values.len(),
        });
    }
    let n = times.len();
    let splits: Vec<(Vec<f64>, Vec<f64>, Vec<usize>)> = (0..folds)
        .map(|f| {
            let train: Vec<usize> = (0..n).filter(|i| i % folds != f).collect();
            let held: Vec<usize> = (0..n).filter(|i| i % folds == f).collect();
            (
                train.iter().map(|&i| times[i]).collect(),
                train.iter().map(|&i| values[i]).collect(),
                held,
            )
        })
        .collect();

    candidates
        .iter()
        .map(|&h| {
            if !(h > 0.0) {
                return Err(Error::InvalidConfig(format!("bandwidth candidate {h} is not positive")));
            }
            let cfg = base.with_bandwidth(h);
            let mut loss = 0.0;
            for (tt, tv, held) in &splits {
                for &i in held {
                    match local_poly_fit(tt, tv, times[i], &cfg) {
                        Ok(alpha) => loss += (values[i] - alpha[0]).powi(2),
                        Err(Error::InsufficientLocalData { .. } | Error::SingularLocalDesign { .. }) => {
                            return Ok(None)
                        }
                        Err(e) => return Err(e),
                    }
                }
            }
            Ok(Some(loss))
        })
        .collect()
}

/// Picks the candidate bandwidth with the smallest K-fold prediction error.
///
/// Losses within `1e-12` of the total sum of squares of the data count as
/// ties; ties go to the smaller bandwidth.
pub fn cv_bandwidth(
    times: &[f64],
    values: &[f64],
    candidates: &[f64],
    folds: usize,
    base: &SmootherConfig,
) -> Result<f64> {
    if candidates.is_empty() {
        return Err(Error::InvalidConfig("no bandwidth candidates".into()));
    }
    let scores = cv_bandwidth_scores(times, values, candidates, folds, base)?;
    let tie = 1e-12 * values.iter().map(|v| v * v).sum::<f64>();
    pick_smallest(candidates, &scores, tie).ok_or_else(|| {
        Error::AllCandidatesFailed(format!("no bandwidth in {candidates:?} fits every fold"))
    })
}

/// Minimum-loss candidate; within `tie`, the smaller candidate wins.
pub(crate) fn pick_smallest(candidates: &[f64], scores: &[Option<f64>], tie: f64) -> Option<f64> {
    let best = scores.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return None;
    }
    candidates
        .iter()
        .zip(scores)
        .filter(|(_, s)| matches!(s, Some(l) if *l <= best + tie))
        .map(|(&h, _)| h)
        .min_by(f64::total_cmp)
}
