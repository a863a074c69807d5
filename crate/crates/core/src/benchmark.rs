//! Monte Carlo comparison of the two-step and finite-difference estimators
//! on simulated block-rotation systems.
//!
//! Each replicate fits only the first equation. Coefficients are estimated
//! on the unit-rescaled time axis and converted back to simulation units
//! before scoring.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{cross_moments, gram_matrix, FunctionalMatrix};
use crate::metrics::{nonzero_count, squared_error_on_support, MeanStderr};
use crate::pipeline::{fit_row, smooth_series, LambdaCv, PipelineConfig};
use crate::simulation::{simulate_replicate, SimConfig};
use crate::sparse_solver::{cv_ts_lambda, fit_oracle, fit_ols, fit_scad_grid, lambda_grid, ts_gram};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Estimator {
    Scad,
    Ols,
    Oracle,
    TsScad,
    TsOracle,
}

impl Estimator {
    pub const ALL: [Estimator; 5] = [
        Estimator::Scad,
        Estimator::Ols,
        Estimator::Oracle,
        Estimator::TsScad,
        Estimator::TsOracle,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Estimator::Scad => "SCAD",
            Estimator::Ols => "OLS",
            Estimator::Oracle => "ORACLE",
            Estimator::TsScad => "TS-SCAD",
            Estimator::TsOracle => "TS-ORACLE",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkConfig {
    pub simulation: SimConfig,
    pub pipeline: PipelineConfig,
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        self.simulation.validate()?;
        self.pipeline.validate()
    }
}

/// Estimates of the first row of `A` from one simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub replicate: u64,
    pub truth: Vec<f64>,
    pub support: Vec<usize>,
    /// One entry per [`Estimator::ALL`], in that order.
    pub estimates: Vec<Vec<f64>>,
    pub scad_lambda: f64,
    pub ts_lambda: f64,
    pub bandwidths: Vec<f64>,
}

impl ReplicateResult {
    pub fn estimate(&self, which: Estimator) -> &[f64] {
        let k = Estimator::ALL.iter().position(|&e| e == which).expect("listed");
        &self.estimates[k]
    }

    pub fn squared_error(&self, which: Estimator) -> f64 {
        squared_error_on_support(self.estimate(which), &self.truth, &self.support).expect("support is nonempty")
    }

    /// Whether the SCAD estimate selects exactly the true support.
    pub fn scad_support_exact(&self) -> bool {
        let est = self.estimate(Estimator::Scad);
        let selected: Vec<usize> = (0..est.len()).filter(|&j| est[j] != 0.0).collect();
        selected == self.support
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: Estimator,
    pub amse: MeanStderr,
    pub avg_nonzero: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config: SimConfig,
    pub replicates: Vec<ReplicateResult>,
    /// Replicates that failed, with the error message.
    pub failures: Vec<(u64, String)>,
    pub summaries: Vec<EstimatorSummary>,
}

impl BenchmarkReport {
    pub fn summary(&self, which: Estimator) -> &EstimatorSummary {
        self.summaries
            .iter()
            .find(|s| s.estimator == which)
            .expect("every estimator is summarized")
    }

    /// Fraction of successful replicates whose SCAD support equals the truth.
    pub fn support_recovery(&self) -> f64 {
        if self.replicates.is_empty() {
            return f64::NAN;
        }
        let hits = self.replicates.iter().filter(|r| r.scad_support_exact()).count();
        hits as f64 / self.replicates.len() as f64
    }
}

/// Simulates replicate `replicate` and fits its first equation with every estimator.
pub fn run_replicate(cfg: &BenchmarkConfig, replicate: u64) -> Result<ReplicateResult> {
    let target = 0;
    let data = simulate_replicate(&cfg.simulation, replicate)?;
    let truth: Vec<f64> = data.system.a.row(target).iter().copied().collect();
    let support = data.system.row_support(target);
    let (series, map) = data.series.rescaled_to_unit()?;
    let pipe = &cfg.pipeline;
    let quad = pipe.quadrature_grid()?;

    let smoothed = smooth_series(&series, pipe, &quad)?;
    let gram = gram_matrix(&smoothed.curves, &quad)?;
    let cv = LambdaCv::new(&series, &smoothed.bandwidths, pipe, &quad)?;
    let row = fit_row(target, &smoothed, &gram, &cv, pipe, &quad)?;
    let fm = FunctionalMatrix::new(target, cross_moments(&smoothed.curves, target, &quad)?, gram)?;
    let ols = fit_ols(&fm)?;
    let oracle = fit_oracle(&fm, &support)?;

    let ts_fm = ts_gram(&series, target)?;
    let ts_candidates = match &pipe.lambdas {
        Some(ls) => ls.clone(),
        None => lambda_grid(&ts_fm, pipe.lambda_count, pipe.lambda_ratio, pipe.scad_a),
    };
    let (ts_lambda, _) = cv_ts_lambda(
        &series,
        target,
        &ts_candidates,
        pipe.lambda_folds,
        pipe.scad_a,
        pipe.init,
        pipe.descent(),
    )?;
    let k = ts_candidates.iter().position(|&l| l == ts_lambda).expect("chosen from candidates");
    let ts_scad = fit_scad_grid(&ts_fm, &ts_candidates, pipe.scad_a, pipe.init, pipe.descent())?.swap_remove(k);
    let ts_oracle = fit_oracle(&ts_fm, &support)?;

    // d/du = scale * d/dt on the unit axis
    let to_original = |beta: &[f64]| beta.iter().map(|b| b / map.scale).collect::<Vec<f64>>();
    let estimates = vec![
        to_original(&row.fit.beta),
        to_original(&ols.beta),
        to_original(&oracle.beta),
        to_original(&ts_scad.beta),
        to_original(&ts_oracle.beta),
    ];
    Ok(ReplicateResult {
        replicate,
        truth,
        support,
        estimates,
        scad_lambda: row.selection.chosen,
        ts_lambda,
        bandwidths: smoothed.bandwidths,
    })
}

/// Aggregates per-estimator AMSE and nonzero counts over successful replicates.
pub fn summarize(replicates: &[ReplicateResult]) -> Vec<EstimatorSummary> {
    Estimator::ALL
        .iter()
        .map(|&e| {
            let errors: Vec<f64> = replicates.iter().map(|r| r.squared_error(e)).collect();
            let nonzero: f64 = replicates
                .iter()
                .map(|r| nonzero_count(r.estimate(e), 0.0) as f64)
                .sum::<f64>()
                / replicates.len().max(1) as f64;
            EstimatorSummary {
                estimator: e,
                amse: MeanStderr::of(&errors),
                avg_nonzero: nonzero,
            }
        })
        .collect()
}

/// Runs `cfg.simulation.replicates` independent replicates in parallel.
///
/// A failing replicate is recorded in `failures` and left out of the
/// summaries; the run itself only fails on invalid configuration.
pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkReport> {
    cfg.validate()?;
    let outcomes: Vec<(u64, Result<ReplicateResult>)> = (0..cfg.simulation.replicates as u64)
        .into_par_iter()
        .map(|k| (k, run_replicate(cfg, k)))
        .collect();
    let mut replicates = Vec::new();
    let mut failures = Vec::new();
    for (k, outcome) in outcomes {
        match outcome {
            Ok(r) => replicates.push(r),
            Err(e @ Error::InvalidConfig(_)) => return Err(e),
            Err(e) => failures.push((k, e.to_string())),
        }
    }
    let summaries = summarize(&replicates);
    Ok(BenchmarkReport {
        config: cfg.simulation.clone(),
        replicates,
        failures,
        summaries,
    })
}
