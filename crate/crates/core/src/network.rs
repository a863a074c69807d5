//! Estimated adjacency output and comparison against reference edge lists.
//!
//! An edge `source -> target` corresponds to a nonzero coefficient
//! `A[target, source]`: the source appears in the target's equation.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{format_rate, SelectionStats};
use crate::pipeline::{NetworkFit, PipelineConfig};
use crate::series::TimeMap;

/// Per-row summary of a fitted equation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowSummary {
    pub target: String,
    pub support: Vec<String>,
    pub lambda: f64,
    pub lambda_candidates: Vec<f64>,
    pub bandwidth: f64,
}

/// Everything needed to rerun a fit exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub seed: Option<u64>,
    pub input: Option<String>,
    /// Affine map from unit time back to the input's time axis.
    pub time_map: TimeMap,
    pub config: PipelineConfig,
    pub bandwidths: Vec<f64>,
    pub rows: Vec<RowSummary>,
}

/// Estimated coefficient matrix with names and provenance.
///
/// Coefficients are in rescaled-time units; divide by `time_map.scale` for
/// the input's time units.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyOutput {
    pub names: Vec<String>,
    pub coefficients: DMatrix<f64>,
    pub provenance: Provenance,
}

impl AdjacencyOutput {
    pub fn new(
        names: Vec<String>,
        fit: &NetworkFit,
        config: &PipelineConfig,
        time_map: TimeMap,
        seed: Option<u64>,
        input: Option<String>,
    ) -> Result<Self> {
        let p = names.len();
        if fit.coefficients.nrows() != p || fit.coefficients.ncols() != p {
            return Err(Error::ShapeMismatch(format!(
                "{} names for a {}x{} coefficient matrix",
                p,
                fit.coefficients.nrows(),
                fit.coefficients.ncols()
            )));
        }
        let rows = fit
            .rows
            .iter()
            .map(|r| RowSummary {
                target: names[r.target].clone(),
                support: r.fit.support.iter().map(|&j| names[j].clone()).collect(),
                lambda: r.selection.chosen,
                lambda_candidates: r.selection.candidates.clone(),
                bandwidth: fit.bandwidths[r.target],
            })
            .collect();
        Ok(AdjacencyOutput {
            names,
            coefficients: fit.coefficients.clone(),
            provenance: Provenance {
                tool_version: crate::VERSION.to_string(),
                seed,
                input,
                time_map,
                config: config.clone(),
                bandwidths: fit.bandwidths.clone(),
                rows,
            },
        })
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownGeneName(name.to_string()))
    }

    /// Whether `source` enters the equation of `target`.
    pub fn has_edge(&self, source: usize, target: usize) -> bool {
        self.coefficients[(target, source)] != 0.0
    }
}

/// One cell of the comparison grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Both,
    ReferenceOnly,
    InferredOnly,
    Neither,
    /// A variable's own coefficient; not counted.
    SelfLoop,
}

impl Cell {
    fn symbol(self) -> char {
        match self {
            Cell::Both => '*',
            Cell::ReferenceOnly => 'R',
            Cell::InferredOnly => 'I',
            Cell::Neither => '.',
            Cell::SelfLoop => '-',
        }
    }
}

/// Comparison of inferred edges from `regulators` into every variable.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkComparison {
    pub targets: Vec<String>,
    pub regulators: Vec<String>,
    /// `cells[t][r]` for target `t` and regulator `r`.
    pub cells: Vec<Vec<Cell>>,
    pub stats: SelectionStats,
}

impl NetworkComparison {
    /// Grid of targets by regulators, followed by `ppv` and `sensitivity` lines.
    pub fn render(&self) -> String {
        let width = self
            .targets
            .iter()
            .chain(&self.regulators)
            .map(|s| s.chars().count())
            .max()
            .unwrap_or(0)
            .max(6);
        let mut out = String::new();
        let _ = write!(out, "{:<width$}", "target");
        for r in &self.regulators {
            let _ = write!(out, " {r:>width$}");
        }
        out.push('\n');
        for (t, row) in self.targets.iter().zip(&self.cells) {
            let _ = write!(out, "{t:<width$}");
            for cell in row {
                let _ = write!(out, " {:>width$}", cell.symbol());
            }
            out.push('\n');
        }
        out.push_str("# * both  R reference only  I inferred only  . neither  - self\n");
        let s = &self.stats;
        let _ = writeln!(
            out,
            "# tp {} fp {} fn {} tn {}",
            s.true_positive, s.false_positive, s.false_negative, s.true_negative
        );
        let _ = writeln!(out, "ppv {}", format_rate(s.ppv()));
        let _ = writeln!(out, "sensitivity {}", format_rate(s.sensitivity()));
        out
    }
}

/// Compares the support of `adj` with `reference` edges `(source, target)`.
///
/// Columns are `regulators` when given, otherwise the distinct reference
/// sources in order of first appearance. Rows are all variables.
pub fn compare_network(
    adj: &AdjacencyOutput,
    reference: &[(String, String)],
    regulators: Option<&[String]>,
) -> Result<NetworkComparison> {
    let mut reference_set = BTreeSet::new();
    for (s, t) in reference {
        reference_set.insert((adj.index_of(s)?, adj.index_of(t)?));
    }
    let regulators: Vec<String> = match regulators {
        Some(r) => r.to_vec(),
        None => {
            let mut seen = Vec::new();
            for (s, _) in reference {
                if !seen.contains(s) {
                    seen.push(s.clone());
                }
            }
            seen
        }
    };
    let columns = regulators
        .iter()
        .map(|r| adj.index_of(r))
        .collect::<Result<Vec<usize>>>()?;

    let mut stats = SelectionStats::default();
    let mut cells = Vec::with_capacity(adj.names.len());
    for t in 0..adj.names.len() {
        let mut row = Vec::with_capacity(columns.len());
        for &s in &columns {
            let cell = if s == t {
                Cell::SelfLoop
            } else {
                match (adj.has_edge(s, t), reference_set.contains(&(s, t))) {
                    (true, true) => {
                        stats.true_positive += 1;
                        Cell::Both
                    }
                    (false, true) => {
                        stats.false_negative += 1;
                        Cell::ReferenceOnly
                    }
                    (true, false) => {
                        stats.false_positive += 1;
                        Cell::InferredOnly
                    }
                    (false, false) => {
                        stats.true_negative += 1;
                        Cell::Neither
                    }
                }
            };
            row.push(cell);
        }
        cells.push(row);
    }
    Ok(NetworkComparison {
        targets: adj.names.clone(),
        regulators,
        cells,
        stats,
    })
}
