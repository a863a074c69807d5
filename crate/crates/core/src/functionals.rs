//! Weighted integral functionals of smoothed trajectories.
//!
//! For a target equation `r`, the functional matrix is `[b, Q]` with
//! `b[i] = ∫ m'_r m_i w` and `Q[i][j] = ∫ m_i m_j w` over `[0, 1]`. All
//! integrals use a fixed equispaced quadrature grid that the curves must be
//! smoothed on.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::smoother::SmoothedCurve;

pub const DEFAULT_GRID_SIZE: usize = 201;

/// `140 x^3 (1 - x)^3`: vanishes with its first two derivatives at both ends
/// and has unit mass on `[0, 1]`.
pub fn weight_eval(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::DomainError(x));
    }
    let y = x * (1.0 - x);
    Ok(140.0 * y * y * y)
}

/// Newton-Cotes family used on the equispaced grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuadratureRule {
    /// Composite Simpson; needs an odd number of points.
    Simpson,
    /// Composite Boole; needs `4k + 1` points.
    #[default]
    Boole,
}

/// Equispaced points on `[0, 1]` with composite Newton-Cotes weights.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    points: Vec<f64>,
    weights: Vec<f64>,
    /// `weights[g] * w(points[g])`
    weighted: Vec<f64>,
    rule: QuadratureRule,
}

impl Default for QuadratureGrid {
    fn default() -> Self {
        QuadratureGrid::new(DEFAULT_GRID_SIZE, QuadratureRule::Boole).expect("default grid is valid")
    }
}

impl QuadratureGrid {
    pub fn new(size: usize, rule: QuadratureRule) -> Result<Self> {
        let panel: usize = match rule {
            QuadratureRule::Simpson => 2,
            QuadratureRule::Boole => 4,
        };
        if size < panel + 1 || (size - 1) % panel != 0 {
            return Err(Error::InvalidConfig(format!(
                "{rule:?} quadrature needs {panel}k + 1 points (k >= 1), got {size}"
            )));
        }
        let intervals = size - 1;
        let step = 1.0 / intervals as f64;
        let points: Vec<f64> = (0..size).map(|g| g as f64 / intervals as f64).collect();

        let stencil: &[f64] = match rule {
            QuadratureRule::Simpson => &[1.0, 4.0, 1.0],
            QuadratureRule::Boole => &[7.0, 32.0, 12.0, 32.0, 7.0],
        };
        let norm = match rule {
            QuadratureRule::Simpson => step / 3.0,
            QuadratureRule::Boole => 2.0 * step / 45.0,
        };
        let mut weights = vec![0.0; size];
        for start in (0..intervals).step_by(panel) {
            for (k, c) in stencil.iter().enumerate() {
                weights[start + k] += c * norm;
            }
        }
        let weighted = points
            .iter()
            .zip(&weights)
            .map(|(&x, &c)| c * weight_eval(x).expect("grid lies in [0, 1]"))
            .collect();
        Ok(QuadratureGrid {
            points,
            weights,
            weighted,
            rule,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn rule(&self) -> QuadratureRule {
        self.rule
    }

    /// Quadrature weights multiplied by the weight function.
    pub fn weighted(&self) -> &[f64] {
        &self.weighted
    }
}

/// Approximates `∫_0^1 f g w dx` from samples on the quadrature points.
pub fn inner_product(f: &[f64], g: &[f64], quad: &QuadratureGrid) -> Result<f64> {
    for v in [f, g] {
        if v.len() != quad.len() {
            return Err(Error::LengthMismatch {
                expected: quad.len(),
                actual: v.len(),
            });
        }
    }
    Ok(dot3(f, g, &quad.weighted))
}

fn dot3(f: &[f64], g: &[f64], c: &[f64]) -> f64 {
    f.iter().zip(g).zip(c).map(|((a, b), c)| a * b * c).sum()
}

/// The matrix `[b, Q]` of integral functionals for one target equation.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalMatrix {
    /// Zero-based index of the equation being fitted.
    pub target: usize,
    pub b: DVector<f64>,
    pub q: DMatrix<f64>,
}

impl FunctionalMatrix {
    pub fn new(target: usize, b: DVector<f64>, q: DMatrix<f64>) -> Result<Self> {
        if q.nrows() != b.len() || q.ncols() != b.len() {
            return Err(Error::ShapeMismatch(format!(
                "b has length {} but Q is {}x{}",
                b.len(),
                q.nrows(),
                q.ncols()
            )));
        }
        if b.iter().chain(q.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("functional matrix has non-finite entries".into()));
        }
        Ok(FunctionalMatrix { target, b, q })
    }

    pub fn p(&self) -> usize {
        self.b.len()
    }

    /// `[b, Q]` as a `p x (p + 1)` matrix.
    pub fn as_matrix(&self) -> DMatrix<f64> {
        let p = self.p();
        let mut m = DMatrix::zeros(p, p + 1);
        m.set_column(0, &self.b);
        m.view_mut((0, 1), (p, p)).copy_from(&self.q);
        m
    }
}

fn check_grids(curves: &[SmoothedCurve], quad: &QuadratureGrid) -> Result<()> {
    for (i, c) in curves.iter().enumerate() {
        if c.grid.as_slice() != quad.points() || c.value.len() != quad.len() || c.deriv.len() != quad.len() {
            return Err(Error::GridMismatch { index: i });
        }
    }
    Ok(())
}

/// `Q[i][j] = ∫ m_i m_j w`, computed once per unordered pair and mirrored.
pub fn gram_matrix(curves: &[SmoothedCurve], quad: &QuadratureGrid) -> Result<DMatrix<f64>> {
    check_grids(curves, quad)?;
    let p = curves.len();
    let mut q = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..=i {
            let v = dot3(&curves[i].value, &curves[j].value, quad.weighted());
            q[(i, j)] = v;
            q[(j, i)] = v;
        }
    }
    Ok(q)
}

/// `b[i] = ∫ m'_target m_i w`.
pub fn cross_moments(curves: &[SmoothedCurve], target: usize, quad: &QuadratureGrid) -> Result<DVector<f64>> {
    check_grids(curves, quad)?;
    let deriv = &curves
        .get(target)
        .ok_or_else(|| Error::InvalidConfig(format!("target {target} out of range for {} curves", curves.len())))?
        .deriv;
    Ok(DVector::from_iterator(
        curves.len(),
        curves.iter().map(|c| dot3(deriv, &c.value, quad.weighted())),
    ))
}

/// Builds `[b, Q]` for equation `target` (zero-based) from curves smoothed on `quad`.
pub fn assemble_functional_matrix(
    curves: &[SmoothedCurve],
    target: usize,
    quad: &QuadratureGrid,
) -> Result<FunctionalMatrix> {
    let b = cross_moments(curves, target, quad)?;
    let q = gram_matrix(curves, quad)?;
    FunctionalMatrix::new(target, b, q)
}

/// Number of distinct entries of a `p x (p + 1)` matrix with symmetric right block.
pub fn vech_len(p: usize) -> usize {
    p * (p + 3) / 2
}

/// Position of `Q[i][j]` (lower triangle, `i >= j`) within the vech vector.
fn vech_q_index(p: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i >= j { (i, j) } else { (j, i) };
    // column j of a packed lower triangle starts at j*p - j(j-1)/2
    p + j * p - j * j.saturating_sub(1) / 2 + (i - j)
}

/// Distinct entries of `[b, Q]`: `b` in full, then the lower triangle of `Q`
/// (diagonal included) column by column.
pub fn vech_structured(c: &DMatrix<f64>) -> Result<Vec<f64>> {
    let p = c.nrows();
    if c.ncols() != p + 1 {
        return Err(Error::ShapeMismatch(format!("expected {p}x{}, got {p}x{}", p + 1, c.ncols())));
    }
    for i in 0..p {
        for j in 0..i {
            let (a, b) = (c[(i, j + 1)], c[(j, i + 1)]);
            let diff = (a - b).abs();
            if diff > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                return Err(Error::AsymmetryError {
                    row: i,
                    col: j,
                    difference: diff,
                });
            }
        }
    }
    let mut out = Vec::with_capacity(vech_len(p));
    out.extend(c.column(0).iter());
    for j in 0..p {
        for i in j..p {
            out.push(c[(i, j + 1)]);
        }
    }
    Ok(out)
}

/// Binary `p(p+1) x p(p+3)/2` matrix mapping `vech_structured(C)` to the
/// column-major `vec(C)`.
pub fn duplication_matrix(p: usize) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(p * (p + 1), vech_len(p));
    for col in 0..=p {
        for row in 0..p {
            let vec_index = col * p + row;
            let vech_index = if col == 0 { row } else { vech_q_index(p, row, col - 1) };
            d[(vec_index, vech_index)] = 1.0;
        }
    }
    d
}
