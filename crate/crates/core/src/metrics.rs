//! Estimation-error and network-reconstruction metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean and standard error of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStderr {
    pub mean: f64,
    pub stderr: f64,
}

impl MeanStderr {
    /// Standard error uses the unbiased sample variance; zero for fewer than two values.
    pub fn of(values: &[f64]) -> MeanStderr {
        let n = values.len();
        if n == 0 {
            return MeanStderr {
                mean: f64::NAN,
                stderr: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let stderr = if n < 2 {
            0.0
        } else {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        };
        MeanStderr { mean, stderr }
    }
}

/// Squared error averaged over the coordinates in `support`.
pub fn squared_error_on_support(estimate: &[f64], truth: &[f64], support: &[usize]) -> Result<f64> {
    if support.is_empty() {
        return Err(Error::EmptySupport);
    }
    if estimate.len() != truth.len() {
        return Err(Error::ShapeMismatch(format!(
            "estimate has {} coefficients, truth has {}",
            estimate.len(),
            truth.len()
        )));
    }
    let mut total = 0.0;
    for &j in support {
        if j >= truth.len() {
            return Err(Error::ShapeMismatch(format!("support index {j} out of range")));
        }
        total += (estimate[j] - truth[j]).powi(2);
    }
    Ok(total / support.len() as f64)
}

/// Per-replicate squared error on `support`, summarized across replicates.
///
/// Each replicate is first averaged over the support; mean and standard
/// error are then taken across replicates.
pub fn amse(estimates: &[Vec<f64>], truth: &[f64], support: &[usize]) -> Result<MeanStderr> {
    let per_rep = estimates
        .iter()
        .map(|e| squared_error_on_support(e, truth, support))
        .collect::<Result<Vec<_>>>()?;
    Ok(MeanStderr::of(&per_rep))
}

/// Number of coefficients with magnitude strictly above `tol`.
pub fn nonzero_count(beta: &[f64], tol: f64) -> usize {
    beta.iter().filter(|b| b.abs() > tol).count()
}

/// Confusion counts of an estimated edge set against a reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SelectionStats {
    pub true_positive: usize,
    pub false_positive: usize,
    pub false_negative: usize,
    pub true_negative: usize,
}

impl SelectionStats {
    pub fn total(&self) -> usize {
        self.true_positive + self.false_positive + self.false_negative + self.true_negative
    }

    /// `TP / (TP + FP)`, `None` when nothing was predicted.
    pub fn ppv(&self) -> Option<f64> {
        ratio(self.true_positive, self.true_positive + self.false_positive)
    }

    /// `TP / (TP + FN)`, `None` when the reference is empty.
    pub fn sensitivity(&self) -> Option<f64> {
        ratio(self.true_positive, self.true_positive + self.false_negative)
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Formats an optional rate, spelling out the undefined case.
pub fn format_rate(rate: Option<f64>) -> String {
    match rate {
        Some(r) => format!("{r:.4}"),
        None => "undefined".to_string(),
    }
}

/// Entrywise confusion counts of two equally shaped boolean masks.
pub fn selection_stats(estimated: &[bool], reference: &[bool]) -> Result<SelectionStats> {
    if estimated.len() != reference.len() {
        return Err(Error::ShapeMismatch(format!(
            "estimated has {} entries, reference has {}",
            estimated.len(),
            reference.len()
        )));
    }
    let mut s = SelectionStats::default();
    for (&e, &r) in estimated.iter().zip(reference) {
        match (e, r) {
            (true, true) => s.true_positive += 1,
            (true, false) => s.false_positive += 1,
            (false, true) => s.false_negative += 1,
            (false, false) => s.true_negative += 1,
        }
    }
    Ok(s)
}

/// Boolean mask of length `len` with `true` at each index of `support`.
pub fn support_mask(support: &[usize], len: usize) -> Vec<bool> {
    let mut mask = vec![false; len];
    for &j in support {
        if j < len {
            mask[j] = true;
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_estimates() {
        let truth = vec![1.0, 2.0, 0.0];
        let r = amse(&[truth.clone(), truth.clone()], &truth, &[0, 1]).unwrap();
        assert_eq!((r.mean, r.stderr), (0.0, 0.0));
    }

    #[test]
    fn single_replicate_by_hand() {
        let r = amse(&[vec![1.1, 1.8]], &[1.0, 2.0], &[0, 1]).unwrap();
        assert!((r.mean - 0.025).abs() < 1e-15);
        assert_eq!(r.stderr, 0.0);
    }

    #[test]
    fn quadratic_homogeneity_and_support_only() {
        let truth = [1.0, -2.0, 0.0];
        let est = [1.3, -2.1, 7.0];
        let scaled = [1.0 + 3.0 * 0.3, -2.0 - 3.0 * 0.1, -4.0];
        let a = squared_error_on_support(&est, &truth, &[0, 1]).unwrap();
        let b = squared_error_on_support(&scaled, &truth, &[0, 1]).unwrap();
        assert!((b - 9.0 * a).abs() < 1e-12);
    }

    #[test]
    fn empty_support() {
        assert!(matches!(amse(&[vec![1.0]], &[1.0], &[]), Err(Error::EmptySupport)));
    }

    #[test]
    fn nonzero_counts() {
        assert_eq!(nonzero_count(&[0.0; 4], 0.0), 0);
        assert_eq!(nonzero_count(&[0.0, 1.5, -0.2], 0.0), 2);
        assert_eq!(nonzero_count(&[1e-12, 1.0], 1e-10), 1);
    }

    #[test]
    fn confusion_rates() {
        let reference = [true, false, true, false];
        let s = selection_stats(&reference, &reference).unwrap();
        assert_eq!((s.ppv(), s.sensitivity()), (Some(1.0), Some(1.0)));

        let all = [true; 4];
        let s = selection_stats(&all, &reference).unwrap();
        assert_eq!(s.ppv(), Some(0.5));
        assert_eq!(s.sensitivity(), Some(1.0));

        let none = [false; 4];
        let s = selection_stats(&none, &reference).unwrap();
        assert_eq!(s.ppv(), None);
        assert_eq!(format_rate(s.ppv()), "undefined");
        assert!(selection_stats(&none, &[true]).is_err());
    }

    #[test]
    fn swapping_roles_swaps_rates() {
        let a = [true, true, false, true, false, false];
        let b = [true, false, true, true, true, false];
        let ab = selection_stats(&a, &b).unwrap();
        let ba = selection_stats(&b, &a).unwrap();
        assert_eq!(ab.ppv(), ba.sensitivity());
        assert_eq!(ab.sensitivity(), ba.ppv());
    }
}
