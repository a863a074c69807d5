//! Synthetic sparse linear ODE systems, forward-Euler integration, and noisy
//! observation.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TimeSeries;

pub const DEFAULT_SIGMA: f64 = 0.1;
pub const DEFAULT_EULER_STEP: f64 = 1e-4;

/// Generator used for all simulation randomness.
pub type SimRng = ChaCha8Rng;

/// Independent stream `replicate` of the generator seeded with `seed`.
pub fn replicate_rng(seed: u64, replicate: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

/// `m' = A m` with initial state `m0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub a: DMatrix<f64>,
    pub m0: DVector<f64>,
}

impl LinearSystem {
    pub fn new(a: DMatrix<f64>, m0: DVector<f64>) -> Result<Self> {
        if !a.is_square() || a.nrows() != m0.len() {
            return Err(Error::ShapeMismatch(format!(
                "A is {}x{} but m0 has length {}",
                a.nrows(),
                a.ncols(),
                m0.len()
            )));
        }
        Ok(LinearSystem { a, m0 })
    }

    pub fn p(&self) -> usize {
        self.m0.len()
    }

    /// Column indices of the nonzero entries in row `row` of `A`.
    pub fn row_support(&self, row: usize) -> Vec<usize> {
        (0..self.p()).filter(|&j| self.a[(row, j)] != 0.0).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub n: usize,
    pub sigma: f64,
    pub seed: u64,
    pub euler_step: f64,
    pub replicates: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n: 100,
            sigma: DEFAULT_SIGMA,
            seed: 1,
            euler_step: DEFAULT_EULER_STEP,
            replicates: 100,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 10 {
            return Err(Error::InvalidConfig(format!("n must be at least 10, got {}", self.n)));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidConfig(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        if !(self.euler_step > 0.0) || self.euler_step > 1.0 / self.n as f64 {
            return Err(Error::InvalidConfig(format!(
                "euler_step must lie in (0, 1/n], got {}",
                self.euler_step
            )));
        }
        Ok(())
    }

    /// Euler step no larger than `euler_step` that divides `1/n` exactly.
    pub fn aligned_step(&self) -> f64 {
        aligned_step(self.n, self.euler_step)
    }
}

/// `1 / (n * ceil(1 / (n * step)))`.
pub fn aligned_step(n: usize, step: f64) -> f64 {
    let per_obs = (1.0 / (n as f64 * step) - 1e-9).ceil().max(1.0);
    1.0 / (n as f64 * per_obs)
}

/// Observation times `1/n, 2/n, ..., 1`.
pub fn observation_times(n: usize) -> Vec<f64> {
    (1..=n).map(|i| i as f64 / n as f64).collect()
}

/// Block-diagonal system with `floor(sqrt(n))` rotation blocks
/// `[[a, b], [-b, a]]`, `a ~ U(-4, 0)`, `b ~ U(-10, 10)`, and `m0 ~ U(0, 1)`.
pub fn generate_system<R: Rng + ?Sized>(n: usize, rng: &mut R) -> LinearSystem {
    let blocks = (n as f64).sqrt().floor() as usize;
    let p = 2 * blocks;
    let mut a = DMatrix::zeros(p, p);
    for i in 0..blocks {
        let diag: f64 = -rng.random_range(0.0..4.0);
        let off: f64 = rng.random_range(-10.0..10.0);
        let (r, c) = (2 * i, 2 * i + 1);
        a[(r, r)] = diag;
        a[(c, c)] = diag;
        a[(r, c)] = off;
        a[(c, r)] = -off;
    }
    let m0 = DVector::from_fn(p, |_, _| rng.random_range(0.0..1.0));
    LinearSystem { a, m0 }
}

/// Forward Euler from `t = 0`; row `k` of the result is the state after the
/// last completed step not beyond `eval_times[k]`.
pub fn euler_solve(sys: &LinearSystem, step: f64, eval_times: &[f64]) -> Result<DMatrix<f64>> {
    if !(step > 0.0) {
        return Err(Error::InvalidConfig(format!("Euler step must be positive, got {step}")));
    }
    let mut out = DMatrix::zeros(eval_times.len(), sys.p());
    let mut state = sys.m0.clone();
    let mut done = 0usize;
    for (row, &t) in eval_times.iter().enumerate() {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::DomainError(t));
        }
        let target = (t / step + 1e-9).floor() as usize;
        if target < done {
            return Err(Error::InvalidData("evaluation times must be increasing".into()));
        }
        while done < target {
            let rate = &sys.a * &state;
            state.axpy(step, &rate, 1.0);
            done += 1;
            if state.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { step: done });
            }
        }
        out.set_row(row, &state.transpose());
    }
    Ok(out)
}

/// Adds i.i.d. `N(0, sigma^2)` noise to every trajectory value.
pub fn observe<R: Rng + ?Sized>(
    trajectories: &DMatrix<f64>,
    eval_times: &[f64],
    sigma: f64,
    rng: &mut R,
) -> Result<TimeSeries> {
    if trajectories.nrows() != eval_times.len() {
        return Err(Error::LengthMismatch {
            expected: eval_times.len(),
            actual: trajectories.nrows(),
        });
    }
    let mut values = trajectories.clone();
    if sigma > 0.0 {
        let noise = Normal::new(0.0, sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        // row-major draw order
        for i in 0..values.nrows() {
            for j in 0..values.ncols() {
                values[(i, j)] += noise.sample(rng);
            }
        }
    } else if sigma < 0.0 {
        return Err(Error::InvalidConfig(format!("sigma must be >= 0, got {sigma}")));
    }
    TimeSeries::new(eval_times.to_vec(), values)
}

/// One simulated dataset: the system and its noisy observations.
#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub system: LinearSystem,
    pub truth: DMatrix<f64>,
    pub series: TimeSeries,
}

/// Replicate `replicate` of the simulation design described by `cfg`.
pub fn simulate_replicate(cfg: &SimConfig, replicate: u64) -> Result<SimulatedData> {
    cfg.validate()?;
    let mut rng = replicate_rng(cfg.seed, replicate);
    let system = generate_system(cfg.n, &mut rng);
    let times = observation_times(cfg.n);
    let truth = euler_solve(&system, cfg.aligned_step(), &times)?;
    let series = observe(&truth, &times, cfg.sigma, &mut rng)?;
    Ok(SimulatedData {
        system,
        truth,
        series,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_structure() {
        let mut rng = replicate_rng(7, 0);
        let sys = generate_system(100, &mut rng);
        assert_eq!(sys.p(), 20);
        for r in 0..20 {
            assert_eq!(sys.row_support(r).len(), 2);
        }
        for i in 0..10 {
            let (r, c) = (2 * i, 2 * i + 1);
            assert_eq!(sys.a[(r, c)], -sys.a[(c, r)]);
            assert_eq!(sys.a[(r, r)], sys.a[(c, c)]);
            assert!(sys.a[(r, r)] < 0.0);
        }
        assert!(sys.m0.iter().all(|&v| (0.0..1.0).contains(&v)));
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_system(50, &mut replicate_rng(3, 2));
        let b = generate_system(50, &mut replicate_rng(3, 2));
        assert_eq!(a, b);
        let c = generate_system(50, &mut replicate_rng(3, 3));
        assert_ne!(a, c);
    }

    #[test]
    fn single_euler_steps() {
        let sys = LinearSystem::new(DMatrix::from_element(1, 1, -1.0), DVector::from_element(1, 1.0)).unwrap();
        let out = euler_solve(&sys, 0.1, &[0.0, 0.1]).unwrap();
        assert_eq!(out[(0, 0)], 1.0);
        assert!((out[(1, 0)] - 0.9).abs() < 1e-15);

        let rot = LinearSystem::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
            DVector::from_vec(vec![1.0, 0.0]),
        )
        .unwrap();
        let out = euler_solve(&rot, 0.1, &[0.1]).unwrap();
        assert!((out[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((out[(0, 1)] + 0.1).abs() < 1e-15);
    }

    #[test]
    fn first_order_convergence() {
        let sys = LinearSystem::new(DMatrix::from_element(1, 1, -1.0), DVector::from_element(1, 1.0)).unwrap();
        let err = |h: f64| (euler_solve(&sys, h, &[1.0]).unwrap()[(0, 0)] - (-1.0f64).exp()).abs();
        let ratio = err(1e-3) / err(5e-4);
        assert!((1.6..=2.4).contains(&ratio), "{ratio}");
    }

    #[test]
    fn overflow_reported() {
        let sys = LinearSystem::new(DMatrix::from_element(1, 1, 1e200), DVector::from_element(1, 1.0)).unwrap();
        assert!(matches!(euler_solve(&sys, 0.5, &[1.0]), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn noise_free_and_reproducible() {
        let traj = DMatrix::from_fn(5, 2, |i, j| (i * 2 + j) as f64);
        let times = [0.2, 0.4, 0.6, 0.8, 1.0];
        let exact = observe(&traj, &times, 0.0, &mut replicate_rng(1, 0)).unwrap();
        assert_eq!(exact.values(), &traj);
        let a = observe(&traj, &times, 0.1, &mut replicate_rng(1, 0)).unwrap();
        let b = observe(&traj, &times, 0.1, &mut replicate_rng(1, 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noise_calibration() {
        let traj = DMatrix::zeros(1000, 100);
        let times: Vec<f64> = (1..=1000).map(|i| i as f64 / 1000.0).collect();
        let ts = observe(&traj, &times, 0.1, &mut replicate_rng(11, 0)).unwrap();
        let v = ts.values();
        let mean = v.mean();
        let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt();
        assert!((0.098..=0.102).contains(&sd), "{sd}");
    }

    #[test]
    fn step_alignment() {
        let step = aligned_step(100, 1e-4);
        assert!((step - 1e-4).abs() < 1e-18);
        let step = aligned_step(30, 1e-4);
        assert!(step <= 1e-4);
        let per_obs = 1.0 / (30.0 * step);
        assert!((per_obs - per_obs.round()).abs() < 1e-9);
    }

    #[test]
    fn bounded_trajectories() {
        let cfg = SimConfig {
            n: 100,
            ..SimConfig::default()
        };
        for rep in 0..5 {
            let data = simulate_replicate(&cfg, rep).unwrap();
            let start = data.system.m0.norm();
            for row in data.truth.row_iter() {
                assert!(row.norm() <= 2.0 * start);
            }
        }
    }
}
