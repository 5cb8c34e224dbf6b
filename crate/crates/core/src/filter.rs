//! The delay filter
//!
//! ```text
//! dx^ = A x^ dt + A_d x^(t-T) dt + K(t) (dy - C x^ dt - C_d x^(t-T) dt)
//! ```
//!
//! discretized with explicit Euler on the lattice grid, plus innovation
//! diagnostics.

use nalgebra::{Matrix2, Vector2};

use crate::covariance::CovarianceLattice;
use crate::error::{invalid, Error, Result};
use crate::grid::TimeGrid;
use crate::model::StateSpaceModel;
use crate::sim::{Prehistory, Trajectory};

/// Estimates `x^_k` (k = 0..=K) and innovation increments `dnu_k`
/// (k = 0..K-1) on the grid of the driving measurement record.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateTrajectory {
    grid: TimeGrid,
    estimates: Vec<Vector2<f64>>,
    innovations: Vec<Vector2<f64>>,
}

impl EstimateTrajectory {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn estimates(&self) -> &[Vector2<f64>] {
        &self.estimates
    }

    pub fn innovations(&self) -> &[Vector2<f64>] {
        &self.innovations
    }

    /// `x_k - x^_k` against a trajectory on the same grid.
    pub fn errors(&self, truth: &Trajectory) -> Result<Vec<Vector2<f64>>> {
        if !self.grid.matches(truth.grid()) {
            return Err(Error::GridMismatch(
                "estimate and trajectory grids differ".into(),
            ));
        }
        Ok(truth
            .states()
            .iter()
            .zip(&self.estimates)
            .map(|(x, xh)| x - xh)
            .collect())
    }
}

/// Runs the filter with the gain history stored in `lat`.
pub fn run_filter(
    m: &StateSpaceModel,
    lat: &CovarianceLattice,
    measurements: &[Vector2<f64>],
    xhat0: Vector2<f64>,
    prehistory: Prehistory,
) -> Result<EstimateTrajectory> {
    run_filter_with_gains(m, lat.grid(), lat.gains(), measurements, xhat0, prehistory)
}

/// Same recursion with caller-supplied gains `K_k` (k = 0..K-1 at least).
pub fn run_filter_with_gains(
    m: &StateSpaceModel,
    grid: &TimeGrid,
    gains: &[Matrix2<f64>],
    measurements: &[Vector2<f64>],
    xhat0: Vector2<f64>,
    prehistory: Prehistory,
) -> Result<EstimateTrajectory> {
    grid.check_delay(m.delay())?;
    let steps = grid.steps();
    if measurements.len() != steps {
        return Err(Error::GridMismatch(format!(
            "measurement record has {} increments, grid has {steps} steps",
            measurements.len()
        )));
    }
    if gains.len() < steps {
        return Err(Error::GridMismatch(format!(
            "gain history has {} entries, grid has {steps} steps",
            gains.len()
        )));
    }
    if xhat0.iter().any(|v| !v.is_finite()) {
        return Err(invalid("xhat0", "must be finite"));
    }

    let c = m.coefficients();
    let h = grid.step();
    let n = grid.delay_steps();
    let past = match prehistory {
        Prehistory::Zero => Vector2::zeros(),
        Prehistory::HoldInitial => xhat0,
    };
    let mut estimates = Vec::with_capacity(steps + 1);
    let mut innovations = Vec::with_capacity(steps);
    estimates.push(xhat0);
    for k in 0..steps {
        let x = estimates[k];
        let xd = if k >= n { estimates[k - n] } else { past };
        let dnu = measurements[k] - (c.c * x + c.c_d * xd) * h;
        let next = x + (c.a * x + c.a_d * xd) * h + gains[k] * dnu;
        innovations.push(dnu);
        estimates.push(next);
    }
    Ok(EstimateTrajectory {
        grid: *grid,
        estimates,
        innovations,
    })
}

/// Sample autocorrelation of a 2-vector increment sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct WhitenessReport {
    pub samples: usize,
    /// Mean-removed lag-0 covariance (not divided by h).
    pub lag0_covariance: Matrix2<f64>,
    /// Normalized correlation matrices for lags `1..=max_lag`; entry
    /// `(a, b)` correlates component `a` at `k + lag` with `b` at `k`.
    pub autocorrelation: Vec<Matrix2<f64>>,
    /// `3 / sqrt(K)`.
    pub band: f64,
}

impl WhitenessReport {
    pub fn entries_outside_band(&self) -> usize {
        self.autocorrelation
            .iter()
            .flat_map(|r| r.iter())
            .filter(|v| v.abs() > self.band)
            .count()
    }

    /// Fraction of correlation entries inside the band.
    pub fn coverage(&self) -> f64 {
        let total = 4 * self.autocorrelation.len();
        1.0 - self.entries_outside_band() as f64 / total as f64
    }

    pub fn all_within_band(&self) -> bool {
        self.entries_outside_band() == 0
    }
}

pub fn innovation_whiteness(est: &EstimateTrajectory, max_lag: usize) -> Result<WhitenessReport> {
    increment_whiteness(est.innovations(), max_lag)
}

pub fn increment_whiteness(increments: &[Vector2<f64>], max_lag: usize) -> Result<WhitenessReport> {
    if max_lag == 0 {
        return Err(invalid("max_lag", "must be at least 1"));
    }
    let len = increments.len();
    let required = 10 * max_lag;
    if len < required {
        return Err(Error::RecordTooShort { len, required });
    }
    let count = len as f64;
    let mean = increments.iter().sum::<Vector2<f64>>() / count;
    let centered: Vec<Vector2<f64>> = increments.iter().map(|v| v - mean).collect();
    let lag0 = centered
        .iter()
        .map(|v| v * v.transpose())
        .sum::<Matrix2<f64>>()
        / count;
    let sd = Vector2::new(lag0[(0, 0)].sqrt(), lag0[(1, 1)].sqrt());
    let autocorrelation = (1..=max_lag)
        .map(|lag| {
            let raw = centered[lag..]
                .iter()
                .zip(&centered)
                .map(|(late, early)| late * early.transpose())
                .sum::<Matrix2<f64>>()
                / count;
            Matrix2::from_fn(|a, b| raw[(a, b)] / (sd[a] * sd[b]))
        })
        .collect();
    Ok(WhitenessReport {
        samples: len,
        lag0_covariance: lag0,
        autocorrelation,
        band: 3.0 / count.sqrt(),
    })
}
