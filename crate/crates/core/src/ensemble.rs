//! Monte-Carlo fan-out over seeds and ensemble statistics.

use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;

use crate::covariance::CovarianceLattice;
use crate::error::{invalid, Result};
use crate::filter::{run_filter, EstimateTrajectory};
use crate::model::StateSpaceModel;
use crate::sim::{simulate, SimConfig, Trajectory};

#[derive(Debug, Clone)]
pub struct EnsembleMember {
    pub seed: u64,
    pub trajectory: Trajectory,
    pub estimate: EstimateTrajectory,
}

/// Simulates and filters one run per seed, in parallel. `cfg.seed` is
/// ignored; the filter uses the simulator's prehistory convention.
pub fn run_ensemble(
    m: &StateSpaceModel,
    lat: &CovarianceLattice,
    cfg: &SimConfig,
    seeds: &[u64],
    xhat0: Vector2<f64>,
) -> Result<Vec<EnsembleMember>> {
    seeds
        .par_iter()
        .map(|&seed| {
            let trajectory = simulate(m, &SimConfig { seed, ..*cfg })?;
            let estimate = run_filter(m, lat, trajectory.measurements(), xhat0, cfg.prehistory)?;
            Ok(EnsembleMember {
                seed,
                trajectory,
                estimate,
            })
        })
        .collect()
}

/// Per-grid-point ensemble statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSummary {
    pub runs: usize,
    pub mean_states: Vec<Vector2<f64>>,
    pub mean_estimates: Vec<Vector2<f64>>,
    /// Componentwise standard error of `mean_states`.
    pub state_standard_error: Vec<Vector2<f64>>,
    /// Mean estimation error `E[x - x^]`.
    pub mean_errors: Vec<Vector2<f64>>,
    /// Sample covariance of the estimation error (divides by `runs - 1`).
    pub error_covariance: Vec<Matrix2<f64>>,
}

pub fn summarize(members: &[EnsembleMember]) -> Result<EnsembleSummary> {
    if members.len() < 2 {
        return Err(invalid("members", "need at least two runs"));
    }
    let runs = members.len();
    let len = members[0].trajectory.states().len();
    let count = runs as f64;
    let mut summary = EnsembleSummary {
        runs,
        mean_states: Vec::with_capacity(len),
        mean_estimates: Vec::with_capacity(len),
        state_standard_error: Vec::with_capacity(len),
        mean_errors: Vec::with_capacity(len),
        error_covariance: Vec::with_capacity(len),
    };
    for k in 0..len {
        let mut mx = Vector2::zeros();
        let mut mxh = Vector2::zeros();
        for mem in members {
            mx += mem.trajectory.states()[k];
            mxh += mem.estimate.estimates()[k];
        }
        mx /= count;
        mxh /= count;
        let me = mx - mxh;
        let mut var_x = Vector2::zeros();
        let mut cov_e = Matrix2::zeros();
        for mem in members {
            let dx = mem.trajectory.states()[k] - mx;
            var_x += dx.component_mul(&dx);
            let de = mem.trajectory.states()[k] - mem.estimate.estimates()[k] - me;
            cov_e += de * de.transpose();
        }
        var_x /= count - 1.0;
        cov_e /= count - 1.0;
        summary.mean_states.push(mx);
        summary.mean_estimates.push(mxh);
        summary
            .state_standard_error
            .push(var_x.map(|v| (v / count).sqrt()));
        summary.mean_errors.push(me);
        summary.error_covariance.push(cov_e);
    }
    Ok(summary)
}
