//! Error covariance `P(t)` and delayed cross-covariances
//! `P_j(t) = E[e(t) e(t - jT)^T]`, propagated interval by interval.
//!
//! On `[mT, (m+1)T)` the active set is `{P_0, ..., P_m}`. All active
//! matrices are advanced together each step because the gain couples `P_0`
//! and `P_1` at the current time. The highest-index equation closes because
//! `P_{m+1}(t) = 0` for `t < (m+1)T`, and every delayed quantity
//! (`P_{j-1}(t-T)`, `G(t-jT)`) is read back from the part of the lattice
//! that is already computed.
//!
//! For `T > 0`:
//!
//! ```text
//! dP_0/dt = (A - KC) P_0 + P_0 (A - KC)^T + (A_d - KC_d) P_1^T + P_1 (A_d - KC_d)^T
//!         + B B^T + (B_d - K D_d)(B_d - K D_d)^T
//! dP_j/dt = (A - K(t)C) P_j + (A_d - K(t)C_d) P_{j-1}(t-T)
//!         + P_j (A - K(t-jT)C)^T + P_{j+1} (A_d - K(t-jT)C_d)^T
//!         + [j = 1] (B_d - K(t)D_d) B^T
//! ```
//!
//! with `G = P_0 C^T + P_1 C_d^T` and `K = G (D_d D_d^T)^-1`. A zero-delay
//! model has a single noise increment, so the diffusion becomes
//! `(B + B_d - K D_d)(.)^T` and `G` picks up the cross term `(B + B_d) D_d^T`.

use nalgebra::Matrix2;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::model::{markovian_limit, StateSpaceModel};

/// Time stepping for the covariance ODEs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integrator {
    #[default]
    Euler,
    /// Classical RK4; delayed quantities use the nearest grid index.
    Rk4,
}

/// `G = P_0 C^T + P_1 C_d^T` and the filter gain `K = G (D_d D_d^T)^-1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainTerms {
    pub g: Matrix2<f64>,
    pub k: Matrix2<f64>,
}

/// Filter gain from the current covariance and first cross-covariance.
///
/// For a zero-delay model `dw(t - T)` and `dw(t)` are the same increment and
/// the noise cross term `(B + B_d) D_d^T` is added to `G`.
pub fn gain(p0: &Matrix2<f64>, p1: &Matrix2<f64>, m: &StateSpaceModel) -> GainTerms {
    let c = m.coefficients();
    let mut g = p0 * c.c.transpose() + p1 * c.c_d.transpose();
    if m.is_zero_delay() {
        g += (c.b + c.b_d) * c.d_d.transpose();
    }
    GainTerms {
        g,
        k: g * m.measurement_noise_inverse(),
    }
}

/// Stored `P_j[k]` for `j = 0..=J_max`, `k = 0..=K`, with the gain history.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceLattice {
    grid: TimeGrid,
    integrator: Integrator,
    cross: Vec<Vec<Matrix2<f64>>>,
    g: Vec<Matrix2<f64>>,
    gains: Vec<Matrix2<f64>>,
    max_asymmetry: f64,
}

impl CovarianceLattice {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn integrator(&self) -> Integrator {
        self.integrator
    }

    /// J_max.
    pub fn max_order(&self) -> usize {
        self.cross.len() - 1
    }

    /// `P_j[k]` for all k.
    pub fn cross_covariance(&self, j: usize) -> Option<&[Matrix2<f64>]> {
        self.cross.get(j).map(Vec::as_slice)
    }

    pub fn p(&self, j: usize, k: usize) -> Matrix2<f64> {
        self.cross[j][k]
    }

    /// Error covariance `P_0`.
    pub fn covariance(&self) -> &[Matrix2<f64>] {
        &self.cross[0]
    }

    /// `G[k]`.
    pub fn g_history(&self) -> &[Matrix2<f64>] {
        &self.g
    }

    /// Gain `K[k]`.
    pub fn gains(&self) -> &[Matrix2<f64>] {
        &self.gains
    }

    /// Largest `|P_0 - P_0^T| / |P_0|` seen before symmetrization.
    pub fn max_relative_asymmetry(&self) -> f64 {
        self.max_asymmetry
    }

    /// Smallest eigenvalue of `P_0[k]` over the whole grid.
    pub fn min_eigenvalue(&self) -> f64 {
        self.cross[0]
            .iter()
            .map(min_symmetric_eigenvalue)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Smallest eigenvalue of the symmetric part of a 2×2 matrix.
pub fn min_symmetric_eigenvalue(p: &Matrix2<f64>) -> f64 {
    let a = p[(0, 0)];
    let d = p[(1, 1)];
    let b = 0.5 * (p[(0, 1)] + p[(1, 0)]);
    let mean = 0.5 * (a + d);
    let r = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    mean - r
}

fn check_initial(p0: &Matrix2<f64>) -> Result<()> {
    if p0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveSemidefinite("non-finite entries".into()));
    }
    let scale = p0.norm().max(f64::MIN_POSITIVE);
    let asym = (p0[(0, 1)] - p0[(1, 0)]).abs();
    if asym > 1e-12 * scale {
        return Err(Error::NotPositiveSemidefinite(format!(
            "asymmetry {asym:e}"
        )));
    }
    let lo = min_symmetric_eigenvalue(p0);
    if lo < -1e-12 * scale {
        return Err(Error::NotPositiveSemidefinite(format!(
            "minimum eigenvalue {lo:e}"
        )));
    }
    Ok(())
}

/// Forward-Euler propagation over `[0, horizon]` with step `h`.
pub fn propagate(
    m: &StateSpaceModel,
    p0_init: &Matrix2<f64>,
    horizon: f64,
    step: f64,
) -> Result<CovarianceLattice> {
    let grid = TimeGrid::new(m.delay(), step, horizon)?;
    propagate_on(m, p0_init, &grid, Integrator::Euler)
}

pub fn propagate_on(
    m: &StateSpaceModel,
    p0_init: &Matrix2<f64>,
    grid: &TimeGrid,
    integrator: Integrator,
) -> Result<CovarianceLattice> {
    grid.check_delay(m.delay())?;
    check_initial(p0_init)?;
    let flow = Flow::new(m, grid);
    let steps = grid.steps();
    let n = grid.delay_steps();
    let order = grid.max_order();

    let mut lat = CovarianceLattice {
        grid: *grid,
        integrator,
        cross: vec![vec![Matrix2::zeros(); steps + 1]; order + 1],
        g: Vec::with_capacity(steps + 1),
        gains: Vec::with_capacity(steps + 1),
        max_asymmetry: 0.0,
    };
    lat.cross[0][0] = *p0_init;
    let terms = flow.gain_at(&lat, 0);
    lat.g.push(terms.g);
    lat.gains.push(terms.k);

    let h = grid.step();
    let mut state = Vec::with_capacity(order + 1);
    for k in 0..steps {
        let active = k.checked_div(n).map_or(0, |a| a.min(order));
        state.clear();
        state.extend((0..=active).map(|j| lat.cross[j][k]));

        let next: Vec<Matrix2<f64>> = match integrator {
            Integrator::Euler => {
                let d = flow.rhs(&lat, k, &state);
                state.iter().zip(&d).map(|(p, dp)| p + dp * h).collect()
            }
            Integrator::Rk4 => {
                let k1 = flow.rhs(&lat, k, &state);
                let s2 = axpy(&state, &k1, 0.5 * h);
                // half-step delayed lookups round to the later index
                let k2 = flow.rhs(&lat, k + 1, &s2);
                let s3 = axpy(&state, &k2, 0.5 * h);
                let k3 = flow.rhs(&lat, k + 1, &s3);
                let s4 = axpy(&state, &k3, h);
                let k4 = flow.rhs(&lat, k + 1, &s4);
                state
                    .iter()
                    .enumerate()
                    .map(|(j, p)| p + (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]) * (h / 6.0))
                    .collect()
            }
        };

        for (j, p) in next.into_iter().enumerate() {
            if j == 0 {
                let norm = p.norm();
                if norm > 0.0 {
                    let asym = (p[(0, 1)] - p[(1, 0)]).abs() / norm;
                    lat.max_asymmetry = lat.max_asymmetry.max(asym);
                }
                lat.cross[0][k + 1] = 0.5 * (p + p.transpose());
            } else {
                lat.cross[j][k + 1] = p;
            }
        }
        let terms = flow.gain_at(&lat, k + 1);
        lat.g.push(terms.g);
        lat.gains.push(terms.k);
    }
    Ok(lat)
}

fn axpy(x: &[Matrix2<f64>], d: &[Matrix2<f64>], a: f64) -> Vec<Matrix2<f64>> {
    x.iter().zip(d).map(|(x, d)| x + d * a).collect()
}

/// Right-hand side of the lattice ODE system.
struct Flow {
    model: StateSpaceModel,
    delay_steps: usize,
    process: Matrix2<f64>,
}

impl Flow {
    fn new(m: &StateSpaceModel, grid: &TimeGrid) -> Self {
        let model = if m.is_zero_delay() {
            markovian_limit(m)
        } else {
            *m
        };
        let c = model.coefficients();
        let process = if model.is_zero_delay() {
            Matrix2::zeros()
        } else {
            c.b * c.b.transpose()
        };
        Self {
            model,
            delay_steps: grid.delay_steps(),
            process,
        }
    }

    fn gain_from(&self, p0: &Matrix2<f64>, p1: Option<&Matrix2<f64>>) -> GainTerms {
        let zero = Matrix2::zeros();
        gain(p0, p1.unwrap_or(&zero), &self.model)
    }

    fn gain_at(&self, lat: &CovarianceLattice, k: usize) -> GainTerms {
        let p1 = lat.cross.get(1).map(|row| &row[k]);
        self.gain_from(&lat.cross[0][k], p1)
    }

    /// Derivatives of the active matrices. `index` is the grid index used
    /// for delayed lookups.
    fn rhs(
        &self,
        lat: &CovarianceLattice,
        index: usize,
        state: &[Matrix2<f64>],
    ) -> Vec<Matrix2<f64>> {
        let c = self.model.coefficients();
        let p0 = &state[0];
        let now = self.gain_from(p0, state.get(1));
        let closed = c.a - now.k * c.c;
        let closed_d = c.a_d - now.k * c.c_d;

        if self.model.is_zero_delay() {
            let noise = c.b + c.b_d - now.k * c.d_d;
            return vec![closed * p0 + p0 * closed.transpose() + noise * noise.transpose()];
        }

        let noise_d = c.b_d - now.k * c.d_d;
        let zero = Matrix2::zeros();
        let p1 = state.get(1).unwrap_or(&zero);
        let mut out = Vec::with_capacity(state.len());
        out.push(
            closed * p0
                + p0 * closed.transpose()
                + closed_d * p1.transpose()
                + p1 * closed_d.transpose()
                + self.process
                + noise_d * noise_d.transpose(),
        );

        let n = self.delay_steps;
        for j in 1..state.len() {
            let pj = &state[j];
            let above = state.get(j + 1).unwrap_or(&zero);
            let lagged = lat.cross[j - 1][index - n];
            let past = lat.gains[index - j * n];
            let closed_past = c.a - past * c.c;
            let closed_d_past = c.a_d - past * c.c_d;
            let mut d = closed * pj
                + closed_d * lagged
                + pj * closed_past.transpose()
                + above * closed_d_past.transpose();
            if j == 1 {
                d += noise_d * c.b.transpose();
            }
            out.push(d);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, reference_params};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn reference() -> StateSpaceModel {
        build_model(&reference_params()).unwrap()
    }

    #[test]
    fn gain_identities() {
        let m = reference();
        let z = Matrix2::zeros();
        assert_eq!(gain(&z, &z, &m).k, z);
        let g = gain(&Matrix2::identity(), &z, &m);
        assert_eq!(g.k, m.c().transpose());
        assert_eq!(g.g, g.k);
    }

    #[test]
    fn cross_covariances_vanish_before_activation() {
        let m = reference();
        let t = m.delay();
        // P(0) = I makes the P_1 source cancel exactly at t = T for this model
        let p0 = Matrix2::new(0.5, 0.1, 0.1, 0.8);
        let lat = propagate(&m, &p0, 1e-7, t / 100.0).unwrap();
        assert_eq!(lat.max_order(), 6);
        let n = lat.grid().delay_steps();
        for j in 1..=lat.max_order() {
            for k in 0..j * n {
                assert_eq!(lat.p(j, k), Matrix2::zeros(), "P_{j}[{k}]");
            }
            // P_j is fed by P_{j-1}(t - T), which leaves zero j - 1 steps
            // after its own activation
            assert_eq!(lat.p(j, j * n + j - 1), Matrix2::zeros());
            assert_ne!(lat.p(j, j * n + j), Matrix2::zeros(), "P_{j} stays zero");
        }
    }

    #[test]
    fn first_interval_matches_riccati_form() {
        let m = reference();
        let t = m.delay();
        let lat = propagate(&m, &Matrix2::identity(), 1e-7, t / 50.0).unwrap();
        let h = lat.grid().step();
        let (a, b, bd, c, dd) = (*m.a(), *m.b(), *m.b_d(), *m.c(), *m.d_d());
        for k in [0, 3, 17, 29, 49] {
            let p = lat.covariance()[k];
            let g = p * c.transpose();
            let cl = a - g * c;
            let nd = bd - g * dd;
            let rhs = cl * p + p * cl.transpose() + b * b.transpose() + nd * nd.transpose();
            let fd = (lat.covariance()[k + 1] - p) / h;
            // difference quotient resolves |P| * eps / h ~ 1e-6
            assert_abs_diff_eq!(fd, rhs, epsilon = 1e-3);
        }
    }

    #[test]
    fn rejects_bad_initial() {
        let m = reference();
        let t = m.delay();
        let asym = Matrix2::new(1.0, 0.5, 0.0, 1.0);
        assert!(propagate(&m, &asym, 1e-7, t / 10.0).is_err());
        let indefinite = Matrix2::new(1.0, 0.0, 0.0, -1.0);
        assert!(matches!(
            propagate(&m, &indefinite, 1e-7, t / 10.0),
            Err(Error::NotPositiveSemidefinite(_))
        ));
        assert!(matches!(
            propagate(&m, &Matrix2::identity(), 1e-7, t / 10.5),
            Err(Error::DelayGrid { .. })
        ));
    }

    #[test]
    fn min_eigenvalue_closed_form() {
        let p = Matrix2::new(2.0, 1.0, 1.0, 2.0);
        assert_relative_eq!(min_symmetric_eigenvalue(&p), 1.0, max_relative = 1e-15);
        assert_eq!(min_symmetric_eigenvalue(&Matrix2::zeros()), 0.0);
    }
}
