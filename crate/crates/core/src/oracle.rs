//! Brute-force references for the delay filter.
//!
//! * [`AugmentedModel`] / [`augmented_kalman`]: discretize the delay system
//!   with the same Euler scheme as the simulator, stack the delayed states
//!   and the pending noise increments into one Markov state, and run the
//!   exact discrete Kalman predictor on it.
//! * [`riccati_markov`] / [`kalman_bucy_filter`]: the textbook Kalman–Bucy
//!   filter with correlated process and measurement noise for a zero-delay
//!   model.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::covariance::Integrator;
use crate::error::{invalid, Error, Result};
use crate::grid::TimeGrid;
use crate::model::StateSpaceModel;
use crate::sim::Prehistory;

/// A sequence of 2-vectors on the grid.
pub type Samples = Vec<Vector2<f64>>;

/// Stacked discrete model
///
/// ```text
/// z_k = [x_k, x_{k-1}, ..., x_{k-L}, dw_{k-1}, ..., dw_{k-N}],  L = depth * N
/// z_{k+1} = F z_k + G dw_k
/// dy_k    = H z_k + D dw_k,      dw_k ~ N(0, h I)
/// ```
///
/// For `N >= 1` the measurement reads `dw_{k-N}` from the buffer and `D = 0`;
/// for `N = 0` process and measurement share `dw_k` through `D = D_d`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedModel {
    delay_steps: usize,
    depth: usize,
    step: f64,
    transition: DMatrix<f64>,
    noise_input: DMatrix<f64>,
    observation: DMatrix<f64>,
    feedthrough: DMatrix<f64>,
}

impl AugmentedModel {
    pub fn delay_steps(&self) -> usize {
        self.delay_steps
    }

    /// Number of delay multiples kept in the state history.
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn history_len(&self) -> usize {
        self.depth * self.delay_steps
    }

    pub fn dim(&self) -> usize {
        2 * (self.history_len() + 1) + 2 * self.delay_steps
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.transition
    }

    pub fn noise_input(&self) -> &DMatrix<f64> {
        &self.noise_input
    }

    pub fn observation(&self) -> &DMatrix<f64> {
        &self.observation
    }

    pub fn feedthrough(&self) -> &DMatrix<f64> {
        &self.feedthrough
    }

    /// Row offset of `x_{k-i}`.
    pub fn state_slot(&self, i: usize) -> usize {
        2 * i
    }

    /// Row offset of `dw_{k-b}`, `1 <= b <= N`.
    pub fn noise_slot(&self, b: usize) -> usize {
        2 * (self.history_len() + 1) + 2 * (b - 1)
    }

    /// Covariance of the stacked pair `(G dw_k, D dw_k)`.
    pub fn joint_noise_covariance(&self) -> DMatrix<f64> {
        let dim = self.dim();
        let mut stacked = DMatrix::zeros(dim + 2, 2);
        stacked.rows_mut(0, dim).copy_from(&self.noise_input);
        stacked.rows_mut(dim, 2).copy_from(&self.feedthrough);
        &stacked * stacked.transpose() * self.step
    }

    fn prior(
        &self,
        x0: Vector2<f64>,
        p0: &Matrix2<f64>,
        prehistory: Prehistory,
    ) -> (DVector<f64>, DMatrix<f64>) {
        let dim = self.dim();
        let mut mean = DVector::zeros(dim);
        let mut cov = DMatrix::zeros(dim, dim);
        let held: Vec<usize> = match prehistory {
            Prehistory::Zero => vec![0],
            Prehistory::HoldInitial => (0..=self.history_len()).collect(),
        };
        for &i in &held {
            mean.rows_mut(self.state_slot(i), 2).copy_from(&x0);
            for &j in &held {
                cov.view_mut((self.state_slot(i), self.state_slot(j)), (2, 2))
                    .copy_from(p0);
            }
        }
        for b in 1..=self.delay_steps {
            let s = self.noise_slot(b);
            cov.view_mut((s, s), (2, 2))
                .copy_from(&(Matrix2::identity() * self.step));
        }
        (mean, cov)
    }

    /// Propagates the stacked recursion on given increments
    /// (`noise[i] = dw_{i-N}`), returning states `x_0..=x_K` and measurement
    /// increments `dy_0..dy_{K-1}`.
    pub fn simulate(
        &self,
        x0: Vector2<f64>,
        prehistory: Prehistory,
        noise: &[Vector2<f64>],
    ) -> Result<(Samples, Samples)> {
        let n = self.delay_steps;
        if noise.len() < n {
            return Err(Error::GridMismatch("noise shorter than the delay".into()));
        }
        let steps = noise.len() - n;
        let (mut z, _) = self.prior(x0, &Matrix2::zeros(), prehistory);
        for b in 1..=n {
            z.rows_mut(self.noise_slot(b), 2).copy_from(&noise[n - b]);
        }
        let mut states = Vec::with_capacity(steps + 1);
        let mut measurements = Vec::with_capacity(steps);
        states.push(x0);
        for k in 0..steps {
            let dw = DVector::from_column_slice(noise[k + n].as_slice());
            let y = &self.observation * &z + &self.feedthrough * &dw;
            measurements.push(Vector2::new(y[0], y[1]));
            z = &self.transition * &z + &self.noise_input * &dw;
            states.push(Vector2::new(z[0], z[1]));
        }
        Ok((states, measurements))
    }
}

fn delay_steps_for(m: &StateSpaceModel, step: f64) -> Result<usize> {
    let grid = TimeGrid::new(m.delay(), step, step.max(m.delay()))?;
    Ok(grid.delay_steps())
}

pub fn build_augmented(m: &StateSpaceModel, step: f64) -> Result<AugmentedModel> {
    build_augmented_with_depth(m, step, 1)
}

/// Stacked model keeping `depth` delay multiples of state history, so that
/// cross-covariances up to lag `depth * T` can be read off.
pub fn build_augmented_with_depth(
    m: &StateSpaceModel,
    step: f64,
    depth: usize,
) -> Result<AugmentedModel> {
    if depth == 0 {
        return Err(invalid("depth", "must be at least 1"));
    }
    let n = delay_steps_for(m, step)?;
    let c = m.coefficients();
    let h = step;
    let eye = Matrix2::identity();

    if n == 0 {
        let f = eye + (c.a + c.a_d) * h;
        return Ok(AugmentedModel {
            delay_steps: 0,
            depth,
            step,
            transition: DMatrix::from_column_slice(2, 2, f.as_slice()),
            noise_input: DMatrix::from_column_slice(2, 2, (c.b + c.b_d).as_slice()),
            observation: DMatrix::from_column_slice(2, 2, ((c.c + c.c_d) * h).as_slice()),
            feedthrough: DMatrix::from_column_slice(2, 2, c.d_d.as_slice()),
        });
    }

    let mut am = AugmentedModel {
        delay_steps: n,
        depth,
        step,
        transition: DMatrix::zeros(0, 0),
        noise_input: DMatrix::zeros(0, 0),
        observation: DMatrix::zeros(0, 0),
        feedthrough: DMatrix::zeros(2, 2),
    };
    let dim = am.dim();
    let mut f = DMatrix::zeros(dim, dim);
    let mut g = DMatrix::zeros(dim, 2);
    let mut obs = DMatrix::zeros(2, dim);

    let x = am.state_slot(0);
    let xd = am.state_slot(n);
    let wd = am.noise_slot(n);
    f.view_mut((x, x), (2, 2)).copy_from(&(eye + c.a * h));
    f.view_mut((x, xd), (2, 2)).copy_from(&(c.a_d * h));
    f.view_mut((x, wd), (2, 2)).copy_from(&c.b_d);
    for i in 1..=am.history_len() {
        f.view_mut((am.state_slot(i), am.state_slot(i - 1)), (2, 2))
            .copy_from(&eye);
    }
    for b in 2..=n {
        f.view_mut((am.noise_slot(b), am.noise_slot(b - 1)), (2, 2))
            .copy_from(&eye);
    }
    g.view_mut((x, 0), (2, 2)).copy_from(&c.b);
    g.view_mut((am.noise_slot(1), 0), (2, 2)).copy_from(&eye);

    obs.view_mut((0, x), (2, 2)).copy_from(&(c.c * h));
    obs.view_mut((0, xd), (2, 2)).copy_from(&(c.c_d * h));
    obs.view_mut((0, wd), (2, 2)).copy_from(&c.d_d);

    am.transition = f;
    am.noise_input = g;
    am.observation = obs;
    Ok(am)
}

/// Output of the stacked Kalman predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedEstimates {
    /// One-step predictions `x^_{k|k-1}`, k = 0..=K.
    pub estimates: Vec<Vector2<f64>>,
    /// Prediction error covariance of `x_k`.
    pub covariance: Vec<Matrix2<f64>>,
    /// `cross[j-1][k] = E[e_k e_{k-jN}^T]` for `j = 1..=depth`, where
    /// `e_{k-jN}` is the predictor error at `k - jN`.
    pub cross: Vec<Vec<Matrix2<f64>>>,
    pub innovations: Vec<Vector2<f64>>,
}

fn block(m: &DMatrix<f64>, r: usize, c: usize) -> Matrix2<f64> {
    m.fixed_view::<2, 2>(r, c).into_owned()
}

/// Discrete Kalman predictor with correlated process/measurement noise on
/// the stacked model.
pub fn augmented_kalman(
    am: &AugmentedModel,
    measurements: &[Vector2<f64>],
    xhat0: Vector2<f64>,
    p0_init: &Matrix2<f64>,
    prehistory: Prehistory,
) -> Result<AugmentedEstimates> {
    let (mut z, mut cov) = am.prior(xhat0, p0_init, prehistory);
    let f = am.transition();
    let ft = f.transpose();
    let hm = am.observation();
    let ht = hm.transpose();
    let q = am.step();
    let gqg = am.noise_input() * am.noise_input().transpose() * q;
    let gqd = am.noise_input() * am.feedthrough().transpose() * q;
    let dqd = am.feedthrough() * am.feedthrough().transpose() * q;

    let lags: Vec<usize> = (1..=am.depth()).map(|j| j * am.delay_steps()).collect();
    let steps = measurements.len();
    let mut out = AugmentedEstimates {
        estimates: Vec::with_capacity(steps + 1),
        covariance: Vec::with_capacity(steps + 1),
        cross: vec![Vec::with_capacity(steps + 1); lags.len()],
        innovations: Vec::with_capacity(steps),
    };
    let record = |z: &DVector<f64>, cov: &DMatrix<f64>, out: &mut AugmentedEstimates| {
        out.estimates.push(Vector2::new(z[0], z[1]));
        out.covariance.push(block(cov, 0, 0));
        for (j, &lag) in lags.iter().enumerate() {
            out.cross[j].push(block(cov, 0, am.state_slot(lag)));
        }
    };
    record(&z, &cov, &mut out);

    for (k, dy) in measurements.iter().enumerate() {
        let s = hm * &cov * &ht + &dqd;
        let s_inv = s
            .clone()
            .try_inverse()
            .ok_or(Error::SingularInnovation { step: k })?;
        let cross = f * &cov * &ht + &gqd;
        let gain = &cross * &s_inv;
        let pred = hm * &z;
        let nu = Vector2::new(dy[0] - pred[0], dy[1] - pred[1]);
        let nu_d = DVector::from_column_slice(nu.as_slice());
        z = f * &z + &gain * nu_d;
        cov = f * &cov * &ft + &gqg - &gain * s * gain.transpose();
        cov = (&cov + cov.transpose()) * 0.5;
        out.innovations.push(nu);
        record(&z, &cov, &mut out);
    }
    Ok(out)
}

/// Covariance trajectory of the standard Kalman–Bucy filter.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiTrajectory {
    pub grid: TimeGrid,
    pub covariance: Vec<Matrix2<f64>>,
    /// `(P C^T + M D^T)(D D^T)^-1` at every grid point.
    pub gains: Vec<Matrix2<f64>>,
}

/// Zero-delay model collapsed to `(A, M, C, D)` with one noise increment.
struct Merged {
    a: Matrix2<f64>,
    m: Matrix2<f64>,
    c: Matrix2<f64>,
    d: Matrix2<f64>,
    r_inv: Matrix2<f64>,
}

impl Merged {
    fn from_model(model: &StateSpaceModel) -> Result<Self> {
        if !model.is_zero_delay() {
            return Err(invalid(
                "model",
                format!("needs a zero-delay model, delay is {:e} s", model.delay()),
            ));
        }
        let k = model.coefficients();
        let d = k.d_d;
        let r_inv = (d * d.transpose())
            .try_inverse()
            .ok_or(Error::SingularMeasurementNoise {
                det: (d * d.transpose()).determinant(),
            })?;
        Ok(Self {
            a: k.a + k.a_d,
            m: k.b + k.b_d,
            c: k.c + k.c_d,
            d,
            r_inv,
        })
    }

    fn gain(&self, p: &Matrix2<f64>) -> Matrix2<f64> {
        (p * self.c.transpose() + self.m * self.d.transpose()) * self.r_inv
    }

    fn rhs(&self, p: &Matrix2<f64>) -> Matrix2<f64> {
        let s = p * self.c.transpose() + self.m * self.d.transpose();
        self.a * p + p * self.a.transpose() + self.m * self.m.transpose()
            - s * self.r_inv * s.transpose()
    }
}

/// `A P + P A^T + M M^T - (P C^T + M D^T)(D D^T)^-1 (P C^T + M D^T)^T`,
/// zero at a stationary covariance.
pub fn care_residual(model: &StateSpaceModel, p: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    Ok(Merged::from_model(model)?.rhs(p))
}

/// Integrates the Kalman–Bucy Riccati equation of a zero-delay model.
pub fn riccati_markov(
    model: &StateSpaceModel,
    p0_init: &Matrix2<f64>,
    horizon: f64,
    step: f64,
    integrator: Integrator,
) -> Result<RiccatiTrajectory> {
    let merged = Merged::from_model(model)?;
    let grid = TimeGrid::new(0.0, step, horizon)?;
    let h = grid.step();
    let mut covariance = Vec::with_capacity(grid.steps() + 1);
    let mut p = *p0_init;
    covariance.push(p);
    for _ in 0..grid.steps() {
        p = match integrator {
            Integrator::Euler => p + merged.rhs(&p) * h,
            Integrator::Rk4 => {
                let k1 = merged.rhs(&p);
                let k2 = merged.rhs(&(p + k1 * (0.5 * h)));
                let k3 = merged.rhs(&(p + k2 * (0.5 * h)));
                let k4 = merged.rhs(&(p + k3 * h));
                p + (k1 + 2.0 * k2 + 2.0 * k3 + k4) * (h / 6.0)
            }
        };
        p = 0.5 * (p + p.transpose());
        covariance.push(p);
    }
    let gains = covariance.iter().map(|p| merged.gain(p)).collect();
    Ok(RiccatiTrajectory {
        grid,
        covariance,
        gains,
    })
}

/// Euler-discretized Kalman–Bucy filter on a zero-delay measurement record.
pub fn kalman_bucy_filter(
    model: &StateSpaceModel,
    riccati: &RiccatiTrajectory,
    measurements: &[Vector2<f64>],
    xhat0: Vector2<f64>,
) -> Result<Vec<Vector2<f64>>> {
    let merged = Merged::from_model(model)?;
    if measurements.len() > riccati.gains.len() {
        return Err(Error::GridMismatch(format!(
            "{} measurements but only {} gains",
            measurements.len(),
            riccati.gains.len()
        )));
    }
    let h = riccati.grid.step();
    let mut x = xhat0;
    let mut out = Vec::with_capacity(measurements.len() + 1);
    out.push(x);
    for (dy, l) in measurements.iter().zip(&riccati.gains) {
        x = x + merged.a * x * h + l * (dy - merged.c * x * h);
        out.push(x);
    }
    Ok(out)
}
