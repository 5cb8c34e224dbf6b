//! Euler–Maruyama simulation of the delay SDE and evaluation of the
//! propagating waveguide field.

use nalgebra::Vector2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::grid::TimeGrid;
use crate::model::{complex_to_real, PhysicalParams, StateSpaceModel};

/// Value assumed for the state (or estimate) at negative times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Prehistory {
    /// `x(t) = 0` for `t < 0`; the delayed drift switches on at `t = T`.
    #[default]
    Zero,
    /// `x(t) = x(0)` for `t < 0`.
    HoldInitial,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub horizon: f64,
    pub step: f64,
    pub seed: u64,
    pub x0: Vector2<f64>,
    pub prehistory: Prehistory,
    /// Multiplies the variance of every Wiener increment; 0 gives a
    /// deterministic run.
    pub noise_variance_scale: f64,
}

impl SimConfig {
    pub fn new(horizon: f64, step: f64, seed: u64, x0: Vector2<f64>) -> Self {
        Self {
            horizon,
            step,
            seed,
            x0,
            prehistory: Prehistory::Zero,
            noise_variance_scale: 1.0,
        }
    }

    pub fn grid(&self, delay: f64) -> Result<TimeGrid> {
        if !self.noise_variance_scale.is_finite() || self.noise_variance_scale < 0.0 {
            return Err(invalid(
                "noise_variance_scale",
                format!("must be finite and >= 0, got {}", self.noise_variance_scale),
            ));
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(invalid("x0", "must be finite"));
        }
        TimeGrid::new(delay, self.step, self.horizon)
    }
}

/// One simulated run: states `x_k` (k = 0..=K), increments `dw_k`
/// (k = -N..K-1) and measurement increments `dy_k` (k = 0..K-1).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: TimeGrid,
    states: Vec<Vector2<f64>>,
    noise: Vec<Vector2<f64>>,
    measurements: Vec<Vector2<f64>>,
}

impl Trajectory {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn states(&self) -> &[Vector2<f64>] {
        &self.states
    }

    pub fn measurements(&self) -> &[Vector2<f64>] {
        &self.measurements
    }

    /// All increments, index 0 holding `dw_{-N}`.
    pub fn noise(&self) -> &[Vector2<f64>] {
        &self.noise
    }

    /// `dw_k` for `-N <= k < K`.
    pub fn dw(&self, k: isize) -> Option<&Vector2<f64>> {
        let i = k + self.grid.delay_steps() as isize;
        usize::try_from(i).ok().and_then(|i| self.noise.get(i))
    }
}

/// Draws the `N + K` increments for a grid: i.i.d. Gaussian with covariance
/// `scale * h * I`.
pub fn draw_noise(grid: &TimeGrid, seed: u64, variance_scale: f64) -> Vec<Vector2<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = (variance_scale * grid.step()).sqrt();
    (0..grid.delay_steps() + grid.steps())
        .map(|_| {
            let q: f64 = StandardNormal.sample(&mut rng);
            let p: f64 = StandardNormal.sample(&mut rng);
            Vector2::new(sd * q, sd * p)
        })
        .collect()
}

pub fn simulate(m: &StateSpaceModel, cfg: &SimConfig) -> Result<Trajectory> {
    let grid = cfg.grid(m.delay())?;
    let noise = draw_noise(&grid, cfg.seed, cfg.noise_variance_scale);
    simulate_with_noise(m, &grid, cfg.x0, cfg.prehistory, noise)
}

/// Runs the recursion
///
/// ```text
/// x_{k+1} = x_k + (A x_k + A_d x_{k-N}) h + B dw_k + B_d dw_{k-N}
/// dy_k    = (C x_k + C_d x_{k-N}) h + D_d dw_{k-N}
/// ```
///
/// on caller-supplied increments (`noise[i] = dw_{i-N}`).
pub fn simulate_with_noise(
    m: &StateSpaceModel,
    grid: &TimeGrid,
    x0: Vector2<f64>,
    prehistory: Prehistory,
    noise: Vec<Vector2<f64>>,
) -> Result<Trajectory> {
    grid.check_delay(m.delay())?;
    let n = grid.delay_steps();
    let steps = grid.steps();
    if noise.len() != n + steps {
        return Err(Error::GridMismatch(format!(
            "expected {} noise increments, got {}",
            n + steps,
            noise.len()
        )));
    }
    let h = grid.step();
    let c = m.coefficients();
    let past = match prehistory {
        Prehistory::Zero => Vector2::zeros(),
        Prehistory::HoldInitial => x0,
    };

    let mut states = Vec::with_capacity(steps + 1);
    let mut measurements = Vec::with_capacity(steps);
    states.push(x0);
    for k in 0..steps {
        let x = states[k];
        let xd = if k >= n { states[k - n] } else { past };
        // noise[k] is dw_{k-N}, noise[k + N] is dw_k
        let dw = noise[k + n];
        let dw_d = noise[k];
        let next = x + (c.a * x + c.a_d * xd) * h + c.b * dw + c.b_d * dw_d;
        measurements.push((c.c * x + c.c_d * xd) * h + c.d_d * dw_d);
        states.push(next);
    }
    Ok(Trajectory {
        grid: *grid,
        states,
        noise,
        measurements,
    })
}

/// Field quadrature increments at one waveguide position over a window of
/// grid indices.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSeries {
    /// Grid index of `values[0]`.
    pub start: usize,
    pub step: f64,
    pub values: Vec<Vector2<f64>>,
}

impl FieldSeries {
    pub fn time(&self, i: usize) -> f64 {
        (self.start + i) as f64 * self.step
    }
}

/// Heaviside step on grid offsets with the midpoint convention `theta(0) = 1/2`.
pub fn heaviside(offset: isize) -> f64 {
    match offset.cmp(&0) {
        std::cmp::Ordering::Less => 0.0,
        std::cmp::Ordering::Equal => 0.5,
        std::cmp::Ordering::Greater => 1.0,
    }
}

/// Position-resolved waveguide field
///
/// ```text
/// b(x, t) = b_in(t - x/v_g)
///         - i sqrt(g/2) sum_n a(t - x/v_g + tau_n) theta(t - x/v_g + tau_n) theta(x/v_g - tau_n)
/// ```
///
/// with `tau_1 = 0`, `tau_2 = T`, returned as quadrature increments over
/// `[t_start, end]`. Delays are rounded to the nearest grid index. Valid for
/// `x` in `[-L, 2L]`; the window ends where the stored noise does.
pub fn waveguide_field(
    traj: &Trajectory,
    m: &StateSpaceModel,
    p: &PhysicalParams,
    x: f64,
    t_start: f64,
) -> Result<FieldSeries> {
    let grid = traj.grid();
    grid.check_delay(m.delay())?;
    if (p.delay() - m.delay()).abs() > 1e-9 * m.delay().max(f64::MIN_POSITIVE) {
        return Err(Error::GridMismatch(
            "physical parameters do not match the model delay".into(),
        ));
    }
    let length = p.length;
    if !x.is_finite() || x < -length || x > 2.0 * length {
        return Err(invalid(
            "position",
            format!(
                "x = {x} outside the valid window [{}, {}]",
                -length,
                2.0 * length
            ),
        ));
    }
    let gamma = p.gamma()?;
    let emit = complex_to_real(0.0, -(0.5 * gamma).sqrt());

    let h = grid.step();
    let n = grid.delay_steps() as isize;
    let steps = grid.steps() as isize;
    let shift = grid.nearest_index(x / p.group_velocity);
    let first = (shift - n).max(0);
    let last = (steps - 1).min(steps - 1 + shift);
    let earliest = first as f64 * h;
    let k0 = grid.nearest_index(t_start);
    if k0 < first {
        return Err(Error::FieldHistory {
            requested: t_start,
            earliest,
        });
    }
    if k0 > last {
        return Err(invalid(
            "t_start",
            format!("t = {t_start:e} s is past the last available field sample"),
        ));
    }

    let taus = [0isize, n];
    let values = (k0..=last)
        .map(|k| {
            let mut b = *traj.dw(k - shift).expect("index checked against window");
            for &tau in &taus {
                let j = k - shift + tau;
                let gate = heaviside(j) * heaviside(shift - tau);
                if gate != 0.0 {
                    b += gate * (emit * traj.states[j as usize]) * h;
                }
            }
            b
        })
        .collect();
    Ok(FieldSeries {
        start: k0 as usize,
        step: h,
        values,
    })
}
