//! Phase-space quasi-probabilities for coherent states and the two-lobe
//! cat-state approximation.

use std::f64::consts::{FRAC_2_PI, PI};

use nalgebra::Vector2;

use crate::error::{invalid, Error, Result};
use crate::filter::EstimateTrajectory;
use crate::sim::Trajectory;

/// Rectangular phase-space grid, inclusive bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub q_min: f64,
    pub q_max: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub n_q: usize,
    pub n_p: usize,
}

impl GridSpec {
    /// `center ± half_width` in both directions with `n` points per axis.
    pub fn centered(center: Vector2<f64>, half_width: f64, n: usize) -> Self {
        Self {
            q_min: center[0] - half_width,
            q_max: center[0] + half_width,
            p_min: center[1] - half_width,
            p_max: center[1] + half_width,
            n_q: n,
            n_p: n,
        }
    }

    /// 201×201 over `center ± 4`.
    pub fn default_around(center: Vector2<f64>) -> Self {
        Self::centered(center, 4.0, 201)
    }

    pub fn validate(&self) -> Result<()> {
        let bounds = [self.q_min, self.q_max, self.p_min, self.p_max];
        if bounds.iter().any(|v| !v.is_finite()) {
            return Err(invalid("grid", "bounds must be finite"));
        }
        if self.q_max <= self.q_min {
            return Err(invalid("grid.q_max", "must exceed q_min"));
        }
        if self.p_max <= self.p_min {
            return Err(invalid("grid.p_max", "must exceed p_min"));
        }
        if self.n_q < 2 || self.n_p < 2 {
            return Err(invalid("grid.n", "need at least 2 points per axis"));
        }
        Ok(())
    }

    pub fn dq(&self) -> f64 {
        (self.q_max - self.q_min) / (self.n_q - 1) as f64
    }

    pub fn dp(&self) -> f64 {
        (self.p_max - self.p_min) / (self.n_p - 1) as f64
    }

    pub fn q(&self, i: usize) -> f64 {
        self.q_min + i as f64 * self.dq()
    }

    pub fn p(&self, j: usize) -> f64 {
        self.p_min + j as f64 * self.dp()
    }

    /// Whether the spacing resolves the interference fringes of `cat`:
    /// at least four points per period along each axis.
    pub fn resolves_cat_fringes(&self, cat: &CatParams) -> bool {
        if cat.beta == 0.0 {
            return true;
        }
        let beta = cat.beta.abs();
        let s2 = cat.sigma * cat.sigma;
        self.dq() <= s2 * PI / (4.0 * beta) && self.dp() <= PI / (4.0 * beta * s2)
    }
}

/// Quasi-probability values on a grid, stored row-major with `q` as the row
/// index.
#[derive(Debug, Clone, PartialEq)]
pub struct WignerGrid {
    spec: GridSpec,
    values: Vec<f64>,
}

impl WignerGrid {
    fn evaluate(spec: GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(spec.n_q * spec.n_p);
        for i in 0..spec.n_q {
            let q = spec.q(i);
            for j in 0..spec.n_p {
                values.push(f(q, spec.p(j)));
            }
        }
        Self { spec, values }
    }

    pub fn from_values(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if values.len() != spec.n_q * spec.n_p {
            return Err(Error::GridMismatch(format!(
                "{} values for a {}x{} grid",
                values.len(),
                spec.n_q,
                spec.n_p
            )));
        }
        Ok(Self { spec, values })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.spec.n_p + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.spec.n_p..(i + 1) * self.spec.n_p]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Trapezoidal integral over the grid rectangle.
    pub fn integral(&self) -> f64 {
        let (n_q, n_p) = (self.spec.n_q, self.spec.n_p);
        let weight = |i: usize, n: usize| if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        let mut sum = 0.0;
        for i in 0..n_q {
            let wi = weight(i, n_q);
            for j in 0..n_p {
                sum += wi * weight(j, n_p) * self.value(i, j);
            }
        }
        sum * self.spec.dq() * self.spec.dp()
    }

    /// Divides by the largest absolute value; a zero grid is left unchanged.
    pub fn normalized(mut self) -> Self {
        let peak = self.max_abs();
        if peak > 0.0 {
            self.values.iter_mut().for_each(|v| *v /= peak);
        }
        self
    }
}

/// `W(q, p) = (2/pi) exp(-2[(q - <q>)^2 + (p - <p>)^2])`.
pub fn coherent_value(q: f64, p: f64, center: &Vector2<f64>) -> f64 {
    let dq = q - center[0];
    let dp = p - center[1];
    FRAC_2_PI * (-2.0 * (dq * dq + dp * dp)).exp()
}

pub fn coherent_wigner(center: Vector2<f64>, spec: &GridSpec) -> Result<WignerGrid> {
    spec.validate()?;
    if center.iter().any(|v| !v.is_finite()) {
        return Err(invalid("center", "must be finite"));
    }
    Ok(WignerGrid::evaluate(*spec, |q, p| {
        coherent_value(q, p, &center)
    }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CatParams {
    pub q0: f64,
    pub p0: f64,
    /// Separation of the two lobes along q.
    pub beta: f64,
    /// Packet width, > 0.
    pub sigma: f64,
}

impl CatParams {
    pub fn validate(&self) -> Result<()> {
        if !self.sigma.is_finite() || self.sigma <= 0.0 {
            return Err(invalid(
                "sigma",
                format!("must be finite and > 0, got {}", self.sigma),
            ));
        }
        if !self.beta.is_finite() || !self.q0.is_finite() || !self.p0.is_finite() {
            return Err(invalid("cat", "center and beta must be finite"));
        }
        Ok(())
    }
}

/// Unnormalized `(W+ + W- + W_int) / 2` with
///
/// ```text
/// W±    = exp(-(q - q0 ∓ beta)^2 / s^2 - s^2 (p - p0)^2)
/// W_int = exp(-(q - q0)^2 / s^2 - s^2 (p - p0)^2) cos((2 beta / s^2)(q - q0) - 2 beta s^2 (p - p0))
/// ```
pub fn cat_value(q: f64, p: f64, cat: &CatParams) -> f64 {
    let s2 = cat.sigma * cat.sigma;
    let dq = q - cat.q0;
    let dp = p - cat.p0;
    let momentum = -s2 * dp * dp;
    let plus = (-(dq - cat.beta).powi(2) / s2 + momentum).exp();
    let minus = (-(dq + cat.beta).powi(2) / s2 + momentum).exp();
    let envelope = (-dq * dq / s2 + momentum).exp();
    let fringe = (2.0 * cat.beta / s2 * dq - 2.0 * cat.beta * s2 * dp).cos();
    0.5 * (plus + minus + envelope * fringe)
}

/// Cat-state Wigner function normalized to `max |W| = 1` on the grid.
pub fn cat_wigner(cat: &CatParams, spec: &GridSpec) -> Result<WignerGrid> {
    cat.validate()?;
    spec.validate()?;
    Ok(WignerGrid::evaluate(*spec, |q, p| cat_value(q, p, cat)).normalized())
}

/// Anything that stores a `(q, p)` sample per grid index.
pub trait PhaseSpaceSamples {
    fn samples(&self) -> &[Vector2<f64>];
}

impl PhaseSpaceSamples for Trajectory {
    fn samples(&self) -> &[Vector2<f64>] {
        self.states()
    }
}

impl PhaseSpaceSamples for EstimateTrajectory {
    fn samples(&self) -> &[Vector2<f64>] {
        self.estimates()
    }
}

impl PhaseSpaceSamples for [Vector2<f64>] {
    fn samples(&self) -> &[Vector2<f64>] {
        self
    }
}

/// Coherent-state center `(q_k, p_k)` at grid index `k`.
pub fn state_to_wigner_inputs<S: PhaseSpaceSamples + ?Sized>(
    source: &S,
    k: usize,
) -> Result<Vector2<f64>> {
    let samples = source.samples();
    samples.get(k).copied().ok_or(Error::IndexOutOfRange {
        index: k,
        len: samples.len(),
    })
}
