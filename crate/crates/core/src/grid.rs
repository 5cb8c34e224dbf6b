use crate::error::{invalid, Error, Result};

/// Relative tolerance for snapping the delay onto the step grid.
pub const DELAY_SNAP_TOLERANCE: f64 = 1e-6;

/// Uniform time grid `t_k = k h`, `k = 0..=steps`, with the delay expressed
/// as an integer number of steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    step: f64,
    delay_steps: usize,
    steps: usize,
    snap_error: f64,
}

impl TimeGrid {
    /// Builds the grid covering `[0, horizon]` and snaps `delay` to the
    /// nearest multiple of `step`.
    pub fn new(delay: f64, step: f64, horizon: f64) -> Result<Self> {
        if !step.is_finite() || step <= 0.0 {
            return Err(invalid(
                "step",
                format!("must be finite and > 0, got {step}"),
            ));
        }
        if !horizon.is_finite() || horizon <= 0.0 {
            return Err(invalid(
                "horizon",
                format!("must be finite and > 0, got {horizon}"),
            ));
        }
        if !delay.is_finite() || delay < 0.0 {
            return Err(invalid(
                "delay",
                format!("must be finite and >= 0, got {delay}"),
            ));
        }
        let ratio = delay / step;
        let delay_steps = ratio.round();
        let snap_error = (delay_steps * step - delay).abs();
        let tolerance = DELAY_SNAP_TOLERANCE * delay;
        if snap_error > tolerance || (delay > 0.0 && delay_steps < 1.0) {
            return Err(Error::DelayGrid {
                delay,
                step,
                snap_error,
                tolerance,
            });
        }
        let steps = (horizon / step - 1e-9).ceil().max(1.0) as usize;
        Ok(Self {
            step,
            delay_steps: delay_steps as usize,
            steps,
            snap_error,
        })
    }

    /// Grid with an exact integer delay and step count.
    pub fn from_counts(step: f64, delay_steps: usize, steps: usize) -> Result<Self> {
        if !step.is_finite() || step <= 0.0 {
            return Err(invalid(
                "step",
                format!("must be finite and > 0, got {step}"),
            ));
        }
        if steps == 0 {
            return Err(invalid("steps", "must be at least 1"));
        }
        Ok(Self {
            step,
            delay_steps,
            steps,
            snap_error: 0.0,
        })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Delay in steps, N.
    pub fn delay_steps(&self) -> usize {
        self.delay_steps
    }

    /// Number of steps K; the grid has K + 1 points.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// `|N h - T|` from snapping.
    pub fn snap_error(&self) -> f64 {
        self.snap_error
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.step
    }

    pub fn horizon(&self) -> f64 {
        self.time(self.steps)
    }

    /// Snapped delay `N h`.
    pub fn delay(&self) -> f64 {
        self.delay_steps as f64 * self.step
    }

    /// Largest delay multiple inside the horizon, `floor(K / N)`; zero
    /// without delay.
    pub fn max_order(&self) -> usize {
        self.steps.checked_div(self.delay_steps).unwrap_or(0)
    }

    /// Nearest grid index to time `t` (may be negative).
    pub fn nearest_index(&self, t: f64) -> isize {
        (t / self.step).round() as isize
    }

    /// True when `other` is the same grid up to the recorded snap error.
    pub fn matches(&self, other: &TimeGrid) -> bool {
        self.delay_steps == other.delay_steps
            && self.steps == other.steps
            && (self.step - other.step).abs() <= 1e-12 * self.step
    }

    /// Checks that a model delay is represented by this grid.
    pub fn check_delay(&self, delay: f64) -> Result<()> {
        let err = (self.delay() - delay).abs();
        if err > DELAY_SNAP_TOLERANCE * delay.max(0.0) || (delay == 0.0) != (self.delay_steps == 0)
        {
            return Err(Error::GridMismatch(format!(
                "grid delay {:e} s ({} steps) does not represent model delay {delay:e} s",
                self.delay(),
                self.delay_steps
            )));
        }
        Ok(())
    }
}
