//! Quadrature state-space model of a cavity coupled to a waveguide at two
//! points separated by a propagation delay.
//!
//! The complex mode equation
//!
//! ```text
//! da/dt  = (-i w_c - g/2) a(t) - (g/2) a(t-T) - i sqrt(g/2) [b_in(t) + b_in(t-T)]
//! b_out  = b_in(t-T) - i sqrt(g/2) [a(t-T) + a(t)]
//! ```
//!
//! is mapped to real quadratures `q = (a + a*)/sqrt2`, `p = -i(a - a*)/sqrt2`
//! with `lambda -> [[Re, -Im], [Im, Re]]`, giving
//!
//! ```text
//! dx = A x dt + A_d x(t-T) dt + B dw(t) + B_d dw(t-T)
//! dy = C x dt + C_d x(t-T) dt + D_d dw(t-T)
//! ```
//!
//! All frequencies are angular (rad/s) and quadratures are dimensionless.

use std::f64::consts::PI;

use nalgebra::Matrix2;

use crate::error::{invalid, Error, Result};

/// How the cavity-waveguide coupling is specified.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coupling {
    /// Decay rate gamma (1/s) given directly.
    Rate(f64),
    /// Coupling strength V_q; gamma follows from the group velocity.
    Strength(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams {
    /// Cavity angular frequency (rad/s).
    pub omega_c: f64,
    pub coupling: Coupling,
    /// Separation of the two coupling points (m).
    pub length: f64,
    /// Waveguide group velocity (m/s).
    pub group_velocity: f64,
}

impl PhysicalParams {
    pub fn with_rate(omega_c: f64, gamma: f64, length: f64, group_velocity: f64) -> Self {
        Self {
            omega_c,
            coupling: Coupling::Rate(gamma),
            length,
            group_velocity,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.omega_c.is_finite() || self.omega_c < 0.0 {
            return Err(invalid(
                "omega_c",
                format!("must be finite and >= 0, got {}", self.omega_c),
            ));
        }
        if !self.group_velocity.is_finite() || self.group_velocity <= 0.0 {
            return Err(invalid(
                "group_velocity",
                format!("must be finite and > 0, got {}", self.group_velocity),
            ));
        }
        if !self.length.is_finite() || self.length < 0.0 {
            return Err(invalid(
                "length",
                format!("must be finite and >= 0, got {}", self.length),
            ));
        }
        match self.coupling {
            Coupling::Rate(g) if !g.is_finite() || g < 0.0 => Err(invalid(
                "gamma",
                format!("must be finite and >= 0, got {g}"),
            )),
            Coupling::Strength(v) if !v.is_finite() => Err(invalid(
                "coupling_strength",
                format!("must be finite, got {v}"),
            )),
            _ => Ok(()),
        }
    }

    /// Decay rate gamma (1/s).
    pub fn gamma(&self) -> Result<f64> {
        match self.coupling {
            Coupling::Rate(g) => Ok(g),
            Coupling::Strength(v) => gamma_from_coupling(v, self.group_velocity),
        }
    }

    /// Propagation delay between the coupling points, `L / v_g`.
    pub fn delay(&self) -> f64 {
        self.length / self.group_velocity
    }
}

/// `gamma = 4 pi V_q^2 / v_g`.
pub fn gamma_from_coupling(coupling_strength: f64, group_velocity: f64) -> Result<f64> {
    if !group_velocity.is_finite() || group_velocity <= 0.0 {
        return Err(invalid(
            "group_velocity",
            format!("must be finite and > 0, got {group_velocity}"),
        ));
    }
    if !coupling_strength.is_finite() {
        return Err(invalid(
            "coupling_strength",
            format!("must be finite, got {coupling_strength}"),
        ));
    }
    Ok(4.0 * PI * coupling_strength * coupling_strength / group_velocity)
}

/// Inverse of [`gamma_from_coupling`]: the non-negative `V_q`.
pub fn coupling_from_gamma(gamma: f64, group_velocity: f64) -> Result<f64> {
    if !group_velocity.is_finite() || group_velocity <= 0.0 {
        return Err(invalid(
            "group_velocity",
            format!("must be finite and > 0, got {group_velocity}"),
        ));
    }
    if !gamma.is_finite() || gamma < 0.0 {
        return Err(invalid(
            "gamma",
            format!("must be finite and >= 0, got {gamma}"),
        ));
    }
    Ok((gamma * group_velocity / (4.0 * PI)).sqrt())
}

/// Real representation of multiplication by the complex number `re + i im`.
pub fn complex_to_real(re: f64, im: f64) -> Matrix2<f64> {
    Matrix2::new(re, -im, im, re)
}

/// The seven coefficient matrices of the delay system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub a: Matrix2<f64>,
    pub a_d: Matrix2<f64>,
    pub b: Matrix2<f64>,
    pub b_d: Matrix2<f64>,
    pub c: Matrix2<f64>,
    pub c_d: Matrix2<f64>,
    pub d_d: Matrix2<f64>,
}

/// Linear Gaussian system with state delay, input delay and delayed
/// measurement noise. Immutable once validated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateSpaceModel {
    coeffs: Coefficients,
    delay: f64,
    noise_inverse: Matrix2<f64>,
}

impl StateSpaceModel {
    pub fn new(coeffs: Coefficients, delay: f64) -> Result<Self> {
        if !delay.is_finite() || delay < 0.0 {
            return Err(invalid(
                "delay",
                format!("must be finite and >= 0, got {delay}"),
            ));
        }
        let all = [
            ("A", coeffs.a),
            ("A_d", coeffs.a_d),
            ("B", coeffs.b),
            ("B_d", coeffs.b_d),
            ("C", coeffs.c),
            ("C_d", coeffs.c_d),
            ("D_d", coeffs.d_d),
        ];
        for (name, m) in all {
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter {
                    name: "coefficients",
                    reason: format!("{name} has non-finite entries"),
                });
            }
        }
        let r = coeffs.d_d * coeffs.d_d.transpose();
        let det = r.determinant();
        let scale = r.norm_squared().max(f64::MIN_POSITIVE);
        if det.abs() <= 1e-14 * scale {
            return Err(Error::SingularMeasurementNoise { det });
        }
        let noise_inverse = r
            .try_inverse()
            .ok_or(Error::SingularMeasurementNoise { det })?;
        Ok(Self {
            coeffs,
            delay,
            noise_inverse,
        })
    }

    pub fn coefficients(&self) -> &Coefficients {
        &self.coeffs
    }

    pub fn a(&self) -> &Matrix2<f64> {
        &self.coeffs.a
    }
    pub fn a_d(&self) -> &Matrix2<f64> {
        &self.coeffs.a_d
    }
    pub fn b(&self) -> &Matrix2<f64> {
        &self.coeffs.b
    }
    pub fn b_d(&self) -> &Matrix2<f64> {
        &self.coeffs.b_d
    }
    pub fn c(&self) -> &Matrix2<f64> {
        &self.coeffs.c
    }
    pub fn c_d(&self) -> &Matrix2<f64> {
        &self.coeffs.c_d
    }
    pub fn d_d(&self) -> &Matrix2<f64> {
        &self.coeffs.d_d
    }

    /// Delay T (s).
    pub fn delay(&self) -> f64 {
        self.delay
    }

    /// `D_d D_d^T`.
    pub fn measurement_noise(&self) -> Matrix2<f64> {
        self.coeffs.d_d * self.coeffs.d_d.transpose()
    }

    /// `(D_d D_d^T)^-1`.
    pub fn measurement_noise_inverse(&self) -> &Matrix2<f64> {
        &self.noise_inverse
    }

    pub fn is_zero_delay(&self) -> bool {
        self.delay == 0.0
    }

    /// Same coefficients with a different delay.
    pub fn with_delay(&self, delay: f64) -> Result<Self> {
        Self::new(self.coeffs, delay)
    }
}

/// Builds the quadrature model from physical parameters.
pub fn build_model(p: &PhysicalParams) -> Result<StateSpaceModel> {
    p.validate()?;
    let gamma = p.gamma()?;
    let half = 0.5 * gamma;
    let root = half.sqrt();
    // -i sqrt(g/2) acting on (q, p)
    let coupling = complex_to_real(0.0, -root);
    let coeffs = Coefficients {
        a: complex_to_real(-half, -p.omega_c),
        a_d: Matrix2::identity() * -half,
        b: coupling,
        b_d: coupling,
        c: coupling,
        c_d: coupling,
        d_d: Matrix2::identity(),
    };
    StateSpaceModel::new(coeffs, p.delay())
}

/// Zero-delay collapse: `x(t-T) -> x(t)`, `dw(t-T) -> dw(t)`.
///
/// The merged model keeps every non-delayed quantity in the undelayed slots
/// (`A + A_d`, `B + B_d`, `C + C_d`) and zeroes the delayed slots. With
/// `T = 0` the measurement noise `D_d` then acts on the same increment as
/// the merged process noise.
pub fn markovian_limit(m: &StateSpaceModel) -> StateSpaceModel {
    let c = m.coefficients();
    let zero = Matrix2::zeros();
    let merged = Coefficients {
        a: c.a + c.a_d,
        a_d: zero,
        b: c.b + c.b_d,
        b_d: zero,
        c: c.c + c.c_d,
        c_d: zero,
        d_d: c.d_d,
    };
    StateSpaceModel {
        coeffs: merged,
        delay: 0.0,
        noise_inverse: m.noise_inverse,
    }
}

/// Model coefficients at the parameters used for the coherent-state example:
/// `w_c = 1e9 rad/s`, `gamma = 8e8 1/s`, `v_g = 1e3 m/s`, `L = 1.5e-5 m`.
pub fn reference_params() -> PhysicalParams {
    PhysicalParams::with_rate(1e9, 8e8, 1.5e-5, 1e3)
}
