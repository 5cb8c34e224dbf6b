//! Optimal filtering for a cavity coupled to a waveguide at two points.
//!
//! The cavity's emitted field returns after the propagation delay `T`, which
//! turns the usual Kalman–Bucy setting into a linear system with a delayed
//! state, a delayed input and delayed measurement noise:
//!
//! ```text
//! dx = A x dt + A_d x(t-T) dt + B dw(t) + B_d dw(t-T)
//! dy = C x dt + C_d x(t-T) dt + D_d dw(t-T)
//! ```
//!
//! Modules:
//!
//! * [`model`]: physical parameters to quadrature coefficients.
//! * [`sim`]: Euler–Maruyama simulation and the position-resolved field.
//! * [`covariance`]: interval-wise propagation of `P(t)` and the delayed
//!   cross-covariances `P_j(t)`, and the gain.
//! * [`filter`]: the delay filter and innovation diagnostics.
//! * [`oracle`]: augmented-state and zero-delay reference filters.
//! * [`wigner`]: coherent and cat-state Wigner functions.
//! * [`ensemble`]: Monte-Carlo runs over seeds.

pub mod covariance;
pub mod ensemble;
pub mod error;
pub mod filter;
pub mod grid;
pub mod model;
pub mod oracle;
pub mod sim;
pub mod wigner;

pub use covariance::{gain, propagate, propagate_on, CovarianceLattice, GainTerms, Integrator};
pub use error::{Error, Result};
pub use filter::{innovation_whiteness, run_filter, EstimateTrajectory, WhitenessReport};
pub use grid::TimeGrid;
pub use model::{
    build_model, gamma_from_coupling, markovian_limit, Coupling, PhysicalParams, StateSpaceModel,
};
pub use sim::{simulate, waveguide_field, Prehistory, SimConfig, Trajectory};
pub use wigner::{
    cat_wigner, coherent_wigner, state_to_wigner_inputs, CatParams, GridSpec, WignerGrid,
};
