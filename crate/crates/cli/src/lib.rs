//! Configuration-driven runner for the giant-cavity delay filter.
//!
//! A TOML file describes the physical parameters, the simulation grid, the
//! filter's initial conditions, optional Wigner snapshots and the output
//! location. [`run`] writes:
//!
//! * `trajectories/seed_<s>.csv` and `trajectories/mean.csv` with columns
//!   `t, q_true, p_true, q_hat, p_hat, dnu_q, dnu_p`;
//! * `covariance.csv` with `t`, the row-major entries of every `P_j`, then
//!   the gain `K`;
//! * `wigner/snapshot_<i>.csv`, a `# key=value` header and one grid row per
//!   `q` value;
//! * `metadata.json` with the resolved configuration and derived values.

pub mod config;
pub mod error;
pub mod run;
pub mod table;

pub use config::{ExperimentConfig, Overrides};
pub use error::{CliError, Result};
pub use run::{run, RunOutput};
