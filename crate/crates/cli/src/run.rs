//! Experiment execution and output files.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{Matrix2, Vector2};
use serde_json::{json, Value};

use giant_cavity_filter::covariance::propagate_on;
use giant_cavity_filter::ensemble::{run_ensemble, EnsembleMember};
use giant_cavity_filter::model::{build_model, coupling_from_gamma};
use giant_cavity_filter::oracle::{augmented_kalman, build_augmented};
use giant_cavity_filter::sim::SimConfig;
use giant_cavity_filter::wigner::{cat_wigner, coherent_wigner};
use giant_cavity_filter::{CovarianceLattice, TimeGrid, WignerGrid};

use crate::config::{ExperimentConfig, WignerMode, WignerSource};
use crate::error::{CliError, Result};
use crate::table::{render_table, render_wigner, write_file};

pub const TRAJECTORY_COLUMNS: [&str; 7] =
    ["t", "q_true", "p_true", "q_hat", "p_hat", "dnu_q", "dnu_p"];

/// One Wigner grid at a requested time.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub requested_time: f64,
    pub index: usize,
    pub time: f64,
    pub center: Vector2<f64>,
    pub grid: WignerGrid,
}

/// Everything a run computed, alongside the files it wrote.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub runs: Vec<EnsembleMember>,
    pub lattice: CovarianceLattice,
    pub snapshots: Vec<Snapshot>,
    pub metadata: Value,
    /// Non-fatal problems, also listed in the metadata.
    pub warnings: Vec<String>,
    /// Paths relative to the output directory, metadata last.
    pub files: Vec<PathBuf>,
}

/// Rows of the per-seed trajectory table. `dnu` on the last row is NaN.
pub fn trajectory_rows(member: &EnsembleMember) -> Vec<Vec<f64>> {
    let grid = member.trajectory.grid();
    let states = member.trajectory.states();
    let estimates = member.estimate.estimates();
    let innovations = member.estimate.innovations();
    (0..states.len())
        .map(|k| {
            let (x, xh) = (states[k], estimates[k]);
            let dnu = innovations
                .get(k)
                .copied()
                .unwrap_or_else(|| Vector2::repeat(f64::NAN));
            vec![grid.time(k), x[0], x[1], xh[0], xh[1], dnu[0], dnu[1]]
        })
        .collect()
}

/// Entrywise mean of the per-seed tables.
pub fn mean_rows(runs: &[EnsembleMember]) -> Vec<Vec<f64>> {
    let tables: Vec<_> = runs.iter().map(trajectory_rows).collect();
    let count = tables.len() as f64;
    let mut mean = tables[0].clone();
    for row in 0..mean.len() {
        for col in 1..TRAJECTORY_COLUMNS.len() {
            mean[row][col] = tables.iter().map(|t| t[row][col]).sum::<f64>() / count;
        }
    }
    mean
}

pub fn covariance_columns(lat: &CovarianceLattice) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    let entries = ["00", "01", "10", "11"];
    for j in 0..=lat.max_order() {
        cols.extend(entries.iter().map(|rc| format!("p{j}_{rc}")));
    }
    cols.extend(entries.iter().map(|rc| format!("k_{rc}")));
    cols
}

/// `t`, then `P_j` for `j = 0..=J` and the gain, each row-major.
pub fn covariance_rows(lat: &CovarianceLattice) -> Vec<Vec<f64>> {
    let row_major = |m: &Matrix2<f64>| [m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]];
    (0..=lat.grid().steps())
        .map(|k| {
            let mut row = vec![lat.grid().time(k)];
            for j in 0..=lat.max_order() {
                row.extend(row_major(&lat.p(j, k)));
            }
            row.extend(row_major(&lat.gains()[k]));
            row
        })
        .collect()
}

fn snapshot_index(grid: &TimeGrid, t: f64) -> usize {
    grid.nearest_index(t).clamp(0, grid.steps() as isize) as usize
}

fn wigner_snapshots(
    cfg: &ExperimentConfig,
    grid: &TimeGrid,
    runs: &[EnsembleMember],
) -> Result<Vec<Snapshot>> {
    let Some(w) = &cfg.wigner else {
        return Ok(Vec::new());
    };
    let count = runs.len() as f64;
    w.snapshot_times
        .iter()
        .map(|&t| {
            let index = snapshot_index(grid, t);
            let center = runs
                .iter()
                .map(|r| match w.source {
                    WignerSource::Estimate => r.estimate.estimates()[index],
                    WignerSource::Truth => r.trajectory.states()[index],
                })
                .sum::<Vector2<f64>>()
                / count;
            let spec = cfg.grid_spec(center).expect("wigner block present");
            let values = match w.mode {
                WignerMode::Coherent => coherent_wigner(center, &spec)?,
                WignerMode::Cat => {
                    let cat = cfg.cat_params(center).expect("validated cat block");
                    cat_wigner(&cat, &spec)?
                }
            };
            Ok(Snapshot {
                requested_time: t,
                index,
                time: grid.time(index),
                center,
                grid: values,
            })
        })
        .collect()
}

/// `|E[e(T) e(0)^T]|` from the stacked oracle on the first run's record.
fn cross_covariance_audit(
    cfg: &ExperimentConfig,
    model: &giant_cavity_filter::StateSpaceModel,
    lat: &CovarianceLattice,
    first: &EnsembleMember,
) -> Result<Value> {
    let n = lat.grid().delay_steps();
    let am = build_augmented(model, lat.grid().step())?;
    let record = &first.trajectory.measurements()[..n.min(lat.grid().steps())];
    let oracle = augmented_kalman(
        &am,
        record,
        cfg.xhat0(),
        &cfg.p0(),
        cfg.sim.prehistory.into(),
    )?;
    let k = record.len();
    let cross = oracle.cross[0][k].norm();
    let p0 = lat.p(0, k).norm();
    Ok(json!({
        "time": lat.grid().time(k),
        "exact_cross_norm": cross,
        "lattice_p0_norm": p0,
        "oracle_p0_norm": oracle.covariance[k].norm(),
        "ratio_to_lattice_p0": cross / p0,
    }))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn vec2(v: Vector2<f64>) -> [f64; 2] {
    [v[0], v[1]]
}

/// Validates `cfg`, runs every seed, and writes all outputs under
/// `cfg.output.dir`.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let started = Instant::now();
    cfg.validate()?;
    let params = cfg.physical_params()?;
    let model = build_model(&params)?;
    if model.delay() == 0.0 {
        return Err(CliError::Config {
            field: "physical.length".into(),
            reason: "the step is T / step_divisor, so the delay must be > 0".into(),
        });
    }
    let step = model.delay() / cfg.sim.step_divisor;
    let grid = TimeGrid::new(model.delay(), step, cfg.sim.horizon)?;
    let lattice = propagate_on(&model, &cfg.p0(), &grid, cfg.filter.integrator.into())?;

    let mut sim = SimConfig::new(cfg.sim.horizon, step, cfg.sim.seed, cfg.x0());
    sim.prehistory = cfg.sim.prehistory.into();
    sim.noise_variance_scale = cfg.sim.noise_variance_scale;
    let seeds: Vec<u64> = (0..cfg.sim.trajectories as u64)
        .map(|i| cfg.sim.seed + i)
        .collect();
    let runs = run_ensemble(&model, &lattice, &sim, &seeds, cfg.xhat0())?;

    let snapshots = wigner_snapshots(cfg, &grid, &runs)?;
    let mut warnings = Vec::new();
    for (i, s) in snapshots.iter().enumerate() {
        if let Some(cat) = cfg.cat_params(s.center) {
            if !s.grid.spec().resolves_cat_fringes(&cat) {
                warnings.push(format!(
                    "wigner snapshot {i}: grid spacing does not resolve the cat fringes; raise wigner.grid.points"
                ));
            }
        }
    }
    let audit = if cfg.filter.audit_cross_covariance {
        Some(cross_covariance_audit(cfg, &model, &lattice, &runs[0])?)
    } else {
        None
    };

    let dir = &cfg.output.dir;
    create_dir(&dir.join("trajectories"))?;
    if !snapshots.is_empty() {
        create_dir(&dir.join("wigner"))?;
    }
    let mut files = Vec::new();
    let mut emit = |rel: PathBuf, contents: String| -> Result<()> {
        write_file(&dir.join(&rel), &contents)?;
        files.push(rel);
        Ok(())
    };
    let traj_cols: Vec<String> = TRAJECTORY_COLUMNS.iter().map(|c| c.to_string()).collect();
    for &format in &cfg.output.formats {
        let ext = format.extension();
        for member in &runs {
            emit(
                PathBuf::from(format!("trajectories/seed_{}.{ext}", member.seed)),
                render_table(&traj_cols, &trajectory_rows(member), format),
            )?;
        }
        emit(
            PathBuf::from(format!("trajectories/mean.{ext}")),
            render_table(&traj_cols, &mean_rows(&runs), format),
        )?;
        emit(
            PathBuf::from(format!("covariance.{ext}")),
            render_table(
                &covariance_columns(&lattice),
                &covariance_rows(&lattice),
                format,
            ),
        )?;
        for (i, s) in snapshots.iter().enumerate() {
            let spec = s.grid.spec();
            let mode = match cfg.wigner.as_ref().map(|w| w.mode) {
                Some(WignerMode::Cat) => "cat",
                _ => "coherent",
            };
            let header = [
                ("mode", mode.to_string()),
                ("t", format!("{:.16e}", s.time)),
                ("q_min", format!("{:.16e}", spec.q_min)),
                ("q_max", format!("{:.16e}", spec.q_max)),
                ("p_min", format!("{:.16e}", spec.p_min)),
                ("p_max", format!("{:.16e}", spec.p_max)),
                ("n_q", spec.n_q.to_string()),
                ("n_p", spec.n_p.to_string()),
                ("center_q", format!("{:.16e}", s.center[0])),
                ("center_p", format!("{:.16e}", s.center[1])),
            ];
            emit(
                PathBuf::from(format!("wigner/snapshot_{i}.{ext}")),
                render_wigner(&header, &s.grid, format),
            )?;
        }
    }

    let gamma = params.gamma()?;
    let convergence: Vec<Value> = runs
        .iter()
        .map(|r| {
            let first = r.trajectory.states()[0] - r.estimate.estimates()[0];
            let last = *r.trajectory.states().last().expect("nonempty")
                - *r.estimate.estimates().last().expect("nonempty");
            json!({
                "seed": r.seed,
                "initial_error": vec2(first),
                "final_error": vec2(last),
                "final_over_initial_norm": last.norm() / first.norm(),
                "final_over_initial_q": last[0].abs() / first[0].abs(),
            })
        })
        .collect();
    let wigner: Vec<Value> = snapshots
        .iter()
        .enumerate()
        .map(|(i, s)| {
            json!({
                "file_index": i,
                "requested_time": s.requested_time,
                "time": s.time,
                "index": s.index,
                "center": vec2(s.center),
                "min": s.grid.min(),
                "max": s.grid.max(),
            })
        })
        .collect();
    files.push(PathBuf::from("metadata.json"));
    let metadata = json!({
        "config": serde_json::to_value(cfg)?,
        "derived": {
            "gamma": gamma,
            "coupling_strength": coupling_from_gamma(gamma, params.group_velocity)?,
            "delay": model.delay(),
            "step": grid.step(),
            "delay_steps": grid.delay_steps(),
            "steps": grid.steps(),
            "grid_horizon": grid.horizon(),
            "max_order": lattice.max_order(),
            "delay_snap_error": grid.snap_error(),
            "lattice_max_relative_asymmetry": lattice.max_relative_asymmetry(),
            "lattice_min_eigenvalue": lattice.min_eigenvalue(),
        },
        "seeds": seeds,
        "convergence": convergence,
        "wigner": wigner,
        "cross_covariance_audit": audit,
        "warnings": warnings,
        "files": files,
        "wall_time_s": started.elapsed().as_secs_f64(),
    });
    write_file(
        &dir.join("metadata.json"),
        &serde_json::to_string_pretty(&metadata)?,
    )?;

    Ok(RunOutput {
        runs,
        lattice,
        snapshots,
        metadata,
        warnings,
        files,
    })
}
