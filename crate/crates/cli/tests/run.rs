use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

use giant_cavity_cli::config::{TableFormat, WignerMode};
use giant_cavity_cli::run::{
    covariance_columns, covariance_rows, mean_rows, trajectory_rows, TRAJECTORY_COLUMNS,
};
use giant_cavity_cli::table::{parse_table, parse_wigner};
use giant_cavity_cli::{run, CliError, ExperimentConfig};

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn reference_config(out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::load(&shipped("paper_4_1.toml")).unwrap();
    cfg.output.dir = out.to_path_buf();
    cfg
}

fn read(path: PathBuf) -> String {
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn same_bits(a: &[Vec<f64>], b: &[Vec<f64>]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x.len() == y.len() && x.iter().zip(y).all(|(u, v)| u.to_bits() == v.to_bits())
        })
}

/// Every leaf path of a JSON object, as `a.b.c`.
fn leaf_paths(v: &Value, prefix: &str, out: &mut Vec<String>) {
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                let path = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                leaf_paths(child, &path, out);
            }
        }
        _ => out.push(prefix.to_string()),
    }
}

#[test]
fn shipped_config_holds_the_reference_scenario() {
    let cfg = ExperimentConfig::load(&shipped("paper_4_1.toml")).unwrap();
    cfg.validate().unwrap();
    let p = &cfg.physical;
    assert_eq!(
        (p.omega_c, p.gamma, p.group_velocity),
        (1e9, Some(8e8), 1e3)
    );
    assert!((cfg.physical_params().unwrap().delay() - 1.5e-8).abs() < 1e-20);
    assert_eq!(cfg.sim.horizon, 1e-7);
    assert_eq!(cfg.sim.x0, [-4.0, 4.0]);
    assert_eq!(cfg.filter.xhat0, [4.0, -4.0]);
    ExperimentConfig::load(&shipped("cat_snapshots.toml"))
        .unwrap()
        .validate()
        .unwrap();
}

#[test]
fn outputs_reparse_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = reference_config(dir.path());
    cfg.sim.trajectories = 3;
    cfg.output.formats = vec![TableFormat::Csv, TableFormat::Tsv];
    let out = run(&cfg).unwrap();
    assert_eq!(out.runs.len(), 3);

    for format in [TableFormat::Csv, TableFormat::Tsv] {
        let ext = format.extension();
        for member in &out.runs {
            let text = read(
                dir.path()
                    .join(format!("trajectories/seed_{}.{ext}", member.seed)),
            );
            let (cols, rows) = parse_table(&text, format).unwrap();
            assert_eq!(cols, TRAJECTORY_COLUMNS);
            let last = rows.len() - 1;
            assert!(rows[last][5].is_nan() && rows[last][6].is_nan());
            let expected = trajectory_rows(member);
            assert!(same_bits(&rows, &expected));
            for (k, row) in rows.iter().enumerate() {
                assert_eq!(row[1], member.trajectory.states()[k][0]);
                assert_eq!(row[4], member.estimate.estimates()[k][1]);
            }
        }
        let (_, mean) = parse_table(
            &read(dir.path().join(format!("trajectories/mean.{ext}"))),
            format,
        )
        .unwrap();
        assert!(same_bits(&mean, &mean_rows(&out.runs)));

        let (cols, rows) =
            parse_table(&read(dir.path().join(format!("covariance.{ext}"))), format).unwrap();
        assert_eq!(cols, covariance_columns(&out.lattice));
        assert_eq!(cols.len(), 1 + 4 * (out.lattice.max_order() + 1) + 4);
        assert!(same_bits(&rows, &covariance_rows(&out.lattice)));

        for (i, snap) in out.snapshots.iter().enumerate() {
            let (header, rows) = parse_wigner(
                &read(dir.path().join(format!("wigner/snapshot_{i}.{ext}"))),
                format,
            )
            .unwrap();
            let get = |key: &str| {
                header
                    .iter()
                    .find(|(k, _)| k == key)
                    .map(|(_, v)| v.clone())
                    .unwrap()
            };
            let spec = snap.grid.spec();
            assert_eq!(get("mode"), "coherent");
            assert_eq!(get("n_q").parse::<usize>().unwrap(), spec.n_q);
            assert_eq!(get("q_min").parse::<f64>().unwrap(), spec.q_min);
            assert_eq!(get("p_max").parse::<f64>().unwrap(), spec.p_max);
            assert_eq!(get("t").parse::<f64>().unwrap(), snap.time);
            let flat: Vec<f64> = rows.into_iter().flatten().collect();
            assert_eq!(flat, snap.grid.values());
        }
    }
}

#[test]
fn noise_free_single_trajectory_converges() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = reference_config(dir.path());
    cfg.sim.trajectories = 1;
    cfg.sim.noise_variance_scale = 0.0;
    cfg.wigner = None;
    run(&cfg).unwrap();
    let (_, rows) = parse_table(
        &read(dir.path().join("trajectories/seed_0.csv")),
        TableFormat::Csv,
    )
    .unwrap();
    let gap = |r: &Vec<f64>| (r[3] - r[1]).abs();
    let (first, last) = (gap(&rows[0]), gap(rows.last().unwrap()));
    let ratio = last / first;
    println!("q gap {first} -> {last}, ratio {ratio:.4}");
    assert!(
        ratio < 0.05,
        "final q gap is {:.1}% of the initial gap",
        100.0 * ratio
    );
}

#[test]
fn metadata_resolves_every_config_field() {
    let dir = tempfile::tempdir().unwrap();
    // minimal file: every optional key left to its default
    let text = format!(
        r#"
        [physical]
        omega_c = 1e9
        gamma = 8e8
        length = 1.5e-5
        group_velocity = 1e3

        [sim]
        horizon = 5e-8
        step_divisor = 50
        x0 = [-4.0, 4.0]

        [filter]
        xhat0 = [4.0, -4.0]

        [wigner]
        mode = "cat"
        snapshot_times = [0.0, 5e-8]
        cat = {{ beta = 0.8, sigma = 0.2 }}

        [output]
        dir = "{}"
        formats = ["csv"]
        "#,
        dir.path().display()
    );
    let cfg = ExperimentConfig::from_toml(&text).unwrap();
    let out = run(&cfg).unwrap();
    let meta: Value = serde_json::from_str(&read(dir.path().join("metadata.json"))).unwrap();
    assert_eq!(meta, out.metadata);

    let mut expected = Vec::new();
    leaf_paths(&serde_json::to_value(&cfg).unwrap(), "", &mut expected);
    let mut found = Vec::new();
    leaf_paths(&meta["config"], "", &mut found);
    for key in [
        "sim.seed",
        "sim.trajectories",
        "sim.prehistory",
        "sim.noise_variance_scale",
        "filter.p0",
        "filter.integrator",
        "filter.audit_cross_covariance",
        "wigner.source",
        "wigner.grid.half_width",
        "wigner.grid.points",
    ] {
        assert!(
            found.iter().any(|f| f == key),
            "{key} missing from metadata"
        );
    }
    assert_eq!(found, expected);
    assert_eq!(meta["config"]["sim"]["seed"], 0);
    assert_eq!(meta["config"]["filter"]["integrator"], "euler");

    for key in [
        "gamma",
        "coupling_strength",
        "delay",
        "step",
        "delay_steps",
        "steps",
        "max_order",
        "delay_snap_error",
    ] {
        assert!(meta["derived"][key].is_number(), "derived.{key}");
    }
    assert!(meta["derived"]["delay_snap_error"].as_f64().unwrap() < 1e-6 * 1.5e-8);
    assert_eq!(meta["seeds"], serde_json::json!([0]));
    assert!(meta["wall_time_s"].as_f64().unwrap() >= 0.0);
    for f in meta["files"].as_array().unwrap() {
        assert!(dir.path().join(f.as_str().unwrap()).is_file(), "{f}");
    }

    assert_eq!(cfg.wigner.as_ref().unwrap().mode, WignerMode::Cat);
    // 201 points over ±4 is just too coarse for sigma = 0.2, beta = 0.8
    assert_eq!(out.warnings.len(), 2);
    assert_eq!(meta["warnings"].as_array().unwrap().len(), 2);
    let snap = &out.snapshots[0];
    assert!(snap.grid.min() < 0.0);
    assert_eq!(snap.grid.max_abs(), 1.0);
}

#[test]
fn cross_covariance_audit_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = reference_config(dir.path());
    cfg.sim.step_divisor = 20.0;
    cfg.filter.audit_cross_covariance = true;
    let out = run(&cfg).unwrap();
    let audit = &out.metadata["cross_covariance_audit"];
    let ratio = audit["ratio_to_lattice_p0"].as_f64().unwrap();
    assert!(ratio.is_finite() && ratio >= 0.0);
    assert_eq!(audit["time"].as_f64().unwrap(), out.lattice.grid().time(20));
}

#[test]
fn unwritable_output_directory_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let cfg = reference_config(&blocker.join("out"));
    assert!(matches!(run(&cfg), Err(CliError::Io { .. })));
}

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cavity-filter"))
}

#[test]
fn invalid_step_divisor_exits_nonzero_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let text = read(shipped("paper_4_1.toml")).replace("step_divisor = 100", "step_divisor = 20.5");
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, text).unwrap();
    let out = binary()
        .args(["--config", path.to_str().unwrap(), "--output-dir"])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1, "{stderr}");
    assert!(stderr.contains("sim.step_divisor"), "{stderr}");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = binary()
        .args([
            "--config",
            shipped("paper_4_1.toml").to_str().unwrap(),
            "--seed",
            "5",
            "--trajectories",
            "2",
            "--quiet",
            "--output-dir",
        ])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(out.stdout.is_empty());
    for seed in [5, 6] {
        assert!(dir
            .path()
            .join(format!("trajectories/seed_{seed}.csv"))
            .is_file());
    }
    let meta: Value = serde_json::from_str(&read(dir.path().join("metadata.json"))).unwrap();
    assert_eq!(meta["seeds"], serde_json::json!([5, 6]));
    assert_eq!(
        meta["config"]["output"]["dir"],
        dir.path().to_str().unwrap()
    );
}

#[test]
fn missing_config_exits_nonzero() {
    let out = binary()
        .args(["--config", "/nonexistent/cfg.toml"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr)
        .unwrap()
        .contains("/nonexistent/cfg.toml"));
}
