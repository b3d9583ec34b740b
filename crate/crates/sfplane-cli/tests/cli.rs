//! End-to-end checks of the `sfplane` binary: flag handling, exit codes,
//! file contracts, and the estimate/train cross-checks against the library.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sfplane::datagen::{
    make_simulation_data, sample_isotropic_gaussian, write_samples_csv, RngSeed,
};
use sfplane::harness::{run_seed, run_single, train_sparse_filter, SimulationConfig};
use sfplane::sf::sf_forward;

fn sfplane(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sfplane"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_exit(output: &Output, code: i32) {
    assert_eq!(
        output.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

/// Config that keeps simulate invocations quick.
fn quick_config_json() -> String {
    r#"{"optimizer": {"max_iterations": 6}}"#.to_string()
}

fn write_quick_config(dir: &Path) -> String {
    let path = dir.join("config.json");
    fs::write(&path, quick_config_json()).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn simulate_writes_the_expected_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    let config = write_quick_config(dir.path());
    let output = sfplane(&[
        "simulate",
        "--sim",
        "1",
        "--reps",
        "2",
        "--seed",
        "1",
        "--out",
        out.to_str().unwrap(),
        "--config",
        &config,
    ]);
    assert_exit(&output, 0);

    let names: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names.len(), 5, "{names:?}");
    for expected in [
        "run_1_0.csv",
        "run_1_1.csv",
        "aggregate_1.csv",
        "information_plane_1.svg",
        "dynamics_1.svg",
    ] {
        assert!(names.iter().any(|n| n == expected), "missing {expected}");
    }
}

#[test]
fn simulate_all_writes_one_directory_per_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    let config = write_quick_config(dir.path());
    let output = sfplane(&[
        "simulate",
        "--sim",
        "all",
        "--reps",
        "1",
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
        "--config",
        &config,
    ]);
    assert_exit(&output, 0);
    for sim in 1..=4 {
        let sub = out.join(format!("sim_{sim}"));
        assert!(sub.is_dir(), "missing {sub:?}");
        assert_eq!(fs::read_dir(&sub).unwrap().count(), 4); // 1 run + aggregate + 2 svg
    }
}

#[test]
fn simulate_rejects_invalid_simulation_ids() {
    let output = sfplane(&["simulate", "--sim", "9"]);
    assert_exit(&output, 1);
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("1, 2, 3, 4"), "stderr: {stderr}");
}

#[test]
fn malformed_invocations_exit_with_usage() {
    let output = sfplane(&["simulate", "--bogus"]);
    assert_exit(&output, 1);
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("Usage"), "stderr: {stderr}");

    let output = sfplane(&["simulate", "--sim"]);
    assert_exit(&output, 1);

    let output = sfplane(&["frobnicate"]);
    assert_exit(&output, 1);
}

#[test]
fn simulate_reports_unwritable_output_as_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("blocker");
    fs::write(&blocker, "not a directory").unwrap();
    let config = write_quick_config(dir.path());
    let output = sfplane(&[
        "simulate",
        "--sim",
        "1",
        "--reps",
        "1",
        "--out",
        blocker.join("sub").to_str().unwrap(),
        "--config",
        &config,
    ]);
    assert_exit(&output, 2);
}

#[test]
fn simulate_rejects_unknown_config_keys() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("config.json");
    fs::write(&path, r#"{"sims": 1}"#).unwrap();
    let output = sfplane(&["simulate", "--sim", "1", "--config", path.to_str().unwrap()]);
    assert_exit(&output, 1);
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("unknown field"), "stderr: {stderr}");
}

#[test]
fn config_with_overriding_flags_matches_fully_flagged_run() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("config.json");
    fs::write(
        &path,
        r#"{"sim": 2, "reps": 2, "seed": 5, "bins": 20, "optimizer": {"max_iterations": 6}}"#,
    )
    .unwrap();
    let config = path.to_string_lossy().into_owned();

    // Flags override sim and seed; reps/bins/optimizer come from the file.
    let out_a = dir.path().join("a");
    let output = sfplane(&[
        "simulate",
        "--config",
        &config,
        "--sim",
        "1",
        "--seed",
        "9",
        "--out",
        out_a.to_str().unwrap(),
    ]);
    assert_exit(&output, 0);

    // The same settings spelled out on the command line.
    let out_b = dir.path().join("b");
    let output = sfplane(&[
        "simulate",
        "--config",
        &config,
        "--sim",
        "1",
        "--seed",
        "9",
        "--reps",
        "2",
        "--bins",
        "20",
        "--out",
        out_b.to_str().unwrap(),
    ]);
    assert_exit(&output, 0);

    let mut names: Vec<String> = fs::read_dir(&out_a)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names.len(), 5);
    for name in names {
        let a = fs::read(out_a.join(&name)).unwrap();
        let b = fs::read(out_b.join(&name)).unwrap();
        assert_eq!(a, b, "{name} differs");
    }
}

fn parse_estimate_line(stdout: &str) -> (f64, f64, f64) {
    let line = stdout.trim();
    let mut values = line.split(' ').map(|field| {
        field
            .split('=')
            .nth(1)
            .unwrap_or_else(|| panic!("bad field in {line:?}"))
            .parse::<f64>()
            .unwrap()
    });
    (
        values.next().unwrap(),
        values.next().unwrap(),
        values.next().unwrap(),
    )
}

#[test]
fn estimate_identical_distinct_files_give_mi_equal_entropy() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.csv");
    // Six distinct samples with coordinates inside [0, 1].
    let mut csv = String::from("dim_0,dim_1\n");
    for i in 0..6 {
        csv.push_str(&format!("0.{}1,0.{}7\n", i, 5 - i));
    }
    fs::write(&path, &csv).unwrap();

    let output = sfplane(&[
        "estimate",
        "--x",
        path.to_str().unwrap(),
        "--t",
        path.to_str().unwrap(),
        "--bins",
        "100",
    ]);
    assert_exit(&output, 0);
    let stdout = String::from_utf8_lossy(&output.stdout);
    let (mi, entropy, kl_uniform) = parse_estimate_line(&stdout);
    assert!((mi - entropy).abs() < 1e-12, "{stdout}");
    assert!((entropy - 6.0f64.log2()).abs() < 1e-12);
    assert!((kl_uniform - (2.0 * 100.0f64.log2() - entropy)).abs() < 1e-9);
}

#[test]
fn estimate_constant_t_gives_zero_mutual_information() {
    let dir = tempfile::tempdir().unwrap();
    let x_path = dir.path().join("x.csv");
    fs::write(&x_path, "dim_0\n0.1\n0.4\n0.9\n0.3\n").unwrap();
    let t_path = dir.path().join("t.csv");
    fs::write(&t_path, "dim_0\n0.5\n0.5\n0.5\n0.5\n").unwrap();

    let output = sfplane(&[
        "estimate",
        "--x",
        x_path.to_str().unwrap(),
        "--t",
        t_path.to_str().unwrap(),
        "--bins",
        "30",
    ]);
    assert_exit(&output, 0);
    let stdout = String::from_utf8_lossy(&output.stdout);
    let (mi, entropy, _) = parse_estimate_line(&stdout);
    assert_eq!(mi, 0.0, "{stdout}");
    assert_eq!(entropy, 0.0, "{stdout}");
}

#[test]
fn estimate_rejects_mismatched_sample_counts() {
    let dir = tempfile::tempdir().unwrap();
    let x_path = dir.path().join("x.csv");
    fs::write(&x_path, "dim_0\n0.1\n0.4\n").unwrap();
    let t_path = dir.path().join("t.csv");
    fs::write(&t_path, "dim_0\n0.5\n0.5\n0.5\n").unwrap();
    let output = sfplane(&[
        "estimate",
        "--x",
        x_path.to_str().unwrap(),
        "--t",
        t_path.to_str().unwrap(),
    ]);
    assert_exit(&output, 1);
}

/// Cross-check of the two code paths: the standalone estimator on dumped
/// CSVs must reproduce the harness-recorded final statistics exactly (to the
/// lossless 17-digit CSV precision and the 1e-12 route identity).
#[test]
fn estimate_matches_harness_final_record() {
    let mut config = SimulationConfig::new(1);
    config.optimizer.max_iterations = 10;
    let trajectory = run_single(&config, 0).unwrap();
    let final_record = trajectory.records.last().unwrap();

    // Rebuild the same run: dataset from the run seed, trained weights from
    // the same substreams.
    let seed = run_seed(config.base_seed, config.sim_id, 0);
    let (dataset, _, output_dim) = make_simulation_data(config.sim_id, seed).unwrap();
    let outcome = train_sparse_filter(
        &dataset.train,
        &dataset.test,
        output_dim,
        seed.derive(sfplane::datagen::stream::WEIGHTS),
        config.bin_count,
        config.epsilon,
        &config.optimizer,
    )
    .unwrap();
    let t = sf_forward(&outcome.weights, &dataset.test, config.epsilon).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let x_path = dir.path().join("x.csv");
    write_samples_csv(&dataset.test, &x_path).unwrap();
    let t_path = dir.path().join("t.csv");
    let t_data = sfplane::sf::DataMatrix::new(t.values().clone()).unwrap();
    write_samples_csv(&t_data, &t_path).unwrap();

    let output = sfplane(&[
        "estimate",
        "--x",
        x_path.to_str().unwrap(),
        "--t",
        t_path.to_str().unwrap(),
        "--bins",
        "30",
    ]);
    assert_exit(&output, 0);
    let stdout = String::from_utf8_lossy(&output.stdout);
    let (mi, entropy, _) = parse_estimate_line(&stdout);
    assert!(
        (mi - final_record.mi_xt).abs() < 1e-12,
        "mi {mi} vs harness {}",
        final_record.mi_xt
    );
    assert!(
        (entropy - final_record.entropy_t).abs() < 1e-12,
        "entropy {entropy} vs harness {}",
        final_record.entropy_t
    );
}

#[test]
fn train_writes_weights_and_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let data_path = dir.path().join("data.csv");
    let data = sample_isotropic_gaussian(2, 0.5, 60, RngSeed(11)).unwrap();
    write_samples_csv(&data, &data_path).unwrap();

    let out_a = dir.path().join("a");
    let output = sfplane(&[
        "train",
        "--data",
        data_path.to_str().unwrap(),
        "--features",
        "2",
        "--seed",
        "4",
        "--out",
        out_a.to_str().unwrap(),
    ]);
    assert_exit(&output, 0);

    let weights = fs::read_to_string(out_a.join("weights.csv")).unwrap();
    let rows: Vec<&str> = weights.lines().collect();
    assert_eq!(rows.len(), 2);
    for row in &rows {
        assert_eq!(row.split(',').count(), 2);
    }
    let trajectory = fs::read_to_string(out_a.join("trajectory.csv")).unwrap();
    assert!(trajectory.starts_with("iteration,objective,mi_xt_bits,entropy_t_bits,weight_delta\n"));
    assert!(trajectory.lines().count() >= 2);

    // Same invocation, same seed: identical weights.
    let out_b = dir.path().join("b");
    let output = sfplane(&[
        "train",
        "--data",
        data_path.to_str().unwrap(),
        "--features",
        "2",
        "--seed",
        "4",
        "--out",
        out_b.to_str().unwrap(),
    ]);
    assert_exit(&output, 0);
    assert_eq!(
        fs::read(out_a.join("weights.csv")).unwrap(),
        fs::read(out_b.join("weights.csv")).unwrap()
    );
}

#[test]
fn train_rejects_zero_features() {
    let dir = tempfile::tempdir().unwrap();
    let data_path = dir.path().join("data.csv");
    fs::write(&data_path, "dim_0\n0.5\n0.7\n").unwrap();
    let output = sfplane(&[
        "train",
        "--data",
        data_path.to_str().unwrap(),
        "--features",
        "0",
    ]);
    assert_exit(&output, 1);
}

#[test]
fn train_rejects_unreadable_data() {
    let output = sfplane(&[
        "train",
        "--data",
        "/nonexistent/data.csv",
        "--features",
        "2",
    ]);
    // An unreadable input path the user named is a user error.
    assert_exit(&output, 1);
}
