use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_lcsvr");

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env_remove("LCSVR_SEED")
        .output()
        .expect("spawn lcsvr")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn value(out: &str, key: &str) -> String {
    out.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in:\n{out}"))
        .to_string()
}

/// Noiseless data from a simplex β and deterministic pseudo-random rows.
fn write_simplex_data(path: &Path, n: usize) -> Vec<Vec<f64>> {
    let beta = [0.5, 0.3, 0.2];
    let mut rows = Vec::new();
    let mut s = String::from("y,x1,x2,x3\n");
    for i in 0..n {
        let x: Vec<f64> = (0..3)
            .map(|j| ((i * 7 + j * 13) as f64 * 0.618_033_988_7).fract() * 2.0 - 1.0)
            .collect();
        let y: f64 = x.iter().zip(&beta).map(|(a, b)| a * b).sum();
        s.push_str(&format!("{y},{},{},{}\n", x[0], x[1], x[2]));
        rows.push(std::iter::once(y).chain(x).collect());
    }
    fs::write(path, s).unwrap();
    rows
}

fn read_column(path: &Path) -> Vec<f64> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.parse().unwrap())
        .collect()
}

#[test]
fn fit_writes_model_and_reports() {
    let dir = TempDir::new().unwrap();
    write_simplex_data(&dir.path().join("data.csv"), 30);
    let o = run(
        dir.path(),
        &[
            "fit",
            "--preset",
            "ssvr",
            "--train",
            "data.csv",
            "--C",
            "1",
            "--nu",
            "0.5",
            "--tau",
            "1e-3",
            "--out",
            "model.txt",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(value(&out, "termination"), "converged");
    for key in ["iterations", "final_delta", "epsilon", "objective"] {
        value(&out, key).parse::<f64>().unwrap();
    }
    let model = fs::read_to_string(dir.path().join("model.txt")).unwrap();
    assert!(model.contains("kind=ssvr"));
}

#[test]
fn fit_then_predict_reproduces_training_response() {
    let dir = TempDir::new().unwrap();
    let rows = write_simplex_data(&dir.path().join("data.csv"), 40);
    let o = run(
        dir.path(),
        &[
            "fit", "--preset", "ssvr", "--train", "data.csv", "--C", "10", "--nu", "0.5", "--tau",
            "1e-6", "--out", "m.txt",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let eps: f64 = value(&stdout(&o), "epsilon").parse().unwrap();
    let o = run(
        dir.path(),
        &[
            "predict", "--model", "m.txt", "--input", "data.csv", "--out", "yhat.csv",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let yhat = read_column(&dir.path().join("yhat.csv"));
    assert_eq!(yhat.len(), rows.len());
    for (r, p) in rows.iter().zip(&yhat) {
        assert!(
            (r[0] - p).abs() <= eps + 1e-2,
            "y={} yhat={p} eps={eps}",
            r[0]
        );
    }
}

#[test]
fn missing_column_exits_1_and_names_it() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("d.csv"), "y,x1,x3\n1,2,3\n2,3,4\n").unwrap();
    let o = run(dir.path(), &["fit", "--train", "d.csv", "--out", "m.txt"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("'x2'"), "{}", stderr(&o));

    fs::write(dir.path().join("e.csv"), "x1,x2\n1,2\n2,3\n").unwrap();
    let o = run(dir.path(), &["fit", "--train", "e.csv", "--out", "m.txt"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("'y'"));
    assert!(!dir.path().join("m.txt").exists());
}

#[test]
fn unparseable_number_exits_1() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("d.csv"), "y,x1\n1,abc\n2,3\n").unwrap();
    let o = run(dir.path(), &["fit", "--train", "d.csv", "--out", "m.txt"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 2"));
}

#[test]
fn duplicate_rows_exit_2_citing_rows() {
    let dir = TempDir::new().unwrap();
    fs::write(
        dir.path().join("d.csv"),
        "y,x1,x2\n1,0.5,1\n2,1,2\n3,0.5,1\n",
    )
    .unwrap();
    let o = run(dir.path(), &["fit", "--train", "d.csv", "--out", "m.txt"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stderr(&o).contains("duplicate rows (0,2)"),
        "{}",
        stderr(&o)
    );
    assert!(!dir.path().join("m.txt").exists());

    let o = run(dir.path(), &["validate", "--train", "d.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("valid=false"));
}

#[test]
fn bad_hyperparameters_exit_2_before_solving() {
    let dir = TempDir::new().unwrap();
    write_simplex_data(&dir.path().join("d.csv"), 10);
    let o = run(
        dir.path(),
        &["fit", "--train", "d.csv", "--nu", "1.5", "--out", "m.txt"],
    );
    assert_eq!(o.status.code(), Some(2));
    let o = run(
        dir.path(),
        &["validate", "--train", "d.csv", "--preset", "isvr"],
    );
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "valid=true\n");
}

#[test]
fn iteration_cap_exits_3() {
    let dir = TempDir::new().unwrap();
    write_simplex_data(&dir.path().join("d.csv"), 20);
    let o = run(
        dir.path(),
        &[
            "fit",
            "--train",
            "d.csv",
            "--max-iter",
            "2",
            "--out",
            "m.txt",
        ],
    );
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(value(&stdout(&o), "termination"), "iteration_cap");
    assert!(dir.path().join("m.txt").exists());
}

#[test]
fn predict_empty_input_gives_header_only() {
    let dir = TempDir::new().unwrap();
    write_simplex_data(&dir.path().join("d.csv"), 10);
    assert_eq!(
        run(dir.path(), &["fit", "--train", "d.csv", "--out", "m.txt"])
            .status
            .code(),
        Some(0)
    );
    fs::write(dir.path().join("empty.csv"), "x1,x2,x3\n").unwrap();
    let o = run(
        dir.path(),
        &[
            "predict",
            "--model",
            "m.txt",
            "--input",
            "empty.csv",
            "--out",
            "y.csv",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(
        fs::read_to_string(dir.path().join("y.csv")).unwrap(),
        "yhat\n"
    );
}

#[test]
fn predict_feature_mismatch_exits_2() {
    let dir = TempDir::new().unwrap();
    write_simplex_data(&dir.path().join("d.csv"), 10);
    run(dir.path(), &["fit", "--train", "d.csv", "--out", "m.txt"]);
    fs::write(dir.path().join("x.csv"), "x1,x2\n1,2\n").unwrap();
    let o = run(
        dir.path(),
        &[
            "predict", "--model", "m.txt", "--input", "x.csv", "--out", "y.csv",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("y.csv").exists());
}

#[test]
fn custom_constraints_are_respected() {
    let dir = TempDir::new().unwrap();
    write_simplex_data(&dir.path().join("d.csv"), 30);
    // β1 ≤ 0.1 and β2 + β3 = 0.9
    fs::write(dir.path().join("a.csv"), "1,0,0\n").unwrap();
    fs::write(dir.path().join("b.csv"), "0.1\n").unwrap();
    fs::write(dir.path().join("g.csv"), "0,1,1\n").unwrap();
    fs::write(dir.path().join("dd.csv"), "0.9\n").unwrap();
    let o = run(
        dir.path(),
        &[
            "fit", "--train", "d.csv", "--C", "10", "--tau", "1e-6", "--A", "a.csv", "--b",
            "b.csv", "--Gamma", "g.csv", "--d", "dd.csv", "--out", "m.txt",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(value(&stdout(&o), "kind"), "custom");
    let text = fs::read_to_string(dir.path().join("m.txt")).unwrap();
    let beta: Vec<f64> = text
        .split("[beta]\n")
        .nth(1)
        .unwrap()
        .lines()
        .take(3)
        .map(|l| l.parse().unwrap())
        .collect();
    assert!(beta[0] <= 0.1 + 1e-6, "{beta:?}");
    assert!((beta[1] + beta[2] - 0.9).abs() < 1e-6, "{beta:?}");
}

#[test]
fn experiment_shape_is_estimators_times_reps() {
    let dir = TempDir::new().unwrap();
    let o = run(
        dir.path(),
        &[
            "experiment",
            "--scenario",
            "nonneg",
            "--n",
            "200",
            "--p",
            "20",
            "--snr",
            "10",
            "--reps",
            "20",
            "--seed",
            "7",
            "--C",
            "1",
            "--nu",
            "0.5",
            "--out-dir",
            "out",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("out/results.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 1 + 4 * 20);
    for est in ["SVR", "P-SVR", "NNSVR", "NNLS"] {
        let count = lines
            .iter()
            .filter(|l| l.split(',').nth(7) == Some(est))
            .count();
        assert_eq!(count, 20, "{est}");
    }
    assert!(dir.path().join("out/summary.csv").exists());
}

#[test]
fn trajectory_writes_two_ordered_curves() {
    let dir = TempDir::new().unwrap();
    let o = run(
        dir.path(),
        &[
            "trajectory",
            "--seed",
            "1",
            "--noise",
            "none",
            "--n",
            "60",
            "--p",
            "8",
            "--out-dir",
            "t",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for name in ["trajectory_SVR.csv", "trajectory_SSVR.csv"] {
        let text = fs::read_to_string(dir.path().join("t").join(name)).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("iteration,objective,delta"));
        let its: Vec<usize> = lines
            .map(|l| l.split(',').next().unwrap().parse().unwrap())
            .collect();
        assert!(its.len() > 1);
        assert!(its.windows(2).all(|w| w[0] < w[1]), "{name}");
    }
}

#[test]
fn rerun_is_byte_identical_and_env_seed_overrides() {
    let dir = TempDir::new().unwrap();
    let args = [
        "experiment",
        "--scenario",
        "isotonic",
        "--p",
        "12",
        "--reps",
        "2",
        "--grid",
        "2",
        "--folds",
        "2",
        "--seed",
        "3",
    ];
    let go = |out: &str, env_seed: Option<&str>| {
        let mut cmd = Command::new(BIN);
        cmd.args(args)
            .args(["--out-dir", out])
            .current_dir(dir.path());
        match env_seed {
            Some(s) => cmd.env("LCSVR_SEED", s),
            None => cmd.env_remove("LCSVR_SEED"),
        };
        let o = cmd.output().unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        (
            stdout(&o),
            fs::read(dir.path().join(out).join("results.csv")).unwrap(),
        )
    };
    let a = go("a", None);
    let b = go("b", None);
    assert_eq!(a, b);
    let c = go("c", Some("9"));
    assert_eq!(value(&c.0, "seed"), "9");
    assert_ne!(a.1, c.1);
}
