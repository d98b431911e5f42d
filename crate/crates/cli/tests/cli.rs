use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use loadcast::nn::{forward_elman, forward_feedforward, Family};
use loadcast::{load_csv, LoadSeries, ModelFile};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_loadcast")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr_line(out: &Output) -> String {
    let text = String::from_utf8_lossy(&out.stderr).to_string();
    text.trim_end().to_string()
}

struct Fixture {
    dir: tempfile::TempDir,
    data: PathBuf,
}

impl Fixture {
    fn new(days: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("load.csv");
        ok(&["gen", "--days", days, "--seed", "3", "--out", s(&data)]);
        Fixture { dir, data }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn train(&self, extra: &[&str], model: &Path) {
        let mut args = vec![
            "train", "--data", s(&self.data), "--train-days", "10", "--epochs", "30", "--restarts", "2",
            "--out-model", s(model),
        ];
        args.extend_from_slice(extra);
        ok(&args);
    }
}

#[test]
fn gen_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    ok(&["gen", "--days", "61", "--seed", "7", "--out", s(&a)]);
    ok(&["gen", "--days", "61", "--seed", "7", "--out", s(&b)]);
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    assert_eq!(String::from_utf8(bytes).unwrap().lines().count(), 61 * 24 + 1);
}

#[test]
fn train_defaults_select_the_reference_feedforward_configuration() {
    let fx = Fixture::new("11");
    let model = fx.path("m.json");
    fx.train(&[], &model);
    let m = ModelFile::load(&model).unwrap();
    assert_eq!(m.network.family, Family::Feedforward);
    assert_eq!(m.network.structure.network_number, Some(4));
    assert_eq!((m.network.structure.layer1_neurons, m.network.structure.layer2_neurons), (9, 5));
    assert_eq!((m.window.input_count, m.window.delay), (7, 1));
    assert_eq!(m.provenance.train_samples, 240);
    assert_eq!(m.provenance.epochs_run, 30);
}

#[test]
fn one_hour_forecast_equals_library_prediction() {
    let fx = Fixture::new("11");
    for family in ["feedforward", "elman"] {
        let model = fx.path(&format!("{family}.json"));
        let out = fx.path(&format!("{family}.csv"));
        fx.train(&["--family", family, "--network", "2", "--inputs", "4", "--delay", "2"], &model);
        ok(&["forecast", "--model", s(&model), "--data", s(&fx.data), "--horizon-hours", "1", "--out", s(&out)]);

        let m = ModelFile::load(&model).unwrap();
        let series: LoadSeries = load_csv(&fx.data).unwrap();
        let history = &series.values[..240];
        let window = |k: usize| -> Vec<f64> { m.window.input_indices(k).map(|i| m.norm.normalize(history[i])).collect() };
        // target index 240 with delay 2 reads indices 235..=238
        assert_eq!(m.window.input_indices(240).collect::<Vec<_>>(), vec![235, 236, 237, 238]);
        let y = match m.network.family {
            Family::Feedforward => forward_feedforward(&m.network, &window(240)).unwrap(),
            Family::Elman => {
                // the context is warmed on every true-history window before the first prediction
                let mut net = m.network.clone();
                net.reset_context();
                let mut y = 0.0;
                for k in m.window.span()..=240 {
                    let (yk, ctx) = forward_elman(&net, &window(k)).unwrap();
                    net.context = ctx;
                    y = yk;
                }
                y
            }
        };
        check_row(&out, m.norm.denormalize(y), series.values[240]);
    }
}

fn check_row(path: &Path, predicted: f64, actual: f64) {
    let text = std::fs::read_to_string(path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "timestamp,predicted_kw,actual_kw");
    assert_eq!(lines.len(), 2);
    let cols: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(cols[0], "2024-01-15T00:00:00");
    assert_eq!(cols[1].parse::<f64>().unwrap(), predicted);
    assert_eq!(cols[2].parse::<f64>().unwrap(), actual);
}

#[test]
fn forecast_past_the_data_has_no_actuals() {
    let fx = Fixture::new("10");
    let model = fx.path("m.json");
    let out = fx.path("f.csv");
    fx.train(&[], &model);
    ok(&["forecast", "--model", s(&model), "--data", s(&fx.data), "--horizon-hours", "30", "--out", s(&out)]);
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("timestamp,predicted_kw\n"));
    assert_eq!(text.lines().count(), 31);
}

#[test]
fn continue_extends_training() {
    let fx = Fixture::new("11");
    let model = fx.path("m.json");
    let more = fx.path("more.json");
    let curve = fx.path("curve.csv");
    fx.train(&[], &model);
    ok(&[
        "continue", "--model", s(&model), "--data", s(&fx.data), "--extra-epochs", "25", "--out-model", s(&more),
        "--curve-out", s(&curve),
    ]);
    let before = ModelFile::load(&model).unwrap();
    let after = ModelFile::load(&more).unwrap();
    assert_eq!(after.provenance.epochs_run, 55);
    assert!(after.provenance.final_error <= before.provenance.final_error);
    assert_eq!(after.norm, before.norm);
    let curve = std::fs::read_to_string(&curve).unwrap();
    assert!(curve.starts_with("epoch,mse\n"));
    assert_eq!(curve.lines().count(), 26);
    // first continued epoch evaluates the saved network unchanged
    let first: f64 = curve.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert_eq!(first, before.provenance.final_error);
}

#[test]
fn grid_and_sweep_write_reports() {
    let fx = Fixture::new("16");
    let report = fx.path("grid.json");
    let curves = fx.path("curves");
    ok(&[
        "grid", "--data", s(&fx.data), "--filter", "network=1,delay=1,inputs=2|3", "--epochs", "5", "--restarts", "1",
        "--train-days", "14", "--test-days", "2", "--report-out", s(&report), "--curves-dir", s(&curves),
    ]);
    let text = std::fs::read_to_string(&report).unwrap();
    // four cells plus the two per-family winners
    assert_eq!(text.matches("\"test_mape\"").count(), 6);
    assert!(curves.join("ff_n1_d1_i2.csv").exists());
    assert!(curves.join("elman_n1_d1_i3.csv").exists());

    let sweep = fx.path("sweep.json");
    ok(&[
        "sweep", "--kind", "inputs", "--data", s(&fx.data), "--epochs", "5", "--restarts", "1", "--train-days", "14",
        "--out", s(&sweep),
    ]);
    let text = std::fs::read_to_string(&sweep).unwrap();
    assert!(text.contains("\"kind\": \"inputs\"") || text.contains("\"kind\":\"inputs\""));
}

#[test]
fn error_classes_have_distinct_exit_codes_and_leave_no_output() {
    let fx = Fixture::new("11");
    let model = fx.path("m.json");
    fx.train(&[], &model);
    let bad_csv = fx.path("bad.csv");
    std::fs::write(&bad_csv, "timestamp,load_kw\n2024-01-01T00:00:00,12\n2024-01-01T01:00:00,abc\n").unwrap();
    let bad_model = fx.path("bad.json");
    std::fs::write(&bad_model, "{\"schema_version\": 1}").unwrap();
    let missing = fx.path("missing.csv");
    let target = fx.path("never.json");
    let t = s(&target);

    let cases: Vec<(i32, Vec<&str>)> = vec![
        (2, vec!["train", "--bogus-flag"]),
        (3, vec!["train", "--data", s(&missing), "--out-model", t]),
        (4, vec!["train", "--data", s(&bad_csv), "--out-model", t]),
        (5, vec!["train", "--data", s(&fx.data), "--network", "9", "--out-model", t]),
        (5, vec!["train", "--data", s(&fx.data), "--train-days", "40", "--out-model", t]),
        (
            6,
            vec!["train", "--data", s(&fx.data), "--train-days", "10", "--lr", "1e6", "--restarts", "2", "--out-model", t],
        ),
        (7, vec!["forecast", "--model", s(&bad_model), "--data", s(&fx.data), "--horizon-hours", "2", "--out", t]),
    ];
    for (code, args) in cases {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(code), "{args:?}: {}", stderr_line(&out));
        if code != 2 {
            let line = stderr_line(&out);
            assert!(line.starts_with("error: ") && !line.contains('\n'), "{line}");
        }
        assert!(!target.exists(), "{args:?} left an output file");
    }
    let leftovers: Vec<_> = std::fs::read_dir(fx.dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().to_string())
        .filter(|n| n.starts_with('.') || n.contains("tmp"))
        .collect();
    assert!(leftovers.is_empty(), "{leftovers:?}");
}
