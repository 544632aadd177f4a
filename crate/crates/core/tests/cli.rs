use std::path::Path;
use std::process::{Command, Output};

use ndarray::Array2;
use sparse_krr::matio::{read_matrix, write_matrix};
use sparse_krr::synth::SplitMix64;

/// Runs the binary with a whitespace-separated argument string.
fn run(dir: &Path, args: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sparse-krr"))
        .args(args.split_whitespace())
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &str) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Swiss roll with 200 points, its embedding and a KRR fit.
fn fitted(dir: &Path) {
    ok(dir, "swissroll --n 200 --seed 7 --out-dir .");
    ok(
        dir,
        "embed --points points.csv --temperature 10 --knn 7 --dims 2 --out y.csv",
    );
    ok(
        dir,
        "fit --points points.csv --targets y.csv --sigma 4 --lambda 0.1 --out krr.txt",
    );
}

#[test]
fn swissroll_shapes_and_usage() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), "swissroll --n 1000 --seed 7 --out-dir roll");
    assert_eq!(
        read_matrix(d.path().join("roll/points.csv")).unwrap().dim(),
        (1000, 3)
    );
    assert_eq!(
        read_matrix(d.path().join("roll/intrinsic.csv")).unwrap().dim(),
        (1000, 2)
    );
    let out = run(d.path(), "swissroll --n 0 --out-dir x");
    assert_eq!(code(&out), 2);
    assert_eq!(code(&run(d.path(), "swissroll --out-dir x")), 2);
}

#[test]
fn usage_errors_exit_2() {
    let d = tempfile::tempdir().unwrap();
    fitted(d.path());
    let p = d.path();
    let out = run(
        p,
        "fit --points points.csv --targets y.csv --sigma 4 --lambda -1 --out k.txt",
    );
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    let out = run(p, "sparsify --model krr.txt --epsilon 0 --out s.txt");
    assert_eq!(code(&out), 2);
    let out = run(p, "sparsify --model krr.txt --epsilon -0.1 --out s.txt");
    assert_eq!(code(&out), 2);
    let out = run(
        p,
        "embed --points points.csv --temperature 1 --knn 200 --dims 2 --out e.csv",
    );
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    // both kernel families at once
    let out = run(
        p,
        "fit --points points.csv --targets y.csv --sigma 4 --temperature 1 --knn 3 --lambda 0.1 --out k.txt",
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn fit_row_mismatch_names_both_counts() {
    let d = tempfile::tempdir().unwrap();
    fitted(d.path());
    let y = read_matrix(d.path().join("y.csv")).unwrap();
    write_matrix(
        d.path().join("short.csv"),
        &y.slice(ndarray::s![..150, ..]).to_owned(),
    )
    .unwrap();
    let out = run(
        d.path(),
        "fit --points points.csv --targets short.csv --sigma 4 --lambda 0.1 --out k.txt",
    );
    assert_ne!(code(&out), 0);
    let msg = stderr(&out);
    assert!(msg.contains("150") && msg.contains("200"), "{msg}");
}

#[test]
fn runtime_failures_exit_1() {
    let d = tempfile::tempdir().unwrap();
    let out = run(d.path(), "project --model missing.txt --points p.csv --out o.csv");
    assert_eq!(code(&out), 1);
    std::fs::write(d.path().join("bad.csv"), "1,2\n3\n").unwrap();
    let out = run(d.path(), "swissroll --n 10 --out-dir .");
    assert_eq!(code(&out), 0);
    let out = run(
        d.path(),
        "fit --points bad.csv --targets points.csv --sigma 1 --lambda 0.1 --out k.txt",
    );
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));
}

#[test]
fn sparsify_report_and_projection() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    fitted(p);
    let report = ok(p, "sparsify --model krr.txt --epsilon 0.003 --out sparse.txt");
    assert!(report.starts_with("support_vectors="), "{report}");
    assert!(report.contains("of 200"));

    // a tiny epsilon keeps every row, so projections agree with the dense model
    ok(p, "sparsify --model krr.txt --epsilon 1e-9 --out dense.txt");
    ok(p, "project --model dense.txt --points points.csv --out a.csv");
    ok(p, "project --model krr.txt --points points.csv --out b.csv");
    let a = read_matrix(p.join("a.csv")).unwrap();
    let b = read_matrix(p.join("b.csv")).unwrap();
    let gap = (&a - &b).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(gap <= 1e-6, "gap {gap}");

    let report = ok(p, "sparsify --model krr.txt --epsilon 100 --out empty.txt");
    assert!(
        report.contains("support_vectors=0") && report.contains("no support vectors"),
        "{report}"
    );
    let out = run(p, "project --model empty.txt --points points.csv --out z.csv");
    assert_eq!(code(&out), 0);
    assert!(stderr(&out).contains("no support vectors"));
    assert!(read_matrix(p.join("z.csv")).unwrap().iter().all(|&v| v == 0.0));

    // sparsify wants a krr model
    let out = run(p, "sparsify --model sparse.txt --epsilon 0.1 --out x.txt");
    assert_eq!(code(&out), 2);
}

#[test]
fn isolated_query_reports_the_row() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    let mut rng = SplitMix64::new(4);
    let pts = Array2::from_shape_fn((30, 2), |_| rng.next_f64());
    write_matrix(p.join("pts.csv"), &pts).unwrap();
    ok(
        p,
        "embed --points pts.csv --temperature 0.5 --tau 0.5 --dims 1 --out y.csv --model nys.txt",
    );
    ok(
        p,
        "fit --points pts.csv --targets y.csv --temperature 0.5 --tau 0.5 --lambda 0.1 --out krr.txt",
    );
    std::fs::write(p.join("q.csv"), "0.5,0.5\n50,50\n").unwrap();
    for model in ["krr.txt", "nys.txt"] {
        let out = run(p, &format!("project --model {model} --points q.csv --out o.csv"));
        assert_eq!(code(&out), 1);
        let msg = stderr(&out);
        assert!(
            msg.contains("row 1") && msg.contains("no training neighbor"),
            "{msg}"
        );
        assert!(!p.join("o.csv").exists());
    }
}

#[test]
fn sweep_grid_and_config_errors() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    let cfg = "swissroll_n = 150\nembed_dims = 2\nembed_temperature = 10\nembed_knn = 7\nsigma = 4\nepsilon = 0.003, 0.005, 0.01\nlambda = 0.1, 1\n";
    std::fs::write(p.join("s.cfg"), cfg).unwrap();
    let csv = ok(p, "sweep --config s.cfg");
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 7);
    assert_eq!(lines[0], "epsilon,lambda,sv_count,msd,correlation,class_rate");
    assert!(lines[1].starts_with("0.003,0.1,"));
    assert!(lines[6].starts_with("0.01,1,"));
    assert_eq!(ok(p, "sweep --config s.cfg"), csv);

    std::fs::write(p.join("bad.cfg"), "swissroll_n = 150\nsigma 4\n").unwrap();
    let out = run(p, "sweep --config bad.cfg");
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));
}
