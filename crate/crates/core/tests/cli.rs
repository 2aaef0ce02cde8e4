use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use deepcwc::io;
use deepcwc::Error;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deepcwc")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn value<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(": ")))
        .unwrap_or_else(|| panic!("no {key} in\n{text}"))
}

fn views() -> Vec<String> {
    [
        ("--features", "image.cwcf"),
        ("--labels", "labels.txt"),
        ("--deep-features", "deep.cwcf"),
    ]
    .iter()
    .flat_map(|(flag, f)| [flag.to_string(), fixture(f).display().to_string()])
    .collect()
}

fn with_views(head: &[&str], tail: &[&str]) -> Output {
    let v = views();
    let mut args: Vec<&str> = head.to_vec();
    args.extend(v.iter().map(String::as_str));
    args.extend(tail);
    run(&args)
}

#[test]
fn eval_fused_on_fixtures() {
    let out = with_views(&["eval-fused"], &["--split", "firstk:5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert_eq!(value(&text, "method"), "deepcwc");
    let fused: f64 = value(&text, "accuracy").parse().unwrap();
    let img: f64 = value(&text, "accuracy_image").parse().unwrap();
    let deep: f64 = value(&text, "accuracy_deep").parse().unwrap();
    assert!(fused >= img.max(deep));
    assert!(text.contains("config.split: firstk:5"));
}

#[test]
fn eval_single_and_fit() {
    let f = fixture("image.cwcf").display().to_string();
    let l = fixture("labels.txt").display().to_string();
    let out = run(&["eval-single", "--features", &f, "--labels", &l, "--split", "frac:0.5:3", "--variant", "coefnorm"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(value(&stdout(&out), "method"), "crc");
    assert_eq!(value(&stdout(&out), "variant"), "coefnorm");

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("p.cwcf");
    let out = run(&["fit", "--features", &f, "--labels", &l, "--split", "firstk:5", "--out", p.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let proj = io::read_features(&p).unwrap();
    // 4 classes x 5 training samples, 16-dimensional image view.
    assert_eq!((proj.dim(), proj.samples()), (20, 16));
}

#[test]
fn dump_and_time() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("dump.csv");
    let out = with_views(&["dump-residuals"], &["--split", "firstk:5", "--max-queries", "3", "--out", csv.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = deepcwc::bench::read_residual_dump(std::fs::File::open(&csv).unwrap()).unwrap();
    assert_eq!(rows.len(), 3 * 4);

    let out = with_views(&["time"], &["--split", "firstk:5", "--reps", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert_eq!(value(&text, "reps"), "2");
    assert_eq!(value(&text, "predictions_reproducible"), "true");
}

#[test]
fn csv_inputs_with_separate_test_files() {
    let dir = tempfile::tempdir().unwrap();
    let m = io::read_features(&fixture("image.cwcf")).unwrap();
    let labels = io::read_labels(&fixture("labels.txt")).unwrap();
    let train_idx: Vec<usize> = (0..40).filter(|i| i % 10 < 5).collect();
    let test_idx: Vec<usize> = (0..40).filter(|i| i % 10 >= 5).collect();
    let write = |name: &str, idx: &[usize]| {
        let f = dir.path().join(format!("{name}.csv"));
        let l = dir.path().join(format!("{name}.labels"));
        io::write_features_csv(&m.select_columns(idx).unwrap(), &f).unwrap();
        io::write_labels(&idx.iter().map(|&i| labels[i]).collect::<Vec<_>>(), &l).unwrap();
        (f.display().to_string(), l.display().to_string())
    };
    let (f, l) = write("train", &train_idx);
    let (tf, tl) = write("test", &test_idx);
    let out = run(&["eval-single", "--format", "csv", "--features", &f, "--labels", &l,
                    "--test-features", &tf, "--test-labels", &tl]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(value(&stdout(&out), "queries"), "20");
}

#[test]
fn bad_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cwcf");
    std::fs::write(&bad, b"NOPE and some more bytes to pass the header").unwrap();
    let l = fixture("labels.txt").display().to_string();
    let out = run(&["eval-single", "--features", bad.to_str().unwrap(), "--labels", &l, "--split", "firstk:5"]);
    assert_eq!(out.status.code(), Some(2));

    let f = fixture("image.cwcf").display().to_string();
    let out = run(&["eval-single", "--features", &f, "--labels", &l]);
    assert_eq!(out.status.code(), Some(2));

    let missing = dir.path().join("missing.cwcf");
    let out = run(&["eval-single", "--features", missing.to_str().unwrap(), "--labels", &l, "--split", "firstk:5"]);
    assert_eq!(out.status.code(), Some(2));

    let short = dir.path().join("short.txt");
    io::write_labels(&[0, 1], &short).unwrap();
    let out = run(&["eval-single", "--features", &f, "--labels", short.to_str().unwrap(), "--split", "firstk:5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numerical_failures_map_to_three() {
    assert_eq!(Error::SingularSystem.exit_code(), 3);
    assert_eq!(Error::BadMagic.exit_code(), 2);
}
