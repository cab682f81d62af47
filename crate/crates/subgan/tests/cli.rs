use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use subgan::table::{self, Table};

fn subgan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_subgan")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn config(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name).display().to_string()
}

fn s(p: &Path) -> String {
    p.display().to_string()
}

/// A small MLP run on the circle mixture.
fn small(out: &Path, extra: &[&str]) -> Vec<String> {
    let mut v: Vec<String> = [
        "--data",
        "circle_mixture k=4 radius=2 std=0.1",
        "--generator_hidden",
        "8",
        "--discriminator_hidden",
        "8",
        "--eval_samples",
        "256",
        "--batch_size",
        "16",
        "--output",
    ]
    .iter()
    .map(|x| x.to_string())
    .collect();
    v.push(s(out));
    v.extend(extra.iter().map(|x| x.to_string()));
    v
}

fn run(out: &Path, extra: &[&str]) -> Output {
    let args = small(out, extra);
    let mut all = vec!["run", "--seeds", "3"];
    all.extend(args.iter().map(String::as_str));
    subgan(&all)
}

fn csvs(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut v: Vec<(PathBuf, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().into(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn bad_config_line_is_reported_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.conf");
    fs::write(&p, "steps = 10\nlambda1 = -2\n").unwrap();
    let o = subgan(&["run", "--config", &s(&p)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains(&format!("{}:2", p.display())), "{}", stderr(&o));

    fs::write(&p, "steps = 10\nwidth = 3\n").unwrap();
    let o = subgan(&["run", "--config", &s(&p)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains(":2"), "{}", stderr(&o));

    let o = subgan(&["run", "--steps", "ten", "--output", &s(dir.path())]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("steps"), "{}", stderr(&o));
}

#[test]
fn empty_plan_writes_headers_and_initial_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["--steps", "0"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let seed = dir.path().join("seed-3");
    for (name, header) in [("steps.csv", table::STEPS), ("metrics.csv", table::METRICS)] {
        let t = Table::read(&seed.join(name)).unwrap();
        assert_eq!(t.header, header);
        assert!(t.rows.is_empty(), "{name}");
    }
    for f in ["generator.ckpt", "generator.bin", "discriminator.ckpt", "discriminator.bin", "config.txt"] {
        assert!(seed.join(f).is_file(), "{f}");
    }
    let cfg = subgan::config::RunConfig::load(&seed.join("config.txt"), &[]).unwrap();
    let (g, f) = subgan::runner::build_models(&cfg, 3).unwrap();
    assert_eq!(subgan::checkpoint::load(&seed.join("generator.bin")).unwrap(), g);
    assert_eq!(subgan::checkpoint::load(&seed.join("discriminator.bin")).unwrap(), f);
    assert!(fs::read_to_string(seed.join("status.txt")).unwrap().contains("completed"));
}

#[test]
fn rerun_and_config_replay_are_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(code(&run(&a, &["--steps", "40", "--eval_every", "10"])), 0);
    assert_eq!(code(&run(&b, &["--steps", "40", "--eval_every", "10"])), 0);
    let first = csvs(&a.join("seed-3"));
    assert_eq!(first.len(), 3);
    assert_eq!(first, csvs(&b.join("seed-3")));

    let c = dir.path().join("c");
    let o = subgan(&["run", "--config", &s(&a.join("seed-3/config.txt")), "--output", &s(&c)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(first, csvs(&c.join("seed-3")));
}

#[test]
fn divergence_exits_two_and_keeps_last_good_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let o = subgan(&[
        "run",
        "--model",
        "toy",
        "--data",
        "gaussian mean=3,-2 diag=4,0.25",
        "--eta_f",
        "1e200",
        "--eta_g",
        "1e200",
        "--lambda2",
        "1e200",
        "--steps",
        "50",
        "--seeds",
        "0",
        "--output",
        &s(dir.path()),
    ]);
    assert_eq!(code(&o), 2, "{}{}", stdout(&o), stderr(&o));
    let seed = dir.path().join("seed-0");
    let status = fs::read_to_string(seed.join("status.txt")).unwrap();
    assert!(status.contains("diverged"), "{status}");
    let g = subgan::checkpoint::load(&seed.join("generator.bin")).unwrap();
    assert!(g.flat_params().iter().all(|v| v.is_finite()));
    let steps = Table::read(&seed.join("steps.csv")).unwrap();
    assert!(steps.rows.len() < 50);
}

#[test]
fn compare_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = s(&dir.path().join("mm"));
    let mm = config("mismatch.conf");

    let o = subgan(&["compare", "--config", &mm, "--output", &out]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("allow-mismatch"), "{}", stderr(&o));

    let o = subgan(&["compare", "--config", &mm, "--output", &out, "--allow-mismatch", "--steps", "60"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    let report = fs::read_to_string(dir.path().join("mm/report.txt")).unwrap();
    assert!(report.contains("expected to fail") && report.contains("result = fail"), "{report}");

    let o = subgan(&["compare", "--config", &mm, "--regime", "standard", "--output", &out]);
    assert_eq!(code(&o), 1);

    let eq = s(&dir.path().join("eq"));
    let o = subgan(&["compare", "--config", &config("equivalence.conf"), "--output", &eq, "--steps", "30", "--seeds", "0"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let t = Table::read(&dir.path().join("eq/compare.csv")).unwrap();
    assert_eq!(t.text("pass"), ["1"]);
    let d = Table::read(&dir.path().join("eq/seed-0/divergence.csv")).unwrap();
    assert_eq!(d.rows.len(), 30);
}

#[test]
fn sweep_writes_summary_tracking_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let args = small(dir.path(), &["--steps", "20", "--eval_every", "10", "--seeds", "0,1"]);
    let mut all = vec!["sweep", "--template", "rate-sweep"];
    all.extend(args.iter().map(String::as_str));
    let o = subgan(&all);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary = Table::read(&dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.rows.len(), 7);
    assert!(summary.column("frechet_stderr").iter().all(Option::is_some));
    let tracking = Table::read(&dir.path().join("tracking.csv")).unwrap();
    assert!(tracking.text("within_tolerance").iter().all(|v| *v == "1"));
    assert!(dir.path().join("sweep.svg").is_file());
    assert!(dir.path().join("lambda1-1/seed-1/divergence.csv").is_file());
}

#[test]
fn plot_reports_missing_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = subgan(&["plot", &s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let o = subgan(&["plot", &s(&dir.path().join("nowhere"))]);
    assert_eq!(code(&o), 1);

    assert_eq!(code(&run(dir.path(), &["--steps", "10", "--eval_every", "5"])), 0);
    let seed = dir.path().join("seed-3");
    fs::remove_file(seed.join("metrics.csv")).unwrap();
    fs::remove_file(seed.join("metrics.svg")).unwrap();
    let o = subgan(&["plot", &s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(format!("{}{}", stdout(&o), stderr(&o)).contains("metrics.csv"));
    assert!(!seed.join("metrics.svg").exists());
    assert!(seed.join("losses.svg").is_file());
}

#[test]
fn analyses_write_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = |n: &str| s(&dir.path().join(n));
    let cases: [(Vec<String>, &str, &[&str]); 4] = [
        (
            vec!["kernel".into(), "--dim".into(), "3".into(), "--samples".into(), "200".into(), "--out".into(), out("k")],
            "k",
            &["kernel.csv", "eigenvalues.csv", "kernel.svg", "kernel_summary.txt"],
        ),
        (vec!["taylor".into(), "--count".into(), "5".into(), "--out".into(), out("t")], "t", &["taylor.csv", "taylor.svg"]),
        (
            vec!["toy".into(), "--steps".into(), "300".into(), "--seeds".into(), "0,1".into(), "--out".into(), out("y")],
            "y",
            &["toy.csv", "toy.svg"],
        ),
        (
            vec!["floor".into(), "--sizes".into(), "64,256".into(), "--seeds".into(), "0,1".into(), "--out".into(), out("f")],
            "f",
            &["floor.csv", "floor.svg"],
        ),
    ];
    for (args, sub, files) in &cases {
        let mut all = vec!["analyze"];
        all.extend(args.iter().map(String::as_str));
        let o = subgan(&all);
        assert_eq!(code(&o), 0, "{args:?}: {}", stderr(&o));
        for f in *files {
            assert!(dir.path().join(sub).join(f).is_file(), "{sub}/{f}");
        }
    }
    let toy = Table::read(&dir.path().join("y/toy.csv")).unwrap();
    assert_eq!(toy.rows.len(), 2);
    let taylor = Table::read(&dir.path().join("t/taylor.csv")).unwrap();
    assert_eq!(taylor.rows.len(), 10);
}
