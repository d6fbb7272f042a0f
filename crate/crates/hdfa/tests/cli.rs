use hdfa::cli::run;
use hdfa::{EXIT_NUMERIC, EXIT_OK, EXIT_USAGE};
use std::path::{Path, PathBuf};

struct Out {
    code: i32,
    stdout: String,
    stderr: String,
}

fn hdfa(args: &[&str]) -> Out {
    let mut o = Vec::new();
    let mut e = Vec::new();
    let code = run(std::iter::once("hdfa").chain(args.iter().copied()), &mut o, &mut e);
    Out {
        code,
        stdout: String::from_utf8(o).unwrap(),
        stderr: String::from_utf8(e).unwrap(),
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_data(dir: &Path) -> PathBuf {
    let p = dir.join("data.tsv");
    let r = hdfa(&["gen", "--classes", "6", "--groups", "2", "--dim", "3", "--samples", "12", "--class-spread", "2", "--within-spread", "0.6", "--seed", "1", "--out", s(&p)]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    p
}

const SMALL_BANK: [&str; 6] = ["--hidden", "6", "--ode-steps", "3", "--inner-steps", "5"];

fn small_checkpoint(dir: &Path, data: &Path, iterations: &str) -> (PathBuf, Out) {
    let ck = dir.join(format!("bank{iterations}.json"));
    let mut args = vec!["meta-train", "--data", s(data), "--out", s(&ck), "--iterations", iterations, "--ways", "3", "--lr", "0.01", "--seed", "4"];
    args.extend(SMALL_BANK);
    let out = hdfa(&args);
    (ck, out)
}

#[test]
fn gen_is_deterministic_and_labelled() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.tsv");
    let b = dir.path().join("b.tsv");
    for p in [&a, &b] {
        let r = hdfa(&["gen", "--classes", "8", "--dim", "16", "--seed", "7", "--out", s(p)]);
        assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    }
    let text = std::fs::read(&a).unwrap();
    assert_eq!(text, std::fs::read(&b).unwrap());
    let t = hdfa::features::load_features(&a, Default::default()).unwrap();
    assert_eq!(t.labels().len(), 8);
    assert_eq!(t.dim(), 16);
    let stdout = hdfa(&["gen", "--classes", "8", "--dim", "16", "--seed", "7"]);
    assert_eq!(stdout.stdout.as_bytes(), &text[..]);
}

#[test]
fn gen_rejects_bad_flags() {
    let r = hdfa(&["gen", "--classes", "0"]);
    assert_eq!(r.code, EXIT_USAGE);
    assert!(r.stderr.contains("--classes"), "{}", r.stderr);
    assert_eq!(hdfa(&["gen", "--classes", "9", "--branching", "2,4"]).code, EXIT_USAGE);
    assert_eq!(hdfa(&["gen", "--curvature", "0.5"]).code, EXIT_USAGE);
    assert_eq!(hdfa(&["gen", "--dim", "x"]).code, EXIT_USAGE);
    assert_eq!(hdfa(&["gen", "--bogus"]).code, EXIT_USAGE);
    assert_eq!(hdfa(&["frobnicate"]).code, EXIT_USAGE);
}

#[test]
fn meta_train_reports_each_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(dir.path());
    let (ck, r) = small_checkpoint(dir.path(), &data, "4");
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let lines: Vec<&str> = r.stdout.lines().collect();
    assert_eq!(lines.len(), 4);
    for (i, l) in lines.iter().enumerate() {
        let f: Vec<&str> = l.split(' ').collect();
        assert_eq!(f[..3], ["iteration", &i.to_string(), "meta_loss"]);
        assert!(f[3].parse::<f64>().unwrap().is_finite());
    }
    assert!(ck.exists());
}

#[test]
fn zero_iterations_writes_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(dir.path());
    let (ck, r) = small_checkpoint(dir.path(), &data, "0");
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    assert!(r.stdout.is_empty());
    let bank = hdfa::checkpoint::load_bank(&ck).unwrap();
    let fresh = hdfa_core::estimator::EstimatorBank::new(
        3,
        &hdfa_core::estimator::BankConfig {
            hidden: 6,
            steps: 3,
            ..Default::default()
        },
        4,
    )
    .unwrap();
    assert_eq!(bank, fresh);
}

#[test]
fn meta_train_usage_and_numeric_failures() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.tsv");
    let out = dir.path().join("o.json");
    let r = hdfa(&["meta-train", "--data", s(&missing), "--out", s(&out)]);
    assert_eq!(r.code, EXIT_USAGE, "{}", r.stderr);
    assert_eq!(hdfa(&["meta-train", "--out", s(&out)]).code, EXIT_USAGE);
    let data = small_data(dir.path());
    assert_eq!(hdfa(&["meta-train", "--data", s(&data), "--out", s(&out), "--gamma", "0.9"]).code, EXIT_USAGE);
    assert_eq!(hdfa(&["meta-train", "--data", s(&data), "--out", s(&out), "--split", "1-3"]).code, EXIT_USAGE);
    let mut args = vec!["meta-train", "--data", s(&data), "--out", s(&out), "--iterations", "30", "--lr", "1e12"];
    args.extend(SMALL_BANK);
    let r = hdfa(&args);
    assert_eq!(r.code, EXIT_NUMERIC, "{}\n{}", r.stdout, r.stderr);
    assert!(r.stderr.contains("iteration"), "{}", r.stderr);
    assert!(!out.exists());
}

#[test]
fn eval_emits_metrics_json() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(dir.path());
    let r = hdfa(&["eval", "--data", s(&data), "--mode", "no_aug", "--ways", "3", "--shots", "1", "--queries", "4", "--episodes", "20", "--inner-steps", "5"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let v: serde_json::Value = serde_json::from_str(&r.stdout).unwrap();
    let acc = v["mean_acc"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert_eq!(v["mode"], "no_aug");
    assert_eq!(v["N"], 3);
    assert_eq!(v["K"], 1);
    assert_eq!(v["Q"], 4);
    assert_eq!(v["episodes"], 20);
    assert_eq!(v["seed"], 0);
    assert!(v["ci95"].as_f64().unwrap() >= 0.0);
}

#[test]
fn eval_output_does_not_depend_on_threads() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(dir.path());
    let (ck, r) = small_checkpoint(dir.path(), &data, "2");
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let go = |threads: &str| {
        let r = hdfa(&["eval", "--data", s(&data), "--checkpoint", s(&ck), "--mode", "dual_aug", "--ways", "3", "--queries", "3", "--episodes", "9", "--inner-steps", "5", "--threads", threads, "--seed", "3"]);
        assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
        r.stdout
    };
    let one = go("1");
    assert_eq!(one, go("4"));
    assert_eq!(one, go("16"));
}

#[test]
fn eval_rejects_bad_requests() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(dir.path());
    let base = ["eval", "--data", s(&data)];
    let with = |extra: &[&str]| {
        let mut a = base.to_vec();
        a.extend(extra);
        hdfa(&a).code
    };
    assert_eq!(with(&["--mode", "no_aug", "--ways", "1"]), EXIT_USAGE);
    assert_eq!(with(&["--mode", "dual_aug"]), EXIT_USAGE);
    assert_eq!(with(&["--mode", "sideways"]), EXIT_USAGE);
    assert_eq!(with(&["--mode", "no_aug", "--protocol", "mystery"]), EXIT_USAGE);
    assert_eq!(with(&["--mode", "no_aug", "--ways", "7"]), EXIT_USAGE);
    assert_eq!(with(&["--mode", "no_aug", "--threads", "0"]), EXIT_USAGE);
}

#[test]
fn replay_reports_every_stage() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(dir.path());
    let r = hdfa(&["eval", "--data", s(&data), "--mode", "no_aug", "--protocol", "replay", "--stages", "3", "--buffer", "2", "--inner-steps", "5"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let v: serde_json::Value = serde_json::from_str(&r.stdout).unwrap();
    let stages = v["per_stage"].as_array().unwrap();
    assert_eq!(stages.len(), 3);
    assert_eq!(stages[2]["classes"], 6);
    assert_eq!(v["buffer_per_class"], 2);
    assert_eq!(v["mean_acc"], stages[2]["accuracy"]);
}

#[test]
fn config_file_sits_between_flags_and_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# shared settings\nclasses = 4\ndim=3\nseed = 9\nsamples = 2\nunrelated_key = 1\n").unwrap();
    let r = hdfa(&["gen", "--config", s(&cfg)]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let t = hdfa::features::parse_features(&r.stdout, Path::new("-"), Default::default()).unwrap();
    assert_eq!((t.labels().len(), t.dim(), t.len()), (4, 3, 8));
    assert!(r.stderr.contains("unrelated-key"));
    let flagged = hdfa(&["gen", "--config", s(&cfg), "--dim", "5"]);
    let t = hdfa::features::parse_features(&flagged.stdout, Path::new("-"), Default::default()).unwrap();
    assert_eq!(t.dim(), 5);
    let direct = hdfa(&["gen", "--classes", "4", "--dim", "3", "--seed", "9", "--samples", "2"]);
    assert_eq!(direct.stdout, r.stdout);
    std::fs::write(&cfg, "dim = three\n").unwrap();
    assert_eq!(hdfa(&["gen", "--config", s(&cfg)]).code, EXIT_USAGE);
    std::fs::write(&cfg, "just words\n").unwrap();
    assert_eq!(hdfa(&["gen", "--config", s(&cfg)]).code, EXIT_USAGE);
}

#[test]
fn augment_labels_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("two.tsv");
    let r = hdfa(&["gen", "--classes", "2", "--groups", "1", "--dim", "3", "--samples", "4", "--out", s(&data)]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let (ck, r) = small_checkpoint(dir.path(), &small_data(dir.path()), "0");
    assert_eq!(r.code, EXIT_OK);
    let out = dir.path().join("aug.tsv");
    let r = hdfa(&["augment", "--data", s(&data), "--checkpoint", s(&ck), "--draws", "5", "--seed", "2", "--out", s(&out)]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.lines().any(|l| l == "#unseen=c0+c1"), "{text}");
    let t = hdfa::features::load_features(&out, Default::default()).unwrap();
    assert_eq!(t.len(), 15);
    assert_eq!(t.labels(), vec!["c0", "c1", "c0+c1"]);
    let again = dir.path().join("aug2.tsv");
    hdfa(&["augment", "--data", s(&data), "--checkpoint", s(&ck), "--draws", "5", "--seed", "2", "--out", s(&again)]);
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&again).unwrap());
    assert_eq!(hdfa(&["augment", "--data", s(&data), "--checkpoint", s(&ck), "--draws", "0"]).code, EXIT_USAGE);
}

#[test]
fn selfcheck_exit_codes() {
    let r = hdfa(&["selfcheck", "--suite", "rk4"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stdout);
    assert!(r.stdout.starts_with("PASS rk4"));
    let r = hdfa(&["selfcheck", "--suite", "geometry", "--checks", "2000"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stdout);
    let r = hdfa(&["selfcheck", "--suite", "geometry", "--checks", "2000", "--ball-eps", "1"]);
    assert_eq!(r.code, EXIT_NUMERIC);
    assert!(r.stdout.starts_with("FAIL geometry"), "{}", r.stdout);
    assert_eq!(hdfa(&["selfcheck", "--suite", "nope"]).code, EXIT_USAGE);
    let r = hdfa(&["selfcheck", "--suite", "bound", "--trials", "5", "--draws", "2000"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stdout);
}

#[test]
fn pinned_run_reproduces_the_recorded_trace() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(dir.path());
    let ck = dir.path().join("golden.json");
    let mut args = vec!["meta-train", "--data", s(&data), "--out", s(&ck), "--iterations", "50", "--ways", "3", "--lr", "0.01", "--seed", "4"];
    args.extend(SMALL_BANK);
    let r = hdfa(&args);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let golden = include_str!("golden/meta_train_trace.txt");
    assert_eq!(r.stdout, golden);
}
