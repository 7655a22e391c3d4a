use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = "\
data.format = synthetic
data.synth_users = 30
data.synth_items = 50
data.synth_min_len = 8
model.embed_dim = 8
model.max_seq_len = 6
sampler.method = rns
sampler.num_negatives = 4
train.epochs = 1
train.batch_size = 8
";

fn negsample(args: &[&str], env_config: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_negsample"));
    cmd.args(args).env_remove("NEGSAMP_CONFIG");
    if let Some(path) = env_config {
        cmd.env("NEGSAMP_CONFIG", path);
    }
    cmd.output().unwrap()
}

fn setup() -> (tempfile::TempDir, String, String) {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("tiny.cfg");
    fs::write(&config, TINY).unwrap();
    let out = dir.path().join("out");
    let s = |p: &Path| p.to_str().unwrap().to_string();
    (dir, s(&config), s(&out))
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn experiment_writes_results_and_manifest() {
    let (_dir, config, out) = setup();
    let o = negsample(
        &["experiment", "--config", &config, "--out-dir", &out, "--repeats", "2"],
        None,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for file in [
        "runs.csv",
        "aggregate.csv",
        "aggregate.json",
        "manifest.json",
        "config.txt",
    ] {
        assert!(Path::new(&out).join(file).exists(), "missing {file}");
    }
    let runs = fs::read_to_string(Path::new(&out).join("runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 3);
}

#[test]
fn invalid_config_exits_with_two() {
    let (_dir, config, out) = setup();
    let o = negsample(
        &["experiment", "--config", &config, "--out-dir", &out, "--train.epochs=0"],
        None,
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("error"));
    let o = negsample(&["stats", "--config", &config, "--no.such_key=1"], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(!Path::new(&out).exists());
}

#[test]
fn failed_runs_give_a_nonzero_exit() {
    let (_dir, config, out) = setup();
    let o = negsample(
        &[
            "experiment",
            "--config",
            &config,
            "--out-dir",
            &out,
            "--train.learning_rate=1e300",
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(1));
    // Results are still written.
    let runs = fs::read_to_string(Path::new(&out).join("runs.csv")).unwrap();
    assert!(runs.contains(",failed,"));
}

#[test]
fn config_is_read_from_the_environment() {
    let (_dir, config, out) = setup();
    let o = negsample(&["stats", "--out-dir", &out], Some(Path::new(&config)));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let stats: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(stats.is_object());
    assert!(Path::new(&out).join("dataset_stats.json").exists());
}

#[test]
fn sample_trace_has_a_csv_header() {
    let (_dir, config, out) = setup();
    let o = negsample(
        &[
            "sample-trace",
            "--config",
            &config,
            "--out-dir",
            &out,
            "--sampler.method=amns",
            "--sampler.adaptive_k=2",
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(Path::new(&out).join("sample_trace.csv")).unwrap();
    assert_eq!(
        csv.lines().next(),
        Some("batch,user,position,candidate,excluded,retained")
    );
    assert!(csv.lines().count() > 1);
}

#[test]
fn train_then_trace_with_checkpoint() {
    let (dir, config, out) = setup();
    let o = negsample(&["train", "--config", &config, "--out-dir", &out], None);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let ckpt = Path::new(&out).join("model.ckpt");
    assert!(ckpt.exists());
    let trace_dir = dir.path().join("trace");
    let o = negsample(
        &[
            "sample-trace",
            "--config",
            &config,
            "--out-dir",
            trace_dir.to_str().unwrap(),
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--sampler.method=ans",
            "--sampler.adaptive_k=2",
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn split_and_compare_outputs() {
    let (_dir, config, out) = setup();
    let o = negsample(&["split", "--config", &config, "--out-dir", &out], None);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for file in ["split.json", "train.tsv", "val.tsv", "test.tsv", "manifest.json"] {
        assert!(Path::new(&out).join(file).exists(), "missing {file}");
    }
    let cmp = Path::new(&out).join("cmp");
    let o = negsample(
        &[
            "compare",
            "--config",
            &config,
            "--out-dir",
            cmp.to_str().unwrap(),
            "--methods",
            "rns,bns",
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let table = String::from_utf8(o.stdout).unwrap();
    let names: Vec<&str> = table.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, ["PopRec", "RNS", "BNS"]);
    assert!(cmp.join("comparison.csv").exists());
}
