use std::fs;
use std::path::Path;

use negsample::metrics::{aggregate_runs, MetricsRecord};
use negsample::runner::{
    compare_configs, compare_methods, read_runs_csv, run_experiment, verify_manifest, ExperimentConfig,
    ExperimentReport, Manifest, RunStatus,
};
use negsample::sampler::Method;
use negsample::Error;

const TINY: &str = "
# small synthetic log
data.format = synthetic
data.synth_users = 40
data.synth_items = 60
data.synth_min_len = 8
data.synth_mean_extra_len = 5
model.embed_dim = 8
model.num_blocks = 1
model.max_seq_len = 6
sampler.method = rns
sampler.num_negatives = 8
sampler.adaptive_k = 4
sampler.mixed_ratio = 2
train.epochs = 2
train.eval_every = 1
train.batch_size = 8
run.repeats = 1
";

fn tiny(dir: &Path, overrides: &[&str]) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::parse(TINY).unwrap();
    cfg.apply_overrides(overrides).unwrap();
    cfg.out_dir = dir.to_path_buf();
    cfg
}

fn run(dir: &Path, overrides: &[&str]) -> ExperimentReport {
    run_experiment(&tiny(dir, overrides)).unwrap()
}

#[test]
fn repeats_give_one_record_each_and_one_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let report = run(dir.path(), &["--run.repeats=3"]);
    assert_eq!(report.runs.len(), 3);
    assert_eq!(report.aggregates.len(), 1);
    assert_eq!(report.aggregates[0].aggregate.as_ref().unwrap().runs, 3);
    let csv = fs::read_to_string(dir.path().join("runs.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    let seeds: Vec<u64> = report.runs.iter().map(|r| r.seed).collect();
    assert_eq!(seeds, [0, 1, 2]);
}

#[test]
fn sweep_is_a_product() {
    let dir = tempfile::tempdir().unwrap();
    let report = run(
        dir.path(),
        &[
            "--sampler.method=rns,pns",
            "--train.learning_rate=0.001,0.01",
            "--train.epochs=1",
        ],
    );
    assert_eq!(report.aggregates.len(), 4);
    let agg = fs::read_to_string(dir.path().join("aggregate.csv")).unwrap();
    assert_eq!(agg.lines().count(), 5);
}

#[test]
fn identical_configs_give_identical_files() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let overrides = ["--sampler.method=rns,amns", "--run.repeats=2"];
    run(a.path(), &overrides);
    run(b.path(), &overrides);
    let (ma, mb) = (Manifest::load(a.path()).unwrap(), Manifest::load(b.path()).unwrap());
    assert_eq!(ma.stable(), mb.stable());
    assert!(ma.stable().len() >= 8);
    for e in ma.stable() {
        assert_eq!(
            fs::read(a.path().join(&e.path)).unwrap(),
            fs::read(b.path().join(&e.path)).unwrap()
        );
    }
    assert!(verify_manifest(a.path()).unwrap().is_empty());
}

#[test]
fn tampering_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    run(dir.path(), &[]);
    fs::write(dir.path().join("aggregate.csv"), "edited\n").unwrap();
    assert_eq!(verify_manifest(dir.path()).unwrap(), ["aggregate.csv"]);
}

#[test]
fn aggregates_recompute_from_the_run_csv() {
    let dir = tempfile::tempdir().unwrap();
    let report = run(dir.path(), &["--sampler.method=rns,bns", "--run.repeats=3"]);
    let rows = read_runs_csv(&dir.path().join("runs.csv")).unwrap();
    assert_eq!(rows.len(), 6);
    for point in &report.aggregates {
        let records: Vec<MetricsRecord> = rows
            .iter()
            .filter(|(p, _, _)| *p == point.point)
            .filter_map(|(_, _, m)| m.clone())
            .collect();
        let recomputed = aggregate_runs(&records).unwrap();
        assert_eq!(Some(&recomputed), point.aggregate.as_ref());
    }
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("aggregate.json")).unwrap()).unwrap();
    let expected = serde_json::to_value(&report.aggregates).unwrap();
    assert_eq!(json, expected);
}

#[test]
fn runs_depend_only_on_their_seed() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let three = run(a.path(), &["--run.repeats=3"]);
    let alone = run(b.path(), &["--run.repeats=1", "--run.base_seed=2"]);
    let (r2, r0) = (&three.runs[2], &alone.runs[0]);
    assert_eq!(r2.seed, r0.seed);
    assert_eq!(r2.metrics, r0.metrics);
    assert_eq!(r2.best_epoch, r0.best_epoch);
}

#[test]
fn faulted_runs_are_recorded_and_excluded() {
    let dir = tempfile::tempdir().unwrap();
    let report = run(dir.path(), &["--train.learning_rate=1e300", "--run.repeats=2"]);
    assert_eq!(report.failed_runs(), 2);
    assert!(report.runs.iter().all(|r| matches!(r.status, RunStatus::Failed(_))));
    assert_eq!(report.aggregates[0].failed, 2);
    assert!(report.aggregates[0].aggregate.is_none());
    let csv = fs::read_to_string(dir.path().join("runs.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.contains(",failed,")));
}

#[test]
fn config_text_round_trips() {
    let cfg = tiny(
        Path::new("out"),
        &["--sampler.method=rns,amns", "--train.osf=3", "--cohort.theta_head=0.4"],
    );
    assert_eq!(ExperimentConfig::parse(&cfg.to_text()).unwrap(), cfg);
    let file = ExperimentConfig::default();
    assert_eq!(ExperimentConfig::parse(&file.to_text()).unwrap(), file);
}

#[test]
fn invalid_configs_are_rejected() {
    let bad = |text: &str| {
        let parsed = ExperimentConfig::parse(text).and_then(|c| c.validate());
        assert!(matches!(parsed, Err(Error::Config(_))), "{text:?} gave {parsed:?}");
    };
    bad("run.repeats = 0");
    bad("sampler.method = nope");
    bad("no.such_key = 1");
    bad("train.learning_rate =");
    bad("model.embed_dim = 6\nmodel.num_heads = 4");
    bad("split.q_train = 0.9\nsplit.q_val = 0.8");
    bad("just some words");
}

#[test]
fn comparison_table_has_poprec_first() {
    let dir = tempfile::tempdir().unwrap();
    let base = tiny(dir.path(), &["--train.epochs=1"]);
    let table = compare_methods(&base, &Method::ALL).unwrap();
    assert_eq!(table.rows.len(), 7);
    let names: Vec<&str> = table.rows.iter().map(|r| r.method.as_str()).collect();
    assert_eq!(names, ["PopRec", "RNS", "PNS", "BNS", "MNS", "ANS", "AMNS"]);
    let csv = table.to_csv();
    assert_eq!(csv.lines().count(), 8);
    assert!(csv.lines().next().unwrap().starts_with("Method,Runs,HR@10 Total"));
}

#[test]
fn comparison_rejects_mismatched_data() {
    let dir = tempfile::tempdir().unwrap();
    let a = tiny(dir.path(), &[]);
    let b = tiny(dir.path(), &["--split.q_train=0.7"]);
    assert!(matches!(compare_configs(&[a, b]), Err(Error::Config(_))));
}

#[test]
fn absent_cohorts_render_as_dashes() {
    use negsample::metrics::{cohort_metrics, RankedList};
    use negsample::runner::{ComparisonRow, ComparisonTable};
    let map = negsample::dataset::CohortMap {
        labels: vec![negsample::dataset::Cohort::Unseen, negsample::dataset::Cohort::Head],
        theta_head: 0.5,
        theta_mid: 0.8,
    };
    let rec = cohort_metrics(&[(RankedList::new(vec![1], 10).unwrap(), 1)], &map, 10).unwrap();
    let row = ComparisonRow::from_aggregate("X", &aggregate_runs(&[rec]).unwrap());
    let csv = ComparisonTable { rows: vec![row] }.to_csv();
    let cells: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(cells[2], "100.00 ± 0.00");
    assert_eq!(cells[5], "—");
    assert_eq!(cells[10], "—");
}
