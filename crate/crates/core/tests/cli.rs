use std::fs;
use std::path::Path;

use elimrank::cli::{run, EXIT_DATA, EXIT_OK, EXIT_USAGE};
use elimrank::metrics::MetricReport;

fn elimrank(args: &[&str]) -> i32 {
    run(std::iter::once("elimrank").chain(args.iter().copied()))
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

fn synth(dir: &Path, name: &str, queries: &str, seed: &str) -> String {
    let out = path(dir, name);
    let code = elimrank(&["synth", "--out", &out, "--queries", queries, "--items", "6", "--features", "4", "--seed", seed]);
    assert_eq!(code, EXIT_OK);
    out
}

#[test]
fn predict_emits_one_line_per_item_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let train = synth(dir.path(), "train.txt", "10", "1");
    let test = synth(dir.path(), "test.txt", "7", "2");
    let model = path(dir.path(), "m.bin");
    assert_eq!(elimrank(&["train", "--train", &train, "--model", "linear", "--max-epochs", "5", "--out-model", &model]), EXIT_OK);
    let pred = path(dir.path(), "pred.tsv");
    assert_eq!(elimrank(&["predict", "--model", &model, "--input", &test, "--out", &pred]), EXIT_OK);

    let input = fs::read_to_string(&test).unwrap();
    let output = fs::read_to_string(&pred).unwrap();
    let in_qids: Vec<&str> = input
        .lines()
        .map(|l| l.split_whitespace().nth(1).unwrap().trim_start_matches("qid:"))
        .collect();
    let out_qids: Vec<&str> = output.lines().map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(in_qids, out_qids);
    assert!(output.lines().all(|l| l.split('\t').nth(1).unwrap().parse::<f64>().is_ok()));
}

#[test]
fn eval_kv_reports_requested_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let train = synth(dir.path(), "train.txt", "10", "1");
    let model = path(dir.path(), "m.bin");
    assert_eq!(elimrank(&["train", "--train", &train, "--model", "highway", "--K", "3", "--L", "2", "--max-epochs", "3", "--out-model", &model]), EXIT_OK);
    let out = path(dir.path(), "eval.kv");
    assert_eq!(
        elimrank(&["eval", "--model", &model, "--test", &train, "--metric", "ndcg@1,ndcg@5,err", "--format", "kv", "--out", &out]),
        EXIT_OK
    );
    let means = MetricReport::means_from_kv(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(means.len(), 3);
    assert!(means.values().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let train = synth(dir.path(), "train.txt", "10", "1");
    let conf = path(dir.path(), "c.conf");
    fs::write(&conf, "# run settings\nmodel = linear\nmax-epochs = 2\n").unwrap();
    let model = path(dir.path(), "m.bin");
    assert_eq!(elimrank(&["train", "--config", &conf, "--train", &train, "--max-epochs", "4", "--out-model", &model]), EXIT_OK);
    let log = fs::read_to_string(format!("{model}.log")).unwrap();
    assert_eq!(log.lines().count(), 1 + 4);
    assert_eq!(&fs::read(&model).unwrap()[..4], b"RKFN");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(elimrank(&["train", "--no-such-flag"]), EXIT_USAGE);
    assert_eq!(elimrank(&["eval"]), EXIT_USAGE);
    let missing = path(dir.path(), "missing.txt");
    assert_eq!(elimrank(&["train", "--train", &missing, "--out-model", &path(dir.path(), "m")]), EXIT_DATA);

    let bad = path(dir.path(), "bad.txt");
    fs::write(&bad, "7 qid:1 1:0.5\n").unwrap();
    assert_eq!(elimrank(&["train", "--train", &bad, "--out-model", &path(dir.path(), "m")]), EXIT_DATA);

    let conf = path(dir.path(), "broken.conf");
    fs::write(&conf, "this line has no equals sign\n").unwrap();
    assert_eq!(elimrank(&["synth", "--config", &conf, "--out", &path(dir.path(), "s")]), EXIT_USAGE);

    let garbage = path(dir.path(), "garbage.bin");
    fs::write(&garbage, b"XXXXnot a model").unwrap();
    let test = synth(dir.path(), "t.txt", "2", "1");
    fs::write(format!("{garbage}.norm"), "feature\tmean\tstd\n").unwrap();
    assert_eq!(elimrank(&["predict", "--model", &garbage, "--input", &test]), EXIT_DATA);
}

#[test]
fn sweep_writes_one_row_per_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let train = synth(dir.path(), "train.txt", "8", "1");
    let test = synth(dir.path(), "test.txt", "4", "2");
    let out = path(dir.path(), "sweep.tsv");
    assert_eq!(
        elimrank(&["sweep", "--train", &train, "--test", &test, "--K-grid", "3", "--p-hid-grid", "0,0.3,0.8", "--max-epochs", "3", "--out", &out]),
        EXIT_OK
    );
    let table = fs::read_to_string(&out).unwrap();
    assert_eq!(table.lines().count(), 1 + 3);
}
