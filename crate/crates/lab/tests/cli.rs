use std::path::Path;
use std::process::{Command, Output};

use sympwalk_lab::record::{read_records, RecordFormat};

fn sympwalk(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sympwalk"))
        .args(args)
        .env("SYMPWALK_OUT_DIR", out)
        .env_remove("RUST_LOG")
        .output()
        .expect("failed to launch sympwalk")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("terminated by a signal")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn invalid_arguments_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["index", "--c", "-1"][..],
        &["index", "--n", "0"],
        &["index", "--steps", "0"],
        &["index", "--n", "2", "--method", "riccati"],
        &["batch", "--trials", "0"],
        &["walk", "--bogus"],
        &["fokker-planck", "--c", "0"],
    ] {
        let o = sympwalk(args, dir.path());
        assert_eq!(code(&o), 2, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn index_prints_a_record_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["index", "--n", "2", "--steps", "300", "--c", "3", "--seed", "17"];
    let a = sympwalk(&args, dir.path());
    assert_eq!(code(&a), 0);
    let b = sympwalk(&args, dir.path());
    let parse = |o: &Output| -> serde_json::Value { serde_json::from_str(stdout(o).trim()).unwrap() };
    let (ra, rb) = (parse(&a), parse(&b));
    assert_eq!(ra["index"], rb["index"]);
    assert_eq!(ra["n"], 2);
}

#[test]
fn output_directory_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nested");
    let o = sympwalk(&["walk", "--steps", "20", "--c", "2"], &out);
    assert_eq!(code(&o), 0);
    let csv = std::fs::read_to_string(out.join("walk.csv")).unwrap();
    assert_eq!(csv.lines().count(), 22);

    let explicit = dir.path().join("explicit");
    let o = sympwalk(&["walk", "--steps", "5", "--out", explicit.to_str().unwrap()], &out);
    assert_eq!(code(&o), 0);
    assert!(explicit.join("walk.csv").exists());
}

#[test]
fn batch_resumes_after_a_torn_write() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["batch", "--steps", "200", "--c", "1,4", "--trials", "30", "--seed", "3"];
    assert_eq!(code(&sympwalk(&args, dir.path())), 0);
    let path = dir.path().join("records.csv");
    let full = read_records(&path, RecordFormat::Csv).unwrap();
    assert_eq!(full.len(), 60);

    // Keep the first 25 complete lines and half of the next one.
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let mut torn = lines[..26].join("\n");
    torn.push('\n');
    torn.push_str(&lines[26][..lines[26].len() / 2]);
    std::fs::write(&path, torn).unwrap();

    let o = sympwalk(&args, dir.path());
    assert_eq!(code(&o), 0);
    let resumed = read_records(&path, RecordFormat::Csv).unwrap();
    let strip = |r: &[sympwalk_lab::record::ExperimentRecord]| r.iter().map(|x| x.without_timing()).collect::<Vec<_>>();
    let mut got = strip(&resumed);
    got.sort_by(|a, b| a.c.total_cmp(&b.c).then(a.trial_id.cmp(&b.trial_id)));
    assert_eq!(got, strip(&full));
    assert!(dir.path().join("moments.csv").exists());
    assert!(dir.path().join("slopes.csv").exists());
}

#[test]
fn jsonl_batches_feed_the_moments_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let o = sympwalk(
        &["batch", "--steps", "500", "--c", "2,8", "--trials", "40", "--method", "riccati", "--format", "jsonl", "--plot"],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    let records = dir.path().join("records.jsonl");
    assert_eq!(read_records(&records, RecordFormat::Jsonl).unwrap().len(), 80);
    assert!(dir.path().join("moments.svg").exists());

    let again = dir.path().join("again");
    let o = sympwalk(&["moments", records.to_str().unwrap(), "--out", again.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 0);
    assert_eq!(
        std::fs::read_to_string(again.join("moments.csv")).unwrap(),
        std::fs::read_to_string(dir.path().join("moments.csv")).unwrap()
    );
    assert!(stdout(&o).contains("slope of M2"));
}

#[test]
fn sde_and_fokker_planck_write_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = sympwalk(&["sde", "--c", "1,2", "--trials", "500"], dir.path());
    assert_eq!(code(&o), 0);
    assert!(dir.path().join("sde_moments.csv").exists());
    let o = sympwalk(&["fokker-planck", "--c", "1", "--plot"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("density.csv").exists());
    assert!(dir.path().join("density.svg").exists());
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = sympwalk(&["selftest"], dir.path());
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), String::from_utf8_lossy(&o.stderr));
}

#[test]
fn quick_appendix_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let o = sympwalk(&["reproduce-appendix", "--quick", "--plot"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut names = vec![
        "records.csv".to_string(),
        "moments.csv".into(),
        "slopes.csv".into(),
        "comparison.csv".into(),
        "moments.svg".into(),
        "report.json".into(),
    ];
    for c in [5, 15, 30] {
        names.push(format!("histogram_c{c}.csv"));
        names.push(format!("histogram_c{c}.svg"));
    }
    for name in names {
        assert!(dir.path().join(&name).exists(), "missing {name}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["quick"], true);
}
