use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bcg(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bcg"))
        .args(args)
        .current_dir(cwd)
        .env_remove("BCG_CONFIG")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn names(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

fn short_record(dir: &Path, name: &str, extra: &[&str]) {
    let out = dir.join(name);
    let mut args = vec![
        "synth",
        "--duration-s",
        "30",
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let o = bcg(&args, dir);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn synth_eval_compare() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let o = bcg(
        &[
            "synth",
            "--count",
            "2",
            "--duration-s",
            "30",
            "--truth",
            "--out",
            "recs",
        ],
        d,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        names(&d.join("recs")),
        [
            "synth_000.csv",
            "synth_000.truth.csv",
            "synth_001.csv",
            "synth_001.truth.csv"
        ]
    );

    let o = bcg(&["eval", "recs", "--out", "out", "--workers", "2"], d);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut expected = Vec::new();
    for id in ["synth_000", "synth_001"] {
        for s in [".beats.csv", ".markers.csv", ".report.json", ".traces.csv"] {
            expected.push(format!("{id}{s}"));
        }
    }
    assert_eq!(names(&d.join("out")), expected);

    let traces = fs::read_to_string(d.join("out/synth_000.traces.csv")).unwrap();
    assert_eq!(
        traces.lines().next().unwrap(),
        "sample,time_s,raw,ecg,bcg,bcj,bcc,bcd,coarse,bcr"
    );
    assert_eq!(traces.lines().count(), 30_000 + 1);

    let o = bcg(&["compare", "out", "--out", "compare.csv"], d);
    assert!(o.status.success(), "{}", stderr(&o));
    let cmp = fs::read_to_string(d.join("compare.csv")).unwrap();
    // Two records and the pooled row, four variants each, plus the header.
    assert_eq!(cmp.lines().count(), 1 + 3 * 4);
    assert!(cmp.lines().any(|l| l.starts_with("ALL,bcr,max_ij")));
}

#[test]
fn failures_are_listed_and_other_records_still_run() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    short_record(d, "good.csv", &[]);
    fs::write(d.join("nan.csv"), "# fs=1000\necg,bcg\n0.1,NaN\n").unwrap();
    fs::write(d.join("nofs.csv"), "ecg,bcg\n0.1,0.2\n").unwrap();

    let o = bcg(
        &["eval", "good.csv", "nan.csv", "nofs.csv", "--out", "out"],
        d,
    );
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(
        err.contains("nan.csv") && err.contains("sampling rate missing"),
        "{err}"
    );
    assert!(err.contains("2 of 3 inputs failed"), "{err}");
    assert!(d.join("out/good.report.json").exists());
    assert!(!d.join("out/nan.report.json").exists());

    // --fs supplies the rate the header lacks; the one-row record then
    // fails on its content instead.
    let o = bcg(&["eval", "nofs.csv", "--fs", "1000", "--out", "out"], d);
    assert_eq!(o.status.code(), Some(1));
    assert!(
        !stderr(&o).contains("sampling rate missing"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn config_file_env_and_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    short_record(d, "rec.csv", &[]);
    let text = fs::read_to_string(d.join("rec.csv")).unwrap();
    fs::write(d.join("renamed.csv"), text.replacen("bcg", "scg", 1)).unwrap();
    fs::write(d.join("cfg.toml"), "[columns]\nbcg = \"scg\"\n").unwrap();

    let with_env = |args: &[&str]| {
        Command::new(env!("CARGO_BIN_EXE_bcg"))
            .args(args)
            .current_dir(d)
            .env("BCG_CONFIG", "cfg.toml")
            .output()
            .unwrap()
    };
    let o = with_env(&["detect", "renamed.csv", "--out", "a"]);
    assert!(o.status.success(), "{}", stderr(&o));

    let o = with_env(&[
        "detect",
        "renamed.csv",
        "--set",
        "columns.bcg=bcg",
        "--out",
        "b",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bcg"), "{}", stderr(&o));

    // An explicit --config wins over the environment.
    fs::write(d.join("plain.toml"), "").unwrap();
    let o = with_env(&["detect", "rec.csv", "--config", "plain.toml", "--out", "c"]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn bad_configuration_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    short_record(d, "rec.csv", &[]);
    let o = bcg(&["eval", "rec.csv", "--config", "missing.toml"], d);
    assert_eq!(o.status.code(), Some(2));

    fs::write(d.join("typo.toml"), "[transforms.bcr]\nt_msec = 300.0\n").unwrap();
    let o = bcg(&["eval", "rec.csv", "--config", "typo.toml"], d);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("t_msec"), "{}", stderr(&o));
}

#[test]
fn invalid_parameters_fail_each_record() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    short_record(d, "rec.csv", &[]);
    let o = bcg(&["eval", "rec.csv", "--set", "transforms.bcr.t_ms=0.1"], d);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("t_ms"), "{}", stderr(&o));
}

#[test]
fn stages_write_their_own_files() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    short_record(d, "rec.csv", &[]);
    assert!(bcg(&["transform", "rec.csv", "--out", "t"], d)
        .status
        .success());
    assert_eq!(names(&d.join("t")), ["rec.traces.csv"]);
    assert!(bcg(&["detect", "rec.csv", "--out", "x"], d)
        .status
        .success());
    assert_eq!(names(&d.join("x")), ["rec.beats.csv", "rec.markers.csv"]);
}

#[test]
fn outputs_are_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    short_record(d, "a.csv", &["--seed", "3", "--noise-snr-db", "20"]);
    short_record(d, "b.csv", &["--seed", "3", "--noise-snr-db", "20"]);
    assert_eq!(
        fs::read(d.join("a.csv")).unwrap(),
        fs::read(d.join("b.csv")).unwrap()
    );

    for w in ["1", "4"] {
        let o = bcg(&["eval", "a.csv", "--workers", w, "--out", w], d);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in [
        "a.report.json",
        "a.beats.csv",
        "a.markers.csv",
        "a.traces.csv",
    ] {
        assert_eq!(
            fs::read(d.join("1").join(f)).unwrap(),
            fs::read(d.join("4").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn compare_rejects_invalid_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    short_record(d, "rec.csv", &[]);
    assert!(bcg(&["eval", "rec.csv", "--out", "out"], d)
        .status
        .success());
    let good = fs::read_to_string(d.join("out/rec.report.json")).unwrap();
    let value: serde_json::Value = serde_json::from_str(&good).unwrap();
    let mut bad = value.clone();
    bad["reports"][0]["recall"] = serde_json::json!(1.5);
    fs::write(d.join("out/bad.report.json"), bad.to_string()).unwrap();

    let o = bcg(&["compare", "out", "--out", "compare.csv"], d);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bad.report.json"), "{}", stderr(&o));
    let cmp = fs::read_to_string(d.join("compare.csv")).unwrap();
    assert!(cmp.lines().any(|l| l.starts_with("rec,")));
}
