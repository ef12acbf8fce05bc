use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn forge(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_forge"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("forge runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

const RAW: &str = r#"{"id":"a","image":"s1.png","width":1920,"height":1080,"instruction":"ok","coords":[0.1,0.1,0.2,0.2]}
{"id":"b","image":"s1.png","width":1920,"height":1080,"instruction":"pt","coords":[960,540],"scale":"pixel"}
{"id":"c","image":"s2.png","width":4000,"height":3000,"instruction":"bad","coords":[0.1,0.2,0.3]}
"#;

#[test]
fn ingest_then_stats() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("raw.jsonl"), RAW).unwrap();
    let o = forge(d, &["ingest", "--adapter", "flat-list", "--input", "raw.jsonl", "--out", "m.jsonl", "--reject", "r.jsonl"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    let manifest = fs::read_to_string(d.join("m.jsonl")).unwrap();
    assert_eq!(manifest.lines().count(), 2);
    assert!(manifest.contains(r#""annotation":[0.500,0.500]"#), "{manifest}");
    assert_eq!(fs::read_to_string(d.join("r.jsonl")).unwrap().lines().count(), 1);

    let o = forge(d, &["stats", "--manifest", "m.jsonl", "--json"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["total"], 2);
    assert_eq!(v["per_task"]["point"]["percent"], 50.0);

    let o = forge(d, &["resize", "--manifest", "m.jsonl", "--mode", "infer", "--cap-w", "960", "--cap-h", "960", "--out", "small.jsonl"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    let small = fs::read_to_string(d.join("small.jsonl")).unwrap();
    assert!(small.contains(r#""width":960,"height":540"#), "{small}");
    assert!(small.contains("resized:1/2"), "{small}");
}

#[test]
fn validation_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("raw.jsonl"), RAW).unwrap();
    let o = forge(d, &["ingest", "--adapter", "nope", "--input", "raw.jsonl", "--out", "m.jsonl", "--reject", "r.jsonl"]);
    assert_eq!(code(&o), 2, "{}", text(&o));
    assert!(text(&o).contains("unknown adapter"));

    fs::write(d.join("bad.toml"), "[filter]\ntau = 0.5\nbogus = 1\n").unwrap();
    let o = forge(d, &["pipeline", "--config", "bad.toml", "--stages", "ingest"]);
    assert_eq!(code(&o), 2, "{}", text(&o));
    assert!(text(&o).contains("bogus"), "{}", text(&o));

    fs::write(d.join("range.toml"), "[entropy]\ngrid = 1\n").unwrap();
    let o = forge(d, &["pipeline", "--config", "range.toml"]);
    assert_eq!(code(&o), 2);
    assert!(text(&o).contains("entropy.grid"), "{}", text(&o));

    let o = forge(d, &["rl-sim", "--g", "1", "--out", "log.csv"]);
    assert_eq!(code(&o), 2, "{}", text(&o));
}

#[test]
fn missing_artifacts_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("forge.toml"), "[paths]\nwork_dir = \"w\"\n").unwrap();
    let o = forge(d, &["pipeline", "--config", "forge.toml", "--stages", "filter"]);
    assert_eq!(code(&o), 3, "{}", text(&o));
    assert!(text(&o).contains("stage `ingest`"), "{}", text(&o));

    let o = forge(d, &["pipeline", "--config", "forge.toml", "--stages", ""]);
    assert_eq!(code(&o), 0, "{}", text(&o));
}

#[test]
fn runtime_errors_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let o = forge(dir.path(), &["stats", "--manifest", "does-not-exist.jsonl"]);
    assert_eq!(code(&o), 4, "{}", text(&o));
}

#[test]
fn rl_sim_writes_log() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = forge(
        d,
        &["rl-sim", "--tasks", "10", "--g", "8", "--epsilon", "0.2", "--steps", "200", "--seed", "1", "--curriculum", "easy:50,medium:50,hard:100", "--out", "log.csv"],
    );
    assert_eq!(code(&o), 0, "{}", text(&o));
    let log = fs::read_to_string(d.join("log.csv")).unwrap();
    let mut lines = log.lines();
    assert_eq!(lines.next(), Some("step,mean_reward,policy_entropy,objective"));
    assert_eq!(lines.count(), 200);
}

#[test]
fn eval_writes_report_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("bench.jsonl"),
        concat!(
            r#"{"id":"1","target":[0.0,0.0,0.5,0.5],"categories":{"split":"text"}}"#, "\n",
            r#"{"id":"2","target":[0.0,0.0,0.5,0.5],"categories":{"split":"icon"}}"#, "\n",
            r#"{"id":"3","target":[0.5,0.5,1.0,1.0],"categories":{"split":"icon"}}"#, "\n",
        ),
    )
    .unwrap();
    fs::write(d.join("preds.jsonl"), "{\"id\":\"1\",\"point\":[0.25,0.25]}\n{\"id\":\"2\",\"point\":[0.9,0.9]}\n").unwrap();
    let o = forge(d, &["eval", "--bench", "bench.jsonl", "--preds", "preds.jsonl", "--report", "out.txt", "--csv", "out.csv"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    assert!(d.join("out.txt").exists());
    let csv = fs::read_to_string(d.join("out.csv")).unwrap();
    assert!(csv.lines().count() >= 2, "{csv}");

    fs::write(d.join("stray.jsonl"), "{\"id\":\"9\",\"point\":[0.1,0.1]}\n").unwrap();
    let o = forge(d, &["eval", "--bench", "bench.jsonl", "--preds", "stray.jsonl", "--report", "o2.txt", "--csv", "o2.csv"]);
    assert_eq!(code(&o), 2, "{}", text(&o));
    assert!(!d.join("o2.txt").exists());
}
