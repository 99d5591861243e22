use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn ruler(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ruler"))
        .args(args)
        .env_remove("RULER_SEED")
        .output()
        .expect("spawn ruler")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("data/fixtures")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn json(o: &Output) -> Value {
    assert!(
        o.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn spectrum_json_and_csv() {
    let v = json(&ruler(&["spectrum", "--dim", "8", "--json"]));
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["head_dim"], 8);
    assert_eq!(v["thetas"].as_array().unwrap().len(), 4);
    assert_eq!(v["thetas"][0], 1.0);

    let csv = stdout(&ruler(&[
        "spectrum", "--dim", "4", "--base", "100", "--csv",
    ]));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "schema_version,j,theta");
    assert_eq!(lines[1], "1,0,1.0");
    assert_eq!(lines.len(), 3);
}

#[test]
fn assign_reports_mapping_and_profile() {
    let v = json(&ruler(&[
        "assign",
        "--half-dim",
        "6",
        "--axes",
        "3",
        "--mode",
        "inter",
        "--json",
    ]));
    let mapping: Vec<&str> = v["mapping"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_str().unwrap())
        .collect();
    assert_eq!(mapping, ["w", "h", "t", "w", "h", "t"]);
    assert_eq!(v["profile"].as_array().unwrap().len(), 3);
    assert!(v.get("section_sizes").is_none());

    let v = json(&ruler(&[
        "assign",
        "--half-dim",
        "8",
        "--axes",
        "2",
        "--mode",
        "seq",
        "--sections",
        "5,3",
        "--json",
    ]));
    assert_eq!(v["section_sizes"], serde_json::json!([5, 3]));

    let human = stdout(&ruler(&[
        "assign",
        "--half-dim",
        "4",
        "--axes",
        "2",
        "--mode",
        "inter",
    ]));
    assert!(human.contains("mapping: [h, w, h, w]"));
}

#[test]
fn ruler_tokens_for_full_hd() {
    let v = json(&ruler(&[
        "ruler",
        "--width",
        "1920",
        "--height",
        "1080",
        "--patch",
        "28",
        "--interval",
        "8",
        "--json",
    ]));
    assert_eq!(v["grid"]["cols"], 69);
    assert_eq!(v["grid"]["rows"], 39);
    assert_eq!(v["count"], 9);
    assert_eq!(v["arithmetic_bound"], 224);
    assert_eq!(v["tokens"][8]["face_value"], "1792");
    assert_eq!(
        v["tokens"][1]["position"],
        serde_json::json!({"h": 8, "w": 8})
    );
}

#[test]
fn sequence_dump_is_bit_exact() {
    let out = ruler(&[
        "sequence",
        "--image",
        "56x28",
        "--patch",
        "28",
        "--interval",
        "1",
        "--axes",
        "3",
        "--system",
        "sys",
        "--prompt",
        "find it",
    ]);
    assert!(out.status.success());
    assert_eq!(
        stdout(&out),
        "0\tsystem\t(0,0,0)\tsys\n\
         1\truler\t(1,1,1)\t0\n\
         2\truler\t(2,2,2)\t28\n\
         3\truler\t(3,3,3)\t56\n\
         4\tvision\t(1,1,1)\t<img0:0,0>\n\
         5\tvision\t(1,1,2)\t<img0:0,1>\n\
         6\tprompt\t(4,4,4)\tfind\n\
         7\tprompt\t(5,5,5)\tit\n"
    );
}

#[test]
fn sequence_without_ruler() {
    let out = stdout(&ruler(&[
        "sequence",
        "--image",
        "56x56",
        "--no-ruler",
        "--prompt",
        "go",
    ]));
    assert!(!out.contains("ruler"));
    assert_eq!(out.lines().count(), 5);
}

#[test]
fn overhead_from_resolution_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("res.csv");
    fs::write(&path, "fhd,1920,1080\n8k,7680,4320\n").unwrap();
    let out = ruler(&[
        "overhead",
        "--resolutions",
        path.to_str().unwrap(),
        "--patch",
        "28",
        "--intervals",
        "2,4,8,16",
        "--csv",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    let mut rows = csv::Reader::from_reader(text.as_bytes());
    let headers = rows.headers().unwrap().clone();
    assert_eq!(&headers[0], "schema_version");
    let records: Vec<csv::StringRecord> = rows.records().map(Result::unwrap).collect();
    assert_eq!(records.len(), 8);
    let eight_k_s8 = records
        .iter()
        .find(|r| &r[1] == "8k" && &r[5] == "8")
        .unwrap();
    assert_eq!(&eight_k_s8[6], "42625");
    assert_eq!(&eight_k_s8[7], "35");
    let human = stdout(&ruler(&[
        "overhead",
        "--resolutions",
        path.to_str().unwrap(),
    ]));
    assert!(human.contains("s=16"));
}

#[test]
fn overhead_bad_resolution_file_is_a_computation_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("res.csv");
    fs::write(&path, "broken,abc,1\n").unwrap();
    let out = ruler(&["overhead", "--resolutions", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    let missing = ruler(&["overhead", "--resolutions", "/nonexistent/res.csv"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn attn_demo_reports_ties() {
    let v = json(&ruler(&[
        "attn-demo",
        "--grid",
        "16x16",
        "--interval",
        "4",
        "--probe",
        "10,10",
        "--json",
    ]));
    assert_eq!(v["index"], 8);
    assert_eq!(v["tie"], true);
    assert_eq!(v["tied"], serde_json::json!([8, 12]));
    let v = json(&ruler(&[
        "attn-demo",
        "--grid",
        "16x16",
        "--interval",
        "4",
        "--probe",
        "9,9",
        "--mode",
        "seq",
        "--json",
    ]));
    assert_eq!(v["index"], 8);
    assert_eq!(v["tie"], false);
}

#[test]
fn eval_fixture() {
    let ds = fixture("grounding_mini.jsonl");
    let pr = fixture("grounding_mini_preds.jsonl");
    let v = json(&ruler(&[
        "eval",
        "--dataset",
        &ds,
        "--preds",
        &pr,
        "--json",
    ]));
    assert_eq!(v["accuracy"], 0.7);
    assert_eq!(v["hits"], 7);
    assert_eq!(v["per_platform"]["mobile"]["hits"], 3);
    assert_eq!(v["missing"], serde_json::json!(["d2", "w1"]));
    assert_eq!(v["unparsed"], serde_json::json!(["d2"]));

    let csv = stdout(&ruler(&["eval", "--dataset", &ds, "--preds", &pr, "--csv"]));
    assert!(csv.starts_with("schema_version,label,scope,name,total,hits,accuracy\n"));
    assert!(csv.contains("1,eval,overall,all,10,7,0.7\n"));
}

#[test]
fn eval_normalized_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let preds = dir.path().join("p.jsonl");
    // m1 box [100,200,300,260] on a 1080x2400 image
    fs::write(&preds, "{\"id\":\"m1\",\"x\":0.185,\"y\":0.0958}\n").unwrap();
    let ds = fixture("grounding_mini.jsonl");
    let v = json(&ruler(&[
        "eval",
        "--dataset",
        &ds,
        "--preds",
        preds.to_str().unwrap(),
        "--normalized",
        "--json",
    ]));
    assert_eq!(v["hits"], 1);
    let raw = json(&ruler(&[
        "eval",
        "--dataset",
        &ds,
        "--preds",
        preds.to_str().unwrap(),
        "--json",
    ]));
    assert_eq!(raw["hits"], 0);
}

#[test]
fn eval_duplicate_ids_fail() {
    let dir = tempfile::tempdir().unwrap();
    let preds = dir.path().join("p.jsonl");
    fs::write(
        &preds,
        "{\"id\":\"m1\",\"x\":1,\"y\":1}\n{\"id\":\"m1\",\"x\":2,\"y\":2}\n",
    )
    .unwrap();
    let out = ruler(&[
        "eval",
        "--dataset",
        &fixture("grounding_mini.jsonl"),
        "--preds",
        preds.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("duplicate prediction ids: m1"));
}

#[test]
fn sweep_over_interval_files() {
    let dir = tempfile::tempdir().unwrap();
    let all = fs::read_to_string(fixture("grounding_mini_preds.jsonl")).unwrap();
    let first_three: String = all.lines().take(3).map(|l| format!("{l}\n")).collect();
    fs::write(dir.path().join("s4.jsonl"), &all).unwrap();
    fs::write(dir.path().join("s8.jsonl"), first_three).unwrap();
    let ds = fixture("grounding_mini.jsonl");
    let v = json(&ruler(&[
        "sweep",
        "--dataset",
        &ds,
        "--preds-dir",
        dir.path().to_str().unwrap(),
        "--intervals",
        "4,8",
        "--json",
    ]));
    let entries = v["intervals"].as_array().unwrap();
    assert_eq!(entries[0]["interval"], 4);
    assert_eq!(entries[0]["accuracy"], 0.7);
    assert_eq!(entries[1]["accuracy"], 0.3);

    let missing = ruler(&[
        "sweep",
        "--dataset",
        &ds,
        "--preds-dir",
        dir.path().to_str().unwrap(),
        "--intervals",
        "2",
    ]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_one() {
    for args in [
        vec!["bogus"],
        vec!["spectrum"],
        vec!["spectrum", "--dim", "8", "--json", "--csv"],
        vec!["spectrum", "--dim", "7"],
        vec!["spectrum", "--dim", "8", "--base", "-1"],
        vec![
            "assign",
            "--half-dim",
            "6",
            "--axes",
            "4",
            "--mode",
            "inter",
        ],
        vec![
            "assign",
            "--half-dim",
            "6",
            "--axes",
            "3",
            "--mode",
            "inter",
            "--sections",
            "2,2,2",
        ],
        vec![
            "assign",
            "--half-dim",
            "6",
            "--axes",
            "3",
            "--mode",
            "sideways",
        ],
        vec!["ruler", "--width", "0", "--height", "10"],
        vec![
            "ruler",
            "--width",
            "10",
            "--height",
            "10",
            "--interval",
            "0",
        ],
        vec![
            "attn-demo",
            "--grid",
            "4x4",
            "--interval",
            "2",
            "--probe",
            "9,9",
        ],
        vec![
            "attn-demo",
            "--grid",
            "4by4",
            "--interval",
            "2",
            "--probe",
            "1,1",
        ],
    ] {
        let out = ruler(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(out.stdout.is_empty(), "{args:?}");
        assert!(!out.stderr.is_empty(), "{args:?}");
    }
}

#[test]
fn help_exits_zero() {
    let out = ruler(&["--help"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("overhead"));
}

#[test]
fn check_seed_from_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_ruler"))
        .args(["check", "--json"])
        .env("RULER_SEED", "42")
        .output()
        .unwrap();
    let v = json(&out);
    assert_eq!(v["seed"], 42);
    assert_eq!(v["passed"], true);
    let names: Vec<&str> = v["checks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert!(names.contains(&"attention.diagonal_retrieval"));

    let bad = Command::new(env!("CARGO_BIN_EXE_ruler"))
        .arg("check")
        .env("RULER_SEED", "not-a-number")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
}
