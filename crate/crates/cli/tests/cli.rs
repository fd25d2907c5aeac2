use std::path::Path;
use std::process::{Command, Output};

fn roomid(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roomid"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("ROOMID_OUT")
        .output()
        .expect("run roomid")
}

fn files_with_ext(dir: &Path, ext: &str) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(ext))
        .collect();
    names.sort();
    names
}

#[test]
fn generate_one_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let out = roomid(&["generate", "--scenario", "kth_lowc"], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(files_with_ext(dir.path(), ".csv"), ["kth_lowc.csv"]);
    assert!(dir.path().join("kth_lowc.json").exists());
    assert!(dir.path().join("generate_config.json").exists());
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let out = roomid(&["generate", "--scenario", "kth_howo", "--seed", "9"], d);
        assert!(out.status.success());
    }
    for f in ["kth_howo.csv", "kth_howo.json"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn identify_writes_one_record_per_weekday() {
    let dir = tempfile::tempdir().unwrap();
    assert!(roomid(&["generate", "--scenario", "kth_mowc"], dir.path())
        .status
        .success());
    let res = dir.path().join("res");
    let dataset = dir.path().join("kth_mowc.csv");
    let out = roomid(
        &[
            "identify",
            "--dataset",
            dataset.to_str().unwrap(),
            "--method",
            "baseline",
        ],
        &res,
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let json: Vec<String> = files_with_ext(&res, ".json")
        .into_iter()
        .filter(|n| n.starts_with("kth_mowc_baseline_"))
        .collect();
    assert_eq!(json.len(), 5, "{json:?}");
    assert_eq!(files_with_ext(&res, ".svg").len(), 5);

    let record: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(res.join(&json[0])).unwrap()).unwrap();
    assert_eq!(record["occupancy_estimate"].as_array().unwrap().len(), 181);
    assert!(record["fit_co2"].is_number());
}

#[test]
fn unknown_method_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = roomid(
        &["benchmark", "--generate", "--methods", "fourier"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("kernel") && err.contains("baseline"), "{err}");
}

#[test]
fn missing_dataset_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let out = roomid(
        &["identify", "--dataset", missing.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("env_out");
    let out = Command::new(env!("CARGO_BIN_EXE_roomid"))
        .args(["generate", "--scenario", "kth_lowo"])
        .env("ROOMID_OUT", &target)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(target.join("kth_lowo.csv").exists());
}
