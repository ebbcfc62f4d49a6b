use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_homodyne-sim"))
}

fn write_config(dir: &Path, json: &str) -> std::path::PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, json).unwrap();
    p
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().to_string(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn malformed_config_exits_2_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "{\"fig2\": {\"m\": \"many\"}}");
    let out = tmp.path().join("out");
    let status = bin().args(["fig2", "--config"]).arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert_eq!(status.code(), Some(2));
    assert!(!out.exists() || fs::read_dir(&out).unwrap().next().is_none());

    let status = bin().args(["localize", "--grid-j", "3", "--out"]).arg(&out).status().unwrap();
    assert_eq!(status.code(), Some(2));
    assert!(!out.exists() || fs::read_dir(&out).unwrap().next().is_none());
}

#[test]
fn tolerance_violation_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "{\"povm\": {\"completeness_tolerance\": 1e-30}}");
    let out = tmp.path().join("out");
    let status = bin().args(["povm", "--config"]).arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert_eq!(status.code(), Some(3));
    assert!(fs::read_dir(&out).unwrap().next().is_none());
}

#[test]
fn fig2_is_reproducible_and_handles_single_outcome() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "{\"fig2\": {\"m\": 300, \"baseline_trials\": 20}}");
    let run = |name: &str| {
        let out = tmp.path().join(name);
        let o = bin()
            .args(["fig2", "--seed", "4", "--seed", "9", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let a = read_all(&run("a"));
    let b = read_all(&run("b"));
    assert_eq!(a.len(), 7);
    assert_eq!(a, b);
    let overlay = String::from_utf8(a.iter().find(|(n, _)| n == "fig2_seed4.csv").unwrap().1.clone()).unwrap();
    assert!(overlay.starts_with("# seed=4"));

    let one = write_config(tmp.path(), "{\"fig2\": {\"m\": 1, \"baseline_trials\": 5}}");
    let out = tmp.path().join("one");
    let status = bin().args(["fig2", "--config"]).arg(&one).arg("--out").arg(&out).status().unwrap();
    assert!(status.success());
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(out.join("fig2_summary.json")).unwrap()).unwrap();
    assert_eq!(summary[0]["m"], 1);
}

#[test]
fn discriminate_cw_reports_coherent() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let status = bin().args(["discriminate", "--seed", "2", "--out"]).arg(&out).status().unwrap();
    assert!(status.success());
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out.join("discriminate_seed2.json")).unwrap()).unwrap();
    assert_eq!(report["verdict"], "coherent");
    assert_eq!(report["seed"], 2);
}

#[test]
fn tomo_common_source_reconstructs_signal() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let status = bin().args(["tomo", "--seed", "1", "--out"]).arg(&out).status().unwrap();
    assert!(status.success());
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(out.join("tomo_summary.json")).unwrap()).unwrap();
    assert!(summary[0]["fidelity_fixed"].as_f64().unwrap() > 0.9);
    assert!(out.join("tomo_seed1_theta00.csv").exists());
    assert!(out.join("tomo_seed1_wigner.csv").exists());
}
