use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn sbifuzz(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sbifuzz")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn spec(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures/specs")
        .join(name)
}

#[test]
fn help_and_version_succeed() {
    assert_eq!(code(&sbifuzz(&["--help"])), 0);
    assert_eq!(code(&sbifuzz(&["--version"])), 0);
    assert_eq!(code(&sbifuzz(&["fuzz", "--help"])), 0);
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&sbifuzz(&[])), 1);
    assert_eq!(code(&sbifuzz(&["frobnicate"])), 1);
    assert_eq!(code(&sbifuzz(&["testbed", "--bugs", "B9"])), 1);
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.yaml");
    std::fs::write(&config, "budget: 0\ntargets: [\"http://127.0.0.1:1\"]\n").unwrap();
    let out = sbifuzz(&["fuzz", "-c", config.to_str().unwrap(), "-o", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));
    let out = sbifuzz(&["bundle", spec("nudm_sdm.yaml").to_str().unwrap(), "-o", "x", "--host", "udm"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn internal_errors_exit_3() {
    let out = sbifuzz(&["bundle", "/nonexistent/spec.yaml", "-o", "/tmp/never"]);
    assert_eq!(code(&out), 3);
    let out = sbifuzz(&["report", "/nonexistent/dir"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn bundle_compile_report() {
    let dir = tempfile::tempdir().unwrap();
    let bundled = dir.path().join("bundled");
    let out = sbifuzz(&[
        "bundle",
        spec("nudm_sdm.yaml").to_str().unwrap(),
        "-o",
        bundled.to_str().unwrap(),
        "--host",
        "udm=127.0.0.1:8001",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let written = bundled.join("nudm_sdm.yaml");
    let text = std::fs::read_to_string(&written).unwrap();
    assert!(text.contains("http://127.0.0.1:8001/nudm-sdm/v2"));
    assert!(!text.contains("TS29571_CommonData.yaml#"));

    let overlay = dir.path().join("overlay.yaml");
    std::fs::write(&overlay, "supi: [\"imsi-208930000000003\"]\n").unwrap();
    let grammar = dir.path().join("g/grammar.json");
    let out = sbifuzz(&[
        "compile",
        written.to_str().unwrap(),
        "-o",
        grammar.to_str().unwrap(),
        "--overlay",
        overlay.to_str().unwrap(),
        "--pin",
        "supported-features",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let g: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&grammar).unwrap()).unwrap();
    assert_eq!(g["templates"].as_array().unwrap().len(), 5);
    assert_eq!(g["dictionary"]["overlay"]["supi"][0], "imsi-208930000000003");

    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let out = sbifuzz(&["report", empty.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("0 reports"));
}
