use std::process::Command;

fn wrinkle() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wrinkle"))
}

#[test]
fn report_on_empty_directory_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let st = wrinkle().args(["report", "--out"]).arg(dir.path()).status().unwrap();
    assert_eq!(st.code(), Some(0));
    let md = std::fs::read_to_string(dir.path().join("report.md")).unwrap();
    assert!(md.contains("No runs found."));
}

#[test]
fn invalid_values_exit_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let st = wrinkle().args(["solve", "--L", "0.5", "--out"]).arg(dir.path()).status().unwrap();
    assert_eq!(st.code(), Some(2));
    let st = wrinkle().args(["scan"]).env("WRINKLE_SEED", "abc").arg("--out").arg(dir.path()).status().unwrap();
    assert_eq!(st.code(), Some(2));
}

#[test]
fn missing_config_file_exits_with_io_code() {
    let dir = tempfile::tempdir().unwrap();
    let st = wrinkle().args(["solve", "--config"]).arg(dir.path().join("absent.json")).status().unwrap();
    assert_eq!(st.code(), Some(4));
}

#[test]
fn scan_is_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let st = wrinkle()
            .args(["scan", "--L", "1,2", "--grid-n", "60", "--modes", "8", "--seed", "3", "--out"])
            .arg(d.path())
            .status()
            .unwrap();
        assert_eq!(st.code(), Some(0));
        assert_eq!(wrinkle().args(["report", "--out"]).arg(d.path()).status().unwrap().code(), Some(0));
    }
    for name in ["scan.csv", "scan.json", "records.jsonl", "mu_L1.csv", "spectrum_L2.csv", "report.md", "report.json"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
}
