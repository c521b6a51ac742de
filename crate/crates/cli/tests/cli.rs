use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn noteforge(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_noteforge"))
        .args(args)
        .current_dir(cwd)
        .env_remove("NOTEFORGE_MOCK_DIR")
        .output()
        .unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn shipped() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/door-repair")
}

#[test]
fn shipped_fixture_matches_generator() {
    let d = tempfile::tempdir().unwrap();
    ok(&noteforge(&["fixture", "--out", "fx", "--scenario", "door-repair"], d.path()));
    for name in ["video.nfv", "transcript.tsv", "captions.json", "annotations.json", "mock.json"] {
        let fresh = std::fs::read(d.path().join("fx").join(name)).unwrap();
        let committed = std::fs::read(shipped().join(name)).unwrap();
        assert!(fresh == committed, "{name} drifted from the generator");
    }
}

#[test]
fn subcommands_on_fixture() {
    let d = tempfile::tempdir().unwrap();
    let w = d.path();
    ok(&noteforge(&["fixture", "--out", "fx", "--scenario", "budget-meal"], w));
    let summary = ok(&noteforge(&["process", "fx/video.nfv", "--out", "job", "--mock"], w));
    assert!(summary.contains("5 chapters"), "{summary}");

    ok(&noteforge(
        &["render", "--scheme", "job/scheme.json", "--modality", "TEXT_ONLY", "--verbosity", "VERBOSE", "--engagement", "PRINTABLE", "--out", "doc.html"],
        w,
    ));
    let html = std::fs::read_to_string(w.join("doc.html")).unwrap();
    assert!(html.contains("parallel group") && !html.contains("<img"));
    ok(&noteforge(&["render", "--scheme", "job/scheme.json", "--link-assets", "--out", "out/doc.html"], w));
    let linked = std::fs::read_to_string(w.join("out/doc.html")).unwrap();
    assert!(linked.contains("src=\"../job/assets/"));

    ok(&noteforge(&["keyframes", "fx/video.nfv", "--sem-threshold", "0.9", "--vis-threshold", "0.8", "--out", "kf.json", "--mock"], w));
    let kf: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(w.join("kf.json")).unwrap()).unwrap();
    assert_eq!(kf["keyframes"].as_array().unwrap().len(), 5);

    ok(&noteforge(&["structure", "fx/video.nfv", "--out", "h.json", "--mock"], w));
    let h: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(w.join("h.json")).unwrap()).unwrap();
    assert_eq!(h["chapters"].as_array().unwrap().len(), 5);
    ok(&noteforge(&["structure", "fx/video.nfv", "--out", "h.dot", "--dot", "--mock"], w));
    assert!(std::fs::read_to_string(w.join("h.dot")).unwrap().starts_with("digraph"));

    ok(&noteforge(&["keyinfo", "fx/video.nfv", "--static", "--report", "k.tsv", "--mock"], w));
    let report = std::fs::read_to_string(w.join("k.tsv")).unwrap();
    assert!(report.contains("TEXT_OVERLAY\t2 CUPS RICE"), "{report}");

    let gold = "VIDEO\tscheme\nDURATION\t50\nKEYFRAME\tTEXT_OVERLAY\t10.5\nBOUNDARY\t10\nBOUNDARY\t20\n";
    std::fs::write(w.join("gold.txt"), gold).unwrap();
    let scores = ok(&noteforge(&["eval", "--pred", "job/scheme.json", "--gold", "gold.txt", "--out", "report.json"], w));
    assert!(scores.contains("P=1.0000\tR=1.0000"), "{scores}");
    assert!(w.join("report.json").is_file());
}

#[test]
fn failures_exit_nonzero() {
    let d = tempfile::tempdir().unwrap();
    let out = noteforge(&["fixture", "--out", "x", "--scenario", "mystery"], d.path());
    assert!(!out.status.success());
    let out = noteforge(&["process", "missing.nfv", "--out", "j", "--mock"], d.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("UNREADABLE_SOURCE"));
    let out = noteforge(&["process", "missing.nfv", "--out", "j"], d.path());
    assert!(String::from_utf8_lossy(&out.stderr).contains("CONFIG"));
}

#[test]
fn serve_reports_bind_failure() {
    let d = tempfile::tempdir().unwrap();
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = taken.local_addr().unwrap().port().to_string();
    let out = noteforge(&["serve", "--port", &port, "--jobs-root", "jobs", "--mock"], d.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("BIND_FAILURE"));
}
