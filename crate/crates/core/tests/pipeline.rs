use std::path::Path;

use noteforge_core::config::Config;
use noteforge_core::fixture;
use noteforge_core::keyinfo::dynamic::{detect_dynamic_keyframes, detect_scene_boundaries};
use noteforge_core::notegen::KeyFrameKind;
use noteforge_core::par::Exec;
use noteforge_core::pipeline::{self, JobOutput, Stage, SCHEME_FILE};
use noteforge_core::render::canonical::{parse_scheme, serialize_scheme};

fn run_scenario(name: &str, dir: &Path, parallel: bool) -> JobOutput {
    let video = fixture::write_fixture(name, &dir.join("src")).unwrap();
    let config = Config {
        parallel,
        ..Config::default()
    };
    let src = video.to_str().unwrap();
    let providers = pipeline::build_providers(&config, true, Some(src)).unwrap();
    let mut stages = Vec::new();
    let out = pipeline::run(&config, &providers, src, &dir.join("out"), &mut |s| stages.push(s)).unwrap();
    assert_eq!(stages, Stage::ORDER[1..].to_vec());
    out
}

#[test]
fn door_repair_structure() {
    let d = tempfile::tempdir().unwrap();
    let out = run_scenario("door-repair", d.path(), true);
    let s = &out.scheme;
    assert_eq!(s.video.title, "How to Fix a Squeaky Door");
    assert_eq!(s.chapters.len(), 5, "{:#?}", s.chapters.iter().map(|c| (c.t_s, c.t_e)).collect::<Vec<_>>());
    assert!(s.chapters.iter().all(|c| c.steps.len() == 2));
    let kinds: Vec<KeyFrameKind> = s.steps().flat_map(|st| st.keyframes.iter().map(|k| k.kind)).collect();
    assert!(kinds.contains(&KeyFrameKind::TextOverlay), "{kinds:?}");
    assert!(kinds.contains(&KeyFrameKind::Diagram));
    let text = std::fs::read_to_string(d.path().join("out").join(SCHEME_FILE)).unwrap();
    let back = parse_scheme(&text).unwrap();
    assert_eq!(serialize_scheme(&back), text);
}

#[test]
fn sequential_and_parallel_agree() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut x = run_scenario("budget-meal", a.path(), true);
    let mut y = run_scenario("budget-meal", b.path(), false);
    x.scheme.video.source_uri.clear();
    y.scheme.video.source_uri.clear();
    assert!(serialize_scheme(&x.scheme) == serialize_scheme(&y.scheme));
    let g = x.scheme.chapter_graph();
    let succ: Vec<Vec<u32>> = x.scheme.chapters.iter().map(|c| c.successors.clone()).collect();
    assert_eq!(succ, vec![vec![2, 3, 4], vec![5], vec![5], vec![5], vec![]], "{g:?}");
}

#[test]
fn fitness_runs() {
    let d = tempfile::tempdir().unwrap();
    let out = run_scenario("fitness", d.path(), true);
    out.scheme.validate().unwrap();
}

#[test]
fn scene_boundaries_and_zoom() {
    let d = tempfile::tempdir().unwrap();
    fixture::write_fixture("scenes", d.path()).unwrap();
    let src = d.path().join(fixture::VIDEO_FILE);
    let mut dec = noteforge_core::ingest::open(src.to_str().unwrap()).unwrap();
    let frames = noteforge_core::ingest::sample_frames_with(dec.as_mut(), 1.0, Exec::Sequential).unwrap();
    let times: Vec<f64> = detect_scene_boundaries(&frames, 0.3, Exec::Sequential).iter().map(|b| b.boundary_time).collect();
    assert_eq!(times, vec![5.0, 10.0]);

    let z = tempfile::tempdir().unwrap();
    let video = fixture::write_fixture("zoom", z.path()).unwrap();
    let config = Config::default();
    let providers = pipeline::build_providers(&config, true, video.to_str()).unwrap();
    let mut dec = noteforge_core::ingest::open(video.to_str().unwrap()).unwrap();
    let frames = noteforge_core::ingest::sample_frames_with(dec.as_mut(), 1.0, Exec::Sequential).unwrap();
    let (dynamic, _) = detect_dynamic_keyframes(&providers, &frames, &config.dynamic, Exec::Sequential);
    let times: Vec<f64> = dynamic.iter().map(|k| k.boundary_time).collect();
    assert_eq!(times, vec![9.0]);
}
