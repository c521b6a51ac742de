use std::path::Path;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use noteforge_core::fixture;
use noteforge_core::notegen::HighlightTarget;
use noteforge_core::pipeline::Stage;
use noteforge_core::render::canonical::{parse_scheme, serialize_scheme};
use noteforge_core::Config;
use noteforge_server::{router, AppState, JobStatus};
use serde_json::Value;
use tower::ServiceExt;

struct Resp {
    status: StatusCode,
    ctype: String,
    body: Vec<u8>,
}

impl Resp {
    fn text(&self) -> String {
        String::from_utf8(self.body.clone()).unwrap()
    }
    fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap()
    }
}

async fn call(app: &Router, method: &str, uri: &str, ctype: Option<&str>, body: Vec<u8>) -> Resp {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(c) = ctype {
        req = req.header("content-type", c);
    }
    let resp = app.clone().oneshot(req.body(Body::from(body)).unwrap()).await.unwrap();
    let status = resp.status();
    let ctype = resp.headers().get("content-type").map(|v| v.to_str().unwrap().to_string()).unwrap_or_default();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    Resp { status, ctype, body }
}

async fn get(app: &Router, uri: &str) -> Resp {
    call(app, "GET", uri, None, Vec::new()).await
}

fn app(root: &Path, static_dir: Option<&Path>) -> Router {
    router(AppState::new(root.to_path_buf(), Config::default(), true, static_dir.map(Path::to_path_buf)).unwrap())
}

/// Poll until a terminal stage, returning every distinct stage seen.
async fn wait(app: &Router, id: &str) -> Vec<Stage> {
    let mut seen: Vec<Stage> = Vec::new();
    for _ in 0..1200 {
        let s: JobStatus = serde_json::from_slice(&get(app, &format!("/api/jobs/{id}")).await.body).unwrap();
        if seen.last() != Some(&s.status) {
            seen.push(s.status);
        }
        if s.status.is_terminal() {
            return seen;
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    panic!("job {id} did not finish: {seen:?}");
}

fn is_subsequence(seen: &[Stage]) -> bool {
    let mut it = Stage::ORDER.iter();
    seen.iter().all(|s| it.any(|o| o == s))
}

async fn submit(app: &Router, source: &Path) -> String {
    let body = serde_json::json!({ "source": source.to_str().unwrap() }).to_string();
    let r = call(app, "POST", "/api/jobs", Some("application/json"), body.into_bytes()).await;
    assert_eq!(r.status, StatusCode::ACCEPTED, "{}", r.text());
    r.json()["job_id"].as_str().unwrap().to_string()
}

fn asset_listing(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[tokio::test(flavor = "multi_thread")]
async fn fixture_job_end_to_end() {
    let d = tempfile::tempdir().unwrap();
    let video = fixture::write_fixture("door-repair", &d.path().join("fx")).unwrap();
    let root = d.path().join("jobs");
    let app = app(&root, None);
    let id = submit(&app, &video).await;

    let seen = wait(&app, &id).await;
    assert_eq!(seen.last(), Some(&Stage::Done), "{seen:?}");
    assert!(is_subsequence(&seen), "{seen:?}");
    let status: JobStatus = serde_json::from_slice(&get(&app, &format!("/api/jobs/{id}")).await.body).unwrap();
    assert_eq!(status.source_uri, video.to_str().unwrap());
    assert!(status.stage_times.contains_key(&Stage::Done));

    let r = get(&app, &format!("/api/jobs/{id}/scheme")).await;
    assert_eq!(r.status, StatusCode::OK);
    assert!(r.ctype.starts_with("application/json"));
    let scheme = parse_scheme(&r.text()).unwrap();
    assert_eq!(scheme.chapters.len(), 5);

    let t = get(&app, &format!("/api/jobs/{id}/transcript")).await;
    assert_eq!(t.status, StatusCode::OK);
    assert_eq!(t.json().as_array().unwrap().len(), 10);

    let thumb = scheme.chapters[0].steps[0].thumbnail.as_ref().unwrap().asset.clone();
    let a = get(&app, &format!("/api/jobs/{id}/assets/{thumb}")).await;
    assert_eq!(a.status, StatusCode::OK);
    assert_eq!(a.ctype, "image/png");
    assert!(a.body.starts_with(b"\x89PNG"));
    assert_eq!(get(&app, &format!("/api/jobs/{id}/assets/..%2Fstatus.json")).await.status, StatusCode::NOT_FOUND);

    let html = get(&app, &format!("/api/jobs/{id}/render?modality=TEXT_ONLY&verbosity=VERBOSE&engagement=PRINTABLE")).await;
    assert_eq!(html.status, StatusCode::OK);
    assert_eq!(html.text().matches("<img").count(), 0);
    let html = get(&app, &format!("/api/jobs/{id}/render?modality=text_image")).await.text();
    assert!(html.contains(&format!("src=\"assets/{thumb}\"")));
    let bad = get(&app, &format!("/api/jobs/{id}/render?modality=HOLOGRAM")).await;
    assert_eq!(bad.status, StatusCode::BAD_REQUEST);
    assert_eq!(bad.json()["error"], "INVALID_ARGUMENT");

    // Summary edit persists; assets are untouched.
    let assets_dir = root.join(&id).join("assets");
    let before = asset_listing(&assets_dir);
    let mut edited = scheme.clone();
    let step = &mut edited.chapters[1].steps[0];
    step.summary.concise = "Pull the pin and clean it well.".into();
    step.summary.highlights.retain(|h| h.target != HighlightTarget::Concise);
    let r = call(&app, "PUT", &format!("/api/jobs/{id}/scheme"), Some("application/json"), serialize_scheme(&edited).into_bytes()).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.text());
    let again = parse_scheme(&get(&app, &format!("/api/jobs/{id}/scheme")).await.text()).unwrap();
    assert_eq!(again.chapters[1].steps[0].summary.concise, "Pull the pin and clean it well.");
    assert_eq!(asset_listing(&assets_dir), before);

    let mut moved = again.clone();
    moved.chapters[0].title = "Another title".into();
    let r = call(&app, "PUT", &format!("/api/jobs/{id}/scheme"), None, serialize_scheme(&moved).into_bytes()).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(r.json()["error"], "STRUCTURAL_EDIT");

    let r = call(&app, "PUT", &format!("/api/jobs/{id}/scheme"), None, b"{\"schema_version\": \"1\"}".to_vec()).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(r.json()["error"], "VALIDATION_FAILED");
    let r = call(&app, "PUT", &format!("/api/jobs/{id}/scheme"), None, b"{\"schema_version\": \"9\"}".to_vec()).await;
    assert_eq!(r.json()["error"], "SCHEMA_VERSION_UNSUPPORTED");
}

#[tokio::test(flavor = "multi_thread")]
async fn unknown_jobs_are_404() {
    let d = tempfile::tempdir().unwrap();
    let app = app(d.path(), None);
    for uri in [
        "/api/jobs/00000000-0000-4000-8000-000000000000",
        "/api/jobs/nope/scheme",
        "/api/jobs/00000000-0000-4000-8000-000000000000/transcript",
        "/api/jobs/00000000-0000-4000-8000-000000000000/render",
    ] {
        let r = get(&app, uri).await;
        assert_eq!(r.status, StatusCode::NOT_FOUND, "{uri}");
        assert_eq!(r.json()["error"], "NOT_FOUND");
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn uploaded_body_and_failures() {
    let d = tempfile::tempdir().unwrap();
    let video = fixture::write_fixture("fitness", &d.path().join("fx")).unwrap();
    let app = app(&d.path().join("jobs"), None);
    let r = call(&app, "POST", "/api/jobs?filename=clip.nfv", Some("application/octet-stream"), std::fs::read(&video).unwrap()).await;
    assert_eq!(r.status, StatusCode::ACCEPTED);
    let id = r.json()["job_id"].as_str().unwrap().to_string();
    assert_eq!(wait(&app, &id).await.last(), Some(&Stage::Done));
    let s: JobStatus = serde_json::from_slice(&get(&app, &format!("/api/jobs/{id}")).await.body).unwrap();
    assert!(s.source_uri.ends_with("clip.nfv"));

    let r = call(&app, "POST", "/api/jobs", Some("text/plain"), b"/does/not/exist.nfv".to_vec()).await;
    let id = r.json()["job_id"].as_str().unwrap().to_string();
    assert_eq!(wait(&app, &id).await.last(), Some(&Stage::Failed));
    let s: JobStatus = serde_json::from_slice(&get(&app, &format!("/api/jobs/{id}")).await.body).unwrap();
    assert_eq!(s.error.unwrap().code, "UNREADABLE_SOURCE");
    let r = get(&app, &format!("/api/jobs/{id}/scheme")).await;
    assert_eq!(r.status, StatusCode::CONFLICT);

    let r = call(&app, "POST", "/api/jobs", Some("application/json"), b"{}".to_vec()).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
}

#[tokio::test(flavor = "multi_thread")]
async fn static_root() {
    let d = tempfile::tempdir().unwrap();
    let web = d.path().join("web");
    std::fs::create_dir_all(&web).unwrap();
    std::fs::write(web.join("index.html"), "<p>viewer</p>").unwrap();
    let app_static = app(&d.path().join("jobs"), Some(&web));
    let r = get(&app_static, "/").await;
    assert_eq!((r.status, r.text()), (StatusCode::OK, "<p>viewer</p>".to_string()));
    let builtin = app(&d.path().join("jobs2"), None);
    assert!(get(&builtin, "/").await.text().contains("/api/jobs"));
}

#[test]
fn remote_mode_needs_endpoints() {
    if std::env::var_os("NOTEFORGE_VLM_URL").is_some() {
        return;
    }
    let d = tempfile::tempdir().unwrap();
    let err = AppState::new(d.path().to_path_buf(), Config::default(), false, None).err().unwrap();
    assert_eq!(err.code(), "CONFIG");
}
