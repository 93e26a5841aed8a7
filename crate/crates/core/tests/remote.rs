//! The remote backend against an in-process HTTP server.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use govig::cli::{self, EpisodeRecord};
use govig::gridworld::EgoFrame;
use govig::model::{BackendError, ModelBackend, RemoteBackend, REMOTE_URL_ENV};
use serde_json::{json, Value};

/// Answers every frame request with the goal frame, so episodes end after
/// one step. Requests whose goal payload has an odd byte sum get HTTP 500.
fn spawn_server(fail_odd: bool) -> (String, Arc<AtomicUsize>) {
    let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
    let url = format!("http://{}", server.server_addr().to_ip().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    thread::spawn(move || {
        for mut req in server.incoming_requests() {
            counter.fetch_add(1, Ordering::SeqCst);
            let mut body = String::new();
            req.as_reader().read_to_string(&mut body).unwrap();
            let v: Value = serde_json::from_str(&body).unwrap();
            let goal = v["goal_frame"].as_str().unwrap_or("").to_string();
            if fail_odd && goal.bytes().map(u32::from).sum::<u32>() % 2 == 1 {
                let _ = req.respond(tiny_http::Response::from_string("boom").with_status_code(500));
                continue;
            }
            let reply = match req.url() {
                "/v1/predict_frame" => json!({ "frame": goal }),
                "/v1/generate_instruction" => json!({ "instruction": "walk to the goal" }),
                _ => {
                    let _ = req.respond(tiny_http::Response::from_string("no").with_status_code(404));
                    continue;
                }
            };
            let _ = req.respond(tiny_http::Response::from_string(reply.to_string()));
        }
    });
    (url, hits)
}

fn frame(v: u8) -> EgoFrame {
    EgoFrame::filled(16, 16, [v, v / 2, 255 - v])
}

#[test]
fn remote_backend_protocol_and_failure_isolation() {
    // Happy path, called directly.
    let (url, hits) = spawn_server(false);
    let backend = RemoteBackend::new(&url, Duration::from_secs(5), 2);
    let goal = frame(200);
    let next = backend.predict_frame(&[frame(1), frame(2)], &goal).unwrap();
    assert_eq!(next, goal);
    assert_eq!(backend.generate_instruction(&[frame(1)], &goal, None).unwrap(), "walk to the goal");
    assert!(matches!(backend.predict_frame(&[frame(1)], &goal), Err(BackendError::Input(_))));
    assert_eq!(hits.load(Ordering::SeqCst), 2);

    // Unreachable endpoint.
    let dead = RemoteBackend::new("http://127.0.0.1:9", Duration::from_millis(500), 2);
    assert!(matches!(dead.predict_frame(&[frame(1), frame(2)], &goal), Err(BackendError::Remote(_))));

    // The environment variable wins over the configured URL.
    std::env::set_var(REMOTE_URL_ENV, &url);
    let overridden = RemoteBackend::new("http://127.0.0.1:9", Duration::from_secs(5), 2);
    assert_eq!(overridden.base_url(), url);
    assert_eq!(overridden.predict_frame(&[frame(1), frame(2)], &goal).unwrap(), goal);
    std::env::remove_var(REMOTE_URL_ENV);

    // Through the CLI: failing episodes are recorded and the run continues.
    let (flaky, _) = spawn_server(true);
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let out = tmp.path().join("out");
    let d = data.to_str().unwrap();
    assert_eq!(cli::run(["govig", "gen", "--out", d, "--worlds", "4", "--trajs", "24", "--seed", "5"]), 0);
    let o = out.to_str().unwrap();
    let code = cli::run(["govig", "infer", "--data", d, "--out", o, "--backend", "remote", "--url", &flaky, "--split", "train"]);
    assert_eq!(code, 0);
    let mut records = Vec::new();
    for e in std::fs::read_dir(out.join("episodes")).unwrap() {
        let text = std::fs::read_to_string(e.unwrap().path().join("result.json")).unwrap();
        records.push(serde_json::from_str::<EpisodeRecord>(&text).unwrap());
    }
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    assert!(failed > 0 && failed < records.len(), "{failed} of {} failed", records.len());
    for r in records.iter().filter(|r| r.error.is_none()) {
        assert_eq!(r.steps, 1);
        assert_eq!(r.instruction, "walk to the goal");
    }
}
