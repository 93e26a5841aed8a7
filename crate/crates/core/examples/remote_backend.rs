//! Serve a stand-in model over HTTP and drive it through `RemoteBackend`.
//!
//! The server answers every frame request with the goal frame and every
//! instruction request with a fixed sentence.

use std::time::Duration;

use govig::gridworld::{build_world, sample_trajectories, TrajConfig, WorldSpec};
use govig::model::RemoteBackend;
use govig::reasoning::{run, ReasoningConfig, Strategy};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let server = tiny_http::Server::http("127.0.0.1:0").map_err(|e| e.to_string())?;
    let url = format!("http://{}", server.server_addr().to_ip().ok_or("no ip address")?);
    std::thread::spawn(move || {
        for mut req in server.incoming_requests() {
            let mut body = String::new();
            let _ = req.as_reader().read_to_string(&mut body);
            let v: serde_json::Value = serde_json::from_str(&body).unwrap_or_default();
            let reply = if req.url() == "/v1/predict_frame" {
                serde_json::json!({ "frame": v["goal_frame"] })
            } else {
                serde_json::json!({ "instruction": "head for the goal" })
            };
            let _ = req.respond(tiny_http::Response::from_string(reply.to_string()));
        }
    });

    let world = build_world(&WorldSpec::new(16, 16, 3, 2, 8))?;
    let traj = sample_trajectories(&world, 1, &TrajConfig::default(), 0)?.remove(0);
    let backend = RemoteBackend::new(&url, Duration::from_secs(5), 2);
    let (init, goal) = traj.task_input(2).unwrap();
    let res = run(Strategy::Interleaved, &backend, init, goal, &ReasoningConfig::new(2))?;
    println!("remote at {}: {} step(s), {:?}, instruction {:?}", backend.base_url(), res.steps, res.terminated, res.instruction);
    Ok(())
}
