//! Runs the real binary and kills it with SIGKILL between writes.

mod common;

use std::net::TcpListener;
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use common::*;
use feedwarden_service::error::{EXIT_CONFIG, EXIT_STORAGE};
use feedwarden_service::state::user_log_path;

const BIN: &str = env!("CARGO_BIN_EXE_feedwarden");

fn free_addr() -> String {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    l.local_addr().unwrap().to_string()
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let mut config = fixture_config(dir);
    config.frozen_clock_ms = Some(START_MS);
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

struct Server {
    child: Child,
    base: String,
    http: reqwest::blocking::Client,
}

impl Server {
    fn start(config: &Path) -> Server {
        let addr = free_addr();
        let child = Command::new(BIN)
            .args(["--config", config.to_str().unwrap(), "serve", "--listen", &addr])
            .stderr(Stdio::null())
            .spawn()
            .unwrap();
        let server = Server {
            child,
            base: format!("http://{addr}"),
            http: reqwest::blocking::Client::new(),
        };
        let deadline = Instant::now() + Duration::from_secs(20);
        while server.http.get(format!("{}/v1/config", server.base)).send().is_err() {
            assert!(Instant::now() < deadline, "server did not come up");
            std::thread::sleep(Duration::from_millis(50));
        }
        server
    }

    fn send(&self, method: reqwest::Method, path: &str, body: Option<Value>) -> (u16, Value) {
        let mut req = self
            .http
            .request(method, format!("{}{path}", self.base))
            .header("x-user-id", "u1");
        if let Some(b) = body {
            req = req.json(&b);
        }
        let resp = req.send().unwrap();
        let status = resp.status().as_u16();
        (status, resp.json().unwrap_or(Value::Null))
    }

    fn kill(mut self) {
        self.child.kill().unwrap();
        self.child.wait().unwrap();
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn observable(server: &Server) -> Vec<Value> {
    ["/v1/rules", "/v1/profile", "/v1/proposals", "/v1/graph", "/v1/telemetry/summary"]
        .iter()
        .map(|p| server.send(reqwest::Method::GET, p, None).1)
        .collect()
}

#[test]
fn sigkill_between_writes_loses_nothing_acknowledged() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());

    let server = Server::start(&config);
    for rule in seed_rules() {
        assert_eq!(server.send(reqwest::Method::POST, "/v1/rules", Some(rule)).0, 201);
    }
    let (_, adj) = server.send(reqwest::Method::POST, "/v1/adjudicate", Some(flame_item()));
    assert_eq!(adj["y_block"], 1);
    server.send(reqwest::Method::PATCH, "/v1/profile/tags/cats", Some(json!({"slider": 0.4})));
    server.send(reqwest::Method::POST, "/v1/intent", Some(json!({"utterance": "flame war"})));
    let before = observable(&server);
    let dossier = server.send(reqwest::Method::GET, &format!("/v1/dossiers/{}", adj["dossier_id"].as_str().unwrap()), None);
    server.kill();

    let server = Server::start(&config);
    assert_eq!(observable(&server), before);
    assert_eq!(
        server.send(reqwest::Method::GET, &format!("/v1/dossiers/{}", adj["dossier_id"].as_str().unwrap()), None),
        dossier
    );
    let (_, again) = server.send(reqwest::Method::POST, "/v1/adjudicate", Some(anime_item()));
    assert_eq!(again["layer"], "cloud");
    server.kill();
}

#[test]
fn exit_codes_separate_config_and_storage_failures() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"alpha": 2.0}"#).unwrap();
    let out = Command::new(BIN).args(["--config", bad.to_str().unwrap(), "check-config"]).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpha"));

    let out = Command::new(BIN)
        .arg("check-config")
        .env("FEEDWARDEN_CONFIG", dir.path().join("missing.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));

    let config = write_config(dir.path());
    let out = Command::new(BIN).args(["--config", config.to_str().unwrap(), "check-config"]).output().unwrap();
    assert!(out.status.success());
    let echoed: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(echoed["frozen_clock_ms"], START_MS);

    let wal = user_log_path(&dir.path().join("state"), "u1");
    std::fs::create_dir_all(wal.parent().unwrap()).unwrap();
    std::fs::write(&wal, "garbage\n{\"type\":\"state\"}\n").unwrap();
    let out = Command::new(BIN)
        .args(["--config", config.to_str().unwrap(), "serve", "--listen", &free_addr()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_STORAGE));
}
