#![allow(dead_code)]

use std::fs;
use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use feedwarden_core::ManualClock;
use feedwarden_service::config::ServiceConfig;
use feedwarden_service::{router, Service};

pub const START_MS: i64 = 1_700_000_000_000;

pub const ANIME_RULE: &str = "Block anime image-text content with obvious sexually suggestive tendencies";
pub const FLAME_RULE: &str = "Block gender antagonism or flame-war related speech";

/// Writes fixture files under `dir` and returns a config pointing at them.
pub fn fixture_config(dir: &Path) -> ServiceConfig {
    let fx = dir.join("fixtures");
    fs::create_dir_all(fx.join("captions")).unwrap();
    fs::write(
        fx.join("evidence.json"),
        json!({
            "img_anime_01": {
                "cognition": {"subjects": "anime girl", "appearance": "revealing outfit, suggestive pose"},
                "semantics": {"style": "anime illustration", "vibe": "suggestive"}
            },
            "img_kitchen": {
                "cognition": {"subjects": "a pot of soup"},
                "semantics": {"scene": "home kitchen", "category": "cooking"}
            }
        })
        .to_string(),
    )
    .unwrap();
    fs::write(
        fx.join("judge_script.json"),
        json!([
            {"token": "suggestive", "rule_id": "rule_anime"},
            {"token": "antagonism", "rule_id": "rule_flame"}
        ])
        .to_string(),
    )
    .unwrap();
    // captions drive the cross-modal fallback for images the vision stub
    // does not know
    fs::write(
        fx.join("captions/img_offline_anime.txt"),
        "anime content with obvious sexually suggestive tendencies",
    )
    .unwrap();
    fs::write(fx.join("captions/img_offline_cat.txt"), "sleeping cat sofa").unwrap();
    fs::write(
        fx.join("disputes.json"),
        json!([{
            "rule_id": "rule_flame",
            "keyword": "sarcasm",
            "proposal": {
                "kind": "modify_rule",
                "target_rule_id": "rule_flame",
                "payload": {"type": "exemption", "exemption": "unless the text exhibits a satirical tone"},
                "rationale": "The post mocks the antagonism it quotes."
            }
        }])
        .to_string(),
    )
    .unwrap();
    let mut config = ServiceConfig::default();
    config.fixtures.evidence = Some(fx.join("evidence.json"));
    config.fixtures.judge_script = Some(fx.join("judge_script.json"));
    config.fixtures.captions = Some(fx.join("captions"));
    config.fixtures.disputes = Some(fx.join("disputes.json"));
    config.storage.root = dir.join("state");
    config
}

pub fn open(config: ServiceConfig) -> Arc<Service> {
    Arc::new(Service::open_with_clock(config, Arc::new(ManualClock::new(START_MS))).unwrap())
}

pub async fn call(svc: &Arc<Service>, method: Method, uri: &str, user: Option<&str>, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(u) = user {
        req = req.header("x-user-id", u);
    }
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = router(svc.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| panic!("non-JSON body: {}", String::from_utf8_lossy(&bytes)))
    };
    (status, value)
}

pub fn anime_item() -> Value {
    json!({"id": "item_anime", "title": "New season art dump", "image_ref": "img_anime_01"})
}

pub fn flame_item() -> Value {
    json!({"id": "item_flame", "title": "Gender antagonism thread, round three"})
}

pub fn seed_rules() -> Vec<Value> {
    vec![
        json!({"id": "rule_anime", "description": ANIME_RULE, "weight": -0.8, "modality": "image_text",
               "core_entities": ["anime", "sexually suggestive"]}),
        json!({"id": "rule_flame", "description": FLAME_RULE, "weight": -0.8, "modality": "text",
               "core_entities": ["gender antagonism"]}),
    ]
}

pub async fn seed(svc: &Arc<Service>, user: &str) {
    for rule in seed_rules() {
        let (status, body) = call(svc, Method::POST, "/v1/rules", Some(user), Some(rule)).await;
        assert_eq!(status, StatusCode::CREATED, "{body}");
    }
}
