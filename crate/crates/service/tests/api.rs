mod common;

use axum::http::{Method, StatusCode};
use serde_json::{json, Value};

use common::*;
use feedwarden_core::embedding::{cosine, TextEmbedder};
use feedwarden_core::graph::PageRankVector;
use feedwarden_core::telemetry::{governance_efficiency, EventLog};
use feedwarden_core::OfflineEmbedder;
use feedwarden_service::config::ServiceConfig;
use feedwarden_service::state::TELEMETRY_FILE;

#[tokio::test]
async fn adjudicate_blocks_on_cloud_layer_and_keeps_a_dossier() {
    let dir = tempfile::tempdir().unwrap();
    let svc = open(fixture_config(dir.path()));
    seed(&svc, "u1").await;

    let (status, adj) = call(&svc, Method::POST, "/v1/adjudicate", Some("u1"), Some(anime_item())).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(adj["y_block"], 1);
    assert_eq!(adj["layer"], "cloud");
    assert_eq!(adj["triggered_rule_id"], "rule_anime");
    assert_eq!(adj["star_count"], 0);

    let dossier_id = adj["dossier_id"].as_str().unwrap();
    let (status, dossier) = call(&svc, Method::GET, &format!("/v1/dossiers/{dossier_id}"), Some("u1"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(dossier["item"]["id"], "item_anime");
    assert_eq!(dossier["rule_versions"]["rule_anime"], 1);

    // another user has no rules and no access to the dossier
    let (_, adj) = call(&svc, Method::POST, "/v1/adjudicate", Some("u2"), Some(anime_item())).await;
    assert_eq!(adj["y_block"], 0);
    assert_eq!(adj["layer"], "pass");
    let (status, _) = call(&svc, Method::GET, &format!("/v1/dossiers/{dossier_id}"), Some("u2"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn batch_preserves_order() {
    let dir = tempfile::tempdir().unwrap();
    let svc = open(fixture_config(dir.path()));
    seed(&svc, "u1").await;
    let items = json!({"items": [
        anime_item(),
        {"id": "item_soup", "title": "Weeknight soup", "image_ref": "img_kitchen"},
        flame_item(),
    ]});
    let (status, out) = call(&svc, Method::POST, "/v1/adjudicate/batch", Some("u1"), Some(items)).await;
    assert_eq!(status, StatusCode::OK);
    let blocks: Vec<i64> = out.as_array().unwrap().iter().map(|a| a["y_block"].as_i64().unwrap()).collect();
    assert_eq!(blocks, vec![1, 0, 1]);
    assert_eq!(out[2]["item_id"], "item_flame");
}

#[tokio::test]
async fn slider_is_idempotent_and_session_advance_decays() {
    let dir = tempfile::tempdir().unwrap();
    let svc = open(fixture_config(dir.path()));
    let (status, first) = call(
        &svc,
        Method::PATCH,
        "/v1/profile/tags/cooking",
        Some("u1"),
        Some(json!({"slider": 0.8})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let node = &first["tags"][0];
    assert_eq!(node["tag"], "cooking");
    assert_eq!(node["final_importance"], 0.8);

    let (_, second) = call(&svc, Method::PATCH, "/v1/profile/tags/cooking", Some("u1"), Some(json!({"slider": 0.8}))).await;
    assert_eq!(first, second);

    let (_, decayed) = call(&svc, Method::POST, "/v1/session/advance", Some("u1"), None).await;
    let delta = decayed["tags"][0]["delta"].as_f64().unwrap();
    assert_eq!(delta, 0.8 * 0.65);
    assert_eq!(decayed["session"], 1);

    let (status, err) = call(&svc, Method::PATCH, "/v1/profile/tags/cooking", Some("u1"), Some(json!({"slider": 1.2}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["code"], "invalid_request");
}

#[tokio::test]
async fn interactions_set_base_importance() {
    let dir = tempfile::tempdir().unwrap();
    let svc = open(fixture_config(dir.path()));
    for (tag, ts) in [("cooking", 1), ("cooking", 2), ("hiking", 3)] {
        let body = json!({"tag": tag, "kind": "click", "timestamp": START_MS + ts});
        let (status, _) = call(&svc, Method::POST, "/v1/profile/interactions", Some("u1"), Some(body)).await;
        assert_eq!(status, StatusCode::OK);
    }
    let (_, profile) = call(&svc, Method::GET, "/v1/profile", Some("u1"), None).await;
    let bases: Vec<(String, f64)> = profile["tags"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| (t["tag"].as_str().unwrap().to_string(), t["base_importance"].as_f64().unwrap()))
        .collect();
    assert_eq!(bases, vec![("cooking".into(), 1.0), ("hiking".into(), 0.5)]);
}

#[tokio::test]
async fn rule_crud_versions_and_idempotent_patch() {
    let dir = tempfile::tempdir().unwrap();
    let svc = open(fixture_config(dir.path()));
    seed(&svc, "u1").await;

    let (status, dup) = call(&svc, Method::POST, "/v1/rules", Some("u1"), Some(seed_rules()[0].clone())).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(dup["code"], "conflict");

    let patch = json!({"weight": -0.6});
    let (_, v2) = call(&svc, Method::PATCH, "/v1/rules/rule_anime", Some("u1"), Some(patch.clone())).await;
    assert_eq!(v2["version"], 2);
    assert_eq!(v2["parent_version"], 1);
    let (_, again) = call(&svc, Method::PATCH, "/v1/rules/rule_anime", Some("u1"), Some(patch)).await;
    assert_eq!(again, v2);

    let (_, history) = call(&svc, Method::GET, "/v1/rules/rule_anime", Some("u1"), None).await;
    assert_eq!(history["versions"].as_array().unwrap().len(), 2);

    let (status, deleted) = call(&svc, Method::DELETE, "/v1/rules/rule_anime", Some("u1"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(deleted["active"], false);
    assert_eq!(deleted["version"], 3);

    let (_, adj) = call(&svc, Method::POST, "/v1/adjudicate", Some("u1"), Some(anime_item())).await;
    assert_eq!(adj["y_block"], 0, "inactive rules never fire");

    let (status, err) = call(&svc, Method::GET, "/v1/rules/rule_nope", Some("u1"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(err["code"], "not_found");

    let (status, err) = call(
        &svc,
        Method::POST,
        "/v1/rules",
        Some("u1"),
        Some(json!({"description": "x", "weight": 1.5, "modality": "text"})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(err["message"].as_str().unwrap().contains("outside"));
}

#[tokio::test]
async fn errors_use_the_envelope() {
    let dir = tempfile::tempdir().unwrap();
    let svc = open(fixture_config(dir.path()));
    let cases: Vec<(Method, &str, Option<&str>, Option<Value>, StatusCode)> = vec![
        (Method::POST, "/v1/adjudicate", Some("u1"), Some(json!({"id": "x"})), StatusCode::BAD_REQUEST),
        (Method::POST, "/v1/adjudicate", Some("u1"), Some(json!([1, 2])), StatusCode::BAD_REQUEST),
        (Method::GET, "/v1/profile", Some("../etc"), None, StatusCode::BAD_REQUEST),
        (Method::GET, "/v1/nowhere", None, None, StatusCode::NOT_FOUND),
        (Method::DELETE, "/v1/profile", None, None, StatusCode::METHOD_NOT_ALLOWED),
        (Method::PATCH, "/v1/rules/r", Some("u1"), Some(json!({"colour": 1})), StatusCode::BAD_REQUEST),
        (Method::GET, "/v1/telemetry/layers?scope=galaxy", None, None, StatusCode::BAD_REQUEST),
    ];
    for (method, uri, user, body, expected) in cases {
        let (status, err) = call(&svc, method.clone(), uri, user, body).await;
        assert_eq!(status, expected, "{method} {uri}: {err}");
        assert!(err["code"].is_string() && err["message"].is_string(), "{err}");
        assert_eq!(err.as_object().unwrap().len(), 2);
    }
}

#[tokio::test]
async fn intent_proposal_confirm_and_reject() {
    let dir = tempfile::tempdir().unwrap();
    let svc = open(fixture_config(dir.path()));
    let (status, p) = call(
        &svc,
        Method::POST,
        "/v1/intent",
        Some("u1"),
        Some(json!({"utterance": "I am sick of appearance anxiety posts"})),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(p["status"], "pending");
    let id = p["proposal_id"].as_str().unwrap().to_string();

    let (_, pending) = call(&svc, Method::GET, "/v1/proposals", Some("u1"), None).await;
    assert_eq!(pending.as_array().unwrap().len(), 1);

    let (status, rule) = call(
        &svc,
        Method::POST,
        &format!("/v1/proposals/{id}/confirm"),
        Some("u1"),
        Some(json!({"weight": -0.9})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(rule["weight"], -0.9);
    assert_eq!(rule["description"], "Reject appearance anxiety and body involution");

    let (status, err) = call(&svc, Method::POST, &format!("/v1/proposals/{id}/confirm"), Some("u1"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["code"], "stale_proposal");

    let (_, p2) = call(&svc, Method::POST, "/v1/intent", Some("u1"), Some(json!({"utterance": "stop the flame war"}))).await;
    let id2 = p2["proposal_id"].as_str().unwrap();
    let (status, rejected) = call(&svc, Method::POST, &format!("/v1/proposals/{id2}/reject"), Some("u1"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(rejected["status"], "rejected");
    let (_, rules) = call(&svc, Method::GET, "/v1/rules", Some("u1"), None).await;
    assert_eq!(rules.as_array().unwrap().len(), 1, "rejecting never adds a rule");

    let (status, err) = call(&svc, Method::POST, "/v1/intent", Some("u1"), Some(json!({"utterance": "  "}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{err}");
    let (status, err) = call(&svc, Method::POST, "/v1/intent", Some("u1"), Some(json!({"utterance": "gardening"}))).await;
    assert_eq!(status, StatusCode::BAD_GATEWAY);
    assert_eq!(err["code"], "backend_failure");
}

#[tokio::test]
async fn appeal_accept_bumps_rule_and_unblocks_item() {
    let dir = tempfile::tempdir().unwrap();
    let svc = open(fixture_config(dir.path()));
    seed(&svc, "u1").await;
    let (_, adj) = call(&svc, Method::POST, "/v1/adjudicate", Some("u1"), Some(flame_item())).await;
    assert_eq!(adj["y_block"], 1);
    let dossier_id = adj["dossier_id"].as_str().unwrap();

    let (status, appeal) = call(
        &svc,
        Method::POST,
        "/v1/appeals",
        Some("u1"),
        Some(json!({"dossier_id": dossier_id, "user_message": "This is sarcasm, it mocks the fight"})),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(appeal["deferred"], false);
    assert_eq!(appeal["resulting_proposal"]["kind"], "modify_rule");
    let appeal_id = appeal["appeal_id"].as_str().unwrap();

    let (status, _) = call(
        &svc,
        Method::POST,
        "/v1/appeals",
        Some("u1"),
        Some(json!({"dossier_id": dossier_id, "user_message": "again"})),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);

    let (status, resolved) = call(
        &svc,
        Method::POST,
        &format!("/v1/appeals/{appeal_id}/resolve"),
        Some("u1"),
        Some(json!({"decision": "accept_unblock"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{resolved}");
    assert_eq!(resolved["appeal"]["outcome"], "passed");
    assert_eq!(resolved["rule"]["version"], 2);
    assert_eq!(
        resolved["rule"]["exemptions"],
        json!(["unless the text exhibits a satirical tone"])
    );

    let (_, again) = call(&svc, Method::POST, "/v1/adjudicate", Some("u1"), Some(flame_item())).await;
    assert_eq!(again["y_block"], 0);
    assert_eq!(again["layer"], "pass");

    let (_, layers) = call(&svc, Method::GET, "/v1/telemetry/layers", Some("u1"), None).await;
    let cloud = &layers["rows"][0];
    assert_eq!(cloud["layer"], "cloud");
    assert_eq!(cloud["orig_blocks"], 1);
    assert_eq!(cloud["appeals"], 1);
    assert_eq!(cloud["final_blocks"], 0);

    let (status, _) = call(
        &svc,
        Method::POST,
        &format!("/v1/appeals/{appeal_id}/resolve"),
        Some("u1"),
        Some(json!({"decision": "uphold"})),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn appeal_without_script_is_deferred_and_pass_cannot_be_appealed() {
    let dir = tempfile::tempdir().unwrap();
    let svc = open(fixture_config(dir.path()));
    seed(&svc, "u1").await;
    let (_, adj) = call(&svc, Method::POST, "/v1/adjudicate", Some("u1"), Some(anime_item())).await;
    let dossier_id = adj["dossier_id"].as_str().unwrap();
    let (status, appeal) = call(
        &svc,
        Method::POST,
        "/v1/appeals",
        Some("u1"),
        Some(json!({"dossier_id": dossier_id, "user_message": "it is a museum piece"})),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(appeal["deferred"], true);
    assert!(appeal["resulting_proposal"].is_null());

    let (status, resolved) = call(
        &svc,
        Method::POST,
        &format!("/v1/appeals/{}/resolve", appeal["appeal_id"].as_str().unwrap()),
        Some("u1"),
        Some(json!({"decision": "uphold"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(resolved["appeal"]["outcome"], "upheld");
    assert!(resolved["rule"].is_null());

    let mut config = fixture_config(dir.path());
    config.audit_all = true;
    config.storage.root = dir.path().join("audit");
    let audit = open(config);
    let (_, pass) = call(
        &audit,
        Method::POST,
        "/v1/adjudicate",
        Some("u1"),
        Some(json!({"id": "item_soup", "title": "Weeknight soup"})),
    )
    .await;
    let dossier_id = pass["dossier_id"].as_str().expect("audit_all keeps pass dossiers");
    let (status, err) = call(
        &audit,
        Method::POST,
        "/v1/appeals",
        Some("u1"),
        Some(json!({"dossier_id": dossier_id, "user_message": "?"})),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["code"], "not_a_block");
}

async fn event_count(svc: &std::sync::Arc<feedwarden_service::Service>) -> usize {
    svc.telemetry().len()
}

#[tokio::test]
async fn every_mutating_endpoint_emits_exactly_one_event() {
    let dir = tempfile::tempdir().unwrap();
    let svc = open(fixture_config(dir.path()));
    seed(&svc, "u1").await;
    let (_, adj) = call(&svc, Method::POST, "/v1/adjudicate", Some("u1"), Some(flame_item())).await;
    let dossier_id = adj["dossier_id"].as_str().unwrap().to_string();
    let (_, p) = call(&svc, Method::POST, "/v1/intent", Some("u1"), Some(json!({"utterance": "no more tutorial spam"}))).await;
    let prop = p["proposal_id"].as_str().unwrap().to_string();
    let (_, p2) = call(&svc, Method::POST, "/v1/intent", Some("u1"), Some(json!({"utterance": "appearance anxiety"}))).await;
    let prop2 = p2["proposal_id"].as_str().unwrap().to_string();

    let steps: Vec<(Method, String, Option<Value>, &str)> = vec![
        (Method::POST, "/v1/rules".into(), Some(json!({"description": "Allow cooking videos", "weight": 0.5, "modality": "text"})), "manual_event"),
        (Method::POST, "/v1/rules".into(), Some(json!({"description": "Block crypto shilling", "weight": -0.5, "modality": "text"})), "manual_filter_add"),
        (Method::PATCH, "/v1/rules/rule_flame".into(), Some(json!({"weight": -0.75})), "manual_event"),
        (Method::PATCH, "/v1/rules/rule_flame".into(), Some(json!({"weight": -0.75})), "manual_event"),
        (Method::DELETE, "/v1/rules/rule_anime".into(), None, "manual_event"),
        (Method::POST, "/v1/intent".into(), Some(json!({"utterance": "flame war again"})), "manual_event"),
        (Method::POST, format!("/v1/proposals/{prop}/confirm"), None, "manual_event"),
        (Method::POST, format!("/v1/proposals/{prop2}/confirm"), None, "manual_filter_add"),
        (Method::PATCH, "/v1/profile/tags/cooking".into(), Some(json!({"slider": 0.7})), "manual_event"),
        (Method::POST, "/v1/profile/interactions".into(), Some(json!({"tag": "cooking", "kind": "click"})), "manual_event"),
        (Method::POST, "/v1/session/advance".into(), None, "manual_event"),
        (Method::POST, "/v1/appeals".into(), Some(json!({"dossier_id": dossier_id, "user_message": "sarcasm"})), "manual_event"),
        (Method::POST, "/v1/appeals/apl_000001/resolve".into(), Some(json!({"decision": "accept_unblock", "apply_proposal": false})), "appeal_passed"),
    ];
    for (method, uri, body, kind) in steps {
        let before = event_count(&svc).await;
        let (status, out) = call(&svc, method.clone(), &uri, Some("u1"), body).await;
        assert!(status.is_success(), "{method} {uri}: {out}");
        assert_eq!(event_count(&svc).await, before + 1, "{method} {uri}");
        let last = svc.telemetry().snapshot().pop().unwrap();
        assert_eq!(serde_json::to_value(last.kind).unwrap(), kind, "{method} {uri}");
    }

    // reads emit nothing
    let before = event_count(&svc).await;
    for uri in ["/v1/rules", "/v1/profile", "/v1/graph", "/v1/telemetry/summary", "/v1/config", "/v1/proposals"] {
        call(&svc, Method::GET, uri, Some("u1"), None).await;
    }
    assert_eq!(event_count(&svc).await, before);
}

#[tokio::test]
async fn telemetry_log_replay_reproduces_governance() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture_config(dir.path());
    let root = config.storage.root.clone();
    let svc = open(config);
    seed(&svc, "u1").await;
    for i in 0..5 {
        let item = json!({"id": format!("f{i}"), "title": "gender antagonism everywhere"});
        call(&svc, Method::POST, "/v1/adjudicate", Some("u1"), Some(item)).await;
        call(&svc, Method::PATCH, "/v1/profile/tags/cats", Some("u1"), Some(json!({"slider": 0.1 * i as f64}))).await;
    }
    let (_, served) = call(&svc, Method::GET, "/v1/telemetry/governance?days=7", Some("u1"), None).await;
    let replayed = EventLog::open(&root.join(TELEMETRY_FILE)).unwrap().snapshot();
    let recomputed = serde_json::to_value(governance_efficiency(&replayed, 7)).unwrap();
    assert_eq!(served, recomputed);
    assert_eq!(replayed, svc.telemetry().snapshot());

    let (status, longtail) = call(&svc, Method::GET, "/v1/telemetry/longtail?top=3&tail_threshold=2", Some("u1"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(longtail["top"][0]["rule_id"], "rule_flame");
    assert_eq!(longtail["top"][0]["triggers"], 5);
    let (_, summary) = call(&svc, Method::GET, "/v1/telemetry/summary?scope=all", None, None).await;
    assert_eq!(summary["events"].as_u64().unwrap() as usize, svc.telemetry().len());
}

#[tokio::test]
async fn config_echo_and_tau_override_reach_the_fallback() {
    // img_offline_cat is unknown to the vision stub, so the cross-modal
    // fallback decides on caption similarity alone
    let rule = "cat videos loud music";
    let embedder = OfflineEmbedder::default();
    let sim = cosine(
        &embedder.embed_text("sleeping cat sofa").unwrap(),
        &embedder.embed_text(rule).unwrap(),
    )
    .unwrap()
    .value();
    assert!((0.25..0.30).contains(&sim), "fixture similarity {sim}");

    let item = json!({"id": "item_cat", "title": "nap time", "image_ref": "img_offline_cat"});
    let rule_body = json!({"id": "rule_cat", "description": rule, "weight": -0.5, "modality": "image"});
    let mut outcomes = Vec::new();
    for tau in [0.30, 0.25] {
        let dir = tempfile::tempdir().unwrap();
        let mut config: ServiceConfig = fixture_config(dir.path());
        config.tau_clip = tau;
        let svc = open(config.clone());
        let (_, echo) = call(&svc, Method::GET, "/v1/config", None, None).await;
        assert_eq!(echo, serde_json::to_value(&config).unwrap());
        call(&svc, Method::POST, "/v1/rules", None, Some(rule_body.clone())).await;
        let (_, adj) = call(&svc, Method::POST, "/v1/adjudicate", None, Some(item.clone())).await;
        outcomes.push((adj["y_block"].as_i64().unwrap(), adj["layer"].as_str().unwrap().to_string()));
    }
    assert_eq!(outcomes, vec![(0, "pass".to_string()), (1, "clip_fallback".to_string())]);
}

#[tokio::test]
async fn graph_endpoint_reports_edges_and_ranks() {
    let dir = tempfile::tempdir().unwrap();
    let svc = open(fixture_config(dir.path()));
    let (_, empty) = call(&svc, Method::GET, "/v1/graph", Some("u1"), None).await;
    assert_eq!(empty["nodes"], json!([]));
    for (id, d, w) in [
        ("rule_a", "block loud anime fan edits", -0.8),
        ("rule_b", "block loud anime fan edits and remixes", -0.4),
        ("rule_c", "allow chess puzzles", 0.6),
    ] {
        let body = json!({"id": id, "description": d, "weight": w, "modality": "text"});
        call(&svc, Method::POST, "/v1/rules", Some("u1"), Some(body)).await;
    }
    let (_, g) = call(&svc, Method::GET, "/v1/graph", Some("u1"), None).await;
    assert_eq!(g["nodes"], json!(["rule_a", "rule_b", "rule_c"]));
    assert_eq!(g["edges"].as_array().unwrap().len(), 1);
    let pr: PageRankVector = PageRankVector {
        scores: serde_json::from_value(g["pr"].clone()).unwrap(),
        iterations: 0,
        residual: 0.0,
        converged: true,
    };
    assert!((pr.total() - 1.0).abs() < 1e-9);
    // the isolated allow rule is dangling: x = (1-a)p + a*x*p
    let (alpha, p) = (0.85, 0.6 / (0.8 + 0.4 + 0.6));
    let expected = (1.0 - alpha) * p / (1.0 - alpha * p);
    assert!((pr.get("rule_c").unwrap() - expected).abs() < 1e-9);
}
