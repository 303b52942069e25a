use std::sync::Arc;

use amazons_cli::server::{router, AppState};
use amazons_core::neuralkit::{GatArch, ModelBundle};
use amazons_core::{BoardState, GameStatus, Move};
use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn app() -> Router {
    router(Arc::new(AppState::new(ModelBundle::zeros(GatArch::default()))))
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or(Body::empty(), |b| Body::from(b.to_string())))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn create(app: &Router, body: Value) -> String {
    let (status, game) = call(app, Method::POST, "/games", Some(body)).await;
    assert_eq!(status, StatusCode::CREATED, "{game}");
    game["id"].as_str().unwrap().to_owned()
}

#[tokio::test]
async fn create_then_fetch_round_trips() {
    let app = app();
    let (status, created) = call(&app, Method::POST, "/games", None).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(created["engine"], "hybrid");
    assert_eq!(created["budget"], 20);
    assert_eq!(created["state"]["legal_moves"].as_array().unwrap().len(), 2176);
    assert_eq!(created["state"]["grid"].as_array().unwrap().len(), 10);
    let id = created["id"].as_str().unwrap();
    let (status, fetched) = call(&app, Method::GET, &format!("/games/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(fetched, created);
}

#[tokio::test]
async fn illegal_move_is_rejected_and_state_kept() {
    let app = app();
    let id = create(&app, json!({"engine": "random"})).await;
    let (_, before) = call(&app, Method::GET, &format!("/games/{id}"), None).await;
    let bad = json!({"from": {"file": 3, "rank": 0}, "to": {"file": 3, "rank": 9}, "arrow": {"file": 3, "rank": 8}});
    let (status, err) = call(&app, Method::POST, &format!("/games/{id}/move"), Some(bad)).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["code"], "illegal_move");
    let (_, after) = call(&app, Method::GET, &format!("/games/{id}"), None).await;
    assert_eq!(before, after);
}

#[tokio::test]
async fn turn_order_is_enforced() {
    let app = app();
    let id = create(&app, json!({"engine": "random", "human_color": "black"})).await;
    let mv = json!({"from": {"file": 3, "rank": 9}, "to": {"file": 3, "rank": 5}, "arrow": {"file": 3, "rank": 6}});
    let (status, err) = call(&app, Method::POST, &format!("/games/{id}/move"), Some(mv)).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["code"], "not_your_turn");
    let (status, game) = call(&app, Method::POST, &format!("/games/{id}/engine-move"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(game["history"][0]["by"], "engine");
    let (status, err) = call(&app, Method::POST, &format!("/games/{id}/engine-move"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["code"], "not_engine_turn");
}

#[tokio::test]
async fn finished_game_refuses_engine_moves() {
    let app = app();
    let id = create(&app, json!({"engine": "random", "seed": 5})).await;
    let mut game = call(&app, Method::GET, &format!("/games/{id}"), None).await.1;
    while game["status"] == "ongoing" {
        let uri = if game["state"]["side_to_move"] == "white" {
            let mv = game["state"]["legal_moves"][0].clone();
            call(&app, Method::POST, &format!("/games/{id}/move"), Some(mv)).await
        } else {
            call(&app, Method::POST, &format!("/games/{id}/engine-move"), None).await
        };
        assert_eq!(uri.0, StatusCode::OK, "{}", uri.1);
        game = uri.1;
    }
    assert!(game["state"]["legal_moves"].as_array().unwrap().is_empty());
    let mut replay = BoardState::initial();
    for entry in game["history"].as_array().unwrap() {
        let mv: Move = serde_json::from_value(entry["move"].clone()).unwrap();
        replay = replay.apply_move(&mv).unwrap();
    }
    let grid: Vec<String> = replay.encode_grid().lines().map(str::to_owned).collect();
    assert_eq!(game["state"]["grid"], json!(grid));
    assert_ne!(replay.status(), GameStatus::Ongoing);
    let (status, err) = call(&app, Method::POST, &format!("/games/{id}/engine-move"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["code"], "game_over");
}

#[tokio::test]
async fn errors_have_codes() {
    let app = app();
    let (status, err) = call(&app, Method::GET, "/games/g999", None).await;
    assert_eq!((status, err["code"].as_str()), (StatusCode::NOT_FOUND, Some("unknown_game")));
    for body in [json!({"budget": 0}), json!({"budget": 501}), json!({"engine": "llm"}), json!({"colour": "white"}), json!({"engine": "deep-blue"})] {
        let (status, err) = call(&app, Method::POST, "/games", Some(body.clone())).await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{body}");
        assert_eq!(err["code"], "malformed_body");
    }
    let id = create(&app, json!({})).await;
    let off = json!({"from": {"file": 3, "rank": 0}, "to": {"file": 3, "rank": 12}, "arrow": {"file": 3, "rank": 8}});
    let (status, _) = call(&app, Method::POST, &format!("/games/{id}/move"), Some(off)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, err) = call(&app, Method::GET, &format!("/games/{id}/analysis"), None).await;
    assert_eq!((status, err["code"].as_str()), (StatusCode::NOT_FOUND, Some("no_analysis")));
}

#[tokio::test]
async fn hybrid_engine_move_exposes_its_tree() {
    let app = app();
    let id = create(&app, json!({"human_color": "black", "budget": 8, "seed": 3})).await;
    let (status, game) = call(&app, Method::POST, &format!("/games/{id}/engine-move"), None).await;
    assert_eq!(status, StatusCode::OK, "{game}");
    let (status, analysis) = call(&app, Method::GET, &format!("/games/{id}/analysis"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(analysis["ply"], 0);
    assert_eq!(game["decision"]["move"], analysis["decision"]["chosen"]);
    let nodes = analysis["nodes"].as_array().unwrap();
    assert!(nodes.len() > 4);
    assert!(nodes.iter().all(|n| n["visits"].is_number() && n.get("gat_score").is_some()));
}

#[tokio::test]
async fn journal_replays_sessions() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("journal.ndjson");
    let first = router(Arc::new(AppState::with_journal(ModelBundle::zeros(GatArch::default()), &path).unwrap()));
    let id = create(&first, json!({"engine": "random", "seed": 9})).await;
    let mv = json!({"from": {"file": 3, "rank": 0}, "to": {"file": 3, "rank": 6}, "arrow": {"file": 6, "rank": 6}});
    assert_eq!(call(&first, Method::POST, &format!("/games/{id}/move"), Some(mv)).await.0, StatusCode::OK);
    assert_eq!(call(&first, Method::POST, &format!("/games/{id}/engine-move"), None).await.0, StatusCode::OK);
    let before = call(&first, Method::GET, &format!("/games/{id}"), None).await.1;
    drop(first);

    let second = router(Arc::new(AppState::with_journal(ModelBundle::zeros(GatArch::default()), &path).unwrap()));
    let after = call(&second, Method::GET, &format!("/games/{id}"), None).await.1;
    assert_eq!(before, after);
    let fresh = create(&second, json!({})).await;
    assert_ne!(fresh, id);
}
