use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use fsg_cli::server::{router, AppState};
use fsg_core::{
    brute_force_marginals, Box3, Evidence, InferenceConfig, Observation, Pipeline, SceneGraph,
    SceneNode,
};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn scene() -> SceneGraph {
    let stove = SceneNode::object(
        "stove",
        "stove",
        Box3::new([0.0, 0.0, 0.0], [1.0, 0.6, 0.9]),
    );
    let cabinet = SceneNode::object(
        "cab",
        "cabinet",
        Box3::new([4.0, 0.0, 0.0], [5.0, 0.6, 0.9]),
    );
    let sid = stove.id.clone();
    let cid = cabinet.id.clone();
    let cube = |x: f64, y: f64, s: f64| Box3::from_center([x, y, 0.85], [s, s, s]);
    SceneGraph::new(vec![
        SceneNode::part("k0", "knob", &sid, cube(0.2, 0.05, 0.05)),
        SceneNode::part("k1", "knob", &sid, cube(0.7, 0.05, 0.05)),
        SceneNode::part("b0", "burner", &sid, cube(0.25, 0.3, 0.15)),
        SceneNode::part("b1", "burner", &sid, cube(0.75, 0.35, 0.15)),
        SceneNode::part("h0", "handle", &cid, cube(4.5, 0.05, 0.05)),
        SceneNode::part("h1", "handle", &cid, cube(4.2, 0.05, 0.05)),
        stove,
        cabinet,
    ])
    .unwrap()
}

fn proposals() -> Value {
    json!({
        "part_level": [
            { "object_id": "stove", "proposals": [
                { "first_item_name": "knob", "second_item_name": "burner", "interaction": "turns on",
                  "confidence": 0.9, "is_one_to_one": true } ] },
            { "object_id": "cab", "proposals": [
                { "first_item_name": "handle", "second_item_name": "cabinet", "interaction": "opens",
                  "confidence": 0.9, "is_one_to_one": true } ] }
        ],
        "object_level": { "proposals": [] }
    })
}

fn create_body() -> Value {
    json!({ "scene": scene(), "proposals": proposals() })
}

async fn call(
    app: &axum::Router,
    method: Method,
    uri: &str,
    body: Option<Value>,
) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json");
    let req = match body {
        Some(b) => req.body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, v)
}

fn app() -> axum::Router {
    router(Arc::new(AppState::new(None)))
}

async fn new_session(app: &axum::Router) -> (String, Value) {
    let (s, v) = call(app, Method::POST, "/v1/sessions", Some(create_body())).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    (v["id"].as_str().unwrap().to_string(), v["graph"].clone())
}

fn confidences(edges: &Value) -> Vec<(String, f64)> {
    edges
        .as_array()
        .unwrap()
        .iter()
        .map(|e| {
            (
                e["id"].as_str().unwrap().into(),
                e["confidence"].as_f64().unwrap(),
            )
        })
        .collect()
}

fn edge_between<'a>(graph: &'a Value, source: &str, target: &str) -> &'a Value {
    graph["edges"]
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e["source"] == source && e["target"] == target)
        .unwrap()
}

#[tokio::test]
async fn healthz_responds() {
    let app = app();
    assert_eq!(
        call(&app, Method::GET, "/healthz", None).await.0,
        StatusCode::OK
    );
    assert_eq!(
        call(&app, Method::GET, "/v1/healthz", None).await.0,
        StatusCode::OK
    );
}

#[tokio::test]
async fn evidence_lowers_competitors_to_oracle_values() {
    let app = app();
    let (id, graph) = new_session(&app).await;
    let e00 = edge_between(&graph, "k0", "b0")["id"]
        .as_str()
        .unwrap()
        .to_string();

    let (s, resp) = call(
        &app,
        Method::POST,
        &format!("/v1/sessions/{id}/evidence"),
        Some(json!({"edge": e00, "observed": true})),
    )
    .await;
    assert_eq!(s, StatusCode::OK, "{resp}");
    let after = confidences(&resp["edges"]);
    assert_eq!(after.len(), 4, "only the knob component is returned");

    let pipeline = Pipeline::new(
        scene(),
        serde_json::from_value::<fsg_core::ProposalFile>(proposals())
            .unwrap()
            .to_proposals()
            .unwrap(),
        InferenceConfig::default(),
    )
    .unwrap();
    let slot = pipeline.slot(&fsg_core::EdgeId(e00.clone())).unwrap();
    let comp = &pipeline.components[slot.component];
    let prior = brute_force_marginals(comp, &Evidence::new()).unwrap();
    let ev: Evidence = [(slot.var, Observation::ObservedTrue)]
        .into_iter()
        .collect();
    let post = brute_force_marginals(comp, &ev).unwrap();
    for v in &comp.variables {
        let got = after.iter().find(|(e, _)| *e == v.edge.0).unwrap().1;
        assert!((got - post.marginals[&v.id]).abs() < 1e-12);
    }
    for (src, dst) in [("k0", "b1"), ("k1", "b0")] {
        let e = edge_between(&graph, src, dst);
        let var = comp
            .variables
            .iter()
            .find(|v| v.edge.0 == e["id"].as_str().unwrap())
            .unwrap();
        let now = after.iter().find(|(x, _)| *x == var.edge.0).unwrap().1;
        assert!(
            now < prior.marginals[&var.id] - 1e-12,
            "competitor {src}->{dst} did not decrease"
        );
    }
}

#[tokio::test]
async fn other_components_are_untouched_and_retract_restores() {
    let app = app();
    let (id, before) = new_session(&app).await;
    let e00 = edge_between(&before, "k0", "b0")["id"]
        .as_str()
        .unwrap()
        .to_string();
    let handle = edge_between(&before, "h0", "cab").clone();

    call(
        &app,
        Method::POST,
        &format!("/v1/sessions/{id}/evidence"),
        Some(json!({"edge": e00, "observed": true})),
    )
    .await;
    let (_, mid) = call(&app, Method::GET, &format!("/v1/sessions/{id}/graph"), None).await;
    assert_eq!(
        edge_between(&mid, "h0", "cab").to_string(),
        handle.to_string()
    );
    assert_eq!(edge_between(&mid, "k0", "b0")["evidence"], json!(true));

    let (s, _) = call(
        &app,
        Method::DELETE,
        &format!("/v1/sessions/{id}/evidence/{e00}"),
        None,
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    let (_, after) = call(&app, Method::GET, &format!("/v1/sessions/{id}/graph"), None).await;
    for ((a, x), (b, y)) in confidences(&before["edges"])
        .into_iter()
        .zip(confidences(&after["edges"]))
    {
        assert_eq!(a, b);
        assert!((x - y).abs() < 1e-12);
    }
}

#[tokio::test]
async fn error_statuses() {
    let app = app();
    let (id, graph) = new_session(&app).await;
    let e00 = edge_between(&graph, "k0", "b0")["id"]
        .as_str()
        .unwrap()
        .to_string();
    let ev = format!("/v1/sessions/{id}/evidence");

    assert_eq!(
        call(&app, Method::GET, "/v1/sessions/nope/graph", None)
            .await
            .0,
        StatusCode::NOT_FOUND
    );
    assert_eq!(
        call(
            &app,
            Method::POST,
            &ev,
            Some(json!({"edge": "zz", "observed": true}))
        )
        .await
        .0,
        StatusCode::NOT_FOUND
    );
    assert_eq!(
        call(&app, Method::POST, &ev, Some(json!({"edge": e00})))
            .await
            .0,
        StatusCode::UNPROCESSABLE_ENTITY
    );
    assert_eq!(
        call(
            &app,
            Method::POST,
            "/v1/sessions",
            Some(json!({"scene": 3}))
        )
        .await
        .0,
        StatusCode::UNPROCESSABLE_ENTITY
    );
    assert_eq!(
        call(
            &app,
            Method::DELETE,
            &format!("/v1/sessions/{id}/evidence/{e00}"),
            None
        )
        .await
        .0,
        StatusCode::NOT_FOUND
    );

    assert_eq!(
        call(
            &app,
            Method::POST,
            &ev,
            Some(json!({"edge": e00, "observed": true}))
        )
        .await
        .0,
        StatusCode::OK
    );
    assert_eq!(
        call(
            &app,
            Method::POST,
            &ev,
            Some(json!({"edge": e00, "observed": true}))
        )
        .await
        .0,
        StatusCode::OK
    );
    assert_eq!(
        call(
            &app,
            Method::POST,
            &ev,
            Some(json!({"edge": e00, "observed": false}))
        )
        .await
        .0,
        StatusCode::CONFLICT
    );
}

#[tokio::test]
async fn suggest_ranks_by_entropy_and_skips_clamped() {
    let app = app();
    let (id, graph) = new_session(&app).await;
    let (s, v) = call(
        &app,
        Method::GET,
        &format!("/v1/sessions/{id}/suggest"),
        None,
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    let list = v["suggestions"].as_array().unwrap();
    assert_eq!(list.len(), graph["edges"].as_array().unwrap().len());
    let dist: Vec<f64> = list
        .iter()
        .map(|x| (x["confidence"].as_f64().unwrap() - 0.5).abs())
        .collect();
    assert!(dist.windows(2).all(|w| w[0] <= w[1] + 1e-15));

    let top = list[0]["id"].as_str().unwrap().to_string();
    call(
        &app,
        Method::POST,
        &format!("/v1/sessions/{id}/evidence"),
        Some(json!({"edge": top, "observed": false})),
    )
    .await;
    let (_, v) = call(
        &app,
        Method::GET,
        &format!("/v1/sessions/{id}/suggest?limit=2"),
        None,
    )
    .await;
    let list = v["suggestions"].as_array().unwrap();
    assert_eq!(list.len(), 2);
    assert!(list.iter().all(|x| x["id"] != top.as_str()));
}

#[tokio::test]
async fn snapshots_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let state = Arc::new(AppState::new(Some(dir.path().to_path_buf())));
    let app = router(state);
    let (id, graph) = new_session(&app).await;
    let e00 = edge_between(&graph, "k0", "b0")["id"]
        .as_str()
        .unwrap()
        .to_string();
    call(
        &app,
        Method::POST,
        &format!("/v1/sessions/{id}/evidence"),
        Some(json!({"edge": e00, "observed": true})),
    )
    .await;
    let (_, live) = call(&app, Method::GET, &format!("/v1/sessions/{id}/graph"), None).await;

    let restored = Arc::new(AppState::new(Some(dir.path().to_path_buf())));
    assert_eq!(restored.load_snapshots().unwrap(), 1);
    let (s, again) = call(
        &router(restored),
        Method::GET,
        &format!("/v1/sessions/{id}/graph"),
        None,
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(live, again);
}

#[tokio::test]
async fn sessions_are_independent_under_concurrency() {
    let app = app();
    let mut ids = Vec::new();
    for _ in 0..4 {
        ids.push(new_session(&app).await);
    }
    let baseline = confidences(&ids[0].1["edges"]);
    let tasks: Vec<_> = ids
        .iter()
        .enumerate()
        .map(|(i, (id, graph))| {
            let app = app.clone();
            let id = id.clone();
            let e = edge_between(graph, "k0", "b0")["id"]
                .as_str()
                .unwrap()
                .to_string();
            tokio::spawn(async move {
                if i % 2 == 0 {
                    call(
                        &app,
                        Method::POST,
                        &format!("/v1/sessions/{id}/evidence"),
                        Some(json!({"edge": e, "observed": true})),
                    )
                    .await;
                }
                call(&app, Method::GET, &format!("/v1/sessions/{id}/graph"), None)
                    .await
                    .1
            })
        })
        .collect();
    for (i, t) in tasks.into_iter().enumerate() {
        let g = t.await.unwrap();
        let c = confidences(&g["edges"]);
        if i % 2 == 1 {
            assert_eq!(c, baseline);
        } else {
            assert_ne!(c, baseline);
        }
    }
}
