use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use logq_cluster::{CoordinatorClient, CoordinatorConfig, LocalCluster};
use logq_core::catalog::StorageMode;
use logq_core::engine::EngineOptions;
use logq_service::{
    router, ClusterBackend, EmbeddedBackend, QueryResponse, QueryService, RemoteBackend,
    ServiceConfig, StatusDocument, TemplateList, TEMPLATES,
};
use serde_json::{json, Value};
use tower::ServiceExt;

const FILES: usize = 40;
const MSGS: usize = 900;

/// tMsg row i points at file (i*7) % FILES; files 30.. are absent from
/// tFile so some messages have no partner.
fn write_data(dir: &Path) {
    let mut tfile = String::from("Filepath,Phone,Carrier,Timestamp\n");
    for i in 0..30 {
        tfile.push_str(&format!(
            "/data/f{i:04}.mi2log,LGE-VS985,Verizon,2015-12-19 16:{:02}:00\n",
            i % 60
        ));
    }
    let mut tmsg = String::from("Filepath,Timestamp,MsgType,MsgHash,MsgPath,LineNo\n");
    for i in 0..MSGS {
        let f = (i * 7) % FILES;
        tmsg.push_str(&format!(
            "/data/f{f:04}.mi2log,2015-12-19 16:42:{:02},LTE_RRC_OTA_Packet,{i:08x},/m/{},{i}\n",
            i % 60,
            i % 3
        ));
    }
    std::fs::write(dir.join("tFile.csv"), tfile).unwrap();
    std::fs::write(dir.join("tMsg.csv"), tmsg).unwrap();
}

fn expected_join_count() -> u64 {
    (0..MSGS).filter(|i| (i * 7) % FILES < 30).count() as u64
}

fn embedded(dir: &Path, cache: bool) -> Arc<QueryService> {
    let backend = EmbeddedBackend::open(dir, 4096, cache, EngineOptions::default()).unwrap();
    Arc::new(QueryService::new(
        Arc::new(backend),
        ServiceConfig::default(),
    ))
}

async fn call(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let body = resp
        .into_body()
        .collect()
        .await
        .unwrap()
        .to_bytes()
        .to_vec();
    (status, body)
}

async fn post_query(app: &Router, body: Value) -> (StatusCode, QueryResponse) {
    let req = Request::post("/query")
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let (status, bytes) = call(app, req).await;
    (status, serde_json::from_slice(&bytes).unwrap())
}

async fn get(app: &Router, path: &str) -> (StatusCode, Vec<u8>) {
    call(app, Request::get(path).body(Body::empty()).unwrap()).await
}

#[tokio::test]
async fn figure_examples() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path());
    let app = router(embedded(dir.path(), true));

    let (status, resp) = post_query(&app, json!({"sql": "SELECT * FROM tMsg LIMIT 10;"})).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(resp.rows.as_ref().unwrap().len(), 10);
    assert_eq!(resp.columns.as_ref().unwrap().len(), 6);
    assert!(resp.error.is_none());
    assert_eq!(resp.mode.as_deref(), Some("cached-single"));

    let (status, resp) = post_query(&app, json!({"sql": "INSERT INTO tFile VALUES('x')"})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(resp.error.unwrap().code.as_str(), "NON_QUERY");
    assert!(resp.rows.is_none());

    let (status, resp) = post_query(&app, json!({"sql": "SELECT Phone FROM tMsg"})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(resp.error.unwrap().code.as_str(), "UNKNOWN_COLUMN");

    let sql = "select count(*) from tMsg join tFile on tMsg.Filepath = tFile.Filepath";
    let (status, resp) = post_query(&app, json!({"sql": sql, "mode": "DiskStream"})).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(
        resp.rows.unwrap(),
        vec![vec![expected_join_count().to_string()]]
    );
    assert_eq!(resp.mode.as_deref(), Some("disk-single"));
}

#[tokio::test]
async fn request_errors() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path());
    let service = embedded(dir.path(), false);
    let app = router(service.clone());

    let long = format!(
        "SELECT * FROM tMsg WHERE MsgType = '{}'",
        "x".repeat(70_000)
    );
    let (status, resp) = post_query(&app, json!({ "sql": long })).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(resp.error.unwrap().code.as_str(), "QUERY_TOO_LONG");

    let req = Request::post("/query")
        .header("content-type", "application/json")
        .body(Body::from("{not json"))
        .unwrap();
    let (status, bytes) = call(&app, req).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let resp: QueryResponse = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(resp.error.unwrap().code.as_str(), "PROTOCOL");

    let (status, resp) =
        post_query(&app, json!({"sql": "SELECT * FROM tMsg", "mode": "tape"})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(resp.error.is_some());

    let (status, resp) = post_query(&app, json!({"sql": "SELECT 1 FROM"})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let err = resp.error.unwrap();
    assert_eq!(err.code.as_str(), "SYNTAX");
    assert!(err.position.is_some());
    assert_eq!(service.dispatch_count(), 0);
}

#[tokio::test]
async fn templates_in_order_and_resolvable() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path());
    let service = embedded(dir.path(), true);
    let app = router(service.clone());
    let (status, bytes) = get(&app, "/templates").await;
    assert_eq!(status, StatusCode::OK);
    let list: TemplateList = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(list.templates.len(), 7);
    assert_eq!(list.templates[0], "SELECT * FROM tFile;");
    assert_eq!(
        list.templates[6],
        "SELECT Phone, Carrier FROM tFile LIMIT 10;"
    );
    assert_eq!(list.templates, TEMPLATES.to_vec());
    for t in &list.templates {
        service.validate(t).await.unwrap();
        let (status, _) = post_query(&app, json!({ "sql": t })).await;
        assert_eq!(status, StatusCode::OK, "{t}");
    }
}

#[tokio::test]
async fn healthz_and_embedded_status() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path());
    let app = router(embedded(dir.path(), true));
    let (status, body) = get(&app, "/healthz").await;
    assert_eq!((status, body.as_slice()), (StatusCode::OK, &b"ok"[..]));
    let (status, body) = get(&app, "/status").await;
    assert_eq!(status, StatusCode::OK);
    let doc: StatusDocument = serde_json::from_slice(&body).unwrap();
    assert_eq!(doc.cached_tables, vec!["tFile", "tMsg"]);
    assert_eq!(doc.status.alive_workers, 1);
    let tmsg = doc.status.tables.iter().find(|t| t.name == "tMsg").unwrap();
    assert_eq!(tmsg.rows, MSGS as u64);
}

fn cluster_config(dir: &Path) -> CoordinatorConfig {
    CoordinatorConfig {
        data_root: dir.to_path_buf(),
        partition_bytes: 4096,
        heartbeat_interval: Duration::from_millis(200),
        query_timeout: Duration::from_secs(20),
        ..CoordinatorConfig::default()
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn injection_corpus_never_dispatched() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path());
    let cluster = LocalCluster::start(cluster_config(dir.path()), 2, 1)
        .await
        .unwrap();
    cluster
        .load(&[("tFile", "tFile.csv"), ("tMsg", "tMsg.csv")], true)
        .await
        .unwrap();
    let service = Arc::new(QueryService::new(
        Arc::new(ClusterBackend::new(cluster.coordinator.clone())),
        ServiceConfig::default(),
    ));
    let app = router(service.clone());
    let corpus = logq_testkit::injection_corpus();
    assert!(corpus.len() >= 50);
    for sql in &corpus {
        let (status, resp) = post_query(&app, json!({ "sql": sql })).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{sql:?}");
        assert!(resp.error.is_some() && resp.rows.is_none(), "{sql:?}");
    }
    assert_eq!(service.dispatch_count(), 0);
    assert_eq!(cluster.coordinator.dispatch_count(), 0);

    // A valid query does reach the workers.
    let (status, _) = post_query(&app, json!({"sql": "SELECT * FROM tMsg LIMIT 10;"})).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(service.dispatch_count(), 1);
    assert!(cluster.coordinator.dispatch_count() > 0);
    cluster.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn response_matches_cluster_result() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path());
    let cluster = LocalCluster::start(cluster_config(dir.path()), 2, 1)
        .await
        .unwrap();
    cluster
        .load(&[("tFile", "tFile.csv"), ("tMsg", "tMsg.csv")], true)
        .await
        .unwrap();
    let app = router(Arc::new(QueryService::new(
        Arc::new(ClusterBackend::new(cluster.coordinator.clone())),
        ServiceConfig::default(),
    )));
    let queries = [
        "SELECT * FROM tMsg WHERE LineNo = '17'",
        "SELECT Filepath, MsgHash FROM tMsg WHERE MsgPath = '/m/2'",
        "SELECT tFile.Carrier, MsgHash FROM tMsg JOIN tFile ON tMsg.Filepath = tFile.Filepath WHERE LineNo = '14'",
        "select count(*) from tMsg join tFile on tMsg.Filepath = tFile.Filepath",
    ];
    for sql in queries {
        for mode in [StorageMode::Cached, StorageMode::DiskStream] {
            let direct = cluster.coordinator.submit(sql, mode).await.unwrap();
            let mode_name = if mode == StorageMode::Cached {
                "cached"
            } else {
                "disk"
            };
            let (status, resp) = post_query(&app, json!({ "sql": sql, "mode": mode_name })).await;
            assert_eq!(status, StatusCode::OK);
            assert_eq!(resp.columns.as_ref(), Some(&direct.columns), "{sql}");
            assert_eq!(resp.rows.as_ref(), Some(&direct.rows), "{sql}");
            assert_eq!(resp.row_count, Some(direct.row_count));
            assert_eq!(resp.mode.as_deref(), Some(direct.mode.as_str()));
        }
    }
    let (_, resp) = post_query(&app, json!({"sql": queries[3]})).await;
    assert_eq!(
        resp.rows.unwrap(),
        vec![vec![expected_join_count().to_string()]]
    );

    let (_, body) = get(&app, "/status").await;
    let doc: StatusDocument = serde_json::from_slice(&body).unwrap();
    assert_eq!(doc.status.alive_workers, 2);
    assert_eq!(doc.cached_tables, vec!["tFile", "tMsg"]);
    cluster.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn no_workers_is_unavailable_but_status_is_healthy() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path());
    let mut cluster = LocalCluster::start(cluster_config(dir.path()), 1, 1)
        .await
        .unwrap();
    cluster
        .load(&[("tFile", "tFile.csv"), ("tMsg", "tMsg.csv")], false)
        .await
        .unwrap();
    let app = router(Arc::new(QueryService::new(
        Arc::new(ClusterBackend::new(cluster.coordinator.clone())),
        ServiceConfig::default(),
    )));
    cluster.workers.pop().unwrap().stop().await.unwrap();
    let deadline = std::time::Instant::now() + Duration::from_secs(10);
    while cluster.coordinator.status().alive_workers > 0 {
        assert!(
            std::time::Instant::now() < deadline,
            "worker never marked dead"
        );
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    let (status, body) = get(&app, "/status").await;
    assert_eq!(status, StatusCode::OK);
    let doc: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(doc["alive_workers"], 0);

    let (status, resp) = post_query(&app, json!({"sql": "SELECT * FROM tMsg LIMIT 10;"})).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(resp.error.unwrap().code.as_str(), "NO_WORKERS");

    let (status, resp) = post_query(&app, json!({"sql": "DROP TABLE tMsg"})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(resp.error.unwrap().code.as_str(), "NON_QUERY");
    cluster.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn remote_backend_over_the_wire() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path());
    let cluster = LocalCluster::start(cluster_config(dir.path()), 1, 1)
        .await
        .unwrap();
    cluster
        .load(&[("tFile", "tFile.csv"), ("tMsg", "tMsg.csv")], false)
        .await
        .unwrap();
    let client = CoordinatorClient::new(cluster.coordinator.local_addr().to_string());
    let service = Arc::new(QueryService::new(
        Arc::new(RemoteBackend::new(client)),
        ServiceConfig::default(),
    ));
    let app = router(service.clone());

    let (status, resp) = post_query(
        &app,
        json!({"sql": "SELECT * FROM tMsg LIMIT 10;", "mode": "disk"}),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(resp.rows.unwrap().len(), 10);
    assert_eq!(resp.mode.as_deref(), Some("disk-cluster"));

    let (status, resp) = post_query(&app, json!({"sql": "SELECT Phone FROM tMsg"})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(resp.error.unwrap().code.as_str(), "UNKNOWN_COLUMN");
    assert_eq!(service.dispatch_count(), 1);
    cluster.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn fresh_coordinator_status_is_empty() {
    let dir = tempfile::tempdir().unwrap();
    let cluster = LocalCluster::start(cluster_config(dir.path()), 0, 1)
        .await
        .unwrap();
    let app = router(Arc::new(QueryService::new(
        Arc::new(ClusterBackend::new(cluster.coordinator.clone())),
        ServiceConfig::default(),
    )));
    let (status, body) = get(&app, "/status").await;
    assert_eq!(status, StatusCode::OK);
    let doc: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(doc["alive_workers"], 0);
    assert_eq!(doc["workers"].as_array().unwrap().len(), 0);
    assert_eq!(doc["cached_tables"].as_array().unwrap().len(), 0);
    cluster.shutdown().await;
}
