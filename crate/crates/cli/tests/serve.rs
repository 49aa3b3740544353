//! The HTTP surface, driven in-process.

use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use qfine::client::{ClientError, DecodingParams};
use qfine::corpus::{synthetic_corpus, SyntheticCorpusConfig};
use qfine::embedder::init_model;
use qfine::ragpipe::{EchoGenerator, GeneratorClient, PromptBundle, RagOptions};
use qfine::retriever::build_index;
use qfine_cli::serve::{router, AppState, ErrorBody, Health, QueryResponse};
use serde::de::DeserializeOwned;
use tower::ServiceExt;

struct Down;

impl GeneratorClient for Down {
    fn complete(&self, _: &PromptBundle, _: &DecodingParams) -> Result<String, ClientError> {
        Err(ClientError::Status(503))
    }
}

fn state(generator: Box<dyn GeneratorClient>) -> Arc<AppState> {
    let corpus = synthetic_corpus(&SyntheticCorpusConfig {
        n_pairs: 20,
        ..SyntheticCorpusConfig::default()
    });
    let model = init_model(4096, 32, 5).unwrap();
    let index = build_index(&model, &corpus).unwrap();
    Arc::new(AppState::new(corpus, index, model, generator, RagOptions::default()).unwrap())
}

async fn call<T: DeserializeOwned>(app: &axum::Router, req: Request<Body>) -> (StatusCode, T) {
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = to_bytes(res.into_body(), 1 << 20).await.unwrap();
    (status, serde_json::from_slice(&bytes).unwrap())
}

fn post(body: &str) -> Request<Body> {
    Request::post("/v1/query")
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap()
}

fn health_req() -> Request<Body> {
    Request::get("/v1/health").body(Body::empty()).unwrap()
}

#[tokio::test]
async fn health_reports_loaded_fingerprints() {
    let st = state(Box::new(EchoGenerator));
    let app = router(st.clone());
    let (status, h): (_, Health) = call(&app, health_req()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(h.model_fingerprint, st.model.fingerprint_hex());
    assert_eq!(h.index_model_fingerprint, h.model_fingerprint);
    assert_eq!(h.index_checksum, format!("{:016x}", st.index.checksum()));
    assert_eq!(h.documents, 20);
    assert_eq!(h.version, env!("CARGO_PKG_VERSION"));
}

#[tokio::test]
async fn query_returns_sorted_contexts_and_echo_answer() {
    let st = state(Box::new(EchoGenerator));
    let app = router(st.clone());
    let q = st.corpus.entries()[3].question.clone();
    let body = serde_json::json!({ "query": q, "k": 4 }).to_string();
    let (status, r): (_, QueryResponse) = call(&app, post(&body)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(r.contexts.len(), 4);
    assert!(r.contexts.windows(2).all(|w| w[0].score >= w[1].score));
    assert_eq!(r.answer, r.contexts[0].text);
    let expected = &st.corpus.get(&r.contexts[0].doc_id).unwrap().answer;
    assert_eq!(&r.contexts[0].text, expected);

    let body = serde_json::json!({ "query": q }).to_string();
    let (_, r): (_, QueryResponse) = call(&app, post(&body)).await;
    assert_eq!(r.contexts.len(), RagOptions::default().k);
}

#[tokio::test]
async fn malformed_bodies_are_400() {
    let app = router(state(Box::new(EchoGenerator)));
    for body in ["", "{", "{\"k\": 2}", "{\"query\": 5}", "{\"query\": \"x\", \"k\": 0}", "{\"query\": \"x\", \"k\": -1}"] {
        let (status, e): (_, ErrorBody) = call(&app, post(body)).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
        assert!(!e.error.is_empty());
    }
}

#[tokio::test]
async fn degenerate_query_is_422() {
    let app = router(state(Box::new(EchoGenerator)));
    let (status, _): (_, ErrorBody) = call(&app, post("{\"query\": \"  ?! \"}")).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn generator_failure_is_502_with_contexts() {
    let app = router(state(Box::new(Down)));
    let (status, e): (_, ErrorBody) = call(&app, post("{\"query\": \"patent filing fees\", \"k\": 2}")).await;
    assert_eq!(status, StatusCode::BAD_GATEWAY);
    assert!(e.error.contains("503"), "{}", e.error);
    assert_eq!(e.contexts.len(), 2);
}

#[tokio::test]
async fn serving_leaves_artifacts_untouched() {
    let st = state(Box::new(EchoGenerator));
    let before = (st.model.fingerprint(), st.index.checksum(), st.index.clone());
    let app = router(st.clone());
    let (_, h0): (_, Health) = call(&app, health_req()).await;
    for q in ["patent", "trademark renewal", "how to file", "  "] {
        let _ = app.clone().oneshot(post(&serde_json::json!({ "query": q }).to_string())).await.unwrap();
    }
    let (_, h1): (_, Health) = call(&app, health_req()).await;
    assert_eq!(h0, h1);
    assert_eq!(before, (st.model.fingerprint(), st.index.checksum(), st.index.clone()));
}
