//! In-process HTTP client over the router, and helpers to compare API
//! results with direct session calls.

#![allow(dead_code)]

use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use fdconfig_server::{router, AppState, Config};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

pub struct Api {
    router: Router,
}

impl Api {
    pub fn new() -> Api {
        Api::with_config(Config::default())
    }

    pub fn with_config(config: Config) -> Api {
        Api { router: router(AppState::new(config)) }
    }

    pub async fn call(&self, method: Method, uri: &str, body: Body) -> (StatusCode, Value) {
        let req = Request::builder().method(method).uri(uri).header("content-type", "application/json").body(body).unwrap();
        let resp = self.router.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let value = if bytes.is_empty() {
            Value::Null
        } else {
            serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into_owned()))
        };
        (status, value)
    }

    pub async fn post_model(&self, text: &str) -> (StatusCode, Value) {
        self.call(Method::POST, "/models", Body::from(text.to_string())).await
    }

    pub async fn post_json(&self, uri: &str, body: &Value) -> (StatusCode, Value) {
        self.call(Method::POST, uri, Body::from(body.to_string())).await
    }

    pub async fn get(&self, uri: &str) -> (StatusCode, Value) {
        self.call(Method::GET, uri, Body::empty()).await
    }

    pub async fn delete(&self, uri: &str) -> (StatusCode, Value) {
        self.call(Method::DELETE, uri, Body::empty()).await
    }

    /// Uploads `text` and opens a session on it.
    pub async fn open(&self, text: &str) -> String {
        let (status, body) = self.post_model(text).await;
        assert_eq!(status, StatusCode::CREATED, "{body}");
        let model_id = body["modelId"].clone();
        let (status, body) = self.post_json("/sessions", &serde_json::json!({ "modelId": model_id })).await;
        assert_eq!(status, StatusCode::CREATED, "{body}");
        body["sessionId"].as_str().unwrap().to_string()
    }

    /// Polls the snapshot until nothing is computing.
    pub async fn settled(&self, sid: &str, timeout: Duration) -> Value {
        let start = Instant::now();
        loop {
            let (status, snap) = self.get(&format!("/sessions/{sid}")).await;
            assert_eq!(status, StatusCode::OK, "{snap}");
            if snap["computing"] != "running" {
                return snap;
            }
            assert!(start.elapsed() < timeout, "session {sid} never settled");
            tokio::time::sleep(Duration::from_millis(2)).await;
        }
    }

    /// Opens the event stream and returns a reader over its lines.
    pub async fn events(&self, sid: &str) -> EventStream {
        let req = Request::builder().uri(format!("/sessions/{sid}/events")).body(Body::empty()).unwrap();
        let resp = self.router.clone().oneshot(req).await.unwrap();
        assert_eq!(resp.status(), StatusCode::OK);
        assert_eq!(resp.headers()["content-type"], "application/x-ndjson");
        EventStream { body: resp.into_body(), buf: Vec::new() }
    }
}

pub struct EventStream {
    body: Body,
    buf: Vec<u8>,
}

impl EventStream {
    /// Next event, or `None` if none arrives within `timeout`.
    pub async fn next(&mut self, timeout: Duration) -> Option<Value> {
        let deadline = tokio::time::Instant::now() + timeout;
        loop {
            if let Some(pos) = self.buf.iter().position(|&b| b == b'\n') {
                let line: Vec<u8> = self.buf.drain(..=pos).collect();
                return Some(serde_json::from_slice(&line[..line.len() - 1]).expect("one JSON value per line"));
            }
            let frame = tokio::time::timeout_at(deadline, self.body.frame()).await.ok()??.ok()?;
            if let Ok(data) = frame.into_data() {
                self.buf.extend_from_slice(&data);
            }
        }
    }

    /// Reads until the `complete` event of `epoch`.
    pub async fn until_complete(&mut self, epoch: u64, timeout: Duration) -> Vec<Value> {
        let mut out = Vec::new();
        while let Some(e) = self.next(timeout).await {
            let done = e["type"] == "complete" && e["epoch"] == epoch;
            out.push(e);
            if done {
                return out;
            }
        }
        panic!("no complete event for epoch {epoch}; got {out:?}");
    }
}

/// Drops `createdAt` from every decision so API and direct snapshots taken
/// at different instants compare equal.
pub fn normalize(mut snap: Value) -> Value {
    if let Some(ds) = snap["decisions"].as_array_mut() {
        for d in ds {
            d.as_object_mut().unwrap().remove("createdAt");
        }
    }
    snap
}

pub fn direct(snap: &fdconfig_core::SessionSnapshot) -> Value {
    normalize(serde_json::to_value(snap).unwrap())
}

/// Checks that the events of the last completed epoch in `log` rebuild the
/// variables map of `snap`. Returns a description of the first mismatch.
pub fn coherent(log: &[Value], snap: &Value) -> Result<(), String> {
    let epoch = snap["epoch"].as_u64().unwrap();
    let mut current = None;
    let mut ready = serde_json::Map::new();
    for e in log {
        let ee = e["epoch"].as_u64().unwrap();
        match e["type"].as_str().unwrap() {
            "epoch" => {
                if current.is_some_and(|c| ee < c) {
                    return Err(format!("epoch went backwards at {e}"));
                }
                current = Some(ee);
                ready.clear();
            }
            "variableReady" | "complete" if Some(ee) != current => {
                return Err(format!("{e} arrived during epoch {current:?}"));
            }
            "variableReady" => {
                ready.insert(e["variable"].as_str().unwrap().to_string(), e["values"].clone());
            }
            _ => {}
        }
    }
    if current != Some(epoch) {
        return Err(format!("stream ended in epoch {current:?}, snapshot is {epoch}"));
    }
    let want: serde_json::Map<String, Value> = snap["variables"]
        .as_object()
        .unwrap()
        .iter()
        .map(|(k, v)| (k.clone(), v["values"].clone()))
        .collect();
    if ready != want {
        return Err(format!("events {ready:?} != snapshot {want:?}"));
    }
    Ok(())
}
