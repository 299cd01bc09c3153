//! Serves any [`Judge`] over the JSON wire protocol.
//!
//! Routes: `POST /judge`, `GET /health`, `GET /factors` (dataset echo).
//! Judging runs on blocking worker threads behind a semaphore of
//! `max_concurrent` permits.

use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::{oneshot, Semaphore};

use crate::data::FactorSpec;
use crate::error::{Error, Result};
use crate::judges::remote::{JudgeRequest, JudgeResponse};
use crate::judges::Judge;

/// What `GET /factors` reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerInfo {
    pub name: String,
    pub factors: Vec<FactorSpec>,
    pub seq_len: usize,
    pub frame_shape: Vec<usize>,
}

#[derive(Clone)]
struct AppState {
    judge: Arc<dyn Judge>,
    info: Arc<ServerInfo>,
    permits: Arc<Semaphore>,
}

fn reject(status: StatusCode, msg: impl Into<String>) -> Response {
    (status, Json(json!({ "error": msg.into() }))).into_response()
}

async fn judge_route(State(state): State<AppState>, body: Bytes) -> Response {
    let req: JudgeRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return reject(StatusCode::BAD_REQUEST, format!("malformed request: {e}")),
    };
    let info = &state.info;
    let Some(factor) = info.factors.iter().position(|f| f.name == req.factor) else {
        return reject(StatusCode::BAD_REQUEST, format!("unknown factor {}", req.factor));
    };
    if req.labels != info.factors[factor].labels {
        return reject(StatusCode::BAD_REQUEST, "label space does not match the served dataset");
    }
    let payload = match req.payload() {
        Ok(p) => p,
        Err(e) => return reject(StatusCode::BAD_REQUEST, e.to_string()),
    };
    let mut seq_shape = vec![info.seq_len];
    seq_shape.extend(&info.frame_shape);
    let frame = if req.shape == info.frame_shape {
        true
    } else if req.shape == seq_shape {
        false
    } else {
        return reject(
            StatusCode::BAD_REQUEST,
            format!("shape {:?} is neither a frame {:?} nor a sequence {seq_shape:?}", req.shape, info.frame_shape),
        );
    };
    let Ok(_permit) = state.permits.clone().acquire_owned().await else {
        return reject(StatusCode::SERVICE_UNAVAILABLE, "server shutting down");
    };
    let judge = state.judge.clone();
    let outcome = tokio::task::spawn_blocking(move || {
        if frame {
            judge.judge_frame(&payload, factor)
        } else {
            judge.judge(&payload, factor)
        }
    })
    .await;
    match outcome {
        Ok(Ok(label)) => match info.factors[factor].labels.get(label as usize) {
            Some(name) => Json(JudgeResponse { label: name.clone() }).into_response(),
            None => reject(StatusCode::INTERNAL_SERVER_ERROR, format!("judge produced label index {label}")),
        },
        Ok(Err(e)) if e.is_user_error() => reject(StatusCode::BAD_REQUEST, e.to_string()),
        Ok(Err(e)) => reject(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        Err(e) => reject(StatusCode::INTERNAL_SERVER_ERROR, format!("judge task failed: {e}")),
    }
}

fn router(judge: Arc<dyn Judge>, info: ServerInfo, max_concurrent: usize) -> Router {
    let state = AppState {
        judge,
        info: Arc::new(info),
        permits: Arc::new(Semaphore::new(max_concurrent.max(1))),
    };
    Router::new()
        .route("/judge", post(judge_route))
        .route("/health", get(|| async { Json(json!({ "status": "ok" })) }))
        .route(
            "/factors",
            get(|State(s): State<AppState>| async move { Json((*s.info).clone()) }),
        )
        .with_state(state)
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(Error::Io)
}

/// Serves until the process ends.
pub fn serve(judge: Arc<dyn Judge>, info: ServerInfo, addr: &str, max_concurrent: usize) -> Result<()> {
    let listener = std::net::TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    let app = router(judge, info, max_concurrent);
    runtime()?.block_on(async move {
        let listener = tokio::net::TcpListener::from_std(listener)?;
        axum::serve(listener, app).await
    })?;
    Ok(())
}

/// A server running on a background thread; dropped handles shut it down.
pub struct JudgeServer {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl JudgeServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for JudgeServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Binds `addr` (use port 0 for an ephemeral port) and serves in the
/// background.
pub fn spawn_server(judge: Arc<dyn Judge>, info: ServerInfo, addr: &str, max_concurrent: usize) -> Result<JudgeServer> {
    let listener = std::net::TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    let local = listener.local_addr()?;
    let app = router(judge, info, max_concurrent);
    let rt = runtime()?;
    let (tx, rx) = oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        rt.block_on(async move {
            let Ok(listener) = tokio::net::TcpListener::from_std(listener) else {
                return;
            };
            let _ = axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
        });
    });
    Ok(JudgeServer {
        addr: local,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}
