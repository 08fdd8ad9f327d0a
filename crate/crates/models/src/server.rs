//! Reference scoring server wrapping an in-process scorer.

use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use sparsepix_core::{ModelError, Scorer};
use tokio::sync::oneshot;

use crate::wire::{ScoreRequest, ScoreResponse, SCORES_PATH};

type Shared = Arc<dyn Scorer>;

async fn scores(State(scorer): State<Shared>, body: Bytes) -> Response {
    let req: ScoreRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return (StatusCode::BAD_REQUEST, format!("malformed request: {e}")).into_response(),
    };
    let image = match req.to_image() {
        Ok(i) => i,
        Err(e) => return (StatusCode::BAD_REQUEST, e).into_response(),
    };
    match tokio::task::spawn_blocking(move || scorer.score(&image)).await {
        Ok(Ok(s)) => Json(ScoreResponse { scores: s.into() }).into_response(),
        Ok(Err(ModelError::Input(e))) => (StatusCode::BAD_REQUEST, e).into_response(),
        Ok(Err(e)) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

pub fn router(scorer: Shared) -> Router {
    Router::new().route(SCORES_PATH, post(scores)).with_state(scorer)
}

/// A server running on its own thread and runtime.
pub struct StubServer {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<std::io::Result<()>>>,
}

impl StubServer {
    pub fn spawn(scorer: Shared, addr: SocketAddr) -> std::io::Result<Self> {
        Self::spawn_router(router(scorer), addr)
    }

    pub fn spawn_router(app: Router, addr: SocketAddr) -> std::io::Result<Self> {
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()?;
        let listener = runtime.block_on(tokio::net::TcpListener::bind(addr))?;
        let addr = listener.local_addr()?;
        let (tx, rx) = oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            runtime.block_on(async move {
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await
            })
        });
        Ok(Self { addr, shutdown: Some(tx), thread: Some(thread) })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn endpoint(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Blocks until the server stops.
    pub fn join(mut self) -> std::io::Result<()> {
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(std::io::Error::other("server panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
