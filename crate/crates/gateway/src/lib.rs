// Copyright 2026 The culvertd Authors
// SPDX-License-Identifier: Apache-2.0

//! HTTP and web-socket view over a live inspection run.
//!
//! Routes:
//! - `GET /api/run`: status, degradation level and telemetry digest
//! - `GET /api/deficiencies`: the deficiency log
//! - `GET /api/report`: the inspection report
//! - `POST /api/query`: inspector queries
//! - `GET /api/queries`: recent query log
//! - `GET /ws`: event stream, one JSON object per message
//!
//! Stream messages carry `topic`, `seq`, `api_version` and `payload`. Each
//! client first receives the retained history of every streamed topic, then
//! live events. Clients may send `{"op": "ping"}` or `{"op": "snapshot"}`.

use std::collections::VecDeque;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::rejection::JsonRejection;
use axum::extract::ws::{CloseFrame, Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use crossbeam_channel::Receiver;
use futures::{SinkExt, StreamExt};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::{mpsc, oneshot};
use tokio::task::JoinHandle;

use culvert_core::inspect::{DeficiencyRecord, SegmentDescriptor, TelemetryDigest, API_VERSION};
use culvert_core::orchestrator::{
    answer_query, DegradationLevel, Envelope, LiveRun, QueryAnswer, QueryError, QueryRequest, RunStatus,
    TelemetrySample,
};
use culvert_core::summarize::RemoteSummarizer;

/// Close code sent to clients whose send queue overflowed.
pub const CLOSE_SLOW_CLIENT: u16 = 1008;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("cannot bind {addr}: {source}")]
    BindFailure { addr: SocketAddr, source: std::io::Error },
    #[error("bus unavailable: {0}")]
    BusUnavailable(String),
    #[error("server error: {0}")]
    Serve(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    /// Messages buffered per stream client before it is disconnected.
    pub client_queue: usize,
    /// Queries kept in the log.
    pub query_log: usize,
    /// Topics multiplexed onto `/ws`.
    pub topics: Vec<String>,
    /// Remote model used to answer freeform queries.
    pub summarizer_endpoint: Option<String>,
    pub query_timeout_s: f64,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            client_queue: 16_384,
            query_log: 256,
            topics: vec!["detections".into(), "summaries".into(), "telemetry".into()],
            summarizer_endpoint: None,
            query_timeout_s: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryLogEntry {
    pub request: QueryRequest,
    pub record_ids: Vec<u64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunView {
    pub api_version: u32,
    pub run_id: String,
    pub status: RunStatus,
    pub error: Option<String>,
    pub segment: SegmentDescriptor,
    pub level: DegradationLevel,
    pub records: usize,
    pub summaries: usize,
    pub digest: TelemetryDigest,
    pub latest: Option<TelemetrySample>,
    pub clients: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeficienciesView {
    pub api_version: u32,
    pub run_id: String,
    pub records: Vec<DeficiencyRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub api_version: u32,
    pub error: String,
}

/// One web-socket message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamMessage {
    pub topic: String,
    pub seq: u64,
    pub api_version: u32,
    pub payload: Value,
}

impl From<Envelope> for StreamMessage {
    fn from(e: Envelope) -> Self {
        StreamMessage { topic: e.topic.as_str().to_string(), seq: e.seq, api_version: API_VERSION, payload: e.payload }
    }
}

struct Session {
    live: Arc<LiveRun>,
    cfg: GatewayConfig,
    remote: Option<RemoteSummarizer>,
    clients: AtomicUsize,
    queries: Mutex<VecDeque<QueryLogEntry>>,
}

/// Shared gateway state; cheap to clone.
#[derive(Clone)]
pub struct Gateway {
    session: Arc<Session>,
}

impl Gateway {
    pub fn new(live: Arc<LiveRun>, cfg: GatewayConfig) -> Result<Self, GatewayError> {
        for t in &cfg.topics {
            live.bus().subscribe_named(t, false).map_err(|e| GatewayError::BusUnavailable(e.to_string()))?;
        }
        if cfg.client_queue == 0 {
            return Err(GatewayError::BusUnavailable("client queue must hold at least one message".into()));
        }
        let remote = cfg
            .summarizer_endpoint
            .as_ref()
            .map(|ep| RemoteSummarizer::new(ep.clone(), Duration::from_secs_f64(cfg.query_timeout_s.max(0.001))));
        Ok(Gateway {
            session: Arc::new(Session {
                live,
                cfg,
                remote,
                clients: AtomicUsize::new(0),
                queries: Mutex::new(VecDeque::new()),
            }),
        })
    }

    /// Connected stream clients.
    pub fn clients(&self) -> usize {
        self.session.clients.load(Ordering::SeqCst)
    }

    pub fn query_log(&self) -> Vec<QueryLogEntry> {
        self.session.queries.lock().expect("query log lock").iter().cloned().collect()
    }

    pub fn router(&self) -> Router {
        Router::new()
            .route("/api/run", get(run_view))
            .route("/api/deficiencies", get(deficiencies))
            .route("/api/report", get(report))
            .route("/api/query", post(query))
            .route("/api/queries", get(queries))
            .route("/ws", get(ws_upgrade))
            .with_state(self.session.clone())
    }

    /// Binds and serves in the background until shut down.
    pub async fn bind(&self, addr: SocketAddr) -> Result<RunningGateway, GatewayError> {
        let listener = TcpListener::bind(addr).await.map_err(|source| GatewayError::BindFailure { addr, source })?;
        let local = listener.local_addr()?;
        let (tx, rx) = oneshot::channel::<()>();
        let app = self.router();
        let handle = tokio::spawn(async move {
            axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await
        });
        Ok(RunningGateway { addr: local, shutdown: Some(tx), handle })
    }
}

pub struct RunningGateway {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    handle: JoinHandle<std::io::Result<()>>,
}

impl RunningGateway {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting connections and waits for the server to finish.
    pub async fn shutdown(mut self) -> Result<(), GatewayError> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        self.wait().await
    }

    pub async fn wait(self) -> Result<(), GatewayError> {
        match self.handle.await {
            Ok(r) => Ok(r?),
            Err(e) => Err(GatewayError::Serve(std::io::Error::other(e))),
        }
    }
}

type Shared = Arc<Session>;

fn error_response(status: StatusCode, error: String) -> Response {
    (status, Json(ErrorBody { api_version: API_VERSION, error })).into_response()
}

async fn run_view(State(s): State<Shared>) -> Json<RunView> {
    let snap = s.live.snapshot();
    Json(RunView {
        api_version: API_VERSION,
        run_id: snap.run_id,
        status: snap.status,
        error: snap.error,
        segment: snap.segment,
        level: snap.level,
        records: snap.records.len(),
        summaries: snap.summaries.len(),
        digest: snap.digest,
        latest: snap.latest,
        clients: s.clients.load(Ordering::SeqCst),
    })
}

async fn deficiencies(State(s): State<Shared>) -> Json<DeficienciesView> {
    let snap = s.live.snapshot();
    let mut records = snap.records;
    records.sort_by(|a, b| a.first_pose.chainage.total_cmp(&b.first_pose.chainage).then(a.record_id.cmp(&b.record_id)));
    Json(DeficienciesView { api_version: API_VERSION, run_id: snap.run_id, records })
}

async fn report(State(s): State<Shared>) -> Response {
    Json(s.live.report()).into_response()
}

async fn queries(State(s): State<Shared>) -> Response {
    let log: Vec<QueryLogEntry> = s.queries.lock().expect("query log lock").iter().cloned().collect();
    Json(json!({ "api_version": API_VERSION, "queries": log })).into_response()
}

async fn query(State(s): State<Shared>, body: Result<Json<QueryRequest>, JsonRejection>) -> Response {
    let req = match body {
        Ok(Json(r)) => r,
        Err(e) => return error_response(StatusCode::BAD_REQUEST, e.body_text()),
    };
    let session = s.clone();
    let request = req.clone();
    let answered = tokio::task::spawn_blocking(move || {
        let snap = session.live.snapshot();
        answer_query(&snap, &request, session.remote.as_ref())
    })
    .await;
    let result: Result<QueryAnswer, QueryError> = match answered {
        Ok(r) => r,
        Err(e) => return error_response(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    };
    {
        let mut log = s.queries.lock().expect("query log lock");
        if s.cfg.query_log > 0 {
            if log.len() == s.cfg.query_log {
                log.pop_front();
            }
            log.push_back(QueryLogEntry {
                request: req,
                record_ids: result.as_ref().map(|a| a.record_ids.clone()).unwrap_or_default(),
                error: result.as_ref().err().map(|e| e.to_string()),
            });
        }
    }
    match result {
        Ok(a) => Json(a).into_response(),
        Err(e @ QueryError::NotFound(_)) | Err(e @ QueryError::EmptyRange(..)) => {
            error_response(StatusCode::NOT_FOUND, e.to_string())
        }
        Err(e @ QueryError::InvalidRange(..)) => error_response(StatusCode::BAD_REQUEST, e.to_string()),
    }
}

async fn ws_upgrade(State(s): State<Shared>, ws: WebSocketUpgrade) -> Response {
    let receivers: Result<Vec<Receiver<Envelope>>, _> =
        s.cfg.topics.iter().map(|t| s.live.bus().subscribe_named(t, true)).collect();
    match receivers {
        Ok(rx) => ws.on_upgrade(move |socket| client(s, socket, rx)),
        Err(e) => error_response(StatusCode::SERVICE_UNAVAILABLE, GatewayError::BusUnavailable(e.to_string()).to_string()),
    }
}

/// Moves bus messages into the client's bounded queue. Returns once the
/// client is gone, or signals `overflow` when the queue is full.
fn bridge(receivers: Vec<Receiver<Envelope>>, tx: mpsc::Sender<StreamMessage>, overflow: oneshot::Sender<()>) {
    let mut sel = crossbeam_channel::Select::new();
    for r in &receivers {
        sel.recv(r);
    }
    loop {
        if tx.is_closed() {
            return;
        }
        let op = match sel.select_timeout(Duration::from_millis(50)) {
            Ok(op) => op,
            Err(_) => continue,
        };
        let i = op.index();
        let env = match op.recv(&receivers[i]) {
            Ok(env) => env,
            Err(_) => {
                sel.remove(i);
                continue;
            }
        };
        match tx.try_send(env.into()) {
            Ok(()) => {}
            Err(mpsc::error::TrySendError::Full(_)) => {
                let _ = overflow.send(());
                return;
            }
            Err(mpsc::error::TrySendError::Closed(_)) => return,
        }
    }
}

#[derive(Deserialize)]
struct ClientOp {
    op: String,
}

fn reply_to(s: &Session, text: &str) -> Value {
    match serde_json::from_str::<ClientOp>(text) {
        Ok(c) if c.op == "ping" => json!({ "topic": "pong", "api_version": API_VERSION }),
        Ok(c) if c.op == "snapshot" => {
            let snap = s.live.snapshot();
            json!({
                "topic": "snapshot",
                "api_version": API_VERSION,
                "payload": {
                    "run_id": snap.run_id,
                    "status": snap.status,
                    "level": snap.level,
                    "report": s.live.report(),
                },
            })
        }
        Ok(c) => json!({ "topic": "error", "api_version": API_VERSION, "error": format!("unknown op {:?}", c.op) }),
        Err(e) => json!({ "topic": "error", "api_version": API_VERSION, "error": e.to_string() }),
    }
}

async fn client(s: Shared, socket: WebSocket, receivers: Vec<Receiver<Envelope>>) {
    s.clients.fetch_add(1, Ordering::SeqCst);
    let (mut sink, mut stream) = socket.split();
    let (ev_tx, mut ev_rx) = mpsc::channel::<StreamMessage>(s.cfg.client_queue);
    let (overflow_tx, mut overflow_rx) = oneshot::channel::<()>();
    let (reply_tx, mut reply_rx) = mpsc::unbounded_channel::<Value>();
    let bridge_task = tokio::task::spawn_blocking(move || bridge(receivers, ev_tx, overflow_tx));

    let reader_session = s.clone();
    let mut reader = tokio::spawn(async move {
        while let Some(Ok(msg)) = stream.next().await {
            match msg {
                Message::Text(t) => {
                    if reply_tx.send(reply_to(&reader_session, t.as_str())).is_err() {
                        break;
                    }
                }
                Message::Close(_) => break,
                _ => {}
            }
        }
    });

    let mut overflowed = false;
    loop {
        let out = tokio::select! {
            biased;
            r = &mut overflow_rx => {
                overflowed = r.is_ok();
                break;
            }
            _ = &mut reader => break,
            Some(v) = reply_rx.recv() => v.to_string(),
            ev = ev_rx.recv() => match ev {
                Some(m) => serde_json::to_string(&m).expect("stream message encodes"),
                None => break,
            },
        };
        if sink.send(Message::Text(out.into())).await.is_err() {
            break;
        }
    }
    if overflowed {
        let frame = CloseFrame { code: CLOSE_SLOW_CLIENT, reason: "send queue overflow".into() };
        let _ = tokio::time::timeout(Duration::from_secs(1), sink.send(Message::Close(Some(frame)))).await;
    }
    drop(ev_rx);
    reader.abort();
    let _ = bridge_task.await;
    s.clients.fetch_sub(1, Ordering::SeqCst);
}
