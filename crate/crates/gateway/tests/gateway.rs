// Copyright 2026 The culvertd Authors
// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use futures::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio_tungstenite::tungstenite::protocol::frame::coding::CloseCode;
use tokio_tungstenite::tungstenite::Message;

use culvert_core::inspect::{DefectClass, InspectionReport, Pose, API_VERSION};
use culvert_core::orchestrator::{run_scenario_live, Bus, LiveRun, RunConfig, RunSnapshot, Topic};
use culvert_core::sim::{plant, Scenario, SCENARIO_VERSION};
use culvert_core::summarize::PipeDescriptor;
use culvert_gateway::{Gateway, GatewayConfig, GatewayError, RunningGateway, StreamMessage, CLOSE_SLOW_CLIENT};

fn scenario(defects: &[(DefectClass, f64, f64, f64)]) -> Scenario {
    let pipe = PipeDescriptor { length_m: 8.0, ..Default::default() };
    Scenario {
        scenario_version: SCENARIO_VERSION,
        name: "gw".into(),
        seed: 7,
        length_m: 8.0,
        fps: 15.0,
        speed_mps: 0.3,
        defects: defects
            .iter()
            .enumerate()
            .map(|(i, &(class, c, extent, conf))| plant(i as u64, class, Pose::at(c, 0.0, 0.45), extent, conf, &pipe))
            .collect(),
        pipe,
        difficulty: Vec::new(),
    }
}

fn one_defect() -> Scenario {
    scenario(&[(DefectClass::Cracks, 2.0, 0.2, 0.7)])
}

fn finished_run(s: &Scenario) -> Arc<LiveRun> {
    let live = LiveRun::new(RunSnapshot::new("pending", s.pipe.clone()), Bus::new(100_000));
    run_scenario_live(s, &RunConfig::default(), false, live.clone()).unwrap();
    live
}

async fn start(live: Arc<LiveRun>, cfg: GatewayConfig) -> (Gateway, RunningGateway, String) {
    let gw = Gateway::new(live, cfg).unwrap();
    let running = gw.bind("127.0.0.1:0".parse().unwrap()).await.unwrap();
    let base = format!("http://{}", running.local_addr());
    (gw, running, base)
}

async fn get_json(url: &str) -> Value {
    reqwest::get(url).await.unwrap().json().await.unwrap()
}

async fn post_query(base: &str, body: Value) -> (u16, Value) {
    let resp = reqwest::Client::new().post(format!("{base}/api/query")).json(&body).send().await.unwrap();
    (resp.status().as_u16(), resp.json().await.unwrap())
}

#[tokio::test(flavor = "multi_thread")]
async fn rest_views_of_a_single_defect_run() {
    let live = finished_run(&one_defect());
    let (_gw, running, base) = start(live.clone(), GatewayConfig::default()).await;

    let run = get_json(&format!("{base}/api/run")).await;
    assert_eq!(run["api_version"], API_VERSION);
    assert_eq!(run["run_id"], "gw-7");
    assert_eq!(run["status"], "finished");
    assert_eq!(run["records"], 1);
    assert_eq!(run["digest"]["summaries"], 1);

    let defs = get_json(&format!("{base}/api/deficiencies")).await;
    assert_eq!(defs["api_version"], API_VERSION);
    assert_eq!(defs["records"].as_array().unwrap().len(), 1);
    assert_eq!(defs["records"][0]["class"], "Cracks");

    let text = reqwest::get(format!("{base}/api/report")).await.unwrap().text().await.unwrap();
    let report: InspectionReport = serde_json::from_str(&text).unwrap();
    assert_eq!(report, live.report());
    assert!(report.is_fully_summarized());
    assert_eq!(serde_json::to_value(&report).unwrap(), serde_json::from_str::<Value>(&text).unwrap());

    running.shutdown().await.unwrap();
}

#[tokio::test(flavor = "multi_thread")]
async fn queries() {
    let s = scenario(&[
        (DefectClass::Cracks, 1.0, 0.1, 0.7),
        (DefectClass::Holes, 3.0, 0.5, 0.95),
        (DefectClass::Roots, 5.0, 0.1, 0.65),
        (DefectClass::Fracture, 7.0, 0.5, 0.99),
    ]);
    let live = finished_run(&s);
    let (gw, running, base) = start(live.clone(), GatewayConfig::default()).await;
    let snap = live.snapshot();
    let holes = snap.records.iter().find(|r| r.class == DefectClass::Holes).unwrap().record_id;
    let roots = snap.records.iter().find(|r| r.class == DefectClass::Roots).unwrap().record_id;

    let (code, a) = post_query(&base, json!({"target": {"record_id": roots}, "mode": "structured"})).await;
    assert_eq!(code, 200);
    assert_eq!(a["api_version"], API_VERSION);
    assert_eq!(a["answer"], serde_json::to_value(&snap.summaries[&roots]).unwrap());
    for field in ["condition", "location", "severity", "implications"] {
        assert!(!a["answer"][field].is_null(), "{field}");
    }

    let (code, a) = post_query(
        &base,
        json!({"target": {"segment": {"start_m": 0.0, "end_m": 6.0}}, "question": "worst issue?", "mode": "freeform"}),
    )
    .await;
    assert_eq!(code, 200);
    assert_eq!(a["record_ids"][0], holes);
    assert_eq!(a["record_ids"].as_array().unwrap().len(), 3);
    assert!(a["text"].as_str().unwrap().contains("Holes"));

    let (code, e) = post_query(&base, json!({"target": {"record_id": 999}})).await;
    assert_eq!(code, 404);
    assert_eq!(e["api_version"], API_VERSION);
    let (code, _) = post_query(&base, json!({"target": {"segment": {"start_m": 6.0, "end_m": 1.0}}})).await;
    assert_eq!(code, 400);
    let (code, e) = post_query(&base, json!({"target": "everything"})).await;
    assert_eq!(code, 400);
    assert_eq!(e["api_version"], API_VERSION);

    let log = get_json(&format!("{base}/api/queries")).await;
    assert_eq!(log["queries"].as_array().unwrap().len(), 4);
    assert_eq!(gw.query_log().len(), 4);
    assert!(gw.query_log()[2].error.is_some());
    // queries leave the run untouched
    assert_eq!(live.snapshot(), snap);
    running.shutdown().await.unwrap();
}

type Ws = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>>;

async fn connect(addr: SocketAddr) -> Ws {
    tokio_tungstenite::connect_async(format!("ws://{addr}/ws")).await.unwrap().0
}

/// Reads stream messages until `done` holds or the stream goes quiet.
async fn collect(ws: &mut Ws, done: impl Fn(&[StreamMessage]) -> bool) -> Vec<StreamMessage> {
    let mut out = Vec::new();
    while !done(&out) {
        match tokio::time::timeout(Duration::from_secs(10), ws.next()).await {
            Ok(Some(Ok(Message::Text(t)))) => out.push(serde_json::from_str(t.as_str()).unwrap()),
            Ok(Some(Ok(_))) => {}
            _ => break,
        }
    }
    out
}

fn per_topic(msgs: &[StreamMessage]) -> BTreeMap<String, Vec<(u64, Value)>> {
    let mut m: BTreeMap<String, Vec<(u64, Value)>> = BTreeMap::new();
    for s in msgs {
        m.entry(s.topic.clone()).or_default().push((s.seq, s.payload.clone()));
    }
    m
}

#[tokio::test(flavor = "multi_thread")]
async fn two_clients_see_the_same_stream() {
    let live = finished_run(&one_defect());
    let bus = live.bus().clone();
    let expected =
        (bus.published(Topic::Detections) + bus.published(Topic::Summaries) + bus.published(Topic::Telemetry)) as usize;
    let (_gw, running, _) = start(live, GatewayConfig::default()).await;
    let mut a = connect(running.local_addr()).await;
    let mut b = connect(running.local_addr()).await;
    let ma = collect(&mut a, |m| m.len() >= expected).await;
    let mb = collect(&mut b, |m| m.len() >= expected).await;
    assert_eq!(ma.len(), expected);
    assert_eq!(per_topic(&ma), per_topic(&mb));
    let topics = per_topic(&ma);
    assert_eq!(topics.keys().cloned().collect::<Vec<_>>(), vec!["detections", "summaries", "telemetry"]);
    for seqs in topics.values() {
        assert!(seqs.windows(2).all(|w| w[1].0 == w[0].0 + 1));
        assert_eq!(seqs[0].0, 1);
    }
    assert!(ma.iter().all(|m| m.api_version == API_VERSION));
    assert_eq!(topics["summaries"][0].1["summary"]["severity"]["level"], "medium");
    running.shutdown().await.unwrap();
}

#[tokio::test(flavor = "multi_thread")]
async fn live_run_streams_to_a_connected_client() {
    let s = one_defect();
    let live = LiveRun::new(RunSnapshot::new("pending", s.pipe.clone()), Bus::new(100_000));
    let (_gw, running, base) = start(live.clone(), GatewayConfig::default()).await;
    let mut ws = connect(running.local_addr()).await;
    let runner = live.clone();
    let run = tokio::task::spawn_blocking(move || run_scenario_live(&s, &RunConfig::default(), false, runner).unwrap());
    let msgs = collect(&mut ws, |m| m.iter().any(|x| x.topic == "summaries")).await;
    let out = run.await.unwrap();
    assert!(msgs.iter().any(|m| m.topic == "detections"));
    let summary = msgs.iter().find(|m| m.topic == "summaries").unwrap();
    assert_eq!(summary.payload["record_id"], out.report.entries[0].record.record_id);
    let run = get_json(&format!("{base}/api/run")).await;
    assert_eq!(run["status"], "finished");
    assert_eq!(run["clients"], 1);
    running.shutdown().await.unwrap();
}

#[tokio::test(flavor = "multi_thread")]
async fn client_ops() {
    let live = finished_run(&one_defect());
    let cfg = GatewayConfig { topics: vec!["summaries".into()], ..GatewayConfig::default() };
    let (_gw, running, _) = start(live.clone(), cfg).await;
    let mut ws = connect(running.local_addr()).await;
    let first = collect(&mut ws, |m| !m.is_empty()).await;
    assert_eq!(first[0].topic, "summaries");
    let mut replies = Vec::new();
    for op in [r#"{"op":"ping"}"#, r#"{"op":"snapshot"}"#, r#"{"op":"fly"}"#, "not json"] {
        ws.send(Message::Text(op.into())).await.unwrap();
        let msg = tokio::time::timeout(Duration::from_secs(5), ws.next()).await.unwrap().unwrap().unwrap();
        replies.push(serde_json::from_str::<Value>(msg.to_text().unwrap()).unwrap());
    }
    assert_eq!(replies[0]["topic"], "pong");
    assert_eq!(replies[1]["topic"], "snapshot");
    assert_eq!(replies[1]["payload"]["report"], serde_json::to_value(live.report()).unwrap());
    assert_eq!(replies[2]["topic"], "error");
    assert_eq!(replies[3]["topic"], "error");
    running.shutdown().await.unwrap();
}

#[tokio::test(flavor = "multi_thread")]
async fn slow_client_is_disconnected() {
    let live = LiveRun::new(RunSnapshot::new("flood", PipeDescriptor::default()), Bus::new(0));
    let cfg = GatewayConfig { client_queue: 4, topics: vec!["telemetry".into()], ..GatewayConfig::default() };
    let (gw, running, _) = start(live.clone(), cfg).await;
    let mut ws = connect(running.local_addr()).await;
    for _ in 0..200 {
        if gw.clients() == 1 {
            break;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    assert_eq!(gw.clients(), 1);

    // the client never reads; the socket fills, then the queue
    let bus = live.bus().clone();
    let blob = "x".repeat(64 * 1024);
    let flood = tokio::task::spawn_blocking(move || {
        for i in 0..2000 {
            bus.publish(Topic::Telemetry, &json!({ "i": i, "blob": blob })).unwrap();
        }
    });
    flood.await.unwrap();
    for _ in 0..500 {
        if gw.clients() == 0 {
            break;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    assert_eq!(gw.clients(), 0, "slow client still attached");

    let mut close = None;
    while let Ok(Some(msg)) = tokio::time::timeout(Duration::from_secs(5), ws.next()).await {
        match msg {
            Ok(Message::Close(frame)) => {
                close = frame;
                break;
            }
            Ok(_) => {}
            Err(_) => break,
        }
    }
    if let Some(frame) = close {
        assert_eq!(frame.code, CloseCode::from(CLOSE_SLOW_CLIENT));
    }
    running.shutdown().await.unwrap();
}

#[tokio::test(flavor = "multi_thread")]
async fn startup_errors() {
    let live = LiveRun::new(RunSnapshot::new("x", PipeDescriptor::default()), Bus::default());
    let bad = GatewayConfig { topics: vec!["bogus".into()], ..GatewayConfig::default() };
    assert!(matches!(Gateway::new(live.clone(), bad), Err(GatewayError::BusUnavailable(_))));

    let gw = Gateway::new(live, GatewayConfig::default()).unwrap();
    let first = gw.bind("127.0.0.1:0".parse().unwrap()).await.unwrap();
    let taken = first.local_addr();
    assert!(matches!(gw.bind(taken).await, Err(GatewayError::BindFailure { .. })));
    first.shutdown().await.unwrap();
}
