// Copyright 2026 The culvertd Authors
// SPDX-License-Identifier: Apache-2.0

//! The run loop.
//!
//! Detection, consolidation, summarization and telemetry are modelled as
//! stages exchanging events on one timeline. Detection is a single server
//! fed by a bounded drop-oldest frame queue; summarization is a single
//! server with its own queue. Under [`VirtualClock`] stage costs advance
//! simulated time only, so a run finishes as fast as the host allows; under
//! [`WallClock`] each event waits for its wall-clock time.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use super::{
    adapt, compile_report, window_median_ms, BudgetSpec, Bus, Clock, DegradationLevel, DegradationState, LiveRun,
    QueueDepths, RunConfig, RunSnapshot, RunStatus, TelemetrySample, Topic, Transition, VirtualClock, WallClock,
};
use crate::detection::{DeficiencyLog, Detector, StubDetector};
use crate::inspect::{Detection, Frame, InspectionReport, StructuredSummary, TelemetryDigest};
use crate::sim::{replay, ReplayFrame, Scenario, FRAME_HEIGHT, FRAME_WIDTH};
use crate::summarize::{template_summarize, ConditioningContext, CostModel, PipeDescriptor, Summarizer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Detection,
    Consolidation,
    Summarization,
    Telemetry,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{stage:?} stage failed: {message}")]
    StageFailure { stage: Stage, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
}

fn failure(stage: Stage) -> impl Fn(super::BusError) -> PipelineError {
    move |e| PipelineError::StageFailure { stage, message: e.to_string() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerKind {
    Significance,
    SegmentComplete,
    StreamEnd,
}

/// Timing of one completed summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTiming {
    pub record_id: u64,
    pub trigger: TriggerKind,
    pub trigger_s: f64,
    pub start_s: f64,
    pub done_s: f64,
    /// Held back while degraded; excluded from the latency control signal.
    pub deferred: bool,
    pub fell_back: bool,
}

impl SummaryTiming {
    pub fn end_to_end_s(&self) -> f64 {
        self.done_s - self.trigger_s
    }

    pub fn service_s(&self) -> f64 {
        self.done_s - self.start_s
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunStats {
    pub segment_events: u32,
    pub significance_events: u32,
    pub summaries: Vec<SummaryTiming>,
    pub transitions: Vec<Transition>,
    /// Summaries finished for records that were merged away meanwhile.
    pub discarded_summaries: u32,
    pub summarizer_busy_s: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: InspectionReport,
    pub telemetry: Vec<TelemetrySample>,
    pub stats: RunStats,
}

#[derive(Debug, Clone)]
struct Request {
    record_id: u64,
    kind: TriggerKind,
    trigger_s: f64,
    significant: bool,
    deferred: bool,
}

struct InFlight {
    req: Request,
    /// Start of the latency charged to the control signal.
    signal_from_s: f64,
    summary: StructuredSummary,
    start_s: f64,
    done_s: f64,
    fell_back: bool,
}

/// Accumulators reset at each telemetry tick.
#[derive(Default)]
struct Period {
    detect_ms: Vec<f64>,
    summarize_ms: Vec<f64>,
    end_to_end_ms: Vec<f64>,
}

pub struct Pipeline {
    cfg: RunConfig,
    detector: Box<dyn Detector>,
    summarizer: Box<dyn Summarizer>,
    clock: Box<dyn Clock>,
    live: Arc<LiveRun>,
}

impl Pipeline {
    pub fn new(
        cfg: RunConfig,
        detector: Box<dyn Detector>,
        summarizer: Box<dyn Summarizer>,
        clock: Box<dyn Clock>,
        live: Arc<LiveRun>,
    ) -> Self {
        Pipeline { cfg, detector, summarizer, clock, live }
    }

    pub fn run<I: IntoIterator<Item = ReplayFrame>>(self, source: I) -> Result<RunOutput, PipelineError> {
        self.cfg.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        let pipe = self.live.snapshot().pipe;
        self.live.update(|s| s.status = RunStatus::Running);
        let mut run = Run::new(self, pipe);
        let result = run.drive(source.into_iter());
        match result {
            Ok(()) => Ok(run.finish()),
            Err(e) => {
                run.p.live.update(|s| {
                    s.status = RunStatus::Failed;
                    s.error = Some(e.to_string());
                });
                Err(e)
            }
        }
    }
}

struct Run {
    p: Pipeline,
    bus: Bus,
    pipe: PipeDescriptor,
    now: f64,

    frame_q: VecDeque<ReplayFrame>,
    detecting: Option<(ReplayFrame, f64)>,
    log: DeficiencyLog,
    absorbed_into: HashMap<u64, u64>,

    queue: VecDeque<Request>,
    deferred: VecDeque<Request>,
    in_flight: Option<InFlight>,
    pending: BTreeSet<u64>,
    summaries: BTreeMap<u64, StructuredSummary>,
    boundaries_passed: u64,
    flushed: bool,
    last_deferred_done_s: f64,

    state: DegradationState,
    next_tick: f64,
    tick_index: u64,
    ticks_per_window: u64,
    period: Period,
    samples: Vec<TelemetrySample>,
    processed_at: VecDeque<f64>,
    completed_at: VecDeque<f64>,

    captured: u64,
    processed: u64,
    dropped: u64,
    skipped: u64,
    detections: u64,
    failures: u64,
    peak_memory_gb: f64,
    stats: RunStats,
}

impl Run {
    fn new(p: Pipeline, pipe: PipeDescriptor) -> Self {
        let period = p.cfg.telemetry_period_s;
        let ticks_per_window = ((p.cfg.degradation.window_s / period).round() as u64).max(1);
        let bus = p.live.bus().clone();
        Run {
            p,
            bus,
            pipe,
            now: 0.0,
            frame_q: VecDeque::new(),
            detecting: None,
            log: DeficiencyLog::new(),
            absorbed_into: HashMap::new(),
            queue: VecDeque::new(),
            deferred: VecDeque::new(),
            in_flight: None,
            pending: BTreeSet::new(),
            summaries: BTreeMap::new(),
            boundaries_passed: 0,
            flushed: false,
            last_deferred_done_s: f64::NEG_INFINITY,
            state: DegradationState::default(),
            next_tick: period,
            tick_index: 0,
            ticks_per_window,
            period: Period::default(),
            samples: Vec::new(),
            processed_at: VecDeque::new(),
            completed_at: VecDeque::new(),
            captured: 0,
            processed: 0,
            dropped: 0,
            skipped: 0,
            detections: 0,
            failures: 0,
            peak_memory_gb: 0.0,
            stats: RunStats::default(),
        }
    }

    fn budgets(&self) -> &BudgetSpec {
        &self.p.cfg.budgets
    }

    fn drive<S: Iterator<Item = ReplayFrame>>(&mut self, source: S) -> Result<(), PipelineError> {
        let mut source = source.peekable();
        loop {
            if source.peek().is_none() && self.frame_q.is_empty() && self.detecting.is_none() && !self.flushed {
                self.flush()?;
            }
            if self.flushed && self.queue.is_empty() && self.deferred.is_empty() && self.in_flight.is_none() {
                break;
            }

            // Equal times resolve in this order: summary done, detection done, frame arrival, tick.
            let mut next: Option<(f64, u8)> = None;
            let mut consider = |t: f64, prio: u8| {
                if next.is_none_or(|(bt, bp)| t < bt || (t == bt && prio < bp)) {
                    next = Some((t, prio));
                }
            };
            if let Some(f) = &self.in_flight {
                consider(f.done_s, 0);
            }
            if let Some((_, done)) = &self.detecting {
                consider(*done, 1);
            }
            if let Some(f) = source.peek() {
                consider(f.frame.capture_time, 2);
            }
            consider(self.next_tick, 3);
            let (t, kind) = next.expect("tick is always scheduled");

            self.now = self.now.max(t);
            self.p.clock.wait_until(self.now);
            match kind {
                0 => self.complete_summary()?,
                1 => self.complete_detection()?,
                2 => {
                    let f = source.next().expect("peeked");
                    self.arrive(f)?;
                }
                _ => self.tick()?,
            }
            self.start_detection();
            self.start_summary()?;
        }
        if self.samples.last().is_none_or(|s| s.t_s < self.now) {
            self.tick()?;
        }
        Ok(())
    }

    fn arrive(&mut self, f: ReplayFrame) -> Result<(), PipelineError> {
        self.captured += 1;
        self.bus
            .publish(
                Topic::Frames,
                &json!({
                    "frame_id": f.frame.frame_id,
                    "image_ref": f.frame.image_ref,
                    "pose": f.frame.pose,
                    "capture_time": f.frame.capture_time,
                }),
            )
            .map_err(failure(Stage::Ingest))?;
        if self.state.level >= DegradationLevel::ReducedFps && f.frame.frame_id % 2 == 1 {
            self.skipped += 1;
            return Ok(());
        }
        if self.frame_q.len() >= self.p.cfg.frame_queue_capacity {
            self.frame_q.pop_front();
            self.dropped += 1;
        }
        self.frame_q.push_back(f);
        Ok(())
    }

    fn start_detection(&mut self) {
        if self.detecting.is_none() {
            if let Some(f) = self.frame_q.pop_front() {
                let done = self.now + self.p.detector.inference_delay().as_secs_f64();
                self.detecting = Some((f, done));
            }
        }
    }

    fn complete_detection(&mut self) -> Result<(), PipelineError> {
        let (f, _) = self.detecting.take().expect("detection in progress");
        let ReplayFrame { frame, truth } = f;
        let found: Vec<Detection> = self.p.detector.detect(&frame, &truth);
        self.processed += 1;
        self.processed_at.push_back(self.now);
        self.period.detect_ms.push((self.now - frame.capture_time) * 1000.0);

        for d in found {
            self.detections += 1;
            self.bus.publish(Topic::Detections, &d).map_err(failure(Stage::Detection))?;
            let out = self.log.consolidate(d, &self.p.cfg.dedup);
            for a in &out.absorbed {
                self.absorbed_into.insert(*a, out.record_id);
                self.summaries.remove(a);
                if self.pending.remove(a) {
                    self.queue.retain(|r| r.record_id != *a);
                    self.deferred.retain(|r| r.record_id != *a);
                }
            }
            let record = self.log.get(out.record_id).expect("consolidated record exists");
            let event = if out.created {
                "created"
            } else if out.absorbed.is_empty() {
                "updated"
            } else {
                "merged"
            };
            self.bus
                .publish(Topic::DeficiencyLog, &json!({"event": event, "record": record, "absorbed": out.absorbed}))
                .map_err(failure(Stage::Consolidation))?;
        }

        let seg = self.p.cfg.trigger.segment_length_m;
        let reached = (frame.pose.chainage / seg + 1e-9).floor() as u64;
        let crossed = reached > self.boundaries_passed;
        self.boundaries_passed = self.boundaries_passed.max(reached);
        self.sweep(&frame, crossed);
        self.publish_state();
        Ok(())
    }

    /// Queues every record that is due: significant ones at once, the rest
    /// once their segment is complete.
    fn sweep(&mut self, frame: &Frame, crossed: bool) {
        let boundary = self.boundaries_passed as f64 * self.p.cfg.trigger.segment_length_m;
        let trig = &self.p.cfg.trigger;
        let mut due = Vec::new();
        for r in self.log.records() {
            if self.summaries.contains_key(&r.record_id) || self.pending.contains(&r.record_id) {
                continue;
            }
            let significant = trig.is_significant(r.representative.class, r.representative.confidence);
            if significant {
                due.push((r.record_id, TriggerKind::Significance, true));
            } else if r.first_pose.chainage < boundary - 1e-9 {
                due.push((r.record_id, TriggerKind::SegmentComplete, false));
            }
        }
        if crossed && due.iter().any(|d| d.1 == TriggerKind::SegmentComplete) {
            self.stats.segment_events += 1;
        }
        for (record_id, kind, significant) in due {
            if kind == TriggerKind::Significance {
                self.stats.significance_events += 1;
            }
            self.enqueue(Request { record_id, kind, trigger_s: frame.capture_time, significant, deferred: false });
        }
    }

    fn enqueue(&mut self, mut req: Request) {
        self.pending.insert(req.record_id);
        if self.state.level == DegradationLevel::DeferNoncritical && !req.significant {
            req.deferred = true;
            self.deferred.push_back(req);
        } else {
            self.queue.push_back(req);
        }
    }

    /// End of stream: everything still unsummarized is queued, deferred work included.
    fn flush(&mut self) -> Result<(), PipelineError> {
        self.flushed = true;
        let ids: Vec<u64> = self
            .log
            .records()
            .iter()
            .map(|r| r.record_id)
            .filter(|id| !self.summaries.contains_key(id) && !self.pending.contains(id))
            .collect();
        for record_id in ids {
            let significant = self.log.get(record_id).is_some_and(|r| {
                self.p.cfg.trigger.is_significant(r.representative.class, r.representative.confidence)
            });
            self.pending.insert(record_id);
            self.queue.push_back(Request {
                record_id,
                kind: TriggerKind::StreamEnd,
                trigger_s: self.now,
                significant,
                deferred: false,
            });
        }
        self.queue.extend(self.deferred.drain(..));
        Ok(())
    }

    fn start_summary(&mut self) -> Result<(), PipelineError> {
        if self.in_flight.is_some() {
            return Ok(());
        }
        let req = match self.queue.pop_front() {
            Some(r) => r,
            None if self.state.level == DegradationLevel::Normal => match self.deferred.pop_front() {
                Some(r) => r,
                None => return Ok(()),
            },
            None => return Ok(()),
        };
        let Some(record) = self.log.get(req.record_id).cloned() else {
            self.pending.remove(&req.record_id);
            return Ok(());
        };
        let ctx = ConditioningContext::for_record(&record, &self.pipe);
        let cost = self.p.summarizer.cost_model(self.now);
        let wall = Instant::now();
        let result = self.p.summarizer.summarize(&record, &ctx);
        let measured = wall.elapsed();
        let service = match cost {
            CostModel::Emulated(d) => d,
            CostModel::Measured => measured,
        }
        .as_secs_f64();
        let (summary, fell_back) = match result {
            Ok(s) => (s, false),
            Err(_) => {
                self.failures += 1;
                (template_summarize(&record, &ctx), true)
            }
        };
        // Waiting behind drained backlog is not charged to live requests.
        let signal_from_s = req.trigger_s.max(self.last_deferred_done_s);
        self.in_flight =
            Some(InFlight { req, signal_from_s, summary, start_s: self.now, done_s: self.now + service, fell_back });
        Ok(())
    }

    fn complete_summary(&mut self) -> Result<(), PipelineError> {
        let f = self.in_flight.take().expect("summary in flight");
        let id = f.req.record_id;
        self.pending.remove(&id);
        self.stats.summarizer_busy_s += f.done_s - f.start_s;
        if f.req.deferred {
            self.last_deferred_done_s = f.done_s;
        }
        if self.log.get(id).is_none() {
            // merged away while in flight; the absorbing record is picked up by a later sweep or the flush
            self.stats.discarded_summaries += 1;
            if self.flushed {
                self.flushed = false;
            }
            return Ok(());
        }
        let timing = SummaryTiming {
            record_id: id,
            trigger: f.req.kind,
            trigger_s: f.req.trigger_s,
            start_s: f.start_s,
            done_s: f.done_s,
            deferred: f.req.deferred,
            fell_back: f.fell_back,
        };
        self.period.summarize_ms.push(timing.service_s() * 1000.0);
        if !timing.deferred {
            self.period.end_to_end_ms.push((f.done_s - f.signal_from_s) * 1000.0);
        }
        self.completed_at.push_back(self.now);
        self.bus
            .publish(
                Topic::Summaries,
                &json!({
                    "record_id": id,
                    "summary": f.summary,
                    "trigger": timing.trigger,
                    "end_to_end_s": timing.end_to_end_s(),
                }),
            )
            .map_err(failure(Stage::Summarization))?;
        self.summaries.insert(id, f.summary);
        self.stats.summaries.push(timing);
        self.publish_state();
        Ok(())
    }

    fn memory_gb(&self) -> f64 {
        let frame_bytes = (FRAME_WIDTH * FRAME_HEIGHT * 3) as f64;
        let buffered = (self.frame_q.len() + usize::from(self.detecting.is_some())) as f64 * frame_bytes;
        let detector = crate::detection::RAPID_SCAN_PARAMS * 4.0;
        self.p.cfg.model.memory_gb + (buffered + detector) / 1e9
    }

    fn trailing_rate(events: &mut VecDeque<f64>, now: f64, span: f64) -> f64 {
        while events.front().is_some_and(|t| *t <= now - span) {
            events.pop_front();
        }
        let denom = span.min(now);
        if denom > 0.0 {
            events.len() as f64 / denom
        } else {
            0.0
        }
    }

    fn tick(&mut self) -> Result<(), PipelineError> {
        let t = self.now;
        self.tick_index += 1;
        self.next_tick = (self.tick_index + 1) as f64 * self.p.cfg.telemetry_period_s;
        let period = std::mem::take(&mut self.period);
        let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);

        let in_flight_age = self
            .in_flight
            .as_ref()
            .filter(|f| !f.req.deferred)
            .map(|f| (t - f.signal_from_s) * 1000.0);
        let end_to_end_ms = period.end_to_end_ms.iter().copied().chain(in_flight_age).reduce(f64::max);

        let window = self.p.cfg.degradation.window_s;
        let memory_gb = self.memory_gb();
        self.peak_memory_gb = self.peak_memory_gb.max(memory_gb);
        let mut sample = TelemetrySample {
            t_s: t,
            detect_ms: mean(&period.detect_ms),
            summarize_ms: mean(&period.summarize_ms),
            end_to_end_ms,
            memory_gb,
            queue: QueueDepths {
                frames: self.frame_q.len(),
                summaries: self.queue.len() + usize::from(self.in_flight.is_some()),
                deferred: self.deferred.len(),
            },
            summaries_per_s: Self::trailing_rate(&mut self.completed_at, t, window),
            fps: Self::trailing_rate(&mut self.processed_at, t, window),
            frames_dropped: self.dropped,
            frames_skipped: self.skipped,
            level: self.state.level,
            transition: None,
        };

        if self.tick_index % self.ticks_per_window == 0 {
            let from = t - window;
            let mut recent: Vec<TelemetrySample> =
                self.samples.iter().rev().take_while(|s| s.t_s > from + 1e-9).cloned().collect();
            recent.push(sample.clone());
            let next = adapt(&self.state, &recent, self.budgets(), &self.p.cfg.degradation, t);
            if next.level != self.state.level {
                let tr = Transition {
                    from: self.state.level,
                    to: next.level,
                    at_s: t,
                    window_median_ms: window_median_ms(&recent),
                };
                self.apply_transition(next);
                sample.level = next.level;
                sample.transition = Some(tr);
                self.stats.transitions.push(tr);
            }
        }

        self.bus.publish(Topic::Telemetry, &sample).map_err(failure(Stage::Telemetry))?;
        self.samples.push(sample.clone());
        let level = self.state.level;
        self.p.live.update(|s| {
            s.latest = Some(sample);
            s.level = level;
        });
        Ok(())
    }

    fn apply_transition(&mut self, next: DegradationState) {
        self.state = next;
        if next.level == DegradationLevel::DeferNoncritical {
            let (keep, defer): (VecDeque<Request>, VecDeque<Request>) =
                self.queue.drain(..).partition(|r| r.significant);
            self.queue = keep;
            self.deferred.extend(defer.into_iter().map(|mut r| {
                r.deferred = true;
                r
            }));
        }
    }

    fn digest(&self) -> TelemetryDigest {
        let live: Vec<f64> =
            self.stats.summaries.iter().filter(|s| !s.deferred).map(SummaryTiming::end_to_end_s).collect();
        let median = if live.is_empty() {
            None
        } else {
            let mut v = live.clone();
            v.sort_by(f64::total_cmp);
            let n = v.len();
            Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
        };
        let n = self.stats.summaries.len();
        TelemetryDigest {
            frames_captured: self.captured,
            frames_processed: self.processed,
            frames_dropped: self.dropped,
            frames_skipped: self.skipped,
            detections: self.detections,
            summaries: n as u64,
            summary_failures: self.failures,
            median_end_to_end_s: median,
            mean_end_to_end_s: (!live.is_empty()).then(|| live.iter().sum::<f64>() / live.len() as f64),
            saturated_throughput: (self.stats.summarizer_busy_s > 0.0).then(|| n as f64 / self.stats.summarizer_busy_s),
            degradation_transitions: self.stats.transitions.len() as u32,
            peak_memory_gb: self.peak_memory_gb,
            duration_s: self.now,
        }
    }

    fn publish_state(&self) {
        let records = self.log.records().to_vec();
        let summaries = self.summaries.clone();
        let digest = self.digest();
        self.p.live.update(|s| {
            s.records = records;
            s.summaries = summaries;
            s.digest = digest;
        });
    }

    fn finish(mut self) -> RunOutput {
        let digest = self.digest();
        let records = std::mem::take(&mut self.log).into_records();
        let summaries = std::mem::take(&mut self.summaries);
        let report = self.p.live.update(|s| {
            s.records = records;
            s.summaries = summaries;
            s.digest = digest;
            s.status = RunStatus::Finished;
            compile_report(s)
        });
        RunOutput { report, telemetry: self.samples, stats: self.stats }
    }
}

/// Run id derived from the scenario.
pub fn run_id_for(scenario: &Scenario) -> String {
    format!("{}-{}", scenario.name, scenario.seed)
}

/// Runs a scenario with the stub detector and the configured summarizer,
/// publishing into `live`.
pub fn run_scenario_live(
    scenario: &Scenario,
    cfg: &RunConfig,
    realtime: bool,
    live: Arc<LiveRun>,
) -> Result<RunOutput, PipelineError> {
    cfg.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
    scenario.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
    let summarizer = cfg.summarizer.build().map_err(|e| PipelineError::Config(e.to_string()))?;
    let clock: Box<dyn Clock> = if realtime { Box::new(WallClock::new()) } else { Box::new(VirtualClock) };
    live.reset(RunSnapshot::new(run_id_for(scenario), scenario.pipe.clone()));
    let pipeline = Pipeline::new(
        cfg.clone(),
        Box::new(StubDetector::new(cfg.detector.clone())),
        summarizer,
        clock,
        live,
    );
    pipeline.run(replay(scenario, false))
}

/// Runs a scenario on a private bus.
pub fn run_pipeline(scenario: &Scenario, cfg: &RunConfig, realtime: bool) -> Result<RunOutput, PipelineError> {
    let live = LiveRun::new(RunSnapshot::new(run_id_for(scenario), scenario.pipe.clone()), Bus::new(cfg.bus_retain));
    run_scenario_live(scenario, cfg, realtime, live)
}
