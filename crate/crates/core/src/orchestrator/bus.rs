// Copyright 2026 The culvertd Authors
// SPDX-License-Identifier: Apache-2.0

//! In-process publish/subscribe bus with a bounded retained buffer per topic.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use crossbeam_channel::{unbounded, Receiver, Sender};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Topic {
    Frames,
    Detections,
    DeficiencyLog,
    Summaries,
    Telemetry,
}

impl Topic {
    pub const ALL: [Topic; 5] = [Topic::Frames, Topic::Detections, Topic::DeficiencyLog, Topic::Summaries, Topic::Telemetry];

    pub fn as_str(self) -> &'static str {
        match self {
            Topic::Frames => "frames",
            Topic::Detections => "detections",
            Topic::DeficiencyLog => "deficiency-log",
            Topic::Summaries => "summaries",
            Topic::Telemetry => "telemetry",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Topic {
    type Err = BusError;

    fn from_str(s: &str) -> Result<Self, BusError> {
        Topic::ALL.into_iter().find(|t| t.as_str() == s).ok_or_else(|| BusError::UnknownTopic(s.to_string()))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BusError {
    #[error("unknown topic {0:?}")]
    UnknownTopic(String),
    #[error("payload does not serialize: {0}")]
    Encode(String),
}

/// A published message. `seq` counts per topic from 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub topic: Topic,
    pub seq: u64,
    pub payload: serde_json::Value,
}

struct TopicState {
    next_seq: u64,
    retained: VecDeque<Envelope>,
    subscribers: Vec<Sender<Envelope>>,
}

struct Inner {
    retain: usize,
    topics: Vec<TopicState>,
}

/// Cheap to clone; clones share state.
#[derive(Clone)]
pub struct Bus {
    inner: Arc<Mutex<Inner>>,
}

impl fmt::Debug for Bus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Bus").finish_non_exhaustive()
    }
}

impl Default for Bus {
    fn default() -> Self {
        Bus::new(1024)
    }
}

impl Bus {
    /// `retain` is the number of messages kept per topic for replay.
    pub fn new(retain: usize) -> Self {
        let topics = Topic::ALL
            .iter()
            .map(|_| TopicState { next_seq: 1, retained: VecDeque::new(), subscribers: Vec::new() })
            .collect();
        Bus { inner: Arc::new(Mutex::new(Inner { retain, topics })) }
    }

    pub fn publish<T: Serialize>(&self, topic: Topic, payload: &T) -> Result<u64, BusError> {
        let payload = serde_json::to_value(payload).map_err(|e| BusError::Encode(e.to_string()))?;
        let mut inner = self.inner.lock().expect("bus lock");
        let retain = inner.retain;
        let st = &mut inner.topics[topic.slot()];
        let env = Envelope { topic, seq: st.next_seq, payload };
        st.next_seq += 1;
        st.subscribers.retain(|s| s.send(env.clone()).is_ok());
        if retain > 0 {
            if st.retained.len() == retain {
                st.retained.pop_front();
            }
            st.retained.push_back(env.clone());
        }
        Ok(env.seq)
    }

    /// Publishes by topic name.
    pub fn publish_named<T: Serialize>(&self, topic: &str, payload: &T) -> Result<u64, BusError> {
        self.publish(topic.parse()?, payload)
    }

    /// Live messages only.
    pub fn subscribe(&self, topic: Topic) -> Receiver<Envelope> {
        let (tx, rx) = unbounded();
        self.inner.lock().expect("bus lock").topics[topic.slot()].subscribers.push(tx);
        rx
    }

    /// Retained messages first, then live ones, with no gap or duplicate.
    pub fn subscribe_with_replay(&self, topic: Topic) -> Receiver<Envelope> {
        let (tx, rx) = unbounded();
        let mut inner = self.inner.lock().expect("bus lock");
        let st = &mut inner.topics[topic.slot()];
        for env in &st.retained {
            let _ = tx.send(env.clone());
        }
        st.subscribers.push(tx);
        rx
    }

    pub fn subscribe_named(&self, topic: &str, replay: bool) -> Result<Receiver<Envelope>, BusError> {
        let t: Topic = topic.parse()?;
        Ok(if replay { self.subscribe_with_replay(t) } else { self.subscribe(t) })
    }

    pub fn retained(&self, topic: Topic) -> Vec<Envelope> {
        self.inner.lock().expect("bus lock").topics[topic.slot()].retained.iter().cloned().collect()
    }

    pub fn published(&self, topic: Topic) -> u64 {
        self.inner.lock().expect("bus lock").topics[topic.slot()].next_seq - 1
    }
}
