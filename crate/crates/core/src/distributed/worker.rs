use std::collections::BTreeMap;
use std::net::TcpStream;
use std::time::{Duration, Instant};

use super::batch::{Batcher, DEFAULT_BATCH_AGE, DEFAULT_BATCH_SIZE};
use super::protocol::{Ack, Assign, Channel, EventBatch, Message, MetricsReport, Register};
use super::DistError;
use crate::agent::{AgentId, AgentRecord};
use crate::kernel::{execute_agents, Delivery, ExecOptions, RoundInput, Snapshot, World};
use crate::scenarios::runtime_for;
use crate::value::ValueMap;

#[derive(Debug, Clone, PartialEq)]
pub struct WorkerOptions {
    pub name: String,
    pub connect_timeout: Duration,
    pub parallel: bool,
}

impl Default for WorkerOptions {
    fn default() -> Self {
        WorkerOptions { name: format!("worker-{}", std::process::id()), connect_timeout: Duration::from_secs(10), parallel: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkerSummary {
    pub worker: Option<usize>,
    pub agents: usize,
    pub rounds: u32,
}

struct State {
    world: World,
    agents: BTreeMap<AgentId, AgentRecord>,
    snapshot: Snapshot,
    options: ExecOptions,
}

fn connect(addr: &str, timeout: Duration) -> Result<TcpStream, DistError> {
    let deadline = Instant::now() + timeout;
    loop {
        match TcpStream::connect(addr) {
            Ok(s) => return Ok(s),
            Err(e) if Instant::now() >= deadline => return Err(e.into()),
            Err(_) => std::thread::sleep(Duration::from_millis(20)),
        }
    }
}

fn setup(a: Assign, parallel: bool) -> Result<State, DistError> {
    let runtime = runtime_for(a.spec, a.backend)?;
    Ok(State {
        world: World { runtime, topology: a.topology, master_seed: a.master_seed },
        agents: a.agents.into_iter().map(|r| (r.id, r)).collect(),
        snapshot: Snapshot { views: a.snapshot.into_iter().map(|v| (v.id, v)).collect() },
        options: ExecOptions { parallel, record_transcripts: a.record_transcripts },
    })
}

/// Connect to a master and serve rounds until it sends SHUTDOWN.
pub fn run_worker(addr: &str, options: &WorkerOptions) -> Result<WorkerSummary, DistError> {
    let stream = connect(addr, options.connect_timeout)?;
    stream.set_nodelay(true)?;
    let mut chan = Channel::new(stream);
    let threads = if options.parallel { rayon::current_num_threads() } else { 1 };
    chan.send(&Message::RegisterWorker(Register { name: options.name.clone(), threads }))?;
    let mut summary = WorkerSummary { worker: None, agents: 0, rounds: 0 };
    let mut state: Option<State> = None;
    let mut environment = ValueMap::new();
    let mut pending: Vec<Delivery> = Vec::new();
    loop {
        match chan.recv()? {
            Message::Heartbeat => {
                if summary.worker.is_some() {
                    chan.send(&Message::Heartbeat)?;
                }
            }
            Message::Shutdown => return Ok(summary),
            Message::AssignAgents(a) => {
                summary.worker = Some(a.worker);
                summary.agents = a.agents.len();
                match setup(*a, options.parallel) {
                    Ok(s) => {
                        state = Some(s);
                        chan.send(&Message::Ack(Ack { round: 0, records: Vec::new(), error: None }))?;
                    }
                    Err(e) => {
                        chan.send(&Message::Ack(Ack { round: 0, records: Vec::new(), error: Some(e.to_string()) }))?;
                    }
                }
            }
            Message::StateSync(sync) => {
                let s = state.as_mut().ok_or_else(|| DistError::Protocol("STATE_SYNC before ASSIGN_AGENTS".into()))?;
                environment = sync.environment;
                for v in sync.views {
                    s.snapshot.views.insert(v.id, v);
                }
            }
            Message::EventBatch(batch) => {
                let s = state.as_mut().ok_or_else(|| DistError::Protocol("EVENT_BATCH before ASSIGN_AGENTS".into()))?;
                pending.extend(batch.deliveries);
                if !batch.last {
                    continue;
                }
                let deliveries = std::mem::take(&mut pending);
                let input = RoundInput {
                    round: batch.round,
                    environment: &environment,
                    snapshot: &s.snapshot,
                    deliveries: &deliveries,
                    changed: &[],
                };
                let started = Instant::now();
                match execute_agents(&s.world, &input, &mut s.agents, s.options) {
                    Ok(outcomes) => {
                        let compute_us = started.elapsed().as_micros() as u64;
                        let ran: Vec<AgentId> = outcomes.iter().map(|o| o.agent).collect();
                        let handled = outcomes.iter().map(|o| u64::from(o.handled)).sum();
                        let mut batcher = Batcher::new(DEFAULT_BATCH_SIZE, DEFAULT_BATCH_AGE);
                        for o in outcomes {
                            for out in batcher.push(o, Instant::now()) {
                                let msg = EventBatch { round: batch.round, deliveries: Vec::new(), outcomes: out, last: false };
                                chan.send(&Message::EventBatch(msg))?;
                            }
                        }
                        let rest = batcher.flush().unwrap_or_default();
                        let msg = EventBatch { round: batch.round, deliveries: Vec::new(), outcomes: rest, last: true };
                        chan.send(&Message::EventBatch(msg))?;
                        chan.send(&Message::MetricsReport(MetricsReport {
                            round: batch.round,
                            agents: ran.clone(),
                            events: deliveries.len() as u64,
                            handled,
                            compute_us,
                        }))?;
                        let records = ran.iter().map(|a| s.agents[a].clone()).collect();
                        chan.send(&Message::Ack(Ack { round: batch.round, records, error: None }))?;
                        summary.rounds += 1;
                    }
                    Err(e) => {
                        chan.send(&Message::Ack(Ack { round: batch.round, records: Vec::new(), error: Some(e.to_string()) }))?;
                    }
                }
            }
            other => return Err(DistError::Protocol(format!("worker cannot handle {}", other.msg_type()))),
        }
    }
}
