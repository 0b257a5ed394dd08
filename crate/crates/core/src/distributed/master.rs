use std::collections::BTreeMap;
use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::time::{Duration, Instant};

use super::batch::{Batcher, DEFAULT_BATCH_AGE, DEFAULT_BATCH_SIZE};
use super::partition::{partition, PartitionPlan, DEFAULT_SLACK};
use super::protocol::{Ack, Assign, Channel, EventBatch, Message, MetricsReport, StateSync};
use super::registry::Registry;
use super::DistError;
use crate::agent::{AgentId, AgentRecord};
use crate::kernel::{AgentOutcome, Delivery, Executor, KernelError, RoundInput, World};

#[derive(Debug, Clone, PartialEq)]
pub struct DistributedConfig {
    pub workers: usize,
    pub slack: f64,
    pub batch_size: usize,
    pub batch_age: Duration,
    pub registration_timeout: Duration,
    pub record_transcripts: bool,
}

impl Default for DistributedConfig {
    fn default() -> Self {
        DistributedConfig {
            workers: 1,
            slack: DEFAULT_SLACK,
            batch_size: DEFAULT_BATCH_SIZE,
            batch_age: DEFAULT_BATCH_AGE,
            registration_timeout: Duration::from_secs(30),
            record_transcripts: false,
        }
    }
}

impl DistributedConfig {
    pub fn with_workers(workers: usize) -> Self {
        DistributedConfig { workers, ..Self::default() }
    }
}

/// Coordinator side of a cluster; acts as the kernel's executor.
pub struct Master {
    config: DistributedConfig,
    listener: TcpListener,
    peers: Vec<Channel<TcpStream>>,
    registry: Registry,
    plan: Option<PartitionPlan>,
    reports: Vec<MetricsReport>,
}

impl std::fmt::Debug for Master {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Master").field("workers", &self.peers.len()).field("round", &self.registry.round).finish()
    }
}

impl Master {
    pub fn bind(addr: impl ToSocketAddrs, config: DistributedConfig) -> Result<Self, DistError> {
        let listener = TcpListener::bind(addr)?;
        Ok(Master { config, listener, peers: Vec::new(), registry: Registry::default(), plan: None, reports: Vec::new() })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn plan(&self) -> Option<&PartitionPlan> {
        self.plan.as_ref()
    }

    /// Per-worker, per-round reports received so far.
    pub fn reports(&self) -> &[MetricsReport] {
        &self.reports
    }

    /// Block until `config.workers` workers have registered.
    pub fn accept_workers(&mut self) -> Result<(), DistError> {
        let deadline = Instant::now() + self.config.registration_timeout;
        self.listener.set_nonblocking(true)?;
        while self.peers.len() < self.config.workers {
            match self.listener.accept() {
                Ok((stream, addr)) => {
                    stream.set_nonblocking(false)?;
                    stream.set_nodelay(true)?;
                    let mut chan = Channel::new(stream);
                    let Message::RegisterWorker(reg) = chan.recv()? else {
                        return Err(DistError::Protocol(format!("{addr} did not register")));
                    };
                    self.registry.register(reg.name, addr.to_string(), Instant::now());
                    chan.send(&Message::Heartbeat)?;
                    self.peers.push(chan);
                }
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                    if Instant::now() >= deadline {
                        return Err(DistError::RegistrationTimeout {
                            registered: self.peers.len(),
                            expected: self.config.workers,
                        });
                    }
                    std::thread::sleep(Duration::from_millis(2));
                }
                Err(e) => return Err(e.into()),
            }
        }
        self.listener.set_nonblocking(false)?;
        Ok(())
    }

    pub fn shutdown(&mut self) {
        for chan in &mut self.peers {
            let _ = chan.send(&Message::Shutdown);
        }
        self.peers.clear();
    }

    fn assign(
        &mut self,
        world: &World,
        input: &RoundInput<'_>,
        agents: &BTreeMap<AgentId, AgentRecord>,
    ) -> Result<(), DistError> {
        let plan = partition(&world.topology, self.peers.len(), self.config.slack)?;
        self.registry.assign(&plan);
        let snapshot: Vec<_> = input.snapshot.views.values().cloned().collect();
        for (w, chan) in self.peers.iter_mut().enumerate() {
            let owned = plan.members(w).into_iter().map(|a| agents[&a].clone()).collect();
            let msg = Assign {
                worker: w,
                spec: world.runtime.spec.clone(),
                backend: world.runtime.backend_kind.clone(),
                master_seed: world.master_seed,
                record_transcripts: self.config.record_transcripts,
                topology: world.topology.clone(),
                agents: owned,
                snapshot: snapshot.clone(),
            };
            chan.send(&Message::AssignAgents(Box::new(msg))).map_err(|e| lost(w, e))?;
        }
        for (w, chan) in self.peers.iter_mut().enumerate() {
            match chan.recv().map_err(|e| lost(w, e))? {
                Message::Ack(Ack { error: Some(message), .. }) => return Err(DistError::WorkerFailed { worker: w, message }),
                Message::Ack(_) => self.registry.heartbeat(w, Instant::now()),
                other => return Err(unexpected(w, &other)),
            }
        }
        self.plan = Some(plan);
        Ok(())
    }

    fn run_round(
        &mut self,
        world: &World,
        input: &RoundInput<'_>,
        agents: &mut BTreeMap<AgentId, AgentRecord>,
    ) -> Result<Vec<AgentOutcome>, DistError> {
        if self.peers.is_empty() {
            return Err(DistError::Protocol("no registered workers".into()));
        }
        if self.plan.is_none() {
            self.assign(world, input, agents)?;
        }
        let plan = self.plan.as_ref().expect("assigned above");
        let views: Vec<_> = input.changed.iter().filter_map(|a| input.snapshot.get(*a).cloned()).collect();
        let mut per_worker: Vec<Vec<Delivery>> = vec![Vec::new(); self.peers.len()];
        for d in input.deliveries {
            let mut split: BTreeMap<usize, Vec<AgentId>> = BTreeMap::new();
            for r in &d.recipients {
                if let Some(&w) = plan.assignment.get(r) {
                    split.entry(w).or_default().push(*r);
                }
            }
            for (w, recipients) in split {
                per_worker[w].push(Delivery { event: d.event.clone(), recipients });
            }
        }
        for (w, (chan, deliveries)) in self.peers.iter_mut().zip(per_worker).enumerate() {
            let sync = StateSync { round: input.round, environment: input.environment.clone(), views: views.clone() };
            chan.send(&Message::StateSync(sync)).map_err(|e| lost(w, e))?;
            let mut batcher = Batcher::new(self.config.batch_size, self.config.batch_age);
            for d in deliveries {
                for batch in batcher.push(d, Instant::now()) {
                    let msg = EventBatch { round: input.round, deliveries: batch, outcomes: Vec::new(), last: false };
                    chan.send(&Message::EventBatch(msg)).map_err(|e| lost(w, e))?;
                }
            }
            let rest = batcher.flush().unwrap_or_default();
            let msg = EventBatch { round: input.round, deliveries: rest, outcomes: Vec::new(), last: true };
            chan.send(&Message::EventBatch(msg)).map_err(|e| lost(w, e))?;
        }
        let mut outcomes = Vec::new();
        for (w, chan) in self.peers.iter_mut().enumerate() {
            loop {
                match chan.recv().map_err(|e| lost(w, e))? {
                    Message::EventBatch(b) => outcomes.extend(b.outcomes),
                    Message::MetricsReport(r) => self.reports.push(r),
                    Message::Heartbeat => {}
                    Message::Ack(Ack { error: Some(message), .. }) => {
                        return Err(DistError::WorkerFailed { worker: w, message });
                    }
                    Message::Ack(ack) => {
                        for rec in ack.records {
                            agents.insert(rec.id, rec);
                        }
                        break;
                    }
                    other => return Err(unexpected(w, &other)),
                }
            }
            self.registry.heartbeat(w, Instant::now());
        }
        self.registry.round = input.round;
        self.registry.environment = input.environment.clone();
        outcomes.sort_by_key(|o| o.agent);
        Ok(outcomes)
    }
}

fn lost(worker: usize, e: DistError) -> DistError {
    DistError::WorkerLost { worker, reason: e.to_string() }
}

fn unexpected(worker: usize, msg: &Message) -> DistError {
    DistError::Protocol(format!("unexpected {} from worker {worker}", msg.msg_type()))
}

impl Executor for Master {
    fn execute(
        &mut self,
        world: &World,
        input: &RoundInput<'_>,
        agents: &mut BTreeMap<AgentId, AgentRecord>,
    ) -> Result<Vec<AgentOutcome>, KernelError> {
        self.run_round(world, input, agents).map_err(|e| {
            self.shutdown();
            KernelError::Execution(e.to_string())
        })
    }
}

impl Drop for Master {
    fn drop(&mut self) {
        self.shutdown();
    }
}
