//! Master/worker execution over TCP.
//!
//! The master keeps the event bus, the log and every agent record; workers
//! run the handlers of the agents assigned to them. Each round the master
//! sends STATE_SYNC (public views changed at the last barrier) and the due
//! deliveries as EVENT_BATCH frames; each worker answers with its outcomes,
//! a METRICS_REPORT and an ACK carrying the records it mutated. Handler
//! results only depend on the barrier snapshot, so any worker count produces
//! the same serialized result as a local run.

mod batch;
mod master;
mod partition;
mod protocol;
mod registry;
mod wire;
mod worker;

use std::sync::Arc;

use thiserror::Error;

pub use batch::{batch_events, Batcher, DEFAULT_BATCH_AGE, DEFAULT_BATCH_SIZE};
pub use master::{DistributedConfig, Master};
pub use partition::{capacity, edge_cut, partition, round_robin, PartitionError, PartitionPlan, DEFAULT_SLACK, REFINEMENT_PASSES};
pub use protocol::{Ack, Assign, Channel, EventBatch, Message, MetricsReport, Register, StateSync};
pub use registry::{Registry, WorkerInfo};
pub use wire::{decode_frame, encode_frame, read_frame, write_frame, FrameDecoder, MsgType, WireError, WireFrame, HEADER_LEN, MAGIC, MAX_PAYLOAD, VERSION};
pub use worker::{run_worker, WorkerOptions, WorkerSummary};

use crate::kernel::{KernelError, ScenarioRuntime, Simulation, SimulationResult};
use crate::scenarios::LoadError;

#[derive(Debug, Error)]
pub enum DistError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("only {registered} of {expected} workers registered in time")]
    RegistrationTimeout { registered: usize, expected: usize },
    #[error("worker {worker} lost: {reason}")]
    WorkerLost { worker: usize, reason: String },
    #[error("worker {worker} failed: {message}")]
    WorkerFailed { worker: usize, message: String },
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Load(#[from] LoadError),
}

/// Run `sim` to termination on `config.workers` workers, each a thread in this
/// process talking to the master over loopback TCP.
pub fn run_simulation_distributed(sim: Simulation, config: &DistributedConfig) -> Result<SimulationResult, DistError> {
    let mut master = Master::bind("127.0.0.1:0", config.clone())?;
    let addr = master.local_addr()?.to_string();
    let handles: Vec<_> = (0..config.workers)
        .map(|i| {
            let addr = addr.clone();
            let opts = WorkerOptions { name: format!("local-{i}"), ..WorkerOptions::default() };
            std::thread::spawn(move || run_worker(&addr, &opts))
        })
        .collect();
    let result = master.accept_workers().map_err(DistError::from).and_then(|()| sim.run(&mut master).map_err(DistError::from));
    master.shutdown();
    drop(master);
    for h in handles {
        match h.join() {
            Ok(Ok(_)) => {}
            Ok(Err(e)) if result.is_ok() => return Err(e),
            Ok(Err(_)) => {}
            Err(_) => return Err(DistError::Protocol("worker thread panicked".into())),
        }
    }
    result
}

/// Populate and run a scenario across in-process workers.
pub fn run_distributed(
    runtime: Arc<ScenarioRuntime>,
    population_seed: u64,
    master_seed: u64,
    config: &DistributedConfig,
) -> Result<SimulationResult, DistError> {
    let sim = Simulation::populate(runtime, population_seed, master_seed)?;
    run_simulation_distributed(sim, config)
}
