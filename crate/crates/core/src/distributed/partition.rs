//! Capacity-bounded, topology-aware assignment of agents to workers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::AgentId;
use crate::kernel::Topology;

pub const DEFAULT_SLACK: f64 = 1.1;
pub const REFINEMENT_PASSES: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PartitionError {
    #[error("at least one worker is required")]
    NoWorkers,
    #[error("{workers} workers for {agents} agents")]
    TooManyWorkers { workers: usize, agents: usize },
    #[error("slack must be at least 1, got {0}")]
    BadSlack(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub assignment: BTreeMap<AgentId, usize>,
    pub worker_count: usize,
    pub capacity: usize,
}

impl PartitionPlan {
    pub fn loads(&self) -> Vec<usize> {
        let mut loads = vec![0; self.worker_count];
        for &w in self.assignment.values() {
            loads[w] += 1;
        }
        loads
    }

    pub fn members(&self, worker: usize) -> Vec<AgentId> {
        self.assignment.iter().filter(|(_, w)| **w == worker).map(|(a, _)| *a).collect()
    }

    pub fn edge_cut(&self, topology: &Topology) -> f64 {
        edge_cut(topology, &self.assignment)
    }
}

/// Total weight of edges whose endpoints are on different workers.
pub fn edge_cut(topology: &Topology, assignment: &BTreeMap<AgentId, usize>) -> f64 {
    topology.edges().filter(|(a, b, _)| assignment.get(a) != assignment.get(b)).map(|(_, _, w)| w).sum()
}

/// Agent `i` (in ascending id order) on worker `i mod workers`.
pub fn round_robin(agents: impl IntoIterator<Item = AgentId>, workers: usize) -> BTreeMap<AgentId, usize> {
    let mut ids: Vec<AgentId> = agents.into_iter().collect();
    ids.sort();
    ids.into_iter().enumerate().map(|(i, a)| (a, i % workers.max(1))).collect()
}

pub fn capacity(agents: usize, workers: usize, slack: f64) -> usize {
    let cap = (slack * agents as f64 / workers as f64 - 1e-9).ceil() as usize;
    cap.max(agents.div_ceil(workers))
}

/// Weight from `agent` to each worker.
fn affinity(topology: &Topology, assignment: &BTreeMap<AgentId, usize>, agent: AgentId, workers: usize) -> Vec<f64> {
    let mut w = vec![0.0; workers];
    for &(n, weight) in topology.neighbors(agent) {
        if n != agent {
            w[assignment[&n]] += weight;
        }
    }
    w
}

/// Round-robin start, then refinement passes in id order: each agent moves to
/// the worker it is most strongly connected to when that worker has room. When
/// it is full, the best cut-reducing swap with one of its agents is made instead.
/// Every change strictly lowers the cut, so the result never exceeds round-robin.
pub fn partition(topology: &Topology, workers: usize, slack: f64) -> Result<PartitionPlan, PartitionError> {
    let agents: Vec<AgentId> = topology.agents().collect();
    if workers == 0 {
        return Err(PartitionError::NoWorkers);
    }
    if workers > agents.len() {
        return Err(PartitionError::TooManyWorkers { workers, agents: agents.len() });
    }
    if !(slack >= 1.0) {
        return Err(PartitionError::BadSlack(slack));
    }
    let capacity = capacity(agents.len(), workers, slack);
    let mut assignment = round_robin(agents.iter().copied(), workers);
    let mut loads = vec![0usize; workers];
    for &w in assignment.values() {
        loads[w] += 1;
    }
    const EPS: f64 = 1e-12;
    for _ in 0..REFINEMENT_PASSES {
        let mut changed = false;
        for &u in &agents {
            let cur = assignment[&u];
            let aff = affinity(topology, &assignment, u, workers);
            let mut best = cur;
            for (w, &v) in aff.iter().enumerate() {
                if v > aff[best] + EPS {
                    best = w;
                }
            }
            if best == cur {
                continue;
            }
            if loads[best] < capacity {
                assignment.insert(u, best);
                loads[cur] -= 1;
                loads[best] += 1;
                changed = true;
                continue;
            }
            let gain_u = aff[best] - aff[cur];
            let mut swap: Option<(AgentId, f64)> = None;
            for (&v, &wv) in &assignment {
                if wv != best {
                    continue;
                }
                let av = affinity(topology, &assignment, v, workers);
                let gain = gain_u + av[cur] - av[best] - 2.0 * topology.weight(u, v);
                if gain > EPS && swap.is_none_or(|(_, g)| gain > g + EPS) {
                    swap = Some((v, gain));
                }
            }
            if let Some((v, _)) = swap {
                assignment.insert(u, best);
                assignment.insert(v, cur);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    Ok(PartitionPlan { assignment, worker_count: workers, capacity })
}
