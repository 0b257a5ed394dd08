use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use super::partition::PartitionPlan;
use crate::agent::AgentId;
use crate::value::ValueMap;

#[derive(Debug, Clone)]
pub struct WorkerInfo {
    pub name: String,
    pub address: String,
    pub agents: BTreeSet<AgentId>,
    pub last_heartbeat: Instant,
}

/// The master's view of the cluster.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    pub workers: Vec<WorkerInfo>,
    pub round: u32,
    pub environment: ValueMap,
}

impl Registry {
    pub fn register(&mut self, name: String, address: String, now: Instant) -> usize {
        self.workers.push(WorkerInfo { name, address, agents: BTreeSet::new(), last_heartbeat: now });
        self.workers.len() - 1
    }

    pub fn assign(&mut self, plan: &PartitionPlan) {
        for w in &mut self.workers {
            w.agents.clear();
        }
        for (&agent, &w) in &plan.assignment {
            self.workers[w].agents.insert(agent);
        }
    }

    pub fn owner(&self, agent: AgentId) -> Option<usize> {
        self.workers.iter().position(|w| w.agents.contains(&agent))
    }

    pub fn heartbeat(&mut self, worker: usize, now: Instant) {
        if let Some(w) = self.workers.get_mut(worker) {
            w.last_heartbeat = now;
        }
    }

    /// Whether the worker agent sets are disjoint and cover `population` exactly.
    pub fn is_consistent(&self, population: &BTreeSet<AgentId>) -> bool {
        let mut seen: BTreeMap<AgentId, usize> = BTreeMap::new();
        for (i, w) in self.workers.iter().enumerate() {
            for a in &w.agents {
                if seen.insert(*a, i).is_some() {
                    return false;
                }
            }
        }
        seen.keys().eq(population.iter())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assignment_invariants() {
        let now = Instant::now();
        let mut r = Registry::default();
        r.register("a".into(), "x:1".into(), now);
        r.register("b".into(), "x:2".into(), now);
        let plan = PartitionPlan {
            assignment: [(AgentId(0), 0), (AgentId(1), 1), (AgentId(2), 0)].into_iter().collect(),
            worker_count: 2,
            capacity: 2,
        };
        r.assign(&plan);
        let pop: BTreeSet<AgentId> = (0..3).map(AgentId).collect();
        assert!(r.is_consistent(&pop));
        assert_eq!(r.owner(AgentId(1)), Some(1));
        r.workers[1].agents.insert(AgentId(0));
        assert!(!r.is_consistent(&pop));
    }
}
