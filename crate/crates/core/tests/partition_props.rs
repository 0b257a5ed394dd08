use std::collections::BTreeMap;

use onesim::agent::AgentId;
use onesim::behavior_graph::Relationship;
use onesim::distributed::{capacity, edge_cut, partition, round_robin, PartitionError, DEFAULT_SLACK};
use onesim::kernel::Topology;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_topology(seed: u64, n: u64, degree: f64) -> Topology {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rels = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.random_bool((degree / n as f64).min(1.0)) {
                rels.push(Relationship { a, b, weight: rng.random_range(1..4) as f64 });
            }
        }
    }
    Topology::from_relationships((0..n).map(AgentId), &rels)
}

fn loads(assignment: &BTreeMap<AgentId, usize>, workers: usize) -> Vec<usize> {
    let mut l = vec![0; workers];
    for &w in assignment.values() {
        l[w] += 1;
    }
    l
}

#[test]
fn balanced_over_one_hundred_seeds() {
    for seed in 0..100u64 {
        let n = 20 + seed % 60;
        let workers = 2 + (seed % 5) as usize;
        let t = random_topology(seed, n, 4.0);
        let plan = partition(&t, workers, DEFAULT_SLACK).unwrap();
        let cap = capacity(n as usize, workers, DEFAULT_SLACK);
        assert_eq!(plan.capacity, cap);
        assert_eq!(plan.assignment.len(), n as usize);
        let l = loads(&plan.assignment, workers);
        assert!(l.iter().all(|&x| x <= cap), "seed {seed}: {l:?} cap {cap}");
        let rr = edge_cut(&t, &round_robin(t.agents(), workers));
        assert!(plan.edge_cut(&t) <= rr + 1e-9, "seed {seed}");
    }
}

#[test]
fn rejects_impossible_requests() {
    let t = random_topology(1, 3, 1.0);
    assert_eq!(partition(&t, 0, 1.1), Err(PartitionError::NoWorkers));
    assert!(matches!(partition(&t, 4, 1.1), Err(PartitionError::TooManyWorkers { .. })));
}

#[test]
fn capacity_never_below_even_split() {
    assert_eq!(capacity(10, 4, 1.0), 3);
    assert_eq!(capacity(100, 4, 1.1), 28);
    assert_eq!(capacity(100, 10, 1.1), 11);
}

proptest! {
    #[test]
    fn partition_is_deterministic_and_total(seed in 0u64..10_000, n in 2u64..50, w in 1usize..6) {
        prop_assume!(w as u64 <= n);
        let t = random_topology(seed, n, 3.0);
        let a = partition(&t, w, DEFAULT_SLACK).unwrap();
        let b = partition(&t, w, DEFAULT_SLACK).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.assignment.values().all(|&x| x < w));
        prop_assert!(loads(&a.assignment, w).iter().all(|&x| x <= a.capacity));
    }

    #[test]
    fn round_robin_loads_differ_by_at_most_one(n in 1u64..200, w in 1usize..9) {
        let rr = round_robin((0..n).map(AgentId), w);
        let l = loads(&rr, w);
        prop_assert!(l.iter().max().unwrap() - l.iter().min().unwrap() <= 1);
    }
}
