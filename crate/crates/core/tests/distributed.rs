mod common;

use std::net::TcpStream;
use std::thread;
use std::time::Duration;

use onesim::distributed::{
    run_simulation_distributed, run_worker, Channel, DistError, DistributedConfig, Master, Message, Register, WorkerOptions,
};
use onesim::kernel::{Simulation, SimulationResult};

use common::{run_local, runtime};

fn over_tcp(scenario: &str, workers: usize, rounds: u32) -> (SimulationResult, Vec<usize>) {
    let config = DistributedConfig { registration_timeout: Duration::from_secs(10), ..DistributedConfig::with_workers(workers) };
    let mut master = Master::bind("127.0.0.1:0", config).unwrap();
    let addr = master.local_addr().unwrap().to_string();
    let handles: Vec<_> = (0..workers)
        .map(|i| {
            let addr = addr.clone();
            thread::spawn(move || {
                let options = WorkerOptions { name: format!("w{i}"), ..WorkerOptions::default() };
                run_worker(&addr, &options).unwrap()
            })
        })
        .collect();
    master.accept_workers().unwrap();
    let mut sim = Simulation::populate(runtime(scenario), 1, 2).unwrap();
    sim.set_max_rounds(rounds);
    let result = sim.run(&mut master).unwrap();
    master.shutdown();
    let agents = handles.into_iter().map(|h| h.join().unwrap().agents).collect();
    (result, agents)
}

#[test]
fn tcp_workers_reproduce_local_runs() {
    for (scenario, workers) in [("public_goods", 3), ("classroom", 2), ("axelrod", 4)] {
        let local = run_local(runtime(scenario), 1, 2, Some(6));
        let (remote, agents) = over_tcp(scenario, workers, 6);
        assert_eq!(local.to_json(), remote.to_json(), "{scenario}");
        assert_eq!(agents.iter().sum::<usize>(), local.final_agents.len(), "{scenario}");
        assert!(agents.iter().all(|&a| a > 0));
    }
}

#[test]
fn loopback_helper_matches_local() {
    let local = run_local(runtime("axelrod"), 4, 4, Some(5));
    let mut sim = Simulation::populate(runtime("axelrod"), 4, 4).unwrap();
    sim.set_max_rounds(5);
    let remote = run_simulation_distributed(sim, &DistributedConfig::with_workers(3)).unwrap();
    assert_eq!(local.to_json(), remote.to_json());
}

#[test]
fn registration_times_out_without_workers() {
    let config = DistributedConfig { registration_timeout: Duration::from_millis(50), ..DistributedConfig::with_workers(2) };
    let mut master = Master::bind("127.0.0.1:0", config).unwrap();
    assert!(matches!(master.accept_workers(), Err(DistError::RegistrationTimeout { registered: 0, expected: 2 })));
}

#[test]
fn lost_worker_aborts_the_run() {
    let config = DistributedConfig { registration_timeout: Duration::from_secs(10), ..DistributedConfig::with_workers(2) };
    let mut master = Master::bind("127.0.0.1:0", config).unwrap();
    let addr = master.local_addr().unwrap().to_string();
    let good = {
        let addr = addr.clone();
        thread::spawn(move || run_worker(&addr, &WorkerOptions::default()))
    };
    let bad = thread::spawn(move || {
        let mut chan = Channel::new(TcpStream::connect(addr).unwrap());
        chan.send(&Message::RegisterWorker(Register { name: "flaky".into(), threads: 1 })).unwrap();
        loop {
            if let Message::AssignAgents(_) = chan.recv().unwrap() {
                return;
            }
        }
    });
    master.accept_workers().unwrap();
    let mut sim = Simulation::populate(runtime("axelrod"), 0, 0).unwrap();
    sim.set_max_rounds(5);
    assert!(sim.run(&mut master).is_err());
    master.shutdown();
    bad.join().unwrap();
    let _ = good.join().unwrap();
}
