#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use mhqn::io::read_json;
use mhqn_core::control::{program_allocation, HealthPolicy};
use mhqn_core::grid::AllocationPlan;
use mhqn_core::network::{NetworkModel, SimulatedNetwork};
use mhqn_core::topology::{build_topology, Topology, TopologyConfig};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn topology() -> Topology {
    let cfg: TopologyConfig = read_json(&fixture_path("ornl_paper.json")).unwrap();
    build_topology(&cfg).unwrap()
}

pub fn plan(name: &str) -> AllocationPlan {
    read_json(&fixture_path(name)).unwrap()
}

pub fn policy() -> HealthPolicy {
    read_json(&fixture_path("policy_default.json")).unwrap()
}

/// Representative allocation programmed onto the undamaged network.
pub fn network_with(model: NetworkModel) -> SimulatedNetwork {
    let plan = plan("plan_representative.json");
    let state = program_allocation(&model.topology, model.topology.initial_state(), &plan, &BTreeSet::new())
        .unwrap()
        .state;
    SimulatedNetwork::new(model, state, plan)
}

pub fn network() -> SimulatedNetwork {
    network_with(NetworkModel::new(topology()).unwrap())
}
