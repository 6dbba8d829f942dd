//! Shared fixtures for the benchmarks.

use isac_pf_core::filters::{init_cloud, ParticleCloud};
use isac_pf_core::harness::build_scenario;
use isac_pf_core::{Observation, Scenario, ScenarioSpec};

/// Desk scenario with an `n_ant x n_ant` array, its first observation and
/// the initial cloud.
pub fn desk_fixture(n_ant: usize) -> (Scenario, Observation, ParticleCloud) {
    let mut spec = ScenarioSpec::desk();
    spec.radar.n_tx = n_ant;
    spec.radar.n_rx = n_ant;
    let sc = build_scenario(&spec).expect("desk scenario");
    let obs = sc.observe(0, 0, 1).expect("observation");
    let cloud = init_cloud(&sc.truth[0], &spec.stations[0], sc.cfg(), &spec.filter).expect("initial cloud");
    (sc, obs, cloud)
}
