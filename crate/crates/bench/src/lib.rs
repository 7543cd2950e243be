//! Shared fixtures for the criterion benches in `benches/`.

use qoesim_core::mobility::{simulate_population, MobilityParams, Preset, VisitMatrix};
use qoesim_core::satisfaction::compute_satisfaction;
use qoesim_core::topology::{generate_topology, plant_underperforming, Extent, Topology, REFERENCE_SITES};
use qoesim_core::SeedPath;

pub struct Fixture {
    pub topology: Topology,
    pub params: MobilityParams,
    pub visits: VisitMatrix,
    pub underperforming: Vec<usize>,
    pub labels: Vec<bool>,
}

/// Reference layout, S1 mobility and fixed-tolerance labels for `users`.
pub fn fixture(users: usize, seed: u64) -> Fixture {
    let root = SeedPath::master(seed);
    let topology = generate_topology(REFERENCE_SITES, Extent::default(), root.child(0).value()).expect("layout");
    let params = MobilityParams::preset(Preset::S1, &topology);
    let visits = simulate_population(&topology, &params, users, root.child(1).value()).expect("walks");
    let omega = REFERENCE_SITES / 10;
    let underperforming = plant_underperforming(&topology, omega, None, root.child(2).value())
        .expect("planting")
        .underperforming()
        .to_vec();
    let tolerances = vec![0.25; users];
    let labels = compute_satisfaction(&visits, &underperforming, &tolerances)
        .expect("labels")
        .labels;
    Fixture {
        topology,
        params,
        visits,
        underperforming,
        labels,
    }
}
