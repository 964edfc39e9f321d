//! Shared scenario builders for the criterion benchmarks in `benches/`.

use cellsim_core::netsim::{FlowSpec, Scenario};
use cellsim_core::trace::{LinkTrace, RandomWalk};

/// A one-flow scenario on a seeded random-walk trace, sized so a single run
/// finishes in tens of milliseconds.
pub fn short_scenario(cca: &str, seed: u64) -> Scenario {
    let walk = RandomWalk {
        min_mbps: 5.0,
        max_mbps: 50.0,
        step_mbps: 3.0,
        duration_ms: 2_000,
        interval_ms: 100,
    };
    let mut sc = Scenario::base(LinkTrace::random_walk(&walk, seed), 2_000_000);
    sc.seed = seed;
    sc.flows.push(FlowSpec::tcp(cca));
    sc
}
