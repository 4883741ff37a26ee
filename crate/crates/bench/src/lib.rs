//! Fixtures shared by the benchmarks.

use ddpg_core::problems::{build_market, seeded_instance, MarketParams, SyntheticSpec};
use ddpg_core::ProblemInstance;

pub fn market() -> ProblemInstance {
    build_market(&MarketParams::table_one(), None).expect("market instance")
}

/// Random connected instance with `agents` agents and 2-dimensional blocks.
pub fn synthetic(agents: usize) -> ProblemInstance {
    let spec = SyntheticSpec {
        agents,
        m: 2,
        b: 2,
        extra_edge_prob: 4.0 / agents as f64,
    };
    seeded_instance(agents as u64, &spec).expect("synthetic instance")
}
