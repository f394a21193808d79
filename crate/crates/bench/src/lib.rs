//! Shared setup for the benchmark targets.

use chartopt_core::ingest::{bundled_fixtures_dir, load_fixtures, Fixture};
use chartopt_core::metrics::WaveTable;
use chartopt_core::objective::Evaluator;

pub fn first_fixture() -> Fixture {
    load_fixtures(&bundled_fixtures_dir())
        .expect("bundled fixtures load")
        .remove(0)
}

pub fn evaluator() -> Evaluator {
    Evaluator::new(WaveTable::builtin())
}
