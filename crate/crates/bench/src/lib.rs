//! Shared fixtures for the benchmarks.

use micclust_core::data::{simulate_with_truth, SimSpec};
use micclust_core::{DrugGrid, DrugSample};

/// Three well-separated components on a -6..4 grid.
pub fn three_component(n: usize, seed: u64) -> DrugSample {
    let grid = DrugGrid::new("RIF", (-6..=4).map(f64::from).collect(), None).expect("valid grid");
    let spec = SimSpec::new(grid, n, vec![0.55, 0.3, 0.15], vec![-3.0, 0.0, 3.0], vec![0.5; 3]).expect("valid spec");
    simulate_with_truth(&spec, seed).expect("simulation").dataset.for_drug("RIF").expect("drug present")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_has_requested_size() {
        assert_eq!(three_component(50, 1).len(), 50);
    }
}
