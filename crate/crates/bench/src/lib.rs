//! Fixtures shared by the benchmarks.

use fsg_core::FactorComponent;

/// A `rows x cols` knob-burner style component: one variable per pair,
/// one cardinality factor per row and per column.
pub fn bipartite(rows: usize, cols: usize, b: f64) -> FactorComponent {
    let n = rows * cols;
    let mut scopes: Vec<Vec<usize>> = (0..rows)
        .map(|r| (0..cols).map(|c| r * cols + c).collect())
        .collect();
    scopes.extend((0..cols).map(|c| (0..rows).map(|r| r * cols + c).collect()));
    let priors: Vec<f64> = (0..n)
        .map(|i| 0.2 + 0.6 * ((i * 7) % n) as f64 / n as f64)
        .collect();
    FactorComponent::from_tables(0, &priors, &scopes, b).expect("valid fixture")
}
